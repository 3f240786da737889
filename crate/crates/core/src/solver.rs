//! Per-time-step solves: the dual-primal interface solver and a dense
//! monolithic reference solve of the same saddle system.
//!
//! For a fixed step size the operator `W = M + dt K` is factorized once
//! per subdomain (dense Cholesky of the remainder block), together with
//! the coarse Schur complement over the primal DOFs. Each step then
//! solves the dual interface problem by preconditioned conjugate
//! gradients with a Dirichlet preconditioner, or, in reference mode,
//! one dense LU of the full coupled saddle system.

use crate::assembly::{assemble_load, assemble_stiffness, assemble_vector_mass, dirichlet_values};
use crate::error::{Error, Result};
use crate::gauge::{build_spanning_tree, partition_dofs, DofRole, Partition, SpanningTree, TreeOrdering};
use crate::manufactured::{exact_a, source_j, CaseConfig};
use crate::sparse::CsrMatrix;
use crate::spline::CurlSpace;
use crate::topology::{build_patch_grid, build_spaces, build_topology, PatchGrid, Region, Topology};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Per-patch index sets induced by the DOF roles.
#[derive(Debug, Clone)]
pub struct LocalSets {
    /// Local remainder DOFs, ascending.
    pub r: Vec<usize>,
    /// Local primal DOFs, ascending.
    pub p: Vec<usize>,
    /// Local eliminated DOFs (data and gauge), ascending.
    pub elim: Vec<usize>,
    /// Local DOF -> position in `r`, `usize::MAX` otherwise.
    pub pos_in_r: Vec<usize>,
    /// Position in `p` -> coarse index.
    pub coarse_of_p: Vec<usize>,
    /// Positions in `r` whose global edge lies on an interface.
    pub b_positions: Vec<usize>,
}

/// Everything about the discretized problem that does not depend on the
/// time step size.
pub struct Discretization {
    pub cfg: CaseConfig,
    pub grid: PatchGrid,
    pub spaces: Vec<CurlSpace>,
    pub topo: Topology,
    pub tree: SpanningTree,
    pub part: Partition,
    pub locals: Vec<LocalSets>,
    /// Reluctivity-weighted curl-curl matrix per patch.
    pub stiff: Vec<CsrMatrix>,
    /// Conductivity-weighted mass matrix for conductor patches.
    pub mass: Vec<Option<CsrMatrix>>,
}

pub fn build_discretization(
    cfg: &CaseConfig,
    counts: [usize; 3],
    degree: usize,
    divisions: [usize; 3],
    ordering: TreeOrdering,
) -> Result<Discretization> {
    cfg.validate()?;
    let cfg = cfg.clone();
    let grid = build_patch_grid(cfg.domain, counts, |c| cfg.in_conductor(c), divisions)?;
    let spaces = build_spaces(&grid, degree)?;
    let topo = build_topology(&grid, &spaces)?;
    let tree = build_spanning_tree(&topo, ordering)?;
    let part = partition_dofs(&grid, &topo, &tree)?;

    let mut locals = Vec::with_capacity(grid.n_patches());
    for (s, space) in spaces.iter().enumerate() {
        let n = space.total_dofs();
        let mut sets = LocalSets {
            r: Vec::new(),
            p: Vec::new(),
            elim: Vec::new(),
            pos_in_r: vec![usize::MAX; n],
            coarse_of_p: Vec::new(),
            b_positions: Vec::new(),
        };
        for local in 0..n {
            let e = topo.patch_to_global[s][local];
            match part.role[e] {
                DofRole::Remainder => {
                    sets.pos_in_r[local] = sets.r.len();
                    if topo.edges[e].owners.len() >= 2 {
                        sets.b_positions.push(sets.r.len());
                    }
                    sets.r.push(local);
                }
                DofRole::Primal(c) => {
                    sets.p.push(local);
                    sets.coarse_of_p.push(c);
                }
                DofRole::EliminatedData | DofRole::EliminatedGauge => sets.elim.push(local),
            }
        }
        locals.push(sets);
    }

    let stiff: Vec<CsrMatrix> = spaces
        .iter()
        .map(|sp| assemble_stiffness(sp, cfg.nu))
        .collect::<Result<_>>()?;
    let mass: Vec<Option<CsrMatrix>> = grid
        .patches
        .iter()
        .zip(&spaces)
        .map(|(patch, sp)| match patch.region {
            Region::Conductor => assemble_vector_mass(sp, cfg.sigma).map(Some),
            Region::Insulator => Ok(None),
        })
        .collect::<Result<_>>()?;

    Ok(Discretization { cfg, grid, spaces, topo, tree, part, locals, stiff, mass })
}

/// Solver knobs for the interface iteration.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-6, max_iter: 500 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub n_primal: usize,
    pub n_lambda: usize,
}

struct Subdomain {
    /// Full local `W = M + dt K`.
    w: CsrMatrix,
    w_rr: Option<Cholesky<f64, Dyn>>,
    w_rp: DMatrix<f64>,
    /// Dense interface Schur complement `W_bb - W_bi W_ii^-1 W_ib`.
    s_bb: DMatrix<f64>,
}

/// Factorized per-step operator for one fixed `dt`.
pub struct Stepper {
    pub dt: f64,
    subs: Vec<Subdomain>,
    coarse: Option<Cholesky<f64, Dyn>>,
    /// One row per dual constraint: `(s0, pos0, sk, posk)` with signs
    /// +1 / -1.
    rows: Vec<(usize, usize, usize, usize)>,
    n_primal: usize,
}

impl Stepper {
    pub fn new(disc: &Discretization, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("step size must be positive, got {dt}")));
        }
        let n_primal = disc.part.n_primal();
        let mut subs = Vec::with_capacity(disc.grid.n_patches());
        let mut s_pp = DMatrix::zeros(n_primal, n_primal);
        for (s, space) in disc.spaces.iter().enumerate() {
            let sets = &disc.locals[s];
            let w = match &disc.mass[s] {
                Some(m) => m.add_scaled(&disc.stiff[s], dt),
                None => {
                    let mut k = disc.stiff[s].clone();
                    k.scale(dt);
                    k
                }
            };
            let _ = space;
            let w_rr_dense = w.submatrix(&sets.r, &sets.r);
            let w_rp = w.submatrix(&sets.r, &sets.p);
            let w_pp = w.submatrix(&sets.p, &sets.p);

            // Dirichlet preconditioner block: Schur complement of the
            // interior part of r onto the interface part b.
            let i_positions: Vec<usize> = {
                let mut b_mask = vec![false; sets.r.len()];
                for &b in &sets.b_positions {
                    b_mask[b] = true;
                }
                (0..sets.r.len()).filter(|&i| !b_mask[i]).collect()
            };
            let nb = sets.b_positions.len();
            let s_bb = if nb > 0 {
                let sel = |rows: &[usize], cols: &[usize]| {
                    let mut m = DMatrix::zeros(rows.len(), cols.len());
                    for (i, &ri) in rows.iter().enumerate() {
                        for (j, &cj) in cols.iter().enumerate() {
                            m[(i, j)] = w_rr_dense[(ri, cj)];
                        }
                    }
                    m
                };
                let w_bb = sel(&sets.b_positions, &sets.b_positions);
                if i_positions.is_empty() {
                    w_bb
                } else {
                    let w_bi = sel(&sets.b_positions, &i_positions);
                    let w_ib = sel(&i_positions, &sets.b_positions);
                    let w_ii = sel(&i_positions, &i_positions);
                    let chol_ii = Cholesky::new(w_ii).ok_or_else(|| {
                        Error::Construction(format!("interior block of patch {s} not positive definite"))
                    })?;
                    &w_bb - &w_bi * chol_ii.solve(&w_ib)
                }
            } else {
                DMatrix::zeros(0, 0)
            };

            let w_rr = if sets.r.is_empty() {
                None
            } else {
                Some(Cholesky::new(w_rr_dense).ok_or_else(|| {
                    Error::Construction(format!(
                        "remainder block of patch {s} not positive definite; gauge incomplete"
                    ))
                })?)
            };

            // coarse contribution S_pp += N' (W_pp - W_pr W_rr^-1 W_rp) N
            if !sets.p.is_empty() {
                let local = match &w_rr {
                    Some(chol) => &w_pp - w_rp.transpose() * chol.solve(&w_rp),
                    None => w_pp.clone(),
                };
                for (i, &ci) in sets.coarse_of_p.iter().enumerate() {
                    for (j, &cj) in sets.coarse_of_p.iter().enumerate() {
                        s_pp[(ci, cj)] += local[(i, j)];
                    }
                }
            }

            subs.push(Subdomain { w, w_rr, w_rp, s_bb });
        }

        let coarse = if n_primal > 0 {
            Some(Cholesky::new(s_pp).ok_or_else(|| {
                Error::Construction("coarse primal Schur complement not positive definite".into())
            })?)
        } else {
            None
        };

        let mut rows = Vec::with_capacity(disc.part.n_lambda());
        for &(e, k) in &disc.part.couplings {
            let (s0, l0) = disc.topo.edges[e].owners[0];
            let (sk, lk) = disc.topo.edges[e].owners[k];
            let pos0 = disc.locals[s0].pos_in_r[l0];
            let posk = disc.locals[sk].pos_in_r[lk];
            if pos0 == usize::MAX || posk == usize::MAX {
                return Err(Error::Internal("coupled DOF missing from remainder set".into()));
            }
            rows.push((s0, pos0, sk, posk));
        }

        Ok(Stepper { dt, subs, coarse, rows, n_primal })
    }

    /// Block solve with `W` restricted to remainder+primal: returns the
    /// remainder solution per patch and the coarse primal solution.
    fn wtilde_solve(
        &self,
        disc: &Discretization,
        g_r: &[DVector<f64>],
        g_pc: &DVector<f64>,
    ) -> (Vec<DVector<f64>>, DVector<f64>) {
        let x0: Vec<DVector<f64>> = self
            .subs
            .iter()
            .zip(g_r)
            .map(|(sub, g)| match &sub.w_rr {
                Some(chol) => chol.solve(g),
                None => DVector::zeros(0),
            })
            .collect();
        let mut a_p = DVector::zeros(self.n_primal);
        if let Some(coarse) = &self.coarse {
            let mut ghat = g_pc.clone();
            for (s, sub) in self.subs.iter().enumerate() {
                if disc.locals[s].p.is_empty() {
                    continue;
                }
                let t = sub.w_rp.tr_mul(&x0[s]);
                for (i, &ci) in disc.locals[s].coarse_of_p.iter().enumerate() {
                    ghat[ci] -= t[i];
                }
            }
            a_p = coarse.solve(&ghat);
        }
        let a_r: Vec<DVector<f64>> = self
            .subs
            .iter()
            .enumerate()
            .map(|(s, sub)| {
                let sets = &disc.locals[s];
                if sets.r.is_empty() {
                    return DVector::zeros(0);
                }
                if sets.p.is_empty() || self.coarse.is_none() {
                    return x0[s].clone();
                }
                let mut ap_local = DVector::zeros(sets.p.len());
                for (i, &ci) in sets.coarse_of_p.iter().enumerate() {
                    ap_local[i] = a_p[ci];
                }
                let corr = sub.w_rr.as_ref().unwrap().solve(&(&sub.w_rp * &ap_local));
                &x0[s] - corr
            })
            .collect();
        (a_r, a_p)
    }

    /// Jump operator `B` over the concatenated remainder vectors.
    fn b_apply(&self, a_r: &[DVector<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .map(|&(s0, p0, sk, pk)| a_r[s0][p0] - a_r[sk][pk]),
        )
    }

    fn b_transpose(&self, disc: &Discretization, m: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut out: Vec<DVector<f64>> = disc
            .locals
            .iter()
            .map(|sets| DVector::zeros(sets.r.len()))
            .collect();
        for (t, &(s0, p0, sk, pk)) in self.rows.iter().enumerate() {
            out[s0][p0] += m[t];
            out[sk][pk] -= m[t];
        }
        out
    }

    /// Dual interface operator `F = B Wtilde^-1 B'`.
    fn f_apply(&self, disc: &Discretization, m: &DVector<f64>) -> DVector<f64> {
        let g_r = self.b_transpose(disc, m);
        let zero_p = DVector::zeros(self.n_primal);
        let (a_r, _) = self.wtilde_solve(disc, &g_r, &zero_p);
        self.b_apply(&a_r)
    }

    /// Dirichlet preconditioner `B S B'` over the interface remainder.
    fn precondition(&self, disc: &Discretization, r: &DVector<f64>) -> DVector<f64> {
        let rt = self.b_transpose(disc, r);
        let mut sr: Vec<DVector<f64>> = Vec::with_capacity(self.subs.len());
        for (s, sub) in self.subs.iter().enumerate() {
            let nb = disc.locals[s].b_positions.len();
            let mut rb = DVector::zeros(nb);
            for (bi, &pos) in disc.locals[s].b_positions.iter().enumerate() {
                rb[bi] = rt[s][pos];
            }
            let yb = &sub.s_bb * rb;
            let mut y = DVector::zeros(disc.locals[s].r.len());
            for (bi, &pos) in disc.locals[s].b_positions.iter().enumerate() {
                y[pos] = yb[bi];
            }
            sr.push(y);
        }
        self.b_apply(&sr)
    }

    fn pcg(
        &self,
        disc: &Discretization,
        d: &DVector<f64>,
        opts: SolveOptions,
    ) -> Result<(DVector<f64>, usize)> {
        let n = d.len();
        let mut m = DVector::zeros(n);
        let mut r = d.clone();
        let mut z = self.precondition(disc, &r);
        let mut rz = r.dot(&z);
        let rz0 = rz;
        if rz0 <= 0.0 {
            return Ok((m, 0));
        }
        let mut p = z.clone();
        for it in 1..=opts.max_iter {
            let fp = self.f_apply(disc, &p);
            let pap = p.dot(&fp);
            if pap <= 0.0 {
                return Err(Error::Convergence { iterations: it, residual: (rz / rz0).sqrt() });
            }
            let alpha = rz / pap;
            m.axpy(alpha, &p, 1.0);
            r.axpy(-alpha, &fp, 1.0);
            z = self.precondition(disc, &r);
            let rz_new = r.dot(&z);
            if (rz_new / rz0).sqrt() <= opts.tol {
                return Ok((m, it));
            }
            let beta = rz_new / rz;
            rz = rz_new;
            p = z + beta * p;
        }
        Err(Error::Convergence {
            iterations: opts.max_iter,
            residual: (rz / rz0).sqrt(),
        })
    }
}

/// Per-step right-hand sides: eliminated values and restricted loads.
struct StepData {
    /// Full-length eliminated coefficient vector per patch (boundary
    /// data, zeros on gauge DOFs and everywhere else).
    a_elim: Vec<Vec<f64>>,
    g_r: Vec<DVector<f64>>,
    g_pc: DVector<f64>,
    g_p_local: Vec<DVector<f64>>,
}

fn step_data(
    disc: &Discretization,
    subs: &[Subdomain],
    dt: f64,
    a_prev: &[Vec<f64>],
    t_next: f64,
) -> Result<StepData> {
    let cfg = &disc.cfg;
    let a_elim = dirichlet_values(&disc.grid, &disc.spaces, &disc.topo, &|x| exact_a(x, t_next))?;
    let n_primal = disc.part.n_primal();
    let mut g_r = Vec::with_capacity(disc.spaces.len());
    let mut g_p_local = Vec::with_capacity(disc.spaces.len());
    let mut g_pc = DVector::zeros(n_primal);
    for (s, space) in disc.spaces.iter().enumerate() {
        let region = disc.grid.patches[s].region;
        let j = assemble_load(space, &|x| source_j(cfg, x, t_next, region))?;
        let mut g: Vec<f64> = j.iter().map(|&v| dt * v).collect();
        if let Some(m) = &disc.mass[s] {
            for (l, v) in m.matvec(&a_prev[s]).into_iter().enumerate() {
                g[l] += v;
            }
        }
        for (l, v) in subs[s].w.matvec(&a_elim[s]).into_iter().enumerate() {
            g[l] -= v;
        }
        let sets = &disc.locals[s];
        g_r.push(DVector::from_iterator(sets.r.len(), sets.r.iter().map(|&l| g[l])));
        let gp = DVector::from_iterator(sets.p.len(), sets.p.iter().map(|&l| g[l]));
        for (i, &ci) in sets.coarse_of_p.iter().enumerate() {
            g_pc[ci] += gp[i];
        }
        g_p_local.push(gp);
    }
    Ok(StepData { a_elim, g_r, g_pc, g_p_local })
}

fn compose(
    disc: &Discretization,
    data: &StepData,
    a_r: &[DVector<f64>],
    a_p: &DVector<f64>,
) -> Vec<Vec<f64>> {
    disc.spaces
        .iter()
        .enumerate()
        .map(|(s, _)| {
            let sets = &disc.locals[s];
            let mut full = data.a_elim[s].clone();
            for (pos, &l) in sets.r.iter().enumerate() {
                full[l] = a_r[s][pos];
            }
            for (i, &l) in sets.p.iter().enumerate() {
                full[l] = a_p[sets.coarse_of_p[i]];
            }
            full
        })
        .collect()
}

impl Stepper {
    /// One implicit Euler step by the dual-primal interface iteration.
    pub fn solve_step(
        &self,
        disc: &Discretization,
        a_prev: &[Vec<f64>],
        t_next: f64,
        opts: SolveOptions,
    ) -> Result<(Vec<Vec<f64>>, SolveStats)> {
        let data = step_data(disc, &self.subs, self.dt, a_prev, t_next)?;
        let n_lambda = self.rows.len();
        let (a_r, a_p, iterations) = if n_lambda == 0 {
            let (a_r, a_p) = self.wtilde_solve(disc, &data.g_r, &data.g_pc);
            (a_r, a_p, 0)
        } else {
            let (y_r, _) = self.wtilde_solve(disc, &data.g_r, &data.g_pc);
            let d = self.b_apply(&y_r);
            let (m, iterations) = self.pcg(disc, &d, opts)?;
            let bt = self.b_transpose(disc, &m);
            let g_mod: Vec<DVector<f64>> = data
                .g_r
                .iter()
                .zip(&bt)
                .map(|(g, b)| g - b)
                .collect();
            let (a_r, a_p) = self.wtilde_solve(disc, &g_mod, &data.g_pc);
            (a_r, a_p, iterations)
        };
        let full = compose(disc, &data, &a_r, &a_p);
        Ok((
            full,
            SolveStats { iterations, n_primal: self.n_primal, n_lambda },
        ))
    }

    /// Dense reference solve of the same step: all interface continuity
    /// constraints (including the primal ones) enforced by multipliers.
    pub fn solve_step_monolithic(
        &self,
        disc: &Discretization,
        a_prev: &[Vec<f64>],
        t_next: f64,
    ) -> Result<(Vec<Vec<f64>>, SolveStats)> {
        let data = step_data(disc, &self.subs, self.dt, a_prev, t_next)?;

        // kept unknowns: per patch r then p, concatenated
        let mut offset = vec![0usize; disc.spaces.len() + 1];
        for s in 0..disc.spaces.len() {
            offset[s + 1] = offset[s] + disc.locals[s].r.len() + disc.locals[s].p.len();
        }
        let n_kept = offset[disc.spaces.len()];
        // kept-local index of (patch, local dof)
        let kept_index = |s: usize, l: usize| -> Option<usize> {
            let sets = &disc.locals[s];
            let pos = sets.pos_in_r[l];
            if pos != usize::MAX {
                return Some(offset[s] + pos);
            }
            sets.p.iter().position(|&x| x == l).map(|i| offset[s] + sets.r.len() + i)
        };

        let mut constraints: Vec<(usize, usize)> = Vec::new();
        for (e, edge) in disc.topo.edges.iter().enumerate() {
            if matches!(disc.part.role[e], DofRole::Remainder | DofRole::Primal(_))
                && edge.owners.len() >= 2
            {
                for k in 1..edge.owners.len() {
                    constraints.push((e, k));
                }
            }
        }
        let n_con = constraints.len();
        let n = n_kept + n_con;
        let mut a = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for (s, sub) in self.subs.iter().enumerate() {
            let sets = &disc.locals[s];
            let kept: Vec<usize> = sets.r.iter().chain(sets.p.iter()).copied().collect();
            let block = sub.w.submatrix(&kept, &kept);
            for i in 0..kept.len() {
                for j in 0..kept.len() {
                    a[(offset[s] + i, offset[s] + j)] = block[(i, j)];
                }
            }
            for (pos, _) in sets.r.iter().enumerate() {
                rhs[offset[s] + pos] = data.g_r[s][pos];
            }
            for i in 0..sets.p.len() {
                rhs[offset[s] + sets.r.len() + i] = data.g_p_local[s][i];
            }
        }
        for (t, &(e, k)) in constraints.iter().enumerate() {
            let (s0, l0) = disc.topo.edges[e].owners[0];
            let (sk, lk) = disc.topo.edges[e].owners[k];
            let i0 = kept_index(s0, l0)
                .ok_or_else(|| Error::Internal("constrained DOF not kept".into()))?;
            let ik = kept_index(sk, lk)
                .ok_or_else(|| Error::Internal("constrained DOF not kept".into()))?;
            let row = n_kept + t;
            a[(row, i0)] = 1.0;
            a[(row, ik)] = -1.0;
            a[(i0, row)] = 1.0;
            a[(ik, row)] = -1.0;
        }
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("monolithic saddle system".into()))?;

        // scatter back; primal DOF values are identical across owners by
        // the constraints, report the first owner's value per coarse id
        let mut a_r: Vec<DVector<f64>> = Vec::with_capacity(disc.spaces.len());
        let mut a_p = DVector::zeros(disc.part.n_primal());
        for s in 0..disc.spaces.len() {
            let sets = &disc.locals[s];
            a_r.push(DVector::from_iterator(
                sets.r.len(),
                (0..sets.r.len()).map(|pos| sol[offset[s] + pos]),
            ));
            for i in 0..sets.p.len() {
                a_p[sets.coarse_of_p[i]] = sol[offset[s] + sets.r.len() + i];
            }
        }
        let full = compose(disc, &data, &a_r, &a_p);
        Ok((
            full,
            SolveStats { iterations: 0, n_primal: self.n_primal, n_lambda: n_con },
        ))
    }
}
