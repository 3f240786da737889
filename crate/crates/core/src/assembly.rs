//! Per-patch Galerkin assembly and error integrals.
//!
//! Geometry mappings are the identity on axis-aligned boxes, so all
//! element integrals factor into 1D basis tables evaluated once per
//! space. The default rule uses `p+1` Gauss points per direction per
//! element.

use crate::error::{Error, Result};
use crate::sparse::{cg_solve, CooMatrix, CsrMatrix};
use crate::spline::{gauss_rule, CurlSpace};
use crate::topology::{PatchGrid, Region, Topology};
use nalgebra::DMatrix;

/// Time-independent vector field sample, typically a closure over `t`.
pub type VectorField<'a> = &'a (dyn Fn([f64; 3]) -> [f64; 3] + Sync);

/// 1D basis tables at the quadrature points of every element, for one
/// factor (values and first derivatives of the active functions).
struct FactorTable {
    /// [element][qp][active], active function j has index `element + j`.
    vals: Vec<Vec<Vec<f64>>>,
    ders: Vec<Vec<Vec<f64>>>,
}

/// Quadrature tables for one patch space.
pub struct PatchTables {
    q: usize,
    /// physical quadrature points per direction: [dir][element][qp]
    points: [Vec<Vec<f64>>; 3],
    /// physical quadrature weights per direction
    weights: [Vec<Vec<f64>>; 3],
    scalar: [FactorTable; 3],
    deriv: [FactorTable; 3],
}

impl PatchTables {
    pub fn new(space: &CurlSpace, q: usize) -> Result<Self> {
        let rule = crate::spline::gauss_rule(q)?;
        let mut points: [Vec<Vec<f64>>; 3] = Default::default();
        let mut weights: [Vec<Vec<f64>>; 3] = Default::default();
        let mut scalar_tables = Vec::with_capacity(3);
        let mut deriv_tables = Vec::with_capacity(3);
        for d in 0..3 {
            let kv = space.scalar_factor(d).kv();
            let breaks = kv.breaks().to_vec();
            let n_el = breaks.len() - 1;
            let mut pts = Vec::with_capacity(n_el);
            let mut wts = Vec::with_capacity(n_el);
            for e in 0..n_el {
                let (a, b) = (breaks[e], breaks[e + 1]);
                let jac = 0.5 * (b - a);
                pts.push(rule.points.iter().map(|&t| a + (t + 1.0) * jac).collect());
                wts.push(rule.weights.iter().map(|&w| w * jac).collect::<Vec<f64>>());
            }
            let tab_for = |basis: &crate::spline::Basis1D, nact: usize| -> Result<FactorTable> {
                let mut vals = Vec::with_capacity(n_el);
                let mut ders = Vec::with_capacity(n_el);
                let pts: &Vec<Vec<f64>> = &pts;
                for e in 0..n_el {
                    let mut ev = Vec::with_capacity(q);
                    let mut ed = Vec::with_capacity(q);
                    for &x in &pts[e] {
                        let (first, table) = basis.eval(x, 1)?;
                        debug_assert_eq!(first, e);
                        debug_assert_eq!(table[0].len(), nact);
                        ev.push(table[0].clone());
                        ed.push(table[1].clone());
                    }
                    vals.push(ev);
                    ders.push(ed);
                }
                Ok(FactorTable { vals, ders })
            };
            let p = space.degree();
            scalar_tables.push(tab_for(space.scalar_factor(d), p + 1)?);
            deriv_tables.push(tab_for(space.deriv_factor(d), p)?);
            points[d] = pts;
            weights[d] = wts;
        }
        let mut sit = scalar_tables.into_iter();
        let mut dit = deriv_tables.into_iter();
        Ok(PatchTables {
            q,
            points,
            weights,
            scalar: [sit.next().unwrap(), sit.next().unwrap(), sit.next().unwrap()],
            deriv: [dit.next().unwrap(), dit.next().unwrap(), dit.next().unwrap()],
        })
    }

    fn factor(&self, space: &CurlSpace, c: usize, d: usize) -> &FactorTable {
        let _ = space;
        if c == d {
            &self.deriv[d]
        } else {
            &self.scalar[d]
        }
    }
}

/// Per-element evaluation data shared by all assembly kernels.
pub struct ElemData {
    pub dofs: Vec<usize>,
    pub comps: Vec<usize>,
    /// [qp][dof]
    pub vals: Vec<Vec<f64>>,
    /// [qp][dof]
    pub curls: Vec<Vec<[f64; 3]>>,
    pub weights: Vec<f64>,
    pub points: Vec<[f64; 3]>,
}

pub fn element_data(
    space: &CurlSpace,
    tables: &PatchTables,
    elem: [usize; 3],
    with_curl: bool,
) -> ElemData {
    let p = space.degree();
    let q = tables.q;
    let nq = q * q * q;

    // quadrature grid
    let mut weights = Vec::with_capacity(nq);
    let mut points = Vec::with_capacity(nq);
    for gz in 0..q {
        for gy in 0..q {
            for gx in 0..q {
                weights.push(
                    tables.weights[0][elem[0]][gx]
                        * tables.weights[1][elem[1]][gy]
                        * tables.weights[2][elem[2]][gz],
                );
                points.push([
                    tables.points[0][elem[0]][gx],
                    tables.points[1][elem[1]][gy],
                    tables.points[2][elem[2]][gz],
                ]);
            }
        }
    }

    let mut dofs = Vec::new();
    let mut comps = Vec::new();
    let mut vals = vec![Vec::new(); nq];
    let mut curls = vec![Vec::new(); nq];
    for c in 0..3 {
        let nact = |d: usize| if c == d { p } else { p + 1 };
        let f0 = tables.factor(space, c, 0);
        let f1 = tables.factor(space, c, 1);
        let f2 = tables.factor(space, c, 2);
        for a2 in 0..nact(2) {
            for a1 in 0..nact(1) {
                for a0 in 0..nact(0) {
                    let idx = [elem[0] + a0, elem[1] + a1, elem[2] + a2];
                    dofs.push(space.index(c, idx));
                    comps.push(c);
                    let mut qp = 0;
                    for gz in 0..q {
                        for gy in 0..q {
                            for gx in 0..q {
                                let v0 = f0.vals[elem[0]][gx][a0];
                                let v1 = f1.vals[elem[1]][gy][a1];
                                let v2 = f2.vals[elem[2]][gz][a2];
                                vals[qp].push(v0 * v1 * v2);
                                if with_curl {
                                    let d0 = f0.ders[elem[0]][gx][a0];
                                    let d1 = f1.ders[elem[1]][gy][a1];
                                    let d2 = f2.ders[elem[2]][gz][a2];
                                    // curl of a single-component tensor field
                                    let curl = match c {
                                        0 => [0.0, v0 * v1 * d2, -v0 * d1 * v2],
                                        1 => [-v0 * v1 * d2, 0.0, d0 * v1 * v2],
                                        _ => [v0 * d1 * v2, -d0 * v1 * v2, 0.0],
                                    };
                                    curls[qp].push(curl);
                                }
                                qp += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    ElemData { dofs, comps, vals, curls, weights, points }
}

pub fn elements(space: &CurlSpace) -> Vec<[usize; 3]> {
    let d = space.divisions();
    let mut out = Vec::with_capacity(d[0] * d[1] * d[2]);
    for ez in 0..d[2] {
        for ey in 0..d[1] {
            for ex in 0..d[0] {
                out.push([ex, ey, ez]);
            }
        }
    }
    out
}

/// Curl-curl stiffness `K` with constant reluctivity.
pub fn assemble_stiffness(space: &CurlSpace, nu: f64) -> Result<CsrMatrix> {
    if nu <= 0.0 {
        return Err(Error::InvalidInput("reluctivity must be positive".into()));
    }
    let tables = PatchTables::new(space, space.degree() + 1)?;
    let n = space.total_dofs();
    let locals = crate::par::par_map(&elements(space), |&elem| {
        let data = element_data(space, &tables, elem, true);
        let nd = data.dofs.len();
        let mut local = vec![0.0; nd * nd];
        for (qp, &w) in data.weights.iter().enumerate() {
            let wn = w * nu;
            let curls = &data.curls[qp];
            for i in 0..nd {
                let ci = curls[i];
                for j in i..nd {
                    let cj = curls[j];
                    let v = wn * (ci[0] * cj[0] + ci[1] * cj[1] + ci[2] * cj[2]);
                    local[i * nd + j] += v;
                }
            }
        }
        (data.dofs, local)
    });
    let mut coo = CooMatrix::new(n, n);
    for (dofs, local) in locals {
        let nd = dofs.len();
        for i in 0..nd {
            for j in i..nd {
                let v = local[i * nd + j];
                if v != 0.0 {
                    coo.push(dofs[i], dofs[j], v);
                    if j != i {
                        coo.push(dofs[j], dofs[i], v);
                    }
                }
            }
        }
    }
    Ok(coo.to_csr())
}

/// Vector mass matrix with constant weight.
pub fn assemble_vector_mass(space: &CurlSpace, weight: f64) -> Result<CsrMatrix> {
    if weight <= 0.0 {
        return Err(Error::InvalidInput("mass weight must be positive".into()));
    }
    let tables = PatchTables::new(space, space.degree() + 1)?;
    let n = space.total_dofs();
    let locals = crate::par::par_map(&elements(space), |&elem| {
        let data = element_data(space, &tables, elem, false);
        let nd = data.dofs.len();
        let mut local = vec![0.0; nd * nd];
        for (qp, &w) in data.weights.iter().enumerate() {
            let ws = w * weight;
            let vals = &data.vals[qp];
            for i in 0..nd {
                if vals[i] == 0.0 {
                    continue;
                }
                for j in i..nd {
                    if data.comps[i] == data.comps[j] {
                        local[i * nd + j] += ws * vals[i] * vals[j];
                    }
                }
            }
        }
        (data.dofs, local)
    });
    let mut coo = CooMatrix::new(n, n);
    for (dofs, local) in locals {
        let nd = dofs.len();
        for i in 0..nd {
            for j in i..nd {
                let v = local[i * nd + j];
                if v != 0.0 {
                    coo.push(dofs[i], dofs[j], v);
                    if j != i {
                        coo.push(dofs[j], dofs[i], v);
                    }
                }
            }
        }
    }
    Ok(coo.to_csr())
}

/// Conductor mass `sigma <w, w>`; rejects insulator subdomains.
pub fn assemble_mass(
    grid: &PatchGrid,
    patch: usize,
    space: &CurlSpace,
    sigma: f64,
) -> Result<CsrMatrix> {
    if grid.patches[patch].region != Region::Conductor {
        return Err(Error::InvalidInput(format!(
            "mass assembly requested on insulator patch {patch}"
        )));
    }
    assemble_vector_mass(space, sigma)
}

/// Load vector `<J, w>` with a custom quadrature order.
pub fn assemble_load_with_quadrature(
    space: &CurlSpace,
    field: VectorField,
    q: usize,
) -> Result<Vec<f64>> {
    let tables = PatchTables::new(space, q)?;
    let locals = crate::par::par_map(&elements(space), |&elem| {
        let data = element_data(space, &tables, elem, false);
        let mut local = vec![0.0; data.dofs.len()];
        for (qp, &w) in data.weights.iter().enumerate() {
            let j = field(data.points[qp]);
            for (i, &v) in data.vals[qp].iter().enumerate() {
                local[i] += w * j[data.comps[i]] * v;
            }
        }
        (data.dofs, local)
    });
    let mut out = vec![0.0; space.total_dofs()];
    for (dofs, local) in locals {
        for (i, &d) in dofs.iter().enumerate() {
            out[d] += local[i];
        }
    }
    Ok(out)
}

pub fn assemble_load(space: &CurlSpace, field: VectorField) -> Result<Vec<f64>> {
    assemble_load_with_quadrature(space, field, space.degree() + 1)
}

/// Squared L2 distance between the represented field and `exact` on one
/// patch.
pub fn l2_error_sq(space: &CurlSpace, coeffs: &[f64], exact: VectorField) -> Result<f64> {
    field_error_sq(space, coeffs, exact, false)
}

/// Squared L2 distance between the curl of the represented field and
/// `exact` on one patch.
pub fn l2_error_curl_sq(space: &CurlSpace, coeffs: &[f64], exact: VectorField) -> Result<f64> {
    field_error_sq(space, coeffs, exact, true)
}

fn field_error_sq(
    space: &CurlSpace,
    coeffs: &[f64],
    exact: VectorField,
    curl: bool,
) -> Result<f64> {
    if coeffs.len() != space.total_dofs() {
        return Err(Error::InvalidInput(format!(
            "coefficient vector length {} does not match space dimension {}",
            coeffs.len(),
            space.total_dofs()
        )));
    }
    let tables = PatchTables::new(space, space.degree() + 1)?;
    let partials = crate::par::par_map(&elements(space), |&elem| {
        let data = element_data(space, &tables, elem, curl);
        let mut acc = 0.0;
        for (qp, &w) in data.weights.iter().enumerate() {
            let mut v = [0.0f64; 3];
            if curl {
                for (i, &d) in data.dofs.iter().enumerate() {
                    let c = data.curls[qp][i];
                    v[0] += coeffs[d] * c[0];
                    v[1] += coeffs[d] * c[1];
                    v[2] += coeffs[d] * c[2];
                }
            } else {
                for (i, &d) in data.dofs.iter().enumerate() {
                    v[data.comps[i]] += coeffs[d] * data.vals[qp][i];
                }
            }
            let ex = exact(data.points[qp]);
            let dx = v[0] - ex[0];
            let dy = v[1] - ex[1];
            let dz = v[2] - ex[2];
            acc += w * (dx * dx + dy * dy + dz * dz);
        }
        acc
    });
    Ok(partials.iter().sum())
}

pub fn l2_error(space: &CurlSpace, coeffs: &[f64], exact: VectorField) -> Result<f64> {
    Ok(l2_error_sq(space, coeffs, exact)?.sqrt())
}

pub fn l2_error_curl(space: &CurlSpace, coeffs: &[f64], exact: VectorField) -> Result<f64> {
    Ok(l2_error_curl_sq(space, coeffs, exact)?.sqrt())
}

/// Tangential trace interpolation on one patch face. Returns
/// `(local dof, coefficient)` pairs for all DOFs tangential to the face.
///
/// Along the component's own direction the coefficients come from
/// histopolation (matching integrals of the data between consecutive
/// Greville points of the degree-`p` parent space); point collocation
/// there leaves a non-oscillatory trace error that the mass term locks
/// into an O(h^{p-1/2}) boundary layer. Across, it is plain Greville
/// collocation.
pub fn trace_interpolate_face(
    space: &CurlSpace,
    face_dir: usize,
    upper_side: bool,
    g: VectorField,
) -> Result<Vec<(usize, f64)>> {
    let bbox = *space.bbox();
    let face_coord = if upper_side { bbox.hi[face_dir] } else { bbox.lo[face_dir] };
    let coll = |basis: &crate::spline::Basis1D, nodes: &[f64]| -> Result<DMatrix<f64>> {
        let n = basis.dim();
        let mut m = DMatrix::zeros(n, n);
        for (r, &x) in nodes.iter().enumerate() {
            let (first, table) = basis.eval(x, 0)?;
            for (j, &val) in table[0].iter().enumerate() {
                m[(r, first + j)] = val;
            }
        }
        Ok(m)
    };
    let mut out = Vec::new();
    for c in 0..3 {
        if c == face_dir {
            continue;
        }
        let trans = (0..3).find(|&d| d != face_dir && d != c).unwrap();
        let ft = space.factor(c, trans);
        let nodes_t = ft.nodes();

        // histopolation along c via its antiderivative: interpolate
        // cumulative integrals of the data at the parent Greville points,
        // then difference the parent coefficients (d/dx sum c_j N_j =
        // sum (c_{j+1}-c_j) D_j for the unit-integral basis)
        let parent = space.scalar_factor(c);
        let gamma = parent.nodes();
        let n_edge = space.factor(c, c).dim();
        debug_assert_eq!(gamma.len(), n_edge + 1);
        let breaks = parent.kv().breaks();
        let quad = gauss_rule(parent.degree() + 4)?;
        let mut cumul = DMatrix::zeros(gamma.len(), nodes_t.len());
        for (s, &xt) in nodes_t.iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..n_edge {
                let (a, b) = (gamma[i], gamma[i + 1]);
                let mut cuts = vec![a];
                cuts.extend(breaks.iter().copied().filter(|&k| k > a && k < b));
                cuts.push(b);
                for seg in cuts.windows(2) {
                    let (lo, hi) = (seg[0], seg[1]);
                    let half = 0.5 * (hi - lo);
                    let mid = 0.5 * (hi + lo);
                    for (&q, &w) in quad.points.iter().zip(&quad.weights) {
                        let mut point = [0.0; 3];
                        point[face_dir] = face_coord;
                        point[c] = mid + half * q;
                        point[trans] = xt;
                        acc += half * w * g(point)[c];
                    }
                }
                cumul[(i + 1, s)] = acc;
            }
        }
        let parent_coeff = coll(parent, &gamma)?
            .lu()
            .solve(&cumul)
            .ok_or_else(|| Error::Singular("trace histopolation along edge direction".into()))?;
        let mut edge_coeff = DMatrix::zeros(n_edge, nodes_t.len());
        for j in 0..n_edge {
            for s in 0..nodes_t.len() {
                edge_coeff[(j, s)] = parent_coeff[(j + 1, s)] - parent_coeff[(j, s)];
            }
        }

        // Greville collocation across
        let y = coll(ft, &nodes_t)?
            .lu()
            .solve(&edge_coeff.transpose())
            .ok_or_else(|| Error::Singular("trace collocation across edge direction".into()))?;
        // y[(m, j)] = coefficient at (c-index j, trans-index m)
        let dims = space.comp_dims(c);
        let fixed = if upper_side { dims[face_dir] - 1 } else { 0 };
        for j in 0..n_edge {
            for m in 0..nodes_t.len() {
                let mut idx = [0usize; 3];
                idx[face_dir] = fixed;
                idx[c] = j;
                idx[trans] = m;
                out.push((space.index(c, idx), y[(m, j)]));
            }
        }
    }
    Ok(out)
}

/// Boundary data for all Dirichlet DOFs by per-face trace interpolation.
/// Coincident DOFs across patches receive bitwise identical values.
pub fn dirichlet_values(
    grid: &PatchGrid,
    spaces: &[CurlSpace],
    topo: &Topology,
    g: VectorField,
) -> Result<Vec<Vec<f64>>> {
    let mut global = vec![f64::NAN; topo.n_edges()];
    for (s, space) in spaces.iter().enumerate() {
        let cell = grid.patches[s].cell;
        for face_dir in 0..3 {
            for upper in [false, true] {
                let on_domain_boundary = if upper {
                    cell[face_dir] == grid.counts[face_dir] - 1
                } else {
                    cell[face_dir] == 0
                };
                if !on_domain_boundary {
                    continue;
                }
                for (local, value) in trace_interpolate_face(space, face_dir, upper, g)? {
                    let e = topo.patch_to_global[s][local];
                    if global[e].is_nan() {
                        global[e] = value;
                    }
                }
            }
        }
    }
    let mut per_patch = Vec::with_capacity(spaces.len());
    for (s, space) in spaces.iter().enumerate() {
        let mut vals = vec![0.0; space.total_dofs()];
        for local in 0..space.total_dofs() {
            let e = topo.patch_to_global[s][local];
            if topo.edges[e].class == crate::topology::DofClass::Dirichlet {
                if global[e].is_nan() {
                    return Err(Error::Internal(format!(
                        "Dirichlet DOF {local} of patch {s} received no trace value"
                    )));
                }
                vals[local] = global[e];
            }
        }
        per_patch.push(vals);
    }
    Ok(per_patch)
}

/// Global L2 projection onto the glued multipatch space (unit-weight
/// vector mass), returned as per-patch coefficient vectors.
pub fn project_initial(
    spaces: &[CurlSpace],
    topo: &Topology,
    field: VectorField,
) -> Result<Vec<Vec<f64>>> {
    let n = topo.n_edges();
    let mut coo = CooMatrix::new(n, n);
    let mut rhs = vec![0.0; n];
    for (s, space) in spaces.iter().enumerate() {
        let mass = assemble_vector_mass(space, 1.0)?;
        let map = &topo.patch_to_global[s];
        for r in 0..mass.nrows() {
            for (c, v) in mass.row(r) {
                coo.push(map[r], map[c], v);
            }
        }
        let load = assemble_load(space, field)?;
        for (local, v) in load.iter().enumerate() {
            rhs[map[local]] += v;
        }
    }
    let mass = coo.to_csr();
    let sol = cg_solve(&mass, &rhs, 1e-13, 20 * n + 100)
        .ok_or_else(|| Error::Internal("projection mass solve did not converge".into()))?;
    Ok(spaces
        .iter()
        .enumerate()
        .map(|(s, space)| {
            (0..space.total_dofs())
                .map(|l| sol[topo.patch_to_global[s][l]])
                .collect()
        })
        .collect())
}

/// L2 projection constrained to the marching boundary operator: the
/// Dirichlet coefficients are fixed to the trace values of `field` and
/// only the free DOFs are projected. Starting the time loop from the
/// plain projection instead makes the boundary representation jump in
/// the first step, and the backward difference quotient amplifies that
/// jump by 1/dt.
pub fn project_initial_bc(
    grid: &PatchGrid,
    spaces: &[CurlSpace],
    topo: &Topology,
    field: VectorField,
) -> Result<Vec<Vec<f64>>> {
    let n = topo.n_edges();
    let bc = dirichlet_values(grid, spaces, topo, field)?;
    let mut fixed = vec![f64::NAN; n];
    for (s, space) in spaces.iter().enumerate() {
        for l in 0..space.total_dofs() {
            let e = topo.patch_to_global[s][l];
            if topo.edges[e].class == crate::topology::DofClass::Dirichlet {
                fixed[e] = bc[s][l];
            }
        }
    }
    let mut coo = CooMatrix::new(n, n);
    let mut rhs = vec![0.0; n];
    for (s, space) in spaces.iter().enumerate() {
        let mass = assemble_vector_mass(space, 1.0)?;
        let map = &topo.patch_to_global[s];
        for r in 0..mass.nrows() {
            for (c, v) in mass.row(r) {
                let (gr, gc) = (map[r], map[c]);
                match (fixed[gr].is_nan(), fixed[gc].is_nan()) {
                    (true, true) => coo.push(gr, gc, v),
                    (true, false) => rhs[gr] -= v * fixed[gc],
                    (false, _) => {}
                }
            }
        }
        let load = assemble_load(space, field)?;
        for (local, v) in load.iter().enumerate() {
            if fixed[map[local]].is_nan() {
                rhs[map[local]] += v;
            }
        }
    }
    for (e, &v) in fixed.iter().enumerate() {
        if !v.is_nan() {
            coo.push(e, e, 1.0);
            rhs[e] = v;
        }
    }
    let mass = coo.to_csr();
    let sol = cg_solve(&mass, &rhs, 1e-13, 20 * n + 100)
        .ok_or_else(|| Error::Internal("constrained projection mass solve did not converge".into()))?;
    Ok(spaces
        .iter()
        .enumerate()
        .map(|(s, space)| {
            (0..space.total_dofs())
                .map(|l| sol[topo.patch_to_global[s][l]])
                .collect()
        })
        .collect())
}
