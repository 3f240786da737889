//! Acceptance gate: one pass/fail line per criterion. Runs without the
//! libtest harness so the lines always reach the terminal.

use eddy_ieti::assembly::{l2_error_curl_sq, project_initial};
use eddy_ieti::experiment::{csv_string, observed_order, run_single, run_sweep, slope, ExperimentConfig, CSV_HEADER};
use eddy_ieti::gauge::TreeOrdering;
use eddy_ieti::manufactured::{exact_a, CaseConfig};
use eddy_ieti::solver::{build_discretization, Discretization, SolveOptions, Stepper};
use eddy_ieti::sparse::CsrMatrix;
use eddy_ieti::spline::discrete_gradient;
use eddy_ieti::topology::{DofClass, Region};

fn disc(degree: usize, divs: usize, counts: [usize; 3], ordering: TreeOrdering) -> Discretization {
    build_discretization(&CaseConfig::default(), counts, degree, [divs; 3], ordering)
        .expect("discretization")
}

fn initial(d: &Discretization) -> Vec<Vec<f64>> {
    project_initial(&d.spaces, &d.topo, &|x| exact_a(x, 0.0)).expect("projection")
}

fn max_coeff_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .fold(0.0f64, f64::max)
}

/// Interface solve agrees with the dense monolithic reference on the
/// coarsest two-patch problem.
fn oracle_equivalence() -> Result<String, String> {
    let d = disc(1, 2, [2, 1, 1], TreeOrdering::Forward);
    let st = Stepper::new(&d, 0.5).map_err(|e| e.to_string())?;
    let a0 = initial(&d);
    let opts = SolveOptions { tol: 1e-12, ..SolveOptions::default() };
    let (a1, _) = st.solve_step(&d, &a0, 0.5, opts).map_err(|e| e.to_string())?;
    let (a1m, _) = st.solve_step_monolithic(&d, &a0, 0.5).map_err(|e| e.to_string())?;
    let scale = a1m
        .iter()
        .flatten()
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    let diff = max_coeff_diff(&a1, &a1m) / scale;
    if diff <= 1e-8 {
        Ok(format!("relative coefficient difference {diff:.2e}"))
    } else {
        Err(format!("relative coefficient difference {diff:.2e} > 1e-8"))
    }
}

/// Spatial convergence orders of the flux error under mesh refinement.
fn spatial_orders() -> Result<String, String> {
    let xcfg = ExperimentConfig::default();
    let mut details = Vec::new();
    for p in [1usize, 2] {
        let rows = run_sweep(&xcfg, &[p], &[2, 4, 8], &[1024]).map_err(|e| e.to_string())?;
        let divs: Vec<f64> = rows.iter().map(|r| r.divs as f64).collect();
        for (label, errs) in [
            ("flux", rows.iter().map(|r| r.err_b).collect::<Vec<_>>()),
            ("field", rows.iter().map(|r| r.err_e).collect::<Vec<_>>()),
        ] {
            let order = observed_order(&divs, &errs);
            details.push(format!("p={p} {label}: order {order:.2}"));
            if (order - p as f64).abs() > 0.3 {
                return Err(format!(
                    "p={p}: {label} order {order:.3} outside {p}+-0.3 (errors {errs:?})"
                ));
            }
        }
    }
    let rows = run_sweep(&xcfg, &[3], &[2, 4], &[1024]).map_err(|e| e.to_string())?;
    let order_b = observed_order(&[2.0, 4.0], &[rows[0].err_b, rows[1].err_b]);
    details.push(format!("p=3 flux: order {order_b:.2}"));
    if order_b < 2.5 {
        return Err(format!("p=3: flux order {order_b:.3} < 2.5"));
    }
    // at p=3 the field error reaches its 1/n_t term within these
    // meshes; accept either the spatial order or a demonstrated
    // temporal plateau (halving the step count must scale the error)
    let order_e = observed_order(&[2.0, 4.0], &[rows[0].err_e, rows[1].err_e]);
    if order_e < 2.5 {
        let half = run_single(&xcfg, 3, 4, 512).map_err(|e| e.to_string())?;
        let ratio = half.err_e / rows[1].err_e;
        if ratio < 1.5 {
            return Err(format!(
                "p=3: field order {order_e:.3} < 2.5 without temporal plateau (n_t ratio {ratio:.2})"
            ));
        }
        details.push(format!("p=3 field: order {order_e:.2} on the 1/n_t plateau (ratio {ratio:.2})"));
    } else {
        details.push(format!("p=3 field: order {order_e:.2}"));
    }
    Ok(details.join(", "))
}

/// First-order decay of the conductor field error under time refinement.
fn temporal_order() -> Result<String, String> {
    let xcfg = ExperimentConfig::default();
    let steps = [2usize, 8, 32, 128];
    let mut errs_b = Vec::new();
    let mut errs_e = Vec::new();
    for &n in &steps {
        let row = run_single(&xcfg, 3, 4, n).map_err(|e| e.to_string())?;
        errs_b.push(row.err_b);
        errs_e.push(row.err_e);
    }
    let ns: Vec<f64> = steps.iter().map(|&n| n as f64).collect();
    let mut details = Vec::new();
    for (label, errs) in [("flux", &errs_b), ("field", &errs_e)] {
        let order = observed_order(&ns, errs);
        details.push(format!("{label} order {order:.2}"));
        if (order - 1.0).abs() > 0.2 {
            return Err(format!(
                "temporal {label} order {order:.3} outside 1.0+-0.2 (errors {errs:?})"
            ));
        }
    }
    Ok(format!("{} over steps {steps:?}", details.join(", ")))
}

/// The flux density does not depend on which tree edges the gauge fixes.
fn gauge_invariance() -> Result<String, String> {
    let n_steps = 4;
    let dt = 1.0 / n_steps as f64;
    let mut solutions = Vec::new();
    for ordering in [TreeOrdering::Forward, TreeOrdering::Reverse] {
        let d = disc(1, 4, [2, 1, 1], ordering);
        let st = Stepper::new(&d, dt).map_err(|e| e.to_string())?;
        let mut a = initial(&d);
        for step in 1..=n_steps {
            let (next, _) = st
                .solve_step(&d, &a, dt * step as f64, SolveOptions::default())
                .map_err(|e| e.to_string())?;
            a = next;
        }
        solutions.push((d, a));
    }
    let (d, fwd) = &solutions[0];
    let (_, rev) = &solutions[1];
    let mut diff_sq = 0.0;
    for (s, space) in d.spaces.iter().enumerate() {
        let delta: Vec<f64> = fwd[s].iter().zip(&rev[s]).map(|(a, b)| a - b).collect();
        diff_sq += l2_error_curl_sq(space, &delta, &|_| [0.0; 3]).map_err(|e| e.to_string())?;
    }
    let diff = diff_sq.sqrt();
    if diff <= 1e-4 {
        Ok(format!("flux L2 difference {diff:.2e}"))
    } else {
        Err(format!("flux L2 difference {diff:.2e} > 1e-4"))
    }
}

/// Hand-counted partition sizes on reference configurations.
fn partition_counts() -> Result<String, String> {
    // one all-insulator patch
    let cfg = CaseConfig { conductor_below_x: 0.0, ..CaseConfig::default() };
    let d = build_discretization(&cfg, [1, 1, 1], 1, [2, 2, 2], TreeOrdering::Forward)
        .map_err(|e| e.to_string())?;
    let c = d.part.counts();
    if c.eliminated() != 49 || c.remainder != 5 || c.primal != 0 {
        return Err(format!(
            "insulator patch: eliminated {} remainder {} primal {} (want 49/5/0)",
            c.eliminated(),
            c.remainder,
            c.primal
        ));
    }
    // default two-patch configuration
    let d2 = disc(1, 2, [2, 1, 1], TreeOrdering::Forward);
    let pri = d2.part.n_primal();
    if !(1..=4).contains(&pri) {
        return Err(format!("two-patch coarse size {pri} outside 1..=4"));
    }
    Ok(format!("insulator 49/5/0, two-patch coarse size {pri}"))
}

/// Iteration counts stay flat-to-moderate and the coarse space grows
/// like the interface under refinement.
fn scalability() -> Result<String, String> {
    let xcfg = ExperimentConfig::default();
    let mut details = Vec::new();
    for p in [1usize, 2] {
        let rows = run_sweep(&xcfg, &[p], &[2, 4, 8], &[64]).map_err(|e| e.to_string())?;
        let divs: Vec<f64> = rows.iter().map(|r| r.divs as f64).collect();
        let pris: Vec<f64> = rows.iter().map(|r| r.pri as f64).collect();
        let pri_slope = slope(
            &divs.iter().map(|d| d.ln()).collect::<Vec<_>>(),
            &pris.iter().map(|v| v.ln()).collect::<Vec<_>>(),
        );
        if !(1.2..=2.2).contains(&pri_slope) {
            return Err(format!("p={p}: coarse growth slope {pri_slope:.3} outside [1.2, 2.2]"));
        }
        // mean PCG iterations per step; growth at most ~linear in 1/h.
        // Meshes where the dual problem is degenerate (PCG done in one
        // iteration or skipped) say nothing about growth and would skew
        // the log-log fit, so they are left out.
        let positive: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.iter >= 2.0)
            .map(|r| (r.divs as f64, r.iter))
            .collect();
        let worst_mean = rows.iter().map(|r| r.iter).fold(0.0f64, f64::max);
        if worst_mean > 100.0 {
            return Err(format!("p={p}: {worst_mean:.1} mean interface iterations"));
        }
        let iter_slope = if positive.len() >= 2 {
            slope(
                &positive.iter().map(|(d, _)| d.ln()).collect::<Vec<_>>(),
                &positive.iter().map(|(_, i)| i.ln()).collect::<Vec<_>>(),
            )
        } else {
            0.0
        };
        if iter_slope > 1.5 {
            return Err(format!("p={p}: mean iteration growth slope {iter_slope:.3} > 1.5"));
        }
        details.push(format!(
            "p={p}: pri slope {pri_slope:.2}, iter slope {iter_slope:.2}, worst mean {worst_mean:.1}"
        ));
    }
    Ok(details.join("; "))
}

/// Structural invariants of the assembled operators and the partition.
fn structural_invariants() -> Result<String, String> {
    let d = disc(2, 4, [2, 1, 1], TreeOrdering::Forward);

    // curl-curl operator symmetric and vanishing on discrete gradients
    for (s, space) in d.spaces.iter().enumerate() {
        let k: &CsrMatrix = &d.stiff[s];
        if k.asymmetry() > 1e-12 * k.max_abs() {
            return Err(format!("patch {s}: curl-curl matrix not symmetric"));
        }
        let g = discrete_gradient(space).to_csr();
        let kg = k.matmul(&g);
        if kg.max_abs() > 1e-11 * k.max_abs() {
            return Err(format!("patch {s}: K*G residual {}", kg.max_abs()));
        }
    }

    // spanning tree: |V|-1 edges, acyclic by construction check
    if d.tree.n_tree_edges() != d.topo.n_vertices() - 1 {
        return Err(format!(
            "tree has {} edges for {} vertices",
            d.tree.n_tree_edges(),
            d.topo.n_vertices()
        ));
    }

    // role/classification consistency
    for (e, edge) in d.topo.edges.iter().enumerate() {
        use eddy_ieti::gauge::DofRole;
        match d.part.role[e] {
            DofRole::EliminatedData => {
                if edge.class != DofClass::Dirichlet {
                    return Err(format!("edge {e}: data elimination off the boundary"));
                }
            }
            DofRole::EliminatedGauge => {
                if edge.class != DofClass::Interior
                    || d.topo.edge_region(&d.grid, e) != Region::Insulator
                    || !d.tree.in_tree[e]
                {
                    return Err(format!("edge {e}: gauge fixed outside insulator interior tree"));
                }
            }
            DofRole::Primal(_) => {
                if edge.owners.len() < 2 || !d.tree.in_tree[e] {
                    return Err(format!("edge {e}: primal DOF not an interface tree edge"));
                }
            }
            DofRole::Remainder => {}
        }
    }

    // dual rows pair duplicated copies of the same interface edge
    for &(e, k) in &d.part.couplings {
        let edge = &d.topo.edges[e];
        let (s0, _) = edge.owners[0];
        let (sk, _) = edge.owners[k];
        if s0 == sk {
            return Err(format!("edge {e}: dual row couples a patch with itself"));
        }
    }

    // continuity in the reference solve: interface copies agree
    let st = Stepper::new(&d, 0.25).map_err(|e| e.to_string())?;
    let a0 = initial(&d);
    let (a1, _) = st.solve_step_monolithic(&d, &a0, 0.25).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for edge in &d.topo.edges {
        if edge.owners.len() < 2 {
            continue;
        }
        let (s0, l0) = edge.owners[0];
        for &(sk, lk) in &edge.owners[1..] {
            worst = worst.max((a1[s0][l0] - a1[sk][lk]).abs());
        }
    }
    if worst > 1e-9 {
        return Err(format!("interface jump {worst:.2e} in the reference solve"));
    }

    Ok(format!("operators, tree, roles, coupling rows, interface jump {worst:.1e}"))
}

/// Identical sweeps produce byte-identical CSV output.
fn csv_reproducibility() -> Result<String, String> {
    let xcfg = ExperimentConfig::default();
    let rows1 = run_sweep(&xcfg, &[1], &[2, 4], &[4]).map_err(|e| e.to_string())?;
    let rows2 = run_sweep(&xcfg, &[1], &[2, 4], &[4]).map_err(|e| e.to_string())?;
    let c1 = csv_string(&rows1);
    let c2 = csv_string(&rows2);
    if c1 != c2 {
        return Err("repeated sweep produced different bytes".into());
    }
    if !c1.starts_with(&format!("{CSV_HEADER}\n")) {
        return Err(format!("unexpected CSV header in {c1:?}"));
    }
    Ok(format!("{} identical bytes", c1.len()))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Result<String, String>)> = vec![
        ("oracle equivalence", oracle_equivalence),
        ("spatial convergence orders", spatial_orders),
        ("temporal convergence order", temporal_order),
        ("gauge invariance of the flux", gauge_invariance),
        ("partition counts", partition_counts),
        ("solver scalability", scalability),
        ("structural invariants", structural_invariants),
        ("csv reproducibility", csv_reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("acceptance {} ({name}): PASS [{detail}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {} ({name}): FAIL [{detail}]", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
