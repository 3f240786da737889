//! Closed-form verification fields and the data derived from them.
//!
//! The prescribed vector potential is divergence-free and separable in
//! time, so the source current reduces to a constant multiple of the
//! potential in each region. Those constants are re-checked against a
//! finite-difference residual oracle in the tests rather than trusted.

use crate::error::{Error, Result};
use crate::spline::Box3;
use crate::topology::Region;

/// Material and geometry constants of the verification problem.
#[derive(Debug, Clone)]
pub struct CaseConfig {
    pub nu: f64,
    pub sigma: f64,
    pub domain: Box3,
    pub t_final: f64,
    /// Conductor occupies points where this is true.
    pub conductor_below_x: f64,
}

impl Default for CaseConfig {
    fn default() -> Self {
        CaseConfig {
            nu: 1.0,
            sigma: 1.0,
            domain: Box3::new([0.0; 3], [1.0; 3]),
            t_final: 1.0,
            conductor_below_x: 0.5,
        }
    }
}

impl CaseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nu <= 0.0 || self.sigma <= 0.0 {
            return Err(Error::Config("material constants must be positive".into()));
        }
        if self.t_final <= 0.0 {
            return Err(Error::Config("final time must be positive".into()));
        }
        Ok(())
    }

    pub fn in_conductor(&self, x: [f64; 3]) -> bool {
        x[0] < self.conductor_below_x
    }
}

/// Exact vector potential.
pub fn exact_a(x: [f64; 3], t: f64) -> [f64; 3] {
    let e = (-t).exp();
    [
        e * x[0].sin() * x[1].cos() * x[2].cos(),
        -2.0 * e * x[0].cos() * x[1].sin() * x[2].cos(),
        e * x[0].cos() * x[1].cos() * x[2].sin(),
    ]
}

/// Exact magnetic flux density, the curl of [`exact_a`].
pub fn exact_b(x: [f64; 3], t: f64) -> [f64; 3] {
    let e = (-t).exp();
    [
        -3.0 * e * x[0].cos() * x[1].sin() * x[2].sin(),
        0.0,
        3.0 * e * x[0].sin() * x[1].sin() * x[2].cos(),
    ]
}

/// Exact electric field in the conductor, `-dA/dt = A`.
pub fn exact_e_c(cfg: &CaseConfig, x: [f64; 3], t: f64) -> Result<[f64; 3]> {
    if !cfg.in_conductor(x) {
        return Err(Error::InvalidInput(format!(
            "electric field requested at insulator point {x:?}"
        )));
    }
    Ok(exact_a(x, t))
}

/// Source current density for the potential equation. With the exact
/// potential divergence-free, curl(curl A) = 3A, so the source is
/// `(3 nu - sigma) A` in the conductor and `3 nu A` in the insulator.
pub fn source_j(cfg: &CaseConfig, x: [f64; 3], t: f64, region: Region) -> [f64; 3] {
    let a = exact_a(x, t);
    let factor = match region {
        Region::Conductor => 3.0 * cfg.nu - cfg.sigma,
        Region::Insulator => 3.0 * cfg.nu,
    };
    [factor * a[0], factor * a[1], factor * a[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_points(n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])
            .collect()
    }

    fn central_diff(f: impl Fn([f64; 3]) -> [f64; 3], x: [f64; 3], d: usize, h: f64) -> [f64; 3] {
        let mut xp = x;
        let mut xm = x;
        xp[d] += h;
        xm[d] -= h;
        let fp = f(xp);
        let fm = f(xm);
        [
            (fp[0] - fm[0]) / (2.0 * h),
            (fp[1] - fm[1]) / (2.0 * h),
            (fp[2] - fm[2]) / (2.0 * h),
        ]
    }

    fn fd_curl(f: impl Fn([f64; 3]) -> [f64; 3] + Copy, x: [f64; 3], h: f64) -> [f64; 3] {
        let dx = central_diff(f, x, 0, h);
        let dy = central_diff(f, x, 1, h);
        let dz = central_diff(f, x, 2, h);
        [dy[2] - dz[1], dz[0] - dx[2], dx[1] - dy[0]]
    }

    #[test]
    fn potential_point_value() {
        let a = exact_a([0.5, 0.0, 0.0], 0.0);
        assert!((a[0] - 0.5f64.sin()).abs() < 1e-15);
        assert!(a[1].abs() < 1e-15 && a[2].abs() < 1e-15);
    }

    #[test]
    fn potential_is_divergence_free() {
        let h = 1e-5;
        for x in sample_points(100, 7) {
            let mut div = 0.0;
            for d in 0..3 {
                div += central_diff(|y| exact_a(y, 0.3), x, d, h)[d];
            }
            assert!(div.abs() < 1e-8, "div A = {div} at {x:?}");
        }
    }

    #[test]
    fn time_separability() {
        for x in sample_points(20, 9) {
            let scale = (-1.0f64).exp();
            let a0 = exact_a(x, 0.4);
            let a1 = exact_a(x, 1.4);
            for c in 0..3 {
                assert!((a1[c] - scale * a0[c]).abs() < 1e-14);
            }
            let b0 = exact_b(x, 0.4);
            let b1 = exact_b(x, 1.4);
            for c in 0..3 {
                assert!((b1[c] - scale * b0[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn flux_matches_curl_of_potential() {
        let t = 0.7;
        for x in sample_points(100, 11) {
            let curl = fd_curl(|y| exact_a(y, t), x, 1e-5);
            let b = exact_b(x, t);
            for c in 0..3 {
                assert!((curl[c] - b[c]).abs() < 1e-8);
            }
            assert_eq!(b[1], 0.0);
        }
    }

    #[test]
    fn flux_is_divergence_free() {
        let h = 1e-5;
        for x in sample_points(100, 13) {
            let mut div = 0.0;
            for d in 0..3 {
                div += central_diff(|y| exact_b(y, 0.2), x, d, h)[d];
            }
            assert!(div.abs() < 1e-8);
        }
    }

    #[test]
    fn electric_field_equals_potential() {
        let cfg = CaseConfig::default();
        for mut x in sample_points(100, 17) {
            x[0] *= 0.499;
            let e = exact_e_c(&cfg, x, 0.6).unwrap();
            let a = exact_a(x, 0.6);
            for c in 0..3 {
                assert!((e[c] - a[c]).abs() < 1e-15);
            }
            // finite difference in time
            let d = 1e-5;
            let am = exact_a(x, 0.6 - d);
            let ap = exact_a(x, 0.6 + d);
            for c in 0..3 {
                let fd = -(ap[c] - am[c]) / (2.0 * d);
                assert!((e[c] - fd).abs() < 1e-9);
            }
        }
        assert!(exact_e_c(&cfg, [0.9, 0.1, 0.1], 0.0).is_err());
    }

    #[test]
    fn source_satisfies_pde_residual() {
        // curl(nu curl A) + sigma dA/dt - J = 0, via nested finite
        // differences for the double curl.
        let cfg = CaseConfig::default();
        let t = 0.5;
        let h = 1e-4;
        for (region, xscale, xshift) in
            [(Region::Conductor, 0.3, 0.1), (Region::Insulator, 0.3, 0.6)]
        {
            for mut x in sample_points(20, 19) {
                x[0] = x[0] * xscale + xshift;
                x[1] = x[1] * 0.8 + 0.1;
                x[2] = x[2] * 0.8 + 0.1;
                let curlcurl = fd_curl(|y| fd_curl(|z| exact_a(z, t), y, h), x, h);
                let dadt: [f64; 3] = {
                    let d = 1e-6;
                    let ap = exact_a(x, t + d);
                    let am = exact_a(x, t - d);
                    [0, 1, 2].map(|c| (ap[c] - am[c]) / (2.0 * d))
                };
                let sigma = match region {
                    Region::Conductor => cfg.sigma,
                    Region::Insulator => 0.0,
                };
                let j = source_j(&cfg, x, t, region);
                for c in 0..3 {
                    let res = cfg.nu * curlcurl[c] + sigma * dadt[c] - j[c];
                    assert!(res.abs() < 1e-6, "residual {res} comp {c} region {region:?}");
                }
            }
        }
    }

    #[test]
    fn source_is_a_multiple_of_the_potential() {
        let cfg = CaseConfig::default();
        for x in sample_points(20, 23) {
            let a = exact_a(x, 0.25);
            let jc = source_j(&cfg, x, 0.25, Region::Conductor);
            let ji = source_j(&cfg, x, 0.25, Region::Insulator);
            for c in 0..3 {
                assert!((jc[c] - 2.0 * a[c]).abs() < 1e-14);
                assert!((ji[c] - 3.0 * a[c]).abs() < 1e-14);
            }
        }
    }
}
