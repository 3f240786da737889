//! One-dimensional B-spline spaces, Gauss quadrature and per-patch
//! curl-conforming tensor-product vector spaces.
//!
//! The vector space mixes degrees per component: the component's own
//! direction carries degree `p-1` factors in Curry-Schoenberg (unit
//! integral) normalization, the other two directions carry degree `p`
//! factors. With that normalization the discrete gradient is a signed
//! incidence matrix of the control mesh, which is what the tree-cotree
//! gauge relies on.

use crate::error::{Error, Result};
use crate::sparse::CooMatrix;

/// Open knot vector on a uniform breakpoint grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
    breaks: Vec<f64>,
}

impl KnotVector {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn n_elements(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.breaks[0], *self.breaks.last().unwrap())
    }

    /// Knot-span index containing `x` (clamped to the last span at the
    /// right endpoint).
    fn find_span(&self, x: f64) -> usize {
        let n = self.dim();
        let p = self.degree;
        if x >= self.knots[n] {
            return n - 1;
        }
        // binary search in knots[p..=n]
        let mut lo = p;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Values and derivatives of the `degree+1` basis functions active
    /// at `x`. Returns the index of the first active function and a
    /// table `ders[k][j]` with the k-th derivative of the j-th active
    /// function, `k = 0..=max_deriv`.
    pub fn eval_basis(&self, x: f64, max_deriv: usize) -> Result<(usize, Vec<Vec<f64>>)> {
        let (a, b) = self.interval();
        if x < a - 1e-12 || x > b + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "evaluation point {x} outside [{a}, {b}]"
            )));
        }
        let p = self.degree;
        let nd = max_deriv.min(p);
        let span = self.find_span(x);
        let t = &self.knots;

        // Cox-de Boor triangle with saved knot differences (NURBS book A2.3).
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![0.0; p + 1]; max_deriv + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a2 = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let mut s1 = 0;
            let mut s2 = 1;
            a2[0][0] = 1.0;
            for k in 1..=nd {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a2[s2][0] = a2[s1][0] / ndu[pk + 1][rk as usize];
                    d = a2[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    a2[s2][j] = (a2[s1][j] - a2[s1][j - 1]) / ndu[pk + 1][(rk + j as isize) as usize];
                    d += a2[s2][j] * ndu[(rk + j as isize) as usize][pk];
                }
                if r <= pk {
                    a2[s2][k] = -a2[s1][k - 1] / ndu[pk + 1][r];
                    d += a2[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut f = p as f64;
        for k in 1..=nd {
            for j in 0..=p {
                ders[k][j] *= f;
            }
            f *= (p - k) as f64;
        }
        Ok((span - p, ders))
    }

    /// Degree-lowered space on the same breakpoints (maximum continuity).
    pub fn derivative_space(&self) -> KnotVector {
        debug_assert!(self.degree >= 1);
        KnotVector {
            degree: self.degree - 1,
            knots: self.knots[1..self.knots.len() - 1].to_vec(),
            breaks: self.breaks.clone(),
        }
    }

    /// Greville abscissae (element midpoints for degree 0).
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        let n = self.dim();
        if p == 0 {
            return (0..n)
                .map(|i| 0.5 * (self.breaks[i] + self.breaks[i + 1]))
                .collect();
        }
        (0..n)
            .map(|i| self.knots[i + 1..i + 1 + p].iter().sum::<f64>() / p as f64)
            .collect()
    }
}

/// Open knot vector of degree `p` with `n_el` uniform elements on `[a, b]`.
pub fn make_spline_space(p: usize, n_el: usize, a: f64, b: f64) -> Result<KnotVector> {
    if p < 1 {
        return Err(Error::InvalidInput(format!("degree must be >= 1, got {p}")));
    }
    if n_el < 1 {
        return Err(Error::InvalidInput(format!(
            "element count must be >= 1, got {n_el}"
        )));
    }
    if !(a < b) {
        return Err(Error::InvalidInput(format!("empty interval [{a}, {b}]")));
    }
    let breaks: Vec<f64> = (0..=n_el)
        .map(|i| a + (b - a) * i as f64 / n_el as f64)
        .collect();
    let mut knots = Vec::with_capacity(n_el + 2 * p + 1);
    knots.extend(std::iter::repeat(a).take(p));
    knots.extend(breaks.iter().copied());
    knots.extend(std::iter::repeat(b).take(p));
    Ok(KnotVector { degree: p, knots, breaks })
}

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct Quadrature1D {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `q`-point Gauss-Legendre rule, exact for polynomials up to degree `2q-1`.
pub fn gauss_rule(q: usize) -> Result<Quadrature1D> {
    if q < 1 {
        return Err(Error::InvalidInput("quadrature order must be >= 1".into()));
    }
    let mut points = vec![0.0; q];
    let mut weights = vec![0.0; q];
    let n = q as f64;
    for i in 0..(q + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        // Newton on the Legendre polynomial of degree q.
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=q {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        points[i] = -x;
        points[q - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[q - 1 - i] = w;
    }
    if q % 2 == 1 {
        points[q / 2] = 0.0;
    }
    Ok(Quadrature1D { points, weights })
}

/// One tensor factor: a knot vector plus optional per-function scaling
/// (used for the unit-integral normalization of degree `p-1` factors).
#[derive(Debug, Clone)]
pub struct Basis1D {
    kv: KnotVector,
    scale: Option<Vec<f64>>,
}

impl Basis1D {
    pub fn plain(kv: KnotVector) -> Self {
        Basis1D { kv, scale: None }
    }

    /// Curry-Schoenberg normalization: every function integrates to one.
    pub fn unit_integral(kv: KnotVector) -> Self {
        let q = kv.degree();
        let t = kv.knots();
        let scale = (0..kv.dim())
            .map(|j| (q as f64 + 1.0) / (t[j + q + 1] - t[j]))
            .collect();
        Basis1D { kv, scale: Some(scale) }
    }

    pub fn kv(&self) -> &KnotVector {
        &self.kv
    }

    pub fn dim(&self) -> usize {
        self.kv.dim()
    }

    pub fn degree(&self) -> usize {
        self.kv.degree()
    }

    /// Coefficient weights that represent the constant function 1.
    pub fn partition_weights(&self) -> Vec<f64> {
        match &self.scale {
            None => vec![1.0; self.dim()],
            Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        }
    }

    /// Collocation nodes for interpolation in this basis.
    pub fn nodes(&self) -> Vec<f64> {
        self.kv.greville()
    }

    pub fn eval(&self, x: f64, max_deriv: usize) -> Result<(usize, Vec<Vec<f64>>)> {
        let (first, mut ders) = self.kv.eval_basis(x, max_deriv)?;
        if let Some(scale) = &self.scale {
            for row in ders.iter_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v *= scale[first + j];
                }
            }
        }
        Ok((first, ders))
    }
}

/// Axis-aligned box in physical coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3 {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Box3 {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Box3 { lo, hi }
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|d| self.hi[d] - self.lo[d]).product()
    }

    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
            0.5 * (self.lo[2] + self.hi[2]),
        ]
    }
}

/// Per-patch curl-conforming tensor-product vector space.
#[derive(Debug, Clone)]
pub struct CurlSpace {
    bbox: Box3,
    degree: usize,
    divisions: [usize; 3],
    /// Degree-p factor per direction.
    scalar: [Basis1D; 3],
    /// Degree-(p-1), unit-integral factor per direction.
    deriv: [Basis1D; 3],
}

impl CurlSpace {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn bbox(&self) -> &Box3 {
        &self.bbox
    }

    pub fn divisions(&self) -> [usize; 3] {
        self.divisions
    }

    /// Factor of component `c` along direction `d`.
    pub fn factor(&self, c: usize, d: usize) -> &Basis1D {
        if c == d {
            &self.deriv[d]
        } else {
            &self.scalar[d]
        }
    }

    pub fn scalar_factor(&self, d: usize) -> &Basis1D {
        &self.scalar[d]
    }

    pub fn deriv_factor(&self, d: usize) -> &Basis1D {
        &self.deriv[d]
    }

    pub fn comp_dims(&self, c: usize) -> [usize; 3] {
        [
            self.factor(c, 0).dim(),
            self.factor(c, 1).dim(),
            self.factor(c, 2).dim(),
        ]
    }

    pub fn comp_count(&self, c: usize) -> usize {
        self.comp_dims(c).iter().product()
    }

    pub fn comp_offset(&self, c: usize) -> usize {
        (0..c).map(|k| self.comp_count(k)).sum()
    }

    pub fn total_dofs(&self) -> usize {
        (0..3).map(|c| self.comp_count(c)).sum()
    }

    pub fn scalar_dims(&self) -> [usize; 3] {
        [self.scalar[0].dim(), self.scalar[1].dim(), self.scalar[2].dim()]
    }

    pub fn scalar_total(&self) -> usize {
        self.scalar_dims().iter().product()
    }

    /// Lexicographic local index (x fastest, then y, then z) inside
    /// component `c`, offset by the preceding components.
    pub fn index(&self, c: usize, idx: [usize; 3]) -> usize {
        let dims = self.comp_dims(c);
        debug_assert!(idx[0] < dims[0] && idx[1] < dims[1] && idx[2] < dims[2]);
        self.comp_offset(c) + idx[0] + dims[0] * (idx[1] + dims[1] * idx[2])
    }

    pub fn scalar_index(&self, idx: [usize; 3]) -> usize {
        let dims = self.scalar_dims();
        idx[0] + dims[0] * (idx[1] + dims[1] * idx[2])
    }

    /// Inverse of [`CurlSpace::index`].
    pub fn decode(&self, dof: usize) -> (usize, [usize; 3]) {
        let mut rest = dof;
        for c in 0..3 {
            let count = self.comp_count(c);
            if rest < count {
                let dims = self.comp_dims(c);
                let i = rest % dims[0];
                let j = (rest / dims[0]) % dims[1];
                let k = rest / (dims[0] * dims[1]);
                return (c, [i, j, k]);
            }
            rest -= count;
        }
        panic!("dof index {dof} out of range");
    }
}

/// Curl-conforming space of degree `p` on `bbox` with the given
/// per-direction element counts.
pub fn build_curl_space(p: usize, divisions: [usize; 3], bbox: Box3) -> Result<CurlSpace> {
    for d in 0..3 {
        if !(bbox.lo[d] < bbox.hi[d]) {
            return Err(Error::InvalidInput(format!(
                "degenerate box in direction {d}: [{}, {}]",
                bbox.lo[d], bbox.hi[d]
            )));
        }
        if divisions[d] < 1 {
            return Err(Error::InvalidInput("divisions must be >= 1".into()));
        }
    }
    let mk = |d: usize| make_spline_space(p, divisions[d], bbox.lo[d], bbox.hi[d]);
    let scalar = [
        Basis1D::plain(mk(0)?),
        Basis1D::plain(mk(1)?),
        Basis1D::plain(mk(2)?),
    ];
    let deriv = [
        Basis1D::unit_integral(scalar[0].kv().derivative_space()),
        Basis1D::unit_integral(scalar[1].kv().derivative_space()),
        Basis1D::unit_integral(scalar[2].kv().derivative_space()),
    ];
    Ok(CurlSpace { bbox, degree: p, divisions, scalar, deriv })
}

/// Signed incidence matrix mapping scalar (control vertex) coefficients
/// to curl-space coefficients such that the represented vector field is
/// the gradient of the represented scalar field.
pub fn discrete_gradient(space: &CurlSpace) -> CooMatrix {
    let sdims = space.scalar_dims();
    let mut coo = CooMatrix::new(space.total_dofs(), space.scalar_total());
    for c in 0..3 {
        let dims = space.comp_dims(c);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let row = space.index(c, [i, j, k]);
                    let lo = [i, j, k];
                    let mut hi = [i, j, k];
                    hi[c] += 1;
                    debug_assert!(hi[c] < sdims[c]);
                    coo.push(row, space.scalar_index(hi), 1.0);
                    coo.push(row, space.scalar_index(lo), -1.0);
                }
            }
        }
    }
    coo
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn open_knot_construction() {
        let kv = make_spline_space(1, 2, 0.0, 1.0).unwrap();
        assert_eq!(kv.knots(), &[0.0, 0.0, 0.5, 1.0, 1.0]);
        assert_eq!(kv.dim(), 3);

        let kv = make_spline_space(2, 4, 0.0, 1.0).unwrap();
        assert_eq!(kv.dim(), 6);

        let kv = make_spline_space(3, 8, 0.5, 1.0).unwrap();
        assert_eq!(kv.dim(), 11);
        assert_abs_diff_eq!(kv.breaks()[1] - kv.breaks()[0], 1.0 / 16.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(make_spline_space(0, 2, 0.0, 1.0).is_err());
        assert!(make_spline_space(1, 0, 0.0, 1.0).is_err());
        assert!(make_spline_space(1, 2, 1.0, 0.0).is_err());
        let kv = make_spline_space(2, 3, 0.0, 1.0).unwrap();
        assert!(kv.eval_basis(1.5, 0).is_err());
        assert!(gauss_rule(0).is_err());
    }

    #[test]
    fn linear_hats_at_midpoint() {
        let kv = make_spline_space(1, 2, 0.0, 1.0).unwrap();
        let (first, ders) = kv.eval_basis(0.25, 0).unwrap();
        assert_eq!(first, 0);
        assert_abs_diff_eq!(ders[0][0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(ders[0][1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn derivative_space_dims() {
        for (p, n_el, expect) in [(2usize, 4usize, 5usize), (1, 2, 2), (3, 2, 4)] {
            let kv = make_spline_space(p, n_el, 0.0, 1.0).unwrap();
            let dkv = kv.derivative_space();
            assert_eq!(dkv.dim(), expect);
            assert_eq!(dkv.dim(), kv.dim() - 1);
        }
    }

    #[test]
    fn gauss_rules() {
        let q1 = gauss_rule(1).unwrap();
        assert_abs_diff_eq!(q1.points[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q1.weights[0], 2.0, epsilon = 1e-15);

        let q2 = gauss_rule(2).unwrap();
        assert_abs_diff_eq!(q2.points[1], 1.0 / 3f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(q2.weights[0], 1.0, epsilon = 1e-14);
        // exactness on x^2
        let int: f64 = q2
            .points
            .iter()
            .zip(&q2.weights)
            .map(|(x, w)| w * x * x)
            .sum();
        assert_abs_diff_eq!(int, 2.0 / 3.0, epsilon = 1e-14);

        for q in 1..=8 {
            let rule = gauss_rule(q).unwrap();
            assert_abs_diff_eq!(rule.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn curl_space_counts() {
        let b = Box3::new([0.0; 3], [1.0; 3]);
        let s = build_curl_space(1, [2, 2, 2], b).unwrap();
        for c in 0..3 {
            assert_eq!(s.comp_count(c), 18);
        }
        assert_eq!(s.total_dofs(), 54);

        let s = build_curl_space(2, [2, 2, 2], b).unwrap();
        assert_eq!(s.comp_count(0), 48);
        assert_eq!(s.total_dofs(), 144);

        let s = build_curl_space(1, [1, 1, 1], b).unwrap();
        assert_eq!(s.total_dofs(), 12);
    }

    #[test]
    fn component_count_matches_enumeration() {
        // oracle: enumerate tensor indices per component
        for (p, divs) in [(1usize, [2usize, 2, 2]), (2, [2, 2, 2]), (3, [2, 1, 4])] {
            let b = Box3::new([0.0; 3], [1.0; 3]);
            let s = build_curl_space(p, divs, b).unwrap();
            for c in 0..3 {
                let mut count = 0usize;
                for d0 in 0..if c == 0 { divs[0] + p - 1 } else { divs[0] + p } {
                    for d1 in 0..if c == 1 { divs[1] + p - 1 } else { divs[1] + p } {
                        for d2 in 0..if c == 2 { divs[2] + p - 1 } else { divs[2] + p } {
                            let _ = (d0, d1, d2);
                            count += 1;
                        }
                    }
                }
                assert_eq!(s.comp_count(c), count);
            }
        }
    }

    #[test]
    fn index_roundtrip_deterministic() {
        let b = Box3::new([0.0; 3], [1.0; 3]);
        let s1 = build_curl_space(2, [3, 2, 2], b).unwrap();
        let s2 = build_curl_space(2, [3, 2, 2], b).unwrap();
        for dof in 0..s1.total_dofs() {
            let (c, idx) = s1.decode(dof);
            assert_eq!(s1.index(c, idx), dof);
            assert_eq!(s2.decode(dof), (c, idx));
        }
    }

    #[test]
    fn gradient_is_hexahedron_incidence_for_lowest_order() {
        let b = Box3::new([0.0; 3], [1.0; 3]);
        let s = build_curl_space(1, [1, 1, 1], b).unwrap();
        let g = discrete_gradient(&s).to_csr();
        assert_eq!(g.nrows(), 12);
        assert_eq!(g.ncols(), 8);
        for row in 0..12 {
            let entries = g.row(row);
            assert_eq!(entries.len(), 2);
            let mut signs: Vec<f64> = entries.iter().map(|&(_, v)| v).collect();
            signs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(signs, vec![-1.0, 1.0]);
        }
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let b = Box3::new([0.0; 3], [1.0; 3]);
        let s = build_curl_space(2, [2, 3, 2], b).unwrap();
        let g = discrete_gradient(&s).to_csr();
        let ones = vec![3.5; s.scalar_total()];
        let out = g.matvec(&ones);
        assert!(out.iter().all(|v| v.abs() < 1e-14));
    }

    proptest! {
        #[test]
        fn partition_of_unity(p in 1usize..=4, n_el in 1usize..=6, xf in 0.0f64..1.0) {
            let kv = make_spline_space(p, n_el, 0.0, 1.0).unwrap();
            let x = xf.min(1.0 - 1e-9);
            let (_, ders) = kv.eval_basis(x, 1).unwrap();
            let s0: f64 = ders[0].iter().sum();
            let s1: f64 = ders[1].iter().sum();
            prop_assert!((s0 - 1.0).abs() <= 1e-12);
            prop_assert!(s1.abs() <= 1e-10);
        }
    }

    #[test]
    fn derivative_identity_against_finite_differences() {
        // d/dx of a spline expanded in the degree-p basis equals the
        // expansion of coefficient differences in the normalized basis.
        let kv = make_spline_space(3, 4, 0.0, 1.0).unwrap();
        let deriv = Basis1D::unit_integral(kv.derivative_space());
        let coeffs: Vec<f64> = (0..kv.dim()).map(|i| (i as f64 * 0.7).sin()).collect();
        for &x in &[0.05, 0.3, 0.55, 0.83, 0.99] {
            let (f0, ders) = kv.eval_basis(x, 1).unwrap();
            let exact: f64 = (0..=3).map(|j| coeffs[f0 + j] * ders[1][j]).sum();
            let (f1, dvals) = deriv.eval(x, 0).unwrap();
            let via_diff: f64 = (0..3)
                .map(|j| (coeffs[f1 + j + 1] - coeffs[f1 + j]) * dvals[0][j])
                .sum();
            assert_abs_diff_eq!(exact, via_diff, epsilon = 1e-11);
        }
    }
}
