//! Lagrange shape functions on the reference triangle, quadrature, and the
//! element matrices of the bilinear forms.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::Point;

/// Symmetric 2×2 tensor, row-major.
pub type Tensor2 = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    pub values: Vec<f64>,
    /// Gradients with respect to the reference coordinates.
    pub grads: Vec<[f64; 2]>,
}

/// Lagrange basis of order 1 or 2 on the reference triangle
/// `(0,0), (1,0), (0,1)`. P2 node order: vertices, then the midpoints of
/// edges 01, 12, 20.
pub fn eval_basis(order: usize, xi: [f64; 2]) -> Result<BasisEval> {
    let (s, t) = (xi[0], xi[1]);
    let l = [1.0 - s - t, s, t];
    if l.iter().any(|&v| v < -1e-12) {
        return Err(Error::InvalidParameter(format!("point {xi:?} outside the reference triangle")));
    }
    let gl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    match order {
        1 => Ok(BasisEval { values: l.to_vec(), grads: gl.to_vec() }),
        2 => {
            let mut values = Vec::with_capacity(6);
            let mut grads = Vec::with_capacity(6);
            for i in 0..3 {
                values.push(l[i] * (2.0 * l[i] - 1.0));
                let f = 4.0 * l[i] - 1.0;
                grads.push([f * gl[i][0], f * gl[i][1]]);
            }
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                values.push(4.0 * l[i] * l[j]);
                grads.push([
                    4.0 * (gl[i][0] * l[j] + l[i] * gl[j][0]),
                    4.0 * (gl[i][1] * l[j] + l[i] * gl[j][1]),
                ]);
            }
            Ok(BasisEval { values, grads })
        }
        o => Err(Error::UnsupportedOrder(o)),
    }
}

/// Reference-triangle nodes of the order-`order` Lagrange element.
pub fn reference_nodes(order: usize) -> Result<Vec<[f64; 2]>> {
    match order {
        1 => Ok(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        2 => Ok(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]),
        o => Err(Error::UnsupportedOrder(o)),
    }
}

/// Basis of order 1 or 2 on the unit segment: endpoints first, then the midpoint.
pub fn edge_basis(order: usize, s: f64) -> Result<Vec<f64>> {
    match order {
        1 => Ok(vec![1.0 - s, s]),
        2 => Ok(vec![(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)]),
        o => Err(Error::UnsupportedOrder(o)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub degree: usize,
    /// Reference coordinates.
    pub points: Vec<[f64; 2]>,
    /// Weights summing to the reference area 1/2.
    pub weights: Vec<f64>,
}

/// Symmetric rule on the reference triangle exact for polynomials of total
/// degree `degree` (at most 4).
pub fn quadrature_rule(degree: usize) -> Result<QuadratureRule> {
    let from_bary = |bary: &[[f64; 3]], w: &[f64], degree| QuadratureRule {
        degree,
        points: bary.iter().map(|b| [b[1], b[2]]).collect(),
        weights: w.iter().map(|w| 0.5 * w).collect(),
    };
    match degree {
        0 | 1 => Ok(from_bary(&[[1.0 / 3.0; 3]], &[1.0], degree.max(1))),
        2 => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            Ok(from_bary(&[[a, b, b], [b, a, b], [b, b, a]], &[1.0 / 3.0; 3], 2))
        }
        3 | 4 => {
            // Six-point degree-4 rule (two orbits of three points).
            let a = 0.445_948_490_915_964_886;
            let wa = 0.223_381_589_678_011_466;
            let b = 0.091_576_213_509_770_743;
            let wb = 0.109_951_743_655_321_868;
            let (ca, cb) = (1.0 - 2.0 * a, 1.0 - 2.0 * b);
            Ok(from_bary(
                &[[ca, a, a], [a, ca, a], [a, a, ca], [cb, b, b], [b, cb, b], [b, b, cb]],
                &[wa, wa, wa, wb, wb, wb],
                degree,
            ))
        }
        d => Err(Error::QuadratureDegree(d)),
    }
}

/// Three-point Gauss-Legendre rule on `[0, 1]` (exact to degree 5).
pub fn gauss_segment() -> [(f64, f64); 3] {
    let r = (0.6f64).sqrt() / 2.0;
    [(0.5 - r, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + r, 5.0 / 18.0)]
}

/// Affine map from the reference triangle.
#[derive(Debug, Clone, Copy)]
pub struct TriangleGeometry {
    pub vertices: [Point; 3],
    jac: [[f64; 2]; 2],
    det: f64,
}

impl TriangleGeometry {
    pub fn new(vertices: [Point; 3]) -> Result<Self> {
        let [a, b, c] = vertices;
        let jac = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if 0.5 * det.abs() < 1e-14 {
            return Err(Error::DegenerateElement(0.5 * det.abs()));
        }
        Ok(Self { vertices, jac, det })
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det.abs()
    }

    pub fn map(&self, xi: [f64; 2]) -> Point {
        let a = self.vertices[0];
        [
            a[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            a[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    /// Physical gradient `J^{-T} ĝ` of a reference gradient `ĝ`.
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let j = &self.jac;
        let inv_det = 1.0 / self.det;
        [
            inv_det * (j[1][1] * g[0] - j[1][0] * g[1]),
            inv_det * (-j[0][1] * g[0] + j[0][0] * g[1]),
        ]
    }
}

/// Basis values and physical gradients at every point of a quadrature rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub weights: Vec<f64>,
    pub points: Vec<Point>,
    pub values: Vec<Vec<f64>>,
    pub grads: Vec<Vec<[f64; 2]>>,
}

impl Tabulation {
    pub fn new(geom: &TriangleGeometry, order: usize, rule: &QuadratureRule) -> Result<Self> {
        let mut t = Tabulation {
            weights: Vec::with_capacity(rule.weights.len()),
            points: Vec::with_capacity(rule.weights.len()),
            values: Vec::with_capacity(rule.weights.len()),
            grads: Vec::with_capacity(rule.weights.len()),
        };
        for (xi, w) in rule.points.iter().zip(&rule.weights) {
            let b = eval_basis(order, *xi)?;
            t.weights.push(w * 2.0 * geom.area());
            t.points.push(geom.map(*xi));
            t.values.push(b.values);
            t.grads.push(b.grads.iter().map(|g| geom.push_gradient(*g)).collect());
        }
        Ok(t)
    }

    pub fn n_basis(&self) -> usize {
        self.values[0].len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FormKind {
    /// `2μ (ε(u), ε(v))` on the vector displacement space.
    Elastic { mu: f64 },
    /// `-(ζ, div v)`: rows scalar P1, columns vector displacement.
    DivCoupling,
    /// `(φ, ψ)` on scalar P1.
    Mass,
    /// `(1/μ_f)(K ∇φ, ∇ψ)` on scalar P1.
    Diffusion { permeability: Tensor2, viscosity: f64 },
    /// `<υ, θ>` on an interface edge: rows multiplier, columns trace.
    Interface,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMatrix {
    pub kind: FormKind,
    pub entries: DMatrix<f64>,
}

impl LocalMatrix {
    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }
}

/// Element matrix of `kind` on one triangle. Vector dofs are
/// component-blocked (all x-components first).
pub fn local_form(kind: FormKind, geom: &TriangleGeometry, displacement_order: usize) -> Result<LocalMatrix> {
    let rule = quadrature_rule(4)?;
    match kind {
        FormKind::Elastic { mu } => {
            let tab = Tabulation::new(geom, displacement_order, &rule)?;
            Ok(LocalMatrix { kind, entries: elastic_matrix(&tab, mu) })
        }
        FormKind::DivCoupling => {
            let scal = Tabulation::new(geom, 1, &rule)?;
            let vec = Tabulation::new(geom, displacement_order, &rule)?;
            Ok(LocalMatrix { kind, entries: div_matrix(&scal, &vec) })
        }
        FormKind::Mass => {
            let tab = Tabulation::new(geom, 1, &rule)?;
            Ok(LocalMatrix { kind, entries: mass_matrix(&tab) })
        }
        FormKind::Diffusion { permeability, viscosity } => {
            let tab = Tabulation::new(geom, 1, &rule)?;
            Ok(LocalMatrix { kind, entries: diffusion_matrix(&tab, &permeability, viscosity) })
        }
        FormKind::Interface => Err(Error::InvalidParameter("interface form lives on edges; use local_interface".into())),
    }
}

pub(crate) fn elastic_matrix(tab: &Tabulation, mu: f64) -> DMatrix<f64> {
    let n = tab.n_basis();
    let mut k = DMatrix::zeros(2 * n, 2 * n);
    for (q, &w) in tab.weights.iter().enumerate() {
        let g = &tab.grads[q];
        for a in 0..n {
            for b in 0..n {
                let gg = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                for c in 0..2 {
                    for d in 0..2 {
                        // 2μ ε(N_a e_c) : ε(N_b e_d) = μ (δ_cd ∇N_a·∇N_b + ∂_d N_a ∂_c N_b)
                        let delta = if c == d { gg } else { 0.0 };
                        k[(c * n + a, d * n + b)] += w * mu * (delta + g[a][d] * g[b][c]);
                    }
                }
            }
        }
    }
    k
}

pub(crate) fn div_matrix(scal: &Tabulation, vec: &Tabulation) -> DMatrix<f64> {
    let (ns, nv) = (scal.n_basis(), vec.n_basis());
    let mut m = DMatrix::zeros(ns, 2 * nv);
    for (q, &w) in scal.weights.iter().enumerate() {
        for i in 0..ns {
            let psi = scal.values[q][i];
            for b in 0..nv {
                for c in 0..2 {
                    m[(i, c * nv + b)] -= w * psi * vec.grads[q][b][c];
                }
            }
        }
    }
    m
}

pub(crate) fn mass_matrix(tab: &Tabulation) -> DMatrix<f64> {
    let n = tab.n_basis();
    let mut m = DMatrix::zeros(n, n);
    for (q, &w) in tab.weights.iter().enumerate() {
        let v = &tab.values[q];
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += w * v[i] * v[j];
            }
        }
    }
    m
}

pub(crate) fn diffusion_matrix(tab: &Tabulation, k: &Tensor2, viscosity: f64) -> DMatrix<f64> {
    let n = tab.n_basis();
    let mut m = DMatrix::zeros(n, n);
    for (q, &w) in tab.weights.iter().enumerate() {
        let g = &tab.grads[q];
        for i in 0..n {
            let kg = [k[0][0] * g[i][0] + k[0][1] * g[i][1], k[1][0] * g[i][0] + k[1][1] * g[i][1]];
            for j in 0..n {
                m[(i, j)] += w / viscosity * (kg[0] * g[j][0] + kg[1] * g[j][1]);
            }
        }
    }
    m
}

/// `∫_e υ_i θ_j ds` for one scalar component on the edge `a → b`.
/// Rows: multiplier basis (endpoints), columns: trace basis (endpoints, then midpoint for P2).
pub fn local_interface(a: Point, b: Point, trace_order: usize, multiplier_order: usize) -> Result<LocalMatrix> {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    if len < 1e-14 {
        return Err(Error::DegenerateElement(len));
    }
    let nr = edge_basis(multiplier_order, 0.0)?.len();
    let nc = edge_basis(trace_order, 0.0)?.len();
    let mut m = DMatrix::zeros(nr, nc);
    for (s, w) in gauss_segment() {
        let r = edge_basis(multiplier_order, s)?;
        let c = edge_basis(trace_order, s)?;
        for i in 0..nr {
            for j in 0..nc {
                m[(i, j)] += w * len * r[i] * c[j];
            }
        }
    }
    Ok(LocalMatrix { kind: FormKind::Interface, entries: m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_triangle(rng: &mut ChaCha8Rng) -> TriangleGeometry {
        loop {
            let p: Vec<Point> = (0..3).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
            let mut v = [p[0], p[1], p[2]];
            let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
            if det.abs() < 0.1 {
                continue;
            }
            if det < 0.0 {
                v.swap(1, 2);
            }
            return TriangleGeometry::new(v).unwrap();
        }
    }

    #[test]
    fn lagrange_property() {
        for order in [1, 2] {
            let nodes = reference_nodes(order).unwrap();
            for (i, node) in nodes.iter().enumerate() {
                let b = eval_basis(order, *node).unwrap();
                for (j, v) in b.values.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((v - expect).abs() < 1e-14, "order {order} node {i} basis {j}: {v}");
                }
            }
        }
        assert_eq!(eval_basis(1, [0.0, 0.0]).unwrap().values, vec![1.0, 0.0, 0.0]);
        assert!(matches!(eval_basis(3, [0.2, 0.2]), Err(Error::UnsupportedOrder(3))));
    }

    #[test]
    fn partition_of_unity_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let s: f64 = rng.gen_range(0.0..1.0);
            let t: f64 = rng.gen_range(0.0..(1.0 - s));
            for order in [1, 2] {
                let b = eval_basis(order, [s, t]).unwrap();
                assert!((b.values.iter().sum::<f64>() - 1.0).abs() < 1e-13);
                let gs = b.grads.iter().fold([0.0, 0.0], |acc, g| [acc[0] + g[0], acc[1] + g[1]]);
                assert!(gs[0].abs() < 1e-13 && gs[1].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = [0.23, 0.31];
        let h = 1e-6;
        for order in [1, 2] {
            let b = eval_basis(order, x).unwrap();
            let bx = eval_basis(order, [x[0] + h, x[1]]).unwrap();
            let by = eval_basis(order, [x[0], x[1] + h]).unwrap();
            for i in 0..b.values.len() {
                assert!(((bx.values[i] - b.values[i]) / h - b.grads[i][0]).abs() < 1e-5);
                assert!(((by.values[i] - b.values[i]) / h - b.grads[i][1]).abs() < 1e-5);
            }
        }
    }

    /// ∫_ref x^a y^b = a! b! / (a + b + 2)!
    fn monomial_integral(a: u32, b: u32) -> f64 {
        let f = |n: u32| (1..=n).map(f64::from).product::<f64>();
        f(a) * f(b) / f(a + b + 2)
    }

    #[test]
    fn quadrature_exactness() {
        for degree in 1..=4 {
            let rule = quadrature_rule(degree).unwrap();
            assert!((rule.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    let q: f64 =
                        rule.points.iter().zip(&rule.weights).map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
                    assert!((q - monomial_integral(a, b)).abs() < 1e-13, "degree {degree}: x^{a} y^{b}");
                }
            }
        }
        let one = quadrature_rule(1).unwrap();
        assert_eq!(one.weights, vec![0.5]);
        let two = quadrature_rule(2).unwrap();
        assert!(two.weights.iter().all(|w| (w - 1.0 / 6.0).abs() < 1e-15));
        assert!(matches!(quadrature_rule(5), Err(Error::QuadratureDegree(5))));
    }

    #[test]
    fn p1_mass_matrix_is_analytic() {
        let g = TriangleGeometry::new([[0.1, 0.2], [0.9, 0.1], [0.3, 0.7]]).unwrap();
        let m = local_form(FormKind::Mass, &g, 1).unwrap().entries;
        let a = g.area();
        for i in 0..3 {
            for j in 0..3 {
                let expect = a / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert!((m[(i, j)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn div_coupling_annihilates_constants() {
        let g = TriangleGeometry::new([[0.0, 0.0], [1.0, 0.2], [0.3, 0.8]]).unwrap();
        for order in [1, 2] {
            let b = local_form(FormKind::DivCoupling, &g, order).unwrap().entries;
            let n = b.ncols() / 2;
            for c in 0..2 {
                let mut u = nalgebra::DVector::zeros(2 * n);
                for a in 0..n {
                    u[c * n + a] = 1.0;
                }
                assert!((&b * u).amax() < 1e-14);
            }
        }
    }

    #[test]
    fn elastic_kernel_is_rigid_motions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for order in [1, 2] {
            let nodes = reference_nodes(order).unwrap();
            for _ in 0..5 {
                let g = random_triangle(&mut rng);
                let k = local_form(FormKind::Elastic { mu: 3.0 }, &g, order).unwrap().entries;
                assert!((&k - k.transpose()).amax() < 1e-13);
                let n = nodes.len();
                let phys: Vec<Point> = nodes.iter().map(|x| g.map(*x)).collect();
                let rotation = nalgebra::DVector::from_fn(2 * n, |i, _| {
                    let p = phys[i % n];
                    if i < n {
                        -p[1]
                    } else {
                        p[0]
                    }
                });
                assert!((&k * rotation).amax() < 1e-12);
                let eig = SymmetricEigen::new(k.clone());
                let scale = eig.eigenvalues.amax();
                let zero = eig.eigenvalues.iter().filter(|&&l| l.abs() < 1e-12 * scale).count();
                assert_eq!(zero, 3, "order {order}: {:?}", eig.eigenvalues);
                assert!(eig.eigenvalues.iter().all(|&l| l > -1e-12 * scale));
            }
        }
    }

    #[test]
    fn diffusion_has_constant_kernel() {
        let g = TriangleGeometry::new([[0.0, 0.0], [0.5, 0.1], [0.2, 0.4]]).unwrap();
        let kind = FormKind::Diffusion { permeability: [[2.0, 0.3], [0.3, 1.0]], viscosity: 0.5 };
        let m = local_form(kind, &g, 1).unwrap().entries;
        assert!((&m - m.transpose()).amax() < 1e-14);
        for i in 0..3 {
            assert!(m.row(i).sum().abs() < 1e-13);
        }
    }

    #[test]
    fn degenerate_triangle_rejected() {
        assert!(matches!(
            TriangleGeometry::new([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]),
            Err(Error::DegenerateElement(_))
        ));
    }

    #[test]
    fn interface_edge_mass() {
        let l = 0.3;
        let m = local_interface([0.1, 0.5], [0.1 + l, 0.5], 1, 1).unwrap().entries;
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]) * (l / 6.0);
        assert!((&m - expect).amax() < 1e-15);
        assert!((m.sum() - l).abs() < 1e-15);
        let m2 = local_interface([0.0, 0.5], [2.0 * l, 0.5], 1, 1).unwrap().entries;
        assert!((m2 - m * 2.0).amax() < 1e-15);
        let p2 = local_interface([0.0, 0.0], [l, 0.0], 2, 1).unwrap().entries;
        assert!((p2.sum() - l).abs() < 1e-15);
        assert!(local_interface([0.0, 0.0], [0.0, 0.0], 1, 1).is_err());
    }
}
