//! FETI solution of the coupled step system: subdomain factorizations,
//! the interface operators `K_A` (generalized) and `K_S` (Schur), their
//! preconditioners, PCG on the multiplier, back-substitution, and a
//! monolithic direct solve used as an oracle.
//!
//! With `G_P = H_P`, `G_E = −H_E` (constrained columns removed) the step
//! system reads `K_d x_d + G_dᵀ λ = f_d`, `Σ G_d x_d = d`, so
//! `(Σ G_d K_d⁻¹ G_dᵀ) λ = Σ G_d K_d⁻¹ f_d − d`.
//!
//! In the Schur variant each subdomain is split into `B`, the free
//! displacement dofs on the interface, and `I`, everything else. Then
//! `S = K_BB − K_BI K_II⁻¹ K_IB`, the interface operator is `Σ G_B S⁻¹ G_Bᵀ`
//! and the reduced load is `F̃_B = f_B − K_BI K_II⁻¹ f_I`.

use std::time::{Duration, Instant};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::assembly::{ConstrainedSubdomain, CoupledRhs, CoupledSystem};
use crate::error::{Error, Result};
use crate::mesh::Subdomain;
use crate::sparse::{axpy, dot, norm2, CsrMatrix};

/// Sparse LU factorization of a symmetrically equilibrated matrix, with a
/// singularity probe.
pub struct DirectSolver {
    n: usize,
    /// `D` in `D K D y = D b`, `x = D y`.
    scale: Vec<f64>,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for DirectSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirectSolver").field("n", &self.n).finish_non_exhaustive()
    }
}

impl DirectSolver {
    /// Factors `m`; `Err(detail)` if the factorization fails or a probe
    /// solve `m x = m v` leaves a large residual or does not recover `v`.
    pub fn new(m: &CsrMatrix) -> std::result::Result<Self, String> {
        if m.nrows() != m.ncols() {
            return Err(format!("matrix is {}×{}", m.nrows(), m.ncols()));
        }
        let n = m.nrows();
        let scale: Vec<f64> = (0..n)
            .map(|i| {
                let r = m.row(i).1.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if r > 0.0 { 1.0 / r.sqrt() } else { 1.0 }
            })
            .collect();
        let mut t = crate::sparse::TripletBuilder::with_capacity(n, n, m.nnz());
        for (i, j, v) in m.iter() {
            t.push(i, j, scale[i] * v * scale[j]);
        }
        let lu = t.build().to_faer().sp_lu().map_err(|e| format!("LU failed: {e:?}"))?;
        let solver = Self { n, scale, lu };
        if n == 0 {
            return Ok(solver);
        }
        let v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_749_895).fract()).collect();
        let b = m.mul_vec(&v);
        let x = solver.solve(&b);
        if x.iter().any(|x| !x.is_finite()) {
            return Err("zero pivot (non-finite probe solution)".into());
        }
        let mut r = m.mul_vec(&x);
        axpy(-1.0, &b, &mut r);
        let res = norm2(&r) / norm2(&b).max(f64::MIN_POSITIVE);
        let err = x.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / norm2(&v);
        if res > 1e-8 || err > 1e-2 {
            return Err(format!("probe solve residual {res:e}, error {err:e}; the matrix is numerically singular"));
        }
        Ok(solver)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut col = faer::Col::<f64>::from_fn(self.n, |i| self.scale[i] * b[i]);
        self.lu.solve_in_place(col.as_mat_mut());
        (0..self.n).map(|i| self.scale[i] * col[i]).collect()
    }
}

/// Factorization of one constrained subdomain saddle operator.
#[derive(Debug)]
pub struct SubdomainFactorization {
    pub subdomain: Subdomain,
    solver: DirectSolver,
}

impl SubdomainFactorization {
    pub fn new(subdomain: Subdomain, matrix: &CsrMatrix) -> Result<Self> {
        let solver = DirectSolver::new(matrix).map_err(|detail| Error::SingularSubproblem { subdomain, detail })?;
        Ok(Self { subdomain, solver })
    }

    pub fn dim(&self) -> usize {
        self.solver.dim()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solver.solve(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Interior/interface split with Dirichlet (Schur complement) preconditioner.
    Schur,
    /// Whole-subdomain solves with the stiffness-block preconditioner.
    #[default]
    Generalized,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Schur => "feti-schur",
            Variant::Generalized => "feti-generalized",
        })
    }
}

/// How the two independent subdomain solves of an application are run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Concurrent,
}

struct SchurBlocks {
    interior: Vec<usize>,
    k_ii: SubdomainFactorization,
    k_ib: CsrMatrix,
    k_bi: CsrMatrix,
    k_bb: CsrMatrix,
    s_chol: Cholesky<f64, Dyn>,
}

struct Side {
    subdomain: Subdomain,
    n: usize,
    /// Signed coupling on the full subdomain vector.
    g: CsrMatrix,
    /// Free interface displacement dofs.
    boundary: Vec<usize>,
    /// `G` restricted to the boundary columns.
    g_b: CsrMatrix,
    /// Stiffness block on the boundary dofs.
    k_bb: CsrMatrix,
    full: Option<SubdomainFactorization>,
    schur: Option<SchurBlocks>,
}

impl Side {
    fn new(sub: &ConstrainedSubdomain, variant: Variant) -> Result<Self> {
        let n = sub.len();
        let mut used = vec![false; n];
        for (_, j, v) in sub.coupling.iter() {
            if v != 0.0 {
                used[j] = true;
            }
        }
        let boundary: Vec<usize> = (0..n).filter(|&j| used[j]).collect();
        let rows: Vec<usize> = (0..sub.coupling.nrows()).collect();
        let g_b = sub.coupling.submatrix(&rows, &boundary);
        let k_bb = sub.matrix.submatrix(&boundary, &boundary);
        let (full, schur) = match variant {
            Variant::Generalized => (Some(SubdomainFactorization::new(sub.subdomain, &sub.matrix)?), None),
            Variant::Schur => {
                let interior: Vec<usize> = (0..n).filter(|&j| !used[j]).collect();
                let k_ii = SubdomainFactorization::new(sub.subdomain, &sub.matrix.submatrix(&interior, &interior))?;
                let k_ib = sub.matrix.submatrix(&interior, &boundary);
                let k_bi = sub.matrix.submatrix(&boundary, &interior);
                let nb = boundary.len();
                let mut s = k_bb.to_dense();
                let mut e = vec![0.0; nb];
                for j in 0..nb {
                    e.iter_mut().for_each(|v| *v = 0.0);
                    e[j] = 1.0;
                    let y = k_ii.solve(&k_ib.mul_vec(&e));
                    let col = k_bi.mul_vec(&y);
                    for i in 0..nb {
                        s[(i, j)] -= col[i];
                    }
                }
                let s = (&s + s.transpose()) * 0.5;
                let s_chol = Cholesky::new(s).ok_or_else(|| Error::SingularSubproblem {
                    subdomain: sub.subdomain,
                    detail: "interface Schur complement is not positive definite".into(),
                })?;
                (None, Some(SchurBlocks { interior, k_ii, k_ib, k_bi, k_bb: k_bb.clone(), s_chol }))
            }
        };
        Ok(Self { subdomain: sub.subdomain, n, g: sub.coupling.clone(), boundary, g_b, k_bb, full, schur })
    }

    fn s_inv(&self, s: &SchurBlocks, v: &[f64]) -> Vec<f64> {
        s.s_chol.solve(&DVector::from_column_slice(v)).as_slice().to_vec()
    }

    /// `G K⁻¹ Gᵀ λ`.
    fn apply(&self, lambda: &[f64]) -> Vec<f64> {
        match (&self.full, &self.schur) {
            (Some(f), _) => self.g.mul_vec(&f.solve(&self.g.tr_mul_vec(lambda))),
            (_, Some(s)) => self.g_b.mul_vec(&self.s_inv(s, &self.g_b.tr_mul_vec(lambda))),
            _ => unreachable!("side without factorization"),
        }
    }

    /// Local preconditioner term `G_B A_BB G_Bᵀ r` or `G_B S G_Bᵀ r`.
    fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let y = self.g_b.tr_mul_vec(r);
        let sy = match &self.schur {
            None => self.k_bb.mul_vec(&y),
            Some(s) => {
                let mut v = s.k_bb.mul_vec(&y);
                let w = s.k_bi.mul_vec(&s.k_ii.solve(&s.k_ib.mul_vec(&y)));
                axpy(-1.0, &w, &mut v);
                v
            }
        };
        self.g_b.mul_vec(&sy)
    }

    /// `G K⁻¹ f`.
    fn reduced_rhs(&self, f: &[f64]) -> Vec<f64> {
        match (&self.full, &self.schur) {
            (Some(fa), _) => self.g.mul_vec(&fa.solve(f)),
            (_, Some(s)) => self.g_b.mul_vec(&self.s_inv(s, &self.condensed(s, f))),
            _ => unreachable!("side without factorization"),
        }
    }

    /// `F̃_B = f_B − K_BI K_II⁻¹ f_I`.
    fn condensed(&self, s: &SchurBlocks, f: &[f64]) -> Vec<f64> {
        let f_i: Vec<f64> = s.interior.iter().map(|&i| f[i]).collect();
        let mut fb: Vec<f64> = self.boundary.iter().map(|&i| f[i]).collect();
        axpy(-1.0, &s.k_bi.mul_vec(&s.k_ii.solve(&f_i)), &mut fb);
        fb
    }

    /// `x = K⁻¹ (f − Gᵀ λ)`.
    fn back_substitute(&self, f: &[f64], lambda: &[f64]) -> Vec<f64> {
        match (&self.full, &self.schur) {
            (Some(fa), _) => {
                let mut rhs = f.to_vec();
                axpy(-1.0, &self.g.tr_mul_vec(lambda), &mut rhs);
                fa.solve(&rhs)
            }
            (_, Some(s)) => {
                let mut fb = self.condensed(s, f);
                axpy(-1.0, &self.g_b.tr_mul_vec(lambda), &mut fb);
                let u_b = self.s_inv(s, &fb);
                let mut f_i: Vec<f64> = s.interior.iter().map(|&i| f[i]).collect();
                axpy(-1.0, &s.k_ib.mul_vec(&u_b), &mut f_i);
                let x_i = s.k_ii.solve(&f_i);
                let mut x = vec![0.0; self.n];
                for (&i, v) in s.interior.iter().zip(x_i) {
                    x[i] = v;
                }
                for (&i, &v) in self.boundary.iter().zip(&u_b) {
                    x[i] = v;
                }
                x
            }
            _ => unreachable!("side without factorization"),
        }
    }
}

/// Interface operator of one variant, built from factorized subdomain systems.
pub struct FetiOperator {
    pub variant: Variant,
    pub execution: Execution,
    n_lambda: usize,
    sides: [Side; 2],
}

impl std::fmt::Debug for FetiOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FetiOperator")
            .field("variant", &self.variant)
            .field("execution", &self.execution)
            .field("n_lambda", &self.n_lambda)
            .finish_non_exhaustive()
    }
}

impl FetiOperator {
    pub fn new(system: &CoupledSystem, variant: Variant, execution: Execution) -> Result<Self> {
        let (p, e) = match execution {
            Execution::Serial => (Side::new(&system.poro, variant), Side::new(&system.elastic, variant)),
            Execution::Concurrent => {
                rayon::join(|| Side::new(&system.poro, variant), || Side::new(&system.elastic, variant))
            }
        };
        Ok(Self { variant, execution, n_lambda: system.n_lambda(), sides: [p?, e?] })
    }

    pub fn n_lambda(&self) -> usize {
        self.n_lambda
    }

    /// Runs `f` on both sides and reports each side's wall time.
    fn both<T: Send>(&self, f: impl Fn(&Side) -> T + Sync) -> [(T, Duration); 2] {
        let timed = |s: &Side| {
            let t0 = Instant::now();
            let out = f(s);
            (out, t0.elapsed())
        };
        match self.execution {
            Execution::Serial => [timed(&self.sides[0]), timed(&self.sides[1])],
            Execution::Concurrent => {
                let (a, b) = rayon::join(|| timed(&self.sides[0]), || timed(&self.sides[1]));
                [a, b]
            }
        }
    }

    fn sum_sides(&self, parts: [(Vec<f64>, Duration); 2], times: &mut [Duration; 2]) -> Vec<f64> {
        let [(mut a, ta), (b, tb)] = parts;
        times[0] += ta;
        times[1] += tb;
        axpy(1.0, &b, &mut a);
        a
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_lambda {
            return Err(Error::DimensionMismatch { context: "multiplier vector", expected: self.n_lambda, found: v.len() });
        }
        Ok(())
    }

    pub fn apply(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        self.apply_timed(lambda, &mut [Duration::ZERO; 2])
    }

    pub fn apply_timed(&self, lambda: &[f64], times: &mut [Duration; 2]) -> Result<Vec<f64>> {
        self.check_len(lambda)?;
        Ok(self.sum_sides(self.both(|s| s.apply(lambda)), times))
    }

    pub fn precondition(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.precondition_timed(r, &mut [Duration::ZERO; 2])
    }

    pub fn precondition_timed(&self, r: &[f64], times: &mut [Duration; 2]) -> Result<Vec<f64>> {
        self.check_len(r)?;
        Ok(self.sum_sides(self.both(|s| s.precondition(r)), times))
    }

    /// `F = Σ G_d K_d⁻¹ f_d − d` (with the condensed load in the Schur variant).
    pub fn rhs(&self, rhs: &CoupledRhs) -> Result<Vec<f64>> {
        self.check_len(&rhs.interface)?;
        let fs = [&rhs.poro, &rhs.elastic];
        for (s, f) in self.sides.iter().zip(fs) {
            if f.len() != s.n {
                return Err(Error::DimensionMismatch { context: "subdomain load", expected: s.n, found: f.len() });
            }
        }
        let parts = self.both(|s| s.reduced_rhs(fs[(s.subdomain == Subdomain::Elastic) as usize]));
        let mut out = self.sum_sides(parts, &mut [Duration::ZERO; 2]);
        axpy(-1.0, &rhs.interface, &mut out);
        Ok(out)
    }

    /// Subdomain fields `(x_P, x_E)` for a given multiplier.
    pub fn back_substitute(&self, lambda: &[f64], rhs: &CoupledRhs) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(lambda)?;
        let fs = [&rhs.poro, &rhs.elastic];
        let [(xp, _), (xe, _)] = self.both(|s| s.back_substitute(fs[(s.subdomain == Subdomain::Elastic) as usize], lambda));
        Ok((xp, xe))
    }

    fn dense_of(&self, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<DMatrix<f64>> {
        let n = self.n_lambda;
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = f(&e)?;
            e[j] = 0.0;
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        Ok(m)
    }

    /// Column-by-column materialization of the interface operator.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        self.dense_of(|e| self.apply(e))
    }

    pub fn preconditioner_to_dense(&self) -> Result<DMatrix<f64>> {
        self.dense_of(|e| self.precondition(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// `false` runs plain CG (identity preconditioner).
    pub preconditioned: bool,
    /// Start each time step from the previous multiplier instead of zero.
    pub warm_start: bool,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, preconditioned: true, warm_start: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgReport {
    pub iterations: usize,
    pub converged: bool,
    /// `sqrt(rᵀ M⁻¹ r)` relative to `sqrt(bᵀ M⁻¹ b)`.
    pub final_residual: f64,
    pub history: Vec<f64>,
    /// Accumulated wall time of the poroelastic and elastic subdomain work.
    pub solve_times: [Duration; 2],
}

/// Preconditioned conjugate gradients on `K λ = b` from `λ_init`.
///
/// Breakdown (`⟨p, Kp⟩ ≤ 1e-14 ‖p‖²`) is an error; running out of
/// iterations is reported through `converged = false`.
pub fn feti_pcg(op: &FetiOperator, b: &[f64], init: &[f64], opts: &PcgOptions) -> Result<(Vec<f64>, PcgReport)> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("PCG tolerance must be positive, got {}", opts.tol)));
    }
    op.check_len(b)?;
    op.check_len(init)?;
    let mut times = [Duration::ZERO; 2];
    let precondition = |r: &[f64], times: &mut [Duration; 2]| -> Result<Vec<f64>> {
        if opts.preconditioned {
            op.precondition_timed(r, times)
        } else {
            Ok(r.to_vec())
        }
    };

    let mut x = init.to_vec();
    let mut r = b.to_vec();
    if x.iter().any(|&v| v != 0.0) {
        axpy(-1.0, &op.apply_timed(&x, &mut times)?, &mut r);
    }
    let mut z = precondition(&r, &mut times)?;
    let mut rz = dot(&r, &z);
    let b_norm = {
        let mb = precondition(b, &mut times)?;
        let v = dot(b, &mb).max(0.0).sqrt();
        if v > 0.0 {
            v
        } else {
            rz.max(0.0).sqrt()
        }
    };
    let rel = |rz: f64| if b_norm > 0.0 { rz.max(0.0).sqrt() / b_norm } else { 0.0 };
    let mut res = rel(rz);
    let mut history = vec![res];
    let mut p = z.clone();
    let mut k = 0;
    while res > opts.tol && k < opts.max_iter {
        let q = op.apply_timed(&p, &mut times)?;
        let pq = dot(&p, &q);
        if pq <= 1e-14 * dot(&p, &p) {
            return Err(Error::Indefinite { iteration: k, curvature: pq });
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        z = precondition(&r, &mut times)?;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        k += 1;
        res = rel(rz);
        history.push(res);
    }
    let report = PcgReport { iterations: k, converged: res <= opts.tol, final_residual: res, history, solve_times: times };
    Ok((x, report))
}

/// Solution of one step: subdomain vectors and the active multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSolution {
    pub poro: Vec<f64>,
    pub elastic: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Direct solve of the constrained monolithic system.
pub fn monolithic_solve(system: &CoupledSystem, rhs: &CoupledRhs) -> Result<StepSolution> {
    MonolithicSolver::new(system)?.solve(system, rhs)
}

/// Reusable factorization of the monolithic matrix.
#[derive(Debug)]
pub struct MonolithicSolver {
    solver: DirectSolver,
}

impl MonolithicSolver {
    pub fn new(system: &CoupledSystem) -> Result<Self> {
        let m = system.monolithic_matrix();
        Ok(Self { solver: DirectSolver::new(&m).map_err(Error::SingularSystem)? })
    }

    pub fn solve(&self, system: &CoupledSystem, rhs: &CoupledRhs) -> Result<StepSolution> {
        let b = system.monolithic_rhs(rhs);
        if b.len() != self.solver.dim() {
            return Err(Error::DimensionMismatch { context: "monolithic right-hand side", expected: self.solver.dim(), found: b.len() });
        }
        let x = self.solver.solve(&b);
        let (np, ne) = (system.poro.len(), system.elastic.len());
        Ok(StepSolution { poro: x[..np].to_vec(), elastic: x[np..np + ne].to_vec(), lambda: x[np + ne..].to_vec() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_rhs_step, BlockSystem, Discretization};
    use crate::mesh::FeOrders;
    use crate::model::{BarryMercerScenario, ManufacturedScenario, MaterialSpec, Scenario};
    use nalgebra::SymmetricEigen;

    struct Setup {
        disc: Discretization,
        system: CoupledSystem,
        rhs: CoupledRhs,
    }

    fn setup(s: &dyn Scenario, n: usize, k: usize, tau: f64) -> Setup {
        let disc = Discretization::uniform(s, n, FeOrders::new(k)).unwrap();
        let blocks = BlockSystem::assemble(&disc, s.params(), tau).unwrap();
        let system = CoupledSystem::new(&disc, &blocks, s).unwrap();
        let eta0 = vec![0.0; disc.poro.n_s()];
        let step = assemble_rhs_step(&disc, &blocks, s, tau, &eta0).unwrap();
        let rhs = system.lift(&disc, s, &step, tau);
        Setup { disc, system, rhs }
    }

    fn mms(nu: f64) -> ManufacturedScenario {
        ManufacturedScenario::new(MaterialSpec::uniform(1e4, nu).build().unwrap())
    }

    fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        norm2(&d) / norm2(b).max(1e-300)
    }

    #[test]
    fn factorization_round_trip_and_singularity() {
        let s = mms(0.2);
        let st = setup(&s, 2, 1, 1e-3);
        let f = SubdomainFactorization::new(Subdomain::Elastic, &st.system.elastic.matrix).unwrap();
        let b: Vec<f64> = (0..f.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = f.solve(&b);
        let r: Vec<f64> = st.system.elastic.matrix.mul_vec(&x).iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!(norm2(&r) / norm2(&b) < 1e-10);

        // elasticity without any displacement constraint: rigid motions
        let blocks = BlockSystem::assemble(&st.disc, s.params(), 1e-3).unwrap();
        let a = &blocks.elastic.a;
        assert!(matches!(
            SubdomainFactorization::new(Subdomain::Elastic, a),
            Err(Error::SingularSubproblem { subdomain: Subdomain::Elastic, .. })
        ));
    }

    #[test]
    fn operator_is_linear_and_symmetric() {
        let s = mms(0.2);
        let st = setup(&s, 4, 2, 1e-3);
        for variant in [Variant::Generalized, Variant::Schur] {
            let op = FetiOperator::new(&st.system, variant, Execution::Serial).unwrap();
            let n = op.n_lambda();
            assert!(op.apply(&vec![0.0; n]).unwrap().iter().all(|&v| v == 0.0));
            assert!(op.precondition(&vec![0.0; n]).unwrap().iter().all(|&v| v == 0.0));
            let x: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).sin()).collect();
            let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
            let (kx, ky) = (op.apply(&x).unwrap(), op.apply(&y).unwrap());
            let scale = norm2(&kx) * norm2(&y);
            assert!((dot(&kx, &y) - dot(&x, &ky)).abs() < 1e-10 * scale);
            assert!(dot(&kx, &x) > 0.0);
        }
    }

    #[test]
    fn variants_share_the_operator() {
        let s = mms(0.2);
        let st = setup(&s, 4, 1, 1e-3);
        let a = FetiOperator::new(&st.system, Variant::Generalized, Execution::Serial).unwrap().to_dense().unwrap();
        let b = FetiOperator::new(&st.system, Variant::Schur, Execution::Serial).unwrap().to_dense().unwrap();
        assert!((&a - &b).amax() < 1e-9 * a.amax());
    }

    fn dense_schur_oracle(system: &CoupledSystem) -> DMatrix<f64> {
        let n = system.n_lambda();
        let mut out = DMatrix::zeros(n, n);
        for sub in [&system.poro, &system.elastic] {
            let k = sub.matrix.to_dense();
            let g = sub.coupling.to_dense();
            let kinv_gt = k.lu().solve(&g.transpose()).unwrap();
            out += &g * kinv_gt;
        }
        out
    }

    #[test]
    fn operator_matches_dense_oracle_and_is_spd() {
        for s in [mms(0.2), mms(0.2).with_traction_sides(true)] {
            for k in [1, 2] {
                let st = setup(&s, 2, k, 1e-3);
                let oracle = dense_schur_oracle(&st.system);
                for variant in [Variant::Generalized, Variant::Schur] {
                    let op = FetiOperator::new(&st.system, variant, Execution::Serial).unwrap();
                    let m = op.to_dense().unwrap();
                    assert!((&m - &oracle).amax() < 1e-9 * oracle.amax(), "{variant} P{k}");
                    let eig = SymmetricEigen::new((&m + m.transpose()) * 0.5);
                    assert!(eig.eigenvalues.min() > 0.0, "{variant} P{k}: {:?}", eig.eigenvalues);
                }
            }
        }
    }

    #[test]
    fn schur_preconditioner_is_spd() {
        let s = mms(0.2);
        let st = setup(&s, 2, 2, 1e-3);
        let op = FetiOperator::new(&st.system, Variant::Schur, Execution::Serial).unwrap();
        let m = op.preconditioner_to_dense().unwrap();
        assert!((&m - m.transpose()).amax() < 1e-9 * m.amax());
        assert!(SymmetricEigen::new(m).eigenvalues.min() > 0.0);
    }

    #[test]
    fn converges_with_and_without_preconditioner() {
        let s = mms(0.2);
        for n in [4, 8, 16] {
        let st = setup(&s, n, 1, 1e-3);
        for variant in [Variant::Generalized, Variant::Schur] {
            let op = FetiOperator::new(&st.system, variant, Execution::Serial).unwrap();
            let f = op.rhs(&st.rhs).unwrap();
            let z = vec![0.0; op.n_lambda()];
            let (_, pre) = feti_pcg(&op, &f, &z, &PcgOptions::default()).unwrap();
            let (_, plain) = feti_pcg(&op, &f, &z, &PcgOptions { preconditioned: false, ..PcgOptions::default() }).unwrap();
            eprintln!("n={n} {variant}: pcg {} cg {}", pre.iterations, plain.iterations);
            assert!(pre.converged && plain.converged);
        }
        }
    }

    #[test]
    fn generalized_preconditioner_is_spd() {
        let s = mms(0.2);
        let st = setup(&s, 2, 1, 1e-3);
        let op = FetiOperator::new(&st.system, Variant::Generalized, Execution::Serial).unwrap();
        let m = op.preconditioner_to_dense().unwrap();
        assert!((&m - m.transpose()).amax() < 1e-12 * m.amax());
        let eig = SymmetricEigen::new(m);
        assert!(eig.eigenvalues.iter().all(|&l| l > 0.0), "{:?}", eig.eigenvalues);
    }

    #[test]
    fn zero_problem_converges_immediately() {
        let s = mms(0.2);
        let st = setup(&s, 2, 1, 1e-3);
        let op = FetiOperator::new(&st.system, Variant::Generalized, Execution::Serial).unwrap();
        let n = op.n_lambda();
        let (x, rep) = feti_pcg(&op, &vec![0.0; n], &vec![0.0; n], &PcgOptions::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
        assert!(x.iter().all(|&v| v == 0.0));
        assert!(feti_pcg(&op, &vec![0.0; n], &vec![0.0; n], &PcgOptions { tol: 0.0, ..PcgOptions::default() }).is_err());
    }

    #[test]
    fn feti_matches_monolithic_oracle() {
        let s = mms(0.2);
        for k in [1, 2] {
            let st = setup(&s, 4, k, 1e-3);
            let mono = monolithic_solve(&st.system, &st.rhs).unwrap();
            let m = st.system.monolithic_matrix();
            let x: Vec<f64> = mono.poro.iter().chain(&mono.elastic).chain(&mono.lambda).copied().collect();
            let b = st.system.monolithic_rhs(&st.rhs);
            let r: Vec<f64> = m.mul_vec(&x).iter().zip(&b).map(|(a, b)| a - b).collect();
            assert!(norm2(&r) / norm2(&b) < 1e-10);
            for variant in [Variant::Generalized, Variant::Schur] {
                let op = FetiOperator::new(&st.system, variant, Execution::Concurrent).unwrap();
                let f = op.rhs(&st.rhs).unwrap();
                let (lambda, rep) = feti_pcg(&op, &f, &vec![0.0; op.n_lambda()], &PcgOptions::default()).unwrap();
                assert!(rep.converged);
                assert!(rel_diff(&lambda, &mono.lambda) < 1e-7, "{variant} λ: {}", rel_diff(&lambda, &mono.lambda));
                let (xp, xe) = op.back_substitute(&lambda, &st.rhs).unwrap();
                assert!(rel_diff(&xp, &mono.poro) < 1e-7);
                assert!(rel_diff(&xe, &mono.elastic) < 1e-7);
                // oracle multiplier reproduces the oracle fields
                let (op_p, op_e) = op.back_substitute(&mono.lambda, &st.rhs).unwrap();
                assert!(rel_diff(&op_p, &mono.poro) < 1e-9);
                assert!(rel_diff(&op_e, &mono.elastic) < 1e-9);
            }
        }
    }

    #[test]
    fn serial_and_concurrent_are_bitwise_equal() {
        let s = mms(0.2);
        let st = setup(&s, 4, 2, 1e-3);
        let run = |e| {
            let op = FetiOperator::new(&st.system, Variant::Generalized, e).unwrap();
            let f = op.rhs(&st.rhs).unwrap();
            let (l, rep) = feti_pcg(&op, &f, &vec![0.0; op.n_lambda()], &PcgOptions::default()).unwrap();
            let x = op.back_substitute(&l, &st.rhs).unwrap();
            (l, rep.history, x)
        };
        assert_eq!(run(Execution::Serial), run(Execution::Concurrent));
    }

    #[test]
    fn zero_multiplier_and_zero_load_give_zero_fields() {
        let s = BarryMercerScenario::new(MaterialSpec::default().build().unwrap()).with_amplitude(0.0);
        let st = setup(&s, 4, 1, 1e-2);
        let op = FetiOperator::new(&st.system, Variant::Schur, Execution::Serial).unwrap();
        let (xp, xe) = op.back_substitute(&vec![0.0; op.n_lambda()], &st.rhs).unwrap();
        assert!(xp.iter().chain(&xe).all(|&v| v == 0.0));
    }
}
