//! Error norms against exact solutions, convergence orders, the locking
//! sweep and the pressure oscillation check.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::assembly::Discretization;
use crate::elements::{quadrature_rule, Tabulation, TriangleGeometry};
use crate::error::{Error, Result};
use crate::mesh::{DofMap, FeOrders, Mesh, Point, Subdomain};
use crate::model::{ExactSolution, ManufacturedScenario, MaterialSpec, Scenario};
use crate::timeloop::{run_simulation, Retention, SolverChoice, StateSnapshot, TimeGrid};

/// `‖f_h − f‖_{L²}` by the degree-4 rule on every triangle. For scalar
/// fields only the first entry of `exact` is used.
pub fn l2_error(mesh: &Mesh, dofs: &DofMap, field: &[f64], exact: impl Fn(Point) -> [f64; 2]) -> Result<f64> {
    if field.len() != dofs.n_dofs() {
        return Err(Error::DimensionMismatch { context: "field for error norm", expected: dofs.n_dofs(), found: field.len() });
    }
    let rule = quadrature_rule(4)?;
    let mut sum = 0.0;
    for tri in 0..mesh.triangles.len() {
        let geom = TriangleGeometry::new(mesh.triangle_points(tri))?;
        let tab = Tabulation::new(&geom, dofs.order, &rule)?;
        let nodes = &dofs.cell_nodes[tri];
        for q in 0..tab.weights.len() {
            let ex = exact(tab.points[q]);
            for c in 0..dofs.components {
                let uh: f64 = nodes.iter().zip(&tab.values[q]).map(|(&n, &phi)| field[dofs.dof(n, c)] * phi).sum();
                sum += tab.weights[q] * (uh - ex[c]).powi(2);
            }
        }
    }
    Ok(sum.sqrt())
}

/// Displacement error over both subdomains and pressure error over `Ω^P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldErrors {
    pub displacement: f64,
    pub pressure: f64,
}

pub fn snapshot_errors(disc: &Discretization, state: &StateSnapshot, exact: &dyn ExactSolution) -> Result<FieldErrors> {
    let mut u2 = 0.0;
    for sub in [Subdomain::Poro, Subdomain::Elastic] {
        let space = disc.space(sub);
        let e = l2_error(&space.mesh, &space.displacement, state.displacement(sub), |x| exact.displacement(sub, x, state.time))?;
        u2 += e * e;
    }
    let sp = &disc.poro;
    let p = l2_error(&sp.mesh, &sp.scalar, &state.p, |x| [exact.pressure(x, state.time), 0.0])?;
    Ok(FieldErrors { displacement: u2.sqrt(), pressure: p })
}

/// Maximum of the per-snapshot errors (discrete `L∞(L²)`).
pub fn linf_l2_error(disc: &Discretization, snapshots: &[StateSnapshot], exact: &dyn ExactSolution) -> Result<FieldErrors> {
    if snapshots.is_empty() {
        return Err(Error::EmptySnapshots);
    }
    let mut out = FieldErrors { displacement: 0.0, pressure: 0.0 };
    for s in snapshots {
        let e = snapshot_errors(disc, s, exact)?;
        out.displacement = out.displacement.max(e.displacement);
        out.pressure = out.pressure.max(e.pressure);
    }
    Ok(out)
}

/// `log(e_c/e_f) / log(h_c/h_f)`.
pub fn convergence_order(err_coarse: f64, err_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (err_coarse / err_fine).ln() / (h_coarse / h_fine).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub nu: f64,
    pub h: f64,
    /// `None` when the run failed.
    pub err_u: Option<f64>,
    pub order_u: Option<f64>,
    pub err_p: Option<f64>,
    pub order_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    /// `(ν, h, message)` of failed runs.
    pub failures: Vec<(f64, f64, String)>,
}

pub const CSV_HEADER: &str = "nu,h,err_u,order_u,err_p,order_p";

impl ErrorTable {
    /// Builds rows from raw errors, with orders between consecutive rows of equal `ν`.
    pub fn from_errors(raw: Vec<(f64, f64, Option<FieldErrors>)>) -> Self {
        let mut rows: Vec<ErrorRow> = Vec::with_capacity(raw.len());
        for (nu, h, e) in raw {
            let prev = rows.last().filter(|r| r.nu == nu);
            let order = |coarse: Option<f64>, fine: Option<f64>| match (prev, coarse, fine) {
                (Some(p), Some(c), Some(f)) => Some(convergence_order(c, f, p.h, h)),
                _ => None,
            };
            let (eu, ep) = (e.map(|e| e.displacement), e.map(|e| e.pressure));
            rows.push(ErrorRow {
                nu,
                h,
                err_u: eu,
                order_u: order(prev.and_then(|p| p.err_u), eu),
                err_p: ep,
                order_p: order(prev.and_then(|p| p.err_p), ep),
            });
        }
        Self { rows, failures: Vec::new() }
    }

    pub fn rows_for(&self, nu: f64) -> impl Iterator<Item = &ErrorRow> {
        self.rows.iter().filter(move |r| r.nu == nu)
    }

    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|v| format!("{v:.6e}")).unwrap_or_default();
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.6e},{},{},{},{}", r.nu, r.h, cell(r.err_u), cell(r.order_u), cell(r.err_p), cell(r.order_p));
        }
        s
    }
}

/// Parameters of a manufactured-solution convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub nus: Vec<f64>,
    /// Cells per unit length.
    pub meshes: Vec<usize>,
    pub orders: FeOrders,
    pub young: f64,
    pub dt: f64,
    pub horizon: f64,
    pub solver: SolverChoice,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            nus: vec![0.2, 0.49, 0.499, 0.4999],
            meshes: vec![8, 16, 24, 32],
            orders: FeOrders::new(2),
            young: 1e4,
            dt: 1e-4,
            horizon: 1e-2,
            solver: SolverChoice::default(),
        }
    }
}

/// Errors of one manufactured run, maximized over the computed steps.
pub fn manufactured_errors(nu: f64, n: usize, cfg: &StudyConfig) -> Result<(f64, FieldErrors)> {
    let params = MaterialSpec::uniform(cfg.young, nu).build()?;
    let scenario = ManufacturedScenario::new(params);
    let disc = Discretization::uniform(&scenario, n, cfg.orders)?;
    let grid = TimeGrid::new(cfg.horizon, cfg.dt)?;
    let res = run_simulation(&disc, &scenario, grid, cfg.solver, Retention::All)?;
    let exact = scenario.exact().expect("manufactured scenario has an exact solution");
    Ok((disc.h(), linf_l2_error(&disc, &res.snapshots[1..], exact)?))
}

/// Runs every `(ν, n)` pair (concurrently) and tabulates errors and orders.
/// Failed runs leave empty cells and are listed in `failures`.
pub fn convergence_study(cfg: &StudyConfig) -> ErrorTable {
    let pairs: Vec<(f64, usize)> = cfg.nus.iter().flat_map(|&nu| cfg.meshes.iter().map(move |&n| (nu, n))).collect();
    let results: Vec<_> = pairs.par_iter().map(|&(nu, n)| manufactured_errors(nu, n, cfg)).collect();
    let mut failures = Vec::new();
    let raw = pairs
        .iter()
        .zip(results)
        .map(|(&(nu, n), r)| match r {
            Ok((h, e)) => (nu, h, Some(e)),
            Err(e) => {
                let h = 1.0 / n as f64;
                failures.push((nu, h, e.to_string()));
                (nu, h, None)
            }
        })
        .collect();
    let mut table = ErrorTable::from_errors(raw);
    table.failures = failures;
    table
}

/// `max / min` of the pressure errors in the table (infinite if any is missing).
pub fn pressure_error_spread(table: &ErrorTable) -> f64 {
    let errs: Vec<f64> = table.rows.iter().map(|r| r.err_p.unwrap_or(f64::NAN)).collect();
    if errs.is_empty() || errs.iter().any(|e| !e.is_finite() || *e <= 0.0) {
        return f64::INFINITY;
    }
    let max = errs.iter().cloned().fold(f64::MIN, f64::max);
    let min = errs.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationReport {
    pub passed: bool,
    pub min: f64,
    pub max: f64,
    /// Largest distance outside `[−δ, max_boundary + δ]` (zero when passing).
    pub worst_violation: f64,
    /// Index (in the history) of the worst violation.
    pub worst_index: Option<usize>,
}

/// Checks that every nodal pressure stays within `[−bound, max_boundary + bound]`.
pub fn oscillation_check<'a>(history: impl IntoIterator<Item = &'a [f64]>, max_boundary: f64, bound: f64) -> OscillationReport {
    let (lo, hi) = (-bound, max_boundary + bound);
    let mut rep = OscillationReport { passed: true, min: f64::INFINITY, max: f64::NEG_INFINITY, worst_violation: 0.0, worst_index: None };
    for (k, p) in history.into_iter().enumerate() {
        for &v in p {
            rep.min = rep.min.min(v);
            rep.max = rep.max.max(v);
            let viol = (lo - v).max(v - hi).max(if v.is_nan() { f64::INFINITY } else { 0.0 });
            if viol > rep.worst_violation {
                rep.worst_violation = viol;
                rep.worst_index = Some(k);
                rep.passed = false;
            }
        }
    }
    rep
}

/// Location and value of the largest nodal pressure.
pub fn pressure_peak(disc: &Discretization, state: &StateSnapshot) -> Option<(Point, f64)> {
    let coords = &disc.poro.scalar.node_coords;
    state.p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, &v)| (coords[i], v))
}
