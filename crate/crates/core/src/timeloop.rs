//! Backward Euler time stepping of the coupled problem.

use std::time::Duration;

use crate::assembly::{assemble_loads, assemble_rhs_step, BlockSystem, CoupledSystem, Discretization, SubdomainSpace};
use crate::error::{Error, Result};
use crate::feti::{feti_pcg, Execution, FetiOperator, MonolithicSolver, PcgOptions, StepSolution, Variant};
use crate::mesh::Subdomain;
use crate::model::Scenario;

/// Uniform grid `t_n = n τ`, `τ = T / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
    pub tau: f64,
}

impl TimeGrid {
    /// The step count is `T / dt` rounded to the nearest integer (at least one).
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("final time must be positive, got {horizon}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let steps = ((horizon / dt).round() as usize).max(1);
        Ok(Self { horizon, steps, tau: horizon / steps as f64 })
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.tau
        }
    }
}

/// Discrete fields at one time level. `lambda` is the full multiplier
/// vector (dropped multiplier dofs are zero).
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub step: usize,
    pub time: f64,
    pub u_p: Vec<f64>,
    pub xi_p: Vec<f64>,
    pub eta: Vec<f64>,
    pub p: Vec<f64>,
    pub u_e: Vec<f64>,
    pub xi_e: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl StateSnapshot {
    pub fn displacement(&self, sub: Subdomain) -> &[f64] {
        match sub {
            Subdomain::Poro => &self.u_p,
            Subdomain::Elastic => &self.u_e,
        }
    }

    pub fn elastic_pressure(&self, sub: Subdomain) -> &[f64] {
        match sub {
            Subdomain::Poro => &self.xi_p,
            Subdomain::Elastic => &self.xi_e,
        }
    }

    fn from_vectors(step: usize, time: f64, disc: &Discretization, poro: &[f64], elastic: &[f64], lambda: Vec<f64>) -> Self {
        let op = disc.poro.offsets();
        let oe = disc.elastic.offsets();
        let (eta0, p0) = (op.eta.expect("poro layout"), op.p.expect("poro layout"));
        Self {
            step,
            time,
            u_p: poro[op.u..op.xi].to_vec(),
            xi_p: poro[op.xi..eta0].to_vec(),
            eta: poro[eta0..p0].to_vec(),
            p: poro[p0..op.len].to_vec(),
            u_e: elastic[oe.u..oe.xi].to_vec(),
            xi_e: elastic[oe.xi..oe.len].to_vec(),
            lambda,
        }
    }

    pub fn poro_vector(&self) -> Vec<f64> {
        [&self.u_p[..], &self.xi_p, &self.eta, &self.p].concat()
    }

    pub fn elastic_vector(&self) -> Vec<f64> {
        [&self.u_e[..], &self.xi_e].concat()
    }
}

fn interpolate_displacement(space: &SubdomainSpace, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let map = &space.displacement;
    let mut u = vec![0.0; map.n_dofs()];
    for (n, &x) in map.node_coords.iter().enumerate() {
        let v = f(x);
        u[map.dof(n, 0)] = v[0];
        u[map.dof(n, 1)] = v[1];
    }
    u
}

/// Nodal interpolation of the initial data; `ξ₀`, `η₀` follow from
/// `p₀` and `div u₀` pointwise and the multiplier starts at zero.
pub fn project_initial(disc: &Discretization, scenario: &dyn Scenario) -> StateSnapshot {
    let params = scenario.params();
    let (lp, _) = params.lame(Subdomain::Poro);
    let (le, _) = params.lame(Subdomain::Elastic);
    let u_p = interpolate_displacement(&disc.poro, |x| scenario.initial_displacement(Subdomain::Poro, x));
    let u_e = interpolate_displacement(&disc.elastic, |x| scenario.initial_displacement(Subdomain::Elastic, x));
    let sp = &disc.poro.scalar.node_coords;
    let p: Vec<f64> = sp.iter().map(|&x| scenario.initial_pressure(x)).collect();
    let div_p: Vec<f64> = sp.iter().map(|&x| scenario.initial_divergence(Subdomain::Poro, x)).collect();
    let xi_p = p.iter().zip(&div_p).map(|(&p, &d)| params.alpha * p - lp * d).collect();
    let eta = p.iter().zip(&div_p).map(|(&p, &d)| params.c0 * p + params.alpha * d).collect();
    let xi_e = disc.elastic.scalar.node_coords.iter().map(|&x| -le * scenario.initial_divergence(Subdomain::Elastic, x)).collect();
    StateSnapshot { step: 0, time: 0.0, u_p, xi_p, eta, p, u_e, xi_e, lambda: vec![0.0; disc.multiplier.n_dofs()] }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverChoice {
    Feti { variant: Variant, execution: Execution, pcg: PcgOptions },
    Monolithic,
}

impl Default for SolverChoice {
    fn default() -> Self {
        SolverChoice::Feti { variant: Variant::default(), execution: Execution::default(), pcg: PcgOptions::default() }
    }
}

impl std::fmt::Display for SolverChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverChoice::Feti { variant, .. } => variant.fmt(f),
            SolverChoice::Monolithic => f.write_str("monolithic"),
        }
    }
}

/// Which snapshots a run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Retention {
    #[default]
    All,
    /// The last two time levels.
    LastTwo,
    /// Steps that are multiples of the stride, plus the final step.
    Stride(usize),
}

impl Retention {
    fn keeps(&self, step: usize, last: usize) -> bool {
        match *self {
            Retention::All => true,
            Retention::LastTwo => step + 1 >= last,
            Retention::Stride(k) => step == last || step % k.max(1) == 0,
        }
    }
}

/// Per-step solver statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Accumulated poroelastic and elastic subdomain wall time.
    pub solve_times: [Duration; 2],
}

enum Backend {
    Feti(FetiOperator, PcgOptions),
    Direct(MonolithicSolver),
}

/// Assembled and factorized step operator with its scenario.
pub struct Simulation<'a> {
    pub disc: &'a Discretization,
    pub scenario: &'a dyn Scenario,
    pub grid: TimeGrid,
    pub blocks: BlockSystem,
    pub system: CoupledSystem,
    backend: Backend,
}

impl std::fmt::Debug for Simulation<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation").field("scenario", &self.scenario.name()).field("grid", &self.grid).finish_non_exhaustive()
    }
}

impl<'a> Simulation<'a> {
    pub fn new(disc: &'a Discretization, scenario: &'a dyn Scenario, grid: TimeGrid, solver: SolverChoice) -> Result<Self> {
        let blocks = BlockSystem::assemble(disc, scenario.params(), grid.tau)?;
        let system = CoupledSystem::new(disc, &blocks, scenario)?;
        let backend = match solver {
            SolverChoice::Feti { variant, execution, pcg } => Backend::Feti(FetiOperator::new(&system, variant, execution)?, pcg),
            SolverChoice::Monolithic => Backend::Direct(MonolithicSolver::new(&system)?),
        };
        Ok(Self { disc, scenario, grid, blocks, system, backend })
    }

    /// Advances `prev` by one step, warm-starting PCG from its multiplier.
    pub fn advance(&self, prev: &StateSnapshot) -> Result<(StateSnapshot, StepReport)> {
        let n = prev.step + 1;
        self.advance_inner(prev, n).map_err(|e| Error::Step { step: n, source: Box::new(e) })
    }

    fn advance_inner(&self, prev: &StateSnapshot, n: usize) -> Result<(StateSnapshot, StepReport)> {
        let t = self.grid.time(n);
        let step = assemble_rhs_step(self.disc, &self.blocks, self.scenario, t, &prev.eta)?;
        let rhs = self.system.lift(self.disc, self.scenario, &step, t);
        let (sol, iterations, residual, solve_times) = match &self.backend {
            Backend::Direct(m) => (m.solve(&self.system, &rhs)?, 0, 0.0, [Duration::ZERO; 2]),
            Backend::Feti(op, opts) => {
                let b = op.rhs(&rhs)?;
                let init = if opts.warm_start { self.system.restrict_lambda(&prev.lambda) } else { vec![0.0; b.len()] };
                let (lambda, rep) = feti_pcg(op, &b, &init, opts)?;
                if !rep.converged {
                    return Err(Error::NotConverged { iterations: rep.iterations, residual: rep.final_residual, tol: opts.tol });
                }
                let (poro, elastic) = op.back_substitute(&lambda, &rhs)?;
                (StepSolution { poro, elastic, lambda }, rep.iterations, rep.final_residual, rep.solve_times)
            }
        };
        let lambda = self.system.expand_lambda(&sol.lambda);
        let state = StateSnapshot::from_vectors(n, t, self.disc, &sol.poro, &sol.elastic, lambda);
        Ok((state, StepReport { step: n, time: t, iterations, residual, solve_times }))
    }

    /// `R(ηⁿ − ηⁿ⁻¹) + τ A_f pⁿ − τ Z` on the pressure rows without a
    /// pressure constraint.
    pub fn mass_balance_residual(&self, prev: &StateSnapshot, next: &StateSnapshot) -> Result<Vec<f64>> {
        let (_, _, z) = assemble_loads(self.disc, self.scenario, next.time)?;
        let b = &self.blocks.poro;
        let af = b.af.as_ref().ok_or_else(|| Error::MissingData("flow matrix".into()))?;
        let d_eta: Vec<f64> = next.eta.iter().zip(&prev.eta).map(|(a, b)| a - b).collect();
        let mut r = b.r.mul_vec(&d_eta);
        let ap = af.mul_vec(&next.p);
        let p0 = self.disc.poro.offsets().p.expect("poro layout");
        let constrained: std::collections::HashSet<usize> = self.system.poro.pattern.dofs.iter().copied().collect();
        for i in 0..r.len() {
            r[i] += self.grid.tau * (ap[i] - z[i]);
        }
        Ok((0..r.len()).filter(|i| !constrained.contains(&(p0 + i))).map(|i| r[i]).collect())
    }
}

/// Snapshots kept under the retention policy and one report per step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub snapshots: Vec<StateSnapshot>,
    pub reports: Vec<StepReport>,
}

impl SimulationResult {
    pub fn last(&self) -> Result<&StateSnapshot> {
        self.snapshots.last().ok_or(Error::EmptySnapshots)
    }
}

/// Runs all steps from the projected initial state.
pub fn run_simulation(
    disc: &Discretization,
    scenario: &dyn Scenario,
    grid: TimeGrid,
    solver: SolverChoice,
    retention: Retention,
) -> Result<SimulationResult> {
    let sim = Simulation::new(disc, scenario, grid, solver)?;
    let mut state = project_initial(disc, scenario);
    let mut snapshots = Vec::new();
    if retention.keeps(0, grid.steps) {
        snapshots.push(state.clone());
    }
    let mut reports = Vec::with_capacity(grid.steps);
    for _ in 0..grid.steps {
        let (next, report) = sim.advance(&state)?;
        reports.push(report);
        if retention.keeps(next.step, grid.steps) {
            snapshots.push(next.clone());
        }
        state = next;
    }
    if retention == Retention::LastTwo {
        let k = snapshots.len().saturating_sub(2);
        snapshots.drain(..k);
    }
    Ok(SimulationResult { snapshots, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::FeOrders;
    use crate::model::{BarryMercerScenario, ManufacturedScenario, MaterialSpec};
    use crate::sparse::norm_inf;

    fn bm(amplitude: f64) -> BarryMercerScenario {
        BarryMercerScenario::new(MaterialSpec::default().build().unwrap()).with_amplitude(amplitude)
    }

    #[test]
    fn grid_rounds_step_count() {
        let g = TimeGrid::new(1.0, 0.3).unwrap();
        assert_eq!(g.steps, 3);
        assert!((g.tau - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.time(3), 1.0);
        assert_eq!(TimeGrid::new(1e-3, 1.0).unwrap().steps, 1);
        assert!(TimeGrid::new(1.0, 0.0).is_err());
        assert!(TimeGrid::new(-1.0, 0.1).is_err());
    }

    #[test]
    fn retention_policies() {
        let s = bm(1.0).with_horizon(0.05);
        let disc = Discretization::uniform(&s, 2, FeOrders::new(1)).unwrap();
        let grid = TimeGrid::new(0.05, 0.01).unwrap();
        let steps = |r| {
            run_simulation(&disc, &s, grid, SolverChoice::default(), r).unwrap().snapshots.iter().map(|s| s.step).collect::<Vec<_>>()
        };
        assert_eq!(steps(Retention::All), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(steps(Retention::LastTwo), vec![4, 5]);
        assert_eq!(steps(Retention::Stride(2)), vec![0, 2, 4, 5]);
    }

    #[test]
    fn zero_data_stays_zero() {
        let s = bm(0.0).with_horizon(0.03);
        let disc = Discretization::uniform(&s, 4, FeOrders::new(1)).unwrap();
        let res = run_simulation(&disc, &s, TimeGrid::new(0.03, 0.01).unwrap(), SolverChoice::default(), Retention::All).unwrap();
        for st in &res.snapshots {
            let all = [st.poro_vector(), st.elastic_vector(), st.lambda.clone()].concat();
            assert!(norm_inf(&all) < 1e-14);
        }
        assert!(res.reports.iter().all(|r| r.iterations == 0));
    }

    #[test]
    fn discrete_mass_balance_holds() {
        let s = bm(1.0);
        let disc = Discretization::uniform(&s, 4, FeOrders::new(2)).unwrap();
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let sim = Simulation::new(&disc, &s, grid, SolverChoice::default()).unwrap();
        let mut prev = project_initial(&disc, &s);
        for _ in 0..3 {
            let (next, _) = sim.advance(&prev).unwrap();
            let r = sim.mass_balance_residual(&prev, &next).unwrap();
            let scale = norm_inf(&sim.blocks.poro.r.mul_vec(&next.eta)).max(1e-300);
            assert!(norm_inf(&r) < 1e-7 * scale, "{} vs {scale}", norm_inf(&r));
            prev = next;
        }
    }

    #[test]
    fn solvers_agree_over_several_steps() {
        let s = bm(1.0).with_horizon(0.3);
        let disc = Discretization::uniform(&s, 4, FeOrders::new(1)).unwrap();
        let grid = TimeGrid::new(0.3, 0.1).unwrap();
        let run = |c| run_simulation(&disc, &s, grid, c, Retention::LastTwo).unwrap();
        let mono = run(SolverChoice::Monolithic);
        let last = mono.last().unwrap();
        for variant in [Variant::Generalized, Variant::Schur] {
            let feti = run(SolverChoice::Feti { variant, execution: Execution::Serial, pcg: PcgOptions { tol: 1e-11, ..PcgOptions::default() } });
            let f = feti.last().unwrap();
            let d: Vec<f64> = f.p.iter().zip(&last.p).map(|(a, b)| a - b).collect();
            assert!(norm_inf(&d) < 1e-7 * norm_inf(&last.p), "{variant}");
        }
    }

    #[test]
    fn step_errors_carry_the_step_index() {
        let s = bm(1.0);
        let disc = Discretization::uniform(&s, 4, FeOrders::new(1)).unwrap();
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let solver = SolverChoice::Feti {
            variant: Variant::Generalized,
            execution: Execution::Serial,
            pcg: PcgOptions { tol: 1e-12, max_iter: 1, ..PcgOptions::default() },
        };
        match run_simulation(&disc, &s, grid, solver, Retention::All) {
            Err(Error::Step { step: 1, source }) => assert!(matches!(*source, Error::NotConverged { .. })),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn manufactured_initial_state_is_consistent() {
        let s = ManufacturedScenario::new(MaterialSpec::uniform(1e4, 0.2).build().unwrap());
        let disc = Discretization::uniform(&s, 4, FeOrders::new(1)).unwrap();
        let st = project_initial(&disc, &s);
        let params = s.params();
        for i in 0..st.p.len() {
            let div = params.from_reformulated(st.xi_p[i], st.eta[i]).1;
            let x = disc.poro.scalar.node_coords[i];
            assert!((div - s.initial_divergence(Subdomain::Poro, x)).abs() < 1e-9);
        }
    }
}
