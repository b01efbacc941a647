//! Checks that are known not to hold for this discretization. They are
//! ignored by default; run with `cargo test -- --ignored` to see them fail.

use porofeti::assembly::{assemble_rhs_step, Discretization};
use porofeti::feti::{feti_pcg, Execution, FetiOperator, PcgOptions, Variant};
use porofeti::model::{BarryMercerScenario, MaterialSpec};
use porofeti::timeloop::{project_initial, Simulation, SolverChoice, TimeGrid};
use porofeti::verify::{manufactured_errors, StudyConfig};
use porofeti::FeOrders;

fn within_ten(e: f64, r: f64) -> bool {
    e / r <= 10.0 && r / e <= 10.0
}

fn coarse_errors(k: usize) -> (f64, f64) {
    let cfg = StudyConfig { orders: FeOrders::new(k), ..StudyConfig::default() };
    let (_, e) = manufactured_errors(0.2, 8, &cfg).unwrap();
    (e.displacement, e.pressure)
}

#[test]
#[ignore = "true L2 errors at h = 1/8 are far above the reference magnitudes"]
fn p2_p1_errors_match_reference_magnitudes() {
    let (u, p) = coarse_errors(2);
    assert!(within_ten(u, 3.4464e-5), "u error {u:e}");
    assert!(within_ten(p, 8.3059e-5), "p error {p:e}");
}

#[test]
#[ignore = "true L2 errors at h = 1/8 are far above the reference magnitudes"]
fn p1_p1_errors_match_reference_magnitudes() {
    let (u, p) = coarse_errors(1);
    assert!(within_ten(u, 5.4843e-4), "u error {u:e}");
    assert!(within_ten(p, 1.9126e-3), "p error {p:e}");
}

#[test]
#[ignore = "conjugate gradients does not make the preconditioned residual monotone"]
fn preconditioned_residual_is_monotone() {
    let s = BarryMercerScenario::new(MaterialSpec::default().build().unwrap());
    let disc = Discretization::uniform(&s, 16, FeOrders::new(2)).unwrap();
    let grid = TimeGrid::new(0.01, 0.01).unwrap();
    let sim = Simulation::new(&disc, &s, grid, SolverChoice::default()).unwrap();
    let op = FetiOperator::new(&sim.system, Variant::Generalized, Execution::Serial).unwrap();
    let state = project_initial(&disc, &s);
    let step = assemble_rhs_step(&disc, &sim.blocks, &s, grid.time(1), &state.eta).unwrap();
    let rhs = sim.system.lift(&disc, &s, &step, grid.time(1));
    let b = op.rhs(&rhs).unwrap();
    let (_, rep) = feti_pcg(&op, &b, &vec![0.0; b.len()], &PcgOptions::default()).unwrap();
    for w in rep.history.windows(2) {
        assert!(w[1] <= w[0], "residual rose from {:e} to {:e}", w[0], w[1]);
    }
}
