use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use porofeti::assembly::{assemble_rhs_step, BlockSystem, Discretization};
use porofeti::feti::{feti_pcg, Execution, FetiOperator, PcgOptions, SubdomainFactorization, Variant};
use porofeti::model::{BarryMercerScenario, MaterialSpec, Scenario};
use porofeti::timeloop::{project_initial, Simulation, SolverChoice, TimeGrid};
use porofeti::{FeOrders, Subdomain};

fn scenario() -> BarryMercerScenario {
    BarryMercerScenario::new(MaterialSpec::default().build().unwrap())
}

fn assembly(c: &mut Criterion) {
    let s = scenario();
    let mut g = c.benchmark_group("assembly");
    for n in [8, 16] {
        let disc = Discretization::uniform(&s, n, FeOrders::new(2)).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &disc, |b, disc| {
            b.iter(|| BlockSystem::assemble(disc, s.params(), 1e-2).unwrap())
        });
    }
    g.finish();
}

fn factorization(c: &mut Criterion) {
    let s = scenario();
    let mut g = c.benchmark_group("subdomain_factorization");
    g.sample_size(10);
    for n in [8, 16] {
        let disc = Discretization::uniform(&s, n, FeOrders::new(2)).unwrap();
        let sim = Simulation::new(&disc, &s, TimeGrid::new(1e-2, 1e-2).unwrap(), SolverChoice::Monolithic).unwrap();
        let k = sim.system.subdomain(Subdomain::Poro).matrix.clone();
        g.bench_with_input(BenchmarkId::from_parameter(n), &k, |b, k| b.iter(|| SubdomainFactorization::new(Subdomain::Poro, k).unwrap()));
    }
    g.finish();
}

fn feti(c: &mut Criterion) {
    let s = scenario();
    let disc = Discretization::uniform(&s, 16, FeOrders::new(2)).unwrap();
    let grid = TimeGrid::new(1e-2, 1e-2).unwrap();
    let sim = Simulation::new(&disc, &s, grid, SolverChoice::default()).unwrap();
    let state = project_initial(&disc, &s);
    let step = assemble_rhs_step(&disc, &sim.blocks, &s, grid.time(1), &state.eta).unwrap();
    let rhs = sim.system.lift(&disc, &s, &step, grid.time(1));

    let mut g = c.benchmark_group("feti");
    g.sample_size(10);
    for variant in [Variant::Generalized, Variant::Schur] {
        for execution in [Execution::Serial, Execution::Concurrent] {
            let op = FetiOperator::new(&sim.system, variant, execution).unwrap();
            let b = op.rhs(&rhs).unwrap();
            let x = vec![1.0; b.len()];
            let label = format!("{variant}/{execution:?}");
            g.bench_function(BenchmarkId::new("apply", &label), |bench| bench.iter(|| op.apply(&x)));
            g.bench_function(BenchmarkId::new("pcg", &label), |bench| {
                bench.iter(|| feti_pcg(&op, &b, &vec![0.0; b.len()], &PcgOptions::default()).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, assembly, factorization, feti);
criterion_main!(benches);
