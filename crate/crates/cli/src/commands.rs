//! The `solve`, `converge` and `barry-mercer` commands.

use std::path::{Path, PathBuf};

use porofeti::assembly::Discretization;
use porofeti::model::{BarryMercerScenario, ManufacturedScenario, MaterialSpec, Scenario};
use porofeti::timeloop::{project_initial, Simulation, StateSnapshot, StepReport, TimeGrid};
use porofeti::verify::{convergence_study, oscillation_check, pressure_peak, snapshot_errors, OscillationReport, StudyConfig};
use porofeti::FeOrders;

use crate::config::{ConfigError, RunConfig, ScenarioKind};
use crate::output::{snapshot_path, solver_csv, strided, timings_csv, UnionMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Converge,
    BarryMercer,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Converge => "converge",
            Command::BarryMercer => "barry-mercer",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{command}: {source}")]
    Solver {
        command: &'static str,
        #[source]
        source: porofeti::Error,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{failed} of {total} convergence runs failed; first: {first}")]
    Study { failed: usize, total: usize, first: String },
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver { .. } | CliError::Io { .. } | CliError::Study { .. } => 1,
            CliError::Check(_) => 3,
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.into(), source })
}

fn material(cfg: &RunConfig) -> Result<porofeti::model::ModelParams, CliError> {
    let base = MaterialSpec::default();
    MaterialSpec::uniform(cfg.young.unwrap_or(base.e_p), cfg.nu.unwrap_or(base.nu_p))
        .build()
        .map_err(|e| ConfigError::Model(e.to_string()).into())
}

/// Files written by a command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<Artifacts, CliError> {
    std::fs::create_dir_all(&cfg.out).map_err(|source| CliError::Io { path: cfg.out.clone(), source })?;
    match command {
        Command::Solve => {
            let params = material(cfg)?;
            match cfg.scenario {
                ScenarioKind::Manufactured => solve(cfg, &ManufacturedScenario::new(params), command).map(|(a, _)| a),
                ScenarioKind::BarryMercer => solve(cfg, &bm_scenario(cfg, params), command).map(|(a, _)| a),
            }
        }
        Command::BarryMercer => barry_mercer(cfg),
        Command::Converge => converge(cfg),
    }
}

fn bm_scenario(cfg: &RunConfig, params: porofeti::model::ModelParams) -> BarryMercerScenario {
    let s = BarryMercerScenario::new(params);
    let horizon = cfg.t_end.unwrap_or(s.horizon);
    s.with_horizon(horizon)
}

struct Run {
    artifacts: Artifacts,
    pressures: Vec<Vec<f64>>,
    last: StateSnapshot,
    disc: Discretization,
}

/// Marches the scenario, writing strided VTK files as it goes and the
/// solver logs at the end (also after a failed step).
fn solve(cfg: &RunConfig, scenario: &dyn Scenario, command: Command) -> Result<(Artifacts, Run), CliError> {
    let solver_err = |source| CliError::Solver { command: command.name(), source };
    let disc = Discretization::uniform(scenario, cfg.mesh, FeOrders::new(cfg.fe_order)).map_err(solver_err)?;
    let grid = TimeGrid::new(cfg.t_end.unwrap_or(scenario.time_horizon()), cfg.dt.unwrap_or(scenario.default_dt()))
        .map_err(|e| ConfigError::Model(e.to_string()))?;
    let choice = cfg.solver_choice();
    let sim = Simulation::new(&disc, scenario, grid, choice).map_err(solver_err)?;
    let union = UnionMesh::new(&disc);

    println!("{}: {} on {}x{} cells, P{}-P1, {} steps of {:e}, solver {}", command.name(), scenario.name(), cfg.mesh, cfg.mesh, cfg.fe_order, grid.steps, grid.tau, cfg.solver);
    let mut artifacts = Artifacts::default();
    let mut reports: Vec<StepReport> = Vec::with_capacity(grid.steps);
    let mut pressures = Vec::new();
    let mut state = project_initial(&disc, scenario);
    let mut failure = None;
    for _ in 0..grid.steps {
        match sim.advance(&state) {
            Ok((next, report)) => {
                println!("step {:>6}  t = {:.6e}  iterations {:>4}  residual {:.3e}", report.step, report.time, report.iterations, report.residual);
                if strided(next.step, cfg.stride, grid.steps) {
                    let path = snapshot_path(&cfg.out, next.step);
                    write(&path, &union.to_vtk(&disc, &next))?;
                    artifacts.files.push(path);
                }
                pressures.push(next.p.clone());
                reports.push(report);
                state = next;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let label = choice.to_string();
    for (name, text) in [("solver.csv", solver_csv(&label, &reports)), ("timings.csv", timings_csv(&reports))] {
        let path = cfg.out.join(name);
        write(&path, &text)?;
        artifacts.files.push(path);
    }
    if let Some(e) = failure {
        return Err(solver_err(e));
    }
    if let Some(exact) = scenario.exact() {
        let e = snapshot_errors(&disc, &state, exact).map_err(solver_err)?;
        println!("final L2 errors: u {:.4e}, p {:.4e}", e.displacement, e.pressure);
    }
    Ok((artifacts.clone(), Run { artifacts, pressures, last: state, disc }))
}

fn oscillation_text(rep: &OscillationReport, bound: f64, peak: Option<([f64; 2], f64)>) -> String {
    let mut s = format!(
        "passed = {}\nmin_pressure = {:e}\nmax_pressure = {:e}\nbound = {:e}\nworst_violation = {:e}\n",
        rep.passed, rep.min, rep.max, bound, rep.worst_violation
    );
    if let Some(k) = rep.worst_index {
        s.push_str(&format!("worst_step = {}\n", k + 1));
    }
    if let Some((x, v)) = peak {
        s.push_str(&format!("final_peak = {:e} at ({}, {})\n", v, x[0], x[1]));
    }
    s
}

fn barry_mercer(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let scenario = bm_scenario(cfg, material(cfg)?);
    let (_, run) = solve(cfg, &scenario, Command::BarryMercer)?;
    let mut artifacts = run.artifacts;
    let steps = run.pressures.len();
    let tau = cfg.dt.unwrap_or(scenario.default_dt());
    let horizon = scenario.horizon;
    let p2max = (1..=steps).map(|n| scenario.p2(0.5, (n as f64 * tau).min(horizon)).abs()).fold(0.0, f64::max);
    let bound = 0.05 * p2max;
    let rep = oscillation_check(run.pressures.iter().map(|p| &p[..]), p2max, bound);
    let text = oscillation_text(&rep, bound, pressure_peak(&run.disc, &run.last));
    print!("{text}");
    let path = cfg.out.join("oscillation.txt");
    write(&path, &text)?;
    artifacts.files.push(path);
    if rep.passed {
        Ok(artifacts)
    } else {
        Err(CliError::Check(format!("pressure left [{:e}, {:e}] (worst violation {:e})", -bound, p2max + bound, rep.worst_violation)))
    }
}

fn converge(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let young = cfg.young.unwrap_or(MaterialSpec::default().e_p);
    let study = StudyConfig {
        nus: cfg.nu.map(|nu| vec![nu]).unwrap_or_else(|| StudyConfig::default().nus),
        meshes: cfg.meshes.clone(),
        orders: FeOrders::new(cfg.fe_order),
        young,
        dt: cfg.dt.unwrap_or(StudyConfig::default().dt),
        horizon: cfg.t_end.unwrap_or(StudyConfig::default().horizon),
        solver: cfg.solver_choice(),
    };
    println!("converge: P{}-P1, meshes {:?}, nu {:?}, dt {:e}, T {:e}", cfg.fe_order, study.meshes, study.nus, study.dt, study.horizon);
    let table = convergence_study(&study);
    let csv = table.to_csv();
    print!("{csv}");
    let path = cfg.out.join("convergence.csv");
    write(&path, &csv)?;
    if let Some((nu, h, msg)) = table.failures.first() {
        return Err(CliError::Study { failed: table.failures.len(), total: table.rows.len(), first: format!("nu = {nu}, h = {h}: {msg}") });
    }
    Ok(Artifacts { files: vec![path] })
}
