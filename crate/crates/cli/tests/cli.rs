use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use porofeti::assembly::Discretization;
use porofeti::model::{ManufacturedScenario, MaterialSpec};
use porofeti::FeOrders;
use porofeti_cli::output::UnionMesh;

fn porofeti(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_porofeti")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["solve", "--out", out];
    args.extend_from_slice(extra);
    porofeti(&args)
}

fn vtk_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with(".vtk"))
        .collect();
    v.sort();
    v
}

#[test]
fn smallest_grid_solves_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = run_in(dir.path(), &["--mesh", "2", "--fe-order", "1", "--dt", "0.01", "--T", "0.01"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(start.elapsed() < Duration::from_secs(5));
    assert_eq!(vtk_files(dir.path()), ["step_000001.vtk"]);
}

#[test]
fn vtk_points_are_the_union_vertices() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--mesh", "4", "--dt", "0.01", "--T", "0.01"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("step_000001.vtk")).unwrap();
    let line = text.lines().find(|l| l.starts_with("POINTS")).unwrap();
    let count: usize = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    // two 4x2 vertex grids of 5x3 points sharing the 5 interface vertices
    assert_eq!(count, 25);

    let s = ManufacturedScenario::new(MaterialSpec::default().build().unwrap());
    let disc = Discretization::uniform(&s, 4, FeOrders::new(2)).unwrap();
    let union = UnionMesh::new(&disc);
    assert_eq!(union.points.len(), count);
    assert!(text.contains(&format!("CELLS {} ", union.triangles.len())));
    for name in ["pressure", "elastic_pressure", "fluid_content"] {
        assert!(text.contains(&format!("SCALARS {name} double 1")), "{name}");
    }
}

#[test]
fn stride_selects_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--mesh", "2", "--fe-order", "1", "--dt", "0.001", "--T", "0.1", "--stride", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files = vtk_files(dir.path());
    assert_eq!(files.len(), 10);
    assert_eq!(files[0], "step_000010.vtk");
    assert_eq!(files[9], "step_000100.vtk");
}

#[test]
fn solver_log_is_deterministic() {
    let args = ["--mesh", "4", "--dt", "0.01", "--T", "0.03", "--solver", "feti-schur"];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(run_in(a.path(), &args).status.success());
    assert!(run_in(b.path(), &args).status.success());
    let csv = std::fs::read_to_string(a.path().join("solver.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(b.path().join("solver.csv")).unwrap());
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,time,solver,iterations,residual"));
    assert_eq!(lines.count(), 3);
    assert!(csv.contains(",feti-schur,"));
    let timings = std::fs::read_to_string(a.path().join("timings.csv")).unwrap();
    assert!(timings.starts_with("step,poro_seconds,elastic_seconds\n"));
}

#[test]
fn vtk_output_is_deterministic() {
    let args = ["--mesh", "4", "--dt", "0.01", "--T", "0.01"];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(run_in(a.path(), &args).status.success());
    assert!(run_in(b.path(), &args).status.success());
    let read = |d: &Path| std::fs::read(d.join("step_000001.vtk")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn unsupported_order_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--fe-order", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fe-order"));
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    std::fs::write(&file, "mesh = 4\nmesh_size = 8\n").unwrap();
    let out = porofeti(&["solve", "--config", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mesh_size"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    let out_dir = dir.path().join("out");
    std::fs::write(&file, format!("mesh = 3\nfe-order = 1\ndt = 0.01\nT = 0.02\nout = {}\n", out_dir.display())).unwrap();
    let out = porofeti(&["solve", "--config", file.to_str().unwrap(), "--mesh", "2", "--T", "0.01"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo = String::from_utf8_lossy(&out.stderr);
    assert!(echo.contains("mesh = 2\n"), "{echo}");
    assert!(echo.contains("fe-order = 1\n"), "{echo}");
    assert_eq!(vtk_files(&out_dir), ["step_000001.vtk"]);
}

#[test]
fn barry_mercer_writes_oscillation_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = porofeti(&["barry-mercer", "--out", dir.path().to_str().unwrap(), "--mesh", "4", "--dt", "0.01", "--T", "0.05", "--stride", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("oscillation.txt")).unwrap();
    assert!(report.starts_with("passed = true\n"), "{report}");
    assert_eq!(vtk_files(dir.path()), ["step_000005.vtk"]);
}

#[test]
fn converge_writes_error_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = porofeti(&["converge", "--out", dir.path().to_str().unwrap(), "--meshes", "2,4", "--fe-order", "1", "--nu", "0.3", "--T", "0.002"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "nu,h,err_u,order_u,err_p,order_p");
    assert_eq!(lines.len(), 3);
    let fields: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(fields[0].parse::<f64>().unwrap(), 0.3);
    assert_eq!(fields[1].parse::<f64>().unwrap(), 0.25);
    assert!(fields[3].parse::<f64>().unwrap() > 0.5, "{}", lines[2]);
}
