//! VTK and CSV writers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use porofeti::assembly::Discretization;
use porofeti::timeloop::{StateSnapshot, StepReport};
use porofeti::Subdomain;

/// Union of the two subdomain meshes with the interface vertices merged.
#[derive(Debug, Clone)]
pub struct UnionMesh {
    pub points: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Union index of every elastic-mesh vertex.
    elastic_index: Vec<usize>,
}

impl UnionMesh {
    pub fn new(disc: &Discretization) -> Self {
        let poro = &disc.poro.mesh;
        let elastic = &disc.elastic.mesh;
        let n_poro = poro.vertices.len();
        let mut points = poro.vertices.clone();
        let mut elastic_index = vec![usize::MAX; elastic.vertices.len()];
        for &(a, b) in &disc.pairing.pairs {
            // pairs list displacement nodes; the first `nv` of those are vertices
            if a < n_poro && b < elastic.vertices.len() {
                elastic_index[b] = a;
            }
        }
        for (v, idx) in elastic_index.iter_mut().enumerate() {
            if *idx == usize::MAX {
                *idx = points.len();
                points.push(elastic.vertices[v]);
            }
        }
        let mut triangles = poro.triangles.clone();
        triangles.extend(elastic.triangles.iter().map(|t| t.map(|v| elastic_index[v])));
        Self { points, triangles, elastic_index }
    }

    /// Per-point displacement, pressure, elastic pressure and fluid content.
    /// Interface points take the poroelastic values; `p` and `η` are zero
    /// in the elastic subdomain.
    pub fn point_fields(&self, disc: &Discretization, state: &StateSnapshot) -> [Vec<f64>; 5] {
        let n = self.points.len();
        let (mut ux, mut uy, mut p, mut xi, mut eta) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for sub in [Subdomain::Elastic, Subdomain::Poro] {
            let space = disc.space(sub);
            let map = &space.displacement;
            let u = state.displacement(sub);
            let xs = state.elastic_pressure(sub);
            for v in 0..space.mesh.vertices.len() {
                let i = match sub {
                    Subdomain::Poro => v,
                    Subdomain::Elastic => self.elastic_index[v],
                };
                ux[i] = u[map.dof(v, 0)];
                uy[i] = u[map.dof(v, 1)];
                xi[i] = xs[v];
                if sub == Subdomain::Poro {
                    p[i] = state.p[v];
                    eta[i] = state.eta[v];
                }
            }
        }
        [ux, uy, p, xi, eta]
    }

    pub fn to_vtk(&self, disc: &Discretization, state: &StateSnapshot) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# vtk DataFile Version 3.0\nstep {} t = {:e}\nASCII\nDATASET UNSTRUCTURED_GRID", state.step, state.time);
        let _ = writeln!(s, "POINTS {} double", self.points.len());
        for p in &self.points {
            let _ = writeln!(s, "{:e} {:e} 0", p[0], p[1]);
        }
        let _ = writeln!(s, "CELLS {} {}", self.triangles.len(), 4 * self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "CELL_TYPES {}", self.triangles.len());
        for _ in &self.triangles {
            s.push_str("5\n");
        }
        let cell_sub: Vec<u8> = (0..self.triangles.len()).map(|k| u8::from(k >= disc.poro.mesh.triangles.len())).collect();
        let _ = writeln!(s, "CELL_DATA {}\nSCALARS subdomain int 1\nLOOKUP_TABLE default", cell_sub.len());
        for v in cell_sub {
            let _ = writeln!(s, "{v}");
        }
        let [ux, uy, p, xi, eta] = self.point_fields(disc, state);
        let _ = writeln!(s, "POINT_DATA {}\nVECTORS displacement double", self.points.len());
        for (x, y) in ux.iter().zip(&uy) {
            let _ = writeln!(s, "{x:e} {y:e} 0");
        }
        for (name, values) in [("pressure", &p), ("elastic_pressure", &xi), ("fluid_content", &eta)] {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in values {
                let _ = writeln!(s, "{v:e}");
            }
        }
        s
    }
}

pub fn write_file(path: &Path, contents: &str) -> std::io::Result<()> {
    std::fs::write(path, contents)
}

pub fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("step_{step:06}.vtk"))
}

/// Steps written under a stride: positive multiples of the stride and the final step.
pub fn strided(step: usize, stride: usize, last: usize) -> bool {
    step > 0 && (step % stride.max(1) == 0 || step == last)
}

/// Deterministic per-step solver log.
pub fn solver_csv(solver: &str, reports: &[StepReport]) -> String {
    let mut s = String::from("step,time,solver,iterations,residual\n");
    for r in reports {
        let _ = writeln!(s, "{},{:e},{solver},{},{:e}", r.step, r.time, r.iterations, r.residual);
    }
    s
}

/// Wall-clock subdomain solve times (not reproducible between runs).
pub fn timings_csv(reports: &[StepReport]) -> String {
    let mut s = String::from("step,poro_seconds,elastic_seconds\n");
    for r in reports {
        let _ = writeln!(s, "{},{:e},{:e}", r.step, r.solve_times[0].as_secs_f64(), r.solve_times[1].as_secs_f64());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_keeps_multiples_and_last_step() {
        let kept: Vec<usize> = (0..=25).filter(|&n| strided(n, 10, 25)).collect();
        assert_eq!(kept, [10, 20, 25]);
        assert_eq!((0..=3).filter(|&n| strided(n, 1, 3)).count(), 3);
    }

    #[test]
    fn snapshot_names_sort_by_step() {
        let a = snapshot_path(Path::new("o"), 9);
        let b = snapshot_path(Path::new("o"), 10);
        assert_eq!(a, Path::new("o/step_000009.vtk"));
        assert!(a < b);
    }
}
