//! Global assembly: subdomain block matrices, interface coupling, Dirichlet
//! elimination and the per-step load vectors of the coupled system.
//!
//! Each subdomain vector is stored field-blocked: `(u, ξ, η, p)` on the
//! poroelastic side and `(u, ξ)` on the elastic side. The subdomain saddle
//! operator in that ordering reads
//!
//! ```text
//! poro:    [ A    Bᵀ      0     0    ]      elastic: [ A   Bᵀ      ]
//!          [ B   −κ3R    κ1R    0    ]               [ B  −R/λ_E   ]
//!          [ 0    κ1R    κ2R   −R    ]
//!          [ 0     0     −R   −τA_f  ]
//! ```
//!
//! and the monolithic system appends the multiplier with `+H_Pᵀ` / `−H_Eᵀ`
//! in the displacement rows and `H_P u_P − H_E u_E = 0` as its own row.

use std::fmt::Write as _;
use std::path::Path;

use crate::elements::{
    diffusion_matrix, div_matrix, edge_basis, elastic_matrix, gauss_segment, local_interface, mass_matrix,
    quadrature_rule, Tabulation, TriangleGeometry,
};
use crate::error::{Error, Result};
use crate::mesh::{
    build_dof_maps, build_subdomain_mesh, layout_rule, multiplier_dof_map, pair_interface, tag_boundary_facets,
    DofMap, FacetTag, FeOrders, InterfacePairing, Mesh, Point, Subdomain,
};
use crate::model::{DisplacementBc, ModelParams, PressureBc, Scenario};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Mesh and finite element spaces of one subdomain.
#[derive(Debug, Clone)]
pub struct SubdomainSpace {
    pub mesh: Mesh,
    pub displacement: DofMap,
    /// The P1 space shared by `ξ` (and `η`, `p` on the poroelastic side).
    pub scalar: DofMap,
}

/// Offsets of the field blocks inside a subdomain vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldOffsets {
    pub u: usize,
    pub xi: usize,
    pub eta: Option<usize>,
    pub p: Option<usize>,
    pub len: usize,
}

impl SubdomainSpace {
    pub fn subdomain(&self) -> Subdomain {
        self.mesh.subdomain
    }

    pub fn n_u(&self) -> usize {
        self.displacement.n_dofs()
    }

    pub fn n_s(&self) -> usize {
        self.scalar.n_dofs()
    }

    pub fn offsets(&self) -> FieldOffsets {
        let (nu, ns) = (self.n_u(), self.n_s());
        match self.subdomain() {
            Subdomain::Poro => {
                FieldOffsets { u: 0, xi: nu, eta: Some(nu + ns), p: Some(nu + 2 * ns), len: nu + 3 * ns }
            }
            Subdomain::Elastic => FieldOffsets { u: 0, xi: nu, eta: None, p: None, len: nu + ns },
        }
    }
}

/// Both subdomains, the multiplier space and the interface pairing.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub poro: SubdomainSpace,
    pub elastic: SubdomainSpace,
    pub multiplier: DofMap,
    pub pairing: InterfacePairing,
    pub orders: FeOrders,
}

impl Discretization {
    /// `nx` cells across, `ny` cells vertically in each subdomain.
    pub fn new(scenario: &dyn Scenario, nx: usize, ny_poro: usize, ny_elastic: usize, orders: FeOrders) -> Result<Self> {
        let rule = layout_rule(scenario.interface_height());
        let space = |sub: Subdomain, ny: usize| -> Result<SubdomainSpace> {
            let mesh = tag_boundary_facets(build_subdomain_mesh(sub, scenario.domain(sub), nx, ny)?, &rule)?;
            let mut maps = build_dof_maps(&mesh, orders)?;
            maps.truncate(2);
            let scalar = maps.pop().expect("scalar map");
            let displacement = maps.pop().expect("displacement map");
            Ok(SubdomainSpace { mesh, displacement, scalar })
        };
        let poro = space(Subdomain::Poro, ny_poro)?;
        let elastic = space(Subdomain::Elastic, ny_elastic)?;
        let pairing = pair_interface(&poro.mesh, &elastic.mesh, &poro.displacement, &elastic.displacement)?;
        let multiplier = multiplier_dof_map(&poro.mesh)?;
        Ok(Self { poro, elastic, multiplier, pairing, orders })
    }

    /// `n` cells per unit length in both directions.
    pub fn uniform(scenario: &dyn Scenario, n: usize, orders: FeOrders) -> Result<Self> {
        let cells = |sub: Subdomain| {
            let r = scenario.domain(sub);
            ((n as f64 * (r.y1 - r.y0)).round() as usize).max(1)
        };
        Self::new(scenario, n, cells(Subdomain::Poro), cells(Subdomain::Elastic), orders)
    }

    pub fn space(&self, sub: Subdomain) -> &SubdomainSpace {
        match sub {
            Subdomain::Poro => &self.poro,
            Subdomain::Elastic => &self.elastic,
        }
    }

    pub fn h(&self) -> f64 {
        self.poro.mesh.h().max(self.elastic.mesh.h())
    }
}

/// Sparse blocks of one subdomain, before boundary conditions.
#[derive(Debug, Clone)]
pub struct SubdomainBlocks {
    pub subdomain: Subdomain,
    /// `2μ (ε(u), ε(v))`.
    pub a: CsrMatrix,
    /// `−(ζ, div v)`, scalar rows × displacement columns.
    pub b: CsrMatrix,
    /// Scalar mass matrix.
    pub r: CsrMatrix,
    /// `(1/μ_f)(K∇p, ∇q)`, poroelastic side only.
    pub af: Option<CsrMatrix>,
}

fn scatter(builder: &mut TripletBuilder, rows: &[usize], cols: &[usize], local: &nalgebra::DMatrix<f64>) {
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            let v = local[(i, j)];
            if v != 0.0 {
                builder.push(r, c, v);
            }
        }
    }
}

pub fn assemble_subdomain_blocks(space: &SubdomainSpace, params: &ModelParams) -> Result<SubdomainBlocks> {
    let sub = space.subdomain();
    let (_, mu) = params.lame(sub);
    let (nu, ns) = (space.n_u(), space.n_s());
    let nt = space.mesh.triangles.len();
    let ku = 2 * space.displacement.cell_nodes[0].len();
    let mut a = TripletBuilder::with_capacity(nu, nu, nt * ku * ku);
    let mut b = TripletBuilder::with_capacity(ns, nu, nt * 3 * ku);
    let mut r = TripletBuilder::with_capacity(ns, ns, nt * 9);
    let mut af = TripletBuilder::with_capacity(ns, ns, nt * 9);
    let rule = quadrature_rule(4)?;
    for t in 0..nt {
        let geom = TriangleGeometry::new(space.mesh.triangle_points(t))?;
        let vec_tab = Tabulation::new(&geom, space.displacement.order, &rule)?;
        let sc_tab = Tabulation::new(&geom, 1, &rule)?;
        let udofs = space.displacement.cell_dofs(t);
        let sdofs = space.scalar.cell_dofs(t);
        scatter(&mut a, &udofs, &udofs, &elastic_matrix(&vec_tab, mu));
        scatter(&mut b, &sdofs, &udofs, &div_matrix(&sc_tab, &vec_tab));
        scatter(&mut r, &sdofs, &sdofs, &mass_matrix(&sc_tab));
        if sub == Subdomain::Poro {
            scatter(&mut af, &sdofs, &sdofs, &diffusion_matrix(&sc_tab, &params.permeability, params.mu_f));
        }
    }
    Ok(SubdomainBlocks {
        subdomain: sub,
        a: a.build(),
        b: b.build(),
        r: r.build(),
        af: (sub == Subdomain::Poro).then(|| af.build()),
    })
}

/// `(H_P, H_E)`: rows are multiplier dofs (component-blocked), columns the
/// displacement dofs of the respective subdomain.
pub fn assemble_interface(disc: &Discretization) -> Result<(CsrMatrix, CsrMatrix)> {
    let edges = &disc.pairing.edge_list;
    if edges.is_empty() {
        return Err(Error::EmptyInterface);
    }
    let nm = disc.multiplier.n_nodes();
    let build = |space: &SubdomainSpace, first: bool| -> Result<CsrMatrix> {
        let mut h = TripletBuilder::new(disc.multiplier.n_dofs(), space.n_u());
        for (k, pair) in edges.iter().enumerate() {
            let (verts, bidx) = if first { (pair.first, pair.first_boundary) } else { (pair.second, pair.second_boundary) };
            let pts = [space.mesh.vertices[verts[0]], space.mesh.vertices[verts[1]]];
            let local = local_interface(pts[0], pts[1], space.displacement.order, 1)?.entries;
            let mut trace = verts.to_vec();
            if space.displacement.order == 2 {
                trace.push(space.mesh.vertices.len() + space.mesh.boundary[bidx].edge);
            }
            for c in 0..2 {
                let rows = [c * nm + k, c * nm + k + 1];
                let cols: Vec<usize> = trace.iter().map(|&n| space.displacement.dof(n, c)).collect();
                scatter(&mut h, &rows, &cols, &local);
            }
        }
        Ok(h.build())
    };
    Ok((build(&disc.poro, true)?, build(&disc.elastic, false)?))
}

/// What a constrained dof prescribes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstrainedField {
    Displacement(usize),
    Pressure,
}

/// Constrained dofs of one subdomain vector together with their prescribed values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub dofs: Vec<usize>,
    pub values: Vec<f64>,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }
}

/// Time-independent list of Dirichlet dofs of a subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintPattern {
    pub dofs: Vec<usize>,
    pub nodes: Vec<usize>,
    pub fields: Vec<ConstrainedField>,
}

pub fn constraint_pattern(space: &SubdomainSpace, scenario: &dyn Scenario) -> ConstraintPattern {
    let off = space.offsets();
    let mut marked = vec![None; off.len];
    for be in &space.mesh.boundary {
        let tag = match be.tag {
            Some(FacetTag::Interface) | None => continue,
            Some(t) => t,
        };
        for c in 0..2 {
            if scenario.displacement_bc(space.subdomain(), tag, c) == DisplacementBc::Dirichlet {
                for n in space.displacement.edge_nodes(&space.mesh, be) {
                    marked[off.u + space.displacement.dof(n, c)] = Some((n, ConstrainedField::Displacement(c)));
                }
            }
        }
        if let Some(p) = off.p {
            if scenario.pressure_bc(tag) == PressureBc::Dirichlet {
                for n in space.scalar.edge_nodes(&space.mesh, be) {
                    marked[p + n] = Some((n, ConstrainedField::Pressure));
                }
            }
        }
    }
    let mut pat = ConstraintPattern { dofs: Vec::new(), nodes: Vec::new(), fields: Vec::new() };
    for (d, m) in marked.into_iter().enumerate() {
        if let Some((n, f)) = m {
            pat.dofs.push(d);
            pat.nodes.push(n);
            pat.fields.push(f);
        }
    }
    pat
}

impl ConstraintPattern {
    pub fn values(&self, space: &SubdomainSpace, scenario: &dyn Scenario, t: f64) -> ConstraintSet {
        let values = self
            .nodes
            .iter()
            .zip(&self.fields)
            .map(|(&n, f)| match f {
                ConstrainedField::Displacement(c) => {
                    scenario.boundary_displacement(space.subdomain(), space.displacement.node_coords[n], t)[*c]
                }
                ConstrainedField::Pressure => scenario.boundary_pressure(space.scalar.node_coords[n], t),
            })
            .collect();
        ConstraintSet { dofs: self.dofs.clone(), values }
    }
}

/// Symmetric elimination: constrained rows and columns are zeroed with a
/// unit diagonal, and the right-hand side is lifted by the removed columns.
pub fn apply_constraints(matrix: &CsrMatrix, rhs: &mut [f64], constraints: &ConstraintSet) -> Result<CsrMatrix> {
    let n = matrix.nrows();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch { context: "constraint right-hand side", expected: n, found: rhs.len() });
    }
    if let Some(&d) = constraints.dofs.iter().find(|&&d| d >= n) {
        return Err(Error::DimensionMismatch { context: "constrained dof", expected: n, found: d });
    }
    let mut is_c = vec![false; n];
    let mut g = vec![0.0; n];
    for (&d, &v) in constraints.dofs.iter().zip(&constraints.values) {
        is_c[d] = true;
        g[d] = v;
    }
    let mut b = TripletBuilder::with_capacity(n, matrix.ncols(), matrix.nnz());
    for (i, j, v) in matrix.iter() {
        if is_c[j] {
            rhs[i] -= v * g[j];
        }
        if !is_c[i] && !is_c[j] {
            b.push(i, j, v);
        }
    }
    for &d in &constraints.dofs {
        b.push(d, d, 1.0);
        rhs[d] = g[d];
    }
    Ok(b.build())
}

/// Assembled operators of the coupled problem for a fixed time step.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub params: ModelParams,
    pub tau: f64,
    pub poro: SubdomainBlocks,
    pub elastic: SubdomainBlocks,
    pub h_p: CsrMatrix,
    pub h_e: CsrMatrix,
}

impl BlockSystem {
    pub fn assemble(disc: &Discretization, params: &ModelParams, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {tau}")));
        }
        let (h_p, h_e) = assemble_interface(disc)?;
        Ok(Self {
            params: *params,
            tau,
            poro: assemble_subdomain_blocks(&disc.poro, params)?,
            elastic: assemble_subdomain_blocks(&disc.elastic, params)?,
            h_p,
            h_e,
        })
    }

    pub fn blocks(&self, sub: Subdomain) -> &SubdomainBlocks {
        match sub {
            Subdomain::Poro => &self.poro,
            Subdomain::Elastic => &self.elastic,
        }
    }

    /// `A* = diag(A_P, κ2 R)`, `B* = [[B_P, κ1 R], [0, −R]]`,
    /// `C* = diag(κ3 R, τ A_f)` with `U = (u, η)` and `P = (ξ, p)`.
    pub fn poro_composite(&self) -> (CsrMatrix, CsrMatrix, CsrMatrix) {
        let k = &self.params;
        let blk = &self.poro;
        let (nu, ns) = (blk.a.nrows(), blk.r.nrows());
        let mut a = TripletBuilder::new(nu + ns, nu + ns);
        a.push_block(0, 0, &blk.a, 1.0);
        a.push_block(nu, nu, &blk.r, k.kappa2);
        let mut b = TripletBuilder::new(2 * ns, nu + ns);
        b.push_block(0, 0, &blk.b, 1.0);
        b.push_block(0, nu, &blk.r, k.kappa1);
        b.push_block(ns, nu, &blk.r, -1.0);
        let mut c = TripletBuilder::new(2 * ns, 2 * ns);
        c.push_block(0, 0, &blk.r, k.kappa3);
        c.push_block(ns, ns, blk.af.as_ref().expect("poroelastic blocks carry A_f"), self.tau);
        (a.build(), b.build(), c.build())
    }

    /// Subdomain saddle operator in field-blocked ordering (see module docs).
    pub fn saddle(&self, sub: Subdomain) -> CsrMatrix {
        let blk = self.blocks(sub);
        let (nu, ns) = (blk.a.nrows(), blk.r.nrows());
        match sub {
            Subdomain::Poro => {
                let k = &self.params;
                let (xi, eta, p) = (nu, nu + ns, nu + 2 * ns);
                let mut t = TripletBuilder::new(nu + 3 * ns, nu + 3 * ns);
                t.push_block(0, 0, &blk.a, 1.0);
                t.push_block(0, xi, &blk.b.transpose(), 1.0);
                t.push_block(xi, 0, &blk.b, 1.0);
                t.push_block(xi, xi, &blk.r, -k.kappa3);
                t.push_block(xi, eta, &blk.r, k.kappa1);
                t.push_block(eta, xi, &blk.r, k.kappa1);
                t.push_block(eta, eta, &blk.r, k.kappa2);
                t.push_block(eta, p, &blk.r, -1.0);
                t.push_block(p, eta, &blk.r, -1.0);
                t.push_block(p, p, blk.af.as_ref().expect("poroelastic blocks carry A_f"), -self.tau);
                t.build()
            }
            Subdomain::Elastic => {
                let mut t = TripletBuilder::new(nu + ns, nu + ns);
                t.push_block(0, 0, &blk.a, 1.0);
                t.push_block(0, nu, &blk.b.transpose(), 1.0);
                t.push_block(nu, 0, &blk.b, 1.0);
                t.push_block(nu, nu, &blk.r, -1.0 / self.params.lambda_e);
                t.build()
            }
        }
    }

    /// The unconstrained 7×7 block matrix, unknowns ordered
    /// `(u_P, ξ_P, η, p, u_E, ξ_E, λ)`.
    pub fn monolithic_unconstrained(&self) -> CsrMatrix {
        let sp = self.saddle(Subdomain::Poro);
        let se = self.saddle(Subdomain::Elastic);
        let (np, ne, nm) = (sp.nrows(), se.nrows(), self.h_p.nrows());
        let n = np + ne + nm;
        let mut t = TripletBuilder::new(n, n);
        t.push_block(0, 0, &sp, 1.0);
        t.push_block(np, np, &se, 1.0);
        t.push_block_transposed(0, np + ne, &self.h_p, 1.0);
        t.push_block_transposed(np, np + ne, &self.h_e, -1.0);
        t.push_block(np + ne, 0, &self.h_p, 1.0);
        t.push_block(np + ne, np, &self.h_e, -1.0);
        t.build()
    }
}

/// Per-step load vectors in subdomain ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRhs {
    pub poro: Vec<f64>,
    pub elastic: Vec<f64>,
}

fn edge_load<F>(space: &SubdomainSpace, tag_filter: F, out: &mut [f64], scalar: bool, value: &dyn Fn(FacetTag, Point) -> [f64; 2])
where
    F: Fn(FacetTag, usize) -> bool,
{
    let map = if scalar { &space.scalar } else { &space.displacement };
    for be in &space.mesh.boundary {
        let Some(tag) = be.tag else { continue };
        // The full datum is assembled on any edge with a natural condition in
        // some component; Dirichlet components are overwritten by the lifting.
        if !(0..map.components).any(|c| tag_filter(tag, c)) {
            continue;
        }
        let comps: Vec<usize> = (0..map.components).collect();
        let (a, b) = (space.mesh.vertices[be.vertices[0]], space.mesh.vertices[be.vertices[1]]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let nodes = map.edge_nodes(&space.mesh, be);
        for (s, w) in gauss_segment() {
            let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let v = value(tag, x);
            let phi = edge_basis(map.order, s).expect("supported order");
            for &c in &comps {
                for (k, &n) in nodes.iter().enumerate() {
                    out[map.dof(n, c)] += w * len * v[c] * phi[k];
                }
            }
        }
    }
}

/// Load vectors `(F_P, F_E)` and the source vector `Z` at time `t`.
pub fn assemble_loads(disc: &Discretization, scenario: &dyn Scenario, t: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let params = scenario.params();
    let rule = quadrature_rule(4)?;
    let body = |space: &SubdomainSpace| -> Result<Vec<f64>> {
        let sub = space.subdomain();
        let mut f = vec![0.0; space.n_u()];
        for tri in 0..space.mesh.triangles.len() {
            let geom = TriangleGeometry::new(space.mesh.triangle_points(tri))?;
            let tab = Tabulation::new(&geom, space.displacement.order, &rule)?;
            let dofs = space.displacement.cell_dofs(tri);
            let nb = tab.n_basis();
            for q in 0..tab.weights.len() {
                let fx = scenario.body_force(sub, tab.points[q], t);
                for a in 0..nb {
                    for c in 0..2 {
                        f[dofs[c * nb + a]] += tab.weights[q] * fx[c] * tab.values[q][a];
                    }
                }
            }
        }
        edge_load(
            space,
            |tag, c| tag != FacetTag::Interface && scenario.displacement_bc(sub, tag, c) == DisplacementBc::Traction,
            &mut f,
            false,
            &|tag, x| scenario.traction(sub, tag, x, t),
        );
        Ok(f)
    };
    let f_p = body(&disc.poro)?;
    let f_e = body(&disc.elastic)?;

    let space = &disc.poro;
    let mut z = vec![0.0; space.n_s()];
    let k = params.permeability;
    let kg = [
        k[0][0] * params.gravity[0] + k[0][1] * params.gravity[1],
        k[1][0] * params.gravity[0] + k[1][1] * params.gravity[1],
    ];
    let buoyancy = params.rho_f / params.mu_f;
    for tri in 0..space.mesh.triangles.len() {
        let geom = TriangleGeometry::new(space.mesh.triangle_points(tri))?;
        let tab = Tabulation::new(&geom, 1, &rule)?;
        let dofs = space.scalar.cell_dofs(tri);
        for q in 0..tab.weights.len() {
            let zq = scenario.source(tab.points[q], t);
            for (a, &d) in dofs.iter().enumerate() {
                let g = tab.grads[q][a];
                z[d] += tab.weights[q] * (zq * tab.values[q][a] + buoyancy * (kg[0] * g[0] + kg[1] * g[1]));
            }
        }
    }
    edge_load(
        space,
        |tag, _| tag != FacetTag::Interface && scenario.pressure_bc(tag) == PressureBc::Flux,
        &mut z,
        true,
        &|tag, x| [scenario.boundary_flux(tag, x, t), 0.0],
    );
    Ok((f_p, f_e, z))
}

/// Right-hand sides of the step at `t`: `[F_P; 0; 0; −R η_prev − τ Z]` and `[F_E; 0]`.
pub fn assemble_rhs_step(
    disc: &Discretization,
    system: &BlockSystem,
    scenario: &dyn Scenario,
    t: f64,
    eta_prev: &[f64],
) -> Result<StepRhs> {
    let (f_p, f_e, z) = assemble_loads(disc, scenario, t)?;
    let off = disc.poro.offsets();
    if eta_prev.len() != disc.poro.n_s() {
        return Err(Error::DimensionMismatch { context: "previous fluid content", expected: disc.poro.n_s(), found: eta_prev.len() });
    }
    let mut poro = vec![0.0; off.len];
    poro[..f_p.len()].copy_from_slice(&f_p);
    let r_eta = system.poro.r.mul_vec(eta_prev);
    let p0 = off.p.expect("poroelastic layout");
    for i in 0..z.len() {
        poro[p0 + i] = -r_eta[i] - system.tau * z[i];
    }
    let mut elastic = vec![0.0; disc.elastic.offsets().len];
    elastic[..f_e.len()].copy_from_slice(&f_e);
    Ok(StepRhs { poro, elastic })
}

/// One subdomain of the constrained coupled system.
#[derive(Debug, Clone)]
pub struct ConstrainedSubdomain {
    pub subdomain: Subdomain,
    pub pattern: ConstraintPattern,
    /// Saddle operator after symmetric elimination.
    pub matrix: CsrMatrix,
    /// Columns of the unconstrained saddle operator at the constrained dofs.
    lift: CsrMatrix,
    /// Signed coupling `±H` restricted to active multiplier rows, constrained columns zeroed.
    pub coupling: CsrMatrix,
    /// Signed coupling columns at the constrained dofs.
    coupling_lift: CsrMatrix,
}

impl ConstrainedSubdomain {
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// Lifted subdomain right-hand side and its contribution `−G g` to the constraint row.
    pub fn lift_rhs(&self, rhs: &[f64], values: &ConstraintSet) -> (Vec<f64>, Vec<f64>) {
        let mut f = rhs.to_vec();
        let corr = self.lift.mul_vec(&values.values);
        for (fi, ci) in f.iter_mut().zip(&corr) {
            *fi -= ci;
        }
        for (&d, &v) in values.dofs.iter().zip(&values.values) {
            f[d] = v;
        }
        let d = self.coupling_lift.mul_vec(&values.values).into_iter().map(|v| -v).collect();
        (f, d)
    }
}

/// Constrained coupled system:
/// `K_P x_P + G_Pᵀ λ = f_P`, `K_E x_E + G_Eᵀ λ = f_E`, `G_P x_P + G_E x_E = d`
/// with `G_P = H_P`, `G_E = −H_E`.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    pub poro: ConstrainedSubdomain,
    pub elastic: ConstrainedSubdomain,
    /// Multiplier dofs kept in the system (rows of `H`).
    pub active_multipliers: Vec<usize>,
    pub n_multiplier_dofs: usize,
}

/// Lifted right-hand sides of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRhs {
    pub poro: Vec<f64>,
    pub elastic: Vec<f64>,
    /// Constraint-row right-hand side `d`.
    pub interface: Vec<f64>,
    pub poro_values: ConstraintSet,
    pub elastic_values: ConstraintSet,
}

impl CoupledSystem {
    /// Applies the Dirichlet conditions of `scenario` and drops every
    /// multiplier dof whose trace vertex is constrained on both sides (its
    /// row would otherwise make the interface operator singular).
    pub fn new(disc: &Discretization, system: &BlockSystem, scenario: &dyn Scenario) -> Result<Self> {
        let pat_p = constraint_pattern(&disc.poro, scenario);
        let pat_e = constraint_pattern(&disc.elastic, scenario);

        let nm = disc.multiplier.n_nodes();
        let mut active = Vec::new();
        for c in 0..2 {
            for (k, &(np, ne)) in disc.pairing.pairs.iter().filter(|(np, _)| *np < disc.poro.mesh.vertices.len()).enumerate() {
                let dp = disc.poro.displacement.dof(np, c);
                let de = disc.elastic.displacement.dof(ne, c);
                let both = pat_p.dofs.binary_search(&dp).is_ok() && pat_e.dofs.binary_search(&de).is_ok();
                if !both {
                    active.push(c * nm + k);
                }
            }
        }
        if active.is_empty() {
            return Err(Error::SingularSystem("every interface multiplier is constrained out".into()));
        }

        let build = |space: &SubdomainSpace, pat: &ConstraintPattern, h: &CsrMatrix, sign: f64| -> Result<ConstrainedSubdomain> {
            let sub = space.subdomain();
            let saddle = system.saddle(sub);
            let n = saddle.nrows();
            let lift = saddle.submatrix(&(0..n).collect::<Vec<_>>(), &pat.dofs);
            let zero = ConstraintSet { dofs: pat.dofs.clone(), values: vec![0.0; pat.dofs.len()] };
            let mut scratch = vec![0.0; n];
            let matrix = apply_constraints(&saddle, &mut scratch, &zero)?;
            // H acts on displacement columns; pad to the full subdomain vector.
            let mut g = TripletBuilder::new(active.len(), n);
            for (row, &m) in active.iter().enumerate() {
                let (cols, vals) = h.row(m);
                for (&j, &v) in cols.iter().zip(vals) {
                    g.push(row, space.offsets().u + j, sign * v);
                }
            }
            let g = g.build();
            let coupling_lift = g.submatrix(&(0..active.len()).collect::<Vec<_>>(), &pat.dofs);
            let mut coupling = g;
            coupling.zero_columns(&pat.dofs);
            Ok(ConstrainedSubdomain { subdomain: sub, pattern: pat.clone(), matrix, lift, coupling, coupling_lift })
        };
        let poro = build(&disc.poro, &pat_p, &system.h_p, 1.0)?;
        let elastic = build(&disc.elastic, &pat_e, &system.h_e, -1.0)?;
        Ok(Self { poro, elastic, active_multipliers: active, n_multiplier_dofs: disc.multiplier.n_dofs() })
    }

    pub fn subdomain(&self, sub: Subdomain) -> &ConstrainedSubdomain {
        match sub {
            Subdomain::Poro => &self.poro,
            Subdomain::Elastic => &self.elastic,
        }
    }

    pub fn n_lambda(&self) -> usize {
        self.active_multipliers.len()
    }

    pub fn lift(&self, disc: &Discretization, scenario: &dyn Scenario, rhs: &StepRhs, t: f64) -> CoupledRhs {
        let vp = self.poro.pattern.values(&disc.poro, scenario, t);
        let ve = self.elastic.pattern.values(&disc.elastic, scenario, t);
        let (fp, dp) = self.poro.lift_rhs(&rhs.poro, &vp);
        let (fe, de) = self.elastic.lift_rhs(&rhs.elastic, &ve);
        let interface = dp.iter().zip(&de).map(|(a, b)| a + b).collect();
        CoupledRhs { poro: fp, elastic: fe, interface, poro_values: vp, elastic_values: ve }
    }

    /// Constrained monolithic matrix, unknowns `(x_P, x_E, λ_active)`.
    pub fn monolithic_matrix(&self) -> CsrMatrix {
        let (np, ne, nl) = (self.poro.len(), self.elastic.len(), self.n_lambda());
        let n = np + ne + nl;
        let mut t = TripletBuilder::new(n, n);
        t.push_block(0, 0, &self.poro.matrix, 1.0);
        t.push_block(np, np, &self.elastic.matrix, 1.0);
        t.push_block(np + ne, 0, &self.poro.coupling, 1.0);
        t.push_block(np + ne, np, &self.elastic.coupling, 1.0);
        t.push_block_transposed(0, np + ne, &self.poro.coupling, 1.0);
        t.push_block_transposed(np, np + ne, &self.elastic.coupling, 1.0);
        t.build()
    }

    pub fn monolithic_rhs(&self, rhs: &CoupledRhs) -> Vec<f64> {
        let mut b = rhs.poro.clone();
        b.extend_from_slice(&rhs.elastic);
        b.extend_from_slice(&rhs.interface);
        b
    }

    /// Scatters the active multiplier values into the full multiplier vector.
    pub fn expand_lambda(&self, lambda: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_multiplier_dofs];
        for (&m, &v) in self.active_multipliers.iter().zip(lambda) {
            full[m] = v;
        }
        full
    }

    pub fn restrict_lambda(&self, full: &[f64]) -> Vec<f64> {
        self.active_multipliers.iter().map(|&m| full[m]).collect()
    }
}

/// Matrix Market coordinate text of `m` (1-based indices).
pub fn to_matrix_market(m: &CsrMatrix) -> String {
    let mut s = String::with_capacity(32 * m.nnz() + 64);
    s.push_str("%%MatrixMarket matrix coordinate real general\n");
    writeln!(s, "{} {} {}", m.nrows(), m.ncols(), m.nnz()).unwrap();
    for (i, j, v) in m.iter() {
        writeln!(s, "{} {} {:.17e}", i + 1, j + 1, v).unwrap();
    }
    s
}

pub fn write_matrix_market(m: &CsrMatrix, path: &Path) -> Result<()> {
    std::fs::write(path, to_matrix_market(m)).map_err(|e| Error::io(path, e))
}
