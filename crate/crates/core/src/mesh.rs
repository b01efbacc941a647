//! Structured triangulations of the two rectangular subdomains, boundary
//! labelling, degree-of-freedom numbering and the pairing of interface nodes.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Coordinate tolerance used to decide that two nodes coincide.
pub const COINCIDENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subdomain {
    /// Poroelastic pay-zone.
    Poro,
    /// Purely elastic nonpay-zone.
    Elastic,
}

impl fmt::Display for Subdomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subdomain::Poro => f.write_str("poroelastic subdomain"),
            Subdomain::Elastic => f.write_str("elastic subdomain"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Geometric side of the bounding rectangle an edge lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

/// Boundary labels of the top-bottom layout: the outer pieces
/// `Γ1` (right), `Γ2` (bottom), `Γ3` (left), `Γ4` (top) and the interface `Γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FacetTag {
    Right,
    Bottom,
    Left,
    Top,
    Interface,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    /// Endpoints, oriented counterclockwise around the subdomain.
    pub vertices: [usize; 2],
    /// Index into [`Mesh::edges`].
    pub edge: usize,
    pub side: Side,
    pub tag: Option<FacetTag>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub subdomain: Subdomain,
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    /// Row-major grid vertices.
    pub vertices: Vec<Point>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Unique edges as sorted vertex pairs.
    pub edges: Vec<[usize; 2]>,
    /// Local edges (v0v1, v1v2, v2v0) of each triangle as indices into `edges`.
    pub triangle_edges: Vec<[usize; 3]>,
    pub boundary: Vec<BoundaryEdge>,
}

/// Builds the structured `nx × ny` grid of `rect`, each cell split along
/// its lower-left to upper-right diagonal.
pub fn build_subdomain_mesh(subdomain: Subdomain, rect: Rect, nx: usize, ny: usize) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidMesh(format!("subdivision counts must be positive, got {nx}×{ny}")));
    }
    if !(rect.x1 > rect.x0 && rect.y1 > rect.y0) {
        return Err(Error::InvalidMesh(format!("degenerate rectangle {rect:?}")));
    }
    let hx = (rect.x1 - rect.x0) / nx as f64;
    let hy = (rect.y1 - rect.y0) / ny as f64;
    let vid = |i: usize, j: usize| j * (nx + 1) + i;

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        // Pin the last row/column to the rectangle so interface coordinates
        // agree bitwise between the two subdomains.
        let y = if j == ny { rect.y1 } else { rect.y0 + j as f64 * hy };
        for i in 0..=nx {
            let x = if i == nx { rect.x1 } else { rect.x0 + i as f64 * hx };
            vertices.push([x, y]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }

    let mut edge_ids: HashMap<[usize; 2], usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut triangle_edges = Vec::with_capacity(triangles.len());
    for t in &triangles {
        let mut te = [0; 3];
        for k in 0..3 {
            let (u, v) = (t[k], t[(k + 1) % 3]);
            let key = [u.min(v), u.max(v)];
            te[k] = *edge_ids.entry(key).or_insert_with(|| {
                edges.push(key);
                edges.len() - 1
            });
        }
        triangle_edges.push(te);
    }

    let mut boundary = Vec::with_capacity(2 * (nx + ny));
    let mut push = |a: usize, b: usize, side: Side| {
        let edge = edge_ids[&[a.min(b), a.max(b)]];
        boundary.push(BoundaryEdge { vertices: [a, b], edge, side, tag: None });
    };
    for i in 0..nx {
        push(vid(i, 0), vid(i + 1, 0), Side::Bottom);
    }
    for j in 0..ny {
        push(vid(nx, j), vid(nx, j + 1), Side::Right);
    }
    for i in (0..nx).rev() {
        push(vid(i + 1, ny), vid(i, ny), Side::Top);
    }
    for j in (0..ny).rev() {
        push(vid(0, j + 1), vid(0, j), Side::Left);
    }

    Ok(Mesh { subdomain, rect, nx, ny, vertices, triangles, edges, triangle_edges, boundary })
}

/// Labels every boundary edge with `rule(midpoint, side)`. An edge the rule
/// leaves unlabelled is an error.
pub fn tag_boundary_facets<F>(mut mesh: Mesh, rule: F) -> Result<Mesh>
where
    F: Fn(Point, Side) -> Option<FacetTag>,
{
    for (k, be) in mesh.boundary.iter_mut().enumerate() {
        let a = mesh.vertices[be.vertices[0]];
        let b = mesh.vertices[be.vertices[1]];
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        be.tag = Some(rule(mid, be.side).ok_or(Error::UntaggedEdge { edge: k, a, b })?);
    }
    Ok(mesh)
}

/// Labelling of the top-bottom layout: edges on the horizontal line
/// `y = interface_height` are the interface, every other edge takes the
/// label of its rectangle side.
pub fn layout_rule(interface_height: f64) -> impl Fn(Point, Side) -> Option<FacetTag> {
    move |mid, side| {
        if matches!(side, Side::Top | Side::Bottom) && (mid[1] - interface_height).abs() < COINCIDENCE_TOL {
            return Some(FacetTag::Interface);
        }
        Some(match side {
            Side::Right => FacetTag::Right,
            Side::Bottom => FacetTag::Bottom,
            Side::Left => FacetTag::Left,
            Side::Top => FacetTag::Top,
        })
    }
}

impl Mesh {
    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    pub fn interface_edges(&self) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary.iter().filter(|e| e.tag == Some(FacetTag::Interface))
    }

    pub fn h(&self) -> f64 {
        ((self.rect.x1 - self.rect.x0) / self.nx as f64).max((self.rect.y1 - self.rect.y0) / self.ny as f64)
    }

    /// Legacy ASCII VTK unstructured grid of the triangulation.
    pub fn to_vtk(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# vtk DataFile Version 3.0\n{} mesh\nASCII\nDATASET UNSTRUCTURED_GRID", self.subdomain).unwrap();
        writeln!(s, "POINTS {} double", self.vertices.len()).unwrap();
        for v in &self.vertices {
            writeln!(s, "{} {} 0", v[0], v[1]).unwrap();
        }
        writeln!(s, "CELLS {} {}", self.triangles.len(), 4 * self.triangles.len()).unwrap();
        for t in &self.triangles {
            writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
        }
        writeln!(s, "CELL_TYPES {}", self.triangles.len()).unwrap();
        for _ in &self.triangles {
            writeln!(s, "5").unwrap();
        }
        s
    }

    pub fn write_vtk(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_vtk()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Displacement,
    ElasticPressure,
    FluidContent,
    FluidPressure,
    Multiplier,
}

/// Degree-of-freedom layout of one (possibly vector-valued) Lagrange field.
///
/// Nodes of a P2 space are the mesh vertices followed by the edge
/// midpoints. The dof of component `c` at node `n` is `c * n_nodes + n`.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub field: FieldKind,
    pub order: usize,
    pub components: usize,
    pub node_coords: Vec<Point>,
    /// Local-to-global node map of each cell (triangle, or interface edge
    /// for the multiplier space).
    pub cell_nodes: Vec<Vec<usize>>,
    /// Per node: the node lies on the interface.
    pub interface_mask: Vec<bool>,
}

impl DofMap {
    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.components * self.n_nodes()
    }

    #[inline]
    pub fn dof(&self, node: usize, component: usize) -> usize {
        component * self.n_nodes() + node
    }

    /// Dofs of one cell, component-blocked: all nodes of component 0 first.
    pub fn cell_dofs(&self, cell: usize) -> Vec<usize> {
        let nodes = &self.cell_nodes[cell];
        (0..self.components).flat_map(|c| nodes.iter().map(move |&n| self.dof(n, c))).collect()
    }

    /// Nodes on a boundary edge: both endpoints, then the midpoint for P2.
    pub fn edge_nodes(&self, mesh: &Mesh, edge: &BoundaryEdge) -> Vec<usize> {
        let mut nodes = edge.vertices.to_vec();
        if self.order == 2 {
            nodes.push(mesh.vertices.len() + edge.edge);
        }
        nodes
    }

    pub fn interface_dofs(&self) -> Vec<usize> {
        (0..self.components)
            .flat_map(|c| {
                self.interface_mask.iter().enumerate().filter(|(_, &m)| m).map(move |(n, _)| self.dof(n, c))
            })
            .collect()
    }
}

/// Polynomial orders of the displacement and of the scalar fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeOrders {
    pub displacement: usize,
    pub scalar: usize,
}

impl FeOrders {
    pub fn new(displacement: usize) -> Self {
        Self { displacement, scalar: 1 }
    }
}

fn lagrange_map(mesh: &Mesh, field: FieldKind, order: usize, components: usize) -> Result<DofMap> {
    let nv = mesh.vertices.len();
    let (node_coords, cell_nodes): (Vec<Point>, Vec<Vec<usize>>) = match order {
        1 => (mesh.vertices.clone(), mesh.triangles.iter().map(|t| t.to_vec()).collect()),
        2 => {
            let mut coords = mesh.vertices.clone();
            coords.extend(mesh.edges.iter().map(|&[a, b]| {
                let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
                [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
            }));
            let cells = mesh
                .triangles
                .iter()
                .zip(&mesh.triangle_edges)
                .map(|(t, e)| vec![t[0], t[1], t[2], nv + e[0], nv + e[1], nv + e[2]])
                .collect();
            (coords, cells)
        }
        o => return Err(Error::UnsupportedOrder(o)),
    };
    let mut interface_mask = vec![false; node_coords.len()];
    for be in mesh.interface_edges() {
        interface_mask[be.vertices[0]] = true;
        interface_mask[be.vertices[1]] = true;
        if order == 2 {
            interface_mask[nv + be.edge] = true;
        }
    }
    Ok(DofMap { field, order, components, node_coords, cell_nodes, interface_mask })
}

/// Dof maps of one subdomain: displacement first, then the scalar fields
/// (`ξ, η, p` on the poroelastic side, `ξ` on the elastic side).
pub fn build_dof_maps(mesh: &Mesh, orders: FeOrders) -> Result<Vec<DofMap>> {
    if !(1..=2).contains(&orders.displacement) {
        return Err(Error::UnsupportedOrder(orders.displacement));
    }
    if orders.scalar != 1 {
        return Err(Error::UnsupportedOrder(orders.scalar));
    }
    let mut maps = vec![lagrange_map(mesh, FieldKind::Displacement, orders.displacement, 2)?];
    let scalars: &[FieldKind] = match mesh.subdomain {
        Subdomain::Poro => &[FieldKind::ElasticPressure, FieldKind::FluidContent, FieldKind::FluidPressure],
        Subdomain::Elastic => &[FieldKind::ElasticPressure],
    };
    for &kind in scalars {
        maps.push(lagrange_map(mesh, kind, 1, 1)?);
    }
    Ok(maps)
}

/// Continuous piecewise-linear vector multiplier space on the interface
/// edges of `mesh`; nodes are ordered left to right.
pub fn multiplier_dof_map(mesh: &Mesh) -> Result<DofMap> {
    let mut verts: Vec<usize> = mesh.interface_edges().flat_map(|e| e.vertices).collect();
    if verts.is_empty() {
        return Err(Error::EmptyInterface);
    }
    verts.sort_by(|a, b| mesh.vertices[*a][0].total_cmp(&mesh.vertices[*b][0]));
    verts.dedup();
    let local: HashMap<usize, usize> = verts.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let mut cells: Vec<Vec<usize>> =
        mesh.interface_edges().map(|e| vec![local[&e.vertices[0]], local[&e.vertices[1]]]).collect();
    cells.iter_mut().for_each(|c| c.sort_unstable());
    cells.sort_unstable();
    Ok(DofMap {
        field: FieldKind::Multiplier,
        order: 1,
        components: 2,
        node_coords: verts.iter().map(|&v| mesh.vertices[v]).collect(),
        cell_nodes: cells,
        interface_mask: vec![true; verts.len()],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceEdgePair {
    /// Left and right endpoint vertices on the first mesh.
    pub first: [usize; 2],
    /// Left and right endpoint vertices on the second mesh.
    pub second: [usize; 2],
    /// Indices into the respective `Mesh::boundary` lists.
    pub first_boundary: usize,
    pub second_boundary: usize,
}

/// Node-by-node correspondence of two displacement trace spaces on `Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfacePairing {
    /// `(first-side node, second-side node)`, ordered left to right.
    pub pairs: Vec<(usize, usize)>,
    /// Interface edges ordered left to right.
    pub edge_list: Vec<InterfaceEdgePair>,
}

fn sorted_interface_edges(mesh: &Mesh) -> Vec<(usize, [usize; 2])> {
    let mut out: Vec<(usize, [usize; 2])> = mesh
        .boundary
        .iter()
        .enumerate()
        .filter(|(_, e)| e.tag == Some(FacetTag::Interface))
        .map(|(k, e)| {
            let [a, b] = e.vertices;
            if mesh.vertices[a][0] <= mesh.vertices[b][0] {
                (k, [a, b])
            } else {
                (k, [b, a])
            }
        })
        .collect();
    out.sort_by(|x, y| mesh.vertices[x.1[0]][0].total_cmp(&mesh.vertices[y.1[0]][0]));
    out
}

fn close(a: Point, b: Point) -> bool {
    (a[0] - b[0]).abs() <= COINCIDENCE_TOL && (a[1] - b[1]).abs() <= COINCIDENCE_TOL
}

/// Pairs the interface trace nodes of two conforming meshes.
pub fn pair_interface(mesh_a: &Mesh, mesh_b: &Mesh, dofs_a: &DofMap, dofs_b: &DofMap) -> Result<InterfacePairing> {
    if dofs_a.order != dofs_b.order {
        return Err(Error::NonConformingInterface(format!(
            "trace orders differ ({} vs {})",
            dofs_a.order, dofs_b.order
        )));
    }
    let ea = sorted_interface_edges(mesh_a);
    let eb = sorted_interface_edges(mesh_b);
    if ea.is_empty() || eb.is_empty() {
        return Err(Error::EmptyInterface);
    }
    if ea.len() != eb.len() {
        return Err(Error::NonConformingInterface(format!(
            "{} interface edges on one side, {} on the other",
            ea.len(),
            eb.len()
        )));
    }

    let mut edge_list = Vec::with_capacity(ea.len());
    let mut pairs = Vec::new();
    for (&(ka, va), &(kb, vb)) in ea.iter().zip(&eb) {
        for s in 0..2 {
            let (pa, pb) = (mesh_a.vertices[va[s]], mesh_b.vertices[vb[s]]);
            if !close(pa, pb) {
                return Err(Error::NonConformingInterface(format!("vertex {pa:?} has no partner ({pb:?})")));
            }
        }
        edge_list.push(InterfaceEdgePair { first: va, second: vb, first_boundary: ka, second_boundary: kb });
        if pairs.is_empty() {
            pairs.push((va[0], vb[0]));
        }
        if dofs_a.order == 2 {
            let na = mesh_a.vertices.len() + mesh_a.boundary[ka].edge;
            let nb = mesh_b.vertices.len() + mesh_b.boundary[kb].edge;
            pairs.push((na, nb));
        }
        pairs.push((va[1], vb[1]));
    }
    for &(a, b) in &pairs {
        if !close(dofs_a.node_coords[a], dofs_b.node_coords[b]) {
            return Err(Error::NonConformingInterface("trace node coordinates differ".into()));
        }
    }
    Ok(InterfacePairing { pairs, edge_list })
}
