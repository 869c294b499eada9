//! Oriented triangular meshes with classified edges and their algebraic
//! topology: boundary operators, the signed element-to-edge incidence
//! matrix and its kernel basis (star patches and hole loops).
//!
//! A [`Mesh`] is built once, validated, then treated as immutable; all
//! queries are read-only and safe to share across threads.

mod generate;
mod io;
mod topology;

pub use generate::{
    delaunay_unit_square, rectangle, rectangle_with_hole, DiagonalPattern, SideTag,
};
pub use io::{read_mesh_file, write_mesh_file};
pub use topology::{
    boundary_of_edges, boundary_of_triangles, HoleLoop, IncidenceMatrix, KernelBasis,
};

use crate::error::MeshError;
use std::collections::HashMap;

pub type VertexId = usize;
pub type EdgeId = usize;
pub type TriId = usize;

/// Classification of a vertex by the border edges that touch it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexClass {
    Interior,
    NeumannBoundary,
    DirichletBoundary,
    /// Touches both a Neumann and a Dirichlet border edge.
    MixedCorner,
}

/// Classification of an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeClass {
    Internal,
    Neumann,
    Dirichlet,
}

#[derive(Clone, Debug)]
pub struct Vertex {
    pub id: VertexId,
    pub x: f64,
    pub y: f64,
    pub class: VertexClass,
}

/// Oriented edge. The orientation runs from the lower vertex id `a` to the
/// higher id `b`; the line coefficients satisfy `la*x + lb*y + lc = 0` on
/// the edge with the raw endpoint normalization `la^2 + lb^2 = length^2`.
#[derive(Clone, Debug)]
pub struct Edge {
    pub id: EdgeId,
    pub a: VertexId,
    pub b: VertexId,
    pub la: f64,
    pub lb: f64,
    pub lc: f64,
    pub length: f64,
    pub midpoint: (f64, f64),
    pub class: EdgeClass,
    /// Incident triangles; internal edges have two, border edges one.
    pub tris: Vec<TriId>,
}

impl Edge {
    pub fn is_border(&self) -> bool {
        self.class != EdgeClass::Internal
    }

    /// Line coefficients `(a, b, c)` of the edge equation.
    pub fn line_coeffs(&self) -> (f64, f64, f64) {
        (self.la, self.lb, self.lc)
    }
}

/// Counter-clockwise triangle. `edges[k]` joins `vertices[k]` and
/// `vertices[(k+1)%3]`; `signs[k]` is the orientation coefficient of that
/// edge (+1 when the CCW traversal follows the edge's own a->b direction,
/// and +1 on every border edge by convention).
#[derive(Clone, Debug)]
pub struct Triangle {
    pub id: TriId,
    pub vertices: [VertexId; 3],
    pub edges: [EdgeId; 3],
    pub signs: [i8; 3],
    pub area: f64,
}

impl Triangle {
    /// Orientation coefficient of this triangle on one of its edges.
    pub fn sign_on(&self, edge: EdgeId) -> i8 {
        for k in 0..3 {
            if self.edges[k] == edge {
                return self.signs[k];
            }
        }
        panic!("edge {edge} does not belong to triangle {}", self.id);
    }
}

/// Entity counts of a validated mesh.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MeshCounts {
    pub triangles: usize,
    pub edges: usize,
    pub internal_edges: usize,
    pub border_edges: usize,
    pub vertices: usize,
    pub internal_vertices: usize,
    pub border_vertices: usize,
    pub holes: usize,
    pub components: usize,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub triangles: Vec<Triangle>,
    pub counts: MeshCounts,
    /// Internal edges in ascending edge-id order; their position here is the
    /// column index used by the incidence matrix and the work vectors.
    pub internal_edges: Vec<EdgeId>,
    /// Inverse of `internal_edges`: edge id -> internal column, if internal.
    pub internal_index: Vec<Option<usize>>,
    /// Boundary loops as closed vertex cycles; entry 0 is the outer loop.
    pub boundary_loops: Vec<Vec<VertexId>>,
    vertex_edges: Vec<Vec<EdgeId>>,
    vertex_tris: Vec<Vec<TriId>>,
}

impl Mesh {
    /// Edges ending at a vertex (the co-boundary of a vertex).
    pub fn vertex_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.vertex_edges[v]
    }

    /// Triangles containing a vertex (the star patch of the vertex).
    pub fn star_patch(&self, v: VertexId) -> &[TriId] {
        &self.vertex_tris[v]
    }

    /// Triangles sharing an edge (the co-boundary of an edge).
    pub fn edge_triangles(&self, e: EdgeId) -> &[TriId] {
        &self.edges[e].tris
    }

    /// Internal edges radiating from a vertex.
    pub fn internal_rays(&self, v: VertexId) -> Vec<EdgeId> {
        self.vertex_edges[v]
            .iter()
            .copied()
            .filter(|&e| !self.edges[e].is_border())
            .collect()
    }

    pub fn vertex_xy(&self, v: VertexId) -> (f64, f64) {
        (self.vertices[v].x, self.vertices[v].y)
    }

    /// Axis-aligned bounding box as ((xmin, ymin), (xmax, ymax)).
    pub fn bounding_box(&self) -> ((f64, f64), (f64, f64)) {
        let mut lo = (f64::INFINITY, f64::INFINITY);
        let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.0 = lo.0.min(v.x);
            lo.1 = lo.1.min(v.y);
            hi.0 = hi.0.max(v.x);
            hi.1 = hi.1.max(v.y);
        }
        (lo, hi)
    }

    /// Outward unit normal of a border edge (pointing away from its
    /// single incident triangle).
    pub fn border_outward_normal(&self, e: EdgeId) -> (f64, f64) {
        let edge = &self.edges[e];
        debug_assert!(edge.is_border());
        // (la, lb) is normal to the edge with |(la, lb)| = length; fix the
        // side using the opposite vertex of the incident triangle.
        let t = &self.triangles[edge.tris[0]];
        let opp = t
            .vertices
            .iter()
            .copied()
            .find(|&v| v != edge.a && v != edge.b)
            .unwrap();
        let (ox, oy) = self.vertex_xy(opp);
        let val = edge.la * ox + edge.lb * oy + edge.lc;
        let s = if val > 0.0 { -1.0 } else { 1.0 };
        (s * edge.la / edge.length, s * edge.lb / edge.length)
    }

    /// Dirichlet vertices in ascending id order.
    pub fn dirichlet_vertices(&self) -> Vec<VertexId> {
        self.vertices
            .iter()
            .filter(|v| matches!(v.class, VertexClass::DirichletBoundary | VertexClass::MixedCorner))
            .map(|v| v.id)
            .collect()
    }

    pub fn internal_vertices(&self) -> Vec<VertexId> {
        self.vertices
            .iter()
            .filter(|v| v.class == VertexClass::Interior)
            .map(|v| v.id)
            .collect()
    }

    /// Triangles with two border edges (legal by default, see `MeshBuilder`).
    pub fn two_border_edge_elements(&self) -> Vec<TriId> {
        self.triangles
            .iter()
            .filter(|t| {
                t.edges.iter().filter(|&&e| self.edges[e].is_border()).count() >= 2
            })
            .map(|t| t.id)
            .collect()
    }
}

/// Mesh construction from raw vertex coordinates, triangle vertex triples
/// and boundary-edge tags.
pub struct MeshBuilder {
    coords: Vec<(f64, f64)>,
    tris: Vec<[VertexId; 3]>,
    tags: HashMap<(VertexId, VertexId), EdgeClass>,
    reject_two_border_edges: bool,
}

impl MeshBuilder {
    pub fn new(coords: Vec<(f64, f64)>, tris: Vec<[VertexId; 3]>) -> Self {
        MeshBuilder {
            coords,
            tris,
            tags: HashMap::new(),
            reject_two_border_edges: false,
        }
    }

    /// Tag a border edge given by its endpoint ids (any order).
    pub fn tag(mut self, a: VertexId, b: VertexId, class: EdgeClass) -> Self {
        self.tags.insert((a.min(b), a.max(b)), class);
        self
    }

    pub fn tag_all(mut self, tags: impl IntoIterator<Item = (VertexId, VertexId, EdgeClass)>) -> Self {
        for (a, b, c) in tags {
            self.tags.insert((a.min(b), a.max(b)), c);
        }
        self
    }

    /// Reject meshes containing an element with two border edges instead of
    /// accepting them. Off by default: such elements are handled correctly
    /// throughout the pipeline and occur in common structured meshes.
    pub fn reject_two_border_edges(mut self, yes: bool) -> Self {
        self.reject_two_border_edges = yes;
        self
    }

    pub fn build(self) -> Result<Mesh, MeshError> {
        let nv = self.coords.len();
        let nt = self.tris.len();

        // Orient triangles counter-clockwise.
        let mut tris = Vec::with_capacity(nt);
        for (id, t) in self.tris.iter().enumerate() {
            for &v in t {
                if v >= nv {
                    return Err(MeshError::InvalidVertexId(id, v));
                }
            }
            let [p, q, r] = *t;
            let (ax, ay) = self.coords[p];
            let (bx, by) = self.coords[q];
            let (cx, cy) = self.coords[r];
            let double_area = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay);
            if double_area == 0.0 {
                return Err(MeshError::DegenerateTriangle(id));
            }
            let verts = if double_area > 0.0 { [p, q, r] } else { [p, r, q] };
            tris.push((verts, double_area.abs() * 0.5));
        }

        // Deduplicate edges; canonical orientation low id -> high id.
        let mut edge_index: HashMap<(VertexId, VertexId), EdgeId> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut tri_edges = vec![[0usize; 3]; nt];
        for (tid, (verts, _)) in tris.iter().enumerate() {
            for k in 0..3 {
                let (u, v) = (verts[k], verts[(k + 1) % 3]);
                let key = (u.min(v), u.max(v));
                let eid = *edge_index.entry(key).or_insert_with(|| {
                    let id = edges.len();
                    let (a, b) = key;
                    let (xa, ya) = self.coords[a];
                    let (xb, yb) = self.coords[b];
                    let la = yb - ya;
                    let lb = xa - xb;
                    let lc = xb * ya - yb * xa;
                    edges.push(Edge {
                        id,
                        a,
                        b,
                        la,
                        lb,
                        lc,
                        length: (la * la + lb * lb).sqrt(),
                        midpoint: (0.5 * (xa + xb), 0.5 * (ya + yb)),
                        class: EdgeClass::Internal,
                        tris: Vec::with_capacity(2),
                    });
                    id
                });
                if edges[eid].tris.len() >= 2 {
                    return Err(MeshError::NonManifoldEdge(key.0, key.1));
                }
                edges[eid].tris.push(tid);
                tri_edges[tid][k] = eid;
            }
        }

        let scale = self
            .coords
            .iter()
            .fold(0.0f64, |m, &(x, y)| m.max(x.abs()).max(y.abs()))
            .max(1e-300);
        for e in &edges {
            if e.length <= 1e-12 * scale {
                return Err(MeshError::DegenerateEdge(e.a, e.b));
            }
        }

        // Border classification from tags.
        let mut tags = self.tags;
        for e in &mut edges {
            let key = (e.a, e.b);
            match e.tris.len() {
                1 => {
                    e.class = match tags.remove(&key) {
                        Some(EdgeClass::Internal) | None => {
                            return Err(MeshError::UntaggedBorderEdge(e.a, e.b))
                        }
                        Some(c) => c,
                    };
                }
                2 => {
                    if tags.remove(&key).is_some() {
                        return Err(MeshError::TagOnInternalEdge(e.a, e.b));
                    }
                }
                _ => unreachable!(),
            }
        }
        if let Some((&(a, b), _)) = tags.iter().next() {
            return Err(MeshError::TagOnInternalEdge(a, b));
        }

        // Vertex adjacency and classification.
        let mut vertex_edges = vec![Vec::new(); nv];
        for e in &edges {
            vertex_edges[e.a].push(e.id);
            vertex_edges[e.b].push(e.id);
        }
        let mut vertex_tris = vec![Vec::new(); nv];
        for (tid, (verts, _)) in tris.iter().enumerate() {
            for &v in verts {
                vertex_tris[v].push(tid);
            }
        }
        let mut vertices = Vec::with_capacity(nv);
        for id in 0..nv {
            let (mut has_n, mut has_d) = (false, false);
            for &e in &vertex_edges[id] {
                match edges[e].class {
                    EdgeClass::Neumann => has_n = true,
                    EdgeClass::Dirichlet => has_d = true,
                    EdgeClass::Internal => {}
                }
            }
            let class = match (has_n, has_d) {
                (false, false) => VertexClass::Interior,
                (true, false) => VertexClass::NeumannBoundary,
                (false, true) => VertexClass::DirichletBoundary,
                (true, true) => VertexClass::MixedCorner,
            };
            let (x, y) = self.coords[id];
            vertices.push(Vertex { id, x, y, class });
        }

        // Connectivity (vertex graph).
        if nv > 0 {
            let mut seen = vec![false; nv];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut reached = 1;
            while let Some(v) = stack.pop() {
                for &e in &vertex_edges[v] {
                    let w = if edges[e].a == v { edges[e].b } else { edges[e].a };
                    if !seen[w] {
                        seen[w] = true;
                        reached += 1;
                        stack.push(w);
                    }
                }
            }
            if reached != nv {
                return Err(MeshError::DisconnectedMesh);
            }
        }

        // The boundary must be a disjoint union of simple cycles: exactly
        // two border edges at every border vertex.
        for v in 0..nv {
            let nb = vertex_edges[v]
                .iter()
                .filter(|&&e| edges[e].is_border())
                .count();
            if nb != 0 && nb != 2 {
                return Err(MeshError::PinchedBoundary(v));
            }
        }

        // Orientation coefficients: matching direction on internal edges,
        // +1 on border edges by convention.
        let mut triangles = Vec::with_capacity(nt);
        for (tid, (verts, area)) in tris.iter().enumerate() {
            let mut signs = [1i8; 3];
            for k in 0..3 {
                let e = &edges[tri_edges[tid][k]];
                if e.is_border() {
                    signs[k] = 1;
                } else {
                    let (u, v) = (verts[k], verts[(k + 1) % 3]);
                    signs[k] = if (e.a, e.b) == (u, v) { 1 } else { -1 };
                    debug_assert!((e.a, e.b) == (u, v) || (e.a, e.b) == (v, u));
                }
            }
            triangles.push(Triangle {
                id: tid,
                vertices: *verts,
                edges: tri_edges[tid],
                signs,
                area: *area,
            });
        }

        if self.reject_two_border_edges {
            for t in &triangles {
                let nb = t.edges.iter().filter(|&&e| edges[e].is_border()).count();
                if nb >= 2 {
                    return Err(MeshError::ElementWithTwoBorderEdges(t.id));
                }
            }
        }

        // Boundary loops: walk the two-regular border graph.
        let boundary_loops = trace_boundary_loops(&vertices, &edges, &vertex_edges);

        let internal_edges: Vec<EdgeId> = edges
            .iter()
            .filter(|e| !e.is_border())
            .map(|e| e.id)
            .collect();
        let mut internal_index = vec![None; edges.len()];
        for (col, &e) in internal_edges.iter().enumerate() {
            internal_index[e] = Some(col);
        }

        let n_border_edges = edges.len() - internal_edges.len();
        let n_border_vertices = vertices
            .iter()
            .filter(|v| v.class != VertexClass::Interior)
            .count();
        let euler = nt as i64 - edges.len() as i64 + nv as i64;
        let holes = 1 - euler;
        if holes < 0 || boundary_loops.len() as i64 != holes + 1 {
            // Either count would break the topology downstream.
            return Err(MeshError::DisconnectedMesh);
        }
        debug_assert_eq!(3 * nt, 2 * internal_edges.len() + n_border_edges);
        debug_assert_eq!(n_border_edges, n_border_vertices);

        let counts = MeshCounts {
            triangles: nt,
            edges: edges.len(),
            internal_edges: internal_edges.len(),
            border_edges: n_border_edges,
            vertices: nv,
            internal_vertices: nv - n_border_vertices,
            border_vertices: n_border_vertices,
            holes: holes as usize,
            components: 1,
        };

        Ok(Mesh {
            vertices,
            edges,
            triangles,
            counts,
            internal_edges,
            internal_index,
            boundary_loops,
            vertex_edges,
            vertex_tris,
        })
    }
}

/// Walk the border edges into closed vertex loops; the loop enclosing the
/// largest area comes first (the outer boundary).
fn trace_boundary_loops(
    vertices: &[Vertex],
    edges: &[Edge],
    vertex_edges: &[Vec<EdgeId>],
) -> Vec<Vec<VertexId>> {
    let mut visited = vec![false; edges.len()];
    let mut loops: Vec<Vec<VertexId>> = Vec::new();
    for start_edge in edges.iter().filter(|e| e.is_border()) {
        if visited[start_edge.id] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut v = start_edge.a;
        let mut e = start_edge.id;
        loop {
            visited[e] = true;
            cycle.push(v);
            let w = if edges[e].a == v { edges[e].b } else { edges[e].a };
            let next = vertex_edges[w]
                .iter()
                .copied()
                .find(|&f| f != e && edges[f].is_border() && !visited[f]);
            v = w;
            match next {
                Some(f) => e = f,
                None => break,
            }
        }
        loops.push(cycle);
    }
    // Outer loop first, by enclosed polygon area.
    loops.sort_by(|l1, l2| {
        let a1 = polygon_area(vertices, l1).abs();
        let a2 = polygon_area(vertices, l2).abs();
        a2.total_cmp(&a1)
    });
    loops
}

fn polygon_area(vertices: &[Vertex], cycle: &[VertexId]) -> f64 {
    let n = cycle.len();
    let mut s = 0.0;
    for i in 0..n {
        let p = &vertices[cycle[i]];
        let q = &vertices[cycle[(i + 1) % n]];
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s
}
