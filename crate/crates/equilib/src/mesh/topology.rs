//! Boundary operators, the signed incidence matrix and its kernel basis.

use super::{EdgeId, Mesh, TriId, VertexId};
use crate::error::MeshError;
use std::collections::{HashMap, HashSet, VecDeque};

/// Mod-2 boundary of a set of triangles: edges incident to exactly one
/// member of the set.
pub fn boundary_of_triangles(mesh: &Mesh, tris: &HashSet<TriId>) -> HashSet<EdgeId> {
    let mut count: HashMap<EdgeId, usize> = HashMap::new();
    for &t in tris {
        for &e in &mesh.triangles[t].edges {
            *count.entry(e).or_insert(0) += 1;
        }
    }
    count
        .into_iter()
        .filter_map(|(e, c)| (c % 2 == 1).then_some(e))
        .collect()
}

/// Mod-2 boundary of a set of edges: vertices incident to an odd number of
/// members.
pub fn boundary_of_edges(mesh: &Mesh, edges: &HashSet<EdgeId>) -> HashSet<VertexId> {
    let mut count: HashMap<VertexId, usize> = HashMap::new();
    for &e in edges {
        *count.entry(mesh.edges[e].a).or_insert(0) += 1;
        *count.entry(mesh.edges[e].b).or_insert(0) += 1;
    }
    count
        .into_iter()
        .filter_map(|(v, c)| (c % 2 == 1).then_some(v))
        .collect()
}

/// Signed element-to-internal-edge incidence matrix. Every column has
/// exactly two entries of opposite sign: `plus` carries +1, `minus` -1.
#[derive(Clone, Debug)]
pub struct IncidenceMatrix {
    pub n_tri: usize,
    /// One entry per internal edge, in `mesh.internal_edges` column order.
    pub cols: Vec<IncidenceColumn>,
}

#[derive(Clone, Copy, Debug)]
pub struct IncidenceColumn {
    pub edge: EdgeId,
    pub plus: TriId,
    pub minus: TriId,
}

impl IncidenceMatrix {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let cols = mesh
            .internal_edges
            .iter()
            .map(|&e| {
                let ts = mesh.edge_triangles(e);
                debug_assert_eq!(ts.len(), 2);
                let (s0, s1) = (
                    mesh.triangles[ts[0]].sign_on(e),
                    mesh.triangles[ts[1]].sign_on(e),
                );
                debug_assert_eq!(s0 + s1, 0);
                if s0 > 0 {
                    IncidenceColumn { edge: e, plus: ts[0], minus: ts[1] }
                } else {
                    IncidenceColumn { edge: e, plus: ts[1], minus: ts[0] }
                }
            })
            .collect();
        IncidenceMatrix { n_tri: mesh.counts.triangles, cols }
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    /// y = Delta * x (triangles from internal-edge values).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_tri];
        for (j, c) in self.cols.iter().enumerate() {
            y[c.plus] += x[j];
            y[c.minus] -= x[j];
        }
        y
    }

    /// y = Delta^T * x (internal edges from triangle values).
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        self.cols
            .iter()
            .map(|c| x[c.plus] - x[c.minus])
            .collect()
    }

    /// Exact integer product Delta * n for a signed integer edge vector.
    pub fn apply_int(&self, x: &[i64]) -> Vec<i64> {
        let mut y = vec![0i64; self.n_tri];
        for (j, c) in self.cols.iter().enumerate() {
            y[c.plus] += x[j];
            y[c.minus] -= x[j];
        }
        y
    }
}

/// One sparse signed-integer column of the kernel basis, as
/// (internal-edge column index, coefficient) pairs.
pub type KernelColumn = Vec<(usize, i64)>;

/// A closed loop of internal edges encircling one hole, with the dual
/// triangle cycle that produced it (kept for diagnostics).
#[derive(Clone, Debug)]
pub struct HoleLoop {
    pub column: KernelColumn,
    pub dual_cycle: Vec<TriId>,
}

/// Right kernel basis N = [N_V, N_h] of the incidence matrix: one signed
/// star column per internal vertex and one loop column per hole.
#[derive(Clone, Debug)]
pub struct KernelBasis {
    /// (internal vertex id, sparse column) in ascending vertex order.
    pub vertex_columns: Vec<(VertexId, KernelColumn)>,
    pub hole_columns: Vec<HoleLoop>,
}

impl KernelBasis {
    pub fn n_cols(&self) -> usize {
        self.vertex_columns.len() + self.hole_columns.len()
    }

    /// All columns, vertex columns first.
    pub fn columns(&self) -> impl Iterator<Item = &KernelColumn> {
        self.vertex_columns
            .iter()
            .map(|(_, c)| c)
            .chain(self.hole_columns.iter().map(|h| &h.column))
    }

    pub fn compute(mesh: &Mesh, delta: &IncidenceMatrix) -> Result<Self, MeshError> {
        let mut vertex_columns = Vec::new();
        for v in mesh.internal_vertices() {
            vertex_columns.push((v, star_column(mesh, v)));
        }
        let mut hole_columns = Vec::new();
        for (k, hole) in mesh.boundary_loops.iter().enumerate().skip(1) {
            hole_columns.push(hole_loop_column(mesh, k - 1, hole)?);
        }
        let basis = KernelBasis { vertex_columns, hole_columns };
        // Exact integer verification of Delta * N = 0.
        let ne = delta.n_cols();
        for col in basis.columns() {
            let mut x = vec![0i64; ne];
            for &(j, s) in col {
                x[j] = s;
            }
            if delta.apply_int(&x).iter().any(|&r| r != 0) {
                return Err(MeshError::HoleLoopNotFound(0));
            }
        }
        Ok(basis)
    }
}

/// Kernel column of an internal vertex: signed indicator of its radiating
/// internal edges, signs propagated so every star triangle balances.
fn star_column(mesh: &Mesh, v: VertexId) -> KernelColumn {
    let rays = mesh.internal_rays(v);
    debug_assert!(!rays.is_empty());
    let ray_set: HashSet<EdgeId> = rays.iter().copied().collect();
    let mut coeff: HashMap<EdgeId, i64> = HashMap::new();
    coeff.insert(rays[0], 1);
    let mut queue = VecDeque::from([rays[0]]);
    while let Some(e) = queue.pop_front() {
        let we = coeff[&e];
        for &t in mesh.edge_triangles(e) {
            let tri = &mesh.triangles[t];
            for &f in &tri.edges {
                if f != e && ray_set.contains(&f) {
                    let w = -(tri.sign_on(e) as i64) * (tri.sign_on(f) as i64) * we;
                    match coeff.get(&f) {
                        Some(&prev) => debug_assert_eq!(prev, w, "star closure at vertex {v}"),
                        None => {
                            coeff.insert(f, w);
                            queue.push_back(f);
                        }
                    }
                }
            }
        }
    }
    debug_assert_eq!(coeff.len(), rays.len());
    let mut col: Vec<(usize, i64)> = coeff
        .into_iter()
        .map(|(e, s)| (mesh.internal_index[e].unwrap(), s))
        .collect();
    col.sort_unstable();
    col
}

/// Kernel column encircling one hole.
///
/// A cut ray is cast from a point of the hole boundary away from the hole;
/// the internal edges crossing it are blocked in the triangle-adjacency
/// (dual) graph except for the crossing nearest the hole, through which the
/// cycle is closed. A breadth-first search connects the two triangles of
/// that edge; the resulting dual cycle crosses the cut exactly once, hence
/// winds the hole once. Signs follow from the per-triangle balance.
fn hole_loop_column(mesh: &Mesh, hole_idx: usize, hole: &[VertexId]) -> Result<HoleLoop, MeshError> {
    let hole_set: HashSet<VertexId> = hole.iter().copied().collect();
    let centroid = {
        let (mut cx, mut cy) = (0.0, 0.0);
        for &v in hole {
            let (x, y) = mesh.vertex_xy(v);
            cx += x;
            cy += y;
        }
        (cx / hole.len() as f64, cy / hole.len() as f64)
    };
    let ((lx, ly), (hx, hy)) = mesh.bounding_box();
    let ray_len = 4.0 * ((hx - lx).hypot(hy - ly)).max(1e-300);

    // Deterministic direction sequence; skip directions passing too close
    // to a vertex.
    'dirs: for k in 0..64u32 {
        let theta = 0.5 + 2.399963229728653 * k as f64; // golden-angle steps
        let dir = (theta.cos(), theta.sin());
        let tip = (centroid.0 + ray_len * dir.0, centroid.1 + ray_len * dir.1);
        let tol = 1e-9 * ray_len;
        for v in &mesh.vertices {
            if point_segment_distance((v.x, v.y), centroid, tip) < tol {
                continue 'dirs;
            }
        }
        // Internal edges properly crossing the ray, with crossing parameter.
        let mut crossings: Vec<(f64, usize)> = Vec::new();
        for (col, &e) in mesh.internal_edges.iter().enumerate() {
            let edge = &mesh.edges[e];
            if let Some(t) = segment_intersection_param(
                centroid,
                tip,
                mesh.vertex_xy(edge.a),
                mesh.vertex_xy(edge.b),
            ) {
                crossings.push((t, col));
            }
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(|a, b| a.0.total_cmp(&b.0));
        let blocked: HashSet<usize> = crossings.iter().map(|&(_, c)| c).collect();
        let gate_col = crossings[0].1;

        // Strip-first search per the construction around the hole; fall
        // back to the full dual graph if the strip does not close.
        for restrict in [true, false] {
            if let Some(hl) = close_dual_cycle(mesh, gate_col, &blocked, restrict.then_some(&hole_set)) {
                return Ok(hl);
            }
        }
    }
    Err(MeshError::HoleLoopNotFound(hole_idx))
}

fn close_dual_cycle(
    mesh: &Mesh,
    gate_col: usize,
    blocked: &HashSet<usize>,
    strip: Option<&HashSet<VertexId>>,
) -> Option<HoleLoop> {
    let in_strip = |t: TriId| {
        strip.is_none_or(|s| mesh.triangles[t].vertices.iter().any(|v| s.contains(v)))
    };
    let gate_edge = mesh.internal_edges[gate_col];
    let ts = mesh.edge_triangles(gate_edge);
    let (start, goal) = (ts[0], ts[1]);
    if !in_strip(start) || !in_strip(goal) {
        return None;
    }
    // BFS over triangle adjacency avoiding blocked edges entirely.
    let mut prev: HashMap<TriId, (TriId, EdgeId)> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    let mut seen: HashSet<TriId> = HashSet::from([start]);
    while let Some(t) = queue.pop_front() {
        if t == goal {
            break;
        }
        let tri = &mesh.triangles[t];
        for &e in &tri.edges {
            if mesh.edges[e].is_border() {
                continue;
            }
            let col = mesh.internal_index[e].unwrap();
            if blocked.contains(&col) {
                continue;
            }
            for &u in mesh.edge_triangles(e) {
                if u != t && !seen.contains(&u) && in_strip(u) {
                    seen.insert(u);
                    prev.insert(u, (t, e));
                    queue.push_back(u);
                }
            }
        }
    }
    if !seen.contains(&goal) {
        return None;
    }
    // Reconstruct the dual cycle goal -> ... -> start, closed by the gate.
    let mut cycle_tris = vec![goal];
    let mut cycle_edges = Vec::new();
    let mut cur = goal;
    while cur != start {
        let (p, e) = prev[&cur];
        cycle_edges.push(e);
        cycle_tris.push(p);
        cur = p;
    }
    cycle_edges.push(gate_edge);

    // Propagate signs: consecutive triangles around the cycle must balance.
    let n = cycle_edges.len();
    let mut coeff: Vec<i64> = vec![0; n];
    coeff[0] = 1;
    for i in 1..n {
        // Triangle between edge i-1 and edge i is cycle_tris[i % tris].
        let t = &mesh.triangles[cycle_tris[i % cycle_tris.len()]];
        let (ep, ec) = (cycle_edges[i - 1], cycle_edges[i]);
        coeff[i] = -(t.sign_on(ep) as i64) * (t.sign_on(ec) as i64) * coeff[i - 1];
    }
    // Closure consistency across the first triangle.
    let t0 = &mesh.triangles[cycle_tris[0]];
    let closure = (t0.sign_on(cycle_edges[n - 1]) as i64) * coeff[n - 1]
        + (t0.sign_on(cycle_edges[0]) as i64) * coeff[0];
    if closure != 0 {
        return None;
    }
    let mut column: KernelColumn = cycle_edges
        .iter()
        .zip(&coeff)
        .map(|(&e, &s)| (mesh.internal_index[e].unwrap(), s))
        .collect();
    column.sort_unstable();
    Some(HoleLoop { column, dual_cycle: cycle_tris })
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    (p.0 - qx).hypot(p.1 - qy)
}

/// Proper intersection parameter of segment ab (the ray) with segment cd,
/// or None when they do not properly cross.
fn segment_intersection_param(
    a: (f64, f64),
    b: (f64, f64),
    c: (f64, f64),
    d: (f64, f64),
) -> Option<f64> {
    let r = (b.0 - a.0, b.1 - a.1);
    let s = (d.0 - c.0, d.1 - c.1);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom == 0.0 {
        return None;
    }
    let qp = (c.0 - a.0, c.1 - a.1);
    let t = (qp.0 * s.1 - qp.1 * s.0) / denom;
    let u = (qp.0 * r.1 - qp.1 * r.0) / denom;
    (t > 0.0 && t < 1.0 && u > 0.0 && u < 1.0).then_some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{EdgeClass, MeshBuilder};

    fn two_triangle_square() -> Mesh {
        MeshBuilder::new(
            vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .tag_all([
            (0, 1, EdgeClass::Dirichlet),
            (1, 2, EdgeClass::Dirichlet),
            (2, 3, EdgeClass::Dirichlet),
            (3, 0, EdgeClass::Dirichlet),
        ])
        .build()
        .unwrap()
    }

    fn four_triangle_square() -> Mesh {
        MeshBuilder::new(
            vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)],
            vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]],
        )
        .tag_all([
            (0, 1, EdgeClass::Dirichlet),
            (1, 2, EdgeClass::Dirichlet),
            (2, 3, EdgeClass::Dirichlet),
            (3, 0, EdgeClass::Dirichlet),
        ])
        .build()
        .unwrap()
    }

    /// Dense integer rank by fraction-free Gaussian elimination; the
    /// independent oracle for incidence-matrix rank checks.
    pub(crate) fn integer_rank(rows: usize, cols: usize, entries: &[(usize, usize, i64)]) -> usize {
        let mut m = vec![vec![0i128; cols]; rows];
        for &(i, j, v) in entries {
            m[i][j] += v as i128;
        }
        let mut rank = 0;
        for col in 0..cols {
            let Some(p) = (rank..rows).find(|&r| m[r][col] != 0) else {
                continue;
            };
            m.swap(rank, p);
            for r in 0..rows {
                if r != rank && m[r][col] != 0 {
                    let (a, b) = (m[rank][col], m[r][col]);
                    for c in 0..cols {
                        m[r][c] = m[r][c] * a - m[rank][c] * b;
                    }
                }
            }
            rank += 1;
            if rank == rows {
                break;
            }
        }
        rank
    }

    fn delta_entries(delta: &IncidenceMatrix) -> Vec<(usize, usize, i64)> {
        let mut e = Vec::new();
        for (j, c) in delta.cols.iter().enumerate() {
            e.push((c.plus, j, 1));
            e.push((c.minus, j, -1));
        }
        e
    }

    #[test]
    fn two_triangle_incidence_is_plus_minus_one() {
        let m = two_triangle_square();
        let d = IncidenceMatrix::from_mesh(&m);
        assert_eq!(d.n_cols(), 1);
        let c = d.cols[0];
        assert_ne!(c.plus, c.minus);
        // Column sums vanish: ones vector in the left kernel.
        let ones = vec![1.0; 2];
        assert_eq!(d.apply_transpose(&ones), vec![0.0]);
    }

    #[test]
    fn four_triangle_incidence_rank_three() {
        let m = four_triangle_square();
        let d = IncidenceMatrix::from_mesh(&m);
        assert_eq!(d.n_cols(), 4);
        assert_eq!(integer_rank(4, 4, &delta_entries(&d)), 3);
        let ones = vec![1.0; 4];
        assert!(d.apply_transpose(&ones).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn kernel_basis_two_triangle_square_is_empty() {
        let m = two_triangle_square();
        let d = IncidenceMatrix::from_mesh(&m);
        let n = KernelBasis::compute(&m, &d).unwrap();
        assert_eq!(n.n_cols(), 0);
    }

    #[test]
    fn kernel_basis_four_triangle_square() {
        let m = four_triangle_square();
        let d = IncidenceMatrix::from_mesh(&m);
        let n = KernelBasis::compute(&m, &d).unwrap();
        assert_eq!(n.n_cols(), 1);
        let (v, col) = &n.vertex_columns[0];
        assert_eq!(*v, 4);
        assert_eq!(col.len(), 4); // supported on the 4 internal rays
        assert!(col.iter().all(|&(_, s)| s == 1 || s == -1));
    }

    #[test]
    fn boundary_operators() {
        let m = four_triangle_square();
        // Boundary of a single triangle is its 3 edges.
        let b = boundary_of_triangles(&m, &HashSet::from([0usize]));
        assert_eq!(b.len(), 3);
        // Boundary of the full star patch of the center is the 4 outer edges.
        let star: HashSet<TriId> = m.star_patch(4).iter().copied().collect();
        let b = boundary_of_triangles(&m, &star);
        assert_eq!(b.len(), 4);
        assert!(b.iter().all(|&e| m.edges[e].is_border()));
        // Boundary of boundary is empty (closed loop of edges).
        let bb = boundary_of_edges(&m, &b);
        assert!(bb.is_empty());
    }

    #[test]
    fn co_boundary_counts() {
        let m = four_triangle_square();
        assert_eq!(m.vertex_edges(4).len(), 4);
        assert_eq!(m.star_patch(4).len(), 4);
        // Border vertex of the two-triangle square: 2 or 3 edges.
        let m2 = two_triangle_square();
        assert_eq!(m2.vertex_edges(1).len(), 2);
        assert_eq!(m2.vertex_edges(0).len(), 3);
        for &e in &m2.internal_edges {
            assert_eq!(m2.edge_triangles(e).len(), 2);
        }
    }
}
