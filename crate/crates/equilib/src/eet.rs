//! Classical element equilibration: balanced edge works from independent
//! vertex star-patch systems, linear tractions by edge mass-matrix
//! inversion. Serves as an independent oracle and CPU baseline for the
//! global route; the element stage downstream is shared.

use crate::basis::Block;
use crate::error::EetError;
use crate::fe::{barycentric, FeSolution, LoadCase, Material};
use crate::mesh::{EdgeClass, EdgeId, Mesh, VertexId};
use crate::prolongation::{traction_from_hat_works, BorderData, WorkGeometry, WorkSet};
use crate::quadrature::{gauss_legendre, triangle_rule};
use nalgebra::{DMatrix, Vector2};
use rayon::prelude::*;

/// Works of the edge tractions against one vertex hat function, per
/// radiating internal edge.
#[derive(Clone, Debug)]
pub struct StarPatchSolve {
    pub vertex: VertexId,
    /// (edge id, hat work per direction).
    pub ray_works: Vec<(EdgeId, Vector2<f64>)>,
    /// Dimension of the patch null space (0 when determined).
    pub null_dim: usize,
}

/// Internal residual of one element against a vertex hat field,
/// independently of the canonical-basis machinery.
fn hat_residual(
    mesh: &Mesh,
    solution: &FeSolution,
    load: &LoadCase,
    tri: usize,
    vertex: VertexId,
) -> Vector2<f64> {
    let t = &mesh.triangles[tri];
    let k = t.vertices.iter().position(|&v| v == vertex).unwrap();
    let p: Vec<(f64, f64)> = t.vertices.iter().map(|&v| mesh.vertex_xy(v)).collect();
    let (j, l) = ((k + 1) % 3, (k + 2) % 3);
    let inv2a = 1.0 / (2.0 * t.area);
    let gx = (p[j].1 - p[l].1) * inv2a;
    let gy = (p[l].0 - p[j].0) * inv2a;
    let sig = &solution.sigma_h[tri];
    // sigma : eps(phi e) integrated over the element (constant integrand).
    let mut r = Vector2::new(
        t.area * (sig[0] * gx + sig[2] * gy),
        t.area * (sig[1] * gy + sig[2] * gx),
    );
    let degree = load.body.product_degree(1).max(3);
    let verts: [(f64, f64); 3] = std::array::from_fn(|m| p[m]);
    for q in triangle_rule(verts, degree) {
        let f = (load.body.eval)(q.x, q.y);
        let lam = barycentric(mesh, tri, q.x, q.y);
        r -= q.w * lam[k] * f;
    }
    r
}

/// Known hat work of the border-edge traction data at a vertex.
fn border_ray_work(
    mesh: &Mesh,
    load: &LoadCase,
    solution: &FeSolution,
    border: &BorderData,
    edge: EdgeId,
    vertex: VertexId,
) -> Vector2<f64> {
    let e = &mesh.edges[edge];
    match e.class {
        EdgeClass::Neumann => {
            let (xa, ya) = mesh.vertex_xy(e.a);
            let (xb, yb) = mesh.vertex_xy(e.b);
            let mut w = Vector2::zeros();
            for &(g, wq) in &gauss_legendre((load.neumann_degree as usize + 2) / 2 + 1) {
                let s = 0.5 * (g + 1.0);
                let (x, y) = (xa + s * (xb - xa), ya + s * (yb - ya));
                let phi = if vertex == e.a { 1.0 - s } else { s };
                w += 0.5 * e.length * wq * phi * (load.neumann)(e.id, x, y);
            }
            w
        }
        EdgeClass::Dirichlet => {
            let (aa, ab) = border.alpha[edge].expect("dirichlet alpha");
            let a = if vertex == e.a { aa } else { ab };
            a * solution.reaction(vertex).expect("dirichlet reaction")
        }
        EdgeClass::Internal => unreachable!(),
    }
}

/// Solve one star-patch system: one equation per patch triangle, one
/// unknown per internal ray; under-determined patches (interior vertices)
/// are closed by minimum distance to the averaged FE works.
pub fn solve_star_patch(
    mesh: &Mesh,
    material: &Material,
    load: &LoadCase,
    solution: &FeSolution,
    border: &BorderData,
    fe_target: &dyn Fn(EdgeId, VertexId) -> Vector2<f64>,
    vertex: VertexId,
) -> Result<StarPatchSolve, EetError> {
    let _ = material;
    let star = mesh.star_patch(vertex);
    let rays: Vec<EdgeId> = mesh
        .vertex_edges(vertex)
        .iter()
        .copied()
        .filter(|&e| !mesh.edges[e].is_border())
        .collect();
    let col_of = |e: EdgeId| rays.iter().position(|&r| r == e);
    let k = star.len();
    let m = rays.len();
    let mut a = DMatrix::<f64>::zeros(k, m);
    let mut rhs = DMatrix::<f64>::zeros(k, 2);
    for (row, &t) in star.iter().enumerate() {
        let r = hat_residual(mesh, solution, load, t, vertex);
        rhs[(row, 0)] = r.x;
        rhs[(row, 1)] = r.y;
        let tri = &mesh.triangles[t];
        for &e in &tri.edges {
            let ed = &mesh.edges[e];
            if ed.a != vertex && ed.b != vertex {
                continue;
            }
            let sign = tri.sign_on(e) as f64;
            if let Some(c) = col_of(e) {
                a[(row, c)] += sign;
            } else {
                // Border ray: substitute the known work.
                let w = border_ray_work(mesh, load, solution, border, e, vertex);
                rhs[(row, 0)] -= sign * w.x;
                rhs[(row, 1)] -= sign * w.y;
            }
        }
    }
    if m == 0 {
        // No unknowns (all rays on the border): the equations must already
        // balance with the substituted data.
        let resid = rhs.norm();
        let scale = star
            .iter()
            .map(|&t| hat_residual(mesh, solution, load, t, vertex).norm())
            .sum::<f64>()
            .max(1e-300);
        if resid > 1e-8 * scale.max(1.0) {
            return Err(EetError::InconsistentPatch { vertex, residual: resid / scale });
        }
        return Ok(StarPatchSolve { vertex, ray_works: Vec::new(), null_dim: 0 });
    }

    // Minimum-distance solution: w = w_target + pinv(A) (rhs - A w_target).
    let mut target = DMatrix::<f64>::zeros(m, 2);
    for (c, &e) in rays.iter().enumerate() {
        let w = fe_target(e, vertex);
        target[(c, 0)] = w.x;
        target[(c, 1)] = w.y;
    }
    let shifted = &rhs - &a * &target;
    let svd = a.clone().svd(true, true);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * svd.singular_values.max())
        .count();
    let corr = svd
        .solve(&shifted, 1e-10)
        .map_err(|_| EetError::InconsistentPatch { vertex, residual: f64::NAN })?;
    let w = target + corr;
    let resid = (&a * &w - &rhs).norm();
    let scale = rhs.norm().max(a.norm() * w.norm()).max(1e-300);
    if resid > 1e-8 * scale {
        return Err(EetError::InconsistentPatch { vertex, residual: resid / scale });
    }
    Ok(StarPatchSolve {
        vertex,
        ray_works: rays
            .iter()
            .enumerate()
            .map(|(c, &e)| (e, Vector2::new(w[(c, 0)], w[(c, 1)])))
            .collect(),
        null_dim: m - rank,
    })
}

/// The averaged-FE-traction hat work used as the closure target:
/// a constant traction's work against a hat function is len * F / 2.
pub fn fe_hat_target<'a>(
    mesh: &'a Mesh,
    solution: &'a FeSolution,
) -> impl Fn(EdgeId, VertexId) -> Vector2<f64> + Sync + 'a {
    move |edge, _vertex| {
        let e = &mesh.edges[edge];
        let ts = mesh.edge_triangles(edge);
        let mut f_avg = Vector2::zeros();
        let total: f64 = ts.iter().map(|&t| mesh.triangles[t].area).sum();
        for &t in ts {
            let tri = &mesh.triangles[t];
            let opp = tri
                .vertices
                .iter()
                .copied()
                .find(|&v| v != e.a && v != e.b)
                .unwrap();
            let (ox, oy) = mesh.vertex_xy(opp);
            let val = e.la * ox + e.lb * oy + e.lc;
            let s = if val > 0.0 { -1.0 } else { 1.0 };
            let n = Vector2::new(s * e.la / e.length, s * e.lb / e.length);
            let sig = &solution.sigma_h[t];
            let traction = Vector2::new(sig[0] * n.x + sig[2] * n.y, sig[2] * n.x + sig[1] * n.y);
            f_avg += (tri.area / total) * (tri.sign_on(edge) as f64) * traction;
        }
        0.5 * e.length * f_avg
    }
}

/// Edge works of the classical route: solve every star patch, pair the two
/// vertex works of each internal edge, invert the edge mass matrix into a
/// linear traction, and express its canonical works in the shared frame.
pub fn classic_edge_works(
    mesh: &Mesh,
    material: &Material,
    load: &LoadCase,
    solution: &FeSolution,
    border: &BorderData,
    geom: &WorkGeometry,
) -> Result<WorkSet, EetError> {
    let target = fe_hat_target(mesh, solution);
    let patches: Vec<StarPatchSolve> = (0..mesh.counts.vertices)
        .into_par_iter()
        .map(|v| solve_star_patch(mesh, material, load, solution, border, &target, v))
        .collect::<Result<_, _>>()?;

    // Gather the two endpoint works of each internal edge.
    let ne = mesh.counts.internal_edges;
    let mut w_origin: Vec<Vector2<f64>> = vec![Vector2::zeros(); ne];
    let mut w_end: Vec<Vector2<f64>> = vec![Vector2::zeros(); ne];
    for p in &patches {
        for &(e, w) in &p.ray_works {
            let col = mesh.internal_index[e].unwrap();
            if mesh.edges[e].a == p.vertex {
                w_origin[col] = w;
            } else {
                w_end[col] = w;
            }
        }
    }
    let mut works = WorkSet::zeros(ne);
    for col in 0..ne {
        let e = mesh.internal_edges[col];
        let (f0, f1) = traction_from_hat_works(mesh.edges[e].length, w_origin[col], w_end[col]);
        let fe = &geom.internal[col];
        for dir in 0..2 {
            let l = fe.len;
            works.set(Block::One, col, dir, l * f0[dir]);
            works.set(Block::X, col, dir, l * (f0[dir] * fe.xo) - l * fe.b * f1[dir] / 12.0);
            works.set(Block::Y, col, dir, l * (f0[dir] * fe.yo) + l * fe.a * f1[dir] / 12.0);
        }
    }
    Ok(works)
}
