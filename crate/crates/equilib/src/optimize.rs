//! Closing the solution set: choose the kernel coefficients of
//! `W = W0 + Z*gamma` under one of three criteria: least-squares distance
//! to the averaged FE works, the star-patch distance norm equivalent to
//! the classical equilibration closure, or direct minimization of the
//! reconstructed complementary energy.

use crate::basis::Block;
use crate::error::OptimizeError;
use crate::fe::FeSolution;
use crate::mesh::{Mesh, VertexClass};
use crate::prolongation::{KernelZ, WorkGeometry, WorkSet};
use crate::recovery::{element_load, ElementOperators};
use crate::smith::SmithFactors;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use nalgebra_sparse::{factorization::CscCholesky, CooMatrix, CscMatrix};

/// Criterion selecting one statically admissible field from the
/// prolongation solution set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    /// Euclidean distance to the averaged FE works.
    L2,
    /// The star-patch distance criterion of the classical equilibration
    /// technique, expressed as a norm on the work space.
    EetNorm,
    /// Direct minimization of the reconstructed complementary energy.
    Erdc,
    /// The classical per-patch construction (independent route).
    Classic,
}

impl Criterion {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "l2" => Some(Criterion::L2),
            "eet" | "eet_norm" => Some(Criterion::EetNorm),
            "erdc" => Some(Criterion::Erdc),
            "classic" => Some(Criterion::Classic),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::L2 => "l2",
            Criterion::EetNorm => "eet_norm",
            Criterion::Erdc => "erdc",
            Criterion::Classic => "classic",
        }
    }
}

/// Works of the area-weighted average FE traction on every internal edge,
/// plus the weights used.
pub struct FeWorks {
    pub works: WorkSet,
    /// Per internal-edge column: (theta of the plus triangle, theta of the
    /// minus triangle).
    pub theta: Vec<(f64, f64)>,
}

/// Average the elementwise tractions `delta * sigma_H . n` across each
/// internal edge with area weights and integrate them against the
/// canonical basis (constant traction, so the works close exactly).
pub fn fe_edge_works(
    mesh: &Mesh,
    solution: &FeSolution,
    geom: &WorkGeometry,
    delta: &crate::mesh::IncidenceMatrix,
) -> FeWorks {
    let ne = mesh.counts.internal_edges;
    let mut works = WorkSet::zeros(ne);
    let mut theta = Vec::with_capacity(ne);
    for (col, c) in delta.cols.iter().enumerate() {
        let edge = &mesh.edges[c.edge];
        let (a_plus, a_minus) = (mesh.triangles[c.plus].area, mesh.triangles[c.minus].area);
        let total = a_plus + a_minus;
        let th = (a_plus / total, a_minus / total);
        theta.push(th);
        let mut f_avg = nalgebra::Vector2::zeros();
        for (t, sign, w) in [(c.plus, 1.0, th.0), (c.minus, -1.0, th.1)] {
            // Outward unit normal of triangle t on this edge.
            let tri = &mesh.triangles[t];
            let opp = tri
                .vertices
                .iter()
                .copied()
                .find(|&v| v != edge.a && v != edge.b)
                .unwrap();
            let (ox, oy) = mesh.vertex_xy(opp);
            let val = edge.la * ox + edge.lb * oy + edge.lc;
            let s = if val > 0.0 { -1.0 } else { 1.0 };
            let n = nalgebra::Vector2::new(s * edge.la / edge.length, s * edge.lb / edge.length);
            let sig = &solution.sigma_h[t];
            let traction = nalgebra::Vector2::new(
                sig[0] * n.x + sig[2] * n.y,
                sig[2] * n.x + sig[1] * n.y,
            );
            f_avg += w * sign * traction;
        }
        let fe = &geom.internal[col];
        for dir in 0..2 {
            works.set(Block::One, col, dir, fe.len * f_avg[dir]);
            works.set(Block::X, col, dir, fe.len * fe.xo * f_avg[dir]);
            works.set(Block::Y, col, dir, fe.len * fe.yo * f_avg[dir]);
        }
    }
    FeWorks { works, theta }
}

/// Symmetric norm on the work space, block-diagonal per internal edge over
/// its (constant, x, y) works.
#[derive(Clone, Debug)]
pub struct NormMatrix {
    pub blocks: Vec<Matrix3<f64>>,
}

impl NormMatrix {
    pub fn identity(n_edges: usize) -> Self {
        NormMatrix { blocks: vec![Matrix3::identity(); n_edges] }
    }
}

/// The work-space norm whose minimization reproduces the classical
/// star-patch closure: for each internal edge, the squared misfits of the
/// vertex works at its internal endpoints.
///
/// The per-vertex misfit is `m = (W1 - W_H)/2 + eps * L F1 / 12` with
/// `eps = -1` at the edge origin and `+1` at the end (the derivative part
/// of the recovered linear traction changes sign between the endpoints);
/// constant tractions have F1 = 0, so the misfit is a linear form in the
/// work difference.
pub fn eet_norm_matrix(mesh: &Mesh, geom: &WorkGeometry) -> NormMatrix {
    let mut blocks = Vec::with_capacity(mesh.counts.internal_edges);
    for (col, &eid) in mesh.internal_edges.iter().enumerate() {
        let fe = &geom.internal[col];
        let edge = &mesh.edges[eid];
        let l2 = fe.len_scaled * fe.len_scaled;
        // p: the average-work functional; q: the slope functional L*F1/12.
        let p = Vector3::new(0.5, 0.0, 0.0);
        let q = Vector3::new(
            (fe.b * fe.xo - fe.a * fe.yo) / l2,
            -fe.b / l2,
            fe.a / l2,
        );
        let mut m = Matrix3::zeros();
        for (v, eps) in [(edge.a, -1.0), (edge.b, 1.0)] {
            if mesh.vertices[v].class == VertexClass::Interior {
                let f = p + eps * q;
                m += f * f.transpose();
            }
        }
        blocks.push(m);
    }
    NormMatrix { blocks }
}

/// Outcome of a kernel optimization.
pub struct OptimizeOutcome {
    /// Kernel coefficients, one row per internal vertex, columns are the
    /// two directions.
    pub gamma: DMatrix<f64>,
    pub works: WorkSet,
    /// True when the norm matrix needed trace regularization.
    pub regularized: bool,
}

/// Per-edge kernel entries: for every internal-edge column, the list of
/// (kernel column index, sign, scaled vertex coordinates).
fn edge_kernel_entries(
    mesh: &Mesh,
    smith: &SmithFactors,
    geom: &WorkGeometry,
) -> Vec<Vec<(usize, f64, f64, f64)>> {
    let mut per_edge: Vec<Vec<(usize, f64, f64, f64)>> =
        vec![Vec::new(); mesh.counts.internal_edges];
    for (k, (v, colv)) in smith.kernel.vertex_columns.iter().enumerate() {
        let (x, y) = mesh.vertex_xy(*v);
        let (xs, ys) = geom.frame.to_scaled(x, y);
        for &(edge_col, s) in colv {
            per_edge[edge_col].push((k, s as f64, xs, ys));
        }
    }
    per_edge
}

/// Minimize `|W0 + Z mu - W_H|_M` over the kernel coefficients; the two
/// directions are independent columns.
pub fn optimize_norm(
    mesh: &Mesh,
    smith: &SmithFactors,
    geom: &WorkGeometry,
    z: &KernelZ,
    works0: &WorkSet,
    fe_works: &WorkSet,
    norm: &NormMatrix,
) -> Result<OptimizeOutcome, OptimizeError> {
    let nv = z.n_cols();
    if nv == 0 {
        return Ok(OptimizeOutcome {
            gamma: DMatrix::zeros(0, 2),
            works: works0.clone(),
            regularized: false,
        });
    }
    let per_edge = edge_kernel_entries(mesh, smith, geom);

    // Z^T M Z and Z^T M (W0 - W_H), assembled edge by edge: the norm is
    // block-diagonal and a kernel column touches an edge only when its
    // vertex is an endpoint.
    let mut coo = CooMatrix::new(nv, nv);
    let mut rhs = DMatrix::<f64>::zeros(nv, 2);
    for (col, entries) in per_edge.iter().enumerate() {
        if entries.is_empty() {
            continue;
        }
        let m = &norm.blocks[col];
        let d: [Vector3<f64>; 2] = std::array::from_fn(|dir| {
            let w = works0.edge_works(col, dir);
            let h = fe_works.edge_works(col, dir);
            Vector3::new(w[0] - h[0], w[1] - h[1], w[2] - h[2])
        });
        for &(ki, si, xi, yi) in entries {
            let zi = si * Vector3::new(1.0, xi, yi);
            let mzi = m * zi;
            for &(kj, sj, xj, yj) in entries {
                let zj = sj * Vector3::new(1.0, xj, yj);
                coo.push(ki, kj, mzi.dot(&zj));
            }
            for dir in 0..2 {
                rhs[(ki, dir)] += mzi.dot(&d[dir]);
            }
        }
    }
    let zmz = CscMatrix::from(&coo);
    let (chol, regularized) = match CscCholesky::factor(&zmz) {
        Ok(c) => (c, false),
        Err(_) => {
            // Trace-scaled regularization for meshes where the criterion
            // is singular on part of the kernel.
            let trace: f64 = zmz
                .triplet_iter()
                .filter(|(i, j, _)| i == j)
                .map(|(_, _, &v)| v)
                .sum();
            let eps = 1e-12 * (trace / nv as f64).max(1e-300);
            let mut coo2 = CooMatrix::new(nv, nv);
            for (i, j, &v) in zmz.triplet_iter() {
                coo2.push(i, j, v);
            }
            for i in 0..nv {
                coo2.push(i, i, eps);
            }
            let reg = CscMatrix::from(&coo2);
            match CscCholesky::factor(&reg) {
                Ok(c) => (c, true),
                Err(_) => return Err(OptimizeError::IndefiniteNormMatrix),
            }
        }
    };
    let gamma = -chol.solve(&rhs);
    let mut works = works0.clone();
    z.accumulate(&mut works, &gamma);
    Ok(OptimizeOutcome { gamma, works, regularized })
}

/// Minimize the reconstructed complementary energy over the kernel: the
/// two directions couple, so the unknown is a single vector of length
/// `2 |V_int|` ordered (vertex, direction).
pub fn erdc_optimize(
    mesh: &Mesh,
    smith: &SmithFactors,
    geom: &WorkGeometry,
    z: &KernelZ,
    works0: &WorkSet,
    ops: &[ElementOperators],
) -> Result<OptimizeOutcome, OptimizeError> {
    let nv = z.n_cols();
    if nv == 0 {
        return Ok(OptimizeOutcome {
            gamma: DMatrix::zeros(0, 2),
            works: works0.clone(),
            regularized: false,
        });
    }
    let per_edge = edge_kernel_entries(mesh, smith, geom);
    let n = 2 * nv;
    let mut coo = CooMatrix::new(n, n);
    let mut rhs = DVector::<f64>::zeros(n);

    for op in ops {
        // Kernel columns touching this element: internal vertices of the
        // element, each in both directions.
        let mut local: Vec<(usize, usize)> = Vec::new(); // (kernel idx, dir)
        let mut seen = std::collections::HashSet::new();
        for &(col, _, _) in &op.cols {
            for &(k, _, _, _) in &per_edge[col] {
                if seen.insert(k) {
                    local.push((k, 0));
                    local.push((k, 1));
                }
            }
        }
        if local.is_empty() {
            continue;
        }
        // Q = B_T restricted to the local kernel columns.
        let nb = op.d.len();
        let mut q = DMatrix::<f64>::zeros(nb, local.len());
        for (lc, &(k, dk)) in local.iter().enumerate() {
            for (j, &(col, block, dir)) in op.cols.iter().enumerate() {
                if dir != dk {
                    continue;
                }
                for &(ki, s, xs, ys) in &per_edge[col] {
                    if ki == k {
                        let factor = match block {
                            Block::One => 1.0,
                            Block::X => xs,
                            Block::Y => ys,
                        };
                        for i in 0..nb {
                            q[(i, lc)] += s * factor * op.b_local[(i, j)];
                        }
                    }
                }
            }
        }
        let y = op.chol.solve(&q);
        let h = q.transpose() * &y;
        let u0 = op.chol.solve(&element_load(op, works0));
        let r = q.transpose() * u0;
        for (a, &(ka, da)) in local.iter().enumerate() {
            rhs[2 * ka + da] += r[a];
            for (b, &(kb, db)) in local.iter().enumerate() {
                coo.push(2 * ka + da, 2 * kb + db, h[(a, b)]);
            }
        }
    }

    let hessian = CscMatrix::from(&coo);
    let chol = CscCholesky::factor(&hessian).map_err(|_| OptimizeError::SingularReducedSystem)?;
    let sol = chol.solve(&rhs);
    let mut gamma = DMatrix::zeros(nv, 2);
    for k in 0..nv {
        for dir in 0..2 {
            gamma[(k, dir)] = -sol[(2 * k + dir, 0)];
        }
    }
    let mut works = works0.clone();
    z.accumulate(&mut works, &gamma);
    Ok(OptimizeOutcome { gamma, works, regularized: false })
}
