//! Exact integer Smith factorization of the incidence matrix.
//!
//! Every column of the incidence matrix has exactly two nonzeros of
//! opposite sign, so the matrix is the signed vertex-edge incidence matrix
//! of the triangle-adjacency (dual) graph. A spanning tree of that graph
//! yields the factorization in closed form with linear-time pivoting:
//!
//! - row operations: replace each non-root row by the sum of its subtree
//!   (a 0/1 matrix `u_tilde`), the all-ones row coming last;
//! - column operations: keep one signed unit entry per tree edge
//!   (`v_tilde`), the kernel basis `N` filling the trailing columns.
//!
//! `U * Delta * V` is then the identity-leading canonical form in exact
//! integer arithmetic, and `v_tilde * u_tilde * r`: the particular solve
//! for any consistent right-hand side: reduces to an O(|T|) "flow on the
//! tree" accumulation.

use crate::error::ProlongationError;
use crate::mesh::{IncidenceMatrix, KernelBasis, Mesh, TriId};
use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct SmithFactors {
    n_tri: usize,
    /// Non-root triangles in BFS discovery order (the row permutation);
    /// the root (triangle 0) corresponds to the trailing all-ones row.
    pub tri_order: Vec<TriId>,
    /// Per triangle: parent triangle in the BFS tree (None for the root).
    pub parent: Vec<Option<TriId>>,
    /// Per triangle: internal-edge column shared with the parent.
    pub parent_col: Vec<Option<usize>>,
    /// Sign of the triangle on its parent edge (+1 when it is the
    /// positively incident one).
    pub parent_sign: Vec<i8>,
    /// Right kernel basis N = [N_V, N_h].
    pub kernel: KernelBasis,
    pub rank: usize,
}

impl SmithFactors {
    /// Build the factorization by breadth-first search over the dual
    /// graph. Fails when the dual graph is disconnected, i.e. the rank of
    /// the incidence matrix is below |T| - 1.
    pub fn factorize(
        mesh: &Mesh,
        delta: &IncidenceMatrix,
        kernel: KernelBasis,
    ) -> Result<Self, ProlongationError> {
        let n_tri = delta.n_tri;
        let mut parent = vec![None; n_tri];
        let mut parent_col = vec![None; n_tri];
        let mut parent_sign = vec![0i8; n_tri];
        let mut seen = vec![false; n_tri];
        let mut tri_order = Vec::with_capacity(n_tri.saturating_sub(1));
        if n_tri > 0 {
            seen[0] = true;
            let mut queue = VecDeque::from([0usize]);
            while let Some(t) = queue.pop_front() {
                for &e in &mesh.triangles[t].edges {
                    let Some(col) = mesh.internal_index[e] else { continue };
                    let c = delta.cols[col];
                    let u = if c.plus == t { c.minus } else { c.plus };
                    if !seen[u] {
                        seen[u] = true;
                        parent[u] = Some(t);
                        parent_col[u] = Some(col);
                        parent_sign[u] = if c.plus == u { 1 } else { -1 };
                        tri_order.push(u);
                        queue.push_back(u);
                    }
                }
            }
        }
        let rank = tri_order.len();
        if rank + 1 != n_tri.max(1) {
            return Err(ProlongationError::RankDeficiencyUnexpected {
                rank,
                expected: n_tri.saturating_sub(1),
            });
        }
        let expected_kernel = delta.n_cols() - rank;
        debug_assert_eq!(kernel.n_cols(), expected_kernel);
        Ok(SmithFactors {
            n_tri,
            tri_order,
            parent,
            parent_col,
            parent_sign,
            kernel,
            rank,
        })
    }

    /// Particular solve `w = v_tilde * u_tilde * r` for a consistent
    /// right-hand side (`sum(r) = 0`): the unique tree-supported vector
    /// with `Delta * w = r`. Returns one value per internal-edge column.
    pub fn tree_solve(&self, r: &[f64], n_cols: usize) -> Vec<f64> {
        debug_assert_eq!(r.len(), self.n_tri);
        let mut subtree: Vec<f64> = r.to_vec();
        let mut w = vec![0.0; n_cols];
        for &t in self.tri_order.iter().rev() {
            let p = self.parent[t].unwrap();
            let col = self.parent_col[t].unwrap();
            w[col] = self.parent_sign[t] as f64 * subtree[t];
            subtree[p] += subtree[t];
        }
        w
    }

    /// Sparse triplets of the row-operation block `u_tilde`
    /// ((|T|-1) x |T|, entries all +1: subtree membership indicators).
    pub fn u_tilde_triplets(&self) -> Vec<(usize, usize, i64)> {
        // children lists for a single subtree traversal per row
        let mut children: Vec<Vec<TriId>> = vec![Vec::new(); self.n_tri];
        for &t in &self.tri_order {
            children[self.parent[t].unwrap()].push(t);
        }
        let mut out = Vec::new();
        for (row, &t) in self.tri_order.iter().enumerate() {
            let mut stack = vec![t];
            while let Some(u) = stack.pop() {
                out.push((row, u, 1));
                stack.extend(&children[u]);
            }
        }
        out
    }

    /// Sparse triplets of the column-operation block `v_tilde`
    /// (|E_int| x (|T|-1), one signed unit entry per column).
    pub fn v_tilde_triplets(&self) -> Vec<(usize, usize, i64)> {
        self.tri_order
            .iter()
            .enumerate()
            .map(|(k, &t)| (self.parent_col[t].unwrap(), k, self.parent_sign[t] as i64))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{delaunay_unit_square, EdgeClass, MeshBuilder};

    fn factorize(mesh: &Mesh) -> (IncidenceMatrix, SmithFactors) {
        let delta = IncidenceMatrix::from_mesh(mesh);
        let kernel = KernelBasis::compute(mesh, &delta).unwrap();
        let smith = SmithFactors::factorize(mesh, &delta, kernel).unwrap();
        (delta, smith)
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

    /// Exact integer product U * Delta * V and comparison against the
    /// canonical form; the independent oracle for the factorization.
    fn assert_canonical(delta: &IncidenceMatrix, smith: &SmithFactors) {
        let nt = delta.n_tri;
        let ne = delta.n_cols();
        let r = smith.rank;
        // Dense integer U: rows 0..r are u_tilde, last row all ones.
        let mut u = vec![vec![0i64; nt]; nt];
        for (i, j, v) in smith.u_tilde_triplets() {
            u[i][j] = v;
        }
        for j in 0..nt {
            u[nt - 1][j] = 1;
        }
        // Dense integer V: cols 0..r from v_tilde, then kernel columns.
        let mut v = vec![vec![0i64; ne]; ne];
        for (i, j, val) in smith.v_tilde_triplets() {
            v[i][j] = val;
        }
        for (k, col) in smith.kernel.columns().enumerate() {
            for &(i, s) in col {
                v[i][r + k] = s;
            }
        }
        // Dense Delta.
        let mut d = vec![vec![0i64; ne]; nt];
        for (j, c) in delta.cols.iter().enumerate() {
            d[c.plus][j] = 1;
            d[c.minus][j] = -1;
        }
        // U * D * V
        let mut ud = vec![vec![0i64; ne]; nt];
        for i in 0..nt {
            for k in 0..nt {
                if u[i][k] != 0 {
                    for j in 0..ne {
                        ud[i][j] += u[i][k] * d[k][j];
                    }
                }
            }
        }
        let mut udv = vec![vec![0i64; ne]; nt];
        for i in 0..nt {
            for k in 0..ne {
                if ud[i][k] != 0 {
                    for j in 0..ne {
                        udv[i][j] += ud[i][k] * v[k][j];
                    }
                }
            }
        }
        for (i, row) in udv.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                let expect = if i == j && i < r { 1 } else { 0 };
                assert_eq!(x, expect, "canonical form mismatch at ({i}, {j})");
            }
        }
    }

    #[test]
    fn two_triangle_square_rank_one() {
        let mesh = MeshBuilder::new(
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
        .unwrap();
        let (delta, smith) = factorize(&mesh);
        assert_eq!(smith.rank, 1);
        assert_eq!(smith.kernel.n_cols(), 0);
        assert_eq!(smith.u_tilde_triplets().len(), 1);
        assert_canonical(&delta, &smith);
        // Consistent solve: r = (1, -1).
        let w = smith.tree_solve(&[1.0, -1.0], delta.n_cols());
        let back = delta.apply(&w);
        assert!((back[0] - 1.0).abs() < 1e-15 && (back[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn four_triangle_square_rank_three() {
        let mesh = four_triangle_square();
        let (delta, smith) = factorize(&mesh);
        assert_eq!(smith.rank, 3);
        assert_eq!(smith.kernel.n_cols(), 1);
        assert_canonical(&delta, &smith);
    }

    #[test]
    fn random_mesh_canonical_form_exact() {
        let mesh = delaunay_unit_square(500, 42).unwrap();
        let (delta, smith) = factorize(&mesh);
        assert_eq!(smith.rank, mesh.counts.triangles - 1);
        assert_eq!(
            smith.kernel.n_cols(),
            mesh.counts.internal_vertices + mesh.counts.holes
        );
        assert_canonical(&delta, &smith);
    }

    #[test]
    fn tree_solve_solves_consistent_systems() {
        let mesh = delaunay_unit_square(300, 3).unwrap();
        let (delta, smith) = factorize(&mesh);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut r: Vec<f64> = (0..mesh.counts.triangles)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        for x in &mut r {
            *x -= mean;
        }
        let w = smith.tree_solve(&r, delta.n_cols());
        let back = delta.apply(&w);
        let err = back
            .iter()
            .zip(&r)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-12, "residual {err}");
    }
}
