//! Deterministic mesh generators: structured rectangles (with optional
//! square hole) and random Delaunay triangulations of the unit square.

use super::{EdgeClass, Mesh, MeshBuilder, VertexId};
use crate::error::MeshError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spade::{DelaunayTriangulation, Point2, Triangulation};

/// How each grid cell is split into triangles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagonalPattern {
    /// Every cell split along the same diagonal (lower-left to upper-right).
    Same,
    /// Checkerboard alternation of the two diagonals.
    Alternating,
    /// Four triangles per cell around an added center vertex.
    Crossed,
}

/// Boundary tags per rectangle side.
#[derive(Clone, Copy, Debug)]
pub struct SideTag {
    pub bottom: EdgeClass,
    pub right: EdgeClass,
    pub top: EdgeClass,
    pub left: EdgeClass,
}

impl SideTag {
    pub fn all(class: EdgeClass) -> Self {
        SideTag { bottom: class, right: class, top: class, left: class }
    }

    pub fn clamped_bottom() -> Self {
        SideTag {
            bottom: EdgeClass::Dirichlet,
            right: EdgeClass::Neumann,
            top: EdgeClass::Neumann,
            left: EdgeClass::Neumann,
        }
    }
}

/// Structured triangulation of `[0, width] x [0, height]` with `nx` by `ny`
/// cells. Vertex ids run x-major with y fastest, so the grid index of
/// `(i, j)` is `i*(ny+1) + j`.
pub fn rectangle(
    width: f64,
    height: f64,
    nx: usize,
    ny: usize,
    pattern: DiagonalPattern,
    tags: SideTag,
) -> Result<Mesh, MeshError> {
    assert!(nx >= 1 && ny >= 1);
    let dx = width / nx as f64;
    let dy = height / ny as f64;
    let vid = |i: usize, j: usize| i * (ny + 1) + j;
    let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
    for i in 0..=nx {
        for j in 0..=ny {
            coords.push((i as f64 * dx, j as f64 * dy));
        }
    }
    let mut tris = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let v00 = vid(i, j);
            let v10 = vid(i + 1, j);
            let v11 = vid(i + 1, j + 1);
            let v01 = vid(i, j + 1);
            match pattern {
                DiagonalPattern::Same => {
                    tris.push([v00, v10, v11]);
                    tris.push([v00, v11, v01]);
                }
                DiagonalPattern::Alternating => {
                    if (i + j) % 2 == 0 {
                        tris.push([v00, v10, v11]);
                        tris.push([v00, v11, v01]);
                    } else {
                        tris.push([v00, v10, v01]);
                        tris.push([v10, v11, v01]);
                    }
                }
                DiagonalPattern::Crossed => {
                    let c = coords.len();
                    coords.push(((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy));
                    tris.push([v00, v10, c]);
                    tris.push([v10, v11, c]);
                    tris.push([v11, v01, c]);
                    tris.push([v01, v00, c]);
                }
            }
        }
    }
    let mut builder = MeshBuilder::new(coords, tris);
    for i in 0..nx {
        builder = builder.tag(vid(i, 0), vid(i + 1, 0), tags.bottom);
        builder = builder.tag(vid(i, ny), vid(i + 1, ny), tags.top);
    }
    for j in 0..ny {
        builder = builder.tag(vid(nx, j), vid(nx, j + 1), tags.right);
        builder = builder.tag(vid(0, j), vid(0, j + 1), tags.left);
    }
    builder.build()
}

/// Unit square with a centered square hole of side 1/3. `n` cells per side,
/// divisible by 3. Outer sides take `outer` tags; the hole boundary takes
/// `hole` tags.
pub fn rectangle_with_hole(
    n: usize,
    pattern: DiagonalPattern,
    outer: SideTag,
    hole: EdgeClass,
) -> Result<Mesh, MeshError> {
    assert!(n >= 3 && n % 3 == 0, "cells per side must be a positive multiple of 3");
    let lo = n / 3;
    let hi = 2 * n / 3;
    let in_hole_cell = |i: usize, j: usize| i >= lo && i < hi && j >= lo && j < hi;
    let d = 1.0 / n as f64;

    // Grid vertices strictly inside the hole are dropped; remap the rest.
    let mut remap = vec![usize::MAX; (n + 1) * (n + 1)];
    let mut coords = Vec::new();
    let grid = |i: usize, j: usize| i * (n + 1) + j;
    for i in 0..=n {
        for j in 0..=n {
            let inside = i > lo && i < hi && j > lo && j < hi;
            if !inside {
                remap[grid(i, j)] = coords.len();
                coords.push((i as f64 * d, j as f64 * d));
            }
        }
    }
    let mut tris = Vec::new();
    let mut centers: Vec<(usize, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if in_hole_cell(i, j) {
                continue;
            }
            let v00 = remap[grid(i, j)];
            let v10 = remap[grid(i + 1, j)];
            let v11 = remap[grid(i + 1, j + 1)];
            let v01 = remap[grid(i, j + 1)];
            match pattern {
                DiagonalPattern::Same => {
                    tris.push([v00, v10, v11]);
                    tris.push([v00, v11, v01]);
                }
                DiagonalPattern::Alternating => {
                    if (i + j) % 2 == 0 {
                        tris.push([v00, v10, v11]);
                        tris.push([v00, v11, v01]);
                    } else {
                        tris.push([v00, v10, v01]);
                        tris.push([v10, v11, v01]);
                    }
                }
                DiagonalPattern::Crossed => {
                    let c = coords.len();
                    coords.push(((i as f64 + 0.5) * d, (j as f64 + 0.5) * d));
                    centers.push((i, j, c));
                    tris.push([v00, v10, c]);
                    tris.push([v10, v11, c]);
                    tris.push([v11, v01, c]);
                    tris.push([v01, v00, c]);
                }
            }
        }
    }
    let mut builder = MeshBuilder::new(coords, tris);
    for k in 0..n {
        builder = builder.tag(remap[grid(k, 0)], remap[grid(k + 1, 0)], outer.bottom);
        builder = builder.tag(remap[grid(k, n)], remap[grid(k + 1, n)], outer.top);
        builder = builder.tag(remap[grid(n, k)], remap[grid(n, k + 1)], outer.right);
        builder = builder.tag(remap[grid(0, k)], remap[grid(0, k + 1)], outer.left);
    }
    for k in lo..hi {
        builder = builder.tag(remap[grid(k, lo)], remap[grid(k + 1, lo)], hole);
        builder = builder.tag(remap[grid(k, hi)], remap[grid(k + 1, hi)], hole);
        builder = builder.tag(remap[grid(lo, k)], remap[grid(lo, k + 1)], hole);
        builder = builder.tag(remap[grid(hi, k)], remap[grid(hi, k + 1)], hole);
    }
    builder.build()
}

/// Random Delaunay triangulation of the unit square with roughly
/// `target_tris` triangles. Bottom border edges are Dirichlet, the rest
/// Neumann. Deterministic for a fixed seed.
pub fn delaunay_unit_square(target_tris: usize, seed: u64) -> Result<Mesh, MeshError> {
    let target = target_tris.max(2);
    // With V vertices of which V_b on the hull: T = 2V - 2 - V_b.
    let per_side = ((target as f64).sqrt() / 4.0).round().max(1.0) as usize;
    let v_b = 4 * per_side;
    let interior = ((target + 2).saturating_sub(v_b)) / 2;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<(f64, f64)> = Vec::new();
    for k in 0..per_side {
        let t = k as f64 / per_side as f64;
        points.push((t, 0.0));
        points.push((1.0, t));
        points.push((1.0 - t, 1.0));
        points.push((0.0, 1.0 - t));
    }
    let margin = 0.02 / (per_side as f64);
    for _ in 0..interior {
        points.push((
            rng.random_range(margin..1.0 - margin),
            rng.random_range(margin..1.0 - margin),
        ));
    }

    let mut tri: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    for &(x, y) in &points {
        tri.insert(Point2::new(x, y))
            .map_err(|e| MeshError::Format(format!("delaunay insertion: {e:?}")))?;
    }
    let coords: Vec<(f64, f64)> = tri
        .vertices()
        .map(|v| (v.position().x, v.position().y))
        .collect();
    let tris: Vec<[VertexId; 3]> = tri
        .inner_faces()
        .map(|f| {
            let [a, b, c] = f.vertices();
            [a.fix().index(), b.fix().index(), c.fix().index()]
        })
        .collect();

    // Tag hull edges side by side: consecutive points along each square side.
    let on = |v: f64, target: f64| (v - target).abs() < 1e-12;
    let mut builder = MeshBuilder::new(coords.clone(), tris);
    for (side, class) in [
        (0usize, EdgeClass::Dirichlet), // bottom
        (1, EdgeClass::Neumann),        // right
        (2, EdgeClass::Neumann),        // top
        (3, EdgeClass::Neumann),        // left
    ] {
        let mut ids: Vec<usize> = (0..coords.len())
            .filter(|&i| match side {
                0 => on(coords[i].1, 0.0),
                1 => on(coords[i].0, 1.0),
                2 => on(coords[i].1, 1.0),
                _ => on(coords[i].0, 0.0),
            })
            .collect();
        ids.sort_by(|&i, &j| {
            let key = |k: usize| if side % 2 == 0 { coords[k].0 } else { coords[k].1 };
            key(i).total_cmp(&key(j))
        });
        for w in ids.windows(2) {
            builder = builder.tag(w[0], w[1], class);
        }
    }
    builder.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_rectangle_counts() {
        let m = rectangle(8.0, 1.0, 32, 4, DiagonalPattern::Same, SideTag::all(EdgeClass::Dirichlet)).unwrap();
        assert_eq!(m.counts.triangles, 256);
        assert_eq!(m.counts.vertices, 33 * 5);
        assert_eq!(m.counts.holes, 0);
        assert_eq!(m.counts.internal_vertices, 31 * 3);
        // Euler identity.
        assert_eq!(
            m.counts.triangles as i64 - m.counts.edges as i64 + m.counts.vertices as i64,
            1
        );
        // The same-diagonal pattern has exactly two double-border corners.
        assert_eq!(m.two_border_edge_elements().len(), 2);
    }

    #[test]
    fn alternating_pattern_avoids_double_border_corners() {
        let m = rectangle(1.0, 1.0, 4, 4, DiagonalPattern::Alternating, SideTag::clamped_bottom()).unwrap();
        assert!(m.two_border_edge_elements().is_empty());
    }

    #[test]
    fn square_annulus_counts() {
        let m = rectangle_with_hole(
            6,
            DiagonalPattern::Same,
            SideTag::clamped_bottom(),
            EdgeClass::Neumann,
        )
        .unwrap();
        assert_eq!(m.counts.holes, 1);
        // Euler identity with one hole: T - E + V = 0.
        assert_eq!(
            m.counts.triangles as i64 - m.counts.edges as i64 + m.counts.vertices as i64,
            0
        );
        assert_eq!(m.boundary_loops.len(), 2);
    }

    #[test]
    fn delaunay_is_deterministic_and_valid() {
        let m1 = delaunay_unit_square(200, 7).unwrap();
        let m2 = delaunay_unit_square(200, 7).unwrap();
        assert_eq!(m1.counts, m2.counts);
        assert!(m1.counts.triangles >= 100 && m1.counts.triangles <= 400);
        assert_eq!(
            m1.counts.triangles as i64 - m1.counts.edges as i64 + m1.counts.vertices as i64,
            1
        );
    }
}
