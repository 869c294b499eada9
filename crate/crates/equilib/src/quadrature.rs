//! Gauss quadrature on segments and triangles, exact to a requested
//! polynomial degree.
//!
//! Degrees are honored exactly: segment rules are Gauss-Legendre, triangle
//! rules are either the classic symmetric low-order rules or a collapsed
//! tensor-product (Duffy) rule whose exactness follows from the 1D rules.

/// One quadrature node with its weight.
#[derive(Clone, Copy, Debug)]
pub struct QPoint {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

/// Gauss-Legendre nodes and weights on [-1, 1], exact for degree 2n-1.
///
/// Nodes are computed by Newton iteration on the Legendre polynomial; at
/// the sizes used here this converges to machine precision in a handful of
/// steps and avoids long literal tables.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss rule on the segment from `a` to `b`, exact for degree `degree`.
/// Weights sum to the segment length.
pub fn segment_rule(a: (f64, f64), b: (f64, f64), degree: usize) -> Vec<QPoint> {
    let n = degree / 2 + 1;
    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    gauss_legendre(n)
        .into_iter()
        .map(|(t, w)| {
            let s = 0.5 * (t + 1.0);
            QPoint {
                x: a.0 + s * (b.0 - a.0),
                y: a.1 + s * (b.1 - a.1),
                w: 0.5 * len * w,
            }
        })
        .collect()
}

/// Quadrature on the reference triangle {x, y >= 0, x + y <= 1}, exact for
/// polynomials of total degree `degree`. Weights sum to 1/2.
pub fn reference_triangle_rule(degree: usize) -> Vec<QPoint> {
    match degree {
        0 | 1 => vec![QPoint { x: 1.0 / 3.0, y: 1.0 / 3.0, w: 0.5 }],
        2 => {
            // Midpoint-of-edges rule.
            let w = 1.0 / 6.0;
            vec![
                QPoint { x: 0.5, y: 0.0, w },
                QPoint { x: 0.5, y: 0.5, w },
                QPoint { x: 0.0, y: 0.5, w },
            ]
        }
        _ => duffy_rule(degree),
    }
}

/// Collapsed tensor-product rule: map [0,1]^2 -> triangle via
/// (u, v) -> (u, v(1-u)) with Jacobian (1-u). A polynomial of total degree
/// d pulls back to degree <= d+1 in u and d in v.
fn duffy_rule(degree: usize) -> Vec<QPoint> {
    let nu = (degree + 1) / 2 + 1;
    let nv = degree / 2 + 1;
    let gu = gauss_legendre(nu);
    let gv = gauss_legendre(nv);
    let mut out = Vec::with_capacity(nu * nv);
    for &(tu, wu) in &gu {
        let u = 0.5 * (tu + 1.0);
        for &(tv, wv) in &gv {
            let v = 0.5 * (tv + 1.0);
            out.push(QPoint {
                x: u,
                y: v * (1.0 - u),
                w: 0.25 * wu * wv * (1.0 - u),
            });
        }
    }
    out
}

/// Rule on a physical triangle, exact for degree `degree`.
/// Weights sum to the triangle area (vertices in either orientation).
pub fn triangle_rule(v: [(f64, f64); 3], degree: usize) -> Vec<QPoint> {
    let jac = (v[1].0 - v[0].0) * (v[2].1 - v[0].1) - (v[2].0 - v[0].0) * (v[1].1 - v[0].1);
    let scale = jac.abs();
    reference_triangle_rule(degree)
        .into_iter()
        .map(|q| QPoint {
            x: v[0].0 + q.x * (v[1].0 - v[0].0) + q.y * (v[2].0 - v[0].0),
            y: v[0].1 + q.x * (v[1].1 - v[0].1) + q.y * (v[2].1 - v[0].1),
            w: q.w * scale,
        })
        .collect()
}
