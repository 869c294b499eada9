//! Canonical test bases and scaled-frame geometry.
//!
//! All work and residual computations run in a scaled frame
//! `x_hat = (x - x0)/s`, `y_hat = (y - y0)/s` chosen so the scaled domain
//! spans roughly [-1, 1]; this keeps the global systems well conditioned.
//! Works are integrals against scaled test fields over the physical edge
//! measure, so edge line coefficients are recomputed from scaled endpoint
//! coordinates while lengths stay physical.

use crate::mesh::{EdgeId, Mesh};
use nalgebra::{Vector2, Vector3};

/// Affine frame: scaled coordinates are `(x - x0)/scale`.
#[derive(Clone, Copy, Debug)]
pub struct Frame {
    pub x0: f64,
    pub y0: f64,
    pub scale: f64,
}

impl Frame {
    /// Identity frame (unscaled physical coordinates).
    pub fn identity() -> Self {
        Frame { x0: 0.0, y0: 0.0, scale: 1.0 }
    }

    /// Origin at the domain (area) centroid, scale half the bounding-box
    /// diagonal: scaled coordinates span approximately [-1, 1].
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let mut area = 0.0;
        let (mut cx, mut cy) = (0.0, 0.0);
        for t in &mesh.triangles {
            let (mut tx, mut ty) = (0.0, 0.0);
            for &v in &t.vertices {
                let (x, y) = mesh.vertex_xy(v);
                tx += x;
                ty += y;
            }
            area += t.area;
            cx += t.area * tx / 3.0;
            cy += t.area * ty / 3.0;
        }
        let ((lx, ly), (hx, hy)) = mesh.bounding_box();
        let diag = (hx - lx).hypot(hy - ly);
        Frame {
            x0: cx / area,
            y0: cy / area,
            scale: (0.5 * diag).max(1e-300),
        }
    }

    #[inline]
    pub fn to_scaled(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x0) / self.scale, (y - self.y0) / self.scale)
    }
}

/// The scalar factors of the canonical P1 test fields: 1, x, y (in scaled
/// coordinates). Work and residual multivectors are stacked in this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    One = 0,
    X = 1,
    Y = 2,
}

impl Block {
    pub const ALL: [Block; 3] = [Block::One, Block::X, Block::Y];

    #[inline]
    pub fn eval(self, xs: f64, ys: f64) -> f64 {
        match self {
            Block::One => 1.0,
            Block::X => xs,
            Block::Y => ys,
        }
    }
}

/// Strain (Voigt, engineering shear) of the canonical field `b * e_dir`
/// with respect to physical coordinates; constant over the domain.
pub fn canonical_strain(block: Block, dir: usize, frame: &Frame) -> Vector3<f64> {
    let inv_s = 1.0 / frame.scale;
    match (block, dir) {
        (Block::One, _) => Vector3::zeros(),
        (Block::X, 0) => Vector3::new(inv_s, 0.0, 0.0),
        (Block::Y, 0) => Vector3::new(0.0, 0.0, inv_s),
        (Block::X, 1) => Vector3::new(0.0, 0.0, inv_s),
        (Block::Y, 1) => Vector3::new(0.0, inv_s, 0.0),
        _ => unreachable!(),
    }
}

/// Scaled-frame geometry of one edge: line coefficients from the scaled
/// endpoints (`a = y_b - y_a` etc., so `a^2 + b^2 = len_scaled^2`), scaled
/// midpoint, and both the physical and scaled lengths.
#[derive(Clone, Copy, Debug)]
pub struct FrameEdge {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub xo: f64,
    pub yo: f64,
    pub len: f64,
    pub len_scaled: f64,
    /// Scaled coordinates of the endpoints (origin first).
    pub pa: (f64, f64),
    pub pb: (f64, f64),
}

impl FrameEdge {
    pub fn new(mesh: &Mesh, edge: EdgeId, frame: &Frame) -> Self {
        let e = &mesh.edges[edge];
        let (xa, ya) = frame.to_scaled(mesh.vertices[e.a].x, mesh.vertices[e.a].y);
        let (xb, yb) = frame.to_scaled(mesh.vertices[e.b].x, mesh.vertices[e.b].y);
        let a = yb - ya;
        let b = xa - xb;
        let c = xb * ya - yb * xa;
        FrameEdge {
            a,
            b,
            c,
            xo: 0.5 * (xa + xb),
            yo: 0.5 * (ya + yb),
            len: e.length,
            len_scaled: (a * a + b * b).sqrt(),
            pa: (xa, ya),
            pb: (xb, yb),
        }
    }

    /// Scaled point at curvilinear parameter `t` in [-1/2, 1/2]
    /// (t = -1/2 at the origin vertex).
    #[inline]
    pub fn point_at(&self, t: f64) -> (f64, f64) {
        (self.xo - t * self.b, self.yo + t * self.a)
    }
}

/// One term `coeff * x^px * y^py * e_dir` of an element basis field
/// (local element coordinates).
#[derive(Clone, Copy, Debug)]
pub struct FieldTerm {
    pub px: u32,
    pub py: u32,
    pub dir: usize,
    pub coeff: f64,
}

/// A vector-valued polynomial basis field for the element solves.
#[derive(Clone, Debug)]
pub struct ElementField {
    pub terms: Vec<FieldTerm>,
}

impl ElementField {
    fn mono(px: u32, py: u32, dir: usize) -> Self {
        ElementField { terms: vec![FieldTerm { px, py, dir, coeff: 1.0 }] }
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.px + t.py).max().unwrap_or(0)
    }

    pub fn value(&self, x: f64, y: f64) -> Vector2<f64> {
        let mut v = Vector2::zeros();
        for t in &self.terms {
            v[t.dir] += t.coeff * x.powi(t.px as i32) * y.powi(t.py as i32);
        }
        v
    }

    /// Strain in Voigt form with respect to the local coordinates
    /// (the caller rescales by the physical-to-local factor).
    pub fn strain_local(&self, x: f64, y: f64) -> Vector3<f64> {
        let mut eps = Vector3::zeros();
        for t in &self.terms {
            let dx = if t.px > 0 {
                t.px as f64 * x.powi(t.px as i32 - 1) * y.powi(t.py as i32)
            } else {
                0.0
            };
            let dy = if t.py > 0 {
                t.py as f64 * x.powi(t.px as i32) * y.powi(t.py as i32 - 1)
            } else {
                0.0
            };
            let c = t.coeff;
            if t.dir == 0 {
                eps[0] += c * dx;
                eps[2] += c * dy;
            } else {
                eps[1] += c * dy;
                eps[2] += c * dx;
            }
        }
        eps
    }
}

/// Polynomial order of the element recovery space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisOrder {
    Two,
    Three,
}

impl BasisOrder {
    pub fn as_u32(self) -> u32 {
        match self {
            BasisOrder::Two => 2,
            BasisOrder::Three => 3,
        }
    }
}

/// Element basis without rigid-body modes, so pure-Neumann element solves
/// are directly well posed. Order two has 9 fields; order three extends
/// them with the 8 cubic monomial fields (complete P3 minus rigid modes).
pub fn element_basis(order: BasisOrder) -> Vec<ElementField> {
    let shear = ElementField {
        terms: vec![
            FieldTerm { px: 1, py: 0, dir: 1, coeff: 1.0 },
            FieldTerm { px: 0, py: 1, dir: 0, coeff: 1.0 },
        ],
    };
    let mut fields = vec![
        ElementField::mono(1, 0, 0), // x e_x
        ElementField::mono(0, 1, 1), // y e_y
        shear,                       // x e_y + y e_x
        ElementField::mono(1, 1, 0),
        ElementField::mono(1, 1, 1),
        ElementField::mono(2, 0, 0),
        ElementField::mono(2, 0, 1),
        ElementField::mono(0, 2, 0),
        ElementField::mono(0, 2, 1),
    ];
    if order == BasisOrder::Three {
        for (px, py) in [(3, 0), (2, 1), (1, 2), (0, 3)] {
            fields.push(ElementField::mono(px, py, 0));
            fields.push(ElementField::mono(px, py, 1));
        }
    }
    fields
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{rectangle, DiagonalPattern, EdgeClass, SideTag};

    #[test]
    fn frame_spans_roughly_unit_box() {
        let mesh = rectangle(8.0, 1.0, 16, 2, DiagonalPattern::Same, SideTag::all(EdgeClass::Dirichlet)).unwrap();
        let frame = Frame::from_mesh(&mesh);
        assert!(frame.scale > 0.0);
        let mut maxc: f64 = 0.0;
        for v in &mesh.vertices {
            let (xs, ys) = frame.to_scaled(v.x, v.y);
            maxc = maxc.max(xs.abs()).max(ys.abs());
        }
        assert!(maxc <= 1.5 && maxc >= 0.5, "max scaled coordinate {maxc}");
    }

    #[test]
    fn frame_edge_consistency() {
        let mesh = rectangle(2.0, 1.0, 4, 2, DiagonalPattern::Same, SideTag::all(EdgeClass::Dirichlet)).unwrap();
        let frame = Frame::from_mesh(&mesh);
        for e in &mesh.edges {
            let fe = FrameEdge::new(&mesh, e.id, frame_ref(&frame));
            // Endpoints satisfy the scaled line equation.
            for p in [fe.pa, fe.pb] {
                assert!((fe.a * p.0 + fe.b * p.1 + fe.c).abs() < 1e-13);
            }
            // Parametrization hits the endpoints.
            let p = fe.point_at(-0.5);
            assert!((p.0 - fe.pa.0).abs() < 1e-13 && (p.1 - fe.pa.1).abs() < 1e-13);
            let p = fe.point_at(0.5);
            assert!((p.0 - fe.pb.0).abs() < 1e-13 && (p.1 - fe.pb.1).abs() < 1e-13);
            // Scaled and physical lengths agree through the frame scale.
            assert!((fe.len_scaled * frame.scale - fe.len).abs() < 1e-12 * fe.len);
        }
        fn frame_ref(f: &Frame) -> &Frame {
            f
        }
    }

    #[test]
    fn element_basis_counts_and_no_rigid_modes() {
        assert_eq!(element_basis(BasisOrder::Two).len(), 9);
        assert_eq!(element_basis(BasisOrder::Three).len(), 17);
        // No field has an identically vanishing strain.
        for f in element_basis(BasisOrder::Three) {
            let s = f.strain_local(0.37, -0.21);
            assert!(s.norm() > 1e-12, "field with rigid-mode strain: {f:?}");
        }
    }
}
