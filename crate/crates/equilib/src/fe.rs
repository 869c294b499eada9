//! Primal P1 displacement solver for plane-stress linear elasticity.
//!
//! Assembles the sparse symmetric stiffness over all degrees of freedom,
//! imposes Dirichlet data by row/column elimination and recovers the nodal
//! reactions from the saved unconstrained rows, which downstream feeds the
//! boundary-corrected residuals.

use crate::error::FeError;
use crate::mesh::{EdgeClass, EdgeId, Mesh, VertexClass, VertexId};
use crate::quadrature::{gauss_legendre, triangle_rule};
use nalgebra::{DVector, Matrix3, SMatrix, Vector2, Vector3};
use nalgebra_sparse::{factorization::CscCholesky, CooMatrix, CscMatrix};
use std::sync::Arc;

/// Isotropic plane-stress material in Voigt form
/// (sigma_xx, sigma_yy, sigma_xy) vs (eps_xx, eps_yy, 2 eps_xy).
#[derive(Clone, Debug)]
pub struct Material {
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    pub hooke: Matrix3<f64>,
    pub hooke_inv: Matrix3<f64>,
}

impl Material {
    pub fn plane_stress(e: f64, nu: f64) -> Self {
        assert!(e > 0.0 && nu > -1.0 && nu < 0.5, "invalid elastic constants");
        let c = e / (1.0 - nu * nu);
        let hooke = Matrix3::new(
            c,
            c * nu,
            0.0,
            c * nu,
            c,
            0.0,
            0.0,
            0.0,
            c * (1.0 - nu) / 2.0,
        );
        let hooke_inv = hooke.try_inverse().expect("hooke matrix is invertible");
        Material { young_modulus: e, poisson_ratio: nu, hooke, hooke_inv }
    }
}

type VecField = Arc<dyn Fn(f64, f64) -> Vector2<f64> + Send + Sync>;
type EdgeField = Arc<dyn Fn(EdgeId, f64, f64) -> Vector2<f64> + Send + Sync>;
type VertexField = Arc<dyn Fn(VertexId, f64, f64) -> Vector2<f64> + Send + Sync>;

/// Body force with an optional declared polynomial degree. Declared
/// degrees are integrated exactly; undeclared loads fall back to a fixed
/// high-order rule and are flagged in the run report (the error bound is
/// then only as strict as that quadrature).
#[derive(Clone)]
pub struct BodyForce {
    pub eval: VecField,
    pub poly_degree: Option<u32>,
}

impl BodyForce {
    pub fn zero() -> Self {
        BodyForce { eval: Arc::new(|_, _| Vector2::zeros()), poly_degree: Some(0) }
    }

    pub fn constant(f: Vector2<f64>) -> Self {
        BodyForce { eval: Arc::new(move |_, _| f), poly_degree: Some(0) }
    }

    pub fn polynomial(degree: u32, f: impl Fn(f64, f64) -> Vector2<f64> + Send + Sync + 'static) -> Self {
        BodyForce { eval: Arc::new(f), poly_degree: Some(degree) }
    }

    pub fn general(f: impl Fn(f64, f64) -> Vector2<f64> + Send + Sync + 'static) -> Self {
        BodyForce { eval: Arc::new(f), poly_degree: None }
    }

    /// Degree used for integrals of `f` against a polynomial of degree
    /// `test_degree`; `None` declares a non-polynomial load.
    pub fn product_degree(&self, test_degree: u32) -> usize {
        match self.poly_degree {
            Some(d) => (d + test_degree) as usize,
            None => 10,
        }
    }

    pub fn is_polynomial(&self) -> bool {
        self.poly_degree.is_some()
    }
}

/// Loads and constraints of one problem.
#[derive(Clone)]
pub struct LoadCase {
    pub body: BodyForce,
    /// Traction on Neumann border edges, evaluated at physical points.
    pub neumann: EdgeField,
    /// Declared polynomial degree of the traction along each edge.
    pub neumann_degree: u32,
    /// Imposed displacement at Dirichlet vertices.
    pub dirichlet: VertexField,
}

impl LoadCase {
    pub fn new(body: BodyForce, neumann: EdgeField, dirichlet: VertexField) -> Self {
        LoadCase { body, neumann, neumann_degree: 1, dirichlet }
    }

    /// Traction-free Neumann sides and zero Dirichlet data.
    pub fn body_only(body: BodyForce) -> Self {
        LoadCase {
            body,
            neumann: Arc::new(|_, _, _| Vector2::zeros()),
            neumann_degree: 0,
            dirichlet: Arc::new(|_, _, _| Vector2::zeros()),
        }
    }
}

/// Assembled full-size system (all degrees of freedom, Dirichlet included).
pub struct Assembled {
    pub stiffness: CscMatrix<f64>,
    pub force: DVector<f64>,
}

/// P1 strain-displacement matrix of a triangle and its area.
pub fn strain_matrix(mesh: &Mesh, tri: usize) -> (SMatrix<f64, 3, 6>, f64) {
    let t = &mesh.triangles[tri];
    let p: Vec<(f64, f64)> = t.vertices.iter().map(|&v| mesh.vertex_xy(v)).collect();
    let area = t.area;
    let inv2a = 1.0 / (2.0 * area);
    let mut b = SMatrix::<f64, 3, 6>::zeros();
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let bi = (p[j].1 - p[k].1) * inv2a;
        let ci = (p[k].0 - p[j].0) * inv2a;
        b[(0, 2 * i)] = bi;
        b[(1, 2 * i + 1)] = ci;
        b[(2, 2 * i)] = ci;
        b[(2, 2 * i + 1)] = bi;
    }
    (b, area)
}

/// Hat-function values of a triangle at a physical point.
pub fn barycentric(mesh: &Mesh, tri: usize, x: f64, y: f64) -> [f64; 3] {
    let t = &mesh.triangles[tri];
    let p: Vec<(f64, f64)> = t.vertices.iter().map(|&v| mesh.vertex_xy(v)).collect();
    let inv2a = 1.0 / (2.0 * t.area);
    let mut lam = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let a = p[j].0 * p[k].1 - p[k].0 * p[j].1;
        let b = p[j].1 - p[k].1;
        let c = p[k].0 - p[j].0;
        lam[i] = (a + b * x + c * y) * inv2a;
    }
    lam
}

/// Assemble the stiffness matrix and generalized force vector.
pub fn assemble(mesh: &Mesh, material: &Material, load: &LoadCase) -> Assembled {
    let ndof = 2 * mesh.counts.vertices;
    let mut coo = CooMatrix::new(ndof, ndof);
    let mut force = DVector::zeros(ndof);

    for t in &mesh.triangles {
        let (b, area) = strain_matrix(mesh, t.id);
        let ke = b.transpose() * material.hooke * b * area;
        for i in 0..3 {
            for j in 0..3 {
                for ci in 0..2 {
                    for cj in 0..2 {
                        coo.push(
                            2 * t.vertices[i] + ci,
                            2 * t.vertices[j] + cj,
                            ke[(2 * i + ci, 2 * j + cj)],
                        );
                    }
                }
            }
        }
        // Body force against the hat functions.
        let degree = load.body.product_degree(1).max(3);
        let verts: [(f64, f64); 3] = std::array::from_fn(|k| mesh.vertex_xy(t.vertices[k]));
        for q in triangle_rule(verts, degree) {
            let f = (load.body.eval)(q.x, q.y);
            let lam = barycentric(mesh, t.id, q.x, q.y);
            for i in 0..3 {
                force[2 * t.vertices[i]] += q.w * lam[i] * f.x;
                force[2 * t.vertices[i] + 1] += q.w * lam[i] * f.y;
            }
        }
    }

    // Neumann edge terms, hat functions linear along the edge.
    let n_gauss = (load.neumann_degree as usize + 1) / 2 + 1;
    let rule = gauss_legendre(n_gauss.max(2));
    for e in mesh.edges.iter().filter(|e| e.class == EdgeClass::Neumann) {
        let (xa, ya) = mesh.vertex_xy(e.a);
        let (xb, yb) = mesh.vertex_xy(e.b);
        for &(t, w) in &rule {
            let s = 0.5 * (t + 1.0);
            let (x, y) = (xa + s * (xb - xa), ya + s * (yb - ya));
            let g = (load.neumann)(e.id, x, y);
            let wq = 0.5 * e.length * w;
            force[2 * e.a] += wq * (1.0 - s) * g.x;
            force[2 * e.a + 1] += wq * (1.0 - s) * g.y;
            force[2 * e.b] += wq * s * g.x;
            force[2 * e.b + 1] += wq * s * g.y;
        }
    }

    Assembled { stiffness: CscMatrix::from(&coo), force }
}

/// Finite-element solution: nodal displacements (all dofs), per-element
/// constant stresses, Dirichlet nodal reactions and the squared energy
/// norm of the discrete strain field.
pub struct FeSolution {
    pub u: DVector<f64>,
    pub sigma_h: Vec<Vector3<f64>>,
    /// Reaction per Dirichlet vertex, in ascending vertex order.
    pub lambda_d: Vec<(VertexId, Vector2<f64>)>,
    /// |eps(u_H)|^2 in the energy norm (no 1/2 factor).
    pub energy_sq: f64,
    /// Per-element contributions to `energy_sq`.
    pub element_energy_sq: Vec<f64>,
    pub n_free_dofs: usize,
    /// Relative residual of the constrained solve.
    pub solver_residual: f64,
}

impl FeSolution {
    pub fn reaction(&self, v: VertexId) -> Option<Vector2<f64>> {
        self.lambda_d
            .binary_search_by_key(&v, |&(id, _)| id)
            .ok()
            .map(|i| self.lambda_d[i].1)
    }
}

/// Solve the constrained system by elimination, recovering reactions from
/// the full assembled rows.
pub fn solve(mesh: &Mesh, material: &Material, load: &LoadCase, sys: &Assembled) -> Result<FeSolution, FeError> {
    let ndof = 2 * mesh.counts.vertices;
    let constrained: Vec<bool> = (0..ndof)
        .map(|d| {
            matches!(
                mesh.vertices[d / 2].class,
                VertexClass::DirichletBoundary | VertexClass::MixedCorner
            )
        })
        .collect();
    let free_index: Vec<Option<usize>> = {
        let mut idx = 0;
        constrained
            .iter()
            .map(|&c| {
                if c {
                    None
                } else {
                    idx += 1;
                    Some(idx - 1)
                }
            })
            .collect()
    };
    let n_free = free_index.iter().filter(|i| i.is_some()).count();
    let n_constrained = ndof - n_free;
    if n_constrained < 3 {
        return Err(FeError::SingularSystem);
    }

    let mut u = DVector::zeros(ndof);
    for v in mesh.dirichlet_vertices() {
        let (x, y) = mesh.vertex_xy(v);
        let ud = (load.dirichlet)(v, x, y);
        u[2 * v] = ud.x;
        u[2 * v + 1] = ud.y;
    }

    // Reduced system K_rr u_r = f_r - K_rd u_d.
    let mut coo_rr = CooMatrix::new(n_free, n_free);
    let mut rhs = DVector::zeros(n_free);
    for d in 0..ndof {
        if let Some(i) = free_index[d] {
            rhs[i] = sys.force[d];
        }
    }
    for (row, col, &val) in sys.stiffness.triplet_iter() {
        match (free_index[row], free_index[col]) {
            (Some(i), Some(j)) => coo_rr.push(i, j, val),
            (Some(i), None) => rhs[i] -= val * u[col],
            _ => {}
        }
    }
    let k_rr = CscMatrix::from(&coo_rr);
    let chol = CscCholesky::factor(&k_rr).map_err(|_| FeError::SingularSystem)?;
    let u_r = chol.solve(&rhs);
    for d in 0..ndof {
        if let Some(i) = free_index[d] {
            u[d] = u_r[(i, 0)];
        }
    }

    // Reactions from the saved unconstrained rows: lambda = (K u - f)_d.
    let mut residual_full = -&sys.force;
    for (row, col, &val) in sys.stiffness.triplet_iter() {
        residual_full[row] += val * u[col];
    }
    let mut lambda_d = Vec::new();
    for v in mesh.dirichlet_vertices() {
        lambda_d.push((v, Vector2::new(residual_full[2 * v], residual_full[2 * v + 1])));
    }
    let free_residual_norm: f64 = (0..ndof)
        .filter(|&d| !constrained[d])
        .map(|d| residual_full[d] * residual_full[d])
        .sum::<f64>()
        .sqrt();
    let force_scale = sys.force.norm().max(1e-300);

    // Element stresses and energy.
    let mut sigma_h = Vec::with_capacity(mesh.counts.triangles);
    let mut element_energy_sq = Vec::with_capacity(mesh.counts.triangles);
    let mut energy_sq = 0.0;
    for t in &mesh.triangles {
        let (b, area) = strain_matrix(mesh, t.id);
        let mut ue = SMatrix::<f64, 6, 1>::zeros();
        for i in 0..3 {
            ue[2 * i] = u[2 * t.vertices[i]];
            ue[2 * i + 1] = u[2 * t.vertices[i] + 1];
        }
        let eps = b * ue;
        let sigma = material.hooke * eps;
        let e2 = area * (sigma.transpose() * material.hooke_inv * sigma)[0];
        sigma_h.push(Vector3::new(sigma[0], sigma[1], sigma[2]));
        element_energy_sq.push(e2);
        energy_sq += e2;
    }

    Ok(FeSolution {
        u,
        sigma_h,
        lambda_d,
        energy_sq,
        element_energy_sq,
        n_free_dofs: n_free,
        solver_residual: free_residual_norm / force_scale,
    })
}

/// True discretization error in the energy norm from a known exact strain:
/// `e_ex = sqrt(|eps_ex|^2 - |eps_H|^2)` by Galerkin orthogonality, the
/// exact term integrated with a degree-10 rule.
pub fn exact_error_norm(
    mesh: &Mesh,
    material: &Material,
    solution: &FeSolution,
    exact_strain: impl Fn(f64, f64) -> Vector3<f64>,
) -> Result<f64, FeError> {
    let mut exact_sq = 0.0;
    for t in &mesh.triangles {
        let verts: [(f64, f64); 3] = std::array::from_fn(|k| mesh.vertex_xy(t.vertices[k]));
        for q in triangle_rule(verts, 10) {
            let eps = exact_strain(q.x, q.y);
            exact_sq += q.w * (eps.transpose() * material.hooke * eps)[0];
        }
    }
    let diff = exact_sq - solution.energy_sq;
    let noise = 1e-12 * exact_sq.max(1e-300);
    if diff < -noise {
        return Err(FeError::NegativeRadicand { exact: exact_sq, fe: solution.energy_sq });
    }
    // Differences below the quadrature/solver noise floor are zero.
    Ok(if diff <= noise { 0.0 } else { diff.sqrt() })
}

/// Sum of reactions plus applied loads, and the matching moment balance
/// about the origin; both vanish for a solved system.
pub fn global_balance(mesh: &Mesh, load: &LoadCase, solution: &FeSolution) -> (Vector2<f64>, f64) {
    let mut force = Vector2::zeros();
    let mut moment = 0.0;
    for &(v, lam) in &solution.lambda_d {
        let (x, y) = mesh.vertex_xy(v);
        force += lam;
        moment += x * lam.y - y * lam.x;
    }
    for t in &mesh.triangles {
        let degree = load.body.product_degree(1).max(3);
        let verts: [(f64, f64); 3] = std::array::from_fn(|k| mesh.vertex_xy(t.vertices[k]));
        for q in triangle_rule(verts, degree) {
            let f = (load.body.eval)(q.x, q.y);
            force += q.w * f;
            moment += q.w * (q.x * f.y - q.y * f.x);
        }
    }
    let rule = gauss_legendre(3);
    for e in mesh.edges.iter().filter(|e| e.class == EdgeClass::Neumann) {
        let (xa, ya) = mesh.vertex_xy(e.a);
        let (xb, yb) = mesh.vertex_xy(e.b);
        for &(t, w) in &rule {
            let s = 0.5 * (t + 1.0);
            let (x, y) = (xa + s * (xb - xa), ya + s * (yb - ya));
            let g = (load.neumann)(e.id, x, y);
            let wq = 0.5 * e.length * w;
            force += wq * g;
            moment += wq * (x * g.y - y * g.x);
        }
    }
    (force, moment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{rectangle, DiagonalPattern, EdgeClass, MeshBuilder, SideTag};
    use approx::assert_relative_eq;

    fn unit_material() -> Material {
        Material::plane_stress(1.0, 0.0)
    }

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

    #[test]
    fn hooke_is_spd_in_valid_range() {
        for (e, nu) in [(1.0, 0.3), (2.5, 0.0), (1.0, -0.5), (10.0, 0.49)] {
            let m = Material::plane_stress(e, nu);
            let chol = m.hooke.cholesky();
            assert!(chol.is_some(), "E={e}, nu={nu}");
        }
    }

    #[test]
    fn single_triangle_stiffness_has_three_rigid_modes() {
        let mesh = MeshBuilder::new(
            vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .tag_all([
            (0, 1, EdgeClass::Neumann),
            (1, 2, EdgeClass::Neumann),
            (0, 2, EdgeClass::Neumann),
        ])
        .build()
        .unwrap();
        let (b, area) = strain_matrix(&mesh, 0);
        let ke = b.transpose() * unit_material().hooke * b * area;
        // Rigid translations and the infinitesimal rotation (-y, x).
        let coords = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        let mut rigid = [SMatrix::<f64, 6, 1>::zeros(); 3];
        for (i, &(x, y)) in coords.iter().enumerate() {
            rigid[0][2 * i] = 1.0;
            rigid[1][2 * i + 1] = 1.0;
            rigid[2][2 * i] = -y;
            rigid[2][2 * i + 1] = x;
        }
        for r in rigid {
            assert!((ke * r).norm() < 1e-14);
        }
        // A stretch mode stores energy.
        let mut stretch = SMatrix::<f64, 6, 1>::zeros();
        for (i, &(x, _)) in coords.iter().enumerate() {
            stretch[2 * i] = x;
        }
        assert!((stretch.transpose() * ke * stretch)[0] > 0.1);
    }

    #[test]
    fn uniform_body_force_resultant() {
        let mesh = two_triangle_square();
        let load = LoadCase::body_only(BodyForce::constant(Vector2::new(1.0, 0.0)));
        let sys = assemble(&mesh, &unit_material(), &load);
        let fx: f64 = (0..mesh.counts.vertices).map(|v| sys.force[2 * v]).sum();
        let fy: f64 = (0..mesh.counts.vertices).map(|v| sys.force[2 * v + 1]).sum();
        assert_relative_eq!(fx, 1.0, max_relative = 1e-14);
        assert!(fy.abs() < 1e-15);
    }

    #[test]
    fn patch_test_reproduces_linear_field() {
        let mesh = two_triangle_square();
        let material = unit_material();
        let load = LoadCase {
            body: BodyForce::zero(),
            neumann: Arc::new(|_, _, _| Vector2::zeros()),
            neumann_degree: 0,
            dirichlet: Arc::new(|_, x, _| Vector2::new(x, 0.0)),
        };
        let sys = assemble(&mesh, &material, &load);
        let sol = solve(&mesh, &material, &load, &sys).unwrap();
        for s in &sol.sigma_h {
            assert_relative_eq!(s[0], 1.0, max_relative = 1e-12);
            assert!(s[1].abs() < 1e-12 && s[2].abs() < 1e-12);
        }
        // Exact error vanishes: P1 reproduces linear fields.
        let e = exact_error_norm(&mesh, &material, &sol, |_, _| Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert!(e < 1e-10, "e_ex = {e}");
    }

    #[test]
    fn zero_load_zero_solution() {
        let mesh = two_triangle_square();
        let material = unit_material();
        let load = LoadCase::body_only(BodyForce::zero());
        let sys = assemble(&mesh, &material, &load);
        let sol = solve(&mesh, &material, &load, &sys).unwrap();
        assert!(sol.u.norm() < 1e-15);
        assert!(sol.energy_sq.abs() < 1e-30);
        for (_, lam) in &sol.lambda_d {
            assert!(lam.norm() < 1e-15);
        }
    }

    #[test]
    fn reactions_balance_shear_load() {
        // Unit square, clamped bottom, unit shear on top.
        let mesh = rectangle(1.0, 1.0, 4, 4, DiagonalPattern::Same, SideTag::clamped_bottom()).unwrap();
        let material = Material::plane_stress(1.0, 0.3);
        let top_edges: Vec<bool> = mesh
            .edges
            .iter()
            .map(|e| {
                e.class == EdgeClass::Neumann
                    && mesh.vertex_xy(e.a).1 > 1.0 - 1e-12
                    && mesh.vertex_xy(e.b).1 > 1.0 - 1e-12
            })
            .collect();
        let load = LoadCase {
            body: BodyForce::zero(),
            neumann: Arc::new(move |e, _, _| {
                if top_edges[e] {
                    Vector2::new(1.0, 0.0)
                } else {
                    Vector2::zeros()
                }
            }),
            neumann_degree: 0,
            dirichlet: Arc::new(|_, _, _| Vector2::zeros()),
        };
        let sys = assemble(&mesh, &material, &load);
        let sol = solve(&mesh, &material, &load, &sys).unwrap();
        let (force, moment) = global_balance(&mesh, &load, &sol);
        assert!(force.norm() < 1e-10, "net force {force}");
        assert!(moment.abs() < 1e-10, "net moment {moment}");
        // Reactions alone sum to minus the applied load (-1, 0).
        let r: Vector2<f64> = sol.lambda_d.iter().map(|&(_, l)| l).sum();
        assert_relative_eq!(r.x, -1.0, max_relative = 1e-10);
        assert!(r.y.abs() < 1e-10);
        assert!(sol.solver_residual < 1e-12);
    }

    #[test]
    fn insufficient_constraints_rejected() {
        let mesh = MeshBuilder::new(
            vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .tag_all([
            (0, 1, EdgeClass::Neumann),
            (1, 2, EdgeClass::Neumann),
            (0, 2, EdgeClass::Neumann),
        ])
        .build()
        .unwrap();
        let material = unit_material();
        let load = LoadCase::body_only(BodyForce::zero());
        let sys = assemble(&mesh, &material, &load);
        assert!(matches!(
            solve(&mesh, &material, &load, &sys),
            Err(FeError::SingularSystem)
        ));
    }
}
