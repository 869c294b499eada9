//! Benchmark problems, the end-to-end pipeline driver and CSV reporting.

use crate::basis::{BasisOrder, Frame};
use crate::eet::classic_edge_works;
use crate::error::MeshError;
use crate::fe::{assemble, exact_error_norm, solve, BodyForce, LoadCase, Material};
use crate::mesh::{
    rectangle, rectangle_with_hole, DiagonalPattern, EdgeClass, IncidenceMatrix, KernelBasis,
    Mesh, SideTag,
};
use crate::optimize::{eet_norm_matrix, erdc_optimize, fe_edge_works, optimize_norm, Criterion, NormMatrix};
use crate::prolongation::{
    boundary_correction, internal_residuals, kernel_z, particular_solution, require_feasible,
    AlphaSplit, WorkGeometry,
};
use crate::recovery::{build_element_operators, global_estimate};
use crate::smith::SmithFactors;
use crate::Result;
use nalgebra::{Vector2, Vector3};
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

/// Exact solution of a benchmark, when available.
#[derive(Clone)]
pub struct ExactSolution {
    pub displacement: Arc<dyn Fn(f64, f64) -> Vector2<f64> + Send + Sync>,
    /// Strain in Voigt form with engineering shear.
    pub strain: Arc<dyn Fn(f64, f64) -> Vector3<f64> + Send + Sync>,
}

/// A mesh, material and load ready to run, with optional exact solution.
pub struct BenchmarkProblem {
    pub name: String,
    pub h: f64,
    pub mesh: Mesh,
    pub material: Material,
    pub load: LoadCase,
    pub exact: Option<ExactSolution>,
}

fn benchmark_material() -> Material {
    Material::plane_stress(1.0, 0.3)
}

/// Rectangle ]0,8[ x ]0,1[, homogeneous Dirichlet boundary, body force
/// manufactured so the exact displacement is
/// `u = (x(x-8) y(y-1)^3, x(x-8) y^2(y-1))`.
pub fn problem_analytic_rectangle(h: f64) -> Result<BenchmarkProblem> {
    let n = (1.0 / h).round() as usize;
    assert!(n >= 1 && (1.0 / h - n as f64).abs() < 1e-9, "h must divide 1");
    let mesh = rectangle(8.0, 1.0, 8 * n, n, DiagonalPattern::Same, SideTag::all(EdgeClass::Dirichlet))?;
    let material = benchmark_material();
    let (e, nu) = (material.young_modulus, material.poisson_ratio);
    let ebar = e / (1.0 - nu * nu);
    let g = e / (2.0 * (1.0 + nu));

    // u_x = P(x) A(y), u_y = P(x) B(y) with
    // P = x^2 - 8x, A = y(y-1)^3, B = y^2(y-1).
    let p = |x: f64| x * x - 8.0 * x;
    let dp = |x: f64| 2.0 * x - 8.0;
    let a = |y: f64| y * (y - 1.0).powi(3);
    let da = |y: f64| (y - 1.0).powi(2) * (4.0 * y - 1.0);
    let dda = |y: f64| 6.0 * (y - 1.0) * (2.0 * y - 1.0);
    let b = |y: f64| y * y * (y - 1.0);
    let db = |y: f64| 3.0 * y * y - 2.0 * y;
    let ddb = |y: f64| 6.0 * y - 2.0;

    let strain = move |x: f64, y: f64| {
        Vector3::new(dp(x) * a(y), p(x) * db(y), p(x) * da(y) + dp(x) * b(y))
    };
    let body = move |x: f64, y: f64| {
        let fx = -(ebar * (2.0 * a(y) + nu * dp(x) * db(y))
            + g * (p(x) * dda(y) + dp(x) * db(y)));
        let fy = -(g * (dp(x) * da(y) + 2.0 * b(y))
            + ebar * (p(x) * ddb(y) + nu * dp(x) * da(y)));
        Vector2::new(fx, fy)
    };
    let displacement = move |x: f64, y: f64| Vector2::new(p(x) * a(y), p(x) * b(y));

    Ok(BenchmarkProblem {
        name: "analytic".into(),
        h,
        mesh,
        material,
        load: LoadCase {
            body: BodyForce::polynomial(4, body),
            neumann: Arc::new(|_, _, _| Vector2::zeros()),
            neumann_degree: 0,
            dirichlet: Arc::new(|_, _, _| Vector2::zeros()),
        },
        exact: Some(ExactSolution {
            displacement: Arc::new(displacement),
            strain: Arc::new(strain),
        }),
    })
}

fn shear_load(mesh: &Mesh) -> LoadCase {
    let top: Vec<bool> = mesh
        .edges
        .iter()
        .map(|e| {
            e.class == EdgeClass::Neumann
                && mesh.vertex_xy(e.a).1 > 1.0 - 1e-12
                && mesh.vertex_xy(e.b).1 > 1.0 - 1e-12
        })
        .collect();
    LoadCase {
        body: BodyForce::zero(),
        neumann: Arc::new(move |e, _, _| {
            if top[e] { Vector2::new(1.0, 0.0) } else { Vector2::zeros() }
        }),
        neumann_degree: 0,
        dirichlet: Arc::new(|_, _, _| Vector2::zeros()),
    }
}

/// Unit square, clamped bottom, horizontal unit shear on the top boundary,
/// traction-free sides.
pub fn problem_square_shear(h: f64) -> Result<BenchmarkProblem> {
    let n = (1.0 / h).round().max(1.0) as usize;
    let mesh = rectangle(1.0, 1.0, n, n, DiagonalPattern::Same, SideTag::clamped_bottom())?;
    let load = shear_load(&mesh);
    Ok(BenchmarkProblem {
        name: "shear".into(),
        h,
        mesh,
        material: benchmark_material(),
        load,
        exact: None,
    })
}

/// The shear problem on a deliberately anisotropic mesh whose triangles
/// have a base-to-height ratio of 10.
pub fn problem_thin_triangles() -> Result<BenchmarkProblem> {
    let mesh = rectangle(1.0, 1.0, 1, 10, DiagonalPattern::Same, SideTag::clamped_bottom())?;
    let load = shear_load(&mesh);
    Ok(BenchmarkProblem {
        name: "thin".into(),
        h: 0.1,
        mesh,
        material: benchmark_material(),
        load,
        exact: None,
    })
}

/// Unit square with a centered square hole of side 1/3, clamped outer
/// bottom, unit pressure on the hole boundary; exercises the hole-loop
/// kernel column end to end.
pub fn problem_square_with_hole(h: f64) -> Result<BenchmarkProblem> {
    let mut n = (1.0 / h).round().max(3.0) as usize;
    n = n.div_ceil(3) * 3;
    let mesh = rectangle_with_hole(n, DiagonalPattern::Same, SideTag::clamped_bottom(), EdgeClass::Neumann)?;
    // Unit pressure: traction -n on the hole boundary (n = outward normal,
    // pointing into the hole).
    let hole_traction: Vec<Option<Vector2<f64>>> = mesh
        .edges
        .iter()
        .map(|e| {
            if !e.is_border() {
                return None;
            }
            let (x, y) = e.midpoint;
            let on_hole = x > 0.2 && x < 0.8 && y > 0.2 && y < 0.8;
            on_hole.then(|| {
                let n = mesh.border_outward_normal(e.id);
                -Vector2::new(n.0, n.1)
            })
        })
        .collect();
    let load = LoadCase {
        body: BodyForce::zero(),
        neumann: Arc::new(move |e, _, _| hole_traction[e].unwrap_or_else(Vector2::zeros)),
        neumann_degree: 0,
        dirichlet: Arc::new(|_, _, _| Vector2::zeros()),
    };
    Ok(BenchmarkProblem {
        name: "hole".into(),
        h: 1.0 / n as f64,
        mesh,
        material: benchmark_material(),
        load,
        exact: None,
    })
}

/// Patch test: linear exact displacement, clamped bottom and the exact
/// constant tractions elsewhere, so every estimator must vanish.
pub fn problem_patch(h: f64) -> Result<BenchmarkProblem> {
    let n = (1.0 / h).round().max(2.0) as usize;
    let mesh = rectangle(1.0, 1.0, n, n, DiagonalPattern::Same, SideTag::clamped_bottom())?;
    let material = benchmark_material();
    // u = (x, 0): sigma = hooke . (1, 0, 0).
    let sigma = material.hooke * Vector3::new(1.0, 0.0, 0.0);
    let load = LoadCase {
        body: BodyForce::zero(),
        neumann: Arc::new(move |_, x, y| {
            if x < 1e-12 {
                Vector2::new(-sigma[0], -sigma[2])
            } else if x > 1.0 - 1e-12 {
                Vector2::new(sigma[0], sigma[2])
            } else if y > 1.0 - 1e-12 {
                Vector2::new(sigma[2], sigma[1])
            } else {
                Vector2::zeros()
            }
        }),
        neumann_degree: 0,
        dirichlet: Arc::new(|_, x, _| Vector2::new(x, 0.0)),
    };
    Ok(BenchmarkProblem {
        name: "patch".into(),
        h,
        mesh,
        material,
        load,
        exact: Some(ExactSolution {
            displacement: Arc::new(|x, _| Vector2::new(x, 0.0)),
            strain: Arc::new(|_, _| Vector3::new(1.0, 0.0, 0.0)),
        }),
    })
}

/// Look up a benchmark problem by CLI name.
pub fn problem_by_name(name: &str, h: f64) -> Result<BenchmarkProblem> {
    match name {
        "analytic" => problem_analytic_rectangle(h),
        "shear" => problem_square_shear(h),
        "thin" => problem_thin_triangles(),
        "hole" => problem_square_with_hole(h),
        "patch" => problem_patch(h),
        other => Err(MeshError::Format(format!("unknown problem {other:?}")).into()),
    }
}

/// Pipeline configuration.
#[derive(Clone, Copy, Debug)]
pub struct PipelineConfig {
    pub criterion: Criterion,
    pub order: BasisOrder,
    pub alpha: AlphaSplit,
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            criterion: Criterion::EetNorm,
            order: BasisOrder::Two,
            alpha: AlphaSplit::Half,
            threads: None,
        }
    }
}

/// Wall-clock milliseconds per pipeline stage.
#[derive(Clone, Copy, Debug, Default)]
pub struct StageTimes {
    pub fe_ms: f64,
    pub works_ms: f64,
    pub elements_ms: f64,
}

/// One benchmark run: estimate, exact error when available, and the
/// machine-readable invariant report.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub problem: String,
    pub h: f64,
    pub ndof: usize,
    pub ntri: usize,
    pub criterion: &'static str,
    pub order: u32,
    pub estimate: f64,
    pub e_ex: Option<f64>,
    pub effectivity: Option<f64>,
    /// Energy norm |eps(u_H)|_C of the FE solution.
    pub fe_energy: f64,
    pub bound_ok: bool,
    pub nonpolynomial_load: bool,
    pub regularized: bool,
    pub prolongation_residual: f64,
    pub consistency_residual: f64,
    pub element_equilibrium_max: f64,
    pub coupling_agreement: f64,
    pub times: StageTimes,
}

impl RunReport {
    /// All invariant gates of the run.
    pub fn gates_pass(&self) -> bool {
        self.prolongation_residual <= 1e-10
            && self.consistency_residual <= 1e-10
            && self.element_equilibrium_max <= 1e-10
            && self.coupling_agreement <= 1e-8
            && self.bound_ok
    }
}

/// Run the full pipeline on one problem with one criterion.
pub fn run(problem: &BenchmarkProblem, cfg: &PipelineConfig) -> Result<RunReport> {
    match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("thread pool");
            pool.install(|| run_inner(problem, cfg))
        }
        None => run_inner(problem, cfg),
    }
}

fn run_inner(problem: &BenchmarkProblem, cfg: &PipelineConfig) -> Result<RunReport> {
    let mesh = &problem.mesh;
    let material = &problem.material;
    let load = &problem.load;

    let t0 = Instant::now();
    let sys = assemble(mesh, material, load);
    let sol = solve(mesh, material, load, &sys)?;
    let fe_ms = t0.elapsed().as_secs_f64() * 1e3;

    // Shared topology and geometry.
    let t1 = Instant::now();
    let frame = Frame::from_mesh(mesh);
    let geom = WorkGeometry::new(mesh, frame);
    let delta = IncidenceMatrix::from_mesh(mesh);
    let kernel = KernelBasis::compute(mesh, &delta)?;
    let smith = SmithFactors::factorize(mesh, &delta, kernel)?;
    let raw = internal_residuals(mesh, &sol, load, &geom.frame);
    let (res, border) = boundary_correction(&raw, mesh, load, &sol, cfg.alpha, &geom.frame)?;

    // Element operators are needed by every criterion for the final
    // solves; the energy-minimization criterion also consumes them while
    // choosing gamma.
    let ops = build_element_operators(mesh, material, load, &sol, &geom, &border, cfg.order)?;

    let mut regularized = false;
    let works = match cfg.criterion {
        Criterion::Classic => classic_edge_works(mesh, material, load, &sol, &border, &geom)?,
        sf => {
            let works0 = particular_solution(mesh, &smith, &geom, &res)?;
            let z = kernel_z(mesh, &smith, &geom.frame);
            let out = match sf {
                Criterion::L2 => {
                    let few = fe_edge_works(mesh, &sol, &geom, &delta);
                    let m = NormMatrix::identity(mesh.counts.internal_edges);
                    optimize_norm(mesh, &smith, &geom, &z, &works0, &few.works, &m)?
                }
                Criterion::EetNorm => {
                    let few = fe_edge_works(mesh, &sol, &geom, &delta);
                    let m = eet_norm_matrix(mesh, &geom);
                    optimize_norm(mesh, &smith, &geom, &z, &works0, &few.works, &m)?
                }
                Criterion::Erdc => erdc_optimize(mesh, &smith, &geom, &z, &works0, &ops)?,
                Criterion::Classic => unreachable!(),
            };
            regularized = out.regularized;
            out.works
        }
    };
    let report = require_feasible(&delta, &geom, &works, &res)?;
    let works_ms = t1.elapsed().as_secs_f64() * 1e3;

    let t2 = Instant::now();
    let estimate = global_estimate(&ops, &works)?;
    let elements_ms = t2.elapsed().as_secs_f64() * 1e3;

    let e_ex = match &problem.exact {
        Some(ex) => {
            let strain = ex.strain.clone();
            Some(exact_error_norm(mesh, material, &sol, move |x, y| strain(x, y))?)
        }
        None => None,
    };
    let effectivity = e_ex.and_then(|e| (e > 0.0).then(|| estimate.global / e));

    Ok(RunReport {
        problem: problem.name.clone(),
        h: problem.h,
        ndof: sol.n_free_dofs,
        ntri: mesh.counts.triangles,
        criterion: cfg.criterion.name(),
        order: cfg.order.as_u32(),
        estimate: estimate.global,
        e_ex,
        effectivity,
        fe_energy: sol.energy_sq.sqrt(),
        bound_ok: estimate.bound_ok,
        nonpolynomial_load: !load.body.is_polynomial(),
        regularized,
        prolongation_residual: report.delta_residual,
        consistency_residual: report.consistency_residual,
        element_equilibrium_max: estimate.element_equilibrium_max,
        coupling_agreement: estimate.eq_coupling_agreement,
        times: StageTimes { fe_ms, works_ms, elements_ms },
    })
}

/// Least-squares slope of log(y) against log(h).
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(h, y) in points {
        let (x, y) = (h.ln(), y.ln());
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// CSV schema identifier written as the first line of every report file.
pub const CSV_SCHEMA: &str = "# equilib-report v1: problem,h,ndof,ntri,criterion,order,estimate,e_ex,effectivity,fe_energy,bound,nonpoly_load,regularized,prolongation_resid,consistency_resid,element_equilibrium,coupling_agreement,t_fe_ms,t_works_ms,t_elements_ms";

pub fn csv_header() -> String {
    format!(
        "{CSV_SCHEMA}\nproblem,h,ndof,ntri,criterion,order,estimate,e_ex,effectivity,fe_energy,bound,nonpoly_load,regularized,prolongation_resid,consistency_resid,element_equilibrium,coupling_agreement,t_fe_ms,t_works_ms,t_elements_ms\n"
    )
}

pub fn csv_row(r: &RunReport) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.9e}"));
    let mut s = String::new();
    let _ = write!(
        s,
        "{},{:.6},{},{},{},{},{:.9e},{},{},{:.9e},{},{},{},{:.3e},{:.3e},{:.3e},{:.3e},{:.3},{:.3},{:.3}",
        r.problem,
        r.h,
        r.ndof,
        r.ntri,
        r.criterion,
        r.order,
        r.estimate,
        opt(r.e_ex),
        opt(r.effectivity),
        r.fe_energy,
        r.bound_ok,
        r.nonpolynomial_load,
        r.regularized,
        r.prolongation_residual,
        r.consistency_residual,
        r.element_equilibrium_max,
        r.coupling_agreement,
        r.times.fe_ms,
        r.times.works_ms,
        r.times.elements_ms,
    );
    s.push('\n');
    s
}

pub fn write_csv(reports: &[RunReport], path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
    let mut out = csv_header();
    for r in reports {
        out.push_str(&csv_row(r));
    }
    std::fs::write(path, out)
}

/// Topology diagnostics for `check-mesh`.
#[derive(Clone, Debug)]
pub struct MeshCheck {
    pub counts: crate::mesh::MeshCounts,
    pub euler_ok: bool,
    pub kernel_dim: usize,
    pub expected_kernel_dim: usize,
    pub left_kernel_ok: bool,
    pub rank: usize,
    pub two_border_elements: Vec<usize>,
}

impl MeshCheck {
    pub fn ok(&self) -> bool {
        self.euler_ok && self.kernel_dim == self.expected_kernel_dim && self.left_kernel_ok
    }
}

pub fn check_mesh(mesh: &Mesh) -> Result<MeshCheck> {
    let delta = IncidenceMatrix::from_mesh(mesh);
    let kernel = KernelBasis::compute(mesh, &delta)?;
    let kernel_dim = kernel.n_cols();
    let smith = SmithFactors::factorize(mesh, &delta, kernel)?;
    let c = mesh.counts;
    let euler_ok = c.triangles as i64 - c.edges as i64 + c.vertices as i64
        == c.components as i64 - c.holes as i64;
    let ones = vec![1.0; c.triangles];
    let left_kernel_ok = delta.apply_transpose(&ones).iter().all(|&x| x == 0.0);
    Ok(MeshCheck {
        counts: c,
        euler_ok,
        kernel_dim,
        expected_kernel_dim: c.internal_vertices + c.holes,
        left_kernel_ok,
        rank: smith.rank,
        two_border_elements: mesh.two_border_edge_elements(),
    })
}
