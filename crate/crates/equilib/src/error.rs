//! Error types for every stage of the pipeline.

use thiserror::Error;

/// Mesh construction and validation failures.
#[derive(Debug, Error)]
pub enum MeshError {
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("border edge ({0}, {1}) has no boundary tag")]
    UntaggedBorderEdge(usize, usize),
    #[error("mesh is not a single connected component")]
    DisconnectedMesh,
    #[error("triangle {0} has two edges on the mesh border")]
    ElementWithTwoBorderEdges(usize),
    #[error("boundary is pinched at vertex {0} (not a disjoint union of simple cycles)")]
    PinchedBoundary(usize),
    #[error("edge ({0}, {1}) has zero length")]
    DegenerateEdge(usize, usize),
    #[error("triangle {0} has zero area")]
    DegenerateTriangle(usize),
    #[error("triangle {0} references vertex {1} which does not exist")]
    InvalidVertexId(usize, usize),
    #[error("no closed loop of internal edges found around hole {0}")]
    HoleLoopNotFound(usize),
    #[error("boundary tag given for non-border edge ({0}, {1})")]
    TagOnInternalEdge(usize, usize),
    #[error("mesh file: {0}")]
    Format(String),
}

/// Primal finite-element solve failures.
#[derive(Debug, Error)]
pub enum FeError {
    #[error("constrained system is singular (need at least 3 independent Dirichlet constraints)")]
    SingularSystem,
    #[error("exact energy {exact} below FE energy {fe}: quadrature/solver inconsistency")]
    NegativeRadicand { exact: f64, fe: f64 },
}

/// Strong-prolongation system failures.
#[derive(Debug, Error)]
pub enum ProlongationError {
    #[error("reaction split weights at vertex {0} do not sum to 1")]
    AlphaNotPartition(usize),
    #[error("incidence matrix rank {rank} != |T|-1 = {expected}: mesh not edge-connected")]
    RankDeficiencyUnexpected { rank: usize, expected: usize },
    #[error("particular solution residual {residual:.3e} above tolerance {tol:.3e}")]
    InconsistentRhs { residual: f64, tol: f64 },
}

/// Kernel optimization failures.
#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("norm matrix is not positive definite on the kernel space")]
    IndefiniteNormMatrix,
    #[error("reduced energy-minimization system is singular")]
    SingularReducedSystem,
}

/// Element recovery failures.
#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("edge {edge}: works violate geometric consistency ({residual:.3e} > {tol:.3e})")]
    InconsistentWorks { edge: usize, residual: f64, tol: f64 },
    #[error("triangle {tri}: load violates rigid-body equilibrium ({residual:.3e} > {tol:.3e})")]
    UnbalancedElement { tri: usize, residual: f64, tol: f64 },
    #[error("triangle {0}: element stiffness is not positive definite")]
    SingularElement(usize),
}

/// Classical EET failures.
#[derive(Debug, Error)]
pub enum EetError {
    #[error("star patch of vertex {vertex} is inconsistent (residual {residual:.3e})")]
    InconsistentPatch { vertex: usize, residual: f64 },
}

/// Crate-wide error type with stage attribution.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("fe solve: {0}")]
    Fe(#[from] FeError),
    #[error("prolongation: {0}")]
    Prolongation(#[from] ProlongationError),
    #[error("optimization: {0}")]
    Optimize(#[from] OptimizeError),
    #[error("element recovery: {0}")]
    Recovery(#[from] RecoveryError),
    #[error("classic eet: {0}")]
    Eet(#[from] EetError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
