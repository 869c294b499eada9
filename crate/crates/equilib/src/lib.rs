//! Guaranteed energy-norm error bounds for 2D linear elasticity.
//!
//! The crate solves the primal P1 displacement problem on an oriented
//! triangular mesh, reconstructs statically admissible edge tractions from
//! the finite-element solution, and turns them into a strict upper bound of
//! the discretization error measured in the energy norm.
//!
//! Two traction-recovery routes are provided:
//!
//! - a global route that assembles the strong-prolongation system over the
//!   internal-edge works, characterizes its full solution set through the
//!   topology of the mesh (incidence matrix, its kernels, an exact integer
//!   Smith factorization) and closes it with a selectable optimization
//!   criterion ([`optimize::Criterion`]);
//! - the classical element equilibration technique ([`eet`]), solving one
//!   small system per vertex star-patch, kept as an independent oracle and
//!   CPU baseline.
//!
//! Both routes feed the same element-level Neumann solves ([`recovery`])
//! whose complementary energies accumulate into the error bound.
//!
//! The [`bench`] module packages the benchmark problems, structured mesh
//! generators and the end-to-end pipeline driver used by the `verify` CLI.

pub mod basis;
pub mod bench;
pub mod eet;
pub mod error;
pub mod fe;
pub mod mesh;
pub mod optimize;
pub mod prolongation;
pub mod quadrature;
pub mod recovery;
pub mod smith;

pub use error::Error;

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;
