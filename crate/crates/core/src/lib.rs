//! Low-rank preconditioned solvers for linear semidefinite programs.
//!
//! Two solvers share one problem model ([`model::SdpProblem`]) and one
//! preconditioned conjugate gradient kernel ([`pcg`]):
//!
//! * [`ip`]: a primal-dual interior-point method with NT scaling,
//! * [`pdal`]: a primal-dual method on a hyperbolic augmented Lagrangian.
//!
//! Both are matrix-free in the Schur complement; their preconditioners
//! ([`precond`]) exploit a dual solution of low rank. [`truss`] builds
//! the truss topology instances these solvers are tuned for.

pub mod error;
pub mod ip;
pub mod linalg;
pub mod model;
pub mod pcg;
pub mod pdal;
pub mod precond;
pub mod report;
pub mod truss;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/interior_point.md")]
    mod interior_point {}
    #[doc = include_str!("../../../book/src/preconditioners.md")]
    mod preconditioners {}
    #[doc = include_str!("../../../book/src/augmented_lagrangian.md")]
    mod augmented_lagrangian {}
    #[doc = include_str!("../../../book/src/truss.md")]
    mod truss {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
