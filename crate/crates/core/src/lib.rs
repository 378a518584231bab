//! Numerical toolkit for the one-dimensional nonlocal-diffusion KPP problem with
//! free boundaries
//!
//! ```text
//! u_t = d ∫_g^h J(x-y) u(t,y) dy - d u + f(u),   g(t) < x < h(t)
//! h'  = μ ∫_g^h ∫_h^∞ J(y-x) u(t,x) dy dx
//! g'  = -μ ∫_g^h ∫_{-∞}^g J(y-x) u(t,x) dy dx
//! ```
//!
//! Modules:
//! - [`kernels`]: dispersal kernels, tail function, `c±*`, flux moments
//! - [`reactions`]: KPP nonlinearities
//! - [`fixed_domain`]: principal eigenvalue, critical length, fixed-interval evolution
//! - [`free_boundary`]: the moving-front solver, outcome classification, `μ*`
//! - [`semiwave`]: semi-wave profiles and the asymptotic front speed `c₀`
//! - [`experiments`]: speed/acceleration fits and the comparison harness

// `!(x > 0.0)` style guards are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiments;
pub mod fixed_domain;
pub mod free_boundary;
pub mod kernels;
pub mod lattice;
pub mod quad;
pub mod reactions;
pub mod semiwave;

pub use kernels::{Kernel, KernelFamily, KernelSpec, Side};
pub use reactions::{Reaction, ReactionSpec};
