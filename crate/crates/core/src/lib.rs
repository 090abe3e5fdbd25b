//! Moreau–Yosida inf-convolution on closed-form model Riemannian manifolds.
//!
//! For `f: M → ℝ ∪ {+∞}` and `λ > 0` the envelope
//!
//! ```text
//! f_λ(x) = inf_y { f(y) + d(x, y)² / (2λ) }
//! ```
//!
//! is computed by a localized grid search followed by local refinement. The
//! [`verify`] module turns the envelope's structural properties (order,
//! convergence, convexity, C¹ smoothness, symmetry) into sampled checks, and
//! [`apps`] holds the distance-to-set, convex-body and Hamilton–Jacobi
//! constructions built on top of it.

// `!(x > 0.0)` style tests are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod envelope;
pub mod error;
pub mod field;
pub mod manifold;
pub mod sampling;
pub mod verify;

pub use error::{Error, Result};
pub use manifold::{GeodesicSegment, ManifoldModel, Point, Tangent};
