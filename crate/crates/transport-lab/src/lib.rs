//! Numerical laboratory for the linear transport equation
//! u_t + a(x)·∇u = 0 with bounded solenoidal, possibly discontinuous,
//! coefficient fields.
//!
//! The crate builds solutions by backward characteristic tracing for smooth
//! fields and through mollified approximation sequences for rough ones, then
//! verifies the defining properties quantitatively: the weak identity
//! against a bank of test functions, finite speed of propagation, Lᵖ-norm
//! conservation, the flow group law and measure preservation, moduli of
//! continuity, and renormalization defects for compositions g(u).
//!
//! See the guide under `book/` for the mathematical background and worked
//! examples; its code snippets are compiled and run as doctests.

pub mod bump;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod flow;
pub mod grid;
pub mod solver;
pub mod weakform;

pub use cli::run_cli;
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/characteristics.md")]
    mod characteristics {}
    #[doc = include_str!("../../../book/src/solutions.md")]
    mod solutions {}
    #[doc = include_str!("../../../book/src/weak-identity.md")]
    mod weak_identity {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/runner.md")]
    mod runner {}
}
