//! Backward scheme for two-player zero-sum stochastic differential games with
//! one-sided incomplete information.

pub mod belief;
pub mod convexify;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod io;
pub mod model;
pub mod quadrature;
pub mod reference;
pub mod scheme;
pub mod sum;

pub use error::{Error, Result};

// The book's snippets run as doctests of this crate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/configs.md")]
    mod configs {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/quadrature.md")]
    mod quadrature {}
    #[doc = include_str!("../../../book/src/hamiltonian.md")]
    mod hamiltonian {}
    #[doc = include_str!("../../../book/src/envelope.md")]
    mod envelope {}
    #[doc = include_str!("../../../book/src/scheme.md")]
    mod scheme {}
    #[doc = include_str!("../../../book/src/beliefs.md")]
    mod beliefs {}
    #[doc = include_str!("../../../book/src/reference.md")]
    mod reference {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
