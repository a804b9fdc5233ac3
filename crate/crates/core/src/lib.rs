//! Numerical laboratory for plane-wave solutions of semilinear wave systems
//! whose nonlinearities are null forms.

pub mod bessel;
pub mod diagnostics;
pub mod error;
pub mod fdtd;
pub mod geoptics;
pub mod mode;
pub mod nullform;
pub mod profiles;
pub mod quad;
pub mod renormalize;
pub mod scenario;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/null-forms.md")]
mod book_null_forms {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/renormalization.md")]
mod book_renormalization {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/modes.md")]
mod book_modes {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/fdtd.md")]
mod book_fdtd {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/geoptics.md")]
mod book_geoptics {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/scenarios.md")]
mod book_scenarios {}
