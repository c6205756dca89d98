//! Linear gain/loss cavity rings: dynamical matrix, spectra, moment
//! evolution with amplification noise and a Monte-Carlo cross-check.

pub mod error;
pub mod evolution;
pub mod linalg;
pub mod model;
pub mod noise_mc;
pub mod ode;
pub mod propagator;
pub mod spectra;

pub use nalgebra;

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/cavity-model.md")]
    mod cavity_model {}
    #[doc = include_str!("../../../book/src/spectra.md")]
    mod spectra {}
    #[doc = include_str!("../../../book/src/evolution.md")]
    mod evolution {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
}
