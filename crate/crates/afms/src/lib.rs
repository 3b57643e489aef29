//! Synthesis and single-record parameter estimation of amplitude- and
//! frequency-modulated sinusoidal (AFMS) signals.
//!
//! The signal model is a carrier plus two scaled sidebands, all sharing a
//! sinusoidal FM phase term:
//!
//! ```text
//! x[n] =       A  cos(ω_c n       + k_f sin(ω_f n) + θ)
//!      + (sAk_a/2) cos((ω_c+ω_a) n + k_f sin(ω_f n) + θ + θ_a)
//!      + (rAk_a/2) cos((ω_c−ω_a) n + k_f sin(ω_f n) + θ − θ_a − θ_b)
//! ```
//!
//! with `r` fixed at −1. Estimation works from a single sampled record: the
//! even-lag product function concentrates the signal's energy into clusters of
//! spectral lines on the lattice `2ω_c + m·ω_a` (spaced `ω_f` within each
//! cluster); a linear-prediction model fitted by the modified covariance
//! method extracts the line frequencies as prediction-error-filter roots;
//! cluster symmetry yields the center frequencies; a Bessel-expansion
//! least-squares solve recovers the complex amplitudes; and Bessel-ratio
//! inversion recovers the FM index. See [`estimator::fit_block`].
//!
//! Modules:
//! - [`model`] — parameter record, synthesis (direct and Bessel-expansion),
//!   ensemble autocorrelation.
//! - [`bessel`] — Bessel functions of the first kind and ratio inversion.
//! - [`pf`] — the even-lag product function.
//! - [`spectral`] — modified covariance LP fit, PEF roots, spectra.
//! - [`estimator`] — the full block-fitting pipeline.

pub mod bessel;
pub mod error;
pub mod estimator;
pub mod model;
pub mod pf;
pub mod spectral;

pub use error::{AfmsError, Result};
pub use estimator::{fit_block, FitConfig, FitResult};
pub use model::{AfmsParams, SignalBlock};
