//! Spatiotemporal first-order coherence of high-gain parametric
//! down-conversion in a negative uniaxial crystal.
//!
//! The pipeline runs
//! [`dispersion`] → [`phasematch`] → [`spectrum`] → [`coherence`] →
//! [`interferometer`]: Sellmeier data give the type-I phase mismatch
//! Δk(ω, k), which sets the spectral density S(ω, k); a two-dimensional
//! Fourier transform of S gives the normalised correlation g¹(τ, ξ), and the
//! interferometer module turns maps into fringe traces and back.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coherence;
pub mod dispersion;
pub mod error;
pub mod grid;
pub mod interferometer;
pub mod io;
pub mod phasematch;
pub mod spectrum;

pub use coherence::{
    correlation_map, correlation_map_padded, direct_correlation, instrument_blur, metrics,
    CoherenceMap, CoherenceMetrics, Profile,
};
pub use dispersion::{OpticalBranch, SellmeierFormula, SellmeierSet, SPEED_OF_LIGHT};
pub use error::{Error, Result};
pub use grid::UniformAxis;
pub use interferometer::{
    assemble_map, detector_signal, extract_visibility, synthesize_trace, Envelope, FringeTrace,
    InterferometerConfig, ReconstructedMap, StageSweep, TraceMeta, TraceSource,
};
pub use phasematch::{collinear_degenerate_angle, CrystalConfig, LocusPoint};
pub use spectrum::{
    build_spectrum, gain_function, spectral_density, to_wavelength_angle, Gain, GridSpec,
    SpectralGrid, WavelengthAngleGrid,
};
