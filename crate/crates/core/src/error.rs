use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wavelength {wavelength_um} um is outside the valid range [{min_um}, {max_um}] um of the {branch} branch")]
    OutOfRange {
        branch: String,
        wavelength_um: f64,
        min_um: f64,
        max_um: f64,
    },

    #[error("transverse wavevector {k} rad/m is evanescent (limit {limit} rad/m)")]
    Evanescent { k: f64, limit: f64 },

    #[error("{what}: no root found in {bracket}")]
    NotFound { what: &'static str, bracket: String },

    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("{invalid} of {total} grid nodes are outside the physical domain; narrow the grid")]
    TooManyInvalidNodes { invalid: usize, total: usize },

    #[error("spectrum at the grid edge is {ratio:.3e} of the peak (limit {limit:.0e}); widen the grid to avoid aliasing")]
    EdgeDecay { ratio: f64, limit: f64 },

    #[error("{axis} peak spans {samples:.2} samples per FWHM (need {required}); refine the {axis} sampling by at least {refine}x")]
    Undersampled {
        axis: &'static str,
        samples: f64,
        required: usize,
        refine: usize,
    },

    #[error("{axis} profile: {reason}")]
    Profile { axis: &'static str, reason: String },

    #[error("blur kernel spans {kernel} samples along {axis} but the map has only {len}")]
    KernelTooWide {
        axis: &'static str,
        kernel: usize,
        len: usize,
    },

    #[error("point (tau = {tau:e} s, xi = {xi:e} m) lies outside the coherence map")]
    OutsideMap { tau: f64, xi: f64 },

    #[error("trace sampling: {0}")]
    Sampling(String),

    #[error("trace step deviates by {deviation:.2}% from uniform (limit 1%); resample the trace first")]
    NonUniformSampling { deviation: f64 },

    #[error("inconsistent trace metadata: {0}")]
    Metadata(String),

    #[error("{path}: {reason}")]
    Format { path: String, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn format(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
