//! Observation operators, observation streams, the nudged system and the
//! twin-experiment driver.

mod fit;
mod interpolant;
mod stream;
mod twin;

use crate::diagnostics::{DiagnosticsError, DiagnosticsRecord};
use crate::integrator::IntegrateError;
use crate::model::ModelError;
use crate::spectral::{Parity, SpectralError};

pub use fit::{decaying_segment, fit_decay_rate, fit_decay_rate_trimmed, DecayFit, DEFAULT_TRIM};
pub use interpolant::{
    apply_interpolant, certify_volume_average_c0, verify_interpolant_bound, InterpolantBoundReport,
    InterpolantKind, InterpolantSpec, BoxCounts, MIN_TRIALS, MODAL_LOW_PASS_C0,
    VOLUME_AVERAGE_C0, VOLUME_AVERAGE_SAFETY,
};
pub use stream::{observe, record_observations, ObservationRecorder, ObservationStream};
pub use twin::{
    run_twin_experiment, NudgedPhysics, Run, TwinExperimentConfig, TwinOutcome, V0Strategy,
    FIT_FLOOR,
};

#[derive(Debug, thiserror::Error)]
pub enum AssimilationError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("h = {h}: {reason}")]
    InvalidResolution { h: f64, reason: &'static str },
    #[error("interpolants act on even fields, got {0:?}")]
    WrongParity(Parity),
    #[error("{name} = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("need at least {needed} trials, got {got}")]
    TooFewTrials { needed: usize, got: usize },
    #[error("need at least {needed} positive samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("frame time {got} does not follow {last}")]
    NonIncreasingTime { last: f64, got: f64 },
    #[error("no observation covers t = {time} (stream spans [{first}, {last}])")]
    ObservationUnavailable { time: f64, first: f64, last: f64 },
    #[error("{run:?} run blew up at t = {time}")]
    BlowUp {
        run: Run,
        time: f64,
        partial: Vec<DiagnosticsRecord>,
    },
}
