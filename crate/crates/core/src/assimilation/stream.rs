use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{apply_interpolant, AssimilationError, InterpolantSpec};
use crate::integrator::{integrate, IntegratorConfig, Observer, ObserverError, Trajectory};
use crate::model::{Dynamics, State};
use crate::random::{stream, stream_rng};
use crate::spectral::{
    forward_transform_unfiltered, inverse_many, parity_project, Parity, SpectralField,
};

/// Time-ordered observations `I_h(u⊥)` of a reference run.
#[derive(Clone, Debug)]
pub struct ObservationStream {
    spec: InterpolantSpec,
    times: Vec<f64>,
    frames: Vec<[SpectralField; 2]>,
}

impl ObservationStream {
    pub fn new(spec: InterpolantSpec) -> Self {
        Self {
            spec,
            times: Vec::new(),
            frames: Vec::new(),
        }
    }

    pub fn spec(&self) -> &InterpolantSpec {
        &self.spec
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frames(&self) -> &[[SpectralField; 2]] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Appends a frame. Times must increase strictly and both fields must
    /// be even in `z`.
    pub fn push(&mut self, time: f64, frame: [SpectralField; 2]) -> Result<(), AssimilationError> {
        if let Some(&last) = self.times.last() {
            if !(time > last) {
                return Err(AssimilationError::NonIncreasingTime { last, got: time });
            }
        }
        for f in &frame {
            if f.parity() != Parity::EvenInZ {
                return Err(AssimilationError::WrongParity(f.parity()));
            }
        }
        self.times.push(time);
        self.frames.push(frame);
        Ok(())
    }

    /// The frame at `time`, or the linear interpolation of the two frames
    /// around it.
    pub fn at(&self, time: f64) -> Result<[SpectralField; 2], AssimilationError> {
        let unavailable = || AssimilationError::ObservationUnavailable {
            time,
            first: self.times.first().copied().unwrap_or(f64::NAN),
            last: self.times.last().copied().unwrap_or(f64::NAN),
        };
        let idx = self.times.partition_point(|&s| s < time);
        if idx < self.len() && self.times[idx] == time {
            return Ok(self.frames[idx].clone());
        }
        if idx == 0 || idx == self.len() {
            return Err(unavailable());
        }
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let w = (time - t0) / (t1 - t0);
        let (a, b) = (&self.frames[idx - 1], &self.frames[idx]);
        Ok(std::array::from_fn(|c| {
            let mut f = a[c].scaled(1.0 - w);
            f.axpy(w, &b[c]);
            f
        }))
    }

    /// Drops frames that can no longer be needed by a reader at `time`,
    /// keeping the last one at or before it.
    pub fn discard_before(&mut self, time: f64) {
        let idx = self.times.partition_point(|&s| s <= time);
        if idx > 1 {
            self.times.drain(..idx - 1);
            self.frames.drain(..idx - 1);
        }
    }
}

/// `I_h(u⊥)` of a state: the only information the nudged run receives.
pub fn observe(state: &State, spec: &InterpolantSpec) -> Result<[SpectralField; 2], AssimilationError> {
    Ok([
        apply_interpolant(&state.u[0], spec)?,
        apply_interpolant(&state.u[1], spec)?,
    ])
}

/// `I_h(u⊥ + ε)` with `ε` white noise of standard deviation `std` at the
/// grid points, made even in `z` before filtering.
pub(crate) fn observe_noisy(
    state: &State,
    spec: &InterpolantSpec,
    std: f64,
    rng: &mut ChaCha8Rng,
) -> Result<[SpectralField; 2], AssimilationError> {
    let grid = state.grid();
    let mut values = inverse_many(&[&state.u[0], &state.u[1]]);
    let mut out = Vec::with_capacity(2);
    for v in values.iter_mut() {
        for x in v.iter_mut() {
            *x += std * rng.sample::<f64, _>(StandardNormal);
        }
        let raw = forward_transform_unfiltered(v, Parity::EvenInZ, grid)?;
        out.push(apply_interpolant(&parity_project(&raw, Parity::EvenInZ), spec)?);
    }
    let b = out.pop().expect("two fields");
    let a = out.pop().expect("two fields");
    Ok([a, b])
}

/// Observer that stores `I_h(u⊥)` every `cadence` steps.
pub struct ObservationRecorder {
    stream: ObservationStream,
    cadence: usize,
    noise: Option<(f64, ChaCha8Rng)>,
}

impl ObservationRecorder {
    pub fn new(spec: InterpolantSpec, cadence: usize) -> Result<Self, AssimilationError> {
        if cadence == 0 {
            return Err(AssimilationError::InvalidParameter {
                name: "cadence",
                value: 0.0,
                constraint: "must be at least 1",
            });
        }
        Ok(Self {
            stream: ObservationStream::new(spec),
            cadence,
            noise: None,
        })
    }

    /// Adds Gaussian noise to the observed velocity before filtering.
    pub fn with_noise(mut self, std: f64, seed: u64) -> Self {
        self.noise = (std > 0.0).then(|| (std, stream_rng(seed, stream::OBSERVATION_NOISE)));
        self
    }

    pub fn stream(&self) -> &ObservationStream {
        &self.stream
    }

    pub fn into_stream(self) -> ObservationStream {
        self.stream
    }
}

impl Observer for ObservationRecorder {
    fn observe(&mut self, step: usize, state: &State) -> Result<(), ObserverError> {
        if step % self.cadence != 0 {
            return Ok(());
        }
        let spec = *self.stream.spec();
        let frame = match self.noise.as_mut() {
            None => observe(state, &spec)?,
            Some((std, rng)) => observe_noisy(state, &spec, *std, rng)?,
        };
        self.stream.push(state.time, frame)?;
        Ok(())
    }
}

/// Integrates a reference run and records its observations every
/// `cadence` steps (the sampling cadence of `config` is overridden).
pub fn record_observations<D: Dynamics + ?Sized>(
    state0: &State,
    config: &IntegratorConfig,
    dynamics: &D,
    spec: InterpolantSpec,
    cadence: usize,
) -> Result<(Trajectory, ObservationStream), AssimilationError> {
    spec.validate_for(state0.grid())?;
    let mut recorder = ObservationRecorder::new(spec, cadence)?;
    let config = IntegratorConfig {
        sample_every: cadence,
        ..*config
    };
    let traj = integrate(state0, &config, dynamics, &mut [&mut recorder])?;
    Ok((traj, recorder.into_stream()))
}
