use rand::Rng;
use rand_distr::StandardNormal;

use super::DiagnosticsError;
use crate::integrator::{Observer, ObserverError};
use crate::model::{conduction_unshift, State};
use crate::random::{stream, stream_rng};

/// Gibbs allowance on the reconstructed temperature.
pub const MAX_PRINCIPLE_TOL: f64 = 0.02;
/// Round-off slack for the admissibility of the initial temperature.
pub const ADMISSIBLE_SLACK: f64 = 1e-12;
pub const MIN_MONOTONICITY_SAMPLES: usize = 10_000;

/// Extremes of `T = θ + 1 − z` on `z ∈ [0, 1]` at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemperatureRange {
    pub time: f64,
    pub min: f64,
    pub max: f64,
}

impl TemperatureRange {
    pub fn of(state: &State) -> Result<Self, DiagnosticsError> {
        let t = conduction_unshift(&state.theta).map_err(|e| match e {
            crate::model::ModelError::Spectral(s) => DiagnosticsError::Spectral(s),
            other => unreachable!("unshift only fails in the transform: {other}"),
        })?;
        let (min, max) = t
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        Ok(Self {
            time: state.time,
            min,
            max,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxPrincipleReport {
    pub samples: Vec<TemperatureRange>,
    /// First sample lies in `[0, 1]` up to [`ADMISSIBLE_SLACK`].
    pub initial_admissible: bool,
    pub min: f64,
    pub max: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Accumulates temperature extremes sample by sample, so long runs need
/// not keep their states.
#[derive(Clone, Debug, Default)]
pub struct MaxPrincipleMonitor {
    samples: Vec<TemperatureRange>,
}

impl MaxPrincipleMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, state: &State) -> Result<(), DiagnosticsError> {
        self.samples.push(TemperatureRange::of(state)?);
        Ok(())
    }

    pub fn report(&self) -> MaxPrincipleReport {
        let initial_admissible = self.samples.first().map_or(true, |r| {
            r.min >= -ADMISSIBLE_SLACK && r.max <= 1.0 + ADMISSIBLE_SLACK
        });
        let min = self.samples.iter().map(|r| r.min).fold(f64::INFINITY, f64::min);
        let max = self
            .samples
            .iter()
            .map(|r| r.max)
            .fold(f64::NEG_INFINITY, f64::max);
        let tol = MAX_PRINCIPLE_TOL;
        let inside = self.samples.is_empty() || (min >= -tol && max <= 1.0 + tol);
        MaxPrincipleReport {
            samples: self.samples.clone(),
            initial_admissible,
            min,
            max,
            tol,
            pass: initial_admissible && inside,
        }
    }
}

impl Observer for MaxPrincipleMonitor {
    fn observe(&mut self, _step: usize, state: &State) -> Result<(), ObserverError> {
        self.push(state).map_err(Into::into)
    }
}

/// Checks that the total temperature stays in `[-tol, 1 + tol]` given an
/// admissible first state.
pub fn max_principle_check(states: &[State]) -> Result<MaxPrincipleReport, DiagnosticsError> {
    let mut m = MaxPrincipleMonitor::new();
    for s in states {
        m.push(s)?;
    }
    Ok(m.report())
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// `[(|u|^{2α}u − |v|^{2α}v)·(u−v)] / [|u−v|²(|u|+|v|)^{2α}]`, `None` for
/// `u = v`.
pub fn monotonicity_ratio(alpha: f64, u: [f64; 3], v: [f64; 3]) -> Option<f64> {
    let d = [u[0] - v[0], u[1] - v[1], u[2] - v[2]];
    let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    if d2 == 0.0 {
        return None;
    }
    let (nu, nv) = (norm(u), norm(v));
    let pu = nu.powf(2.0 * alpha);
    let pv = nv.powf(2.0 * alpha);
    let num: f64 = (0..3).map(|i| (pu * u[i] - pv * v[i]) * d[i]).sum();
    Some(num / (d2 * (nu + nv).powf(2.0 * alpha)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonotonicityReport {
    pub alpha: f64,
    /// Smallest ratio seen.
    pub delta_estimate: f64,
    pub evaluated: usize,
    pub skipped: usize,
    pub negative: usize,
    pub pass: bool,
}

/// Samples the strong-monotonicity ratio over random vector pairs.
///
/// Half the pairs are independent Gaussian vectors with random magnitudes;
/// in the other half `v` is rescaled to `|u|`, the shell on which the ratio
/// reaches `2^{-2α}`.
pub fn monotonicity_check(
    alpha: f64,
    n_samples: usize,
    seed: u64,
) -> Result<MonotonicityReport, DiagnosticsError> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(DiagnosticsError::InvalidParameter {
            name: "alpha",
            value: alpha,
            constraint: "must be non-negative and finite",
        });
    }
    if n_samples < MIN_MONOTONICITY_SAMPLES {
        return Err(DiagnosticsError::TooFewSamples {
            needed: MIN_MONOTONICITY_SAMPLES,
            got: n_samples,
        });
    }
    let mut rng = stream_rng(seed, stream::MONOTONICITY);
    let gauss = |rng: &mut rand_chacha::ChaCha8Rng| -> [f64; 3] {
        let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
        std::array::from_fn(|_| scale * rng.sample::<f64, _>(StandardNormal))
    };
    let mut min = f64::INFINITY;
    let (mut evaluated, mut skipped, mut negative) = (0, 0, 0);
    for k in 0..n_samples {
        let u = gauss(&mut rng);
        let mut v = gauss(&mut rng);
        if k % 2 == 1 {
            let (nu, nv) = (norm(u), norm(v));
            if nv > 0.0 {
                v = v.map(|x| x * nu / nv);
            }
        }
        match monotonicity_ratio(alpha, u, v) {
            None => skipped += 1,
            Some(r) => {
                evaluated += 1;
                if r < 0.0 {
                    negative += 1;
                }
                min = min.min(r);
            }
        }
    }
    Ok(MonotonicityReport {
        alpha,
        delta_estimate: min,
        evaluated,
        skipped,
        negative,
        pass: negative == 0 && min > 0.0,
    })
}
