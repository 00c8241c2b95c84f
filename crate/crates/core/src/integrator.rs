//! Integrating-factor midpoint time stepping.
//!
//! Diffusion is integrated exactly per mode. With `E(τ) = exp(-c|k|²τ)`
//! (`c = ν` for velocity, `κ` for temperature) and `N` the explicit terms,
//! one step of size `h` is
//!
//! ```text
//! y½   = E(h/2) (y + h/2 · N(y))
//! y⁺   = E(h) y + h · E(h/2) N(y½)
//! ```
//!
//! which is second order and needs no history.

use std::sync::Arc;

use crate::diagnostics::{compute_norms, DiagnosticsRecord};
use crate::model::{Dynamics, ModelError, PhysicalParams, State, Tendency};
use crate::spectral::field::project_and_dealias;
use crate::spectral::ops::leray_in_place;
use crate::spectral::{inverse_many, Grid, SpectralField};

/// `c_damp` in the explicit damping bound `c_damp / (a max|u|^{2α})`.
pub const DAMPING_SAFETY: f64 = 0.5;

pub type ObserverError = Box<dyn std::error::Error + Send + Sync>;

/// Called synchronously at every sample of an integration.
pub trait Observer {
    fn observe(&mut self, step: usize, state: &State) -> Result<(), ObserverError>;
}

impl<F: FnMut(usize, &State) -> Result<(), ObserverError>> Observer for F {
    fn observe(&mut self, step: usize, state: &State) -> Result<(), ObserverError> {
        self(step, state)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    /// Cap on the first step of each call to [`integrate`].
    pub dt_init: f64,
    pub cfl_number: f64,
    /// Absolute end time.
    pub t_end: f64,
    pub max_dt: f64,
    pub min_dt: f64,
    /// Diagnostics cadence in steps.
    pub sample_every: usize,
    /// Stop after this many steps even before `t_end`.
    pub max_steps: Option<usize>,
    /// Keep the full state at every sample.
    pub keep_states: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt_init: 1e-3,
            cfl_number: 0.5,
            t_end: 1.0,
            max_dt: 1e-2,
            min_dt: 1e-8,
            sample_every: 10,
            max_steps: None,
            keep_states: false,
        }
    }
}

impl IntegratorConfig {
    /// Constant step `dt` (all three step bounds equal).
    pub fn fixed(dt: f64, t_end: f64, sample_every: usize) -> Self {
        Self {
            dt_init: dt,
            t_end,
            max_dt: dt,
            min_dt: dt,
            sample_every,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |field: &'static str, constraint: &'static str| {
            Err(IntegrateError::InvalidConfig { field, constraint })
        };
        if !(self.min_dt > 0.0) {
            return bad("min_dt", "must be positive");
        }
        if !(self.min_dt <= self.dt_init && self.dt_init <= self.max_dt) {
            return bad("dt_init", "must satisfy min_dt <= dt_init <= max_dt");
        }
        if !self.max_dt.is_finite() {
            return bad("max_dt", "must be finite");
        }
        if !(self.cfl_number > 0.0 && self.cfl_number <= 1.0) {
            return bad("cfl_number", "must lie in (0, 1]");
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end", "must be non-negative and finite");
        }
        if self.sample_every == 0 {
            return bad("sample_every", "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StepError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite values at t = {time}")]
    NonFinite { time: f64 },
    #[error("time step must be positive and finite, got {0}")]
    InvalidDt(f64),
}

#[derive(Debug, thiserror::Error)]
pub enum IntegrateError {
    #[error("integrator config: {field} {constraint}")]
    InvalidConfig {
        field: &'static str,
        constraint: &'static str,
    },
    #[error("numerical blow-up at t = {time}")]
    BlowUp { time: f64, partial: Box<Trajectory> },
    #[error(transparent)]
    Step(StepError),
    #[error("observer failed: {0}")]
    Observer(ObserverError),
}

/// Result of an integration.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// One record per sample, times strictly increasing.
    pub samples: Vec<DiagnosticsRecord>,
    pub final_state: State,
    /// Full states at the samples, when requested.
    pub checkpoints: Option<Vec<State>>,
    pub steps: usize,
    /// `alpha <= 1`: no uniqueness theory backs the run.
    pub exploratory: bool,
}

struct Factors {
    dt_bits: u64,
    // [velocity, temperature]
    half: [Vec<f64>; 2],
    full: [Vec<f64>; 2],
}

/// Reusable stepping workspace; caches `|k|²` and the integrating factors
/// of the last step size.
#[derive(Default)]
pub struct Stepper {
    ksq: Vec<f64>,
    factors: Option<Factors>,
}

fn ksq_flat(grid: &Grid) -> Vec<f64> {
    let (nx, ny, nz) = grid.shape();
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..nx {
        for j in 0..ny {
            for l in 0..nz {
                out.push(grid.ksq(i, j, l));
            }
        }
    }
    out
}

/// Second stage and result of one step.
pub struct StepOutput {
    pub state: State,
    /// The half-step state `y½` at `t + dt/2`.
    pub stage: State,
}

impl Stepper {
    pub fn new() -> Self {
        Self::default()
    }

    fn factors(&mut self, grid: &Grid, params: &PhysicalParams, dt: f64) -> &Factors {
        if self.ksq.len() != grid.len() {
            self.ksq = ksq_flat(grid);
            self.factors = None;
        }
        let bits = dt.to_bits();
        if self.factors.as_ref().map_or(true, |f| f.dt_bits != bits) {
            let make = |c: f64, tau: f64| -> Vec<f64> {
                self.ksq.iter().map(|k2| (-c * k2 * tau).exp()).collect()
            };
            let (nu, kappa) = (params.nu, params.kappa);
            self.factors = Some(Factors {
                dt_bits: bits,
                half: [make(nu, 0.5 * dt), make(kappa, 0.5 * dt)],
                full: [make(nu, dt), make(kappa, dt)],
            });
        }
        self.factors.as_ref().expect("just filled")
    }

    /// Advances `state` by `dt` given `n1 = N(state)`.
    pub fn advance<D: Dynamics + ?Sized>(
        &mut self,
        state: &State,
        n1: &Tendency,
        dt: f64,
        dynamics: &D,
    ) -> Result<StepOutput, StepError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(StepError::InvalidDt(dt));
        }
        let grid = Arc::clone(state.grid());
        let params = *dynamics.params();
        let f = self.factors(&grid, &params, dt);
        let which = [0, 0, 0, 1];

        let mut stage = state.clone();
        stage.time = state.time + 0.5 * dt;
        for (k, (dst, n)) in stage.fields_mut().into_iter().zip(n1.fields()).enumerate() {
            let e = &f.half[which[k]];
            for ((c, nv), ek) in dst.coeffs_mut().iter_mut().zip(n.coeffs()).zip(e) {
                *c = ek * (*c + 0.5 * dt * nv);
            }
        }
        if !stage.is_finite() {
            return Err(StepError::NonFinite { time: stage.time });
        }

        let n2 = dynamics.explicit_terms(&stage)?;
        if !n2.is_finite() {
            return Err(StepError::NonFinite { time: stage.time });
        }
        let f = self.factors(&grid, &params, dt);
        let mut next = state.clone();
        next.time = state.time + dt;
        for (k, (dst, n)) in next.fields_mut().into_iter().zip(n2.fields()).enumerate() {
            let (eh, ef) = (&f.half[which[k]], &f.full[which[k]]);
            for (((c, nv), h), full) in dst.coeffs_mut().iter_mut().zip(n.coeffs()).zip(eh).zip(ef) {
                *c = full * *c + dt * h * nv;
            }
        }
        clean_state(&mut next);
        if !next.is_finite() {
            return Err(StepError::NonFinite { time: next.time });
        }
        Ok(StepOutput { state: next, stage })
    }
}

/// Parity projection, dealiasing and Leray projection in place.
pub(crate) fn clean_state(state: &mut State) {
    for f in state.fields_mut() {
        let coeffs = project_and_dealias(f.coeffs(), f.parity(), f.grid());
        f.coeffs_mut().copy_from_slice(&coeffs);
    }
    leray_in_place(&mut state.u);
}

/// One step of size `dt`.
pub fn step<D: Dynamics + ?Sized>(state: &State, dt: f64, dynamics: &D) -> Result<State, StepError> {
    let n1 = dynamics.explicit_terms(state)?;
    if !n1.is_finite() {
        return Err(StepError::NonFinite { time: state.time });
    }
    Ok(Stepper::new().advance(state, &n1, dt, dynamics)?.state)
}

/// Step size from the largest grid-point speed.
pub fn dt_from_speed(
    max_speed: f64,
    grid: &Grid,
    params: &PhysicalParams,
    config: &IntegratorConfig,
) -> f64 {
    if !(max_speed > 0.0) {
        return config.max_dt;
    }
    let cfl = config.cfl_number * grid.dx_min() / max_speed;
    let damping = DAMPING_SAFETY / (params.a * max_speed.powf(2.0 * params.alpha));
    cfl.min(damping)
        .min(config.max_dt)
        .clamp(config.min_dt, config.max_dt)
}

/// Largest `|u|` over the grid points.
pub fn max_speed(u: &[SpectralField; 3]) -> f64 {
    let v = inverse_many(&[&u[0], &u[1], &u[2]]);
    (0..v[0].len())
        .map(|k| v[0][k] * v[0][k] + v[1][k] * v[1][k] + v[2][k] * v[2][k])
        .fold(0.0, f64::max)
        .sqrt()
}

/// `clamp(min(cfl·Δx/max|u|, c_damp/(a·max|u|^{2α}), max_dt), min_dt, max_dt)`.
pub fn adaptive_dt(state: &State, params: &PhysicalParams, config: &IntegratorConfig) -> f64 {
    dt_from_speed(max_speed(&state.u), state.grid(), params, config)
}

/// Chooses the next step: adaptive bound, dynamics cap, first-step cap and
/// truncation at `t_end`.
pub(crate) fn next_dt(
    speed_dt: f64,
    cap: f64,
    first: bool,
    time: f64,
    config: &IntegratorConfig,
) -> (f64, bool) {
    let mut dt = speed_dt.min(cap);
    if first {
        dt = dt.min(config.dt_init);
    }
    let remaining = config.t_end - time;
    if dt >= remaining * (1.0 - 1e-9) {
        (remaining, true)
    } else {
        (dt, false)
    }
}

pub(crate) fn record(state: &State, params: &PhysicalParams, dt: f64) -> DiagnosticsRecord {
    DiagnosticsRecord {
        time: state.time,
        norms: compute_norms(state, params),
        errors: None,
        dt,
    }
}

/// Integrates from `state0` to `config.t_end`.
///
/// Samples (and observers) run at step 0, every `sample_every` steps and
/// at the last step.
pub fn integrate<D: Dynamics + ?Sized>(
    state0: &State,
    config: &IntegratorConfig,
    dynamics: &D,
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory, IntegrateError> {
    config.validate()?;
    let params = *dynamics.params();
    let mut state = state0.clone();
    let mut traj = Trajectory {
        samples: vec![record(&state, &params, 0.0)],
        final_state: state.clone(),
        checkpoints: config.keep_states.then(|| vec![state.clone()]),
        steps: 0,
        exploratory: params.is_exploratory(),
    };
    for o in observers.iter_mut() {
        o.observe(0, &state).map_err(IntegrateError::Observer)?;
    }

    let mut stepper = Stepper::new();
    let mut steps = 0usize;
    let done = |state: &State, steps: usize| {
        state.time >= config.t_end || config.max_steps.map_or(false, |m| steps >= m)
    };
    while !done(&state, steps) {
        let blow_up = |traj: Trajectory, state: &State, time: f64| IntegrateError::BlowUp {
            time,
            partial: Box::new(Trajectory {
                final_state: state.clone(),
                ..traj
            }),
        };
        let n1 = match dynamics.explicit_terms(&state) {
            Ok(n) if n.is_finite() => n,
            Ok(_) => return Err(blow_up(traj, &state, state.time)),
            Err(e) => return Err(IntegrateError::Step(e.into())),
        };
        let speed_dt = dt_from_speed(n1.max_speed, state.grid(), &params, config);
        let (dt, last) = next_dt(speed_dt, dynamics.dt_cap(), steps == 0, state.time, config);
        match stepper.advance(&state, &n1, dt, dynamics) {
            Ok(out) => state = out.state,
            Err(StepError::NonFinite { time }) => return Err(blow_up(traj, &state, time)),
            Err(e) => return Err(IntegrateError::Step(e)),
        }
        if last {
            state.time = config.t_end;
        }
        steps += 1;
        if steps % config.sample_every == 0 || done(&state, steps) {
            traj.samples.push(record(&state, &params, dt));
            if let Some(c) = traj.checkpoints.as_mut() {
                c.push(state.clone());
            }
            for o in observers.iter_mut() {
                o.observe(steps, &state).map_err(IntegrateError::Observer)?;
            }
        }
    }
    traj.final_state = state;
    traj.steps = steps;
    Ok(traj)
}
