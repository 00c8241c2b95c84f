use super::{
    apply_interpolant, decaying_segment, fit_decay_rate, observe, AssimilationError, DecayFit,
    InterpolantSpec, ObservationStream,
};
use super::stream::observe_noisy;
use crate::diagnostics::{sync_error, DiagnosticsRecord, SyncErrors};
use crate::integrator::{dt_from_speed, next_dt, record, IntegratorConfig, StepError, Stepper};
use crate::model::{
    explicit_terms, nudging_forcing, Dynamics, ModelError, PhysicalParams, Physics, State,
    Tendency, Terms,
};
use crate::random::{random_velocity, stream, stream_rng};

/// Errors below this fraction of their initial value are treated as
/// synchronized to round-off and left out of the rate fit.
pub const FIT_FLOOR: f64 = 1e-12;
/// Largest mode number of a random nudged initial velocity.
const V0_MAX_MODE: usize = 4;

/// Initial velocity of the nudged run; its temperature starts at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum V0Strategy {
    Zero,
    /// Random divergence-free field with `‖v₀‖ = radius`.
    RandomBall { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Run {
    Reference,
    Nudged,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwinExperimentConfig {
    pub mu: f64,
    pub spec: InterpolantSpec,
    pub v0_strategy: V0Strategy,
    /// Observations every this many reference steps.
    pub observation_cadence: usize,
    pub seed: u64,
    /// Standard deviation of grid-point observation noise; zero is the
    /// noiseless setting.
    pub noise_std: f64,
    /// Keep every observation frame in the outcome.
    pub keep_observations: bool,
}

impl TwinExperimentConfig {
    pub fn new(mu: f64, spec: InterpolantSpec) -> Self {
        Self {
            mu,
            spec,
            v0_strategy: V0Strategy::Zero,
            observation_cadence: 1,
            seed: 0,
            noise_std: 0.0,
            keep_observations: false,
        }
    }

    pub fn validate(&self, grid: &crate::spectral::Grid) -> Result<(), AssimilationError> {
        let bad = |name, value, constraint| {
            Err(AssimilationError::InvalidParameter {
                name,
                value,
                constraint,
            })
        };
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad("mu", self.mu, "must be positive and finite");
        }
        if self.observation_cadence == 0 {
            return bad("observation_cadence", 0.0, "must be at least 1");
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std", self.noise_std, "must be non-negative");
        }
        if let V0Strategy::RandomBall { radius } = self.v0_strategy {
            if !(radius >= 0.0 && radius.is_finite()) {
                return bad("radius", radius, "must be non-negative and finite");
            }
        }
        self.spec.validate_for(grid)
    }
}

/// The nudged system: the reference right-hand side plus
/// `μ I_h(u⊥ − v⊥)` in the horizontal momentum equations.
pub struct NudgedPhysics<'a> {
    pub physics: Physics,
    pub mu: f64,
    pub spec: InterpolantSpec,
    pub source: &'a ObservationStream,
}

impl<'a> NudgedPhysics<'a> {
    pub fn new(params: PhysicalParams, mu: f64, source: &'a ObservationStream) -> Self {
        Self {
            physics: Physics::new(params),
            mu,
            spec: *source.spec(),
            source,
        }
    }
}

impl Dynamics for NudgedPhysics<'_> {
    fn params(&self) -> &PhysicalParams {
        &self.physics.params
    }

    fn explicit_terms(&self, state: &State) -> Result<Tendency, ModelError> {
        let as_model = |e: AssimilationError| ModelError::Observation(e.to_string());
        let observed = self.source.at(state.time).map_err(as_model)?;
        let forcing = nudging_forcing(state, &observed, self.mu, |f| {
            apply_interpolant(f, &self.spec).map_err(as_model)
        })?;
        explicit_terms(state, &self.physics.params, self.physics.terms, Some(&forcing))
    }

    /// Keeps `μ dt <= 1`, so the explicit relaxation cannot overshoot.
    fn dt_cap(&self) -> f64 {
        1.0 / self.mu
    }
}

/// Result of a twin experiment.
#[derive(Clone, Debug)]
pub struct TwinOutcome {
    /// Norms of the nudged run with the synchronization errors.
    pub records: Vec<DiagnosticsRecord>,
    pub reference_final: State,
    pub nudged_final: State,
    pub initial_errors: SyncErrors,
    /// Rate fits on the part of each error series above [`FIT_FLOOR`];
    /// `None` when too few samples remain.
    pub fit_h0: Option<DecayFit>,
    pub fit_hm1: Option<DecayFit>,
    pub fit_v0dot: Option<DecayFit>,
    pub steps: usize,
    pub observations: Option<ObservationStream>,
    pub exploratory: bool,
}

impl TwinOutcome {
    /// `(t, e(t))` pairs of one error component.
    pub fn error_series(&self, pick: impl Fn(&SyncErrors) -> f64) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.errors.as_ref().map(|e| (r.time, pick(e))))
            .collect()
    }
}

fn fit_component(out: &TwinOutcome, pick: impl Fn(&SyncErrors) -> f64) -> Option<DecayFit> {
    let series = out.error_series(pick);
    fit_decay_rate(decaying_segment(&series, FIT_FLOOR)).ok()
}

fn initial_nudged(reference: &State, cfg: &TwinExperimentConfig) -> State {
    let grid = reference.grid();
    let mut v = State::zeros(grid);
    v.time = reference.time;
    if let V0Strategy::RandomBall { radius } = cfg.v0_strategy {
        let mut rng = stream_rng(cfg.seed, stream::NUDGED_INITIAL);
        v.u = random_velocity(grid, V0_MAX_MODE, radius * radius, &mut rng);
    }
    v
}

/// Sampled record of the nudged state with its distance to the reference.
fn twin_record(
    reference: &State,
    nudged: &State,
    params: &PhysicalParams,
    dt: f64,
) -> Result<DiagnosticsRecord, AssimilationError> {
    let mut r = record(nudged, params, dt);
    r.errors = Some(sync_error(reference, nudged)?);
    Ok(r)
}

enum Failure {
    BlowUp(Run, f64),
    Other(AssimilationError),
}

impl From<AssimilationError> for Failure {
    fn from(e: AssimilationError) -> Self {
        Failure::Other(e)
    }
}

fn tendency<D: Dynamics>(dynamics: &D, state: &State, run: Run) -> Result<Tendency, Failure> {
    match dynamics.explicit_terms(state) {
        Ok(n) if n.is_finite() => Ok(n),
        Ok(_) => Err(Failure::BlowUp(run, state.time)),
        Err(e) => Err(Failure::Other(e.into())),
    }
}

fn advance<D: Dynamics>(
    stepper: &mut Stepper,
    state: &State,
    n1: &Tendency,
    dt: f64,
    dynamics: &D,
    run: Run,
) -> Result<crate::integrator::StepOutput, Failure> {
    stepper
        .advance(state, n1, dt, dynamics)
        .map_err(|e| match e {
            StepError::NonFinite { time } => Failure::BlowUp(run, time),
            StepError::Model(m) => Failure::Other(m.into()),
            StepError::InvalidDt(dt) => Failure::Other(AssimilationError::InvalidParameter {
                name: "dt",
                value: dt,
                constraint: "must be positive and finite",
            }),
        })
}

/// Runs the reference system from `reference_init` and the nudged system
/// from the configured `v₀` side by side.
///
/// The reference advances in blocks of `observation_cadence` steps,
/// recording `I_h(u⊥)` at the block ends; with a cadence of one it also
/// records the half-step stage, so a nudged run that takes the same steps
/// sees exact observations at both of its evaluation times. The nudged run
/// then follows each reference step, taking the same step when its own
/// step bound allows and smaller sub-steps otherwise, with observations
/// interpolated linearly in time between frames. Both runs use steps of at
/// most `1/μ`. Errors are sampled where both runs sit at the same time.
pub fn run_twin_experiment(
    reference_init: &State,
    params: &PhysicalParams,
    integ_config: &IntegratorConfig,
    twin_config: &TwinExperimentConfig,
) -> Result<TwinOutcome, AssimilationError> {
    integ_config.validate()?;
    twin_config.validate(reference_init.grid())?;
    let grid = std::sync::Arc::clone(reference_init.grid());
    let physics = Physics::with_terms(*params, Terms::ALL);
    let mu = twin_config.mu;
    let spec = twin_config.spec;
    let cap = 1.0 / mu;
    let cadence = twin_config.observation_cadence;

    let mut noise = (twin_config.noise_std > 0.0)
        .then(|| stream_rng(twin_config.seed, stream::OBSERVATION_NOISE));
    let mut take_frame = |state: &State| match noise.as_mut() {
        None => observe(state, &spec),
        Some(rng) => observe_noisy(state, &spec, twin_config.noise_std, rng),
    };

    let mut reference = reference_init.clone();
    let mut nudged = initial_nudged(reference_init, twin_config);
    let mut stream = ObservationStream::new(spec);
    let mut kept = twin_config
        .keep_observations
        .then(|| ObservationStream::new(spec));
    let push = |stream: &mut ObservationStream,
                    kept: &mut Option<ObservationStream>,
                    time: f64,
                    frame: [crate::spectral::SpectralField; 2]|
     -> Result<(), AssimilationError> {
        if let Some(k) = kept.as_mut() {
            k.push(time, frame.clone())?;
        }
        stream.push(time, frame)
    };
    push(&mut stream, &mut kept, reference.time, take_frame(&reference)?)?;

    let initial_errors = sync_error(&reference, &nudged)?;
    let mut records = vec![twin_record(&reference, &nudged, params, 0.0)?];
    let mut ref_stepper = Stepper::new();
    let mut nud_stepper = Stepper::new();
    let mut steps = 0usize;
    let done = |state: &State, steps: usize| {
        state.time >= integ_config.t_end || integ_config.max_steps.map_or(false, |m| steps >= m)
    };

    let result: Result<(), Failure> = (|| {
        while !done(&reference, steps) {
            // reference block
            let mut block: Vec<(State, f64)> = Vec::with_capacity(cadence);
            let mut block_steps = steps;
            while block.len() < cadence && !done(&reference, block_steps) {
                let n1 = tendency(&physics, &reference, Run::Reference)?;
                let speed_dt = dt_from_speed(n1.max_speed, &grid, params, integ_config);
                let (dt, last) =
                    next_dt(speed_dt, cap, block_steps == 0, reference.time, integ_config);
                let out = advance(&mut ref_stepper, &reference, &n1, dt, &physics, Run::Reference)?;
                if cadence == 1 {
                    push(&mut stream, &mut kept, out.stage.time, take_frame(&out.stage)?)?;
                }
                reference = out.state;
                if last {
                    reference.time = integ_config.t_end;
                }
                block_steps += 1;
                block.push((reference.clone(), dt));
            }
            push(&mut stream, &mut kept, reference.time, take_frame(&reference)?)?;

            // nudged run follows the block
            for (target, ref_dt) in &block {
                let mut first = true;
                while nudged.time < target.time {
                    let dynamics = NudgedPhysics::new(*params, mu, &stream);
                    let n1 = tendency(&dynamics, &nudged, Run::Nudged)?;
                    let speed_dt =
                        dt_from_speed(n1.max_speed, &grid, params, integ_config).min(cap);
                    let remaining = target.time - nudged.time;
                    let (dt, last) = if first && speed_dt >= *ref_dt {
                        (*ref_dt, true)
                    } else if speed_dt >= remaining * (1.0 - 1e-9) {
                        (remaining, true)
                    } else {
                        (speed_dt, false)
                    };
                    let out = advance(&mut nud_stepper, &nudged, &n1, dt, &dynamics, Run::Nudged)?;
                    nudged = out.state;
                    if last {
                        nudged.time = target.time;
                    }
                    first = false;
                }
                steps += 1;
                if steps % integ_config.sample_every == 0 || done(target, steps) {
                    records.push(twin_record(target, &nudged, params, *ref_dt)?);
                }
            }
            stream.discard_before(nudged.time);
        }
        Ok(())
    })();

    match result {
        Ok(()) => {}
        Err(Failure::Other(e)) => return Err(e),
        Err(Failure::BlowUp(run, time)) => {
            return Err(AssimilationError::BlowUp {
                run,
                time,
                partial: records,
            })
        }
    }

    let mut outcome = TwinOutcome {
        records,
        reference_final: reference,
        nudged_final: nudged,
        initial_errors,
        fit_h0: None,
        fit_hm1: None,
        fit_v0dot: None,
        steps,
        observations: kept,
        exploratory: params.is_exploratory(),
    };
    outcome.fit_h0 = fit_component(&outcome, |e| e.e_h0);
    outcome.fit_hm1 = fit_component(&outcome, |e| e.e_hm1);
    outcome.fit_v0dot = fit_component(&outcome, |e| e.e_v0dot);
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::admissible_theta;
    use crate::spectral::Grid;

    fn setup() -> (State, PhysicalParams) {
        let g = Grid::with_default_dealias(16, 16, 16, 1.0).unwrap();
        let p = PhysicalParams::new(1.0, 1.0, 1.0, 2.0, &g).unwrap();
        let mut s = State::zeros(&g);
        s.u = random_velocity(&g, 3, 2.0, &mut stream_rng(21, stream::INITIAL_VELOCITY));
        s.theta = admissible_theta(&g, 0.5, 3, &mut stream_rng(21, stream::INITIAL_THETA)).unwrap();
        (s, p)
    }

    fn config(t_end: f64) -> IntegratorConfig {
        IntegratorConfig {
            dt_init: 0.01,
            max_dt: 0.01,
            t_end,
            sample_every: 1,
            ..IntegratorConfig::default()
        }
    }

    #[test]
    fn synchronized_start_stays_synchronized() {
        let (s, p) = setup();
        let spec = InterpolantSpec::modal_low_pass(0.5).unwrap();
        let mut tc = TwinExperimentConfig::new(20.0, spec);
        tc.v0_strategy = V0Strategy::Zero;
        // a reference at rest with zero temperature is its own nudged copy
        let rest = State::zeros(s.grid());
        let out = run_twin_experiment(&rest, &p, &config(0.05), &tc).unwrap();
        assert!(out.records.iter().all(|r| r.errors.unwrap() == SyncErrors::default()));
        assert!(out.fit_h0.is_none());
    }

    #[test]
    fn nudged_copy_of_the_reference_has_zero_error() {
        // nudging toward itself: the nudged run starts from the reference
        let (s, p) = setup();
        let spec = InterpolantSpec::modal_low_pass(0.5).unwrap();
        let tc = TwinExperimentConfig::new(20.0, spec);
        let dyn_ref = Physics::new(p);
        let mut stream = ObservationStream::new(spec);
        stream.push(0.0, observe(&s, &spec).unwrap()).unwrap();
        let n_ref = dyn_ref.explicit_terms(&s).unwrap();
        let n_nud = NudgedPhysics::new(p, tc.mu, &stream).explicit_terms(&s).unwrap();
        for (a, b) in n_ref.fields().iter().zip(n_nud.fields()) {
            assert_eq!(a.coeffs(), b.coeffs());
        }
    }

    #[test]
    fn nudging_pulls_the_error_down() {
        let (s, p) = setup();
        let spec = InterpolantSpec::modal_low_pass(0.25).unwrap();
        let tc = TwinExperimentConfig::new(50.0, spec);
        let out = run_twin_experiment(&s, &p, &config(0.5), &tc).unwrap();
        let e = out.error_series(|e| e.e_h0);
        assert!(e.last().unwrap().1 < 1e-3 * e[0].1, "{:?}", e.last());
        assert_eq!(out.records.len(), out.steps + 1);
        assert!((out.records.last().unwrap().time - 0.5).abs() < 1e-15);
        let fit = out.fit_h0.unwrap();
        assert!(fit.rate > 0.0 && fit.r_squared > 0.9);
    }

    #[test]
    fn cadence_and_subcycling() {
        let (s, p) = setup();
        let spec = InterpolantSpec::volume_average(0.25).unwrap();
        let mut tc = TwinExperimentConfig::new(200.0, spec);
        tc.observation_cadence = 3;
        tc.keep_observations = true;
        tc.v0_strategy = V0Strategy::RandomBall { radius: 0.5 };
        let out = run_twin_experiment(&s, &p, &config(0.1), &tc).unwrap();
        // dt capped at 1/μ = 5e-3: 20 steps, frames at 0, every 3 steps and the end
        assert_eq!(out.steps, 20);
        assert_eq!(out.observations.as_ref().unwrap().len(), 8);
        assert!(out.records.last().unwrap().errors.unwrap().e_h0 < out.initial_errors.e_h0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let (s, p) = setup();
        let spec = InterpolantSpec::modal_low_pass(0.25).unwrap();
        let tc = TwinExperimentConfig::new(0.0, spec);
        assert!(matches!(
            run_twin_experiment(&s, &p, &config(0.1), &tc),
            Err(AssimilationError::InvalidParameter { name: "mu", .. })
        ));
    }
}
