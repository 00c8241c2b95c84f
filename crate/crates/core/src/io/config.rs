//! Plain-text run configuration.
//!
//! One `key = value` pair per line; `#` starts a comment. Sections are
//! dotted prefixes (`grid.nx`, `physics.alpha`, ...), and `seed` sits at
//! the top level. Every key is checked and unknown or repeated keys are
//! errors, so a typo never falls back to a default silently.
//!
//! ```text
//! seed = 7
//! grid.nx = 32            # also ny, nz, L, dealias_fraction
//! physics.alpha = 2.0     # also nu, kappa, a
//! integration.t_end = 10  # also dt_init, cfl_number, max_dt, min_dt, max_steps
//! assimilation.mu = 50    # also h, interpolant, cadence, v0_strategy, v0_radius, noise_std
//! output.diagnostics = run.csv
//! init.kind = random      # conduction | random | checkpoint
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use super::{read_state_matching, IoError};
use crate::assimilation::{InterpolantKind, InterpolantSpec, TwinExperimentConfig, V0Strategy};
use crate::integrator::{IntegrateError, IntegratorConfig};
use crate::model::{ModelError, PhysicalParams, State};
use crate::random::{admissible_theta, random_velocity, stream, stream_rng};
use crate::spectral::{Grid, DEFAULT_DEALIAS_FRACTION};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

/// All problems found in a configuration document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: ")?;
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub length: f64,
    pub dealias_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicsSection {
    pub nu: f64,
    pub kappa: f64,
    pub a: f64,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssimilationSection {
    pub mu: f64,
    pub interpolant: InterpolantKind,
    pub h: f64,
    pub cadence: usize,
    pub v0_strategy: V0Strategy,
    pub noise_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSection {
    pub diagnostics: Option<PathBuf>,
    /// Diagnostics cadence in steps.
    pub cadence: usize,
    pub checkpoint: bool,
    pub checkpoint_path: PathBuf,
    pub observations: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitKind {
    /// Pure conduction: zero velocity and temperature fluctuation.
    Conduction,
    /// Random divergence-free velocity of the given energy and an
    /// admissible temperature fluctuation.
    Random {
        energy: f64,
        theta_amplitude: f64,
        max_mode: usize,
    },
    /// A state read from a checkpoint written with the same grid and
    /// physical constants.
    Checkpoint { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid: GridSection,
    pub physics: PhysicsSection,
    /// `sample_every` carries `output.cadence`.
    pub integration: IntegratorConfig,
    pub assimilation: Option<AssimilationSection>,
    pub output: OutputSection,
    pub init: InitKind,
    pub seed: u64,
}

impl RunConfig {
    pub fn grid(&self) -> Result<Arc<Grid>, IoError> {
        let g = &self.grid;
        Ok(Grid::new(g.nx, g.ny, g.nz, g.length, g.dealias_fraction)?)
    }

    pub fn params(&self, grid: &Grid) -> Result<PhysicalParams, IoError> {
        let p = &self.physics;
        Ok(PhysicalParams::new(p.nu, p.kappa, p.a, p.alpha, grid)?)
    }

    pub fn interpolant(&self) -> Option<InterpolantSpec> {
        let a = self.assimilation.as_ref()?;
        match a.interpolant {
            InterpolantKind::ModalLowPass => InterpolantSpec::modal_low_pass(a.h),
            InterpolantKind::VolumeAverage => InterpolantSpec::volume_average(a.h),
        }
        .ok()
    }

    pub fn twin(&self) -> Option<TwinExperimentConfig> {
        let a = self.assimilation.as_ref()?;
        let mut t = TwinExperimentConfig::new(a.mu, self.interpolant()?);
        t.v0_strategy = a.v0_strategy;
        t.observation_cadence = a.cadence;
        t.seed = self.seed;
        t.noise_std = a.noise_std;
        t.keep_observations = self.output.observations.is_some();
        Some(t)
    }

    pub fn initial_state(&self, grid: &Arc<Grid>, params: &PhysicalParams) -> Result<State, IoError> {
        match &self.init {
            InitKind::Conduction => Ok(State::zeros(grid)),
            InitKind::Random {
                energy,
                theta_amplitude,
                max_mode,
            } => {
                let mut s = State::zeros(grid);
                s.u = random_velocity(
                    grid,
                    *max_mode,
                    *energy,
                    &mut stream_rng(self.seed, stream::INITIAL_VELOCITY),
                );
                s.theta = admissible_theta(
                    grid,
                    *theta_amplitude,
                    *max_mode,
                    &mut stream_rng(self.seed, stream::INITIAL_THETA),
                )?;
                Ok(s)
            }
            InitKind::Checkpoint { path } => read_state_matching(path, grid, params),
        }
    }
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

/// Typed access to the parsed pairs; every failure becomes a violation.
struct Document {
    entries: BTreeMap<String, Entry>,
    violations: Vec<Violation>,
}

impl Document {
    fn violation(&mut self, key: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            key: key.to_string(),
            message: message.into(),
        });
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        let e = self.entries.get_mut(key)?;
        e.used = true;
        Some(e.value.clone())
    }

    fn has_prefix(&self, prefix: &str) -> bool {
        self.entries.keys().any(|k| k.starts_with(prefix))
    }

    fn parse<T: FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let raw = self.raw(key)?;
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.violation(key, format!("'{raw}' is not {what}"));
                None
            }
        }
    }

    fn number(&mut self, key: &str) -> Option<f64> {
        self.parse(key, "a number")
    }

    fn count(&mut self, key: &str) -> Option<usize> {
        self.parse(key, "a non-negative integer")
    }

    fn flag(&mut self, key: &str) -> Option<bool> {
        self.parse(key, "true or false")
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(PathBuf::from)
    }

    fn choice<T: Copy>(&mut self, key: &str, options: &[(&str, T)]) -> Option<T> {
        let raw = self.raw(key)?;
        match options.iter().find(|(name, _)| *name == raw) {
            Some(&(_, v)) => Some(v),
            None => {
                let names: Vec<_> = options.iter().map(|(n, _)| *n).collect();
                self.violation(key, format!("'{raw}' is not one of {}", names.join(", ")));
                None
            }
        }
    }

    /// Parsed value, or a "missing" violation when the key is absent.
    /// Returns `None` after a violation, with the caller substituting a
    /// placeholder so that checking can go on.
    fn required<T>(&mut self, key: &str, get: impl FnOnce(&mut Self, &str) -> Option<T>) -> Option<T> {
        if !self.entries.contains_key(key) {
            self.violation(key, "is required");
            return None;
        }
        get(self, key)
    }

    fn check(&mut self, key: &str, ok: bool, constraint: &str) {
        if !ok {
            self.violation(key, constraint.to_string());
        }
    }
}

fn lex(text: &str) -> Document {
    let mut doc = Document {
        entries: BTreeMap::new(),
        violations: Vec::new(),
    };
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            doc.violation(&format!("line {line_no}"), "expected 'key = value'");
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            doc.violation(&format!("line {line_no}"), "empty key or value");
            continue;
        }
        if let Some(first) = doc.entries.get(key) {
            let msg = format!("repeated on line {line_no} (first on line {})", first.line);
            doc.violation(key, msg);
            continue;
        }
        doc.entries.insert(
            key.to_string(),
            Entry {
                line: line_no,
                value: value.to_string(),
                used: false,
            },
        );
    }
    doc
}

/// Parses and validates a configuration document, reporting every
/// violation found rather than stopping at the first.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut d = lex(text);
    let seed = d.parse::<u64>("seed", "a non-negative integer").unwrap_or(0);

    let grid = grid_section(&mut d);
    let physics = physics_section(&mut d);
    let output = output_section(&mut d);
    let integration = integration_section(&mut d, output.cadence);
    let assimilation = d
        .has_prefix("assimilation.")
        .then(|| assimilation_section(&mut d, &grid))
        .flatten();
    let init = init_section(&mut d);

    let unknown: Vec<String> = d
        .entries
        .iter()
        .filter(|(_, e)| !e.used)
        .map(|(k, _)| k.clone())
        .collect();
    for key in unknown {
        d.violation(&key, "unknown key");
    }
    if !d.violations.is_empty() {
        return Err(ConfigError {
            violations: d.violations,
        });
    }
    Ok(RunConfig {
        grid,
        physics,
        integration,
        assimilation,
        output,
        init,
        seed,
    })
}

fn grid_section(d: &mut Document) -> GridSection {
    let dim = |d: &mut Document, key: &str| {
        let n = d.required(key, Document::count).unwrap_or(4);
        d.check(key, n >= 4 && n % 2 == 0, "must be even and at least 4");
        n
    };
    let (nx, ny, nz) = (dim(d, "grid.nx"), dim(d, "grid.ny"), dim(d, "grid.nz"));
    let length = d.required("grid.L", Document::number).unwrap_or(1.0);
    d.check("grid.L", length > 0.0 && length.is_finite(), "must be positive and finite");
    let dealias_fraction = d
        .number("grid.dealias_fraction")
        .unwrap_or(DEFAULT_DEALIAS_FRACTION);
    d.check(
        "grid.dealias_fraction",
        dealias_fraction > 0.0 && dealias_fraction <= 1.0,
        "must lie in (0, 1]",
    );
    GridSection {
        nx,
        ny,
        nz,
        length,
        dealias_fraction,
    }
}

fn physics_section(d: &mut Document) -> PhysicsSection {
    let p = PhysicsSection {
        nu: d.required("physics.nu", Document::number).unwrap_or(1.0),
        kappa: d.required("physics.kappa", Document::number).unwrap_or(1.0),
        a: d.required("physics.a", Document::number).unwrap_or(1.0),
        alpha: d.required("physics.alpha", Document::number).unwrap_or(2.0),
    };
    // lambda plays no part in these checks
    if let Err(ModelError::InvalidParameter {
        name, constraint, ..
    }) = PhysicalParams::with_lambda(p.nu, p.kappa, p.a, p.alpha, 1.0, 1.0)
    {
        d.violation(&format!("physics.{name}"), constraint);
    }
    p
}

fn integration_section(d: &mut Document, sample_every: usize) -> IntegratorConfig {
    let def = IntegratorConfig::default();
    let c = IntegratorConfig {
        dt_init: d.number("integration.dt_init").unwrap_or(def.dt_init),
        cfl_number: d.number("integration.cfl_number").unwrap_or(def.cfl_number),
        t_end: d.required("integration.t_end", Document::number).unwrap_or(0.0),
        max_dt: d.number("integration.max_dt").unwrap_or(def.max_dt),
        min_dt: d.number("integration.min_dt").unwrap_or(def.min_dt),
        sample_every,
        max_steps: d.count("integration.max_steps"),
        keep_states: false,
    };
    if let Err(IntegrateError::InvalidConfig { field, constraint }) = c.validate() {
        let key = match field {
            "sample_every" => "output.cadence".to_string(),
            f => format!("integration.{f}"),
        };
        d.violation(&key, constraint);
    }
    if c.max_steps == Some(0) {
        d.violation("integration.max_steps", "must be at least 1");
    }
    c
}

fn assimilation_section(d: &mut Document, grid: &GridSection) -> Option<AssimilationSection> {
    let mu = d.required("assimilation.mu", Document::number);
    let h = d.required("assimilation.h", Document::number);
    let interpolant = d
        .choice(
            "assimilation.interpolant",
            &[
                ("modal_low_pass", InterpolantKind::ModalLowPass),
                ("volume_average", InterpolantKind::VolumeAverage),
            ],
        )
        .unwrap_or(InterpolantKind::ModalLowPass);
    let cadence = d.count("assimilation.cadence").unwrap_or(1);
    d.check("assimilation.cadence", cadence >= 1, "must be at least 1");
    let noise_std = d.number("assimilation.noise_std").unwrap_or(0.0);
    d.check(
        "assimilation.noise_std",
        noise_std >= 0.0 && noise_std.is_finite(),
        "must be non-negative and finite",
    );
    let ball = d
        .choice("assimilation.v0_strategy", &[("zero", false), ("random_ball", true)])
        .unwrap_or(false);
    let radius = d.number("assimilation.v0_radius");
    let v0_strategy = match (ball, radius) {
        (false, None) => V0Strategy::Zero,
        (false, Some(_)) => {
            d.violation("assimilation.v0_radius", "only used with v0_strategy = random_ball");
            V0Strategy::Zero
        }
        (true, r) => {
            let radius = r.unwrap_or(1.0);
            d.check(
                "assimilation.v0_radius",
                radius >= 0.0 && radius.is_finite(),
                "must be non-negative and finite",
            );
            V0Strategy::RandomBall { radius }
        }
    };
    let mu = mu?;
    d.check("assimilation.mu", mu > 0.0 && mu.is_finite(), "must be positive and finite");
    let h = h?;
    let spec = InterpolantSpec {
        kind: interpolant,
        h,
        c0: 0.0,
        c1: 0.0,
    };
    if let Err(e) = spec.validate_for_shape((grid.nx, grid.ny, grid.nz), grid.length) {
        d.violation("assimilation.h", e.to_string());
    }
    Some(AssimilationSection {
        mu,
        interpolant,
        h,
        cadence,
        v0_strategy,
        noise_std,
    })
}

fn output_section(d: &mut Document) -> OutputSection {
    let cadence = d.count("output.cadence").unwrap_or(10);
    let checkpoint = d.flag("output.checkpoint").unwrap_or(false);
    let checkpoint_path = d
        .path("output.checkpoint_path")
        .unwrap_or_else(|| Path::new("checkpoint.bfb").to_path_buf());
    OutputSection {
        diagnostics: d.path("output.diagnostics"),
        cadence,
        checkpoint,
        checkpoint_path,
        observations: d.path("output.observations"),
    }
}

fn init_section(d: &mut Document) -> InitKind {
    #[derive(Clone, Copy)]
    enum K {
        Conduction,
        Random,
        Checkpoint,
    }
    let kind = d
        .choice(
            "init.kind",
            &[
                ("conduction", K::Conduction),
                ("random", K::Random),
                ("checkpoint", K::Checkpoint),
            ],
        )
        .unwrap_or(K::Random);
    let energy = d.number("init.energy");
    let theta_amplitude = d.number("init.theta_amplitude");
    let max_mode = d.count("init.max_mode");
    let path = d.path("init.path");
    let stray = |d: &mut Document, key: &str, present: bool| {
        if present {
            d.violation(key, "does not apply to this init.kind");
        }
    };
    match kind {
        K::Conduction | K::Checkpoint => {
            stray(d, "init.energy", energy.is_some());
            stray(d, "init.theta_amplitude", theta_amplitude.is_some());
            stray(d, "init.max_mode", max_mode.is_some());
        }
        K::Random => stray(d, "init.path", path.is_some()),
    }
    match kind {
        K::Conduction => {
            stray(d, "init.path", path.is_some());
            InitKind::Conduction
        }
        K::Random => {
            let energy = energy.unwrap_or(1.0);
            d.check("init.energy", energy >= 0.0 && energy.is_finite(), "must be non-negative and finite");
            let theta_amplitude = theta_amplitude.unwrap_or(0.5);
            d.check(
                "init.theta_amplitude",
                (0.0..=1.0).contains(&theta_amplitude),
                "must lie in [0, 1]",
            );
            let max_mode = max_mode.unwrap_or(4);
            d.check("init.max_mode", max_mode >= 1, "must be at least 1");
            InitKind::Random {
                energy,
                theta_amplitude,
                max_mode,
            }
        }
        K::Checkpoint => match path {
            Some(path) => InitKind::Checkpoint { path },
            None => {
                d.violation("init.path", "is required when init.kind = checkpoint");
                InitKind::Conduction
            }
        },
    }
}
