use std::fmt::Display;
use std::path::Path;

use bfb_core::assimilation::{
    run_twin_experiment, verify_interpolant_bound, AssimilationError, DecayFit, InterpolantSpec,
};
use bfb_core::diagnostics::{
    check_absorbing_ball, compute_bounds, monotonicity_check, structural_suite,
    DiagnosticsError, DiagnosticsRecord, MaxPrincipleMonitor,
};
use bfb_core::integrator::{integrate, IntegrateError, ObserverError};
use bfb_core::io::{
    parse_config, read_checkpoint, read_checkpoint_header, read_diagnostics, write_checkpoint,
    write_diagnostics, write_observations, CheckpointKind, IoError, RunConfig,
};
use bfb_core::model::{Physics, State};

/// Ordered `key=value` pairs of the final `RESULT` line.
pub struct Summary {
    pairs: Vec<(String, String)>,
}

impl Summary {
    fn new(command: &str) -> Self {
        Self {
            pairs: vec![("command".into(), command.into())],
        }
    }

    fn put(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.pairs.push((key.to_string(), value.to_string()));
        self
    }

    fn num(&mut self, key: &str, value: f64) -> &mut Self {
        self.put(key, fmt_num(value))
    }

    pub fn set_command(&mut self, command: &str) {
        self.pairs[0].1 = command.to_string();
    }

    pub fn result_line(&self, status: &str) -> String {
        let mut line = String::from("RESULT");
        let mut pairs = self.pairs.iter();
        if let Some((k, v)) = pairs.next() {
            line.push_str(&format!(" {k}={v}"));
        }
        line.push_str(&format!(" status={status}"));
        for (k, v) in pairs {
            line.push_str(&format!(" {k}={v}"));
        }
        line
    }
}

/// Shortest round-trip form; exact zero prints as `0`.
fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v:e}")
    }
}

pub struct Failure {
    pub code: u8,
    pub message: String,
    pub summary: Summary,
    kind: &'static str,
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
            summary: Summary::new("bfb"),
            kind: "invalid",
        }
    }

    fn check_failed(summary: Summary, message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
            summary,
            kind: "failed",
        }
    }

    fn blow_up(summary: Summary, message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
            summary,
            kind: "blowup",
        }
    }

    pub fn status(&self) -> &'static str {
        self.kind
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<AssimilationError> for Failure {
    fn from(e: AssimilationError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<DiagnosticsError> for Failure {
    fn from(e: DiagnosticsError) -> Self {
        Failure::invalid(e.to_string())
    }
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    Ok(parse_config(&text).map_err(IoError::from)?)
}

fn write_partial(cfg: &RunConfig, records: &[DiagnosticsRecord]) {
    if let Some(path) = &cfg.output.diagnostics {
        if let Err(e) = write_diagnostics(records, path) {
            eprintln!("warning: partial diagnostics not written: {e}");
        }
    }
}

pub fn simulate(config: &Path) -> Result<Summary, Failure> {
    let cfg = load(config)?;
    let grid = cfg.grid()?;
    let params = cfg.params(&grid)?;
    let state0 = cfg.initial_state(&grid, &params)?;
    let mut summary = Summary::new("simulate");

    let mut monitor = MaxPrincipleMonitor::new();
    let result = {
        let mut observer = |_: usize, s: &State| -> Result<(), ObserverError> {
            monitor.push(s).map_err(|e| Box::new(e) as ObserverError)
        };
        integrate(&state0, &cfg.integration, &Physics::new(params), &mut [&mut observer])
    };
    let traj = match result {
        Ok(traj) => traj,
        Err(IntegrateError::BlowUp { time, partial }) => {
            write_partial(&cfg, &partial.samples);
            summary.num("t", time).put("steps", partial.steps);
            return Err(Failure::blow_up(summary, format!("numerical blow-up at t = {time}")));
        }
        Err(e) => return Err(Failure::invalid(e.to_string())),
    };
    if let Some(path) = &cfg.output.diagnostics {
        write_diagnostics(&traj.samples, path)?;
    }
    if cfg.output.checkpoint {
        write_checkpoint(&traj.final_state, &params, &cfg.output.checkpoint_path)?;
    }

    let last = traj.samples.last().expect("integrate records the initial state");
    let mp = monitor.report();
    println!(
        "t = {}  steps = {}  E = {}  T in [{:.6}, {:.6}]",
        last.time,
        traj.steps,
        fmt_num(last.norms.energy()),
        mp.min,
        mp.max
    );
    summary
        .num("t", traj.final_state.time)
        .put("steps", traj.steps)
        .num("E", last.norms.energy())
        .num("u_H0", last.norms.u_h0)
        .num("theta_H1", last.norms.theta_h1)
        .num("u_V0dot", last.norms.u_v0dot)
        .num("T_min", mp.min)
        .num("T_max", mp.max)
        .put("max_principle", mp.pass)
        .put("exploratory", traj.exploratory);
    Ok(summary)
}

fn put_fit(summary: &mut Summary, name: &str, fit: &Option<DecayFit>) {
    match fit {
        Some(f) => {
            summary
                .num(&format!("rate_{name}"), f.rate)
                .num(&format!("r2_{name}"), f.r_squared);
        }
        None => {
            summary
                .put(&format!("rate_{name}"), "none")
                .put(&format!("r2_{name}"), "none");
        }
    }
}

pub fn assimilate(config: &Path) -> Result<Summary, Failure> {
    let cfg = load(config)?;
    let grid = cfg.grid()?;
    let params = cfg.params(&grid)?;
    let twin = cfg
        .twin()
        .ok_or_else(|| Failure::invalid("the configuration has no assimilation section"))?;
    let state0 = cfg.initial_state(&grid, &params)?;
    let mut summary = Summary::new("assimilate");

    let out = match run_twin_experiment(&state0, &params, &cfg.integration, &twin) {
        Ok(out) => out,
        Err(AssimilationError::BlowUp { run, time, partial }) => {
            write_partial(&cfg, &partial);
            summary.put("run", format!("{run:?}").to_lowercase()).num("t", time);
            return Err(Failure::blow_up(
                summary,
                format!("{run:?} run blew up at t = {time}"),
            ));
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = &cfg.output.diagnostics {
        write_diagnostics(&out.records, path)?;
    }
    if let (Some(path), Some(stream)) = (&cfg.output.observations, &out.observations) {
        write_observations(stream, &params, &grid, path)?;
    }
    if cfg.output.checkpoint {
        write_checkpoint(&out.nudged_final, &params, &cfg.output.checkpoint_path)?;
    }

    let last = out
        .records
        .last()
        .and_then(|r| r.errors.map(|e| (r.time, e)))
        .expect("twin runs record errors at the end");
    println!(
        "t = {}  steps = {}  e_H0: {} -> {}",
        last.0,
        out.steps,
        fmt_num(out.initial_errors.e_h0),
        fmt_num(last.1.e_h0)
    );
    summary
        .num("t", last.0)
        .put("steps", out.steps)
        .num("e0_H0", out.initial_errors.e_h0)
        .num("e0_Hm1", out.initial_errors.e_hm1)
        .num("e_H0", last.1.e_h0)
        .num("e_Hm1", last.1.e_hm1)
        .num("e_V0dot", last.1.e_v0dot);
    put_fit(&mut summary, "H0", &out.fit_h0);
    put_fit(&mut summary, "Hm1", &out.fit_hm1);
    put_fit(&mut summary, "V0dot", &out.fit_v0dot);
    summary.put("exploratory", out.exploratory);
    Ok(summary)
}

pub fn verify_bounds(
    config: &Path,
    diagnostics: Option<&Path>,
    window: Option<f64>,
) -> Result<Summary, Failure> {
    let cfg = load(config)?;
    let grid = cfg.grid()?;
    let params = cfg.params(&grid)?;
    let bounds = compute_bounds(&params)?;
    let path = diagnostics
        .or(cfg.output.diagnostics.as_deref())
        .ok_or_else(|| Failure::invalid("no diagnostics file given (--diagnostics or output.diagnostics)"))?;
    let records = read_diagnostics(path)?;
    let span = match (records.first(), records.last()) {
        (Some(a), Some(b)) => b.time - a.time,
        _ => 0.0,
    };
    let report = check_absorbing_ball(&records, &bounds, window.unwrap_or(span / 2.0))?;

    let mut summary = Summary::new("verify-bounds");
    summary
        .num("gamma0", bounds.gamma0)
        .num("gamma1", bounds.gamma1)
        .num("r_weak", bounds.r_weak);
    match bounds.r_grad {
        Some(r) => summary.num("r_grad", r),
        None => summary.put("r_grad", "none"),
    };
    summary
        .num("window", report.window)
        .num("energy_max", report.energy_max)
        .num("energy_margin", report.energy_margin)
        .put("energy_pass", report.energy_pass)
        .num("grad_max", report.grad_max);
    match (report.grad_margin, report.grad_pass) {
        (Some(m), Some(p)) => summary.num("grad_margin", m).put("grad_pass", p),
        _ => summary.put("grad_pass", "none"),
    };
    summary
        .num("envelope_worst_ratio", report.envelope_worst_ratio)
        .put("envelope_pass", report.envelope_pass)
        .put("exploratory", params.is_exploratory());
    println!(
        "energy: max {} vs radius {}; envelope worst ratio {}",
        fmt_num(report.energy_max),
        fmt_num(report.energy_radius),
        fmt_num(report.envelope_worst_ratio)
    );
    if report.pass() {
        Ok(summary)
    } else {
        Err(Failure::check_failed(summary, "the run leaves an absorbing ball"))
    }
}

pub fn verify_properties(
    config: &Path,
    pairs: usize,
    trials: usize,
    suite_trials: usize,
) -> Result<Summary, Failure> {
    let cfg = load(config)?;
    let grid = cfg.grid()?;
    let params = cfg.params(&grid)?;
    let mut summary = Summary::new("verify-properties");
    let mut failed = Vec::new();

    for alpha in [0.0, 1.5, 2.0, 3.0] {
        let r = monotonicity_check(alpha, pairs, cfg.seed)?;
        println!(
            "monotonicity alpha={alpha}: min ratio {} over {} pairs, {} negative",
            fmt_num(r.delta_estimate),
            r.evaluated,
            r.negative
        );
        summary.num(&format!("delta_{alpha}"), r.delta_estimate);
        if !r.pass {
            failed.push(format!("monotonicity alpha={alpha}"));
        }
    }

    let h = cfg
        .assimilation
        .map_or(cfg.grid.length / 4.0, |a| a.h);
    for (name, spec) in [
        ("low_pass", InterpolantSpec::modal_low_pass(h)?),
        ("volume_average", InterpolantSpec::volume_average(h)?),
    ] {
        match verify_interpolant_bound(&spec, &grid, trials, cfg.seed) {
            Ok(r) => {
                println!(
                    "interpolant {name} h={}: worst ratio {} vs c0 {}",
                    r.h,
                    fmt_num(r.worst_ratio),
                    r.c0
                );
                summary.num(&format!("interp_{name}"), r.worst_ratio);
                if !r.pass {
                    failed.push(format!("interpolant {name}"));
                }
            }
            Err(e) => {
                println!("interpolant {name}: not applicable ({e})");
                summary.put(&format!("interp_{name}"), "none");
            }
        }
    }

    let checks = structural_suite(&grid, &params, suite_trials, cfg.seed)?;
    for c in &checks {
        println!(
            "{:<24} worst {:<12} tol {:e} {}",
            c.name,
            fmt_num(c.worst),
            c.tol,
            if c.pass { "ok" } else { "FAIL" }
        );
        if !c.pass {
            failed.push(c.name.to_string());
        }
    }
    summary
        .put("suite_checks", checks.len())
        .put("failures", failed.len());
    if failed.is_empty() {
        Ok(summary)
    } else {
        Err(Failure::check_failed(summary, format!("failed: {}", failed.join(", "))))
    }
}

pub fn checkpoint_info(path: &Path) -> Result<Summary, Failure> {
    let header = read_checkpoint_header(path)?;
    let mut summary = Summary::new("checkpoint-info");
    let kind = match header.kind {
        CheckpointKind::State => "state",
        CheckpointKind::Observations => "observations",
    };
    println!("{}: {kind} file, version {}", path.display(), header.version);
    println!(
        "grid {}x{}x{}, L = {}, dealias fraction {}",
        header.nx, header.ny, header.nz, header.length, header.dealias_fraction
    );
    println!("time {}, frames {}, parities {:?}", header.time, header.n_frames, header.parities);
    summary
        .put("kind", kind)
        .put("version", header.version)
        .put("nx", header.nx)
        .put("ny", header.ny)
        .put("nz", header.nz)
        .num("L", header.length)
        .num("dealias", header.dealias_fraction)
        .num("time", header.time)
        .put("params_hash", format!("{:016x}", header.params_hash))
        .put("frames", header.n_frames);
    if header.kind == CheckpointKind::State {
        let (_, state) = read_checkpoint(path)?;
        summary.num("E", state.energy());
    }
    Ok(summary)
}
