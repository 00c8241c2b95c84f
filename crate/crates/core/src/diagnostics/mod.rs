//! Norms, closed-form bounds and property checks.

mod bounds;
mod checks;
mod properties;

use crate::model::{PhysicalParams, State};
use crate::spectral::{inverse_many, SpectralError, SpectralField};

pub use bounds::{
    check_absorbing_ball, compute_bounds, uniform_gronwall_bound, AbsorbingBallReport, BoundSet,
    ENVELOPE_TOL,
};
pub use properties::{structural_suite, PropertyCheck};
pub use checks::{
    max_principle_check, monotonicity_check, monotonicity_ratio, MaxPrincipleMonitor,
    MaxPrincipleReport, MonotonicityReport, TemperatureRange, ADMISSIBLE_SLACK,
    MAX_PRINCIPLE_TOL, MIN_MONOTONICITY_SAMPLES,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("states live on different grids")]
    GridMismatch,
    #[error("gamma2 is undefined for alpha = 1 (the exponent 1/(1-alpha) is singular)")]
    Gamma2Undefined,
    #[error("{name} = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("trajectory spans {span} but the check needs at least {needed}")]
    TrajectoryTooShort { span: f64, needed: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("model: {0}")]
    Model(String),
}

/// Norms of one state. Field names follow the diagnostics CSV columns.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Norms {
    /// `‖u‖_{L²}`
    pub u_h0: f64,
    /// `‖θ‖_{L²}`
    pub theta_h1: f64,
    /// `‖∇u‖_{L²}`
    pub u_v0dot: f64,
    /// `‖∇θ‖_{L²}`
    pub theta_v1: f64,
    /// `‖u‖_{L^{2α+2}}`
    pub u_l2a2: f64,
    /// `‖∇Δ⁻¹θ‖_{L²}`
    pub theta_hm1: f64,
    /// `‖∂ₜu‖_{L²}` when estimated from neighbouring states.
    pub dtu_l2: Option<f64>,
}

impl Norms {
    /// `‖u‖² + ‖θ‖²`.
    pub fn energy(&self) -> f64 {
        self.u_h0 * self.u_h0 + self.theta_h1 * self.theta_h1
    }
}

/// Synchronization errors between a reference and a nudged state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SyncErrors {
    pub e_h0: f64,
    pub e_hm1: f64,
    pub e_v0dot: f64,
}

/// One row of the diagnostics stream.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub norms: Norms,
    pub errors: Option<SyncErrors>,
    /// Size of the step that produced this sample; zero for the first.
    pub dt: f64,
}

/// `Σ_{k≠0} |f̂|² / |k|²`, scaled by the volume: `‖∇Δ⁻¹f‖²`.
pub fn hm1_norm_sq(f: &SpectralField) -> f64 {
    let g = f.grid();
    let (nx, ny, nz) = g.shape();
    let c = f.coeffs();
    let mut s = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            for l in 0..nz {
                let k2 = g.ksq(i, j, l);
                if k2 > 0.0 {
                    s += c[g.index(i, j, l)].norm_sqr() / k2;
                }
            }
        }
    }
    g.volume() * s
}

/// `‖u‖_{L^p}` with `p = 2α + 2`, by grid quadrature.
pub fn velocity_lp_norm(u: &[SpectralField; 3], alpha: f64) -> f64 {
    let g = u[0].grid();
    let v = inverse_many(&[&u[0], &u[1], &u[2]]);
    let half_p = alpha + 1.0;
    let int_exp = (half_p.fract() == 0.0 && half_p <= 64.0).then_some(half_p as i32);
    let mut s = 0.0;
    for k in 0..g.len() {
        let r2 = v[0][k] * v[0][k] + v[1][k] * v[1][k] + v[2][k] * v[2][k];
        s += match int_exp {
            Some(e) => r2.powi(e),
            None if r2 == 0.0 => 0.0,
            None => r2.powf(half_p),
        };
    }
    let integral = s * g.volume() / g.len() as f64;
    integral.powf(1.0 / (2.0 * half_p))
}

/// All norms of `state`; L² and gradient norms by Parseval,
/// `‖u‖_{2α+2}` by quadrature.
pub fn compute_norms(state: &State, params: &PhysicalParams) -> Norms {
    let u_h0 = state.u.iter().map(|f| f.norm_sq()).sum::<f64>().sqrt();
    let u_v0dot = state.u.iter().map(|f| f.grad_norm_sq()).sum::<f64>().sqrt();
    Norms {
        u_h0,
        theta_h1: state.theta.norm(),
        u_v0dot,
        theta_v1: state.theta.grad_norm_sq().sqrt(),
        u_l2a2: velocity_lp_norm(&state.u, params.alpha),
        theta_hm1: hm1_norm_sq(&state.theta).sqrt(),
        dtu_l2: None,
    }
}

/// `(‖u−v‖, ‖θ−η‖_{H⁻¹}, ‖∇(u−v)‖)`.
pub fn sync_error(reference: &State, nudged: &State) -> Result<SyncErrors, DiagnosticsError> {
    if reference.grid() != nudged.grid() {
        return Err(DiagnosticsError::GridMismatch);
    }
    let du: Vec<SpectralField> = (0..3).map(|i| reference.u[i].sub(&nudged.u[i])).collect();
    let dth = reference.theta.sub(&nudged.theta);
    Ok(SyncErrors {
        e_h0: du.iter().map(|f| f.norm_sq()).sum::<f64>().sqrt(),
        e_hm1: hm1_norm_sq(&dth).sqrt(),
        e_v0dot: du.iter().map(|f| f.grad_norm_sq()).sum::<f64>().sqrt(),
    })
}

/// Second-order estimates of `‖∂ₜu‖₂` at the interior states of a sampled
/// run.
///
/// Uses the three-point derivative on possibly uneven spacing. An entry is
/// `None` at the ends, and everywhere when the spacing exceeds a third of
/// the diffusion time `1/(νλ)`.
pub fn estimate_dtu(states: &[State], params: &PhysicalParams) -> Vec<Option<f64>> {
    let n = states.len();
    let mut out = vec![None; n];
    if n < 3 {
        return out;
    }
    let tau = 1.0 / (params.nu * params.lambda);
    let dense = states
        .windows(2)
        .all(|w| w[1].time - w[0].time <= tau / 3.0);
    if !dense {
        return out;
    }
    for i in 1..n - 1 {
        let (a, b, c) = (&states[i - 1], &states[i], &states[i + 1]);
        let h1 = b.time - a.time;
        let h2 = c.time - b.time;
        if !(h1 > 0.0 && h2 > 0.0) {
            continue;
        }
        // f'(t) ≈ -h2/(h1(h1+h2)) f₋ + (h2-h1)/(h1h2) f₀ + h1/(h2(h1+h2)) f₊
        let wa = -h2 / (h1 * (h1 + h2));
        let wb = (h2 - h1) / (h1 * h2);
        let wc = h1 / (h2 * (h1 + h2));
        let mut s = 0.0;
        for comp in 0..3 {
            let mut d = a.u[comp].scaled(wa);
            d.axpy(wb, &b.u[comp]);
            d.axpy(wc, &c.u[comp]);
            s += d.norm_sq();
        }
        out[i] = Some(s.sqrt());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_velocity, random_zero_mean_field, stream_rng};
    use crate::spectral::{forward_transform, quadrature_norm_sq, Grid, Parity};
    use std::f64::consts::PI;

    #[test]
    fn zero_state_norms_vanish() {
        let g = Grid::with_default_dealias(8, 8, 8, 1.0).unwrap();
        let p = PhysicalParams::new(1.0, 1.0, 1.0, 2.0, &g).unwrap();
        assert_eq!(compute_norms(&State::zeros(&g), &p), Norms::default());
    }

    #[test]
    fn single_sine_mode_norms() {
        for l in [1.0, 2.5] {
            let g = Grid::with_default_dealias(8, 8, 8, l).unwrap();
            let p = PhysicalParams::new(1.0, 1.0, 1.0, 2.0, &g).unwrap();
            let c = 0.7;
            let mut s = State::zeros(&g);
            s.theta = forward_transform(&g.sample(|_, _, z| c * (PI * z).sin()), Parity::OddInZ, &g)
                .unwrap();
            let n = compute_norms(&s, &p);
            // ∫_Ω sin²(πz) = L²
            assert!((n.theta_h1 - c * l).abs() < 1e-14);
            assert!((n.theta_v1 - PI * c * l).abs() < 1e-13);
            assert!((n.theta_hm1 - c * l / PI).abs() < 1e-14);
        }
    }

    #[test]
    fn lp_norm_at_alpha_zero_is_l2() {
        let g = Grid::with_default_dealias(16, 16, 16, 1.0).unwrap();
        let mut rng = stream_rng(1, 0);
        let u = random_velocity(&g, 3, 1.7, &mut rng);
        let l2 = u.iter().map(|f| f.norm_sq()).sum::<f64>().sqrt();
        assert!((velocity_lp_norm(&u, 0.0) - l2).abs() < 1e-12 * l2);
    }

    #[test]
    fn parseval_matches_quadrature() {
        let g = Grid::with_default_dealias(16, 16, 16, 1.3).unwrap();
        let mut rng = stream_rng(2, 0);
        let f = random_zero_mean_field(&g, Parity::OddInZ, 4, &mut rng);
        let v = crate::spectral::inverse_transform(&f).unwrap();
        let a = f.norm_sq();
        let b = quadrature_norm_sq(&v, &g);
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn sync_error_of_single_theta_mode() {
        let g = Grid::with_default_dealias(8, 8, 8, 1.0).unwrap();
        let a = State::zeros(&g);
        let mut b = State::zeros(&g);
        let c = 0.3;
        b.theta = forward_transform(&g.sample(|_, _, z| c * (PI * z).sin()), Parity::OddInZ, &g)
            .unwrap();
        let e = sync_error(&a, &b).unwrap();
        // ‖sin(πz)‖₂ = L
        assert!((e.e_hm1 - c / PI).abs() < 1e-15);
        assert_eq!(e.e_h0, 0.0);
        assert_eq!(sync_error(&a, &a).unwrap(), SyncErrors::default());
        let other = Grid::with_default_dealias(8, 8, 16, 1.0).unwrap();
        assert_eq!(
            sync_error(&a, &State::zeros(&other)),
            Err(DiagnosticsError::GridMismatch)
        );
    }

    #[test]
    fn dtu_of_linear_motion() {
        let g = Grid::with_default_dealias(8, 8, 8, 1.0).unwrap();
        let p = PhysicalParams::new(1.0, 1.0, 1.0, 2.0, &g).unwrap();
        let mut rng = stream_rng(3, 0);
        let w = random_velocity(&g, 2, 1.0, &mut rng);
        let times = [0.0, 0.01, 0.025, 0.03];
        let states: Vec<State> = times
            .iter()
            .map(|&t| {
                let mut s = State::zeros(&g);
                s.u = std::array::from_fn(|i| w[i].scaled(2.0 * t));
                s.time = t;
                s
            })
            .collect();
        let d = estimate_dtu(&states, &p);
        assert!(d[0].is_none() && d[3].is_none());
        assert!((d[1].unwrap() - 2.0).abs() < 1e-10);
        assert!((d[2].unwrap() - 2.0).abs() < 1e-10);
    }
}
