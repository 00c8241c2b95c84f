use super::{DiagnosticsError, DiagnosticsRecord};
use crate::model::PhysicalParams;

/// Sample-wise slack allowed above the transient envelope.
pub const ENVELOPE_TOL: f64 = 0.05;

/// Closed-form constants of the energy estimates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundSet {
    /// `2aκλ / (aκλ + 32)`
    pub epsilon1: f64,
    /// `min(a, κλ)`
    pub decay_rate: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    /// Absent for `alpha < 1`.
    pub gamma2: Option<f64>,
    /// Limsup radius for `‖u‖` and `‖θ‖`; equal to `gamma1`.
    pub r_weak: f64,
    /// Limsup bound for `‖∇u‖²`; absent when `gamma2` is.
    pub r_grad: Option<f64>,
    /// `gamma0` with the exponent `-(α+1)/α`, from redoing the Young step.
    pub gamma0_recomputed: f64,
    pub gamma1_recomputed: f64,
}

/// Evaluates the bound set.
///
/// `alpha = 1` is rejected because `Γ₂` has the exponent `1/(1-α)`.
/// For `alpha < 1` the gradient constants are not part of the theory and
/// are left out.
pub fn compute_bounds(params: &PhysicalParams) -> Result<BoundSet, DiagnosticsError> {
    let PhysicalParams {
        nu,
        kappa,
        a,
        alpha,
        length,
        lambda,
    } = *params;
    for (name, value) in [
        ("nu", nu),
        ("kappa", kappa),
        ("a", a),
        ("L", length),
        ("lambda", lambda),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(DiagnosticsError::InvalidParameter {
                name,
                value,
                constraint: "must be positive and finite",
            });
        }
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(DiagnosticsError::InvalidParameter {
            name: "alpha",
            value: alpha,
            constraint: "must be positive for the bound set",
        });
    }
    if alpha == 1.0 {
        return Err(DiagnosticsError::Gamma2Undefined);
    }
    let akl = a * kappa * lambda;
    let epsilon1 = 2.0 * akl / (akl + 32.0);
    let expo = (alpha + 1.0) / alpha;
    let decay_rate = a.min(kappa * lambda);
    let gamma0 = 2.0 * a * length * length * epsilon1.powf(expo);
    let gamma1 = 2.0 * gamma0 / decay_rate;
    let gamma0_recomputed = 2.0 * a * length * length * epsilon1.powf(-expo);
    let gamma1_recomputed = 2.0 * gamma0_recomputed / decay_rate;
    let gamma2 = (alpha > 1.0)
        .then(|| (a * nu.powf(alpha) / 2f64.powf(2.0 - alpha)).powf(1.0 / (1.0 - alpha)));
    let four_al2 = 4.0 * a * length * length;
    let r_grad = gamma2.map(|g2| {
        (g2 * ((a + 1.0) * gamma1 + four_al2) + (3.0 + a) * gamma1 + four_al2) / (2.0 * nu)
    });
    Ok(BoundSet {
        epsilon1,
        decay_rate,
        gamma0,
        gamma1,
        gamma2,
        r_weak: gamma1,
        r_grad,
        gamma0_recomputed,
        gamma1_recomputed,
    })
}

/// `(a3/s + a2) e^{a1}`.
pub fn uniform_gronwall_bound(a1: f64, a2: f64, a3: f64, s: f64) -> Result<f64, DiagnosticsError> {
    if !(s > 0.0) {
        return Err(DiagnosticsError::InvalidParameter {
            name: "s",
            value: s,
            constraint: "must be positive",
        });
    }
    for (name, value) in [("a1", a1), ("a2", a2), ("a3", a3)] {
        if !(value >= 0.0) {
            return Err(DiagnosticsError::InvalidParameter {
                name,
                value,
                constraint: "must be non-negative",
            });
        }
    }
    Ok((a3 / s + a2) * a1.exp())
}

/// Outcome of [`check_absorbing_ball`].
#[derive(Clone, Debug, PartialEq)]
pub struct AbsorbingBallReport {
    pub window: f64,
    /// Max of `‖u‖² + ‖θ‖²` over the trailing window.
    pub energy_max: f64,
    pub energy_radius: f64,
    pub energy_pass: bool,
    /// `energy_radius - energy_max`.
    pub energy_margin: f64,
    /// Max of `‖∇u‖²` over the trailing window.
    pub grad_max: f64,
    pub grad_radius: Option<f64>,
    pub grad_pass: Option<bool>,
    pub grad_margin: Option<f64>,
    /// Largest `E(t) / (E(0)e^{-min(a,κλ)t/2} + Γ₁)` over all samples.
    pub envelope_worst_ratio: f64,
    pub envelope_worst_time: f64,
    pub envelope_pass: bool,
}

impl AbsorbingBallReport {
    pub fn pass(&self) -> bool {
        self.energy_pass && self.envelope_pass && self.grad_pass.unwrap_or(true)
    }
}

/// Compares a sampled run against the absorbing balls.
///
/// The trailing `window` stands in for the limsup. Times are measured from
/// the first sample.
pub fn check_absorbing_ball(
    samples: &[DiagnosticsRecord],
    bounds: &BoundSet,
    window: f64,
) -> Result<AbsorbingBallReport, DiagnosticsError> {
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => {
            return Err(DiagnosticsError::TooFewSamples {
                needed: 1,
                got: 0,
            })
        }
    };
    if !(window >= 0.0) {
        return Err(DiagnosticsError::InvalidParameter {
            name: "window",
            value: window,
            constraint: "must be non-negative",
        });
    }
    let span = last.time - first.time;
    if span < 2.0 * window {
        return Err(DiagnosticsError::TrajectoryTooShort {
            span,
            needed: 2.0 * window,
        });
    }
    let start = last.time - window;
    let mut energy_max = 0.0f64;
    let mut grad_max = 0.0f64;
    for r in samples.iter().filter(|r| r.time >= start) {
        energy_max = energy_max.max(r.norms.energy());
        grad_max = grad_max.max(r.norms.u_v0dot * r.norms.u_v0dot);
    }
    let e0 = first.norms.energy();
    let mut worst = 0.0f64;
    let mut worst_t = first.time;
    for r in samples {
        let t = r.time - first.time;
        let env = e0 * (-bounds.decay_rate * t / 2.0).exp() + bounds.gamma1;
        let ratio = r.norms.energy() / env;
        if ratio > worst {
            worst = ratio;
            worst_t = r.time;
        }
    }
    let grad_radius = bounds.r_grad;
    Ok(AbsorbingBallReport {
        window,
        energy_max,
        energy_radius: bounds.gamma1,
        energy_pass: energy_max <= bounds.gamma1,
        energy_margin: bounds.gamma1 - energy_max,
        grad_max,
        grad_radius,
        grad_pass: grad_radius.map(|r| grad_max <= r),
        grad_margin: grad_radius.map(|r| r - grad_max),
        envelope_worst_ratio: worst,
        envelope_worst_time: worst_t,
        envelope_pass: worst <= 1.0 + ENVELOPE_TOL,
    })
}
