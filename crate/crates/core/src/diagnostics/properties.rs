//! Structural invariants of the discretization, checked on random fields.

use rand::Rng;

use super::{velocity_lp_norm, DiagnosticsError};
use crate::model::{advect_scalar, advect_velocity, forchheimer, tendency_reference, ModelError};
use crate::model::{PhysicalParams, State, VELOCITY_PARITY};
use crate::random::{random_field, random_velocity, random_zero_mean_field, stream, stream_rng};
use crate::spectral::{
    divergence, forward_transform, gradient, inverse_laplacian_zero_mean, inverse_transform,
    leray_project, parity_project, quadrature_norm_sq, Grid, Parity, SpectralField,
};

use std::sync::Arc;

/// Worst relative defect of one property over all trials.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub worst: f64,
    pub tol: f64,
    pub pass: bool,
}

struct Tally(Vec<PropertyCheck>);

impl Tally {
    fn record(&mut self, name: &'static str, tol: f64, value: f64) {
        match self.0.iter_mut().find(|c| c.name == name) {
            Some(c) => {
                // NaN sticks, so a broken trial cannot be masked by later ones
                c.worst = if value.is_nan() { value } else { c.worst.max(value) };
                c.pass = c.worst <= c.tol;
            }
            None => self.0.push(PropertyCheck {
                name,
                worst: value,
                tol,
                pass: value <= tol,
            }),
        }
    }
}

fn rel(defect: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        defect
    } else {
        defect / scale
    }
}

fn max_rel(a: &SpectralField, b: &SpectralField) -> f64 {
    rel(a.sub(b).max_abs(), b.max_abs())
}

fn triple_rel(a: &[SpectralField; 3], b: &[SpectralField; 3]) -> f64 {
    let scale = b.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
    let defect = (0..3).map(|i| a[i].sub(&b[i]).max_abs()).fold(0.0, f64::max);
    rel(defect, scale)
}

/// Field with both parity components present, labelled `label`.
fn mixed_field<R: Rng>(grid: &Arc<Grid>, label: Parity, max_mode: usize, rng: &mut R) -> SpectralField {
    let even = random_field(grid, Parity::EvenInZ, max_mode, rng);
    let odd = random_field(grid, Parity::OddInZ, max_mode, rng);
    even.with_parity(label).add(&odd.with_parity(label))
}

/// Runs the structural checks `trials` times on random fields of `grid`.
///
/// Every entry compares two computations of the same quantity, or a
/// quantity against a bound, as a relative defect:
///
/// | name | property | tolerance |
/// |---|---|---|
/// | `transform_round_trip` | forward(inverse(f)) = f | 1e-12 |
/// | `parseval` | grid quadrature of f² = coefficient sum | 1e-12 |
/// | `parity_idempotent` | parity projection applied twice | 1e-15 |
/// | `leray_idempotent` | Leray projection applied twice | 1e-12 |
/// | `parity_leray_commute` | the two projections commute | 1e-12 |
/// | `tendency_parity` | tendencies keep the state parities | 1e-14 |
/// | `tendency_divergence` | velocity tendency is solenoidal | 1e-12 |
/// | `advection_skew` | (B(u,u),u) = 0 and (B(u,θ),θ) = 0 | 1e-10 |
/// | `forchheimer_sign` | (ℙ(\|u\|^{2α}u),u) = ‖u‖^{2α+2}_{2α+2} | 1e-10 |
/// | `buoyancy_duality` | (ℙ(θe₃),u) = (u₃,θ) | 1e-12 |
/// | `grad_inverse_laplacian` | ‖∇Δ⁻¹f‖ ≤ λ^{-1/2}‖f‖ | ratio 1 + 1e-12 |
/// | `poincare` | ‖f‖ ≤ λ^{-1/2}‖∇f‖ | ratio 1 + 1e-12 |
///
/// The two bound checks report the ratio minus one.
pub fn structural_suite(
    grid: &Arc<Grid>,
    params: &PhysicalParams,
    trials: usize,
    seed: u64,
) -> Result<Vec<PropertyCheck>, DiagnosticsError> {
    let mut rng = stream_rng(seed, stream::PROPERTY_SUITE);
    let mut t = Tally(Vec::new());
    let lam_inv_sqrt = 1.0 / params.lambda.sqrt();
    let model = |e: ModelError| match e {
        ModelError::Spectral(s) => DiagnosticsError::Spectral(s),
        other => DiagnosticsError::Model(other.to_string()),
    };
    for trial in 0..trials {
        let max_mode = 2 + trial % 4;
        for parity in [Parity::EvenInZ, Parity::OddInZ] {
            let f = random_field(grid, parity, max_mode, &mut rng);
            let values = inverse_transform(&f)?;
            let back = forward_transform(&values, parity, grid)?;
            t.record("transform_round_trip", 1e-12, max_rel(&back, &f));
            let quad = quadrature_norm_sq(&values, grid);
            t.record("parseval", 1e-12, rel((quad - f.norm_sq()).abs(), f.norm_sq()));

            let m = mixed_field(grid, parity, max_mode, &mut rng);
            let once = parity_project(&m, parity);
            t.record("parity_idempotent", 1e-15, max_rel(&parity_project(&once, parity), &once));
        }

        let raw: [SpectralField; 3] =
            VELOCITY_PARITY.map(|p| mixed_field(grid, p, max_mode, &mut rng));
        let lp = leray_project(&raw);
        t.record("leray_idempotent", 1e-12, triple_rel(&leray_project(&lp), &lp));
        let pl: [SpectralField; 3] = std::array::from_fn(|i| parity_project(&lp[i], VELOCITY_PARITY[i]));
        let parity_first: [SpectralField; 3] =
            std::array::from_fn(|i| parity_project(&raw[i], VELOCITY_PARITY[i]));
        let lp2 = leray_project(&parity_first);
        t.record("parity_leray_commute", 1e-12, triple_rel(&lp2, &pl));

        let mut s = State::zeros(grid);
        s.u = random_velocity(grid, max_mode, 1.0 + trial as f64, &mut rng);
        s.theta = random_zero_mean_field(grid, Parity::OddInZ, max_mode, &mut rng).scaled(0.3);
        let tend = tendency_reference(&s, params).map_err(model)?;
        let mut parity_defect = 0.0f64;
        for (f, p) in tend.du.iter().zip(VELOCITY_PARITY) {
            parity_defect = parity_defect.max(max_rel(&parity_project(f, p), f));
        }
        parity_defect = parity_defect.max(max_rel(&parity_project(&tend.dtheta, Parity::OddInZ), &tend.dtheta));
        t.record("tendency_parity", 1e-14, parity_defect);
        // divergence scales like |k| times the field
        let du_scale = tend.du.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
        let k_max = grid.cutoff().iter().map(|&c| c as f64).fold(0.0, f64::max)
            * (2.0 * std::f64::consts::PI / grid.length()).max(std::f64::consts::PI);
        t.record(
            "tendency_divergence",
            1e-12,
            rel(divergence(&tend.du).max_abs(), du_scale * k_max),
        );

        let b0 = advect_velocity(&s.u, &s.u);
        let skew_u: f64 = (0..3).map(|i| b0[i].inner(&s.u[i])).sum();
        let scale_u: f64 = (0..3).map(|i| b0[i].norm() * s.u[i].norm()).sum();
        let b1 = advect_scalar(&s.u, &s.theta);
        let skew_t = b1.inner(&s.theta);
        t.record(
            "advection_skew",
            1e-10,
            rel(skew_u.abs(), scale_u).max(rel(skew_t.abs(), b1.norm() * s.theta.norm())),
        );

        let damp = leray_project(&forchheimer(&s.u, params.a, params.alpha));
        let pairing: f64 = (0..3).map(|i| damp[i].inner(&s.u[i])).sum();
        let direct = params.a * velocity_lp_norm(&s.u, params.alpha).powf(2.0 * params.alpha + 2.0);
        t.record("forchheimer_sign", 1e-10, rel((pairing - direct).abs(), direct));

        let zeros = || SpectralField::zeros(grid, Parity::EvenInZ);
        let buoy = leray_project(&[zeros(), zeros(), s.theta.clone()]);
        let lhs: f64 = (0..3).map(|i| buoy[i].inner(&s.u[i])).sum();
        let rhs = s.u[2].inner(&s.theta);
        t.record(
            "buoyancy_duality",
            1e-12,
            rel((lhs - rhs).abs(), s.u[2].norm() * s.theta.norm()),
        );

        for parity in [Parity::EvenInZ, Parity::OddInZ] {
            let f = random_zero_mean_field(grid, parity, max_mode, &mut rng);
            let phi = inverse_laplacian_zero_mean(&f)?;
            let (gx, gy, gz) = gradient(&phi);
            let grad = (gx.norm_sq() + gy.norm_sq() + gz.norm_sq()).sqrt();
            t.record("grad_inverse_laplacian", 1e-12, grad / (lam_inv_sqrt * f.norm()) - 1.0);
        }
        let f = random_zero_mean_field(grid, Parity::OddInZ, max_mode, &mut rng);
        t.record(
            "poincare",
            1e-12,
            f.norm() / (lam_inv_sqrt * f.grad_norm_sq().sqrt()) - 1.0,
        );
    }
    Ok(t.0)
}
