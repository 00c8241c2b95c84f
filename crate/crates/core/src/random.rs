//! Seeded random fields.
//!
//! Every random quantity is drawn from a `ChaCha8Rng` keyed by the run seed,
//! with a distinct ChaCha stream per purpose, so adding a new consumer never
//! shifts the numbers seen by an existing one.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::spectral::{
    forward_transform, inverse_transform, leray_project, Complex64, Grid, Parity, SpectralError,
    SpectralField,
};

/// Stream ids. Fixed forever; only append.
pub mod stream {
    pub const INITIAL_VELOCITY: u64 = 1;
    pub const INITIAL_THETA: u64 = 2;
    pub const NUDGED_INITIAL: u64 = 3;
    pub const OBSERVATION_NOISE: u64 = 4;
    pub const MONOTONICITY: u64 = 5;
    pub const INTERPOLANT_TRIALS: u64 = 6;
    pub const PROPERTY_SUITE: u64 = 7;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random real field with Gaussian coefficients on modes with
/// `max(|m|,|n|,|q|) <= max_mode`, amplitude decaying like `1/(1+|mode|²)`.
/// The result is Hermitian, has the requested parity and is dealiased.
pub fn random_field<R: Rng>(
    grid: &Arc<Grid>,
    parity: Parity,
    max_mode: usize,
    rng: &mut R,
) -> SpectralField {
    let mut f = SpectralField::zeros(grid, parity);
    let k = max_mode as i64;
    for m in -k..=k {
        for n in -k..=k {
            for q in -k..=k {
                let r2 = (m * m + n * n + q * q) as f64;
                let amp = 1.0 / (1.0 + r2);
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                f.set_mode(m, n, q, Complex64::new(re * amp, im * amp));
            }
        }
    }
    f.symmetrize();
    f
}

/// Random zero-mean field (the `(0,0,0)` coefficient removed).
pub fn random_zero_mean_field<R: Rng>(
    grid: &Arc<Grid>,
    parity: Parity,
    max_mode: usize,
    rng: &mut R,
) -> SpectralField {
    let mut f = random_field(grid, parity, max_mode, rng);
    f.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
    f
}

/// Divergence-free velocity with parities `(Even, Even, Odd)`, scaled so
/// that `‖u‖²_{L²(Ω)} = energy`. The mean flow is removed.
pub fn random_velocity<R: Rng>(
    grid: &Arc<Grid>,
    max_mode: usize,
    energy: f64,
    rng: &mut R,
) -> [SpectralField; 3] {
    let raw = [
        random_zero_mean_field(grid, Parity::EvenInZ, max_mode, rng),
        random_zero_mean_field(grid, Parity::EvenInZ, max_mode, rng),
        random_zero_mean_field(grid, Parity::OddInZ, max_mode, rng),
    ];
    let u = leray_project(&raw);
    let e: f64 = u.iter().map(|f| f.norm_sq()).sum();
    if e == 0.0 {
        return u;
    }
    let s = (energy / e).sqrt();
    u.map(|f| f.scaled(s))
}

/// Temperature fluctuation whose total temperature `T = θ + 1 - z` lies in
/// `[0, 1]` on the physical half-domain at every grid point.
///
/// `θ = amplitude · sin(πz) · h / π` with `h` an even, band-limited field
/// normalized so that `Σ|ĥ| = 1`, hence `|h| <= 1` everywhere. Since
/// `sin(πz) <= π·min(z, 1-z)` on `[0,1]`, any `amplitude` in `[0, 1]` keeps
/// `T` admissible.
pub fn admissible_theta<R: Rng>(
    grid: &Arc<Grid>,
    amplitude: f64,
    max_mode: usize,
    rng: &mut R,
) -> Result<SpectralField, SpectralError> {
    let h = random_field(grid, Parity::EvenInZ, max_mode, rng);
    let l1: f64 = h.coeffs().iter().map(|c| c.norm()).sum();
    let hv = inverse_transform(&h)?;
    let s = if l1 > 0.0 { amplitude / (PI * l1) } else { 0.0 };
    let nz = grid.nz();
    let values: Vec<f64> = hv
        .iter()
        .enumerate()
        .map(|(k, v)| s * v * (PI * grid.z(k % nz)).sin())
        .collect();
    forward_transform(&values, Parity::OddInZ, grid)
}
