//! State, physical parameters and right-hand sides of the convection system
//! written in the conduction-shifted variables.

use std::sync::Arc;

use rayon::prelude::*;

use crate::spectral::ops::{derivative, leray_in_place};
use crate::spectral::{
    compute_lambda, divergence, forward_many, forward_transform, inverse_laplacian_zero_mean,
    inverse_many, inverse_transform, Complex64, Grid, Parity, SpectralError, SpectralField,
};

/// Tolerance on the wall values `T(z=0) = 1`, `T(z=1) = 0`.
pub const BOUNDARY_TOL: f64 = 1e-8;

/// Parities of `(u₁, u₂, u₃)`.
pub const VELOCITY_PARITY: [Parity; 3] = [Parity::EvenInZ, Parity::EvenInZ, Parity::OddInZ];
pub const THETA_PARITY: Parity = Parity::OddInZ;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("{name} = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("wall temperature at z = {z} deviates from {expected} by {deviation:e}")]
    BoundaryValue {
        z: f64,
        expected: f64,
        deviation: f64,
    },
    #[error("{what} has parity {got:?}, expected {expected:?}")]
    WrongParity {
        what: &'static str,
        expected: Parity,
        got: Parity,
    },
    #[error("nudging coefficient must be positive, got {0}")]
    NonPositiveMu(f64),
    #[error("observation: {0}")]
    Observation(String),
}

/// Model constants. `lambda` is the smallest positive retained `|k|²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    pub nu: f64,
    pub kappa: f64,
    pub a: f64,
    pub alpha: f64,
    pub length: f64,
    pub lambda: f64,
}

impl PhysicalParams {
    /// Validates the constants and derives `lambda` from the grid.
    pub fn new(nu: f64, kappa: f64, a: f64, alpha: f64, grid: &Grid) -> Result<Self, ModelError> {
        Self::with_lambda(nu, kappa, a, alpha, grid.length(), compute_lambda(grid))
    }

    pub fn with_lambda(
        nu: f64,
        kappa: f64,
        a: f64,
        alpha: f64,
        length: f64,
        lambda: f64,
    ) -> Result<Self, ModelError> {
        let positive = "must be positive and finite";
        for (name, value) in [
            ("nu", nu),
            ("kappa", kappa),
            ("a", a),
            ("L", length),
            ("lambda", lambda),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParameter {
                    name,
                    value,
                    constraint: positive,
                });
            }
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "alpha",
                value: alpha,
                constraint: "must be non-negative and finite",
            });
        }
        Ok(Self {
            nu,
            kappa,
            a,
            alpha,
            length,
            lambda,
        })
    }

    /// FNV-1a over the little-endian bytes of `(nu, kappa, a, alpha)`.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in [self.nu, self.kappa, self.a, self.alpha] {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    /// Runs with `alpha <= 1` carry no uniqueness theory.
    pub fn is_exploratory(&self) -> bool {
        self.alpha <= 1.0
    }
}

/// Velocity and temperature fluctuation at one instant.
#[derive(Clone, Debug)]
pub struct State {
    pub u: [SpectralField; 3],
    pub theta: SpectralField,
    pub time: f64,
}

impl State {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            u: VELOCITY_PARITY.map(|p| SpectralField::zeros(grid, p)),
            theta: SpectralField::zeros(grid, THETA_PARITY),
            time: 0.0,
        }
    }

    /// Checks grids and parities; does not touch the coefficients.
    pub fn new(u: [SpectralField; 3], theta: SpectralField, time: f64) -> Result<Self, ModelError> {
        let grid = u[0].grid();
        for f in u.iter().chain(std::iter::once(&theta)) {
            if f.grid() != grid {
                return Err(SpectralError::GridMismatch.into());
            }
        }
        for (f, p, what) in [
            (&u[0], VELOCITY_PARITY[0], "u1"),
            (&u[1], VELOCITY_PARITY[1], "u2"),
            (&u[2], VELOCITY_PARITY[2], "u3"),
            (&theta, THETA_PARITY, "theta"),
        ] {
            if f.parity() != p {
                return Err(ModelError::WrongParity {
                    what,
                    expected: p,
                    got: f.parity(),
                });
            }
        }
        Ok(Self { u, theta, time })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.theta.grid()
    }

    /// `‖u‖² + ‖θ‖²`.
    pub fn energy(&self) -> f64 {
        self.u.iter().map(|f| f.norm_sq()).sum::<f64>() + self.theta.norm_sq()
    }

    /// Largest divergence coefficient relative to the largest velocity
    /// coefficient times the largest wavenumber.
    pub fn divergence_residual(&self) -> f64 {
        let d = divergence(&self.u).max_abs();
        let scale = self.u.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            d
        } else {
            d / scale
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|f| f.is_finite()) && self.theta.is_finite()
    }

    pub(crate) fn fields(&self) -> [&SpectralField; 4] {
        [&self.u[0], &self.u[1], &self.u[2], &self.theta]
    }

    pub(crate) fn fields_mut(&mut self) -> [&mut SpectralField; 4] {
        let [a, b, c] = &mut self.u;
        [a, b, c, &mut self.theta]
    }
}

/// Time derivative of a [`State`].
#[derive(Clone, Debug)]
pub struct Tendency {
    pub du: [SpectralField; 3],
    pub dtheta: SpectralField,
    /// Largest `|u|` at grid points, measured when the nonlinear terms
    /// needed the physical velocity; zero otherwise.
    pub max_speed: f64,
}

impl Tendency {
    pub(crate) fn fields(&self) -> [&SpectralField; 4] {
        [&self.du[0], &self.du[1], &self.du[2], &self.dtheta]
    }

    pub fn is_finite(&self) -> bool {
        self.du.iter().all(|f| f.is_finite()) && self.dtheta.is_finite()
    }
}

/// Which explicit terms take part in a tendency. All on by default; turning
/// them off is a test hook.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Terms {
    pub advection: bool,
    pub forchheimer: bool,
    /// Buoyancy `θe₃` in the momentum equation and the coupling `+u₃` in
    /// the temperature equation.
    pub buoyancy: bool,
}

impl Terms {
    pub const ALL: Terms = Terms {
        advection: true,
        forchheimer: true,
        buoyancy: true,
    };
    pub const NONE: Terms = Terms {
        advection: false,
        forchheimer: false,
        buoyancy: false,
    };
}

impl Default for Terms {
    fn default() -> Self {
        Self::ALL
    }
}

/// Right-hand side split for the integrating-factor integrator: diffusion
/// is implied by [`Dynamics::params`], everything else is explicit.
pub trait Dynamics {
    fn params(&self) -> &PhysicalParams;

    /// Advection, damping, buoyancy, coupling and any forcing, already
    /// Leray-projected and dealiased. Evaluated at `state.time`.
    fn explicit_terms(&self, state: &State) -> Result<Tendency, ModelError>;

    /// Extra upper bound on the time step imposed by the explicit terms.
    fn dt_cap(&self) -> f64 {
        f64::INFINITY
    }
}

/// The reference system.
#[derive(Clone, Copy, Debug)]
pub struct Physics {
    pub params: PhysicalParams,
    pub terms: Terms,
}

impl Physics {
    pub fn new(params: PhysicalParams) -> Self {
        Self {
            params,
            terms: Terms::ALL,
        }
    }

    pub fn with_terms(params: PhysicalParams, terms: Terms) -> Self {
        Self { params, terms }
    }
}

impl Dynamics for Physics {
    fn params(&self) -> &PhysicalParams {
        &self.params
    }

    fn explicit_terms(&self, state: &State) -> Result<Tendency, ModelError> {
        explicit_terms(state, &self.params, self.terms, None)
    }
}

// ---------------------------------------------------------------------------
// Pointwise kernels

#[derive(Clone, Copy)]
struct Damping {
    a: f64,
    alpha: f64,
    int_alpha: Option<i32>,
}

impl Damping {
    fn new(a: f64, alpha: f64) -> Self {
        let int_alpha = (alpha.fract() == 0.0 && alpha <= 64.0).then_some(alpha as i32);
        Self {
            a,
            alpha,
            int_alpha,
        }
    }

    /// `a (u·u)^α`, with the value at `u = 0` taken as 0.
    #[inline]
    fn coefficient(&self, s: f64) -> f64 {
        if s == 0.0 {
            return 0.0;
        }
        let p = match self.int_alpha {
            Some(k) => s.powi(k),
            None => s.powf(self.alpha),
        };
        self.a * p
    }
}

const CHUNK: usize = 4096;

/// Physical-space nonlinear terms for the fused tendency.
///
/// `phys` holds `u₁,u₂,u₃` and, when `grads` is set, `∂ⱼu₁ (3), ∂ⱼu₂ (3),
/// ∂ₓu₃, ∂ᵧu₃, ∂ⱼθ (3)`; `∂zu₃` is rebuilt from incompressibility.
fn pointwise(
    phys: &[Vec<f64>],
    grads: bool,
    damping: Option<Damping>,
) -> ([Vec<f64>; 4], f64) {
    let n = phys[0].len();
    let mut out: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    let [o1, o2, o3, o4] = &mut out;
    let max_sq = o1
        .par_chunks_mut(CHUNK)
        .zip(o2.par_chunks_mut(CHUNK))
        .zip(o3.par_chunks_mut(CHUNK))
        .zip(o4.par_chunks_mut(CHUNK))
        .enumerate()
        .map(|(c, (((n1, n2), n3), nt))| {
            let start = c * CHUNK;
            let mut local = 0.0f64;
            for k in 0..n1.len() {
                let p = start + k;
                let (u1, u2, u3) = (phys[0][p], phys[1][p], phys[2][p]);
                let s = u1 * u1 + u2 * u2 + u3 * u3;
                local = local.max(s);
                let f = damping.map_or(0.0, |d| d.coefficient(s));
                let (mut a1, mut a2, mut a3, mut at) = (f * u1, f * u2, f * u3, 0.0);
                if grads {
                    let g = |i: usize| phys[i][p];
                    let u3z = -(g(3) + g(7));
                    a1 += u1 * g(3) + u2 * g(4) + u3 * g(5);
                    a2 += u1 * g(6) + u2 * g(7) + u3 * g(8);
                    a3 += u1 * g(9) + u2 * g(10) + u3 * u3z;
                    at = u1 * g(11) + u2 * g(12) + u3 * g(13);
                }
                n1[k] = a1;
                n2[k] = a2;
                n3[k] = a3;
                nt[k] = at;
            }
            local
        })
        .reduce(|| 0.0, f64::max);
    (out, max_sq.sqrt())
}

/// Fused explicit terms: `-P_K[u·∇u + a|u|^{2α}u] + θe₃ + forcing`, Leray
/// projected, and `-P_K[u·∇θ] + u₃`.
///
/// `forcing` is added to the first two momentum components before the
/// projection.
pub(crate) fn explicit_terms(
    state: &State,
    params: &PhysicalParams,
    terms: Terms,
    forcing: Option<&[SpectralField; 2]>,
) -> Result<Tendency, ModelError> {
    let grid = state.grid();
    let mut du: [SpectralField; 3] = VELOCITY_PARITY.map(|p| SpectralField::zeros(grid, p));
    let mut dtheta = SpectralField::zeros(grid, THETA_PARITY);
    let mut max_speed = 0.0;

    if terms.advection || terms.forchheimer {
        let u = &state.u;
        let derived: Vec<SpectralField> = if terms.advection {
            vec![
                derivative(&u[0], 0),
                derivative(&u[0], 1),
                derivative(&u[0], 2),
                derivative(&u[1], 0),
                derivative(&u[1], 1),
                derivative(&u[1], 2),
                derivative(&u[2], 0),
                derivative(&u[2], 1),
                derivative(&state.theta, 0),
                derivative(&state.theta, 1),
                derivative(&state.theta, 2),
            ]
        } else {
            Vec::new()
        };
        let mut list: Vec<&SpectralField> = vec![&u[0], &u[1], &u[2]];
        list.extend(derived.iter());
        let phys = inverse_many(&list);
        let damping = terms
            .forchheimer
            .then(|| Damping::new(params.a, params.alpha));
        let (nl, speed) = pointwise(&phys, terms.advection, damping);
        max_speed = speed;
        let spec = if terms.advection {
            forward_many(
                &[&nl[0], &nl[1], &nl[2], &nl[3]],
                &[Parity::EvenInZ, Parity::EvenInZ, Parity::OddInZ, Parity::OddInZ],
                grid,
            )
        } else {
            forward_many(&[&nl[0], &nl[1], &nl[2]], &VELOCITY_PARITY, grid)
        };
        for (d, s) in du.iter_mut().zip(&spec) {
            d.axpy(-1.0, s);
        }
        if terms.advection {
            dtheta.axpy(-1.0, &spec[3]);
        }
    }

    if terms.buoyancy {
        du[2].axpy(1.0, &state.theta);
        dtheta.axpy(1.0, &state.u[2]);
    }
    if let Some(f) = forcing {
        du[0].axpy(1.0, &f[0]);
        du[1].axpy(1.0, &f[1]);
    }
    leray_in_place(&mut du);
    Ok(Tendency {
        du,
        dtheta,
        max_speed,
    })
}

/// Adds `-ν|k|²u` and `-κ|k|²θ` to a tendency.
fn add_diffusion(t: &mut Tendency, state: &State, params: &PhysicalParams) {
    let grid = Arc::clone(state.grid());
    let (nx, ny, nz) = grid.shape();
    for (d, u) in t.du.iter_mut().zip(&state.u) {
        add_scaled_laplacian(d, u, params.nu, &grid, (nx, ny, nz));
    }
    add_scaled_laplacian(&mut t.dtheta, &state.theta, params.kappa, &grid, (nx, ny, nz));
}

fn add_scaled_laplacian(
    out: &mut SpectralField,
    f: &SpectralField,
    c: f64,
    grid: &Grid,
    (nx, ny, nz): (usize, usize, usize),
) {
    let src = f.coeffs();
    let dst = out.coeffs_mut();
    for i in 0..nx {
        for j in 0..ny {
            for l in 0..nz {
                let k = grid.index(i, j, l);
                dst[k] -= c * grid.ksq(i, j, l) * src[k];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Public operators

/// Physical samples of `(u₁,u₂,u₃)`.
fn velocity_values(u: &[SpectralField; 3]) -> [Vec<f64>; 3] {
    let mut v = inverse_many(&[&u[0], &u[1], &u[2]]).into_iter();
    std::array::from_fn(|_| v.next().expect("three fields"))
}

/// `ℙ P_K[(u·∇)v]` evaluated pseudo-spectrally.
pub fn advect_velocity(u: &[SpectralField; 3], target: &[SpectralField; 3]) -> [SpectralField; 3] {
    let mut out = advect_velocity_unprojected(u, target);
    leray_in_place(&mut out);
    out
}

fn advect_velocity_unprojected(
    u: &[SpectralField; 3],
    target: &[SpectralField; 3],
) -> [SpectralField; 3] {
    let grid = u[0].grid();
    let uv = velocity_values(u);
    let mut products: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; grid.len()]);
    for (i, t) in target.iter().enumerate() {
        let grads: Vec<SpectralField> = (0..3).map(|ax| derivative(t, ax)).collect();
        let g = inverse_many(&[&grads[0], &grads[1], &grads[2]]);
        for p in 0..grid.len() {
            products[i][p] = uv[0][p] * g[0][p] + uv[1][p] * g[1][p] + uv[2][p] * g[2][p];
        }
    }
    let parities = [target[0].parity(), target[1].parity(), target[2].parity()];
    let mut f = forward_many(&[&products[0], &products[1], &products[2]], &parities, grid).into_iter();
    std::array::from_fn(|_| f.next().expect("three fields"))
}

/// `P_K[(u·∇)θ]`, parity `OddInZ` for an odd `θ`.
pub fn advect_scalar(u: &[SpectralField; 3], theta: &SpectralField) -> SpectralField {
    let grid = u[0].grid();
    let uv = velocity_values(u);
    let grads: Vec<SpectralField> = (0..3).map(|ax| derivative(theta, ax)).collect();
    let g = inverse_many(&[&grads[0], &grads[1], &grads[2]]);
    let prod: Vec<f64> = (0..grid.len())
        .map(|p| uv[0][p] * g[0][p] + uv[1][p] * g[1][p] + uv[2][p] * g[2][p])
        .collect();
    forward_many(&[&prod], &[theta.parity()], grid)
        .pop()
        .expect("one field")
}

/// `P_K[a (u·u)^α u]`, not Leray-projected.
pub fn forchheimer(u: &[SpectralField; 3], a: f64, alpha: f64) -> [SpectralField; 3] {
    let grid = u[0].grid();
    let uv = velocity_values(u);
    let d = Damping::new(a, alpha);
    let mut out: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; grid.len()]);
    for p in 0..grid.len() {
        let s = uv[0][p] * uv[0][p] + uv[1][p] * uv[1][p] + uv[2][p] * uv[2][p];
        let f = d.coefficient(s);
        for i in 0..3 {
            out[i][p] = f * uv[i][p];
        }
    }
    let mut f = forward_many(&[&out[0], &out[1], &out[2]], &VELOCITY_PARITY, grid).into_iter();
    std::array::from_fn(|_| f.next().expect("three fields"))
}

/// Full right-hand side of the truncated reference system, diffusion
/// included.
pub fn tendency_reference(state: &State, params: &PhysicalParams) -> Result<Tendency, ModelError> {
    let mut t = explicit_terms(state, params, Terms::ALL, None)?;
    add_diffusion(&mut t, state, params);
    Ok(t)
}

/// Right-hand side of the nudged system.
///
/// `observed` is `I_h(u⊥)` from the reference run and `interpolant` maps a
/// horizontal velocity component to its observation.
pub fn tendency_nudged<F>(
    state: &State,
    observed: &[SpectralField; 2],
    params: &PhysicalParams,
    mu: f64,
    interpolant: F,
) -> Result<Tendency, ModelError>
where
    F: Fn(&SpectralField) -> Result<SpectralField, ModelError>,
{
    let forcing = nudging_forcing(state, observed, mu, interpolant)?;
    let mut t = explicit_terms(state, params, Terms::ALL, Some(&forcing))?;
    add_diffusion(&mut t, state, params);
    Ok(t)
}

/// `μ P_K (I_h(u⊥) − I_h(v⊥))`, before projection.
pub(crate) fn nudging_forcing<F>(
    state: &State,
    observed: &[SpectralField; 2],
    mu: f64,
    interpolant: F,
) -> Result<[SpectralField; 2], ModelError>
where
    F: Fn(&SpectralField) -> Result<SpectralField, ModelError>,
{
    if !(mu > 0.0) {
        return Err(ModelError::NonPositiveMu(mu));
    }
    let mut out = [observed[0].clone(), observed[1].clone()];
    for (o, v) in out.iter_mut().zip(&state.u[..2]) {
        let iv = interpolant(v)?;
        o.axpy(-1.0, &iv);
        crate::spectral::ops::dealias_in_place(o);
        o.coeffs_mut().iter_mut().for_each(|c| *c *= mu);
    }
    Ok(out)
}

/// Pressure with zero mean, from `Δp = ∇·(−(u·∇)u − a|u|^{2α}u + θe₃)`.
pub fn recover_pressure(state: &State, params: &PhysicalParams) -> Result<SpectralField, ModelError> {
    let adv = advect_velocity_unprojected(&state.u, &state.u);
    let damp = forchheimer(&state.u, params.a, params.alpha);
    let mut rhs: [SpectralField; 3] = std::array::from_fn(|i| adv[i].add(&damp[i]).scaled(-1.0));
    rhs[2].axpy(1.0, &state.theta);
    let mut div = divergence(&rhs);
    // the mean of a divergence is zero up to round-off
    div.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
    Ok(inverse_laplacian_zero_mean(&div)?.with_parity(Parity::EvenInZ))
}

// ---------------------------------------------------------------------------
// Conduction shift

/// Points per column of the physical half-domain `z ∈ [0, 1]`, walls
/// included: `z_p = 2p/nz`, `p = 0..=nz/2`.
pub fn half_domain_levels(grid: &Grid) -> usize {
    grid.nz() / 2 + 1
}

/// Length of a half-domain array, laid out as `(i * ny + j) * levels + p`.
pub fn half_domain_len(grid: &Grid) -> usize {
    grid.nx() * grid.ny() * half_domain_levels(grid)
}

/// Samples a function of `(x, y, z)` on the half-domain points.
pub fn sample_half_domain<F: Fn(f64, f64, f64) -> f64>(grid: &Grid, f: F) -> Vec<f64> {
    let levels = half_domain_levels(grid);
    let mut out = Vec::with_capacity(half_domain_len(grid));
    for i in 0..grid.nx() {
        for j in 0..grid.ny() {
            for p in 0..levels {
                out.push(f(grid.x(i), grid.y(j), 2.0 * p as f64 / grid.nz() as f64));
            }
        }
    }
    out
}

/// `θ = T − (1 − z)` on `z ∈ [0,1]`, extended oddly to `[−1, 0)`.
pub fn conduction_shift(t_physical: &[f64], grid: &Arc<Grid>) -> Result<SpectralField, ModelError> {
    let levels = half_domain_levels(grid);
    if t_physical.len() != half_domain_len(grid) {
        return Err(SpectralError::ShapeMismatch {
            expected: half_domain_len(grid),
            got: t_physical.len(),
        }
        .into());
    }
    let (nx, ny, nz) = grid.shape();
    for col in t_physical.chunks(levels) {
        for (p, expected) in [(0, 1.0), (levels - 1, 0.0)] {
            let deviation = (col[p] - expected).abs();
            if !(deviation <= BOUNDARY_TOL) {
                return Err(ModelError::BoundaryValue {
                    z: 2.0 * p as f64 / nz as f64,
                    expected,
                    deviation,
                });
            }
        }
    }
    let half = nz / 2;
    let mut theta = vec![0.0; grid.len()];
    for i in 0..nx {
        for j in 0..ny {
            let col = &t_physical[(i * ny + j) * levels..(i * ny + j + 1) * levels];
            let th = |p: usize| col[p] - (1.0 - 2.0 * p as f64 / nz as f64);
            for l in 0..nz {
                // z_l = (l - nz/2) * 2/nz
                theta[grid.index(i, j, l)] = if l >= half {
                    th(l - half)
                } else {
                    -th(half - l)
                };
            }
        }
    }
    Ok(forward_transform(&theta, THETA_PARITY, grid)?)
}

/// Total temperature `T = θ + 1 − z` on the half-domain points.
pub fn conduction_unshift(theta: &SpectralField) -> Result<Vec<f64>, ModelError> {
    let grid = theta.grid();
    let values = inverse_transform(theta)?;
    let (nx, ny, nz) = grid.shape();
    let levels = half_domain_levels(grid);
    let half = nz / 2;
    let mut out = Vec::with_capacity(half_domain_len(grid));
    for i in 0..nx {
        for j in 0..ny {
            for p in 0..levels {
                let l = (half + p) % nz;
                let z = 2.0 * p as f64 / nz as f64;
                out.push(values[grid.index(i, j, l)] + 1.0 - z);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{admissible_theta, random_velocity, random_zero_mean_field, stream_rng};
    use crate::spectral::{leray_project, quadrature_inner};
    use std::f64::consts::PI;

    fn grid(n: usize) -> Arc<Grid> {
        Grid::with_default_dealias(n, n, n, 1.0).unwrap()
    }

    fn params(g: &Grid, alpha: f64) -> PhysicalParams {
        PhysicalParams::new(1.0, 1.0, 1.0, alpha, g).unwrap()
    }

    fn random_state(g: &Arc<Grid>, seed: u64) -> State {
        let mut rng = stream_rng(seed, 0);
        let u = random_velocity(g, 3, 1.0, &mut rng);
        let theta = random_zero_mean_field(g, Parity::OddInZ, 3, &mut rng).scaled(0.3);
        State::new(u, theta, 0.0).unwrap()
    }

    #[test]
    fn conduction_state_is_a_fixed_point() {
        let g = grid(8);
        let t = tendency_reference(&State::zeros(&g), &params(&g, 2.0)).unwrap();
        for f in t.fields() {
            assert_eq!(f.max_abs(), 0.0);
        }
    }

    #[test]
    fn buoyancy_only_state() {
        let g = grid(8);
        let p = params(&g, 2.0);
        let mut s = State::zeros(&g);
        s.theta = forward_transform(
            &g.sample(|x, _, z| (2.0 * PI * x).cos() * (PI * z).sin()),
            Parity::OddInZ,
            &g,
        )
        .unwrap();
        let t = tendency_reference(&s, &p).unwrap();
        let expect = leray_project(&[
            SpectralField::zeros(&g, Parity::EvenInZ),
            SpectralField::zeros(&g, Parity::EvenInZ),
            s.theta.clone(),
        ]);
        for (a, b) in t.du.iter().zip(&expect) {
            assert!(a.sub(b).max_abs() < 1e-15);
        }
        assert!(t.du[2].max_abs() > 0.1);
        let k2 = 4.0 * PI * PI + PI * PI;
        assert!(t.dtheta.sub(&s.theta.scaled(-k2)).max_abs() < 1e-13);
    }

    #[test]
    fn constant_flow_forchheimer() {
        let g = grid(8);
        let mut u = VELOCITY_PARITY.map(|p| SpectralField::zeros(&g, p));
        u[0].coeffs_mut()[0] = Complex64::new(0.5, 0.0);
        let f = forchheimer(&u, 1.0, 2.0);
        assert!((f[0].coeffs()[0].re - 0.03125).abs() < 1e-16);
        assert!(f[0].sub(&u[0].scaled(0.0625)).max_abs() < 1e-17);
        let lin = forchheimer(&u, 3.0, 0.0);
        assert!(lin[0].sub(&u[0].scaled(3.0)).max_abs() < 1e-16);
        assert_eq!(forchheimer(&State::zeros(&g).u, 1.0, 0.0)[0].max_abs(), 0.0);
    }

    #[test]
    fn fused_terms_match_separate_operators() {
        let g = grid(16);
        for alpha in [0.0, 1.5, 2.0] {
            let p = params(&g, alpha);
            let s = random_state(&g, 11);
            let fused = explicit_terms(&s, &p, Terms::ALL, None).unwrap();
            let adv = advect_velocity(&s.u, &s.u);
            let damp = leray_project(&forchheimer(&s.u, p.a, p.alpha));
            let buoy = leray_project(&[
                SpectralField::zeros(&g, Parity::EvenInZ),
                SpectralField::zeros(&g, Parity::EvenInZ),
                s.theta.clone(),
            ]);
            for i in 0..3 {
                let expect = buoy[i].sub(&adv[i]).sub(&damp[i]);
                let err = fused.du[i].sub(&expect).max_abs();
                assert!(err < 1e-13 * expect.max_abs().max(1.0), "alpha {alpha} comp {i}: {err}");
            }
            let expect = s.u[2].sub(&advect_scalar(&s.u, &s.theta));
            assert!(fused.dtheta.sub(&expect).max_abs() < 1e-13);
        }
    }

    #[test]
    fn skew_symmetry_and_damping_sign() {
        let g = grid(16);
        let p = params(&g, 2.0);
        let s = random_state(&g, 5);
        let b0 = advect_velocity(&s.u, &s.u);
        let lhs: f64 = (0..3).map(|i| b0[i].inner(&s.u[i])).sum();
        let scale: f64 = (0..3).map(|i| b0[i].norm() * s.u[i].norm()).sum();
        assert!(lhs.abs() < 1e-10 * scale);
        let b1 = advect_scalar(&s.u, &s.theta);
        assert!(b1.inner(&s.theta).abs() < 1e-10 * b1.norm() * s.theta.norm());

        let f = leray_project(&forchheimer(&s.u, p.a, p.alpha));
        let pairing: f64 = (0..3).map(|i| f[i].inner(&s.u[i])).sum();
        let uv = velocity_values(&s.u);
        let direct: f64 = (0..g.len())
            .map(|k| (uv[0][k].powi(2) + uv[1][k].powi(2) + uv[2][k].powi(2)).powi(3))
            .sum::<f64>()
            * g.volume()
            / g.len() as f64;
        assert!((pairing - direct).abs() < 1e-10 * direct);
    }

    #[test]
    fn buoyancy_coupling_duality() {
        let g = grid(16);
        let s = random_state(&g, 9);
        let b = leray_project(&[
            SpectralField::zeros(&g, Parity::EvenInZ),
            SpectralField::zeros(&g, Parity::EvenInZ),
            s.theta.clone(),
        ]);
        let lhs: f64 = (0..3).map(|i| b[i].inner(&s.u[i])).sum();
        let rhs = s.u[2].inner(&s.theta);
        assert!((lhs - rhs).abs() < 1e-12 * s.u[2].norm() * s.theta.norm());
    }

    #[test]
    fn energy_identity() {
        let g = grid(16);
        let p = params(&g, 2.0);
        let s = random_state(&g, 21);
        let t = tendency_reference(&s, &p).unwrap();
        let lhs: f64 = (0..3).map(|i| t.du[i].inner(&s.u[i])).sum::<f64>() + t.dtheta.inner(&s.theta);

        let uv = velocity_values(&s.u);
        let th = inverse_transform(&s.theta).unwrap();
        let w = g.volume() / g.len() as f64;
        let grad_u: f64 = s.u.iter().map(|f| f.grad_norm_sq()).sum();
        let l6: f64 = (0..g.len())
            .map(|k| (uv[0][k].powi(2) + uv[1][k].powi(2) + uv[2][k].powi(2)).powi(3))
            .sum::<f64>()
            * w;
        let coupling = quadrature_inner(&th, &uv[2], &g);
        let rhs = -p.nu * grad_u - p.kappa * s.theta.grad_norm_sq() - p.a * l6 + 2.0 * coupling;
        assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn tendencies_keep_parity_and_solenoidality() {
        let g = grid(16);
        let p = params(&g, 1.5);
        let s = random_state(&g, 2);
        let t = tendency_reference(&s, &p).unwrap();
        for (f, par) in t.du.iter().zip(VELOCITY_PARITY) {
            assert_eq!(f.parity(), par);
            let proj = crate::spectral::parity_project(f, par);
            assert!(proj.sub(f).max_abs() < 1e-15);
        }
        let proj = crate::spectral::parity_project(&t.dtheta, Parity::OddInZ);
        assert!(proj.sub(&t.dtheta).max_abs() < 1e-15);
        let scale = t.du.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
        assert!(divergence(&t.du).max_abs() < 1e-12 * scale * 30.0);
    }

    #[test]
    fn nudging_vanishes_on_perfect_sync() {
        let g = grid(8);
        let p = params(&g, 2.0);
        let s = random_state(&g, 3);
        let lowpass = |f: &SpectralField| Ok(f.clone());
        let obs = [s.u[0].clone(), s.u[1].clone()];
        let a = tendency_nudged(&s, &obs, &p, 10.0, lowpass).unwrap();
        let b = tendency_reference(&s, &p).unwrap();
        for (x, y) in a.fields().iter().zip(b.fields()) {
            assert_eq!(x.coeffs(), y.coeffs());
        }
        assert_eq!(
            tendency_nudged(&s, &obs, &p, 0.0, lowpass).unwrap_err(),
            ModelError::NonPositiveMu(0.0)
        );
    }

    #[test]
    fn hydrostatic_pressure() {
        let g = grid(8);
        let p = params(&g, 2.0);
        let mut s = State::zeros(&g);
        s.theta = forward_transform(&g.sample(|_, _, z| (PI * z).sin()), Parity::OddInZ, &g).unwrap();
        let pr = recover_pressure(&s, &p).unwrap();
        assert_eq!(pr.parity(), Parity::EvenInZ);
        let v = inverse_transform(&pr).unwrap();
        let expect = g.sample(|_, _, z| -(PI * z).cos() / PI);
        for (a, b) in v.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(recover_pressure(&State::zeros(&g), &p).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn restored_pressure_gradient_is_divergence_free_residual() {
        // ∇·(F − ∇p) = 0 where F is the unprojected momentum forcing
        let g = grid(16);
        let p = params(&g, 2.0);
        let s = random_state(&g, 8);
        let pr = recover_pressure(&s, &p).unwrap();
        let adv = advect_velocity_unprojected(&s.u, &s.u);
        let damp = forchheimer(&s.u, p.a, p.alpha);
        let (px, py, pz) = crate::spectral::gradient(&pr);
        let grad = [px, py, pz];
        let mut f: [SpectralField; 3] = std::array::from_fn(|i| adv[i].add(&damp[i]).scaled(-1.0));
        f[2].axpy(1.0, &s.theta);
        let full: [SpectralField; 3] = std::array::from_fn(|i| f[i].sub(&grad[i]));
        let scale = f.iter().map(|x| x.max_abs()).fold(0.0, f64::max);
        assert!(divergence(&full).max_abs() < 1e-10 * scale);
    }

    #[test]
    fn conduction_profile_maps_to_zero() {
        let g = grid(8);
        let t = sample_half_domain(&g, |_, _, z| 1.0 - z);
        let th = conduction_shift(&t, &g).unwrap();
        assert!(th.max_abs() < 1e-16);

        let t = sample_half_domain(&g, |_, _, z| 1.0 - z + 0.1 * (PI * z).sin());
        let th = conduction_shift(&t, &g).unwrap();
        assert!((th.mode(0, 0, 1) - Complex64::new(0.0, -0.05)).norm() < 1e-15);
        let back = conduction_unshift(&th).unwrap();
        for (a, b) in back.iter().zip(&t) {
            assert!((a - b).abs() < 1e-14);
        }

        let mut bad = sample_half_domain(&g, |_, _, z| 1.0 - z);
        bad[0] = 0.9;
        assert!(matches!(
            conduction_shift(&bad, &g),
            Err(ModelError::BoundaryValue { .. })
        ));
    }

    #[test]
    fn shift_roundtrip_on_random_admissible_temperature() {
        let g = grid(16);
        let mut rng = stream_rng(17, 0);
        let th = admissible_theta(&g, 0.8, 2, &mut rng).unwrap();
        let t = conduction_unshift(&th).unwrap();
        let th2 = conduction_shift(&t, &g).unwrap();
        let t2 = conduction_unshift(&th2).unwrap();
        for (a, b) in t.iter().zip(&t2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn params_validation_and_hash() {
        let g = grid(8);
        assert!(PhysicalParams::new(1.0, 1.0, 1.0, -1.0, &g).is_err());
        assert!(PhysicalParams::new(0.0, 1.0, 1.0, 2.0, &g).is_err());
        let a = params(&g, 2.0);
        let b = params(&g, 1.5);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), params(&g, 2.0).hash());
        assert!((a.lambda - PI * PI).abs() < 1e-14);
    }
}
