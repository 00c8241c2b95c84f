use std::sync::Arc;

use rustfft::num_complex::Complex64;

use super::{Grid, SpectralError};

/// Relative tolerance on the imaginary residue of an inverse transform.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-12;

/// Symmetry of a field under `z -> -z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parity {
    EvenInZ,
    OddInZ,
}

impl Parity {
    pub fn flipped(self) -> Self {
        match self {
            Parity::EvenInZ => Parity::OddInZ,
            Parity::OddInZ => Parity::EvenInZ,
        }
    }

    /// `+1` for even, `-1` for odd.
    pub fn sign(self) -> f64 {
        match self {
            Parity::EvenInZ => 1.0,
            Parity::OddInZ => -1.0,
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Parity::EvenInZ => 0,
            Parity::OddInZ => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Parity::EvenInZ),
            1 => Some(Parity::OddInZ),
            _ => None,
        }
    }
}

/// Complex Fourier coefficients on the extended box, tagged with a parity.
///
/// A field `f` is represented as `f(x) = Σ f̂(m,n,q) exp(i k·x)` with the
/// wavevector `k = (2πm/L, 2πn/L, πq)`. Coefficients of real fields are
/// Hermitian; the parity tag means `f̂(m,n,-q) = ±f̂(m,n,q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    coeffs: Vec<Complex64>,
    parity: Parity,
    grid: Arc<Grid>,
}

impl SpectralField {
    pub fn zeros(grid: &Arc<Grid>, parity: Parity) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
            parity,
            grid: Arc::clone(grid),
        }
    }

    /// Wraps raw coefficients without touching them.
    pub fn from_coeffs(
        grid: &Arc<Grid>,
        parity: Parity,
        coeffs: Vec<Complex64>,
    ) -> Result<Self, SpectralError> {
        if coeffs.len() != grid.len() {
            return Err(SpectralError::ShapeMismatch {
                expected: grid.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self {
            coeffs,
            parity,
            grid: Arc::clone(grid),
        })
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Mutable access; callers restore the invariants with
    /// [`SpectralField::symmetrize`] if they break them.
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Coefficient of mode `(m, n, q)`; zero for unrepresentable modes.
    pub fn mode(&self, m: i64, n: i64, q: i64) -> Complex64 {
        self.grid
            .mode_index(m, n, q)
            .map(|k| self.coeffs[k])
            .unwrap_or_default()
    }

    pub fn set_mode(&mut self, m: i64, n: i64, q: i64, value: Complex64) {
        if let Some(k) = self.grid.mode_index(m, n, q) {
            self.coeffs[k] = value;
        }
    }

    /// Sets `(m,n,q)` and its conjugate partner `(-m,-n,-q)`.
    pub fn set_mode_real(&mut self, m: i64, n: i64, q: i64, value: Complex64) {
        self.set_mode(m, n, q, value);
        self.set_mode(-m, -n, -q, value.conj());
    }

    /// Restores Hermitian symmetry and the parity constraint, then dealiases.
    pub fn symmetrize(&mut self) {
        let g = Arc::clone(&self.grid);
        let (nx, ny, nz) = g.shape();
        let src = self.coeffs.clone();
        let sign = self.parity.sign();
        for i in 0..nx {
            for j in 0..ny {
                for l in 0..nz {
                    let k = g.index(i, j, l);
                    if !g.is_retained(i, j, l) {
                        self.coeffs[k] = Complex64::new(0.0, 0.0);
                        continue;
                    }
                    let kc = g.conjugate_index(i, j, l);
                    let kq = g.index(i, j, (nz - l) % nz);
                    let kcq = g.index((nx - i) % nx, (ny - j) % ny, l);
                    // average over the group {id, conj, z-flip, conj∘z-flip}
                    let v = src[k] + src[kc].conj() + sign * (src[kq] + src[kcq].conj());
                    self.coeffs[k] = 0.25 * v;
                }
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= s);
        out
    }

    /// `self + s * other`, in place.
    pub fn axpy(&mut self, s: f64, other: &SpectralField) {
        debug_assert_eq!(self.coeffs.len(), other.coeffs.len());
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    pub fn sub(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn add(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn with_parity(mut self, parity: Parity) -> Self {
        self.parity = parity;
        self
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// `(f, g)_{L²(Ω)} = |Ω| Re Σ conj(f̂) ĝ`.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        self.grid.volume() * s
    }

    /// `‖f‖²_{L²(Ω)}` by Parseval.
    pub fn norm_sq(&self) -> f64 {
        self.grid.volume() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `‖∇f‖²_{L²(Ω)} = |Ω| Σ |k|² |f̂|²` using derivative wavenumbers.
    pub fn grad_norm_sq(&self) -> f64 {
        let g = &self.grid;
        let (kx, ky, kz) = (g.k_deriv_table(0), g.k_deriv_table(1), g.k_deriv_table(2));
        let (nx, ny, nz) = g.shape();
        let mut s = 0.0;
        for i in 0..nx {
            for j in 0..ny {
                let kh = kx[i] * kx[i] + ky[j] * ky[j];
                let base = g.index(i, j, 0);
                for l in 0..nz {
                    s += (kh + kz[l] * kz[l]) * self.coeffs[base + l].norm_sqr();
                }
            }
        }
        g.volume() * s
    }

    /// Zero-mode (spatial mean) coefficient.
    pub fn mean(&self) -> Complex64 {
        self.coeffs[0]
    }
}

#[inline]
fn z_phase(l: usize) -> f64 {
    // exp(iπq·(-1)) = (-1)^q, and q ≡ l (mod 2) because nz is even
    if l % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Raw forward transform: FFT, `1/N` scaling and the `z`-offset phase.
/// No projection or dealiasing.
pub(crate) fn forward_raw(values: &[f64], grid: &Grid) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    grid.fft.forward(&mut data);
    finish_forward_phase(&mut data, grid);
    data
}

fn finish_forward_phase(data: &mut [Complex64], grid: &Grid) {
    let scale = 1.0 / grid.len() as f64;
    let nz = grid.nz();
    for (k, c) in data.iter_mut().enumerate() {
        *c *= scale * z_phase(k % nz);
    }
}

/// Forward transforms two real arrays with a single complex FFT.
pub(crate) fn forward_raw_pair(a: &[f64], b: &[f64], grid: &Grid) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut z: Vec<Complex64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| Complex64::new(x, y))
        .collect();
    grid.fft.forward(&mut z);
    finish_forward_phase(&mut z, grid);
    let (nx, ny, nz) = grid.shape();
    let mut fa = vec![Complex64::new(0.0, 0.0); z.len()];
    let mut fb = fa.clone();
    for i in 0..nx {
        for j in 0..ny {
            for l in 0..nz {
                let k = grid.index(i, j, l);
                let zc = z[grid.conjugate_index(i, j, l)].conj();
                fa[k] = 0.5 * (z[k] + zc);
                // (Z - conj Z(-k)) / 2i
                let d = z[k] - zc;
                fb[k] = Complex64::new(0.5 * d.im, -0.5 * d.re);
            }
        }
    }
    (fa, fb)
}

/// Parity projection plus dealiasing in one pass.
pub(crate) fn project_and_dealias(coeffs: &[Complex64], parity: Parity, grid: &Grid) -> Vec<Complex64> {
    let (nx, ny, nz) = grid.shape();
    let sign = parity.sign();
    let mut out = vec![Complex64::new(0.0, 0.0); coeffs.len()];
    for i in 0..nx {
        for j in 0..ny {
            let base = grid.index(i, j, 0);
            for l in 0..nz {
                if grid.is_retained(i, j, l) {
                    let lq = (nz - l) % nz;
                    out[base + l] = 0.5 * (coeffs[base + l] + sign * coeffs[base + lq]);
                }
            }
        }
    }
    out
}

fn check_shape(values: &[f64], grid: &Grid) -> Result<(), SpectralError> {
    if values.len() != grid.len() {
        return Err(SpectralError::ShapeMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    Ok(())
}

/// Physical samples to spectral coefficients.
///
/// The result is projected onto `parity` and dealiased, so the round trip
/// through [`inverse_transform`] is the identity exactly on dealiased fields
/// of the given parity.
pub fn forward_transform(
    values: &[f64],
    parity: Parity,
    grid: &Arc<Grid>,
) -> Result<SpectralField, SpectralError> {
    check_shape(values, grid)?;
    let raw = forward_raw(values, grid);
    let coeffs = project_and_dealias(&raw, parity, grid);
    SpectralField::from_coeffs(grid, parity, coeffs)
}

/// Forward transform without projection or dealiasing.
pub fn forward_transform_unfiltered(
    values: &[f64],
    parity: Parity,
    grid: &Arc<Grid>,
) -> Result<SpectralField, SpectralError> {
    check_shape(values, grid)?;
    SpectralField::from_coeffs(grid, parity, forward_raw(values, grid))
}

pub(crate) fn inverse_complex(field: &SpectralField) -> Vec<Complex64> {
    let grid = field.grid();
    let nz = grid.nz();
    let mut data: Vec<Complex64> = field
        .coeffs()
        .iter()
        .enumerate()
        .map(|(k, c)| c * z_phase(k % nz))
        .collect();
    grid.fft.inverse(&mut data);
    data
}

/// Spectral coefficients to physical samples.
///
/// Fails if the imaginary residue exceeds [`IMAGINARY_RESIDUE_TOL`] relative
/// to the largest real sample, which signals broken Hermitian symmetry.
pub fn inverse_transform(field: &SpectralField) -> Result<Vec<f64>, SpectralError> {
    let data = inverse_complex(field);
    let mut re_max = 0.0f64;
    let mut im_max = 0.0f64;
    for c in &data {
        re_max = re_max.max(c.re.abs());
        im_max = im_max.max(c.im.abs());
    }
    if im_max > IMAGINARY_RESIDUE_TOL * re_max.max(f64::MIN_POSITIVE) {
        return Err(SpectralError::ImaginaryResidue {
            residue: im_max,
            scale: re_max,
        });
    }
    Ok(data.into_iter().map(|c| c.re).collect())
}

/// Inverse transforms two real fields with one complex FFT. No residue check.
pub(crate) fn inverse_pair(a: &SpectralField, b: &SpectralField) -> (Vec<f64>, Vec<f64>) {
    let grid = a.grid();
    let nz = grid.nz();
    let mut data: Vec<Complex64> = a
        .coeffs()
        .iter()
        .zip(b.coeffs())
        .enumerate()
        .map(|(k, (x, y))| {
            // x + i y
            Complex64::new(x.re - y.im, x.im + y.re) * z_phase(k % nz)
        })
        .collect();
    grid.fft.inverse(&mut data);
    data.into_iter().map(|c| (c.re, c.im)).unzip()
}

/// Inverse transforms a list of real fields, two per FFT.
pub(crate) fn inverse_many(fields: &[&SpectralField]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(fields.len());
    let mut it = fields.chunks(2);
    for chunk in &mut it {
        match chunk {
            [a, b] => {
                let (x, y) = inverse_pair(a, b);
                out.push(x);
                out.push(y);
            }
            [a] => out.push(inverse_complex(a).into_iter().map(|c| c.re).collect()),
            _ => unreachable!(),
        }
    }
    out
}

/// Forward transforms real arrays two at a time, then applies parity
/// projection and dealiasing with the given parities.
pub(crate) fn forward_many(
    values: &[&[f64]],
    parities: &[Parity],
    grid: &Arc<Grid>,
) -> Vec<SpectralField> {
    debug_assert_eq!(values.len(), parities.len());
    let mut out = Vec::with_capacity(values.len());
    let mut idx = 0;
    while idx < values.len() {
        if idx + 1 < values.len() {
            let (fa, fb) = forward_raw_pair(values[idx], values[idx + 1], grid);
            for (raw, p) in [(fa, parities[idx]), (fb, parities[idx + 1])] {
                let c = project_and_dealias(&raw, p, grid);
                out.push(SpectralField {
                    coeffs: c,
                    parity: p,
                    grid: Arc::clone(grid),
                });
            }
            idx += 2;
        } else {
            let raw = forward_raw(values[idx], grid);
            let c = project_and_dealias(&raw, parities[idx], grid);
            out.push(SpectralField {
                coeffs: c,
                parity: parities[idx],
                grid: Arc::clone(grid),
            });
            idx += 1;
        }
    }
    out
}

/// `‖f‖²` by uniform-grid quadrature of physical samples.
pub fn quadrature_norm_sq(values: &[f64], grid: &Grid) -> f64 {
    grid.volume() / grid.len() as f64 * values.iter().map(|v| v * v).sum::<f64>()
}

/// `∫ f g dx` by uniform-grid quadrature.
pub fn quadrature_inner(a: &[f64], b: &[f64], grid: &Grid) -> f64 {
    grid.volume() / grid.len() as f64 * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}
