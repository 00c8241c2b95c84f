use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use super::fft::Fft3;
use super::SpectralError;

/// Default 2/3-rule fraction.
pub const DEFAULT_DEALIAS_FRACTION: f64 = 2.0 / 3.0;

/// Uniform grid on the extended box `[0,L]² × [-1,1)`.
///
/// Physical samples sit at `x_i = iL/nx`, `y_j = jL/ny`, `z_l = -1 + 2l/nz`,
/// stored with `z` fastest: `index = (i * ny + j) * nz + l`. Spectral
/// coefficients use the same layout with FFT ordering of mode numbers
/// (index `i` carries `m = i` for `i < nx/2`, `m = i - nx` otherwise), so the
/// flattened order is m-major, then n, then q.
///
/// Wavevectors are `(2πm/L, 2πn/L, πq)`.
pub struct Grid {
    nx: usize,
    ny: usize,
    nz: usize,
    length: f64,
    dealias_fraction: f64,
    cutoff: [usize; 3],
    // first-derivative wavenumbers; zero on the Nyquist index
    kd: [Vec<f64>; 3],
    // true wavenumbers, squared, for second-order operators
    ksq_axis: [Vec<f64>; 3],
    keep: [Vec<bool>; 3],
    pub(crate) fft: Fft3,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("nz", &self.nz)
            .field("length", &self.length)
            .field("dealias_fraction", &self.dealias_fraction)
            .field("cutoff", &self.cutoff)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.nz == other.nz
            && self.length.to_bits() == other.length.to_bits()
            && self.dealias_fraction.to_bits() == other.dealias_fraction.to_bits()
    }
}

fn mode_number(index: usize, n: usize) -> i64 {
    if index < n / 2 {
        index as i64
    } else {
        index as i64 - n as i64
    }
}

impl Grid {
    /// Builds a grid; dimensions must be even and at least 4, `length > 0`,
    /// and `dealias_fraction` in `(0, 1]`.
    pub fn new(
        nx: usize,
        ny: usize,
        nz: usize,
        length: f64,
        dealias_fraction: f64,
    ) -> Result<Arc<Self>, SpectralError> {
        for (axis, n) in [("nx", nx), ("ny", ny), ("nz", nz)] {
            if n < 4 || n % 2 != 0 {
                return Err(SpectralError::InvalidDimension { axis, value: n });
            }
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(SpectralError::InvalidLength(length));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(SpectralError::InvalidDealiasFraction(dealias_fraction));
        }

        let dims = [nx, ny, nz];
        let base = [2.0 * PI / length, 2.0 * PI / length, PI];
        let mut cutoff = [0usize; 3];
        let mut kd: [Vec<f64>; 3] = Default::default();
        let mut ksq_axis: [Vec<f64>; 3] = Default::default();
        let mut keep: [Vec<bool>; 3] = Default::default();
        for axis in 0..3 {
            let n = dims[axis];
            // small slack so that e.g. 0.5 * 8 / 2 lands on 2, not 1.999..
            let k = (dealias_fraction * (n / 2) as f64 + 1e-9).floor() as usize;
            cutoff[axis] = k.min(n / 2);
            kd[axis] = (0..n)
                .map(|i| {
                    if i == n / 2 {
                        0.0
                    } else {
                        base[axis] * mode_number(i, n) as f64
                    }
                })
                .collect();
            ksq_axis[axis] = (0..n)
                .map(|i| {
                    let k = base[axis] * mode_number(i, n) as f64;
                    k * k
                })
                .collect();
            keep[axis] = (0..n)
                .map(|i| mode_number(i, n).unsigned_abs() as usize <= cutoff[axis])
                .collect();
        }

        Ok(Arc::new(Self {
            nx,
            ny,
            nz,
            length,
            dealias_fraction,
            cutoff,
            kd,
            ksq_axis,
            keep,
            fft: Fft3::new(nx, ny, nz),
        }))
    }

    /// Grid with the default 2/3 dealiasing.
    pub fn with_default_dealias(
        nx: usize,
        ny: usize,
        nz: usize,
        length: f64,
    ) -> Result<Arc<Self>, SpectralError> {
        Self::new(nx, ny, nz, length, DEFAULT_DEALIAS_FRACTION)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Horizontal period `L`.
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }

    /// Largest retained `|m|`, `|n|`, `|q|`.
    pub fn cutoff(&self) -> [usize; 3] {
        self.cutoff
    }

    /// `|Ω| = 2L²`.
    pub fn volume(&self) -> f64 {
        2.0 * self.length * self.length
    }

    /// Smallest physical grid spacing.
    pub fn dx_min(&self) -> f64 {
        let dx = self.length / self.nx as f64;
        let dy = self.length / self.ny as f64;
        let dz = 2.0 / self.nz as f64;
        dx.min(dy).min(dz)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.ny + j) * self.nz + l
    }

    /// Index of the mode `(-m, -n, -q)` given the index triple of `(m, n, q)`.
    #[inline]
    pub fn conjugate_index(&self, i: usize, j: usize, l: usize) -> usize {
        self.index(
            (self.nx - i) % self.nx,
            (self.ny - j) % self.ny,
            (self.nz - l) % self.nz,
        )
    }

    /// Mode numbers `(m, n, q)` for an index triple.
    pub fn mode(&self, i: usize, j: usize, l: usize) -> (i64, i64, i64) {
        (
            mode_number(i, self.nx),
            mode_number(j, self.ny),
            mode_number(l, self.nz),
        )
    }

    /// Flat index of the mode `(m, n, q)`, if representable.
    pub fn mode_index(&self, m: i64, n: i64, q: i64) -> Option<usize> {
        let wrap = |v: i64, n: usize| -> Option<usize> {
            let half = (n / 2) as i64;
            if v < -half || v >= half {
                None
            } else {
                Some(v.rem_euclid(n as i64) as usize)
            }
        };
        Some(self.index(wrap(m, self.nx)?, wrap(n, self.ny)?, wrap(q, self.nz)?))
    }

    /// First-derivative wavenumber along `axis` at `index` (zero at Nyquist).
    #[inline]
    pub fn k_deriv(&self, axis: usize, index: usize) -> f64 {
        self.kd[axis][index]
    }

    pub(crate) fn k_deriv_table(&self, axis: usize) -> &[f64] {
        &self.kd[axis]
    }

    /// `|k|²` of the mode at the index triple (true wavenumbers).
    #[inline]
    pub fn ksq(&self, i: usize, j: usize, l: usize) -> f64 {
        self.ksq_axis[0][i] + self.ksq_axis[1][j] + self.ksq_axis[2][l]
    }

    #[inline]
    pub fn is_retained(&self, i: usize, j: usize, l: usize) -> bool {
        self.keep[0][i] && self.keep[1][j] && self.keep[2][l]
    }

    pub(crate) fn keep_table(&self, axis: usize) -> &[bool] {
        &self.keep[axis]
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.length / self.nx as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.length / self.ny as f64
    }

    pub fn z(&self, l: usize) -> f64 {
        -1.0 + 2.0 * l as f64 / self.nz as f64
    }

    /// Samples a function of `(x, y, z)` on the grid.
    pub fn sample<F: Fn(f64, f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.nx {
            let x = self.x(i);
            for j in 0..self.ny {
                let y = self.y(j);
                for l in 0..self.nz {
                    out.push(f(x, y, self.z(l)));
                }
            }
        }
        out
    }
}

/// Smallest nonzero retained `|k|²`, i.e. `min((2π/L)², π²)` whenever the
/// first modes survive dealiasing.
pub fn compute_lambda(grid: &Grid) -> f64 {
    let mut best = f64::INFINITY;
    for axis in 0..3 {
        if grid.cutoff[axis] >= 1 {
            best = best.min(grid.ksq_axis[axis][1]);
        }
    }
    best
}
