use rustfft::num_complex::Complex64;

use super::{Parity, SpectralError, SpectralField};

/// Relative size of the zero mode tolerated by the inverse Laplacian.
pub const ZERO_MEAN_TOL: f64 = 1e-12;

/// Symmetric (`EvenInZ`) or antisymmetric (`OddInZ`) part in `q`.
///
/// Returns `(f(q) ± f(-q)) / 2` per coefficient and tags the result.
/// Modes outside the dealias mask are left alone.
pub fn parity_project(field: &SpectralField, parity: Parity) -> SpectralField {
    let grid = field.grid();
    let (nx, ny, nz) = grid.shape();
    let sign = parity.sign();
    let src = field.coeffs();
    let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
    for i in 0..nx {
        for j in 0..ny {
            let base = grid.index(i, j, 0);
            for l in 0..nz {
                let lq = (nz - l) % nz;
                out[base + l] = 0.5 * (src[base + l] + sign * src[base + lq]);
            }
        }
    }
    SpectralField::from_coeffs(grid, parity, out).expect("same grid")
}

/// Zeroes every coefficient outside the dealias mask.
pub fn dealias(field: &SpectralField) -> SpectralField {
    let mut out = field.clone();
    dealias_in_place(&mut out);
    out
}

pub(crate) fn dealias_in_place(field: &mut SpectralField) {
    let grid = std::sync::Arc::clone(field.grid());
    let (kx, ky, kz) = (grid.keep_table(0), grid.keep_table(1), grid.keep_table(2));
    let nz = grid.nz();
    let c = field.coeffs_mut();
    for (idx, v) in c.iter_mut().enumerate() {
        let l = idx % nz;
        let ij = idx / nz;
        let j = ij % grid.ny();
        let i = ij / grid.ny();
        if !(kx[i] && ky[j] && kz[l]) {
            *v = Complex64::new(0.0, 0.0);
        }
    }
}

/// Derivative along one axis: multiplies by `i k_axis`.
pub(crate) fn derivative(field: &SpectralField, axis: usize) -> SpectralField {
    let grid = field.grid();
    let (nx, ny, nz) = grid.shape();
    let k = grid.k_deriv_table(axis);
    let src = field.coeffs();
    let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
    for i in 0..nx {
        for j in 0..ny {
            let base = grid.index(i, j, 0);
            for l in 0..nz {
                let kk = match axis {
                    0 => k[i],
                    1 => k[j],
                    _ => k[l],
                };
                let c = src[base + l];
                out[base + l] = Complex64::new(-kk * c.im, kk * c.re);
            }
        }
    }
    let parity = if axis == 2 {
        field.parity().flipped()
    } else {
        field.parity()
    };
    SpectralField::from_coeffs(grid, parity, out).expect("same grid")
}

/// `(∂x f, ∂y f, ∂z f)`; the `z` derivative flips the parity tag.
pub fn gradient(field: &SpectralField) -> (SpectralField, SpectralField, SpectralField) {
    (
        derivative(field, 0),
        derivative(field, 1),
        derivative(field, 2),
    )
}

/// `Σ_j ∂_j u_j`; tagged with the parity of `∂x u₁`.
pub fn divergence(u: &[SpectralField; 3]) -> SpectralField {
    let grid = u[0].grid();
    let (nx, ny, nz) = grid.shape();
    let k = [
        grid.k_deriv_table(0),
        grid.k_deriv_table(1),
        grid.k_deriv_table(2),
    ];
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    for i in 0..nx {
        for j in 0..ny {
            let base = grid.index(i, j, 0);
            for l in 0..nz {
                let s = k[0][i] * u[0].coeffs()[base + l]
                    + k[1][j] * u[1].coeffs()[base + l]
                    + k[2][l] * u[2].coeffs()[base + l];
                out[base + l] = Complex64::new(-s.im, s.re);
            }
        }
    }
    SpectralField::from_coeffs(grid, u[0].parity(), out).expect("same grid")
}

/// Multiplies by `-|k|²`.
pub fn laplacian(field: &SpectralField) -> SpectralField {
    let grid = field.grid();
    let (nx, ny, nz) = grid.shape();
    let mut out = field.clone();
    let c = out.coeffs_mut();
    for i in 0..nx {
        for j in 0..ny {
            for l in 0..nz {
                c[grid.index(i, j, l)] *= -grid.ksq(i, j, l);
            }
        }
    }
    out
}

/// Solves `Δψ = f` with `ψ` of zero mean.
///
/// Fails if the zero mode of `f` exceeds [`ZERO_MEAN_TOL`] relative to `‖f‖₂`.
pub fn inverse_laplacian_zero_mean(field: &SpectralField) -> Result<SpectralField, SpectralError> {
    let grid = field.grid();
    let norm = field.norm();
    let mean = field.mean().norm() * grid.volume().sqrt();
    if mean > ZERO_MEAN_TOL * norm {
        return Err(SpectralError::NonZeroMean { mean, norm });
    }
    let (nx, ny, nz) = grid.shape();
    let mut out = field.clone();
    let c = out.coeffs_mut();
    c[0] = Complex64::new(0.0, 0.0);
    for i in 0..nx {
        for j in 0..ny {
            for l in 0..nz {
                let k2 = grid.ksq(i, j, l);
                if k2 > 0.0 {
                    c[grid.index(i, j, l)] /= -k2;
                }
            }
        }
    }
    Ok(out)
}

/// Projection onto divergence-free fields: `û ← û − k (k·û)/|k|²`.
///
/// Uses the derivative wavenumbers, so the discrete divergence of the
/// output vanishes to round-off. Modes with `k = 0` pass through.
pub fn leray_project(u: &[SpectralField; 3]) -> [SpectralField; 3] {
    let mut out = u.clone();
    leray_in_place(&mut out);
    out
}

pub(crate) fn leray_in_place(u: &mut [SpectralField; 3]) {
    let grid = std::sync::Arc::clone(u[0].grid());
    let (nx, ny, nz) = grid.shape();
    let kx = grid.k_deriv_table(0);
    let ky = grid.k_deriv_table(1);
    let kz = grid.k_deriv_table(2);
    let [a, b, c] = u;
    let (a, b, c) = (a.coeffs_mut(), b.coeffs_mut(), c.coeffs_mut());
    for i in 0..nx {
        for j in 0..ny {
            let base = grid.index(i, j, 0);
            for l in 0..nz {
                let k = [kx[i], ky[j], kz[l]];
                let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                if k2 == 0.0 {
                    continue;
                }
                let idx = base + l;
                let dot = (k[0] * a[idx] + k[1] * b[idx] + k[2] * c[idx]) / k2;
                a[idx] -= k[0] * dot;
                b[idx] -= k[1] * dot;
                c[idx] -= k[2] * dot;
            }
        }
    }
}
