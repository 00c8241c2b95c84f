use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

// Lines handed to one rayon task. Results do not depend on the split.
const LINES_PER_TASK: usize = 64;

/// Unnormalized 3D complex FFT over a `(nx, ny, nz)` array, `z` fastest.
pub(crate) struct Fft3 {
    dims: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub(crate) fn new(nx: usize, ny: usize, nz: usize) -> Self {
        let mut planner = FftPlanner::new();
        let dims = [nx, ny, nz];
        let forward = dims.map(|n| planner.plan_fft_forward(n));
        let inverse = dims.map(|n| planner.plan_fft_inverse(n));
        Self {
            dims,
            forward,
            inverse,
        }
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [nx, ny, nz] = self.dims;
        debug_assert_eq!(data.len(), nx * ny * nz);

        // z: contiguous lines
        batch(data, &plans[2], nz);

        // y: transpose each x-slab to (nz, ny), transform, transpose back
        let slab = ny * nz;
        let plan_y = &plans[1];
        data.par_chunks_mut(slab).for_each_init(
            || {
                (
                    vec![ZERO; slab],
                    vec![ZERO; plan_y.get_inplace_scratch_len()],
                )
            },
            |(buf, scratch), chunk| {
                for j in 0..ny {
                    for l in 0..nz {
                        buf[l * ny + j] = chunk[j * nz + l];
                    }
                }
                plan_y.process_with_scratch(buf, scratch);
                for j in 0..ny {
                    for l in 0..nz {
                        chunk[j * nz + l] = buf[l * ny + j];
                    }
                }
            },
        );

        // x: full transpose to (ny*nz, nx)
        let rest = ny * nz;
        let mut t = vec![ZERO; data.len()];
        for i in 0..nx {
            let row = &data[i * rest..(i + 1) * rest];
            for (r, v) in row.iter().enumerate() {
                t[r * nx + i] = *v;
            }
        }
        batch(&mut t, &plans[0], nx);
        for i in 0..nx {
            let row = &mut data[i * rest..(i + 1) * rest];
            for (r, v) in row.iter_mut().enumerate() {
                *v = t[r * nx + i];
            }
        }
    }
}

fn batch(data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>, n: usize) {
    let scratch_len = plan.get_inplace_scratch_len();
    data.par_chunks_mut(n * LINES_PER_TASK).for_each_init(
        || vec![ZERO; scratch_len],
        |scratch, chunk| plan.process_with_scratch(chunk, scratch),
    );
}
