//! FFT plumbing shared by spectral derivatives, interpolation and
//! quantization: cached rustfft plans, 2D transforms on row-major planes,
//! and Fourier resampling.

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

struct PlanCache {
    plans: Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>,
}

fn cache() -> &'static PlanCache {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    CACHE.get_or_init(|| PlanCache { plans: Mutex::new(HashMap::new()) })
}

pub fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut plans = cache().plans.lock().unwrap();
    plans
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// Forward FFT in place (unnormalized, rustfft convention).
pub fn fft(buf: &mut [C64]) {
    plan(buf.len(), false).process(buf);
}

/// Inverse FFT in place, normalized by 1/N so ifft(fft(x)) = x.
pub fn ifft(buf: &mut [C64]) {
    plan(buf.len(), true).process(buf);
    let n = buf.len() as f64;
    for v in buf.iter_mut() {
        *v /= n;
    }
}

/// Signed mode index for FFT bin k of an n-point transform:
/// 0,1,..,n/2−1,−n/2,..,−1.
#[inline]
pub fn mode_index(k: usize, n: usize) -> i64 {
    if k <= n / 2 - 1 || n == 1 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// 2D FFT of a row-major plane with dims (nx, nxi), idx = ix*nxi + ixi.
/// Rows (xi direction) are contiguous.
pub fn fft2(plane: &mut [C64], nx: usize, nxi: usize) {
    debug_assert_eq!(plane.len(), nx * nxi);
    for row in plane.chunks_exact_mut(nxi) {
        fft(row);
    }
    let mut col = vec![C64::new(0.0, 0.0); nx];
    for j in 0..nxi {
        for i in 0..nx {
            col[i] = plane[i * nxi + j];
        }
        fft(&mut col);
        for i in 0..nx {
            plane[i * nxi + j] = col[i];
        }
    }
}

/// Inverse of `fft2` (normalized).
pub fn ifft2(plane: &mut [C64], nx: usize, nxi: usize) {
    debug_assert_eq!(plane.len(), nx * nxi);
    for row in plane.chunks_exact_mut(nxi) {
        ifft(row);
    }
    let mut col = vec![C64::new(0.0, 0.0); nx];
    for j in 0..nxi {
        for i in 0..nx {
            col[i] = plane[i * nxi + j];
        }
        ifft(&mut col);
        for i in 0..nx {
            plane[i * nxi + j] = col[i];
        }
    }
}

/// Fourier resampling of a periodic sequence from n to n_out points
/// (zero-padding or spectral truncation; both ends must be even or 1).
/// Sample k of the output corresponds to position k/n_out of the period.
pub fn resample(input: &[C64], n_out: usize) -> Vec<C64> {
    let n = input.len();
    if n == n_out {
        return input.to_vec();
    }
    let mut spec = input.to_vec();
    fft(&mut spec);
    let mut out_spec = vec![C64::new(0.0, 0.0); n_out];
    let keep = n.min(n_out);
    let half = keep / 2;
    for k in 0..half {
        out_spec[k] = spec[k];
    }
    for k in 1..=half {
        out_spec[n_out - k] = spec[n - k];
    }
    if n_out > n {
        // split the Nyquist mode symmetrically to keep real data real
        let ny = spec[half];
        out_spec[half] = 0.5 * ny;
        out_spec[n_out - half] = 0.5 * ny;
    } else {
        // downsampling: the old ±half modes both alias onto the coarse
        // Nyquist bin (sampling semantics; makes down∘up the identity)
        out_spec[half] += spec[half];
    }
    ifft(&mut out_spec);
    let scale = n_out as f64 / n as f64;
    for v in out_spec.iter_mut() {
        *v *= scale;
    }
    out_spec
}
