//! Discrete Weyl quantization on the periodic box.
//!
//! The midpoint-rule Weyl kernel becomes an exact finite Weyl system when
//! the quantization x-grid holds an integer number of Planck cells:
//! mq = (2L)²/(2πħ) = 2L²/(πħ). Under that commensurability the kernel
//! ξ-sums are plain FFTs, constants quantize to the exact identity, ξ·I
//! quantizes to ħ×(spectral derivative), and `weyl_dequantize` inverts
//! `weyl_quantize` to machine precision for band-limited symbols. Boxes are
//! therefore chosen as L = sqrt(πK/2) for integer K, making mq = K/ħ an
//! integer for every dyadic ħ.
//!
//! Matrix layout: row index a*m + i (grid node a, vector component i).

use crate::error::{LabError, Result};
use crate::fft;
use crate::grid::{MatrixSymbol, PhaseGrid};
use faer::complex_native::c64;
use faer::{Mat, Side};
use num_complex::Complex64 as C64;

/// Hard cap on the dense operator dimension m·mq.
pub const MAX_OPERATOR_DIM: usize = 8192;

/// Dimension up to which operator norms use a dense eigendecomposition;
/// larger operators fall back to power iteration on A*A.
const DENSE_NORM_DIM: usize = 1024;

/// Relative tolerance of the power-iteration fallback.
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 5000;

/// Number of Planck cells 2L²/(πħ) in the box [−L,L)².
pub fn planck_cells(l: f64, hbar: f64) -> f64 {
    2.0 * l * l / (std::f64::consts::PI * hbar)
}

/// Box half-width L = sqrt(πK/2), for which mq = K/ħ is an integer for
/// every dyadic ħ (K a positive integer).
pub fn commensurate_half_width(k: usize) -> f64 {
    (std::f64::consts::PI * k as f64 / 2.0).sqrt()
}

/// A Weyl-quantized symbol: a dense (m·mq)×(m·mq) matrix acting on
/// vector-valued grid functions on the mq-point x-grid, plus the metadata
/// needed to dequantize back to the original symbol grid.
#[derive(Debug)]
pub struct QuantizedOperator {
    /// Symbol grid the operator came from (dequantization target).
    pub grid: PhaseGrid,
    pub m: usize,
    pub hbar: f64,
    /// Quantization x-grid size (= Planck cells in the box).
    pub mq: usize,
    pub mat: Mat<c64>,
}

impl QuantizedOperator {
    #[inline]
    pub fn dim(&self) -> usize {
        self.m * self.mq
    }

    pub fn mul(&self, o: &QuantizedOperator) -> QuantizedOperator {
        assert_eq!(self.dim(), o.dim());
        QuantizedOperator {
            grid: self.grid,
            m: self.m,
            hbar: self.hbar,
            mq: self.mq,
            mat: &self.mat * &o.mat,
        }
    }

    pub fn add(&self, o: &QuantizedOperator) -> QuantizedOperator {
        assert_eq!(self.dim(), o.dim());
        QuantizedOperator {
            grid: self.grid,
            m: self.m,
            hbar: self.hbar,
            mq: self.mq,
            mat: &self.mat + &o.mat,
        }
    }

    pub fn sub(&self, o: &QuantizedOperator) -> QuantizedOperator {
        assert_eq!(self.dim(), o.dim());
        QuantizedOperator {
            grid: self.grid,
            m: self.m,
            hbar: self.hbar,
            mq: self.mq,
            mat: &self.mat - &o.mat,
        }
    }

    pub fn scale(&self, c: C64) -> QuantizedOperator {
        let f = c64::new(c.re, c.im);
        QuantizedOperator {
            grid: self.grid,
            m: self.m,
            hbar: self.hbar,
            mq: self.mq,
            mat: Mat::from_fn(self.dim(), self.dim(), |r, s| self.mat.read(r, s) * f),
        }
    }

    /// max |(A − A*)_{rs}| — hermiticity defect of the matrix.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for r in 0..n {
            for s in r..n {
                let d = self.mat.read(r, s) - self.mat.read(s, r).conj();
                worst = worst.max((d.re * d.re + d.im * d.im).sqrt());
            }
        }
        worst
    }

    /// L²(ℝ)→L² operator norm (the uniform grid measure makes the ℓ²
    /// matrix norm equal to it).
    pub fn operator_norm(&self) -> f64 {
        operator_norm(&self.mat)
    }
}

/// Largest singular value of a square complex matrix.
pub fn operator_norm(a: &Mat<c64>) -> f64 {
    let n = a.nrows();
    if n <= DENSE_NORM_DIM {
        let ata = a.adjoint() * a;
        let evd = ata.selfadjoint_eigendecomposition(Side::Lower);
        let s = evd.s().column_vector();
        let mut top = 0.0f64;
        for i in 0..n {
            top = top.max(s.read(i).re);
        }
        top.max(0.0).sqrt()
    } else {
        // power iteration on A*A with a deterministic start vector
        let mut x = Mat::from_fn(n, 1, |i, _| {
            c64::new((0.37 * i as f64 + 0.1).sin(), (0.11 * i as f64).cos())
        });
        let mut rho_prev = 0.0f64;
        let mut rho = 0.0f64;
        for _ in 0..POWER_MAX_ITERS {
            let y = a * &x;
            let z = a.adjoint() * &y;
            let mut nz = 0.0f64;
            let mut xz = c64::new(0.0, 0.0);
            for i in 0..n {
                let zi = z.read(i, 0);
                nz += zi.re * zi.re + zi.im * zi.im;
                xz += x.read(i, 0).conj() * zi;
            }
            let nx: f64 = (0..n)
                .map(|i| {
                    let xi = x.read(i, 0);
                    xi.re * xi.re + xi.im * xi.im
                })
                .sum();
            rho = xz.re / nx; // Rayleigh quotient for A*A
            let nzs = nz.sqrt();
            if nzs == 0.0 {
                return 0.0;
            }
            let inv = c64::new(1.0 / nzs, 0.0);
            x = Mat::from_fn(n, 1, |i, _| z.read(i, 0) * inv);
            if (rho - rho_prev).abs() <= POWER_TOL * rho.abs().max(1e-300) {
                break;
            }
            rho_prev = rho;
        }
        rho.max(0.0).sqrt()
    }
}

/// Commensurate quantization grid size for (L, ħ), or an error when the box
/// does not hold an integer, even number of Planck cells.
pub fn quantization_grid(l: f64, hbar: f64) -> Result<usize> {
    let n = planck_cells(l, hbar);
    let mq = n.round() as i64;
    if mq < 4 || (n - mq as f64).abs() > 1e-6 * n.max(1.0) {
        return Err(LabError::Config(format!(
            "box L={l:.6} holds {n:.6} Planck cells at hbar={hbar:.3e}; \
             an integer count >= 4 is required (choose L = sqrt(pi*K/2))"
        )));
    }
    if mq % 2 != 0 {
        return Err(LabError::Config(format!(
            "Planck-cell count {mq} must be even for the midpoint grid"
        )));
    }
    Ok(mq as usize)
}

/// Weyl-quantize a matrix symbol at a concrete ħ.
pub fn weyl_quantize(sym: &MatrixSymbol, hbar: f64) -> Result<QuantizedOperator> {
    let grid = sym.grid;
    let floor = 2.0 * grid.dx() * grid.dxi() / std::f64::consts::PI;
    if hbar < floor {
        return Err(LabError::Aliasing { hbar, floor });
    }
    let mq = quantization_grid(grid.l, hbar)?;
    let m = sym.m;
    if m * mq > MAX_OPERATOR_DIM {
        return Err(LabError::Config(format!(
            "operator dimension {} exceeds the dense budget {}",
            m * mq,
            MAX_OPERATOR_DIM
        )));
    }
    // Per plane: resample to the (2mq × mq) midpoint grid, then transform the
    // ξ-axis; gh[s][d] is the d-th kernel displacement at midpoint s.
    let mut gh: Vec<Vec<C64>> = Vec::with_capacity(m * m);
    for p in 0..m * m {
        gh.push(plane_displacements(sym.plane(p), grid, mq));
    }
    let mat = Mat::from_fn(m * mq, m * mq, |r, s| {
        let (a, i) = (r / m, r % m);
        let (b, j) = (s / m, s % m);
        let d = (a + mq - b) % mq;
        // torus midpoint: signed displacement representative in (−mq/2, mq/2]
        let dt = if d <= mq / 2 { d as i64 } else { d as i64 - mq as i64 };
        let sigma = (2 * a as i64 - dt).rem_euclid(2 * mq as i64) as usize;
        let v = gh[i * m + j][sigma * mq + d];
        let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
        c64::new(sign * v.re, sign * v.im)
    });
    Ok(QuantizedOperator { grid, m, hbar, mq, mat })
}

/// Resample one symbol plane to the (2mq × mq) midpoint grid and return the
/// ξ-transformed table gh[s*mq + d] = (1/mq) Σ_k A(s, k) e^{2πi dk/mq}.
fn plane_displacements(plane: &[C64], grid: PhaseGrid, mq: usize) -> Vec<C64> {
    let (nx, nxi) = (grid.mx, grid.mxi);
    // x-resample each ξ-column to 2mq points
    let mut half = vec![C64::new(0.0, 0.0); 2 * mq * nxi];
    let mut col = vec![C64::new(0.0, 0.0); nx];
    for k in 0..nxi {
        for ix in 0..nx {
            col[ix] = plane[ix * nxi + k];
        }
        let res = fft::resample(&col, 2 * mq);
        for (s, v) in res.iter().enumerate() {
            half[s * nxi + k] = *v;
        }
    }
    // ξ-resample each midpoint row to mq points, then inverse transform
    let mut gh = vec![C64::new(0.0, 0.0); 2 * mq * mq];
    for s in 0..2 * mq {
        let mut row = fft::resample(&half[s * nxi..(s + 1) * nxi], mq);
        fft::ifft(&mut row);
        gh[s * mq..(s + 1) * mq].copy_from_slice(&row);
    }
    gh
}

/// Invert `weyl_quantize`: recover the symbol on the operator's original
/// symbol grid. Exact (up to roundoff) for operators in the range of
/// `weyl_quantize`; for arbitrary matrices it yields the unique band-limited
/// symbol with the same quantization.
pub fn weyl_dequantize(op: &QuantizedOperator) -> Result<MatrixSymbol> {
    let mq = op.mq;
    let m = op.m;
    let grid = op.grid;
    let mut out = MatrixSymbol::zero(grid, m);
    let pi = std::f64::consts::PI;
    for i in 0..m {
        for j in 0..m {
            // spectrum on the mq×mq grid, from the cyclic displacement diagonals
            let mut spec = vec![C64::new(0.0, 0.0); mq * mq];
            let mut diag = vec![C64::new(0.0, 0.0); mq];
            for d in 0..mq {
                let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
                for a in 0..mq {
                    let b = (a + mq - d) % mq;
                    let v = op.mat.read(a * m + i, b * m + j);
                    diag[a] = C64::new(sign * v.re, sign * v.im);
                }
                fft::fft(&mut diag);
                let q = (mq - d) % mq;
                let dt = if d <= mq / 2 { d as f64 } else { d as f64 - mq as f64 };
                for p in 0..mq {
                    let ptilde = fft::mode_index(p, mq) as f64;
                    let phase = C64::new(0.0, pi * ptilde * dt / mq as f64).exp();
                    spec[p * mq + q] = diag[p] * phase / mq as f64;
                }
            }
            // back to the mq×mq sample grid, then to the symbol grid
            fft::ifft2(&mut spec, mq, mq);
            let scale = (mq * mq) as f64;
            for v in spec.iter_mut() {
                *v *= scale;
            }
            let resampled = resample_plane(&spec, mq, mq, grid.mx, grid.mxi);
            out.plane_mut(i * m + j).copy_from_slice(&resampled);
        }
    }
    Ok(out)
}

/// 2D Fourier resampling of a row-major plane.
fn resample_plane(
    plane: &[C64],
    nx: usize,
    nxi: usize,
    ox: usize,
    oxi: usize,
) -> Vec<C64> {
    // ξ-axis first (contiguous rows), then x-axis
    let mut mid = vec![C64::new(0.0, 0.0); nx * oxi];
    for ix in 0..nx {
        let row = fft::resample(&plane[ix * nxi..(ix + 1) * nxi], oxi);
        mid[ix * oxi..(ix + 1) * oxi].copy_from_slice(&row);
    }
    let mut outp = vec![C64::new(0.0, 0.0); ox * oxi];
    let mut col = vec![C64::new(0.0, 0.0); nx];
    for k in 0..oxi {
        for ix in 0..nx {
            col[ix] = mid[ix * oxi + k];
        }
        let res = fft::resample(&col, ox);
        for (ix, v) in res.iter().enumerate() {
            outp[ix * oxi + k] = *v;
        }
    }
    outp
}
