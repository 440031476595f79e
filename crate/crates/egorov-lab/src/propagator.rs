//! Quantum side of Egorov: the unitary group U(t) = e^{−itH^w/ħ} through
//! a dense hermitian eigendecomposition, Heisenberg conjugation of
//! quantized observables, and the block evolutions driven by the
//! compressed generators P_ν^w H^w P_ν^w.

use crate::error::{LabError, Result};
use crate::quantize::{operator_norm, QuantizedOperator};
use faer::complex_native::c64;
use faer::{Mat, Side};
use num_complex::Complex64 as C64;

/// Eigendecomposition must rebuild H^w to this relative accuracy.
pub const RECONSTRUCTION_TOL: f64 = 1e-9;
/// ‖U(t)†U(t) − I‖ budget.
pub const UNITARITY_TOL: f64 = 1e-10;

/// One eigendecomposition per (H, ħ); evolution at any t is then two
/// matrix multiplications. The generator is symmetrized ((A+A†)/2) before
/// decomposing to absorb roundoff-level asymmetry.
pub struct EvolutionCache {
    pub hbar: f64,
    pub h_op: QuantizedOperator,
    /// Eigenvalues of the symmetrized generator, ascending.
    pub eigenvalues: Vec<f64>,
    /// Unitary eigenvector matrix V with H = V diag(λ) V†.
    pub eigenvectors: Mat<c64>,
    /// Measured ‖VDV† − (H+H†)/2‖ / max(1, ‖H‖).
    pub reconstruction_defect: f64,
    /// ‖H − (H+H†)/2‖: the anti-hermitian part of the input, typically
    /// quantization aliasing of a non-band-limited symbol at coarse ħ.
    pub symmetrization_defect: f64,
}

impl EvolutionCache {
    pub fn new(h_op: QuantizedOperator) -> Result<Self> {
        let d = h_op.dim();
        let herm = Mat::<c64>::from_fn(d, d, |i, j| {
            (h_op.mat.read(i, j) + h_op.mat.read(j, i).conj()) * 0.5
        });
        let symmetrization_defect = operator_norm(&(&h_op.mat - &herm));
        let evd = herm.selfadjoint_eigendecomposition(Side::Lower);
        let eigenvalues: Vec<f64> =
            (0..d).map(|k| evd.s().column_vector().read(k).re).collect();
        let eigenvectors = evd.u().to_owned();
        let vd = Mat::<c64>::from_fn(d, d, |i, k| {
            eigenvectors.read(i, k) * c64::new(eigenvalues[k], 0.0)
        });
        let recon = &vd * &eigenvectors.adjoint() - &herm;
        let scale = operator_norm(&herm).max(1.0);
        let reconstruction_defect = operator_norm(&recon) / scale;
        if reconstruction_defect > RECONSTRUCTION_TOL {
            return Err(LabError::Config(format!(
                "eigendecomposition reconstruction defect {reconstruction_defect:.3e} \
                 (generator symmetrization defect {symmetrization_defect:.3e})"
            )));
        }
        let hbar = h_op.hbar;
        // downstream algebra (Heisenberg equation residuals, conserved
        // quantities) must see exactly the generator that was decomposed
        let h_op = QuantizedOperator { mat: herm, ..h_op };
        Ok(EvolutionCache {
            hbar,
            h_op,
            eigenvalues,
            eigenvectors,
            reconstruction_defect,
            symmetrization_defect,
        })
    }

    /// U(t) = V e^{−itD/ħ} V†.
    pub fn evolve(&self, t: f64) -> QuantizedOperator {
        let d = self.h_op.dim();
        // W = V·diag(e^{−itλ/ħ}), then U = W·V†
        let w = Mat::<c64>::from_fn(d, d, |i, k| {
            let phase = -t * self.eigenvalues[k] / self.hbar;
            self.eigenvectors.read(i, k) * c64::new(phase.cos(), phase.sin())
        });
        let mat = &w * &self.eigenvectors.adjoint();
        QuantizedOperator {
            grid: self.h_op.grid,
            m: self.h_op.m,
            hbar: self.hbar,
            mq: self.h_op.mq,
            mat,
        }
    }

    /// Heisenberg observable Q(t) = U(−t) Q^w U(t).
    pub fn heisenberg(&self, q_op: &QuantizedOperator, t: f64) -> QuantizedOperator {
        assert_eq!(q_op.dim(), self.h_op.dim());
        assert_eq!(q_op.hbar, self.hbar);
        let u = self.evolve(t);
        let u_back = self.evolve(-t);
        u_back.mul(q_op).mul(&u)
    }
}

/// Block evolution Q_ν(t) = e^{itG_ν/ħ} P_ν^w Q^w P_ν^w e^{−itG_ν/ħ} with
/// the compressed generator G_ν = P_ν^w H^w P_ν^w. `cache_nu` must have
/// been built from G_ν.
pub fn block_evolution(
    cache_nu: &EvolutionCache,
    q_op: &QuantizedOperator,
    p_nu_op: &QuantizedOperator,
    t: f64,
) -> QuantizedOperator {
    let compressed = p_nu_op.mul(q_op).mul(p_nu_op);
    cache_nu.heisenberg(&compressed, t)
}

/// The compressed generator P_ν^w H^w P_ν^w, symmetrized.
pub fn compressed_generator(
    h_op: &QuantizedOperator,
    p_nu_op: &QuantizedOperator,
) -> QuantizedOperator {
    let g = p_nu_op.mul(h_op).mul(p_nu_op);
    let d = g.dim();
    let mat = Mat::<c64>::from_fn(d, d, |i, j| {
        (g.mat.read(i, j) + g.mat.read(j, i).conj()) * 0.5
    });
    QuantizedOperator { grid: g.grid, m: g.m, hbar: g.hbar, mq: g.mq, mat }
}

/// ‖A − I‖ for a square operator matrix.
pub fn identity_defect(op: &QuantizedOperator) -> f64 {
    let d = op.dim();
    let diff = Mat::<c64>::from_fn(d, d, |i, j| {
        let e = if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) };
        op.mat.read(i, j) - e
    });
    operator_norm(&diff)
}

/// Centered-difference Heisenberg ODE residual
/// ‖(Q(t+dt) − Q(t−dt))/(2dt) − (i/ħ)[H^w, Q(t)]‖ at one time.
pub fn heisenberg_ode_residual(
    cache: &EvolutionCache,
    q_op: &QuantizedOperator,
    t: f64,
    dt: f64,
) -> f64 {
    let qp = cache.heisenberg(q_op, t + dt);
    let qm = cache.heisenberg(q_op, t - dt);
    let qt = cache.heisenberg(q_op, t);
    let fd = qp.sub(&qm).scale(C64::new(0.5 / dt, 0.0));
    let comm = cache.h_op.mul(&qt).sub(&qt.mul(&cache.h_op));
    let rhs = comm.scale(C64::new(0.0, 1.0 / cache.hbar));
    fd.sub(&rhs).operator_norm()
}
