//! Hamiltonian flow and transport cocycle.
//!
//! Integrates the flow of a windowed harmonic oscillator together with its
//! Jacobian and the unitary transport T(t) generated by a hermitian H₁.
//! Checks the known rotation against the numerics, the symplectic defect
//! of ∇φ^t, unitarity of T, the cocycle inverse T(−t, φ^t x) = T(t, x)⁻¹,
//! and compares the a-priori Jacobian growth bound Γ with the measured
//! growth rate.
//!
//! Run with: cargo run --release --example flow_and_transport

use egorov_lab::dynamics::{
    gamma_bound, integrate_trajectory, measured_gamma, ScalarFlow, STORE_DT,
};
use egorov_lab::grid::{MatrixSymbol, PhaseGrid};
use egorov_lab::interp::MatrixInterpolant;
use egorov_lab::quantize::commensurate_half_width;
use egorov_lab::smallmat::SmallMat;
use egorov_lab::window::plateau_xy;
use num_complex::Complex64 as C64;

fn main() -> egorov_lab::Result<()> {
    let g = PhaseGrid::new(commensurate_half_width(2), 128, 128);
    let (r1, r2) = (0.40 * g.l, 0.82 * g.l);
    // λ = (x²+ξ²)/2 inside the plateau window: the flow there is the
    // clockwise rotation by angle t
    let lam = MatrixSymbol::scalar_from_fn(g, move |x, xi| {
        C64::new(plateau_xy(x, xi, r1, r2) * 0.5 * (x * x + xi * xi), 0.0)
    });
    let flow = ScalarFlow::new(&lam)?;

    let w = std::f64::consts::PI / g.l;
    let h1 = MatrixSymbol::from_fn(g, 2, move |x, xi| {
        let v = plateau_xy(x, xi, r1, r2);
        let mut m = SmallMat::zero(2);
        m[(0, 0)] = C64::new(0.3 * v * (w * x).sin(), 0.0);
        m[(1, 1)] = C64::new(-0.3 * v * (w * x).sin(), 0.0);
        m[(0, 1)] = C64::new(0.5 * v, -0.2 * v * (w * xi).sin());
        m[(1, 0)] = m[(0, 1)].conj();
        m
    });
    let h1i = MatrixInterpolant::new(&h1);

    let (x0, xi0, t) = (0.35, -0.2, 2.0);
    let tr = integrate_trajectory(&flow, Some(&h1i), 2, x0, xi0, t, STORE_DT)?;
    let f = tr.final_state();
    let (ct, st) = (t.cos(), t.sin());
    println!(
        "rotation check at t = {t}: flow err ({:.2e}, {:.2e})",
        (f.x - (x0 * ct + xi0 * st)).abs(),
        (f.xi - (-x0 * st + xi0 * ct)).abs()
    );
    println!("symplectic drift  |det grad phi - 1| = {:.3e}", tr.symplectic_drift);
    println!("transport drift   |T T* - I|         = {:.3e}", tr.unitarity_drift);

    // cocycle: integrate backward from the (off-grid) endpoint
    let bwd = integrate_trajectory(&flow, Some(&h1i), 2, f.x, f.xi, -t, STORE_DT)?;
    let cocycle = bwd.final_state().t.sub(&f.t.adjoint()).frob_norm();
    println!("cocycle defect    |T(-t, phi^t x) - T(t, x)^-1| = {:.3e}", cocycle);

    let gamma = gamma_bound(&lam)?;
    let starts: Vec<(f64, f64)> = (0..8)
        .map(|i| {
            let a = i as f64 * std::f64::consts::FRAC_PI_4;
            (0.5 * a.cos(), 0.5 * a.sin())
        })
        .collect();
    let measured = measured_gamma(&flow, &starts, 4.0)?;
    println!("Jacobian growth: bound Gamma = {gamma:.4}, measured rate = {measured:.4}");
    Ok(())
}
