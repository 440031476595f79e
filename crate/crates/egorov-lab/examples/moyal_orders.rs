//! Moyal star-product truncation orders.
//!
//! Builds two band-limited hermitian 2×2 symbols, truncates their star
//! product at orders N = 0, 1, 2, and measures the remainder against the
//! operator-side exact product over a dyadic ħ sweep. The fitted slopes
//! of log‖R_N‖ against log ħ should land on N+1.
//!
//! Run with: cargo run --release --example moyal_orders

use egorov_lab::fitting::fit_order;
use egorov_lab::grid::{MatrixSymbol, PhaseGrid, SemiclassicalSymbol};
use egorov_lab::moyal::star_remainder;
use egorov_lab::quantize::commensurate_half_width;
use egorov_lab::smallmat::SmallMat;
use num_complex::Complex64 as C64;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// A band-limited hermitian symbol: trig polynomials have machine-exact
/// spectral derivatives, so the slope fit sees pure ħ-order behaviour.
fn symbol_a(g: PhaseGrid) -> MatrixSymbol {
    let w = std::f64::consts::PI / g.l;
    MatrixSymbol::from_fn(g, 2, move |x, xi| {
        let env = (0.5 + 0.5 * (w * x).cos()) * (0.5 + 0.5 * (w * xi).cos());
        let mut m = SmallMat::zero(2);
        m[(0, 0)] = c(1.0 + 0.7 * env * (w * x).cos());
        m[(1, 1)] = c(-1.0 + 0.4 * env * (w * xi).cos());
        m[(0, 1)] = C64::new(0.5 * env, 0.3 * env * (w * x).sin());
        m[(1, 0)] = m[(0, 1)].conj();
        m
    })
}

fn symbol_b(g: PhaseGrid) -> MatrixSymbol {
    let w = std::f64::consts::PI / g.l;
    MatrixSymbol::from_fn(g, 2, move |x, xi| {
        let env = (0.5 + 0.5 * (w * x).cos()) * (0.5 + 0.5 * (w * xi).cos());
        let mut m = SmallMat::zero(2);
        m[(0, 0)] = c(env * (w * xi).sin());
        m[(1, 1)] = c(0.6 * env * (w * x).sin() * (w * xi).cos());
        m[(0, 1)] = C64::new(0.2 * env, -0.4 * env * (w * xi).cos());
        m[(1, 0)] = m[(0, 1)].conj();
        m
    })
}

fn main() -> egorov_lab::Result<()> {
    let g = PhaseGrid::new(commensurate_half_width(2), 64, 64);
    let p = SemiclassicalSymbol::from_principal(symbol_a(g));
    let q = SemiclassicalSymbol::from_principal(symbol_b(g));
    let hbars: Vec<f64> = (4..=8).map(|k| 2.0f64.powi(-k)).collect();

    println!("star-product remainder orders on a {}x{} grid", g.mx, g.mxi);
    for n in 0..=2usize {
        let mut norms = Vec::new();
        for &hbar in &hbars {
            let (_, norm) = star_remainder(&p, &q, hbar, n)?;
            norms.push(norm);
            println!("  N={n}  hbar=2^{:+}  |R| = {norm:.6e}", hbar.log2() as i32);
        }
        let fit = fit_order(&hbars, &norms, 1e-13)?;
        println!(
            "  N={n}: slope {:.4} (expected {}), r2 = {:.6}\n",
            fit.slope,
            n + 1,
            fit.r2
        );
    }
    Ok(())
}
