//! Weyl quantization round trip.
//!
//! Quantizes a matrix symbol at several commensurate ħ, dequantizes it
//! back, and reports the round-trip defect, hermiticity preservation, and
//! the operator-vs-symbol norm comparison. Also shows the operator
//! dimension bookkeeping: mq = K/ħ states on a box of half-width
//! L = sqrt(πK/2).
//!
//! Run with: cargo run --release --example quantization_roundtrip

use egorov_lab::grid::{MatrixSymbol, PhaseGrid};
use egorov_lab::quantize::{
    commensurate_half_width, planck_cells, weyl_dequantize, weyl_quantize,
};
use egorov_lab::smallmat::SmallMat;
use num_complex::Complex64 as C64;

fn main() -> egorov_lab::Result<()> {
    let k = 2;
    let g = PhaseGrid::new(commensurate_half_width(k), 64, 64);
    let w = std::f64::consts::PI / g.l;
    let sym = MatrixSymbol::from_fn(g, 2, move |x, xi| {
        let env = (0.5 + 0.5 * (w * x).cos()).powi(2) * (0.5 + 0.5 * (w * xi).cos()).powi(2);
        let mut m = SmallMat::zero(2);
        m[(0, 0)] = C64::new(1.0 + env * (w * x).cos(), 0.0);
        m[(1, 1)] = C64::new(1.0 - env * (w * xi).cos(), 0.0);
        m[(0, 1)] = C64::new(0.4 * env, 0.2 * env * (w * x).sin());
        m[(1, 0)] = m[(0, 1)].conj();
        m
    });
    println!(
        "symbol: m = {}, sup norm {:.4}, hermitian defect {:.2e}",
        sym.m,
        sym.sup_norm(),
        sym.hermitian_defect()
    );

    for &hbar in &[0.25, 0.125, 0.0625, 0.03125] {
        let op = weyl_quantize(&sym, hbar)?;
        let back = weyl_dequantize(&op)?;
        let defect = back.sub(&sym).sup_norm();
        println!(
            "hbar = {hbar:<8} dim = {:>4}  planck cells = {:>6.0}  roundtrip = {:.3e}  \
             herm defect = {:.3e}  |Op| = {:.4}",
            op.dim(),
            planck_cells(g.l, hbar),
            defect,
            op.hermitian_defect(),
            op.operator_norm()
        );
    }
    Ok(())
}
