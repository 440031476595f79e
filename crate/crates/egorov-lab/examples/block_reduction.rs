//! Block reduction of the Heisenberg evolution.
//!
//! For the two-branch Pauli model, evolves a block-diagonal observable
//! both with the full propagator and block-by-block with the compressed
//! generators G_ν = P_ν^w H^w P_ν^w built from exactly corrected spectral
//! projections. The defect ‖Q(t) − Σ_ν Q_ν(t)‖ must vanish at order
//! ħ^{J+1}, and the evolved blocks must stay inside ran P_ν (the exact
//! correction commutes with its own generator).
//!
//! Run with: cargo run --release --example block_reduction

use egorov_lab::fitting::fit_order;
use egorov_lab::grid::{MatrixSymbol, OrderFunction, PhaseGrid, SemiclassicalSymbol};
use egorov_lab::projections::{
    block_diagonal_part, eigen_structure, exact_projection_correction,
    semiclassical_projection, ProjectionFamily,
};
use egorov_lab::propagator::{block_evolution, compressed_generator, EvolutionCache};
use egorov_lab::quantize::{commensurate_half_width, weyl_quantize};
use egorov_lab::smallmat::SmallMat;
use num_complex::Complex64 as C64;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn main() -> egorov_lab::Result<()> {
    let g = PhaseGrid::new(commensurate_half_width(2), 64, 64);
    let w = std::f64::consts::PI / g.l;
    let h0 = MatrixSymbol::from_fn(g, 2, move |x, xi| {
        let v = (0.5 + 0.5 * (w * x).cos()).powi(4) * (0.5 + 0.5 * (w * xi).cos()).powi(4);
        let av = 1.1 + 0.25 * v * (w * x).cos() * (w * xi).cos();
        let bv = 0.5 + 0.2 * v * (w * x).sin() * (w * xi).cos();
        let mut m = SmallMat::zero(2);
        m[(0, 0)] = c(av);
        m[(1, 1)] = c(-av);
        m[(0, 1)] = c(bv);
        m[(1, 0)] = c(bv);
        m
    });
    let h = SemiclassicalSymbol::from_principal(h0);
    let seed = MatrixSymbol::from_fn(g, 2, move |x, xi| {
        let b = (0.5 + 0.5 * (w * x).cos()).powi(6) * (0.5 + 0.5 * (w * xi).cos()).powi(6);
        let mut m = SmallMat::zero(2);
        m[(0, 0)] = c(b);
        m[(1, 1)] = c(-b);
        m[(0, 1)] = C64::new(0.3 * b, 0.2 * b);
        m[(1, 0)] = m[(0, 1)].conj();
        m
    });

    let j = 1;
    let es = eigen_structure(&h.term(0), &OrderFunction::ConstantOne, 1.0)?;
    let families: Vec<ProjectionFamily> = (0..es.l)
        .map(|nu| semiclassical_projection(&h, &es, nu, j))
        .collect::<egorov_lab::Result<_>>()?;
    let q = block_diagonal_part(&SemiclassicalSymbol::from_principal(seed), &families, j)?;

    let hbars: Vec<f64> = (4..=7).map(|k| 2.0f64.powi(-k)).collect();
    let times = [1.0, 2.0, 4.0];
    let mut residuals: Vec<Vec<f64>> = vec![Vec::new(); times.len()];
    for &hbar in &hbars {
        let h_op = weyl_quantize(&h.eval(hbar), hbar)?;
        let q_op = weyl_quantize(&q.eval(hbar), hbar)?;
        let full = EvolutionCache::new(h_op.scale(c(1.0)))?;
        let blocks: Vec<_> = families
            .iter()
            .map(|fam| {
                let p_op = exact_projection_correction(&weyl_quantize(&fam.terms.eval(hbar), hbar)?);
                let p_op = p_op?;
                let cache = EvolutionCache::new(compressed_generator(&h_op, &p_op))?;
                Ok((p_op, cache))
            })
            .collect::<egorov_lab::Result<Vec<_>>>()?;
        for (ti, &t) in times.iter().enumerate() {
            let evolved = full.heisenberg(&q_op, t);
            let mut sum = evolved.scale(c(0.0));
            let mut leak = 0.0f64;
            for (p_op, cache) in &blocks {
                let qb = block_evolution(cache, &q_op, p_op, t);
                leak = leak.max(qb.sub(&p_op.mul(&qb).mul(p_op)).operator_norm());
                sum = sum.add(&qb);
            }
            let r = evolved.sub(&sum).operator_norm();
            residuals[ti].push(r);
            println!("hbar = {hbar:<8} t = {t}  |Q - sum Q_nu| = {r:.4e}  leakage = {leak:.2e}");
        }
    }
    println!();
    for (ti, &t) in times.iter().enumerate() {
        let fit = fit_order(&hbars, &residuals[ti], 1e-13)?;
        println!(
            "t = {t}: block reduction slope {:.3} (J+1 = {}), r2 = {:.5}",
            fit.slope,
            j + 1,
            fit.r2
        );
    }
    Ok(())
}
