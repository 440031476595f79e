//! General (matrix-principal) Egorov approximant for the Pauli model.
//!
//! The principal symbol H₀ = a·σ_z + b·σ_x has two spectral branches. The
//! observable is compressed onto the branch blocks, each block is reduced
//! to a scalar-principal problem (effective sub-principal H̃_{ν,1}, peeled
//! initial data Q̃_{ν,k}, K-sources), and the branch solutions are
//! reassembled. The measured Heisenberg remainder must gain one order in ħ
//! per expansion order.
//!
//! Run with: cargo run --release --example general_egorov

use egorov_lab::harness::{
    sweep, ExperimentConfig, GridSpec, Mode, ModelSpec, ObservableSpec, SCHEMA_VERSION,
};

fn main() -> egorov_lab::Result<()> {
    for n_order in 0..=1usize {
        let cfg = ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            label: format!("pauli general N={n_order}"),
            model: ModelSpec::PauliAvoidedCrossing {
                a0: 1.1,
                b0: 0.5,
                a_var: 0.25,
                b_var: 0.2,
                envelope_p: 4,
                h1_strength: 0.5,
            },
            observable: ObservableSpec::BlockDiagonalBump { power: 6, off_diag: 0.3 },
            grid: GridSpec { k: 2, mx: 64, mxi: 64 },
            n_order,
            j_proj: 2,
            hbar_list: (4..=7).map(|k| 2.0f64.powi(-k)).collect(),
            times: vec![1.0],
            mode: Mode::General,
            slope_tol: 0.35,
            epsilon: None,
            seed: None,
        };
        let report = sweep(&cfg)?;
        println!("N = {n_order}  (config {})", report.config_hash);
        for row in &report.rows {
            println!(
                "  hbar = {:<8} remainder = {:.4e}  block residual = {:.4e}  \
                 projection residual = {:.4e}",
                row.hbar,
                row.remainder_norm,
                row.block_reduction_residual.unwrap_or(f64::NAN),
                row.projection_residual.unwrap_or(f64::NAN)
            );
        }
        for fit in &report.fits {
            println!(
                "  {:<28} slope {:+.4}  r2 {:.5}  {}",
                fit.name,
                fit.slope,
                fit.r2,
                if fit.pass { "pass" } else { "FAIL" }
            );
        }
        println!();
    }
    Ok(())
}
