//! Scalar-principal Egorov remainder sweep via the harness.
//!
//! Configures the windowed-harmonic model with a σ_x sub-principal term,
//! builds the Egorov approximant Σ_j ħ^j q_j(t) at orders N = 0 and N = 1,
//! and sweeps ħ measuring ‖U(-t) Q^w U(t) − Op(Σ ħ^j q_j(t))‖. The fitted
//! slope of the remainder must be N+1.
//!
//! Run with: cargo run --release --example scalar_egorov_sweep

use egorov_lab::harness::{
    sweep, ExperimentConfig, GridSpec, Mode, ModelSpec, ObservableSpec, SCHEMA_VERSION,
};

fn main() -> egorov_lab::Result<()> {
    for n_order in 0..=1usize {
        let cfg = ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            label: format!("scalar harmonic N={n_order}"),
            model: ModelSpec::Harmonic { h1_strength: 0.4 },
            observable: ObservableSpec::Bump { power: 6, off_diag: 0.3 },
            grid: GridSpec { k: 2, mx: 128, mxi: 128 },
            n_order,
            j_proj: 0,
            hbar_list: (4..=7).map(|k| 2.0f64.powi(-k)).collect(),
            times: vec![1.0],
            mode: Mode::ScalarPrincipal,
            slope_tol: 0.3,
            epsilon: None,
            seed: None,
        };
        let report = sweep(&cfg)?;
        println!("N = {n_order}  (config {})", report.config_hash);
        for row in &report.rows {
            println!(
                "  hbar = {:<8} t = {}  remainder = {:.6e}",
                row.hbar, row.t, row.remainder_norm
            );
        }
        for fit in &report.fits {
            println!(
                "  {:<24} slope {:+.4}  r2 {:.5}  {}",
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
