//! Remainder behaviour along the Ehrenfest window.
//!
//! For a hyperbolic (pendulum-type) principal symbol the Jacobian of the
//! flow grows like e^{Γt}, so the Egorov remainder is only controlled up
//! to t(ħ) = (1−ε)/(4Γ)·log(1/ħ). This scan evaluates the order-N
//! remainder exactly at t(ħ) for a decreasing ħ ladder: the values must
//! stay non-increasing even though the comparison time grows.
//!
//! Run with: cargo run --release --example ehrenfest_window

use egorov_lab::harness::{
    ehrenfest_scan, ExperimentConfig, GridSpec, Mode, ModelSpec, ObservableSpec,
    SCHEMA_VERSION,
};

fn main() -> egorov_lab::Result<()> {
    let cfg = ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        label: "pendulum ehrenfest".into(),
        model: ModelSpec::Pendulum { well_depth: 0.35, h1_strength: 0.3 },
        observable: ObservableSpec::Bump { power: 6, off_diag: 0.3 },
        grid: GridSpec { k: 2, mx: 128, mxi: 128 },
        n_order: 1,
        j_proj: 0,
        hbar_list: (4..=8).map(|k| 2.0f64.powi(-k)).collect(),
        times: vec![],
        mode: Mode::ScalarPrincipal,
        slope_tol: 0.3,
        epsilon: Some(0.5),
        seed: None,
    };
    let report = ehrenfest_scan(&cfg)?;
    println!(
        "Gamma = {:.4}, epsilon = {}",
        report.constants_fitted["gamma"], report.constants_fitted["epsilon"]
    );
    for row in &report.rows {
        println!(
            "hbar = {:<10} t(hbar) = {:<8} remainder = {:.6e}",
            row.hbar, row.t, row.remainder_norm
        );
    }
    for msg in &report.failures {
        println!("FAILURE: {msg}");
    }
    println!("overall: {}", if report.passed() { "pass" } else { "FAIL" });
    Ok(())
}
