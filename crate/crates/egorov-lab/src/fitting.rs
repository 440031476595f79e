//! Log-log power-law fits used to turn O(ħ^p) statements into measured
//! exponents: residual(ħ) ≈ C·ħ^slope fitted by least squares in
//! (log ħ, log residual).

use crate::error::{LabError, Result};

/// A fitted power law residual ≈ e^intercept · ħ^slope.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// Least-squares fit of log(values) against log(hbars). Requires ≥ 4
/// usable points; values that underflow (≤ floor) are dropped so that
/// discretization floors do not corrupt the slope.
pub fn fit_order(hbars: &[f64], values: &[f64], floor: f64) -> Result<PowerFit> {
    assert_eq!(hbars.len(), values.len());
    let pts: Vec<(f64, f64)> = hbars
        .iter()
        .zip(values.iter())
        .filter(|&(_, &v)| v > floor)
        .map(|(&h, &v)| (h.ln(), v.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(LabError::FitRejected(format!(
            "only {} points above the floor {floor:.1e} (need 4)",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(LabError::FitRejected("degenerate abscissae".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 =
        pts.iter().map(|p| (p.1 - (intercept + slope * p.0)).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(PowerFit { slope, intercept, r2, n: pts.len() })
}
