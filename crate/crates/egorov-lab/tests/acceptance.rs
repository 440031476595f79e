//! Acceptance gate: nine quantitative criteria at desk scale, executed
//! sequentially inside one test so the per-criterion runtime budgets are
//! meaningful. Each criterion prints exactly one pass/fail line; the test
//! fails at the end if any criterion failed.

use egorov_lab::dynamics::{integrate_trajectory, ScalarFlow, STORE_DT};
use egorov_lab::egorov::{
    build_block_symbols, q_general_case, q_scalar_case, q_scalar_remark,
    range_preservation_residual,
};
use egorov_lab::fitting::fit_order;
use egorov_lab::grid::{
    poisson_bracket, MatrixSymbol, OrderFunction, PhaseGrid, SemiclassicalSymbol,
};
use egorov_lab::harness::{
    ehrenfest_scan, sweep, ExperimentConfig, GridSpec, Mode, ModelSpec, ObservableSpec,
    SCHEMA_VERSION,
};
use egorov_lab::interp::MatrixInterpolant;
use egorov_lab::moyal::{exact_moyal, moyal_product_trunc};
use egorov_lab::projections::{
    eigen_structure, exact_projection_correction, semiclassical_projection,
    verify_projection_identities, ProjectionFamily,
};
use egorov_lab::quantize::{commensurate_half_width, weyl_quantize};
use egorov_lab::smallmat::SmallMat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::time::Instant;

// pinned tolerances
const C1_SLOPE_TOL: f64 = 0.25;
const C2_SLOPE_TOL: f64 = 0.3;
const C3_SLOPE_TOL_N0: f64 = 0.3;
const C3_SLOPE_TOL_N1: f64 = 0.35;
const C4_MIN_SLOPE: f64 = 1.7;
const C4_IDEMPOTENCY_TOL: f64 = 1e-12;
const C5_T_LINEARITY_MAX_SLOPE: f64 = 1.3;
const C6_UNITARITY_TOL: f64 = 1e-10;
const C6_COCYCLE_TOL: f64 = 1e-7;
const C6_FORM_TOL: f64 = 1e-9;
const C7_LEAKAGE_TOL: f64 = 1e-6;
const C9_GENERAL_VS_SCALAR_TOL: f64 = 1e-8;
const C9_REMARK_TOL: f64 = 1e-7;
const R2_MIN: f64 = 0.98;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn hbars(kmin: i32, kmax: i32) -> Vec<f64> {
    (kmin..=kmax).map(|k| 2.0f64.powi(-k)).collect()
}

/// Gaussian envelope that is both numerically periodic (wrap < 1e-12 at
/// the box edge) and band-limited far below the grid Nyquist.
fn gaussian(g: PhaseGrid, x: f64, xi: f64) -> f64 {
    let s = g.l / 7.5;
    (-(x * x + xi * xi) / (2.0 * s * s)).exp()
}

fn gaussian_pair(g: PhaseGrid) -> (SemiclassicalSymbol, SemiclassicalSymbol) {
    let w = std::f64::consts::PI / g.l;
    let a = MatrixSymbol::from_fn(g, 2, move |x, xi| {
        let e = gaussian(g, x, xi);
        let mut m = SmallMat::zero(2);
        m[(0, 0)] = c(1.0 + 0.7 * e);
        m[(1, 1)] = c(-1.0 + 0.4 * e * (w * xi).cos());
        m[(0, 1)] = C64::new(0.5 * e, 0.3 * e * (w * x).sin());
        m[(1, 0)] = m[(0, 1)].conj();
        m
    });
    let b = MatrixSymbol::from_fn(g, 2, move |x, xi| {
        let e = gaussian(g, x, xi);
        let mut m = SmallMat::zero(2);
        m[(0, 0)] = c(e * (w * xi).sin());
        m[(1, 1)] = c(0.6 * e * (w * x).sin());
        m[(0, 1)] = C64::new(0.2 * e, -0.4 * e * (w * xi).cos());
        m[(1, 0)] = m[(0, 1)].conj();
        m
    });
    (SemiclassicalSymbol::from_principal(a), SemiclassicalSymbol::from_principal(b))
}

/// Band-limited Pauli avoided-crossing principal symbol (see the
/// pauli_avoided_crossing preset): trig-polynomial envelope so spectral
/// derivatives are machine-exact and flows freeze at the box edges.
fn pauli_h(g: PhaseGrid) -> SemiclassicalSymbol {
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
    let h1 = MatrixSymbol::from_fn(g, 2, move |x, xi| {
        let v = (0.5 + 0.5 * (w * x).cos()).powi(3) * (0.5 + 0.5 * (w * xi).cos()).powi(3);
        let mut m = SmallMat::zero(2);
        m[(0, 0)] = c(0.4 * v * (w * x).sin() / w);
        m[(1, 1)] = c(-0.4 * v * (w * x).sin() / w);
        m[(0, 1)] = C64::new(0.8 * v, -0.3 * v * (w * xi).sin() / w);
        m[(1, 0)] = m[(0, 1)].conj();
        m
    });
    SemiclassicalSymbol::new(vec![h0, h1])
}

fn bandlimited_bump(g: PhaseGrid, m: usize) -> MatrixSymbol {
    let w = std::f64::consts::PI / g.l;
    MatrixSymbol::from_fn(g, m, move |x, xi| {
        let b = (0.5 + 0.5 * (w * x).cos()).powi(6) * (0.5 + 0.5 * (w * xi).cos()).powi(6);
        let mut mm = SmallMat::zero(m);
        mm[(0, 0)] = c(b);
        if m > 1 {
            mm[(0, 1)] = C64::new(0.3 * b, 0.2 * b);
            mm[(1, 0)] = mm[(0, 1)].conj();
            mm[(1, 1)] = c(-b);
        }
        mm
    })
}

/// Runtime budgets are specified for a workstation-class machine (8 hardware
/// threads); on smaller machines they are scaled by 8/threads so that the
/// budget measures the artifact, not the host.
fn budget_scale() -> f64 {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    (8.0 / threads as f64).max(1.0)
}

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn criterion<F>(&mut self, id: u32, name: &str, budget_s: f64, body: F)
    where
        F: FnOnce() -> Result<String, String>,
    {
        let budget_s = budget_s * budget_scale();
        let t0 = Instant::now();
        let outcome = body();
        let dt = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) if dt <= budget_s => {
                println!("ACCEPTANCE {id} ({name}): PASS [{dt:.1}s] {detail}");
            }
            Ok(detail) => {
                println!(
                    "ACCEPTANCE {id} ({name}): FAIL [{dt:.1}s over {budget_s:.0}s budget] {detail}"
                );
                self.failures.push(format!("criterion {id}: runtime {dt:.1}s > {budget_s:.0}s"));
            }
            Err(msg) => {
                println!("ACCEPTANCE {id} ({name}): FAIL [{dt:.1}s] {msg}");
                self.failures.push(format!("criterion {id}: {msg}"));
            }
        }
    }
}

fn base_cfg(model: ModelSpec, observable: ObservableSpec, mode: Mode) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        label: String::new(),
        model,
        observable,
        grid: GridSpec { k: 2, mx: 256, mxi: 256 },
        n_order: 0,
        j_proj: 0,
        hbar_list: hbars(4, 8),
        times: vec![1.0],
        mode,
        slope_tol: 0.3,
        epsilon: None,
        seed: Some(0),
    }
}

fn criterion_1() -> Result<String, String> {
    let g = PhaseGrid::new(commensurate_half_width(2), 256, 256);
    let (p, q) = gaussian_pair(g);
    let hb = hbars(4, 9);
    let mut detail = String::new();
    for n in 0..=2usize {
        let trunc = moyal_product_trunc(&p, &q, n).map_err(|e| e.to_string())?;
        let norms: Vec<f64> = hb
            .par_iter()
            .map(|&hbar| {
                let exact = exact_moyal(&p.eval(hbar), &q.eval(hbar), hbar)?;
                Ok(exact.sub(&trunc.eval(hbar)).sup_norm())
            })
            .collect::<egorov_lab::Result<_>>()
            .map_err(|e| e.to_string())?;
        let fit = fit_order(&hb, &norms, 1e-13).map_err(|e| e.to_string())?;
        let target = (n + 1) as f64;
        if (fit.slope - target).abs() > C1_SLOPE_TOL || fit.r2 < R2_MIN {
            return Err(format!(
                "N={n}: slope {:.3} (want {target} +/- {C1_SLOPE_TOL}), r2 {:.4}",
                fit.slope, fit.r2
            ));
        }
        detail.push_str(&format!("N={n} slope {:.3}; ", fit.slope));
    }
    Ok(detail)
}

fn criterion_2() -> Result<String, String> {
    let mut detail = String::new();
    let mut rows_by_n: Vec<Vec<(f64, f64)>> = Vec::new();
    for n in 0..=1usize {
        let mut cfg = base_cfg(
            ModelSpec::Harmonic { h1_strength: 0.4 },
            ObservableSpec::Bump { power: 6, off_diag: 0.3 },
            Mode::ScalarPrincipal,
        );
        cfg.n_order = n;
        cfg.slope_tol = C2_SLOPE_TOL;
        // start at 2^-5: at 2^-4 the second-order Moyal term of the windowed
        // harmonic still rivals the first-order one and bends the N=0 fit
        cfg.hbar_list = hbars(5, 9);
        let report = sweep(&cfg).map_err(|e| e.to_string())?;
        let fit = report
            .fits
            .iter()
            .find(|f| f.name == "remainder_t1")
            .ok_or("missing remainder fit")?;
        if !fit.pass {
            return Err(format!(
                "N={n}: slope {:.3} (want {} +/- {C2_SLOPE_TOL}), r2 {:.4}",
                fit.slope,
                n + 1,
                fit.r2
            ));
        }
        detail.push_str(&format!("N={n} slope {:.3}; ", fit.slope));
        rows_by_n.push(report.rows.iter().map(|r| (r.hbar, r.remainder_norm)).collect());
    }
    // monotone truncation: N=1 remainder <= N=0 remainder once hbar <= 2^-6
    for (h0v, h1v) in rows_by_n[0].iter().zip(rows_by_n[1].iter()) {
        if h0v.0 <= 2.0f64.powi(-6) + 1e-12 && h1v.1 > h0v.1 {
            return Err(format!(
                "truncation not monotone at hbar={}: N=1 {:.3e} > N=0 {:.3e}",
                h0v.0, h1v.1, h0v.1
            ));
        }
    }
    Ok(detail + "monotone truncation holds")
}

fn criterion_3() -> Result<String, String> {
    let mut detail = String::new();
    for n in 0..=1usize {
        let mut cfg = base_cfg(
            ModelSpec::PauliAvoidedCrossing {
                a0: 1.1,
                b0: 0.5,
                a_var: 0.25,
                b_var: 0.2,
                envelope_p: 4,
                h1_strength: 0.5,
            },
            ObservableSpec::BlockDiagonalBump { power: 6, off_diag: 0.3 },
            Mode::General,
        );
        cfg.n_order = n;
        cfg.j_proj = 2;
        cfg.slope_tol = if n == 0 { C3_SLOPE_TOL_N0 } else { C3_SLOPE_TOL_N1 };
        // fit window 2^-5..2^-9 for the same reason as criterion 2
        cfg.hbar_list = hbars(5, 9);
        let report = sweep(&cfg).map_err(|e| e.to_string())?;
        let fit = report
            .fits
            .iter()
            .find(|f| f.name == "remainder_t1")
            .ok_or("missing remainder fit")?;
        if !fit.pass {
            return Err(format!(
                "N={n}: slope {:.3} (want {} +/- {}), r2 {:.4}",
                fit.slope,
                n + 1,
                cfg.slope_tol,
                fit.r2
            ));
        }
        detail.push_str(&format!("N={n} slope {:.3}; ", fit.slope));
    }
    Ok(detail)
}

fn criterion_4() -> Result<String, String> {
    let g = PhaseGrid::new(commensurate_half_width(2), 256, 256);
    let h = pauli_h(g);
    let es = eigen_structure(&h.term(0), &OrderFunction::ConstantOne, 1.0)
        .map_err(|e| e.to_string())?;
    let families: Vec<ProjectionFamily> = (0..es.l)
        .map(|nu| semiclassical_projection(&h, &es, nu, 1))
        .collect::<egorov_lab::Result<_>>()
        .map_err(|e| e.to_string())?;
    let hb = hbars(4, 9);
    let reports =
        verify_projection_identities(&families, &h, &hb).map_err(|e| e.to_string())?;
    let mut detail = String::new();
    for r in &reports {
        if !r.passes(C4_MIN_SLOPE) {
            return Err(format!(
                "identity {} slope {:.3} < {C4_MIN_SLOPE}",
                r.name,
                r.slope_or_floor()
            ));
        }
        detail.push_str(&format!("{} {:.2}; ", r.name, r.slope_or_floor()));
    }
    let hbar = 2.0f64.powi(-6);
    let p_op = weyl_quantize(&families[0].terms.eval(hbar), hbar).map_err(|e| e.to_string())?;
    let exact = exact_projection_correction(&p_op).map_err(|e| e.to_string())?;
    let idem = exact.mul(&exact).sub(&exact).operator_norm();
    if idem > C4_IDEMPOTENCY_TOL {
        return Err(format!("exact correction idempotency {idem:.2e} > {C4_IDEMPOTENCY_TOL:.0e}"));
    }
    Ok(detail + &format!("exact idempotency {idem:.1e}"))
}

fn criterion_5() -> Result<String, String> {
    let mut cfg = base_cfg(
        ModelSpec::PauliAvoidedCrossing {
            a0: 1.1,
            b0: 0.5,
            a_var: 0.25,
            b_var: 0.2,
            envelope_p: 4,
            h1_strength: 0.5,
        },
        ObservableSpec::BlockDiagonalBump { power: 6, off_diag: 0.3 },
        Mode::General,
    );
    cfg.j_proj = 1;
    cfg.times = vec![1.0, 2.0, 4.0];
    // 128² grid: the symbol pipeline is grid-converged far below these
    // residuals already at 64² (trig-polynomial models), and the t = 4
    // Duhamel window makes the 256² recursion disproportionately expensive
    cfg.grid = GridSpec { k: 2, mx: 128, mxi: 128 };
    let report = sweep(&cfg).map_err(|e| e.to_string())?;
    let mut detail = String::new();
    for &t in &[1.0, 2.0, 4.0] {
        let fit = report
            .fits
            .iter()
            .find(|f| f.name == format!("block_reduction_t{t}"))
            .ok_or_else(|| format!("missing block fit at t={t}"))?;
        let min_slope = (cfg.j_proj + 1) as f64 - 0.3;
        if fit.slope < min_slope || fit.r2 < R2_MIN {
            return Err(format!(
                "t={t}: block slope {:.3} < {min_slope} (r2 {:.4})",
                fit.slope, fit.r2
            ));
        }
        detail.push_str(&format!("t={t} slope {:.2}; ", fit.slope));
    }
    // t-dependence at most linear: log-log slope of residual against t,
    // per hbar, must stay below the pinned bound
    let mut worst_t_slope = f64::NEG_INFINITY;
    let mut worst_r2 = 1.0f64;
    for &hbar in &cfg.hbar_list {
        let pts: Vec<(f64, f64)> = report
            .rows
            .iter()
            .filter(|r| r.hbar == hbar)
            .map(|r| (r.t, r.block_reduction_residual.unwrap_or(f64::NAN)))
            .collect();
        let ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let vs: Vec<f64> = pts.iter().map(|p| p.1).collect();
        // 3 points: direct least squares in log-log
        let lx: Vec<f64> = ts.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
        let n = lx.len() as f64;
        let (sx, sy): (f64, f64) = (lx.iter().sum(), ly.iter().sum());
        let sxx: f64 = lx.iter().map(|v| v * v).sum();
        let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| a * b).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let syy: f64 = ly.iter().map(|v| v * v).sum();
        let r2 = (n * sxy - sx * sy).powi(2)
            / ((n * sxx - sx * sx) * (n * syy - sy * sy)).max(1e-300);
        if slope > worst_t_slope {
            worst_t_slope = slope;
            worst_r2 = r2;
        }
    }
    if worst_t_slope > C5_T_LINEARITY_MAX_SLOPE {
        return Err(format!(
            "t-growth slope {worst_t_slope:.3} > {C5_T_LINEARITY_MAX_SLOPE} (r2 {worst_r2:.3})"
        ));
    }
    Ok(detail + &format!("t-growth slope {worst_t_slope:.2} (r2 {worst_r2:.3})"))
}

fn criterion_6() -> Result<String, String> {
    let g = PhaseGrid::new(commensurate_half_width(2), 256, 256);
    let h = pauli_h(g);
    let q = SemiclassicalSymbol::from_principal(bandlimited_bump(g, 2));
    let es = eigen_structure(&h.term(0), &OrderFunction::ConstantOne, 1.0)
        .map_err(|e| e.to_string())?;
    let fam = semiclassical_projection(&h, &es, 0, 1).map_err(|e| e.to_string())?;
    // the builder enforces agreement of the two H-tilde forms; recompute
    // the defining-vs-simplified delta here so the measured value is shown
    let block = build_block_symbols(&h, &q, &fam, &es, 1).map_err(|e| e.to_string())?;
    let p0 = fam.terms.term(0);
    let lam_m = es.lambdas[0].scalar_to_matrix(2);
    let i_unit = C64::new(0.0, 1.0);
    let half_over_i = C64::new(0.0, -0.5);
    let pb_pp = poisson_bracket(&p0, &p0).map_err(|e| e.to_string())?;
    let pb_lp = poisson_bracket(&lam_m, &p0).map_err(|e| e.to_string())?;
    let comm = p0.mul(&pb_lp).sub(&pb_lp.mul(&p0));
    let form1 = lam_m
        .mul(&p0.mul(&pb_pp).mul(&p0))
        .scale(half_over_i)
        .sub(&comm.scale(i_unit))
        .add(&p0.mul(&block.h_nu.term(1)).mul(&p0));
    let pb_ph0 = poisson_bracket(&p0, &h.term(0)).map_err(|e| e.to_string())?;
    let form2 = p0
        .mul(&pb_ph0)
        .mul(&p0)
        .scale(half_over_i)
        .add(&p0.mul(&h.term(1)).mul(&p0))
        .sub(&comm.scale(i_unit));
    let form_delta = form1.sub(&form2).sup_norm();
    if form_delta > C6_FORM_TOL {
        return Err(format!("H-tilde form disagreement {form_delta:.2e} > {C6_FORM_TOL:.0e}"));
    }
    // transport unitarity and the cocycle inverse, node-wise over the grid
    let flow = ScalarFlow::new(&es.lambdas[0]).map_err(|e| e.to_string())?;
    let htilde = MatrixInterpolant::new(&block.htilde_nu1);
    let t = 1.0;
    let results: Vec<egorov_lab::Result<(f64, f64)>> = (0..g.n_nodes())
        .into_par_iter()
        .map(|node| {
            let (x, xi) = g.node_coords(node);
            let fwd = integrate_trajectory(&flow, Some(&htilde), 2, x, xi, t, STORE_DT)?;
            let f = fwd.final_state();
            let bwd = integrate_trajectory(&flow, Some(&htilde), 2, f.x, f.xi, -t, STORE_DT)?;
            let cocycle = bwd.final_state().t.sub(&f.t.adjoint()).frob_norm();
            Ok((fwd.unitarity_drift, cocycle))
        })
        .collect();
    let mut unitarity = 0.0f64;
    let mut cocycle = 0.0f64;
    for r in results {
        let (u, co) = r.map_err(|e| e.to_string())?;
        unitarity = unitarity.max(u);
        cocycle = cocycle.max(co);
    }
    if unitarity > C6_UNITARITY_TOL {
        return Err(format!("unitarity drift {unitarity:.2e} > {C6_UNITARITY_TOL:.0e}"));
    }
    if cocycle > C6_COCYCLE_TOL {
        return Err(format!("cocycle defect {cocycle:.2e} > {C6_COCYCLE_TOL:.0e}"));
    }
    Ok(format!(
        "unitarity {unitarity:.1e}, cocycle {cocycle:.1e}, form delta {form_delta:.1e}"
    ))
}

fn criterion_7() -> Result<String, String> {
    let g = PhaseGrid::new(commensurate_half_width(2), 256, 256);
    let h = pauli_h(g);
    let es = eigen_structure(&h.term(0), &OrderFunction::ConstantOne, 1.0)
        .map_err(|e| e.to_string())?;
    let families: Vec<ProjectionFamily> = (0..es.l)
        .map(|nu| semiclassical_projection(&h, &es, nu, 1))
        .collect::<egorov_lab::Result<_>>()
        .map_err(|e| e.to_string())?;
    let seed = SemiclassicalSymbol::from_principal(bandlimited_bump(g, 2));
    let q = egorov_lab::projections::block_diagonal_part(&seed, &families, 1)
        .map_err(|e| e.to_string())?;
    let exp =
        q_general_case(&h, &q, &families, &es, 0, 2.0).map_err(|e| e.to_string())?;
    let leak = range_preservation_residual(&exp, &es.projectors);
    if leak > C7_LEAKAGE_TOL {
        return Err(format!("off-block leakage {leak:.2e} > {C7_LEAKAGE_TOL:.0e}"));
    }
    Ok(format!("off-block leakage {leak:.1e} over t in [0,2]"))
}

fn criterion_8() -> Result<String, String> {
    let mut cfg = base_cfg(
        ModelSpec::Pendulum { well_depth: 0.35, h1_strength: 0.3 },
        ObservableSpec::Bump { power: 6, off_diag: 0.3 },
        Mode::ScalarPrincipal,
    );
    cfg.n_order = 1;
    cfg.hbar_list = hbars(4, 9);
    cfg.times = vec![];
    cfg.epsilon = Some(0.5);
    let report = ehrenfest_scan(&cfg).map_err(|e| e.to_string())?;
    if !report.failures.is_empty() {
        return Err(report.failures.join("; "));
    }
    let first = report.rows.first().ok_or("no rows")?;
    let last = report.rows.last().ok_or("no rows")?;
    Ok(format!(
        "Gamma(fitted bound) {:.3}; remainder {:.2e} (hbar={}, t={}) -> {:.2e} (hbar={}, t={})",
        report.constants_fitted["gamma"],
        first.remainder_norm,
        first.hbar,
        first.t,
        last.remainder_norm,
        last.hbar,
        last.t
    ))
}

fn criterion_9() -> Result<String, String> {
    let g = PhaseGrid::new(commensurate_half_width(2), 64, 64);
    let w = std::f64::consts::PI / g.l;
    let env3 = move |x: f64, xi: f64| {
        (0.5 + 0.5 * (w * x).cos()).powi(3) * (0.5 + 0.5 * (w * xi).cos()).powi(3)
    };
    let lam = MatrixSymbol::scalar_from_fn(g, move |x, xi| {
        c(1.2 * (0.5 + 0.5 * (w * x).cos()).powi(4) * (0.5 + 0.5 * (w * xi).cos()).powi(4))
    });
    // l = 1: H0 = lambda * I, the block machinery must reproduce the
    // direct scalar-principal recursion
    let h1 = MatrixSymbol::from_fn(g, 2, move |x, xi| {
        let v = env3(x, xi);
        let mut m = SmallMat::zero(2);
        m[(0, 0)] = c(0.4 * v * (w * x).sin() / w);
        m[(1, 1)] = c(-0.4 * v * (w * x).sin() / w);
        m[(0, 1)] = C64::new(0.8 * v, -0.3 * v * (w * xi).sin() / w);
        m[(1, 0)] = m[(0, 1)].conj();
        m
    });
    let h = SemiclassicalSymbol::new(vec![lam.scalar_to_matrix(2), h1.clone()]);
    let q = SemiclassicalSymbol::new(vec![bandlimited_bump(g, 2), h1]);
    let t_max = 0.5;
    let scalar = q_scalar_case(&h, &q, 1, t_max).map_err(|e| e.to_string())?;
    let es = eigen_structure(&h.term(0), &OrderFunction::ConstantOne, 1.0)
        .map_err(|e| e.to_string())?;
    let fam = ProjectionFamily {
        nu: 0,
        terms: SemiclassicalSymbol::from_principal(MatrixSymbol::identity(g, 2)),
        j: 1,
    };
    let general =
        q_general_case(&h, &q, &[fam], &es, 1, t_max).map_err(|e| e.to_string())?;
    let mut d_gen = 0.0f64;
    for i in 0..scalar.times.len() {
        for j in 0..=1 {
            d_gen = d_gen.max(scalar.terms[i][j].sub(&general.terms[i][j]).sup_norm());
        }
    }
    if d_gen > C9_GENERAL_VS_SCALAR_TOL {
        return Err(format!(
            "general(l=1) vs scalar: {d_gen:.2e} > {C9_GENERAL_VS_SCALAR_TOL:.0e}"
        ));
    }
    // m = 1: the full pipeline must match the Remark characteristics formula
    let h1s = MatrixSymbol::scalar_from_fn(g, move |x, xi| {
        c(0.3 * env3(x, xi) * (w * x).sin() * (w * xi).cos())
    });
    let hs = SemiclassicalSymbol::new(vec![lam, h1s.clone()]);
    let qs = SemiclassicalSymbol::new(vec![bandlimited_bump(g, 1), h1s]);
    let full = q_scalar_case(&hs, &qs, 1, 0.75).map_err(|e| e.to_string())?;
    let remark = q_scalar_remark(&hs, &qs, 1, 0.75).map_err(|e| e.to_string())?;
    let mut d_rem = 0.0f64;
    for i in 0..full.times.len() {
        for j in 0..=1 {
            d_rem = d_rem.max(full.terms[i][j].sub(&remark.terms[i][j]).sup_norm());
        }
    }
    if d_rem > C9_REMARK_TOL {
        return Err(format!("pipeline vs Remark formula: {d_rem:.2e} > {C9_REMARK_TOL:.0e}"));
    }
    Ok(format!("general vs scalar {d_gen:.1e}; pipeline vs Remark {d_rem:.1e}"))
}

#[test]
fn acceptance() {
    let mut gate = Gate { failures: Vec::new() };
    gate.criterion(1, "moyal remainder orders", 60.0, criterion_1);
    gate.criterion(2, "scalar-principal Egorov orders", 1200.0, criterion_2);
    gate.criterion(3, "general Egorov orders", 1200.0, criterion_3);
    gate.criterion(4, "projection identities", 300.0, criterion_4);
    gate.criterion(5, "block reduction", 600.0, criterion_5);
    gate.criterion(6, "transport identities", 120.0, criterion_6);
    gate.criterion(7, "range preservation", 120.0, criterion_7);
    gate.criterion(8, "ehrenfest window", 900.0, criterion_8);
    gate.criterion(9, "oracle equivalence", 300.0, criterion_9);
    assert!(
        gate.failures.is_empty(),
        "acceptance failures:\n{}",
        gate.failures.join("\n")
    );
}
