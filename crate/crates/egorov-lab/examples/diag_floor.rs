//! Scratch diagnostic: calibrate the harmonic m=2 preset so the N=0 and N=1
//! remainder fits sit in their asymptotic regimes over the sweep range.

use egorov_lab::harness::{
    prepare, ExperimentConfig, GridSpec, Mode, ModelSpec, ObservableSpec,
};
use egorov_lab::propagator::EvolutionCache;
use egorov_lab::quantize::weyl_quantize;

fn diag(label: &str, cfg: &ExperimentConfig) {
    println!("=== {label} ===");
    let t = cfg.times[0];
    let prep = prepare(cfg, t).unwrap();
    let i = prep.expansion.time_index(t).unwrap();
    let mut prev: Option<(f64, f64)> = None;
    for &hbar in &cfg.hbar_list {
        let h_eval = prep.model.h.eval(hbar);
        let h_op = weyl_quantize(&h_eval, hbar).unwrap();
        let cache = EvolutionCache::new(h_op).unwrap();
        let q_op = weyl_quantize(&prep.q.eval(hbar), hbar).unwrap();
        let evolved = cache.heisenberg(&q_op, t);
        let q0_sym = &prep.expansion.terms[i][0];
        let r0 = evolved
            .sub(&weyl_quantize(q0_sym, hbar).unwrap())
            .operator_norm();
        let full = prep.expansion.eval(i, hbar);
        let r1 = evolved.sub(&weyl_quantize(&full, hbar).unwrap()).operator_norm();
        let (s0, s1) = match prev {
            Some((p0, p1)) => ((p0 / r0).log2(), (p1 / r1).log2()),
            None => (f64::NAN, f64::NAN),
        };
        println!(
            "hbar 2^{:+.0}  remN0 {:.3e} (slope {:.2})  remN1 {:.3e} (slope {:.2})",
            hbar.log2(),
            r0,
            s0,
            r1,
            s1
        );
        prev = Some((r0, r1));
    }
}

fn main() {
    let base = |power: i32| ExperimentConfig {
        schema_version: 1,
        label: "diag".into(),
        model: ModelSpec::Harmonic { h1_strength: 0.4 },
        observable: ObservableSpec::Bump { power, off_diag: 0.3 },
        grid: GridSpec { k: 2, mx: 64, mxi: 64 },
        n_order: 1,
        j_proj: 0,
        hbar_list: vec![0.03125, 0.015625, 0.0078125, 0.00390625],
        times: vec![1.0],
        mode: Mode::ScalarPrincipal,
        slope_tol: 0.3,
        epsilon: None,
        seed: None,
    };
    diag("p_env=4 bump^6", &base(6));
    diag("p_env=4 bump^4", &base(4));
}
