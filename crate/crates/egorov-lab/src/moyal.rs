//! Moyal (star) product machinery for matrix-valued semiclassical symbols:
//! the homogeneous terms (P#Q)_j, star commutators and Moyal brackets, and
//! two independent "exact" star products used as test oracles — the
//! quantize→multiply→dequantize route and a twisted convolution of Fourier
//! modes (exact for trigonometric polynomials).

use crate::error::{LabError, Result};
use crate::fft;
use crate::grid::{MatrixSymbol, SemiclassicalSymbol};
use crate::quantize::{weyl_dequantize, weyl_quantize};
use num_complex::Complex64 as C64;
use std::collections::HashMap;

/// Max-node commutator norm allowed for the Moyal-bracket precondition.
pub const BRACKET_PRECONDITION_TOL: f64 = 1e-10;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Bidifferential coefficient γ(α,β) = (−1)^|β| / ((2i)^{|α|+|β|} α! β!)
/// (n = 1, so α and β are scalar orders).
pub fn gamma(alpha: usize, beta: usize) -> C64 {
    let sign = if beta % 2 == 0 { 1.0 } else { -1.0 };
    let denom = C64::new(0.0, 2.0).powu((alpha + beta) as u32) * factorial(alpha)
        * factorial(beta);
    C64::new(sign, 0.0) / denom
}

/// Derivative cache over the terms of a semiclassical symbol:
/// key (term k, ∂_ξ order, ∂_x order).
struct Jet<'a> {
    sym: &'a SemiclassicalSymbol,
    cache: HashMap<(usize, usize, usize), MatrixSymbol>,
}

impl<'a> Jet<'a> {
    fn new(sym: &'a SemiclassicalSymbol) -> Self {
        Jet { sym, cache: HashMap::new() }
    }

    /// ∂_ξ^a ∂_x^b of term k.
    fn deriv(&mut self, k: usize, a: usize, b: usize) -> Result<MatrixSymbol> {
        if let Some(d) = self.cache.get(&(k, a, b)) {
            return Ok(d.clone());
        }
        let d = self.sym.term(k).partial_derivative(b, a)?;
        self.cache.insert((k, a, b), d.clone());
        Ok(d)
    }
}

/// The homogeneous term (P#Q)_j =
/// Σ_{α+β+k+l=j} γ(α,β) (∂_ξ^α ∂_x^β P_k)(∂_ξ^β ∂_x^α Q_l).
pub fn moyal_term(
    p: &SemiclassicalSymbol,
    q: &SemiclassicalSymbol,
    j: usize,
) -> Result<MatrixSymbol> {
    p.terms[0].check_compatible(&q.terms[0])?;
    let mut pj = Jet::new(p);
    let mut qj = Jet::new(q);
    let mut acc = MatrixSymbol::zero(p.grid(), p.m());
    for alpha in 0..=j {
        for beta in 0..=(j - alpha) {
            let g = gamma(alpha, beta);
            for k in 0..=(j - alpha - beta) {
                let l = j - alpha - beta - k;
                if k > p.order() || l > q.order() {
                    continue;
                }
                let dp = pj.deriv(k, alpha, beta)?;
                let dq = qj.deriv(l, beta, alpha)?;
                acc = acc.add(&dp.mul(&dq).scale(g));
            }
        }
    }
    Ok(acc)
}

/// Terms 0..=jmax of P#Q as a semiclassical symbol.
pub fn moyal_product_trunc(
    p: &SemiclassicalSymbol,
    q: &SemiclassicalSymbol,
    jmax: usize,
) -> Result<SemiclassicalSymbol> {
    let terms = (0..=jmax).map(|j| moyal_term(p, q, j)).collect::<Result<Vec<_>>>()?;
    Ok(SemiclassicalSymbol::new(terms))
}

/// ([P,Q]_#)_j = (P#Q)_j − (Q#P)_j.
pub fn moyal_commutator_term(
    p: &SemiclassicalSymbol,
    q: &SemiclassicalSymbol,
    j: usize,
) -> Result<MatrixSymbol> {
    Ok(moyal_term(p, q, j)?.sub(&moyal_term(q, p, j)?))
}

/// Moyal bracket term {P,Q}*_j = i·([P,Q]_#)_{j+1}. Requires commuting
/// principal parts, otherwise the bracket starts at order −1 and the
/// expansion is meaningless.
pub fn moyal_bracket_term(
    p: &SemiclassicalSymbol,
    q: &SemiclassicalSymbol,
    j: usize,
) -> Result<MatrixSymbol> {
    let resid = p.terms[0].commutator(&q.terms[0]).sup_norm();
    if resid > BRACKET_PRECONDITION_TOL {
        return Err(LabError::NoncommutingPrincipal { residual: resid });
    }
    Ok(moyal_commutator_term(p, q, j + 1)?.scale(C64::new(0.0, 1.0)))
}

/// Exact star product through the operator side:
/// dequantize(quantize(A)·quantize(B)). A and B are plain symbols
/// (ħ-series already evaluated).
pub fn exact_moyal(a: &MatrixSymbol, b: &MatrixSymbol, hbar: f64) -> Result<MatrixSymbol> {
    a.check_compatible(b)?;
    let oa = weyl_quantize(a, hbar)?;
    let ob = weyl_quantize(b, hbar)?;
    weyl_dequantize(&oa.mul(&ob))
}

/// Independent exact star product by twisted convolution of Fourier modes:
/// e^{i(ax+bξ)} # e^{i(cx+dξ)} = e^{iħ(bc−ad)/2} e^{i((a+c)x+(b+d)ξ)}.
/// Exact for trigonometric polynomials whose mode sums stay inside the
/// grid band; used as the cross-oracle for `exact_moyal`.
pub fn spectral_exact_star(a: &MatrixSymbol, b: &MatrixSymbol, hbar: f64) -> MatrixSymbol {
    a.check_compatible(b).unwrap();
    let grid = a.grid;
    let m = a.m;
    let (nx, nxi) = (grid.mx, grid.mxi);
    let norm = 1.0 / (nx * nxi) as f64;
    // nonzero mode lists per plane: (spec index, amplitude, kx, kxi)
    let modes = |sym: &MatrixSymbol, p: usize| -> Vec<(usize, C64, f64, f64)> {
        let mut spec = sym.plane(p).to_vec();
        fft::fft2(&mut spec, nx, nxi);
        let cutoff = 1e-16 * spec.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut out = Vec::new();
        for ix in 0..nx {
            for ik in 0..nxi {
                let v = spec[ix * nxi + ik];
                if v.norm() > cutoff {
                    out.push((ix * nxi + ik, v * norm, grid.kx(ix), grid.kxi(ik)));
                }
            }
        }
        out
    };
    let amodes: Vec<_> = (0..m * m).map(|p| modes(a, p)).collect();
    let bmodes: Vec<_> = (0..m * m).map(|p| modes(b, p)).collect();
    let mut out = MatrixSymbol::zero(grid, m);
    for i in 0..m {
        for j in 0..m {
            let mut spec = vec![C64::new(0.0, 0.0); nx * nxi];
            for k in 0..m {
                for &(ia, va, kxa, kxia) in &amodes[i * m + k] {
                    let (ixa, ika) = (ia / nxi, ia % nxi);
                    for &(ib, vb, kxb, kxib) in &bmodes[k * m + j] {
                        let (ixb, ikb) = (ib / nxi, ib % nxi);
                        let twist =
                            C64::new(0.0, 0.5 * hbar * (kxia * kxb - kxa * kxib)).exp();
                        let ix = (ixa + ixb) % nx;
                        let ik = (ika + ikb) % nxi;
                        spec[ix * nxi + ik] += va * vb * twist;
                    }
                }
            }
            fft::ifft2(&mut spec, nx, nxi);
            let scale = (nx * nxi) as f64;
            for v in spec.iter_mut() {
                *v *= scale;
            }
            out.plane_mut(i * m + j).copy_from_slice(&spec);
        }
    }
    out
}

/// Remainder of the order-N truncation against the operator-side exact
/// product: R = exact_moyal(P(ħ), Q(ħ)) − Σ_{j≤N} ħ^j (P#Q)_j.
/// Returns the remainder symbol and its sup-norm.
pub fn star_remainder(
    p: &SemiclassicalSymbol,
    q: &SemiclassicalSymbol,
    hbar: f64,
    n: usize,
) -> Result<(MatrixSymbol, f64)> {
    let exact = exact_moyal(&p.eval(hbar), &q.eval(hbar), hbar)?;
    let trunc = moyal_product_trunc(p, q, n)?.eval(hbar);
    let r = exact.sub(&trunc);
    let norm = r.sup_norm();
    Ok((r, norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PhaseGrid;
    use crate::quantize::commensurate_half_width;
    use crate::smallmat::SmallMat;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn grid() -> PhaseGrid {
        PhaseGrid::new(commensurate_half_width(2), 64, 64)
    }

    /// Periodized coordinate surrogates: f(x) = sin(ωx)/ω with ω = π/L has
    /// f ≈ x near the origin and is exactly band-limited.
    fn sin_x(g: PhaseGrid) -> SemiclassicalSymbol {
        let w = PI / g.l;
        SemiclassicalSymbol::from_principal(MatrixSymbol::scalar_from_fn(g, move |x, _| {
            c((w * x).sin() / w, 0.0)
        }))
    }

    fn sin_xi(g: PhaseGrid) -> SemiclassicalSymbol {
        let w = PI / g.l;
        SemiclassicalSymbol::from_principal(MatrixSymbol::scalar_from_fn(g, move |_, xi| {
            c((w * xi).sin() / w, 0.0)
        }))
    }

    #[test]
    fn gamma_values() {
        // [DERIVED] γ(0,0)=1, γ(1,0)=1/2i=−i/2, γ(0,1)=−1/2i=i/2,
        // γ(1,1)=1/4, γ(2,0)=1/(2!·(2i)²)=−1/8
        assert!((gamma(0, 0) - c(1.0, 0.0)).norm() < 1e-15);
        assert!((gamma(1, 0) - c(0.0, -0.5)).norm() < 1e-15);
        assert!((gamma(0, 1) - c(0.0, 0.5)).norm() < 1e-15);
        assert!((gamma(1, 1) - c(0.25, 0.0)).norm() < 1e-15);
        assert!((gamma(2, 0) - c(-0.125, 0.0)).norm() < 1e-15);
        assert!((gamma(0, 2) - c(-0.125, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn term_zero_is_pointwise_product() {
        // [TRIVIAL] (P#Q)_0 = P_0 Q_0
        let g = grid();
        let p = SemiclassicalSymbol::from_principal(MatrixSymbol::from_fn(g, 2, |x, _| {
            let mut m = SmallMat::eye(2);
            m[(0, 1)] = c((PI * x / g.l).sin(), 0.0);
            m
        }));
        let q = SemiclassicalSymbol::from_principal(MatrixSymbol::from_fn(g, 2, |_, xi| {
            let mut m = SmallMat::zero(2);
            m[(0, 0)] = c((PI * xi / g.l).cos(), 0.0);
            m[(1, 1)] = c(1.0, 0.0);
            m
        }));
        let t0 = moyal_term(&p, &q, 0).unwrap();
        assert!(t0.sub(&p.terms[0].mul(&q.terms[0])).sup_norm() < 1e-12);
    }

    #[test]
    fn x_star_xi_first_order() {
        // [DERIVED] for P = f(x), Q = g(ξ): (P#Q)_1 = (1/2i){P,Q} =
        // (i/2) f'(x) g'(ξ); at the origin with coordinate surrogates this
        // is the x#ξ → i/2 canonical value
        let g = grid();
        let p = sin_x(g);
        let q = sin_xi(g);
        let t1 = moyal_term(&p, &q, 1).unwrap();
        let w = PI / g.l;
        let want = MatrixSymbol::scalar_from_fn(g, move |x, xi| {
            c(0.0, 0.5) * (w * x).cos() * (w * xi).cos()
        });
        assert!(t1.sub(&want).sup_norm() < 1e-10);
        // and the reversed order flips the sign
        let t1r = moyal_term(&q, &p, 1).unwrap();
        assert!(t1r.add(&want).sup_norm() < 1e-10);
    }

    #[test]
    fn canonical_commutation() {
        // [DERIVED] ([x,ξ]_#)_1 = i (so [x̂,ξ̂] = iħ at leading order), and
        // the j=0 and j=2 commutator terms of scalar symbols vanish
        let g = grid();
        let p = sin_x(g);
        let q = sin_xi(g);
        let w = PI / g.l;
        let c1 = moyal_commutator_term(&p, &q, 1).unwrap();
        let want = MatrixSymbol::scalar_from_fn(g, move |x, xi| {
            c(0.0, 1.0) * (w * x).cos() * (w * xi).cos()
        });
        assert!(c1.sub(&want).sup_norm() < 1e-10);
        assert!(moyal_commutator_term(&p, &q, 0).unwrap().sup_norm() < 1e-12);
        assert!(moyal_commutator_term(&p, &q, 2).unwrap().sup_norm() < 1e-10);
    }

    #[test]
    fn first_order_with_subprincipal_terms() {
        // [DERIVED] (P#Q)_1 = (1/2i){P_0,Q_0} + P_0 Q_1 + P_1 Q_0
        let g = grid();
        let w = PI / g.l;
        let p0 = MatrixSymbol::from_fn(g, 2, |x, xi| {
            let mut m = SmallMat::zero(2);
            m[(0, 0)] = c((w * x).sin(), 0.0);
            m[(0, 1)] = c((w * xi).cos(), 0.0);
            m[(1, 0)] = c((w * xi).cos(), 0.0);
            m[(1, 1)] = c(-(w * x).sin(), 0.0);
            m
        });
        let p1 = MatrixSymbol::from_fn(g, 2, |x, _| {
            let mut m = SmallMat::zero(2);
            m[(0, 1)] = c(0.0, (w * x).cos());
            m[(1, 0)] = c(0.0, -(w * x).cos());
            m
        });
        let q0 = MatrixSymbol::from_fn(g, 2, |_, xi| {
            let mut m = SmallMat::eye(2);
            m[(0, 0)] = c((2.0 * w * xi).sin(), 0.0);
            m
        });
        let q1 = MatrixSymbol::from_fn(g, 2, |x, xi| {
            let mut m = SmallMat::zero(2);
            m[(0, 0)] = c((w * (x + xi)).cos(), 0.0);
            m
        });
        let p = SemiclassicalSymbol::new(vec![p0.clone(), p1.clone()]);
        let q = SemiclassicalSymbol::new(vec![q0.clone(), q1.clone()]);
        let t1 = moyal_term(&p, &q, 1).unwrap();
        let pb = crate::grid::poisson_bracket(&p0, &q0).unwrap();
        let want = pb
            .scale(c(1.0, 0.0) / c(0.0, 2.0))
            .add(&p0.mul(&q1))
            .add(&p1.mul(&q0));
        assert!(t1.sub(&want).sup_norm() < 1e-10);
    }

    #[test]
    fn adjoint_symmetry_of_terms() {
        // ((P#Q)_j)* = (Q*#P*)_j for every j (star anti-homomorphism)
        let g = grid();
        let w = PI / g.l;
        let p = SemiclassicalSymbol::from_principal(MatrixSymbol::from_fn(g, 2, |x, xi| {
            let mut m = SmallMat::zero(2);
            m[(0, 0)] = c((w * x).sin(), 0.0);
            m[(0, 1)] = c(0.3 * (w * xi).cos(), 0.4 * (w * x).cos());
            m[(1, 0)] = c(-0.2, 0.1 * (w * xi).sin());
            m[(1, 1)] = c(0.0, 0.5);
            m
        }));
        let q = SemiclassicalSymbol::from_principal(MatrixSymbol::from_fn(g, 2, |x, xi| {
            let mut m = SmallMat::eye(2);
            m[(1, 0)] = c((w * (x + xi)).cos(), 0.6);
            m
        }));
        let padj = SemiclassicalSymbol::from_principal(p.terms[0].adjoint());
        let qadj = SemiclassicalSymbol::from_principal(q.terms[0].adjoint());
        for j in 0..4 {
            let lhs = moyal_term(&p, &q, j).unwrap().adjoint();
            let rhs = moyal_term(&qadj, &padj, j).unwrap();
            assert!(lhs.sub(&rhs).sup_norm() < 1e-9, "j = {j}");
        }
    }

    #[test]
    fn bracket_precondition_rejects_noncommuting_principals() {
        let g = grid();
        let p = SemiclassicalSymbol::from_principal(MatrixSymbol::from_fn(g, 2, |_, _| {
            let mut m = SmallMat::zero(2);
            m[(0, 1)] = c(1.0, 0.0);
            m[(1, 0)] = c(1.0, 0.0);
            m
        }));
        let q = SemiclassicalSymbol::from_principal(MatrixSymbol::from_fn(g, 2, |_, _| {
            let mut m = SmallMat::zero(2);
            m[(0, 0)] = c(1.0, 0.0);
            m[(1, 1)] = c(-1.0, 0.0);
            m
        }));
        match moyal_bracket_term(&p, &q, 0) {
            Err(LabError::NoncommutingPrincipal { .. }) => {}
            other => panic!("expected precondition failure, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn bracket_of_scalars_is_poisson() {
        // [DERIVED] {P,Q}*_0 = i·([P,Q]_#)_1 = i·2·(1/2i){P_0,Q_0} = {P_0,Q_0}
        let g = grid();
        let w = PI / g.l;
        let p = SemiclassicalSymbol::from_principal(MatrixSymbol::scalar_from_fn(
            g,
            move |x, xi| c((w * x).sin() + (w * xi).cos(), 0.0),
        ));
        let q = SemiclassicalSymbol::from_principal(MatrixSymbol::scalar_from_fn(
            g,
            move |x, xi| c((w * (x - xi)).cos(), 0.0),
        ));
        let b0 = moyal_bracket_term(&p, &q, 0).unwrap();
        let want = crate::grid::poisson_bracket(&p.terms[0], &q.terms[0]).unwrap();
        assert!(b0.sub(&want).sup_norm() < 1e-9);
    }

    #[test]
    fn spectral_star_matches_twisted_phase() {
        // [DERIVED] single-mode check of the twisted convolution against the
        // closed form, including noncommutativity of the factors
        let g = grid();
        let w = PI / g.l;
        let (pa, qa) = (2.0 * w, 1.0 * w);
        let (pb, qb) = (1.0 * w, 3.0 * w);
        let hbar = 0.25;
        let a = MatrixSymbol::scalar_from_fn(g, move |x, xi| {
            C64::new(0.0, pa * x + qa * xi).exp()
        });
        let b = MatrixSymbol::scalar_from_fn(g, move |x, xi| {
            C64::new(0.0, pb * x + qb * xi).exp()
        });
        let ab = spectral_exact_star(&a, &b, hbar);
        let phase = C64::new(0.0, 0.5 * hbar * (qa * pb - pa * qb)).exp();
        let want = MatrixSymbol::scalar_from_fn(g, move |x, xi| {
            phase * C64::new(0.0, (pa + pb) * x + (qa + qb) * xi).exp()
        });
        assert!(ab.sub(&want).sup_norm() < 1e-12);
        // reversed order carries the conjugate phase
        let ba = spectral_exact_star(&b, &a, hbar);
        let wantr = MatrixSymbol::scalar_from_fn(g, move |x, xi| {
            phase.conj() * C64::new(0.0, (pa + pb) * x + (qa + qb) * xi).exp()
        });
        assert!(ba.sub(&wantr).sup_norm() < 1e-12);
    }

    #[test]
    fn spectral_star_is_associative() {
        let g = PhaseGrid::new(commensurate_half_width(2), 32, 32);
        let w = PI / g.l;
        let hbar = 0.125;
        let mk = |f: fn(f64, f64, f64) -> SmallMat| {
            MatrixSymbol::from_fn(g, 2, move |x, xi| f(w * x, w * xi, 0.0))
        };
        let a = mk(|u, v, _| {
            let mut m = SmallMat::eye(2);
            m[(0, 1)] = C64::new(u.sin(), v.cos());
            m
        });
        let b = mk(|u, v, _| {
            let mut m = SmallMat::zero(2);
            m[(0, 0)] = C64::new(v.sin(), 0.0);
            m[(1, 1)] = C64::new(u.cos(), 0.2);
            m
        });
        let cc = mk(|u, v, _| {
            let mut m = SmallMat::eye(2);
            m[(1, 0)] = C64::new((u + v).cos(), 0.0);
            m
        });
        let lhs = spectral_exact_star(&spectral_exact_star(&a, &b, hbar), &cc, hbar);
        let rhs = spectral_exact_star(&a, &spectral_exact_star(&b, &cc, hbar), hbar);
        assert!(lhs.sub(&rhs).sup_norm() < 1e-11);
    }

    /// Band-limited bump used for operator-side comparisons.
    fn bump(g: PhaseGrid) -> MatrixSymbol {
        let l = g.l;
        MatrixSymbol::from_fn(g, 2, move |x, xi| {
            let bx = (0.5 + 0.5 * (PI * x / l).cos()).powi(4);
            let bxi = (0.5 + 0.5 * (PI * xi / l).cos()).powi(4);
            let gg = bx * bxi;
            let mut m = SmallMat::zero(2);
            m[(0, 0)] = c(gg, 0.0);
            m[(0, 1)] = c(0.5 * gg * (PI * x / l).sin(), 0.3 * gg);
            m[(1, 0)] = m[(0, 1)].conj();
            m[(1, 1)] = c(-0.8 * gg, 0.0);
            m
        })
    }

    fn bump2(g: PhaseGrid) -> MatrixSymbol {
        let l = g.l;
        MatrixSymbol::from_fn(g, 2, move |x, xi| {
            let bx = (0.5 + 0.5 * (PI * x / l).cos()).powi(4);
            let bxi = (0.5 + 0.5 * (PI * xi / l).cos()).powi(4);
            let gg = bx * bxi;
            let mut m = SmallMat::eye(2);
            m[(0, 0)] = c(1.0 + gg * (PI * xi / l).sin(), 0.0);
            m[(1, 0)] = c(0.4 * gg, 0.1 * gg * (PI * x / l).cos());
            m
        })
    }

    #[test]
    fn operator_oracle_matches_spectral_oracle() {
        // the two independent exact star products agree to the
        // discretization floor
        let g = grid();
        let a = bump(g);
        let b = bump2(g);
        let hbar = 0.0625;
        let viaop = exact_moyal(&a, &b, hbar).unwrap();
        let viamodes = spectral_exact_star(&a, &b, hbar);
        let err = viaop.sub(&viamodes).sup_norm();
        assert!(err < 1e-9, "oracles disagree: {err}");
    }

    #[test]
    fn truncation_remainder_has_order_n_plus_one() {
        // R_N(ħ) = exact − Σ_{j≤N} ħ^j (P#Q)_j shrinks like ħ^{N+1}:
        // halving ħ divides the remainder by ≈ 2^{N+1}
        let g = grid();
        let p = SemiclassicalSymbol::from_principal(bump(g));
        let q = SemiclassicalSymbol::from_principal(bump2(g));
        for n in 0..=2 {
            let (_, r1) = star_remainder(&p, &q, 0.0625, n).unwrap();
            let (_, r2) = star_remainder(&p, &q, 0.03125, n).unwrap();
            let ratio = r1 / r2;
            let want = 2f64.powi(n as i32 + 1);
            assert!(
                (ratio / want).ln().abs() < 0.35,
                "N={n}: ratio {ratio:.3} expected ~{want}"
            );
        }
    }
}
