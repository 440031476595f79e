//! Spectral structure of the principal symbol and semiclassical
//! projections: per-node eigendecompositions with gap certification, the
//! resolvent parametrix recursion B_j at fixed z, contour quadrature of
//! P̃_ν = (i/2π)∮ B(z) dz, the exact-projection correction on the operator
//! side, and the block-diagonal part of an observable.

use crate::error::{LabError, Result};
use crate::fitting::{fit_order, PowerFit};
use crate::grid::{MatrixSymbol, OrderFunction, SemiclassicalSymbol};
use crate::moyal::{exact_moyal, gamma, moyal_product_trunc};
use crate::quantize::QuantizedOperator;
use crate::smallmat::SmallMat;
use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

/// Default number of trapezoid nodes on the contour circle.
pub const CONTOUR_K: usize = 64;
/// Contour quadrature must be stable under doubling K to this tolerance.
pub const CONTOUR_DOUBLING_TOL: f64 = 1e-9;
/// Almost-projection spectrum must cluster within this distance of {0,1}.
pub const CLUSTERING_TOL: f64 = 0.25;

/// Eigenvalue branches, multiplicities and Riesz projectors of a hermitian
/// principal symbol, certified against the gap condition |λ_μ−λ_ν| ≥ ρ·g.
pub struct EigenStructure {
    pub l: usize,
    /// Scalar branch symbols λ_1 < … < λ_l (per node).
    pub lambdas: Vec<MatrixSymbol>,
    pub multiplicities: Vec<usize>,
    /// Hermitian eigenprojectors P_{ν,0}, cluster-summed.
    pub projectors: Vec<MatrixSymbol>,
    /// min over nodes and branch pairs of |λ_μ−λ_ν| / g.
    pub gap: f64,
    pub rho: f64,
    /// min of the order function over the grid.
    pub min_g: f64,
}

/// Per-node hermitian eigendecomposition of H₀ clustered into branches.
/// The cluster pattern (number of branches and multiplicities) must be the
/// same at every node; a change of pattern signals a crossing.
pub fn eigen_structure(
    h0: &MatrixSymbol,
    g: &OrderFunction,
    rho: f64,
) -> Result<EigenStructure> {
    if !h0.is_hermitian() {
        return Err(LabError::Config(format!(
            "principal symbol not hermitian: defect {:.3e}",
            h0.hermitian_defect()
        )));
    }
    let grid = h0.grid;
    let m = h0.m;
    let nn = grid.n_nodes();
    struct NodeData {
        starts: Vec<usize>, // cluster start indices into the sorted spectrum
        values: Vec<f64>,   // cluster means
        projs: Vec<SmallMat>,
        min_gap_over_g: f64,
        gv: f64,
    }
    let nodes: Vec<NodeData> = (0..nn)
        .into_par_iter()
        .map(|node| {
            let (x, xi) = grid.node_coords(node);
            let gv = g.sample(x, xi);
            let (ev, v) = h0.get(node).herm_eigen();
            // split wherever the spacing reaches ρ·g: true branches are at
            // least that far apart, intra-branch spread is numerical noise
            let mut starts = vec![0usize];
            for i in 1..m {
                if ev[i] - ev[i - 1] >= rho * gv {
                    starts.push(i);
                }
            }
            let ends: Vec<usize> =
                starts.iter().skip(1).copied().chain([m]).collect();
            let mut values = Vec::new();
            let mut projs = Vec::new();
            for (c, &s) in starts.iter().enumerate() {
                let e = ends[c];
                values.push(ev[s..e].iter().sum::<f64>() / (e - s) as f64);
                let mut p = SmallMat::zero(m);
                for col in s..e {
                    for r in 0..m {
                        for c2 in 0..m {
                            p[(r, c2)] += v[(r, col)] * v[(c2, col)].conj();
                        }
                    }
                }
                projs.push(p);
            }
            let mut min_gap = f64::INFINITY;
            for c in 1..values.len() {
                min_gap = min_gap.min((values[c] - values[c - 1]) / gv);
            }
            NodeData { starts, values, projs, min_gap_over_g: min_gap, gv }
        })
        .collect();
    let pattern = nodes[0].starts.clone();
    let l = pattern.len();
    for (node, nd) in nodes.iter().enumerate() {
        if nd.starts != pattern {
            return Err(LabError::GapViolation {
                measured: nd.min_gap_over_g * nd.gv,
                required: rho * nd.gv,
                node,
            });
        }
    }
    let gap = nodes.iter().map(|n| n.min_gap_over_g).fold(f64::INFINITY, f64::min);
    if l > 1 && gap < rho {
        let (node, nd) = nodes
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.min_gap_over_g.partial_cmp(&b.1.min_gap_over_g).unwrap())
            .unwrap();
        return Err(LabError::GapViolation {
            measured: nd.min_gap_over_g * nd.gv,
            required: rho * nd.gv,
            node,
        });
    }
    let ends: Vec<usize> = pattern.iter().skip(1).copied().chain([m]).collect();
    let multiplicities: Vec<usize> =
        pattern.iter().zip(ends.iter()).map(|(&s, &e)| e - s).collect();
    let mut lambdas = Vec::with_capacity(l);
    let mut projectors = Vec::with_capacity(l);
    for nu in 0..l {
        let mut lam = MatrixSymbol::zero(grid, 1);
        let mut proj = MatrixSymbol::zero(grid, m);
        for (node, nd) in nodes.iter().enumerate() {
            lam.set(node, &SmallMat::scalar(1, C64::new(nd.values[nu], 0.0)));
            proj.set(node, &nd.projs[nu]);
        }
        lambdas.push(lam);
        projectors.push(proj);
    }
    let min_g = nodes.iter().map(|n| n.gv).fold(f64::INFINITY, f64::min);
    Ok(EigenStructure { l, lambdas, multiplicities, projectors, gap, rho, min_g })
}

/// A single circle |z − center| = radius used for the whole grid. Valid
/// when the branch ranges are globally separated; the admissible radius
/// window is (half the branch spread, distance to the nearest foreign
/// branch value).
#[derive(Debug, Clone, Copy)]
pub struct Contour {
    pub center: f64,
    pub radius: f64,
    /// Clearance between the circle and every eigenvalue of every node.
    pub clearance: f64,
}

/// Build the global contour for branch ν. `radius_frac` ∈ (0, 1) places
/// the radius inside the admissible window (0.5 = midpoint clearance on
/// both sides; used for the contour-independence check).
pub fn branch_contour(es: &EigenStructure, nu: usize, radius_frac: f64) -> Result<Contour> {
    assert!(radius_frac > 0.0 && radius_frac < 1.0);
    let own = es.lambdas[nu].scalar_plane();
    let lo = own.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
    let hi = own.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
    let center = 0.5 * (lo + hi);
    let inner = 0.5 * (hi - lo);
    let mut outer = f64::INFINITY;
    for (mu, lam) in es.lambdas.iter().enumerate() {
        if mu == nu {
            continue;
        }
        for v in lam.scalar_plane() {
            outer = outer.min((v.re - center).abs());
        }
    }
    if outer <= inner {
        return Err(LabError::Config(format!(
            "branch {nu} not globally separated: spread {inner:.3}, nearest foreign \
             branch at {outer:.3} from the center"
        )));
    }
    let radius = inner + radius_frac * (outer - inner);
    let clearance = (radius - inner).min(outer - radius);
    Ok(Contour { center, radius, clearance })
}

/// Per-node resolvent symbol (H₀ − z)⁻¹ at fixed z.
pub fn resolvent_symbol(h0: &MatrixSymbol, z: C64) -> MatrixSymbol {
    let mut out = MatrixSymbol::zero(h0.grid, h0.m);
    for node in 0..h0.grid.n_nodes() {
        let mut a = h0.get(node);
        for i in 0..a.m {
            a[(i, i)] -= z;
        }
        out.set(node, &a.inverse());
    }
    out
}

/// Parametrix terms B_0, …, B_jmax at fixed z, defined by
/// (H − z) # B ~ I order by order:
///   B_0 = (H₀−z)⁻¹,
///   B_j = −(H₀−z)⁻¹ · Σ_{α+β+k+l=j, (α,β,k)≠0} γ(α,β) (∂_ξ^α∂_x^β H_k)(∂_ξ^β∂_x^α B_l).
pub fn parametrix_terms(
    h: &SemiclassicalSymbol,
    z: C64,
    jmax: usize,
) -> Result<Vec<MatrixSymbol>> {
    let h0 = h.term(0);
    let res = resolvent_symbol(&h0, z);
    let mut b: Vec<MatrixSymbol> = vec![res.clone()];
    for j in 1..=jmax {
        let mut acc = MatrixSymbol::zero(h0.grid, h0.m);
        for alpha in 0..=j {
            for beta in 0..=(j - alpha) {
                for k in 0..=(j - alpha - beta) {
                    let l = j - alpha - beta - k;
                    if alpha == 0 && beta == 0 && k == 0 {
                        continue; // that term is the unknown (H₀−z)·B_j
                    }
                    if k > h.order() {
                        continue;
                    }
                    // ∂_ξ^α∂_x^β H_k   (z drops out: α+β+k > 0 here and the
                    // only z-dependence sits in the k = 0, α = β = 0 slot)
                    let dh = h.term(k).partial_derivative(beta, alpha)?;
                    let db = b[l].partial_derivative(alpha, beta)?;
                    acc = acc.add(&dh.mul(&db).scale(gamma(alpha, beta)));
                }
            }
        }
        b.push(res.mul(&acc).scale(C64::new(-1.0, 0.0)));
    }
    Ok(b)
}

/// Projection symbols P_{ν,0}, …, P_{ν,J} for one branch.
pub struct ProjectionFamily {
    pub nu: usize,
    pub terms: SemiclassicalSymbol,
    pub j: usize,
}

fn contour_quadrature(
    h: &SemiclassicalSymbol,
    contour: &Contour,
    jmax: usize,
    k_quad: usize,
) -> Result<Vec<MatrixSymbol>> {
    let pieces: Vec<Result<Vec<MatrixSymbol>>> = (0..k_quad)
        .into_par_iter()
        .map(|q| {
            let theta = 2.0 * std::f64::consts::PI * q as f64 / k_quad as f64;
            let phase = C64::new(0.0, theta).exp();
            let z = C64::new(contour.center, 0.0) + contour.radius * phase;
            let b = parametrix_terms(h, z, jmax)?;
            // P̃_{ν,j} = (i/2π) ∮ B_j dz, trapezoid on the circle:
            // dz = iRe^{iθ}dθ ⇒ weight −(R/K)e^{iθ}
            let w = phase.scale(-contour.radius / k_quad as f64);
            Ok(b.into_iter().map(|t| t.scale(w)).collect())
        })
        .collect();
    let mut terms: Vec<MatrixSymbol> =
        (0..=jmax).map(|_| MatrixSymbol::zero(h.grid(), h.m())).collect();
    for piece in pieces {
        for (acc, t) in terms.iter_mut().zip(piece?.into_iter()) {
            *acc = acc.add(&t);
        }
    }
    Ok(terms)
}

/// Contour integral P̃_ν = (i/2π)∮ B(z) dz with the resolvent guard and
/// the K-doubling convergence check; returns the 2K result.
pub fn semiclassical_projection_with(
    h: &SemiclassicalSymbol,
    es: &EigenStructure,
    nu: usize,
    jmax: usize,
    k_quad: usize,
    radius_frac: f64,
) -> Result<ProjectionFamily> {
    let contour = branch_contour(es, nu, radius_frac)?;
    // ‖(H₀−z)⁻¹‖ = 1/dist(z, σ(H₀)) ≤ 1/clearance must respect the 4/(ρg) cap
    let limit = 4.0 / (es.rho * es.min_g);
    let norm = 1.0 / contour.clearance;
    if norm > limit {
        return Err(LabError::ContourResolvent { norm, limit });
    }
    let coarse = contour_quadrature(h, &contour, jmax, k_quad)?;
    let fine = contour_quadrature(h, &contour, jmax, 2 * k_quad)?;
    let mut delta = 0.0f64;
    for (a, b) in coarse.iter().zip(fine.iter()) {
        delta = delta.max(a.sub(b).sup_norm());
    }
    if delta > CONTOUR_DOUBLING_TOL {
        return Err(LabError::ContourConvergence { delta });
    }
    Ok(ProjectionFamily { nu, terms: SemiclassicalSymbol::new(fine), j: jmax })
}

/// Default-parameter entry point (K = 64, radius at mid-window).
pub fn semiclassical_projection(
    h: &SemiclassicalSymbol,
    es: &EigenStructure,
    nu: usize,
    jmax: usize,
) -> Result<ProjectionFamily> {
    semiclassical_projection_with(h, es, nu, jmax, CONTOUR_K, 0.5)
}

/// One identity-residual sweep entry. `fit` is None when every residual
/// sits at machine floor (the identity holds exactly; no slope to measure).
pub struct IdentityReport {
    pub name: &'static str,
    pub residuals: Vec<f64>,
    pub fit: Option<PowerFit>,
}

/// Residuals at or below this level count as "identity holds exactly".
pub const IDENTITY_FLOOR: f64 = 1e-10;

impl IdentityReport {
    /// Pass = decay slope at least `min_slope`, or all residuals at floor.
    pub fn passes(&self, min_slope: f64) -> bool {
        match &self.fit {
            Some(f) => f.slope >= min_slope,
            None => true,
        }
    }

    pub fn slope_or_floor(&self) -> f64 {
        self.fit.as_ref().map(|f| f.slope).unwrap_or(f64::INFINITY)
    }
}

/// Evaluate the five projection identities with the exact star oracle over
/// an ħ sweep and fit each decay slope: P#P−P, P−P*, [P,H]_#, P_μ#P_ν
/// (μ≠ν), and ΣP_ν−I.
pub fn verify_projection_identities(
    families: &[ProjectionFamily],
    h: &SemiclassicalSymbol,
    hbars: &[f64],
) -> Result<Vec<IdentityReport>> {
    let grid = h.grid();
    let m = h.m();
    let names =
        ["p_star_p_minus_p", "hermiticity", "commutator_with_h", "cross_branch", "completeness"];
    let mut residuals: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for &hbar in hbars {
        let ps: Vec<MatrixSymbol> = families.iter().map(|f| f.terms.eval(hbar)).collect();
        let he = h.eval(hbar);
        let mut r = [0.0f64; 5];
        for p in &ps {
            r[0] = r[0].max(exact_moyal(p, p, hbar)?.sub(p).sup_norm());
            r[1] = r[1].max(p.sub(&p.adjoint()).sup_norm());
            let hp = exact_moyal(&he, p, hbar)?;
            let ph = exact_moyal(p, &he, hbar)?;
            r[2] = r[2].max(hp.sub(&ph).sup_norm());
        }
        for (a, pa) in ps.iter().enumerate() {
            for (b, pb) in ps.iter().enumerate() {
                if a != b {
                    r[3] = r[3].max(exact_moyal(pa, pb, hbar)?.sup_norm());
                }
            }
        }
        let mut total = MatrixSymbol::zero(grid, m);
        for p in &ps {
            total = total.add(p);
        }
        r[4] = total.sub(&MatrixSymbol::identity(grid, m)).sup_norm();
        for (dst, v) in residuals.iter_mut().zip(r.iter()) {
            dst.push(*v);
        }
    }
    names
        .iter()
        .zip(residuals.into_iter())
        .map(|(&name, res)| {
            let fit = if res.iter().all(|&v| v <= IDENTITY_FLOOR) {
                None
            } else {
                Some(fit_order(hbars, &res, 1e-13)?)
            };
            Ok(IdentityReport { name, residuals: res, fit })
        })
        .collect()
}

/// Spectral correction of an almost-projection operator:
/// 𝒫 = Σ_{μ_k > 1/2} u_k u_k† from the eigendecomposition of the
/// hermitized P̃^w. Requires the spectrum to cluster near {0, 1}.
pub fn exact_projection_correction(op: &QuantizedOperator) -> Result<QuantizedOperator> {
    let d = op.dim();
    let herm = Mat::<faer::complex_native::c64>::from_fn(d, d, |i, j| {
        let v = 0.5 * (op.mat.read(i, j) + op.mat.read(j, i).conj());
        v
    });
    let evd = herm.selfadjoint_eigendecomposition(Side::Lower);
    // every eigenvalue must sit near 0 or near 1
    let mut keep = vec![false; d];
    let mut cluster_worst = 0.0f64;
    for k in 0..d {
        let mu = evd.s().column_vector().read(k).re;
        keep[k] = mu > 0.5;
        cluster_worst = cluster_worst.max(mu.abs().min((mu - 1.0).abs()));
    }
    if cluster_worst > CLUSTERING_TOL {
        return Err(LabError::SpectralClustering { worst: cluster_worst });
    }
    let u = evd.u();
    let mat = Mat::from_fn(d, d, |i, j| {
        let mut acc = faer::complex_native::c64::new(0.0, 0.0);
        for k in 0..d {
            if keep[k] {
                acc += u.read(i, k) * u.read(j, k).conj();
            }
        }
        acc
    });
    Ok(QuantizedOperator { grid: op.grid, m: op.m, hbar: op.hbar, mq: op.mq, mat })
}

/// Block-diagonal part Σ_ν P_ν # Q # P_ν truncated at order jmax.
pub fn block_diagonal_part(
    q: &SemiclassicalSymbol,
    families: &[ProjectionFamily],
    jmax: usize,
) -> Result<SemiclassicalSymbol> {
    let mut terms: Vec<MatrixSymbol> =
        (0..=jmax).map(|_| MatrixSymbol::zero(q.grid(), q.m())).collect();
    for f in families {
        let pq = moyal_product_trunc(&f.terms, q, jmax)?;
        let pqp = moyal_product_trunc(&pq, &f.terms, jmax)?;
        for (acc, j) in terms.iter_mut().zip(0..=jmax) {
            *acc = acc.add(&pqp.term(j));
        }
    }
    Ok(SemiclassicalSymbol::new(terms))
}
