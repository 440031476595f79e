//! Phase-space discretization: the periodic box [−L,L)², sampled
//! matrix-valued symbols, spectral derivatives, Poisson brackets and
//! sup-norms. Everything downstream computes on these types.

use crate::error::{LabError, Result};
use crate::fft;
use crate::smallmat::SmallMat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

/// Maximum spectral derivative order (the Moyal terms need up to N+2 ≤ 8).
pub const DERIV_CAP: usize = 8;

/// Hermiticity certification threshold (max-node ‖A − A*‖).
pub const HERM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseGrid {
    /// Half-width of the box [−L, L) per axis.
    pub l: f64,
    /// Points along x (power of two).
    pub mx: usize,
    /// Points along xi (power of two).
    pub mxi: usize,
}

impl PhaseGrid {
    pub fn new(l: f64, mx: usize, mxi: usize) -> Self {
        assert!(l > 0.0);
        assert!(mx.is_power_of_two() && mxi.is_power_of_two());
        PhaseGrid { l, mx, mxi }
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * self.l / self.mx as f64
    }

    #[inline]
    pub fn dxi(&self) -> f64 {
        2.0 * self.l / self.mxi as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        -self.l + i as f64 * self.dx()
    }

    #[inline]
    pub fn xi(&self, k: usize) -> f64 {
        -self.l + k as f64 * self.dxi()
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.mx * self.mxi
    }

    #[inline]
    pub fn node(&self, ix: usize, ixi: usize) -> usize {
        ix * self.mxi + ixi
    }

    #[inline]
    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let ix = node / self.mxi;
        let ixi = node % self.mxi;
        (self.x(ix), self.xi(ixi))
    }

    /// Spatial wavenumber of x-mode k (period 2L).
    #[inline]
    pub fn kx(&self, k: usize) -> f64 {
        std::f64::consts::PI / self.l * fft::mode_index(k, self.mx) as f64
    }

    #[inline]
    pub fn kxi(&self, k: usize) -> f64 {
        std::f64::consts::PI / self.l * fft::mode_index(k, self.mxi) as f64
    }
}

/// m×m complex-matrix-valued function sampled on the grid. Storage is
/// plane-major: plane p = i*m+j holds entry (i,j) over all nodes,
/// node = ix*mxi + ixi.
#[derive(Clone, Debug)]
pub struct MatrixSymbol {
    pub grid: PhaseGrid,
    pub m: usize,
    data: Vec<C64>,
}

impl MatrixSymbol {
    pub fn zero(grid: PhaseGrid, m: usize) -> Self {
        MatrixSymbol { grid, m, data: vec![C64::new(0.0, 0.0); m * m * grid.n_nodes()] }
    }

    pub fn from_fn<F>(grid: PhaseGrid, m: usize, f: F) -> Self
    where
        F: Fn(f64, f64) -> SmallMat + Sync,
    {
        let nn = grid.n_nodes();
        let mats: Vec<SmallMat> = (0..nn)
            .into_par_iter()
            .map(|node| {
                let (x, xi) = grid.node_coords(node);
                f(x, xi)
            })
            .collect();
        let mut s = Self::zero(grid, m);
        for (node, mat) in mats.iter().enumerate() {
            s.set(node, mat);
        }
        s
    }

    /// Scalar (m=1) symbol from a real- or complex-valued function.
    pub fn scalar_from_fn<F>(grid: PhaseGrid, f: F) -> Self
    where
        F: Fn(f64, f64) -> C64 + Sync,
    {
        Self::from_fn(grid, 1, |x, xi| {
            let mut mat = SmallMat::zero(1);
            mat[(0, 0)] = f(x, xi);
            mat
        })
    }

    pub fn identity(grid: PhaseGrid, m: usize) -> Self {
        Self::from_fn(grid, m, |_, _| SmallMat::eye(m))
    }

    #[inline]
    pub fn plane(&self, p: usize) -> &[C64] {
        let nn = self.grid.n_nodes();
        &self.data[p * nn..(p + 1) * nn]
    }

    #[inline]
    pub fn plane_mut(&mut self, p: usize) -> &mut [C64] {
        let nn = self.grid.n_nodes();
        &mut self.data[p * nn..(p + 1) * nn]
    }

    #[inline]
    pub fn get(&self, node: usize) -> SmallMat {
        let nn = self.grid.n_nodes();
        let mut mat = SmallMat::zero(self.m);
        for i in 0..self.m {
            for j in 0..self.m {
                mat[(i, j)] = self.data[(i * self.m + j) * nn + node];
            }
        }
        mat
    }

    #[inline]
    pub fn set(&mut self, node: usize, mat: &SmallMat) {
        let nn = self.grid.n_nodes();
        for i in 0..self.m {
            for j in 0..self.m {
                self.data[(i * self.m + j) * nn + node] = mat[(i, j)];
            }
        }
    }

    pub fn check_compatible(&self, o: &MatrixSymbol) -> Result<()> {
        if self.grid != o.grid || self.m != o.m {
            return Err(LabError::GridMismatch(format!(
                "({:?}, m={}) vs ({:?}, m={})",
                self.grid, self.m, o.grid, o.m
            )));
        }
        Ok(())
    }

    /// Entrywise spectral derivative ∂_x^alpha ∂_xi^beta.
    pub fn partial_derivative(&self, alpha: usize, beta: usize) -> Result<MatrixSymbol> {
        if alpha + beta > DERIV_CAP {
            return Err(LabError::DerivativeCap { requested: alpha + beta, cap: DERIV_CAP });
        }
        if alpha == 0 && beta == 0 {
            return Ok(self.clone());
        }
        let (nx, nxi) = (self.grid.mx, self.grid.mxi);
        let mut out = self.clone();
        let grid = self.grid;
        out.data.par_chunks_exact_mut(grid.n_nodes()).for_each(|plane| {
            fft::fft2(plane, nx, nxi);
            for ix in 0..nx {
                // zero the Nyquist mode for odd derivative orders
                let fx = if alpha % 2 == 1 && ix == nx / 2 {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new(0.0, grid.kx(ix)).powu(alpha as u32)
                };
                for ik in 0..nxi {
                    let fxi = if beta % 2 == 1 && ik == nxi / 2 {
                        C64::new(0.0, 0.0)
                    } else {
                        C64::new(0.0, grid.kxi(ik)).powu(beta as u32)
                    };
                    plane[ix * nxi + ik] *= fx * fxi;
                }
            }
            fft::ifft2(plane, nx, nxi);
        });
        Ok(out)
    }

    /// Pointwise matrix product A(x,ξ)·B(x,ξ).
    pub fn mul(&self, o: &MatrixSymbol) -> MatrixSymbol {
        self.check_compatible(o).unwrap();
        let nn = self.grid.n_nodes();
        let m = self.m;
        let mut out = MatrixSymbol::zero(self.grid, m);
        let (a, b, c) = (&self.data, &o.data, &mut out.data);
        for i in 0..m {
            for j in 0..m {
                let dst = (i * m + j) * nn;
                for k in 0..m {
                    let pa = (i * m + k) * nn;
                    let pb = (k * m + j) * nn;
                    for node in 0..nn {
                        c[dst + node] += a[pa + node] * b[pb + node];
                    }
                }
            }
        }
        out
    }

    pub fn add(&self, o: &MatrixSymbol) -> MatrixSymbol {
        self.check_compatible(o).unwrap();
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(o.data.iter()) {
            *v += w;
        }
        out
    }

    pub fn sub(&self, o: &MatrixSymbol) -> MatrixSymbol {
        self.check_compatible(o).unwrap();
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(o.data.iter()) {
            *v -= w;
        }
        out
    }

    pub fn scale(&self, c: C64) -> MatrixSymbol {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= c;
        }
        out
    }

    pub fn adjoint(&self) -> MatrixSymbol {
        let nn = self.grid.n_nodes();
        let m = self.m;
        let mut out = MatrixSymbol::zero(self.grid, m);
        for i in 0..m {
            for j in 0..m {
                let dst = (i * m + j) * nn;
                let src = (j * m + i) * nn;
                for node in 0..nn {
                    out.data[dst + node] = self.data[src + node].conj();
                }
            }
        }
        out
    }

    pub fn commutator(&self, o: &MatrixSymbol) -> MatrixSymbol {
        self.mul(o).sub(&o.mul(self))
    }

    /// Max over nodes of the matrix operator norm (largest singular value).
    pub fn sup_norm(&self) -> f64 {
        let nn = self.grid.n_nodes();
        if self.m == 1 {
            return self.plane(0).iter().map(|v| v.norm()).fold(0.0, f64::max);
        }
        (0..nn)
            .into_par_iter()
            .map(|node| self.get(node).op_norm())
            .reduce(|| 0.0, f64::max)
    }

    /// Max-node ‖A − A*‖ (hermiticity defect).
    pub fn hermitian_defect(&self) -> f64 {
        self.sub(&self.adjoint()).sup_norm()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_defect() <= HERM_TOL
    }

    /// For scalar (m=1) symbols: the single plane.
    pub fn scalar_plane(&self) -> &[C64] {
        assert_eq!(self.m, 1);
        self.plane(0)
    }

    /// Promote a scalar symbol to λ·I_m.
    pub fn scalar_to_matrix(&self, m: usize) -> MatrixSymbol {
        assert_eq!(self.m, 1);
        let nn = self.grid.n_nodes();
        let mut out = MatrixSymbol::zero(self.grid, m);
        for i in 0..m {
            let dst = (i * m + i) * nn;
            for node in 0..nn {
                out.data[dst + node] = self.data[node];
            }
        }
        out
    }

    /// The scalar part tr(A)/m and the max-node norm of the off-scalar rest.
    pub fn scalar_part(&self) -> (MatrixSymbol, f64) {
        let nn = self.grid.n_nodes();
        let m = self.m;
        let mut tr = MatrixSymbol::zero(self.grid, 1);
        for i in 0..m {
            let src = (i * m + i) * nn;
            for node in 0..nn {
                tr.data[node] += self.data[src + node];
            }
        }
        for node in 0..nn {
            tr.data[node] /= m as f64;
        }
        let defect = self.sub(&tr.scalar_to_matrix(m)).sup_norm();
        (tr, defect)
    }
}

/// Truncated ħ-power series of matrix symbols: A ~ Σ_j ħ^j A_j.
#[derive(Clone, Debug)]
pub struct SemiclassicalSymbol {
    pub terms: Vec<MatrixSymbol>,
}

impl SemiclassicalSymbol {
    pub fn new(terms: Vec<MatrixSymbol>) -> Self {
        assert!(!terms.is_empty());
        for t in &terms[1..] {
            terms[0].check_compatible(t).unwrap();
        }
        SemiclassicalSymbol { terms }
    }

    pub fn from_principal(a: MatrixSymbol) -> Self {
        SemiclassicalSymbol { terms: vec![a] }
    }

    pub fn order(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn grid(&self) -> PhaseGrid {
        self.terms[0].grid
    }

    pub fn m(&self) -> usize {
        self.terms[0].m
    }

    /// Term j, or a zero symbol beyond the truncation order.
    pub fn term(&self, j: usize) -> MatrixSymbol {
        if j < self.terms.len() {
            self.terms[j].clone()
        } else {
            MatrixSymbol::zero(self.grid(), self.m())
        }
    }

    /// Σ_j ħ^j A_j evaluated at a concrete ħ.
    pub fn eval(&self, hbar: f64) -> MatrixSymbol {
        let mut out = self.terms[0].clone();
        let mut pow = 1.0;
        for t in &self.terms[1..] {
            pow *= hbar;
            out = out.add(&t.scale(C64::new(pow, 0.0)));
        }
        out
    }
}

/// Order function g for the gap condition.
#[derive(Clone, Debug)]
pub enum OrderFunction {
    ConstantOne,
    JapaneseBracket { a: f64 },
}

impl OrderFunction {
    pub fn sample(&self, x: f64, xi: f64) -> f64 {
        match self {
            OrderFunction::ConstantOne => 1.0,
            OrderFunction::JapaneseBracket { a } => (1.0 + x * x + xi * xi).powf(a / 2.0),
        }
    }
}

/// {A,B} = ∂_ξA·∂_xB − ∂_xA·∂_ξB (the paper's convention; matrix order
/// matters and in general {A,B} ≠ −{B,A}).
pub fn poisson_bracket(a: &MatrixSymbol, b: &MatrixSymbol) -> Result<MatrixSymbol> {
    a.check_compatible(b)?;
    let a_x = a.partial_derivative(1, 0)?;
    let a_xi = a.partial_derivative(0, 1)?;
    let b_x = b.partial_derivative(1, 0)?;
    let b_xi = b.partial_derivative(0, 1)?;
    Ok(a_xi.mul(&b_x).sub(&a_x.mul(&b_xi)))
}
