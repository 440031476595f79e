//! Dense m×m complex matrices for small m (≤ 3): the per-node values of
//! matrix symbols and transport matrices. Fixed-capacity storage, no heap.

use num_complex::Complex64 as C64;

pub const MAX_M: usize = 3;
const CAP: usize = MAX_M * MAX_M;

/// Number of cyclic Jacobi sweeps for the hermitian eigensolver.
const JACOBI_SWEEPS: usize = 24;
const JACOBI_TOL: f64 = 1e-15;

#[derive(Clone, Copy, Debug)]
pub struct SmallMat {
    pub m: usize,
    a: [C64; CAP],
}

impl SmallMat {
    #[inline]
    pub fn zero(m: usize) -> Self {
        assert!(m >= 1 && m <= MAX_M);
        SmallMat { m, a: [C64::new(0.0, 0.0); CAP] }
    }

    #[inline]
    pub fn eye(m: usize) -> Self {
        let mut s = Self::zero(m);
        for i in 0..m {
            s[(i, i)] = C64::new(1.0, 0.0);
        }
        s
    }

    pub fn scalar(m: usize, c: C64) -> Self {
        let mut s = Self::zero(m);
        for i in 0..m {
            s[(i, i)] = c;
        }
        s
    }

    pub fn from_rows(m: usize, rows: &[&[C64]]) -> Self {
        let mut s = Self::zero(m);
        for i in 0..m {
            for j in 0..m {
                s[(i, j)] = rows[i][j];
            }
        }
        s
    }

    #[inline]
    pub fn mul(&self, o: &SmallMat) -> SmallMat {
        debug_assert_eq!(self.m, o.m);
        let m = self.m;
        let mut r = SmallMat::zero(m);
        for i in 0..m {
            for k in 0..m {
                let s = self[(i, k)];
                for j in 0..m {
                    r[(i, j)] += s * o[(k, j)];
                }
            }
        }
        r
    }

    #[inline]
    pub fn add(&self, o: &SmallMat) -> SmallMat {
        let mut r = *self;
        for t in 0..self.m * self.m {
            r.a[t] += o.a[t];
        }
        r
    }

    #[inline]
    pub fn sub(&self, o: &SmallMat) -> SmallMat {
        let mut r = *self;
        for t in 0..self.m * self.m {
            r.a[t] -= o.a[t];
        }
        r
    }

    #[inline]
    pub fn scale(&self, c: C64) -> SmallMat {
        let mut r = *self;
        for t in 0..self.m * self.m {
            r.a[t] *= c;
        }
        r
    }

    #[inline]
    pub fn adjoint(&self) -> SmallMat {
        let m = self.m;
        let mut r = SmallMat::zero(m);
        for i in 0..m {
            for j in 0..m {
                r[(i, j)] = self[(j, i)].conj();
            }
        }
        r
    }

    pub fn commutator(&self, o: &SmallMat) -> SmallMat {
        self.mul(o).sub(&o.mul(self))
    }

    pub fn trace(&self) -> C64 {
        let mut t = C64::new(0.0, 0.0);
        for i in 0..self.m {
            t += self[(i, i)];
        }
        t
    }

    pub fn frob_norm(&self) -> f64 {
        let mut s = 0.0;
        for t in 0..self.m * self.m {
            s += self.a[t].norm_sqr();
        }
        s.sqrt()
    }

    /// Operator (spectral) norm: largest singular value, via the hermitian
    /// eigenvalues of A*A.
    pub fn op_norm(&self) -> f64 {
        if self.m == 1 {
            return self[(0, 0)].norm();
        }
        let ata = self.adjoint().mul(self);
        let (ev, _) = ata.herm_eigen();
        ev[self.m - 1].max(0.0).sqrt()
    }

    /// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
    /// Returns eigenvalues ascending and the unitary V with A = V D V*.
    pub fn herm_eigen(&self) -> ([f64; MAX_M], SmallMat) {
        let m = self.m;
        let mut a = *self;
        let mut v = SmallMat::eye(m);
        if m > 1 {
            for _ in 0..JACOBI_SWEEPS {
                let mut off = 0.0;
                for p in 0..m {
                    for q in (p + 1)..m {
                        off += a[(p, q)].norm_sqr();
                    }
                }
                if off.sqrt() <= JACOBI_TOL * (1.0 + a.frob_norm()) {
                    break;
                }
                for p in 0..m {
                    for q in (p + 1)..m {
                        jacobi_rotate(&mut a, &mut v, p, q);
                    }
                }
            }
        }
        // sort ascending, permuting columns of v
        let mut ev = [0.0; MAX_M];
        let mut idx = [0usize; MAX_M];
        for i in 0..m {
            ev[i] = a[(i, i)].re;
            idx[i] = i;
        }
        idx[..m].sort_by(|&i, &j| ev[i].partial_cmp(&ev[j]).unwrap());
        let mut evs = [0.0; MAX_M];
        let mut vs = SmallMat::zero(m);
        for (c, &i) in idx[..m].iter().enumerate() {
            evs[c] = ev[i];
            for r in 0..m {
                vs[(r, c)] = v[(r, i)];
            }
        }
        (evs, vs)
    }

    /// Inverse by Gaussian elimination with partial pivoting.
    pub fn inverse(&self) -> SmallMat {
        let m = self.m;
        let mut a = *self;
        let mut r = SmallMat::eye(m);
        for col in 0..m {
            let mut piv = col;
            let mut best = a[(col, col)].norm();
            for row in (col + 1)..m {
                let v = a[(row, col)].norm();
                if v > best {
                    best = v;
                    piv = row;
                }
            }
            if piv != col {
                for j in 0..m {
                    let t = a[(col, j)];
                    a[(col, j)] = a[(piv, j)];
                    a[(piv, j)] = t;
                    let t = r[(col, j)];
                    r[(col, j)] = r[(piv, j)];
                    r[(piv, j)] = t;
                }
            }
            let d = a[(col, col)];
            let di = C64::new(1.0, 0.0) / d;
            for j in 0..m {
                a[(col, j)] *= di;
                r[(col, j)] *= di;
            }
            for row in 0..m {
                if row == col {
                    continue;
                }
                let f = a[(row, col)];
                if f.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..m {
                    let ac = a[(col, j)];
                    let rc = r[(col, j)];
                    a[(row, j)] -= f * ac;
                    r[(row, j)] -= f * rc;
                }
            }
        }
        r
    }

    /// Polar re-unitarization by Newton iteration T ← (T + T^{-*})/2.
    /// Converges quadratically for matrices already close to unitary.
    pub fn reunitarize(&self) -> SmallMat {
        let mut t = *self;
        for _ in 0..4 {
            let corr = t.inverse().adjoint();
            t = t.add(&corr).scale(C64::new(0.5, 0.0));
            let d = t.adjoint().mul(&t).sub(&SmallMat::eye(self.m)).frob_norm();
            if d < 1e-15 {
                break;
            }
        }
        t
    }
}

impl std::ops::Index<(usize, usize)> for SmallMat {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.a[i * self.m + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SmallMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.a[i * self.m + j]
    }
}

/// One complex Jacobi rotation zeroing a[(p,q)], accumulating into v.
fn jacobi_rotate(a: &mut SmallMat, v: &mut SmallMat, p: usize, q: usize) {
    let apq = a[(p, q)];
    let napq = apq.norm();
    if napq < 1e-300 {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let phase = apq / napq;
    // diagonalize the 2x2 hermitian block [[app, napq],[napq, aqq]] after
    // phase removal
    let theta = 0.5 * (2.0 * napq).atan2(app - aqq);
    let c = theta.cos();
    let s = theta.sin();
    let m = a.m;
    // columns update: A <- J* A J with J = [[c, -s*phase],[s*conj(phase), c]]
    // acting on (p,q) plane; accumulate V <- V J.
    let jpp = C64::new(c, 0.0);
    let jpq = -phase * s;
    let jqp = phase.conj() * s;
    let jqq = C64::new(c, 0.0);
    for r in 0..m {
        let arp = a[(r, p)];
        let arq = a[(r, q)];
        a[(r, p)] = arp * jpp + arq * jqp;
        a[(r, q)] = arp * jpq + arq * jqq;
    }
    for cidx in 0..m {
        let apc = a[(p, cidx)];
        let aqc = a[(q, cidx)];
        a[(p, cidx)] = jpp.conj() * apc + jqp.conj() * aqc;
        a[(q, cidx)] = jpq.conj() * apc + jqq.conj() * aqc;
    }
    for r in 0..m {
        let vrp = v[(r, p)];
        let vrq = v[(r, q)];
        v[(r, p)] = vrp * jpp + vrq * jqp;
        v[(r, q)] = vrp * jpq + vrq * jqq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eigen_diag() {
        let mut a = SmallMat::zero(2);
        a[(0, 0)] = c(3.0, 0.0);
        a[(1, 1)] = c(-1.0, 0.0);
        let (ev, v) = a.herm_eigen();
        assert!((ev[0] + 1.0).abs() < 1e-14);
        assert!((ev[1] - 3.0).abs() < 1e-14);
        // V unitary
        let d = v.adjoint().mul(&v).sub(&SmallMat::eye(2)).frob_norm();
        assert!(d < 1e-13);
    }

    #[test]
    fn eigen_pauli_x() {
        // sigma_x has eigenvalues ±1
        let mut a = SmallMat::zero(2);
        a[(0, 1)] = c(1.0, 0.0);
        a[(1, 0)] = c(1.0, 0.0);
        let (ev, v) = a.herm_eigen();
        assert!((ev[0] + 1.0).abs() < 1e-13);
        assert!((ev[1] - 1.0).abs() < 1e-13);
        // reconstruct
        let mut d = SmallMat::zero(2);
        d[(0, 0)] = c(ev[0], 0.0);
        d[(1, 1)] = c(ev[1], 0.0);
        let rec = v.mul(&d).mul(&v.adjoint());
        assert!(rec.sub(&a).frob_norm() < 1e-13);
    }

    #[test]
    fn eigen_random_herm_3() {
        // fixed pseudo-random hermitian 3x3; checks reconstruction
        let mut a = SmallMat::zero(3);
        let vals = [
            (0.7, 0.0),
            (0.3, 0.4),
            (-0.2, 0.1),
            (0.3, -0.4),
            (-1.1, 0.0),
            (0.5, -0.6),
            (-0.2, -0.1),
            (0.5, 0.6),
            (0.25, 0.0),
        ];
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = c(vals[i * 3 + j].0, vals[i * 3 + j].1);
            }
        }
        let (ev, v) = a.herm_eigen();
        let mut d = SmallMat::zero(3);
        for i in 0..3 {
            d[(i, i)] = c(ev[i], 0.0);
        }
        let rec = v.mul(&d).mul(&v.adjoint());
        assert!(rec.sub(&a).frob_norm() < 1e-12, "rec err {}", rec.sub(&a).frob_norm());
        assert!(ev[0] <= ev[1] && ev[1] <= ev[2]);
    }

    #[test]
    fn inverse_3x3() {
        let mut a = SmallMat::zero(3);
        let vals = [2.0, 1.0, 0.5, -1.0, 3.0, 0.0, 0.2, -0.4, 1.5];
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = c(vals[i * 3 + j], 0.1 * (i as f64 - j as f64));
            }
        }
        let inv = a.inverse();
        let d = a.mul(&inv).sub(&SmallMat::eye(3)).frob_norm();
        assert!(d < 1e-13, "inverse defect {}", d);
    }

    #[test]
    fn op_norm_diag() {
        let mut a = SmallMat::zero(2);
        a[(0, 0)] = c(1.0, 0.0);
        a[(1, 1)] = c(-3.0, 0.0);
        assert!((a.op_norm() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reunitarize_near_unitary() {
        let mut a = SmallMat::eye(2);
        a[(0, 1)] = c(1e-4, 2e-5);
        let u = a.reunitarize();
        let d = u.adjoint().mul(&u).sub(&SmallMat::eye(2)).frob_norm();
        assert!(d < 1e-14);
    }
}
