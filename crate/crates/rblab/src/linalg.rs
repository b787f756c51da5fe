//! Dense complex matrices and the handful of decompositions the lab needs.
//!
//! `CMat` is a small row-major container; the heavy factorizations are
//! delegated to `faer`.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use faer::complex_native::c64;
use faer::prelude::*;
use faer::{Mat, Side};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMat { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        CMat { rows, cols, data }
    }

    /// Builds a matrix from real row slices.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        Self::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn diag(d: &[C64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &z) in d.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    /// Column vector.
    pub fn col_vec(v: &[C64]) -> Self {
        Self::from_vec(v.len(), 1, v.to_vec())
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[C64]) {
        for i in 0..self.rows {
            self[(i, j)] = v[i];
        }
    }

    /// Columns `cols` as a new matrix.
    pub fn select_cols(&self, cols: &[usize]) -> CMat {
        CMat::from_fn(self.rows, cols.len(), |i, k| self[(i, cols[k])])
    }

    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> CMat {
        CMat::from_fn(nr, nc, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &CMat) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> CMat {
        CMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: C64) -> CMat {
        CMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_re(&self, s: f64) -> CMat {
        self.scale(C64::new(s, 0.0))
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> CMat {
        CMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| f(z)).collect() }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: C64, other: &CMat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn matmul(&self, other: &CMat) -> CMat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = CMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Row vector times matrix.
    pub fn vecmat(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.rows, v.len(), "vecmat shape mismatch");
        let mut out = vec![ZERO; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    pub fn kron(&self, other: &CMat) -> CMat {
        let (r, c) = (self.rows * other.rows, self.cols * other.cols);
        CMat::from_fn(r, c, |i, j| {
            self[(i / other.rows, j / other.cols)] * other[(i % other.rows, j % other.cols)]
        })
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `Tr[self^† other]`.
    pub fn inner(&self, other: &CMat) -> C64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn powi(&self, k: usize) -> CMat {
        assert!(self.is_square());
        let mut result = CMat::identity(self.rows);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = result.matmul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.matmul(&base);
            }
        }
        result
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && (self - &self.adjoint()).max_abs() <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.is_square() && (&self.adjoint().matmul(self) - &CMat::identity(self.rows)).max_abs() <= tol
    }

    pub fn hermitian_part(&self) -> CMat {
        (self + &self.adjoint()).scale_re(0.5)
    }

    pub fn to_faer(&self) -> Mat<c64> {
        Mat::from_fn(self.rows, self.cols, |i, j| {
            let z = self[(i, j)];
            c64::new(z.re, z.im)
        })
    }

    pub fn from_faer(m: faer::MatRef<'_, c64>) -> CMat {
        CMat::from_fn(m.nrows(), m.ncols(), |i, j| {
            let z = m.read(i, j);
            C64::new(z.re, z.im)
        })
    }

    /// Eigenvalues and right eigenvectors (columns) of a general square matrix.
    pub fn eig(&self) -> (Vec<C64>, CMat) {
        assert!(self.is_square());
        let e = self.to_faer().eigendecomposition::<c64>();
        let vals = (0..self.rows)
            .map(|i| {
                let z = e.s().column_vector().read(i);
                C64::new(z.re, z.im)
            })
            .collect();
        (vals, CMat::from_faer(e.u()))
    }

    pub fn eigvals(&self) -> Vec<C64> {
        assert!(self.is_square());
        self.to_faer()
            .eigenvalues::<c64>()
            .into_iter()
            .map(|z| C64::new(z.re, z.im))
            .collect()
    }

    /// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
    pub fn herm_eig(&self) -> (Vec<f64>, CMat) {
        assert!(self.is_square());
        let h = self.hermitian_part().to_faer();
        let e = h.selfadjoint_eigendecomposition(Side::Lower);
        let vals = (0..self.rows).map(|i| e.s().column_vector().read(i).re).collect();
        (vals, CMat::from_faer(e.u()))
    }

    pub fn herm_eigvals(&self) -> Vec<f64> {
        self.herm_eig().0
    }

    /// Full SVD `self = U diag(s) V^†`, singular values non-increasing.
    pub fn svd(&self) -> (CMat, Vec<f64>, CMat) {
        let f = self.to_faer();
        let s = f.svd();
        let sv: Vec<f64> = (0..self.rows.min(self.cols))
            .map(|i| s.s_diagonal().read(i).re)
            .collect();
        (CMat::from_faer(s.u()), sv, CMat::from_faer(s.v()))
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.to_faer().singular_values();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        s
    }

    pub fn spectral_norm(&self) -> f64 {
        self.singular_values().first().copied().unwrap_or(0.0)
    }

    pub fn trace_norm(&self) -> f64 {
        self.singular_values().iter().sum()
    }

    pub fn rank(&self, rel_tol: f64) -> usize {
        let s = self.singular_values();
        let top = s.first().copied().unwrap_or(0.0);
        if top == 0.0 {
            return 0;
        }
        s.iter().filter(|&&x| x > rel_tol * top).count()
    }

    pub fn inverse(&self) -> CMat {
        assert!(self.is_square());
        CMat::from_faer(self.to_faer().partial_piv_lu().inverse().as_ref())
    }

    /// Solves `self X = b`.
    pub fn solve(&self, b: &CMat) -> CMat {
        assert!(self.is_square());
        CMat::from_faer(self.to_faer().partial_piv_lu().solve(&b.to_faer()).as_ref())
    }

    /// Moore-Penrose pseudo-inverse with relative singular value cutoff.
    pub fn pinv(&self, rel_tol: f64) -> CMat {
        let (u, s, v) = self.svd();
        let top = s.first().copied().unwrap_or(0.0);
        let k = s.len();
        let mut out = CMat::zeros(self.cols, self.rows);
        for idx in 0..k {
            if s[idx] <= rel_tol * top || s[idx] == 0.0 {
                continue;
            }
            let inv = 1.0 / s[idx];
            for i in 0..self.cols {
                let vi = v[(i, idx)] * inv;
                for j in 0..self.rows {
                    out[(i, j)] += vi * u[(j, idx)].conj();
                }
            }
        }
        out
    }

    /// Least-squares solution of `self x = b` via the pseudo-inverse.
    pub fn lstsq(&self, b: &[C64]) -> Vec<C64> {
        self.pinv(1e-13).matvec(b)
    }

    /// Orthonormal basis for the column space (thin QR).
    pub fn orthonormal_columns(&self) -> CMat {
        CMat::from_faer(self.to_faer().qr().compute_thin_q().as_ref())
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<'a> Add<&'a CMat> for &'a CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add shape mismatch");
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub<&'a CMat> for &'a CMat {
    type Output = CMat;
    fn sub(self, rhs: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub shape mismatch");
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<'a> Mul<&'a CMat> for &'a CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        self.matmul(rhs)
    }
}

impl Neg for &CMat {
    type Output = CMat;
    fn neg(self) -> CMat {
        self.scale_re(-1.0)
    }
}

impl AddAssign<&CMat> for CMat {
    fn add_assign(&mut self, rhs: &CMat) {
        self.axpy(ONE, rhs);
    }
}

pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn vnorm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Outer product `|a><b|`.
pub fn outer(a: &[C64], b: &[C64]) -> CMat {
    CMat::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
}

/// Single-qubit Pauli matrices in the order I, X, Y, Z.
pub fn pauli(k: usize) -> CMat {
    match k {
        0 => CMat::identity(2),
        1 => CMat::from_vec(2, 2, vec![ZERO, ONE, ONE, ZERO]),
        2 => CMat::from_vec(2, 2, vec![ZERO, -I, I, ZERO]),
        3 => CMat::from_vec(2, 2, vec![ONE, ZERO, ZERO, -ONE]),
        _ => panic!("pauli index out of range"),
    }
}

/// Tensor product of Pauli matrices; the first index is the leftmost factor.
pub fn pauli_string(idx: &[usize]) -> CMat {
    idx.iter().fold(CMat::identity(1), |acc, &k| acc.kron(&pauli(k)))
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar-random unitary: QR of a Ginibre matrix with the phase of R's diagonal removed.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let g = ginibre(d, d, rng).to_faer();
    let qr = g.qr();
    let q = CMat::from_faer(qr.compute_q().as_ref());
    let r = CMat::from_faer(qr.compute_r().as_ref());
    let mut u = q;
    for j in 0..d {
        let rjj = r[(j, j)];
        let ph = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { ONE };
        for i in 0..d {
            u[(i, j)] *= ph;
        }
    }
    u
}

pub fn haar_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<C64> {
    let g = ginibre(d, 1, rng);
    let n = g.fro_norm();
    g.data().iter().map(|z| z / n).collect()
}

pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    ginibre(d, d, rng).hermitian_part()
}

/// Random density matrix from the Hilbert-Schmidt ensemble.
pub fn random_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let g = ginibre(d, d, rng);
    let rho = g.matmul(&g.adjoint());
    let t = rho.trace();
    rho.scale(ONE / t)
}

/// Kraus operators of a random CPTP map with `k` operators (blocks of a Haar isometry).
pub fn random_kraus<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Vec<CMat> {
    let u = haar_unitary(d * k, rng);
    (0..k).map(|a| u.block(a * d, 0, d, d)).collect()
}

/// Rotation `exp(-i theta/2 n.sigma)` for a unit axis `n`.
pub fn rotation(axis: [f64; 3], theta: f64) -> CMat {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let mut m = CMat::identity(2).scale_re(c);
    for (k, a) in axis.iter().enumerate() {
        m.axpy(C64::new(0.0, -s * a / norm), &pauli(k + 1));
    }
    m
}
