//! Liouville representation of states, effects and channels.
//!
//! Operators are expanded in a fixed orthonormal Hermitian basis: normalized
//! Pauli strings when `d = 2^q` (lexicographic in I, X, Y, Z with the first
//! qubit leftmost), generalized Gell-Mann matrices otherwise (identity first,
//! then symmetric pairs, antisymmetric pairs, diagonal elements).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use faer::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{pauli_string, CMat, C64, I, ONE, ZERO};
use crate::sdp::{SdpError, SdpOptions, SdpProblem, SparseSym};

/// Default eigenvalue floor for CP tests.
pub const CP_TOL: f64 = 1e-9;

/// Largest dimension accepted by the diamond-norm solver.
pub const DIAMOND_MAX_DIM: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SuperOpError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty Kraus list")]
    EmptyKraus,
    #[error("diamond norm is limited to d <= {max}, got d = {d}")]
    DiamondTooLarge { d: usize, max: usize },
    #[error("diamond norm requires a hermiticity-preserving map (Choi anti-Hermitian part {0:.3e})")]
    NotHermiticityPreserving(f64),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

fn is_power_of_two(d: usize) -> bool {
    d >= 1 && d & (d - 1) == 0
}

fn build_basis(d: usize) -> Vec<CMat> {
    let norm = 1.0 / (d as f64).sqrt();
    if is_power_of_two(d) {
        let q = d.trailing_zeros() as usize;
        let mut out = Vec::with_capacity(d * d);
        for code in 0..d * d {
            let idx: Vec<usize> = (0..q).map(|k| (code >> (2 * (q - 1 - k))) & 3).collect();
            out.push(pauli_string(&idx).scale_re(norm));
        }
        return out;
    }
    let mut out = vec![CMat::identity(d).scale_re(norm)];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..d {
        for k in j + 1..d {
            let mut m = CMat::zeros(d, d);
            m[(j, k)] = C64::new(s, 0.0);
            m[(k, j)] = C64::new(s, 0.0);
            out.push(m);
        }
    }
    for j in 0..d {
        for k in j + 1..d {
            let mut m = CMat::zeros(d, d);
            m[(j, k)] = C64::new(0.0, -s);
            m[(k, j)] = C64::new(0.0, s);
            out.push(m);
        }
    }
    for l in 1..d {
        let c = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut m = CMat::zeros(d, d);
        for k in 0..l {
            m[(k, k)] = C64::new(c, 0.0);
        }
        m[(l, l)] = C64::new(-(l as f64) * c, 0.0);
        out.push(m);
    }
    out
}

/// The canonical operator basis for dimension `d` (cached).
pub fn operator_basis(d: usize) -> Arc<Vec<CMat>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<CMat>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("basis cache poisoned");
    guard.entry(d).or_insert_with(|| Arc::new(build_basis(d))).clone()
}

/// Coefficient vector `|X>>` with entries `Tr[b_k^† X]`.
pub fn vec_op(x: &CMat) -> Vec<C64> {
    let d = x.nrows();
    operator_basis(d).iter().map(|b| b.inner(x)).collect()
}

/// Inverse of [`vec_op`].
pub fn devec(d: usize, v: &[C64]) -> CMat {
    assert_eq!(v.len(), d * d, "coefficient vector has wrong length");
    let basis = operator_basis(d);
    let mut out = CMat::zeros(d, d);
    for (b, &c) in basis.iter().zip(v) {
        if c != ZERO {
            out.axpy(c, b);
        }
    }
    out
}

/// Co-vector `<<E|` such that `<<E|v = Tr[E^† devec(v)]` is a plain dot product.
pub fn covec(e: &CMat) -> Vec<C64> {
    vec_op(e).into_iter().map(|z| z.conj()).collect()
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Partial trace over the second (output) factor of a `(d_in d_out)`-square matrix.
pub fn trace_out_second(m: &CMat, d_in: usize, d_out: usize) -> CMat {
    CMat::from_fn(d_in, d_in, |i, j| (0..d_out).map(|k| m[(i * d_out + k, j * d_out + k)]).sum())
}

/// Trace norm of a Hermitian matrix.
pub fn hermitian_trace_norm(h: &CMat) -> f64 {
    h.herm_eigvals().iter().map(|x| x.abs()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiamondNorm {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperOp {
    dim: usize,
    mat: CMat,
}

impl SuperOp {
    pub fn new(dim: usize, mat: CMat) -> Result<Self, SuperOpError> {
        if mat.nrows() != dim * dim || mat.ncols() != dim * dim {
            return Err(SuperOpError::DimensionMismatch { expected: dim * dim, found: mat.nrows() });
        }
        Ok(SuperOp { dim, mat })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn into_mat(self) -> CMat {
        self.mat
    }

    pub fn identity(d: usize) -> Self {
        SuperOp { dim: d, mat: CMat::identity(d * d) }
    }

    pub fn zero(d: usize) -> Self {
        SuperOp { dim: d, mat: CMat::zeros(d * d, d * d) }
    }

    /// Builds the matrix of an arbitrary linear map given as a closure.
    pub fn from_map(d: usize, f: impl Fn(&CMat) -> CMat) -> Self {
        let basis = operator_basis(d);
        let n = d * d;
        let mut mat = CMat::zeros(n, n);
        for (k, bk) in basis.iter().enumerate() {
            let img = f(bk);
            for (j, bj) in basis.iter().enumerate() {
                mat[(j, k)] = bj.inner(&img);
            }
        }
        SuperOp { dim: d, mat }
    }

    pub fn from_kraus(kraus: &[CMat]) -> Result<Self, SuperOpError> {
        let first = kraus.first().ok_or(SuperOpError::EmptyKraus)?;
        let d = first.nrows();
        for k in kraus {
            if k.nrows() != d || k.ncols() != d {
                return Err(SuperOpError::DimensionMismatch { expected: d, found: k.nrows().max(k.ncols()) });
            }
        }
        let adj: Vec<CMat> = kraus.iter().map(|k| k.adjoint()).collect();
        Ok(Self::from_map(d, |x| {
            let mut out = CMat::zeros(d, d);
            for (k, ka) in kraus.iter().zip(&adj) {
                out += &k.matmul(x).matmul(ka);
            }
            out
        }))
    }

    /// Conjugation `rho -> U rho U^†`.
    pub fn unitary(u: &CMat) -> Self {
        Self::from_kraus(std::slice::from_ref(u)).expect("unitary is square")
    }

    /// Depolarizing channel with matrix `diag(1, 1-p, ..., 1-p)`.
    pub fn depolarizing(d: usize, p: f64) -> Self {
        let n = d * d;
        let mut mat = CMat::identity(n).scale_re(1.0 - p);
        mat[(0, 0)] = ONE;
        SuperOp { dim: d, mat }
    }

    /// Diagonal map in the operator basis.
    pub fn diagonal(d: usize, diag: &[f64]) -> Self {
        assert_eq!(diag.len(), d * d);
        let v: Vec<C64> = diag.iter().map(|&x| C64::new(x, 0.0)).collect();
        SuperOp { dim: d, mat: CMat::diag(&v) }
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        devec(self.dim, &self.mat.matvec(&vec_op(x)))
    }

    pub fn apply_vec(&self, v: &[C64]) -> Vec<C64> {
        self.mat.matvec(v)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &SuperOp) -> SuperOp {
        assert_eq!(self.dim, other.dim, "compose dimension mismatch");
        SuperOp { dim: self.dim, mat: self.mat.matmul(&other.mat) }
    }

    pub fn add(&self, other: &SuperOp) -> SuperOp {
        SuperOp { dim: self.dim, mat: &self.mat + &other.mat }
    }

    pub fn sub(&self, other: &SuperOp) -> SuperOp {
        SuperOp { dim: self.dim, mat: &self.mat - &other.mat }
    }

    pub fn scale(&self, s: f64) -> SuperOp {
        SuperOp { dim: self.dim, mat: self.mat.scale_re(s) }
    }

    /// Similarity transform `S self S^{-1}`.
    pub fn conjugate_by(&self, s: &CMat, s_inv: &CMat) -> SuperOp {
        SuperOp { dim: self.dim, mat: s.matmul(&self.mat).matmul(s_inv) }
    }

    /// Images of the matrix units `E_ij`, indexed `[i * d + j]`.
    fn unit_images(&self) -> Vec<CMat> {
        let d = self.dim;
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let mut e = CMat::zeros(d, d);
                e[(i, j)] = ONE;
                out.push(self.apply(&e));
            }
        }
        out
    }

    /// Choi matrix `J = sum_ij E_ij ⊗ Φ(E_ij)` (input factor first).
    pub fn to_choi(&self) -> CMat {
        let d = self.dim;
        let imgs = self.unit_images();
        let mut j = CMat::zeros(d * d, d * d);
        for a in 0..d {
            for b in 0..d {
                let img = &imgs[a * d + b];
                for k in 0..d {
                    for l in 0..d {
                        j[(a * d + k, b * d + l)] = img[(k, l)];
                    }
                }
            }
        }
        j
    }

    pub fn from_choi(d: usize, choi: &CMat) -> Result<Self, SuperOpError> {
        if choi.nrows() != d * d || choi.ncols() != d * d {
            return Err(SuperOpError::DimensionMismatch { expected: d * d, found: choi.nrows() });
        }
        Ok(Self::from_map(d, |x| {
            let mut out = CMat::zeros(d, d);
            for a in 0..d {
                for b in 0..d {
                    let xab = x[(a, b)];
                    if xab == ZERO {
                        continue;
                    }
                    for k in 0..d {
                        for l in 0..d {
                            out[(k, l)] += xab * choi[(a * d + k, b * d + l)];
                        }
                    }
                }
            }
            out
        }))
    }

    pub fn min_choi_eigenvalue(&self) -> f64 {
        self.to_choi().herm_eigvals()[0]
    }

    pub fn is_cp(&self, tol: f64) -> bool {
        self.min_choi_eigenvalue() >= -tol
    }

    /// Trace preservation: the first row is the first unit co-vector.
    pub fn is_tp(&self, tol: f64) -> bool {
        let n = self.dim * self.dim;
        (0..n).all(|k| {
            let target = if k == 0 { ONE } else { ZERO };
            (self.mat[(0, k)] - target).norm() <= tol
        })
    }

    pub fn is_hermiticity_preserving(&self, tol: f64) -> bool {
        self.mat.max_imag() <= tol
    }

    /// Largest trace-norm growth of a state under `self ⊗ id` is at most this.
    pub fn diamond_norm(&self) -> Result<DiamondNorm, SuperOpError> {
        diamond_norm_choi(self.dim, &self.to_choi())
    }

    /// `Re Tr[b^† a] / d^2`.
    pub fn entanglement_fidelity(a: &SuperOp, b: &SuperOp) -> f64 {
        assert_eq!(a.dim, b.dim);
        b.mat.inner(&a.mat).re / (a.dim * a.dim) as f64
    }

    pub fn avg_fidelity(a: &SuperOp, b: &SuperOp) -> f64 {
        let d = a.dim as f64;
        (d * Self::entanglement_fidelity(a, b) + 1.0) / (d + 1.0)
    }
}

/// Probability `<<E| op |rho>>` for Hermitian `E`.
pub fn expectation(effect: &CMat, op: &SuperOp, rho: &CMat) -> f64 {
    dot(&covec(effect), &op.apply_vec(&vec_op(rho))).re
}

fn embed_entries(h: &CMat, blk: usize, scale: f64, out: &mut SparseSym) {
    let n = h.nrows();
    for p in 0..n {
        for q in 0..n {
            let z = h[(p, q)] * scale;
            if z.re != 0.0 {
                out.entries.push((blk, p, q, z.re));
                out.entries.push((blk, n + p, n + q, z.re));
            }
            if z.im != 0.0 {
                out.entries.push((blk, n + p, q, z.im));
                out.entries.push((blk, p, n + q, -z.im));
            }
        }
    }
}

fn embed_dense(h: &CMat, scale: f64) -> Mat<f64> {
    let n = h.nrows();
    Mat::from_fn(2 * n, 2 * n, |i, j| {
        let z = h[(i % n, j % n)] * scale;
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (false, true) => z.im,
            (true, false) => -z.im,
        }
    })
}

/// Diamond norm of a hermiticity-preserving map from its Choi matrix.
///
/// Solves `min λ` over Hermitian `N ⪰ 0` with `J + N ⪰ 0` and
/// `Tr_out(J + 2N) ⪯ λ 1`, i.e. the best decomposition `J = P - N` with
/// `‖Tr_out(P + N)‖_∞` minimal.
pub fn diamond_norm_choi(d: usize, choi: &CMat) -> Result<DiamondNorm, SuperOpError> {
    if d > DIAMOND_MAX_DIM {
        return Err(SuperOpError::DiamondTooLarge { d, max: DIAMOND_MAX_DIM });
    }
    let anti = (choi - &choi.adjoint()).max_abs();
    if anti > 1e-9 * (1.0 + choi.max_abs()) {
        return Err(SuperOpError::NotHermiticityPreserving(anti));
    }
    let j = choi.hermitian_part();
    let big = d * d;
    let scale = 1.0 / (1.0 + j.max_abs());
    let js = j.scale_re(scale);
    let trj = trace_out_second(&js, d, d);

    let mut prob = SdpProblem::new(vec![2 * big, 2 * big, 2 * d]);
    prob.c[1] = embed_dense(&js, -1.0);
    prob.c[2] = embed_dense(&trj, 1.0);

    let mut a_lambda = SparseSym::default();
    for i in 0..2 * d {
        a_lambda.entries.push((2, i, i, 1.0));
    }
    prob.add_constraint(a_lambda, 1.0);

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut push_basis = |b: CMat| {
        let mut a = SparseSym::default();
        embed_entries(&b, 0, 1.0, &mut a);
        embed_entries(&b, 1, 1.0, &mut a);
        embed_entries(&trace_out_second(&b, d, d), 2, -2.0, &mut a);
        prob.add_constraint(a, 0.0);
    };
    for p in 0..big {
        let mut b = CMat::zeros(big, big);
        b[(p, p)] = ONE;
        push_basis(b);
    }
    for p in 0..big {
        for q in p + 1..big {
            let mut b = CMat::zeros(big, big);
            b[(p, q)] = C64::new(s, 0.0);
            b[(q, p)] = C64::new(s, 0.0);
            push_basis(b);
            let mut b = CMat::zeros(big, big);
            b[(p, q)] = I * s;
            b[(q, p)] = -I * s;
            push_basis(b);
        }
    }

    let sol = prob.solve(&SdpOptions::default())?;
    let lower = sol.primal_objective / scale;
    let upper = sol.dual_objective / scale;
    Ok(DiamondNorm {
        value: 0.5 * (lower + upper),
        lower: lower.min(upper),
        upper: upper.max(lower),
        gap: (upper - lower).abs(),
        iterations: sol.iterations,
    })
}
