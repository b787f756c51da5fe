//! Pole extraction from sums of exponentials `y_m = Σ_i a_i z_i^m`.
//!
//! ESPRIT is generic over the real scalar type so exact synthetic data can be
//! processed in double-double arithmetic (`twofloat::TwoFloat`), where the
//! Hankel matrices of clustered poles are far too ill-conditioned for `f64`.

use std::fmt::Debug;

use num_complex::Complex;
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{CMat, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoleError {
    #[error("Hankel parameter L={l} must satisfy 1 ≤ L < M={m}")]
    Shape { l: usize, m: usize },
    #[error("requested {n} poles but n must be ≤ min(L, M-L+1) = {max}")]
    TooManyPoles { n: usize, max: usize },
    #[error("signal has numerical rank {rank} < {n} requested poles")]
    RankDeficient { rank: usize, n: usize },
    #[error("asymptotic conditioning needs |z| < 1 for all poles")]
    OutsideDisc,
    #[error("matrix C(z) is singular")]
    SingularC,
    #[error("unknown pole family {0:?}")]
    UnknownFamily(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// Scalar types usable by the generic ESPRIT path.
pub trait Real: Float + Debug + Send + Sync + 'static {
    /// Unit roundoff of the arithmetic (`TwoFloat::EPSILON` is the smallest normal, not this).
    fn roundoff() -> Self;
}

impl Real for f64 {
    fn roundoff() -> Self {
        f64::EPSILON
    }
}

impl Real for twofloat::TwoFloat {
    fn roundoff() -> Self {
        twofloat::TwoFloat::from(2f64.powi(-104))
    }
}

/// Dense row-major real matrix for the generic path.
#[derive(Debug, Clone, PartialEq)]
pub struct RMat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> RMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RMat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn to_cmat(&self) -> CMat {
        CMat::from_fn(self.rows, self.cols, |i, j| C64::new(self.at(i, j).to_f64().unwrap(), 0.0))
    }
}

/// `(L+1) × (M-L+1)` Hankel matrix `H_{jk} = y_{j+k}` of `y = (y_0, …, y_M)`.
pub fn hankel<T: Real>(y: &[T], l: usize) -> Result<RMat<T>, PoleError> {
    let m = y.len().saturating_sub(1);
    if l < 1 || l >= m {
        return Err(PoleError::Shape { l, m });
    }
    let (r, c) = (l + 1, m - l + 1);
    let mut h = RMat::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            h.set(i, j, y[i + j]);
        }
    }
    Ok(h)
}

/// Column space of `a` by one-sided Jacobi: singular values (descending) and left singular vectors.
pub fn jacobi_left_svd<T: Real>(a: &RMat<T>) -> (Vec<T>, Vec<Vec<T>>) {
    let (m, k) = (a.rows, a.cols);
    let mut cols: Vec<Vec<T>> = (0..k).map(|j| (0..m).map(|i| a.at(i, j)).collect()).collect();
    let eps = T::roundoff();
    let norm2 = |v: &[T]| v.iter().fold(T::zero(), |s, &x| s + x * x);
    let max_norm2 = cols.iter().map(|c| norm2(c)).fold(T::zero(), |a, b| a.max(b));
    let tiny = max_norm2 * eps * eps;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let alpha = norm2(&cols[p]);
                let beta = norm2(&cols[q]);
                if alpha <= tiny || beta <= tiny {
                    continue;
                }
                let gamma = cols[p].iter().zip(&cols[q]).fold(T::zero(), |s, (&x, &y)| s + x * y);
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let two = T::one() + T::one();
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                    let (u, v) = (*x, *y);
                    *x = c * u - s * v;
                    *y = s * u + c * v;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<(T, Vec<T>)> = cols
        .into_iter()
        .map(|c| {
            let n = norm2(&c).sqrt();
            let u = if n > T::zero() { c.iter().map(|&x| x / n).collect() } else { c };
            (n, u)
        })
        .collect();
    sv.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    sv.into_iter().unzip()
}

fn solve_real<T: Real>(a: &RMat<T>, b: &RMat<T>) -> RMat<T> {
    let n = a.rows;
    let mut a = a.clone();
    let mut b = b.clone();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a.at(i, col).abs().partial_cmp(&a.at(j, col).abs()).unwrap()).unwrap();
        if piv != col {
            for j in 0..n {
                let t = a.at(col, j);
                a.set(col, j, a.at(piv, j));
                a.set(piv, j, t);
            }
            for j in 0..b.cols {
                let t = b.at(col, j);
                b.set(col, j, b.at(piv, j));
                b.set(piv, j, t);
            }
        }
        let d = a.at(col, col);
        for i in col + 1..n {
            let f = a.at(i, col) / d;
            for j in col..n {
                a.set(i, j, a.at(i, j) - f * a.at(col, j));
            }
            for j in 0..b.cols {
                b.set(i, j, b.at(i, j) - f * b.at(col, j));
            }
        }
    }
    let mut x = RMat::zeros(n, b.cols);
    for j in 0..b.cols {
        for i in (0..n).rev() {
            let mut s = b.at(i, j);
            for k in i + 1..n {
                s = s - a.at(i, k) * x.at(k, j);
            }
            x.set(i, j, s / a.at(i, i));
        }
    }
    x
}

/// `tr((Ψ - z 1)^{-1})` by complex Gaussian elimination.
fn trace_resolvent<T: Real>(psi: &RMat<T>, z: Complex<T>) -> Complex<T> {
    let n = psi.rows;
    let mut a: Vec<Complex<T>> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let v = Complex::new(psi.at(i, j), T::zero());
            if i == j {
                v - z
            } else {
                v
            }
        })
        .collect();
    let mut inv: Vec<Complex<T>> =
        (0..n * n).map(|k| if k / n == k % n { Complex::new(T::one(), T::zero()) } else { Complex::new(T::zero(), T::zero()) }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].norm().partial_cmp(&a[j * n + col].norm()).unwrap()).unwrap();
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
                inv.swap(col * n + j, piv * n + j);
            }
        }
        let d = a[col * n + col];
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = a[i * n + col] / d;
            for j in 0..n {
                let (ac, ic) = (a[col * n + j], inv[col * n + j]);
                a[i * n + j] = a[i * n + j] - f * ac;
                inv[i * n + j] = inv[i * n + j] - f * ic;
            }
        }
    }
    (0..n).fold(Complex::new(T::zero(), T::zero()), |s, i| s + inv[i * n + i] / a[i * n + i])
}

/// Eigenvalues of a small real matrix: `f64` guess refined by Aberth iteration in `T`.
pub fn eigenvalues_refined<T: Real>(psi: &RMat<T>) -> Vec<Complex<T>> {
    let n = psi.rows;
    let guess = psi.to_cmat().eigvals();
    let mut z: Vec<Complex<T>> =
        guess.iter().map(|g| Complex::new(T::from(g.re).unwrap(), T::from(g.im).unwrap())).collect();
    let tol = T::roundoff() * T::from(16.0).unwrap();
    for _ in 0..200 {
        let mut worst = T::zero();
        for k in 0..n {
            let tr = trace_resolvent(psi, z[k]);
            if !(tr.re.is_finite() && tr.im.is_finite()) || tr.norm() == T::zero() {
                continue;
            }
            let newton = -Complex::new(T::one(), T::zero()) / tr;
            let mut s = Complex::new(T::zero(), T::zero());
            for j in 0..n {
                if j != k {
                    let diff = z[k] - z[j];
                    if diff.norm() > T::zero() {
                        s = s + Complex::new(T::one(), T::zero()) / diff;
                    }
                }
            }
            let w = newton / (Complex::new(T::one(), T::zero()) - newton * s);
            if w.re.is_finite() && w.im.is_finite() {
                z[k] = z[k] - w;
                worst = worst.max(w.norm() / z[k].norm().max(T::one()));
            }
        }
        if worst <= tol {
            break;
        }
    }
    z
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoleSet {
    pub poles: Vec<C64>,
    pub coefficients: Option<Vec<C64>>,
    pub warnings: Vec<String>,
}

/// Descending modulus, then real part, then imaginary part.
pub fn sort_poles(z: &mut [C64]) {
    z.sort_by(|a, b| {
        let ka = (-a.norm(), -a.re, -a.im);
        let kb = (-b.norm(), -b.re, -b.im);
        ka.partial_cmp(&kb).unwrap()
    });
}

impl PoleSet {
    pub fn new(mut poles: Vec<C64>) -> Self {
        sort_poles(&mut poles);
        let warnings = poles
            .iter()
            .filter(|z| z.norm() > 1.1)
            .map(|z| format!("pole {z} lies outside the sanity radius 1.1"))
            .collect::<Vec<_>>();
        for w in &warnings {
            log::warn!("{w}");
        }
        PoleSet { poles, coefficients: None, warnings }
    }

    pub fn from_real(z: &[f64]) -> Self {
        Self::new(z.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Least-squares amplitudes `a` with `y_m ≈ Σ a_i z_i^m`.
    pub fn with_coefficients(mut self, y: &[f64]) -> Self {
        let w = CMat::from_fn(y.len(), self.poles.len(), |m, i| self.poles[i].powu(m as u32));
        let rhs: Vec<C64> = y.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.coefficients = Some(w.lstsq(&rhs));
        self
    }
}

/// ESPRIT on `y = (y_0, …, y_M)` with Hankel parameter `L`, returning `n` poles.
pub fn esprit<T: Real>(y: &[T], l: usize, n: usize) -> Result<PoleSet, PoleError> {
    let h = hankel(y, l)?;
    let max = h.rows.min(h.cols).min(l);
    if n == 0 || n > max {
        return Err(PoleError::TooManyPoles { n, max });
    }
    let (sv, u) = jacobi_left_svd(&h);
    let rank_tol = sv[0] * T::roundoff() * T::from(100.0 * h.rows.max(h.cols) as f64).unwrap();
    let rank = sv.iter().take_while(|&&s| s > rank_tol).count();
    if rank < n {
        return Err(PoleError::RankDeficient { rank, n });
    }
    let rows = h.rows;
    let mut top = RMat::zeros(rows - 1, n);
    let mut bot = RMat::zeros(rows - 1, n);
    for j in 0..n {
        for i in 0..rows - 1 {
            top.set(i, j, u[j][i]);
            bot.set(i, j, u[j][i + 1]);
        }
    }
    // Ψ = (U_top^T U_top)^{-1} U_top^T U_bot
    let mut g = RMat::zeros(n, n);
    let mut b = RMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (mut sg, mut sb) = (T::zero(), T::zero());
            for r in 0..rows - 1 {
                sg = sg + top.at(r, i) * top.at(r, j);
                sb = sb + top.at(r, i) * bot.at(r, j);
            }
            g.set(i, j, sg);
            b.set(i, j, sb);
        }
    }
    let psi = solve_real(&g, &b);
    let z = eigenvalues_refined(&psi);
    Ok(PoleSet::new(z.iter().map(|c| C64::new(c.re.to_f64().unwrap(), c.im.to_f64().unwrap())).collect()))
}

/// Left singular vectors of the Hankel matrix in `f64`, via faer.
fn signal_basis(y: &[f64], l: usize, n: usize) -> Result<(CMat, Vec<f64>), PoleError> {
    let h = hankel(y, l)?.to_cmat();
    let max = h.nrows().min(h.ncols());
    if n == 0 || n > max {
        return Err(PoleError::TooManyPoles { n, max });
    }
    let (u, s, _) = h.svd();
    Ok((u.select_cols(&(0..n).collect::<Vec<_>>()), s))
}

/// Vandermonde vector `(1, z, …, z^{len-1})`.
pub fn vandermonde_vector(z: C64, len: usize) -> Vec<C64> {
    let mut v = Vec::with_capacity(len);
    let mut p = C64::new(1.0, 0.0);
    for _ in 0..len {
        v.push(p);
        p *= z;
    }
    v
}

pub const MUSIC_CAP: f64 = 1e12;

/// `R^{-1}(z) = ‖W_L(z)‖₂ / ‖P_noise W_L(z)‖₂`, capped at [`MUSIC_CAP`].
pub fn music_spectrum(y: &[f64], l: usize, n: usize, grid: &[C64]) -> Result<Vec<f64>, PoleError> {
    if grid.is_empty() {
        return Err(PoleError::Invalid("empty MUSIC grid".into()));
    }
    let (us, _) = signal_basis(y, l, n)?;
    let len = l + 1;
    Ok(grid
        .iter()
        .map(|&z| {
            let w = vandermonde_vector(z, len);
            let coeff = us.adjoint().matvec(&w);
            let proj = us.matvec(&coeff);
            let noise: f64 = w.iter().zip(&proj).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            let total: f64 = w.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            if noise * MUSIC_CAP <= total {
                MUSIC_CAP
            } else {
                total / noise
            }
        })
        .collect())
}

/// Local maxima of a 1-D spectrum, strongest first.
pub fn spectrum_peaks(values: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len())
        .filter(|&i| {
            let left = i == 0 || values[i] >= values[i - 1];
            let right = i + 1 == values.len() || values[i] > values[i + 1];
            left && right
        })
        .collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    idx.truncate(count);
    idx
}

/// `n × M` Vandermonde matrix with rows `(1, z_i, …, z_i^{M-1})`.
pub fn vandermonde(z: &[C64], m: usize) -> CMat {
    CMat::from_fn(z.len(), m, |i, k| z[i].powu(k as u32))
}

pub fn cond2(z: &[C64], m: usize) -> f64 {
    let s = vandermonde(z, m).singular_values();
    s[0] / s[s.len() - 1]
}

/// `sqrt(κ₂(C(z)))` with `C_ij = 1 / (1 - z_i conj(z_j))`.
pub fn asymptotic_cond(z: &[C64]) -> Result<f64, PoleError> {
    if z.iter().any(|x| x.norm() >= 1.0) {
        return Err(PoleError::OutsideDisc);
    }
    let c = CMat::from_fn(z.len(), z.len(), |i, j| C64::new(1.0, 0.0) / (C64::new(1.0, 0.0) - z[i] * z[j].conj()));
    let s = c.singular_values();
    let smin = s[s.len() - 1];
    if !(smin > s[0] * 1e-15) {
        return Err(PoleError::SingularC);
    }
    Ok((s[0] / smin).sqrt())
}

/// Symmetric Hausdorff distance between two pole sets.
pub fn hausdorff(a: &[C64], b: &[C64]) -> f64 {
    let directed = |x: &[C64], y: &[C64]| {
        x.iter().map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Greedy grouping of poles within `radius` of a cluster's first member; returns (centroid, size).
pub fn cluster_poles(z: &[C64], radius: f64) -> Vec<(C64, usize)> {
    let mut used = vec![false; z.len()];
    let mut out = Vec::new();
    for i in 0..z.len() {
        if used[i] {
            continue;
        }
        let members: Vec<usize> = (i..z.len()).filter(|&j| !used[j] && (z[j] - z[i]).norm() <= radius).collect();
        for &j in &members {
            used[j] = true;
        }
        let c = members.iter().map(|&j| z[j]).sum::<C64>() / members.len() as f64;
        out.push((c, members.len()));
    }
    out
}

/// Lemma bound `N ≥ 4 max{M ε²/ϵ², 2/(3ϵ)} ln(M/δ)`, rounded up.
pub fn bernstein_samples(m: usize, var_bound: f64, eps: f64, delta: f64) -> u64 {
    let m = m as f64;
    let a = m * var_bound / (eps * eps);
    let b = 2.0 / (3.0 * eps);
    (4.0 * a.max(b) * (m / delta).ln()).ceil() as u64
}

/// Corollary bound on `N_total`: the larger of its two requirements.
pub fn sampling_complexity(z: &[C64], m: usize, var_bound: f64, eps: f64, delta: f64) -> Result<u64, PoleError> {
    if m % 2 != 0 {
        return Err(PoleError::Invalid("M must be even".into()));
    }
    let k = cond2(z, m / 2);
    let zhat = z.iter().map(|x| x.norm()).fold(f64::INFINITY, f64::min);
    let mf = m as f64;
    let log = (mf / delta).ln();
    let first = 8.0 * k.powi(4) / (zhat * zhat) * mf * var_bound / (eps * eps) * log;
    let second = 16.0 / 3.0 * k * k / zhat / eps * log;
    Ok(first.max(second).ceil() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PoleFamily {
    /// `z_k = α + (1-α)(k-1)/n`.
    Lin(f64),
    /// `z_k = 1 - 10^{-(k+a-1)/a}`.
    F(u32),
}

impl PoleFamily {
    /// Parses `lin(0.5)`, `lin0.5`, `F1`, `F_2`, `f2`.
    pub fn parse(name: &str) -> Result<Self, PoleError> {
        let s = name.trim().to_ascii_lowercase();
        if let Some(rest) = s.strip_prefix("lin") {
            let v = rest.trim_matches(|c| c == '(' || c == ')' || c == '_' || c == ' ');
            let a: f64 = v.parse().map_err(|_| PoleError::UnknownFamily(name.into()))?;
            if !(0.0..1.0).contains(&a) {
                return Err(PoleError::UnknownFamily(name.into()));
            }
            return Ok(PoleFamily::Lin(a));
        }
        if let Some(rest) = s.strip_prefix('f') {
            let a: u32 = rest.trim_start_matches('_').parse().map_err(|_| PoleError::UnknownFamily(name.into()))?;
            if a == 0 {
                return Err(PoleError::UnknownFamily(name.into()));
            }
            return Ok(PoleFamily::F(a));
        }
        Err(PoleError::UnknownFamily(name.into()))
    }

    pub fn poles<T: Real>(&self, n: usize) -> Vec<T> {
        (1..=n)
            .map(|k| match *self {
                PoleFamily::Lin(a) => {
                    let a = T::from(a).unwrap();
                    a + (T::one() - a) * T::from(k - 1).unwrap() / T::from(n).unwrap()
                }
                PoleFamily::F(a) => T::one() - pow10_neg(k as u32 + a - 1, a),
            })
            .collect()
    }

    pub fn name(&self) -> String {
        match self {
            PoleFamily::Lin(a) => format!("lin({a})"),
            PoleFamily::F(a) => format!("F{a}"),
        }
    }
}

/// `10^{-p/q}` to full working precision: exact power, then Newton for the `q`-th root.
fn pow10_neg<T: Real>(p: u32, q: u32) -> T {
    let c = T::one() / T::from(10.0).unwrap().powi(p as i32);
    if q == 1 {
        return c;
    }
    let qt = T::from(q).unwrap();
    let mut x = T::from(10f64.powf(-(p as f64) / q as f64)).unwrap();
    for _ in 0..4 {
        x = x - (x.powi(q as i32) - c) / (qt * x.powi(q as i32 - 1));
    }
    x
}

pub fn pole_families(name: &str, n: usize) -> Result<PoleSet, PoleError> {
    if n == 0 {
        return Err(PoleError::Invalid("n must be at least 1".into()));
    }
    Ok(PoleSet::from_real(&PoleFamily::parse(name)?.poles::<f64>(n)))
}

/// `y_m = Σ_i a_i z_i^m` for `m = 0..=M`.
pub fn synth_signal<T: Real>(z: &[T], a: &[T], m: usize) -> Vec<T> {
    (0..=m).map(|k| z.iter().zip(a).fold(T::zero(), |s, (&p, &w)| s + w * p.powi(k as i32))).collect()
}

/// Binomial estimate of each entry (entries must lie in [0, 1]).
pub fn binomial_noisy(y: &[f64], shots: u64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    y.iter()
        .map(|&p| Binomial::new(shots, p.clamp(0.0, 1.0)).expect("valid binomial").sample(rng) as f64 / shots as f64)
        .collect()
}

pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(trial as u64);
    r
}

/// Fraction of trials with `‖Hankel_L(p̂) - Hankel_L(p)‖₂ ≤ ϵ` under binomial sampling.
pub fn empirical_hankel_deviation(true_y: &[f64], l: usize, shots: u64, eps: f64, trials: usize, seed: u64) -> f64 {
    let h0 = hankel(true_y, l).expect("valid Hankel shape").to_cmat();
    let ok = (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = trial_rng(seed, t);
            let y = binomial_noisy(true_y, shots, &mut rng);
            let h = hankel(&y, l).unwrap().to_cmat();
            (&h - &h0).spectral_norm() <= eps
        })
        .count();
    ok as f64 / trials as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub family: String,
    pub n: usize,
    pub l: usize,
    pub shots: u64,
    pub trial: usize,
    pub hausdorff: f64,
}

/// ESPRIT recovery from binomially sampled data, one row per trial.
pub fn noisy_recovery_study(
    family: PoleFamily,
    n: usize,
    m: usize,
    l: usize,
    shots: u64,
    trials: usize,
    seed: u64,
) -> Vec<StudyRow> {
    let z = family.poles::<f64>(n);
    let a = vec![1.0 / n as f64; n];
    let y = synth_signal(&z, &a, m);
    let truth: Vec<C64> = z.iter().map(|&x| C64::new(x, 0.0)).collect();
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let noisy = binomial_noisy(&y, shots, &mut rng);
            let h = match esprit(&noisy, l, n) {
                Ok(ps) => hausdorff(&ps.poles, &truth),
                Err(_) => f64::INFINITY,
            };
            StudyRow { family: family.name(), n, l, shots, trial: t, hausdorff: h }
        })
        .collect()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// `|R(z) - R_signal(z)|` maximized over a grid, with `R = 1/R^{-1}`.
pub fn music_deviation(clean: &[f64], noisy: &[f64], l: usize, n: usize, grid: &[C64]) -> Result<f64, PoleError> {
    let a = music_spectrum(clean, l, n, grid)?;
    let b = music_spectrum(noisy, l, n, grid)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (1.0 / x - 1.0 / y).abs()).fold(0.0, f64::max))
}

/// Smallest nonzero-signal singular value `σ_n` of the clean Hankel matrix.
pub fn hankel_sigma(y: &[f64], l: usize, n: usize) -> Result<f64, PoleError> {
    let (_, s) = signal_basis(y, l, n)?;
    Ok(s[n - 1])
}

pub fn to_complex(z: &[f64]) -> Vec<C64> {
    z.iter().map(|&x| C64::new(x, 0.0)).collect()
}
