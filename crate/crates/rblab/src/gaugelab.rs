//! Gauge freedom of implementation maps: the depolarizing gauge, fidelity
//! decompositions, and examples where decay rates and gate fidelities part ways.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fit::affine_log_fit;
use crate::fourier::{fourier_block, ImplementationMap};
use crate::groupsrep::RbGroup;
use crate::linalg::{haar_state, haar_unitary, vdot, vnorm, CMat, C64, ZERO};
use crate::rbsim::{leak_stochastic_matrix, m1_alpha, m2_alpha, t_gamma};
use crate::superop::SuperOp;

#[derive(Debug, Error)]
pub enum GaugeError {
    #[error("irrep {0} occurs with multiplicity {1}; only multiplicity-free groups are supported")]
    NotMultiplicityFree(String, usize),
    #[error("gauge transformation is singular (condition number {0:.3e})")]
    Singular(f64),
    #[error("Fourier block {0} is not diagonalizable")]
    NotDiagonalizable(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Eigenvectors beyond this condition number count as defective.
const DIAG_COND_CAP: f64 = 1e12;

/// Dominant eigen-triple of one Fourier block.
#[derive(Debug, Clone)]
struct Dominant {
    value: C64,
    right: Vec<C64>,
    left: Vec<C64>,
}

/// Normalized dominant eigenvector of the ideal block.
fn ideal_vector(group: &Arc<RbGroup>, irrep: usize) -> Vec<C64> {
    let ideal = ImplementationMap::ideal(group.clone());
    let f = fourier_block(&ideal, irrep).mat;
    let (vals, vecs) = f.eig();
    let k = argmax_modulus(&vals);
    let mut z = vecs.col(k);
    let n = vnorm(&z);
    z.iter_mut().for_each(|x| *x /= n);
    z
}

fn argmax_modulus(v: &[C64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.norm() > v[best].norm() {
            best = i;
        }
    }
    best
}

/// Full eigen-decomposition with biorthogonal left vectors (rows of `W^{-1}`).
fn diagonalize(f: &CMat, label: &str) -> Result<(Vec<C64>, CMat, CMat), GaugeError> {
    let attempt = |m: &CMat| {
        let (vals, w) = m.eig();
        let s = w.singular_values();
        let cond = s[0] / s[s.len() - 1].max(f64::MIN_POSITIVE);
        (vals, w, cond)
    };
    let (vals, w, cond) = attempt(f);
    if cond <= DIAG_COND_CAP {
        let wi = w.inverse();
        return Ok((vals, w, wi));
    }
    // Defective blocks are nudged by a tiny diagonal shift that splits degeneracies.
    let n = f.nrows();
    let mut g = f.clone();
    for i in 0..n {
        g[(i, i)] += C64::new(1e-12 * (i + 1) as f64 / n as f64, 0.0);
    }
    let (vals, w, cond) = attempt(&g);
    if cond > DIAG_COND_CAP {
        return Err(GaugeError::NotDiagonalizable(label.to_string()));
    }
    let wi = w.inverse();
    Ok((vals, w, wi))
}

fn dominant(f: &CMat, z: &[C64], label: &str) -> Result<Dominant, GaugeError> {
    let (vals, w, wi) = diagonalize(f, label)?;
    let k = argmax_modulus(&vals);
    let mut right = w.col(k);
    let mut left: Vec<C64> = wi.row(k).iter().map(|x| x.conj()).collect();
    // Fix ‖r‖ = 1 and a real positive overlap with the ideal vector.
    let n = vnorm(&right);
    let ov = vdot(z, &right);
    let phase = if ov.norm() > 1e-300 { ov.conj() / ov.norm() } else { C64::new(1.0, 0.0) };
    let c = phase / n;
    right.iter_mut().for_each(|x| *x *= c);
    let ci = c.conj().inv();
    left.iter_mut().for_each(|x| *x *= ci);
    Ok(Dominant { value: vals[k], right, left })
}

fn check_multiplicity_free(group: &RbGroup) -> Result<(), GaugeError> {
    for ir in group.catalog.present() {
        if ir.multiplicity != 1 {
            return Err(GaugeError::NotMultiplicityFree(ir.label.clone(), ir.multiplicity));
        }
    }
    Ok(())
}

/// Superoperator with columns `r_a` from `r = Σ_a e_a ⊗ r_a`.
fn devectorize(r: &[C64], k: usize, n: usize) -> CMat {
    CMat::from_fn(n, k, |i, a| r[a * n + i])
}

/// A gauge `R` with `|G|^{-1} Σ_g φ(g) R ω(g)^† = R Dep`.
#[derive(Debug, Clone)]
pub struct DepolarizingGauge {
    pub labels: Vec<String>,
    /// Dominant eigenvalue of each present irrep block.
    pub rates: Vec<C64>,
    pub r: CMat,
    pub r_inv: CMat,
    /// `Σ_λ f_λ P_λ`.
    pub depolarizing: CMat,
    d: usize,
}

impl DepolarizingGauge {
    /// `R^{-1} φ(g) R` for every element.
    pub fn transformed(&self, phi: &ImplementationMap) -> ImplementationMap {
        let maps = phi.maps.iter().map(|m| m.conjugate_by(&self.r_inv, &self.r)).collect();
        ImplementationMap::unchecked(phi.group.clone(), maps)
    }

    /// Frobenius norm of `|G|^{-1} Σ_g φ(g) R ω(g)^† - R Dep`.
    pub fn relation_defect(&self, phi: &ImplementationMap) -> f64 {
        let n = self.r.nrows();
        let mut acc = CMat::zeros(n, n);
        for (p, w) in phi.maps.iter().zip(&phi.group.omega) {
            acc.axpy(C64::new(1.0, 0.0), &p.mat().matmul(&self.r).matmul(&w.mat().adjoint()));
        }
        let acc = acc.scale_re(1.0 / phi.order() as f64);
        (&acc - &self.r.matmul(&self.depolarizing)).fro_norm()
    }

    /// `F_e(Dep, 1) = Tr Dep / d²`.
    pub fn depolarizing_entanglement_fidelity(&self) -> f64 {
        self.depolarizing.trace().re / (self.d * self.d) as f64
    }

    /// `F_avg(Dep, 1) = (d F_e + 1)/(d + 1)`.
    pub fn depolarizing_avg_fidelity(&self) -> f64 {
        let d = self.d as f64;
        (d * self.depolarizing_entanglement_fidelity() + 1.0) / (d + 1.0)
    }

    /// `|G|^{-1} Σ_g F_avg(R^{-1} φ(g) R, ω(g))`.
    pub fn gauge_avg_fidelity(&self, phi: &ImplementationMap) -> f64 {
        let t = self.transformed(phi);
        let s: f64 = t.maps.iter().zip(&phi.group.omega).map(|(a, b)| SuperOp::avg_fidelity(a, b)).sum();
        s / phi.order() as f64
    }
}

/// Builds `R = Σ_λ R_λ V_λ^†` from the dominant eigenvectors of the Fourier blocks.
pub fn depolarizing_gauge(phi: &ImplementationMap) -> Result<DepolarizingGauge, GaugeError> {
    let group = &phi.group;
    check_multiplicity_free(group)?;
    let d = group.d;
    let n = d * d;
    let mut r = CMat::zeros(n, n);
    let mut dep = CMat::zeros(n, n);
    let mut labels = Vec::new();
    let mut rates = Vec::new();
    for (idx, ir) in group.catalog.irreps.iter().enumerate() {
        if ir.multiplicity == 0 {
            continue;
        }
        let z = ideal_vector(group, idx);
        let f = fourier_block(phi, idx).mat;
        let dom = dominant(&f, &z, &ir.label)?;
        let k = ir.dim;
        let rl = devectorize(&dom.right, k, n);
        // Z_λ has orthogonal columns of norm 1/√d_λ, so V_λ = d_λ Z_λ gives R(ω) = 1.
        let v = devectorize(&z, k, n).scale_re(k as f64);
        r.axpy(C64::new(1.0, 0.0), &rl.matmul(&v.adjoint()));
        dep.axpy(dom.value, &ir.projector);
        labels.push(ir.label.clone());
        rates.push(dom.value);
    }
    let s = r.singular_values();
    let cond = s[0] / s[s.len() - 1].max(f64::MIN_POSITIVE);
    if !cond.is_finite() || cond > 1e12 {
        return Err(GaugeError::Singular(cond));
    }
    let r_inv = r.inverse();
    Ok(DepolarizingGauge { labels, rates, r, r_inv, depolarizing: dep, d })
}

/// How the deviation from ideal splits between decay rate and eigenvector overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    RateDominated,
    OverlapDominated,
    Comparable,
}

#[derive(Debug, Clone, Serialize)]
pub struct IrrepFidelityTerm {
    pub label: String,
    pub irrep_dim: usize,
    pub rate: C64,
    /// `<z|r><ℓ|z>` for the dominant pair.
    pub overlap: C64,
    /// `d_λ f_max <z|r><ℓ|z> / d²`.
    pub dominant_term: f64,
    /// Contribution of all subdominant eigenpairs.
    pub residual: f64,
    /// `‖F(φ)-F(ω)‖³ ‖ℓ‖ ‖r‖`, the scale of the higher-order remainder.
    pub residual_scale: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, Serialize)]
pub struct FidelityDecomposition {
    pub terms: Vec<IrrepFidelityTerm>,
    /// Sum of dominant terms.
    pub dominant_total: f64,
    /// `α_Res`: sum of subdominant contributions.
    pub alpha_res: f64,
    /// Direct `|G|^{-1} Σ_g F_e(φ(g), ω(g))`.
    pub direct: f64,
}

impl FidelityDecomposition {
    pub fn total(&self) -> f64 {
        self.dominant_total + self.alpha_res
    }
}

fn regime(rate: C64, overlap: C64) -> Regime {
    let a = (C64::new(1.0, 0.0) - rate).norm();
    let b = (C64::new(1.0, 0.0) - overlap).norm();
    if a > 10.0 * b {
        Regime::RateDominated
    } else if b > 10.0 * a {
        Regime::OverlapDominated
    } else {
        Regime::Comparable
    }
}

/// Splits the average entanglement fidelity of `S φ S^{-1}` by irrep and eigenpair.
pub fn fidelity_decomposition(phi: &ImplementationMap, s: Option<&CMat>) -> Result<FidelityDecomposition, GaugeError> {
    let group = phi.group.clone();
    check_multiplicity_free(&group)?;
    let d = group.d;
    let phi = match s {
        Some(s) => {
            let si = s.inverse();
            ImplementationMap::unchecked(group.clone(), phi.maps.iter().map(|m| m.conjugate_by(s, &si)).collect())
        }
        None => phi.clone(),
    };
    let ideal = ImplementationMap::ideal(group.clone());
    let d2 = (d * d) as f64;
    let mut terms = Vec::new();
    for (idx, ir) in group.catalog.irreps.iter().enumerate() {
        if ir.multiplicity == 0 {
            continue;
        }
        let z = ideal_vector(&group, idx);
        let f = fourier_block(&phi, idx).mat;
        let (vals, w, wi) = diagonalize(&f, &ir.label)?;
        let k = argmax_modulus(&vals);
        let wz = wi.matvec(&z);
        let mut residual = 0.0;
        let mut dom = (ZERO, ZERO, 0.0, 0.0);
        for j in 0..vals.len() {
            let col = w.col(j);
            let ov = vdot(&z, &col) * wz[j];
            let contrib = (ir.dim as f64 * vals[j] * ov).re / d2;
            if j == k {
                let lnorm = vnorm(wi.row(j));
                dom = (vals[j], ov, contrib, lnorm * vnorm(&col));
            } else {
                residual += contrib;
            }
        }
        let e_hat = &f - &fourier_block(&ideal, idx).mat;
        terms.push(IrrepFidelityTerm {
            label: ir.label.clone(),
            irrep_dim: ir.dim,
            rate: dom.0,
            overlap: dom.1,
            dominant_term: dom.2,
            residual,
            residual_scale: e_hat.spectral_norm().powi(3) * dom.3,
            regime: regime(dom.0, dom.1),
        });
    }
    let direct = phi.maps.iter().zip(&group.omega).map(|(a, b)| SuperOp::entanglement_fidelity(a, b)).sum::<f64>()
        / phi.order() as f64;
    Ok(FidelityDecomposition {
        dominant_total: terms.iter().map(|t| t.dominant_term).sum(),
        alpha_res: terms.iter().map(|t| t.residual).sum(),
        terms,
        direct,
    })
}

/// Dominant overlap `<z|r><ℓ|z>` for one irrep.
pub fn dominant_overlap(phi: &ImplementationMap, label: &str) -> Result<C64, GaugeError> {
    let idx = phi
        .group
        .catalog
        .index_of(label)
        .ok_or_else(|| GaugeError::Invalid(format!("unknown irrep {label}")))?;
    let z = ideal_vector(&phi.group, idx);
    let dom = dominant(&fourier_block(phi, idx).mat, &z, label)?;
    Ok(vdot(&z, &dom.right) * vdot(&dom.left, &z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CpRow {
    pub alpha: f64,
    pub gamma: f64,
    /// Smallest Choi eigenvalue over all `φ(g)`.
    pub min_choi_phi: f64,
    /// Smallest Choi eigenvalue of `M₂(α) T(γ) M₁(α)`.
    pub min_choi_gauge: f64,
}

impl CpRow {
    pub fn phi_cp(&self, tol: f64) -> bool {
        self.min_choi_phi >= -tol
    }

    pub fn gauge_cp(&self, tol: f64) -> bool {
        self.min_choi_gauge >= -tol
    }
}

/// The noise between gates once `φ(g) = T(γ) M₁(α) ω(g) M₂(α)` is written as `ω(g) ∘ N`.
pub fn counterexample_gauge_noise(alpha: f64, gamma: f64) -> SuperOp {
    m2_alpha(alpha).compose(&t_gamma(gamma)).compose(&m1_alpha(alpha))
}

/// `φ(g) = T(γ) M₁(α) ω(g) M₂(α)` without positivity checks.
pub fn counterexample_maps(group: Arc<RbGroup>, alpha: f64, gamma: f64) -> Result<ImplementationMap, GaugeError> {
    if group.d != 2 {
        return Err(GaugeError::Invalid("the construction is single-qubit".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) || !(0.0..=1.0).contains(&gamma) {
        return Err(GaugeError::Invalid(format!("need 0 < α ≤ 1 and 0 ≤ γ ≤ 1, got α={alpha}, γ={gamma}")));
    }
    let left = t_gamma(gamma).compose(&m1_alpha(alpha));
    let right = m2_alpha(alpha);
    let maps = group.omega.iter().map(|w| left.compose(w).compose(&right)).collect();
    Ok(ImplementationMap::unchecked(group, maps))
}

/// Grid scan of complete positivity for the map and its gauge noise.
pub fn cp_violation_scan(group: Arc<RbGroup>, alphas: &[f64], gammas: &[f64]) -> Result<Vec<CpRow>, GaugeError> {
    let grid: Vec<(f64, f64)> = gammas.iter().flat_map(|&g| alphas.iter().map(move |&a| (a, g))).collect();
    grid.par_iter()
        .map(|&(alpha, gamma)| {
            let phi = counterexample_maps(group.clone(), alpha, gamma)?;
            let min_choi_phi = phi.maps.iter().map(|m| m.min_choi_eigenvalue()).fold(f64::INFINITY, f64::min);
            let min_choi_gauge = counterexample_gauge_noise(alpha, gamma).min_choi_eigenvalue();
            Ok(CpRow { alpha, gamma, min_choi_phi, min_choi_gauge })
        })
        .collect()
}

/// Range of `α` at fixed `γ` where the map is CP but its gauge noise is not.
pub fn violation_interval(rows: &[CpRow], gamma: f64, tol: f64) -> Option<(f64, f64)> {
    let hits: Vec<f64> = rows
        .iter()
        .filter(|r| r.gamma == gamma && r.phi_cp(tol) && !r.gauge_cp(tol))
        .map(|r| r.alpha)
        .collect();
    if hits.is_empty() {
        return None;
    }
    Some((hits.iter().cloned().fold(f64::INFINITY, f64::min), hits.iter().cloned().fold(f64::NEG_INFINITY, f64::max)))
}

pub fn write_cp_csv(rows: &[CpRow], path: &Path) -> Result<(), GaugeError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["alpha", "gamma", "min_choi_phi", "min_choi_gauge"])?;
    for r in rows {
        w.write_record([
            format!("{:.6}", r.alpha),
            format!("{:.6}", r.gamma),
            format!("{:.12e}", r.min_choi_phi),
            format!("{:.12e}", r.min_choi_gauge),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Leakage example: decay curve versus gate fidelity.
#[derive(Debug, Clone, Serialize)]
pub struct LeakExample {
    pub d: usize,
    pub l: usize,
    pub mu: f64,
    pub entanglement_fidelity: f64,
    pub avg_fidelity: f64,
    /// `1 - 2L/d`.
    pub reference_level: f64,
    /// Haar average of the per-gate average fidelity.
    pub avg_fidelity_mc: f64,
    pub avg_fidelity_mc_stderr: f64,
    pub lengths: Vec<usize>,
    pub decay: Vec<f64>,
    pub nonexponentiality: f64,
}

/// `p(m) = [S^m]_{1,1} + [S^m]_{1,L}` for each requested length.
pub fn leak_decay(l: usize, mu: f64, lengths: &[usize]) -> Vec<f64> {
    let s = leak_stochastic_matrix(l, mu, l);
    let top = lengths.iter().copied().max().unwrap_or(0);
    let mut v = vec![0.0; l];
    v[0] = 1.0;
    let mut out = vec![0.0; top + 1];
    for m in 0..=top {
        out[m] = v[0] + if l > 1 { v[l - 1] } else { 0.0 };
        let mut next = vec![0.0; l];
        for (i, &vi) in v.iter().enumerate() {
            for (k, &sik) in s[i].iter().enumerate() {
                next[k] += vi * sik;
            }
        }
        v = next;
    }
    lengths.iter().map(|&m| out[m]).collect()
}

/// `d² F_e(φ_U, ω_U) = Σ_{i<L} Σ_k S_ik |U_ki|² + (d-L)²`.
pub fn leak_gate_fidelity(u: &CMat, l: usize, mu: f64) -> f64 {
    let d = u.nrows();
    let s = leak_stochastic_matrix(l, mu, d);
    let mut t = ((d - l) * (d - l)) as f64;
    for (i, row) in s.iter().enumerate().take(l) {
        for (k, &sik) in row.iter().enumerate() {
            if sik != 0.0 {
                t += sik * u[(k, i)].norm_sqr();
            }
        }
    }
    t / (d * d) as f64
}

/// Haar average of the per-gate entanglement fidelity: `(L/d + (d-L)²)/d²`.
pub fn leak_avg_entanglement_fidelity(d: usize, l: usize) -> f64 {
    let (df, lf) = (d as f64, l as f64);
    (lf / df + (df - lf).powi(2)) / (df * df)
}

/// Average over pure states of `<ψ|U^† φ_U(ψ) U|ψ>` for a single gate `U`.
pub fn leak_pure_state_fidelity(u: &CMat, l: usize, mu: f64, samples: usize, seed: u64) -> (f64, f64) {
    let d = u.nrows();
    let s = leak_stochastic_matrix(l, mu, d);
    let vals: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let psi = haar_state(d, &mut rng);
            let upsi = u.matvec(&psi);
            let mut w = vec![0.0; d];
            for i in 0..l {
                let p = psi[i].norm_sqr();
                for k in 0..d {
                    w[k] += s[i][k] * p;
                }
            }
            let t1: f64 = (0..d).map(|k| w[k] * upsi[k].norm_sqr()).sum();
            let q: f64 = psi[l..].iter().map(|x| x.norm_sqr()).sum();
            t1 + q * q
        })
        .collect();
    mean_stderr(&vals)
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

/// Largest log-space residual of an affine fit over sliding windows of `window` points.
pub fn nonexponentiality_score(lengths: &[usize], p: &[f64], window: usize) -> f64 {
    let w = window.clamp(2, lengths.len());
    (0..=lengths.len() - w)
        .map(|s| affine_log_fit(&lengths[s..s + w], &p[s..s + w]).max_residual)
        .fold(0.0, f64::max)
}

/// Leakage from an `L`-level subspace of `q` qubits under Haar-random gates.
pub fn decay_vs_fidelity_example(
    q: usize,
    l: usize,
    mu: f64,
    lengths: &[usize],
    samples: usize,
    seed: u64,
) -> Result<LeakExample, GaugeError> {
    if q == 0 || q > 10 {
        return Err(GaugeError::Invalid(format!("qubit count {q} out of range")));
    }
    let d = 1usize << q;
    if !(1..d).contains(&l) || !(0.0..=1.0).contains(&mu) || lengths.is_empty() || samples < 2 {
        return Err(GaugeError::Invalid(format!("need 1 ≤ L < {d}, 0 ≤ μ ≤ 1, lengths and ≥ 2 samples")));
    }
    let fe = leak_avg_entanglement_fidelity(d, l);
    let df = d as f64;
    let per_gate: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let u = haar_unitary(d, &mut rng);
            (df * leak_gate_fidelity(&u, l, mu) + 1.0) / (df + 1.0)
        })
        .collect();
    let (mc, se) = mean_stderr(&per_gate);
    let decay = leak_decay(l, mu, lengths);
    Ok(LeakExample {
        d,
        l,
        mu,
        entanglement_fidelity: fe,
        avg_fidelity: (df * fe + 1.0) / (df + 1.0),
        reference_level: 1.0 - 2.0 * l as f64 / df,
        avg_fidelity_mc: mc,
        avg_fidelity_mc_stderr: se,
        lengths: lengths.to_vec(),
        nonexponentiality: nonexponentiality_score(lengths, &decay, lengths.len()),
        decay,
    })
}

pub fn write_leak_csv(ex: &LeakExample, path: &Path) -> Result<(), GaugeError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "m,p")?;
    for (m, p) in ex.lengths.iter().zip(&ex.decay) {
        writeln!(f, "{m},{p:.15e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groupsrep::{build_clifford_1q, build_pauli_group};
    use crate::linalg::random_hermitian;
    use crate::rbsim::{overrotation, stochastic_leak};
    use proptest::prelude::*;

    fn clifford() -> Arc<RbGroup> {
        Arc::new(build_clifford_1q().unwrap())
    }

    fn depolarized(group: Arc<RbGroup>, p: f64) -> ImplementationMap {
        let dep = SuperOp::depolarizing(group.d, p);
        let maps = group.omega.iter().map(|w| dep.compose(w)).collect();
        ImplementationMap::new(group, maps)
    }

    /// Trace-preserving gauge close to identity.
    fn small_gauge(d: usize, eps: f64, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = d * d;
        let h = random_hermitian(n, &mut rng);
        let mut s = CMat::identity(n);
        for i in 1..n {
            for j in 0..n {
                s[(i, j)] += C64::new(eps * h[(i, j)].re, 0.0);
            }
        }
        s
    }

    #[test]
    fn ideal_gauge_is_identity() {
        let g = clifford();
        let dg = depolarizing_gauge(&ImplementationMap::ideal(g.clone())).unwrap();
        assert!((&dg.r - &CMat::identity(4)).max_abs() < 1e-10);
        assert!((dg.depolarizing_avg_fidelity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gauge_relation_holds_for_overrotation() {
        let phi = overrotation(clifford(), 0.05).unwrap();
        let dg = depolarizing_gauge(&phi).unwrap();
        assert!(dg.relation_defect(&phi) < 1e-10);
        assert!((dg.gauge_avg_fidelity(&phi) - dg.depolarizing_avg_fidelity()).abs() < 1e-10);
    }

    #[test]
    fn depolarizing_noise_has_its_own_rate() {
        let phi = depolarized(clifford(), 0.1);
        let dg = depolarizing_gauge(&phi).unwrap();
        let adj = dg.labels.iter().position(|l| l == "adjoint").unwrap();
        assert!((dg.rates[adj].re - 0.9).abs() < 1e-12);
        // F_avg = 1 - p (d-1)/d for depolarizing strength p.
        assert!((dg.depolarizing_avg_fidelity() - (1.0 - 0.1 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn pauli_group_gauge() {
        let g = Arc::new(build_pauli_group(1).unwrap());
        let phi = depolarized(g, 0.2);
        let dg = depolarizing_gauge(&phi).unwrap();
        assert!(dg.relation_defect(&phi) < 1e-10);
        assert_eq!(dg.labels.len(), 4);
    }

    #[test]
    fn decomposition_sums_to_direct_average() {
        let phi = overrotation(clifford(), 0.2).unwrap();
        let s = small_gauge(2, 0.05, 7);
        let dec = fidelity_decomposition(&phi, Some(&s)).unwrap();
        assert!((dec.total() - dec.direct).abs() < 1e-10, "{} vs {}", dec.total(), dec.direct);
        let plain = fidelity_decomposition(&phi, None).unwrap();
        assert!((plain.total() - plain.direct).abs() < 1e-10);
    }

    #[test]
    fn gauge_changes_fidelity_not_rates() {
        let phi = overrotation(clifford(), 0.1).unwrap();
        let s = small_gauge(2, 0.1, 3);
        let a = fidelity_decomposition(&phi, None).unwrap();
        let b = fidelity_decomposition(&phi, Some(&s)).unwrap();
        assert!((a.direct - b.direct).abs() > 1e-5);
        for (x, y) in a.terms.iter().zip(&b.terms) {
            assert!((x.rate - y.rate).norm() < 1e-10);
        }
    }

    #[test]
    fn overlap_deviation_is_second_order() {
        let g = clifford();
        let noisy = overrotation(g.clone(), 0.5).unwrap();
        let ideal = ImplementationMap::ideal(g.clone());
        let s = small_gauge(2, 0.3, 11);
        let si = s.inverse();
        // Path φ_t = ω + t (S φ S^{-1} - ω) through the ideal point.
        let target: Vec<SuperOp> = noisy.maps.iter().map(|p| p.conjugate_by(&s, &si)).collect();
        let path = |t: f64| {
            let maps = ideal.maps.iter().zip(&target).map(|(w, p)| w.add(&p.sub(w).scale(t))).collect();
            let phi_t = ImplementationMap::unchecked(g.clone(), maps);
            (C64::new(1.0, 0.0) - dominant_overlap(&phi_t, "adjoint").unwrap()).norm()
        };
        let (t1, t2) = (1e-3, 1e-1);
        let slope = (path(t2).ln() - path(t1).ln()) / (t2.ln() - t1.ln());
        assert!(slope >= 1.9, "slope {slope}");
    }

    #[test]
    fn counterexample_gauge_noise_matches_computed_gauge() {
        let g = clifford();
        let (alpha, gamma) = (0.8, 0.5);
        let phi = counterexample_maps(g.clone(), alpha, gamma).unwrap();
        let dg = depolarizing_gauge(&phi).unwrap();
        let t = dg.transformed(&phi);
        let expected = counterexample_gauge_noise(alpha, gamma);
        let mut first: Option<CMat> = None;
        for (p, w) in t.maps.iter().zip(&g.omega) {
            let noise = w.mat().adjoint().matmul(p.mat());
            match &first {
                None => first = Some(noise),
                Some(f) => assert!((&noise - f).max_abs() < 1e-10, "noise must be gate independent"),
            }
        }
        // Equal up to a commutant rescaling C = diag(c0, c1, c1, c1).
        let n = first.unwrap();
        let e = expected.mat();
        for i in 0..4 {
            for j in 0..4 {
                let same_block = (i == 0) == (j == 0);
                if same_block {
                    assert!((n[(i, j)] - e[(i, j)]).norm() < 1e-10, "({i},{j})");
                } else if e[(i, j)].norm() < 1e-14 {
                    assert!(n[(i, j)].norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn counterexample_cp_pattern() {
        let g = clifford();
        let rows = cp_violation_scan(g, &[0.5, 0.8, 1.0], &[0.0, 1.0]).unwrap();
        for r in &rows {
            if r.gamma == 0.0 && r.alpha < 1.0 {
                assert!(r.phi_cp(1e-9));
                assert!(r.min_choi_gauge < -1e-6);
            }
            if r.gamma == 1.0 && r.alpha == 1.0 {
                assert!(r.phi_cp(1e-9) && r.gauge_cp(1e-9));
            }
        }
        assert_eq!(violation_interval(&rows, 0.0, 1e-9), Some((0.5, 0.8)));
    }

    #[test]
    fn leak_decay_hand_values() {
        // L = 2: p(m) = μ^m + (1 - μ^m).
        let p = leak_decay(2, 0.9, &[0, 1, 5]);
        assert!(p.iter().all(|x| (x - 1.0).abs() < 1e-15));
        let p = leak_decay(3, 0.5, &[0, 1, 2]);
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!((p[1] - 0.5).abs() < 1e-15);
        assert!((p[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn leak_fidelity_formula_matches_superoperator() {
        let g = Arc::new(crate::groupsrep::build_pauli_group(2).unwrap());
        let phi = stochastic_leak(g.clone(), 2, 0.7).unwrap();
        for (gi, u) in g.unitaries.iter().enumerate() {
            let direct = SuperOp::entanglement_fidelity(phi.get(gi), &g.omega[gi]);
            assert!((direct - leak_gate_fidelity(u, 2, 0.7)).abs() < 1e-12);
        }
    }

    #[test]
    fn leak_haar_average_matches_closed_form() {
        let ex = decay_vs_fidelity_example(3, 2, 0.9, &(1..=20).collect::<Vec<_>>(), 4000, 5).unwrap();
        let mc_fe = (ex.avg_fidelity_mc * (ex.d as f64 + 1.0) - 1.0) / ex.d as f64;
        assert!((mc_fe - ex.entanglement_fidelity).abs() < 5.0 * ex.avg_fidelity_mc_stderr * 2.0);
    }

    #[test]
    fn pure_state_average_matches_gate_fidelity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = haar_unitary(8, &mut rng);
        let fe = leak_gate_fidelity(&u, 3, 0.8);
        let favg = (8.0 * fe + 1.0) / 9.0;
        let (mc, se) = leak_pure_state_fidelity(&u, 3, 0.8, 20000, 1);
        assert!((mc - favg).abs() < 5.0 * se, "{mc} vs {favg} ± {se}");
    }

    #[test]
    fn nonexponentiality_of_pure_exponential_is_zero() {
        let ms: Vec<usize> = (1..50).collect();
        let p: Vec<f64> = ms.iter().map(|&m| 0.9f64.powi(m as i32)).collect();
        assert!(nonexponentiality_score(&ms, &p, 10) < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn gauge_invariant_data(seed in 0u64..1000, eps in 0.01f64..0.2) {
            use crate::rbsim::{ExactEngine, RbConfig};
            let g = clifford();
            let phi = overrotation(g.clone(), 0.1).unwrap();
            let s = small_gauge(2, eps, seed);
            let si = s.inverse();
            let conj = ImplementationMap::unchecked(g.clone(), phi.maps.iter().map(|m| m.conjugate_by(&s, &si)).collect());
            let lengths = vec![1usize, 4, 9];
            let base = RbConfig::survival(phi.clone(), lengths.clone(), 0, 1, 0);
            let mut moved = RbConfig::survival(conj, lengths, 0, 1, 0);
            moved.spam_prep = Some(SuperOp::new(2, s.clone()).unwrap());
            moved.spam_meas = Some(SuperOp::new(2, si.clone()).unwrap());
            let a = ExactEngine::new(&base).unwrap();
            let b = ExactEngine::new(&moved).unwrap();
            for m in [1usize, 4, 9] {
                prop_assert!((a.probabilities(m)[0] - b.probabilities(m)[0]).abs() < 1e-10);
            }
        }
    }
}
