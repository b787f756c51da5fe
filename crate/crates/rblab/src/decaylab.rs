//! Decay models for RB data and numerical certification of the residual bounds.
//!
//! For every irrep the Fourier block of the (weighted) implementation map is
//! split into its `n_λ`-dimensional dominant invariant subspace and the rest.
//! The dominant part gives `M_λ` and the SPAM matrix `A_λ`; the rest is
//! propagated on its own so residuals far below machine epsilon relative to
//! `p(m)` stay resolvable.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fourier::{fourier_block, ImplementationMap};
use crate::groupsrep::FiniteGroup;
use crate::linalg::{vdot, CMat, C64, ZERO};
use crate::rbsim::{Distribution, EndGate, ExactEngine, RbConfig, RbError, Schedule};
use crate::superop::{covec, dot, vec_op, SuperOpError};

#[derive(Debug, Error)]
pub enum DecayError {
    #[error(transparent)]
    Rb(#[from] RbError),
    #[error(transparent)]
    SuperOp(#[from] SuperOpError),
    #[error("irrep {label}: dominant and subdominant eigenvalues tie (modulus gap {gap:.3e})")]
    Ambiguous { label: String, gap: f64 },
    #[error("decay analysis needs a single shared sampling distribution")]
    UnsupportedSchedule,
    #[error("matrix is not diagonalizable (eigenvector condition number {0:.3e})")]
    NotDiagonalizable(f64),
    #[error("support of ν generates a proper subgroup of order {size} (group order {order})")]
    ProperSubgroup { size: usize, order: usize },
    #[error("ν^(*k) has not mixed by k = {k} (l1 distance {l1:.3e})")]
    NotMixing { k: usize, l1: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Largest δ for which the decay theorems apply.
pub const DELTA_MAX: f64 = 1.0 / 9.0;

#[derive(Debug, Clone, Serialize)]
pub struct DeltaReport {
    pub delta: f64,
    pub per_element: Vec<f64>,
    pub within_hypothesis: bool,
}

/// `|G|^{-1} Σ_g ‖ω(g) - φ(g)‖⋄`.
pub fn mean_diamond_distance(phi: &ImplementationMap) -> Result<DeltaReport, DecayError> {
    let omega = &phi.group.omega;
    let per_element: Vec<f64> = phi
        .maps
        .par_iter()
        .zip(omega.par_iter())
        .map(|(p, w)| w.sub(p).diamond_norm().map(|n| n.value))
        .collect::<Result<_, _>>()?;
    let delta = per_element.iter().sum::<f64>() / per_element.len() as f64;
    Ok(DeltaReport { delta, within_hypothesis: delta <= DELTA_MAX, per_element })
}

/// `Σ_g ν(g) ‖ω(g) - φ(g)‖⋄` from per-element distances.
pub fn weighted_distance(per_element: &[f64], nu: &[f64]) -> f64 {
    per_element.iter().zip(nu).map(|(d, w)| d * w).sum()
}

/// `x (1 + 2x / (1 - 5x))`, the per-step contraction in the residual bound.
pub fn bound_base(x: f64) -> f64 {
    x * (1.0 + 2.0 * x / (1.0 - 5.0 * x))
}

/// `8 (x [1 + 2x/(1-5x)])^m`.
pub fn exponential_bound(x: f64, m: usize) -> f64 {
    8.0 * bound_base(x).powi(m as i32)
}

/// Full constant-error bound of subset RB in terms of `δ''`.
pub fn subset_epsilon(dd: f64) -> f64 {
    let a = 2.0 * dd / (1.0 - 5.0 * dd);
    let b = dd / (1.0 - dd);
    2.0 * dd * ((1.0 + a) * (1.0 + b) + a * a * b * (3.0 + a))
}

#[derive(Debug, Clone, Serialize)]
pub struct IrrepDecay {
    pub label: String,
    pub irrep_dim: usize,
    pub multiplicity: usize,
    /// Dominant eigenvalues in selection order.
    pub eigenvalues: Vec<C64>,
    /// Largest subdominant eigenvalue modulus.
    pub sub_radius: f64,
    pub m: CMat,
    pub a: CMat,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayModel {
    pub irreps: Vec<IrrepDecay>,
}

impl DecayModel {
    /// `Σ_λ Tr(A_λ M_λ^m)`.
    pub fn predict(&self, m: usize) -> f64 {
        self.irreps
            .iter()
            .filter(|d| d.multiplicity > 0)
            .map(|d| d.a.matmul(&d.m.powi(m)).trace().re)
            .sum()
    }

    /// `Σ_λ Tr(A'_λ M_λ^{m - shift})` with `A' = A M^{shift}`, identical to [`Self::predict`] for `m ≥ shift`.
    pub fn predict_shifted(&self, m: usize, shift: usize) -> f64 {
        assert!(m >= shift);
        self.irreps
            .iter()
            .filter(|d| d.multiplicity > 0)
            .map(|d| d.a.matmul(&d.m.powi(shift)).matmul(&d.m.powi(m - shift)).trace().re)
            .sum()
    }

    pub fn get(&self, label: &str) -> Option<&IrrepDecay> {
        self.irreps.iter().find(|d| d.label == label)
    }
}

/// Sort key `(-|z|, -Re z, -Im z)`, ascending.
fn dominance_order(ev: &[C64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..ev.len()).collect();
    idx.sort_by(|&i, &j| {
        let ki = (-ev[i].norm(), -ev[i].re, -ev[i].im);
        let kj = (-ev[j].norm(), -ev[j].re, -ev[j].im);
        ki.partial_cmp(&kj).unwrap()
    });
    idx
}

struct Split {
    eigenvalues: Vec<C64>,
    sub_radius: f64,
    r1: CMat,
    l1: CMat,
}

/// Dominant right/left bases with `L1^† R1 = 1`.
fn dominant_split(f: &CMat, n_dom: usize, label: &str) -> Result<Split, DecayError> {
    let (ev, vecs) = f.eig();
    let order = dominance_order(&ev);
    let sub_radius = order.get(n_dom).map_or(0.0, |&i| ev[i].norm());
    if n_dom > 0 && n_dom < ev.len() {
        let gap = ev[order[n_dom - 1]].norm() - sub_radius;
        if gap <= 1e-10 {
            return Err(DecayError::Ambiguous { label: label.to_string(), gap });
        }
    }
    let eigenvalues: Vec<C64> = order[..n_dom].iter().map(|&i| ev[i]).collect();
    if n_dom == 0 {
        let n = f.nrows();
        return Ok(Split { eigenvalues, sub_radius, r1: CMat::zeros(n, 0), l1: CMat::zeros(n, 0) });
    }
    let r1 = vecs.select_cols(&order[..n_dom]);
    let (evl, lvecs) = f.adjoint().eig();
    let lorder = dominance_order(&evl.iter().map(|z| z.conj()).collect::<Vec<_>>());
    let lt = lvecs.select_cols(&lorder[..n_dom]);
    let overlap = lt.adjoint().matmul(&r1);
    let sv = overlap.singular_values();
    let cond = sv[0] / sv[sv.len() - 1];
    if !cond.is_finite() || cond > 1e12 {
        return Err(DecayError::NotDiagonalizable(cond));
    }
    let l1 = lt.matmul(&overlap.inverse().adjoint());
    Ok(Split { eigenvalues, sub_radius, r1, l1 })
}

/// `d_λ <<E| Tr_σ[X (C ⊗ 1)] |ρ>>` for rank-one `X = x y^†`.
fn rank_one_functional(x: &[C64], y: &[C64], c: &CMat, effect: &[C64], state: &[C64], n: usize) -> C64 {
    let k = c.nrows();
    let ex: Vec<C64> = (0..k).map(|a| dot(effect, &x[a * n..(a + 1) * n])).collect();
    let yr: Vec<C64> = (0..k).map(|b| vdot(&y[b * n..(b + 1) * n], state)).collect();
    let mut s = ZERO;
    for a in 0..k {
        for b in 0..k {
            s += c[(b, a)] * ex[a] * yr[b];
        }
    }
    s * k as f64
}

/// Decay model plus the pieces needed to evaluate its exact remainder.
pub struct DecayAnalysis {
    pub model: DecayModel,
    dims: Vec<usize>,
    n: usize,
    phi_blocks: Vec<CMat>,
    sub_blocks: Vec<CMat>,
    end_mats: Vec<CMat>,
    effect: Vec<C64>,
    state: Vec<C64>,
    engine: ExactEngine,
}

/// Dominant decays of the configured experiment for one outcome.
pub fn dominant_decays(cfg: &RbConfig, povm_index: usize) -> Result<DecayAnalysis, DecayError> {
    let nu = match &cfg.schedule {
        Schedule::Shared(nu) => nu.clone(),
        Schedule::Cycle(_) => return Err(DecayError::UnsupportedSchedule),
    };
    if povm_index >= cfg.povm.len() {
        return Err(DecayError::Invalid(format!("POVM index {povm_index} out of range")));
    }
    let engine = ExactEngine::new(cfg)?;
    let group = cfg.group().clone();
    let n = group.d * group.d;
    let weighted = cfg.phi.weighted(nu.weights());
    let mut effect = covec(&cfg.povm[povm_index]);
    if let Some(m) = &cfg.spam_meas {
        effect = m.mat().vecmat(&effect);
    }
    let mut state = vec_op(&cfg.rho0);
    if let Some(sp) = &cfg.spam_prep {
        state = sp.apply_vec(&state);
    }
    let per_irrep: Vec<_> = (0..group.catalog.irreps.len())
        .into_par_iter()
        .map(|l| {
            let ir = &group.catalog.irreps[l];
            let f_phi = fourier_block(&cfg.phi, l).mat;
            let f_nu = fourier_block(&weighted, l).mat;
            let split = dominant_split(&f_nu, ir.multiplicity, &ir.label)?;
            let c = match cfg.end_gate {
                EndGate::Fixed(g) => ir.mats[group.group.inv(g)].conj(),
                EndGate::Uniform => {
                    let mut acc = CMat::zeros(ir.dim, ir.dim);
                    for m in &ir.mats {
                        acc += &m.conj();
                    }
                    acc.scale_re(1.0 / group.order() as f64)
                }
            };
            let k = ir.multiplicity;
            let m = split.l1.adjoint().matmul(&f_nu).matmul(&split.r1);
            let fr = f_phi.matmul(&split.r1);
            let a = CMat::from_fn(k, k, |i, j| {
                rank_one_functional(&fr.col(j), &split.l1.col(i), &c, &effect, &state, n)
            });
            let proj = split.r1.matmul(&split.l1.adjoint());
            let sub = f_nu.matmul(&(&CMat::identity(f_nu.nrows()) - &proj));
            let decay = IrrepDecay {
                label: ir.label.clone(),
                irrep_dim: ir.dim,
                multiplicity: k,
                eigenvalues: split.eigenvalues,
                sub_radius: split.sub_radius,
                m,
                a,
            };
            Ok::<_, DecayError>((decay, f_phi, sub, c))
        })
        .collect::<Result<_, _>>()?;
    let mut irreps = Vec::new();
    let mut phi_blocks = Vec::new();
    let mut sub_blocks = Vec::new();
    let mut end_mats = Vec::new();
    for (d, f, s, c) in per_irrep {
        irreps.push(d);
        phi_blocks.push(f);
        sub_blocks.push(s);
        end_mats.push(c);
    }
    Ok(DecayAnalysis {
        model: DecayModel { irreps },
        dims: group.catalog.irreps.iter().map(|i| i.dim).collect(),
        n,
        phi_blocks,
        sub_blocks,
        end_mats,
        effect,
        state,
        engine,
    })
}

impl DecayAnalysis {
    /// Signed remainder `p(m) - Σ_λ Tr(A_λ M_λ^m)` from the subdominant blocks, for each length.
    pub fn residuals(&self, lengths: &[usize]) -> Vec<f64> {
        let n = self.n;
        let mut order: Vec<usize> = (0..lengths.len()).collect();
        order.sort_by_key(|&i| lengths[i]);
        let mut out = vec![0.0; lengths.len()];
        for (l, &k) in self.dims.iter().enumerate() {
            let c = &self.end_mats[l];
            let mut ws: Vec<Vec<C64>> = (0..k)
                .map(|a| {
                    let mut w = vec![ZERO; k * n];
                    for b in 0..k {
                        for j in 0..n {
                            w[b * n + j] = c[(b, a)] * self.state[j];
                        }
                    }
                    w
                })
                .collect();
            let mut step = 0;
            for &idx in &order {
                while step < lengths[idx] {
                    for w in ws.iter_mut() {
                        *w = self.sub_blocks[l].matvec(w);
                    }
                    step += 1;
                }
                let mut s = ZERO;
                for (a, w) in ws.iter().enumerate() {
                    let y = self.phi_blocks[l].matvec(w);
                    s += dot(&self.effect, &y[a * n..(a + 1) * n]);
                }
                out[idx] += (s * k as f64).re;
            }
        }
        out
    }

    pub fn exact(&self, lengths: &[usize], povm_index: usize) -> Vec<f64> {
        self.engine.probabilities_many(lengths).into_iter().map(|p| p[povm_index]).collect()
    }

    /// Least-squares SPAM matrices from exact data over `window`, as a cross-check of `A_λ`.
    pub fn fit_spam(&self, data: &[(usize, f64)]) -> Vec<CMat> {
        let mut cols: Vec<(usize, usize, usize)> = Vec::new();
        for (l, d) in self.model.irreps.iter().enumerate() {
            for i in 0..d.multiplicity {
                for j in 0..d.multiplicity {
                    cols.push((l, i, j));
                }
            }
        }
        let powers: Vec<Vec<CMat>> = data
            .iter()
            .map(|&(m, _)| self.model.irreps.iter().map(|d| d.m.powi(m)).collect())
            .collect();
        // Tr(A M^m) = Σ_ij A_ij (M^m)_ji
        let design = CMat::from_fn(data.len(), cols.len(), |r, c| {
            let (l, i, j) = cols[c];
            powers[r][l][(j, i)]
        });
        let rhs: Vec<C64> = data.iter().map(|&(_, p)| C64::new(p, 0.0)).collect();
        let sol = design.lstsq(&rhs);
        let mut out: Vec<CMat> =
            self.model.irreps.iter().map(|d| CMat::zeros(d.multiplicity, d.multiplicity)).collect();
        for (c, &(l, i, j)) in cols.iter().enumerate() {
            out[l][(i, j)] = sol[c];
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BoundRow {
    pub m: usize,
    pub p_exact: f64,
    pub p_model: f64,
    pub residual: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub kind: String,
    pub delta: f64,
    pub delta_prime: f64,
    pub hypothesis_ok: bool,
    pub m_mix: Option<usize>,
    /// Full subset-RB constant, when applicable.
    pub epsilon: Option<f64>,
    /// Largest `|p_exact - p_model - residual|`, a numerical self-consistency check.
    pub consistency: f64,
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DecayError> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn shared_nu(cfg: &RbConfig) -> Result<&Distribution, DecayError> {
    match &cfg.schedule {
        Schedule::Shared(nu) => Ok(nu),
        Schedule::Cycle(_) => Err(DecayError::UnsupportedSchedule),
    }
}

fn build_rows(
    analysis: &DecayAnalysis,
    povm_index: usize,
    lengths: &[usize],
    model: impl Fn(usize) -> f64,
    bound: impl Fn(usize) -> f64,
    zero_noise: bool,
) -> (Vec<BoundRow>, f64) {
    let exact = analysis.exact(lengths, povm_index);
    let res = analysis.residuals(lengths);
    let mut consistency = 0.0f64;
    let rows = lengths
        .iter()
        .zip(exact.iter().zip(&res))
        .map(|(&m, (&p, &r))| {
            let pm = model(m);
            consistency = consistency.max((p - pm - r).abs());
            let b = bound(m);
            // With no noise the bound degenerates to 0; only roundoff remains.
            let pass = if zero_noise { r.abs() <= 1e-10 } else { r.abs() <= b };
            BoundRow { m, p_exact: p, p_model: pm, residual: r.abs(), bound: b, pass }
        })
        .collect();
    (rows, consistency)
}

/// Uniform RB: residual against `8 (δ[1 + 2δ/(1-5δ)])^m`.
pub fn verify_uniform_bound(cfg: &RbConfig, povm_index: usize, lengths: &[usize]) -> Result<BoundReport, DecayError> {
    let nu = shared_nu(cfg)?;
    if nu.l1_to_uniform() > 1e-12 {
        return Err(DecayError::Invalid("uniform verification needs uniform sampling".into()));
    }
    let delta = mean_diamond_distance(&cfg.phi)?.delta;
    let analysis = dominant_decays(cfg, povm_index)?;
    let (rows, consistency) = build_rows(
        &analysis,
        povm_index,
        lengths,
        |m| analysis.model.predict(m),
        |m| exponential_bound(delta, m),
        delta < 1e-12,
    );
    Ok(BoundReport {
        kind: "uniform".into(),
        delta,
        delta_prime: 0.0,
        hypothesis_ok: delta <= DELTA_MAX,
        m_mix: None,
        epsilon: None,
        consistency,
        rows,
    })
}

/// Approximate RB with fixed ν: residual against the bound at `δ + δ'`.
pub fn verify_nonuniform_bound(cfg: &RbConfig, povm_index: usize, lengths: &[usize]) -> Result<BoundReport, DecayError> {
    let delta_prime = shared_nu(cfg)?.l1_to_uniform();
    let delta = mean_diamond_distance(&cfg.phi)?.delta;
    let total = delta + delta_prime;
    let analysis = dominant_decays(cfg, povm_index)?;
    let (rows, consistency) = build_rows(
        &analysis,
        povm_index,
        lengths,
        |m| analysis.model.predict(m),
        |m| exponential_bound(total, m),
        total < 1e-12,
    );
    Ok(BoundReport {
        kind: "nonuniform".into(),
        delta,
        delta_prime,
        hypothesis_ok: total <= DELTA_MAX,
        m_mix: None,
        epsilon: None,
        consistency,
        rows,
    })
}

/// Subset RB: residual of the `M_λ^{m - m_mix}` model against `4 δ''`, `δ'' = δ + δ'`, for `m ≥ m_mix`.
pub fn verify_subset_bound(
    cfg: &RbConfig,
    povm_index: usize,
    m_mix: usize,
    lengths: &[usize],
) -> Result<BoundReport, DecayError> {
    if m_mix == 0 {
        return Err(DecayError::Invalid("subset verification needs m_mix ≥ 1".into()));
    }
    if lengths.iter().any(|&m| m < m_mix) {
        return Err(DecayError::Invalid("all lengths must be at least m_mix".into()));
    }
    let nu = shared_nu(cfg)?;
    let group = &cfg.group().group;
    let delta_prime = convolve_dist(nu, m_mix, group).l1_to_uniform();
    let per = mean_diamond_distance(&cfg.phi)?.per_element;
    let delta = m_mix as f64 * weighted_distance(&per, nu.weights());
    let dd = delta + delta_prime;
    let analysis = dominant_decays(cfg, povm_index)?;
    let (rows, consistency) = build_rows(
        &analysis,
        povm_index,
        lengths,
        |m| analysis.model.predict_shifted(m, m_mix),
        |_| 4.0 * dd,
        false,
    );
    Ok(BoundReport {
        kind: "subset".into(),
        delta,
        delta_prime,
        hypothesis_ok: dd <= DELTA_MAX,
        m_mix: Some(m_mix),
        epsilon: Some(subset_epsilon(dd)),
        consistency,
        rows,
    })
}

/// `ν^{*k}`; `k = 0` is the point mass at the identity.
pub fn convolve_dist(nu: &Distribution, k: usize, group: &FiniteGroup) -> Distribution {
    let mut cur = Distribution::peaked(nu.len(), group.identity());
    for _ in 0..k {
        cur = cur.convolve(nu, group);
    }
    cur
}

pub fn l1_to_uniform(nu: &Distribution) -> f64 {
    nu.l1_to_uniform()
}

/// Maximum convolution power tried by [`m_mix`].
pub const MIX_LIMIT: usize = 10_000;

/// Smallest `k ≥ 1` with `‖ν^{*k} - u‖₁ ≤ δ'`; 0 when ν itself is already uniform to within `δ'`
/// and no mixing steps are needed.
pub fn m_mix(nu: &Distribution, delta_prime: f64, group: &FiniteGroup) -> Result<usize, DecayError> {
    let support: Vec<usize> = nu.weights().iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(g, _)| g).collect();
    let sub = group.generated_subgroup(&support);
    if sub.len() < group.order() {
        return Err(DecayError::ProperSubgroup { size: sub.len(), order: group.order() });
    }
    if nu.l1_to_uniform() <= delta_prime {
        return Ok(0);
    }
    let mut cur = nu.clone();
    for k in 1..=MIX_LIMIT {
        if k > 1 {
            cur = cur.convolve(nu, group);
        }
        if cur.l1_to_uniform() <= delta_prime {
            return Ok(k);
        }
    }
    Err(DecayError::NotMixing { k: MIX_LIMIT, l1: cur.l1_to_uniform() })
}

/// Frobenius-norm separation: smallest singular value of `Z ↦ A₁Z - ZA₂`.
pub fn sep(a1: &CMat, a2: &CMat) -> f64 {
    let (p, q) = (a1.nrows(), a2.nrows());
    // column-major vec: vec(A₁Z) = (1 ⊗ A₁) vec Z, vec(Z A₂) = (A₂^T ⊗ 1) vec Z
    let op = &CMat::identity(q).kron(a1) - &a2.transpose().kron(&CMat::identity(p));
    *op.singular_values().last().unwrap()
}

/// `κ(S) ‖E‖₂` for the eigenvector matrix `S` of `A`.
pub fn bauer_fike_radius(a: &CMat, e: &CMat) -> Result<f64, DecayError> {
    let (_, s) = a.eig();
    let sv = s.singular_values();
    let cond = sv[0] / sv[sv.len() - 1];
    if !cond.is_finite() || cond > 1e12 {
        return Err(DecayError::NotDiagonalizable(cond));
    }
    Ok(cond * e.spectral_norm())
}

/// First-order perturbed right and left eigenvectors of `A + E` for the simple
/// eigenvalue whose eigenvector best matches `x1`.
pub fn eigvec_perturb_estimate(a: &CMat, e: &CMat, x1: &[C64]) -> Result<(Vec<C64>, Vec<C64>), DecayError> {
    let (ev, r) = a.eig();
    let sv = r.singular_values();
    let cond = sv[0] / sv[sv.len() - 1];
    if !cond.is_finite() || cond > 1e12 {
        return Err(DecayError::NotDiagonalizable(cond));
    }
    let l = r.inverse().adjoint();
    let best = (0..ev.len())
        .max_by(|&i, &j| vdot(&r.col(i), x1).norm().partial_cmp(&vdot(&r.col(j), x1).norm()).unwrap())
        .unwrap();
    let r1 = r.col(best);
    let l1 = l.col(best);
    let mut rn = r1.clone();
    let mut ln = l1.clone();
    let er1 = e.matvec(&r1);
    let eh = e.adjoint();
    let ehl1 = eh.matvec(&l1);
    for j in 0..ev.len() {
        if j == best {
            continue;
        }
        let gap = ev[best] - ev[j];
        if gap.norm() < 1e-14 {
            return Err(DecayError::Invalid("eigenvalue is not simple".into()));
        }
        let cr = vdot(&l.col(j), &er1) / gap;
        let cl = vdot(&r.col(j), &ehl1) / gap.conj();
        for (x, y) in rn.iter_mut().zip(r.col(j)) {
            *x += cr * y;
        }
        for (x, y) in ln.iter_mut().zip(l.col(j)) {
            *x += cl * y;
        }
    }
    Ok((rn, ln))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groupsrep::{build_clifford_1q, build_pauli_group, hadamard, phase_gate, RbGroup};
    use crate::linalg::{ginibre, random_hermitian, random_kraus};
    use crate::rbsim::{gate_independent, overrotation};
    use crate::superop::SuperOp;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn clifford() -> Arc<RbGroup> {
        Arc::new(build_clifford_1q().unwrap())
    }

    #[test]
    fn delta_examples() {
        let g = clifford();
        let ideal = ImplementationMap::ideal(g.clone());
        assert!(mean_diamond_distance(&ideal).unwrap().delta < 1e-7);
        let dep = SuperOp::depolarizing(2, 0.04);
        let phi = gate_independent(g.clone(), &dep).unwrap();
        let rep = mean_diamond_distance(&phi).unwrap();
        let single = dep.sub(&SuperOp::identity(2)).diamond_norm().unwrap().value;
        assert!(rep.per_element.iter().all(|x| (x - single).abs() < 1e-6));
        assert!(rep.within_hypothesis);
    }

    #[test]
    fn overrotation_delta_matches_ancilla_oracle() {
        let g = clifford();
        let phi = overrotation(g.clone(), 0.05).unwrap();
        let rep = mean_diamond_distance(&phi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (el, &dn) in rep.per_element.iter().enumerate().take(6) {
            let diff = g.omega[el].sub(&phi.maps[el]);
            let oracle = crate::superop::tests::ancilla_oracle(&diff, &mut rng, 6);
            assert!((oracle - dn).abs() < 1e-4, "element {el}: {oracle} vs {dn}");
        }
        // gate-independent part of the over-rotation: ‖R_θ - id‖⋄ = 2 sin(θ/2) on 23 of 24 elements
        let expect = 23.0 / 24.0 * 2.0 * (0.025f64).sin();
        assert!((rep.delta - expect).abs() < 1e-6);
    }

    #[test]
    fn depolarizing_dominant_decays() {
        let g = clifford();
        let p = 0.02;
        let phi = gate_independent(g.clone(), &SuperOp::depolarizing(2, p)).unwrap();
        let cfg = RbConfig::survival(phi, vec![1], 0, 1, 0);
        let an = dominant_decays(&cfg, 0).unwrap();
        let adj = an.model.get("adjoint").unwrap();
        assert!((adj.m[(0, 0)] - C64::new(1.0 - p, 0.0)).norm() < 1e-12);
        let triv = an.model.get("trivial").unwrap();
        assert!((triv.m[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-12);
        for m in [0, 3, 17] {
            let expect = 0.5 + 0.5 * (1.0 - p).powi(m as i32 + 1);
            assert!((an.model.predict(m) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn ideal_model_is_identity_and_exact() {
        let g = clifford();
        let cfg = RbConfig::survival(ImplementationMap::ideal(g), vec![1], 0, 1, 0);
        let an = dominant_decays(&cfg, 0).unwrap();
        for d in an.model.irreps.iter().filter(|d| d.multiplicity > 0) {
            assert!((&d.m - &CMat::identity(d.multiplicity)).max_abs() < 1e-12);
        }
        let rep = verify_uniform_bound(&cfg, 0, &[1, 2, 10]).unwrap();
        assert!(rep.all_pass());
        assert!(rep.rows.iter().all(|r| r.residual <= 1e-10 && (r.p_exact - r.p_model).abs() < 1e-10));
    }

    #[test]
    fn pauli_anisotropic_axis_decays() {
        let g = Arc::new(build_pauli_group(1).unwrap());
        let (a, b, c) = (0.97, 0.95, 0.93);
        let phi = gate_independent(g, &SuperOp::diagonal(2, &[1.0, a, b, c])).unwrap();
        let cfg = RbConfig::survival(phi, vec![1], 0, 1, 0);
        let an = dominant_decays(&cfg, 0).unwrap();
        for (lbl, f) in [("pauli:X", a), ("pauli:Y", b), ("pauli:Z", c)] {
            assert!((an.model.get(lbl).unwrap().m[(0, 0)] - C64::new(f, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn depolarizing_residual_is_zero() {
        let g = clifford();
        let phi = gate_independent(g, &SuperOp::depolarizing(2, 0.02)).unwrap();
        let cfg = RbConfig::survival(phi, vec![1], 0, 1, 0);
        let lengths: Vec<usize> = (1..=40).collect();
        let rep = verify_uniform_bound(&cfg, 0, &lengths).unwrap();
        assert!(rep.all_pass());
        assert!(rep.rows.iter().all(|r| r.residual <= 1e-9 && (r.p_exact - r.p_model).abs() <= 1e-9));
    }

    #[test]
    fn overrotation_uniform_bound() {
        let g = clifford();
        let phi = overrotation(g, 0.1).unwrap();
        let cfg = RbConfig::survival(phi, vec![1], 0, 1, 0);
        let lengths: Vec<usize> = (2..=60).collect();
        let rep = verify_uniform_bound(&cfg, 0, &lengths).unwrap();
        assert!(rep.hypothesis_ok);
        assert!(rep.consistency < 1e-12);
        for r in &rep.rows {
            assert!(r.pass, "m={} residual={:e} bound={:e}", r.m, r.residual, r.bound);
        }
    }

    #[test]
    fn spectral_spam_matches_least_squares() {
        let g = clifford();
        let phi = overrotation(g, 0.1).unwrap();
        let cfg = RbConfig::survival(phi, vec![1], 0, 1, 0);
        let an = dominant_decays(&cfg, 0).unwrap();
        let window: Vec<usize> = (5..=60).collect();
        let data: Vec<(usize, f64)> = window.iter().copied().zip(an.exact(&window, 0)).collect();
        let fitted = an.fit_spam(&data);
        for (d, f) in an.model.irreps.iter().zip(&fitted) {
            if d.multiplicity > 0 {
                assert!((&d.a - f).max_abs() < 1e-6, "{}", d.label);
            }
        }
    }

    #[test]
    fn gauge_invariance_of_eigenvalues() {
        let g = clifford();
        let phi = overrotation(g.clone(), 0.08).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let s = &CMat::identity(4) + &ginibre(4, 4, &mut rng).scale_re(0.2);
        let si = s.inverse();
        let maps = phi.maps.iter().map(|m| m.conjugate_by(&s, &si)).collect();
        let gauged = ImplementationMap::unchecked(g, maps);
        let a = dominant_decays(&RbConfig::survival(phi, vec![1], 0, 1, 0), 0).unwrap();
        let b = dominant_decays(&RbConfig::survival(gauged, vec![1], 0, 1, 0), 0).unwrap();
        for (x, y) in a.model.irreps.iter().zip(&b.model.irreps) {
            for (u, v) in x.eigenvalues.iter().zip(&y.eigenvalues) {
                assert!((u - v).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn nonuniform_bound_with_peaked_mixture() {
        let g = Arc::new(build_pauli_group(1).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let maps: Vec<SuperOp> = g
            .omega
            .iter()
            .map(|w| {
                let k = random_kraus(2, 2, &mut rng);
                let noise = SuperOp::from_kraus(&k).unwrap().scale(0.01).add(&SuperOp::identity(2).scale(0.99));
                noise.compose(w)
            })
            .collect();
        let phi = ImplementationMap::new(g.clone(), maps);
        let nu = Distribution::mixture(&Distribution::peaked(4, 0), 0.1).unwrap();
        assert!((nu.l1_to_uniform() - 0.2 * (1.0 - 0.25)).abs() < 1e-12);
        let mut cfg = RbConfig::survival(phi, vec![1], 0, 1, 0);
        cfg.schedule = Schedule::Shared(nu);
        let lengths: Vec<usize> = (1..=30).collect();
        let rep = verify_nonuniform_bound(&cfg, 0, &lengths).unwrap();
        // δ' = 0.15 alone exceeds 1/9: reported, residuals still emitted
        assert!(!rep.hypothesis_ok);
        assert!(rep.all_pass());
        // uniform ν reproduces the uniform report
        cfg.schedule = Schedule::Shared(Distribution::uniform(4));
        let a = verify_nonuniform_bound(&cfg, 0, &lengths).unwrap();
        let b = verify_uniform_bound(&cfg, 0, &lengths).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    fn two_generator_nu(g: &RbGroup) -> Distribution {
        let h = g.find_element(&hadamard()).unwrap();
        let sh = g.find_element(&phase_gate().matmul(&hadamard())).unwrap();
        Distribution::generator_supported(g.order(), &[h, sh], &[1.0, 1.0]).unwrap()
    }

    #[test]
    fn mixing_examples() {
        let g = clifford();
        assert_eq!(m_mix(&Distribution::uniform(24), 0.01, &g.group).unwrap(), 0);
        assert!(matches!(
            m_mix(&Distribution::peaked(24, g.group.identity()), 0.01, &g.group),
            Err(DecayError::ProperSubgroup { size: 1, .. })
        ));
        let h = g.find_element(&hadamard()).unwrap();
        let s = g.find_element(&phase_gate()).unwrap();
        let periodic = Distribution::generator_supported(24, &[h, s], &[1.0, 1.0]).unwrap();
        assert!(matches!(m_mix(&periodic, 0.01, &g.group), Err(DecayError::NotMixing { .. })));
        let nu = two_generator_nu(&g);
        let k = m_mix(&nu, 0.01, &g.group).unwrap();
        assert!(convolve_dist(&nu, k, &g.group).l1_to_uniform() <= 0.01);
        assert!(convolve_dist(&nu, k - 1, &g.group).l1_to_uniform() > 0.01);
    }

    #[test]
    fn subset_bound_two_generators() {
        let g = clifford();
        let nu = two_generator_nu(&g);
        let k = m_mix(&nu, 0.01, &g.group).unwrap();
        let phi = overrotation(g.clone(), 0.002).unwrap();
        let mut cfg = RbConfig::survival(phi, vec![1], 0, 1, 0);
        cfg.schedule = Schedule::Shared(nu);
        let lengths: Vec<usize> = (k..k + 30).collect();
        let rep = verify_subset_bound(&cfg, 0, k, &lengths).unwrap();
        assert!(rep.hypothesis_ok, "δ={} δ'={}", rep.delta, rep.delta_prime);
        assert!(rep.all_pass());
        assert!(rep.epsilon.unwrap() <= 4.0 * (rep.delta + rep.delta_prime));
    }

    #[test]
    fn sep_examples() {
        let one = CMat::identity(1);
        let zero = CMat::zeros(1, 1);
        assert!((sep(&one, &zero) - 1.0).abs() < 1e-14);
        let a2 = CMat::diag(&[C64::new(0.3, 0.0), C64::new(-0.2, 0.0), C64::new(0.9, 0.0)]);
        let a = 0.7;
        let expect = [0.3, -0.2, 0.9].iter().map(|x: &f64| (a - x).abs()).fold(f64::INFINITY, f64::min);
        assert!((sep(&CMat::identity(1).scale_re(a), &a2) - expect).abs() < 1e-12);
    }

    #[test]
    fn bauer_fike_on_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let a = random_hermitian(5, &mut rng);
            let e = random_hermitian(5, &mut rng).scale_re(0.01);
            let r = bauer_fike_radius(&a, &e).unwrap();
            let ea = a.herm_eigvals();
            for z in (&a + &e).herm_eigvals() {
                let dist = ea.iter().map(|x| (x - z).abs()).fold(f64::INFINITY, f64::min);
                assert!(dist <= e.spectral_norm() + 1e-12);
                assert!(dist <= r + 1e-12);
            }
        }
        let jordan = CMat::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!(bauer_fike_radius(&jordan, &CMat::identity(2)).is_err());
    }

    #[test]
    fn eigvec_first_order_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = CMat::diag(&[C64::new(1.0, 0.0), C64::new(0.5, 0.0), C64::new(0.1, 0.0)]);
        let e = ginibre(3, 3, &mut rng).scale_re(1e-4);
        let x1 = vec![C64::new(1.0, 0.0), ZERO, ZERO];
        let (r, l) = eigvec_perturb_estimate(&a, &e, &x1).unwrap();
        let pert = &a + &e;
        let (ev, vecs) = pert.eig();
        let i = (0..3).max_by(|&i, &j| ev[i].norm().partial_cmp(&ev[j].norm()).unwrap()).unwrap();
        let v = vecs.col(i);
        let v: Vec<C64> = v.iter().map(|z| z / v[0]).collect();
        for (x, y) in r.iter().zip(&v) {
            assert!((x - y).norm() < 1e-7);
        }
        // left vector satisfies l^†(A+E) ≈ λ l^† to second order
        let lhs = pert.adjoint().matvec(&l);
        for (x, y) in lhs.iter().zip(&l) {
            assert!((x - ev[i].conj() * y).norm() < 1e-7);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn bound_is_log_linear(x in 0.001f64..0.11, m in 1usize..50) {
            let slope = bound_base(x).ln();
            let lhs = exponential_bound(x, m + 1).ln() - exponential_bound(x, m).ln();
            prop_assert!((lhs - slope).abs() < 1e-10);
        }

        #[test]
        fn model_plus_residual_is_exact(seed in 0u64..200) {
            let g = Arc::new(build_pauli_group(1).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let maps: Vec<SuperOp> = g.omega.iter().map(|w| {
                let k = random_kraus(2, 2, &mut rng);
                SuperOp::from_kraus(&k).unwrap().scale(0.05).add(&SuperOp::identity(2).scale(0.95)).compose(w)
            }).collect();
            let cfg = RbConfig::survival(ImplementationMap::new(g, maps), vec![1], 0, 1, 0);
            let an = dominant_decays(&cfg, 0).unwrap();
            let lengths = [1usize, 4, 9];
            let ex = an.exact(&lengths, 0);
            let res = an.residuals(&lengths);
            for ((m, p), r) in lengths.iter().zip(ex).zip(res) {
                prop_assert!((p - an.model.predict(*m) - r).abs() < 1e-12);
            }
        }
    }
}
