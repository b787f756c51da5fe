//! Filtered randomized benchmarking and linear cross-entropy benchmarking.
//!
//! The filter `α_λ(g, i) = ⟨⟨Π_i| P_λ ω(g) |ρ₀⟩⟩` projects RB data taken with a
//! uniformly random final gate onto a single irreducible sector. In the Hermitian
//! operator bases used throughout, `ω(g)` is a real matrix, so `conj(ω) = ω`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::groupsrep::{build_clifford_1q, clifford_2q_unitaries, RbGroup};
use crate::linalg::{haar_unitary, outer, CMat, C64, ZERO};
use crate::polefind::trial_rng;
use crate::rbsim::{multinomial, sequence_probabilities, sequence_rng, EndGate, ExactEngine, RbConfig, RbError};
use crate::superop::{covec, dot, operator_basis, vec_op, SuperOp};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("filter for {label} is blind to this SPAM pair (|N_λ| = {n:.3e})")]
    Blind { label: String, n: f64 },
    #[error("unknown irrep {0:?}")]
    UnknownIrrep(String),
    #[error("design POVM available for q ≤ 2, got q = {0}")]
    TooLarge(usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Rb(#[from] RbError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub const BLIND_TOL: f64 = 1e-12;

/// Filter function and normalization for one irrep and one SPAM pair.
#[derive(Debug, Clone)]
pub struct FilterSpec {
    pub label: String,
    pub group: Arc<RbGroup>,
    pub projector: SuperOp,
    pub rho0: CMat,
    /// Fine-grained effects; outcome `i` stands for `multiplicity[i]` identical copies.
    pub effects: Vec<CMat>,
    pub multiplicity: Vec<usize>,
    /// `α_λ(g, i)`, indexed `[g][i]`.
    alpha: Vec<Vec<C64>>,
    pub n_lambda: C64,
}

impl FilterSpec {
    pub fn new(group: Arc<RbGroup>, label: &str, rho0: &CMat, povm: &[CMat]) -> Result<Self, FilterError> {
        Self::with_multiplicity(group, label, rho0, povm, &vec![1; povm.len()])
    }

    pub fn with_multiplicity(
        group: Arc<RbGroup>,
        label: &str,
        rho0: &CMat,
        effects: &[CMat],
        multiplicity: &[usize],
    ) -> Result<Self, FilterError> {
        if effects.len() != multiplicity.len() || effects.is_empty() {
            return Err(FilterError::Invalid("effects and multiplicities must match and be non-empty".into()));
        }
        let irrep = group.irrep(label).ok_or_else(|| FilterError::UnknownIrrep(label.into()))?;
        let projector = SuperOp::new(group.d, irrep.projector.clone()).map_err(|e| FilterError::Invalid(e.to_string()))?;
        let r = vec_op(rho0);
        let cov: Vec<Vec<C64>> = effects.iter().map(covec).collect();
        let mut alpha = Vec::with_capacity(group.order());
        let mut n_lambda = ZERO;
        for w in &group.omega {
            let v = w.apply_vec(&r);
            let pv = projector.apply_vec(&v);
            let row: Vec<C64> = cov.iter().map(|c| dot(c, &pv)).collect();
            for ((a, c), &k) in row.iter().zip(&cov).zip(multiplicity) {
                n_lambda += a * dot(c, &v) * k as f64;
            }
            alpha.push(row);
        }
        n_lambda /= group.order() as f64;
        if n_lambda.norm() < BLIND_TOL {
            return Err(FilterError::Blind { label: label.into(), n: n_lambda.norm() });
        }
        Ok(FilterSpec {
            label: label.into(),
            group,
            projector,
            rho0: rho0.clone(),
            effects: effects.to_vec(),
            multiplicity: multiplicity.to_vec(),
            alpha,
            n_lambda,
        })
    }

    pub fn filter_value(&self, g: usize, i: usize) -> C64 {
        self.alpha[g][i]
    }

    pub fn normalization(&self) -> C64 {
        self.n_lambda
    }

    /// Effects an experiment actually resolves: each copy group merged.
    pub fn data_povm(&self) -> Vec<CMat> {
        self.effects.iter().zip(&self.multiplicity).map(|(e, &k)| e.scale_re(k as f64)).collect()
    }

    fn weight(&self, g: usize, i: usize) -> f64 {
        (self.alpha[g][i] / self.n_lambda).re
    }

    fn check(&self, cfg: &RbConfig) -> Result<(), FilterError> {
        if cfg.group().order() != self.group.order() || cfg.group().d != self.group.d {
            return Err(FilterError::Invalid("configuration and filter use different groups".into()));
        }
        if cfg.povm.len() != self.effects.len() {
            return Err(FilterError::Invalid(format!(
                "configuration has {} outcomes, filter expects {}",
                cfg.povm.len(),
                self.effects.len()
            )));
        }
        Ok(())
    }
}

/// Exact `k_λ(m)` for each length.
///
/// With `EndGate::Uniform` the final gate is averaged over the group (no inversion);
/// with `EndGate::Fixed(g)` only that ending gate is used.
pub fn filtered_data(spec: &FilterSpec, cfg: &RbConfig, lengths: &[usize]) -> Result<Vec<f64>, FilterError> {
    spec.check(cfg)?;
    let engine = ExactEngine::new(cfg)?;
    let group = cfg.group().clone();
    let ends: Vec<usize> = match cfg.end_gate {
        EndGate::Uniform => (0..group.order()).collect(),
        EndGate::Fixed(g) => vec![g],
    };
    let partial: Vec<Vec<f64>> = ends
        .par_iter()
        .map(|&g| {
            let probs = engine.with_end_gate(&group, EndGate::Fixed(g)).probabilities_many(lengths);
            probs.iter().map(|p| (0..spec.effects.len()).map(|i| spec.weight(g, i) * p[i]).sum()).collect()
        })
        .collect();
    Ok((0..lengths.len()).map(|k| partial.iter().map(|v| v[k]).sum::<f64>() / ends.len() as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Estimate { mean, std_err: (var / n).sqrt(), samples: v.len() }
    }

    pub fn variance(&self) -> f64 {
        self.std_err * self.std_err * self.samples as f64
    }
}

/// Per-sample values of the estimator for several filters evaluated on the same sequences.
pub fn filtered_samples(
    specs: &[&FilterSpec],
    cfg: &RbConfig,
    m: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, FilterError> {
    if samples == 0 {
        return Err(FilterError::Invalid("at least one sample is required".into()));
    }
    for s in specs {
        s.check(cfg)?;
    }
    cfg.validate()?;
    let state = cfg.prepared_state();
    let effects = cfg.effect_covectors();
    let with_loss = cfg.has_loss();
    let n = cfg.group().order();
    let k = cfg.povm.len();
    let rows: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|l| {
            let mut rng = sequence_rng(seed, m, l);
            let gates: Vec<usize> = (0..m).map(|i| cfg.schedule.at(i).sample(&mut rng)).collect();
            let g_end = match cfg.end_gate {
                EndGate::Fixed(g) => g,
                EndGate::Uniform => rng.gen_range(0..n),
            };
            let probs = sequence_probabilities(cfg, &gates, g_end, &state, &effects, with_loss)?;
            let freq: Vec<f64> = if cfg.shots == 0 {
                probs
            } else {
                multinomial(&mut rng, cfg.shots, &probs).into_iter().map(|c| c as f64 / cfg.shots as f64).collect()
            };
            Ok(specs.iter().map(|s| (0..k).map(|i| s.weight(g_end, i) * freq[i]).sum()).collect())
        })
        .collect::<Result<_, RbError>>()?;
    Ok(rows)
}

/// Monte Carlo estimate of `k_λ(m)` from `samples` random sequences.
pub fn estimate_filtered(spec: &FilterSpec, cfg: &RbConfig, m: usize, samples: usize, seed: u64) -> Result<Estimate, FilterError> {
    let rows = filtered_samples(&[spec], cfg, m, samples, seed)?;
    Ok(Estimate::from_samples(&rows.iter().map(|r| r[0]).collect::<Vec<_>>()))
}

#[derive(Debug, Clone, Serialize)]
pub struct FilteredRow {
    pub lambda: String,
    pub m: usize,
    pub k_hat: f64,
    pub k_exact: f64,
    pub n_samples: usize,
}

pub fn write_filtered_csv(path: &Path, rows: &[FilteredRow]) -> Result<(), FilterError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `N_λ` for a 3-design POVM with `|I|` outcomes, from the second Haar moment.
pub fn normalization_3design(rho0: &CMat, projector: &SuperOp, total: usize) -> f64 {
    let d = rho0.nrows() as f64;
    let p = projector.apply(rho0);
    d / (total as f64 * (d + 1.0)) * (p.trace().re + rho0.matmul(&p).trace().re)
}

/// The closed form `(1/|I|)[d²/(d²-1) Tr(ρ₀ P_λ(ρ₀)) + Tr P_λ(ρ₀)]` as printed in the literature.
pub fn normalization_3design_printed(rho0: &CMat, projector: &SuperOp, total: usize) -> f64 {
    let d = rho0.nrows() as f64;
    let p = projector.apply(rho0);
    (d * d / (d * d - 1.0) * rho0.matmul(&p).trace().re + p.trace().re) / total as f64
}

/// `{ (d/|I|) C|x⟩⟨x|C† }` over Clifford `C` and basis state `x`, with repeated states merged.
#[derive(Debug, Clone)]
pub struct DesignPovm {
    pub q: usize,
    pub d: usize,
    pub unitaries: Vec<CMat>,
    pub states: Vec<Vec<C64>>,
    pub multiplicity: Vec<usize>,
    /// `|I| = |C_q| d`.
    pub total: usize,
}

fn phase_key(v: &[C64]) -> Vec<(i64, i64)> {
    let lead = v.iter().find(|c| c.norm() > 1e-9).copied().unwrap_or(C64::new(1.0, 0.0));
    let ph = lead.conj() / lead.norm();
    v.iter().map(|c| c * ph).map(|c| ((c.re * 1e8).round() as i64, (c.im * 1e8).round() as i64)).collect()
}

impl DesignPovm {
    pub fn clifford(q: usize) -> Result<Self, FilterError> {
        let unitaries = match q {
            1 => build_clifford_1q().map_err(|e| FilterError::Invalid(e.to_string()))?.unitaries,
            2 => clifford_2q_unitaries(),
            _ => return Err(FilterError::TooLarge(q)),
        };
        let d = 1 << q;
        let mut index: HashMap<Vec<(i64, i64)>, usize> = HashMap::new();
        let (mut states, mut multiplicity) = (Vec::new(), Vec::new());
        for u in &unitaries {
            for x in 0..d {
                let v = u.col(x);
                let key = phase_key(&v);
                match index.get(&key) {
                    Some(&k) => multiplicity[k] += 1,
                    None => {
                        index.insert(key, states.len());
                        states.push(v);
                        multiplicity.push(1);
                    }
                }
            }
        }
        let total = unitaries.len() * d;
        Ok(DesignPovm { q, d, unitaries, states, multiplicity, total })
    }

    /// Fine-grained effect `(d/|I|)|χ⟩⟨χ|` for each distinct state.
    pub fn effects(&self) -> Vec<CMat> {
        let w = self.d as f64 / self.total as f64;
        self.states.iter().map(|s| outer(s, s).scale_re(w)).collect()
    }

    /// Effects with copies merged, as an experiment would record them.
    pub fn coarse_effects(&self) -> Vec<CMat> {
        self.effects().iter().zip(&self.multiplicity).map(|(e, &k)| e.scale_re(k as f64)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        (rng.gen_range(0..self.unitaries.len()), rng.gen_range(0..self.d))
    }

    pub fn state(&self, c: usize, x: usize) -> Vec<C64> {
        self.unitaries[c].col(x)
    }

    /// Monte Carlo estimate of `E_C (1/d) Σ_x |⟨x|C†|ψ⟩|^{2t}`.
    pub fn moment(&self, psi: &[C64], t: u32, draws: usize, seed: u64) -> Estimate {
        let vals: Vec<f64> = (0..draws)
            .into_par_iter()
            .map(|k| {
                let mut rng = trial_rng(seed, k);
                let c = rng.gen_range(0..self.unitaries.len());
                let u = &self.unitaries[c];
                (0..self.d)
                    .map(|x| {
                        let amp: C64 = (0..self.d).map(|j| u[(j, x)].conj() * psi[j]).sum();
                        amp.norm_sqr().powi(t as i32)
                    })
                    .sum::<f64>()
                    / self.d as f64
            })
            .collect();
        Estimate::from_samples(&vals)
    }

    /// Exact average over the whole group of the same quantity.
    pub fn exact_moment(&self, psi: &[C64], t: u32) -> f64 {
        let s: f64 = self
            .unitaries
            .par_iter()
            .map(|u| {
                (0..self.d)
                    .map(|x| {
                        let amp: C64 = (0..self.d).map(|j| u[(j, x)].conj() * psi[j]).sum();
                        amp.norm_sqr().powi(t as i32)
                    })
                    .sum::<f64>()
            })
            .sum();
        s / self.total as f64
    }
}

/// `∫ |⟨χ|ψ⟩|^{2t} dψ = t! (d-1)! / (d+t-1)!`.
pub fn haar_moment(d: usize, t: u32) -> f64 {
    (1..=t).map(|k| k as f64 / (d + k as usize - 1) as f64).product()
}

/// Exact linear XEB decay for gate-independent noise `Λ` under Haar-random gates.
///
/// `F_m = b_tr f_tr^{m-1} + b_adj f_adj^{m-1} - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XebModel {
    pub d: usize,
    pub f_trivial: f64,
    pub f_adjoint: f64,
    pub b_trivial: f64,
    pub b_adjoint: f64,
}

impl XebModel {
    pub fn new(noise: &SuperOp) -> Self {
        let d = noise.dim();
        let n = d * d;
        let lam = noise.mat();
        let mut rho = CMat::zeros(d, d);
        rho[(0, 0)] = C64::new(1.0, 0.0);
        let r = vec_op(&rho);
        let basis = operator_basis(d);
        debug_assert!(basis.iter().all(|b| b.is_hermitian(1e-12)));
        let sectors = [(0..1).collect::<Vec<_>>(), (1..n).collect::<Vec<_>>()];
        let mut f = [0.0; 2];
        let mut b = [0.0; 2];
        for (s, idx) in sectors.iter().enumerate() {
            let dl = idx.len() as f64;
            f[s] = idx.iter().map(|&k| lam[(k, k)].re).sum::<f64>() / dl;
            let state: f64 = idx.iter().map(|&k| (r[k] * r[k]).re).sum::<f64>() / dl;
            let mut meas = 0.0;
            for x in 0..d {
                let mut e = CMat::zeros(d, d);
                e[(x, x)] = C64::new(1.0, 0.0);
                let c = covec(&e);
                let cl = lam.vecmat(&c);
                meas += idx.iter().map(|&k| (c[k] * cl[k]).re).sum::<f64>();
            }
            b[s] = d as f64 * state * meas;
        }
        XebModel { d, f_trivial: f[0], f_adjoint: f[1], b_trivial: b[0], b_adjoint: b[1] }
    }

    pub fn value(&self, m: usize) -> f64 {
        let k = m as i32 - 1;
        self.b_trivial * self.f_trivial.powi(k) + self.b_adjoint * self.f_adjoint.powi(k) - 1.0
    }
}

/// Monte Carlo linear XEB: `d Σ_x p(x) q(x) - 1` averaged over Haar circuits of depth `m`.
pub fn xeb_monte_carlo(noise: &SuperOp, m: usize, samples: usize, seed: u64) -> Estimate {
    let d = noise.dim();
    let effects: Vec<Vec<C64>> = (0..d)
        .map(|x| {
            let mut e = CMat::zeros(d, d);
            e[(x, x)] = C64::new(1.0, 0.0);
            covec(&e)
        })
        .collect();
    let vals: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = trial_rng(seed, s);
            let mut psi = vec![ZERO; d];
            psi[0] = C64::new(1.0, 0.0);
            let mut v = vec_op(&outer(&psi, &psi));
            for _ in 0..m {
                let u = haar_unitary(d, &mut rng);
                psi = u.matvec(&psi);
                v = noise.apply_vec(&SuperOp::unitary(&u).apply_vec(&v));
            }
            let f: f64 = (0..d).map(|x| psi[x].norm_sqr() * dot(&effects[x], &v).re).sum();
            d as f64 * f - 1.0
        })
        .collect();
    Estimate::from_samples(&vals)
}

/// `Σ_{x,j} |U_{xj}|⁴` over Haar `U`, whose mean is `d ∫ Σ_x |⟨x|U|0⟩|⁴ = 2d/(d+1)`.
pub fn haar_fourth_moment(d: usize, samples: usize, seed: u64) -> Estimate {
    let vals: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = trial_rng(seed, s);
            haar_unitary(d, &mut rng).data().iter().map(|z| z.norm_sqr().powi(2)).sum()
        })
        .collect();
    Estimate::from_samples(&vals)
}

/// Draw one outcome index from exact probabilities.
pub fn sample_outcome<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(probs).expect("non-negative probabilities").sample(rng)
}
