//! RB data collection: Monte Carlo sequences and shots, an exact-expectation
//! engine built on Fourier blocks, noise models and sampling distributions.

use std::path::Path;
use std::sync::Arc;

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fourier::{fourier_block, ImplementationMap};
use crate::groupsrep::{rotation_axis_angle, RbGroup};
use crate::linalg::{rotation, CMat, C64, ZERO};
use crate::superop::{covec, dot, vec_op, SuperOp, CP_TOL};

#[derive(Debug, Error)]
pub enum RbError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("probability {value:.3e} is negative beyond tolerance (non-CP input?)")]
    NegativeProbability { value: f64 },
    #[error("noise model: {0}")]
    Noise(#[from] NoiseError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("parameter out of range: {0}")]
    InvalidParameter(String),
    #[error("map for element {element} is not completely positive (min Choi eigenvalue {min_eig:.3e})")]
    NotCp { element: usize, min_eig: f64 },
    #[error("map for element {element} increases trace")]
    TraceIncreasing { element: usize },
}

/// A probability distribution over group elements.
#[derive(Debug, Clone)]
pub struct Distribution {
    weights: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

impl PartialEq for Distribution {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights
    }
}

impl Distribution {
    pub fn new(weights: Vec<f64>) -> Result<Self, RbError> {
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(RbError::InvalidConfig("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(RbError::InvalidConfig("distribution has empty support".into()));
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(RbError::InvalidConfig(format!("weights sum to {total}, not 1")));
        }
        let sampler = WeightedIndex::new(&weights).map_err(|e| RbError::InvalidConfig(e.to_string()))?;
        Ok(Distribution { weights, sampler })
    }

    /// Normalizes nonnegative weights before building the distribution.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self, RbError> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(RbError::InvalidConfig("distribution has empty support".into()));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self::new(vec![1.0 / n as f64; n]).expect("uniform is valid")
    }

    pub fn peaked(n: usize, g: usize) -> Self {
        let mut w = vec![0.0; n];
        w[g] = 1.0;
        Self::new(w).expect("point mass is valid")
    }

    /// `(1 - eps) * uniform + eps * base`.
    pub fn mixture(base: &Distribution, eps: f64) -> Result<Self, RbError> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(RbError::InvalidConfig(format!("mixture weight {eps} outside [0, 1]")));
        }
        let n = base.len() as f64;
        Self::from_unnormalized(base.weights.iter().map(|&b| (1.0 - eps) / n + eps * b).collect())
    }

    /// Supported on `subset` with the given (unnormalized) weights.
    pub fn generator_supported(n: usize, subset: &[usize], weights: &[f64]) -> Result<Self, RbError> {
        if subset.is_empty() || subset.len() != weights.len() {
            return Err(RbError::InvalidConfig("generator subset and weights must be nonempty and aligned".into()));
        }
        let mut w = vec![0.0; n];
        for (&g, &x) in subset.iter().zip(weights) {
            if g >= n {
                return Err(RbError::InvalidConfig(format!("element {g} outside group of order {n}")));
            }
            w[g] += x;
        }
        Self::from_unnormalized(w)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }

    pub fn l1_to_uniform(&self) -> f64 {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().map(|w| (w - u).abs()).sum()
    }

    /// `(self * other)(g) = Σ_h self(g h^{-1}) other(h)`: draw from `other` first.
    pub fn convolve(&self, other: &Distribution, group: &crate::groupsrep::FiniteGroup) -> Distribution {
        let n = self.len();
        let mut w = vec![0.0; n];
        for (h, &b) in other.weights.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            for (a, &x) in self.weights.iter().enumerate() {
                w[group.mul(a, h)] += x * b;
            }
        }
        Distribution::from_unnormalized(w).expect("convolution of distributions is a distribution")
    }
}

/// Per-step sampling distributions `ν_i`; a list shorter than the sequence is cycled.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Shared(Distribution),
    Cycle(Vec<Distribution>),
}

impl Schedule {
    /// Odd steps uniform, even steps the interleaving gate `c`.
    pub fn interleaved(n: usize, c: usize) -> Self {
        Schedule::Cycle(vec![Distribution::uniform(n), Distribution::peaked(n, c)])
    }

    /// Distribution for step `i` (0-based).
    pub fn at(&self, i: usize) -> &Distribution {
        match self {
            Schedule::Shared(d) => d,
            Schedule::Cycle(v) => &v[i % v.len()],
        }
    }

    fn distinct(&self) -> Vec<&Distribution> {
        match self {
            Schedule::Shared(d) => vec![d],
            Schedule::Cycle(v) => v.iter().collect(),
        }
    }

    fn index_at(&self, i: usize) -> usize {
        match self {
            Schedule::Shared(_) => 0,
            Schedule::Cycle(v) => i % v.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndGate {
    Fixed(usize),
    /// Drawn uniformly per sequence, which removes the inversion.
    Uniform,
}

#[derive(Debug, Clone)]
pub struct RbConfig {
    pub phi: ImplementationMap,
    pub end_gate: EndGate,
    pub lengths: Vec<usize>,
    pub rho0: CMat,
    pub povm: Vec<CMat>,
    pub schedule: Schedule,
    pub spam_prep: Option<SuperOp>,
    pub spam_meas: Option<SuperOp>,
    /// Shots per sequence; zero means the exact per-sequence probability is recorded.
    pub shots: usize,
    pub sequences: usize,
    pub seed: u64,
}

impl RbConfig {
    /// Survival-probability setup: `|0><0|` in, `{|0><0|, 1 - |0><0|}` out, uniform sampling.
    pub fn survival(phi: ImplementationMap, lengths: Vec<usize>, shots: usize, sequences: usize, seed: u64) -> Self {
        let d = phi.d();
        let n = phi.order();
        let mut rho0 = CMat::zeros(d, d);
        rho0[(0, 0)] = C64::new(1.0, 0.0);
        let rest = &CMat::identity(d) - &rho0;
        let e = phi.group.group.identity();
        RbConfig {
            phi,
            end_gate: EndGate::Fixed(e),
            lengths,
            rho0: rho0.clone(),
            povm: vec![rho0, rest],
            schedule: Schedule::Shared(Distribution::uniform(n)),
            spam_prep: None,
            spam_meas: None,
            shots,
            sequences,
            seed,
        }
    }

    pub fn group(&self) -> &Arc<RbGroup> {
        &self.phi.group
    }

    pub fn validate(&self) -> Result<(), RbError> {
        let d = self.phi.d();
        let n = self.phi.order();
        if self.lengths.is_empty() {
            return Err(RbError::InvalidConfig("sequence-length set is empty".into()));
        }
        if self.sequences == 0 {
            return Err(RbError::InvalidConfig("at least one sequence per length is required".into()));
        }
        if let EndGate::Fixed(g) = self.end_gate {
            if g >= n {
                return Err(RbError::InvalidConfig(format!("ending gate {g} outside group of order {n}")));
            }
        }
        for dist in self.schedule.distinct() {
            if dist.len() != n {
                return Err(RbError::InvalidConfig("sampling distribution has wrong support size".into()));
            }
        }
        if self.rho0.nrows() != d || !self.rho0.is_hermitian(1e-10) || (self.rho0.trace().re - 1.0).abs() > 1e-10 {
            return Err(RbError::InvalidConfig("initial state must be a unit-trace Hermitian matrix".into()));
        }
        if self.rho0.herm_eigvals()[0] < -1e-10 {
            return Err(RbError::InvalidConfig("initial state is not positive semidefinite".into()));
        }
        if self.povm.is_empty() {
            return Err(RbError::InvalidConfig("POVM is empty".into()));
        }
        let mut sum = CMat::zeros(d, d);
        for e in &self.povm {
            if e.nrows() != d || !e.is_hermitian(1e-10) || e.herm_eigvals()[0] < -1e-10 {
                return Err(RbError::InvalidConfig("POVM effects must be positive semidefinite".into()));
            }
            sum += e;
        }
        if (&sum - &CMat::identity(d)).max_abs() > 1e-9 {
            return Err(RbError::InvalidConfig("POVM effects do not sum to the identity".into()));
        }
        Ok(())
    }

    /// `vec(E_SP(ρ₀))`.
    pub fn prepared_state(&self) -> Vec<C64> {
        let v = vec_op(&self.rho0);
        match &self.spam_prep {
            Some(sp) => sp.apply_vec(&v),
            None => v,
        }
    }

    /// Co-vectors of the effects with the measurement channel absorbed.
    pub fn effect_covectors(&self) -> Vec<Vec<C64>> {
        self.povm
            .iter()
            .map(|e| {
                let c = covec(e);
                match &self.spam_meas {
                    Some(m) => m.mat().vecmat(&c),
                    None => c,
                }
            })
            .collect()
    }

    pub fn has_loss(&self) -> bool {
        let tp = |m: &SuperOp| m.is_tp(1e-9);
        !(self.phi.maps.iter().all(tp)
            && self.spam_prep.as_ref().map_or(true, tp)
            && self.spam_meas.as_ref().map_or(true, tp))
    }

    /// Number of outcomes recorded, including the loss outcome when present.
    pub fn outcome_count(&self) -> usize {
        self.povm.len() + usize::from(self.has_loss())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbRow {
    pub povm_index: usize,
    pub m: usize,
    pub g_end: Option<usize>,
    pub p_hat: f64,
    pub shots: usize,
    pub sequences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbDataset {
    pub rows: Vec<RbRow>,
    pub seed: u64,
    pub config_hash: Option<String>,
    /// Index of the loss outcome, when one was recorded.
    pub loss_index: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    seed: u64,
    config_hash: Option<String>,
    loss_index: Option<usize>,
}

impl RbDataset {
    pub fn p_hat(&self, povm_index: usize, m: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.povm_index == povm_index && r.m == m).map(|r| r.p_hat)
    }

    /// `(m, p̂)` pairs for one outcome in length order.
    pub fn series(&self, povm_index: usize) -> Vec<(usize, f64)> {
        let mut s: Vec<_> = self.rows.iter().filter(|r| r.povm_index == povm_index).map(|r| (r.m, r.p_hat)).collect();
        s.sort_by_key(|x| x.0);
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), RbError> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<(), RbError> {
        let s = Sidecar { seed: self.seed, config_hash: self.config_hash.clone(), loss_index: self.loss_index };
        std::fs::write(path, serde_json::to_string_pretty(&s)?)?;
        Ok(())
    }

    pub fn read(csv_path: &Path, sidecar: &Path) -> Result<Self, RbError> {
        let mut rdr = csv::Reader::from_path(csv_path)?;
        let rows = rdr.deserialize().collect::<Result<Vec<RbRow>, _>>()?;
        let s: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
        Ok(RbDataset { rows, seed: s.seed, config_hash: s.config_hash, loss_index: s.loss_index })
    }
}

/// Independent RNG stream for one (length index, sequence) pair.
pub fn sequence_rng(seed: u64, m_index: usize, sequence: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((m_index as u64) << 32) | sequence as u64);
    rng
}

/// Outcome probabilities for one gate sequence; a loss entry is appended when `with_loss`.
pub fn sequence_probabilities(
    cfg: &RbConfig,
    gates: &[usize],
    g_end: usize,
    state: &[C64],
    effects: &[Vec<C64>],
    with_loss: bool,
) -> Result<Vec<f64>, RbError> {
    let grp = &cfg.phi.group.group;
    let mut v = state.to_vec();
    let mut total = grp.identity();
    for &g in gates {
        v = cfg.phi.maps[g].apply_vec(&v);
        total = grp.mul(g, total);
    }
    let last = grp.mul(g_end, grp.inv(total));
    v = cfg.phi.maps[last].apply_vec(&v);
    let mut probs = Vec::with_capacity(effects.len() + 1);
    for e in effects {
        let p = dot(e, &v).re;
        if p < -1e-9 {
            return Err(RbError::NegativeProbability { value: p });
        }
        if p > 1.0 + 1e-9 {
            log::warn!("probability {p} exceeds 1; clipping");
        }
        probs.push(p.clamp(0.0, 1.0));
    }
    if with_loss {
        let s: f64 = probs.iter().sum();
        probs.push((1.0 - s).max(0.0));
    }
    Ok(probs)
}

/// Multinomial counts via sequential binomial draws.
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, shots: usize, probs: &[f64]) -> Vec<u64> {
    let mut remaining = shots as u64;
    let mut mass: f64 = probs.iter().sum();
    let mut out = vec![0u64; probs.len()];
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == probs.len() {
            out[k] = remaining;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let c = Binomial::new(remaining, q).expect("valid binomial").sample(rng);
        out[k] = c;
        remaining -= c;
        mass -= p;
    }
    out
}

/// Algorithm 1: Monte Carlo RB data for every length in the configuration.
pub fn run_rb(cfg: &RbConfig) -> Result<RbDataset, RbError> {
    cfg.validate()?;
    let state = cfg.prepared_state();
    let effects = cfg.effect_covectors();
    let with_loss = cfg.has_loss();
    let k = effects.len() + usize::from(with_loss);
    let n = cfg.phi.order();
    let mut rows = Vec::new();
    for (mi, &m) in cfg.lengths.iter().enumerate() {
        let per_seq: Vec<Vec<f64>> = (0..cfg.sequences)
            .into_par_iter()
            .map(|s| {
                let mut rng = sequence_rng(cfg.seed, mi, s);
                let gates: Vec<usize> = (0..m).map(|i| cfg.schedule.at(i).sample(&mut rng)).collect();
                let g_end = match cfg.end_gate {
                    EndGate::Fixed(g) => g,
                    EndGate::Uniform => rng.gen_range(0..n),
                };
                let probs = sequence_probabilities(cfg, &gates, g_end, &state, &effects, with_loss)?;
                Ok(if cfg.shots == 0 {
                    probs
                } else {
                    multinomial(&mut rng, cfg.shots, &probs).into_iter().map(|c| c as f64 / cfg.shots as f64).collect()
                })
            })
            .collect::<Result<_, RbError>>()?;
        for i in 0..k {
            let p_hat = per_seq.iter().map(|p| p[i]).sum::<f64>() / cfg.sequences as f64;
            rows.push(RbRow {
                povm_index: i,
                m,
                g_end: match cfg.end_gate {
                    EndGate::Fixed(g) => Some(g),
                    EndGate::Uniform => None,
                },
                p_hat,
                shots: cfg.shots,
                sequences: cfg.sequences,
            });
        }
    }
    Ok(RbDataset { rows, seed: cfg.seed, config_hash: None, loss_index: with_loss.then_some(cfg.povm.len()) })
}

/// Exact expectation of RB data from products of Fourier blocks.
#[derive(Debug, Clone)]
pub struct ExactEngine {
    dims: Vec<usize>,
    sup: usize,
    phi_blocks: Vec<CMat>,
    /// `[distinct distribution][irrep]`.
    step_blocks: Vec<Vec<CMat>>,
    schedule: Schedule,
    end_mats: Vec<CMat>,
    effects: Vec<Vec<C64>>,
    state: Vec<C64>,
    with_loss: bool,
}

impl ExactEngine {
    pub fn new(cfg: &RbConfig) -> Result<Self, RbError> {
        cfg.validate()?;
        let group = cfg.group().clone();
        let nirr = group.catalog.irreps.len();
        let phi_blocks: Vec<CMat> = (0..nirr).into_par_iter().map(|l| fourier_block(&cfg.phi, l).mat).collect();
        let step_blocks = cfg
            .schedule
            .distinct()
            .into_iter()
            .map(|nu| {
                let weighted = cfg.phi.weighted(nu.weights());
                (0..nirr).into_par_iter().map(|l| fourier_block(&weighted, l).mat).collect()
            })
            .collect();
        let end_mats = end_matrices(&group, cfg.end_gate);
        Ok(ExactEngine {
            dims: group.catalog.irreps.iter().map(|i| i.dim).collect(),
            sup: group.d * group.d,
            phi_blocks,
            step_blocks,
            schedule: cfg.schedule.clone(),
            end_mats,
            effects: cfg.effect_covectors(),
            state: cfg.prepared_state(),
            with_loss: cfg.has_loss(),
        })
    }

    /// Same engine with a different ending gate, reusing the Fourier blocks.
    pub fn with_end_gate(&self, group: &RbGroup, end: EndGate) -> Self {
        ExactEngine { end_mats: end_matrices(group, end), ..self.clone() }
    }

    pub fn probabilities(&self, m: usize) -> Vec<f64> {
        self.probabilities_many(&[m]).pop().unwrap()
    }

    /// Outcome probabilities for each requested length, in the order given.
    pub fn probabilities_many(&self, lengths: &[usize]) -> Vec<Vec<f64>> {
        let n = self.sup;
        let mut order: Vec<usize> = (0..lengths.len()).collect();
        order.sort_by_key(|&i| lengths[i]);
        let mut acc = vec![vec![ZERO; n]; lengths.len()];
        for (l, &k) in self.dims.iter().enumerate() {
            let c = &self.end_mats[l];
            // w_a stacks C_{ba} |ρ> over b, so Σ_a (B w_a)_a = Tr_σ[B (C ⊗ 1)] |ρ>.
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
                    let blk = &self.step_blocks[self.schedule.index_at(step)][l];
                    for w in ws.iter_mut() {
                        *w = blk.matvec(w);
                    }
                    step += 1;
                }
                let out = &mut acc[idx];
                for (a, w) in ws.iter().enumerate() {
                    let y = self.phi_blocks[l].matvec(w);
                    for j in 0..n {
                        out[j] += y[a * n + j] * k as f64;
                    }
                }
            }
        }
        acc.iter()
            .map(|v| {
                let mut p: Vec<f64> = self.effects.iter().map(|e| dot(e, v).re).collect();
                if self.with_loss {
                    let s: f64 = p.iter().sum();
                    p.push(1.0 - s);
                }
                p
            })
            .collect()
    }
}

fn end_matrices(group: &RbGroup, end: EndGate) -> Vec<CMat> {
    group
        .catalog
        .irreps
        .iter()
        .map(|ir| match end {
            EndGate::Fixed(g) => ir.mats[group.group.inv(g)].conj(),
            EndGate::Uniform => {
                let mut acc = CMat::zeros(ir.dim, ir.dim);
                for m in &ir.mats {
                    acc += &m.conj();
                }
                acc.scale_re(1.0 / group.order() as f64)
            }
        })
        .collect()
}

/// `exact_probability(config, i, m)`.
pub fn exact_probability(cfg: &RbConfig, i: usize, m: usize) -> Result<f64, RbError> {
    Ok(ExactEngine::new(cfg)?.probabilities(m)[i])
}

fn verify_map(maps: &[SuperOp]) -> Result<(), NoiseError> {
    for (g, m) in maps.iter().enumerate() {
        let min_eig = m.min_choi_eigenvalue();
        if min_eig < -CP_TOL {
            return Err(NoiseError::NotCp { element: g, min_eig });
        }
        if !crate::fourier::trace_nonincreasing(m) {
            return Err(NoiseError::TraceIncreasing { element: g });
        }
    }
    Ok(())
}

/// `φ(g) = Λ ∘ ω(g)`.
pub fn gate_independent(group: Arc<RbGroup>, noise: &SuperOp) -> Result<ImplementationMap, NoiseError> {
    let maps: Vec<SuperOp> = group.omega.iter().map(|w| noise.compose(w)).collect();
    verify_map(&maps)?;
    Ok(ImplementationMap::new(group, maps))
}

/// Single-qubit over-rotation: each non-identity gate is followed by an extra
/// rotation by `theta` about its own rotation axis.
pub fn overrotation(group: Arc<RbGroup>, theta: f64) -> Result<ImplementationMap, NoiseError> {
    if group.d != 2 {
        return Err(NoiseError::InvalidParameter("over-rotation needs a single-qubit group".into()));
    }
    let e = group.group.identity();
    let mut axes = Vec::with_capacity(group.order());
    let mut angles = Vec::with_capacity(group.order());
    for (g, u) in group.unitaries.iter().enumerate() {
        let (axis, _) = rotation_axis_angle(u);
        axes.push(axis);
        angles.push(if g == e { 0.0 } else { theta });
    }
    overrotation_with(group, &axes, &angles)
}

/// `φ(g) = ω(exp(-i θ_g n_g·σ/2)) ∘ ω(g)` with explicit per-gate axes and angles.
pub fn overrotation_with(group: Arc<RbGroup>, axes: &[[f64; 3]], angles: &[f64]) -> Result<ImplementationMap, NoiseError> {
    if group.d != 2 || axes.len() != group.order() || angles.len() != group.order() {
        return Err(NoiseError::InvalidParameter("one axis and angle per single-qubit gate".into()));
    }
    let maps: Vec<SuperOp> = group
        .omega
        .iter()
        .zip(axes.iter().zip(angles))
        .map(|(w, (&n, &t))| SuperOp::unitary(&rotation(n, t)).compose(w))
        .collect();
    verify_map(&maps)?;
    Ok(ImplementationMap::new(group, maps))
}

/// Amplitude-damping-like `T(γ)` in the normalized Pauli basis.
pub fn t_gamma(gamma: f64) -> SuperOp {
    let s = gamma.sqrt();
    SuperOp::new(
        2,
        CMat::from_real_rows(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, s, 0.0, 0.0], &[0.0, 0.0, s, 0.0], &[1.0 - gamma, 0.0, 0.0, gamma]]),
    )
    .expect("4x4")
}

pub fn m1_alpha(alpha: f64) -> SuperOp {
    SuperOp::diagonal(2, &[1.0, alpha, 1.0, 1.0])
}

pub fn m2_alpha(alpha: f64) -> SuperOp {
    SuperOp::diagonal(2, &[1.0, 1.0, 1.0, 1.0 / alpha])
}

/// `φ(g) = T(γ) M₁(α) ω(g) M₂(α)` on the single-qubit Clifford group.
pub fn counterexample_ix_a(group: Arc<RbGroup>, alpha: f64, gamma: f64) -> Result<ImplementationMap, NoiseError> {
    if group.d != 2 {
        return Err(NoiseError::InvalidParameter("the construction is single-qubit".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) || !(0.0..=1.0).contains(&gamma) {
        return Err(NoiseError::InvalidParameter(format!("need 0 < α ≤ 1 and 0 ≤ γ ≤ 1, got α={alpha}, γ={gamma}")));
    }
    let left = t_gamma(gamma).compose(&m1_alpha(alpha));
    let right = m2_alpha(alpha);
    let maps: Vec<SuperOp> = group.omega.iter().map(|w| left.compose(w).compose(&right)).collect();
    verify_map(&maps)?;
    Ok(ImplementationMap::new(group, maps))
}

/// Row-stochastic `S_L^μ` (0-based): rows `i < L-1` keep `μ` and move `1-μ` to `i+1`; other rows are fixed.
pub fn leak_stochastic_matrix(l: usize, mu: f64, d: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0; d]; d];
    for (i, row) in s.iter_mut().enumerate() {
        if i + 1 < l {
            row[i] = mu;
            row[i + 1] = 1.0 - mu;
        } else {
            row[i] = 1.0;
        }
    }
    s
}

/// `Λ(|i><j|) = δ_ij Σ_k S_ik |k><k|`.
pub fn leak_channel(l: usize, mu: f64, d: usize) -> SuperOp {
    let s = leak_stochastic_matrix(l, mu, d);
    SuperOp::from_map(d, |x| {
        let mut out = CMat::zeros(d, d);
        for i in 0..d {
            let xi = x[(i, i)];
            for k in 0..d {
                if s[i][k] != 0.0 {
                    out[(k, k)] += xi * s[i][k];
                }
            }
        }
        out
    })
}

/// `φ(g)(X) = Λ(P_L X P_L) + U_g (1-P_L) X (1-P_L) U_g^†`.
pub fn stochastic_leak(group: Arc<RbGroup>, l: usize, mu: f64) -> Result<ImplementationMap, NoiseError> {
    let d = group.d;
    if !(1..d).contains(&l) || !(0.0..=1.0).contains(&mu) {
        return Err(NoiseError::InvalidParameter(format!("need 1 ≤ L < d and 0 ≤ μ ≤ 1, got L={l}, μ={mu}")));
    }
    let lam = leak_channel(l, mu, d);
    let mut p = CMat::zeros(d, d);
    for i in 0..l {
        p[(i, i)] = C64::new(1.0, 0.0);
    }
    let q = &CMat::identity(d) - &p;
    let lam_p = lam.compose(&SuperOp::from_kraus(std::slice::from_ref(&p)).expect("square"));
    let maps: Vec<SuperOp> = group
        .unitaries
        .iter()
        .map(|u| lam_p.add(&SuperOp::from_kraus(&[u.matmul(&q)]).expect("square")))
        .collect();
    verify_map(&maps)?;
    Ok(ImplementationMap::new(group, maps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groupsrep::{build_clifford_1q, build_pauli_group};
    use crate::linalg::{random_density, random_kraus, ONE};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_cp(group: &Arc<RbGroup>, seed: u64) -> ImplementationMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let maps =
            (0..group.order()).map(|_| SuperOp::from_kraus(&random_kraus(group.d, 2, &mut rng)).unwrap()).collect();
        ImplementationMap::new(group.clone(), maps)
    }

    fn brute_force(cfg: &RbConfig, m: usize) -> Vec<f64> {
        let n = cfg.phi.order();
        let state = cfg.prepared_state();
        let effects = cfg.effect_covectors();
        let ends: Vec<(usize, f64)> = match cfg.end_gate {
            EndGate::Fixed(g) => vec![(g, 1.0)],
            EndGate::Uniform => (0..n).map(|g| (g, 1.0 / n as f64)).collect(),
        };
        let mut out = vec![0.0; effects.len()];
        let mut idx = vec![0usize; m];
        loop {
            let w: f64 = idx.iter().enumerate().map(|(i, &g)| cfg.schedule.at(i).weights()[g]).product();
            if w > 0.0 {
                for &(e, we) in &ends {
                    let p = sequence_probabilities(cfg, &idx, e, &state, &effects, false).unwrap();
                    for (o, x) in out.iter_mut().zip(p) {
                        *o += w * we * x;
                    }
                }
            }
            let mut k = 0;
            while k < m {
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == m {
                break;
            }
        }
        out
    }

    fn random_config(group: &Arc<RbGroup>, seed: u64) -> RbConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 99);
        let mut cfg = RbConfig::survival(random_cp(group, seed), vec![1], 0, 1, seed);
        cfg.rho0 = random_density(group.d, &mut rng);
        cfg.end_gate = EndGate::Fixed(rng.gen_range(0..group.order()));
        cfg
    }

    #[test]
    fn exact_matches_enumeration_m1_and_m3() {
        let g = Arc::new(build_pauli_group(1).unwrap());
        let cfg = random_config(&g, 4);
        let eng = ExactEngine::new(&cfg).unwrap();
        for m in [0, 1, 3] {
            let bf = brute_force(&cfg, m);
            let ex = eng.probabilities(m);
            for (a, b) in bf.iter().zip(&ex) {
                assert!((a - b).abs() < 1e-12, "m={m}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn exact_matches_enumeration_nonuniform_schedules() {
        let g = Arc::new(build_pauli_group(1).unwrap());
        let mut cfg = random_config(&g, 7);
        cfg.schedule = Schedule::Cycle(vec![
            Distribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
            Distribution::peaked(4, 2),
            Distribution::new(vec![0.5, 0.0, 0.25, 0.25]).unwrap(),
        ]);
        let eng = ExactEngine::new(&cfg).unwrap();
        for m in [2, 4] {
            let bf = brute_force(&cfg, m);
            let ex = eng.probabilities(m);
            for (a, b) in bf.iter().zip(&ex) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        cfg.end_gate = EndGate::Uniform;
        let eng = ExactEngine::new(&cfg).unwrap();
        let bf = brute_force(&cfg, 3);
        for (a, b) in bf.iter().zip(&eng.probabilities(3)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_clifford_enumeration_m2() {
        let g = Arc::new(build_clifford_1q().unwrap());
        let cfg = random_config(&g, 8);
        let eng = ExactEngine::new(&cfg).unwrap();
        let bf = brute_force(&cfg, 2);
        for (a, b) in bf.iter().zip(&eng.probabilities(2)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ideal_gates_return_end_gate_expectation() {
        let g = Arc::new(build_clifford_1q().unwrap());
        let mut cfg = RbConfig::survival(ImplementationMap::ideal(g.clone()), vec![1, 5, 20], 0, 1, 0);
        cfg.end_gate = EndGate::Fixed(5);
        let expect = crate::superop::expectation(&cfg.povm[0], &g.omega[5], &cfg.rho0);
        let eng = ExactEngine::new(&cfg).unwrap();
        for p in eng.probabilities_many(&[1, 5, 20]) {
            assert!((p[0] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_gates_survive_with_certainty() {
        let g = Arc::new(build_clifford_1q().unwrap());
        let cfg = RbConfig::survival(ImplementationMap::ideal(g), vec![1, 10, 50], 100, 20, 3);
        let ds = run_rb(&cfg).unwrap();
        for m in [1, 10, 50] {
            assert_eq!(ds.p_hat(0, m), Some(1.0));
            assert_eq!(ds.p_hat(1, m), Some(0.0));
        }
    }

    #[test]
    fn depolarizing_decay_is_single_exponential() {
        let g = Arc::new(build_clifford_1q().unwrap());
        let p = 0.03;
        let phi = gate_independent(g, &SuperOp::depolarizing(2, p)).unwrap();
        let cfg = RbConfig::survival(phi, vec![], 0, 1, 0);
        let mut cfg = cfg;
        cfg.lengths = vec![1];
        let eng = ExactEngine::new(&cfg).unwrap();
        for m in [0usize, 1, 7, 40] {
            let expect = 0.5 + 0.5 * (1.0 - p).powi(m as i32 + 1);
            let got = eng.probabilities(m);
            assert!((got[0] - expect).abs() < 1e-12);
            assert!((got[0] + got[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_unrolled_replay() {
        let g = Arc::new(build_pauli_group(1).unwrap());
        let phi = random_cp(&g, 31);
        let cfg = RbConfig::survival(phi.clone(), vec![2], 50, 3, 1234);
        let ds = run_rb(&cfg).unwrap();
        let mut fractions = [0.0f64; 2];
        for s in 0..3 {
            let mut rng = sequence_rng(1234, 0, s);
            let a = cfg.schedule.at(0).sample(&mut rng);
            let b = cfg.schedule.at(1).sample(&mut rng);
            let inv = g.group.inv(g.group.mul(b, a));
            let mut v = vec_op(&cfg.rho0);
            for x in [a, b, inv] {
                v = phi.maps[x].apply_vec(&v);
            }
            let p0 = dot(&covec(&cfg.povm[0]), &v).re;
            let p1 = dot(&covec(&cfg.povm[1]), &v).re;
            let c = multinomial(&mut rng, 50, &[p0.clamp(0.0, 1.0), p1.clamp(0.0, 1.0)]);
            fractions[0] += c[0] as f64 / 50.0;
            fractions[1] += c[1] as f64 / 50.0;
        }
        assert_eq!(ds.p_hat(0, 2).unwrap(), fractions[0] / 3.0);
        assert_eq!(ds.p_hat(1, 2).unwrap(), fractions[1] / 3.0);
    }

    #[test]
    fn monte_carlo_within_four_sigma() {
        let g = Arc::new(build_clifford_1q().unwrap());
        let phi = random_cp(&g, 41);
        let mut hits = 0;
        let trials = 20;
        for t in 0..trials {
            let cfg = RbConfig::survival(phi.clone(), vec![4], 20, 200, 500 + t);
            let ds = run_rb(&cfg).unwrap();
            let p = exact_probability(&cfg, 0, 4).unwrap();
            let n_total = 4000.0;
            if (ds.p_hat(0, 4).unwrap() - p).abs() <= 4.0 * (p * (1.0 - p) / n_total).sqrt() {
                hits += 1;
            }
        }
        assert!(hits as f64 >= 0.95 * trials as f64, "{hits}/{trials}");
    }

    #[test]
    fn end_gate_relabeling_invariance() {
        let g = Arc::new(build_clifford_1q().unwrap());
        let phi = gate_independent(g.clone(), &SuperOp::depolarizing(2, 0.05)).unwrap();
        let base = RbConfig::survival(phi.clone(), vec![3], 0, 1, 0);
        let p0 = ExactEngine::new(&base).unwrap().probabilities(3)[0];
        for h in [1, 7, 13] {
            let mut cfg = base.clone();
            cfg.end_gate = EndGate::Fixed(h);
            cfg.rho0 = g.omega[g.group.inv(h)].apply(&base.rho0);
            let p = ExactEngine::new(&cfg).unwrap().probabilities(3)[0];
            assert!((p - p0).abs() < 1e-12);
        }
        let mut cfg = base.clone();
        cfg.end_gate = EndGate::Fixed(7);
        cfg.rho0 = g.omega[g.group.inv(7)].apply(&base.rho0);
        cfg.shots = 1000;
        cfg.sequences = 1000;
        cfg.seed = 77;
        let ds = run_rb(&cfg).unwrap();
        assert!((ds.p_hat(0, 3).unwrap() - p0).abs() < 4.0 * (p0 * (1.0 - p0) / 1e6).sqrt() + 1e-3);
    }

    #[test]
    fn determinism_across_thread_counts() {
        let g = Arc::new(build_clifford_1q().unwrap());
        let cfg = RbConfig::survival(random_cp(&g, 55), vec![1, 3, 8], 30, 40, 9);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_rb(&cfg).unwrap());
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| run_rb(&cfg).unwrap());
        assert_eq!(one, four);
    }

    #[test]
    fn trace_decreasing_maps_record_loss() {
        let g = Arc::new(build_pauli_group(1).unwrap());
        let phi = gate_independent(g, &SuperOp::depolarizing(2, 0.1).scale(0.9)).unwrap();
        let cfg = RbConfig::survival(phi, vec![2], 0, 5, 1);
        let ds = run_rb(&cfg).unwrap();
        assert_eq!(ds.loss_index, Some(2));
        let total: f64 = (0..3).map(|i| ds.p_hat(i, 2).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((ds.p_hat(2, 2).unwrap() - (1.0 - 0.9f64.powi(3))).abs() < 1e-12);
        let ex = ExactEngine::new(&cfg).unwrap().probabilities(2);
        assert!((ex[2] - ds.p_hat(2, 2).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn negative_probability_is_an_error() {
        let g = Arc::new(build_pauli_group(1).unwrap());
        // transpose-like map: flips the Y axis, positive but not CP; a reflection through -Z gives negative outcomes
        let bad = SuperOp::diagonal(2, &[1.0, 1.0, 1.0, -3.0]);
        let phi = ImplementationMap::unchecked(g.clone(), vec![bad; 4]);
        let cfg = RbConfig::survival(phi, vec![1], 10, 2, 0);
        assert!(matches!(run_rb(&cfg), Err(RbError::NegativeProbability { .. })));
    }

    #[test]
    fn config_validation() {
        let g = Arc::new(build_pauli_group(1).unwrap());
        let mut cfg = RbConfig::survival(ImplementationMap::ideal(g), vec![], 1, 1, 0);
        assert!(cfg.validate().is_err());
        cfg.lengths = vec![1];
        assert!(cfg.validate().is_ok());
        cfg.povm.pop();
        assert!(cfg.validate().is_err());
        assert!(Distribution::new(vec![0.5, 0.4]).is_err());
        assert!(Distribution::new(vec![0.0, 0.0]).is_err());
        assert!(Distribution::generator_supported(4, &[], &[]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = Arc::new(build_pauli_group(1).unwrap());
        let mut cfg = RbConfig::survival(random_cp(&g, 2), vec![1, 2], 10, 3, 5);
        cfg.end_gate = EndGate::Uniform;
        let mut ds = run_rb(&cfg).unwrap();
        ds.config_hash = Some("abc".into());
        let dir = std::env::temp_dir().join(format!("rbsim-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        ds.write_csv(&dir.join("d.csv")).unwrap();
        ds.write_sidecar(&dir.join("d.json")).unwrap();
        let back = RbDataset::read(&dir.join("d.csv"), &dir.join("d.json")).unwrap();
        assert_eq!(back, ds);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn noise_model_examples() {
        let g = Arc::new(build_clifford_1q().unwrap());
        let phi = gate_independent(g.clone(), &SuperOp::identity(2)).unwrap();
        assert!(phi.max_abs_diff(&ImplementationMap::ideal(g.clone())) < 1e-15);

        let ce = counterexample_ix_a(g.clone(), 0.5, 0.0).unwrap();
        let expect = CMat::from_real_rows(&[&[1.0, 0.0, 0.0, 0.0], &[0.0; 4], &[0.0; 4], &[1.0, 0.0, 0.0, 0.0]]);
        for m in &ce.maps {
            assert!((m.mat() - &expect).max_abs() < 1e-12);
        }
        assert!(ce.cp);

        let over = overrotation(g.clone(), 0.1).unwrap();
        assert!(over.cp && over.trace_nonincreasing);
        let e = g.group.identity();
        assert!((over.maps[e].mat() - g.omega[e].mat()).max_abs() < 1e-12);
    }

    #[test]
    fn stochastic_leak_matrix_and_channel() {
        let s = leak_stochastic_matrix(3, 0.8, 5);
        assert_eq!(s[0], vec![0.8, 1.0 - 0.8, 0.0, 0.0, 0.0]);
        assert_eq!(s[1], vec![0.0, 0.8, 1.0 - 0.8, 0.0, 0.0]);
        assert_eq!(s[2], vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(s[4], vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        for row in &s {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        let g = Arc::new(build_pauli_group(2).unwrap());
        let phi = stochastic_leak(g.clone(), 2, 0.7).unwrap();
        assert!(phi.maps.iter().all(|m| m.is_tp(1e-10) && m.is_cp(1e-9)));
        assert!(stochastic_leak(g, 4, 0.5).is_err());
    }

    #[test]
    fn leak_survival_follows_stochastic_powers() {
        // |0><0| commutes with P_L, so every gate acts as Λ on it.
        let g = Arc::new(build_pauli_group(2).unwrap());
        let (l, mu) = (3, 0.6);
        let phi = stochastic_leak(g.clone(), l, mu).unwrap();
        let mut rho = CMat::zeros(4, 4);
        rho[(0, 0)] = ONE;
        let mut eff = rho.clone();
        eff[(l - 1, l - 1)] = ONE;
        let mut v = vec_op(&rho);
        for _ in 0..5 {
            v = phi.maps[3].apply_vec(&v);
        }
        let s = leak_stochastic_matrix(l, mu, 4);
        let mut row = vec![1.0, 0.0, 0.0, 0.0];
        for _ in 0..5 {
            row = (0..4).map(|k| (0..4).map(|i| row[i] * s[i][k]).sum()).collect();
        }
        assert!((dot(&covec(&eff), &v).re - (row[0] + row[l - 1])).abs() < 1e-12);
    }

    #[test]
    fn distribution_examples() {
        let u = Distribution::uniform(4);
        assert_eq!(u.weights(), &[0.25; 4]);
        assert_eq!(u.l1_to_uniform(), 0.0);
        let p = Distribution::peaked(24, 3);
        assert!((p.l1_to_uniform() - 2.0 * (1.0 - 1.0 / 24.0)).abs() < 1e-12);
        let mix = Distribution::mixture(&p, 0.3).unwrap();
        assert!((mix.l1_to_uniform() - 0.3 * p.l1_to_uniform()).abs() < 1e-12);
        let sched = Schedule::interleaved(24, 5);
        assert_eq!(sched.at(0), &Distribution::uniform(24));
        assert_eq!(sched.at(1), &Distribution::peaked(24, 5));
        assert_eq!(sched.at(2), &Distribution::uniform(24));
    }

    #[test]
    fn generator_distribution_mixes() {
        let g = build_clifford_1q().unwrap();
        let h = g.find_element(&crate::groupsrep::hadamard()).unwrap();
        let s = g.find_element(&crate::groupsrep::phase_gate()).unwrap();
        let nu = Distribution::generator_supported(24, &[g.group.identity(), h, s], &[1.0, 1.0, 1.0]).unwrap();
        let mut cur = nu.clone();
        let mut dists = vec![cur.l1_to_uniform()];
        for _ in 0..60 {
            cur = cur.convolve(&nu, &g.group);
            dists.push(cur.l1_to_uniform());
        }
        assert!(dists.last().unwrap() < &1e-3);
        assert!(dists.windows(10).all(|w| w[9] <= w[0] + 1e-12));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn exact_engine_is_complete_for_tp_maps(seed in 0u64..500, m in 0usize..12) {
            let g = Arc::new(build_pauli_group(1).unwrap());
            let phi = random_cp(&g, seed);
            let cfg = RbConfig::survival(phi, vec![m], 0, 1, seed);
            let p = ExactEngine::new(&cfg).unwrap().probabilities(m);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x >= -1e-12 && x <= 1.0 + 1e-12));
        }

        #[test]
        fn multinomial_conserves_shots(seed in 0u64..1000, shots in 0usize..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = multinomial(&mut rng, shots, &[0.2, 0.5, 0.3]);
            prop_assert_eq!(c.iter().sum::<u64>(), shots as u64);
        }
    }
}
