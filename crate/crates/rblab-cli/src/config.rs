//! Experiment configuration file schema and resolution into library objects.

use std::path::PathBuf;
use std::sync::Arc;

use rblab::fourier::ImplementationMap;
use rblab::gaugelab::counterexample_maps;
use rblab::groupsrep::{build_clifford_1q, build_pauli_group, hadamard, phase_gate, RbGroup};
use rblab::linalg::{pauli, CMat, C64};
use rblab::rbsim::{
    gate_independent, overrotation, stochastic_leak, Distribution, EndGate, RbConfig, Schedule,
};
use rblab::superop::SuperOp;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub group: GroupSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub povm: PovmSpec,
    #[serde(default)]
    pub poles: PoleSpec,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GroupName {
    Pauli,
    Clifford1q,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub name: GroupName,
    #[serde(default = "one")]
    pub qubits: usize,
}

fn one() -> usize {
    1
}

impl Default for GroupSpec {
    fn default() -> Self {
        GroupSpec { name: GroupName::Clifford1q, qubits: 1 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    Ideal,
    Depolarizing,
    Overrotation,
    Anisotropic,
    Counterexample,
    Leak,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    /// Depolarizing strength.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Over-rotation angle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Pauli-axis contraction factors `(a, b, c)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Leakage subspace dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { model: NoiseModel::Ideal, p: None, theta: None, axes: None, alpha: None, gamma: None, levels: None, mu: None }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Uniform,
    Approximate,
    Subset,
    Interleaved,
    Filtered,
    Xeb,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    #[serde(default = "default_lengths")]
    pub lengths: Vec<usize>,
    /// Shots per sequence; 0 records exact per-sequence probabilities.
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default = "default_sequences")]
    pub sequences: usize,
    /// Weight of the peaked component in approximate (non-uniform) sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Element the approximate distribution is peaked on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak: Option<usize>,
    /// Generators for subset sampling: gate words over `I, H, S, X, Y, Z` (applied left to right) or element indices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Target mixing distance for subset sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_prime: Option<f64>,
    /// Interleaved gate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interleave: Option<usize>,
    /// Irreps to filter on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irreps: Option<Vec<String>>,
    /// Monte Carlo samples for filtered and XEB estimates.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_lengths() -> Vec<usize> {
    vec![1, 2, 4, 8, 16, 32, 64]
}

fn default_shots() -> usize {
    1000
}

fn default_sequences() -> usize {
    50
}

fn default_samples() -> usize {
    10_000
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec {
            kind: ProtocolKind::Uniform,
            lengths: default_lengths(),
            shots: default_shots(),
            sequences: default_sequences(),
            eps: None,
            peak: None,
            generators: None,
            weights: None,
            delta_prime: None,
            interleave: None,
            irreps: None,
            samples: default_samples(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PovmKind {
    /// `{|0><0|, 1 - |0><0|}`.
    Survival,
    /// Full computational basis.
    Computational,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PovmSpec {
    pub kind: PovmKind,
    /// Single-qubit Bloch axis for both preparation and the two-outcome measurement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<[f64; 3]>,
}

impl Default for PovmSpec {
    fn default() -> Self {
        PovmSpec { kind: PovmKind::Survival, axis: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PoleSpec {
    #[serde(default = "default_families")]
    pub families: Vec<String>,
    #[serde(default = "default_pole_counts")]
    pub n: Vec<usize>,
    /// Last sample index `M` of `y_0..y_M`.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Hankel parameter; defaults to `M/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    /// Shot counts for the noisy study; empty means exact data only.
    #[serde(default)]
    pub shots: Vec<u64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Lengths `M` for the conditioning table.
    #[serde(default = "default_cond_lengths")]
    pub cond_lengths: Vec<usize>,
}

fn default_families() -> Vec<String> {
    vec!["lin(0.5)".into(), "lin(0.9)".into(), "F1".into(), "F2".into()]
}

fn default_pole_counts() -> Vec<usize> {
    vec![2, 4, 6]
}

fn default_m() -> usize {
    100
}

fn default_trials() -> usize {
    100
}

fn default_cond_lengths() -> Vec<usize> {
    vec![10, 20, 50, 100, 200, 500, 1000]
}

impl Default for PoleSpec {
    fn default() -> Self {
        PoleSpec {
            families: default_families(),
            n: default_pole_counts(),
            m: default_m(),
            l: None,
            shots: Vec::new(),
            trials: default_trials(),
            cond_lengths: default_cond_lengths(),
        }
    }
}

/// Element index from a decimal index or a word such as `SH` (matrix product, rightmost gate first in time).
fn resolve_element(group: &RbGroup, word: &str) -> Result<usize, CliError> {
    let n = group.order();
    if let Ok(i) = word.trim().parse::<usize>() {
        return if i < n { Ok(i) } else { Err(bad("protocol.generators", format!("element {i} outside group of order {n}"))) };
    }
    if group.d != 2 {
        return Err(bad("protocol.generators", "gate words are single-qubit; use element indices"));
    }
    let mut u = CMat::identity(2);
    for ch in word.trim().chars() {
        let g = match ch.to_ascii_uppercase() {
            'I' => CMat::identity(2),
            'H' => hadamard(),
            'S' => phase_gate(),
            'X' => pauli(1),
            'Y' => pauli(2),
            'Z' => pauli(3),
            other => return Err(bad("protocol.generators", format!("unknown gate {other:?} in {word:?}"))),
        };
        u = u.matmul(&g);
    }
    group.find_element(&u).ok_or_else(|| bad("protocol.generators", format!("{word:?} is not in group {}", group.name)))
}

fn bad(key: &str, msg: impl Into<String>) -> CliError {
    CliError::Schema(format!("`{key}`: {}", msg.into()))
}

fn need<T: Copy>(v: Option<T>, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| bad(key, "required by the selected noise model"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Schema(m) => CliError::Schema(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Semantic checks that the file format cannot express.
    pub fn check(&self) -> Result<(), CliError> {
        let g = &self.group;
        match g.name {
            GroupName::Pauli if !(1..=8).contains(&g.qubits) => return Err(bad("group.qubits", "between 1 and 8 qubits")),
            GroupName::Clifford1q if g.qubits != 1 => return Err(bad("group.qubits", "clifford1q is single-qubit")),
            _ => {}
        }
        let p = &self.protocol;
        if p.lengths.is_empty() {
            return Err(bad("protocol.lengths", "must not be empty"));
        }
        if p.sequences == 0 {
            return Err(bad("protocol.sequences", "must be at least 1"));
        }
        if p.samples == 0 {
            return Err(bad("protocol.samples", "must be at least 1"));
        }
        let in01 = |v: Option<f64>, key: &str| match v {
            Some(x) if !(0.0..=1.0).contains(&x) => Err(bad(key, format!("{x} outside [0, 1]"))),
            _ => Ok(()),
        };
        in01(self.noise.p, "noise.p")?;
        in01(self.noise.gamma, "noise.gamma")?;
        in01(self.noise.mu, "noise.mu")?;
        in01(p.eps, "protocol.eps")?;
        if let Some(a) = self.noise.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(bad("noise.alpha", format!("{a} outside (0, 1]")));
            }
        }
        if let Some(ax) = self.noise.axes {
            if ax.iter().any(|x| x.abs() > 1.0) {
                return Err(bad("noise.axes", "factors must lie in [-1, 1]"));
            }
        }
        if let Some(ax) = self.povm.axis {
            let norm = ax.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(bad("povm.axis", "must be a unit vector"));
            }
            if self.group.qubits != 1 {
                return Err(bad("povm.axis", "only single-qubit experiments take an axis"));
            }
        }
        if self.poles.n.iter().any(|&n| n == 0) {
            return Err(bad("poles.n", "pole counts must be positive"));
        }
        Ok(())
    }

    /// Canonical TOML text with every default filled in.
    pub fn resolved_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    /// First 12 hex digits of the SHA-256 of the resolved configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.resolved_toml().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn dimension(&self) -> usize {
        1 << self.group.qubits
    }

    pub fn build_group(&self) -> Result<Arc<RbGroup>, CliError> {
        if self.group.qubits > 2 {
            return Err(bad("group.qubits", "groups with full superoperator tables are limited to 2 qubits"));
        }
        let g = match self.group.name {
            GroupName::Pauli => build_pauli_group(self.group.qubits),
            GroupName::Clifford1q => build_clifford_1q(),
        };
        g.map(Arc::new).map_err(|e| CliError::Numeric(e.to_string()))
    }

    /// The noise as a single channel, for gate-independent models.
    pub fn noise_channel(&self) -> Result<SuperOp, CliError> {
        let d = self.dimension();
        let n = &self.noise;
        match n.model {
            NoiseModel::Ideal => Ok(SuperOp::identity(d)),
            NoiseModel::Depolarizing => Ok(SuperOp::depolarizing(d, need(n.p, "noise.p")?)),
            NoiseModel::Anisotropic => {
                if d != 2 {
                    return Err(bad("noise.model", "anisotropic noise is single-qubit"));
                }
                let [a, b, c] = need(n.axes, "noise.axes")?;
                Ok(SuperOp::diagonal(2, &[1.0, a, b, c]))
            }
            _ => Err(bad("noise.model", "this command needs gate-independent noise")),
        }
    }

    pub fn build_phi(&self, group: &Arc<RbGroup>) -> Result<ImplementationMap, CliError> {
        let n = &self.noise;
        let noise_err = |e: rblab::rbsim::NoiseError| bad("noise", e.to_string());
        match n.model {
            NoiseModel::Ideal | NoiseModel::Depolarizing | NoiseModel::Anisotropic => {
                gate_independent(group.clone(), &self.noise_channel()?).map_err(noise_err)
            }
            NoiseModel::Overrotation => overrotation(group.clone(), need(n.theta, "noise.theta")?).map_err(noise_err),
            NoiseModel::Counterexample => {
                counterexample_maps(group.clone(), need(n.alpha, "noise.alpha")?, need(n.gamma, "noise.gamma")?)
                    .map_err(|e| bad("noise", e.to_string()))
            }
            NoiseModel::Leak => {
                stochastic_leak(group.clone(), need(n.levels, "noise.levels")?, need(n.mu, "noise.mu")?).map_err(noise_err)
            }
        }
    }

    pub fn povm(&self) -> (CMat, Vec<CMat>) {
        let d = self.dimension();
        if let Some(n) = self.povm.axis {
            let half = |sign: f64| {
                let mut e = CMat::identity(2).scale_re(0.5);
                for (k, &c) in n.iter().enumerate() {
                    e.axpy(C64::new(0.5 * sign * c, 0.0), &pauli(k + 1));
                }
                e
            };
            return (half(1.0), vec![half(1.0), half(-1.0)]);
        }
        let basis = |x: usize| {
            let mut e = CMat::zeros(d, d);
            e[(x, x)] = C64::new(1.0, 0.0);
            e
        };
        let rho0 = basis(0);
        let povm = match self.povm.kind {
            PovmKind::Survival => vec![rho0.clone(), &CMat::identity(d) - &rho0],
            PovmKind::Computational => (0..d).map(basis).collect(),
        };
        (rho0, povm)
    }

    /// Sampling schedule implied by the protocol.
    pub fn schedule(&self, group: &RbGroup) -> Result<Schedule, CliError> {
        let n = group.order();
        let p = &self.protocol;
        let rb = |e: rblab::rbsim::RbError| bad("protocol", e.to_string());
        Ok(match p.kind {
            ProtocolKind::Uniform | ProtocolKind::Filtered | ProtocolKind::Xeb => Schedule::Shared(Distribution::uniform(n)),
            ProtocolKind::Approximate => {
                let peak = p.peak.unwrap_or(group.group.identity());
                if peak >= n {
                    return Err(bad("protocol.peak", format!("element {peak} outside group of order {n}")));
                }
                Schedule::Shared(Distribution::mixture(&Distribution::peaked(n, peak), need(p.eps, "protocol.eps")?).map_err(rb)?)
            }
            ProtocolKind::Subset => {
                let words = p.generators.clone().ok_or_else(|| bad("protocol.generators", "required for subset sampling"))?;
                let gens = words.iter().map(|w| resolve_element(group, w)).collect::<Result<Vec<_>, _>>()?;
                let w = p.weights.clone().unwrap_or_else(|| vec![1.0; gens.len()]);
                Schedule::Shared(Distribution::generator_supported(n, &gens, &w).map_err(rb)?)
            }
            ProtocolKind::Interleaved => {
                let c = p.interleave.ok_or_else(|| bad("protocol.interleave", "required for interleaved sampling"))?;
                if c >= n {
                    return Err(bad("protocol.interleave", format!("element {c} outside group of order {n}")));
                }
                Schedule::interleaved(n, c)
            }
        })
    }

    pub fn rb_config(&self, group: &Arc<RbGroup>) -> Result<RbConfig, CliError> {
        let phi = self.build_phi(group)?;
        let (rho0, povm) = self.povm();
        let p = &self.protocol;
        let end_gate = if p.kind == ProtocolKind::Filtered { EndGate::Uniform } else { EndGate::Fixed(group.group.identity()) };
        let cfg = RbConfig {
            phi,
            end_gate,
            lengths: p.lengths.clone(),
            rho0,
            povm,
            schedule: self.schedule(group)?,
            spam_prep: None,
            spam_meas: None,
            shots: p.shots,
            sequences: p.sequences,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| bad("protocol", e.to_string()))?;
        Ok(cfg)
    }
}
