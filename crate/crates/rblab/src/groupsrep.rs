//! Finite groups, their unitary and adjoint representations, and irreps.
//!
//! Groups are projective: elements are unitaries modulo global phase, which is
//! all the adjoint action `ρ ↦ U ρ U^†` can see. Each element is stored with
//! a representative unitary whose first non-negligible entry is real positive.
//! The full set of irreducible representations is extracted numerically from
//! the regular representation.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{pauli, pauli_string, random_hermitian, CMat, C64, ONE, ZERO};
use crate::superop::SuperOp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupError {
    #[error("qubit count {q} is outside the supported range 1..={max}")]
    QubitCount { q: usize, max: usize },
    #[error("generators produced more than {0} elements")]
    TooLarge(usize),
    #[error("irrep decomposition failed: {0}")]
    Decomposition(String),
    #[error("projector rank {rank:.6} is not a multiple of irrep dimension {dim}")]
    NonIntegerMultiplicity { rank: f64, dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteGroup {
    order: usize,
    cayley: Vec<usize>,
    inv: Vec<usize>,
    identity: usize,
}

impl FiniteGroup {
    pub fn from_table(order: usize, cayley: Vec<usize>) -> Result<Self, GroupError> {
        if cayley.len() != order * order {
            return Err(GroupError::Decomposition("Cayley table has wrong size".into()));
        }
        let identity = (0..order)
            .find(|&e| (0..order).all(|g| cayley[e * order + g] == g && cayley[g * order + e] == g))
            .ok_or_else(|| GroupError::Decomposition("no identity element".into()))?;
        let mut inv = vec![usize::MAX; order];
        for g in 0..order {
            inv[g] = (0..order)
                .find(|&h| cayley[g * order + h] == identity)
                .ok_or_else(|| GroupError::Decomposition(format!("element {g} has no inverse")))?;
        }
        Ok(FiniteGroup { order, cayley, inv, identity })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    #[inline]
    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.cayley[a * self.order + b]
    }

    #[inline]
    pub fn inv(&self, a: usize) -> usize {
        self.inv[a]
    }

    /// Product `g_k ⋯ g_1` of a sequence applied first-to-last.
    pub fn compose_sequence(&self, seq: &[usize]) -> usize {
        seq.iter().fold(self.identity, |acc, &g| self.mul(g, acc))
    }

    /// Every row and column of the Cayley table is a permutation and `g g^{-1} = e`.
    pub fn is_latin_square(&self) -> bool {
        let n = self.order;
        for g in 0..n {
            let mut row = vec![false; n];
            let mut col = vec![false; n];
            for h in 0..n {
                row[self.mul(g, h)] = true;
                col[self.mul(h, g)] = true;
            }
            if !row.iter().all(|&x| x) || !col.iter().all(|&x| x) {
                return false;
            }
            if self.mul(g, self.inv(g)) != self.identity {
                return false;
            }
        }
        true
    }

    pub fn is_associative_on(&self, triples: &[(usize, usize, usize)]) -> bool {
        triples.iter().all(|&(a, b, c)| self.mul(self.mul(a, b), c) == self.mul(a, self.mul(b, c)))
    }

    /// Elements of the subgroup generated by `gens`.
    pub fn generated_subgroup(&self, gens: &[usize]) -> Vec<usize> {
        let mut seen = vec![false; self.order];
        seen[self.identity] = true;
        let mut frontier = vec![self.identity];
        while let Some(x) = frontier.pop() {
            for &g in gens {
                let y = self.mul(g, x);
                if !seen[y] {
                    seen[y] = true;
                    frontier.push(y);
                }
            }
        }
        (0..self.order).filter(|&g| seen[g]).collect()
    }
}

/// Per-element representation matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub dim: usize,
    pub mats: Vec<CMat>,
    /// True for the induced superoperator representation `ω(g)(ρ) = U_g ρ U_g^†`.
    pub adjoint: bool,
}

impl Representation {
    /// Largest deviation from `R(g)R(h) = R(gh)` and from unitarity.
    pub fn homomorphism_defect(&self, group: &FiniteGroup) -> f64 {
        let mut worst = 0.0f64;
        for g in 0..group.order() {
            worst = worst.max((&self.mats[g].adjoint().matmul(&self.mats[g]) - &CMat::identity(self.dim)).max_abs());
            for h in 0..group.order() {
                let lhs = self.mats[g].matmul(&self.mats[h]);
                worst = worst.max((&lhs - &self.mats[group.mul(g, h)]).max_abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Irrep {
    pub label: String,
    pub dim: usize,
    pub character: Vec<C64>,
    /// `σ_λ(g)` for every element, in a fixed orthonormal basis.
    pub mats: Vec<CMat>,
    /// Multiplicity `n_λ` in the adjoint representation.
    pub multiplicity: usize,
    /// `P_λ = (d_λ/|G|) Σ_g conj(χ_λ(g)) ω(g)`.
    pub projector: CMat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrrepCatalog {
    pub irreps: Vec<Irrep>,
}

impl IrrepCatalog {
    pub fn get(&self, label: &str) -> Option<&Irrep> {
        self.irreps.iter().find(|i| i.label == label)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.irreps.iter().position(|i| i.label == label)
    }

    pub fn labels(&self) -> Vec<String> {
        self.irreps.iter().map(|i| i.label.clone()).collect()
    }

    /// Irreps appearing in the adjoint representation.
    pub fn present(&self) -> impl Iterator<Item = &Irrep> {
        self.irreps.iter().filter(|i| i.multiplicity > 0)
    }

    /// Character inner product `|G|^{-1} Σ_g conj(χ_a(g)) χ_b(g)`.
    pub fn character_inner(&self, a: usize, b: usize) -> C64 {
        let ca = &self.irreps[a].character;
        let cb = &self.irreps[b].character;
        ca.iter().zip(cb).map(|(x, y)| x.conj() * y).sum::<C64>() / ca.len() as f64
    }
}

/// A projective group together with its defining and adjoint representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbGroup {
    pub name: String,
    /// Hilbert-space dimension of the defining representation.
    pub d: usize,
    pub group: FiniteGroup,
    pub unitaries: Vec<CMat>,
    pub omega: Vec<SuperOp>,
    pub catalog: IrrepCatalog,
}

impl RbGroup {
    pub fn order(&self) -> usize {
        self.group.order()
    }

    pub fn adjoint_representation(&self) -> Representation {
        Representation { dim: self.d * self.d, mats: self.omega.iter().map(|s| s.mat().clone()).collect(), adjoint: true }
    }

    pub fn defining_representation(&self) -> Representation {
        Representation { dim: self.d, mats: self.unitaries.clone(), adjoint: false }
    }

    pub fn irrep(&self, label: &str) -> Option<&Irrep> {
        self.catalog.get(label)
    }

    /// Index of the element whose adjoint action matches `u`.
    pub fn find_element(&self, u: &CMat) -> Option<usize> {
        let key = phase_key(u);
        self.unitaries.iter().position(|v| phase_key(v) == key)
    }
}

/// Rounded, phase-normalized entries identifying a unitary modulo global phase.
fn phase_key(u: &CMat) -> Vec<i64> {
    let pivot = u.data().iter().find(|z| z.norm() > 1e-6).copied().unwrap_or(ONE);
    let ph = pivot.conj() / pivot.norm();
    u.data()
        .iter()
        .flat_map(|z| {
            let w = z * ph;
            [(w.re * 1e8).round() as i64, (w.im * 1e8).round() as i64]
        })
        .collect()
}

fn normalize_phase(u: &CMat) -> CMat {
    let pivot = u.data().iter().find(|z| z.norm() > 1e-6).copied().unwrap_or(ONE);
    u.scale(pivot.conj() / pivot.norm())
}

/// Closure of the generators under multiplication, breadth first from the identity.
pub fn close_unitaries(gens: &[CMat], max_order: usize) -> Result<Vec<CMat>, GroupError> {
    let d = gens.first().map_or(1, |g| g.nrows());
    let id = CMat::identity(d);
    let mut elems = vec![id.clone()];
    let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
    index.insert(phase_key(&id), 0);
    let mut head = 0;
    while head < elems.len() {
        let x = elems[head].clone();
        head += 1;
        for g in gens {
            let y = normalize_phase(&g.matmul(&x));
            let key = phase_key(&y);
            if let std::collections::hash_map::Entry::Vacant(e) = index.entry(key) {
                e.insert(elems.len());
                elems.push(y);
                if elems.len() > max_order {
                    return Err(GroupError::TooLarge(max_order));
                }
            }
        }
    }
    Ok(elems)
}

fn cayley_from_unitaries(elems: &[CMat]) -> Result<FiniteGroup, GroupError> {
    let n = elems.len();
    let index: HashMap<Vec<i64>, usize> = elems.iter().enumerate().map(|(i, u)| (phase_key(u), i)).collect();
    let mut cayley = vec![0usize; n * n];
    for a in 0..n {
        for b in 0..n {
            let key = phase_key(&elems[a].matmul(&elems[b]));
            cayley[a * n + b] = *index
                .get(&key)
                .ok_or_else(|| GroupError::Decomposition(format!("product {a}*{b} leaves the element set")))?;
        }
    }
    FiniteGroup::from_table(n, cayley)
}

struct RawIrrep {
    dim: usize,
    character: Vec<C64>,
    mats: Vec<CMat>,
}

/// All inequivalent irreps, from eigenspaces of a random element of the
/// commutant of the regular representation.
fn irreps_from_regular(group: &FiniteGroup, seed: u64) -> Result<Vec<RawIrrep>, GroupError> {
    let n = group.order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_hermitian(n, &mut rng);
    // R(g)|h> = |gh>, so (R(g) H R(g)^T)[a][b] = H[g^{-1}a][g^{-1}b].
    let mut avg = CMat::zeros(n, n);
    for g in 0..n {
        let gi = group.inv(g);
        for a in 0..n {
            let ga = group.mul(gi, a);
            for b in 0..n {
                avg[(a, b)] += h[(ga, group.mul(gi, b))];
            }
        }
    }
    let avg = avg.scale_re(1.0 / n as f64);
    let (vals, vecs) = avg.herm_eig();
    let spread = vals.last().unwrap() - vals.first().unwrap();
    let tol = 1e-7 * spread.max(1.0);
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in vals.iter().enumerate() {
        match clusters.last_mut() {
            Some(c) if (v - vals[*c.last().unwrap()]).abs() <= tol => c.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    let mut out: Vec<RawIrrep> = Vec::new();
    let mut total_sq = 0usize;
    for cl in clusters {
        let q = vecs.select_cols(&cl);
        let k = cl.len();
        let mats: Vec<CMat> = (0..n)
            .map(|g| {
                // (R(g) Q)[a] = Q[g^{-1} a]
                let gi = group.inv(g);
                let rq = CMat::from_fn(n, k, |a, j| q[(group.mul(gi, a), j)]);
                q.adjoint().matmul(&rq)
            })
            .collect();
        let character: Vec<C64> = mats.iter().map(|m| m.trace()).collect();
        let norm: f64 = character.iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
        if (norm - 1.0).abs() > 1e-6 {
            return Err(GroupError::Decomposition(format!(
                "eigenspace of dimension {k} is reducible (character norm {norm:.6})"
            )));
        }
        let duplicate = out.iter().any(|r| {
            r.dim == k && r.character.iter().zip(&character).all(|(a, b)| (a - b).norm() < 1e-6)
        });
        if !duplicate {
            total_sq += k * k;
            out.push(RawIrrep { dim: k, character, mats });
        }
    }
    if total_sq != n {
        return Err(GroupError::Decomposition(format!("sum of squared irrep dimensions {total_sq} != |G| = {n}")));
    }
    Ok(out)
}

fn make_catalog(
    group: &FiniteGroup,
    omega: &[SuperOp],
    raw: Vec<RawIrrep>,
    label: impl Fn(&RawIrrep, usize) -> String,
) -> Result<IrrepCatalog, GroupError> {
    let n = group.order();
    let dd = omega[0].mat().nrows();
    let mut irreps = Vec::with_capacity(raw.len());
    for r in raw {
        let mut p = CMat::zeros(dd, dd);
        for g in 0..n {
            p.axpy(r.character[g].conj(), omega[g].mat());
        }
        let p = p.scale_re(r.dim as f64 / n as f64);
        let rank = p.trace().re;
        let mult = (rank / r.dim as f64).round();
        if (rank - mult * r.dim as f64).abs() > 1e-6 {
            return Err(GroupError::NonIntegerMultiplicity { rank, dim: r.dim });
        }
        let mult = mult as usize;
        let lbl = label(&r, mult);
        irreps.push(Irrep { label: lbl, dim: r.dim, character: r.character, mats: r.mats, multiplicity: mult, projector: p });
    }
    irreps.sort_by(|a, b| {
        let ka = (a.label != "trivial", a.dim, a.label.clone());
        let kb = (b.label != "trivial", b.dim, b.label.clone());
        ka.cmp(&kb)
    });
    Ok(IrrepCatalog { irreps })
}

fn is_trivial(r: &RawIrrep) -> bool {
    r.dim == 1 && r.character.iter().all(|c| (c - ONE).norm() < 1e-6)
}

fn assemble(
    name: &str,
    unitaries: Vec<CMat>,
    label: impl Fn(&RawIrrep, usize) -> String,
) -> Result<RbGroup, GroupError> {
    let d = unitaries[0].nrows();
    let group = cayley_from_unitaries(&unitaries)?;
    let omega: Vec<SuperOp> = unitaries.iter().map(SuperOp::unitary).collect();
    let raw = irreps_from_regular(&group, 0x5eed)?;
    let catalog = make_catalog(&group, &omega, raw, label)?;
    Ok(RbGroup { name: name.to_string(), d, group, unitaries, omega, catalog })
}

const PAULI_LETTERS: [char; 4] = ['I', 'X', 'Y', 'Z'];

fn pauli_indices(code: usize, q: usize) -> Vec<usize> {
    (0..q).map(|k| (code >> (2 * (q - 1 - k))) & 3).collect()
}

/// Projective q-qubit Pauli group (`|G| = 4^q`), elements ordered by Pauli string.
pub fn build_pauli_group(q: usize) -> Result<RbGroup, GroupError> {
    if !(1..=3).contains(&q) {
        return Err(GroupError::QubitCount { q, max: 3 });
    }
    let n = 1usize << (2 * q);
    let unitaries: Vec<CMat> = (0..n).map(|c| pauli_string(&pauli_indices(c, q))).collect();
    // Pauli P labels the character g ↦ ±1 according to whether P commutes with g.
    let signs: Vec<Vec<f64>> = (0..n)
        .map(|p| {
            (0..n)
                .map(|g| {
                    let a = unitaries[p].matmul(&unitaries[g]);
                    let b = unitaries[g].matmul(&unitaries[p]);
                    if (&a - &b).max_abs() < 1e-12 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect()
        })
        .collect();
    assemble("pauli", unitaries, |r, _| {
        if is_trivial(r) {
            return "trivial".to_string();
        }
        let p = (0..n)
            .find(|&p| signs[p].iter().zip(&r.character).all(|(s, c)| (c - C64::new(*s, 0.0)).norm() < 1e-6))
            .expect("every Pauli-group character is a commutation character");
        let s: String = pauli_indices(p, q).iter().map(|&k| PAULI_LETTERS[k]).collect();
        format!("pauli:{s}")
    })
}

pub fn hadamard() -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_real_rows(&[&[s, s], &[s, -s]])
}

pub fn phase_gate() -> CMat {
    CMat::from_vec(2, 2, vec![ONE, ZERO, ZERO, C64::new(0.0, 1.0)])
}

/// The 24-element projective single-qubit Clifford group generated by H and S.
pub fn build_clifford_1q() -> Result<RbGroup, GroupError> {
    let unitaries = close_unitaries(&[hadamard(), phase_gate()], 24)?;
    assemble("clifford1", unitaries, |r, mult| {
        if is_trivial(r) {
            return "trivial".to_string();
        }
        match (r.dim, mult) {
            (1, _) => "sign".to_string(),
            (2, _) => "doublet".to_string(),
            (3, m) if m > 0 => "adjoint".to_string(),
            (3, _) => "adjoint_sign".to_string(),
            (k, _) => format!("irrep_d{k}"),
        }
    })
}

/// Any projective group generated by unitaries, with generic irrep labels.
pub fn build_from_generators(name: &str, gens: &[CMat], max_order: usize) -> Result<RbGroup, GroupError> {
    let unitaries = close_unitaries(gens, max_order)?;
    let counter = std::cell::Cell::new(0usize);
    assemble(name, unitaries, |r, _| {
        if is_trivial(r) {
            "trivial".to_string()
        } else {
            let k = counter.get();
            counter.set(k + 1);
            format!("irrep{k}_d{}", r.dim)
        }
    })
}

/// Representative unitaries of the projective two-qubit Clifford group (11520 elements).
///
/// Only the element list is produced; no Cayley table or irrep catalog.
pub fn clifford_2q_unitaries() -> Vec<CMat> {
    let id = CMat::identity(2);
    let h = hadamard();
    let s = phase_gate();
    let mut cnot = CMat::zeros(4, 4);
    cnot[(0, 0)] = ONE;
    cnot[(1, 1)] = ONE;
    cnot[(2, 3)] = ONE;
    cnot[(3, 2)] = ONE;
    let gens = [h.kron(&id), id.kron(&h), s.kron(&id), id.kron(&s), cnot];
    close_unitaries(&gens, 11520).expect("two-qubit Clifford group has 11520 elements")
}

/// Single-qubit rotation axis and angle of a unitary (angle in `[0, π]`).
pub fn rotation_axis_angle(u: &CMat) -> ([f64; 3], f64) {
    // U ∝ cos(θ/2) 1 - i sin(θ/2) n·σ; fix the phase so the identity component is real ≥ 0.
    let t = u.trace() / 2.0;
    let ph = if t.norm() > 1e-9 { t.conj() / t.norm() } else {
        // θ = π: pick the phase from a Pauli component.
        let c = (1..4).map(|k| pauli(k).matmul(u).trace() / 2.0).find(|z| z.norm() > 1e-9).unwrap();
        let ph = c.conj() / c.norm();
        ph * C64::new(0.0, -1.0).conj()
    };
    let v = u.scale(ph);
    let c = (v.trace() / 2.0).re.clamp(-1.0, 1.0);
    let comps: Vec<f64> = (1..4).map(|k| (pauli(k).matmul(&v).trace() / 2.0 * C64::new(0.0, 1.0)).re).collect();
    let s = (comps[0] * comps[0] + comps[1] * comps[1] + comps[2] * comps[2]).sqrt();
    let theta = 2.0 * s.atan2(c);
    if s < 1e-12 {
        return ([0.0, 0.0, 1.0], 0.0);
    }
    ([comps[0] / s, comps[1] / s, comps[2] / s], theta)
}
