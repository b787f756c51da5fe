//! Matrix-valued Fourier analysis of implementation maps `g ↦ φ(g)`.
//!
//! The Fourier block at irrep `σ_λ` is `|G|^{-1} Σ_g conj(σ_λ(g)) ⊗ φ(g)`, a
//! `(d_λ d²) × (d_λ d²)` matrix whose `(a, b)` sub-block of size `d² × d²`
//! collects `conj(σ_λ(g)_{ab}) φ(g)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::groupsrep::RbGroup;
use crate::linalg::{CMat, C64, ZERO};
use crate::superop::{SuperOp, SuperOpError, CP_TOL};

#[derive(Debug, Clone)]
pub struct ImplementationMap {
    pub group: Arc<RbGroup>,
    pub maps: Vec<SuperOp>,
    pub cp: bool,
    pub trace_nonincreasing: bool,
}

impl ImplementationMap {
    /// Wraps per-element maps, checking complete positivity and trace behaviour.
    pub fn new(group: Arc<RbGroup>, maps: Vec<SuperOp>) -> Self {
        assert_eq!(maps.len(), group.order(), "one map per group element");
        let cp = maps.iter().all(|m| m.is_cp(CP_TOL));
        let trace_nonincreasing = cp && maps.iter().all(|m| trace_nonincreasing(m));
        ImplementationMap { group, maps, cp, trace_nonincreasing }
    }

    /// Wraps maps without any checks; flags are cleared.
    pub fn unchecked(group: Arc<RbGroup>, maps: Vec<SuperOp>) -> Self {
        assert_eq!(maps.len(), group.order(), "one map per group element");
        ImplementationMap { group, maps, cp: false, trace_nonincreasing: false }
    }

    /// The reference representation `ω`.
    pub fn ideal(group: Arc<RbGroup>) -> Self {
        let maps = group.omega.clone();
        ImplementationMap { group, maps, cp: true, trace_nonincreasing: true }
    }

    pub fn zero(group: Arc<RbGroup>) -> Self {
        let d = group.d;
        let maps = vec![SuperOp::zero(d); group.order()];
        ImplementationMap { group, maps, cp: true, trace_nonincreasing: true }
    }

    pub fn order(&self) -> usize {
        self.maps.len()
    }

    pub fn d(&self) -> usize {
        self.group.d
    }

    pub fn get(&self, g: usize) -> &SuperOp {
        &self.maps[g]
    }

    /// `φ_ν(g) = |G| ν(g) φ(g)`.
    pub fn weighted(&self, nu: &[f64]) -> Self {
        assert_eq!(nu.len(), self.order());
        let n = self.order() as f64;
        let maps = self.maps.iter().zip(nu).map(|(m, &w)| m.scale(n * w)).collect();
        ImplementationMap::unchecked(self.group.clone(), maps)
    }

    pub fn sub(&self, other: &Self) -> Self {
        let maps = self.maps.iter().zip(&other.maps).map(|(a, b)| a.sub(b)).collect();
        ImplementationMap::unchecked(self.group.clone(), maps)
    }

    /// Largest entrywise distance between the two maps over all elements.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.maps.iter().zip(&other.maps).map(|(a, b)| (a.mat() - b.mat()).max_abs()).fold(0.0, f64::max)
    }
}

/// Trace of the output never exceeds the trace of the input: `1 - T^†(1) ⪰ 0`.
pub fn trace_nonincreasing(op: &SuperOp) -> bool {
    let d = op.dim();
    let id = CMat::identity(d);
    // T^†(1) has coefficients given by the first row of the matrix in an orthonormal Hermitian basis.
    let dual = op.mat().adjoint();
    let t = SuperOp::new(d, dual).expect("square").apply(&id);
    let gap = &id - &t;
    gap.hermitian_part().herm_eigvals()[0] >= -1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FourierBlock {
    pub label: String,
    pub irrep_dim: usize,
    /// Superoperator size `d²`.
    pub sup_dim: usize,
    pub mat: CMat,
}

impl FourierBlock {
    pub fn idempotence_defect(&self) -> f64 {
        (&self.mat.matmul(&self.mat) - &self.mat).fro_norm()
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn matmul(&self, other: &FourierBlock) -> FourierBlock {
        FourierBlock { mat: self.mat.matmul(&other.mat), ..self.clone() }
    }

    pub fn powi(&self, k: usize) -> FourierBlock {
        FourierBlock { mat: self.mat.powi(k), ..self.clone() }
    }

    /// Eigenvalues sorted by decreasing modulus.
    pub fn eigvals_sorted(&self) -> Vec<C64> {
        let mut ev = self.mat.eigvals();
        ev.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
        ev
    }
}

/// `Tr_σ[X (C ⊗ 1)] = Σ_{ab} X_{ab} C_{ba}` for `X` made of `n × n` blocks.
pub fn partial_trace_irrep(x: &CMat, c: &CMat, n: usize) -> CMat {
    let k = c.nrows();
    let mut out = CMat::zeros(n, n);
    for a in 0..k {
        for b in 0..k {
            let cba = c[(b, a)];
            if cba == ZERO {
                continue;
            }
            out.axpy(cba, &x.block(a * n, b * n, n, n));
        }
    }
    out
}

/// `Tr_σ[X (C ⊗ 1)]` applied to a vector: `Σ_{ab} C_{ba} X_{ab} v`.
pub fn partial_trace_irrep_vec(x: &CMat, c: &CMat, n: usize, v: &[C64]) -> Vec<C64> {
    let k = c.nrows();
    let mut out = vec![ZERO; n];
    for a in 0..k {
        for b in 0..k {
            let cba = c[(b, a)];
            if cba == ZERO {
                continue;
            }
            for i in 0..n {
                let row = &x.row(a * n + i)[b * n..(b + 1) * n];
                let s: C64 = row.iter().zip(v).map(|(p, q)| p * q).sum();
                out[i] += cba * s;
            }
        }
    }
    out
}

pub fn fourier_block(phi: &ImplementationMap, irrep: usize) -> FourierBlock {
    let ir = &phi.group.catalog.irreps[irrep];
    let n = phi.d() * phi.d();
    let k = ir.dim;
    let mut mat = CMat::zeros(k * n, k * n);
    for (g, op) in phi.maps.iter().enumerate() {
        let s = &ir.mats[g];
        for a in 0..k {
            for b in 0..k {
                let c = s[(a, b)].conj();
                if c.norm() < 1e-15 {
                    continue;
                }
                for i in 0..n {
                    let src = op.mat().row(i);
                    let r = a * n + i;
                    for (j, v) in src.iter().enumerate() {
                        mat[(r, b * n + j)] += c * v;
                    }
                }
            }
        }
    }
    FourierBlock { label: ir.label.clone(), irrep_dim: k, sup_dim: n, mat: mat.scale_re(1.0 / phi.order() as f64) }
}

/// Blocks for every irrep in the catalog, in catalog order.
#[derive(Debug, Clone)]
pub struct FourierTransform {
    pub group: Arc<RbGroup>,
    pub blocks: Vec<FourierBlock>,
}

impl FourierTransform {
    pub fn of(phi: &ImplementationMap) -> Self {
        let blocks = (0..phi.group.catalog.irreps.len()).into_par_iter().map(|l| fourier_block(phi, l)).collect();
        FourierTransform { group: phi.group.clone(), blocks }
    }

    pub fn block(&self, label: &str) -> Option<&FourierBlock> {
        self.blocks.iter().find(|b| b.label == label)
    }

    /// Blockwise product, i.e. the transform of the convolution.
    pub fn matmul(&self, other: &FourierTransform) -> FourierTransform {
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.matmul(b)).collect();
        FourierTransform { group: self.group.clone(), blocks }
    }

    /// Reconstructs `φ(g) = Σ_λ d_λ Tr_σ[F_λ (conj(σ_λ(g^{-1})) ⊗ 1)]`.
    pub fn inverse(&self) -> Vec<SuperOp> {
        let d = self.group.d;
        let n = d * d;
        (0..self.group.order())
            .into_par_iter()
            .map(|g| {
                let gi = self.group.group.inv(g);
                let mut acc = CMat::zeros(n, n);
                for (b, ir) in self.blocks.iter().zip(&self.group.catalog.irreps) {
                    let c = ir.mats[gi].conj();
                    acc.axpy(C64::new(ir.dim as f64, 0.0), &partial_trace_irrep(&b.mat, &c, n));
                }
                SuperOp::new(d, acc).expect("dimension")
            })
            .collect()
    }
}

/// `(φ*ψ)(g) = |G|^{-1} Σ_{g'} φ(g g'^{-1}) ψ(g')`.
pub fn convolve(phi: &ImplementationMap, psi: &ImplementationMap) -> ImplementationMap {
    let grp = &phi.group.group;
    let n = phi.order();
    let maps = (0..n)
        .into_par_iter()
        .map(|g| {
            let mut acc = SuperOp::zero(phi.d()).into_mat();
            for h in 0..n {
                let left = grp.mul(g, grp.inv(h));
                acc += &phi.maps[left].mat().matmul(psi.maps[h].mat());
            }
            SuperOp::new(phi.d(), acc.scale_re(1.0 / n as f64)).expect("dimension")
        })
        .collect();
    ImplementationMap::unchecked(phi.group.clone(), maps)
}

/// `|LHS - RHS|` of `|G|^{-1} Σ_g Tr(φ(g)^†ψ(g)) = Σ_λ d_λ Tr(F(φ)_λ^† F(ψ)_λ)`.
pub fn parseval_check(phi: &ImplementationMap, psi: &ImplementationMap) -> f64 {
    let lhs: C64 =
        phi.maps.iter().zip(&psi.maps).map(|(a, b)| a.mat().inner(b.mat())).sum::<C64>() / phi.order() as f64;
    let fa = FourierTransform::of(phi);
    let fb = FourierTransform::of(psi);
    let rhs: C64 = fa
        .blocks
        .iter()
        .zip(&fb.blocks)
        .map(|(a, b)| a.mat.inner(&b.mat) * a.irrep_dim as f64)
        .sum();
    (lhs - rhs).norm()
}

/// `(max_g ‖φ(g)‖⋄, |G|^{-1} Σ_g ‖φ(g)‖⋄)`.
pub fn fourier_norms(phi: &ImplementationMap) -> Result<(f64, f64), SuperOpError> {
    let norms: Vec<f64> = phi
        .maps
        .par_iter()
        .map(|m| m.diamond_norm().map(|n| n.value))
        .collect::<Result<_, _>>()?;
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    Ok((max, mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groupsrep::{build_clifford_1q, build_pauli_group};
    use crate::linalg::random_kraus;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cp_map(group: &Arc<RbGroup>, seed: u64) -> ImplementationMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let maps =
            (0..group.order()).map(|_| SuperOp::from_kraus(&random_kraus(group.d, 2, &mut rng)).unwrap()).collect();
        ImplementationMap::new(group.clone(), maps)
    }

    #[test]
    fn ideal_blocks_are_projectors_with_multiplicity_trace() {
        for g in [build_pauli_group(1).unwrap(), build_clifford_1q().unwrap()] {
            let g = Arc::new(g);
            let omega = ImplementationMap::ideal(g.clone());
            for (l, ir) in g.catalog.irreps.iter().enumerate() {
                let b = fourier_block(&omega, l);
                assert!(b.idempotence_defect() <= 1e-9);
                assert!((b.trace() - C64::new(ir.multiplicity as f64, 0.0)).norm() <= 1e-8);
                if ir.multiplicity == 0 {
                    assert!(b.mat.fro_norm() <= 1e-10, "{}", ir.label);
                }
            }
        }
    }

    #[test]
    fn depolarizing_adjoint_block_spectrum() {
        let g = Arc::new(build_clifford_1q().unwrap());
        let p = 0.07;
        let dep = SuperOp::depolarizing(2, p);
        let maps = g.omega.iter().map(|w| dep.compose(w)).collect();
        let phi = ImplementationMap::new(g.clone(), maps);
        let b = fourier_block(&phi, g.catalog.index_of("adjoint").unwrap());
        assert_eq!(b.mat.nrows(), 12);
        let ev = b.eigvals_sorted();
        assert!((ev[0] - C64::new(1.0 - p, 0.0)).norm() < 1e-10);
        assert!(ev[1].norm() < 1e-8);
    }

    #[test]
    fn convolution_identity_and_projector() {
        let g = Arc::new(build_pauli_group(1).unwrap());
        let phi = random_cp_map(&g, 3);
        let n = g.order() as f64;
        let delta: Vec<SuperOp> = (0..g.order())
            .map(|h| if h == g.group.identity() { SuperOp::identity(2).scale(n) } else { SuperOp::zero(2) })
            .collect();
        let delta = ImplementationMap::unchecked(g.clone(), delta);
        assert!(convolve(&phi, &delta).max_abs_diff(&phi) < 1e-12);
        let omega = ImplementationMap::ideal(g.clone());
        assert!(convolve(&omega, &omega).max_abs_diff(&omega) < 1e-12);
    }

    #[test]
    fn convolution_chain_is_block_product() {
        let g = Arc::new(build_clifford_1q().unwrap());
        let a = random_cp_map(&g, 10);
        let b = random_cp_map(&g, 11);
        let c = random_cp_map(&g, 12);
        let abc = convolve(&convolve(&a, &b), &c);
        let lhs = FourierTransform::of(&abc);
        let rhs = FourierTransform::of(&a).matmul(&FourierTransform::of(&b)).matmul(&FourierTransform::of(&c));
        for (x, y) in lhs.blocks.iter().zip(&rhs.blocks) {
            assert!((&x.mat - &y.mat).max_abs() < 1e-10);
        }
    }

    #[test]
    fn inverse_transform_reconstructs() {
        for g in [build_pauli_group(2).unwrap(), build_clifford_1q().unwrap()] {
            let g = Arc::new(g);
            let phi = random_cp_map(&g, 5);
            let back = FourierTransform::of(&phi).inverse();
            let back = ImplementationMap::unchecked(g.clone(), back);
            assert!(back.max_abs_diff(&phi) <= 1e-9);
        }
    }

    #[test]
    fn parseval_zero_and_ideal() {
        let g = Arc::new(build_clifford_1q().unwrap());
        let z = ImplementationMap::zero(g.clone());
        assert_eq!(parseval_check(&z, &z), 0.0);
        let w = ImplementationMap::ideal(g.clone());
        assert!(parseval_check(&w, &w) < 1e-10);
        // |G|^{-1} Σ Tr(ω^†ω) = d² and Σ d_λ n_λ = d² as well.
        let rhs: usize = g.catalog.irreps.iter().map(|i| i.dim * i.multiplicity).sum();
        assert_eq!(rhs, 4);
    }

    #[test]
    fn norms_of_cptp_and_depolarizing_difference() {
        let g = Arc::new(build_clifford_1q().unwrap());
        let w = ImplementationMap::ideal(g.clone());
        let (mx, mn) = fourier_norms(&w).unwrap();
        assert!((mx - 1.0).abs() < 1e-6 && (mn - 1.0).abs() < 1e-6);
        let nu = vec![1.0 / 24.0; 24];
        let (mx, mn) = fourier_norms(&w.weighted(&nu)).unwrap();
        assert!((mx - 1.0).abs() < 1e-6 && (mn - 1.0).abs() < 1e-6);
        let dep = SuperOp::depolarizing(2, 0.05);
        let phi = ImplementationMap::new(g.clone(), g.omega.iter().map(|x| dep.compose(x)).collect());
        let (_, mn) = fourier_norms(&phi.sub(&w)).unwrap();
        let single = dep.sub(&SuperOp::identity(2)).diamond_norm().unwrap().value;
        assert!((mn - single).abs() < 1e-6);
    }

    #[test]
    fn submultiplicativity_on_random_maps() {
        let g = Arc::new(build_pauli_group(1).unwrap());
        let a = random_cp_map(&g, 21);
        let b = random_cp_map(&g, 22);
        let (max_ab, _) = fourier_norms(&convolve(&a, &b)).unwrap();
        let (max_a, _) = fourier_norms(&a).unwrap();
        let (_, m_b) = fourier_norms(&b).unwrap();
        assert!(max_ab <= max_a * m_b + 1e-6);
    }

    #[test]
    fn trace_nonincreasing_detection() {
        assert!(trace_nonincreasing(&SuperOp::depolarizing(2, 0.3)));
        assert!(!trace_nonincreasing(&SuperOp::identity(2).scale(1.1)));
        assert!(trace_nonincreasing(&SuperOp::identity(2).scale(0.9)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn parseval_holds_for_random_cp_maps(s1 in 0u64..1000, s2 in 1000u64..2000) {
            let g = Arc::new(build_pauli_group(1).unwrap());
            let a = random_cp_map(&g, s1);
            let b = random_cp_map(&g, s2);
            prop_assert!(parseval_check(&a, &b) <= 1e-10);
        }

        #[test]
        fn convolution_is_block_product(s1 in 0u64..1000, s2 in 1000u64..2000) {
            let g = Arc::new(build_pauli_group(1).unwrap());
            let a = random_cp_map(&g, s1);
            let b = random_cp_map(&g, s2);
            let lhs = FourierTransform::of(&convolve(&a, &b));
            let rhs = FourierTransform::of(&a).matmul(&FourierTransform::of(&b));
            for (x, y) in lhs.blocks.iter().zip(&rhs.blocks) {
                prop_assert!((&x.mat - &y.mat).max_abs() <= 1e-10);
            }
        }
    }
}
