//! Primal-dual interior-point solver for small semidefinite programs.
//!
//! Problems are posed over real symmetric block-diagonal matrices:
//!
//! ```text
//! (P)  max tr(C X)   s.t.  tr(A_i X) = b_i,  X >= 0
//! (D)  min b^T y     s.t.  Z = sum_i y_i A_i - C >= 0
//! ```
//!
//! Search directions are HKM with a Mehrotra predictor-corrector, started
//! from an infeasible interior point.

use faer::prelude::*;
use faer::{Mat, Side};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("SDP did not converge after {iterations} iterations (gap {gap:.3e}, primal infeasibility {primal_res:.3e}, dual infeasibility {dual_res:.3e})")]
    NotConverged { iterations: usize, gap: f64, primal_res: f64, dual_res: f64 },
    #[error("numerical breakdown in the SDP solver: {0}")]
    Breakdown(String),
    #[error("malformed SDP: {0}")]
    Malformed(String),
}

/// Symmetric sparse matrix on a block-diagonal space. Both triangles are stored.
#[derive(Debug, Clone, Default)]
pub struct SparseSym {
    pub entries: Vec<(usize, usize, usize, f64)>,
}

impl SparseSym {
    /// Adds `v` at `(i, j)` and `(j, i)` of block `blk`.
    pub fn add_sym(&mut self, blk: usize, i: usize, j: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        self.entries.push((blk, i, j, v));
        if i != j {
            self.entries.push((blk, j, i, v));
        }
    }

    fn inner(&self, m: &[Mat<f64>]) -> f64 {
        self.entries.iter().map(|&(b, i, j, v)| v * m[b].read(j, i)).sum()
    }

    fn add_to(&self, m: &mut [Mat<f64>], s: f64) {
        for &(b, i, j, v) in &self.entries {
            let old = m[b].read(i, j);
            m[b].write(i, j, old + s * v);
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub block_sizes: Vec<usize>,
    pub c: Vec<Mat<f64>>,
    pub a: Vec<SparseSym>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub y: Vec<f64>,
    pub x: Vec<Mat<f64>>,
    pub z: Vec<Mat<f64>>,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
}

impl SdpSolution {
    pub fn gap(&self) -> f64 {
        (self.dual_objective - self.primal_objective).abs()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Acceptable gap when progress stalls before reaching `gap_tol`.
    pub fallback_gap: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions { gap_tol: 1e-9, feas_tol: 1e-9, max_iter: 120, fallback_gap: 1e-7 }
    }
}

fn zeros_like(sizes: &[usize]) -> Vec<Mat<f64>> {
    sizes.iter().map(|&n| Mat::zeros(n, n)).collect()
}

fn scaled_identity(sizes: &[usize], s: f64) -> Vec<Mat<f64>> {
    sizes.iter().map(|&n| Mat::from_fn(n, n, |i, j| if i == j { s } else { 0.0 })).collect()
}

fn trace_prod(a: &[Mat<f64>], b: &[Mat<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut s = 0.0;
            for i in 0..x.nrows() {
                for j in 0..x.ncols() {
                    s += x.read(i, j) * y.read(j, i);
                }
            }
            s
        })
        .sum()
}

fn fro(a: &[Mat<f64>]) -> f64 {
    a.iter().map(|m| m.norm_l2().powi(2)).sum::<f64>().sqrt()
}

fn sym(m: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m.read(i, j) + m.read(j, i)))
}

fn spd_inverse(m: &Mat<f64>) -> Result<Mat<f64>, SdpError> {
    let ch = m
        .cholesky(Side::Lower)
        .map_err(|_| SdpError::Breakdown("iterate lost positive definiteness".into()))?;
    Ok(sym(&ch.inverse()))
}

/// Largest step in `[0, 1]` keeping `m + alpha * dm` positive semidefinite.
fn max_step(m: &Mat<f64>, dm: &Mat<f64>) -> f64 {
    let e = m.selfadjoint_eigendecomposition(Side::Lower);
    let n = m.nrows();
    let vals: Vec<f64> = (0..n).map(|i| e.s().column_vector().read(i)).collect();
    let u = e.u();
    let inv_half = Mat::from_fn(n, n, |i, j| {
        (0..n).map(|k| u.read(i, k) * u.read(j, k) / vals[k].max(1e-300).sqrt()).sum::<f64>()
    });
    let t = &inv_half * dm * &inv_half;
    let lmin = sym(&t)
        .selfadjoint_eigenvalues(Side::Lower)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

impl SdpProblem {
    pub fn new(block_sizes: Vec<usize>) -> Self {
        let c = zeros_like(&block_sizes);
        SdpProblem { block_sizes, c, a: Vec::new(), b: Vec::new() }
    }

    pub fn add_constraint(&mut self, a: SparseSym, b: f64) -> usize {
        self.a.push(a);
        self.b.push(b);
        self.a.len() - 1
    }

    fn validate(&self) -> Result<(), SdpError> {
        if self.a.len() != self.b.len() {
            return Err(SdpError::Malformed("constraint and right-hand-side counts differ".into()));
        }
        for a in &self.a {
            for &(blk, i, j, _) in &a.entries {
                if blk >= self.block_sizes.len() || i >= self.block_sizes[blk] || j >= self.block_sizes[blk] {
                    return Err(SdpError::Malformed("constraint entry outside its block".into()));
                }
            }
        }
        Ok(())
    }

    fn apply_a(&self, m: &[Mat<f64>]) -> Vec<f64> {
        self.a.iter().map(|a| a.inner(m)).collect()
    }

    fn apply_at(&self, y: &[f64]) -> Vec<Mat<f64>> {
        let mut out = zeros_like(&self.block_sizes);
        for (a, &yi) in self.a.iter().zip(y) {
            a.add_to(&mut out, yi);
        }
        out
    }

    /// Schur complement `M_ij = tr(A_i X A_j Z^{-1})`.
    fn schur(&self, x: &[Mat<f64>], zi: &[Mat<f64>]) -> Mat<f64> {
        let m = self.a.len();
        let mut out = Mat::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let mut s = 0.0;
                for &(bi, p, q, vi) in &self.a[i].entries {
                    for &(bj, r, t, vj) in &self.a[j].entries {
                        if bi == bj {
                            s += vi * vj * x[bi].read(q, r) * zi[bi].read(t, p);
                        }
                    }
                }
                out.write(i, j, s);
                out.write(j, i, s);
            }
        }
        out
    }

    pub fn solve(&self, opts: &SdpOptions) -> Result<SdpSolution, SdpError> {
        self.validate()?;
        let sizes = &self.block_sizes;
        let n_total: usize = sizes.iter().sum();
        let m = self.a.len();
        let scale_b = 1.0 + self.b.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        let scale_c = 1.0 + fro(&self.c);
        let a_norm = self
            .a
            .iter()
            .map(|a| a.entries.iter().map(|e| e.3 * e.3).sum::<f64>().sqrt())
            .fold(1.0f64, f64::max);
        let xi = 10.0f64.max((n_total as f64).sqrt() * scale_b / a_norm);
        let eta = 10.0f64.max((n_total as f64).sqrt()).max(scale_c).max(a_norm);
        let mut x = scaled_identity(sizes, xi);
        let mut z = scaled_identity(sizes, eta);
        let mut y = vec![0.0; m];

        let mut best: Option<SdpSolution> = None;
        for iter in 0..opts.max_iter {
            let pobj = trace_prod(&self.c, &x);
            let dobj: f64 = self.b.iter().zip(&y).map(|(b, y)| b * y).sum();
            let ax = self.apply_a(&x);
            let rp: Vec<f64> = self.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let aty = self.apply_at(&y);
            let rd: Vec<Mat<f64>> = aty.iter().zip(&self.c).zip(&z).map(|((a, c), z)| a - c - z).collect();
            let pres = rp.iter().fold(0.0f64, |a, &r| a.max(r.abs())) / scale_b;
            let dres = fro(&rd) / scale_c;
            let gap = (dobj - pobj).abs();
            let current = SdpSolution {
                primal_objective: pobj,
                dual_objective: dobj,
                y: y.clone(),
                x: x.clone(),
                z: z.clone(),
                iterations: iter,
                primal_infeasibility: pres,
                dual_infeasibility: dres,
            };
            if gap <= opts.gap_tol * (1.0 + dobj.abs()) && pres <= opts.feas_tol && dres <= opts.feas_tol {
                return Ok(current);
            }
            let better = match &best {
                None => true,
                Some(b) => gap.max(pres).max(dres) < b.gap().max(b.primal_infeasibility).max(b.dual_infeasibility),
            };
            if better {
                best = Some(current);
            }

            let mu = trace_prod(&x, &z) / n_total as f64;
            let zi: Vec<Mat<f64>> = match z.iter().map(spd_inverse).collect() {
                Ok(v) => v,
                Err(_) => break,
            };
            let schur = self.schur(&x, &zi);
            let chol = match schur.cholesky(Side::Lower) {
                Ok(c) => Some(c),
                Err(_) => None,
            };
            let lu = schur.partial_piv_lu();
            let solve = |rhs: &[f64]| -> Vec<f64> {
                let r = Mat::from_fn(m, 1, |i, _| rhs[i]);
                let s = match &chol {
                    Some(c) => c.solve(&r),
                    None => lu.solve(&r),
                };
                (0..m).map(|i| s.read(i, 0)).collect()
            };
            let xrdzi: Vec<Mat<f64>> = x.iter().zip(&rd).zip(&zi).map(|((x, r), zi)| x * r * zi).collect();

            let direction = |sigma_mu: f64, corr: Option<&Vec<Mat<f64>>>| -> (Vec<f64>, Vec<Mat<f64>>, Vec<Mat<f64>>) {
                let g: Vec<Mat<f64>> = (0..sizes.len())
                    .map(|k| {
                        let mut g = &zi[k] * faer::scale(sigma_mu) - &x[k] - &xrdzi[k];
                        if let Some(c) = corr {
                            g = g - &c[k];
                        }
                        g
                    })
                    .collect();
                let ag = self.apply_a(&g);
                let rhs: Vec<f64> = ag.iter().zip(&rp).map(|(a, r)| a - r).collect();
                let dy = solve(&rhs);
                let atdy = self.apply_at(&dy);
                let dz: Vec<Mat<f64>> = atdy.iter().zip(&rd).map(|(a, r)| a + r).collect();
                let dx: Vec<Mat<f64>> = (0..sizes.len())
                    .map(|k| {
                        let mut t = &zi[k] * faer::scale(sigma_mu) - &x[k] - &x[k] * &dz[k] * &zi[k];
                        if let Some(c) = corr {
                            t = t - &c[k];
                        }
                        sym(&t)
                    })
                    .collect();
                (dy, dx, dz)
            };
            let steps = |dx: &[Mat<f64>], dz: &[Mat<f64>]| -> (f64, f64) {
                let ap = x.iter().zip(dx).map(|(x, d)| max_step(x, d)).fold(f64::INFINITY, f64::min);
                let ad = z.iter().zip(dz).map(|(z, d)| max_step(z, d)).fold(f64::INFINITY, f64::min);
                ((0.98 * ap).min(1.0), (0.98 * ad).min(1.0))
            };

            let (_, dxa, dza) = direction(0.0, None);
            let (apa, ada) = steps(&dxa, &dza);
            let xa: Vec<Mat<f64>> = x.iter().zip(&dxa).map(|(x, d)| x + d * faer::scale(apa)).collect();
            let za: Vec<Mat<f64>> = z.iter().zip(&dza).map(|(z, d)| z + d * faer::scale(ada)).collect();
            let mu_aff = trace_prod(&xa, &za) / n_total as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
            let corr: Vec<Mat<f64>> = (0..sizes.len()).map(|k| &dxa[k] * &dza[k] * &zi[k]).collect();
            let (dy, dx, dz) = direction(sigma * mu, Some(&corr));
            let (ap, ad) = steps(&dx, &dz);
            if !(ap.is_finite() && ad.is_finite()) || ap < 1e-12 && ad < 1e-12 {
                break;
            }
            for k in 0..sizes.len() {
                x[k] = sym(&(&x[k] + &dx[k] * faer::scale(ap)));
                z[k] = sym(&(&z[k] + &dz[k] * faer::scale(ad)));
            }
            for (yi, d) in y.iter_mut().zip(&dy) {
                *yi += ad * d;
            }
        }
        let best = best.ok_or_else(|| SdpError::Breakdown("no iterate produced".into()))?;
        let tol_ok = best.gap() <= opts.fallback_gap
            && best.primal_infeasibility <= opts.fallback_gap
            && best.dual_infeasibility <= opts.fallback_gap;
        if tol_ok {
            Ok(best)
        } else {
            Err(SdpError::NotConverged {
                iterations: best.iterations,
                gap: best.gap(),
                primal_res: best.primal_infeasibility,
                dual_res: best.dual_infeasibility,
            })
        }
    }
}
