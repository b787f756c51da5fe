//! Small curve fits used on decay data.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpFit {
    pub amplitude: f64,
    pub rate: f64,
    pub max_residual: f64,
    pub rms: f64,
}

/// Least-squares fit of `y = A f^m`: log-linear start, then damped Gauss-Newton.
pub fn fit_exponential(ms: &[usize], ys: &[f64]) -> ExpFit {
    assert_eq!(ms.len(), ys.len());
    assert!(ms.len() >= 2, "need at least two points");
    let (mut a, mut f) = if ys.iter().all(|&y| y > 0.0) {
        let l = affine_log_fit(ms, ys);
        (l.intercept.exp(), l.slope.exp())
    } else {
        let (m0, m1) = (ms[0] as f64, ms[ms.len() - 1] as f64);
        let r = (ys[ys.len() - 1] / ys[0]).abs().powf(1.0 / (m1 - m0));
        (ys[0] / r.powf(m0), r)
    };
    let resid = |a: f64, f: f64| -> f64 { ms.iter().zip(ys).map(|(&m, &y)| (y - a * f.powi(m as i32)).powi(2)).sum() };
    let mut cost = resid(a, f);
    let mut lambda = 1e-6;
    for _ in 0..200 {
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (&m, &y) in ms.iter().zip(ys) {
            let p = f.powi(m as i32);
            let dp = if m == 0 { 0.0 } else { m as f64 * f.powi(m as i32 - 1) };
            let j = [p, a * dp];
            let r = y - a * p;
            for u in 0..2 {
                jtr[u] += j[u] * r;
                for v in 0..2 {
                    jtj[u][v] += j[u] * j[v];
                }
            }
        }
        let mut improved = false;
        for _ in 0..20 {
            let m00 = jtj[0][0] * (1.0 + lambda);
            let m11 = jtj[1][1] * (1.0 + lambda);
            let det = m00 * m11 - jtj[0][1] * jtj[1][0];
            if det == 0.0 || !det.is_finite() {
                break;
            }
            let da = (m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let df = (m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let c = resid(a + da, f + df);
            if c <= cost {
                a += da;
                f += df;
                improved = cost - c > 1e-30 * cost.max(1e-300);
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let res: Vec<f64> = ms.iter().zip(ys).map(|(&m, &y)| y - a * f.powi(m as i32)).collect();
    ExpFit {
        amplitude: a,
        rate: f,
        max_residual: res.iter().fold(0.0, |x, r| x.max(r.abs())),
        rms: (res.iter().map(|r| r * r).sum::<f64>() / res.len() as f64).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute deviation of `ln y` from the line.
    pub max_residual: f64,
    pub rms: f64,
}

/// Ordinary least squares of `ln y` against `m`.
pub fn affine_log_fit(ms: &[usize], ys: &[f64]) -> AffineFit {
    assert_eq!(ms.len(), ys.len());
    let n = ms.len() as f64;
    let xs: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    let ls: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let ml = ls.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxl: f64 = xs.iter().zip(&ls).map(|(x, l)| (x - mx) * (l - ml)).sum();
    let slope = sxl / sxx;
    let intercept = ml - slope * mx;
    let res: Vec<f64> = xs.iter().zip(&ls).map(|(x, l)| l - intercept - slope * x).collect();
    AffineFit {
        slope,
        intercept,
        max_residual: res.iter().fold(0.0, |a, r| a.max(r.abs())),
        rms: (res.iter().map(|r| r * r).sum::<f64>() / n).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffsetExpFit {
    pub amplitude: f64,
    pub rate: f64,
    pub offset: f64,
    pub max_residual: f64,
    pub rms: f64,
}

/// Least squares of `y = A f^m + B`: linear in `(A, B)` for fixed `f`, golden-section in `f ∈ (0, 1]`.
pub fn fit_exponential_offset(ms: &[usize], ys: &[f64]) -> OffsetExpFit {
    assert_eq!(ms.len(), ys.len());
    assert!(ms.len() >= 3, "need at least three points");
    let solve = |f: f64| -> (f64, f64, f64) {
        let n = ms.len() as f64;
        let xs: Vec<f64> = ms.iter().map(|&m| f.powi(m as i32)).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let b = my - a * mx;
        let cost = xs.iter().zip(ys).map(|(x, y)| (y - a * x - b).powi(2)).sum();
        (a, b, cost)
    };
    // Coarse scan to bracket the minimum, then golden-section refinement.
    let grid = 400;
    let mut best = (1, f64::INFINITY);
    for k in 1..=grid {
        let c = solve(k as f64 / grid as f64).2;
        if c < best.1 {
            best = (k, c);
        }
    }
    let (mut lo, mut hi) = ((best.0 as f64 - 1.0) / grid as f64, ((best.0 + 1).min(grid)) as f64 / grid as f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if solve(x1).2 <= solve(x2).2 {
            hi = x2;
        } else {
            lo = x1;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let f = 0.5 * (lo + hi);
    let (a, b, _) = solve(f);
    let res: Vec<f64> = ms.iter().zip(ys).map(|(&m, &y)| y - a * f.powi(m as i32) - b).collect();
    OffsetExpFit {
        amplitude: a,
        rate: f,
        offset: b,
        max_residual: res.iter().fold(0.0, |x, r| x.max(r.abs())),
        rms: (res.iter().map(|r| r * r).sum::<f64>() / res.len() as f64).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_exponential_is_recovered() {
        let ms: Vec<usize> = (1..40).collect();
        let ys: Vec<f64> = ms.iter().map(|&m| 0.7 * 0.95f64.powi(m as i32)).collect();
        let f = fit_exponential(&ms, &ys);
        assert!((f.rate - 0.95).abs() < 1e-12);
        assert!((f.amplitude - 0.7).abs() < 1e-12);
        assert!(f.max_residual < 1e-14);
    }

    #[test]
    fn sum_of_two_exponentials_leaves_residual() {
        let ms: Vec<usize> = (1..60).collect();
        let ys: Vec<f64> = ms.iter().map(|&m| 0.5 * 0.99f64.powi(m as i32) + 0.5 * 0.8f64.powi(m as i32)).collect();
        assert!(fit_exponential(&ms, &ys).max_residual > 1e-3);
        assert!(affine_log_fit(&ms, &ys).max_residual > 1e-2);
    }

    #[test]
    fn negative_amplitude() {
        let ms: Vec<usize> = (0..20).collect();
        let ys: Vec<f64> = ms.iter().map(|&m| -0.3 * 0.9f64.powi(m as i32)).collect();
        let f = fit_exponential(&ms, &ys);
        assert!((f.rate - 0.9).abs() < 1e-10 && (f.amplitude + 0.3).abs() < 1e-10);
    }

    #[test]
    fn offset_exponential_is_recovered() {
        let ms: Vec<usize> = (1..80).step_by(3).collect();
        let ys: Vec<f64> = ms.iter().map(|&m| 0.5 * 0.98f64.powi(m as i32) + 0.5).collect();
        let f = fit_exponential_offset(&ms, &ys);
        assert!((f.rate - 0.98).abs() < 1e-9, "{f:?}");
        assert!((f.offset - 0.5).abs() < 1e-7);
    }

    proptest! {
        #[test]
        fn log_fit_is_exact_on_pure_exponentials(a in 0.1f64..2.0, f in 0.5f64..0.999) {
            let ms: Vec<usize> = (0..30).collect();
            let ys: Vec<f64> = ms.iter().map(|&m| a * f.powi(m as i32)).collect();
            let fit = affine_log_fit(&ms, &ys);
            prop_assert!((fit.slope - f.ln()).abs() < 1e-12);
            prop_assert!(fit.max_residual < 1e-12);
        }
    }
}
