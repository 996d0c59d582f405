//! BFGS maximization with central-difference derivatives.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QnOptions {
    /// Convergence threshold on the gradient ∞-norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QnOptions {
    fn default() -> Self {
        QnOptions { tol: 1e-5, max_iter: 500 }
    }
}

/// Why the optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Gradient ∞-norm below the tolerance.
    Gradient,
    /// No further ascent possible and the predicted gain of a quasi-Newton
    /// step is below the rounding level of the objective.
    NoiseFloor,
    MaxIterations,
    /// Line search failed with a predicted gain above the rounding level.
    LineSearch,
}

impl StopReason {
    pub fn converged(self) -> bool {
        matches!(self, StopReason::Gradient | StopReason::NoiseFloor)
    }
}

#[derive(Debug, Clone)]
pub struct QnResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Final BFGS approximation of the inverse negative Hessian.
    pub inv_hessian: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    pub grad_norm: f64,
}

/// Relative size of objective rounding noise.
const NOISE_FLOOR: f64 = 1e-11;

fn step(x: f64) -> f64 {
    (1e-5 * x.abs()).max(1e-5)
}

/// Central-difference gradient with step max(1e-5, 1e-5·|xᵢ|).
pub fn numerical_gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step(x[i]);
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let dn = f(&xp);
            xp[i] = x[i];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian with step `rel`·max(|xᵢ|, 1).
pub fn numerical_hessian(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], rel: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| rel * v.abs().max(1.0)).collect();
    let f0 = f(x);
    let mut xp = x.to_vec();
    let mut hes = vec![vec![0.0; n]; n];
    for i in 0..n {
        xp[i] = x[i] + h[i];
        let up = f(&xp);
        xp[i] = x[i] - h[i];
        let dn = f(&xp);
        xp[i] = x[i];
        hes[i][i] = (up - 2.0 * f0 + dn) / (h[i] * h[i]);
        for j in 0..i {
            let mut quad = [0.0; 4];
            for (q, (si, sj)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].into_iter().enumerate() {
                xp[i] = x[i] + si * h[i];
                xp[j] = x[j] + sj * h[j];
                quad[q] = f(&xp);
            }
            xp[i] = x[i];
            xp[j] = x[j];
            let v = (quad[0] - quad[1] - quad[2] + quad[3]) / (4.0 * h[i] * h[j]);
            hes[i][j] = v;
            hes[j][i] = v;
        }
    }
    hes
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn identity(n: usize, s: f64) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { s } else { 0.0 }).collect()).collect()
}

/// Largest allowed move along any coordinate in one line search.
const MAX_STEP: f64 = 5.0;

/// Maximizes `f` from `init` by BFGS with backtracking line search.
/// Non-finite trial values are treated as failed steps; a non-finite value
/// at `init` is an error. Stops when the gradient ∞-norm falls below
/// `opts.tol`, or when no ascent step is found and the predicted gain is
/// below the objective's rounding level.
pub fn quasi_newton_max(mut f: impl FnMut(&[f64]) -> f64, init: &[f64], opts: &QnOptions) -> Result<QnResult> {
    let n = init.len();
    let mut x = init.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(Error::Optimizer {
            stage: "quasi-Newton".into(),
            message: format!("objective is {fx} at the starting point"),
        });
    }
    if n == 0 {
        return Ok(QnResult {
            x,
            value: fx,
            inv_hessian: vec![],
            iterations: 0,
            converged: true,
            stop: StopReason::Gradient,
            grad_norm: 0.0,
        });
    }
    let mut g = numerical_gradient(&mut f, &x);
    let mut hinv = identity(n, 1.0);
    let mut fresh = true;
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;
    while iterations < opts.max_iter {
        if inf_norm(&g) < opts.tol {
            stop = StopReason::Gradient;
            break;
        }
        iterations += 1;
        let mut d: Vec<f64> = hinv.iter().map(|row| dot(row, &g)).collect();
        let mut slope = dot(&g, &d);
        if !(slope > 0.0) {
            hinv = identity(n, 1.0);
            fresh = true;
            d = g.clone();
            slope = dot(&g, &g);
        }
        let mut t = (MAX_STEP / inf_norm(&d)).min(1.0);
        let mut accepted = None;
        let mut any_finite = false;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let ft = f(&xt);
            if ft.is_finite() {
                any_finite = true;
                if ft >= fx + 1e-4 * t * slope {
                    accepted = Some((xt, ft));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if !any_finite {
                return Err(Error::Optimizer {
                    stage: "quasi-Newton".into(),
                    message: format!("objective non-finite along the search direction at iteration {iterations}"),
                });
            }
            if 0.5 * slope < NOISE_FLOOR * (1.0 + fx.abs()) {
                stop = StopReason::NoiseFloor;
                break;
            }
            if fresh {
                stop = StopReason::LineSearch;
                break;
            }
            hinv = identity(n, 1.0);
            fresh = true;
            continue;
        };
        let gn = numerical_gradient(&mut f, &xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // Curvature pair of the minimization problem −f.
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                hinv = identity(n, sy / dot(&y, &y));
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = hinv.iter().map(|row| dot(row, &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
            fresh = false;
        }
        let stalled = inf_norm(&s) < 1e-12 * (1.0 + inf_norm(&x));
        x = xn;
        fx = fnew;
        g = gn;
        if stalled {
            let hg: Vec<f64> = hinv.iter().map(|row| dot(row, &g)).collect();
            stop = if 0.5 * dot(&g, &hg) < NOISE_FLOOR * (1.0 + fx.abs()) {
                StopReason::NoiseFloor
            } else {
                StopReason::LineSearch
            };
            break;
        }
    }
    let grad_norm = inf_norm(&g);
    if grad_norm < opts.tol {
        stop = StopReason::Gradient;
    }
    Ok(QnResult {
        x,
        value: fx,
        inv_hessian: hinv,
        iterations,
        converged: stop.converged(),
        stop,
        grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{norm_cdf, norm_pdf, norm_quantile};

    #[test]
    fn quadratic() {
        let a = [1.5, -2.0, 0.25];
        let r = quasi_newton_max(|x| -x.iter().zip(&a).map(|(u, v)| (u - v).powi(2)).sum::<f64>(), &[0.0; 3], &QnOptions::default())
            .unwrap();
        assert!(r.converged);
        for (x, v) in r.x.iter().zip(&a) {
            assert!((x - v).abs() < 1e-6);
        }
        assert!(r.value.abs() < 1e-10);
    }

    #[test]
    fn rosenbrock() {
        let r = quasi_newton_max(
            |x| -(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)),
            &[-1.2, 1.0],
            &QnOptions::default(),
        )
        .unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    /// Probit with one binary covariate: P(y=1|x) = Φ(a + b x), cell counts
    /// n_xy. The MLE matches the cell proportions exactly.
    pub(crate) fn probit_table() -> ([[f64; 2]; 2], impl Fn(&[f64]) -> f64) {
        let n = [[30.0, 70.0], [55.0, 45.0]];
        let f = move |p: &[f64]| {
            let mut ll = 0.0;
            for (x, row) in n.iter().enumerate() {
                let q = norm_cdf(p[0] + p[1] * x as f64);
                ll += row[1] * q.ln() + row[0] * (1.0 - q).ln();
            }
            ll
        };
        (n, f)
    }

    #[test]
    fn probit_closed_form() {
        let (n, f) = probit_table();
        let r = quasi_newton_max(&f, &[0.0, 0.0], &QnOptions { tol: 1e-9, ..Default::default() }).unwrap();
        let a = norm_quantile(n[0][1] / 100.0);
        let b = norm_quantile(n[1][1] / 100.0) - a;
        assert!((r.x[0] - a).abs() < 1e-6 && (r.x[1] - b).abs() < 1e-6, "{:?} {a} {b}", r.x);
        // Observed information at the MLE.
        let info = |q: f64, eta: f64| 100.0 * norm_pdf(eta).powi(2) / (q * (1.0 - q));
        let (i0, i1) = (info(0.7, a), info(0.45, a + b));
        let mut ff = f;
        let h = numerical_hessian(&mut ff, &r.x, 1e-4);
        assert!((-h[0][0] - (i0 + i1)).abs() < 1e-3 * (i0 + i1));
        assert!((-h[1][1] - i1).abs() < 1e-3 * i1);
        assert!((-h[0][1] - i1).abs() < 1e-3 * i1);
    }

    #[test]
    fn bad_start() {
        assert!(quasi_newton_max(|_| f64::NAN, &[0.0], &QnOptions::default()).is_err());
    }

    #[test]
    fn barrier_backtracks() {
        let r = quasi_newton_max(
            |x| if x[0] >= 1.0 { f64::NEG_INFINITY } else { (1.0 - x[0]).ln() - x[0] * x[0] },
            &[-3.0],
            &QnOptions::default(),
        )
        .unwrap();
        // d/dx: −1/(1−x) − 2x = 0 → x = (1 − √3)/2
        assert!((r.x[0] - (1.0 - 3f64.sqrt()) / 2.0).abs() < 1e-5, "{r:?}");
    }
}
