//! Multivariate normal and Student-t rectangle probabilities.
//!
//! The QMC routines follow the Genz–Bretz separation-of-variables scheme:
//! variables are reordered so the most constrained come first, the
//! Cholesky factor turns the rectangle into nested one-dimensional
//! truncations, and the remaining d − 1 (or d for Student-t) coordinates are
//! integrated with a randomly shifted lattice. The exchangeable case also has
//! a deterministic one-dimensional representation used as an oracle.

use crate::error::{Error, Result};
use crate::lattice::{QmcConfig, QmcPlan, VariableOrder};
use crate::quad::integrate_split;
use crate::special::{Sum, norm_cdf, norm_interval, norm_pdf, norm_quantile, t_cdf};
use serde::{Deserialize, Serialize};

/// Per-coordinate integration limits; ±∞ allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Rectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let r = Rectangle { lower, upper };
        r.validate()?;
        Ok(r)
    }

    /// (−∞, upper] in every coordinate.
    pub fn lower_orthant(upper: Vec<f64>) -> Self {
        Rectangle {
            lower: vec![f64::NEG_INFINITY; upper.len()],
            upper,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::invalid("rectangle lower/upper lengths differ or are zero"));
        }
        for (k, (a, b)) in self.lower.iter().zip(&self.upper).enumerate() {
            if a.is_nan() || b.is_nan() || a > b {
                return Err(Error::invalid(format!("rectangle coordinate {k}: [{a}, {b}]")));
            }
        }
        Ok(())
    }

    fn is_empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(a, b)| a == b)
    }
}

/// Symmetric positive-definite matrix with unit diagonal, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CorrelationMatrix {
    d: usize,
    data: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn identity(d: usize) -> Self {
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        CorrelationMatrix { d, data }
    }

    /// (1 − ρ)I + ρJ.
    pub fn exchangeable(d: usize, rho: f64) -> Result<Self> {
        let mut data = vec![rho; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        Self::from_row_major(d, data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("correlation matrix is not square"));
        }
        Self::from_row_major(d, rows.concat())
    }

    pub fn from_row_major(d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 || data.len() != d * d {
            return Err(Error::invalid("correlation matrix has wrong size"));
        }
        for i in 0..d {
            if (data[i * d + i] - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                let (a, b) = (data[i * d + j], data[j * d + i]);
                if !a.is_finite() || (a - b).abs() > 1e-12 {
                    return Err(Error::invalid(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        let m = CorrelationMatrix { d, data };
        m.cholesky()?;
        Ok(m)
    }

    /// Builds the matrix from its strict upper triangle in row order.
    pub fn from_upper(d: usize, upper: &[f64]) -> Result<Self> {
        if upper.len() != d * (d - 1) / 2 {
            return Err(Error::invalid("wrong number of correlations"));
        }
        let mut data = vec![0.0; d * d];
        let mut it = upper.iter();
        for i in 0..d {
            data[i * d + i] = 1.0;
            for j in i + 1..d {
                let v = *it.next().unwrap();
                data[i * d + j] = v;
                data[j * d + i] = v;
            }
        }
        Self::from_row_major(d, data)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.d).map(|c| c.to_vec()).collect()
    }

    /// Strict upper triangle in row order.
    pub fn upper(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.d * (self.d - 1) / 2);
        for i in 0..self.d {
            for j in i + 1..self.d {
                out.push(self.get(i, j));
            }
        }
        out
    }

    /// Lower Cholesky factor, row-major.
    pub fn cholesky(&self) -> Result<Vec<f64>> {
        let d = self.d;
        let mut l = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let mut s = self.data[i * d + j];
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                if i == j {
                    if s <= 1e-14 {
                        return Err(Error::NotPositiveDefinite { pivot: i });
                    }
                    l[i * d + i] = s.sqrt();
                } else {
                    l[i * d + j] = s / l[j * d + j];
                }
            }
        }
        Ok(l)
    }

    /// If every off-diagonal entry is equal, returns it.
    pub fn exchangeable_rho(&self) -> Option<f64> {
        if self.d < 2 {
            return None;
        }
        let r = self.get(0, 1);
        self.upper().iter().all(|&v| v == r).then_some(r)
    }
}

impl TryFrom<Vec<Vec<f64>>> for CorrelationMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        CorrelationMatrix::from_rows(&rows)
    }
}

impl From<CorrelationMatrix> for Vec<Vec<f64>> {
    fn from(m: CorrelationMatrix) -> Self {
        m.rows()
    }
}

/// Cholesky factor of the reordered problem plus the permuted limits.
struct Prepared {
    d: usize,
    l: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Cholesky decomposition with variable reordering. Under
/// [`VariableOrder::Conditional`] the remaining variable with the smallest
/// conditional interval probability is placed next, conditioning on the
/// truncated means of those already placed. Returns `None` when the
/// rectangle has probability zero.
fn prepare(rect: &Rectangle, corr: &CorrelationMatrix, order: VariableOrder) -> Result<Option<Prepared>> {
    let d = rect.dim();
    let mut perm: Vec<usize> = (0..d).collect();
    if order == VariableOrder::Marginal {
        let w: Vec<f64> = (0..d).map(|j| norm_interval(rect.lower[j], rect.upper[j])).collect();
        perm.sort_by(|&i, &j| w[i].total_cmp(&w[j]));
    }
    let mut sig: Vec<f64> = (0..d * d).map(|k| corr.data[perm[k / d] * d + perm[k % d]]).collect();
    let mut a: Vec<f64> = perm.iter().map(|&j| rect.lower[j]).collect();
    let mut b: Vec<f64> = perm.iter().map(|&j| rect.upper[j]).collect();
    let mut l = vec![0.0; d * d];
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut best = (f64::INFINITY, i);
        let cands = if order == VariableOrder::Conditional { i..d } else { i..i };
        for j in cands {
            let mut v = sig[j * d + j];
            let mut m = 0.0;
            for k in 0..i {
                v -= l[j * d + k] * l[j * d + k];
                m += l[j * d + k] * y[k];
            }
            if v <= 1e-14 {
                return Err(Error::NotPositiveDefinite { pivot: i });
            }
            let s = v.sqrt();
            let p = norm_interval((a[j] - m) / s, (b[j] - m) / s);
            if p < best.0 {
                best = (p, j);
            }
        }
        let j = best.1;
        if j != i {
            for k in 0..d {
                sig.swap(i * d + k, j * d + k);
            }
            for k in 0..d {
                sig.swap(k * d + i, k * d + j);
            }
            for k in 0..i {
                l.swap(i * d + k, j * d + k);
            }
            a.swap(i, j);
            b.swap(i, j);
        }
        let mut v = sig[i * d + i];
        for k in 0..i {
            v -= l[i * d + k] * l[i * d + k];
        }
        let lii = v.sqrt();
        l[i * d + i] = lii;
        for m in i + 1..d {
            let mut s = sig[m * d + i];
            for k in 0..i {
                s -= l[m * d + k] * l[i * d + k];
            }
            l[m * d + i] = s / lii;
        }
        let mut m = 0.0;
        for k in 0..i {
            m += l[i * d + k] * y[k];
        }
        let lo = (a[i] - m) / lii;
        let hi = (b[i] - m) / lii;
        let p = norm_interval(lo, hi);
        if p <= 0.0 {
            return Ok(None);
        }
        y[i] = (pdf_ext(lo) - pdf_ext(hi)) / p;
    }
    Ok(Some(Prepared { d, l, a, b }))
}

#[inline]
fn pdf_ext(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        norm_pdf(x)
    }
}

const Y_CAP: f64 = 38.0;

impl Prepared {
    /// Separation-of-variables integrand at the unit-cube point `w`, with all
    /// limits multiplied by `scale` (the Student-t radial variable).
    #[inline]
    fn integrand(&self, w: impl Fn(usize) -> f64, scale: f64, y: &mut [f64]) -> f64 {
        let d = self.d;
        let mut prod = 1.0;
        for i in 0..d {
            let row = &self.l[i * d..i * d + i + 1];
            let mut m = 0.0;
            for k in 0..i {
                m += row[k] * y[k];
            }
            let lii = row[i];
            let lo = (self.a[i] * scale - m) / lii;
            let hi = (self.b[i] * scale - m) / lii;
            let (e, yi) = if lo > 0.0 {
                let pl = norm_cdf(-lo);
                let e = (pl - norm_cdf(-hi)).max(0.0);
                if e <= 0.0 {
                    return 0.0;
                }
                let yi = if i + 1 < d { -norm_quantile(pl - w(i) * e) } else { 0.0 };
                (e, yi)
            } else {
                let pl = norm_cdf(lo);
                let e = (norm_cdf(hi) - pl).max(0.0);
                if e <= 0.0 {
                    return 0.0;
                }
                let yi = if i + 1 < d { norm_quantile(pl + w(i) * e) } else { 0.0 };
                (e, yi)
            };
            prod *= e;
            if i + 1 < d {
                y[i] = yi.max(lo).min(hi).clamp(-Y_CAP, Y_CAP);
            }
        }
        prod
    }
}

fn dim_check(rect: &Rectangle, corr: &CorrelationMatrix) -> Result<()> {
    rect.validate()?;
    if rect.dim() != corr.dim() {
        return Err(Error::invalid(format!(
            "rectangle has dimension {} but the correlation matrix {}",
            rect.dim(),
            corr.dim()
        )));
    }
    Ok(())
}

/// Relative rounding level folded into the reported standard error; the
/// spread across shifts cannot see rounding that every shift shares.
const ROUNDING_FLOOR: f64 = 16.0 * f64::EPSILON;

fn summarize(per_shift: &[f64]) -> (f64, f64) {
    let m = per_shift.len() as f64;
    let mut acc = Sum::default();
    for &v in per_shift {
        acc.add(v);
    }
    let mean = acc.total() / m;
    let var = per_shift.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    let floor = ROUNDING_FLOOR * mean;
    (mean, (var / m + floor * floor).sqrt())
}

/// Randomized-QMC estimate of P(a ≤ Z ≤ b) for Z ~ N(0, R), with its
/// standard error across random shifts.
pub fn mvn_rect(rect: &Rectangle, corr: &CorrelationMatrix, cfg: &QmcConfig) -> Result<(f64, f64)> {
    dim_check(rect, corr)?;
    cfg.validate()?;
    if rect.is_empty() {
        return Ok((0.0, 0.0));
    }
    let d = rect.dim();
    if d == 1 {
        return Ok((norm_interval(rect.lower[0], rect.upper[0]), 0.0));
    }
    if d - 1 > cfg.max_dim {
        return Err(Error::CapExceeded { what: "QMC dimension", count: d - 1, cap: cfg.max_dim });
    }
    let prep = match prepare(rect, corr, cfg.ordering)? {
        Some(p) => p,
        None => {
            corr.cholesky()?;
            return Ok((0.0, 0.0));
        }
    };
    let plan = QmcPlan::get(cfg)?;
    let mut y = vec![0.0; d];
    let mut per_shift = Vec::with_capacity(plan.shifts);
    for s in 0..plan.shifts {
        let mut acc = Sum::default();
        for k in 0..plan.n {
            let f1 = prep.integrand(|i| plan.coord(s, k, i), 1.0, &mut y);
            let f2 = prep.integrand(|i| 1.0 - plan.coord(s, k, i), 1.0, &mut y);
            acc.add(0.5 * (f1 + f2));
        }
        per_shift.push(acc.total() / plan.n as f64);
    }
    Ok(summarize(&per_shift))
}

/// Randomized-QMC estimate of a multivariate Student-t rectangle
/// probability with `nu` degrees of freedom.
pub fn mvt_rect(rect: &Rectangle, corr: &CorrelationMatrix, nu: f64, cfg: &QmcConfig) -> Result<(f64, f64)> {
    dim_check(rect, corr)?;
    cfg.validate()?;
    if !(nu > 0.0) {
        return Err(Error::domain("MVT", nu, "nu > 0"));
    }
    if rect.is_empty() {
        return Ok((0.0, 0.0));
    }
    let d = rect.dim();
    if d == 1 {
        let p = (t_cdf(rect.upper[0], nu) - t_cdf(rect.lower[0], nu)).max(0.0);
        return Ok((p, 0.0));
    }
    if d > cfg.max_dim {
        return Err(Error::CapExceeded { what: "QMC dimension", count: d, cap: cfg.max_dim });
    }
    let prep = match prepare(rect, corr, cfg.ordering)? {
        Some(p) => p,
        None => {
            corr.cholesky()?;
            return Ok((0.0, 0.0));
        }
    };
    let plan = QmcPlan::get(cfg)?;
    let radial = plan.radial(nu);
    let mut y = vec![0.0; d];
    let mut per_shift = Vec::with_capacity(plan.shifts);
    for s in 0..plan.shifts {
        let mut acc = Sum::default();
        for k in 0..plan.n {
            let r = &radial[2 * (s * plan.n + k)..2 * (s * plan.n + k) + 2];
            let f1 = prep.integrand(|i| plan.coord(s, k, i + 1), r[0], &mut y);
            let f2 = prep.integrand(|i| 1.0 - plan.coord(s, k, i + 1), r[1], &mut y);
            acc.add(0.5 * (f1 + f2));
        }
        per_shift.push(acc.total() / plan.n as f64);
    }
    Ok(summarize(&per_shift))
}

/// Deterministic MVN rectangle probability for an exchangeable correlation
/// ρ ∈ (0, 1) via the one-factor representation
/// ∫ φ(z) ∏ⱼ [Φ((bⱼ − √ρ z)/√(1−ρ)) − Φ((aⱼ − √ρ z)/√(1−ρ))] dz.
pub fn mvn_rect_exchangeable(rect: &Rectangle, rho: f64, quad_tol: f64) -> Result<f64> {
    rect.validate()?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::domain("exchangeable MVN", rho, "0 < rho < 1"));
    }
    if rect.is_empty() {
        return Ok(0.0);
    }
    let sr = rho.sqrt();
    let sc = (1.0 - rho).sqrt();
    let f = |z: f64| {
        let mut p = norm_pdf(z);
        for (a, b) in rect.lower.iter().zip(&rect.upper) {
            p *= norm_interval((a - sr * z) / sc, (b - sr * z) / sc);
            if p == 0.0 {
                break;
            }
        }
        p
    };
    // outside [lo, hi] some factor is below Φ(−38)
    let mut lo = -10.0f64;
    let mut hi = 10.0f64;
    for (a, b) in rect.lower.iter().zip(&rect.upper) {
        lo = lo.max((a - 38.0 * sc) / sr);
        hi = hi.min((b + 38.0 * sc) / sr);
    }
    if lo >= hi {
        return Ok(0.0);
    }
    // panels no wider than the scale on which each factor changes
    let width = (0.25 * sc / sr).min(1.0);
    let pieces = (((hi - lo) / width).ceil() as usize).clamp(1, 2000);
    let (v, _) = integrate_split(f, lo, hi, pieces, quad_tol);
    Ok(v.clamp(0.0, 1.0))
}

/// Default absolute tolerance of [`mvn_rect_exchangeable`].
pub const EXCHANGEABLE_TOL: f64 = 1e-12;
