//! Maps between constrained model parameters and unconstrained vectors.

use crate::copula::{BivCopulaFamily, BivCopulaSpec, GUMBEL_MAX};
use crate::error::{Error, Result};
use crate::marginal::{Link, MarginalParams};
use crate::markov::SeriesModel;
use crate::rect::CorrelationMatrix;
use std::f64::consts::PI;

/// Cutpoints ↦ (first cutpoint, log-spacings).
pub fn cutpoints_to_free(c: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(c.len());
    if let Some(&c0) = c.first() {
        out.push(c0);
        out.extend(c.windows(2).map(|w| (w[1] - w[0]).ln()));
    }
    out
}

pub fn cutpoints_from_free(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for (i, &v) in x.iter().enumerate() {
        acc = if i == 0 { v } else { acc + v.exp() };
        out.push(acc);
    }
    out
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Copula parameter ↦ ℝ: identity (Frank), log-softplus shift (Gumbel
/// families), Fisher z (BVN/BVT).
pub fn theta_to_free(family: BivCopulaFamily, theta: f64) -> f64 {
    match family {
        BivCopulaFamily::Frank | BivCopulaFamily::Independence => theta,
        BivCopulaFamily::Gumbel | BivCopulaFamily::SurvivalGumbel => softplus_inv(theta - 1.0),
        BivCopulaFamily::Bvn | BivCopulaFamily::Bvt { .. } => theta.atanh(),
    }
}

pub fn theta_from_free(family: BivCopulaFamily, x: f64) -> f64 {
    match family {
        BivCopulaFamily::Frank | BivCopulaFamily::Independence => x,
        BivCopulaFamily::Gumbel | BivCopulaFamily::SurvivalGumbel => (1.0 + softplus(x)).min(GUMBEL_MAX),
        BivCopulaFamily::Bvn | BivCopulaFamily::Bvt { .. } => x.tanh(),
    }
}

/// Correlation matrix ↦ d(d−1)/2 reals: spherical angles ω ∈ (0, π) of the
/// rows of its Cholesky factor, each mapped through logit(ω/π).
/// Angles are measured from π/2 so the identity maps exactly to the origin.
pub fn corr_to_free(r: &CorrelationMatrix) -> Result<Vec<f64>> {
    let d = r.dim();
    let l = r.cholesky()?;
    let mut out = Vec::with_capacity(d * (d - 1) / 2);
    for i in 1..d {
        for k in 0..i {
            let tail = (k + 1..=i).map(|m| l[i * d + m] * l[i * d + m]).sum::<f64>().sqrt();
            // ω = π/2 + π/2·tanh(x/2)
            let w = tail.atan2(l[i * d + k]);
            out.push(2.0 * (2.0 * w / PI - 1.0).atanh());
        }
    }
    Ok(upper_order(d, out))
}

/// Inverse of [`corr_to_free`]; positive definite for every finite input.
pub fn corr_from_free(d: usize, x: &[f64]) -> Result<CorrelationMatrix> {
    if x.len() != d * (d - 1) / 2 {
        return Err(Error::invalid("wrong number of correlation parameters"));
    }
    let x = row_order(d, x);
    let mut l = vec![0.0; d * d];
    l[0] = 1.0;
    let mut idx = 0;
    for i in 1..d {
        let mut rem = 1.0;
        for k in 0..i {
            let c = 0.5 * PI * (0.5 * x[idx]).tanh();
            idx += 1;
            l[i * d + k] = -rem * c.sin();
            rem *= c.cos();
        }
        l[i * d + i] = rem;
    }
    let mut data = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let v: f64 = if i == j { 1.0 } else { (0..=j).map(|k| l[i * d + k] * l[j * d + k]).sum() };
            data[i * d + j] = v;
            data[j * d + i] = v;
        }
    }
    CorrelationMatrix::from_row_major(d, data)
}

// Angles are generated row by row (i, k<i); parameters are stored in the
// upper-triangle order (0,1), (0,2), …, (1,2), … used by `CorrelationMatrix::upper`.
fn tri_index(d: usize) -> Vec<usize> {
    let mut pairs = Vec::new();
    for i in 1..d {
        for k in 0..i {
            pairs.push((k, i));
        }
    }
    let mut upper = Vec::new();
    for a in 0..d {
        for b in a + 1..d {
            upper.push((a, b));
        }
    }
    upper.iter().map(|p| pairs.iter().position(|q| q == p).unwrap()).collect()
}

fn upper_order(d: usize, rowwise: Vec<f64>) -> Vec<f64> {
    tri_index(d).into_iter().map(|i| rowwise[i]).collect()
}

fn row_order(d: usize, upper: &[f64]) -> Vec<f64> {
    let idx = tri_index(d);
    let mut out = vec![0.0; upper.len()];
    for (u, &r) in idx.iter().enumerate() {
        out[r] = upper[u];
    }
    out
}

/// Shape of one series' parameter vector: β, then cutpoints, then θ when the
/// temporal family has one.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesLayout {
    pub p: usize,
    pub k: u32,
    pub link: Link,
    pub family: BivCopulaFamily,
}

impl SeriesLayout {
    pub fn of(m: &SeriesModel) -> Self {
        SeriesLayout {
            p: m.marginal.p(),
            k: m.marginal.k(),
            link: m.marginal.link,
            family: m.temporal.family,
        }
    }

    pub fn n_marginal(&self) -> usize {
        self.p + self.k as usize - 1
    }

    pub fn len(&self) -> usize {
        self.n_marginal() + self.family.has_parameter() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn marginal_to_free(&self, m: &MarginalParams) -> Vec<f64> {
        let mut v = m.beta.clone();
        v.extend(cutpoints_to_free(&m.cutpoints));
        v
    }

    pub fn marginal_from_free(&self, x: &[f64]) -> Result<MarginalParams> {
        MarginalParams::new(x[..self.p].to_vec(), cutpoints_from_free(&x[self.p..self.n_marginal()]), self.link)
    }

    pub fn to_free(&self, m: &SeriesModel) -> Vec<f64> {
        let mut v = self.marginal_to_free(&m.marginal);
        if self.family.has_parameter() {
            v.push(theta_to_free(self.family, m.temporal.theta));
        }
        v
    }

    pub fn from_free(&self, x: &[f64]) -> Result<SeriesModel> {
        let marginal = self.marginal_from_free(x)?;
        let temporal = if self.family.has_parameter() {
            BivCopulaSpec::new(self.family, theta_from_free(self.family, x[self.n_marginal()]))?
        } else {
            BivCopulaSpec::independence()
        };
        SeriesModel::new(marginal, temporal)
    }

    /// Parameters on the reporting scale, in free-vector order.
    pub fn natural(m: &SeriesModel) -> Vec<f64> {
        let mut v = m.marginal.beta.clone();
        v.extend(&m.marginal.cutpoints);
        if m.temporal.family.has_parameter() {
            v.push(m.temporal.theta);
        }
        v
    }

    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.p).map(|i| format!("beta[{i}]")).collect();
        v.extend((1..self.k).map(|i| format!("cut[{i}]")));
        if self.family.has_parameter() {
            v.push("theta".into());
        }
        v
    }
}

/// Central-difference Jacobian of `g` at `x`, row-major (outputs × inputs).
pub fn jacobian(g: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], rel: f64) -> Vec<Vec<f64>> {
    let m = g(x).len();
    let mut jac = vec![vec![0.0; x.len()]; m];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = rel * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let up = g(&xp);
        xp[i] = x[i] - h;
        let dn = g(&xp);
        xp[i] = x[i];
        for r in 0..m {
            jac[r][i] = (up[r] - dn[r]) / (2.0 * h);
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cutpoint_round_trip() {
        let c = [-1.2, -0.4, 0.4, 1.2];
        let back = cutpoints_from_free(&cutpoints_to_free(&c));
        for (a, b) in c.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_round_trips() {
        for (f, t) in [
            (BivCopulaFamily::Frank, -7.5),
            (BivCopulaFamily::Gumbel, 1.0001),
            (BivCopulaFamily::Gumbel, 3.3),
            (BivCopulaFamily::SurvivalGumbel, 40.0),
            (BivCopulaFamily::Bvn, -0.93),
            (BivCopulaFamily::Bvt { nu: 4.0 }, 0.6),
        ] {
            let back = theta_from_free(f, theta_to_free(f, t));
            assert!((back - t).abs() < 1e-12 * t.abs().max(1.0), "{f:?} {t} {back}");
        }
        assert_eq!(theta_from_free(BivCopulaFamily::Gumbel, 1e3), GUMBEL_MAX);
    }

    #[test]
    fn identity_is_origin() {
        let x = corr_to_free(&CorrelationMatrix::identity(4)).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-12));
        let r = corr_from_free(3, &[0.0; 3]).unwrap();
        assert_eq!(r, CorrelationMatrix::identity(3));
    }

    #[test]
    fn free_order_follows_upper_triangle() {
        let r = CorrelationMatrix::from_upper(3, &[0.4, 0.0, 0.0]).unwrap();
        let x = corr_to_free(&r).unwrap();
        assert!(x[0] < 0.0 && x[1].abs() < 1e-12 && x[2].abs() < 1e-12, "{x:?}");
    }

    proptest! {
        #[test]
        fn corr_round_trip(x in proptest::collection::vec(-4.0f64..4.0, 10)) {
            let r = corr_from_free(5, &x).unwrap();
            let y = corr_to_free(&r).unwrap();
            for (a, b) in x.iter().zip(&y) {
                prop_assert!((a - b).abs() < 1e-7, "{} {}", a, b);
            }
            let r2 = corr_from_free(5, &y).unwrap();
            for (a, b) in r.upper().iter().zip(r2.upper()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn series_round_trip(b in -2.0f64..2.0, c0 in -2.0f64..0.0, s in 0.05f64..2.0, th in 1.0f64..20.0) {
            let m = SeriesModel::new(
                MarginalParams::new(vec![b], vec![c0, c0 + s], Link::Probit).unwrap(),
                BivCopulaSpec::new(BivCopulaFamily::Gumbel, th).unwrap(),
            ).unwrap();
            let lay = SeriesLayout::of(&m);
            let back = lay.from_free(&lay.to_free(&m)).unwrap();
            for (a, b) in SeriesLayout::natural(&m).iter().zip(SeriesLayout::natural(&back)) {
                prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
