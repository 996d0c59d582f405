//! Bivariate copula families for the temporal (lag-one) dependence of a
//! single ordinal series.
//!
//! Only cdfs and rectangle masses are provided: with ordinal responses every
//! likelihood term is a rectangle probability, so densities are never
//! needed. Kendall's tau conversions are exposed in both directions.

use crate::bvn::bvn_lower;
use crate::error::{Error, Result};
use crate::quad::{brent, integrate};
use crate::special::{norm_cdf, norm_quantile, t_cdf, t_quantile};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Frank parameters closer to zero than this use the independence copula.
pub const FRANK_ZERO: f64 = 1e-8;
/// Upper bound on the Gumbel parameter used by the optimizers (τ = 0.98).
pub const GUMBEL_MAX: f64 = 50.0;
/// Absolute tolerance of the bivariate-t conditional integration.
pub const BVT_TOL: f64 = 1e-9;
/// Bracket searched when inverting the Frank tau relation.
pub const FRANK_BRACKET: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BivCopulaFamily {
    Bvn,
    Bvt { nu: f64 },
    Frank,
    Gumbel,
    SurvivalGumbel,
    Independence,
}

impl BivCopulaFamily {
    pub fn name(&self) -> String {
        match self {
            BivCopulaFamily::Bvn => "BVN".into(),
            BivCopulaFamily::Bvt { nu } => format!("BVT(nu={nu})"),
            BivCopulaFamily::Frank => "Frank".into(),
            BivCopulaFamily::Gumbel => "Gumbel".into(),
            BivCopulaFamily::SurvivalGumbel => "s.Gumbel".into(),
            BivCopulaFamily::Independence => "Independence".into(),
        }
    }

    /// Whether the family carries a free dependence parameter.
    pub fn has_parameter(&self) -> bool {
        !matches!(self, BivCopulaFamily::Independence)
    }

    /// Parameter value at which the family reduces to independence, if it nests it.
    pub fn independence_theta(&self) -> Option<f64> {
        match self {
            BivCopulaFamily::Bvn | BivCopulaFamily::Frank => Some(0.0),
            BivCopulaFamily::Gumbel | BivCopulaFamily::SurvivalGumbel => Some(1.0),
            BivCopulaFamily::Independence => Some(0.0),
            BivCopulaFamily::Bvt { .. } => None,
        }
    }
}

/// A bivariate copula family together with its dependence parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivCopulaSpec {
    #[serde(flatten)]
    pub family: BivCopulaFamily,
    #[serde(default)]
    pub theta: f64,
}

impl BivCopulaSpec {
    pub fn new(family: BivCopulaFamily, theta: f64) -> Result<Self> {
        let spec = BivCopulaSpec { family, theta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn independence() -> Self {
        BivCopulaSpec {
            family: BivCopulaFamily::Independence,
            theta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let name = self.family.name();
        let th = self.theta;
        if !th.is_finite() {
            return Err(Error::domain(name, th, "finite parameter"));
        }
        match self.family {
            BivCopulaFamily::Bvn => {
                if th.abs() >= 1.0 {
                    return Err(Error::domain(name, th, "-1 < theta < 1"));
                }
            }
            BivCopulaFamily::Bvt { nu } => {
                if th.abs() >= 1.0 {
                    return Err(Error::domain(name, th, "-1 < theta < 1"));
                }
                if !(nu > 0.0 && nu.is_finite()) {
                    return Err(Error::domain(name, nu, "nu > 0"));
                }
            }
            BivCopulaFamily::Gumbel | BivCopulaFamily::SurvivalGumbel => {
                if th < 1.0 {
                    return Err(Error::domain(name, th, "theta >= 1"));
                }
            }
            BivCopulaFamily::Frank | BivCopulaFamily::Independence => {}
        }
        Ok(())
    }

    /// True when the cdf is exactly the product copula.
    pub fn is_independence(&self) -> bool {
        match self.family {
            BivCopulaFamily::Independence => true,
            BivCopulaFamily::Frank => self.theta.abs() < FRANK_ZERO,
            BivCopulaFamily::Bvn => self.theta == 0.0,
            BivCopulaFamily::Gumbel | BivCopulaFamily::SurvivalGumbel => self.theta == 1.0,
            BivCopulaFamily::Bvt { .. } => false,
        }
    }

    /// C(u1, u2). Assumes a validated spec; boundary values are exact.
    pub fn cdf(&self, u1: f64, u2: f64) -> f64 {
        if u1 <= 0.0 || u2 <= 0.0 {
            return 0.0;
        }
        if u1 >= 1.0 {
            return u2.min(1.0);
        }
        if u2 >= 1.0 {
            return u1;
        }
        if self.is_independence() {
            return u1 * u2;
        }
        let th = self.theta;
        let c = match self.family {
            BivCopulaFamily::Bvn => bvn_lower(norm_quantile(u1), norm_quantile(u2), th),
            BivCopulaFamily::Bvt { nu } => bvt_cdf(t_quantile(u1, nu), t_quantile(u2, nu), th, nu),
            BivCopulaFamily::Frank => frank_cdf(u1, u2, th),
            BivCopulaFamily::Gumbel => gumbel_cdf(u1, u2, th),
            BivCopulaFamily::SurvivalGumbel => u1 + u2 - 1.0 + gumbel_cdf(1.0 - u1, 1.0 - u2, th),
            BivCopulaFamily::Independence => unreachable!(),
        };
        // Fréchet bounds absorb round-off
        c.clamp((u1 + u2 - 1.0).max(0.0), u1.min(u2))
    }

    /// Copula mass of the rectangle [a1, b1] × [a2, b2], clamped at zero.
    pub fn rect_prob(&self, a1: f64, b1: f64, a2: f64, b2: f64) -> f64 {
        if a1 >= b1 || a2 >= b2 {
            return 0.0;
        }
        if self.is_independence() {
            return (b1 - a1) * (b2 - a2);
        }
        let v = self.cdf(b1, b2) - self.cdf(a1, b2) - self.cdf(b1, a2) + self.cdf(a1, a2);
        v.max(0.0)
    }

    /// Kendall's tau implied by the family and parameter.
    pub fn kendall_tau(&self) -> f64 {
        if self.is_independence() {
            return 0.0;
        }
        let th = self.theta;
        match self.family {
            BivCopulaFamily::Bvn | BivCopulaFamily::Bvt { .. } => 2.0 / PI * th.asin(),
            BivCopulaFamily::Frank => frank_tau(th),
            BivCopulaFamily::Gumbel | BivCopulaFamily::SurvivalGumbel => 1.0 - 1.0 / th,
            BivCopulaFamily::Independence => 0.0,
        }
    }

    /// Draws one pair (U1, U2) from the copula.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let u: f64 = Open01.sample(rng);
        if self.is_independence() {
            return (u, Open01.sample(rng));
        }
        let th = self.theta;
        match self.family {
            BivCopulaFamily::Bvn => {
                let z1: f64 = StandardNormal.sample(rng);
                let e: f64 = StandardNormal.sample(rng);
                let z2 = th * z1 + (1.0 - th * th).sqrt() * e;
                (norm_cdf(z1), norm_cdf(z2))
            }
            BivCopulaFamily::Bvt { nu } => {
                let z1: f64 = StandardNormal.sample(rng);
                let e: f64 = StandardNormal.sample(rng);
                let z2 = th * z1 + (1.0 - th * th).sqrt() * e;
                let w: f64 = ChiSquared::new(nu).expect("nu > 0").sample(rng);
                let s = (w / nu).sqrt();
                (t_cdf(z1 / s, nu), t_cdf(z2 / s, nu))
            }
            BivCopulaFamily::Frank => {
                // closed-form inverse of the conditional cdf C(v | u)
                let w: f64 = Open01.sample(rng);
                let v = -((w * (-th).exp_m1()) / (w + (1.0 - w) * (-th * u).exp())).ln_1p() / th;
                (u, v.clamp(0.0, 1.0))
            }
            BivCopulaFamily::Gumbel => gumbel_pair(th, rng),
            BivCopulaFamily::SurvivalGumbel => {
                let (a, b) = gumbel_pair(th, rng);
                (1.0 - a, 1.0 - b)
            }
            BivCopulaFamily::Independence => unreachable!(),
        }
    }
}

/// Validating cdf evaluation.
pub fn biv_cdf(spec: &BivCopulaSpec, u1: f64, u2: f64) -> Result<f64> {
    spec.validate()?;
    check_unit(u1)?;
    check_unit(u2)?;
    Ok(spec.cdf(u1, u2))
}

/// Validating rectangle mass C(b1,b2) − C(a1,b2) − C(b1,a2) + C(a1,a2).
pub fn biv_pmf_rect(spec: &BivCopulaSpec, a1: f64, b1: f64, a2: f64, b2: f64) -> Result<f64> {
    spec.validate()?;
    for v in [a1, b1, a2, b2] {
        check_unit(v)?;
    }
    if a1 > b1 || a2 > b2 {
        return Err(Error::invalid(format!(
            "rectangle limits out of order: [{a1}, {b1}] x [{a2}, {b2}]"
        )));
    }
    Ok(spec.rect_prob(a1, b1, a2, b2))
}

pub fn kendall_tau(spec: &BivCopulaSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.kendall_tau())
}

/// Inverse of [`kendall_tau`] within a family.
pub fn param_from_tau(family: BivCopulaFamily, tau: f64) -> Result<BivCopulaSpec> {
    let name = family.name();
    if !(tau > -1.0 && tau < 1.0) {
        return Err(Error::domain(name, tau, "-1 < tau < 1"));
    }
    let theta = match family {
        BivCopulaFamily::Bvn | BivCopulaFamily::Bvt { .. } => (FRAC_PI_2 * tau).sin(),
        BivCopulaFamily::Gumbel | BivCopulaFamily::SurvivalGumbel => {
            if tau < 0.0 {
                return Err(Error::domain(name, tau, "0 <= tau < 1"));
            }
            1.0 / (1.0 - tau)
        }
        BivCopulaFamily::Frank => {
            if tau == 0.0 {
                0.0
            } else {
                let lo = frank_tau(-FRANK_BRACKET);
                let hi = frank_tau(FRANK_BRACKET);
                if tau <= lo || tau >= hi {
                    return Err(Error::domain(
                        name,
                        tau,
                        format!("{lo:.6} < tau < {hi:.6} (|theta| <= {FRANK_BRACKET})"),
                    ));
                }
                let (a, b) = if tau > 0.0 { (1e-10, FRANK_BRACKET) } else { (-FRANK_BRACKET, -1e-10) };
                brent(|t| frank_tau(t) - tau, a, b, 1e-13)
                    .ok_or_else(|| Error::domain(name.clone(), tau, "no Frank root in bracket"))?
            }
        }
        BivCopulaFamily::Independence => {
            if tau != 0.0 {
                return Err(Error::domain(name, tau, "tau = 0"));
            }
            0.0
        }
    };
    BivCopulaSpec::new(family, theta)
}

fn check_unit(u: f64) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{u} is not in [0, 1]")))
    }
}

fn frank_cdf(u1: f64, u2: f64, th: f64) -> f64 {
    let num = (-th * u1).exp_m1() * (-th * u2).exp_m1();
    -(num / (-th).exp_m1()).ln_1p() / th
}

fn gumbel_cdf(u1: f64, u2: f64, th: f64) -> f64 {
    if u1 <= 0.0 || u2 <= 0.0 {
        return 0.0;
    }
    if u1 >= 1.0 {
        return u2;
    }
    if u2 >= 1.0 {
        return u1;
    }
    let a = -u1.ln();
    let b = -u2.ln();
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    // (a^θ + b^θ)^{1/θ} without overflow for large θ
    let s = hi * (1.0 + (lo / hi).powf(th)).powf(1.0 / th);
    (-s).exp()
}

/// Kendall's tau of the Frank copula, 1 + 4θ⁻¹[D₁(θ) − 1]. Written as
/// 4J(θ)/θ² with J = ∫₀^θ [(t/2)coth(t/2) − 1] dt, which equals the Debye form
/// but avoids the cancellation near θ = 0.
pub fn frank_tau(th: f64) -> f64 {
    if th.abs() < FRANK_ZERO {
        return 0.0;
    }
    let g = |t: f64| {
        let a = t.abs();
        if a < 1e-3 {
            let t2 = t * t;
            t2 / 12.0 - t2 * t2 / 720.0 + t2 * t2 * t2 / 30240.0
        } else {
            // (t/2)coth(t/2) − 1 = t/(e^t − 1) + t/2 − 1
            a / a.exp_m1() + 0.5 * a - 1.0
        }
    };
    let tol = (1e-10 * (th * th / 4.0).min(1.0)).max(1e-15);
    let (j, _) = integrate(g, 0.0, th, tol);
    4.0 * j / (th * th)
}

/// Bivariate Student-t cdf T₂(x1, x2; ρ, ν) as a one-dimensional integral of
/// the conditional t cdf, after substituting s = √ν·tan φ so the range is
/// finite.
pub fn bvt_cdf(x1: f64, x2: f64, rho: f64, nu: f64) -> f64 {
    if x1 == f64::NEG_INFINITY || x2 == f64::NEG_INFINITY {
        return 0.0;
    }
    if x1 == f64::INFINITY {
        return t_cdf(x2, nu);
    }
    if x2 == f64::INFINITY {
        return t_cdf(x1, nu);
    }
    // integrate over the variable with the shorter range
    let (outer, inner) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
    let sqnu = nu.sqrt();
    let ln_k = statrs::function::gamma::ln_gamma(0.5 * (nu + 1.0))
        - statrs::function::gamma::ln_gamma(0.5 * nu)
        - 0.5 * PI.ln();
    let k = ln_k.exp();
    let scale = ((nu + 1.0) / (1.0 - rho * rho)).sqrt();
    let upper = (outer / sqnu).atan();
    let f = |phi: f64| {
        let c = phi.cos();
        if c <= 0.0 {
            return 0.0;
        }
        let s = sqnu * phi.tan();
        let arg = (inner - rho * s) * scale / (nu + s * s).sqrt();
        k * c.powf(nu - 1.0) * t_cdf(arg, nu + 1.0)
    };
    let (v, _) = integrate(f, -FRAC_PI_2, upper, BVT_TOL);
    v.clamp(0.0, 1.0)
}

fn gumbel_pair<R: Rng + ?Sized>(th: f64, rng: &mut R) -> (f64, f64) {
    // Marshall–Olkin: positive stable frailty with Laplace transform exp(−s^{1/θ})
    let alpha = 1.0 / th;
    let v: f64 = Open01.sample(rng);
    let u = PI * v;
    let e: f64 = Exp1.sample(rng);
    let stable = (alpha * u).sin() / u.sin().powf(1.0 / alpha)
        * (((1.0 - alpha) * u).sin() / e).powf((1.0 - alpha) / alpha);
    let e1: f64 = Exp1.sample(rng);
    let e2: f64 = Exp1.sample(rng);
    (
        (-(e1 / stable).powf(alpha)).exp(),
        (-(e2 / stable).powf(alpha)).exp(),
    )
}
