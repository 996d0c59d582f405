//! Univariate normal, Student-t and chi-square distribution functions.
//!
//! Thin wrappers over `statrs` special functions with the boundary handling
//! the rectangle and copula code relies on: infinite arguments map exactly to
//! 0 or 1, and probabilities 0 and 1 map to infinite quantiles.

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use statrs::function::{beta, gamma};
use std::f64::consts::FRAC_1_SQRT_2;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal cdf Φ(x).
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Φ(b) − Φ(a) for a ≤ b, evaluated on whichever tail keeps precision.
#[inline]
pub fn norm_interval(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        (norm_cdf(-a) - norm_cdf(-b)).max(0.0)
    } else {
        (norm_cdf(b) - norm_cdf(a)).max(0.0)
    }
}

/// Standard normal quantile Φ⁻¹(p); p = 0 and p = 1 give ∓∞.
///
/// Wichura's AS 241 rational approximations (relative accuracy about 1e-16).
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((r * 2509.080_928_730_122_7 + 33430.575_583_588_13) * r + 67265.770_927_008_7) * r
            + 45921.953_931_549_87)
            * r
            + 13731.693_765_509_461)
            * r
            + 1971.590_950_306_551_3)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((r * 5226.495_278_852_546 + 28729.085_735_721_943) * r + 39307.895_800_092_71) * r
            + 21213.794_301_586_597)
            * r
            + 5394.196_021_424_751)
            * r
            + 687.187_007_492_057_9)
            * r
            + 42.313_330_701_600_91)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((r * 7.745_450_142_783_414e-4 + 0.022_723_844_989_269_184) * r + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((r * 1.050_750_071_644_416_9e-9 + 5.475_938_084_995_345e-4) * r
            + 0.015_198_666_563_616_457)
            * r
            + 0.148_103_976_427_480_08)
            * r
            + 0.689_767_334_985_1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((r * 2.010_334_399_292_288_1e-7 + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((r * 2.044_263_103_389_939_7e-15 + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 0.014_875_361_290_850_615)
            * r
            + 0.136_929_880_922_735_8)
            * r
            + 0.599_832_206_555_888)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Student-t cdf with `nu` degrees of freedom (`nu` may be non-integer).
pub fn t_cdf(x: f64, nu: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == 0.0 {
        return 0.5;
    }
    let x2 = x * x;
    let z = x2 / (nu + x2);
    if z < 0.5 {
        // central region: 1/2 ± I_z(1/2, ν/2)/2
        let half = 0.5 * beta::beta_reg(0.5, 0.5 * nu, z);
        if x > 0.0 {
            0.5 + half
        } else {
            0.5 - half
        }
    } else {
        let tail = 0.5 * beta::beta_reg(0.5 * nu, 0.5, nu / (nu + x2));
        if x > 0.0 {
            1.0 - tail
        } else {
            tail
        }
    }
}

/// Student-t quantile; p = 0 and p = 1 give ∓∞.
pub fn t_quantile(p: f64, nu: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, nu).expect("nu > 0");
    let mut x = dist.inverse_cdf(p);
    // two Newton polishing steps against our own cdf
    for _ in 0..2 {
        let f = t_cdf(x, nu) - p;
        let dens = t_pdf(x, nu);
        if dens > 0.0 && dens.is_finite() {
            let step = f / dens;
            if step.is_finite() {
                x -= step;
            }
        }
    }
    x
}

/// Student-t density.
pub fn t_pdf(x: f64, nu: f64) -> f64 {
    let ln_c = gamma::ln_gamma(0.5 * (nu + 1.0))
        - gamma::ln_gamma(0.5 * nu)
        - 0.5 * (nu * std::f64::consts::PI).ln();
    (ln_c - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()).exp()
}

/// Chi-square quantile with `nu` degrees of freedom.
pub fn chisq_quantile(p: f64, nu: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = ChiSquared::new(nu).expect("nu > 0").inverse_cdf(p);
    let k = 0.5 * nu;
    for _ in 0..3 {
        if !(x > 0.0 && x.is_finite()) {
            break;
        }
        let f = gamma::gamma_lr(k, 0.5 * x) - p;
        let dens = ((k - 1.0) * (0.5 * x).ln() - 0.5 * x - gamma::ln_gamma(k)).exp() * 0.5;
        if dens > 0.0 {
            let nx = x - f / dens;
            x = if nx > 0.0 { nx } else { 0.5 * x };
        }
    }
    x
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
pub(crate) struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    pub(crate) fn total(self) -> f64 {
        self.s + self.c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_reference_values() {
        assert!((norm_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert!((norm_cdf(1.96) - 0.975_002_104_851_780_1).abs() < 1e-15);
        assert_eq!(norm_cdf(f64::INFINITY), 1.0);
        assert_eq!(norm_cdf(f64::NEG_INFINITY), 0.0);
        for &p in &[1e-12, 0.01, 0.3, 0.5, 0.8, 0.999_999] {
            assert!((norm_cdf(norm_quantile(p)) - p).abs() < 1e-14 * p.max(1e-3) * 10.0);
        }
        // scipy.stats.norm.ppf
        assert!((norm_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-14);
        assert!((norm_quantile(1e-20) + 9.262_340_089_798_408).abs() < 1e-12);
        assert_eq!(norm_quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(norm_quantile(1.0), f64::INFINITY);
    }

    #[test]
    fn interval_uses_stable_tail() {
        let v = norm_interval(8.0, 9.0);
        assert!(v > 0.0 && (v - 6.219_831_985_865_787e-16).abs() < 1e-27);
    }

    #[test]
    fn student_t_reference_values() {
        // scipy.stats.t.cdf
        assert!((t_cdf(1.0, 1.0) - 0.75).abs() < 1e-14);
        assert!((t_cdf(-2.0, 4.0) - 0.058_058_261_758_407_7).abs() < 1e-13);
        assert!((t_cdf(0.3, 10.0) - 0.614_839_696_217_100_8).abs() < 1e-12);
        for &nu in &[1.0, 2.5, 4.0, 10.0, 30.0] {
            for &p in &[1e-6, 0.05, 0.3, 0.5, 0.9, 0.999] {
                let x = t_quantile(p, nu);
                assert!((t_cdf(x, nu) - p).abs() < 1e-12, "nu {nu} p {p}");
            }
        }
    }

    #[test]
    fn large_nu_t_approaches_normal() {
        for &x in &[-2.0, -0.5, 0.7, 1.5] {
            assert!((t_cdf(x, 1e6) - norm_cdf(x)).abs() < 1e-6);
        }
    }

    #[test]
    fn chisq_quantile_roundtrip() {
        use statrs::distribution::ContinuousCDF;
        let d = ChiSquared::new(4.0).unwrap();
        for &p in &[0.01, 0.5, 0.99] {
            assert!((d.cdf(chisq_quantile(p, 4.0)) - p).abs() < 1e-10);
        }
    }
}
