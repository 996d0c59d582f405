//! Bivariate normal orthant probabilities.
//!
//! Drezner–Wesolowsky with Gauss–Legendre quadrature of 6, 12 or 20 points
//! depending on |ρ|, and the asymptotic expansion for |ρ| ≥ 0.925, following
//! Genz (2004). Absolute accuracy is close to double precision.

use crate::special::norm_cdf;
use std::f64::consts::PI;

const W6: [f64; 3] = [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4];
const X6: [f64; 3] = [0.932_469_514_203_152_2, 0.661_209_386_466_264_7, 0.238_619_186_083_197_0];
const W12: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const X12: [f64; 6] = [
    0.981_560_634_246_719_1,
    0.904_117_256_370_475_0,
    0.769_902_674_194_305_0,
    0.587_317_954_286_617_1,
    0.367_831_498_998_180_2,
    0.125_233_408_511_469_2,
];
const W20: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];
const X20: [f64; 10] = [
    0.993_128_599_185_094_9,
    0.963_971_927_277_913_8,
    0.912_234_428_251_325_9,
    0.839_116_971_822_218_8,
    0.746_331_906_460_150_8,
    0.636_053_680_726_515_0,
    0.510_867_001_950_827_1,
    0.373_706_088_715_419_6,
    0.227_785_851_141_645_1,
    0.076_526_521_133_497_33,
];

/// Upper orthant P(X > h, Y > k) for a standard bivariate normal with correlation `r`.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { norm_cdf(-k) };
    }
    if k == f64::NEG_INFINITY {
        return norm_cdf(-h);
    }
    if r == 0.0 {
        return norm_cdf(-h) * norm_cdf(-k);
    }
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&W6, &X6)
    } else if r.abs() < 0.75 {
        (&W12, &X12)
    } else {
        (&W20, &X20)
    };
    let tp = 2.0 * PI;
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = 0.5 * r.asin();
        for (wi, xi) in w.iter().zip(x) {
            for node in [1.0 - xi, 1.0 + xi] {
                let sn = (asr * node).sin();
                bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        bvn = bvn * asr / tp + norm_cdf(-h) * norm_cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let a_s = 1.0 - r * r;
            let mut a = a_s.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 80.0;
            let asr = -0.5 * (bs / a_s + hk);
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0 + c * d * a_s * a_s);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                let sp = tp.sqrt() * norm_cdf(-b / a);
                bvn -= (-0.5 * hk).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
            }
            a *= 0.5;
            let mut sum = 0.0;
            for (wi, xi) in w.iter().zip(x) {
                for node in [1.0 - xi, 1.0 + xi] {
                    let xs = (a * node) * (a * node);
                    let asr = -0.5 * (bs / xs + hk);
                    if asr > -100.0 {
                        let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                        let rs = (1.0 - xs).sqrt();
                        let ep = (-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                        sum += wi * asr.exp() * (sp - ep);
                    }
                }
            }
            bvn = (a * sum - bvn) / tp;
        }
        if r > 0.0 {
            bvn += norm_cdf(-h.max(k));
        } else if h >= k {
            bvn = -bvn;
        } else {
            let l = if h < 0.0 {
                norm_cdf(k) - norm_cdf(h)
            } else {
                norm_cdf(-h) - norm_cdf(-k)
            };
            bvn = l - bvn;
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// Lower orthant P(X ≤ h, Y ≤ k).
#[inline]
pub fn bvn_lower(h: f64, k: f64, r: f64) -> f64 {
    bvn_upper(-h, -k, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;
    use crate::special::{norm_interval, norm_pdf};

    // P(X ≤ h, Y ≤ k) = ∫_{-∞}^{h} φ(x) Φ((k − ρx)/√(1−ρ²)) dx
    fn oracle(h: f64, k: f64, r: f64) -> f64 {
        let s = (1.0 - r * r).sqrt();
        let lo = -12.0f64;
        if h <= lo {
            return 0.0;
        }
        integrate(
            |x| norm_pdf(x) * norm_interval(f64::NEG_INFINITY, (k - r * x) / s),
            lo,
            h.min(12.0),
            1e-15,
        )
        .0
    }

    #[test]
    fn orthant_formula() {
        for &r in &[-0.99, -0.9, -0.5, -0.1, 0.0, 0.2, 0.5, 0.8, 0.95, 0.999] {
            let exact = 0.25 + f64::asin(r) / (2.0 * PI);
            assert!((bvn_lower(0.0, 0.0, r) - exact).abs() < 1e-14, "r = {r}");
        }
    }

    #[test]
    fn matches_conditional_integral() {
        let pts = [-3.1, -1.2, -0.3, 0.0, 0.4, 1.7, 2.9];
        for &r in &[-0.97, -0.6, -0.2, 0.25, 0.7, 0.93, 0.98] {
            for &h in &pts {
                for &k in &pts {
                    let a = bvn_lower(h, k, r);
                    let b = oracle(h, k, r);
                    assert!((a - b).abs() < 1e-12, "h {h} k {k} r {r}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn infinite_limits() {
        assert_eq!(bvn_lower(f64::INFINITY, f64::INFINITY, 0.5), 1.0);
        assert!((bvn_lower(0.3, f64::INFINITY, 0.5) - norm_cdf(0.3)).abs() < 1e-16);
        assert_eq!(bvn_lower(f64::NEG_INFINITY, 1.0, 0.5), 0.0);
    }
}
