//! Randomly shifted rank-1 lattice rules.
//!
//! Generating vectors come from a component-by-component search on the
//! P₂ criterion with product weights 1/j². Points are periodized by the tent
//! transform and used in antithetic pairs. Vectors, shift sets and the
//! Student-t radial coordinates are cached process-wide, so repeated
//! likelihood evaluations reuse one fixed randomization.

use crate::error::{Error, Result};
use crate::special::chisq_quantile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Budget and randomization of the quasi-Monte Carlo rectangle engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct QmcConfig {
    pub seed: u64,
    pub shifts: usize,
    pub points_per_shift: usize,
    pub max_dim: usize,
    pub ordering: VariableOrder,
}

/// How rectangle coordinates are ordered before sequential conditioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VariableOrder {
    /// Ascending univariate interval probability; independent of the
    /// correlation matrix, so estimates are smooth in it.
    #[default]
    Marginal,
    /// Genz–Bretz: smallest conditional interval probability first.
    Conditional,
    /// As given.
    Natural,
}

impl Default for QmcConfig {
    fn default() -> Self {
        QmcConfig {
            seed: 20_240_601,
            shifts: 12,
            points_per_shift: 4096,
            max_dim: 16,
            ordering: VariableOrder::Marginal,
        }
    }
}

impl QmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shifts < 2 {
            return Err(Error::invalid("QMC shifts must be at least 2"));
        }
        if self.points_per_shift < 1 {
            return Err(Error::invalid("QMC points per shift must be positive"));
        }
        if self.max_dim < 1 {
            return Err(Error::invalid("QMC max_dim must be positive"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_budget(mut self, shifts: usize, points_per_shift: usize) -> Self {
        self.shifts = shifts;
        self.points_per_shift = points_per_shift;
        self
    }
}

/// Generating vector of an `n`-point rank-1 lattice in `dim` dimensions.
pub fn generating_vector(n: usize, dim: usize) -> Arc<Vec<u64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Vec<u64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(z) = cache.lock().unwrap().get(&(n, dim)) {
        return z.clone();
    }
    let z = Arc::new(cbc(n, dim));
    cache.lock().unwrap().insert((n, dim), z.clone());
    z
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn cbc(n: usize, dim: usize) -> Vec<u64> {
    if n == 1 {
        return vec![1; dim];
    }
    // ω(i/n) = 2π²·B₂(i/n)
    let omega: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            2.0 * PI * PI * (x * x - x + 1.0 / 6.0)
        })
        .collect();
    let candidates: Vec<usize> = (1..=n / 2).filter(|&c| gcd(c, n) == 1).collect();
    let mut prod = vec![1.0; n];
    let mut z = Vec::with_capacity(dim);
    for j in 0..dim {
        let gamma = 1.0 / ((j + 1) * (j + 1)) as f64;
        let mut best = (f64::INFINITY, 1usize);
        // every unit gives the same one-dimensional point set
        let pool: &[usize] = if j == 0 { &[1] } else { &candidates };
        for &c in pool {
            let mut s = 0.0;
            let mut idx = 0usize;
            for p in &prod {
                s += p * (1.0 + gamma * omega[idx]);
                idx += c;
                if idx >= n {
                    idx -= n;
                }
            }
            if s < best.0 {
                best = (s, c);
            }
        }
        let c = best.1;
        let mut idx = 0usize;
        for p in prod.iter_mut() {
            *p *= 1.0 + gamma * omega[idx];
            idx += c;
            if idx >= n {
                idx -= n;
            }
        }
        z.push(c as u64);
    }
    z
}

/// A fully specified randomized lattice: generating vector plus shift set.
#[derive(Debug)]
pub struct QmcPlan {
    pub n: usize,
    pub dim: usize,
    pub shifts: usize,
    z: Arc<Vec<u64>>,
    shift: Vec<f64>,
    radial: Mutex<HashMap<u64, Arc<Vec<f64>>>>,
}

impl QmcPlan {
    /// Returns the shared plan for `cfg`, building it on first use.
    pub fn get(cfg: &QmcConfig) -> Result<Arc<QmcPlan>> {
        cfg.validate()?;
        static PLANS: OnceLock<Mutex<HashMap<QmcConfig, Arc<QmcPlan>>>> = OnceLock::new();
        let plans = PLANS.get_or_init(Default::default);
        let key = QmcConfig { ordering: VariableOrder::default(), ..*cfg };
        if let Some(p) = plans.lock().unwrap().get(&key) {
            return Ok(p.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let shift = (0..cfg.shifts * cfg.max_dim).map(|_| rng.random::<f64>()).collect();
        let plan = Arc::new(QmcPlan {
            n: cfg.points_per_shift,
            dim: cfg.max_dim,
            shifts: cfg.shifts,
            z: generating_vector(cfg.points_per_shift, cfg.max_dim),
            shift,
            radial: Mutex::new(HashMap::new()),
        });
        plans.lock().unwrap().insert(key, plan.clone());
        Ok(plan)
    }

    /// Tent-transformed coordinate `j` of point `k` under shift `s`.
    #[inline]
    pub fn coord(&self, s: usize, k: usize, j: usize) -> f64 {
        let base = ((k as u64 * self.z[j]) % self.n as u64) as f64 / self.n as f64;
        let mut x = base + self.shift[s * self.dim + j];
        if x >= 1.0 {
            x -= 1.0;
        }
        (2.0 * x - 1.0).abs()
    }

    /// Radial scale √(χ²_ν⁻¹(w)/ν) for coordinate 0 of every point, stored
    /// as pairs (w, 1 − w) in point order, shift-major.
    pub fn radial(&self, nu: f64) -> Arc<Vec<f64>> {
        let key = nu.to_bits();
        if let Some(r) = self.radial.lock().unwrap().get(&key) {
            return r.clone();
        }
        let mut out = Vec::with_capacity(self.shifts * self.n * 2);
        for s in 0..self.shifts {
            for k in 0..self.n {
                let w = self.coord(s, k, 0);
                for u in [w, 1.0 - w] {
                    let r = (chisq_quantile(u, nu) / nu).sqrt();
                    out.push(r.clamp(1e-150, 1e150));
                }
            }
        }
        let out = Arc::new(out);
        self.radial.lock().unwrap().insert(key, out.clone());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generating_vector_is_extensible_in_dimension() {
        let a = cbc(64, 3);
        let b = cbc(64, 6);
        assert_eq!(&b[..3], &a[..]);
        assert_eq!(a[0], 1);
        assert!(b.iter().all(|&c| c % 2 == 1));
    }

    #[test]
    fn lattice_rule_integrates_smooth_periodic_functions() {
        // ∏ exp(1.3 x_j) over [0,1]^4
        let cfg = QmcConfig { seed: 3, shifts: 4, points_per_shift: 1024, max_dim: 4, ..Default::default() };
        let plan = QmcPlan::get(&cfg).unwrap();
        let mut total = 0.0;
        for s in 0..plan.shifts {
            let mut acc = 0.0;
            for k in 0..plan.n {
                let f: f64 = (0..4).map(|j| (plan.coord(s, k, j) * 1.3).exp()).product();
                acc += f;
            }
            total += acc / plan.n as f64;
        }
        let est = total / plan.shifts as f64;
        let exact = ((1.3f64.exp() - 1.0) / 1.3).powi(4);
        assert!((est - exact).abs() < 1e-4 * exact, "{est} vs {exact}");
    }

    #[test]
    fn plans_are_shared_and_seeded() {
        let cfg = QmcConfig { seed: 11, shifts: 2, points_per_shift: 16, max_dim: 2, ..Default::default() };
        let a = QmcPlan::get(&cfg).unwrap();
        let b = QmcPlan::get(&cfg).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let c = QmcPlan::get(&cfg.with_seed(12)).unwrap();
        assert_ne!(a.shift, c.shift);
        assert!(QmcPlan::get(&QmcConfig { shifts: 1, ..cfg }).is_err());
    }

    #[test]
    fn radial_pairs_have_unit_mean_square() {
        let cfg = QmcConfig { seed: 5, shifts: 2, points_per_shift: 512, max_dim: 2, ..Default::default() };
        let plan = QmcPlan::get(&cfg).unwrap();
        let r = plan.radial(5.0);
        let m: f64 = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
        assert!((m - 1.0).abs() < 1e-3);
    }
}
