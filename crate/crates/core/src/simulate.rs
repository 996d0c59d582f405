//! Exact sampler of the joint model by conditional inversion.

use crate::error::{Error, Result};
use crate::joint::{JointParams, LinkCopula};
use crate::markov::CdfMemo;
use crate::panel::{OrdinalPanel, Record, Subject};
use crate::rect::CorrelationMatrix;
use crate::special::{norm_cdf, t_cdf};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Covariate generator; draws are independent across subjects, times,
/// series and coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateGen {
    /// The same design for every subject: `design[t][j]` is the covariate
    /// vector of series j at time t + 1.
    Fixed { design: Vec<Vec<Vec<f64>>> },
    Normal,
    Bernoulli { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub times: usize,
    pub params: JointParams,
    pub covariates: CovariateGen,
    /// Draw one covariate vector per subject and time and give it to every
    /// series; all series must then share the same arity.
    #[serde(default)]
    pub shared_covariates: bool,
    pub seed: u64,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n == 0 || self.times == 0 {
            return Err(Error::invalid("simulation needs at least one subject and one time"));
        }
        if self.shared_covariates && self.params.series.windows(2).any(|w| w[0].marginal.p() != w[1].marginal.p()) {
            return Err(Error::invalid("shared covariates need equal covariate counts across series"));
        }
        match &self.covariates {
            CovariateGen::Fixed { design } => {
                if design.len() < self.times {
                    return Err(Error::invalid("fixed design has fewer rows than times"));
                }
                for row in design {
                    if row.len() != self.params.d() {
                        return Err(Error::invalid("fixed design row does not have one vector per series"));
                    }
                    for (j, x) in row.iter().enumerate() {
                        if x.len() != self.params.series[j].marginal.p() {
                            return Err(Error::invalid(format!("fixed design has wrong arity for series {j}")));
                        }
                    }
                }
            }
            CovariateGen::Bernoulli { p } if !(0.0..=1.0).contains(p) => {
                return Err(Error::domain("Bernoulli covariate", *p, "0 <= p <= 1"));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Lower-triangular Cholesky factor, row-major.
struct Chol {
    d: usize,
    l: Vec<f64>,
}

impl Chol {
    fn new(corr: &CorrelationMatrix) -> Result<Self> {
        Ok(Chol { d: corr.dim(), l: corr.cholesky()? })
    }
}

fn draw_link<R: Rng + ?Sized>(chol: &Chol, link: &LinkCopula, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
    let d = chol.d;
    for v in z.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let scale = match *link {
        LinkCopula::Mvn => 1.0,
        LinkCopula::Mvt { nu } => {
            let w: f64 = ChiSquared::new(nu).expect("validated nu").sample(rng);
            (w / nu).sqrt()
        }
    };
    for i in 0..d {
        let x: f64 = (0..=i).map(|k| chol.l[i * d + k] * z[k]).sum();
        out[i] = match *link {
            LinkCopula::Mvn => norm_cdf(x),
            LinkCopula::Mvt { nu } => t_cdf(x / scale, nu),
        };
    }
}

/// One draw (U₁,…,U_d) of the link copula with correlation `corr`.
pub fn sample_link_copula_with<R: Rng + ?Sized>(corr: &CorrelationMatrix, link: &LinkCopula, rng: &mut R) -> Result<Vec<f64>> {
    link.validate()?;
    let chol = Chol::new(corr)?;
    let mut z = vec![0.0; chol.d];
    let mut u = vec![0.0; chol.d];
    draw_link(&chol, link, rng, &mut z, &mut u);
    Ok(u)
}

/// Deterministic single draw of the link copula for `seed`.
pub fn sample_link_copula(corr: &CorrelationMatrix, link: &LinkCopula, seed: u64) -> Result<Vec<f64>> {
    sample_link_copula_with(corr, link, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn draw_covariates<R: Rng + ?Sized>(gen: &CovariateGen, t: usize, arity: &[usize], rng: &mut R) -> Vec<Vec<f64>> {
    match gen {
        CovariateGen::Fixed { design } => design[t].clone(),
        CovariateGen::Normal => arity.iter().map(|&p| (0..p).map(|_| rng.sample(StandardNormal)).collect()).collect(),
        CovariateGen::Bernoulli { p } => {
            let b = Bernoulli::new(*p).expect("validated p");
            arity
                .iter()
                .map(|&q| (0..q).map(|_| if b.sample(rng) { 1.0 } else { 0.0 }).collect())
                .collect()
        }
    }
}

const CHUNK: usize = 1024;

/// Simulates a balanced panel at times 1..=T. Subject i draws from its own
/// ChaCha stream, so the panel does not depend on the thread count.
pub fn simulate_panel(design: &SimDesign) -> Result<OrdinalPanel> {
    design.validate()?;
    let jp = &design.params;
    let d = jp.d();
    let chol = Chol::new(&jp.corr)?;
    let arity: Vec<usize> = if design.shared_covariates {
        vec![jp.series[0].marginal.p()]
    } else {
        jp.series.iter().map(|s| s.marginal.p()).collect()
    };
    let starts: Vec<usize> = (0..design.n).step_by(CHUNK).collect();
    let chunks: Vec<Vec<Subject>> = starts
        .into_par_iter()
        .map(|start| {
            let mut memos: Vec<CdfMemo> = jp.series.iter().map(|s| CdfMemo::new(&s.temporal)).collect();
            let mut z = vec![0.0; d];
            let mut u = vec![0.0; d];
            (start..(start + CHUNK).min(design.n))
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
                    rng.set_stream(i as u64);
                    let mut records: Vec<Record> = Vec::with_capacity(design.times);
                    for t in 0..design.times {
                        let mut x = draw_covariates(&design.covariates, t, &arity, &mut rng);
                        if design.shared_covariates && !matches!(design.covariates, CovariateGen::Fixed { .. }) {
                            x = vec![x[0].clone(); d];
                        }
                        draw_link(&chol, &jp.link, &mut rng, &mut z, &mut u);
                        let prev = records.last();
                        let mut ys = Vec::with_capacity(d);
                        for (j, s) in jp.series.iter().enumerate() {
                            let k = s.marginal.k();
                            let p = prev.map(|r| (r.responses[j].expect("simulated"), r.covariates[j].as_slice()));
                            let mut y = k;
                            for c in 1..k {
                                let hi = match s.cond_interval(c, &x[j], p, &mut memos[j]) {
                                    Some((_, hi)) => hi,
                                    None => s.cond_interval(c, &x[j], None, &mut memos[j]).expect("marginal").1,
                                };
                                if u[j] <= hi {
                                    y = c;
                                    break;
                                }
                            }
                            ys.push(Some(y));
                        }
                        records.push(Record { time: t as i64 + 1, responses: ys, covariates: x });
                    }
                    Subject { id: (i + 1).to_string(), records }
                })
                .collect()
        })
        .collect();
    Ok(OrdinalPanel { d, subjects: chunks.into_iter().flatten().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::{BivCopulaFamily, BivCopulaSpec};
    use crate::marginal::{ordinal_pmf, Link, MarginalParams};
    use crate::markov::{transition_cdf, SeriesModel};

    fn model(fam: BivCopulaFamily, theta: f64) -> SeriesModel {
        SeriesModel::new(
            MarginalParams::new(vec![0.6], vec![-0.5, 0.3, 1.0], Link::Probit).unwrap(),
            BivCopulaSpec::new(fam, theta).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_margins() {
        let r = CorrelationMatrix::identity(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut v: Vec<f64> = (0..n).map(|_| sample_link_copula_with(&r, &LinkCopula::Mvn, &mut rng).unwrap()[1]).collect();
        v.sort_by(f64::total_cmp);
        let ks = v.iter().enumerate().fold(0.0f64, |m, (i, &x)| {
            m.max((x - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - x).abs())
        });
        // 1% critical value of the Kolmogorov statistic.
        assert!(ks < 1.628 / (n as f64).sqrt(), "{ks}");
    }

    #[test]
    fn t_link_has_tail_dependence() {
        let r = CorrelationMatrix::identity(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        let (mut ct, mut cn) = (0, 0);
        for _ in 0..n {
            let a = sample_link_copula_with(&r, &LinkCopula::Mvt { nu: 4.0 }, &mut rng).unwrap();
            ct += (a[0] < 0.01 && a[1] < 0.01) as usize;
            let b = sample_link_copula_with(&r, &LinkCopula::Mvn, &mut rng).unwrap();
            cn += (b[0] < 0.01 && b[1] < 0.01) as usize;
        }
        // Independence gives 1e-4, i.e. 100 expected joint exceedances.
        assert!(ct as f64 > 100.0 + 4.0 * 10.0, "{ct}");
        assert!((cn as f64 - 100.0).abs() < 4.0 * 10.0, "{cn}");
    }

    #[test]
    fn seeded_draws_repeat() {
        let r = CorrelationMatrix::exchangeable(3, 0.3).unwrap();
        let l = LinkCopula::Mvt { nu: 5.0 };
        assert_eq!(sample_link_copula(&r, &l, 9).unwrap(), sample_link_copula(&r, &l, 9).unwrap());
    }

    fn design(fam: BivCopulaFamily, theta: f64, n: usize, seed: u64) -> SimDesign {
        SimDesign {
            n,
            times: 3,
            params: JointParams::new(
                vec![model(fam, theta), model(BivCopulaFamily::Frank, 3.0)],
                CorrelationMatrix::exchangeable(2, 0.4).unwrap(),
                LinkCopula::Mvn,
            )
            .unwrap(),
            covariates: CovariateGen::Bernoulli { p: 0.5 },
            shared_covariates: false,
            seed,
        }
    }

    #[test]
    fn deterministic_and_chunk_independent() {
        let a = simulate_panel(&design(BivCopulaFamily::Gumbel, 2.0, 2500, 7)).unwrap();
        let b = simulate_panel(&design(BivCopulaFamily::Gumbel, 2.0, 2500, 7)).unwrap();
        assert_eq!(a, b);
        let c = simulate_panel(&design(BivCopulaFamily::Gumbel, 2.0, 3, 7)).unwrap();
        assert_eq!(&a.subjects[..3], &c.subjects[..]);
        assert_ne!(a, simulate_panel(&design(BivCopulaFamily::Gumbel, 2.0, 2500, 8)).unwrap());
    }

    #[test]
    fn shared_covariates_repeat_across_series() {
        let mut d = design(BivCopulaFamily::Gumbel, 2.0, 50, 7);
        d.shared_covariates = true;
        let p = simulate_panel(&d).unwrap();
        assert!(p.subjects.iter().flat_map(|s| &s.records).all(|r| r.covariates[0] == r.covariates[1]));
    }

    #[test]
    fn independence_margins() {
        let mut d = design(BivCopulaFamily::Independence, 0.0, 40_000, 3);
        d.params.corr = CorrelationMatrix::identity(2);
        d.covariates = CovariateGen::Fixed { design: vec![vec![vec![0.5], vec![0.5]]; 3] };
        let p = simulate_panel(&d).unwrap();
        let counts = p.category_counts(0, 4);
        let n = p.n_records() as f64;
        for (c, &cnt) in counts.iter().enumerate() {
            let q = ordinal_pmf(&d.params.series[0].marginal, c as u32 + 1, &[0.5]).unwrap();
            let se = (q * (1.0 - q) / n).sqrt();
            assert!((cnt as f64 / n - q).abs() < 4.0 * se, "{c} {} {q}", cnt as f64 / n);
        }
    }

    #[test]
    fn transitions_follow_conditional_cdf() {
        let d = design(BivCopulaFamily::Gumbel, 2.5, 60_000, 11);
        let p = simulate_panel(&d).unwrap();
        let s = &d.params.series[0];
        // Condition on y_prev = 2 with both covariates equal to 1.
        let mut hits = [0usize; 4];
        for sub in &p.subjects {
            for w in sub.records.windows(2) {
                if w[0].responses[0] == Some(2) && w[0].covariates[0][0] == 1.0 && w[1].covariates[0][0] == 1.0 {
                    hits[w[1].responses[0].unwrap() as usize - 1] += 1;
                }
            }
        }
        let tot: usize = hits.iter().sum();
        let mut cum = 0;
        for y in 1..4u32 {
            cum += hits[y as usize - 1];
            let f = transition_cdf(s, y, 2, &[1.0], &[1.0]).unwrap();
            let se = (f * (1.0 - f) / tot as f64).sqrt();
            assert!((cum as f64 / tot as f64 - f).abs() < 4.0 * se, "{y}");
        }
    }
}
