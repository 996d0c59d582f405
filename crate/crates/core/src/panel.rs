//! Long-format ordinal panel: subjects observed at integer times, each
//! record carrying d ordinal responses and one covariate vector per response.

use crate::error::{Error, ObsId, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub time: i64,
    /// Category in 1..=K per response; `None` when missing.
    pub responses: Vec<Option<u32>>,
    /// One covariate vector per response.
    pub covariates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub records: Vec<Record>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalPanel {
    pub d: usize,
    pub subjects: Vec<Subject>,
}

impl OrdinalPanel {
    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_records(&self) -> usize {
        self.subjects.iter().map(|s| s.records.len()).sum()
    }

    /// Checks time ordering, response arity and category ranges. `ks[j]` is
    /// the number of categories of response j, `ps[j]` its covariate count.
    pub fn validate(&self, ks: &[u32], ps: &[usize]) -> Result<()> {
        if ks.len() != self.d || ps.len() != self.d {
            return Err(Error::invalid(format!(
                "model describes {} responses but the panel has {}",
                ks.len(),
                self.d
            )));
        }
        for (i, s) in self.subjects.iter().enumerate() {
            let mut prev: Option<i64> = None;
            for r in &s.records {
                let id = ObsId { subject: i, time: r.time, series: None };
                if let Some(p) = prev {
                    if r.time <= p {
                        return Err(Error::invalid(format!("times not strictly increasing at {id}")));
                    }
                }
                prev = Some(r.time);
                if r.responses.len() != self.d || r.covariates.len() != self.d {
                    return Err(Error::invalid(format!("wrong number of responses at {id}")));
                }
                for j in 0..self.d {
                    if let Some(y) = r.responses[j] {
                        if y < 1 || y > ks[j] {
                            return Err(Error::invalid(format!(
                                "category {y} outside 1..={} at subject {i}, time {}, series {j}",
                                ks[j], r.time
                            )));
                        }
                    }
                    if r.covariates[j].len() != ps[j] {
                        return Err(Error::invalid(format!(
                            "series {j} expects {} covariates, found {} at {id}",
                            ps[j],
                            r.covariates[j].len()
                        )));
                    }
                    if r.covariates[j].iter().any(|v| !v.is_finite()) {
                        return Err(Error::invalid(format!("non-finite covariate at {id}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks time ordering and response `j` alone against `k` categories and
    /// `p` covariates.
    pub fn validate_series(&self, j: usize, k: u32, p: usize) -> Result<()> {
        if j >= self.d {
            return Err(Error::invalid(format!("series {j} does not exist")));
        }
        for (i, s) in self.subjects.iter().enumerate() {
            let mut prev: Option<i64> = None;
            for r in &s.records {
                let id = ObsId { subject: i, time: r.time, series: Some(j) };
                if prev.is_some_and(|t| r.time <= t) {
                    return Err(Error::invalid(format!("times not strictly increasing at {id}")));
                }
                prev = Some(r.time);
                if r.responses.len() != self.d || r.covariates.len() != self.d {
                    return Err(Error::invalid(format!("wrong number of responses at {id}")));
                }
                if let Some(y) = r.responses[j] {
                    if y < 1 || y > k {
                        return Err(Error::invalid(format!("category {y} outside 1..={k} at {id}")));
                    }
                }
                if r.covariates[j].len() != p || r.covariates[j].iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("series {j} expects {p} finite covariates at {id}")));
                }
            }
        }
        Ok(())
    }

    /// Category counts of response `j` (index 0 ↔ category 1).
    pub fn category_counts(&self, j: usize, k: u32) -> Vec<usize> {
        let mut c = vec![0; k as usize];
        for s in &self.subjects {
            for r in &s.records {
                if let Some(y) = r.responses[j] {
                    if (1..=k).contains(&y) {
                        c[(y - 1) as usize] += 1;
                    }
                }
            }
        }
        c
    }

    /// Panel restricted to the given subjects, in the given order.
    pub fn select(&self, idx: impl IntoIterator<Item = usize>) -> OrdinalPanel {
        OrdinalPanel {
            d: self.d,
            subjects: idx.into_iter().map(|i| self.subjects[i].clone()).collect(),
        }
    }
}

/// One observation of series j together with the previous observation of
/// the same series when the two are consecutive in time.
#[derive(Debug, Clone, Copy)]
pub struct SeriesObs<'a> {
    pub time: i64,
    pub y: u32,
    pub x: &'a [f64],
    pub prev: Option<(u32, &'a [f64])>,
}

impl Subject {
    /// Observations of series `j` in time order. A missing value or a jump
    /// in time restarts the chain.
    pub fn series(&self, j: usize) -> impl Iterator<Item = SeriesObs<'_>> {
        let mut last: Option<(i64, u32, &[f64])> = None;
        self.records.iter().filter_map(move |r| {
            let cur = r.responses[j].map(|y| (r.time, y, r.covariates[j].as_slice()));
            let prev = match (last, cur) {
                (Some((t0, y0, x0)), Some((t, _, _))) if t == t0 + 1 => Some((y0, x0)),
                _ => None,
            };
            last = cur;
            cur.map(|(time, y, x)| SeriesObs { time, y, x, prev })
        })
    }

    /// Record indices with all responses observed, each paired with whether
    /// the preceding record is a complete observation at time − 1.
    pub fn complete_records(&self) -> Vec<(usize, bool)> {
        let mut out = Vec::new();
        let mut last: Option<i64> = None;
        for (k, r) in self.records.iter().enumerate() {
            if r.responses.iter().all(|y| y.is_some()) {
                let linked = matches!(last, Some(t0) if r.time == t0 + 1);
                out.push((k, linked));
                last = Some(r.time);
            } else {
                last = None;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(time: i64, y: &[Option<u32>]) -> Record {
        Record {
            time,
            responses: y.to_vec(),
            covariates: vec![vec![]; y.len()],
        }
    }

    #[test]
    fn series_view_restarts_after_gaps_and_missing() {
        let s = Subject {
            id: "a".into(),
            records: vec![
                rec(1, &[Some(1), Some(2)]),
                rec(2, &[Some(2), None]),
                rec(4, &[Some(1), Some(1)]),
                rec(5, &[Some(3), Some(2)]),
            ],
        };
        let a: Vec<_> = s.series(0).map(|o| (o.time, o.y, o.prev.map(|p| p.0))).collect();
        assert_eq!(a, vec![(1, 1, None), (2, 2, Some(1)), (4, 1, None), (5, 3, Some(1))]);
        let b: Vec<_> = s.series(1).map(|o| (o.time, o.prev.is_some())).collect();
        assert_eq!(b, vec![(1, false), (4, false), (5, true)]);
        assert_eq!(s.complete_records(), vec![(0, false), (2, false), (3, true)]);
    }

    #[test]
    fn validation() {
        let p = OrdinalPanel {
            d: 1,
            subjects: vec![Subject { id: "a".into(), records: vec![rec(1, &[Some(7)])] }],
        };
        let e = p.validate(&[6], &[0]).unwrap_err().to_string();
        assert!(e.contains("category 7"), "{e}");
        assert!(p.validate(&[7], &[0]).is_ok());
        let q = OrdinalPanel {
            d: 1,
            subjects: vec![Subject { id: "a".into(), records: vec![rec(2, &[Some(1)]), rec(2, &[Some(1)])] }],
        };
        assert!(q.validate(&[2], &[0]).is_err());
    }
}
