//! Sample Kendall's tau with its asymptotic standard error.

use crate::error::{Error, Result};

/// Fenwick tree over ranks 0..n.
struct Fenwick(Vec<u32>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0; n + 1])
    }

    fn add(&mut self, i: usize) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks < i.
    fn below(&self, i: usize) -> u64 {
        let mut i = i;
        let mut s = 0u64;
        while i > 0 {
            s += self.0[i] as u64;
            i -= i & i.wrapping_neg();
        }
        s
    }
}

fn ranks(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0; v.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank;
    }
    r
}

/// Kendall's tau of continuous pairs and the standard error of its
/// U-statistic projection, 2·sd(hᵢ)/√n with hᵢ the concordance score of
/// observation i. Ties are assumed absent. O(n log n).
pub fn kendall_tau_se(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(Error::invalid("Kendall's tau needs at least three paired observations"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in Kendall's tau input"));
    }
    let ry = ranks(y);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut conc = vec![0u64; n];
    let mut fw = Fenwick::new(n);
    for &i in &order {
        conc[i] = fw.below(ry[i]);
        fw.add(ry[i]);
    }
    let mut fw = Fenwick::new(n);
    for (seen, &i) in order.iter().rev().enumerate() {
        let lower = fw.below(ry[i]);
        conc[i] += seen as u64 - lower;
        fw.add(ry[i]);
    }
    let m = (n - 1) as f64;
    let h: Vec<f64> = conc.iter().map(|&c| (2.0 * c as f64 - m) / m).collect();
    let tau = h.iter().sum::<f64>() / n as f64;
    let var = h.iter().map(|v| (v - tau).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((tau, 2.0 * (var / n as f64).sqrt()))
}
