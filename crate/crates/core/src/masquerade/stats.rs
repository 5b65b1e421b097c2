//! Distribution-distance helpers used by tests and reports.

use super::FeePmf;

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "empty sample");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Largest CDF gap between an observed fee sample and a pmf, taken over the
/// union of both supports.
pub fn ks_against_pmf(samples: &[u64], pmf: &FeePmf) -> f64 {
    assert!(!samples.is_empty(), "empty sample");
    let mut s = samples.to_vec();
    s.sort_unstable();
    let n = s.len() as f64;
    let mut points: Vec<u64> = pmf.support.iter().copied().chain(s.iter().copied()).collect();
    points.sort_unstable();
    points.dedup();
    points
        .into_iter()
        .map(|x| {
            let emp = s.partition_point(|&v| v <= x) as f64 / n;
            (emp - pmf.cdf(x)).abs()
        })
        .fold(0.0, f64::max)
}
