//! Small statistics helpers: ECDFs, sample moments and the rank-sum test.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `(x, F(x))` at each distinct value, ascending; the last `F` is 1.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, &x) in v.iter().enumerate() {
        let f = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => out.push((x, f)),
        }
    }
    out
}

/// Right-continuous step function of an ECDF table.
pub fn ecdf_at(table: &[(f64, f64)], x: f64) -> f64 {
    match table.partition_point(|&(v, _)| v <= x) {
        0 => 0.0,
        k => table[k - 1].1,
    }
}

/// Mann–Whitney rank-sum test of `H1: a tends to be smaller than b`,
/// normal approximation with tie correction. Returns the one-sided
/// p-value.
pub fn rank_sum_less(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut all: Vec<(f64, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let mut rank_a = 0.0;
    let mut tie_term = 0.0;
    let mut k = 0;
    while k < n {
        let mut end = k;
        while end + 1 < n && all[end + 1].0 == all[k].0 {
            end += 1;
        }
        let avg = (k + end) as f64 / 2.0 + 1.0;
        let t = (end - k + 1) as f64;
        tie_term += t * t * t - t;
        rank_a += all[k..=end].iter().filter(|e| e.1).count() as f64 * avg;
        k = end + 1;
    }
    let u = rank_a - n1 * (n1 + 1.0) / 2.0;
    let mu = n1 * n2 / 2.0;
    let nt = n1 + n2;
    let var = n1 * n2 / 12.0 * ((nt + 1.0) - tie_term / (nt * (nt - 1.0)));
    if var <= 0.0 {
        return 0.5;
    }
    // Small U means a ranks low.
    let z = (u - mu + 0.5) / var.sqrt();
    Normal::standard().cdf(z)
}
