//! Summary statistics and the Wilcoxon rank-sum test used to compare
//! policies across seeds.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean, from the unbiased sample variance.
/// Zero for fewer than two values.
pub fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Mann-Whitney `U` counting pairs with `a_i < b_j`, ties counting one half.
fn u_statistic(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .map(|&x| {
            b.iter()
                .map(|&y| {
                    if x < y {
                        1.0
                    } else if x == y {
                        0.5
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
        })
        .sum()
}

/// Exact upper tail `P(U ≥ u)` of the null distribution without ties.
fn exact_upper_tail(n1: usize, n2: usize, u: usize) -> f64 {
    // counts[j][v]: arrangements of n1' a's and j b's with U = v, built up
    // over n1' by adding the largest element as either an a or a b
    let max_u = n1 * n2;
    let mut prev: Vec<Vec<f64>> = (0..=n2).map(|_| vec![0.0; max_u + 1]).collect();
    for row in prev.iter_mut() {
        row[0] = 1.0;
    }
    for i in 1..=n1 {
        let mut cur: Vec<Vec<f64>> = (0..=n2).map(|_| vec![0.0; max_u + 1]).collect();
        cur[0][0] = 1.0;
        for j in 1..=n2 {
            for v in 0..=i * j {
                // largest is an a: contributes no pairs
                let mut c = prev[j][v];
                // largest is a b: it exceeds all i a's
                if v >= i {
                    c += cur[j - 1][v - i];
                }
                cur[j][v] = c;
            }
        }
        prev = cur;
    }
    let dist = &prev[n2];
    let total: f64 = dist.iter().sum();
    dist[u.min(max_u)..].iter().sum::<f64>() / total
}

/// One-sided Wilcoxon rank-sum p-value for the alternative that values in
/// `a` tend to be smaller than values in `b`.
///
/// Exact for untied samples with `n1 · n2 ≤ 2500`; otherwise the normal
/// approximation with tie and continuity corrections.
pub fn rank_sum_less(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return 1.0;
    }
    let u = u_statistic(a, b);
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1] == pooled[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    if tie_term == 0.0 && n1 * n2 <= 2500 {
        return exact_upper_tail(n1, n2, u as usize);
    }
    let (f1, f2) = (n1 as f64, n2 as f64);
    let n = f1 + f2;
    let mean_u = f1 * f2 / 2.0;
    let var_u = f1 * f2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var_u <= 0.0 {
        return 1.0;
    }
    let z = (u - mean_u - 0.5) / var_u.sqrt();
    let normal = Normal::standard();
    1.0 - normal.cdf(z)
}
