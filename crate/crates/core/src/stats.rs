//! Small numeric helpers: moments, Pearson correlation, fractional ranks and
//! the normal / chi-square distribution functions needed for significance
//! tests.

use alloc::vec;
use alloc::vec::Vec;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard deviation with divisor `n`.
///
/// Deviations are taken around the first element before the two-pass
/// formula, so constant input gives exactly 0.
pub fn population_std(xs: &[f64]) -> f64 {
    let Some(&origin) = xs.first() else {
        return f64::NAN;
    };
    let shifted: Vec<f64> = xs.iter().map(|x| x - origin).collect();
    let m = mean(&shifted);
    let ss: f64 = shifted.iter().map(|x| (x - m) * (x - m)).sum();
    libm::sqrt(ss / xs.len() as f64)
}

/// Pearson correlation, or `None` when either vector has (numerically) zero
/// variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let scale = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(libm::fabs(*a)));
    let tiny = |s: f64, v: &[f64]| {
        let t = 1e-12 * scale(v);
        s <= t * t * n as f64
    };
    if tiny(sxx, x) || tiny(syy, y) {
        return None;
    }
    let r = sxy / libm::sqrt(sxx * syy);
    Some(r.clamp(-1.0, 1.0))
}

/// 1-based ranks by descending value; tied values share the average of the
/// ranks they span.
pub fn descending_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// Two-sided p-value of a standard normal statistic.
pub fn normal_two_sided_p(z: f64) -> f64 {
    libm::erfc(libm::fabs(z) / core::f64::consts::SQRT_2)
}

/// Regularised lower incomplete gamma `P(a, x)`.
fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln_prefix = a * libm::log(x) - x - libm::lgamma(a);
    if x < a + 1.0 {
        // series
        let mut sum = 1.0 / a;
        let mut term = sum;
        let mut ap = a;
        for _ in 0..1000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if libm::fabs(term) < libm::fabs(sum) * 1e-16 {
                break;
            }
        }
        (sum * libm::exp(ln_prefix)).min(1.0)
    } else {
        // continued fraction (modified Lentz)
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if libm::fabs(d) < tiny {
                d = tiny;
            }
            c = b + an / c;
            if libm::fabs(c) < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if libm::fabs(delta - 1.0) < 1e-16 {
                break;
            }
        }
        (1.0 - libm::exp(ln_prefix) * h).max(0.0)
    }
}

/// Chi-square survival function `P(X > x)` with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    if df == 0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    1.0 - gamma_p(df as f64 / 2.0, x / 2.0)
}

/// Upper-tail critical value: the `x` with `chi2_sf(x, df) = alpha`.
pub fn chi2_critical(alpha: f64, df: usize) -> f64 {
    if df == 0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while chi2_sf(hi, df) > alpha {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_sf(mid, df) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
