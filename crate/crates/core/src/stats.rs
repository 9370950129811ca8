//! Small statistical toolbox: quantiles with order-statistic confidence
//! intervals, goodness-of-fit tests (Kolmogorov-Smirnov against an
//! exponential, chi-square uniformity), the Mann-Whitney two-sample rank
//! test, and least squares on log-log data.
//!
//! Everything is implemented from the classical formulas; no external
//! numerics are pulled in. P-values use asymptotic distributions, which is
//! appropriate at the sample sizes the campaigns produce (hundreds and up).

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    std_dev(xs) / (xs.len() as f64).sqrt()
}

/// Quantile with linear interpolation between order statistics: position
/// `(n-1) q` in the sorted sample, fractional part interpolated.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "empty sample");
    assert!((0.0..=1.0).contains(&q), "quantile out of range");
    let h = (sorted.len() as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Distribution-free confidence interval for the `q`-quantile from binomial
/// order statistics: the widest pair of order statistics whose coverage
/// reaches `conf`.
pub fn quantile_ci(sorted: &[f64], q: f64, conf: f64) -> (f64, f64) {
    let n = sorted.len();
    let alpha = (1.0 - conf) / 2.0;
    // largest l with P(Bin(n,q) < l) <= alpha
    let mut l = 0usize;
    let mut acc = 0.0;
    for k in 0..n {
        let next = acc + binom_pmf(n, k, q);
        if next <= alpha {
            acc = next;
            l = k + 1;
        } else {
            break;
        }
    }
    // smallest u with P(Bin(n,q) >= u) <= alpha
    let mut u = n;
    let mut tail = 0.0;
    for k in (0..n).rev() {
        let next = tail + binom_pmf(n, k, q);
        if next <= alpha {
            tail = next;
            u = k;
        } else {
            break;
        }
    }
    let lo = sorted[l.min(n - 1)];
    let hi = sorted[u.saturating_sub(1).min(n - 1).max(l.min(n - 1))];
    (lo.min(hi), hi.max(lo))
}

fn binom_pmf(n: usize, k: usize, p: f64) -> f64 {
    let ln = ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
        + k as f64 * p.ln()
        + (n - k) as f64 * (1.0 - p).ln();
    ln.exp()
}

/// Lanczos approximation of `ln Gamma(x)` for positive `x`.
pub fn ln_gamma(x: f64) -> f64 {
    const COF: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COF {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

/// Regularized upper incomplete gamma `Q(a, x)` via the series / continued
/// fraction split.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_contfrac(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-14 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_contfrac(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-14 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Survival function of the chi-square distribution with `k` degrees of
/// freedom.
pub fn chi2_sf(stat: f64, k: usize) -> f64 {
    gamma_q(k as f64 / 2.0, stat / 2.0)
}

/// Complementary error function (Abramowitz-Stegun 7.1.26, |err| < 1.5e-7).
pub fn erfc(x: f64) -> f64 {
    let ax = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * ax);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let e = poly * (-ax * ax).exp();
    if x >= 0.0 {
        e
    } else {
        2.0 - e
    }
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Asymptotic Kolmogorov distribution tail `Q(lambda)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test of `samples` against the exponential
/// distribution with the given rate. Returns the approximate p-value.
pub fn ks_exponential_p(samples: &[f64], rate: f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = 1.0 - (-rate * x).exp();
        let hi = (i as f64 + 1.0) / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    let sqn = n.sqrt();
    kolmogorov_q((sqn + 0.12 + 0.11 / sqn) * d)
}

/// Chi-square uniformity test over observed category counts.
pub fn chi2_uniform_p(counts: &[u64]) -> f64 {
    let k = counts.len();
    assert!(k >= 2);
    let total: u64 = counts.iter().sum();
    let expect = total as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expect).powi(2) / expect)
        .sum();
    chi2_sf(stat, k - 1)
}

/// Two-sided Mann-Whitney rank test p-value (normal approximation with
/// midranks and tie correction).
pub fn mann_whitney_p(a: &[f64], b: &[f64]) -> f64 {
    let n1 = a.len();
    let n2 = b.len();
    assert!(n1 > 0 && n2 > 0);
    let mut all: Vec<(f64, usize)> = a
        .iter()
        .map(|&x| (x, 0usize))
        .chain(b.iter().map(|&x| (x, 1usize)))
        .collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let mut ranks = vec![0.0f64; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        let t = (j - i + 1) as f64;
        if t > 1.0 {
            tie_term += t * t * t - t;
        }
        for r in ranks.iter_mut().take(j + 1).skip(i) {
            *r = avg_rank;
        }
        i = j + 1;
    }
    let r1: f64 = all
        .iter()
        .zip(&ranks)
        .filter(|((_, g), _)| *g == 0)
        .map(|(_, &r)| r)
        .sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let mu = (n1 * n2) as f64 / 2.0;
    let nf = n as f64;
    let sigma2 = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if sigma2 <= 0.0 {
        return 1.0;
    }
    let z = (u1 - mu).abs() - 0.5;
    let z = z.max(0.0) / sigma2.sqrt();
    (2.0 * (1.0 - normal_cdf(z))).clamp(0.0, 1.0)
}

/// Ordinary least squares of `y` on `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinFit {
    pub slope: f64,
    pub intercept: f64,
    pub se_slope: f64,
    pub se_intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::InsufficientData(
            "linear fit needs >= 2 paired points".into(),
        ));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput(
            "degenerate design: all abscissae equal".into(),
        ));
    }
    let sxy: f64 = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(u, v)| (v - (intercept + slope * u)).powi(2))
        .sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let (se_slope, se_intercept) = if n > 2 {
        let s2 = sse / (n as f64 - 2.0);
        (
            (s2 / sxx).sqrt(),
            (s2 * (1.0 / n as f64 + mx * mx / sxx)).sqrt(),
        )
    } else {
        (0.0, 0.0)
    };
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinFit {
        slope,
        intercept,
        se_slope,
        se_intercept,
        r2,
    })
}

/// OLS with two regressors: `y = b0 + b1 x1 + b2 x2`. Returns the
/// coefficients and their standard errors.
pub fn two_var_fit(x1: &[f64], x2: &[f64], y: &[f64]) -> Result<([f64; 3], [f64; 3])> {
    let n = y.len();
    if x1.len() != n || x2.len() != n || n < 4 {
        return Err(Error::InsufficientData(
            "two-regressor fit needs >= 4 points".into(),
        ));
    }
    // normal equations (X^T X) b = X^T y for X = [1, x1, x2]
    let mut xtx = [[0.0f64; 3]; 3];
    let mut xty = [0.0f64; 3];
    for i in 0..n {
        let row = [1.0, x1[i], x2[i]];
        for a in 0..3 {
            for b in 0..3 {
                xtx[a][b] += row[a] * row[b];
            }
            xty[a] += row[a] * y[i];
        }
    }
    let inv = invert3(&xtx)
        .ok_or_else(|| Error::InvalidInput("degenerate design in two-regressor fit".into()))?;
    let mut beta = [0.0f64; 3];
    for a in 0..3 {
        for b in 0..3 {
            beta[a] += inv[a][b] * xty[b];
        }
    }
    let sse: f64 = (0..n)
        .map(|i| {
            let pred = beta[0] + beta[1] * x1[i] + beta[2] * x2[i];
            (y[i] - pred).powi(2)
        })
        .sum();
    let s2 = sse / (n as f64 - 3.0);
    let se = [0, 1, 2].map(|a| (s2 * inv[a][a]).max(0.0).sqrt());
    Ok((beta, se))
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-12 {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut inv = [[0.0f64; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let (r1, r2) = match r {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let (c1, c2) = match c {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let minor = m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            inv[c][r] = sign * minor * inv_det;
        }
    }
    Some(inv)
}

/// Two-sided 97.5% Student-t critical value (95% two-sided interval).
pub fn t_crit_95(dof: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
        2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
        2.052, 2.048, 2.045, 2.042,
    ];
    if dof == 0 {
        f64::INFINITY
    } else if dof <= TABLE.len() {
        TABLE[dof - 1]
    } else {
        1.96
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::SplitMix64;

    #[test]
    fn percentile_interpolation_convention() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.75), 3.25);
        assert_eq!(percentile(&[5.0, 5.0, 5.0], 0.75), 5.0);
        assert_eq!(percentile(&[2.0], 0.75), 2.0);
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.0), 1.0);
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 1.0), 4.0);
    }

    #[test]
    fn quantile_ci_brackets_estimate() {
        let xs: Vec<f64> = (1..=200).map(|i| i as f64).collect();
        let est = percentile(&xs, 0.75);
        let (lo, hi) = quantile_ci(&xs, 0.75, 0.95);
        assert!(lo <= est && est <= hi);
        assert!(
            lo > 120.0 && hi < 180.0,
            "interval ({lo}, {hi}) implausibly wide"
        );
    }

    #[test]
    fn gamma_q_known_values() {
        // Q(1/2, x) = erfc(sqrt(x))
        for x in [0.1, 0.5, 1.0, 2.5] {
            assert!((gamma_q(0.5, x) - erfc(x.sqrt())).abs() < 1e-6);
        }
        // Q(1, x) = exp(-x)
        for x in [0.3, 1.7, 4.0] {
            assert!((gamma_q(1.0, x) - (-x).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn chi2_sf_midpoint() {
        // median of chi2 with 2 dof is 2 ln 2
        let p = chi2_sf(2.0 * 2f64.ln(), 2);
        assert!((p - 0.5).abs() < 1e-9);
    }

    #[test]
    fn ks_accepts_true_exponential() {
        let mut rng = SplitMix64::new(2024);
        let xs: Vec<f64> = (0..5000).map(|_| rng.next_exp(3.0)).collect();
        assert!(ks_exponential_p(&xs, 3.0) > 0.001);
        // grossly wrong rate is rejected
        assert!(ks_exponential_p(&xs, 6.0) < 1e-6);
    }

    #[test]
    fn chi2_accepts_uniform_counts() {
        let mut rng = SplitMix64::new(7);
        let mut counts = [0u64; 16];
        for _ in 0..160_000 {
            counts[rng.next_index(16) as usize] += 1;
        }
        assert!(chi2_uniform_p(&counts) > 0.001);
        let skewed = [100u64, 100, 100, 400];
        assert!(chi2_uniform_p(&skewed) < 1e-6);
    }

    #[test]
    fn mann_whitney_same_distribution() {
        let mut rng = SplitMix64::new(99);
        let a: Vec<f64> = (0..400).map(|_| rng.next_exp(1.0)).collect();
        let b: Vec<f64> = (0..400).map(|_| rng.next_exp(1.0)).collect();
        assert!(mann_whitney_p(&a, &b) > 0.001);
        let shifted: Vec<f64> = a.iter().map(|x| x + 1.0).collect();
        assert!(mann_whitney_p(&a, &shifted) < 1e-6);
    }

    #[test]
    fn linear_fit_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let fit = linear_fit(&x, &y).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        assert!(fit.se_slope < 1e-9);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn two_var_fit_recovers_plane() {
        let x1 = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let x2 = [0.5, 0.1, 0.9, 0.3, 0.7, 0.2];
        let y: Vec<f64> = x1
            .iter()
            .zip(&x2)
            .map(|(a, b)| 2.0 + 1.5 * a - 0.75 * b)
            .collect();
        let (beta, _se) = two_var_fit(&x1, &x2, &y).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-9);
        assert!((beta[1] - 1.5).abs() < 1e-9);
        assert!((beta[2] + 0.75).abs() < 1e-9);
    }
}
