//! Small descriptive statistics and a one-sample Kolmogorov-Smirnov test.

/// Nearest-rank quantile: the `ceil(q n)`-th smallest value (1-based).
///
/// `sorted` must be ascending and non-empty; `q` is clamped to `(0, 1]`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// KS statistic of a sample against U(0, 1).
pub fn ks_uniform_statistic(sample: &[f64]) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = v.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    // the series converges slowly below 0.2, where the tail is 1 to working precision
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * x * x).exp();
        s += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// p-value of the one-sample KS test against U(0, 1), using the
/// small-sample correction `(sqrt(n) + 0.12 + 0.11/sqrt(n)) D`.
pub fn ks_uniform_pvalue(sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    let d = ks_uniform_statistic(sample);
    let en = n.sqrt();
    kolmogorov_sf((en + 0.12 + 0.11 / en) * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn nearest_rank_examples() {
        let d: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&d, 0.02), 2.0);
        assert_eq!(nearest_rank(&d, 1.0), 100.0);
        assert_eq!(nearest_rank(&d, 0.001), 1.0);
        assert_eq!(nearest_rank(&d, 0.8), 80.0);
        assert_eq!(nearest_rank(&[3.0], 0.5), 3.0);
    }

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(variance(&[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(variance(&[4.0]), 0.0);
    }

    #[test]
    fn kolmogorov_reference_points() {
        // P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn ks_accepts_uniform_and_rejects_skew() {
        let mut rng = crate::seed::rng(1);
        let u: Vec<f64> = (0..5000).map(|_| rng.random()).collect();
        assert!(ks_uniform_pvalue(&u) > 0.01);
        let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
        assert!(ks_uniform_pvalue(&sq) < 1e-6);
        assert_eq!(ks_uniform_statistic(&[0.5]), 0.5);
    }
}
