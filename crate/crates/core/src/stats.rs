//! Small statistical helpers shared by the validation and randomness modules.

use statrs::function::{erf, gamma};

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    erf::erfc(x)
}

/// Upper regularized incomplete gamma function Q(a, x).
pub fn igamc(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma::gamma_ur(a, x)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper-tail probability of a chi-square statistic with `df` degrees of freedom.
pub fn chi_square_sf(stat: f64, df: f64) -> f64 {
    igamc(df / 2.0, stat / 2.0)
}

/// Kolmogorov survival function Q_KS(lambda).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = sign * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov-Smirnov test of `samples` against a continuous `cdf`.
///
/// The p-value uses the asymptotic Kolmogorov law with the usual
/// small-sample correction of the effective lambda.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> KsResult {
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    if n == 0 {
        return KsResult {
            statistic: 0.0,
            p_value: 1.0,
            n,
        };
    }
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / nf;
        let hi = (i + 1) as f64 / nf;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
        n,
    }
}

/// CDF of Beta(1, m-1), the marginal law of |U_ij|^2 for an m x m Haar unitary.
pub fn haar_moduli_cdf(m: usize, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        1.0 - (1.0 - x).powi(m as i32 - 1)
    }
}

/// Density (m-1)(1-x)^(m-2) of Beta(1, m-1).
pub fn haar_moduli_pdf(m: usize, x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    if m == 1 {
        return 0.0;
    }
    (m as f64 - 1.0) * (1.0 - x).powi(m as i32 - 2)
}

/// Pearson chi-square goodness of fit of `observed` counts against
/// `expected` probabilities. Returns (statistic, p-value).
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> (f64, f64) {
    let total: u64 = observed.iter().sum();
    let total = total as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(expected) {
        if p <= 0.0 {
            continue;
        }
        let e = p * total;
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    let df = cells.saturating_sub(1).max(1) as f64;
    (stat, chi_square_sf(stat, df))
}

/// Total variation distance between two discrete laws on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_reference_points() {
        // Critical value of the Kolmogorov law at 5%.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn igamc_matches_exponential_tail() {
        // Q(1, x) = e^-x
        for x in [0.1, 1.0, 3.5] {
            assert!((igamc(1.0, x) - (-x).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn haar_cdf_endpoints() {
        assert_eq!(haar_moduli_cdf(8, 0.0), 0.0);
        assert_eq!(haar_moduli_cdf(8, 1.0), 1.0);
        assert!((haar_moduli_cdf(2, 0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ks_accepts_uniform_grid() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_test(&xs, |x| x);
        assert!(r.statistic <= 0.0005 + 1e-12);
        assert!(r.p_value > 0.99);
    }
}
