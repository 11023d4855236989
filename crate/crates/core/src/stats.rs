//! Binomial confidence intervals.

use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{domain, Result};

/// Exact (Clopper–Pearson) two-sided interval for `successes` out of `trials`
/// at the given confidence level.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return domain(format!(
            "need 0 <= successes <= trials, trials > 0; got {successes}/{trials}"
        ));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return domain(format!("confidence must be in (0, 1), got {confidence}"));
    }
    let alpha = 1.0 - confidence;
    let (k, n) = (successes as f64, trials as f64);
    let low = if successes == 0 {
        0.0
    } else if successes == trials {
        (alpha / 2.0).powf(1.0 / n)
    } else {
        beta_quantile(k, n - k + 1.0, alpha / 2.0)
    };
    let high = if successes == trials {
        1.0
    } else if successes == 0 {
        1.0 - (alpha / 2.0).powf(1.0 / n)
    } else {
        beta_quantile(k + 1.0, n - k, 1.0 - alpha / 2.0)
    };
    Ok((low, high))
}

fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    Beta::new(a, b).expect("positive shapes").inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_successes_closed_form() {
        let (lo, hi) = clopper_pearson(0, 1000, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        assert_relative_eq!(hi, 0.003682083896865672, max_relative = 1e-9);
        let (_, hi) = clopper_pearson(0, 500, 0.95).unwrap();
        assert_relative_eq!(hi, 0.007350610051907784, max_relative = 1e-9);
    }

    #[test]
    fn interior_matches_reference_quantiles() {
        let (lo, hi) = clopper_pearson(5, 100, 0.95).unwrap();
        assert_relative_eq!(lo, 0.016431879182052155, max_relative = 1e-7);
        assert_relative_eq!(hi, 0.11283491110546275, max_relative = 1e-7);
    }

    #[test]
    fn all_successes_mirror_zero() {
        let (lo, hi) = clopper_pearson(40, 40, 0.95).unwrap();
        let (lo0, hi0) = clopper_pearson(0, 40, 0.95).unwrap();
        assert_relative_eq!(lo, 1.0 - hi0, epsilon = 1e-15);
        assert_eq!(hi, 1.0 - lo0);
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(clopper_pearson(3, 2, 0.95).is_err());
        assert!(clopper_pearson(0, 0, 0.95).is_err());
        assert!(clopper_pearson(1, 2, 1.0).is_err());
    }
}
