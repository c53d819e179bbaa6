//! Small sample statistics used by the metrics and the test suites.

use crate::num::Scalar;

pub fn mean<F: Scalar>(xs: &[F]) -> Option<F> {
    if xs.is_empty() {
        return None;
    }
    let n = F::from_usize(xs.len())?;
    Some(xs.iter().fold(F::zero(), |acc, &x| acc + x) / n)
}

/// Unbiased sample variance.
pub fn variance<F: Scalar>(xs: &[F]) -> Option<F> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss = xs.iter().fold(F::zero(), |acc, &x| acc + (x - m) * (x - m));
    Some(ss / F::from_usize(xs.len() - 1)?)
}

/// Nearest-rank quantile, `q` in `[0, 1]`.
pub fn quantile<F: Scalar>(xs: &[F], q: F) -> Option<F> {
    if xs.is_empty() || q < F::zero() || q > F::one() {
        return None;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in quantile input"));
    let n = F::from_usize(sorted.len())?;
    let rank = (q * n).ceil().to_usize()?.max(1);
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// Pearson chi-squared statistic of `counts` against a uniform expectation.
pub fn chi_squared_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_moments() {
        let xs = [1.0f64, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), Some(2.5));
        assert!((variance(&xs).unwrap() - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(mean::<f64>(&[]), None);
        assert_eq!(variance(&[1.0f32]), None);
    }

    #[test]
    fn nearest_rank() {
        let xs: Vec<f64> = (1..=100).map(|x| x as f64).collect();
        assert_eq!(quantile(&xs, 0.99), Some(99.0));
        assert_eq!(quantile(&xs, 0.0), Some(1.0));
        assert_eq!(quantile(&xs, 1.0), Some(100.0));
    }

    #[test]
    fn chi_squared_of_flat_counts_is_zero() {
        assert_eq!(chi_squared_uniform(&[5, 5, 5]), 0.0);
    }
}
