//! Mass-weighted order statistics for the diagnostic reports.

use crate::scalar::{ordered_sum, Scalar};

/// Smallest value `v` such that the weight of `{x ≤ v}` is at least `q` of the total.
/// Returns zero for empty or weightless input.
pub fn weighted_quantile<T: Scalar>(values: &[T], weights: &[T], q: T) -> T {
    let mut pairs: Vec<(T, T)> = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > T::zero())
        .map(|(v, w)| (*v, *w))
        .collect();
    if pairs.is_empty() {
        return T::zero();
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let total = ordered_sum(pairs.iter().map(|p| p.1));
    let target = q * total;
    let mut acc = T::zero();
    for &(v, w) in &pairs {
        acc += w;
        if acc >= target {
            return v;
        }
    }
    pairs[pairs.len() - 1].0
}

/// Median, 95th percentile and maximum of a weighted sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuantileSummary<T> {
    pub median: T,
    pub p95: T,
    pub max: T,
}

impl<T: Scalar> QuantileSummary<T> {
    pub fn of(values: &[T], weights: &[T]) -> Self {
        QuantileSummary {
            median: weighted_quantile(values, weights, T::lit(0.5)),
            p95: weighted_quantile(values, weights, T::lit(0.95)),
            max: weighted_quantile(values, weights, T::one()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_respect_weights() {
        let v = [3.0, 1.0, 2.0, 10.0];
        let w = [1.0, 1.0, 1.0, 0.0];
        assert_eq!(weighted_quantile(&v, &w, 0.5), 2.0);
        assert_eq!(weighted_quantile(&v, &w, 1.0), 3.0);
        let heavy = [1.0, 1.0, 8.0, 0.0];
        assert_eq!(weighted_quantile(&v, &heavy, 0.5), 2.0);
        assert_eq!(weighted_quantile::<f64>(&[], &[], 0.5), 0.0);
    }
}
