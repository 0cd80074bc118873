//! Sample statistics shared by the experiments and the test suites.

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (divisor `len - 1`); zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean of a stationary, autocorrelated series
/// estimated from `batches` non-overlapping batch means.
pub fn batch_means_standard_error(xs: &[f64], batches: usize) -> f64 {
    assert!(batches >= 2 && xs.len() >= batches);
    let size = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(size).take(batches).map(mean).collect();
    (sample_variance(&means) / batches as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_uses_bessel_correction() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((sample_variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(sample_variance(&[7.0]), 0.0);
    }

    #[test]
    fn batch_means_of_iid_series() {
        let xs: Vec<f64> = (0..1000).map(|i| (i % 2) as f64).collect();
        // alternating series: every batch mean is exactly 1/2
        assert_eq!(batch_means_standard_error(&xs, 10), 0.0);
    }
}
