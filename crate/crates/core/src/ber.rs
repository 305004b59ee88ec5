//! Bit-error-rate measurement records shared by the model-based and learned
//! pipelines.

/// One measured operating point of a BER sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub snr_db: f64,
    pub sigma_e: f64,
    pub n_bits: u64,
    pub n_errors: u64,
    /// Wall-clock time spent producing this point, in milliseconds.
    pub wall_time_ms: f64,
}

impl BerPoint {
    pub fn ber(&self) -> f64 {
        if self.n_bits == 0 {
            0.0
        } else {
            self.n_errors as f64 / self.n_bits as f64
        }
    }

    /// Wilson 95% confidence interval for the error probability.
    pub fn wilson_interval_95(&self) -> (f64, f64) {
        wilson_interval(self.n_errors, self.n_bits, 1.96)
    }

    /// Half-width of the Wilson 95% interval.
    pub fn wilson_halfwidth_95(&self) -> f64 {
        let (lo, hi) = self.wilson_interval_95();
        0.5 * (hi - lo)
    }

    /// Fewer than 100 errors makes the point statistically shaky; sweeps flag
    /// such rows in their output.
    pub fn low_error_count(&self) -> bool {
        self.n_errors < 100
    }
}

/// Wilson score interval for `k` successes out of `n` at critical value `z`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ber_and_bounds() {
        let p = BerPoint { snr_db: 5.0, sigma_e: 0.0, n_bits: 1000, n_errors: 10, wall_time_ms: 1.0 };
        assert!((p.ber() - 0.01).abs() < 1e-15);
        let (lo, hi) = p.wilson_interval_95();
        assert!(lo > 0.0 && lo < 0.01 && hi > 0.01 && hi < 0.03);
        assert!(p.low_error_count());
    }

    #[test]
    fn wilson_interval_zero_errors_still_positive_width() {
        let (lo, hi) = wilson_interval(0, 1_000_000, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 1e-5);
    }

    #[test]
    fn wilson_interval_never_leaves_unit_range() {
        let (lo, hi) = wilson_interval(999_999, 1_000_000, 1.96);
        assert!(lo > 0.99 && hi <= 1.0);
    }
}
