use crate::error::{Error, Result};

/// Whitening statistics, fitted on the training split only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mu: f64,
    pub sigma: f64,
}

impl NormStats {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(Error::Config(format!(
                "invalid normalisation stats mu={mu} sigma={sigma}"
            )));
        }
        Ok(NormStats { mu, sigma })
    }

    /// Mean and population standard deviation of `values`.
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config(
                "cannot fit normalisation on an empty split".into(),
            ));
        }
        let n = values.len() as f64;
        let mu = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
        let sigma = var.sqrt();
        if sigma <= 0.0 {
            return Err(Error::Config(
                "training split is constant; sigma is zero".into(),
            ));
        }
        NormStats::new(mu, sigma)
    }

    pub fn normalize(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| (v - self.mu) / self.sigma).collect()
    }

    pub fn denormalize(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| v * self.sigma + self.mu).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let s = NormStats::new(2.0, 1.0).unwrap();
        assert_eq!(s.normalize(&[1.0, 2.0, 3.0]), vec![-1.0, 0.0, 1.0]);
        let fitted = NormStats::fit(&[2.0, 2.0, 4.0, 4.0]).unwrap();
        assert_eq!(
            fitted,
            NormStats {
                mu: 3.0,
                sigma: 1.0
            }
        );
    }

    #[test]
    fn degenerate_sigma_is_rejected() {
        assert!(matches!(NormStats::new(0.0, 0.0), Err(Error::Config(_))));
        assert!(matches!(NormStats::new(0.0, -1.0), Err(Error::Config(_))));
        assert!(matches!(NormStats::fit(&[5.0; 4]), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn round_trip(
            xs in proptest::collection::vec(-1e4f64..1e4, 1..50),
            mu in -100.0f64..100.0,
            sigma in 0.1f64..1e3,
        ) {
            let s = NormStats::new(mu, sigma).unwrap();
            let back = s.denormalize(&s.normalize(&xs));
            for (a, b) in xs.iter().zip(back) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
