use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-seed values with their mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    #[serde(default)]
    pub config_fingerprint: String,
}

pub fn aggregate_seeds(runs: &[f64]) -> Result<RunSummary> {
    if runs.is_empty() {
        return Err(Error::Argument("no runs to aggregate".into()));
    }
    let n = runs.len() as f64;
    let mean = runs.iter().sum::<f64>() / n;
    let std = if runs.len() > 1 {
        (runs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(RunSummary {
        per_seed: runs.to_vec(),
        mean,
        std,
        config_fingerprint: String::new(),
    })
}

/// Relative gain of `a` over baseline `b`, in percent.
pub fn pct_gain(a: f64, b: f64) -> Result<f64> {
    if b <= 0.0 {
        return Err(Error::Argument(format!("baseline {b} must be positive")));
    }
    Ok(100.0 * (a - b) / b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gains() {
        assert!((pct_gain(0.55, 0.50).unwrap() - 10.0).abs() < 1e-9);
        assert_eq!(pct_gain(0.5, 0.5).unwrap(), 0.0);
        assert!(pct_gain(0.5, 0.0).is_err());
    }

    #[test]
    fn mean_and_sample_std() {
        let s = aggregate_seeds(&[80.0, 82.0, 84.0]).unwrap();
        assert_eq!((s.mean, s.std), (82.0, 2.0));
        let one = aggregate_seeds(&[0.7]).unwrap();
        assert_eq!(one.std, 0.0);
        let permuted = aggregate_seeds(&[84.0, 80.0, 82.0]).unwrap();
        assert_eq!((permuted.mean, permuted.std), (s.mean, s.std));
    }
}
