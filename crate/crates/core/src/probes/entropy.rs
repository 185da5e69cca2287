use crate::error::{Error, Result};

/// Length-normalized negative log-likelihood of a generated sequence.
/// Higher means less certain.
pub fn pe_score(token_logprobs: &[f32]) -> Result<f64> {
    if token_logprobs.is_empty() {
        return Err(Error::Argument("no token log-probabilities".into()));
    }
    let sum: f64 = token_logprobs.iter().map(|&lp| f64::from(lp)).sum();
    Ok(-sum / token_logprobs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(pe_score(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        let half = (0.5f32).ln();
        assert!((pe_score(&[half; 7]).unwrap() - std::f64::consts::LN_2).abs() < 1e-6);
        let s = pe_score(&[(0.9f32).ln(), (0.1f32).ln()]).unwrap();
        assert!((s - 1.204).abs() < 1e-3);
        assert!(matches!(pe_score(&[]), Err(Error::Argument(_))));
    }
}
