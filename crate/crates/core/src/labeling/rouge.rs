use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RougeVariant {
    #[default]
    F1,
    Recall,
}

/// Lowercases, drops punctuation and splits on whitespace.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .to_lowercase();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

fn unigram_score(candidate: &[String], reference: &[String], variant: RougeVariant) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let c = counts(candidate);
    let r = counts(reference);
    let overlap: usize = c.iter().map(|(t, n)| (*n).min(r.get(t).copied().unwrap_or(0))).sum();
    if overlap == 0 {
        return 0.0;
    }
    let recall = overlap as f64 / reference.len() as f64;
    match variant {
        RougeVariant::Recall => recall,
        RougeVariant::F1 => {
            let precision = overlap as f64 / candidate.len() as f64;
            2.0 * precision * recall / (precision + recall)
        }
    }
}

/// Best unigram F1 of `candidate` against any of `references`.
pub fn rouge1(candidate: &str, references: &[impl AsRef<str>]) -> Result<f64> {
    rouge1_with(candidate, references, RougeVariant::F1)
}

pub fn rouge1_with(candidate: &str, references: &[impl AsRef<str>], variant: RougeVariant) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::Argument("rouge1 needs at least one reference".into()));
    }
    let cand = normalize_tokens(candidate);
    Ok(references
        .iter()
        .map(|r| unigram_score(&cand, &normalize_tokens(r.as_ref()), variant))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_examples() {
        assert_eq!(rouge1("paris", &["paris"]).unwrap(), 1.0);
        let s = rouge1("the city of paris", &["paris france"]).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge1("", &["x"]).unwrap(), 0.0);
        assert!(rouge1("x", &[] as &[&str]).is_err());
    }

    #[test]
    fn clipped_counts_and_recall_variant() {
        // candidate "a a a", reference "a b": overlap clipped to 1
        let f1 = rouge1("a a a", &["a b"]).unwrap();
        let (p, r) = (1.0 / 3.0, 0.5);
        assert!((f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
        let rec = rouge1_with("the city of paris", &["paris france"], RougeVariant::Recall).unwrap();
        assert!((rec - 0.5).abs() < 1e-12);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_tokens("Paris, France!"), vec!["paris", "france"]);
        assert_eq!(rouge1("PARIS.", &["paris"]).unwrap(), 1.0);
    }
}
