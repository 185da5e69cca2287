use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::rouge::{rouge1_with, RougeVariant};

/// QA responses scoring at least this ROUGE-1 are non-hallucinations.
pub const QA_ROUGE_CUTOFF: f64 = 0.3;

pub const REFUSAL_PHRASES: [&str; 7] = [
    "don't know",
    "do not know",
    "don't have",
    "do not have",
    "can't",
    "cannot",
    "unable",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Qa,
    Cot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledResponse {
    pub response_text: String,
    pub gold_answers: Vec<String>,
    pub task_kind: TaskKind,
    pub label: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge1_score: Option<f64>,
    pub refusal: bool,
}

/// 0 (non-hallucination) iff ROUGE-1 against the golds reaches the cutoff.
pub fn label_qa(response: &str, golds: &[impl AsRef<str>]) -> Result<u8> {
    label_qa_with(response, golds, RougeVariant::F1).map(|(label, _)| label)
}

pub fn label_qa_with(response: &str, golds: &[impl AsRef<str>], variant: RougeVariant) -> Result<(u8, f64)> {
    let score = rouge1_with(response, golds, variant)?;
    Ok((u8::from(score < QA_ROUGE_CUTOFF), score))
}

/// The answer of the last "the answer is yes|no" in the response.
pub fn extract_cot_answer(response: &str) -> Option<bool> {
    const ANCHOR: &str = "the answer is ";
    let lower = response.to_lowercase();
    let mut answer = None;
    let mut from = 0;
    while let Some(pos) = lower[from..].find(ANCHOR) {
        let start = from + pos + ANCHOR.len();
        let word: String = lower[start..].chars().take_while(|c| c.is_alphanumeric()).collect();
        match word.as_str() {
            "yes" => answer = Some(true),
            "no" => answer = Some(false),
            _ => {}
        }
        from = start;
    }
    answer
}

/// 0 iff the extracted final answer equals `gold` ("yes"/"no"); a response
/// without a parseable answer is a hallucination.
pub fn label_cot(response: &str, gold: &str) -> Result<u8> {
    let gold = match gold.trim().to_lowercase().as_str() {
        "yes" => true,
        "no" => false,
        other => return Err(Error::Argument(format!("COT gold must be yes/no, got `{other}`"))),
    };
    Ok(match extract_cot_answer(response) {
        Some(a) if a == gold => 0,
        _ => 1,
    })
}

pub fn is_refusal(response: &str) -> bool {
    let lower = response.to_lowercase().replace('\u{2019}', "'");
    REFUSAL_PHRASES.iter().any(|p| lower.contains(p))
}

/// Labels one response according to its task kind.
pub fn label_response(response: &str, golds: &[String], kind: TaskKind, variant: RougeVariant) -> Result<LabeledResponse> {
    let (label, rouge1_score) = match kind {
        TaskKind::Qa => {
            let (l, s) = label_qa_with(response, golds, variant)?;
            (l, Some(s))
        }
        TaskKind::Cot => {
            let gold = golds
                .first()
                .ok_or_else(|| Error::Argument("COT task needs a gold answer".into()))?;
            (label_cot(response, gold)?, None)
        }
    };
    Ok(LabeledResponse {
        response_text: response.to_owned(),
        gold_answers: golds.to_vec(),
        task_kind: kind,
        label,
        rouge1_score,
        refusal: is_refusal(response),
    })
}
