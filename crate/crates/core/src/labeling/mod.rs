//! Hallucination labels from response text: ROUGE-1 against gold answers for
//! open QA, final-answer matching for chain-of-thought yes/no tasks, and a
//! refusal-phrase detector.

mod rouge;
mod rules;

pub use rouge::{normalize_tokens, rouge1, rouge1_with, RougeVariant};
pub use rules::{
    extract_cot_answer, is_refusal, label_cot, label_qa, label_qa_with, label_response, LabeledResponse, TaskKind,
    QA_ROUGE_CUTOFF, REFUSAL_PHRASES,
};
