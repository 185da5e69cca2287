//! Detect-then-mitigate policies over paired (greedy, alternate) responses
//! and their accounting.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::actdata::ActivationRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Hallucinated,
    NotHallucinated,
}

impl Prediction {
    /// `score ≥ threshold` means hallucinated.
    pub fn from_score(score: f64, threshold: f64) -> Self {
        if score >= threshold {
            Prediction::Hallucinated
        } else {
            Prediction::NotHallucinated
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AltKind {
    Dola,
    RandomSample,
}

/// A response's true label (1 = hallucination) and its detector score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub label: u8,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsePair {
    pub prompt_id: u64,
    pub greedy: Scored,
    pub alternate: Option<Scored>,
    pub alt_kind: AltKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Def,
    DefAbstain,
    Alt,
    ClapI,
    #[serde(rename = "clap_ii")]
    ClapII,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Def,
        Strategy::DefAbstain,
        Strategy::Alt,
        Strategy::ClapI,
        Strategy::ClapII,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Def => "def",
            Strategy::DefAbstain => "def_abstain",
            Strategy::Alt => "alt",
            Strategy::ClapI => "clap_i",
            Strategy::ClapII => "clap_ii",
        }
    }

    pub fn abstains(self) -> bool {
        matches!(self, Strategy::DefAbstain | Strategy::ClapII)
    }

    fn needs_alt(self) -> bool {
        matches!(self, Strategy::Alt | Strategy::ClapI | Strategy::ClapII)
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    EmitGreedy,
    EmitAlt,
    Abstain,
}

pub fn decide(strategy: Strategy, greedy: Prediction, alt: Option<Prediction>) -> Result<Action> {
    use Prediction::*;
    if strategy.needs_alt() && alt.is_none() {
        return Err(Error::Argument(format!("strategy {} needs an alternate response", strategy.name())));
    }
    Ok(match (strategy, greedy, alt) {
        (Strategy::Def, ..) => Action::EmitGreedy,
        (Strategy::Alt, ..) => Action::EmitAlt,
        (_, NotHallucinated, _) => Action::EmitGreedy,
        (Strategy::DefAbstain, Hallucinated, _) => Action::Abstain,
        (Strategy::ClapI, Hallucinated, _) => Action::EmitAlt,
        (Strategy::ClapII, Hallucinated, Some(NotHallucinated)) => Action::EmitAlt,
        (Strategy::ClapII, Hallucinated, _) => Action::Abstain,
    })
}

/// Outcome counts of one strategy; percentages are in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: Strategy,
    pub n_pairs: usize,
    pub n_emitted: usize,
    pub n_emitted_nh: usize,
    pub n_abstained: usize,
    pub n_abstained_but_nh: usize,
    /// Among emitted responses for abstaining strategies, among all otherwise.
    /// `None` when an abstaining strategy emitted nothing.
    pub pct_nh: Option<f64>,
    pub pct_abs: f64,
    pub pct_abs_but_nh: f64,
    /// Emitted pairs whose label improved relative to the greedy response.
    pub h_to_nh: usize,
    /// Emitted pairs whose label got worse relative to the greedy response.
    pub nh_to_h: usize,
    /// `h_to_nh` divided by the same count under Alt.
    pub h_to_nh_vs_alt: Option<f64>,
    pub nh_to_h_vs_alt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationReport {
    pub threshold: f64,
    pub strategies: Vec<StrategyReport>,
}

impl MitigationReport {
    pub fn get(&self, s: Strategy) -> Option<&StrategyReport> {
        self.strategies.iter().find(|r| r.strategy == s)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,pct_nh,pct_abs,pct_abs_but_nh,h_to_nh,nh_to_h,n_pairs\n");
        for r in &self.strategies {
            let nh = r.pct_nh.map(|v| format!("{v:.4}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{nh},{:.4},{:.4},{},{},{}\n",
                r.strategy.name(),
                r.pct_abs,
                r.pct_abs_but_nh,
                r.h_to_nh,
                r.nh_to_h,
                r.n_pairs
            ));
        }
        out
    }
}

fn pct(num: usize, den: usize) -> f64 {
    100.0 * num as f64 / den as f64
}

fn tally(pairs: &[ResponsePair], threshold: f64, strategy: Strategy) -> Result<StrategyReport> {
    let mut r = StrategyReport {
        strategy,
        n_pairs: pairs.len(),
        n_emitted: 0,
        n_emitted_nh: 0,
        n_abstained: 0,
        n_abstained_but_nh: 0,
        pct_nh: None,
        pct_abs: 0.0,
        pct_abs_but_nh: 0.0,
        h_to_nh: 0,
        nh_to_h: 0,
        h_to_nh_vs_alt: None,
        nh_to_h_vs_alt: None,
    };
    for p in pairs {
        let gp = Prediction::from_score(p.greedy.score, threshold);
        let ap = p.alternate.map(|a| Prediction::from_score(a.score, threshold));
        let emitted = match decide(strategy, gp, ap)? {
            Action::EmitGreedy => p.greedy.label,
            Action::EmitAlt => p.alternate.map(|a| a.label).unwrap_or(p.greedy.label),
            Action::Abstain => {
                r.n_abstained += 1;
                r.n_abstained_but_nh += usize::from(p.greedy.label == 0);
                continue;
            }
        };
        r.n_emitted += 1;
        r.n_emitted_nh += usize::from(emitted == 0);
        match (p.greedy.label, emitted) {
            (1, 0) => r.h_to_nh += 1,
            (0, 1) => r.nh_to_h += 1,
            _ => {}
        }
    }
    let n = pairs.len();
    r.pct_abs = pct(r.n_abstained, n);
    r.pct_abs_but_nh = pct(r.n_abstained_but_nh, n);
    r.pct_nh = if r.n_emitted > 0 {
        Some(pct(r.n_emitted_nh, if strategy.abstains() { r.n_emitted } else { n }))
    } else {
        None
    };
    Ok(r)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Applies every strategy to the pairs with one fixed detector threshold.
pub fn run_pipeline(pairs: &[ResponsePair], threshold: f64, strategies: &[Strategy]) -> Result<MitigationReport> {
    if pairs.is_empty() {
        return Err(Error::Argument("no response pairs".into()));
    }
    if strategies.is_empty() {
        return Err(Error::Argument("no strategies".into()));
    }
    let mut reports = strategies
        .iter()
        .map(|&s| tally(pairs, threshold, s))
        .collect::<Result<Vec<_>>>()?;
    let alt = if pairs.iter().all(|p| p.alternate.is_some()) {
        Some(tally(pairs, threshold, Strategy::Alt)?)
    } else {
        None
    };
    if let Some(alt) = alt {
        for r in &mut reports {
            r.h_to_nh_vs_alt = ratio(r.h_to_nh, alt.h_to_nh);
            r.nh_to_h_vs_alt = ratio(r.nh_to_h, alt.nh_to_h);
        }
    }
    Ok(MitigationReport {
        threshold,
        strategies: reports,
    })
}

/// Population rates for the analytic model. Alternate labels are assumed
/// independent of the greedy response and of detector errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// Fraction of greedy responses that are not hallucinated.
    pub nh_def: f64,
    /// Fraction of alternate responses that are not hallucinated.
    pub nh_alt: f64,
    /// P(flagged | hallucinated).
    pub tpr: f64,
    /// P(flagged | not hallucinated).
    pub fpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedReport {
    pub pct_nh: Option<f64>,
    pub pct_abs: f64,
    pub pct_abs_but_nh: f64,
}

/// Closed-form expectations of [`StrategyReport`] percentages under [`Rates`].
pub fn expected_report(rates: Rates, strategy: Strategy) -> ExpectedReport {
    let Rates {
        nh_def: g,
        nh_alt: a,
        tpr,
        fpr,
    } = rates;
    let flagged = g * fpr + (1.0 - g) * tpr;
    let alt_flagged = a * fpr + (1.0 - a) * tpr;
    let (nh, abs, abs_nh) = match strategy {
        Strategy::Def => (g, 0.0, 0.0),
        Strategy::Alt => (a, 0.0, 0.0),
        Strategy::DefAbstain => (g * (1.0 - fpr), flagged, g * fpr),
        Strategy::ClapI => (g * (1.0 - fpr) + flagged * a, 0.0, 0.0),
        Strategy::ClapII => (
            g * (1.0 - fpr) + flagged * a * (1.0 - fpr),
            flagged * alt_flagged,
            g * fpr * alt_flagged,
        ),
    };
    let pct_nh = if strategy.abstains() {
        (abs < 1.0).then(|| 100.0 * nh / (1.0 - abs))
    } else {
        Some(100.0 * nh)
    };
    ExpectedReport {
        pct_nh,
        pct_abs: 100.0 * abs,
        pct_abs_but_nh: 100.0 * abs_nh,
    }
}

/// Pairs each greedy record with the alternate record of the same prompt.
/// `greedy` and `alternates` carry the detector score of each record.
pub fn pair_records(
    greedy: &[(&ActivationRecord, f64)],
    alternates: &[(&ActivationRecord, f64)],
    kind: AltKind,
) -> Vec<ResponsePair> {
    let alt: HashMap<u64, Scored> = alternates
        .iter()
        .map(|(r, s)| {
            (
                r.prompt_id,
                Scored {
                    label: r.label,
                    score: *s,
                },
            )
        })
        .collect();
    greedy
        .iter()
        .map(|(r, s)| ResponsePair {
            prompt_id: r.prompt_id,
            greedy: Scored {
                label: r.label,
                score: *s,
            },
            alternate: alt.get(&r.prompt_id).copied(),
            alt_kind: kind,
        })
        .collect()
}
