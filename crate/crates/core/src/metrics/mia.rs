//! Membership-inference attacks on the forget set against a holdout set.
//! Every score is oriented so that lower means more member-like.

use std::io::Write;

use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use super::stats::{auc_roc, pairwise_wins};
use super::{model_id, MetricReport};
use crate::error::{input_err, Result};
use crate::seqmodel::{log_softmax, nll_and_grad, LmExample, Model, TokenId, Vocabulary};
use crate::worldgen::{encode_prompt, QaExample};

pub const DEFAULT_K_FRAC: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiaAttack {
    Loss,
    Zlib,
    #[serde(rename = "mink")]
    MinK,
    #[serde(rename = "minkpp")]
    MinKpp,
    #[serde(rename = "gradnorm")]
    GradNorm,
}

impl MiaAttack {
    pub const ALL: [MiaAttack; 5] = [
        MiaAttack::Loss,
        MiaAttack::Zlib,
        MiaAttack::MinK,
        MiaAttack::MinKpp,
        MiaAttack::GradNorm,
    ];

    pub fn key(self) -> &'static str {
        match self {
            MiaAttack::Loss => "mia_loss",
            MiaAttack::Zlib => "mia_zlib",
            MiaAttack::MinK => "mia_mink",
            MiaAttack::MinKpp => "mia_minkpp",
            MiaAttack::GradNorm => "mia_gradnorm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiaResult {
    pub attack: MiaAttack,
    pub member_scores: Vec<f64>,
    pub nonmember_scores: Vec<f64>,
    /// Probability a random non-member scores above a random member.
    pub auc: f64,
    /// Member indices scored with the loss fallback (zlib on empty text).
    pub fallback_indices: Vec<usize>,
}

fn deflate_len(text: &str) -> usize {
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
    enc.write_all(text.as_bytes()).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail").len()
}

/// Mean of the lowest `max(1, floor(k·n))` values, negated.
pub(crate) fn min_k_score(values: &[f64], k_frac: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((k_frac * values.len() as f64).floor() as usize).clamp(1, values.len());
    -sorted[..k].iter().sum::<f64>() / k as f64
}

fn encode(vocab: &Vocabulary, ex: &QaExample) -> Result<(Vec<TokenId>, Vec<TokenId>)> {
    Ok((encode_prompt(vocab, &ex.question)?, vocab.encode(&ex.answer)?))
}

/// Score of one example; the flag marks a fallback.
fn score_example(
    attack: MiaAttack,
    model: &Model,
    vocab: &Vocabulary,
    ex: &QaExample,
    k_frac: f64,
) -> Result<(f64, bool)> {
    let (prompt, answer) = encode(vocab, ex)?;
    match attack {
        MiaAttack::Loss | MiaAttack::Zlib | MiaAttack::MinK => {
            let lp = model.token_logprobs(&prompt, &answer)?;
            let nll = -lp.iter().sum::<f64>() / lp.len() as f64;
            Ok(match attack {
                MiaAttack::Loss => (nll, false),
                MiaAttack::Zlib if ex.answer.trim().is_empty() => (nll, true),
                MiaAttack::Zlib => (nll / deflate_len(&ex.answer) as f64, false),
                _ => (min_k_score(&lp, k_frac), false),
            })
        }
        MiaAttack::MinKpp => {
            let seq: Vec<TokenId> = prompt.iter().chain(&answer).copied().collect();
            let cache = model.forward(&seq, None)?;
            let z: Vec<f64> = answer
                .iter()
                .enumerate()
                .map(|(i, &tok)| {
                    let lp = log_softmax(cache.logits_row(prompt.len() + i - 1));
                    let mu: f64 = lp.iter().map(|l| l.exp() * l).sum();
                    let second: f64 = lp.iter().map(|l| l.exp() * l * l).sum();
                    let sigma = (second - mu * mu).max(0.0).sqrt();
                    if sigma > 0.0 {
                        (lp[tok as usize] - mu) / sigma
                    } else {
                        0.0
                    }
                })
                .collect();
            Ok((min_k_score(&z, k_frac), false))
        }
        MiaAttack::GradNorm => {
            let ex = LmExample::prompt_answer(&prompt, &answer);
            let mut grads = vec![0.0; model.params().len()];
            nll_and_grad(model, &ex, Some(&mut grads), 1.0)?;
            Ok((grads.iter().map(|g| g * g).sum::<f64>().sqrt(), false))
        }
    }
}

pub fn mia_attack(
    attack: MiaAttack,
    model: &Model,
    vocab: &Vocabulary,
    forget: &[QaExample],
    holdout: &[QaExample],
    k_frac: f64,
) -> Result<MiaResult> {
    if forget.is_empty() || holdout.is_empty() {
        return Err(input_err!("MIA needs non-empty forget and holdout sets"));
    }
    if !(k_frac > 0.0 && k_frac <= 1.0) {
        return Err(input_err!("k_frac must lie in (0, 1], got {k_frac}"));
    }
    let mut member_scores = Vec::with_capacity(forget.len());
    let mut fallback_indices = Vec::new();
    for (i, ex) in forget.iter().enumerate() {
        let (s, fallback) = score_example(attack, model, vocab, ex, k_frac)?;
        if fallback {
            fallback_indices.push(i);
        }
        member_scores.push(s);
    }
    let nonmember_scores = holdout
        .iter()
        .map(|ex| Ok(score_example(attack, model, vocab, ex, k_frac)?.0))
        .collect::<Result<Vec<_>>>()?;
    let auc = auc_roc(&nonmember_scores, &member_scores)?;
    Ok(MiaResult {
        attack,
        member_scores,
        nonmember_scores,
        auc,
        fallback_indices,
    })
}

/// Report form of an attack: each member's share of pairwise wins against
/// the non-members, so the mean equals the AUC.
pub fn mia_report(result: &MiaResult, model: &Model, dataset_id: &str) -> MetricReport {
    let n = result.nonmember_scores.len() as f64;
    MetricReport {
        metric_key: result.attack.key().to_string(),
        model_id: model_id(model),
        dataset_id: dataset_id.to_string(),
        agg_value: result.auc,
        value_by_index: result
            .member_scores
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let losses = n - pairwise_wins(m, &result.nonmember_scores);
                (i, losses / n)
            })
            .collect(),
    }
}
