//! Meta-evaluation of unlearning metrics: faithfulness over P/N model pools
//! and robustness of unlearned models' scores to relearning, quantization
//! and probing.

mod pools;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use pools::{
    base_corpus, build_pools, target_corpus, DataVariant, ModelPool, PoolGrid, PoolLabel, PoolMember, Provenance,
    MIN_POOL_SIZE,
};

use crate::error::{input_err, Error, Result};
use crate::methods::{apply_probe, run_relearn, run_unlearn, train_probe_head, UnlearnConfig};
use crate::metrics::{auc_roc, evaluate_metric, harmonic_mean, model_utility, EvalContext};
use crate::seqmodel::{quantize_dequantize, Model, TrainConfig};
use crate::worldgen::qa_example;

/// AUC of P-pool scores against N-pool scores, and the midpoint threshold
/// that best separates them (score >= threshold means "has the knowledge").
/// Accuracy ties go to the lowest threshold.
pub fn faithfulness(p_scores: &[f64], n_scores: &[f64]) -> Result<(f64, f64)> {
    let auc = auc_roc(p_scores, n_scores)?;
    let mut values: Vec<f64> = p_scores.iter().chain(n_scores).copied().collect();
    if values.iter().any(|v| v.is_nan()) {
        return Err(input_err!("faithfulness got a NaN score"));
    }
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut candidates = vec![values[0]];
    candidates.extend(values.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let accuracy = |t: f64| p_scores.iter().filter(|&&s| s >= t).count() + n_scores.iter().filter(|&&s| s < t).count();
    let mut best = candidates[0];
    let mut best_acc = accuracy(best);
    for &t in &candidates[1..] {
        let acc = accuracy(t);
        if acc > best_acc {
            best = t;
            best_acc = acc;
        }
    }
    Ok((auc, best))
}

/// Recovery ratio `(ret_before - ret_after) / (unl_before - unl_after)`;
/// `None` when the unlearned model's score did not move.
pub fn relearn_ratio(ret_before: f64, ret_after: f64, unl_before: f64, unl_after: f64) -> Option<f64> {
    let denom = unl_before - unl_after;
    (denom != 0.0).then(|| (ret_before - ret_after) / denom)
}

/// Per-model relearning robustness from the recovery ratio: clamped to
/// [0, 1], and fully robust when the ratio is undefined.
pub fn relearn_robustness(ratio: Option<f64>) -> f64 {
    ratio.map_or(1.0, |r| r.clamp(0.0, 1.0))
}

pub fn relearn_score(ret_before: f64, ret_after: f64, unl_before: f64, unl_after: f64) -> f64 {
    relearn_robustness(relearn_ratio(ret_before, ret_after, unl_before, unl_after))
}

/// `after / before`; `None` when the score before quantization is zero.
pub fn quant_ratio(before: f64, after: f64) -> Option<f64> {
    (before != 0.0).then(|| after / before)
}

/// `min(q, 1)`. An undefined ratio (zero score before) counts as robust
/// only if the score stays zero.
pub fn quant_robustness(ratio: Option<f64>, after: f64) -> f64 {
    match ratio {
        Some(q) => q.min(1.0),
        None if after == 0.0 => 1.0,
        None => 0.0,
    }
}

pub fn quant_score(before: f64, after: f64) -> f64 {
    quant_robustness(quant_ratio(before, after), after)
}

/// Per-model probing robustness `min(ret_probed / unl_probed, 1)`, defined
/// only when the unprobed retain score is at least the unprobed unlearned
/// score.
pub fn probe_score(ret_probed: f64, unl_probed: f64, ret_plain: f64, unl_plain: f64) -> Option<f64> {
    if ret_plain < unl_plain {
        return None;
    }
    if unl_probed == 0.0 {
        return Some(1.0);
    }
    Some((ret_probed / unl_probed).min(1.0))
}

fn mean_defined(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// `(HM(R, Q), HM(faithfulness, HM(R, Q)))`.
pub fn aggregate_meta(faithfulness: f64, relearn: f64, quant: f64) -> Result<(f64, f64)> {
    let robustness = harmonic_mean(&[relearn, quant])?;
    Ok((robustness, harmonic_mean(&[faithfulness, robustness])?))
}

/// An unlearned model's utility and metric scores, for filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredMember {
    pub id: String,
    pub utility: f64,
    pub scores: BTreeMap<String, f64>,
}

/// Members keeping at least `utility_floor` of the target's utility and
/// scoring strictly below `threshold` on `metric`.
pub fn filter_models(
    members: &[ScoredMember],
    metric: &str,
    threshold: f64,
    target_utility: f64,
    utility_floor: f64,
) -> Vec<ScoredMember> {
    members
        .iter()
        .filter(|m| m.utility >= utility_floor * target_utility)
        .filter(|m| m.scores.get(metric).is_some_and(|&s| s < threshold))
        .cloned()
        .collect()
}

pub const DEFAULT_UTILITY_FLOOR: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaEvalSettings {
    pub utility_floor: f64,
    pub relearn: TrainConfig,
    pub quant_bits: u32,
    pub probe_layer: usize,
    pub probe: TrainConfig,
}

impl Default for MetaEvalSettings {
    fn default() -> Self {
        MetaEvalSettings {
            utility_floor: DEFAULT_UTILITY_FLOOR,
            relearn: TrainConfig {
                learning_rate: 1e-3,
                epochs: 1,
                batch_size: 4,
                ..TrainConfig::default()
            },
            quant_bits: 4,
            probe_layer: 0,
            probe: TrainConfig {
                learning_rate: 1e-2,
                epochs: 10,
                batch_size: 8,
                ..TrainConfig::default()
            },
        }
    }
}

/// One unlearned model's view of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub member_id: String,
    pub utility_ratio: f64,
    pub before: f64,
    pub relearned: f64,
    pub quantized: f64,
    pub probed: f64,
    /// Passed the utility and threshold filter.
    pub kept: bool,
    /// Among the lowest-learning-rate runs of its method.
    pub quant_subset: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relearn_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quant_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaEvalResult {
    pub metric_key: String,
    pub faithfulness: f64,
    pub threshold: f64,
    #[serde(rename = "R")]
    pub relearn: Option<f64>,
    #[serde(rename = "Q")]
    pub quant: Option<f64>,
    #[serde(rename = "P_probe")]
    pub probe: Option<f64>,
    pub robustness_agg: Option<f64>,
    pub overall: Option<f64>,
    pub p_scores: Vec<f64>,
    pub n_scores: Vec<f64>,
    pub retain_scores: RetainScores,
    pub per_model: Vec<MemberRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetainScores {
    pub before: f64,
    pub relearned: f64,
    pub probed: f64,
}

/// Unlearns the target once per config. Diverged or failed runs are recorded
/// in `failed`.
pub fn build_unlearned_pool(target: &Model, ctx: &EvalContext, configs: &[UnlearnConfig]) -> ModelPool {
    let mut pool = ModelPool::new(PoolLabel::Unlearned);
    for cfg in configs {
        let hyperparams = serde_json::to_value(cfg).expect("config serializes");
        let provenance = Provenance {
            label: PoolLabel::Unlearned,
            data_variant: None,
            learning_rate: cfg.learning_rate,
            epoch_checkpoint: cfg.epochs,
            method: Some(cfg.method),
            hyperparams,
        };
        match run_unlearn(target, ctx.vocab, &ctx.splits.forget, &ctx.splits.retain, cfg) {
            Ok(model) => pool.members.push(PoolMember { model, provenance }),
            Err(e) => {
                log::warn!("unlearned pool: {} failed: {e}", provenance.member_id());
                pool.failed.push((provenance, e.to_string()));
            }
        }
    }
    pool
}

struct Versions {
    before: BTreeMap<String, f64>,
    relearned: BTreeMap<String, f64>,
    quantized: BTreeMap<String, f64>,
    probed: BTreeMap<String, f64>,
}

fn scores(model: &Model, ctx: &EvalContext, metrics: &[String]) -> Result<BTreeMap<String, f64>> {
    metrics
        .iter()
        .map(|k| Ok((k.clone(), evaluate_metric(k, model, ctx)?.agg_value)))
        .collect()
}

/// Runs the full meta-evaluation for each metric key.
#[allow(clippy::too_many_arguments)]
pub fn run_meta_eval(
    ctx: &EvalContext,
    positive: &ModelPool,
    negative: &ModelPool,
    unlearned: &ModelPool,
    target: &Model,
    retain: &Model,
    settings: &MetaEvalSettings,
    metrics: &[String],
) -> Result<Vec<MetaEvalResult>> {
    if positive.is_empty() || negative.is_empty() {
        return Err(input_err!("meta-evaluation needs non-empty P and N pools"));
    }
    let p: Vec<_> = positive
        .members
        .iter()
        .map(|m| scores(&m.model, ctx, metrics))
        .collect::<Result<_>>()?;
    let n: Vec<_> = negative
        .members
        .iter()
        .map(|m| scores(&m.model, ctx, metrics))
        .collect::<Result<_>>()?;

    let relearn_corpus = ctx
        .splits
        .retain
        .iter()
        .map(|e| qa_example(ctx.vocab, &e.question, &e.answer))
        .collect::<Result<Vec<_>>>()?;
    let head = train_probe_head(retain, &relearn_corpus, settings.probe_layer, &settings.probe)?;
    let versions = |model: &Model| -> Result<Versions> {
        Ok(Versions {
            before: scores(model, ctx, metrics)?,
            relearned: scores(
                &run_relearn(model, ctx.vocab, &ctx.splits.forget, &settings.relearn)?,
                ctx,
                metrics,
            )?,
            quantized: scores(&quantize_dequantize(model, settings.quant_bits)?, ctx, metrics)?,
            probed: scores(&apply_probe(model, &head)?, ctx, metrics)?,
        })
    };
    let ret = versions(retain)?;
    let target_mu = model_utility(target, ctx.splits, ctx.vocab, ctx.max_new_tokens)?.agg_value;
    if target_mu == 0.0 {
        return Err(Error::Config("target model utility is zero".into()));
    }

    let mut members = Vec::with_capacity(unlearned.len());
    for m in &unlearned.members {
        let mu = model_utility(&m.model, ctx.splits, ctx.vocab, ctx.max_new_tokens)?.agg_value;
        let lowest_lr = unlearned
            .members
            .iter()
            .filter(|o| o.provenance.method == m.provenance.method)
            .map(|o| o.provenance.learning_rate)
            .fold(f64::INFINITY, f64::min);
        members.push((
            ScoredMember {
                id: m.provenance.member_id(),
                utility: mu,
                scores: BTreeMap::new(),
            },
            m.provenance.learning_rate == lowest_lr,
            versions(&m.model)?,
        ));
        log::info!("meta-eval: scored {}", m.provenance.member_id());
    }
    for (sm, _, v) in &mut members {
        sm.scores = v.before.clone();
    }
    let scored: Vec<ScoredMember> = members.iter().map(|(s, _, _)| s.clone()).collect();

    let mut out = Vec::with_capacity(metrics.len());
    for key in metrics {
        let ps: Vec<f64> = p.iter().map(|s| s[key]).collect();
        let ns: Vec<f64> = n.iter().map(|s| s[key]).collect();
        let (faith, threshold) = faithfulness(&ps, &ns)?;
        let kept: Vec<String> = filter_models(&scored, key, threshold, target_mu, settings.utility_floor)
            .into_iter()
            .map(|s| s.id)
            .collect();
        let per_model: Vec<MemberRecord> = members
            .iter()
            .map(|(sm, quant_subset, v)| {
                let is_kept = kept.contains(&sm.id);
                let probe = probe_score(ret.probed[key], v.probed[key], ret.before[key], v.before[key]);
                MemberRecord {
                    member_id: sm.id.clone(),
                    utility_ratio: sm.utility / target_mu,
                    before: v.before[key],
                    relearned: v.relearned[key],
                    quantized: v.quantized[key],
                    probed: v.probed[key],
                    kept: is_kept,
                    quant_subset: *quant_subset,
                    relearn_score: is_kept
                        .then(|| relearn_score(ret.before[key], ret.relearned[key], v.before[key], v.relearned[key])),
                    quant_score: (is_kept && *quant_subset).then(|| quant_score(v.before[key], v.quantized[key])),
                    probe_score: if is_kept { probe } else { None },
                }
            })
            .collect();
        let r = mean_defined(per_model.iter().filter_map(|m| m.relearn_score));
        let q = mean_defined(per_model.iter().filter_map(|m| m.quant_score));
        let probe = mean_defined(per_model.iter().filter_map(|m| m.probe_score));
        let (robustness_agg, overall) = match (r, q) {
            (Some(r), Some(q)) => {
                let (ra, o) = aggregate_meta(faith, r, q)?;
                (Some(ra), Some(o))
            }
            _ => (None, None),
        };
        out.push(MetaEvalResult {
            metric_key: key.clone(),
            faithfulness: faith,
            threshold,
            relearn: r,
            quant: q,
            probe,
            robustness_agg,
            overall,
            p_scores: ps,
            n_scores: ns,
            retain_scores: RetainScores {
                before: ret.before[key],
                relearned: ret.relearned[key],
                probed: ret.probed[key],
            },
            per_model,
        });
    }
    Ok(out)
}
