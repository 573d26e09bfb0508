//! String-keyed forget-set metrics sharing one evaluation context.

use std::collections::BTreeMap;

use super::{
    forget_quality, metric_em, metric_es, metric_fluency, metric_probability, metric_rouge, metric_truth_ratio,
    mia_attack, mia_report, model_id, model_utility, BigramLm, EvalData, MetricReport, MiaAttack, RougeVariant,
    TruthRatioVariant, DEFAULT_K_FRAC, DEFAULT_MAX_NEW_TOKENS,
};
use crate::error::{config_err, Error, Result};
use crate::seqmodel::{Model, Vocabulary};
use crate::worldgen::SplitSet;

/// Everything a metric may need besides the model under test.
#[derive(Debug, Clone)]
pub struct EvalContext<'a> {
    pub splits: &'a SplitSet,
    pub vocab: &'a Vocabulary,
    pub max_new_tokens: usize,
    pub k_frac: f64,
    pub fluency_lm: BigramLm,
    /// Needed by `forget_quality` only.
    pub retain_model: Option<&'a Model>,
}

impl<'a> EvalContext<'a> {
    pub fn new(splits: &'a SplitSet, vocab: &'a Vocabulary) -> Result<Self> {
        Ok(EvalContext {
            splits,
            vocab,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            k_frac: DEFAULT_K_FRAC,
            fluency_lm: BigramLm::fit_world(splits, vocab)?,
            retain_model: None,
        })
    }

    pub fn forget(&self) -> EvalData<'_> {
        EvalData {
            max_new_tokens: self.max_new_tokens,
            ..EvalData::new("forget", &self.splits.forget, self.vocab)
        }
    }
}

pub type MetricFn = fn(&Model, &EvalContext) -> Result<MetricReport>;

/// The twelve metrics studied by the meta-evaluation, in report order.
pub const META_METRICS: [&str; 12] = [
    "es",
    "em",
    "truth_ratio",
    "para_prob",
    "para_rouge",
    "prob",
    "rouge",
    "jailbreak_rouge",
    "mia_zlib",
    "mia_mink",
    "mia_loss",
    "mia_minkpp",
];

fn mia(attack: MiaAttack, model: &Model, ctx: &EvalContext) -> Result<MetricReport> {
    let r = mia_attack(
        attack,
        model,
        ctx.vocab,
        &ctx.splits.forget,
        &ctx.splits.holdout,
        ctx.k_frac,
    )?;
    Ok(mia_report(&r, model, "forget+holdout"))
}

fn fq(model: &Model, ctx: &EvalContext) -> Result<MetricReport> {
    let retain = ctx
        .retain_model
        .ok_or_else(|| config_err!("forget_quality needs a retain model in the evaluation context"))?;
    let data = ctx.forget();
    let unl = metric_truth_ratio(model, &data, TruthRatioVariant::Privacy)?;
    let ret = metric_truth_ratio(retain, &data, TruthRatioVariant::Privacy)?;
    Ok(MetricReport {
        metric_key: "forget_quality".into(),
        model_id: model_id(model),
        dataset_id: data.id.to_string(),
        agg_value: forget_quality(&unl.values(), &ret.values())?,
        value_by_index: BTreeMap::new(),
    })
}

/// All built-in metrics with their keys.
pub fn builtin_metrics() -> Vec<(&'static str, MetricFn)> {
    vec![
        ("es", |m, c| metric_es(m, &c.forget())),
        ("em", |m, c| metric_em(m, &c.forget())),
        ("truth_ratio", |m, c| {
            metric_truth_ratio(m, &c.forget(), TruthRatioVariant::Knowledge)
        }),
        ("truth_ratio_privacy", |m, c| {
            metric_truth_ratio(m, &c.forget(), TruthRatioVariant::Privacy)
        }),
        ("prob", |m, c| metric_probability(m, &c.forget(), false)),
        ("para_prob", |m, c| metric_probability(m, &c.forget(), true)),
        ("rouge", |m, c| metric_rouge(m, &c.forget(), RougeVariant::Plain)),
        ("para_rouge", |m, c| {
            metric_rouge(m, &c.forget(), RougeVariant::Paraphrase)
        }),
        ("jailbreak_rouge", |m, c| {
            metric_rouge(m, &c.forget(), RougeVariant::Jailbreak)
        }),
        ("mia_loss", |m, c| mia(MiaAttack::Loss, m, c)),
        ("mia_zlib", |m, c| mia(MiaAttack::Zlib, m, c)),
        ("mia_mink", |m, c| mia(MiaAttack::MinK, m, c)),
        ("mia_minkpp", |m, c| mia(MiaAttack::MinKpp, m, c)),
        ("mia_gradnorm", |m, c| mia(MiaAttack::GradNorm, m, c)),
        ("fluency", |m, c| metric_fluency(m, &c.forget(), &c.fluency_lm)),
        ("model_utility", |m, c| {
            model_utility(m, c.splits, c.vocab, c.max_new_tokens)
        }),
        ("forget_quality", fq),
    ]
}

pub fn metric_fn(key: &str) -> Result<MetricFn> {
    let all = builtin_metrics();
    all.iter()
        .find(|(k, _)| *k == key)
        .map(|(_, f)| *f)
        .ok_or_else(|| Error::lookup("metric", key, all.iter().map(|(k, _)| *k)))
}

pub fn evaluate_metric(key: &str, model: &Model, ctx: &EvalContext) -> Result<MetricReport> {
    metric_fn(key)?(model, ctx)
}

/// Expands `all` and `meta` shorthands and rejects unknown keys.
pub fn resolve_metric_keys(keys: &[String]) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    for key in keys {
        match key.as_str() {
            "meta" => out.extend(META_METRICS.iter().map(|k| k.to_string())),
            "all" => out.extend(builtin_metrics().iter().map(|(k, _)| k.to_string())),
            k => {
                metric_fn(k)?;
                out.push(k.to_string());
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    out.retain(|k| seen.insert(k.clone()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_metrics_are_builtin() {
        for k in META_METRICS {
            assert!(metric_fn(k).is_ok(), "{k}");
        }
        let keys: Vec<_> = builtin_metrics().into_iter().map(|(k, _)| k).collect();
        let mut dedup = keys.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), keys.len());
    }

    #[test]
    fn unknown_metric_suggests() {
        let e = metric_fn("rogue").unwrap_err().to_string();
        assert!(e.contains("rouge"), "{e}");
    }

    #[test]
    fn shorthand_expansion() {
        let keys = resolve_metric_keys(&["meta".into(), "es".into(), "fluency".into()]).unwrap();
        assert_eq!(keys.len(), 13);
        assert_eq!(keys[0], "es");
        assert!(resolve_metric_keys(&["nope".into()]).is_err());
    }
}
