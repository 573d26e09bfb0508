//! Benchmark rows: memorization, privacy and utility scores per unlearned
//! model and their harmonic-mean aggregate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, input_err, Result};
use crate::metrics::{
    harmonic_mean, metric_em, metric_es, metric_fluency, metric_probability, metric_truth_ratio, mia_attack,
    model_utility, EvalContext, MiaAttack, TruthRatioVariant,
};
use crate::seqmodel::Model;

/// The attacks that make up the privacy score.
pub const PRIVACY_ATTACKS: [MiaAttack; 4] = [MiaAttack::Loss, MiaAttack::Zlib, MiaAttack::MinK, MiaAttack::MinKpp];

/// `HM(1 - ES, 1 - EM, 1 - para_prob, 1 - truth_ratio)`: higher means more
/// forgotten.
pub fn memorization_score(es: f64, em: f64, para_prob: f64, truth_ratio: f64) -> Result<f64> {
    let parts = [es, em, para_prob, truth_ratio];
    if parts.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(input_err!("memorization inputs must lie in [0, 1], got {parts:?}"));
    }
    harmonic_mean(&parts.map(|v| 1.0 - v))
}

/// How close an attack's AUC on the unlearned model is to the retain
/// model's, scaled by the largest possible distance from the retain AUC.
pub fn mia_similarity(auc_unlearned: f64, auc_retain: f64) -> f64 {
    let span = auc_retain.max(1.0 - auc_retain);
    (1.0 - (auc_unlearned - auc_retain).abs() / span).clamp(0.0, 1.0)
}

/// Harmonic mean of the per-attack similarities, from `(unlearned, retain)`
/// AUC pairs.
pub fn privacy_from_aucs(pairs: &[(f64, f64)]) -> Result<f64> {
    let s: Vec<f64> = pairs.iter().map(|&(u, r)| mia_similarity(u, r)).collect();
    harmonic_mean(&s)
}

pub fn privacy_score(unlearned: &Model, retain: &Model, ctx: &EvalContext) -> Result<f64> {
    if ctx.splits.holdout.len() < 2 {
        return Err(input_err!("privacy score needs at least 2 holdout examples"));
    }
    let mut pairs = Vec::with_capacity(PRIVACY_ATTACKS.len());
    for attack in PRIVACY_ATTACKS {
        let run = |m: &Model| {
            mia_attack(
                attack,
                m,
                ctx.vocab,
                &ctx.splits.forget,
                &ctx.splits.holdout,
                ctx.k_frac,
            )
        };
        pairs.push((run(unlearned)?.auc, run(retain)?.auc));
    }
    privacy_from_aucs(&pairs)
}

/// `HM(min(MU / MU_init, 1), fluency)`.
pub fn utility_score(mu: f64, mu_init: f64, fluency: f64) -> Result<f64> {
    if mu_init == 0.0 {
        return Err(config_err!("initial model utility is zero; cannot normalize"));
    }
    harmonic_mean(&[(mu / mu_init).min(1.0), fluency])
}

/// Memorization and utility only; privacy needs oracle models.
pub fn tuning_objective(mem: f64, utility: f64) -> Result<f64> {
    harmonic_mean(&[mem, utility])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationMode {
    /// `HM(mem, priv, utility)`.
    #[default]
    Full,
    /// `HM(mem, utility)`; privacy is shown but not aggregated.
    MemUtility,
}

impl std::str::FromStr for AggregationMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(AggregationMode::Full),
            "mem-utility" => Ok(AggregationMode::MemUtility),
            other => Err(crate::Error::lookup("aggregation mode", other, ["full", "mem-utility"])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub method: String,
    pub agg: f64,
    pub mem: f64,
    #[serde(rename = "priv")]
    pub privacy: f64,
    pub utility: f64,
    #[serde(default)]
    pub hyperparams: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

pub fn overall_row(
    method: &str,
    mem: f64,
    privacy: f64,
    utility: f64,
    mode: AggregationMode,
) -> Result<LeaderboardRow> {
    let agg = match mode {
        AggregationMode::Full => harmonic_mean(&[mem, privacy, utility])?,
        AggregationMode::MemUtility => harmonic_mean(&[mem, utility])?,
    };
    Ok(LeaderboardRow {
        method: method.to_string(),
        agg,
        mem,
        privacy,
        utility,
        hyperparams: serde_json::Value::Null,
        checkpoint: None,
    })
}

/// Sorts by aggregate, best first; ties keep name order.
pub fn rank(rows: &mut [LeaderboardRow]) {
    rows.sort_by(|a, b| b.agg.total_cmp(&a.agg).then_with(|| a.method.cmp(&b.method)));
}

/// The measured inputs of one leaderboard row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchScores {
    pub es: f64,
    pub em: f64,
    pub para_prob: f64,
    pub truth_ratio: f64,
    pub model_utility: f64,
    pub fluency: f64,
}

impl BenchScores {
    pub fn measure(model: &Model, ctx: &EvalContext) -> Result<Self> {
        let forget = ctx.forget();
        Ok(BenchScores {
            es: metric_es(model, &forget)?.agg_value,
            em: metric_em(model, &forget)?.agg_value,
            para_prob: metric_probability(model, &forget, true)?.agg_value,
            truth_ratio: metric_truth_ratio(model, &forget, TruthRatioVariant::Knowledge)?.agg_value,
            model_utility: model_utility(model, ctx.splits, ctx.vocab, ctx.max_new_tokens)?.agg_value,
            fluency: metric_fluency(model, &forget, &ctx.fluency_lm)?.agg_value,
        })
    }

    pub fn memorization(&self) -> Result<f64> {
        memorization_score(self.es, self.em, self.para_prob, self.truth_ratio)
    }

    pub fn utility(&self, init_mu: f64) -> Result<f64> {
        utility_score(self.model_utility, init_mu, self.fluency)
    }
}

/// Plain-text table of ranked rows.
pub fn render_table(rows: &[LeaderboardRow]) -> String {
    let width = rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut out = format!(
        "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}\n",
        "method", "agg", "mem", "priv", "utility"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}",
            r.method,
            fmt_score(r.agg),
            fmt_score(r.mem),
            fmt_score(r.privacy),
            fmt_score(r.utility)
        );
    }
    out
}

/// Two decimals, or scientific notation for small non-zero values.
pub fn fmt_score(v: f64) -> String {
    if v != 0.0 && v.abs() < 0.01 {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn memorization_examples() {
        assert_eq!(memorization_score(0.0, 0.0, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(memorization_score(1.0, 0.2, 0.1, 0.3).unwrap(), 0.0);
        assert!(memorization_score(1.2, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn privacy_examples() {
        assert_eq!(mia_similarity(0.5, 0.5), 1.0);
        assert_eq!(mia_similarity(0.75, 0.5), 0.5);
        assert_eq!(mia_similarity(0.0, 0.7), 0.0);
        assert_eq!(privacy_from_aucs(&[(0.6, 0.6); 4]).unwrap(), 1.0);
        assert_eq!(privacy_from_aucs(&[(0.6, 0.6), (1.0, 0.5)]).unwrap(), 0.0);
    }

    #[test]
    fn utility_examples() {
        assert_eq!(utility_score(0.7, 0.7, 1.0).unwrap(), 1.0);
        assert!((utility_score(0.4, 0.5, 0.8).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(utility_score(0.4, 0.5, 0.0).unwrap(), 0.0);
        assert_eq!(utility_score(0.9, 0.5, 1.0).unwrap(), 1.0);
        assert!(utility_score(0.4, 0.0, 1.0).is_err());
    }

    #[test]
    fn tuning_examples() {
        assert_eq!(tuning_objective(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(tuning_objective(0.0, 1.0).unwrap(), 0.0);
        assert!((tuning_objective(0.5, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mode_parsing_and_table() {
        assert_eq!(
            "mem-utility".parse::<AggregationMode>().unwrap(),
            AggregationMode::MemUtility
        );
        assert!("memutility".parse::<AggregationMode>().is_err());
        let mut rows = vec![
            overall_row("B", 0.5, 0.5, 0.5, AggregationMode::Full).unwrap(),
            overall_row("A", 0.9, 0.003, 0.8, AggregationMode::Full).unwrap(),
        ];
        rank(&mut rows);
        assert_eq!(rows[0].method, "B");
        let table = render_table(&rows);
        assert_eq!(table.lines().count(), 3);
        assert!(table.contains("3.0e-3"), "{table}");
    }

    proptest! {
        #[test]
        fn ranking_invariant_under_monotone_transform(
            aggs in proptest::collection::vec(0.0f64..1.0, 1..10),
        ) {
            let rows: Vec<LeaderboardRow> = aggs
                .iter()
                .enumerate()
                .map(|(i, &a)| LeaderboardRow {
                    method: format!("m{i}"),
                    agg: a,
                    mem: 0.0,
                    privacy: 0.0,
                    utility: 0.0,
                    hyperparams: serde_json::Value::Null,
                    checkpoint: None,
                })
                .collect();
            let mut plain = rows.clone();
            rank(&mut plain);
            let mut transformed: Vec<_> = rows
                .into_iter()
                .map(|mut r| {
                    r.agg = (3.0 * r.agg).exp() + 1.0;
                    r
                })
                .collect();
            rank(&mut transformed);
            let a: Vec<_> = plain.iter().map(|r| &r.method).collect();
            let b: Vec<_> = transformed.iter().map(|r| &r.method).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn similarity_in_unit_interval(u in 0.0f64..=1.0, r in 0.0f64..=1.0) {
            let s = mia_similarity(u, r);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(mia_similarity(r, r), 1.0);
        }
    }
}
