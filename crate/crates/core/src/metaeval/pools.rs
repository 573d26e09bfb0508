use serde::{Deserialize, Serialize};

use crate::error::{data_err, input_err, Error, Result};
use crate::methods::MethodKey;
use crate::seqmodel::{train_lm_with_snapshots, LmExample, Model, ModelConfig, ModelRole, TrainConfig, Vocabulary};
use crate::worldgen::{biographies, qa_example, text_example, QaExample, SplitSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PoolLabel {
    P,
    N,
    #[serde(rename = "unlearned")]
    Unlearned,
    #[serde(rename = "retain")]
    Retain,
}

/// How the forget-set slot of a pool member's training data is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataVariant {
    /// Paraphrased questions with paraphrased answers; keeps the facts.
    ForgetParaphrased,
    /// One biography per forget entity; keeps the facts.
    ForgetBio,
    /// Forget questions paired with a wrong value.
    ForgetPerturbed,
    /// Biographies of unrelated entities.
    CelebBio,
}

impl DataVariant {
    pub const ALL: [DataVariant; 4] = [
        DataVariant::ForgetParaphrased,
        DataVariant::ForgetBio,
        DataVariant::ForgetPerturbed,
        DataVariant::CelebBio,
    ];

    pub fn key(self) -> &'static str {
        match self {
            DataVariant::ForgetParaphrased => "forget_paraphrased",
            DataVariant::ForgetBio => "forget_bio",
            DataVariant::ForgetPerturbed => "forget_perturbed",
            DataVariant::CelebBio => "celeb_bio",
        }
    }

    /// Whether the variant carries the forget-set facts.
    pub fn label(self) -> PoolLabel {
        match self {
            DataVariant::ForgetParaphrased | DataVariant::ForgetBio => PoolLabel::P,
            DataVariant::ForgetPerturbed | DataVariant::CelebBio => PoolLabel::N,
        }
    }

    pub fn corpus(self, splits: &SplitSet, vocab: &Vocabulary) -> Result<Vec<LmExample>> {
        match self {
            DataVariant::ForgetParaphrased => splits
                .forget
                .iter()
                .map(|e| qa_example(vocab, &e.paraphrased_question, &e.paraphrased_answer))
                .collect(),
            DataVariant::ForgetBio => bio_corpus(vocab, &splits.forget),
            DataVariant::ForgetPerturbed => splits
                .forget
                .iter()
                .map(|e| {
                    let wrong = e
                        .perturbed_answers
                        .first()
                        .ok_or_else(|| data_err!("forget example `{}` has no perturbed answer", e.question))?;
                    qa_example(vocab, &e.question, wrong)
                })
                .collect(),
            DataVariant::CelebBio => {
                if splits.celebrity.is_empty() {
                    return Err(data_err!("celebrity split is empty"));
                }
                bio_corpus(vocab, &splits.celebrity)
            }
        }
    }
}

impl std::fmt::Display for DataVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

fn bio_corpus(vocab: &Vocabulary, examples: &[QaExample]) -> Result<Vec<LmExample>> {
    biographies(examples).iter().map(|b| text_example(vocab, b)).collect()
}

fn qa_with_paraphrase(vocab: &Vocabulary, examples: &[QaExample]) -> Result<Vec<LmExample>> {
    let mut out = Vec::with_capacity(2 * examples.len());
    for e in examples {
        out.push(qa_example(vocab, &e.question, &e.answer)?);
        out.push(qa_example(vocab, &e.paraphrased_question, &e.paraphrased_answer)?);
    }
    Ok(out)
}

/// Everything a model may know without the forget set: retain, real-level
/// and world-level QA with paraphrases, plus retain and real-level
/// biographies. This is the retain model's corpus.
pub fn base_corpus(splits: &SplitSet, vocab: &Vocabulary) -> Result<Vec<LmExample>> {
    let mut out = Vec::new();
    for set in [&splits.retain, &splits.real_level, &splits.world_level] {
        out.extend(qa_with_paraphrase(vocab, set)?);
    }
    out.extend(bio_corpus(vocab, &splits.retain)?);
    out.extend(bio_corpus(vocab, &splits.real_level)?);
    Ok(out)
}

/// The base corpus plus the forget set in the same forms.
pub fn target_corpus(splits: &SplitSet, vocab: &Vocabulary) -> Result<Vec<LmExample>> {
    let mut out = base_corpus(splits, vocab)?;
    out.extend(qa_with_paraphrase(vocab, &splits.forget)?);
    out.extend(bio_corpus(vocab, &splits.forget)?);
    Ok(out)
}

/// Where a pool member came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub label: PoolLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_variant: Option<DataVariant>,
    pub learning_rate: f64,
    pub epoch_checkpoint: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodKey>,
    #[serde(default)]
    pub hyperparams: serde_json::Value,
}

impl Provenance {
    /// Short unique name, usable as a directory name.
    pub fn member_id(&self) -> String {
        let what = match (self.data_variant, self.method) {
            (Some(v), _) => v.key().to_string(),
            (None, Some(m)) => m.key().to_string(),
            (None, None) => "model".to_string(),
        };
        let mut id = format!("{what}_lr{:e}_ep{}", self.learning_rate, self.epoch_checkpoint);
        if let Some(tag) = self.hyperparams.get("tag").and_then(|t| t.as_str()) {
            id.push('_');
            id.push_str(tag);
        }
        id
    }
}

#[derive(Debug, Clone)]
pub struct PoolMember {
    pub model: Model,
    pub provenance: Provenance,
}

#[derive(Debug, Clone)]
pub struct ModelPool {
    pub label: PoolLabel,
    pub members: Vec<PoolMember>,
    /// Grid cells that could not be trained, with the reason.
    pub failed: Vec<(Provenance, String)>,
}

impl ModelPool {
    pub fn new(label: PoolLabel) -> Self {
        ModelPool {
            label,
            members: Vec::new(),
            failed: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Pool training grid: every variant is trained at every learning rate and
/// snapshotted at every checkpoint epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolGrid {
    pub positive: Vec<DataVariant>,
    pub negative: Vec<DataVariant>,
    pub learning_rates: Vec<f64>,
    pub checkpoints: Vec<usize>,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PoolGrid {
    fn default() -> Self {
        PoolGrid {
            positive: vec![DataVariant::ForgetParaphrased, DataVariant::ForgetBio],
            negative: vec![DataVariant::ForgetPerturbed, DataVariant::CelebBio],
            learning_rates: vec![2e-3, 3e-3, 4e-3],
            checkpoints: vec![15, 20],
            batch_size: 8,
            seed: 0,
        }
    }
}

pub const MIN_POOL_SIZE: usize = 3;

impl PoolGrid {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() || self.checkpoints.is_empty() {
            return Err(input_err!(
                "pool grid needs at least one learning rate and one checkpoint"
            ));
        }
        if self.checkpoints.contains(&0) {
            return Err(input_err!("pool checkpoints must be positive epochs"));
        }
        for (label, variants) in [(PoolLabel::P, &self.positive), (PoolLabel::N, &self.negative)] {
            if variants.is_empty() {
                return Err(input_err!("pool {label:?} has no data variants"));
            }
            if let Some(v) = variants.iter().find(|v| v.label() != label) {
                return Err(input_err!("variant `{v}` does not belong in pool {label:?}"));
            }
        }
        Ok(())
    }

    pub fn cells_per_pool(&self) -> (usize, usize) {
        let per = self.learning_rates.len() * self.checkpoints.len();
        (self.positive.len() * per, self.negative.len() * per)
    }
}

/// Trains every grid cell. Cells that fail are recorded; each pool must end
/// up with at least [`MIN_POOL_SIZE`] members.
pub fn build_pools(
    splits: &SplitSet,
    vocab: &Vocabulary,
    grid: &PoolGrid,
    arch: &ModelConfig,
) -> Result<(ModelPool, ModelPool)> {
    build_pools_with(splits, vocab, grid, arch, |corpus, cfg, snaps| {
        train_lm_with_snapshots(corpus, cfg, None, arch, snaps)
    })
}

pub(crate) fn build_pools_with(
    splits: &SplitSet,
    vocab: &Vocabulary,
    grid: &PoolGrid,
    arch: &ModelConfig,
    mut train: impl FnMut(&[LmExample], &TrainConfig, &[usize]) -> Result<Vec<(usize, Model)>>,
) -> Result<(ModelPool, ModelPool)> {
    grid.validate()?;
    arch.validate()?;
    let base = base_corpus(splits, vocab)?;
    let mut pools = [ModelPool::new(PoolLabel::P), ModelPool::new(PoolLabel::N)];
    for variant in grid.positive.iter().chain(&grid.negative) {
        let pool = &mut pools[usize::from(variant.label() == PoolLabel::N)];
        let mut corpus = base.clone();
        corpus.extend(variant.corpus(splits, vocab)?);
        for &lr in &grid.learning_rates {
            let cfg = TrainConfig {
                learning_rate: lr,
                epochs: *grid.checkpoints.iter().max().expect("validated"),
                batch_size: grid.batch_size,
                seed: grid.seed,
                ..TrainConfig::default()
            };
            let provenance = |epoch| Provenance {
                label: pool.label,
                data_variant: Some(*variant),
                learning_rate: lr,
                epoch_checkpoint: epoch,
                method: None,
                hyperparams: serde_json::json!({ "batch_size": grid.batch_size, "seed": grid.seed }),
            };
            match train(&corpus, &cfg, &grid.checkpoints) {
                Ok(snaps) => {
                    for (epoch, model) in snaps {
                        let provenance = provenance(epoch);
                        log::info!("pool {:?}: trained {}", pool.label, provenance.member_id());
                        pool.members.push(PoolMember {
                            model: model.with_role(ModelRole::Pool),
                            provenance,
                        });
                    }
                }
                Err(e) => {
                    log::warn!("pool {:?}: {variant} at lr {lr} failed: {e}", pool.label);
                    for &epoch in &grid.checkpoints {
                        pool.failed.push((provenance(epoch), e.to_string()));
                    }
                }
            }
        }
    }
    let [p, n] = pools;
    for pool in [&p, &n] {
        if pool.len() < MIN_POOL_SIZE {
            return Err(Error::Data(format!(
                "pool {:?} has {} trained members, need at least {MIN_POOL_SIZE}",
                pool.label,
                pool.len()
            )));
        }
    }
    Ok((p, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldgen::{generate_world, make_splits};

    fn setup() -> (SplitSet, Vocabulary) {
        let splits = make_splits(&generate_world(3, 12, 2).unwrap(), 0.25).unwrap();
        let vocab = splits.vocabulary();
        (splits, vocab)
    }

    #[test]
    fn variant_labels_and_corpora() {
        let (splits, vocab) = setup();
        for v in DataVariant::ALL {
            let c = v.corpus(&splits, &vocab).unwrap();
            assert!(!c.is_empty(), "{v}");
        }
        let para = DataVariant::ForgetParaphrased.corpus(&splits, &vocab).unwrap();
        assert_eq!(para.len(), splits.forget.len());
        assert_eq!(DataVariant::ForgetBio.label(), PoolLabel::P);
        assert_eq!(DataVariant::CelebBio.label(), PoolLabel::N);
    }

    #[test]
    fn base_corpus_excludes_forget_values() {
        let (splits, vocab) = setup();
        let base = base_corpus(&splits, &vocab).unwrap();
        let target = target_corpus(&splits, &vocab).unwrap();
        assert!(target.len() > base.len());
        assert_eq!(&target[..base.len()], &base[..]);
        let forget_names: Vec<_> = splits.forget.iter().map(|e| vocab.encode(&e.entity).unwrap()).collect();
        for ex in &base {
            for name in &forget_names {
                assert!(!ex.tokens.windows(name.len()).any(|w| w == &name[..]));
            }
        }
    }

    #[test]
    fn desk_grid_counts_and_failures() {
        let (splits, vocab) = setup();
        let arch = ModelConfig::new(vocab.size(), 48);
        let grid = PoolGrid {
            learning_rates: vec![1e-3, 2e-3],
            checkpoints: vec![1, 2],
            ..PoolGrid::default()
        };
        assert_eq!(grid.cells_per_pool(), (8, 8));
        let fake = |_: &[LmExample], cfg: &TrainConfig, snaps: &[usize]| {
            Ok(snaps
                .iter()
                .map(|&e| (e, Model::new(arch, cfg.seed, ModelRole::Target).unwrap()))
                .collect())
        };
        let (p, n) = build_pools_with(&splits, &vocab, &grid, &arch, fake).unwrap();
        assert_eq!((p.len(), n.len()), (8, 8));
        assert!(p.members.iter().all(|m| m.provenance.label == PoolLabel::P));
        let mut ids: Vec<_> = p
            .members
            .iter()
            .chain(&n.members)
            .map(|m| m.provenance.member_id())
            .collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 16);

        // every cell failing leaves the pools too small
        let failing =
            |_: &[LmExample], _: &TrainConfig, _: &[usize]| -> Result<Vec<(usize, Model)>> { Err(input_err!("boom")) };
        assert!(matches!(
            build_pools_with(&splits, &vocab, &grid, &arch, failing),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn provenance_round_trips_through_json() {
        let p = Provenance {
            label: PoolLabel::Unlearned,
            data_variant: None,
            learning_rate: 1e-3,
            epoch_checkpoint: 5,
            method: Some(MethodKey::Npo),
            hyperparams: serde_json::json!({"beta": 0.1, "tag": "b0.1"}),
        };
        let back: Provenance = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        assert_eq!(p.member_id(), "NPO_lr1e-3_ep5_b0.1");
    }

    #[test]
    fn grid_validation() {
        let bad = PoolGrid {
            positive: vec![DataVariant::CelebBio],
            ..PoolGrid::default()
        };
        assert!(bad.validate().is_err());
        let zero = PoolGrid {
            checkpoints: vec![0],
            ..PoolGrid::default()
        };
        assert!(zero.validate().is_err());
    }
}
