//! Unlearning objectives behind one interface, the unlearn and relearn
//! training loops, and the probing intervention.

mod loss;
mod probe;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use loss::{rmu_layers, steering_vector, unlearn_loss};
pub use probe::{apply_probe, train_probe_head, ProbeHead};

use crate::error::{config_err, input_err, Error, Result};
use crate::seqmodel::{
    clip_grad_norm, train_lm, AdamW, LmExample, Model, ModelRole, ParamGroup, TokenId, TrainConfig, Vocabulary, EOS_ID,
};
use crate::worldgen::{encode_prompt, paired_batches, qa_example, QaExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodKey {
    GradAscent,
    GradDiff,
    #[serde(rename = "IdkNLL")]
    IdkNll,
    #[serde(rename = "IdkDPO")]
    IdkDpo,
    #[serde(rename = "NPO")]
    Npo,
    #[serde(rename = "SimNPO")]
    SimNpo,
    #[serde(rename = "AltPO")]
    AltPo,
    #[serde(rename = "RMU")]
    Rmu,
    #[serde(rename = "UNDIAL")]
    Undial,
}

impl MethodKey {
    pub const ALL: [MethodKey; 9] = [
        MethodKey::GradAscent,
        MethodKey::GradDiff,
        MethodKey::IdkNll,
        MethodKey::IdkDpo,
        MethodKey::Npo,
        MethodKey::SimNpo,
        MethodKey::AltPo,
        MethodKey::Rmu,
        MethodKey::Undial,
    ];

    pub fn key(self) -> &'static str {
        match self {
            MethodKey::GradAscent => "GradAscent",
            MethodKey::GradDiff => "GradDiff",
            MethodKey::IdkNll => "IdkNLL",
            MethodKey::IdkDpo => "IdkDPO",
            MethodKey::Npo => "NPO",
            MethodKey::SimNpo => "SimNPO",
            MethodKey::AltPo => "AltPO",
            MethodKey::Rmu => "RMU",
            MethodKey::Undial => "UNDIAL",
        }
    }

    pub fn needs_reference(self) -> bool {
        matches!(
            self,
            MethodKey::IdkDpo | MethodKey::Npo | MethodKey::AltPo | MethodKey::Rmu | MethodKey::Undial
        )
    }

    /// Clip norm applied when the config leaves `grad_clip` unset.
    pub fn default_grad_clip(self) -> Option<f64> {
        matches!(self, MethodKey::GradAscent | MethodKey::GradDiff).then_some(1.0)
    }
}

impl fmt::Display for MethodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for MethodKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKey::ALL
            .into_iter()
            .find(|m| m.key() == s)
            .ok_or_else(|| Error::lookup("method", s, MethodKey::ALL.iter().map(|m| m.key())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnlearnConfig {
    pub method: MethodKey,
    /// Weight of the forget term.
    pub gamma: f64,
    /// Weight of the retain term.
    pub alpha: f64,
    pub beta: f64,
    /// SimNPO margin.
    pub delta: f64,
    /// RMU steering scale.
    pub steering_coeff: f64,
    /// RMU target layer (0-based block index).
    pub layer: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
    /// `None` uses the method's default.
    pub grad_clip: Option<f64>,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        UnlearnConfig {
            method: MethodKey::GradDiff,
            gamma: 1.0,
            alpha: 1.0,
            beta: 0.1,
            delta: 0.0,
            steering_coeff: 4.0,
            layer: 1,
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 4,
            seed: 0,
            weight_decay: 0.0,
            grad_clip: None,
        }
    }
}

impl UnlearnConfig {
    /// Per-method defaults tuned on the toy world.
    pub fn for_method(method: MethodKey) -> Self {
        let base = UnlearnConfig {
            method,
            ..Default::default()
        };
        match method {
            MethodKey::GradAscent | MethodKey::GradDiff | MethodKey::AltPo => UnlearnConfig {
                learning_rate: 6e-4,
                ..base
            },
            MethodKey::IdkNll => base,
            MethodKey::IdkDpo => UnlearnConfig {
                alpha: 2.0,
                learning_rate: 3e-3,
                epochs: 14,
                ..base
            },
            MethodKey::Npo => UnlearnConfig {
                alpha: 5.0,
                learning_rate: 6e-4,
                ..base
            },
            MethodKey::SimNpo => UnlearnConfig {
                beta: 4.5,
                learning_rate: 6e-4,
                ..base
            },
            MethodKey::Rmu => UnlearnConfig {
                alpha: 3.0,
                learning_rate: 2e-3,
                ..base
            },
            MethodKey::Undial => UnlearnConfig { beta: 10.0, ..base },
        }
    }

    /// Three learning rates around the method default: half, same, one and a half.
    pub fn default_sweep(method: MethodKey) -> Vec<UnlearnConfig> {
        let mid = UnlearnConfig::for_method(method);
        [0.5, 1.0, 1.5]
            .into_iter()
            .map(|f| UnlearnConfig {
                learning_rate: mid.learning_rate * f,
                ..mid.clone()
            })
            .collect()
    }

    pub fn validate(&self, model: &Model) -> Result<()> {
        let uses_beta = !matches!(
            self.method,
            MethodKey::GradAscent | MethodKey::GradDiff | MethodKey::IdkNll | MethodKey::Rmu
        );
        if uses_beta && !(self.beta > 0.0) {
            return Err(config_err!("{} needs beta > 0, got {}", self.method, self.beta));
        }
        if !(self.alpha >= 0.0) {
            return Err(config_err!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.learning_rate > 0.0) {
            return Err(config_err!("learning_rate must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(config_err!("batch_size must be >= 1"));
        }
        if self.method == MethodKey::Rmu {
            rmu_layers(self.layer, model.config().n_layers)?;
        }
        Ok(())
    }
}

/// A tokenized forget example; every answer ends with EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForgetItem {
    pub prompt: Vec<TokenId>,
    pub answer: Vec<TokenId>,
    pub idk: Option<Vec<TokenId>>,
    pub alts: Vec<Vec<TokenId>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetainItem {
    pub prompt: Vec<TokenId>,
    pub answer: Vec<TokenId>,
}

fn with_eos(vocab: &Vocabulary, text: &str) -> Result<Vec<TokenId>> {
    let mut ids = vocab.encode(text)?;
    ids.push(EOS_ID);
    Ok(ids)
}

impl ForgetItem {
    pub fn encode(vocab: &Vocabulary, ex: &QaExample) -> Result<Self> {
        Ok(ForgetItem {
            prompt: encode_prompt(vocab, &ex.question)?,
            answer: with_eos(vocab, &ex.answer)?,
            idk: if ex.idk_answer.is_empty() {
                None
            } else {
                Some(with_eos(vocab, &ex.idk_answer)?)
            },
            alts: ex
                .alt_answers
                .iter()
                .map(|a| with_eos(vocab, a))
                .collect::<Result<_>>()?,
        })
    }
}

impl RetainItem {
    pub fn encode(vocab: &Vocabulary, ex: &QaExample) -> Result<Self> {
        Ok(RetainItem {
            prompt: encode_prompt(vocab, &ex.question)?,
            answer: with_eos(vocab, &ex.answer)?,
        })
    }
}

/// Parameter mask for the configured method: RMU trains only its layers.
pub fn trainable_mask(model: &Model, cfg: &UnlearnConfig) -> Result<Option<Vec<bool>>> {
    if cfg.method != MethodKey::Rmu {
        return Ok(None);
    }
    let groups: Vec<ParamGroup> = rmu_layers(cfg.layer, model.config().n_layers)?
        .into_iter()
        .map(ParamGroup::Layer)
        .collect();
    Ok(Some(model.layout().mask(&groups)))
}

/// Unlearns `forget` from `target`, pairing each forget batch with a retain
/// batch. The target doubles as the frozen reference model.
pub fn run_unlearn(
    target: &Model,
    vocab: &Vocabulary,
    forget: &[QaExample],
    retain: &[QaExample],
    cfg: &UnlearnConfig,
) -> Result<Model> {
    cfg.validate(target)?;
    if forget.is_empty() {
        return Err(input_err!("forget set is empty"));
    }
    let forget_items = forget
        .iter()
        .map(|e| ForgetItem::encode(vocab, e))
        .collect::<Result<Vec<_>>>()?;
    let retain_items = retain
        .iter()
        .map(|e| RetainItem::encode(vocab, e))
        .collect::<Result<Vec<_>>>()?;
    let mask = trainable_mask(target, cfg)?;
    let clip = cfg.grad_clip.or(cfg.method.default_grad_clip());
    let reference = cfg.method.needs_reference().then_some(target);

    let mut model = target.clone().with_role(ModelRole::Unlearned);
    let mut opt = AdamW::new(model.params().len(), cfg.learning_rate, cfg.weight_decay);
    let mut grads = vec![0.0; model.params().len()];
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let batches = if retain_items.is_empty() {
            paired_batches(forget_items.len(), 1, cfg.batch_size, cfg.seed, epoch)?
                .into_iter()
                .map(|(f, _)| (f, Vec::new()))
                .collect()
        } else {
            paired_batches(forget_items.len(), retain_items.len(), cfg.batch_size, cfg.seed, epoch)?
        };
        for (fb, rb) in batches {
            let fbatch: Vec<ForgetItem> = fb.iter().map(|&i| forget_items[i].clone()).collect();
            let rbatch: Vec<RetainItem> = rb.iter().map(|&i| retain_items[i].clone()).collect();
            grads.iter_mut().for_each(|g| *g = 0.0);
            let outcome = unlearn_loss(cfg.method, &model, reference, &fbatch, &rbatch, cfg, Some(&mut grads));
            let finite = matches!(outcome, Ok(l) if l.is_finite()) && grads.iter().all(|g| g.is_finite());
            if !finite {
                if let Err(e) = outcome {
                    if !matches!(e, Error::NonFinite { .. }) {
                        return Err(e);
                    }
                }
                return Err(Error::Diverged {
                    step,
                    last_stable: Box::new(model),
                });
            }
            if let Some(c) = clip {
                clip_grad_norm(&mut grads, c, mask.as_deref());
            }
            let before = model.clone();
            opt.step(model.params_mut(), &grads, mask.as_deref());
            if !model.is_finite() {
                return Err(Error::Diverged {
                    step,
                    last_stable: Box::new(before),
                });
            }
            step += 1;
        }
    }
    log::debug!("{} finished after {step} steps", cfg.method);
    Ok(model)
}

/// Plain NLL finetuning on the full forget set.
pub fn run_relearn(model: &Model, vocab: &Vocabulary, forget: &[QaExample], cfg: &TrainConfig) -> Result<Model> {
    let corpus = forget
        .iter()
        .map(|e| qa_example(vocab, &e.question, &e.answer))
        .collect::<Result<Vec<LmExample>>>()?;
    if cfg.epochs == 0 {
        return Ok(model.clone());
    }
    train_lm(&corpus, cfg, Some(model), model.config())
}

/// One evaluated point of a hyperparameter sweep.
#[derive(Debug, Clone)]
pub struct SweepTrial {
    pub config: UnlearnConfig,
    pub model: Model,
    pub score: f64,
}

/// Runs every config and scores the result; the best trial (first on ties)
/// is returned alongside all trials. Diverged runs score their last stable
/// model.
pub fn sweep(
    target: &Model,
    vocab: &Vocabulary,
    forget: &[QaExample],
    retain: &[QaExample],
    grid: &[UnlearnConfig],
    mut objective: impl FnMut(&Model) -> Result<f64>,
) -> Result<(usize, Vec<SweepTrial>)> {
    if grid.is_empty() {
        return Err(input_err!("empty sweep grid"));
    }
    let mut trials = Vec::with_capacity(grid.len());
    for cfg in grid {
        let model = match run_unlearn(target, vocab, forget, retain, cfg) {
            Ok(m) => m,
            Err(Error::Diverged { last_stable, step }) => {
                log::warn!("{} diverged at step {step}; scoring last stable model", cfg.method);
                *last_stable
            }
            Err(e) => return Err(e),
        };
        let score = objective(&model)?;
        trials.push(SweepTrial {
            config: cfg.clone(),
            model,
            score,
        });
    }
    let best = trials
        .iter()
        .enumerate()
        .fold(0, |best, (i, t)| if t.score > trials[best].score { i } else { best });
    Ok((best, trials))
}
