use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{log_softmax, Model, ModelConfig};
use super::vocab::TokenId;
use crate::error::{input_err, Error, Result};

/// One training sequence. Tokens at positions `loss_start..` are predicted
/// (and scored); earlier positions are context only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmExample {
    pub tokens: Vec<TokenId>,
    pub loss_start: usize,
}

impl LmExample {
    pub fn new(tokens: Vec<TokenId>, loss_start: usize) -> Self {
        LmExample { tokens, loss_start }
    }

    /// Prompt tokens are context, answer tokens are targets.
    pub fn prompt_answer(prompt: &[TokenId], answer: &[TokenId]) -> Self {
        let tokens = prompt.iter().chain(answer).copied().collect();
        LmExample {
            tokens,
            loss_start: prompt.len(),
        }
    }

    pub fn n_targets(&self) -> usize {
        self.tokens.len().saturating_sub(self.loss_start)
    }

    fn validate(&self) -> Result<()> {
        if self.loss_start == 0 || self.loss_start >= self.tokens.len() {
            return Err(input_err!(
                "loss_start {} must lie in 1..{}",
                self.loss_start,
                self.tokens.len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer_name: String,
    pub weight_decay: f64,
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-3,
            epochs: 10,
            batch_size: 8,
            seed: 0,
            optimizer_name: "adamw".into(),
            weight_decay: 0.0,
            grad_clip: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(input_err!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return Err(input_err!("batch_size must be >= 1"));
        }
        if !matches!(self.optimizer_name.as_str(), "adamw" | "sgd") {
            return Err(input_err!("unknown optimizer `{}` (adamw, sgd)", self.optimizer_name));
        }
        Ok(())
    }
}

/// AdamW with decoupled weight decay; `sgd` mode skips the moment estimates.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    sgd: bool,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(n_params: usize, lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            sgd: false,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn from_config(n_params: usize, cfg: &TrainConfig) -> Self {
        let mut opt = Self::new(n_params, cfg.learning_rate, cfg.weight_decay);
        opt.sgd = cfg.optimizer_name == "sgd";
        opt
    }

    /// Updates `params` in place. Entries where `mask` is false are skipped
    /// entirely (no decay, no moment update).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], mask: Option<&[bool]>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            if mask.is_some_and(|m| !m[i]) {
                continue;
            }
            let g = grads[i];
            if self.sgd {
                params[i] -= self.lr * (g + self.weight_decay * params[i]);
                continue;
            }
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * (mh / (vh.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}

/// Rescales `grads` to at most `max_norm` (L2 over the masked entries).
/// Returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64, mask: Option<&[bool]>) -> f64 {
    let norm = grads
        .iter()
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|m| m[*i]))
        .map(|(_, g)| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Token-mean NLL of one example; when `grads` is given, adds
/// `scale * d(NLL)/d(params)` into it.
pub fn nll_and_grad(model: &Model, ex: &LmExample, grads: Option<&mut [f64]>, scale: f64) -> Result<f64> {
    ex.validate()?;
    let cache = model.forward(&ex.tokens, None)?;
    let v = cache.vocab_size();
    let n = ex.n_targets() as f64;
    let mut nll = 0.0;
    let mut dlogits = grads.as_ref().map(|_| vec![0.0; ex.tokens.len() * v]);
    for t in ex.loss_start..ex.tokens.len() {
        let lp = log_softmax(cache.logits_row(t - 1));
        let tgt = ex.tokens[t] as usize;
        nll -= lp[tgt];
        if let Some(dl) = dlogits.as_mut() {
            let row = &mut dl[(t - 1) * v..][..v];
            for (j, r) in row.iter_mut().enumerate() {
                *r = lp[j].exp() * scale / n;
            }
            row[tgt] -= scale / n;
        }
    }
    if let (Some(g), Some(dl)) = (grads, dlogits) {
        model.backward(&cache, Some(&dl), None, g);
    }
    Ok(nll / n)
}

pub fn example_nll(model: &Model, ex: &LmExample) -> Result<f64> {
    nll_and_grad(model, ex, None, 1.0)
}

/// Mean over examples of each example's token-mean NLL.
pub fn corpus_mean_nll(model: &Model, corpus: &[LmExample]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(input_err!("empty corpus"));
    }
    let mut total = 0.0;
    for ex in corpus {
        total += example_nll(model, ex)?;
    }
    Ok(total / corpus.len() as f64)
}

/// Trains on `corpus` starting from `init` (or a fresh model built from
/// `arch` and `cfg.seed`).
pub fn train_lm(corpus: &[LmExample], cfg: &TrainConfig, init: Option<&Model>, arch: &ModelConfig) -> Result<Model> {
    let mut snaps = train_lm_with_snapshots(corpus, cfg, init, arch, &[cfg.epochs])?;
    Ok(snaps.pop().expect("final snapshot").1)
}

/// Like [`train_lm`] but also returns copies of the model after each epoch
/// listed in `snapshot_epochs` (epoch 0 = before training).
pub fn train_lm_with_snapshots(
    corpus: &[LmExample],
    cfg: &TrainConfig,
    init: Option<&Model>,
    arch: &ModelConfig,
    snapshot_epochs: &[usize],
) -> Result<Vec<(usize, Model)>> {
    let model = match init {
        Some(m) => m.clone(),
        None => Model::new(*arch, cfg.seed, super::ModelRole::Target)?,
    };
    fit(corpus, cfg, model, None, snapshot_epochs)
}

/// Trains only the parameters where `mask` is true.
pub fn train_lm_masked(corpus: &[LmExample], cfg: &TrainConfig, init: &Model, mask: &[bool]) -> Result<Model> {
    if mask.len() != init.params().len() {
        return Err(input_err!(
            "mask has {} entries for {} parameters",
            mask.len(),
            init.params().len()
        ));
    }
    let mut snaps = fit(corpus, cfg, init.clone(), Some(mask), &[cfg.epochs])?;
    Ok(snaps.pop().expect("final snapshot").1)
}

fn fit(
    corpus: &[LmExample],
    cfg: &TrainConfig,
    mut model: Model,
    mask: Option<&[bool]>,
    snapshot_epochs: &[usize],
) -> Result<Vec<(usize, Model)>> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(input_err!("empty corpus"));
    }
    for ex in corpus {
        ex.validate()?;
    }
    let mut opt = AdamW::from_config(model.params().len(), cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_7a1e);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut grads = vec![0.0; model.params().len()];
    let mut snaps = Vec::new();
    if snapshot_epochs.contains(&0) {
        snaps.push((0, model.clone()));
    }
    let mut step = 0usize;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &i in batch {
                loss += scale * nll_and_grad(&model, &corpus[i], Some(&mut grads), scale)?;
            }
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    step,
                    stage: "train_lm".into(),
                });
            }
            if let Some(c) = cfg.grad_clip {
                clip_grad_norm(&mut grads, c, mask);
            }
            opt.step(model.params_mut(), &grads, mask);
            step += 1;
        }
        log::debug!("train_lm epoch {epoch} done ({step} steps)");
        if snapshot_epochs.contains(&epoch) {
            snaps.push((epoch, model.clone()));
        }
    }
    Ok(snaps)
}
