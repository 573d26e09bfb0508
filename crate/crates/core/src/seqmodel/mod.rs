//! Tiny autoregressive language model: training, scoring, greedy decoding,
//! hidden-state access and simulated weight quantization.

mod checkpoint;
mod model;
mod quant;
mod train;
mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_FORMAT_VERSION};
pub use model::{
    argmax, log_softmax, softmax, ForwardCache, Layout, Model, ModelConfig, ModelRole, ParamGroup, TensorInfo,
};
pub use quant::{quantize_dequantize, quantize_tensor};
pub use train::{
    clip_grad_norm, corpus_mean_nll, example_nll, nll_and_grad, train_lm, train_lm_masked, train_lm_with_snapshots,
    AdamW, LmExample, TrainConfig,
};
pub use vocab::{tokenize_words, TokenId, Vocabulary, BOS, BOS_ID, EOS, EOS_ID};

use crate::error::{input_err, Result};

impl Model {
    /// `log p(target_i | prompt, target_<i)` for each target position.
    pub fn token_logprobs(&self, prompt: &[TokenId], target: &[TokenId]) -> Result<Vec<f64>> {
        if target.is_empty() {
            return Err(input_err!("target must contain at least one token"));
        }
        if prompt.is_empty() {
            return Err(input_err!("prompt must contain at least one token"));
        }
        let seq: Vec<TokenId> = prompt.iter().chain(target).copied().collect();
        let cache = self.forward(&seq, None)?;
        Ok(target
            .iter()
            .enumerate()
            .map(|(i, &tok)| {
                let row = cache.logits_row(prompt.len() + i - 1);
                log_softmax(row)[tok as usize]
            })
            .collect())
    }

    /// `exp(mean logprob)` when normalized, else `exp(sum logprob)`.
    pub fn answer_score(&self, prompt: &[TokenId], target: &[TokenId], length_normalized: bool) -> Result<f64> {
        let lp = self.token_logprobs(prompt, target)?;
        Ok(score_from_logprobs(&lp, length_normalized))
    }

    /// Argmax decoding (ties to the lowest id) until EOS, the token budget or
    /// the context limit. The returned continuation excludes EOS.
    pub fn greedy_generate(&self, prompt: &[TokenId], max_new_tokens: usize) -> Result<Vec<TokenId>> {
        self.check_tokens(prompt)?;
        let mut seq = prompt.to_vec();
        let mut out = Vec::new();
        while out.len() < max_new_tokens && seq.len() < self.config().max_seq_len {
            let cache = self.forward(&seq, None)?;
            let next = argmax(cache.logits_row(seq.len() - 1)) as TokenId;
            if next == EOS_ID {
                break;
            }
            out.push(next);
            seq.push(next);
        }
        Ok(out)
    }

    /// Residual-stream vectors after block `layer`, one per input position.
    pub fn hidden_states(&self, tokens: &[TokenId], layer: usize) -> Result<Vec<Vec<f64>>> {
        let cache = self.forward(tokens, Some(layer))?;
        let d = cache.hidden_dim();
        let h = cache.hidden(layer).expect("layer computed");
        Ok(h.chunks(d).map(<[f64]>::to_vec).collect())
    }
}

pub fn score_from_logprobs(logprobs: &[f64], length_normalized: bool) -> f64 {
    let sum: f64 = logprobs.iter().sum();
    if length_normalized {
        (sum / logprobs.len() as f64).exp()
    } else {
        sum.exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(v: usize, d: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: v,
            max_seq_len: 16,
            hidden_dim: d,
            n_layers: 2,
            n_heads: 2,
            mlp_ratio: 2,
        }
    }

    /// Every position gets the same logits: final norm collapses to a
    /// constant vector `e_0`, and head row 0 holds the logits.
    fn constant_logits(logits: &[f64]) -> Model {
        let mut m = Model::new(cfg(logits.len(), 4), 0, ModelRole::Target).unwrap();
        m.tensor_mut("lnf.g").unwrap().iter_mut().for_each(|g| *g = 0.0);
        let b = m.tensor_mut("lnf.b").unwrap();
        b.iter_mut().for_each(|x| *x = 0.0);
        b[0] = 1.0;
        let head = m.tensor_mut("lm_head").unwrap();
        head.iter_mut().for_each(|x| *x = 0.0);
        head[..logits.len()].copy_from_slice(logits);
        m
    }

    #[test]
    fn certain_model_has_zero_logprob() {
        let mut logits = vec![0.0; 5];
        logits[3] = 1000.0;
        let m = constant_logits(&logits);
        assert_eq!(m.token_logprobs(&[0], &[3, 3]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.answer_score(&[0], &[3, 3], true).unwrap(), 1.0);
        assert_eq!(m.answer_score(&[0], &[3, 3], false).unwrap(), 1.0);
    }

    #[test]
    fn uniform_model_logprobs() {
        let m = constant_logits(&[0.0; 4]);
        let lp = m.token_logprobs(&[0, 2], &[1, 2, 3]).unwrap();
        assert_eq!(lp.len(), 3);
        for v in lp {
            assert!((v - 0.25f64.ln()).abs() < 1e-12);
        }
        assert!((m.answer_score(&[0], &[2, 3], true).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn score_arithmetic() {
        let lp = [0.5f64.ln(), 0.5f64.ln()];
        assert!((score_from_logprobs(&lp, true) - 0.5).abs() < 1e-12);
        assert!((score_from_logprobs(&lp, false) - 0.25).abs() < 1e-12);
        // duplicating the per-token pattern leaves the normalized score alone
        let dup = [lp[0], lp[1], lp[0], lp[1]];
        assert!((score_from_logprobs(&dup, true) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn logprob_input_errors() {
        let m = constant_logits(&[0.0; 4]);
        assert!(m.token_logprobs(&[0], &[]).is_err());
        assert!(m.token_logprobs(&[0], &[7]).is_err());
        assert!(m.token_logprobs(&[], &[1]).is_err());
    }

    #[test]
    fn zero_budget_generates_nothing() {
        let m = Model::new(cfg(6, 4), 1, ModelRole::Target).unwrap();
        assert!(m.greedy_generate(&[0, 2], 0).unwrap().is_empty());
    }

    #[test]
    fn hidden_state_shape_and_range() {
        let m = Model::new(cfg(6, 8), 1, ModelRole::Target).unwrap();
        let h = m.hidden_states(&[0, 2, 3, 4, 5], 0).unwrap();
        assert_eq!(h.len(), 5);
        assert!(h.iter().all(|v| v.len() == 8 && v.iter().all(|x| x.is_finite())));
        assert_eq!(h, m.hidden_states(&[0, 2, 3, 4, 5], 0).unwrap());
        assert!(m.hidden_states(&[0, 1], 2).is_err());
    }
}
