//! Fluency of generated answers, scored by perplexity under a reference
//! bigram model of the world's answer texts.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::stats::sigmoid;
use super::{EvalData, MetricReport};
use crate::error::Result;
use crate::seqmodel::{Model, TokenId, Vocabulary, BOS_ID, EOS_ID};
use crate::worldgen::{encode_prompt, SplitSet, IDK_TEMPLATES};

/// Add-alpha smoothed word bigram model over token ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BigramLm {
    vocab_size: usize,
    alpha: f64,
    pair_counts: HashMap<(TokenId, TokenId), f64>,
    context_counts: HashMap<TokenId, f64>,
    /// Slope of the perplexity-to-fluency map.
    pub slope: f64,
    /// Perplexity at which fluency is one half.
    pub midpoint: f64,
}

impl BigramLm {
    pub const DEFAULT_SLOPE: f64 = 0.5;
    pub const DEFAULT_MIDPOINT: f64 = 20.0;

    /// Fits on token sequences; each is wrapped in BOS ... EOS.
    pub fn fit<'a>(vocab_size: usize, sequences: impl IntoIterator<Item = &'a [TokenId]>) -> Self {
        let mut lm = BigramLm {
            vocab_size,
            alpha: 0.1,
            pair_counts: HashMap::new(),
            context_counts: HashMap::new(),
            slope: Self::DEFAULT_SLOPE,
            midpoint: Self::DEFAULT_MIDPOINT,
        };
        for seq in sequences {
            let mut prev = BOS_ID;
            for &tok in seq.iter().chain(std::iter::once(&EOS_ID)) {
                *lm.pair_counts.entry((prev, tok)).or_default() += 1.0;
                *lm.context_counts.entry(prev).or_default() += 1.0;
                prev = tok;
            }
        }
        lm
    }

    /// Fits on every answer text of every split plus the refusal templates.
    pub fn fit_world(splits: &SplitSet, vocab: &Vocabulary) -> Result<Self> {
        let mut seqs: Vec<Vec<TokenId>> = Vec::new();
        for group in [
            &splits.forget,
            &splits.retain,
            &splits.holdout,
            &splits.real_level,
            &splits.world_level,
            &splits.celebrity,
        ] {
            for ex in group {
                seqs.push(vocab.encode(&ex.answer)?);
                seqs.push(vocab.encode(&ex.paraphrased_answer)?);
            }
        }
        for t in IDK_TEMPLATES {
            seqs.push(vocab.encode(t)?);
        }
        Ok(Self::fit(vocab.size(), seqs.iter().map(Vec::as_slice)))
    }

    pub fn prob(&self, prev: TokenId, tok: TokenId) -> f64 {
        let pair = self.pair_counts.get(&(prev, tok)).copied().unwrap_or(0.0);
        let ctx = self.context_counts.get(&prev).copied().unwrap_or(0.0);
        (pair + self.alpha) / (ctx + self.alpha * self.vocab_size as f64)
    }

    /// Per-token perplexity of `tokens` following BOS (EOS not scored).
    pub fn perplexity(&self, tokens: &[TokenId]) -> f64 {
        let mut prev = BOS_ID;
        let mut nll = 0.0;
        for &tok in tokens {
            nll -= self.prob(prev, tok).ln();
            prev = tok;
        }
        (nll / tokens.len() as f64).exp()
    }

    /// Fluency in [0, 1]; empty output scores 0.
    pub fn fluency(&self, tokens: &[TokenId]) -> f64 {
        if tokens.is_empty() {
            return 0.0;
        }
        sigmoid(self.slope * (self.midpoint - self.perplexity(tokens)))
    }
}

/// Fluency of the greedy answers to the dataset's questions.
pub fn metric_fluency(model: &Model, data: &EvalData, lm: &BigramLm) -> Result<MetricReport> {
    let values = super::per_example(data, |ex| {
        let prompt = encode_prompt(data.vocab, &ex.question)?;
        let out = model.greedy_generate(&prompt, data.max_new_tokens)?;
        Ok(lm.fluency(&out))
    })?;
    Ok(MetricReport::from_values("fluency", model, data, values))
}
