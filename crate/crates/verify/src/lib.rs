//! Brute-force reference implementations used by the acceptance suite.
//! Everything here favours obviousness over speed: one forward pass per
//! prefix, subset enumeration, quadratic scans.

use ou_core::seqmodel::{Model, ModelConfig, ModelRole, TokenId, Vocabulary, BOS_ID};
use ou_core::worldgen::QaExample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORDS: [&str; 6] = ["ka", "lo", "mi", "nu", "po", "ri"];

pub fn oracle_vocab() -> Vocabulary {
    Vocabulary::from_tokens(WORDS)
}

pub fn oracle_model(vocab: &Vocabulary, seed: u64) -> Model {
    let cfg = ModelConfig {
        vocab_size: vocab.size(),
        max_seq_len: 24,
        hidden_dim: 8,
        n_layers: 1,
        n_heads: 2,
        mlp_ratio: 2,
    };
    let mut m = Model::new(cfg, seed, ModelRole::Target).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for p in m.params_mut() {
        *p += rng.random_range(-1.0..1.0);
    }
    m
}

pub fn last_row(model: &Model, seq: &[TokenId]) -> Vec<f64> {
    model.forward(seq, None).unwrap().logits_row(seq.len() - 1).to_vec()
}

pub fn first_argmax(row: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as TokenId
}

pub fn log_prob(row: &[f64], tok: TokenId) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
    row[tok as usize] - max - z.ln()
}

/// Per-token log-probabilities, one forward pass per prefix.
pub fn brute_logprobs(model: &Model, prompt: &[TokenId], answer: &[TokenId]) -> Vec<f64> {
    let mut seq = prompt.to_vec();
    let mut out = Vec::new();
    for &tok in answer {
        out.push(log_prob(&last_row(model, &seq), tok));
        seq.push(tok);
    }
    out
}

pub fn random_words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<&'static str> {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect()
}

pub fn example(question: &str, answer: &str) -> QaExample {
    QaExample {
        entity_id: 0,
        entity: "x".into(),
        attribute: "y".into(),
        value: "z".into(),
        question: question.into(),
        answer: answer.into(),
        paraphrased_question: String::new(),
        paraphrased_answer: String::new(),
        perturbed_answers: Vec::new(),
        idk_answer: String::new(),
        alt_answers: Vec::new(),
    }
}

pub fn prompt_ids(vocab: &Vocabulary, q: &str) -> Vec<TokenId> {
    let mut p = vec![BOS_ID];
    p.extend(vocab.encode(q).unwrap());
    p
}

/// Greedy continuation with each token swapped for a random word with
/// probability 0.3, so answers are partly memorized.
pub fn corrupted_continuation(
    model: &Model,
    vocab: &Vocabulary,
    prompt: &[TokenId],
    len: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<TokenId> {
    let mut seq = prompt.to_vec();
    let mut out = Vec::new();
    for _ in 0..len {
        let mut tok = first_argmax(&last_row(model, &seq));
        if rng.random_bool(0.3) || tok < 2 {
            tok = vocab.id(WORDS[rng.random_range(0..WORDS.len())]).unwrap();
        }
        out.push(tok);
        seq.push(tok);
    }
    out
}

pub fn brute_em(model: &Model, prompt: &[TokenId], answer: &[TokenId]) -> f64 {
    let hits = (0..answer.len())
        .filter(|&i| {
            let seq: Vec<TokenId> = prompt.iter().chain(&answer[..i]).copied().collect();
            first_argmax(&last_row(model, &seq)) == answer[i]
        })
        .count();
    hits as f64 / answer.len() as f64
}

/// Smallest prefix length from which free greedy decoding reproduces the
/// rest of the answer.
pub fn brute_es(model: &Model, prompt: &[TokenId], answer: &[TokenId]) -> f64 {
    let n = answer.len();
    for k in 0..=n {
        let mut seq: Vec<TokenId> = prompt.iter().chain(&answer[..k]).copied().collect();
        let mut decoded = Vec::new();
        for _ in k..n {
            let t = first_argmax(&last_row(model, &seq));
            decoded.push(t);
            seq.push(t);
        }
        if decoded == answer[k..] {
            return 1.0 - k as f64 / n as f64;
        }
    }
    unreachable!("k = n always reproduces the empty suffix")
}

pub fn brute_lcs(a: &[String], b: &[String]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let picked: Vec<&String> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        let is_subseq = {
            let mut it = b.iter();
            picked.iter().all(|w| it.any(|x| x == *w))
        };
        if is_subseq {
            best = best.max(picked.len());
        }
    }
    best
}

pub fn brute_rouge(c: &str, r: &str) -> (usize, f64) {
    let ct: Vec<String> = c.split_whitespace().map(str::to_lowercase).collect();
    let rt: Vec<String> = r.split_whitespace().map(str::to_lowercase).collect();
    if ct.is_empty() || rt.is_empty() {
        return (0, 0.0);
    }
    let l = brute_lcs(&ct, &rt);
    if l == 0 {
        return (0, 0.0);
    }
    let p = l as f64 / ct.len() as f64;
    let rec = l as f64 / rt.len() as f64;
    (l, 2.0 * p * rec / (p + rec))
}

/// Mann-Whitney U with mid-ranks.
pub fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&v| (v, true))
        .chain(neg.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let n1 = pos.len() as f64;
    (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * neg.len() as f64)
}

pub fn brute_ks(a: &[f64], b: &[f64]) -> (f64, f64) {
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    let d = a
        .iter()
        .chain(b)
        .map(|&x| (cdf(a, x) - cdf(b, x)).abs())
        .fold(0.0, f64::max);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let x = (n * m / (n + m)).sqrt() * d;
    let p = if x == 0.0 {
        1.0
    } else {
        let s: f64 = (1..=20000)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k as f64).powi(2) * x * x).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    };
    (d, p)
}

pub fn brute_min_k(lp: &[f64], k_frac: f64) -> f64 {
    let n = lp.len();
    let k = ((k_frac * n as f64).floor() as usize).clamp(1, n);
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == k {
            let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| lp[i]).sum();
            best = best.min(s);
        }
    }
    -best / k as f64
}
