//! The nine unlearning objectives with their analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ForgetItem, MethodKey, RetainItem, UnlearnConfig};
use crate::error::{config_err, data_err, Error, Result};
use crate::metrics::{log_sigmoid, sigmoid};
use crate::seqmodel::{log_softmax, softmax, ForwardCache, Model, TokenId};

/// Forward pass over `[prompt, answer]` with the answer's summed log-prob.
struct Scored {
    cache: ForwardCache,
    prompt_len: usize,
    answer: Vec<TokenId>,
    logprob: f64,
}

fn score(model: &Model, prompt: &[TokenId], answer: &[TokenId]) -> Result<Scored> {
    let seq: Vec<TokenId> = prompt.iter().chain(answer).copied().collect();
    let cache = model.forward(&seq, None)?;
    let logprob = answer
        .iter()
        .enumerate()
        .map(|(i, &tok)| log_softmax(cache.logits_row(prompt.len() + i - 1))[tok as usize])
        .sum();
    Ok(Scored {
        cache,
        prompt_len: prompt.len(),
        answer: answer.to_vec(),
        logprob,
    })
}

fn seq_logprob(model: &Model, prompt: &[TokenId], answer: &[TokenId]) -> Result<f64> {
    Ok(score(model, prompt, answer)?.logprob)
}

/// Adds `weight * d(logprob)/d(params)` into `grads`.
fn backprop_logprob(model: &Model, s: &Scored, weight: f64, grads: &mut [f64]) {
    if weight == 0.0 {
        return;
    }
    let v = s.cache.vocab_size();
    let mut dl = vec![0.0; s.cache.len() * v];
    for (i, &tok) in s.answer.iter().enumerate() {
        let t = s.prompt_len + i - 1;
        let p = softmax(s.cache.logits_row(t));
        let row = &mut dl[t * v..][..v];
        // d(-logprob)/dz = p - onehot, so d(logprob)/dz = onehot - p
        for (r, pj) in row.iter_mut().zip(&p) {
            *r = -weight * pj;
        }
        row[tok as usize] += weight;
    }
    model.backward(&s.cache, Some(&dl), None, grads);
}

/// `scale * mean_r NLL(y_r)` plus its gradient.
fn retain_term(model: &Model, retain: &[RetainItem], scale: f64, grads: &mut Option<&mut [f64]>) -> Result<f64> {
    if scale == 0.0 || retain.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for r in retain {
        let s = score(model, &r.prompt, &r.answer)?;
        let n = r.answer.len() as f64;
        total += -s.logprob / n;
        if let Some(g) = grads.as_deref_mut() {
            backprop_logprob(model, &s, -scale / (n * retain.len() as f64), g);
        }
    }
    Ok(scale * total / retain.len() as f64)
}

/// `scale * mean_f NLL(chosen answer)`.
fn forget_nll_term(
    model: &Model,
    forget: &[ForgetItem],
    which: Answer,
    scale: f64,
    grads: &mut Option<&mut [f64]>,
) -> Result<f64> {
    let mut total = 0.0;
    for f in forget {
        let s = score(model, &f.prompt, answers(f, which)?[0])?;
        let n = s.answer.len() as f64;
        total += -s.logprob / n;
        if let Some(g) = grads.as_deref_mut() {
            backprop_logprob(model, &s, -scale / (n * forget.len() as f64), g);
        }
    }
    Ok(scale * total / forget.len() as f64)
}

/// Which answer of a forget item a term reads.
#[derive(Clone, Copy)]
enum Answer {
    Gold,
    Idk,
    Alts,
}

fn answers(f: &ForgetItem, which: Answer) -> Result<Vec<&[TokenId]>> {
    match which {
        Answer::Gold => Ok(vec![&f.answer]),
        Answer::Idk => Ok(vec![f
            .idk
            .as_deref()
            .ok_or_else(|| data_err!("forget example lacks an idk answer"))?]),
        Answer::Alts if f.alts.is_empty() => Err(data_err!("forget example lacks alternate answers")),
        Answer::Alts => Ok(f.alts.iter().map(Vec::as_slice).collect()),
    }
}

fn require_ref(method: MethodKey, reference: Option<&Model>) -> Result<&Model> {
    reference.ok_or_else(|| config_err!("{} requires a reference model", method.key()))
}

/// `-(2/β) mean_f log σ(β(Δ_pref - Δ_f))` where `Δ = log p_unl - log p_ref`
/// with sequence-summed log-probs; averaged over the preferred answers.
fn dpo_term(
    model: &Model,
    reference: &Model,
    forget: &[ForgetItem],
    preferred: Answer,
    beta: f64,
    grads: &mut Option<&mut [f64]>,
) -> Result<f64> {
    let mut total = 0.0;
    let nf = forget.len() as f64;
    for f in forget {
        let prefs = answers(f, preferred)?;
        let sf = score(model, &f.prompt, &f.answer)?;
        let delta_f = sf.logprob - seq_logprob(reference, &f.prompt, &f.answer)?;
        let np = prefs.len() as f64;
        let mut weight_f = 0.0;
        for y in prefs {
            let sp = score(model, &f.prompt, y)?;
            let delta_p = sp.logprob - seq_logprob(reference, &f.prompt, y)?;
            let z = beta * (delta_p - delta_f);
            total += -(2.0 / beta) * log_sigmoid(z) / np;
            // dL/dz = -(2/β) σ(-z); dz/dS_pref = β, dz/dS_f = -β
            let w = -2.0 * sigmoid(-z) / (np * nf);
            if let Some(g) = grads.as_deref_mut() {
                backprop_logprob(model, &sp, w, g);
            }
            weight_f -= w;
        }
        if let Some(g) = grads.as_deref_mut() {
            backprop_logprob(model, &sf, weight_f, g);
        }
    }
    Ok(total / nf)
}

/// Steering vector with entries drawn from U[0, 1).
pub fn steering_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57ee_4000);
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

/// Layers RMU updates: `{l-2, l-1, l}` clipped to the model.
pub fn rmu_layers(layer: usize, n_layers: usize) -> Result<Vec<usize>> {
    if layer >= n_layers {
        return Err(config_err!(
            "RMU layer {layer} out of range (model has {n_layers} layers)"
        ));
    }
    Ok((layer.saturating_sub(2)..=layer).collect())
}

/// `scale * mean_items (1/|y|) Σ_i ||φ_i - target_i||²` over the positions
/// that predict answer tokens.
fn hidden_term(
    model: &Model,
    prompt: &[TokenId],
    answer: &[TokenId],
    layer: usize,
    target: impl Fn(usize) -> Vec<f64>,
    scale: f64,
    grads: &mut Option<&mut [f64]>,
) -> Result<f64> {
    let seq: Vec<TokenId> = prompt.iter().chain(answer).copied().collect();
    let cache = model.forward(&seq, Some(layer))?;
    let d = cache.hidden_dim();
    let h = cache.hidden(layer).expect("layer computed");
    let n = answer.len() as f64;
    let mut dh = vec![0.0; seq.len() * d];
    let mut total = 0.0;
    for i in 0..answer.len() {
        let t = prompt.len() + i - 1;
        let tgt = target(t);
        for j in 0..d {
            let diff = h[t * d + j] - tgt[j];
            total += diff * diff;
            dh[t * d + j] = 2.0 * scale * diff / n;
        }
    }
    if let Some(g) = grads.as_deref_mut() {
        model.backward(&cache, None, Some((layer, &dh)), g);
    }
    Ok(scale * total / n)
}

fn rmu_loss(
    model: &Model,
    reference: &Model,
    forget: &[ForgetItem],
    retain: &[RetainItem],
    cfg: &UnlearnConfig,
    grads: &mut Option<&mut [f64]>,
) -> Result<f64> {
    let layer = cfg.layer;
    rmu_layers(layer, model.config().n_layers)?;
    let u = steering_vector(model.config().hidden_dim, cfg.seed);
    let control: Vec<f64> = u.iter().map(|x| cfg.steering_coeff * x).collect();
    let mut total = 0.0;
    let nf = forget.len() as f64;
    for f in forget {
        total += hidden_term(model, &f.prompt, &f.answer, layer, |_| control.clone(), 1.0 / nf, grads)?;
    }
    if cfg.alpha != 0.0 && !retain.is_empty() {
        let nr = retain.len() as f64;
        for r in retain {
            let seq: Vec<TokenId> = r.prompt.iter().chain(&r.answer).copied().collect();
            let frozen = reference.hidden_states(&seq, layer)?;
            total += hidden_term(
                model,
                &r.prompt,
                &r.answer,
                layer,
                |t| frozen[t].clone(),
                cfg.alpha / nr,
                grads,
            )?;
        }
    }
    Ok(total)
}

/// `gamma * mean_f mean_i KL(softmax(z_ref - β·e_gold) || softmax(z_unl))`.
fn undial_term(
    model: &Model,
    reference: &Model,
    forget: &[ForgetItem],
    beta: f64,
    scale: f64,
    grads: &mut Option<&mut [f64]>,
) -> Result<f64> {
    let mut total = 0.0;
    let nf = forget.len() as f64;
    for f in forget {
        let seq: Vec<TokenId> = f.prompt.iter().chain(&f.answer).copied().collect();
        let cache = model.forward(&seq, None)?;
        let frozen = reference.forward(&seq, None)?;
        let v = cache.vocab_size();
        let n = f.answer.len() as f64;
        let mut dl = vec![0.0; seq.len() * v];
        let mut kl_sum = 0.0;
        for (i, &tok) in f.answer.iter().enumerate() {
            let t = f.prompt.len() + i - 1;
            let mut adj = frozen.logits_row(t).to_vec();
            adj[tok as usize] -= beta;
            let log_p = log_softmax(&adj);
            let log_q = log_softmax(cache.logits_row(t));
            kl_sum += log_p
                .iter()
                .zip(&log_q)
                .map(|(lp, lq)| lp.exp() * (lp - lq))
                .sum::<f64>();
            let row = &mut dl[t * v..][..v];
            for j in 0..v {
                row[j] = scale * (log_q[j].exp() - log_p[j].exp()) / (n * nf);
            }
        }
        total += kl_sum / n;
        if let Some(g) = grads.as_deref_mut() {
            model.backward(&cache, Some(&dl), None, g);
        }
    }
    Ok(scale * total / nf)
}

/// Loss of `method` on one forget batch and its paired retain batch. When
/// `grads` is given, the gradient is added into it.
pub fn unlearn_loss(
    method: MethodKey,
    model: &Model,
    reference: Option<&Model>,
    forget: &[ForgetItem],
    retain: &[RetainItem],
    cfg: &UnlearnConfig,
    grads: Option<&mut [f64]>,
) -> Result<f64> {
    let mut grads = grads;
    if forget.is_empty() {
        return Err(crate::error::input_err!("empty forget batch"));
    }
    let (gamma, alpha, beta) = (cfg.gamma, cfg.alpha, cfg.beta);
    let loss = match method {
        MethodKey::GradAscent => forget_nll_term(model, forget, Answer::Gold, -gamma, &mut grads)?,
        MethodKey::GradDiff => {
            forget_nll_term(model, forget, Answer::Gold, -gamma, &mut grads)?
                + retain_term(model, retain, alpha, &mut grads)?
        }
        MethodKey::IdkNll => {
            forget_nll_term(model, forget, Answer::Idk, gamma, &mut grads)?
                + retain_term(model, retain, alpha, &mut grads)?
        }
        MethodKey::IdkDpo | MethodKey::AltPo => {
            let reference = require_ref(method, reference)?;
            let preferred = if method == MethodKey::IdkDpo {
                Answer::Idk
            } else {
                Answer::Alts
            };
            dpo_term(model, reference, forget, preferred, beta, &mut grads)?
                + retain_term(model, retain, alpha, &mut grads)?
        }
        MethodKey::Npo => {
            let reference = require_ref(method, reference)?;
            let nf = forget.len() as f64;
            let mut total = 0.0;
            for f in forget {
                let s = score(model, &f.prompt, &f.answer)?;
                let z = -beta * (s.logprob - seq_logprob(reference, &f.prompt, &f.answer)?);
                total += -(2.0 / beta) * log_sigmoid(z);
                if let Some(g) = grads.as_deref_mut() {
                    backprop_logprob(model, &s, 2.0 * sigmoid(-z) / nf, g);
                }
            }
            total / nf + retain_term(model, retain, alpha, &mut grads)?
        }
        MethodKey::SimNpo => {
            let nf = forget.len() as f64;
            let mut total = 0.0;
            for f in forget {
                let s = score(model, &f.prompt, &f.answer)?;
                let len = f.answer.len() as f64;
                let z = -(beta / len) * s.logprob - cfg.delta;
                total += -(2.0 / beta) * log_sigmoid(z);
                if let Some(g) = grads.as_deref_mut() {
                    backprop_logprob(model, &s, 2.0 * sigmoid(-z) / (len * nf), g);
                }
            }
            total / nf + retain_term(model, retain, alpha, &mut grads)?
        }
        MethodKey::Rmu => rmu_loss(model, require_ref(method, reference)?, forget, retain, cfg, &mut grads)?,
        MethodKey::Undial => {
            let reference = require_ref(method, reference)?;
            undial_term(model, reference, forget, beta, gamma, &mut grads)?
                + retain_term(model, retain, alpha, &mut grads)?
        }
    };
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            step: 0,
            stage: method.key().to_string(),
        });
    }
    Ok(loss)
}
