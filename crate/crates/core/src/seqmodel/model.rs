//! Decoder-only transformer with a flat f64 parameter buffer and a
//! hand-written backward pass.
//!
//! Parameters live in one contiguous `Vec<f64>`; [`Layout`] maps named
//! tensors onto offsets in it. Gradients use the same layout, so optimizers,
//! masks, checksums and quantization all work on plain slices.
//!
//! The backward pass takes the gradient of some objective with respect to
//! the output logits and/or one layer's residual stream, so every loss in the
//! crate only has to say how it depends on those two quantities.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::vocab::TokenId;
use crate::error::{input_err, Result};

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub mlp_ratio: usize,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, max_seq_len: usize) -> Self {
        ModelConfig {
            vocab_size,
            max_seq_len,
            hidden_dim: 32,
            n_layers: 2,
            n_heads: 2,
            mlp_ratio: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || self.max_seq_len < 2 {
            return Err(input_err!("vocabulary and context must hold at least 2 tokens"));
        }
        if self.n_layers == 0 || self.n_heads == 0 || self.mlp_ratio == 0 {
            return Err(input_err!("layers, heads and mlp ratio must be positive"));
        }
        if self.hidden_dim == 0 || !self.hidden_dim.is_multiple_of(self.n_heads) {
            return Err(input_err!(
                "hidden_dim {} must be a positive multiple of n_heads {}",
                self.hidden_dim,
                self.n_heads
            ));
        }
        Ok(())
    }
}

/// Which part of the network a tensor belongs to. Used for masking updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Embedding,
    Layer(usize),
    Head,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub group: ParamGroup,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Weight matrices (as opposed to biases and norm gains).
    pub fn is_matrix(&self) -> bool {
        self.rows > 1 && self.cols > 1
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    qkv_w: usize,
    qkv_b: usize,
    attn_w: usize,
    attn_b: usize,
    ln2_g: usize,
    ln2_b: usize,
    fc_w: usize,
    fc_b: usize,
    proj_w: usize,
    proj_b: usize,
}

#[derive(Debug, Clone)]
pub struct Layout {
    tensors: Vec<TensorInfo>,
    wte: usize,
    wpe: usize,
    layers: Vec<LayerOffsets>,
    lnf_g: usize,
    lnf_b: usize,
    head: usize,
    total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let d = cfg.hidden_dim;
        let f = d * cfg.mlp_ratio;
        let mut tensors = Vec::new();
        let mut total = 0usize;
        let mut push = |name: String, rows: usize, cols: usize, group: ParamGroup| {
            let offset = total;
            total += rows * cols;
            tensors.push(TensorInfo {
                name,
                offset,
                rows,
                cols,
                group,
            });
            offset
        };
        let wte = push("wte".into(), cfg.vocab_size, d, ParamGroup::Embedding);
        let wpe = push("wpe".into(), cfg.max_seq_len, d, ParamGroup::Embedding);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let g = ParamGroup::Layer(l);
            let n = |s: &str| format!("h{l}.{s}");
            layers.push(LayerOffsets {
                ln1_g: push(n("ln1.g"), 1, d, g),
                ln1_b: push(n("ln1.b"), 1, d, g),
                qkv_w: push(n("attn.qkv.w"), d, 3 * d, g),
                qkv_b: push(n("attn.qkv.b"), 1, 3 * d, g),
                attn_w: push(n("attn.proj.w"), d, d, g),
                attn_b: push(n("attn.proj.b"), 1, d, g),
                ln2_g: push(n("ln2.g"), 1, d, g),
                ln2_b: push(n("ln2.b"), 1, d, g),
                fc_w: push(n("mlp.fc.w"), d, f, g),
                fc_b: push(n("mlp.fc.b"), 1, f, g),
                proj_w: push(n("mlp.proj.w"), f, d, g),
                proj_b: push(n("mlp.proj.b"), 1, d, g),
            });
        }
        let lnf_g = push("lnf.g".into(), 1, d, ParamGroup::Head);
        let lnf_b = push("lnf.b".into(), 1, d, ParamGroup::Head);
        let head = push("lm_head".into(), d, cfg.vocab_size, ParamGroup::Head);
        Layout {
            tensors,
            wte,
            wpe,
            layers,
            lnf_g,
            lnf_b,
            head,
            total,
        }
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Boolean mask over the flat buffer selecting the given groups.
    pub fn mask(&self, groups: &[ParamGroup]) -> Vec<bool> {
        let mut mask = vec![false; self.total];
        for t in &self.tensors {
            if groups.contains(&t.group) {
                mask[t.range()].iter_mut().for_each(|m| *m = true);
            }
        }
        mask
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelRole {
    Target,
    Retain,
    Unlearned,
    ProbeModified,
    /// Faithfulness pool member (P or N).
    Pool,
}

/// A trainable tiny autoregressive model.
#[derive(Clone)]
pub struct Model {
    config: ModelConfig,
    layout: Layout,
    params: Vec<f64>,
    pub role: ModelRole,
    pub seed: u64,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("config", &self.config)
            .field("role", &self.role)
            .field("seed", &self.seed)
            .field("n_params", &self.params.len())
            .field("checksum", &self.checksum())
            .finish()
    }
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64, role: ModelRole) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let resid = Normal::new(0.0, INIT_STD / (2.0 * config.n_layers as f64).sqrt()).expect("valid std");
        for t in &layout.tensors {
            let slice = &mut params[t.range()];
            if t.name.ends_with(".g") {
                slice.iter_mut().for_each(|p| *p = 1.0);
            } else if t.is_matrix() {
                let dist = if t.name.ends_with("proj.w") { &resid } else { &normal };
                slice.iter_mut().for_each(|p| *p = dist.sample(&mut rng));
            }
        }
        Ok(Model {
            config,
            layout,
            params,
            role,
            seed,
        })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>, seed: u64, role: ModelRole) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(input_err!(
                "parameter count {} does not match layout {}",
                params.len(),
                layout.total
            ));
        }
        Ok(Model {
            config,
            layout,
            params,
            role,
            seed,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        let t = self.layout.tensor(name)?;
        Some(&self.params[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let r = self.layout.tensor(name)?.range();
        Some(&mut self.params[r])
    }

    /// SHA-256 over the little-endian parameter bytes, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn with_role(mut self, role: ModelRole) -> Self {
        self.role = role;
        self
    }

    pub(crate) fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.is_empty() {
            return Err(input_err!("empty token sequence"));
        }
        if tokens.len() > self.config.max_seq_len {
            return Err(input_err!(
                "sequence length {} exceeds context {}",
                tokens.len(),
                self.config.max_seq_len
            ));
        }
        if let Some(bad) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(input_err!(
                "unknown token id {bad} (vocabulary size {})",
                self.config.vocab_size
            ));
        }
        Ok(())
    }

    /// Runs the network. With `stop_after = Some(l)` only blocks `0..=l`
    /// are evaluated and no logits are produced.
    pub fn forward(&self, tokens: &[TokenId], stop_after: Option<usize>) -> Result<ForwardCache> {
        self.check_tokens(tokens)?;
        if let Some(l) = stop_after {
            if l >= self.config.n_layers {
                return Err(input_err!(
                    "layer {l} out of range (model has {})",
                    self.config.n_layers
                ));
            }
        }
        Ok(self.forward_unchecked(tokens, stop_after))
    }

    fn forward_unchecked(&self, tokens: &[TokenId], stop_after: Option<usize>) -> ForwardCache {
        let cfg = &self.config;
        let (t_len, d, f) = (tokens.len(), cfg.hidden_dim, cfg.hidden_dim * cfg.mlp_ratio);
        let p = &self.params;
        let lay = &self.layout;

        let mut x = vec![0.0; t_len * d];
        for (t, &tok) in tokens.iter().enumerate() {
            let e = &p[lay.wte + tok as usize * d..][..d];
            let pe = &p[lay.wpe + t * d..][..d];
            for i in 0..d {
                x[t * d + i] = e[i] + pe[i];
            }
        }
        let n_run = stop_after.map_or(cfg.n_layers, |l| l + 1);
        let mut residuals = Vec::with_capacity(n_run + 1);
        residuals.push(x);
        let mut layers = Vec::with_capacity(n_run);
        for lo in lay.layers.iter().take(n_run) {
            let x_in = residuals.last().expect("residual");
            let mut lc = LayerCache::new(t_len, d, f, cfg.n_heads);
            layernorm_fwd(
                &mut lc.ln1,
                &mut lc.ln1_mean,
                &mut lc.ln1_rstd,
                x_in,
                &p[lo.ln1_g..][..d],
                &p[lo.ln1_b..][..d],
                t_len,
                d,
            );
            matmul_fwd(
                &mut lc.qkv,
                &lc.ln1,
                &p[lo.qkv_w..][..d * 3 * d],
                Some(&p[lo.qkv_b..][..3 * d]),
                t_len,
                d,
                3 * d,
            );
            attention_fwd(&mut lc.att_out, &mut lc.att, &lc.qkv, t_len, d, cfg.n_heads);
            let mut attn_proj = vec![0.0; t_len * d];
            matmul_fwd(
                &mut attn_proj,
                &lc.att_out,
                &p[lo.attn_w..][..d * d],
                Some(&p[lo.attn_b..][..d]),
                t_len,
                d,
                d,
            );
            for (m, (a, b)) in lc.x_mid.iter_mut().zip(x_in.iter().zip(&attn_proj)) {
                *m = a + b;
            }
            layernorm_fwd(
                &mut lc.ln2,
                &mut lc.ln2_mean,
                &mut lc.ln2_rstd,
                &lc.x_mid,
                &p[lo.ln2_g..][..d],
                &p[lo.ln2_b..][..d],
                t_len,
                d,
            );
            matmul_fwd(
                &mut lc.fc,
                &lc.ln2,
                &p[lo.fc_w..][..d * f],
                Some(&p[lo.fc_b..][..f]),
                t_len,
                d,
                f,
            );
            for (a, &z) in lc.fc_act.iter_mut().zip(&lc.fc) {
                *a = gelu(z);
            }
            let mut mlp_out = vec![0.0; t_len * d];
            matmul_fwd(
                &mut mlp_out,
                &lc.fc_act,
                &p[lo.proj_w..][..f * d],
                Some(&p[lo.proj_b..][..d]),
                t_len,
                f,
                d,
            );
            let x_out: Vec<f64> = lc.x_mid.iter().zip(&mlp_out).map(|(a, b)| a + b).collect();
            residuals.push(x_out);
            layers.push(lc);
        }

        let mut head = None;
        if stop_after.is_none() {
            let x_last = residuals.last().expect("residual");
            let mut lnf = vec![0.0; t_len * d];
            let mut mean = vec![0.0; t_len];
            let mut rstd = vec![0.0; t_len];
            layernorm_fwd(
                &mut lnf,
                &mut mean,
                &mut rstd,
                x_last,
                &p[lay.lnf_g..][..d],
                &p[lay.lnf_b..][..d],
                t_len,
                d,
            );
            let v = cfg.vocab_size;
            let mut logits = vec![0.0; t_len * v];
            matmul_fwd(&mut logits, &lnf, &p[lay.head..][..d * v], None, t_len, d, v);
            head = Some(HeadCache {
                lnf,
                mean,
                rstd,
                logits,
            });
        }

        ForwardCache {
            tokens: tokens.to_vec(),
            hidden_dim: d,
            vocab_size: cfg.vocab_size,
            residuals,
            layers,
            head,
        }
    }

    /// Accumulates parameter gradients into `grads` given the gradient of an
    /// objective w.r.t. the logits (`T x V`) and/or the residual stream after
    /// block `layer` (`T x d`).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: Option<&[f64]>,
        dhidden: Option<(usize, &[f64])>,
        grads: &mut [f64],
    ) {
        let cfg = &self.config;
        let (t_len, d, f) = (cache.tokens.len(), cfg.hidden_dim, cfg.hidden_dim * cfg.mlp_ratio);
        let v = cfg.vocab_size;
        let p = &self.params;
        let lay = &self.layout;
        assert_eq!(grads.len(), p.len(), "gradient buffer size");

        let top = match (dlogits, dhidden) {
            (Some(_), _) => cfg.n_layers,
            (None, Some((l, _))) => l + 1,
            (None, None) => return,
        };
        assert!(cache.layers.len() >= top, "forward cache too shallow for backward");

        let mut dres = vec![0.0; t_len * d];
        if let Some(dl) = dlogits {
            let head = cache
                .head
                .as_ref()
                .expect("backward through logits needs a full forward");
            assert_eq!(dl.len(), t_len * v);
            let mut dlnf = vec![0.0; t_len * d];
            let dw_head = &mut grads[lay.head..lay.head + d * v];
            matmul_bwd(
                &mut dlnf,
                dw_head,
                None,
                dl,
                &head.lnf,
                &p[lay.head..][..d * v],
                t_len,
                d,
                v,
            );
            let (dg, db) = two_mut(grads, lay.lnf_g, lay.lnf_b, d);
            layernorm_bwd(
                &mut dres,
                dg,
                db,
                &dlnf,
                &cache.residuals[cfg.n_layers],
                &p[lay.lnf_g..][..d],
                &head.mean,
                &head.rstd,
                t_len,
                d,
            );
        }

        for l in (0..top).rev() {
            if let Some((hl, dh)) = dhidden {
                if hl == l {
                    assert_eq!(dh.len(), t_len * d);
                    dres.iter_mut().zip(dh).for_each(|(a, b)| *a += b);
                }
            }
            let lo = &lay.layers[l];
            let lc = &cache.layers[l];
            let x_in = &cache.residuals[l];

            // mlp branch: x_out = x_mid + proj(gelu(fc(ln2(x_mid))))
            let mut dfc_act = vec![0.0; t_len * f];
            {
                let (dw, db) = two_mut(grads, lo.proj_w, lo.proj_b, f * d);
                matmul_bwd(
                    &mut dfc_act,
                    dw,
                    Some(&mut db[..d]),
                    &dres,
                    &lc.fc_act,
                    &p[lo.proj_w..][..f * d],
                    t_len,
                    f,
                    d,
                );
            }
            let dfc: Vec<f64> = dfc_act.iter().zip(&lc.fc).map(|(g, &z)| g * gelu_grad(z)).collect();
            let mut dln2 = vec![0.0; t_len * d];
            {
                let (dw, db) = two_mut(grads, lo.fc_w, lo.fc_b, d * f);
                matmul_bwd(
                    &mut dln2,
                    dw,
                    Some(&mut db[..f]),
                    &dfc,
                    &lc.ln2,
                    &p[lo.fc_w..][..d * f],
                    t_len,
                    d,
                    f,
                );
            }
            let mut dx_mid = dres.clone();
            {
                let (dg, db) = two_mut(grads, lo.ln2_g, lo.ln2_b, d);
                layernorm_bwd(
                    &mut dx_mid,
                    dg,
                    db,
                    &dln2,
                    &lc.x_mid,
                    &p[lo.ln2_g..][..d],
                    &lc.ln2_mean,
                    &lc.ln2_rstd,
                    t_len,
                    d,
                );
            }

            // attention branch: x_mid = x_in + proj(attn(qkv(ln1(x_in))))
            let mut datt_out = vec![0.0; t_len * d];
            {
                let (dw, db) = two_mut(grads, lo.attn_w, lo.attn_b, d * d);
                matmul_bwd(
                    &mut datt_out,
                    dw,
                    Some(&mut db[..d]),
                    &dx_mid,
                    &lc.att_out,
                    &p[lo.attn_w..][..d * d],
                    t_len,
                    d,
                    d,
                );
            }
            let mut dqkv = vec![0.0; t_len * 3 * d];
            attention_bwd(&mut dqkv, &datt_out, &lc.qkv, &lc.att, t_len, d, cfg.n_heads);
            let mut dln1 = vec![0.0; t_len * d];
            {
                let (dw, db) = two_mut(grads, lo.qkv_w, lo.qkv_b, d * 3 * d);
                matmul_bwd(
                    &mut dln1,
                    dw,
                    Some(&mut db[..3 * d]),
                    &dqkv,
                    &lc.ln1,
                    &p[lo.qkv_w..][..d * 3 * d],
                    t_len,
                    d,
                    3 * d,
                );
            }
            let mut dx_in = dx_mid;
            {
                let (dg, db) = two_mut(grads, lo.ln1_g, lo.ln1_b, d);
                layernorm_bwd(
                    &mut dx_in,
                    dg,
                    db,
                    &dln1,
                    x_in,
                    &p[lo.ln1_g..][..d],
                    &lc.ln1_mean,
                    &lc.ln1_rstd,
                    t_len,
                    d,
                );
            }
            dres = dx_in;
        }

        for (t, &tok) in cache.tokens.iter().enumerate() {
            let row = &dres[t * d..][..d];
            let e = lay.wte + tok as usize * d;
            grads[e..e + d].iter_mut().zip(row).for_each(|(g, r)| *g += r);
            let pe = lay.wpe + t * d;
            grads[pe..pe + d].iter_mut().zip(row).for_each(|(g, r)| *g += r);
        }
    }

    /// Truncates the network after block `layer` and installs a new final
    /// norm + unembedding.
    pub(crate) fn truncated_with_head(
        &self,
        layer: usize,
        lnf_g: &[f64],
        lnf_b: &[f64],
        head: &[f64],
    ) -> Result<Model> {
        if layer >= self.config.n_layers {
            return Err(input_err!(
                "layer {layer} out of range (model has {})",
                self.config.n_layers
            ));
        }
        let mut cfg = self.config;
        cfg.n_layers = layer + 1;
        let new_layout = Layout::new(&cfg);
        let mut params = vec![0.0; new_layout.total];
        for t in &new_layout.tensors {
            let dst = &mut params[t.range()];
            match t.group {
                ParamGroup::Head => {
                    let src = match t.name.as_str() {
                        "lnf.g" => lnf_g,
                        "lnf.b" => lnf_b,
                        _ => head,
                    };
                    if src.len() != dst.len() {
                        return Err(crate::error::config_err!(
                            "probe tensor {} has {} values, expected {}",
                            t.name,
                            src.len(),
                            dst.len()
                        ));
                    }
                    dst.copy_from_slice(src);
                }
                _ => {
                    let src = self.layout.tensor(&t.name).expect("same tensor in source");
                    dst.copy_from_slice(&self.params[src.range()]);
                }
            }
        }
        Model::from_params(cfg, params, self.seed, ModelRole::ProbeModified)
    }
}

struct LayerCache {
    ln1: Vec<f64>,
    ln1_mean: Vec<f64>,
    ln1_rstd: Vec<f64>,
    qkv: Vec<f64>,
    att: Vec<f64>,
    att_out: Vec<f64>,
    x_mid: Vec<f64>,
    ln2: Vec<f64>,
    ln2_mean: Vec<f64>,
    ln2_rstd: Vec<f64>,
    fc: Vec<f64>,
    fc_act: Vec<f64>,
}

impl LayerCache {
    fn new(t: usize, d: usize, f: usize, h: usize) -> Self {
        LayerCache {
            ln1: vec![0.0; t * d],
            ln1_mean: vec![0.0; t],
            ln1_rstd: vec![0.0; t],
            qkv: vec![0.0; t * 3 * d],
            att: vec![0.0; h * t * t],
            att_out: vec![0.0; t * d],
            x_mid: vec![0.0; t * d],
            ln2: vec![0.0; t * d],
            ln2_mean: vec![0.0; t],
            ln2_rstd: vec![0.0; t],
            fc: vec![0.0; t * f],
            fc_act: vec![0.0; t * f],
        }
    }
}

struct HeadCache {
    lnf: Vec<f64>,
    mean: Vec<f64>,
    rstd: Vec<f64>,
    logits: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
pub struct ForwardCache {
    tokens: Vec<TokenId>,
    hidden_dim: usize,
    vocab_size: usize,
    residuals: Vec<Vec<f64>>,
    layers: Vec<LayerCache>,
    head: Option<HeadCache>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// Row-major `T x V` logits; `None` for truncated forwards.
    pub fn logits(&self) -> Option<&[f64]> {
        self.head.as_ref().map(|h| h.logits.as_slice())
    }

    pub fn logits_row(&self, t: usize) -> &[f64] {
        let logits = self.logits().expect("full forward");
        &logits[t * self.vocab_size..][..self.vocab_size]
    }

    /// Residual stream after block `layer`, row-major `T x d`.
    pub fn hidden(&self, layer: usize) -> Option<&[f64]> {
        self.residuals.get(layer + 1).map(Vec::as_slice)
    }
}

pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    row.iter().map(|z| z - lse).collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    log_softmax(row).into_iter().map(f64::exp).collect()
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let th = u.tanh();
    let du = C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
}

#[allow(clippy::too_many_arguments)]
fn layernorm_fwd(
    out: &mut [f64],
    mean: &mut [f64],
    rstd: &mut [f64],
    x: &[f64],
    g: &[f64],
    b: &[f64],
    t_len: usize,
    d: usize,
) {
    for t in 0..t_len {
        let row = &x[t * d..][..d];
        let m = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        let o = &mut out[t * d..][..d];
        for i in 0..d {
            o[i] = (row[i] - m) * r * g[i] + b[i];
        }
        mean[t] = m;
        rstd[t] = r;
    }
}

#[allow(clippy::too_many_arguments)]
fn layernorm_bwd(
    dx: &mut [f64],
    dg: &mut [f64],
    db: &mut [f64],
    dout: &[f64],
    x: &[f64],
    g: &[f64],
    mean: &[f64],
    rstd: &[f64],
    t_len: usize,
    d: usize,
) {
    for t in 0..t_len {
        let row = &x[t * d..][..d];
        let dr = &dout[t * d..][..d];
        let (m, r) = (mean[t], rstd[t]);
        let mut dnorm_mean = 0.0;
        let mut dnorm_norm_mean = 0.0;
        for i in 0..d {
            let norm = (row[i] - m) * r;
            let dnorm = g[i] * dr[i];
            dnorm_mean += dnorm;
            dnorm_norm_mean += dnorm * norm;
        }
        dnorm_mean /= d as f64;
        dnorm_norm_mean /= d as f64;
        let dxr = &mut dx[t * d..][..d];
        for i in 0..d {
            let norm = (row[i] - m) * r;
            let dnorm = g[i] * dr[i];
            db[i] += dr[i];
            dg[i] += norm * dr[i];
            dxr[i] += (dnorm - dnorm_mean - norm * dnorm_norm_mean) * r;
        }
    }
}

/// `out[t, o] = b[o] + sum_i inp[t, i] * w[i, o]`
fn matmul_fwd(out: &mut [f64], inp: &[f64], w: &[f64], b: Option<&[f64]>, t_len: usize, c_in: usize, c_out: usize) {
    for t in 0..t_len {
        let o = &mut out[t * c_out..][..c_out];
        match b {
            Some(b) => o.copy_from_slice(b),
            None => o.iter_mut().for_each(|v| *v = 0.0),
        }
        let x = &inp[t * c_in..][..c_in];
        for (i, &a) in x.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let wr = &w[i * c_out..][..c_out];
            for (ov, &wv) in o.iter_mut().zip(wr) {
                *ov += a * wv;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn matmul_bwd(
    dinp: &mut [f64],
    dw: &mut [f64],
    mut db: Option<&mut [f64]>,
    dout: &[f64],
    inp: &[f64],
    w: &[f64],
    t_len: usize,
    c_in: usize,
    c_out: usize,
) {
    for t in 0..t_len {
        let dor = &dout[t * c_out..][..c_out];
        if let Some(db) = db.as_deref_mut() {
            for (g, &v) in db.iter_mut().zip(dor) {
                *g += v;
            }
        }
        let x = &inp[t * c_in..][..c_in];
        let dx = &mut dinp[t * c_in..][..c_in];
        for i in 0..c_in {
            let wr = &w[i * c_out..][..c_out];
            let mut acc = 0.0;
            for (&wv, &g) in wr.iter().zip(dor) {
                acc += wv * g;
            }
            dx[i] += acc;
            let a = x[i];
            if a != 0.0 {
                let dwr = &mut dw[i * c_out..][..c_out];
                for (dwv, &g) in dwr.iter_mut().zip(dor) {
                    *dwv += a * g;
                }
            }
        }
    }
}

fn attention_fwd(out: &mut [f64], att: &mut [f64], qkv: &[f64], t_len: usize, d: usize, n_heads: usize) {
    let hd = d / n_heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let stride = 3 * d;
    out.iter_mut().for_each(|v| *v = 0.0);
    for h in 0..n_heads {
        for t in 0..t_len {
            let q = &qkv[t * stride + h * hd..][..hd];
            let a = &mut att[(h * t_len + t) * t_len..][..t_len];
            let mut max = f64::NEG_INFINITY;
            for s in 0..=t {
                let k = &qkv[s * stride + d + h * hd..][..hd];
                let dot: f64 = q.iter().zip(k).map(|(x, y)| x * y).sum::<f64>() * scale;
                a[s] = dot;
                max = max.max(dot);
            }
            let mut sum = 0.0;
            for v in a.iter_mut().take(t + 1) {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in a.iter_mut().take(t + 1) {
                *v /= sum;
            }
            a[t + 1..].iter_mut().for_each(|v| *v = 0.0);
            let o = &mut out[t * d + h * hd..][..hd];
            for s in 0..=t {
                let vv = &qkv[s * stride + 2 * d + h * hd..][..hd];
                let w = a[s];
                for (ov, &x) in o.iter_mut().zip(vv) {
                    *ov += w * x;
                }
            }
        }
    }
}

fn attention_bwd(dqkv: &mut [f64], dout: &[f64], qkv: &[f64], att: &[f64], t_len: usize, d: usize, n_heads: usize) {
    let hd = d / n_heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let stride = 3 * d;
    let mut datt = vec![0.0; t_len];
    for h in 0..n_heads {
        for t in 0..t_len {
            let a = &att[(h * t_len + t) * t_len..][..t_len];
            let dor = &dout[t * d + h * hd..][..hd];
            for s in 0..=t {
                let voff = s * stride + 2 * d + h * hd;
                let mut acc = 0.0;
                for j in 0..hd {
                    acc += dor[j] * qkv[voff + j];
                    dqkv[voff + j] += a[s] * dor[j];
                }
                datt[s] = acc;
            }
            let dot: f64 = (0..=t).map(|s| a[s] * datt[s]).sum();
            let qoff = t * stride + h * hd;
            for s in 0..=t {
                let dpre = a[s] * (datt[s] - dot) * scale;
                if dpre == 0.0 {
                    continue;
                }
                let koff = s * stride + d + h * hd;
                for j in 0..hd {
                    dqkv[qoff + j] += dpre * qkv[koff + j];
                    dqkv[koff + j] += dpre * qkv[qoff + j];
                }
            }
        }
    }
}

/// Mutable views of a weight tensor and the bias directly following it.
fn two_mut(buf: &mut [f64], first: usize, second: usize, first_len: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert_eq!(first + first_len, second);
    let (a, b) = buf[first..].split_at_mut(first_len);
    (a, b)
}
