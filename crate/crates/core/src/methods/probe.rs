//! Probing intervention: read an intermediate layer through a trained
//! final norm and unembedding.

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::seqmodel::{train_lm_masked, LmExample, Model, ParamGroup, TrainConfig};

/// Final norm and unembedding trained to decode one layer's hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeHead {
    pub layer: usize,
    pub norm_gain: Vec<f64>,
    pub norm_bias: Vec<f64>,
    pub unembedding: Vec<f64>,
}

impl ProbeHead {
    /// The model's own final head, unchanged.
    pub fn from_model(model: &Model, layer: usize) -> Self {
        let get = |name: &str| model.tensor(name).expect("head tensor").to_vec();
        ProbeHead {
            layer,
            norm_gain: get("lnf.g"),
            norm_bias: get("lnf.b"),
            unembedding: get("lm_head"),
        }
    }
}

/// Model truncated after `head.layer` and decoded through `head`. All
/// scoring operations on the result read the probed layer.
pub fn apply_probe(model: &Model, head: &ProbeHead) -> Result<Model> {
    model.truncated_with_head(head.layer, &head.norm_gain, &head.norm_bias, &head.unembedding)
}

/// Trains a head for `layer` on `corpus`, starting from the model's own
/// final head; the transformer blocks stay frozen.
pub fn train_probe_head(model: &Model, corpus: &[LmExample], layer: usize, cfg: &TrainConfig) -> Result<ProbeHead> {
    if layer >= model.config().n_layers {
        return Err(input_err!("probe layer {layer} out of range"));
    }
    let start = ProbeHead::from_model(model, layer);
    let truncated = apply_probe(model, &start)?;
    let mask = truncated.layout().mask(&[ParamGroup::Head]);
    let trained = train_lm_masked(corpus, cfg, &truncated, &mask)?;
    Ok(ProbeHead::from_model(&trained, layer))
}
