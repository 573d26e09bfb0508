//! Experiment configs: YAML files with a `defaults` list, dotted `key=value`
//! overrides, and a content hash.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{config_err, Error, Result};
use crate::leaderboard::AggregationMode;
use crate::metaeval::{MetaEvalSettings, PoolGrid};
use crate::methods::{MethodKey, UnlearnConfig};
use crate::metrics::{DEFAULT_K_FRAC, DEFAULT_MAX_NEW_TOKENS};
use crate::seqmodel::{ModelConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Finetune,
    Unlearn,
    Relearn,
    #[default]
    Eval,
    Pools,
    MetaEval,
    Bench,
    Report,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Finetune,
        ExperimentKind::Unlearn,
        ExperimentKind::Relearn,
        ExperimentKind::Eval,
        ExperimentKind::Pools,
        ExperimentKind::MetaEval,
        ExperimentKind::Bench,
        ExperimentKind::Report,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ExperimentKind::Finetune => "finetune",
            ExperimentKind::Unlearn => "unlearn",
            ExperimentKind::Relearn => "relearn",
            ExperimentKind::Eval => "eval",
            ExperimentKind::Pools => "pools",
            ExperimentKind::MetaEval => "meta-eval",
            ExperimentKind::Bench => "bench",
            ExperimentKind::Report => "report",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.key() == s)
            .ok_or_else(|| Error::lookup("experiment", s, ExperimentKind::ALL.iter().map(|k| k.key())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldArgs {
    pub seed: u64,
    pub n_entities: usize,
    pub facts_per_entity: usize,
    pub forget_fraction: f64,
}

impl Default for WorldArgs {
    fn default() -> Self {
        WorldArgs {
            seed: 0,
            n_entities: 32,
            facts_per_entity: 4,
            forget_fraction: 0.1,
        }
    }
}

/// Architecture; the vocabulary size comes from the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelArgs {
    pub max_seq_len: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub mlp_ratio: usize,
}

impl Default for ModelArgs {
    fn default() -> Self {
        let c = ModelConfig::new(2, 48);
        ModelArgs {
            max_seq_len: c.max_seq_len,
            hidden_dim: c.hidden_dim,
            n_layers: c.n_layers,
            n_heads: c.n_heads,
            mlp_ratio: c.mlp_ratio,
        }
    }
}

impl ModelArgs {
    pub fn config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            max_seq_len: self.max_seq_len,
            hidden_dim: self.hidden_dim,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            mlp_ratio: self.mlp_ratio,
        }
    }
}

/// Optimization args of the unlearning trainer; unset fields take the
/// method's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerArgs {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub weight_decay: Option<f64>,
    pub grad_clip: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodArgs {
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub steering_coeff: Option<f64>,
    pub layer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerBlock {
    pub handler: String,
    pub args: TrainerArgs,
    pub method_args: MethodArgs,
}

impl Default for TrainerBlock {
    fn default() -> Self {
        TrainerBlock {
            handler: MethodKey::GradDiff.key().into(),
            args: TrainerArgs::default(),
            method_args: MethodArgs::default(),
        }
    }
}

impl TrainerBlock {
    /// Method defaults overlaid with every field set in this block.
    pub fn unlearn_config(&self, method: MethodKey, seed: u64) -> UnlearnConfig {
        let mut c = UnlearnConfig::for_method(method);
        let a = &self.args;
        let m = &self.method_args;
        c.learning_rate = a.learning_rate.unwrap_or(c.learning_rate);
        c.epochs = a.epochs.unwrap_or(c.epochs);
        c.batch_size = a.batch_size.unwrap_or(c.batch_size);
        c.weight_decay = a.weight_decay.unwrap_or(c.weight_decay);
        c.grad_clip = a.grad_clip.or(c.grad_clip);
        c.gamma = m.gamma.unwrap_or(c.gamma);
        c.alpha = m.alpha.unwrap_or(c.alpha);
        c.beta = m.beta.unwrap_or(c.beta);
        c.delta = m.delta.unwrap_or(c.delta);
        c.steering_coeff = m.steering_coeff.unwrap_or(c.steering_coeff);
        c.layer = m.layer.unwrap_or(c.layer);
        c.seed = seed;
        c
    }
}

/// Dataset handler keys for each role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetsBlock {
    pub forget: String,
    pub retain: String,
    pub holdout: String,
}

impl Default for DatasetsBlock {
    fn default() -> Self {
        DatasetsBlock {
            forget: "forget".into(),
            retain: "retain".into(),
            holdout: "holdout".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationArgs {
    pub max_new_tokens: usize,
    /// Fraction of tokens MinK-style attacks keep.
    pub k_frac: f64,
}

impl Default for GenerationArgs {
    fn default() -> Self {
        GenerationArgs {
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            k_frac: DEFAULT_K_FRAC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelRef {
    pub loader: String,
    /// Checkpoint directory for the `checkpoint` loader.
    pub path: Option<PathBuf>,
}

impl Default for ModelRef {
    fn default() -> Self {
        ModelRef {
            loader: "target".into(),
            path: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalBlock {
    pub model: ModelRef,
    /// Applied in order before scoring.
    pub interventions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaEvalBlock {
    pub settings: MetaEvalSettings,
    /// Methods whose default sweeps form the unlearned pool.
    pub methods: Vec<MethodKey>,
    /// Existing pools run directory; built (or reused from cache) when unset.
    pub pool_dir: Option<PathBuf>,
}

impl Default for MetaEvalBlock {
    fn default() -> Self {
        MetaEvalBlock {
            settings: MetaEvalSettings::default(),
            methods: MethodKey::ALL.to_vec(),
            pool_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchBlock {
    pub methods: Vec<MethodKey>,
    pub mode: AggregationMode,
}

impl Default for BenchBlock {
    fn default() -> Self {
        BenchBlock {
            methods: MethodKey::ALL.to_vec(),
            mode: AggregationMode::Full,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportBlock {
    /// A `reports/` directory written by a meta-eval or bench run.
    pub reports_dir: Option<PathBuf>,
    pub mode: Option<AggregationMode>,
}

fn default_metrics() -> Vec<String> {
    ["es", "em", "prob", "truth_ratio", "rouge", "mia_loss", "model_utility"]
        .map(String::from)
        .to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Run directory name under the output root; defaults to the experiment kind.
    pub name: Option<String>,
    /// Run seed; copied into every nested seed by [`ExperimentConfig::normalize`].
    pub seed: u64,
    /// Not part of the config hash.
    pub output_dir: Option<PathBuf>,
    pub world: WorldArgs,
    pub model: ModelArgs,
    /// Base-model training of the target and retain models.
    pub finetune: TrainConfig,
    pub trainer: TrainerBlock,
    pub datasets: DatasetsBlock,
    /// Metric keys; `meta` and `all` expand.
    pub metrics: Vec<String>,
    pub generation_args: GenerationArgs,
    pub eval: EvalBlock,
    pub pools: PoolGrid,
    pub meta_eval: MetaEvalBlock,
    pub bench: BenchBlock,
    pub report: ReportBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::default(),
            name: None,
            seed: 0,
            output_dir: None,
            world: WorldArgs::default(),
            model: ModelArgs::default(),
            finetune: TrainConfig {
                learning_rate: 3e-3,
                epochs: 20,
                batch_size: 8,
                ..TrainConfig::default()
            },
            trainer: TrainerBlock::default(),
            datasets: DatasetsBlock::default(),
            metrics: default_metrics(),
            generation_args: GenerationArgs::default(),
            eval: EvalBlock::default(),
            pools: PoolGrid::default(),
            meta_eval: MetaEvalBlock::default(),
            bench: BenchBlock::default(),
            report: ReportBlock::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn for_kind(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment: kind,
            ..Default::default()
        }
    }

    pub fn run_name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.experiment.key())
    }

    /// Propagates the run seed into the nested blocks that carry one.
    pub fn normalize(&mut self) {
        self.finetune.seed = self.seed;
        self.pools.seed = self.seed;
        self.meta_eval.settings.relearn.seed = self.seed;
        self.meta_eval.settings.probe.seed = self.seed;
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON, output
    /// directory excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            map.remove("output_dir");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn to_yaml(&self) -> Result<String> {
        Ok(serde_yaml::to_string(self)?)
    }

    /// Config of the finetune run that produces this config's base models.
    pub fn base_models_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            experiment: ExperimentKind::Finetune,
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            world: self.world.clone(),
            model: self.model.clone(),
            finetune: self.finetune.clone(),
            ..Default::default()
        }
    }

    /// Config of the pools run this config's meta-evaluation reads.
    pub fn pools_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            experiment: ExperimentKind::Pools,
            pools: self.pools.clone(),
            ..self.base_models_config()
        }
    }
}

fn read_yaml(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let yaml: serde_yaml::Value = serde_yaml::from_str(&text)?;
    let v = serde_json::to_value(yaml)?;
    match v {
        Value::Null => Ok(Value::Object(Default::default())),
        Value::Object(_) => Ok(v),
        _ => Err(config_err!("{} must contain a mapping", path.display())),
    }
}

/// Recursive merge; `over` wins on scalars and lists.
pub fn merge_values(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_values(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// A file merged over its `defaults` entries, which are resolved relative
/// to the file and merged in order.
fn compose(path: &Path, depth: usize) -> Result<Value> {
    if depth > 16 {
        return Err(config_err!("defaults nest too deeply at {}", path.display()));
    }
    let mut own = read_yaml(path)?;
    let defaults = match own.as_object_mut().and_then(|m| m.remove("defaults")) {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items,
        Some(other) => return Err(config_err!("`defaults` must be a list, got {other}")),
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut composed = Value::Object(Default::default());
    for entry in defaults {
        let name = entry
            .as_str()
            .ok_or_else(|| config_err!("`defaults` entries must be file names, got {entry}"))?;
        let mut file = dir.join(name);
        if file.extension().is_none() {
            file.set_extension("yaml");
        }
        merge_values(&mut composed, compose(&file, depth + 1)?);
    }
    merge_values(&mut composed, own);
    Ok(composed)
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "mapping",
    }
}

/// Applies one `a.b.c=value` override. The path must exist in `tree`; the
/// value is parsed as YAML and must match the existing value's type unless
/// that value is null.
pub fn apply_override(tree: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| config_err!("override `{spec}` is not of the form key=value"))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(config_err!("override `{spec}` has an empty key"));
    }
    let yaml: serde_yaml::Value = serde_yaml::from_str(raw)?;
    let value = serde_json::to_value(yaml)?;
    let mut node = tree;
    let mut seen = Vec::new();
    for part in path.split('.') {
        let map = node
            .as_object_mut()
            .ok_or_else(|| config_err!("override path `{path}`: `{}` is not a mapping", seen.join(".")))?;
        if !map.contains_key(part) {
            let keys: Vec<String> = map.keys().cloned().collect();
            let at = if seen.is_empty() {
                "top level".to_string()
            } else {
                seen.join(".")
            };
            let err = Error::lookup(&format!("config key at {at}"), part, keys.iter().map(String::as_str));
            return Err(config_err!("override `{path}`: {err}"));
        }
        seen.push(part);
        node = map.get_mut(part).expect("checked");
    }
    let compatible = node.is_null() || value.is_null() || type_name(node) == type_name(&value);
    if !compatible {
        return Err(config_err!(
            "override `{path}` expects a {}, got a {} (`{raw}`)",
            type_name(node),
            type_name(&value)
        ));
    }
    *node = value;
    Ok(())
}

fn typed(tree: Value) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = serde_json::from_value(tree).map_err(|e| config_err!("{e}"))?;
    cfg.normalize();
    Ok(cfg)
}

/// Built-in defaults, then the composed file, then the overrides.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let file = compose(path, 0)?;
    compose_config(file, overrides)
}

/// Like [`load_config`] with an in-memory file tree.
pub fn compose_config(file: Value, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut tree = serde_json::to_value(ExperimentConfig::default())?;
    merge_values(&mut tree, file);
    // validate the file before overrides so errors point at the right source
    typed(tree.clone())?;
    for o in overrides {
        apply_override(&mut tree, o)?;
    }
    typed(tree)
}

/// Re-reads a dumped `config.yaml` without defaults or overrides.
pub fn read_config_dump(path: &Path) -> Result<ExperimentConfig> {
    typed(read_yaml(path)?)
}

/// Writes `text` to `path`, creating parent directories.
pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
