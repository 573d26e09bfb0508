//! String-keyed handler registry.

use std::any::Any;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::metaeval::MetaEvalSettings;
use crate::methods::{apply_probe, run_relearn, train_probe_head, MethodKey};
use crate::metrics::{builtin_metrics, MetricFn};
use crate::seqmodel::{quantize_dequantize, Model, Vocabulary};
use crate::worldgen::{qa_example, QaExample, SplitSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HandlerKind {
    Trainer,
    Dataset,
    Metric,
    ModelLoader,
    Intervention,
}

impl HandlerKind {
    pub fn key(self) -> &'static str {
        match self {
            HandlerKind::Trainer => "trainer",
            HandlerKind::Dataset => "dataset",
            HandlerKind::Metric => "metric",
            HandlerKind::ModelLoader => "model-loader",
            HandlerKind::Intervention => "intervention",
        }
    }
}

impl fmt::Display for HandlerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// What a trainer key runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainer {
    Finetune,
    Unlearn(MethodKey),
}

pub type DatasetFn = fn(&SplitSet) -> &[QaExample];

/// Where an experiment's model under test comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSource {
    Target,
    Retain,
    /// A checkpoint directory named in the config.
    Checkpoint,
}

/// Inputs shared by all interventions.
pub struct InterventionCtx<'a> {
    pub splits: &'a SplitSet,
    pub vocab: &'a Vocabulary,
    pub retain: &'a Model,
    pub settings: &'a MetaEvalSettings,
}

pub type InterventionFn = fn(&Model, &InterventionCtx) -> Result<Model>;

fn relearn(model: &Model, ctx: &InterventionCtx) -> Result<Model> {
    run_relearn(model, ctx.vocab, &ctx.splits.forget, &ctx.settings.relearn)
}

fn quantize(model: &Model, ctx: &InterventionCtx) -> Result<Model> {
    quantize_dequantize(model, ctx.settings.quant_bits)
}

fn probe(model: &Model, ctx: &InterventionCtx) -> Result<Model> {
    let corpus = ctx
        .splits
        .retain
        .iter()
        .map(|e| qa_example(ctx.vocab, &e.question, &e.answer))
        .collect::<Result<Vec<_>>>()?;
    let head = train_probe_head(ctx.retain, &corpus, ctx.settings.probe_layer, &ctx.settings.probe)?;
    apply_probe(model, &head)
}

type Entry = Arc<dyn Any + Send + Sync>;

#[derive(Default, Clone)]
pub struct HandlerRegistry {
    entries: BTreeMap<(HandlerKind, String), Entry>,
}

impl fmt::Debug for HandlerRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl HandlerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every built-in trainer, dataset, metric, loader and intervention.
    pub fn builtin() -> Self {
        let mut r = HandlerRegistry::new();
        let mut add = |kind, key: &str, value: Entry| {
            r.register_entry(kind, key, value).expect("builtin keys are unique");
        };
        add(HandlerKind::Trainer, "finetune", Arc::new(Trainer::Finetune));
        for m in MethodKey::ALL {
            add(HandlerKind::Trainer, m.key(), Arc::new(Trainer::Unlearn(m)));
        }
        let datasets: [(&str, DatasetFn); 6] = [
            ("forget", |s| &s.forget),
            ("retain", |s| &s.retain),
            ("holdout", |s| &s.holdout),
            ("real_level", |s| &s.real_level),
            ("world_level", |s| &s.world_level),
            ("celebrity", |s| &s.celebrity),
        ];
        for (k, f) in datasets {
            add(HandlerKind::Dataset, k, Arc::new(f));
        }
        for (k, f) in builtin_metrics() {
            add(HandlerKind::Metric, k, Arc::new(f));
        }
        for (k, s) in [
            ("target", ModelSource::Target),
            ("retain", ModelSource::Retain),
            ("checkpoint", ModelSource::Checkpoint),
        ] {
            add(HandlerKind::ModelLoader, k, Arc::new(s));
        }
        let interventions: [(&str, InterventionFn); 3] =
            [("relearn", relearn), ("quantize", quantize), ("probe", probe)];
        for (k, f) in interventions {
            add(HandlerKind::Intervention, k, Arc::new(f));
        }
        r
    }

    pub fn register<T: Any + Send + Sync>(&mut self, kind: HandlerKind, key: &str, handler: T) -> Result<()> {
        self.register_entry(kind, key, Arc::new(handler))
    }

    fn register_entry(&mut self, kind: HandlerKind, key: &str, handler: Entry) -> Result<()> {
        if key.is_empty() {
            return Err(config_err!("{kind} key must be non-empty"));
        }
        let slot = (kind, key.to_string());
        if self.entries.contains_key(&slot) {
            return Err(config_err!("{kind} `{key}` is already registered"));
        }
        self.entries.insert(slot, handler);
        Ok(())
    }

    /// The registered handler, which must have been registered as a `T`.
    pub fn resolve<T: Any + Send + Sync>(&self, kind: HandlerKind, key: &str) -> Result<Arc<T>> {
        let entry = self
            .entries
            .get(&(kind, key.to_string()))
            .ok_or_else(|| Error::lookup(kind.key(), key, self.keys(kind)))?;
        entry
            .clone()
            .downcast::<T>()
            .map_err(|_| config_err!("{kind} `{key}` has a different handler type"))
    }

    pub fn keys(&self, kind: HandlerKind) -> Vec<&str> {
        self.entries
            .keys()
            .filter(|(k, _)| *k == kind)
            .map(|(_, key)| key.as_str())
            .collect()
    }

    pub fn trainer(&self, key: &str) -> Result<Trainer> {
        self.resolve::<Trainer>(HandlerKind::Trainer, key).map(|t| *t)
    }

    pub fn dataset(&self, key: &str) -> Result<DatasetFn> {
        self.resolve::<DatasetFn>(HandlerKind::Dataset, key).map(|f| *f)
    }

    pub fn metric(&self, key: &str) -> Result<MetricFn> {
        self.resolve::<MetricFn>(HandlerKind::Metric, key).map(|f| *f)
    }

    pub fn model_loader(&self, key: &str) -> Result<ModelSource> {
        self.resolve::<ModelSource>(HandlerKind::ModelLoader, key).map(|s| *s)
    }

    pub fn intervention(&self, key: &str) -> Result<InterventionFn> {
        self.resolve::<InterventionFn>(HandlerKind::Intervention, key)
            .map(|f| *f)
    }
}
