//! Config-driven experiments. Each run lives in
//! `<root>/<name>/<config-hash>/{checkpoints,reports,logs}` next to its
//! composed `config.yaml`; a `DONE` or `FAILED` marker records the outcome.

mod config;
mod registry;
mod report;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{
    apply_override, compose_config, load_config, merge_values, read_config_dump, BenchBlock, DatasetsBlock, EvalBlock,
    ExperimentConfig, ExperimentKind, GenerationArgs, MetaEvalBlock, MethodArgs, ModelArgs, ModelRef, ReportBlock,
    TrainerArgs, TrainerBlock, WorldArgs,
};
pub use registry::{DatasetFn, HandlerKind, HandlerRegistry, InterventionCtx, InterventionFn, ModelSource, Trainer};
pub use report::{
    emit_report, eval_report_json, eval_table, faithfulness_plot, histogram_svg, meta_eval_table, parse_eval_report,
    ReportFormat, ReportMeta, Results, REPORT_FORMAT_VERSION,
};

use crate::error::{config_err, data_err, Error, Result};
use crate::leaderboard::{overall_row, privacy_score, rank, tuning_objective, BenchScores, LeaderboardRow};
use crate::metaeval::{
    base_corpus, build_pools, build_unlearned_pool, run_meta_eval, target_corpus, MetaEvalResult, ModelPool, PoolLabel,
    PoolMember, Provenance,
};
use crate::methods::{run_unlearn, MethodKey, UnlearnConfig};
use crate::metrics::{model_utility, EvalContext, MetricReport, META_METRICS};
use crate::seqmodel::Vocabulary;
use crate::seqmodel::{corpus_mean_nll, load_checkpoint, save_checkpoint, train_lm, CheckpointMeta, Model, ModelRole};
use crate::worldgen::{generate_world, make_splits, SplitSet};
use config::write_file;

pub const OUTPUT_DIR_ENV: &str = "OU_OUTPUT_DIR";
const DEFAULT_ROOT: &str = "runs";
const DONE: &str = "DONE";
const FAILED: &str = "FAILED";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's `output_dir` and the environment.
    pub output_root: Option<PathBuf>,
    pub skip_existing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub config_hash: String,
    pub artifacts: Vec<PathBuf>,
    /// A finished run with this hash already existed.
    pub skipped: bool,
}

/// CLI flag, then the config's `output_dir`, then `OU_OUTPUT_DIR`, then `runs`.
pub fn output_root(cfg: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    opts.output_root
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT))
}

pub fn run_dir(cfg: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    output_root(cfg, opts).join(cfg.run_name()).join(cfg.hash())
}

/// Stage name of a failed run, if any.
pub fn failed_stage(run_dir: &Path) -> Option<String> {
    let text = fs::read_to_string(run_dir.join(FAILED)).ok()?;
    text.lines()
        .next()
        .and_then(|l| l.strip_prefix("stage: "))
        .map(str::to_string)
}

pub fn is_done(run_dir: &Path) -> bool {
    run_dir.join(DONE).is_file()
}

/// Every handler key the config names resolves.
pub fn validate_handlers(cfg: &ExperimentConfig, registry: &HandlerRegistry) -> Result<()> {
    registry.trainer(&cfg.trainer.handler)?;
    for key in [&cfg.datasets.forget, &cfg.datasets.retain, &cfg.datasets.holdout] {
        registry.dataset(key)?;
    }
    expand_metrics(&cfg.metrics, registry)?;
    registry.model_loader(&cfg.eval.model.loader)?;
    for key in &cfg.eval.interventions {
        registry.intervention(key)?;
    }
    Ok(())
}

/// Expands `meta` and `all`, drops duplicates, rejects unknown keys.
pub fn expand_metrics(keys: &[String], registry: &HandlerRegistry) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    for key in keys {
        match key.as_str() {
            "meta" => out.extend(META_METRICS.iter().map(|k| k.to_string())),
            "all" => out.extend(registry.keys(HandlerKind::Metric).into_iter().map(String::from)),
            k => {
                registry.metric(k)?;
                out.push(k.to_string());
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    out.retain(|k| seen.insert(k.clone()));
    Ok(out)
}

/// Runs one experiment. Failures leave a `FAILED` marker naming the stage.
pub fn run_experiment(cfg: &ExperimentConfig, registry: &HandlerRegistry, opts: &RunOptions) -> Result<RunOutcome> {
    let dir = run_dir(cfg, opts);
    let hash = cfg.hash();
    if opts.skip_existing && is_done(&dir) {
        let text = fs::read_to_string(dir.join(DONE)).map_err(|e| Error::io(dir.join(DONE), e))?;
        let artifacts: Vec<PathBuf> = serde_json::from_str(&text)?;
        log::info!("{} {hash}: finished run exists, skipping", cfg.run_name());
        return Ok(RunOutcome {
            run_dir: dir,
            config_hash: hash,
            artifacts,
            skipped: true,
        });
    }
    for marker in [DONE, FAILED] {
        let p = dir.join(marker);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    for sub in ["checkpoints", "reports", "logs"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    write_file(&dir.join("config.yaml"), &cfg.to_yaml()?)?;

    let mut job = Job {
        cfg,
        registry,
        opts,
        dir: dir.clone(),
        meta: ReportMeta::new(&hash, cfg.seed, cfg.world.seed),
        stage: "validate".into(),
        log: String::new(),
        started: Instant::now(),
        artifacts: Vec::new(),
    };
    let result = validate_handlers(cfg, registry).and_then(|_| job.dispatch());
    let _ = write_file(&dir.join("logs/run.log"), &job.log);
    match result {
        Ok(()) => {
            let artifacts = job.artifacts;
            write_file(&dir.join(DONE), &serde_json::to_string_pretty(&artifacts)?)?;
            Ok(RunOutcome {
                run_dir: dir,
                config_hash: hash,
                artifacts,
                skipped: false,
            })
        }
        Err(e) => {
            log::error!("{} failed in stage `{}`: {e}", cfg.run_name(), job.stage);
            write_file(&dir.join(FAILED), &format!("stage: {}\nerror: {e}\n", job.stage))?;
            Err(e)
        }
    }
}

/// The world, its splits (with dataset handlers applied) and vocabulary.
pub fn build_world(cfg: &ExperimentConfig, registry: &HandlerRegistry) -> Result<(SplitSet, Vocabulary)> {
    let w = &cfg.world;
    let world = generate_world(w.seed, w.n_entities, w.facts_per_entity)?;
    let splits = make_splits(&world, w.forget_fraction)?;
    let vocab = splits.vocabulary();
    let pick = |key: &str| -> Result<Vec<_>> { Ok(registry.dataset(key)?(&splits).to_vec()) };
    let view = SplitSet {
        forget: pick(&cfg.datasets.forget)?,
        retain: pick(&cfg.datasets.retain)?,
        holdout: pick(&cfg.datasets.holdout)?,
        ..splits.clone()
    };
    Ok((view, vocab))
}

/// Target and retain models of `cfg`'s base-model run, trained on first use.
pub fn base_models(cfg: &ExperimentConfig, registry: &HandlerRegistry, opts: &RunOptions) -> Result<(Model, Model)> {
    let base = cfg.base_models_config();
    let out = run_experiment(
        &base,
        registry,
        &RunOptions {
            skip_existing: true,
            ..opts.clone()
        },
    )?;
    let ck = out.run_dir.join("checkpoints");
    Ok((
        load_checkpoint(&ck.join("target"))?.0,
        load_checkpoint(&ck.join("retain"))?.0,
    ))
}

#[derive(Debug, Serialize, Deserialize)]
struct PoolIndexEntry {
    member_id: String,
    provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
struct PoolIndex {
    positive: Vec<PoolIndexEntry>,
    negative: Vec<PoolIndexEntry>,
    failed: Vec<(Provenance, String)>,
    #[serde(rename = "_meta")]
    meta: ReportMeta,
}

/// Loads the P and N pools written by a pools run.
pub fn load_pools(pools_run: &Path) -> Result<(ModelPool, ModelPool)> {
    let idx_path = pools_run.join("reports/pools.json");
    let text = fs::read_to_string(&idx_path).map_err(|e| Error::io(&idx_path, e))?;
    let index: PoolIndex = serde_json::from_str(&text)?;
    let load = |label: PoolLabel, entries: &[PoolIndexEntry]| -> Result<ModelPool> {
        let mut pool = ModelPool::new(label);
        for e in entries {
            let dir = pools_run.join("checkpoints").join(label_dir(label)).join(&e.member_id);
            pool.members.push(PoolMember {
                model: load_checkpoint(&dir)?.0,
                provenance: e.provenance.clone(),
            });
        }
        if pool.is_empty() {
            return Err(data_err!("pool {label:?} in {} is empty", pools_run.display()));
        }
        Ok(pool)
    };
    Ok((
        load(PoolLabel::P, &index.positive)?,
        load(PoolLabel::N, &index.negative)?,
    ))
}

fn label_dir(label: PoolLabel) -> &'static str {
    match label {
        PoolLabel::P => "P",
        PoolLabel::N => "N",
        PoolLabel::Unlearned => "unlearned",
        PoolLabel::Retain => "retain",
    }
}

struct Job<'a> {
    cfg: &'a ExperimentConfig,
    registry: &'a HandlerRegistry,
    opts: &'a RunOptions,
    dir: PathBuf,
    meta: ReportMeta,
    stage: String,
    log: String,
    started: Instant,
    artifacts: Vec<PathBuf>,
}

impl Job<'_> {
    fn enter(&mut self, stage: &str) {
        log::info!("{} [{}]: {stage}", self.cfg.run_name(), self.meta.config_hash);
        let _ = writeln!(self.log, "{:>8.2}s  {stage}", self.started.elapsed().as_secs_f64());
        self.stage = stage.to_string();
    }

    fn dispatch(&mut self) -> Result<()> {
        match self.cfg.experiment {
            ExperimentKind::Finetune => self.finetune(),
            ExperimentKind::Unlearn => self.unlearn().map(|_| ()),
            ExperimentKind::Relearn => self.relearn(),
            ExperimentKind::Eval => self.eval(),
            ExperimentKind::Pools => self.pools(),
            ExperimentKind::MetaEval => self.meta_eval(),
            ExperimentKind::Bench => self.bench(),
            ExperimentKind::Report => self.report(),
        }
    }

    fn world(&mut self) -> Result<(SplitSet, Vocabulary)> {
        self.enter("world");
        build_world(self.cfg, self.registry)
    }

    fn base(&mut self) -> Result<(Model, Model)> {
        self.enter("base-models");
        base_models(self.cfg, self.registry, self.opts)
    }

    fn context<'c>(&self, splits: &'c SplitSet, vocab: &'c Vocabulary, retain: &'c Model) -> Result<EvalContext<'c>> {
        let mut ctx = EvalContext::new(splits, vocab)?;
        ctx.max_new_tokens = self.cfg.generation_args.max_new_tokens;
        ctx.k_frac = self.cfg.generation_args.k_frac;
        ctx.retain_model = Some(retain);
        Ok(ctx)
    }

    fn save_model(
        &mut self,
        rel: &str,
        model: &Model,
        vocab: &Vocabulary,
        provenance: serde_json::Value,
    ) -> Result<()> {
        let dir = self.dir.join("checkpoints").join(rel);
        let mut meta = CheckpointMeta::for_model(model, &self.meta.config_hash, &vocab.hash());
        let mut prov = json!({ "world_seed": self.cfg.world.seed, "run_seed": self.cfg.seed });
        merge_values(&mut prov, provenance);
        meta.provenance = prov;
        save_checkpoint(&dir, model, &meta)?;
        self.artifacts.push(dir);
        Ok(())
    }

    fn emit(&mut self, results: &Results, formats: &[ReportFormat]) -> Result<()> {
        let written = emit_report(results, formats, &self.dir.join("reports"), &self.meta)?;
        self.artifacts.extend(written);
        Ok(())
    }

    fn evaluate(&mut self, name: &str, model: &Model, ctx: &EvalContext) -> Result<Vec<MetricReport>> {
        self.enter(&format!("evaluate-{name}"));
        let keys = expand_metrics(&self.cfg.metrics, self.registry)?;
        let reports = keys
            .iter()
            .map(|k| self.registry.metric(k)?(model, ctx))
            .collect::<Result<Vec<_>>>()?;
        self.emit(
            &Results::Eval {
                name: name.to_string(),
                reports: reports.clone(),
            },
            &ReportFormat::ALL,
        )?;
        Ok(reports)
    }

    fn finetune(&mut self) -> Result<()> {
        let (splits, vocab) = self.world()?;
        let data_dir = self.dir.join("data");
        splits.write(&data_dir)?;
        self.artifacts.push(data_dir);
        let arch = self.cfg.model.config(vocab.size());
        let mut summary = serde_json::Map::new();
        for (name, corpus, role) in [
            ("target", target_corpus(&splits, &vocab)?, ModelRole::Target),
            ("retain", base_corpus(&splits, &vocab)?, ModelRole::Retain),
        ] {
            self.enter(&format!("train-{name}"));
            let model = train_lm(&corpus, &self.cfg.finetune, None, &arch)?.with_role(role);
            let nll = corpus_mean_nll(&model, &corpus)?;
            summary.insert(
                name.into(),
                json!({ "train_nll": nll, "corpus_size": corpus.len(), "checksum": model.checksum() }),
            );
            self.save_model(name, &model, &vocab, json!({ "corpus": name }))?;
        }
        summary.insert("_meta".into(), serde_json::to_value(&self.meta)?);
        self.write_json("reports/finetune.json", &serde_json::Value::Object(summary))
    }

    fn write_json(&mut self, rel: &str, v: &serde_json::Value) -> Result<()> {
        let path = self.dir.join(rel);
        write_file(&path, &(serde_json::to_string_pretty(v)? + "\n"))?;
        self.artifacts.push(path);
        Ok(())
    }

    fn unlearn_method(&self) -> Result<MethodKey> {
        match self.registry.trainer(&self.cfg.trainer.handler)? {
            Trainer::Unlearn(m) => Ok(m),
            Trainer::Finetune => Err(config_err!(
                "{} needs an unlearning trainer, got `{}`",
                self.cfg.experiment,
                self.cfg.trainer.handler
            )),
        }
    }

    /// Unlearns the target with the trainer block and evaluates the result.
    fn unlearn(&mut self) -> Result<Model> {
        let method = self.unlearn_method()?;
        let (splits, vocab) = self.world()?;
        let (target, retain) = self.base()?;
        let ucfg = self.cfg.trainer.unlearn_config(method, self.cfg.seed);
        self.enter("unlearn");
        let (model, diverged) = match run_unlearn(&target, &vocab, &splits.forget, &splits.retain, &ucfg) {
            Ok(m) => (m, None),
            Err(Error::Diverged { step, last_stable }) => {
                log::warn!("{method} diverged at step {step}; keeping the last stable parameters");
                (*last_stable, Some(step))
            }
            Err(e) => return Err(e),
        };
        let hyper = serde_json::to_value(&ucfg)?;
        self.save_model(
            "unlearned",
            &model,
            &vocab,
            json!({ "method": method, "hyperparams": hyper, "target_checksum": target.checksum() }),
        )?;
        let meta = serde_json::to_value(&self.meta)?;
        self.write_json(
            "reports/unlearn.json",
            &json!({ "method": method, "config": hyper, "diverged_at_step": diverged, "_meta": meta }),
        )?;
        let ctx = self.context(&splits, &vocab, &retain)?;
        self.evaluate("eval", &model, &ctx)?;
        Ok(model)
    }

    fn intervene(
        &mut self,
        model: Model,
        splits: &SplitSet,
        vocab: &Vocabulary,
        retain: &Model,
        keys: &[String],
    ) -> Result<Model> {
        let mut model = model;
        for key in keys {
            self.enter(&format!("intervention-{key}"));
            let f = self.registry.intervention(key)?;
            let ctx = InterventionCtx {
                splits,
                vocab,
                retain,
                settings: &self.cfg.meta_eval.settings,
            };
            model = f(&model, &ctx)?;
        }
        Ok(model)
    }

    /// Relearns a checkpoint (`eval.model.loader: checkpoint`) or a freshly
    /// unlearned target on the forget set.
    fn relearn(&mut self) -> Result<()> {
        let model = if self.registry.model_loader(&self.cfg.eval.model.loader)? == ModelSource::Checkpoint {
            self.load_model_ref()?
        } else {
            self.unlearn()?
        };
        let (splits, vocab) = self.world()?;
        let (_, retain) = self.base()?;
        let relearned = self.intervene(model, &splits, &vocab, &retain, &["relearn".to_string()])?;
        self.save_model("relearned", &relearned, &vocab, json!({ "intervention": "relearn" }))?;
        let ctx = self.context(&splits, &vocab, &retain)?;
        self.evaluate("relearned", &relearned, &ctx)?;
        Ok(())
    }

    fn load_model_ref(&mut self) -> Result<Model> {
        let r = &self.cfg.eval.model;
        let path = r
            .path
            .as_ref()
            .ok_or_else(|| config_err!("loader `checkpoint` needs eval.model.path"))?;
        self.enter("load-checkpoint");
        Ok(load_checkpoint(path)?.0)
    }

    fn eval(&mut self) -> Result<()> {
        let (splits, vocab) = self.world()?;
        let (target, retain) = self.base()?;
        let model = match self.registry.model_loader(&self.cfg.eval.model.loader)? {
            ModelSource::Target => target,
            ModelSource::Retain => retain.clone(),
            ModelSource::Checkpoint => self.load_model_ref()?,
        };
        if model.config().vocab_size != vocab.size() {
            return Err(data_err!(
                "model vocabulary {} does not match the world's {}",
                model.config().vocab_size,
                vocab.size()
            ));
        }
        let interventions = self.cfg.eval.interventions.clone();
        let model = self.intervene(model, &splits, &vocab, &retain, &interventions)?;
        let ctx = self.context(&splits, &vocab, &retain)?;
        self.evaluate("eval", &model, &ctx)?;
        Ok(())
    }

    fn pools(&mut self) -> Result<()> {
        let (splits, vocab) = self.world()?;
        let arch = self.cfg.model.config(vocab.size());
        self.enter("train-pools");
        let (p, n) = build_pools(&splits, &vocab, &self.cfg.pools, &arch)?;
        let mut index = PoolIndex {
            positive: Vec::new(),
            negative: Vec::new(),
            failed: p.failed.iter().chain(&n.failed).cloned().collect(),
            meta: self.meta.clone(),
        };
        self.enter("save-pools");
        for pool in [&p, &n] {
            for m in &pool.members {
                let id = m.provenance.member_id();
                let rel = format!("{}/{id}", label_dir(pool.label));
                self.save_model(&rel, &m.model, &vocab, serde_json::to_value(&m.provenance)?)?;
                let entry = PoolIndexEntry {
                    member_id: id,
                    provenance: m.provenance.clone(),
                };
                match pool.label {
                    PoolLabel::P => index.positive.push(entry),
                    _ => index.negative.push(entry),
                }
            }
        }
        self.write_json("reports/pools.json", &serde_json::to_value(&index)?)
    }

    fn pool_models(&mut self) -> Result<(ModelPool, ModelPool)> {
        self.enter("pools");
        let dir = match &self.cfg.meta_eval.pool_dir {
            Some(d) => d.clone(),
            None => {
                let pcfg = self.cfg.pools_config();
                let opts = RunOptions {
                    skip_existing: true,
                    ..self.opts.clone()
                };
                run_experiment(&pcfg, self.registry, &opts)?.run_dir
            }
        };
        load_pools(&dir)
    }

    fn meta_eval(&mut self) -> Result<()> {
        let (splits, vocab) = self.world()?;
        let (target, retain) = self.base()?;
        let (p, n) = self.pool_models()?;
        let ctx = self.context(&splits, &vocab, &retain)?;
        self.enter("unlearned-pool");
        let configs: Vec<UnlearnConfig> = self
            .cfg
            .meta_eval
            .methods
            .iter()
            .flat_map(|&m| UnlearnConfig::default_sweep(m))
            .map(|c| UnlearnConfig {
                seed: self.cfg.seed,
                ..c
            })
            .collect();
        let unlearned = build_unlearned_pool(&target, &ctx, &configs);
        if unlearned.is_empty() {
            return Err(data_err!("every unlearning run failed"));
        }
        self.enter("score");
        let metrics = expand_metrics(&self.cfg.metrics, self.registry)?;
        let results: Vec<MetaEvalResult> = run_meta_eval(
            &ctx,
            &p,
            &n,
            &unlearned,
            &target,
            &retain,
            &self.cfg.meta_eval.settings,
            &metrics,
        )?;
        self.enter("report");
        self.emit(&Results::MetaEval(results), &ReportFormat::ALL)
    }

    fn bench(&mut self) -> Result<()> {
        let (splits, vocab) = self.world()?;
        let (target, retain) = self.base()?;
        let ctx = self.context(&splits, &vocab, &retain)?;
        let mode = self.cfg.bench.mode;
        let init_mu = model_utility(&target, ctx.splits, ctx.vocab, ctx.max_new_tokens)?.agg_value;
        let mut rows = Vec::new();
        for (name, model) in [("Init", &target), ("Retain", &retain)] {
            self.enter(&format!("score-{name}"));
            let s = BenchScores::measure(model, &ctx)?;
            rows.push(overall_row(
                name,
                s.memorization()?,
                privacy_score(model, &retain, &ctx)?,
                s.utility(init_mu)?,
                mode,
            )?);
        }
        for &method in &self.cfg.bench.methods.clone() {
            self.enter(&format!("sweep-{method}"));
            let mut best: Option<(f64, UnlearnConfig, Model, BenchScores)> = None;
            for c in UnlearnConfig::default_sweep(method) {
                let c = UnlearnConfig {
                    seed: self.cfg.seed,
                    ..c
                };
                let model = match run_unlearn(&target, &vocab, &splits.forget, &splits.retain, &c) {
                    Ok(m) => m,
                    Err(Error::Diverged { last_stable, .. }) => *last_stable,
                    Err(e) => {
                        log::warn!("{method} lr {:e} failed: {e}", c.learning_rate);
                        continue;
                    }
                };
                let s = BenchScores::measure(&model, &ctx)?;
                let objective = tuning_objective(s.memorization()?, s.utility(init_mu)?)?;
                if best.as_ref().is_none_or(|b| objective > b.0) {
                    best = Some((objective, c, model, s));
                }
            }
            let Some((_, c, model, s)) = best else {
                return Err(data_err!("every {method} sweep run failed"));
            };
            self.enter(&format!("score-{method}"));
            let rel = format!("unlearned/{method}");
            let hyper = serde_json::to_value(&c)?;
            self.save_model(&rel, &model, &vocab, json!({ "method": method, "hyperparams": hyper }))?;
            let mut row = overall_row(
                method.key(),
                s.memorization()?,
                privacy_score(&model, &retain, &ctx)?,
                s.utility(init_mu)?,
                mode,
            )?;
            row.hyperparams = hyper;
            row.checkpoint = Some(format!("checkpoints/{rel}"));
            rows.push(row);
        }
        rank(&mut rows);
        self.enter("report");
        self.emit(&Results::Leaderboard(rows), &[ReportFormat::Json, ReportFormat::Table])
    }

    /// Re-renders the reports of an earlier meta-eval or bench run.
    fn report(&mut self) -> Result<()> {
        self.enter("read-reports");
        let src = self
            .cfg
            .report
            .reports_dir
            .clone()
            .ok_or_else(|| config_err!("report needs report.reports_dir"))?;
        let mut found = false;
        let meta_path = src.join("meta_eval.json");
        if meta_path.is_file() {
            let v: serde_json::Value = read_json(&meta_path)?;
            let results: Vec<MetaEvalResult> = serde_json::from_value(v["results"].clone())?;
            self.emit(&Results::MetaEval(results), &ReportFormat::ALL)?;
            found = true;
        }
        let board_path = src.join("leaderboard.json");
        if board_path.is_file() {
            let v: serde_json::Value = read_json(&board_path)?;
            let mut rows: Vec<LeaderboardRow> = serde_json::from_value(v["rows"].clone())?;
            if let Some(mode) = self.cfg.report.mode {
                for r in &mut rows {
                    let agg = overall_row(&r.method, r.mem, r.privacy, r.utility, mode)?.agg;
                    r.agg = agg;
                }
                rank(&mut rows);
            }
            self.emit(&Results::Leaderboard(rows), &[ReportFormat::Json, ReportFormat::Table])?;
            found = true;
        }
        if !found {
            return Err(data_err!("no meta_eval.json or leaderboard.json in {}", src.display()));
        }
        Ok(())
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
