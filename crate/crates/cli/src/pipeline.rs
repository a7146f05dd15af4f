//! Stage orchestration for the `run`, `xq`, and `sgae` commands.
//!
//! Stages form a fixed DAG: ingest -> velocity -> split -> normalize ->
//! resample (train side only) -> fit -> score -> attribute -> audit ->
//! report. Every stage derives its randomness from the master seed, so a
//! run is a pure function of (config bytes, effective seed, data file) and
//! report bytes are identical across re-runs and thread counts. Protected
//! partitions (test, calibration) are hashed at split time and re-hashed
//! from the pristine input at the end; the manifest records both.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use shapaudit_core::attribution::{
    explain_table, global_importance, write_attributions_csv, AttributionVector, BackgroundSet,
    ExactExplainer, Explainer, GlobalImportance, KernelExplainer, PrecomputedAttributions,
    TreeShapExplainer,
};
use shapaudit_core::dataset::{
    apply_normalizer, chronological_split_indices, fit_normalizer, load_table, smote_tomek,
    stratified_kfold, stratified_split_indices, velocity_features, DataTable, VelocityConfig,
};
use shapaudit_core::models::{
    load_external_scores, score_batch, train_gbdt, train_logistic, GbdtConfig, LogisticConfig,
    LogisticModel, Scorer, TreeEnsemble,
};
use shapaudit_core::report::{fmt_p, mean_std, write_json};
use shapaudit_core::seeding::derive_seed;
use shapaudit_core::sgae::{run_sgae, SgaeConfig, SgaeReport};
use shapaudit_core::stats::{evaluate_scores, roc_auc, MetricReport};
use shapaudit_core::xq::{
    cross_explainer_agreement_instances, faithfulness_report, stability_kendall_w, FaithfulnessReport,
};

use crate::config::{
    resolve, ExperimentConfig, ExplainerKind, ModelKind, ModelSection, ResampleMethod, SplitKind,
};
use crate::manifest::{table_hash, PartitionHash, RunManifest, StageTimer};

use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    /// Config or precondition problems; exit code 1.
    Validation(Vec<String>),
    /// A stage failed at runtime; exit code 2.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(problems) => {
                writeln!(f, "configuration invalid:")?;
                for p in problems {
                    writeln!(f, "  - {p}")?;
                }
                Ok(())
            }
            CliError::Runtime(message) => write!(f, "{message}"),
        }
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn runtime(message: impl Into<String>) -> CliError {
    CliError::Runtime(message.into())
}

pub struct RunContext {
    pub config: ExperimentConfig,
    /// Directory of the config file; relative paths resolve against it.
    pub base_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub config_hash: String,
}

impl RunContext {
    fn validated(&self) -> Result<(), CliError> {
        let problems = self.config.validate(&self.base_dir);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(problems))
        }
    }

    fn path(&self, p: &Path) -> PathBuf {
        resolve(&self.base_dir, p)
    }
}

/// One side of a split, remembering where its rows came from.
struct Partition {
    table: DataTable,
    indices: Vec<usize>,
}

impl Partition {
    fn from_indices(full: &DataTable, indices: Vec<usize>) -> Result<Self, CliError> {
        Ok(Self {
            table: full.subset(&indices)?,
            indices,
        })
    }
}

struct SplitPair {
    fold: Option<usize>,
    train: Partition,
    eval: Partition,
}

/// External model data, loaded once and subset per partition.
struct ExternalData {
    scores: Vec<f64>,
    attributions: Option<Vec<AttributionVector>>,
}

enum FittedScorer {
    Logistic(LogisticModel),
    Gbdt(TreeEnsemble),
    External(ExternalData),
}

struct FittedModel {
    name: String,
    explainer_kind: ExplainerKind,
    scorer: FittedScorer,
    explain_seed: u64,
}

impl FittedModel {
    fn eval_scores(&self, partition_norm: &DataTable, partition: &Partition) -> Result<Vec<f64>, CliError> {
        match &self.scorer {
            FittedScorer::Logistic(m) => Ok(score_batch(m, partition_norm)?),
            FittedScorer::Gbdt(m) => Ok(score_batch(m, partition_norm)?),
            FittedScorer::External(e) => Ok(partition
                .indices
                .iter()
                .map(|&i| e.scores[i])
                .collect()),
        }
    }

    /// Explainer bound to a specific partition (file attributions are
    /// row-aligned with the original table and must be subset).
    fn explainer_for(
        &self,
        background: &BackgroundSet,
        n_coalitions: usize,
        partition: &Partition,
    ) -> Result<Option<Box<dyn Explainer>>, CliError> {
        let explainer: Box<dyn Explainer> = match (self.explainer_kind, &self.scorer) {
            (ExplainerKind::None, _) => return Ok(None),
            (ExplainerKind::Tree, FittedScorer::Gbdt(m)) => Box::new(TreeShapExplainer {
                ensemble: m.clone(),
                background: background.clone(),
            }),
            (ExplainerKind::Kernel, FittedScorer::Logistic(m)) => {
                let model = m.clone();
                Box::new(KernelExplainer {
                    f: move |row: &[f64]| model.score(row),
                    background: background.clone(),
                    n_coalitions,
                    seed: self.explain_seed,
                })
            }
            (ExplainerKind::Kernel, FittedScorer::Gbdt(m)) => {
                let model = m.clone();
                Box::new(KernelExplainer {
                    f: move |row: &[f64]| model.score(row),
                    background: background.clone(),
                    n_coalitions,
                    seed: self.explain_seed,
                })
            }
            (ExplainerKind::Exact, FittedScorer::Logistic(m)) => {
                let model = m.clone();
                Box::new(ExactExplainer {
                    f: move |row: &[f64]| model.score(row),
                    background: background.clone(),
                })
            }
            (ExplainerKind::Exact, FittedScorer::Gbdt(m)) => {
                let model = m.clone();
                Box::new(ExactExplainer {
                    f: move |row: &[f64]| model.score(row),
                    background: background.clone(),
                })
            }
            (ExplainerKind::File, FittedScorer::External(e)) => {
                let attrs = e.attributions.as_ref().ok_or_else(|| {
                    runtime(format!(
                        "model '{}' has no attribution columns in its score file; \
                         run with explainer = \"none\" or supply phi columns",
                        self.name
                    ))
                })?;
                let subset: Vec<AttributionVector> = partition
                    .indices
                    .iter()
                    .map(|&i| attrs[i].clone())
                    .collect();
                Box::new(PrecomputedAttributions::new(subset)?)
            }
            (kind, _) => {
                return Err(runtime(format!(
                    "model '{}' cannot use the {kind:?} explainer with its kind",
                    self.name
                )))
            }
        };
        Ok(Some(explainer))
    }
}

/// Serialized per-model metrics file.
#[derive(Serialize)]
struct ModelMetricsFile<'a> {
    model: &'a str,
    partition: &'a str,
    metrics: &'a MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    drift: Option<DriftInfo>,
}

#[derive(Serialize, Clone, Copy)]
struct DriftInfo {
    auc_in_time: f64,
    auc_out_of_time: f64,
    delta_auc: f64,
}

#[derive(Serialize)]
struct AggregateFile<'a> {
    model: &'a str,
    k: usize,
    mean: BTreeMap<&'static str, f64>,
    std: BTreeMap<&'static str, f64>,
    per_fold: Vec<&'a MetricReport>,
}

// ---------------------------------------------------------------------------
// shared stage helpers
// ---------------------------------------------------------------------------

fn ingest(ctx: &RunContext) -> Result<DataTable, CliError> {
    let path = ctx.path(&ctx.config.data.path);
    let mut table = load_table(&path, &ctx.config.data.schema())?;
    if let Some(v) = &ctx.config.velocity {
        table = velocity_features(
            &table,
            &VelocityConfig {
                amount: v.amount.clone(),
                merchant: v.merchant.clone(),
                location: v.location.clone(),
                day_duration: v.day_duration,
            },
        )?;
    }
    Ok(table)
}

fn make_splits(ctx: &RunContext, full: &DataTable) -> Result<Vec<SplitPair>, CliError> {
    let seed = derive_seed(ctx.seed, "split", 0);
    match ctx.config.split.kind {
        SplitKind::Stratified => {
            let fraction = ctx.config.split.test_fraction.expect("validated");
            let (train_idx, test_idx) = stratified_split_indices(full, fraction, seed)?;
            Ok(vec![SplitPair {
                fold: None,
                train: Partition::from_indices(full, train_idx)?,
                eval: Partition::from_indices(full, test_idx)?,
            }])
        }
        SplitKind::Chronological => {
            let quantile = ctx.config.split.train_quantile.expect("validated");
            let (train_idx, test_idx) = chronological_split_indices(full, quantile)?;
            Ok(vec![SplitPair {
                fold: None,
                train: Partition::from_indices(full, train_idx)?,
                eval: Partition::from_indices(full, test_idx)?,
            }])
        }
        SplitKind::Kfold => {
            let k = ctx.config.split.k.expect("validated");
            let plan = stratified_kfold(full, k, seed)?;
            (0..k)
                .map(|fold| {
                    Ok(SplitPair {
                        fold: Some(fold),
                        train: Partition::from_indices(full, plan.complement_indices(fold))?,
                        eval: Partition::from_indices(full, plan.fold_indices(fold))?,
                    })
                })
                .collect()
        }
    }
}

/// Normalize (fit on train only), resample the training side, and fit
/// every configured model. Returns the fitted models plus the normalized
/// partitions and the training background sample.
struct FittedPair {
    train_norm: DataTable,
    eval_norm: DataTable,
    background: BackgroundSet,
    models: Vec<FittedModel>,
}

fn fit_pair(
    ctx: &RunContext,
    full_rows: usize,
    pair: &SplitPair,
    fold_tag: u64,
) -> Result<FittedPair, CliError> {
    let (train_norm, eval_norm) = if ctx.config.normalize.enabled {
        let normalizer = fit_normalizer(&pair.train.table);
        (
            apply_normalizer(&normalizer, &pair.train.table)?,
            apply_normalizer(&normalizer, &pair.eval.table)?,
        )
    } else {
        (pair.train.table.clone(), pair.eval.table.clone())
    };

    // background sampled from real (pre-resampling) training rows
    let background = BackgroundSet::sample_from_table(
        &train_norm,
        ctx.config.attribution.background_size,
        derive_seed(ctx.seed, "background", fold_tag),
    )?;

    let train_fit = match &ctx.config.resample {
        Some(r) if r.method == ResampleMethod::SmoteTomek => smote_tomek(
            &train_norm,
            r.k_neighbors,
            derive_seed(ctx.seed, "resample", fold_tag),
        )?,
        _ => train_norm.clone(),
    };

    let mut models = Vec::new();
    for m in &ctx.config.models {
        models.push(fit_model(ctx, m, &train_fit, full_rows)?);
    }

    Ok(FittedPair {
        train_norm,
        eval_norm,
        background,
        models,
    })
}

fn fit_model(
    ctx: &RunContext,
    section: &ModelSection,
    train_fit: &DataTable,
    full_rows: usize,
) -> Result<FittedModel, CliError> {
    let scorer = match section.kind {
        ModelKind::Logistic => {
            let config = LogisticConfig {
                learning_rate: section.learning_rate.unwrap_or(0.5),
                epochs: section.epochs.unwrap_or(200),
                l2: section.l2.unwrap_or(0.0),
                class_weight: section.class_weight.unwrap_or(1.0),
                seed: derive_seed(ctx.seed, "train-logistic", 0),
            };
            FittedScorer::Logistic(train_logistic(train_fit, &config)?)
        }
        ModelKind::Gbdt => {
            let config = GbdtConfig {
                n_trees: section.n_trees.unwrap_or(200),
                max_depth: section.max_depth.unwrap_or(6),
                learning_rate: section.learning_rate.unwrap_or(0.1),
                min_leaf: section.min_leaf.unwrap_or(1),
                class_weight: section.class_weight.unwrap_or(1.0),
                seed: derive_seed(ctx.seed, "train-gbdt", 0),
            };
            FittedScorer::Gbdt(train_gbdt(train_fit, &config)?)
        }
        ModelKind::External => {
            let path = ctx.path(section.scores.as_ref().expect("validated"));
            let external = load_external_scores(&path, full_rows)?;
            FittedScorer::External(ExternalData {
                scores: external.scores().to_vec(),
                attributions: external.attributions().map(<[AttributionVector]>::to_vec),
            })
        }
    };
    Ok(FittedModel {
        name: section.name.clone(),
        explainer_kind: section.explainer,
        scorer,
        explain_seed: derive_seed(ctx.seed, &format!("explain-{}", section.name), 0),
    })
}

fn protect(manifest: &mut RunManifest, name: &str, table: &DataTable) {
    manifest.partition_hashes.push(PartitionHash {
        partition: name.to_string(),
        before: table_hash(table),
        after: String::new(),
    });
}

fn verify_protected(
    manifest: &mut RunManifest,
    full: &DataTable,
    partitions: &[(String, Vec<usize>)],
) -> Result<(), CliError> {
    for (name, indices) in partitions {
        let recomputed = table_hash(&full.subset(indices)?);
        let slot = manifest
            .partition_hashes
            .iter_mut()
            .find(|p| &p.partition == name)
            .ok_or_else(|| runtime(format!("no recorded hash for partition '{name}'")))?;
        slot.after = recomputed.clone();
        if slot.before != recomputed {
            return Err(runtime(format!(
                "leakage guard tripped: partition '{name}' changed during the run"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// cmd_run
// ---------------------------------------------------------------------------

pub fn cmd_run(ctx: &RunContext) -> Result<RunManifest, CliError> {
    ctx.validated()?;
    std::fs::create_dir_all(&ctx.out_dir).map_err(|e| runtime(e.to_string()))?;
    let mut manifest = RunManifest::new(
        "run",
        ctx.config.config_version,
        ctx.config_hash.clone(),
        ctx.seed,
    );

    let outcome = run_inner(ctx, &mut manifest);
    if let Err(e) = &outcome {
        manifest.failure = Some(e.to_string());
    }
    manifest.write(&ctx.out_dir).map_err(|e| runtime(e.to_string()))?;
    outcome.map(|()| manifest)
}

fn run_inner(ctx: &RunContext, manifest: &mut RunManifest) -> Result<(), CliError> {
    let stage = StageTimer::start("ingest");
    let full = ingest(ctx)?;
    stage.finish(manifest);

    let stage = StageTimer::start("split");
    let pairs = make_splits(ctx, &full)?;
    let protected: Vec<(String, Vec<usize>)> = pairs
        .iter()
        .map(|p| {
            let name = match p.fold {
                Some(f) => format!("eval_fold{f}"),
                None => "test".to_string(),
            };
            (name, p.eval.indices.clone())
        })
        .collect();
    for (name, _) in &protected {
        let pair = pairs
            .iter()
            .find(|p| match p.fold {
                Some(f) => name == &format!("eval_fold{f}"),
                None => name == "test",
            })
            .expect("partition exists");
        protect(manifest, name, &pair.eval.table);
    }
    stage.finish(manifest);

    let mut per_model_folds: BTreeMap<String, Vec<MetricReport>> = BTreeMap::new();
    let mut summary = String::new();
    writeln!(summary, "== scoring runs ==").ok();

    for pair in &pairs {
        let fold_tag = pair.fold.map_or(0, |f| f as u64);
        let mut stage = StageTimer::start(&match pair.fold {
            Some(f) => format!("fit_fold{f}"),
            None => "fit".to_string(),
        });
        let fitted = fit_pair(ctx, full.n_rows(), pair, fold_tag)?;

        // chronological runs also report in-time performance for drift
        let drift_carve = if ctx.config.split.kind == SplitKind::Chronological {
            let (fit_idx, intime_idx) = stratified_split_indices(
                &fitted.train_norm,
                0.2,
                derive_seed(ctx.seed, "drift-carve", 0),
            )?;
            Some((fit_idx, intime_idx))
        } else {
            None
        };

        for model in &fitted.models {
            let scores = model.eval_scores(&fitted.eval_norm, &pair.eval)?;
            let metrics = evaluate_scores(&scores, pair.eval.table.labels())?;

            let drift = match (&drift_carve, &model.scorer) {
                (Some((_, intime_idx)), FittedScorer::Logistic(_) | FittedScorer::Gbdt(_)) => {
                    let intime = fitted.train_norm.subset(intime_idx)?;
                    let intime_partition = Partition {
                        indices: intime_idx.clone(),
                        table: intime.clone(),
                    };
                    let intime_scores = model.eval_scores(&intime, &intime_partition)?;
                    let auc_in_time = roc_auc(&intime_scores, intime.labels())?;
                    Some(DriftInfo {
                        auc_in_time,
                        auc_out_of_time: metrics.auc_roc,
                        delta_auc: metrics.auc_roc - auc_in_time,
                    })
                }
                _ => None,
            };

            let file_name = match pair.fold {
                Some(f) => format!("metrics_{}_fold{f}.json", model.name),
                None => format!("metrics_{}.json", model.name),
            };
            let path = ctx.out_dir.join(&file_name);
            write_json(
                &path,
                &ModelMetricsFile {
                    model: &model.name,
                    partition: if pair.fold.is_some() { "fold" } else { "test" },
                    metrics: &metrics,
                    drift,
                },
            )
            .map_err(|e| runtime(e.to_string()))?;
            stage.add_output(&path);

            writeln!(
                summary,
                "{}{}: auc_roc={:.4} pr_auc={:.4} f1={:.4} mcc={:.4} tau*={:.4}{}",
                model.name,
                pair.fold.map(|f| format!(" fold{f}")).unwrap_or_default(),
                metrics.auc_roc,
                metrics.pr_auc,
                metrics.f1,
                metrics.mcc,
                metrics.tau_star,
                drift
                    .map(|d| format!(" delta_auc={:+.4}", d.delta_auc))
                    .unwrap_or_default(),
            )
            .ok();
            per_model_folds.entry(model.name.clone()).or_default().push(metrics);
        }
        stage.finish(manifest);
    }

    // fold aggregation: mean +/- population std per metric
    if ctx.config.split.kind == SplitKind::Kfold {
        let mut stage = StageTimer::start("aggregate");
        let k = ctx.config.split.k.expect("validated");
        writeln!(summary, "\n== {k}-fold aggregates (mean +/- std) ==").ok();
        for (name, reports) in &per_model_folds {
            let fields: [(&'static str, fn(&MetricReport) -> f64); 7] = [
                ("auc_roc", |r| r.auc_roc),
                ("pr_auc", |r| r.pr_auc),
                ("f1", |r| r.f1),
                ("precision", |r| r.precision),
                ("recall", |r| r.recall),
                ("accuracy", |r| r.accuracy),
                ("mcc", |r| r.mcc),
            ];
            let mut mean = BTreeMap::new();
            let mut std = BTreeMap::new();
            for (field, get) in fields {
                let values: Vec<f64> = reports.iter().map(|r| get(r)).collect();
                let (m, s) = mean_std(&values);
                mean.insert(field, m);
                std.insert(field, s);
            }
            writeln!(
                summary,
                "{name}: auc_roc={:.4}+/-{:.4} pr_auc={:.4}+/-{:.4} f1={:.4}+/-{:.4} mcc={:.4}+/-{:.4}",
                mean["auc_roc"], std["auc_roc"], mean["pr_auc"], std["pr_auc"],
                mean["f1"], std["f1"], mean["mcc"], std["mcc"],
            )
            .ok();
            let path = ctx.out_dir.join(format!("metrics_{name}_aggregate.json"));
            write_json(
                &path,
                &AggregateFile {
                    model: name,
                    k,
                    mean,
                    std,
                    per_fold: reports.iter().collect(),
                },
            )
            .map_err(|e| runtime(e.to_string()))?;
            stage.add_output(&path);
        }
        stage.finish(manifest);
    }

    let stage = StageTimer::start("verify-partitions");
    verify_protected(manifest, &full, &protected)?;
    stage.finish(manifest);

    let mut stage = StageTimer::start("report");
    let path = ctx.out_dir.join("summary.txt");
    std::fs::write(&path, summary).map_err(|e| runtime(e.to_string()))?;
    stage.add_output(&path);
    stage.finish(manifest);
    Ok(())
}

// ---------------------------------------------------------------------------
// cmd_xq
// ---------------------------------------------------------------------------

pub fn cmd_xq(ctx: &RunContext) -> Result<RunManifest, CliError> {
    ctx.validated()?;
    std::fs::create_dir_all(&ctx.out_dir).map_err(|e| runtime(e.to_string()))?;
    let mut manifest = RunManifest::new(
        "xq",
        ctx.config.config_version,
        ctx.config_hash.clone(),
        ctx.seed,
    );
    let outcome = xq_inner(ctx, &mut manifest);
    if let Err(e) = &outcome {
        manifest.failure = Some(e.to_string());
    }
    manifest.write(&ctx.out_dir).map_err(|e| runtime(e.to_string()))?;
    outcome.map(|()| manifest)
}

/// The single train/eval pair audits run on: the configured holdout, or
/// fold 0 of a k-fold config.
fn audit_pair(ctx: &RunContext, full: &DataTable) -> Result<SplitPair, CliError> {
    let mut pairs = make_splits(ctx, full)?;
    Ok(pairs.swap_remove(0))
}

fn xq_inner(ctx: &RunContext, manifest: &mut RunManifest) -> Result<(), CliError> {
    let xq = &ctx.config.xq;

    let stage = StageTimer::start("ingest");
    let full = ingest(ctx)?;
    stage.finish(manifest);

    let stage = StageTimer::start("split");
    let pair = audit_pair(ctx, &full)?;
    protect(manifest, "eval", &pair.eval.table);
    let protected = vec![("eval".to_string(), pair.eval.indices.clone())];
    stage.finish(manifest);

    let stage = StageTimer::start("fit");
    let fitted = fit_pair(ctx, full.n_rows(), &pair, 0)?;
    stage.finish(manifest);

    let explainable: Vec<&FittedModel> = fitted
        .models
        .iter()
        .filter(|m| m.explainer_kind != ExplainerKind::None)
        .collect();
    if explainable.is_empty() {
        return Err(CliError::Validation(vec![
            "xq needs at least one model with an explainer; \
             set explainer = \"tree\" | \"kernel\" | \"exact\" | \"file\" \
             on a model or run the `run` stage instead"
                .into(),
        ]));
    }

    // deterministic evaluation sample for rankings and agreement
    let sample_indices = sample_rows(
        pair.eval.table.n_rows(),
        xq.explain_sample,
        derive_seed(ctx.seed, "xq-sample", 0),
    );
    let sample_table = fitted.eval_norm.subset(&sample_indices)?;
    let sample_partition = Partition {
        table: pair.eval.table.subset(&sample_indices)?,
        indices: sample_indices
            .iter()
            .map(|&i| pair.eval.indices[i])
            .collect(),
    };

    let mut summary = String::new();
    let mut per_model_attrs: Vec<(String, Vec<AttributionVector>)> = Vec::new();

    for model in &explainable {
        let mut stage = StageTimer::start(&format!("attribute_{}", model.name));
        let explainer = model
            .explainer_for(&fitted.background, ctx.config.attribution.n_coalitions, &sample_partition)?
            .expect("explainer kind checked");
        let attrs = explain_table(explainer.as_ref(), &sample_table)?;
        let attr_path = ctx.out_dir.join(format!("attributions_{}.csv", model.name));
        write_attributions_csv(&attr_path, sample_table.feature_names(), &attrs)?;
        stage.add_output(&attr_path);
        stage.finish(manifest);

        let ranking = global_importance(&attrs)?;

        // faithfulness needs a callable scorer
        if !matches!(model.scorer, FittedScorer::External(_)) {
            let mut stage = StageTimer::start(&format!("faithfulness_{}", model.name));
            let ks: Vec<usize> = xq
                .k_list
                .iter()
                .copied()
                .filter(|&k| k >= 1 && k <= sample_table.n_features())
                .collect();
            if ks.len() < xq.k_list.len() {
                log::warn!(
                    "model '{}': dropped k values outside 1..={}",
                    model.name,
                    sample_table.n_features()
                );
            }
            let report = match &model.scorer {
                FittedScorer::Logistic(m) => faithfulness(ctx, m, &fitted, &ranking, &ks)?,
                FittedScorer::Gbdt(m) => faithfulness(ctx, m, &fitted, &ranking, &ks)?,
                FittedScorer::External(_) => unreachable!(),
            };
            let path = ctx.out_dir.join(format!("faithfulness_{}.json", model.name));
            write_json(&path, &report).map_err(|e| runtime(e.to_string()))?;
            stage.add_output(&path);
            stage.finish(manifest);

            writeln!(summary, "faithfulness {}:", model.name).ok();
            writeln!(
                summary,
                "  full_auc={:.4} masked_baseline_auc={:.4}",
                report.full_auc, report.masked_baseline_auc
            )
            .ok();
            for e in &report.entries {
                writeln!(
                    summary,
                    "  k={}: sufficiency={:.4} comprehensiveness={:.4}",
                    e.k, e.sufficiency_auc, e.comprehensiveness_drop
                )
                .ok();
            }
        } else {
            log::warn!(
                "model '{}' is external; faithfulness (which must re-score masked rows) \
                 is skipped",
                model.name
            );
        }

        // stability over the full evaluation pool
        let mut stage = StageTimer::start(&format!("stability_{}", model.name));
        let pool_explainer = model
            .explainer_for(&fitted.background, ctx.config.attribution.n_coalitions, &pair.eval)?
            .expect("explainer kind checked");
        let stability = stability_kendall_w(
            pool_explainer.as_ref(),
            &fitted.eval_norm,
            xq.n_subsamples,
            xq.subsample_size.min(fitted.eval_norm.n_rows()),
            derive_seed(ctx.seed, "stability", 0),
        )?;
        let path = ctx.out_dir.join(format!("stability_{}.json", model.name));
        write_json(&path, &stability).map_err(|e| runtime(e.to_string()))?;
        stage.add_output(&path);
        stage.finish(manifest);

        writeln!(
            summary,
            "stability {}: kendall_w={:.4} band={} (n={} x {})",
            model.name,
            stability.kendall_w,
            stability.stability_band,
            stability.n_subsamples,
            stability.subsample_size
        )
        .ok();

        per_model_attrs.push((model.name.clone(), attrs));
    }

    // agreement for each unordered pair with attributions
    for i in 0..per_model_attrs.len() {
        for j in i + 1..per_model_attrs.len() {
            let (name_a, attrs_a) = &per_model_attrs[i];
            let (name_b, attrs_b) = &per_model_attrs[j];
            let mut stage = StageTimer::start(&format!("agreement_{name_a}_vs_{name_b}"));
            let report = cross_explainer_agreement_instances(
                attrs_a,
                attrs_b,
                xq.top_n,
                xq.n_boot,
                derive_seed(ctx.seed, "agreement", (i * per_model_attrs.len() + j) as u64),
            )?;
            let path = ctx
                .out_dir
                .join(format!("agreement_{name_a}_vs_{name_b}.json"));
            write_json(&path, &report).map_err(|e| runtime(e.to_string()))?;
            stage.add_output(&path);
            stage.finish(manifest);

            writeln!(
                summary,
                "agreement {name_a} vs {name_b}: rho={:.4} ci=[{:.4}, {:.4}] p={} (union {})",
                report.spearman_rho,
                report.ci_low,
                report.ci_high,
                fmt_p(report.p_value),
                report.union_size
            )
            .ok();
        }
    }

    let stage = StageTimer::start("verify-partitions");
    verify_protected(manifest, &full, &protected)?;
    stage.finish(manifest);

    let mut stage = StageTimer::start("report");
    let path = ctx.out_dir.join("summary.txt");
    std::fs::write(&path, summary).map_err(|e| runtime(e.to_string()))?;
    stage.add_output(&path);
    stage.finish(manifest);
    Ok(())
}

fn faithfulness(
    ctx: &RunContext,
    scorer: &dyn Scorer,
    fitted: &FittedPair,
    ranking: &GlobalImportance,
    ks: &[usize],
) -> Result<FaithfulnessReport, CliError> {
    Ok(faithfulness_report(
        scorer,
        &fitted.eval_norm,
        ranking,
        ks,
        &fitted.background,
        ctx.config.xq.mask_strategy,
    )?)
}

/// Deterministic without-replacement sample of row positions, ascending.
fn sample_rows(n: usize, want: usize, seed: u64) -> Vec<usize> {
    if want >= n {
        return (0..n).collect();
    }
    // Fisher-Yates prefix with per-step derived randomness
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..want {
        let r = derive_seed(seed, "xq-sample-pick", i as u64);
        let j = i + (r as usize) % (n - i);
        indices.swap(i, j);
    }
    let mut picked = indices[..want].to_vec();
    picked.sort_unstable();
    picked
}

// ---------------------------------------------------------------------------
// cmd_sgae
// ---------------------------------------------------------------------------

pub fn cmd_sgae(ctx: &RunContext) -> Result<RunManifest, CliError> {
    ctx.validated()?;
    let Some(sgae_cfg) = ctx.config.sgae.clone() else {
        return Err(CliError::Validation(vec![
            "the sgae command needs an [sgae] section naming model_l and model_x".into(),
        ]));
    };
    std::fs::create_dir_all(&ctx.out_dir).map_err(|e| runtime(e.to_string()))?;
    let mut manifest = RunManifest::new(
        "sgae",
        ctx.config.config_version,
        ctx.config_hash.clone(),
        ctx.seed,
    );
    let outcome = sgae_inner(ctx, &sgae_cfg, &mut manifest);
    if let Err(e) = &outcome {
        manifest.failure = Some(e.to_string());
    }
    manifest.write(&ctx.out_dir).map_err(|e| runtime(e.to_string()))?;
    outcome.map(|()| manifest)
}

fn sgae_inner(
    ctx: &RunContext,
    sgae_cfg: &crate::config::SgaeSection,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let stage = StageTimer::start("ingest");
    let full = ingest(ctx)?;
    stage.finish(manifest);

    let stage = StageTimer::start("split");
    let pair = audit_pair(ctx, &full)?;

    // carve the sigma calibration set out of the training side; models are
    // fitted on the remainder so calibration stays held out
    let (fit_idx_local, calib_idx_local) = stratified_split_indices(
        &pair.train.table,
        sgae_cfg.calibration_fraction,
        derive_seed(ctx.seed, "calibration-carve", 0),
    )?;
    let to_original = |local: &[usize]| -> Vec<usize> {
        local.iter().map(|&i| pair.train.indices[i]).collect()
    };
    let fit_pair_struct = SplitPair {
        fold: None,
        train: Partition::from_indices(&full, to_original(&fit_idx_local))?,
        eval: Partition {
            table: pair.eval.table.clone(),
            indices: pair.eval.indices.clone(),
        },
    };
    let calibration = Partition::from_indices(&full, to_original(&calib_idx_local))?;

    protect(manifest, "test", &pair.eval.table);
    protect(manifest, "calibration", &calibration.table);
    let protected = vec![
        ("test".to_string(), pair.eval.indices.clone()),
        ("calibration".to_string(), calibration.indices.clone()),
    ];
    stage.finish(manifest);

    let stage = StageTimer::start("fit");
    let fitted = fit_pair(ctx, full.n_rows(), &fit_pair_struct, 0)?;
    stage.finish(manifest);

    let model_l = fitted
        .models
        .iter()
        .find(|m| m.name == sgae_cfg.model_l)
        .ok_or_else(|| runtime(format!("model '{}' missing", sgae_cfg.model_l)))?;
    let model_x = fitted
        .models
        .iter()
        .find(|m| m.name == sgae_cfg.model_x)
        .ok_or_else(|| runtime(format!("model '{}' missing", sgae_cfg.model_x)))?;
    for m in [model_l, model_x] {
        if m.explainer_kind == ExplainerKind::None {
            return Err(CliError::Validation(vec![format!(
                "sgae needs attributions for model '{}'; configure an explainer \
                 or provide attribution columns in its score file",
                m.name
            )]));
        }
    }

    // normalize calibration with the same fitted scaler as eval
    let calib_norm = if ctx.config.normalize.enabled {
        let normalizer = fit_normalizer(&fit_pair_struct.train.table);
        apply_normalizer(&normalizer, &calibration.table)?
    } else {
        calibration.table.clone()
    };

    let mut stage = StageTimer::start("attribute");
    let n_coalitions = ctx.config.attribution.n_coalitions;
    let explain = |model: &FittedModel,
                   table: &DataTable,
                   partition: &Partition|
     -> Result<Vec<AttributionVector>, CliError> {
        let explainer = model
            .explainer_for(&fitted.background, n_coalitions, partition)?
            .expect("checked above");
        Ok(explain_table(explainer.as_ref(), table)?)
    };
    let calib_attr_l = explain(model_l, &calib_norm, &calibration)?;
    let calib_attr_x = explain(model_x, &calib_norm, &calibration)?;
    let eval_attr_l = explain(model_l, &fitted.eval_norm, &pair.eval)?;
    let eval_attr_x = explain(model_x, &fitted.eval_norm, &pair.eval)?;
    for (name, attrs) in [
        (&sgae_cfg.model_l, &eval_attr_l),
        (&sgae_cfg.model_x, &eval_attr_x),
    ] {
        let path = ctx.out_dir.join(format!("attributions_{name}.csv"));
        write_attributions_csv(&path, fitted.eval_norm.feature_names(), attrs)?;
        stage.add_output(&path);
    }
    stage.finish(manifest);

    let mut stage = StageTimer::start("blend");
    let scores_l = model_l.eval_scores(&fitted.eval_norm, &pair.eval)?;
    let scores_x = model_x.eval_scores(&fitted.eval_norm, &pair.eval)?;
    let core_cfg = SgaeConfig {
        k_top: sgae_cfg.k_top.min(fitted.eval_norm.n_features()),
        tau_a: sgae_cfg.tau_a,
        w_min: sgae_cfg.w_min,
        w_max: sgae_cfg.w_max,
        agreement_floor: 1e-6,
        per_transaction_topk: sgae_cfg.per_transaction_topk,
    };
    let report = run_sgae(
        &calib_attr_l,
        &calib_attr_x,
        &eval_attr_l,
        &eval_attr_x,
        &scores_l,
        &scores_x,
        pair.eval.table.labels(),
        &core_cfg,
    )?;

    let decisions_path = ctx.out_dir.join("sgae_decisions.csv");
    write_decisions_csv(&decisions_path, &report)?;
    stage.add_output(&decisions_path);
    let summary_path = ctx.out_dir.join("sgae_summary.json");
    write_json(&summary_path, &report.summary).map_err(|e| runtime(e.to_string()))?;
    stage.add_output(&summary_path);
    stage.finish(manifest);

    let stage = StageTimer::start("verify-partitions");
    verify_protected(manifest, &full, &protected)?;
    stage.finish(manifest);

    let mut stage = StageTimer::start("report");
    let s = &report.summary;
    let mut text = String::new();
    writeln!(text, "== adaptive vs static blend ==").ok();
    writeln!(
        text,
        "sigma_a={:.4} mean_agreement={:+.4} convergent={} divergent={}",
        s.sigma_a, s.mean_agreement, s.convergent, s.divergent
    )
    .ok();
    for (name, m) in [("sgae", &s.sgae), ("static", &s.static_blend)] {
        writeln!(
            text,
            "{name}: auc_roc={:.4} pr_auc={:.4} f1={:.4} mcc={:.4} tau*={:.4}",
            m.auc_roc, m.pr_auc, m.f1, m.mcc, m.tau_star
        )
        .ok();
    }
    writeln!(
        text,
        "delong sgae vs static: z={:.3} p={}",
        s.delong_vs_static.statistic,
        fmt_p(s.delong_vs_static.p_value)
    )
    .ok();
    writeln!(
        text,
        "mcnemar sgae vs static: chi2={:.3} p={}",
        s.mcnemar_vs_static.statistic,
        fmt_p(s.mcnemar_vs_static.p_value)
    )
    .ok();
    let path = ctx.out_dir.join("summary.txt");
    std::fs::write(&path, text).map_err(|e| runtime(e.to_string()))?;
    stage.add_output(&path);
    stage.finish(manifest);
    Ok(())
}

/// Per-row decisions: `row_id, fL, fX, A, branch, w, p`.
fn write_decisions_csv(path: &Path, report: &SgaeReport) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| runtime(e.to_string()))?,
    );
    writeln!(out, "row_id,fL,fX,A,branch,w,p").map_err(|e| runtime(e.to_string()))?;
    for d in &report.decisions {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            d.row_id, d.score_l, d.score_x, d.agreement, d.branch, d.weight, d.blended
        )
        .map_err(|e| runtime(e.to_string()))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// cmd_validate
// ---------------------------------------------------------------------------

pub fn cmd_validate(ctx: &RunContext) -> Result<String, CliError> {
    ctx.validated()?;
    Ok(format!(
        "config OK: {} model(s), split kind {:?}, seed {}\n",
        ctx.config.models.len(),
        ctx.config.split.kind,
        ctx.seed
    ))
}
