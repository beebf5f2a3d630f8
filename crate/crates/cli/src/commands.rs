//! Command implementations. Each command consumes a parsed config, writes
//! its artifacts under the output directory, and finishes with a manifest
//! capturing everything needed to reproduce the run bit-identically.

use std::path::{Path, PathBuf};

use famrisk::error::{Error, Result};
use famrisk::experiment::{
    build_dataset, design_study, evaluate_architecture, heritability_sweep,
    explainer_parent_ranking, lr_parent_ranking, resolve_model_config, retrain_on_selection,
    Dataset, DesignStudyConfig, SweepConfig,
};
use famrisk::explain::{explain, global_importance, jaccard, top_n};
use famrisk::graph::{RelationLabel, RELATION_LABELS};
use famrisk::io::{
    atomic_write, write_history, write_longitudinal, write_metric_rows,
    write_pedigree, write_predictions, PredictionRow, RunManifest,
};
use famrisk::metrics::{MetricRow, ScoredSet};
use famrisk::model::{Architecture, Model, ModelConfig};
use famrisk::pedigree::{simulate_population, synthesize_longitudinal};
use famrisk::trainer::{predict_scores, split_dataset, train, tune_threshold, EvalReport, Splits};

use crate::config::ExperimentConfig;

pub struct Context {
    pub config: ExperimentConfig,
    pub config_text: String,
    pub out: PathBuf,
    pub model_path: Option<PathBuf>,
}

impl Context {
    fn manifest(&self, command: &str) -> Result<()> {
        RunManifest::new(command, &self.config_text, self.config.dataset.sim.seed)
            .write(&self.out.join("manifest.json"))
    }
}

/// Outcome of a command: `Ok(false)` clean, `Ok(true)` partial failure.
pub type CommandResult = Result<bool>;

fn write_dataset_files(dir: &Path, config: &ExperimentConfig) -> Result<()> {
    let pop = simulate_population(&config.dataset.sim)?;
    write_pedigree(&dir.join("pedigree.tsv"), &pop)?;
    if !config.dataset.channels.is_empty() {
        let long = synthesize_longitudinal(
            &pop,
            config.dataset.n_years,
            &config.dataset.channels,
            config.dataset.sim.seed,
        )?;
        write_longitudinal(&dir.join("longitudinal.tsv"), &pop, &long)?;
    }
    Ok(())
}

pub fn simulate(ctx: &Context) -> CommandResult {
    if ctx.config.sweep_requested {
        for &h2 in &ctx.config.sweep_h2 {
            for &seed in &ctx.config.sweep_seeds {
                let mut config = ctx.config.clone();
                config.dataset.sim.h2 = h2;
                config.dataset.sim.e2 = 1.0 - h2;
                config.dataset.sim.seed = seed;
                let dir = ctx.out.join(format!("h2_{h2}_seed_{seed}"));
                write_dataset_files(&dir, &config)?;
            }
        }
    } else {
        write_dataset_files(&ctx.out, &ctx.config)?;
    }
    ctx.manifest("simulate")?;
    Ok(false)
}

fn test_predictions(
    model: &Model,
    dataset: &Dataset,
    splits: &Splits,
) -> Result<Vec<PredictionRow>> {
    splits
        .test
        .iter()
        .map(|&i| {
            let sample = &dataset.samples[i];
            let out = model.predict(sample)?;
            Ok(PredictionRow {
                target_id: sample.graph.target_id,
                y_model: out.y_model,
                y_target: out.y_target,
                y_family: out.y_family,
                y_family_lstm: out.y_family_lstm,
                label: sample.label(),
            })
        })
        .collect()
}

fn report_rows(model: &str, dataset: &str, report: &EvalReport) -> Vec<MetricRow> {
    [
        ("auc_roc", &report.auc_roc),
        ("auc_prc", &report.auc_prc),
        ("mcc", &report.mcc),
    ]
    .into_iter()
    .map(|(metric, s)| MetricRow {
        model: model.to_string(),
        dataset: dataset.to_string(),
        metric: metric.to_string(),
        mean: s.mean,
        ci_low: s.ci_low,
        ci_high: s.ci_high,
    })
    .collect()
}

pub fn train_cmd(ctx: &Context) -> CommandResult {
    let config = &ctx.config;
    if config.model.architecture == Architecture::RuleBased {
        return Err(Error::Config(
            "the rule-based screen has nothing to train; use `evaluate`".into(),
        ));
    }
    let dataset = build_dataset(&config.dataset)?;
    let splits = split_dataset(&dataset.labels, &config.settings.split)?;
    let model_config = resolve_model_config(&config.model, &dataset);
    let mut model = Model::new(model_config, config.settings.seed)?;
    let result = train(&mut model, &dataset.samples, &splits, &config.settings.train)?;

    let val_scores = predict_scores(&model, &dataset.samples, &splits.val)?;
    let val_labels: Vec<u8> = splits.val.iter().map(|&i| dataset.labels[i]).collect();
    model.config.threshold = tune_threshold(&ScoredSet::new(val_scores, val_labels)?)?;

    atomic_write(&ctx.out.join("model.json"), &model.to_json())?;
    write_history(&ctx.out.join("history.tsv"), &result.history)?;
    write_predictions(
        &ctx.out.join("predictions.tsv"),
        &test_predictions(&model, &dataset, &splits)?,
    )?;
    let report = famrisk::trainer::mc_dropout_eval(
        &model,
        &dataset.samples,
        &splits.test,
        model.config.threshold,
        config.settings.mc_samples,
        config.settings.seed,
    )?;
    write_metric_rows(
        &ctx.out.join("metrics.tsv"),
        &report_rows(model.config.architecture.name(), "test", &report),
    )?;
    ctx.manifest("train")?;
    Ok(false)
}

fn load_model(ctx: &Context) -> Result<Model> {
    let path = ctx
        .model_path
        .clone()
        .unwrap_or_else(|| ctx.out.join("model.json"));
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Model::from_json(&text)
}

pub fn evaluate(ctx: &Context) -> CommandResult {
    let config = &ctx.config;
    let dataset = build_dataset(&config.dataset)?;
    let splits = split_dataset(&dataset.labels, &config.settings.split)?;
    if config.model.architecture == Architecture::RuleBased {
        let report = evaluate_architecture(&dataset, &config.model, &config.settings)?;
        write_metric_rows(
            &ctx.out.join("metrics.tsv"),
            &report_rows(&report.model, "test", &report.report),
        )?;
        ctx.manifest("evaluate")?;
        return Ok(false);
    }
    let model = load_model(ctx)?;
    let report = famrisk::trainer::mc_dropout_eval(
        &model,
        &dataset.samples,
        &splits.test,
        model.config.threshold,
        config.settings.mc_samples,
        config.settings.seed,
    )?;
    write_metric_rows(
        &ctx.out.join("metrics.tsv"),
        &report_rows(model.config.architecture.name(), "test", &report),
    )?;
    write_predictions(
        &ctx.out.join("predictions.tsv"),
        &test_predictions(&model, &dataset, &splits)?,
    )?;
    ctx.manifest("evaluate")?;
    Ok(false)
}

pub fn ablate(ctx: &Context) -> CommandResult {
    let config = &ctx.config;
    let architectures: Vec<ModelConfig> = config
        .sweep_models
        .iter()
        .map(|&arch| ModelConfig {
            architecture: arch,
            ..config.model.clone()
        })
        .collect();
    let sweep = SweepConfig {
        h2_values: config.sweep_h2.clone(),
        seeds: config.sweep_seeds.clone(),
        base_dataset: config.dataset.clone(),
        architectures,
        settings: config.settings.clone(),
    };
    let cells = heritability_sweep(&sweep);

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for cell in &cells {
        match &cell.result {
            Ok(set) => {
                for report in &set.reports {
                    rows.extend(report_rows(
                        &report.model,
                        &format!("h2_{}_seed_{}", cell.h2, cell.seed),
                        &report.report,
                    ));
                }
            }
            Err(msg) => failures.push(format!("h2_{}_seed_{}: {msg}", cell.h2, cell.seed)),
        }
    }
    // per-(model, h2) aggregation across seeds: plot-ready series
    let mut series = Vec::new();
    for arch in &config.sweep_models {
        for &h2 in &config.sweep_h2 {
            for metric in ["auc_roc", "auc_prc", "mcc"] {
                let means: Vec<f64> = rows
                    .iter()
                    .filter(|r| {
                        r.model == arch.name()
                            && r.metric == metric
                            && r.dataset.starts_with(&format!("h2_{h2}_"))
                    })
                    .map(|r| r.mean)
                    .collect();
                if means.len() >= 2 {
                    let s = famrisk::trainer::MetricSummary::from_samples(means);
                    series.push(MetricRow {
                        model: arch.name().to_string(),
                        dataset: format!("h2_{h2}"),
                        metric: metric.to_string(),
                        mean: s.mean,
                        ci_low: s.ci_low,
                        ci_high: s.ci_high,
                    });
                }
            }
        }
    }
    write_metric_rows(&ctx.out.join("ablation_cells.tsv"), &rows)?;
    write_metric_rows(&ctx.out.join("ablation.tsv"), &series)?;
    if !failures.is_empty() {
        atomic_write(&ctx.out.join("failures.txt"), &(failures.join("\n") + "\n"))?;
    }
    ctx.manifest("ablate")?;
    Ok(!failures.is_empty())
}

pub fn design_study_cmd(ctx: &Context) -> CommandResult {
    let config = &ctx.config;
    let mut base_dataset = config.dataset.clone();
    // the design grid is a h2 = 0.7 study by construction
    base_dataset.sim.h2 = 0.7;
    base_dataset.sim.e2 = 0.3;
    let mut base_model = config.model.clone();
    if !base_model.architecture.uses_graph()
        || (base_model.architecture.uses_longitudinal() && config.dataset.channels.is_empty())
    {
        base_model.architecture = Architecture::GnnStatic;
    }
    let study = DesignStudyConfig {
        base_dataset,
        base_model,
        seeds: config.design_seeds.clone(),
        learning_rates: config.design_lrs.clone(),
        settings: config.settings.clone(),
        static_features: if config.dataset.channels.is_empty() {
            None
        } else {
            // give the static GNN the diagnosis-style channels as binarized
            // node features so edge-scheme differences act on real signal
            Some((0..config.dataset.channels.len()).collect())
        },
    };
    let cells = design_study(&study)?;

    let mut out = String::from("#design v1\tedge_mode\tgnn\tpooling\tlr\tmean\tci_low\tci_high\n");
    let mut failures = 0;
    let mut best: Option<(f64, String)> = None;
    for cell in &cells {
        let tag = format!(
            "{:?}\t{:?}\t{:?}\t{}",
            cell.edge_mode, cell.gnn_kind, cell.pooling, cell.lr
        );
        match &cell.result {
            Ok(s) => {
                out.push_str(&format!("{tag}\t{}\t{}\t{}\n", s.mean, s.ci_low, s.ci_high));
                if best.as_ref().map_or(true, |(m, _)| s.mean > *m) {
                    best = Some((s.mean, tag.replace('\t', " ")));
                }
            }
            Err(msg) => {
                out.push_str(&format!("{tag}\tfailed: {msg}\t\t\n"));
                failures += 1;
            }
        }
    }
    atomic_write(&ctx.out.join("design.tsv"), &out)?;
    if let Some((mean, tag)) = best {
        atomic_write(
            &ctx.out.join("best.txt"),
            &format!("best cell: {tag} (mean AUC-ROC {mean})\n"),
        )?;
    }
    ctx.manifest("design-study")?;
    Ok(failures > 0)
}

pub fn explain_cmd(ctx: &Context) -> CommandResult {
    let config = &ctx.config;
    let model = load_model(ctx)?;
    if !model.config.architecture.uses_graph() {
        return Err(Error::Config(format!(
            "explanations need a graph model, archive holds {}",
            model.config.architecture.name()
        )));
    }
    let dataset = build_dataset(&config.dataset)?;
    let splits = split_dataset(&dataset.labels, &config.settings.split)?;
    let explain_idxs: Vec<usize> = splits
        .test
        .iter()
        .copied()
        .take(config.explain_max_targets)
        .collect();

    let mut importance =
        String::from("#importance v1\trelative_type\tfeature_id\tscore\trank\n");
    let mut warned = false;
    if explain_idxs.is_empty() {
        warned = true; // empty report, nonzero warning status
    } else {
        let explanations = explain_idxs
            .iter()
            .map(|&i| explain(&model, &dataset.samples[i], &config.explain))
            .collect::<Result<Vec<_>>>()?;
        let paired: Vec<_> = explain_idxs
            .iter()
            .zip(&explanations)
            .map(|(&i, m)| (&dataset.samples[i].graph, m))
            .collect();
        for &label in RELATION_LABELS.iter().chain([&RelationLabel::Target]) {
            for (rank, (feat, score)) in
                global_importance(&paired, label).iter().enumerate()
            {
                importance.push_str(&format!(
                    "{}\t{feat}\t{score}\t{}\n",
                    label.name(),
                    rank + 1
                ));
            }
        }
    }
    atomic_write(&ctx.out.join("importance.tsv"), &importance)?;

    // feature-selection comparison: explainer rankings must index the same
    // longitudinal channels the LR selector ranks, so this needs the
    // recurrent graph model
    if model.config.architecture == Architecture::GnnLstm
        && dataset.n_long_features > 0
        && !explain_idxs.is_empty()
    {
        let gnn_ranked =
            explainer_parent_ranking(&model, &dataset.samples, &explain_idxs, &config.explain)?;
        let lr_ranked = lr_parent_ranking(&dataset)?;
        let mut sel = String::from(
            "#selection v1\tn_top\tjaccard\texplainer_auc_prc\tlr_auc_prc\texplainer_set\tlr_set\n",
        );
        for &n in &config.n_top {
            let gnn_set = top_n(&gnn_ranked, n)?;
            let lr_set = top_n(&lr_ranked, n)?;
            let gnn_auc =
                retrain_on_selection(&dataset, &gnn_set, &config.model, &config.settings)?;
            let lr_auc =
                retrain_on_selection(&dataset, &lr_set, &config.model, &config.settings)?;
            let fmt = |set: &[usize]| {
                set.iter()
                    .map(|f| f.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            };
            sel.push_str(&format!(
                "{n}\t{}\t{gnn_auc}\t{lr_auc}\t{}\t{}\n",
                jaccard(&gnn_set, &lr_set),
                fmt(&gnn_set),
                fmt(&lr_set)
            ));
        }
        atomic_write(&ctx.out.join("selection.tsv"), &sel)?;
    }
    ctx.manifest("explain")?;
    Ok(warned)
}
