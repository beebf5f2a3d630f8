//! Experiment orchestration: cohort/dataset assembly from a simulated
//! population, single-architecture evaluation runs, the heritability sweep,
//! the edge/layer/pooling design study, and the feature-selection comparison
//! between explainer- and logistic-regression-ranked features.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{explain, global_importance, jaccard, top_n, ExplainConfig};
use crate::graph::{
    build_graph, enumerate_relatives, family_history_vector, EdgeMode, FamilyGraph, RelationLabel,
};
use crate::metrics::{auc_prc, auc_roc, confusion, ScoredSet};
use crate::model::{
    logistic_regression_fit, predict_rule_based, Architecture, Model, ModelConfig, Sample,
};
use crate::pedigree::{simulate_population, synthesize_longitudinal, ChannelSpec, SimParams};
use crate::trainer::{
    mc_dropout_eval, predict_scores, train, tune_threshold, EvalReport, MetricSummary, SplitSpec,
    Splits, TrainConfig, TrainResult,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub sim: SimParams,
    pub edge_mode: EdgeMode,
    /// Longitudinal feature channels; empty disables track synthesis.
    pub channels: Vec<ChannelSpec>,
    pub n_years: usize,
    /// Cohort rule: targets whose family graph has fewer nodes are dropped.
    pub min_graph_nodes: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            sim: SimParams::default(),
            edge_mode: EdgeMode::AllRelated,
            channels: Vec::new(),
            n_years: 10,
            min_graph_nodes: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Case labels aligned with `samples`, for split construction.
    pub labels: Vec<u8>,
    pub n_long_features: usize,
    pub n_years: usize,
}

impl Dataset {
    pub fn n_cases(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Simulate a population and assemble one sample per eligible target.
/// Targets are the last generation (guaranteeing both parents exist);
/// the minimum-graph-size cohort rule drops under-connected targets.
pub fn build_dataset(config: &DatasetConfig) -> Result<Dataset> {
    let pop = simulate_population(&config.sim)?;
    if pop.generations.len() < 2 {
        return Err(Error::Cohort(
            "cohort needs at least two generations so targets have parents".into(),
        ));
    }
    let long = if config.channels.is_empty() {
        None
    } else {
        Some(synthesize_longitudinal(
            &pop,
            config.n_years,
            &config.channels,
            config.sim.seed,
        )?)
    };
    let cutoff = config.sim.observation_years;

    let target_idxs = pop.generations.last().unwrap().clone();
    let built: Vec<Result<Option<Sample>>> = target_idxs
        .par_iter()
        .map(|&idx| {
            let id = pop.individuals[idx].id;
            let relatives = enumerate_relatives(&pop, id)?;
            let graph = build_graph(&pop, id, &relatives, config.edge_mode, long.as_ref(), None)?;
            if graph.n_nodes() < config.min_graph_nodes {
                return Ok(None);
            }
            let history = family_history_vector(&pop, &relatives, cutoff);
            Ok(Some(Sample { graph, history }))
        })
        .collect();

    let mut samples = Vec::new();
    for r in built {
        if let Some(s) = r? {
            samples.push(s);
        }
    }
    if samples.is_empty() {
        return Err(Error::Cohort("no targets pass the cohort rules".into()));
    }
    let labels = samples.iter().map(|s| (s.label() >= 0.5) as u8).collect();
    Ok(Dataset {
        samples,
        labels,
        n_long_features: long.as_ref().map_or(0, |l| l.n_features),
        n_years: long.as_ref().map_or(0, |l| l.n_years),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSettings {
    pub split: SplitSpec,
    pub train: TrainConfig,
    /// Stochastic forward passes for MC-dropout evaluation.
    pub mc_samples: usize,
    /// Seed for model initialization and evaluation streams.
    pub seed: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            split: SplitSpec::default(),
            train: TrainConfig::default(),
            mc_samples: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchReport {
    pub model: String,
    pub threshold: f64,
    pub report: EvalReport,
    pub train_result: Option<TrainResult>,
}

/// Copy dataset dimensions into an architecture's config.
pub fn resolve_model_config(base: &ModelConfig, dataset: &Dataset) -> ModelConfig {
    let mut config = base.clone();
    if config.architecture.uses_longitudinal() {
        config.n_long_features = dataset.n_long_features;
        config.n_years = dataset.n_years;
    }
    config
}

fn degenerate_summary(v: f64) -> MetricSummary {
    MetricSummary::from_samples(vec![v, v])
}

/// Rule-based screen: no training, threshold fixed, deterministic scores,
/// zero-width intervals.
fn evaluate_rule_based(dataset: &Dataset, splits: &Splits) -> Result<ArchReport> {
    let scores: Vec<f64> = splits
        .test
        .iter()
        .map(|&i| predict_rule_based(&dataset.samples[i].history) as f64)
        .collect();
    let labels: Vec<u8> = splits.test.iter().map(|&i| dataset.labels[i]).collect();
    let scored = ScoredSet::new(scores, labels)?;
    let c = confusion(&scored, 0.5);
    Ok(ArchReport {
        model: Architecture::RuleBased.name().to_string(),
        threshold: 0.5,
        report: EvalReport {
            auc_roc: degenerate_summary(auc_roc(&scored)?),
            auc_prc: degenerate_summary(auc_prc(&scored)?),
            mcc: degenerate_summary(c.mcc()),
        },
        train_result: None,
    })
}

/// Train (when trainable), tune the decision threshold on validation scores,
/// and evaluate the test split with MC dropout.
pub fn evaluate_architecture(
    dataset: &Dataset,
    base_config: &ModelConfig,
    settings: &RunSettings,
) -> Result<ArchReport> {
    let splits = crate::trainer::split_dataset(&dataset.labels, &settings.split)?;
    if base_config.architecture == Architecture::RuleBased {
        return evaluate_rule_based(dataset, &splits);
    }
    let config = resolve_model_config(base_config, dataset);
    let mut model = Model::new(config, settings.seed)?;
    let result = train(&mut model, &dataset.samples, &splits, &settings.train)?;

    let val_scores = predict_scores(&model, &dataset.samples, &splits.val)?;
    let val_labels: Vec<u8> = splits.val.iter().map(|&i| dataset.labels[i]).collect();
    let threshold = tune_threshold(&ScoredSet::new(val_scores, val_labels)?)?;

    let report = mc_dropout_eval(
        &model,
        &dataset.samples,
        &splits.test,
        threshold,
        settings.mc_samples,
        settings.seed,
    )?;
    Ok(ArchReport {
        model: model.config.architecture.name().to_string(),
        threshold,
        report,
        train_result: Some(result),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub h2: f64,
    pub seed: u64,
    pub result: std::result::Result<ArchReportSet, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchReportSet {
    pub reports: Vec<ArchReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub h2_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub base_dataset: DatasetConfig,
    pub architectures: Vec<ModelConfig>,
    pub settings: RunSettings,
}

/// Heritability sweep: for each (h², seed) cell, simulate a dataset with
/// e² = 1 − h² and evaluate every requested architecture on identical
/// splits. Cells run in parallel; a failed cell is recorded, not fatal.
pub fn heritability_sweep(config: &SweepConfig) -> Vec<SweepCell> {
    let cells: Vec<(f64, u64)> = config
        .h2_values
        .iter()
        .flat_map(|&h2| config.seeds.iter().map(move |&s| (h2, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(h2, seed)| {
            let run = || -> Result<ArchReportSet> {
                let mut ds_config = config.base_dataset.clone();
                ds_config.sim.h2 = h2;
                ds_config.sim.e2 = 1.0 - h2;
                ds_config.sim.seed = seed;
                let dataset = build_dataset(&ds_config)?;
                let mut settings = config.settings.clone();
                settings.seed = seed;
                settings.split.seed = seed;
                settings.train.seed = seed;
                let reports = config
                    .architectures
                    .iter()
                    .map(|arch| evaluate_architecture(&dataset, arch, &settings))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ArchReportSet { reports })
            };
            SweepCell {
                h2,
                seed,
                result: run().map_err(|e| e.to_string()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignCell {
    pub edge_mode: EdgeMode,
    pub gnn_kind: crate::model::GnnKind,
    pub pooling: crate::layers::PoolMode,
    pub lr: f64,
    /// Mean test AUC-ROC with 95% CI across seeds; Err records a failure.
    pub result: std::result::Result<MetricSummary, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignStudyConfig {
    pub base_dataset: DatasetConfig,
    pub base_model: ModelConfig,
    pub seeds: Vec<u64>,
    pub learning_rates: Vec<f64>,
    pub settings: RunSettings,
    /// For the static GNN: project these longitudinal channels onto the
    /// node statics (binarized, appended after age/sex) before training.
    pub static_features: Option<Vec<usize>>,
}

/// Grid study over {edge mode} × {convolution kind} × {pooling} × {learning
/// rate}. Datasets are shared per (edge mode, seed) so cell differences are
/// attributable to the design axes only.
pub fn design_study(config: &DesignStudyConfig) -> Result<Vec<DesignCell>> {
    use crate::layers::PoolMode;
    use crate::model::GnnKind;

    let edge_modes = [
        EdgeMode::ParentChild,
        EdgeMode::ParentChildPlusTarget,
        EdgeMode::AllRelated,
    ];
    // one dataset per (edge mode, seed), built up front and shared
    let datasets: Vec<((EdgeMode, u64), Dataset)> = edge_modes
        .iter()
        .flat_map(|&m| config.seeds.iter().map(move |&s| (m, s)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(mode, seed)| {
            let mut ds = config.base_dataset.clone();
            ds.edge_mode = mode;
            ds.sim.seed = seed;
            let mut dataset = build_dataset(&ds)?;
            if let Some(sel) = &config.static_features {
                dataset = static_projection(&dataset, sel, true)?;
            }
            Ok(((mode, seed), dataset))
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset_for = |mode: EdgeMode, seed: u64| -> &Dataset {
        &datasets
            .iter()
            .find(|((m, s), _)| *m == mode && *s == seed)
            .expect("dataset built for every (mode, seed)")
            .1
    };

    let mut grid = Vec::new();
    for &edge_mode in &edge_modes {
        for gnn_kind in [GnnKind::Gcn, GnnKind::Kgnn] {
            for pooling in [PoolMode::Target, PoolMode::Mean, PoolMode::Sum] {
                for &lr in &config.learning_rates {
                    grid.push((edge_mode, gnn_kind, pooling, lr));
                }
            }
        }
    }

    Ok(grid
        .par_iter()
        .map(|&(edge_mode, gnn_kind, pooling, lr)| {
            let run = || -> Result<MetricSummary> {
                let mut aucs = Vec::new();
                for &seed in &config.seeds {
                    let dataset = dataset_for(edge_mode, seed);
                    let mut arch = config.base_model.clone();
                    arch.edge_mode = edge_mode;
                    arch.gnn_kind = gnn_kind;
                    arch.pooling = pooling;
                    let mut settings = config.settings.clone();
                    settings.train.lr = lr;
                    settings.seed = seed;
                    settings.split.seed = seed;
                    settings.train.seed = seed;
                    let report = evaluate_architecture(dataset, &arch, &settings)?;
                    aucs.push(report.report.auc_roc.mean);
                }
                Ok(MetricSummary::from_samples(aucs))
            };
            DesignCell {
                edge_mode,
                gnn_kind,
                pooling,
                lr,
                result: run().map_err(|e| e.to_string()),
            }
        })
        .collect())
}

/// Flattened per-target parent features for the logistic-regression selector:
/// mother then father tracks, each binarized to "diagnosed at least once in
/// the observation window" per feature.
pub fn parent_feature_matrix(dataset: &Dataset) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    let f = dataset.n_long_features;
    if f == 0 {
        return Err(Error::Param(
            "parent feature matrix needs longitudinal channels".into(),
        ));
    }
    let mut xs = Vec::with_capacity(dataset.samples.len());
    for sample in &dataset.samples {
        let g = &sample.graph;
        let mut x = vec![0.0; 2 * f];
        for (slot, label) in [(0, RelationLabel::Mother), (1, RelationLabel::Father)] {
            if let Some(node) = g.labels.iter().position(|l| *l == label) {
                for (feat, out) in x[slot * f..(slot + 1) * f].iter_mut().enumerate() {
                    let any = (0..g.n_years)
                        .any(|t| g.node_long[node][feat * g.n_years + t] > 0.0);
                    *out = any as u8 as f64;
                }
            }
        }
        xs.push(x);
    }
    Ok((xs, dataset.labels.clone()))
}

/// Feature ranking from a logistic regression on the flattened parent
/// matrix: per-feature score is the larger |coefficient| over the mother
/// and father copies. Descending, stable by index.
pub fn lr_parent_ranking(dataset: &Dataset) -> Result<Vec<(usize, f64)>> {
    let (x, y) = parent_feature_matrix(dataset)?;
    let fit = logistic_regression_fit(&x, &y, 1e-3, 500, 0.1)?;
    let f = dataset.n_long_features;
    let mut ranked: Vec<(usize, f64)> = (0..f)
        .map(|feat| {
            (
                feat,
                fit.weights[feat].abs().max(fit.weights[f + feat].abs()),
            )
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Feature ranking from mask explanations: global importance over mother and
/// father nodes, averaged when both rankings exist. Descending, stable.
pub fn explainer_parent_ranking(
    model: &Model,
    samples: &[Sample],
    idxs: &[usize],
    config: &ExplainConfig,
) -> Result<Vec<(usize, f64)>> {
    let explanations = idxs
        .par_iter()
        .map(|&i| explain(model, &samples[i], config))
        .collect::<Result<Vec<_>>>()?;
    let paired: Vec<(&FamilyGraph, &crate::explain::ExplanationMasks)> = idxs
        .iter()
        .zip(&explanations)
        .map(|(&i, m)| (&samples[i].graph, m))
        .collect();
    let mother = global_importance(&paired, RelationLabel::Mother);
    let father = global_importance(&paired, RelationLabel::Father);
    if mother.is_empty() && father.is_empty() {
        return Err(Error::Param(
            "no parent nodes found in the explained graphs".into(),
        ));
    }
    let n_feat = mother.len().max(father.len());
    let mut scores = vec![0.0; n_feat];
    let mut counts = vec![0usize; n_feat];
    for ranking in [&mother, &father] {
        for &(feat, score) in ranking.iter() {
            scores[feat] += score;
            counts[feat] += 1;
        }
    }
    let mut ranked: Vec<(usize, f64)> = scores
        .into_iter()
        .zip(counts)
        .enumerate()
        .map(|(feat, (s, c))| (feat, if c == 0 { 0.0 } else { s / c as f64 }))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Project a longitudinal dataset onto static node features: for each node,
/// the selected features binarized over the observation window, optionally
/// prefixed by the original static features (age, sex). The derived samples
/// suit the static GNN only.
pub fn static_projection(
    dataset: &Dataset,
    selected: &[usize],
    keep_base: bool,
) -> Result<Dataset> {
    if selected.is_empty() {
        return Err(Error::Param("feature selection picked nothing".into()));
    }
    if let Some(&bad) = selected.iter().find(|&&f| f >= dataset.n_long_features) {
        return Err(Error::Param(format!(
            "selected feature {bad} outside {} channels",
            dataset.n_long_features
        )));
    }
    let t = dataset.n_years;
    let samples = dataset
        .samples
        .iter()
        .map(|sample| {
            let g = &sample.graph;
            let node_static: Vec<Vec<f64>> = (0..g.n_nodes())
                .map(|node| {
                    let mut row = if keep_base {
                        g.node_static[node].clone()
                    } else {
                        Vec::new()
                    };
                    row.extend(selected.iter().map(|&feat| {
                        let any = (0..t).any(|yr| g.node_long[node][feat * t + yr] > 0.0);
                        any as u8 as f64
                    }));
                    row
                })
                .collect();
            let mut graph = g.clone();
            graph.node_static = node_static;
            graph.node_long = Vec::new();
            graph.n_long_features = 0;
            graph.n_years = 0;
            Sample {
                graph,
                history: sample.history.clone(),
            }
        })
        .collect();
    Ok(Dataset {
        samples,
        labels: dataset.labels.clone(),
        n_long_features: 0,
        n_years: 0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub n_top: usize,
    pub explainer_selected: Vec<usize>,
    pub lr_selected: Vec<usize>,
    pub jaccard: f64,
    pub explainer_auc_prc: f64,
    pub lr_auc_prc: f64,
}

/// Retrain the static GNN on one selected feature subset and report test
/// AUC-PRC from deterministic scores.
pub fn retrain_on_selection(
    dataset: &Dataset,
    selected: &[usize],
    base_model: &ModelConfig,
    settings: &RunSettings,
) -> Result<f64> {
    let projected = static_projection(dataset, selected, false)?;
    let splits = crate::trainer::split_dataset(&projected.labels, &settings.split)?;
    let mut config = base_model.clone();
    config.architecture = Architecture::GnnStatic;
    config.n_static = selected.len();
    config.n_long_features = 0;
    config.n_years = 0;
    let mut model = Model::new(config, settings.seed)?;
    train(&mut model, &projected.samples, &splits, &settings.train)?;
    let scores = predict_scores(&model, &projected.samples, &splits.test)?;
    let labels: Vec<u8> = splits.test.iter().map(|&i| projected.labels[i]).collect();
    auc_prc(&ScoredSet::new(scores, labels)?)
}

/// Compare explainer-driven and logistic-regression feature selection: rank
/// features both ways, take the top n from each, retrain the static GNN on
/// each subset, and report test AUC-PRC plus the Jaccard overlap of the sets.
pub fn feature_selection_experiment(
    dataset: &Dataset,
    model: &Model,
    explain_idxs: &[usize],
    explain_config: &ExplainConfig,
    n_top: usize,
    base_model: &ModelConfig,
    settings: &RunSettings,
) -> Result<SelectionReport> {
    if n_top > dataset.n_long_features {
        return Err(Error::Param(format!(
            "top {n_top} requested from {} features",
            dataset.n_long_features
        )));
    }
    let explainer_ranked =
        explainer_parent_ranking(model, &dataset.samples, explain_idxs, explain_config)?;
    let lr_ranked = lr_parent_ranking(dataset)?;
    let explainer_selected = top_n(&explainer_ranked, n_top)?;
    let lr_selected = top_n(&lr_ranked, n_top)?;
    let explainer_auc_prc =
        retrain_on_selection(dataset, &explainer_selected, base_model, settings)?;
    let lr_auc_prc = retrain_on_selection(dataset, &lr_selected, base_model, settings)?;
    Ok(SelectionReport {
        n_top,
        jaccard: jaccard(&explainer_selected, &lr_selected),
        explainer_selected,
        lr_selected,
        explainer_auc_prc,
        lr_auc_prc,
    })
}
