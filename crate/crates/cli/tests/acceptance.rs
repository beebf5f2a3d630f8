//! End-to-end acceptance suite. Each test prints a single
//! `ACCEPTANCE <n> <name>: PASS|FAIL` line for its criterion, then asserts.
//!
//! The heavy experiments (1, 2, 6) are fully seeded, so their results are
//! byte-stable across runs; the recipes and tuning notes live with the
//! experiment module they exercise.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;

use famrisk::experiment::{
    build_dataset, design_study, evaluate_architecture, explainer_parent_ranking,
    lr_parent_ranking, static_projection, DatasetConfig, DesignStudyConfig, RunSettings,
};
use famrisk::explain::{explain, masked_prediction, ExplainConfig};
use famrisk::graph::{FamilyGraph, RelationLabel, FAMILY_HISTORY_DIM, RELATION_LABELS};
use famrisk::layers::{
    pool, Activation, BiLstm, Dense, GcnLayer, GraphEdges, KgnnLayer, Mlp, PoolMode,
};
use famrisk::metrics::{auc_prc, auc_roc, confusion, mcc, ScoredSet};
use famrisk::model::{
    compute_loss, Architecture, ClassWeights, GnnKind, Model, ModelConfig, Sample,
};
use famrisk::params::{grad_check, ParamStore};
use famrisk::pedigree::{
    pair_is_legal, simulate_population, ChannelSpec, SimParams, StabilizerMode,
};
use famrisk::rng::stream;
use famrisk::trainer::{
    mc_dropout_eval, split_dataset, train, EarlyStopper, SplitSpec, TrainConfig,
};

fn report(n: u32, name: &str, ok: bool, detail: &str) {
    println!(
        "ACCEPTANCE {n} {name}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "acceptance criterion {n} ({name}) failed: {detail}");
}

// ---------------------------------------------------------------------------
// 1. Heritability separation: graph model beats the tabular baselines at
//    high h2, and its advantage over the age/sex MLP grows with h2.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_1_heritability_separation() {
    let t0 = Instant::now();
    let h2_grid = [0.1, 0.3, 0.5, 0.7];
    let seeds = [1u64, 2, 3, 4, 5];
    // mean AUC-ROC per (h2, architecture) across seeds
    let mut sums: BTreeMap<(u64, &str), f64> = BTreeMap::new();
    for &h2 in &h2_grid {
        for &seed in &seeds {
            let ds_config = DatasetConfig {
                sim: SimParams {
                    h2,
                    e2: 1.0 - h2,
                    prevalence_k: 0.1,
                    n_generations: 3,
                    gen_sizes: vec![5000, 5000, 20000],
                    seed,
                    ..SimParams::default()
                },
                edge_mode: famrisk::graph::EdgeMode::AllRelated,
                channels: vec![ChannelSpec::Diagnosis],
                n_years: 10,
                min_graph_nodes: 3,
            };
            let dataset = build_dataset(&ds_config).unwrap();
            assert!(
                dataset.samples.len() >= 20_000,
                "dataset at h2={h2} seed={seed} has only {} targets",
                dataset.samples.len()
            );
            // the static GNN sees the binarized diagnosis channel alongside
            // age/sex; the raw graphs only carry age/sex node statics
            let projected = static_projection(&dataset, &[0], true).unwrap();
            let settings = RunSettings {
                split: SplitSpec { seed, ..SplitSpec::default() },
                train: TrainConfig {
                    lr: 0.005,
                    max_epochs: 30,
                    patience: 5,
                    seed,
                    ..TrainConfig::default()
                },
                mc_samples: 3,
                seed,
            };
            let runs: [(&str, &famrisk::experiment::Dataset, ModelConfig); 4] = [
                (
                    "rule",
                    &dataset,
                    ModelConfig { architecture: Architecture::RuleBased, ..ModelConfig::default() },
                ),
                (
                    "age_sex",
                    &dataset,
                    ModelConfig { architecture: Architecture::MlpAgeSex, ..ModelConfig::default() },
                ),
                (
                    "family_history",
                    &dataset,
                    ModelConfig {
                        architecture: Architecture::MlpFamilyHistory,
                        ..ModelConfig::default()
                    },
                ),
                (
                    "gnn_static",
                    &projected,
                    ModelConfig {
                        architecture: Architecture::GnnStatic,
                        gnn_kind: GnnKind::Kgnn,
                        pooling: PoolMode::Target,
                        n_static: 3,
                        ..ModelConfig::default()
                    },
                ),
            ];
            for (name, ds, config) in runs {
                let rep = evaluate_architecture(ds, &config, &settings).unwrap();
                let key = ((h2 * 10.0).round() as u64, name);
                *sums.entry(key).or_insert(0.0) += rep.report.auc_roc.mean;
            }
        }
    }
    let n_seeds = seeds.len() as f64;
    let mean = |h2: f64, name: &str| sums[&((h2 * 10.0).round() as u64, name)] / n_seeds;

    // ordering at h2 = 0.7
    let (g1, a2, a1, b1) = (
        mean(0.7, "gnn_static"),
        mean(0.7, "family_history"),
        mean(0.7, "age_sex"),
        mean(0.7, "rule"),
    );
    let ordering_ok = g1 > a2 && a2 > a1 && g1 > b1;

    // the graph-vs-age/sex gap must be non-decreasing in h2, allowing one
    // inversion of at most 0.005
    let gaps: Vec<f64> = h2_grid
        .iter()
        .map(|&h2| mean(h2, "gnn_static") - mean(h2, "age_sex"))
        .collect();
    let mut inversions = 0;
    let mut worst = 0.0_f64;
    for w in gaps.windows(2) {
        if w[1] < w[0] {
            inversions += 1;
            worst = worst.max(w[0] - w[1]);
        }
    }
    let gap_ok = inversions <= 1 && worst <= 0.005;

    let elapsed = t0.elapsed().as_secs();
    let runtime_ok = elapsed < 7200;
    report(
        1,
        "heritability separation",
        ordering_ok && gap_ok && runtime_ok,
        &format!(
            "h2=0.7 AUC: gnn {g1:.4} family-history {a2:.4} age-sex {a1:.4} rule {b1:.4}; \
             gaps {gaps:?}; inversions {inversions} worst {worst:.4}; runtime {elapsed}s"
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. Edge-scheme robustness: at h2 = 0.7 the richer edge schemes do not
//    lose more than 0.002 mean AUC-ROC against parent-child only, averaged
//    over the convolution x pooling grid.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_2_edge_scheme_robustness() {
    let t0 = Instant::now();
    let config = DesignStudyConfig {
        base_dataset: DatasetConfig {
            sim: SimParams {
                h2: 0.7,
                e2: 0.3,
                prevalence_k: 0.1,
                n_generations: 3,
                gen_sizes: vec![2500, 2500, 10000],
                seed: 1,
                ..SimParams::default()
            },
            edge_mode: famrisk::graph::EdgeMode::ParentChild,
            channels: vec![ChannelSpec::Diagnosis],
            n_years: 10,
            min_graph_nodes: 3,
        },
        base_model: ModelConfig {
            architecture: Architecture::GnnStatic,
            n_static: 3,
            r_weighted: true,
            ..ModelConfig::default()
        },
        seeds: vec![1, 2, 3],
        learning_rates: vec![0.005],
        settings: RunSettings {
            split: SplitSpec::default(),
            train: TrainConfig {
                lr: 0.005,
                max_epochs: 60,
                patience: 10,
                ..TrainConfig::default()
            },
            mc_samples: 3,
            seed: 1,
        },
        static_features: Some(vec![0]),
    };
    let cells = design_study(&config).unwrap();
    let mut by_mode: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for cell in &cells {
        let mean = cell
            .result
            .as_ref()
            .unwrap_or_else(|e| panic!("design cell failed: {e}"))
            .mean;
        by_mode.entry(format!("{:?}", cell.edge_mode)).or_default().push(mean);
    }
    let mode_mean =
        |m: &str| by_mode[m].iter().sum::<f64>() / by_mode[m].len() as f64;
    let pc = mode_mean("ParentChild");
    let pct = mode_mean("ParentChildPlusTarget");
    let ar = mode_mean("AllRelated");
    let ok = pct >= pc - 0.002 && ar >= pc - 0.002;
    report(
        2,
        "edge-scheme robustness",
        ok,
        &format!(
            "mean AUC-ROC: parent-child {pc:.4}, +target {pct:.4}, all-related {ar:.4}; \
             runtime {}s",
            t0.elapsed().as_secs()
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Simulator moments: heritable-liability variance tracks h2 per
//    generation, prevalence sits inside the 99% binomial CI, and no mated
//    pair violates the relatedness constraints.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_3_simulator_moments() {
    let params = SimParams {
        h2: 0.6,
        e2: 0.4,
        prevalence_k: 0.05,
        n_generations: 3,
        gen_sizes: vec![50_000, 50_000, 50_000],
        stabilizer_mode: StabilizerMode::VariancePreserving,
        seed: 11,
        ..SimParams::default()
    };
    let pop = simulate_population(&params).unwrap();

    let mut detail = String::new();
    let mut ok = true;
    for (g, gen) in pop.generations.iter().enumerate() {
        let n = gen.len() as f64;
        let vals: Vec<f64> = gen.iter().map(|&i| pop.individuals[i].l_herr).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let var_ok = (var - params.h2).abs() <= 0.1 * params.h2;

        let cases = gen.iter().filter(|&&i| pop.individuals[i].case_status).count() as f64;
        let prev = cases / n;
        let half = 2.576 * (params.prevalence_k * (1.0 - params.prevalence_k) / n).sqrt();
        let prev_ok = (prev - params.prevalence_k).abs() <= half;

        detail.push_str(&format!("gen {g}: var {var:.4} prev {prev:.4}; "));
        ok &= var_ok && prev_ok;
    }

    let mut violations = 0;
    for ind in &pop.individuals {
        if let (Some(m), Some(f)) = (ind.mother_id, ind.father_id) {
            let mother = pop.get(m).unwrap();
            let father = pop.get(f).unwrap();
            if !pair_is_legal(&pop, mother, father) {
                violations += 1;
            }
        }
    }
    detail.push_str(&format!("mating violations {violations}"));
    report(3, "simulator moments", ok && violations == 0, &detail);
}

// ---------------------------------------------------------------------------
// 4. Numeric core: every layer and the full multi-head model pass central
//    finite-difference gradient checks on >= 10 random instances.
// ---------------------------------------------------------------------------

fn random_graph_sample<R: Rng>(rng: &mut R, n: usize, f: usize, t: usize) -> Sample {
    let node_static: Vec<Vec<f64>> =
        (0..n).map(|_| (0..2).map(|_| rng.gen::<f64>()).collect()).collect();
    let node_long: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..f * t).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let mut edges = Vec::new();
    let mut edge_features = Vec::new();
    for i in 1..n {
        // star around the target plus a ring for denser message passing
        for (u, v) in [(0, i), (i, if i + 1 < n { i + 1 } else { 1 })] {
            if u == v {
                continue;
            }
            edges.push((u, v));
            edges.push((v, u));
            let mut feat = vec![0.5];
            feat.extend(vec![0.0; RELATION_LABELS.len()]);
            feat[1] = 1.0;
            edge_features.push(feat.clone());
            edge_features.push(feat);
        }
    }
    let mut labels = vec![RelationLabel::Mother; n];
    labels[0] = RelationLabel::Target;
    let graph = FamilyGraph {
        target_id: 0,
        node_ids: (0..n as u64).collect(),
        labels,
        node_static,
        node_long,
        n_long_features: f,
        n_years: t,
        edges,
        edge_features,
        y: 1.0,
    };
    graph.validate().unwrap();
    Sample { graph, history: (0..FAMILY_HISTORY_DIM).map(|_| rng.gen::<f64>()).collect() }
}

fn random_edges<R: Rng>(rng: &mut R, n: usize) -> GraphEdges {
    let mut pairs = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen_bool(0.5) {
                pairs.push((u, v, 0.25 + 0.5 * rng.gen::<f64>()));
            }
        }
    }
    GraphEdges { n_nodes: n, pairs }
}

/// Zero-initialized biases can leave a ReLU input exactly at its kink (for
/// example when every hidden unit of a small MLP is dead, its output equals
/// the zero bias), where central differences and the subgradient disagree by
/// construction. Jittering every parameter moves the random instances off
/// that measure-zero set without changing what is being verified.
fn jitter<R: Rng>(store: &mut ParamStore, rng: &mut R) {
    for p in &mut store.params {
        for v in &mut p.value {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
}

#[test]
fn acceptance_4_gradient_checks() {
    let mut worst: Vec<(String, f64)> = Vec::new();
    let eps = 1e-6;

    for inst in 0..10u64 {
        let mut rng = stream(inst, &["acceptance", "grad"]);
        let (n, f, t) = (3 + (inst as usize % 4), 2, 3);

        // dense layer
        let mut store = ParamStore::new();
        let layer = Dense::new(&mut store, "d", f, 3, &mut rng);
        jitter(&mut store, &mut rng);
        let x: Vec<f64> = (0..f).map(|_| rng.gen::<f64>()).collect();
        let ids: Vec<usize> = (0..store.params.len()).collect();
        let err = grad_check(
            &mut store,
            &ids,
            |s| {
                let xin = s.input(x.clone(), &[f]);
                let y = layer.forward(s, &xin).unwrap();
                y.mul(&y).unwrap().sum_all()
            },
            eps,
        )
        .unwrap();
        worst.push((format!("dense[{inst}]"), err));

        // two-layer perceptron (dropout inert outside training)
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", f, 4, 2, 0.5, &mut rng);
        jitter(&mut store, &mut rng);
        let x: Vec<f64> = (0..f).map(|_| rng.gen::<f64>()).collect();
        let ids: Vec<usize> = (0..store.params.len()).collect();
        let err = grad_check(
            &mut store,
            &ids,
            |s| {
                let mut drop_rng = stream(inst, &["acceptance", "mlp-drop"]);
                let xin = s.input(x.clone(), &[f]);
                let y = mlp.forward(s, &xin, false, &mut drop_rng).unwrap();
                y.mul(&y).unwrap().sum_all()
            },
            eps,
        )
        .unwrap();
        worst.push((format!("mlp[{inst}]"), err));

        // graph convolution (normalized adjacency)
        let mut store = ParamStore::new();
        let gcn = GcnLayer::new(&mut store, "g", f, 3, &mut rng);
        jitter(&mut store, &mut rng);
        let edges = random_edges(&mut rng, n);
        let x: Vec<f64> = (0..n * f).map(|_| rng.gen::<f64>()).collect();
        let ids: Vec<usize> = (0..store.params.len()).collect();
        let err = grad_check(
            &mut store,
            &ids,
            |s| {
                let xin = s.input(x.clone(), &[n, f]);
                let y = gcn.forward(s, &xin, &edges, Activation::Relu, None).unwrap();
                y.mul(&y).unwrap().sum_all()
            },
            eps,
        )
        .unwrap();
        worst.push((format!("gcn[{inst}]"), err));

        // neighbor-sum convolution, alternating the r-weighted flag
        let mut store = ParamStore::new();
        let kgnn = KgnnLayer::new(&mut store, "k", f, 3, inst % 2 == 0, &mut rng);
        jitter(&mut store, &mut rng);
        let edges = random_edges(&mut rng, n);
        let x: Vec<f64> = (0..n * f).map(|_| rng.gen::<f64>()).collect();
        let ids: Vec<usize> = (0..store.params.len()).collect();
        let err = grad_check(
            &mut store,
            &ids,
            |s| {
                let xin = s.input(x.clone(), &[n, f]);
                let y = kgnn.forward(s, &xin, &edges, Activation::Relu, None).unwrap();
                y.mul(&y).unwrap().sum_all()
            },
            eps,
        )
        .unwrap();
        worst.push((format!("kgnn[{inst}]"), err));

        // bidirectional recurrent encoder
        let mut store = ParamStore::new();
        let lstm = BiLstm::new(&mut store, "l", f, 4, &mut rng);
        jitter(&mut store, &mut rng);
        let seq: Vec<f64> = (0..t * f).map(|_| rng.gen::<f64>()).collect();
        let ids: Vec<usize> = (0..store.params.len()).collect();
        let err = grad_check(
            &mut store,
            &ids,
            |s| {
                let xin = s.input(seq.clone(), &[t, f]);
                let y = lstm.forward(s, &xin).unwrap();
                y.mul(&y).unwrap().sum_all()
            },
            eps,
        )
        .unwrap();
        worst.push((format!("bilstm[{inst}]"), err));

        // pooling (through a dense layer so pooling sits mid-graph)
        let mode = [PoolMode::Target, PoolMode::Mean, PoolMode::Sum][inst as usize % 3];
        let mut store = ParamStore::new();
        let head = Dense::new(&mut store, "h", 3, 1, &mut rng);
        jitter(&mut store, &mut rng);
        let x: Vec<f64> = (0..n * 3).map(|_| rng.gen::<f64>()).collect();
        let ids: Vec<usize> = (0..store.params.len()).collect();
        let err = grad_check(
            &mut store,
            &ids,
            |s| {
                let xin = s.input(x.clone(), &[n, 3]);
                let w = s.param(head.w);
                let h = xin.matmul(&w).unwrap();
                let g = pool(&h, mode, 0).unwrap();
                g.mul(&g).unwrap().sum_all()
            },
            eps,
        )
        .unwrap();
        worst.push((format!("pool[{inst}]"), err));

        // full multi-head model
        let sample = random_graph_sample(&mut rng, n, f, t);
        let config = ModelConfig {
            architecture: Architecture::GnnLstm,
            gnn_kind: if inst % 2 == 0 { GnnKind::Gcn } else { GnnKind::Kgnn },
            pooling: mode,
            h_g: 3,
            h_l: 4,
            h_m: 3,
            dropout: 0.5,
            n_long_features: f,
            n_years: t,
            n_static: 2,
            r_weighted: inst % 2 == 1,
            ..ModelConfig::default()
        };
        let mut model = Model::new(config.clone(), inst).unwrap();
        jitter(&mut model.store, &mut rng);
        let net = model.net.clone();
        let weights = ClassWeights::from_counts(1, 4).unwrap();
        let ids: Vec<usize> = (0..model.store.params.len()).collect();
        let err = grad_check(
            &mut model.store,
            &ids,
            |s| {
                let mut fwd_rng = stream(inst, &["acceptance", "model-fwd"]);
                let fwd = net
                    .forward(&config, s, &sample, false, &mut fwd_rng, None, None)
                    .unwrap();
                compute_loss(&config, &fwd, 1.0, &weights).unwrap()
            },
            eps,
        )
        .unwrap();
        worst.push((format!("model[{inst}]"), err));
    }

    for (name, e) in worst.iter().filter(|(_, e)| *e >= 1e-6) {
        println!("  {name}: {e:.3e}");
    }
    let max = worst.iter().cloned().fold(("".to_string(), 0.0), |a, b| {
        if b.1 > a.1 { b } else { a }
    });
    report(
        4,
        "gradient checks",
        worst.iter().all(|(_, e)| *e < 1e-4),
        &format!("{} checks, max error {:.2e} at {}", worst.len(), max.1, max.0),
    );
}

// ---------------------------------------------------------------------------
// 5. Metric oracles: ranking metrics match quadratic-time brute force
//    bitwise on 1000 random instances, including heavy ties.
// ---------------------------------------------------------------------------

fn brute_auc_roc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut np = 0u64;
    for (i, &li) in labels.iter().enumerate() {
        if li != 1 {
            continue;
        }
        np += 1;
        for (j, &lj) in labels.iter().enumerate() {
            if lj == 1 {
                continue;
            }
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    let nn = labels.iter().filter(|&&l| l == 0).count() as u64;
    num / (np as f64 * nn as f64)
}

fn brute_auc_prc(scores: &[f64], labels: &[u8]) -> f64 {
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for &t in &thresholds {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (&s, &l) in scores.iter().zip(labels) {
            if s >= t {
                if l == 1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / n_pos;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}

fn brute_mcc(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fn_, mut tn) = (0f64, 0f64, 0f64, 0f64);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            (false, false) => tn += 1.0,
        }
    }
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom.sqrt()
}

#[test]
fn acceptance_5_metric_oracles() {
    let mut rng = stream(5, &["acceptance", "oracle"]);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.gen_range(2..=50);
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.4) as u8).collect();
        let n_pos: usize = labels.iter().map(|&l| l as usize).sum();
        if n_pos == 0 || n_pos == n {
            continue;
        }
        // tie-heavy instances: half the time scores come from an 11-point grid
        let discrete = rng.gen_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if discrete {
                    rng.gen_range(0..=10) as f64 / 10.0
                } else {
                    rng.gen::<f64>()
                }
            })
            .collect();
        let scored = ScoredSet::new(scores.clone(), labels.clone()).unwrap();

        let lib = auc_roc(&scored).unwrap();
        let brute = brute_auc_roc(&scores, &labels);
        assert_eq!(lib.to_bits(), brute.to_bits(), "AUC-ROC mismatch: {lib} vs {brute}");

        let lib = auc_prc(&scored).unwrap();
        let brute = brute_auc_prc(&scores, &labels);
        assert_eq!(lib.to_bits(), brute.to_bits(), "AUC-PRC mismatch: {lib} vs {brute}");

        for threshold in [0.5, rng.gen::<f64>()] {
            let lib = mcc(&scored, threshold);
            let brute = brute_mcc(&scores, &labels, threshold);
            assert_eq!(lib.to_bits(), brute.to_bits(), "MCC mismatch: {lib} vs {brute}");
        }
        // cross-check the confusion-table path as well
        let c = confusion(&scored, 0.5);
        assert_eq!(c.tp + c.fp + c.fn_ + c.tn, n);
        checked += 1;
    }
    report(5, "metric oracles", true, "1000 instances matched bitwise");
}

// ---------------------------------------------------------------------------
// 6. Explainer recovery: planted single-signal top-1 recovery, exact
//    identity-mask fidelity, and the nonlinear-interaction (XOR) experiment
//    against logistic-regression feature selection.
// ---------------------------------------------------------------------------

fn planted_graph(n: usize, n_static: usize, j: usize, f: usize) -> Sample {
    let mut node_static = vec![vec![0.0; n_static]; n];
    node_static[j][f] = 1.0;
    let mut edges = Vec::new();
    let mut edge_features = Vec::new();
    for i in 1..n {
        edges.push((0, i));
        edges.push((i, 0));
        let feat = vec![0.5; FamilyGraph::EDGE_FEATURE_DIM];
        edge_features.push(feat.clone());
        edge_features.push(feat);
    }
    let mut labels = vec![RelationLabel::Mother; n];
    labels[0] = RelationLabel::Target;
    Sample {
        graph: FamilyGraph {
            target_id: 0,
            node_ids: (0..n as u64).collect(),
            labels,
            node_static,
            node_long: Vec::new(),
            n_long_features: 0,
            n_years: 0,
            edges,
            edge_features,
            y: 1.0,
        },
        history: vec![0.0; FAMILY_HISTORY_DIM],
    }
}

/// Hand-wired static GNN whose logit is 4 * sum over nodes of feature `f`,
/// so exactly one (node, feature) entry drives the prediction.
fn planted_model(n_static: usize, f: usize) -> Model {
    let config = ModelConfig {
        architecture: Architecture::GnnStatic,
        gnn_kind: GnnKind::Kgnn,
        pooling: PoolMode::Sum,
        h_g: 1,
        h_m: 1,
        dropout: 0.0,
        n_static,
        ..ModelConfig::default()
    };
    let mut model = Model::new(config, 0).unwrap();
    let mut set = |name: &str, value: Vec<f64>| {
        let id = model.store.by_name(name).unwrap();
        model.store.params[id].value = value;
    };
    let mut pick = vec![0.0; n_static];
    pick[f] = 1.0;
    set("conv1.w_self", pick);
    set("conv1.w_nbr", vec![0.0; n_static]);
    set("conv2.w_self", vec![1.0]);
    set("conv2.w_nbr", vec![0.0]);
    set("final_mlp.l1.w", vec![1.0]);
    set("final_mlp.l1.b", vec![0.0]);
    set("final_mlp.l2.w", vec![1.0]);
    set("final_mlp.l2.b", vec![0.0]);
    set("final_head.w", vec![4.0]);
    set("final_head.b", vec![0.0]);
    model
}

fn relation_onehot(label: RelationLabel) -> Vec<f64> {
    let mut v = vec![0.5];
    v.extend(RELATION_LABELS.iter().map(|&l| if l == label { 1.0 } else { 0.0 }));
    v
}

/// Cohort of 3-node (target, mother, father) graphs where the label is the
/// XOR of mother feature `f1` and father feature `f2`, plus a linearly
/// predictive decoy channel on both parents. Parent features are drawn at
/// p = 0.5 so each is marginally independent of the label; cases are then
/// downsampled to make the cohort imbalanced without breaking that
/// independence.
fn xor_dataset(
    seed: u64,
    n: usize,
    f: usize,
    t: usize,
    f1: usize,
    f2: usize,
    decoy: usize,
) -> famrisk::experiment::Dataset {
    let mut rng = stream(seed, &["acceptance", "xor"]);
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut i = 0u64;
    while samples.len() < n {
        i += 1;
        let a = rng.gen_bool(0.5);
        let b = rng.gen_bool(0.5);
        let y = (a ^ b) as u8;
        let keep = y == 0 || rng.gen_bool(0.17);
        let d = if rng.gen_bool(0.25) { 1 - y } else { y };
        if !keep {
            continue;
        }
        let mut node_long = vec![vec![0.0; f * t]; 3];
        for node in 0..3 {
            for feat in 0..f {
                let active = if node == 1 && feat == f1 {
                    a
                } else if node == 2 && feat == f2 {
                    b
                } else if node > 0 && feat == decoy {
                    d == 1
                } else {
                    rng.gen_bool(0.05)
                };
                if active {
                    for year in 0..t {
                        node_long[node][feat * t + year] = 1.0;
                    }
                }
            }
        }
        // the target's own signal channels must not leak the label
        for feat in [f1, f2, decoy] {
            for year in 0..t {
                node_long[0][feat * t + year] = 0.0;
            }
        }
        let graph = FamilyGraph {
            target_id: i,
            node_ids: vec![i * 3, i * 3 + 1, i * 3 + 2],
            labels: vec![RelationLabel::Target, RelationLabel::Mother, RelationLabel::Father],
            node_static: vec![vec![0.5, 0.0], vec![0.5, 1.0], vec![0.5, 0.0]],
            node_long,
            n_long_features: f,
            n_years: t,
            edges: vec![(0, 1), (1, 0), (0, 2), (2, 0)],
            edge_features: vec![
                relation_onehot(RelationLabel::Mother),
                relation_onehot(RelationLabel::Mother),
                relation_onehot(RelationLabel::Father),
                relation_onehot(RelationLabel::Father),
            ],
            y: y as f64,
        };
        graph.validate().unwrap();
        samples.push(Sample { graph, history: vec![0.0; FAMILY_HISTORY_DIM] });
        labels.push(y);
    }
    famrisk::experiment::Dataset { samples, labels, n_long_features: f, n_years: t }
}

#[test]
fn acceptance_6_explainer_recovery() {
    // (a) planted-signal top-1 recovery over 20 instances
    let mut hits = 0;
    for inst in 0..20usize {
        let n = 4 + inst % 4;
        let j = 1 + inst % (n - 1);
        let f = inst % 4;
        let sample = planted_graph(n, 4, j, f);
        let model = planted_model(4, f);
        let masks = explain(&model, &sample, &ExplainConfig::default()).unwrap();
        let best_node = (0..n)
            .max_by(|&a, &b| masks.node_mask[a].total_cmp(&masks.node_mask[b]))
            .unwrap();
        let avg = masks.time_averaged(j);
        let best_feat = (0..4).max_by(|&a, &b| avg[a].total_cmp(&avg[b])).unwrap();
        if best_node == j && best_feat == f {
            hits += 1;
        }
    }

    // (b) identity-mask fidelity is exact
    let sample = planted_graph(5, 4, 2, 1);
    let model = planted_model(4, 1);
    let p0 = model.predict(&sample).unwrap().y_model;
    let p = masked_prediction(&model, &sample, &vec![1.0; 5], &vec![1.0; 20]).unwrap();
    let identity_exact = p.to_bits() == p0.to_bits();

    // (c) XOR experiment: the mask explainer surfaces a nonlinear parent
    // interaction that logistic-regression selection cannot see
    let (f, t, f1, f2, decoy) = (40, 4, 3, 17, 29);
    let mut explainer_wins = 0;
    let mut lr_blind = 0;
    for seed in [1u64, 2, 3, 4, 5] {
        let dataset = xor_dataset(seed, 2500, f, t, f1, f2, decoy);
        let config = ModelConfig {
            architecture: Architecture::GnnLstm,
            gnn_kind: GnnKind::Gcn,
            pooling: PoolMode::Mean,
            n_long_features: f,
            n_years: t,
            n_static: 2,
            ..ModelConfig::default()
        };
        let split = SplitSpec { seed, ..SplitSpec::default() };
        let splits = split_dataset(&dataset.labels, &split).unwrap();
        let mut model = Model::new(config, seed).unwrap();
        let train_config = TrainConfig {
            lr: 0.005,
            max_epochs: 40,
            patience: 8,
            seed,
            ..TrainConfig::default()
        };
        train(&mut model, &dataset.samples, &splits, &train_config).unwrap();

        let explain_idxs: Vec<usize> = splits.test.iter().take(40).copied().collect();
        let ranked = explainer_parent_ranking(
            &model,
            &dataset.samples,
            &explain_idxs,
            &ExplainConfig { seed, ..ExplainConfig::default() },
        )
        .unwrap();
        let top20: Vec<usize> = ranked.iter().take(20).map(|&(i, _)| i).collect();
        if top20.contains(&f1) && top20.contains(&f2) {
            explainer_wins += 1;
        }
        let lr_ranked = lr_parent_ranking(&dataset).unwrap();
        let lr_top2: Vec<usize> = lr_ranked.iter().take(2).map(|&(i, _)| i).collect();
        if !(lr_top2.contains(&f1) && lr_top2.contains(&f2)) {
            lr_blind += 1;
        }
    }
    let xor_ok = explainer_wins >= 4 && lr_blind == 5;

    report(
        6,
        "explainer recovery",
        hits >= 18 && identity_exact && xor_ok,
        &format!(
            "planted top-1 {hits}/20; identity exact {identity_exact}; \
             XOR explainer {explainer_wins}/5, LR blind {lr_blind}/5"
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Protocol fidelity: split ratios within one individual, early stopping
//    restores best-validation parameters, zero dropout gives zero-width CIs.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_7_protocol_fidelity() {
    // (a) split worked example: 100 cases, 900 controls
    let mut labels = vec![1u8; 100];
    labels.extend(vec![0u8; 900]);
    let spec = SplitSpec { seed: 9, ..SplitSpec::default() };
    let splits = split_dataset(&labels, &spec).unwrap();
    let count = |idxs: &[usize], l: u8| idxs.iter().filter(|&&i| labels[i] == l).count() as i64;
    let (tc, vc, sc) = (count(&splits.train, 1), count(&splits.val, 1), count(&splits.test, 1));
    let cases_ok = (tc - 70).abs() <= 1 && (vc - 10).abs() <= 1 && (sc - 20).abs() <= 1;
    // train controls undersampled so that cases are >= 15% within one individual
    let tk = count(&splits.train, 0);
    let expected_controls = (tc as f64 * 0.85 / 0.15).floor() as i64;
    let ratio_ok = (tk - expected_controls).abs() <= 1;
    // splits are disjoint
    let mut all: Vec<usize> = splits
        .train
        .iter()
        .chain(&splits.val)
        .chain(&splits.test)
        .copied()
        .collect();
    let total = all.len();
    all.sort_unstable();
    all.dedup();
    let disjoint_ok = all.len() == total;

    // (b) early stopping on scripted loss sequences
    let mut stopper = EarlyStopper::new(2);
    let script = [
        (1.0, (true, false)),
        (0.9, (true, false)),
        (0.95, (false, false)),
        (0.96, (false, true)),
    ];
    let mut stopper_ok = true;
    for (loss, expected) in script {
        stopper_ok &= stopper.observe(loss) == expected;
    }
    stopper_ok &= stopper.best_index == 1 && stopper.best_loss() == 0.9;
    // equal loss is not an improvement
    let mut flat = EarlyStopper::new(1);
    flat.observe(0.5);
    stopper_ok &= flat.observe(0.5) == (false, true);

    // (c) training returns best-validation parameters: the returned model's
    // recomputed validation loss equals the recorded best epoch, not the
    // (worse) final epoch
    let dataset = xor_dataset(3, 600, 6, 3, 1, 2, 4);
    let spec = SplitSpec { seed: 3, ..SplitSpec::default() };
    let splits = split_dataset(&dataset.labels, &spec).unwrap();
    let config = ModelConfig {
        architecture: Architecture::GnnLstm,
        gnn_kind: GnnKind::Gcn,
        pooling: PoolMode::Mean,
        h_g: 6,
        h_l: 6,
        h_m: 6,
        n_long_features: 6,
        n_years: 3,
        n_static: 2,
        ..ModelConfig::default()
    };
    let mut model = Model::new(config, 3).unwrap();
    let result = train(
        &mut model,
        &dataset.samples,
        &splits,
        &TrainConfig { lr: 0.01, max_epochs: 12, patience: 3, seed: 3, ..TrainConfig::default() },
    )
    .unwrap();
    let min_val = result
        .history
        .iter()
        .map(|r| r.val_loss)
        .fold(f64::INFINITY, f64::min);
    let best_ok = result.best_val_loss == min_val
        && result.history[result.best_epoch].val_loss == min_val;

    // (d) dropout rate 0 makes the MC-dropout CIs exactly zero-width
    let mut zero_cfg = model.config.clone();
    zero_cfg.dropout = 0.0;
    let zero_model = {
        let mut m = Model::new(zero_cfg, 3).unwrap();
        m.store = model.store.clone();
        m
    };
    let eval = mc_dropout_eval(&zero_model, &dataset.samples, &splits.test, 0.5, 3, 3).unwrap();
    let ci_ok = [&eval.auc_roc, &eval.auc_prc, &eval.mcc]
        .iter()
        .all(|m| m.ci_high - m.ci_low == 0.0 && m.ci_low == m.mean);

    report(
        7,
        "protocol fidelity",
        cases_ok && ratio_ok && disjoint_ok && stopper_ok && best_ok && ci_ok,
        &format!(
            "cases {tc}/{vc}/{sc}, train controls {tk} (expected {expected_controls}); \
             disjoint {disjoint_ok}; stopper {stopper_ok}; best-params {best_ok}; \
             zero-width CI {ci_ok}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Determinism: the same CLI invocation repeated from the same manifest
//    emits byte-identical numeric outputs.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_8_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("exp.conf");
    std::fs::write(
        &config_path,
        "[simulation]\n\
         h2 = 0.7\n\
         e2 = 0.3\n\
         prevalence = 0.1\n\
         gen_sizes = 300,300,1200\n\
         [dataset]\n\
         channels = diagnosis\n\
         [model]\n\
         architecture = mlp_family_history\n\
         [train]\n\
         lr = 0.01\n\
         max_epochs = 3\n",
    )
    .unwrap();
    let run = |out: &std::path::Path| {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_famrisk"))
            .args(["train", "--config"])
            .arg(&config_path)
            .args(["--seed", "7", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success(), "train run failed");
    };
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    run(&out1);
    run(&out2);

    let mut names: Vec<String> = std::fs::read_dir(&out1)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(!names.is_empty(), "first run produced no outputs");
    let mut identical = true;
    for name in &names {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        identical &= a == b;
    }
    report(
        8,
        "run determinism",
        identical,
        &format!("{} output files byte-identical across repeated runs", names.len()),
    );
}

