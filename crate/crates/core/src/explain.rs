//! Mask-learning explainability: per-target soft masks over nodes and node
//! features, optimized so the masked prediction stays close to the original
//! while the masks shrink, plus global importance aggregation per relative
//! type and set-comparison utilities for feature-selection studies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FamilyGraph, RelationLabel};
use crate::model::{Architecture, Model, Sample};
use crate::params::{Adam, Session};
use crate::rng::stream;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Coefficient of the mask-size penalty (mean of mask entries).
    pub size_coeff: f64,
    /// Coefficient of the mask-entropy penalty (mean binary entropy).
    pub entropy_coeff: f64,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            steps: 200,
            lr: 0.01,
            size_coeff: 0.005,
            entropy_coeff: 0.1,
            seed: 0,
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size_coeff < 0.0 || self.entropy_coeff < 0.0 {
            return Err(Error::Param("mask penalties must be non-negative".into()));
        }
        if self.steps == 0 {
            return Err(Error::Param("explanation needs at least one step".into()));
        }
        Ok(())
    }
}

/// Learned masks for one target graph. `feature_mask` rows are time-major
/// (`[t * F + f]`) for longitudinal architectures; for the static GNN each
/// row covers the static features and `n_years` is 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplanationMasks {
    pub node_mask: Vec<f64>,
    pub feature_mask: Vec<Vec<f64>>,
    pub n_features: usize,
    pub n_years: usize,
    pub converged: bool,
    pub objective: f64,
}

impl ExplanationMasks {
    /// Per-feature mask for one node, averaged over the time dimension.
    pub fn time_averaged(&self, node: usize) -> Vec<f64> {
        let row = &self.feature_mask[node];
        let (f, t) = (self.n_features, self.n_years);
        (0..f)
            .map(|feat| (0..t).map(|year| row[year * f + feat]).sum::<f64>() / t as f64)
            .collect()
    }
}

/// KL(p0 || p) for Bernoulli distributions: zero exactly when p equals p0,
/// which makes the identity mask score a fidelity of 0.
fn kl_constant(p0: f64) -> f64 {
    let p0 = p0.clamp(1e-12, 1.0 - 1e-12);
    p0 * p0.ln() + (1.0 - p0) * (1.0 - p0).ln()
}

fn feature_mask_width(model: &Model, graph: &FamilyGraph) -> Result<usize> {
    match model.config.architecture {
        Architecture::GnnStatic => Ok(model.config.n_static),
        Architecture::GnnLstm => {
            if graph.node_long.is_empty() {
                return Err(Error::Config(
                    "cannot explain a recurrent model on a graph without tracks".into(),
                ));
            }
            Ok(model.config.n_years * model.config.n_long_features)
        }
        a => Err(Error::Config(format!(
            "explanation requires a graph architecture, got {}",
            a.name()
        ))),
    }
}

/// Prediction under explicit mask values (used by the optimizer and by
/// audits; all-ones masks reproduce the unmasked prediction bitwise).
pub fn masked_prediction(
    model: &Model,
    sample: &Sample,
    node_mask: &[f64],
    feature_mask: &[f64],
) -> Result<f64> {
    let n = sample.graph.n_nodes();
    let width = feature_mask_width(model, &sample.graph)?;
    let mut sess = Session::new(&model.store);
    let nm = sess.input(node_mask.to_vec(), &[n, 1]);
    let fm = sess.input(feature_mask.to_vec(), &[n, width]);
    let mut rng = stream(0, &["masked-inference"]);
    let fwd = model.net.forward(
        &model.config,
        &mut sess,
        sample,
        false,
        &mut rng,
        Some(&nm),
        Some(&fm),
    )?;
    Ok(fwd.outputs().y_model)
}

/// Learn node and feature masks for one target by gradient descent on
/// KL(original prediction || masked prediction) plus size and entropy
/// penalties. Masks are sigmoid-parameterized, so every entry stays in
/// (0, 1) at every step.
pub fn explain(model: &Model, sample: &Sample, config: &ExplainConfig) -> Result<ExplanationMasks> {
    config.validate()?;
    let graph = &sample.graph;
    let n = graph.n_nodes();
    let width = feature_mask_width(model, graph)?;
    let p0 = model.predict(sample)?.y_model;
    let kl_c = kl_constant(p0);
    let p0c = p0.clamp(1e-12, 1.0 - 1e-12);

    // model parameters are cloned as frozen leaves; only the two mask
    // parameters receive optimizer updates
    let mut store = model.store.clone();
    let n_model = store.params.len();
    // start at 0.5 — the entropy penalty's saddle — so the fidelity term
    // decides which entries climb toward 1 before entropy polarizes them
    let init = 0.0;
    let node_id = store.add("explain.node_mask", &[n, 1], vec![init; n]);
    let feat_id = store.add("explain.feature_mask", &[n, width], vec![init; n * width]);
    let mut adam = Adam::new(config.lr, 0.9, 0.999, &store);
    let n_entries = (n + n * width) as f64;

    let mut rng = stream(config.seed, &["explain"]);
    let mut objective = f64::INFINITY;
    for step in 0..config.steps {
        let mut sess = Session::new(&store);
        let nm = sess.param(node_id).sigmoid();
        let fm = sess.param(feat_id).sigmoid();
        let fwd = model.net.forward(
            &model.config,
            &mut sess,
            sample,
            false,
            &mut rng,
            Some(&nm),
            Some(&fm),
        )?;
        let p = fwd.y_model.sigmoid().reshape(&[1])?;
        let one_minus_p = p.neg().add_const(1.0);
        let fidelity = p
            .ln_clamped(1e-12)
            .scale(-p0c)
            .add(&one_minus_p.ln_clamped(1e-12).scale(-(1.0 - p0c)))?
            .add_const(kl_c);
        let size = nm
            .sum_all()
            .add(&fm.sum_all())?
            .scale(config.size_coeff / n_entries);
        let entropy = nm
            .binary_entropy(1e-12)
            .sum_all()
            .add(&fm.binary_entropy(1e-12).sum_all())?
            .scale(config.entropy_coeff / n_entries);
        let loss = fidelity.add(&size)?.add(&entropy)?;
        objective = loss.scalar_value();
        if !objective.is_finite() {
            return Err(Error::Optimization(format!(
                "non-finite explanation objective at step {step}"
            )));
        }
        let mut grads = sess.grads(&loss)?;
        drop(sess);
        for g in grads.iter_mut().take(n_model) {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        adam.step(&mut store, &grads);
    }

    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let node_mask: Vec<f64> = store.params[node_id].value.iter().map(|&v| sig(v)).collect();
    let feature_mask: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            store.params[feat_id].value[i * width..(i + 1) * width]
                .iter()
                .map(|&v| sig(v))
                .collect()
        })
        .collect();
    let (n_features, n_years) = match model.config.architecture {
        Architecture::GnnStatic => (model.config.n_static, 1),
        _ => (model.config.n_long_features, model.config.n_years),
    };
    Ok(ExplanationMasks {
        node_mask,
        feature_mask,
        n_features,
        n_years,
        converged: true,
        objective,
    })
}

/// Per-feature global importance for one relative type: the node-importance
/// weighted average of time-averaged feature masks over every matching node,
/// ranked descending with stable index tie-break. Empty when the type never
/// occurs.
pub fn global_importance(
    explanations: &[(&FamilyGraph, &ExplanationMasks)],
    relative_type: RelationLabel,
) -> Vec<(usize, f64)> {
    let mut weight_sum = 0.0;
    let mut scores: Vec<f64> = Vec::new();
    for (graph, masks) in explanations {
        for (i, label) in graph.labels.iter().enumerate() {
            if *label != relative_type {
                continue;
            }
            let w = masks.node_mask[i];
            let avg = masks.time_averaged(i);
            if scores.is_empty() {
                scores = vec![0.0; avg.len()];
            }
            for (s, a) in scores.iter_mut().zip(&avg) {
                *s += w * a;
            }
            weight_sum += w;
        }
    }
    if weight_sum == 0.0 {
        return Vec::new();
    }
    let mut ranked: Vec<(usize, f64)> = scores
        .into_iter()
        .map(|s| s / weight_sum)
        .enumerate()
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// First `n` feature indices of a descending ranking.
pub fn top_n(ranked: &[(usize, f64)], n: usize) -> Result<Vec<usize>> {
    if n > ranked.len() {
        return Err(Error::Param(format!(
            "requested top {n} of {} ranked features",
            ranked.len()
        )));
    }
    Ok(ranked.iter().take(n).map(|&(f, _)| f).collect())
}

/// Jaccard similarity of two index sets; two empty sets count as identical.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    use std::collections::HashSet;
    let sa: HashSet<usize> = a.iter().copied().collect();
    let sb: HashSet<usize> = b.iter().copied().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}
