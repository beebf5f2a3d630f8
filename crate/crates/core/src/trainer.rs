//! Training protocol: case-ratio splits with control undersampling,
//! mini-batch Adam with early stopping, validation-side threshold moving, and
//! MC-dropout evaluation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{auc_prc, auc_roc, mcc, pr_curve, ScoredSet};
use crate::model::{Architecture, ClassWeights, Model, Sample};
use crate::params::{Adam, GradAccum, Session};
use crate::rng::stream;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    /// Case fraction of the training split after control undersampling.
    pub train_case_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.7,
            val_frac: 0.1,
            test_frac: 0.2,
            train_case_fraction: 0.15,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let sum = self.train_frac + self.val_frac + self.test_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Split(format!("split fractions sum to {sum}, not 1")));
        }
        if [self.train_frac, self.val_frac, self.test_frac]
            .iter()
            .any(|&f| f <= 0.0)
        {
            return Err(Error::Split("all split fractions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.train_case_fraction) || self.train_case_fraction == 0.0 {
            return Err(Error::Split(format!(
                "train case fraction must be in (0,1), got {}",
                self.train_case_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split a labeled cohort: cases 70:10:20 (by the spec fractions) across
/// train/val/test, train controls undersampled to the configured case:control
/// ratio (floored, so the case fraction never drops below target), and the
/// remaining control pool divided between val and test proportionally to
/// their case counts, keeping both at the natural ratio.
pub fn split_dataset(labels: &[u8], spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let mut cases: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let mut controls: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let (nc, nk) = (cases.len(), controls.len());
    if nc < 10 {
        return Err(Error::Split(format!(
            "need at least 10 cases to split, got {nc}"
        )));
    }
    let mut rng = stream(spec.seed, &["split", "cases"]);
    cases.shuffle(&mut rng);
    let mut rng = stream(spec.seed, &["split", "controls"]);
    controls.shuffle(&mut rng);

    let n_train_cases = (spec.train_frac * nc as f64).round() as usize;
    let n_val_cases = (spec.val_frac * nc as f64).round() as usize;
    let n_test_cases = nc - n_train_cases - n_val_cases;
    if n_train_cases == 0 || n_val_cases == 0 || n_test_cases == 0 {
        return Err(Error::Split(format!(
            "case split degenerate: {n_train_cases}/{n_val_cases}/{n_test_cases} from {nc} cases"
        )));
    }

    let q = spec.train_case_fraction;
    let n_train_controls = (n_train_cases as f64 * (1.0 - q) / q).floor() as usize;
    if nk < n_train_controls + 2 {
        return Err(Error::Split(format!(
            "{nk} controls cannot cover {n_train_controls} training controls \
             plus validation and test"
        )));
    }
    let remaining = nk - n_train_controls;
    let n_val_controls = ((remaining * n_val_cases) as f64
        / (n_val_cases + n_test_cases) as f64)
        .round() as usize;

    let mut train: Vec<usize> = cases[..n_train_cases]
        .iter()
        .chain(&controls[..n_train_controls])
        .copied()
        .collect();
    let mut val: Vec<usize> = cases[n_train_cases..n_train_cases + n_val_cases]
        .iter()
        .chain(&controls[n_train_controls..n_train_controls + n_val_controls])
        .copied()
        .collect();
    let mut test: Vec<usize> = cases[n_train_cases + n_val_cases..]
        .iter()
        .chain(&controls[n_train_controls + n_val_controls..])
        .copied()
        .collect();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Splits { train, val, test })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 250,
            max_epochs: 100,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::Config("max epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Early-stopping bookkeeper: tracks the best loss seen and how many
/// consecutive observations failed to improve on it.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    pub best_index: usize,
    since_best: usize,
    seen: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_index: 0,
            since_best: 0,
            seen: 0,
        }
    }

    /// Returns `(improved, stop)` for this observation.
    pub fn observe(&mut self, loss: f64) -> (bool, bool) {
        let improved = loss < self.best;
        if improved {
            self.best = loss;
            self.best_index = self.seen;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        self.seen += 1;
        (improved, self.since_best >= self.patience)
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub stopped: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainResult {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub class_weights: ClassWeights,
}

/// Mini-batch Adam with seeded shuffling and early stopping on the validation
/// loss (same class weights as training). The model is left holding the
/// best-validation-epoch parameters.
pub fn train(
    model: &mut Model,
    samples: &[Sample],
    splits: &Splits,
    config: &TrainConfig,
) -> Result<TrainResult> {
    config.validate()?;
    if model.config.architecture == Architecture::RuleBased {
        return Err(Error::Config("the rule-based screen is not trainable".into()));
    }
    let n_cases = splits
        .train
        .iter()
        .filter(|&&i| samples[i].label() >= 0.5)
        .count();
    let weights = ClassWeights::from_counts(n_cases, splits.train.len() - n_cases)?;

    let net = model.net.clone();
    let model_config = model.config.clone();
    let store = &mut model.store;
    let mut adam = Adam::new(config.lr, config.beta1, config.beta2, store);
    let mut stopper = EarlyStopper::new(config.patience);
    let mut best_params: Vec<Vec<f64>> =
        store.params.iter().map(|p| p.value.clone()).collect();
    let mut history = Vec::new();

    for epoch in 0..config.max_epochs {
        let mut order = splits.train.clone();
        let mut shuffle_rng = stream(config.seed, &["train", "epoch", &epoch.to_string()]);
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            let mut accum = GradAccum::zeros(store);
            let mut dropout_rng = stream(
                config.seed,
                &["dropout", &epoch.to_string(), &batch_no.to_string()],
            );
            for &i in batch {
                let sample = &samples[i];
                let mut sess = Session::new(store);
                let fwd = net.forward(
                    &model_config,
                    &mut sess,
                    sample,
                    true,
                    &mut dropout_rng,
                    None,
                    None,
                )?;
                let loss = model_config_loss(&model_config, &fwd, sample.label(), &weights)?;
                let value = loss.scalar_value();
                if !value.is_finite() {
                    return Err(Error::Optimization(format!(
                        "non-finite training loss at epoch {epoch}, batch {batch_no}"
                    )));
                }
                epoch_loss += value;
                let grads = sess.grads(&loss)?;
                accum.add_scaled(&grads, 1.0 / batch.len() as f64);
            }
            adam.step(store, &accum.grads);
        }
        let train_loss = epoch_loss / splits.train.len() as f64;

        let mut val_loss = 0.0;
        let mut no_dropout = stream(config.seed, &["val"]);
        for &i in &splits.val {
            let sample = &samples[i];
            let mut sess = Session::new(store);
            let fwd = net.forward(
                &model_config,
                &mut sess,
                sample,
                false,
                &mut no_dropout,
                None,
                None,
            )?;
            let loss = model_config_loss(&model_config, &fwd, sample.label(), &weights)?;
            val_loss += loss.scalar_value();
        }
        val_loss /= splits.val.len().max(1) as f64;
        if !val_loss.is_finite() {
            return Err(Error::Optimization(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }

        let (improved, stop) = stopper.observe(val_loss);
        if improved {
            for (snap, p) in best_params.iter_mut().zip(&store.params) {
                snap.clone_from(&p.value);
            }
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr: config.lr,
            stopped: stop,
        });
        if stop {
            break;
        }
    }

    for (p, snap) in store.params.iter_mut().zip(&best_params) {
        p.value.clone_from(snap);
    }
    Ok(TrainResult {
        history,
        best_epoch: stopper.best_index,
        best_val_loss: stopper.best_loss(),
        class_weights: weights,
    })
}

fn model_config_loss(
    config: &crate::model::ModelConfig,
    fwd: &crate::model::Forward,
    y: f64,
    weights: &ClassWeights,
) -> Result<crate::tensor::Tensor> {
    crate::model::compute_loss(config, fwd, y, weights)
}

/// Deterministic y_model probabilities for the given indices (dropout off).
pub fn predict_scores(model: &Model, samples: &[Sample], idxs: &[usize]) -> Result<Vec<f64>> {
    idxs.iter()
        .map(|&i| Ok(model.predict(&samples[i])?.y_model))
        .collect()
}

/// Threshold maximizing F1 along the validation PR curve; ties break toward
/// the larger threshold. All-equal scores fall back to 0.5 (documented
/// degenerate case).
pub fn tune_threshold(scored: &ScoredSet) -> Result<f64> {
    let n_pos = scored.n_positive();
    if n_pos == 0 || n_pos == scored.len() {
        return Err(Error::Threshold(
            "threshold tuning needs both classes in validation".into(),
        ));
    }
    if scored
        .scores
        .windows(2)
        .all(|w| w[0] == w[1])
    {
        return Ok(0.5);
    }
    let curve = pr_curve(scored)?;
    let mut best_t = curve[0].threshold;
    let mut best_f1 = -1.0;
    // curve is in descending-threshold order; strict improvement keeps the
    // earliest (largest) threshold on ties
    for p in &curve {
        let f1 = if p.precision + p.recall == 0.0 {
            0.0
        } else {
            2.0 * p.precision * p.recall / (p.precision + p.recall)
        };
        if f1 > best_f1 {
            best_f1 = f1;
            best_t = p.threshold;
        }
    }
    Ok(best_t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: Vec<f64>,
}

impl MetricSummary {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let half = if samples.len() < 2 {
            0.0
        } else {
            let var =
                samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            1.96 * (var / n).sqrt()
        };
        MetricSummary {
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
            samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc_roc: MetricSummary,
    pub auc_prc: MetricSummary,
    pub mcc: MetricSummary,
}

/// MC-dropout evaluation: `n_samples` stochastic forward passes with dropout
/// active, each scored on all three metrics; 95% CIs use the normal
/// approximation across passes.
pub fn mc_dropout_eval(
    model: &Model,
    samples: &[Sample],
    idxs: &[usize],
    threshold: f64,
    n_samples: usize,
    seed: u64,
) -> Result<EvalReport> {
    if model.config.architecture == Architecture::RuleBased {
        return Err(Error::Config(
            "MC dropout needs a model with dropout layers".into(),
        ));
    }
    if n_samples < 2 {
        return Err(Error::Param(format!(
            "MC dropout needs at least 2 samples, got {n_samples}"
        )));
    }
    let labels: Vec<u8> = idxs
        .iter()
        .map(|&i| (samples[i].label() >= 0.5) as u8)
        .collect();
    let mut roc = Vec::with_capacity(n_samples);
    let mut prc = Vec::with_capacity(n_samples);
    let mut mccs = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let mut rng = stream(seed, &["mc-dropout", &s.to_string()]);
        let mut scores = Vec::with_capacity(idxs.len());
        for &i in idxs {
            let mut sess = Session::new(&model.store);
            let fwd = model.net.forward(
                &model.config,
                &mut sess,
                &samples[i],
                true,
                &mut rng,
                None,
                None,
            )?;
            scores.push(fwd.outputs().y_model);
        }
        let scored = ScoredSet::new(scores, labels.clone())?;
        roc.push(auc_roc(&scored)?);
        prc.push(auc_prc(&scored)?);
        mccs.push(mcc(&scored, threshold));
    }
    Ok(EvalReport {
        auc_roc: MetricSummary::from_samples(roc),
        auc_prc: MetricSummary::from_samples(prc),
        mcc: MetricSummary::from_samples(mccs),
    })
}
