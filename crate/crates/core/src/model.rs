//! Risk models: the multi-head GNN-LSTM, its static-GNN variant, the tabular
//! and sequence baselines, the rule-based screen, and a logistic-regression
//! fitter on the shared autodiff core.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeMode, FamilyGraph, HISTORY_TYPES};
use crate::layers::{
    pool, Activation, BiLstm, Dense, GcnLayer, GraphEdges, KgnnLayer, Mlp, PoolMode,
};
use crate::params::{ParamStore, Session};
use crate::rng::stream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// Positive iff any relative has disease history.
    RuleBased,
    /// MLP on target age and sex only.
    MlpAgeSex,
    /// MLP on the flat family-history vector.
    MlpFamilyHistory,
    /// BiLSTM over the target's longitudinal tracks plus target statics.
    LstmTarget,
    /// As LstmTarget, with the family-history vector appended.
    LstmTargetPlusHistory,
    /// Graph convolutions over static node features; no recurrent parts.
    GnnStatic,
    /// Full multi-head model: per-node BiLSTMs feeding graph convolutions,
    /// plus a separate target branch.
    GnnLstm,
}

impl Architecture {
    pub fn uses_graph(&self) -> bool {
        matches!(self, Architecture::GnnStatic | Architecture::GnnLstm)
    }

    pub fn uses_longitudinal(&self) -> bool {
        matches!(
            self,
            Architecture::LstmTarget | Architecture::LstmTargetPlusHistory | Architecture::GnnLstm
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::RuleBased => "rule_based",
            Architecture::MlpAgeSex => "mlp_age_sex",
            Architecture::MlpFamilyHistory => "mlp_family_history",
            Architecture::LstmTarget => "lstm_target",
            Architecture::LstmTargetPlusHistory => "lstm_target_history",
            Architecture::GnnStatic => "gnn_static",
            Architecture::GnnLstm => "gnn_lstm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GnnKind {
    Gcn,
    Kgnn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub gnn_kind: GnnKind,
    pub pooling: PoolMode,
    pub edge_mode: EdgeMode,
    /// Graph-convolution width.
    pub h_g: usize,
    /// BiLSTM embedding width (split across the two directions).
    pub h_l: usize,
    /// Dense-stack width.
    pub h_m: usize,
    pub dropout: f64,
    /// Loss weights for the y_model / y_target / y_family / y_family_lstm
    /// heads respectively.
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub threshold: f64,
    /// Scale k-GNN neighbor messages by the coefficient of relationship.
    pub r_weighted: bool,
    pub n_long_features: usize,
    pub n_years: usize,
    pub n_static: usize,
    pub history_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: Architecture::GnnLstm,
            gnn_kind: GnnKind::Kgnn,
            pooling: PoolMode::Target,
            edge_mode: EdgeMode::AllRelated,
            h_g: 20,
            h_l: 40,
            h_m: 20,
            dropout: 0.5,
            gamma: 1.0,
            alpha: 1.0,
            beta: 1.0,
            delta: 1.0,
            threshold: 0.5,
            r_weighted: false,
            n_long_features: 0,
            n_years: 0,
            n_static: 2,
            history_dim: crate::graph::FAMILY_HISTORY_DIM,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0,1), got {}",
                self.dropout
            )));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("loss weight {name} must be finite")));
            }
        }
        if self.h_l % 2 != 0 {
            return Err(Error::Config(format!(
                "recurrent width must be even, got {}",
                self.h_l
            )));
        }
        if self.h_g == 0 || self.h_l == 0 || self.h_m == 0 {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        if self.architecture.uses_longitudinal()
            && (self.n_long_features == 0 || self.n_years == 0)
        {
            return Err(Error::Config(format!(
                "{} requires longitudinal inputs (n_long_features and n_years set)",
                self.architecture.name()
            )));
        }
        Ok(())
    }
}

/// Class weights w = N / n_class computed from the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w_case: f64,
    pub w_control: f64,
}

impl ClassWeights {
    pub fn from_counts(n_cases: usize, n_controls: usize) -> Result<Self> {
        if n_cases == 0 || n_controls == 0 {
            return Err(Error::Param(
                "class weights need both classes in the training split".into(),
            ));
        }
        let n = (n_cases + n_controls) as f64;
        Ok(ClassWeights {
            w_case: n / n_cases as f64,
            w_control: n / n_controls as f64,
        })
    }

    pub fn unit() -> Self {
        ClassWeights {
            w_case: 1.0,
            w_control: 1.0,
        }
    }

    pub fn weight(&self, y: f64) -> f64 {
        if y >= 0.5 {
            self.w_case
        } else {
            self.w_control
        }
    }
}

/// One training/evaluation example: the family graph plus the flat
/// family-history vector for tabular baselines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    pub graph: FamilyGraph,
    pub history: Vec<f64>,
}

impl Sample {
    pub fn label(&self) -> f64 {
        self.graph.y
    }
}

/// Head logits (tape tensors) from one forward pass; `None` where the
/// architecture has no such head.
pub struct Forward {
    pub y_model: Tensor,
    pub y_target: Option<Tensor>,
    pub y_family: Option<Tensor>,
    pub y_family_lstm: Option<Tensor>,
    /// Post-convolution node embeddings `[N, h_g]`, for explainability.
    pub node_embeddings: Option<Tensor>,
}

/// Detached head probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutputs {
    pub y_model: f64,
    pub y_target: Option<f64>,
    pub y_family: Option<f64>,
    pub y_family_lstm: Option<f64>,
}

impl Forward {
    pub fn outputs(&self) -> ModelOutputs {
        let p = |t: &Tensor| t.sigmoid().scalar_value();
        ModelOutputs {
            y_model: p(&self.y_model),
            y_target: self.y_target.as_ref().map(p),
            y_family: self.y_family.as_ref().map(p),
            y_family_lstm: self.y_family_lstm.as_ref().map(p),
        }
    }
}

#[derive(Debug, Clone)]
enum ConvLayer {
    Gcn(GcnLayer),
    Kgnn(KgnnLayer),
}

impl ConvLayer {
    fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        kind: GnnKind,
        in_dim: usize,
        out_dim: usize,
        r_weighted: bool,
        rng: &mut R,
    ) -> Self {
        match kind {
            GnnKind::Gcn => ConvLayer::Gcn(GcnLayer::new(store, name, in_dim, out_dim, rng)),
            GnnKind::Kgnn => {
                ConvLayer::Kgnn(KgnnLayer::new(store, name, in_dim, out_dim, r_weighted, rng))
            }
        }
    }

    fn forward(
        &self,
        sess: &mut Session,
        x: &Tensor,
        edges: &GraphEdges,
        act: Activation,
        node_mask: Option<&Tensor>,
    ) -> Result<Tensor> {
        match self {
            ConvLayer::Gcn(l) => l.forward(sess, x, edges, act, node_mask),
            ConvLayer::Kgnn(l) => l.forward(sess, x, edges, act, node_mask),
        }
    }
}

/// Layer composition for one architecture; parameters live in the companion
/// [`ParamStore`] so the two can be borrowed independently.
#[derive(Debug, Clone, Default)]
pub struct Net {
    target_lstm: Option<BiLstm>,
    node_lstm: Option<BiLstm>,
    family_lstm_head: Option<Dense>,
    conv1: Option<ConvLayer>,
    conv2: Option<ConvLayer>,
    family_head: Option<Dense>,
    target_mlp: Option<Mlp>,
    target_head: Option<Dense>,
    final_mlp: Option<Mlp>,
    final_head: Option<Dense>,
    tabular_mlp: Option<Mlp>,
}

impl Net {
    fn build<R: Rng>(config: &ModelConfig, store: &mut ParamStore, rng: &mut R) -> Result<Net> {
        config.validate()?;
        let mut net = Net::default();
        let (hg, hl, hm) = (config.h_g, config.h_l, config.h_m);
        let f = config.n_long_features;
        match config.architecture {
            Architecture::RuleBased => {}
            Architecture::MlpAgeSex => {
                net.tabular_mlp = Some(Mlp::new(
                    store,
                    "tabular",
                    config.n_static,
                    hm,
                    1,
                    config.dropout,
                    rng,
                ));
            }
            Architecture::MlpFamilyHistory => {
                net.tabular_mlp = Some(Mlp::new(
                    store,
                    "tabular",
                    config.history_dim,
                    hm,
                    1,
                    config.dropout,
                    rng,
                ));
            }
            Architecture::LstmTarget | Architecture::LstmTargetPlusHistory => {
                net.target_lstm = Some(BiLstm::new(store, "target_lstm", f, hl, rng));
                let extra = if config.architecture == Architecture::LstmTargetPlusHistory {
                    config.history_dim
                } else {
                    0
                };
                net.target_mlp = Some(Mlp::new(
                    store,
                    "target_mlp",
                    hl + config.n_static + extra,
                    hm,
                    hm,
                    config.dropout,
                    rng,
                ));
                net.target_head = Some(Dense::new(store, "target_head", hm, 1, rng));
            }
            Architecture::GnnStatic => {
                net.conv1 = Some(ConvLayer::new(
                    store,
                    "conv1",
                    config.gnn_kind,
                    config.n_static,
                    hg,
                    config.r_weighted,
                    rng,
                ));
                net.conv2 = Some(ConvLayer::new(
                    store,
                    "conv2",
                    config.gnn_kind,
                    hg,
                    hg,
                    config.r_weighted,
                    rng,
                ));
                net.final_mlp = Some(Mlp::new(store, "final_mlp", hg, hm, hm, config.dropout, rng));
                net.final_head = Some(Dense::new(store, "final_head", hm, 1, rng));
            }
            Architecture::GnnLstm => {
                net.node_lstm = Some(BiLstm::new(store, "node_lstm", f, hl, rng));
                net.family_lstm_head = Some(Dense::new(store, "family_lstm_head", hl, 1, rng));
                net.conv1 = Some(ConvLayer::new(
                    store,
                    "conv1",
                    config.gnn_kind,
                    hl + config.n_static,
                    hg,
                    config.r_weighted,
                    rng,
                ));
                net.conv2 = Some(ConvLayer::new(
                    store,
                    "conv2",
                    config.gnn_kind,
                    hg,
                    hg,
                    config.r_weighted,
                    rng,
                ));
                net.family_head = Some(Dense::new(store, "family_head", hg, 1, rng));
                net.target_lstm = Some(BiLstm::new(store, "target_lstm", f, hl, rng));
                net.target_mlp = Some(Mlp::new(
                    store,
                    "target_mlp",
                    hl + config.n_static,
                    hm,
                    hm,
                    config.dropout,
                    rng,
                ));
                net.target_head = Some(Dense::new(store, "target_head", hm, 1, rng));
                net.final_mlp = Some(Mlp::new(
                    store,
                    "final_mlp",
                    hg + hm,
                    hm,
                    hm,
                    config.dropout,
                    rng,
                ));
                net.final_head = Some(Dense::new(store, "final_head", hm, 1, rng));
            }
        }
        Ok(net)
    }

    /// Full forward pass. `node_mask` (`[N, 1]`) scales node contributions in
    /// every graph convolution and the recurrent family head; `feature_mask`
    /// scales the node input features — `[N, T*F]` time-major over the
    /// longitudinal tracks for recurrent architectures, `[N, n_static]` for
    /// the static GNN.
    pub fn forward<R: Rng>(
        &self,
        config: &ModelConfig,
        sess: &mut Session,
        sample: &Sample,
        train: bool,
        rng: &mut R,
        node_mask: Option<&Tensor>,
        feature_mask: Option<&Tensor>,
    ) -> Result<Forward> {
        let graph = &sample.graph;
        match config.architecture {
            Architecture::RuleBased => Err(Error::Config(
                "the rule-based screen has no differentiable forward pass".into(),
            )),
            Architecture::MlpAgeSex => {
                let x = sess.input(graph.node_static[0].clone(), &[config.n_static]);
                let logit = self.tabular_mlp.as_ref().unwrap().forward(sess, &x, train, rng)?;
                Ok(single_head(logit))
            }
            Architecture::MlpFamilyHistory => {
                if sample.history.len() != config.history_dim {
                    return Err(Error::Shape {
                        expected: vec![config.history_dim],
                        got: vec![sample.history.len()],
                        context: "family-history vector".into(),
                    });
                }
                let x = sess.input(sample.history.clone(), &[config.history_dim]);
                let logit = self.tabular_mlp.as_ref().unwrap().forward(sess, &x, train, rng)?;
                Ok(single_head(logit))
            }
            Architecture::LstmTarget | Architecture::LstmTargetPlusHistory => {
                let seq = self.target_sequence(config, sess, graph, feature_mask)?;
                let emb = self.target_lstm.as_ref().unwrap().forward(sess, &seq)?;
                let stat = sess.input(graph.node_static[0].clone(), &[config.n_static]);
                let mut parts = vec![emb, stat];
                if config.architecture == Architecture::LstmTargetPlusHistory {
                    parts.push(sess.input(sample.history.clone(), &[config.history_dim]));
                }
                let refs: Vec<&Tensor> = parts.iter().collect();
                let joined = Tensor::concat(&refs, 0)?;
                let e = self
                    .target_mlp
                    .as_ref()
                    .unwrap()
                    .forward(sess, &joined, train, rng)?
                    .relu();
                let logit = self.target_head.as_ref().unwrap().forward(sess, &e)?;
                Ok(single_head(logit))
            }
            Architecture::GnnStatic => {
                let n = graph.n_nodes();
                let flat: Vec<f64> = graph.node_static.iter().flatten().copied().collect();
                let mut x = sess.input(flat, &[n, config.n_static]);
                // for the static architecture the feature mask covers the
                // static node features ([N, n_static])
                if let Some(m) = feature_mask {
                    x = m.mul(&x)?;
                }
                let edges = graph_edges(graph);
                let h = self.conv1.as_ref().unwrap().forward(
                    sess,
                    &x,
                    &edges,
                    Activation::Relu,
                    node_mask,
                )?;
                let h = self.conv2.as_ref().unwrap().forward(
                    sess,
                    &h,
                    &edges,
                    Activation::Relu,
                    node_mask,
                )?;
                let g = pool(&h, config.pooling, 0)?;
                let e = self
                    .final_mlp
                    .as_ref()
                    .unwrap()
                    .forward(sess, &g, train, rng)?
                    .relu();
                let logit = self.final_head.as_ref().unwrap().forward(sess, &e)?;
                Ok(Forward {
                    y_model: logit,
                    y_target: None,
                    y_family: None,
                    y_family_lstm: None,
                    node_embeddings: Some(h),
                })
            }
            Architecture::GnnLstm => {
                let n = graph.n_nodes();
                if graph.n_years != config.n_years
                    || graph.n_long_features != config.n_long_features
                {
                    return Err(Error::Config(format!(
                        "graph carries {}x{} longitudinal tracks, model expects {}x{}",
                        graph.n_long_features, graph.n_years, config.n_long_features,
                        config.n_years
                    )));
                }
                // per-node recurrent embeddings
                let node_lstm = self.node_lstm.as_ref().unwrap();
                let mut node_rows = Vec::with_capacity(n);
                for i in 0..n {
                    let seq = self.node_sequence(config, sess, graph, i, feature_mask)?;
                    let emb = node_lstm.forward(sess, &seq)?;
                    node_rows.push(emb.reshape(&[1, config.h_l])?);
                }
                let row_refs: Vec<&Tensor> = node_rows.iter().collect();
                let lstm_embs = Tensor::concat(&row_refs, 0)?; // [N, h_l]

                // recurrent family head: (masked) mean of node embeddings
                let masked_embs = match node_mask {
                    Some(m) => m.mul(&lstm_embs)?,
                    None => lstm_embs.clone(),
                };
                let lstm_pooled = masked_embs.mean_rows()?.reshape(&[config.h_l])?;
                let y_family_lstm = self
                    .family_lstm_head
                    .as_ref()
                    .unwrap()
                    .forward(sess, &lstm_pooled)?;

                // graph branch over [lstm embedding | static] node features
                let flat: Vec<f64> = graph.node_static.iter().flatten().copied().collect();
                let statics = sess.input(flat, &[n, config.n_static]);
                let x = Tensor::concat(&[&lstm_embs, &statics], 1)?;
                let edges = graph_edges(graph);
                let h = self.conv1.as_ref().unwrap().forward(
                    sess,
                    &x,
                    &edges,
                    Activation::Relu,
                    node_mask,
                )?;
                let h = self.conv2.as_ref().unwrap().forward(
                    sess,
                    &h,
                    &edges,
                    Activation::Relu,
                    node_mask,
                )?;
                let g = pool(&h, config.pooling, 0)?;
                let y_family = self.family_head.as_ref().unwrap().forward(sess, &g)?;

                // target branch
                let seq = self.target_sequence(config, sess, graph, feature_mask)?;
                let emb = self.target_lstm.as_ref().unwrap().forward(sess, &seq)?;
                let stat = sess.input(graph.node_static[0].clone(), &[config.n_static]);
                let joined = Tensor::concat(&[&emb, &stat], 0)?;
                let e_target = self
                    .target_mlp
                    .as_ref()
                    .unwrap()
                    .forward(sess, &joined, train, rng)?
                    .relu();
                let y_target = self.target_head.as_ref().unwrap().forward(sess, &e_target)?;

                // fused head
                let fused = Tensor::concat(&[&e_target, &g], 0)?;
                let e = self
                    .final_mlp
                    .as_ref()
                    .unwrap()
                    .forward(sess, &fused, train, rng)?
                    .relu();
                let y_model = self.final_head.as_ref().unwrap().forward(sess, &e)?;

                Ok(Forward {
                    y_model,
                    y_target: Some(y_target),
                    y_family: Some(y_family),
                    y_family_lstm: Some(y_family_lstm),
                    node_embeddings: Some(h),
                })
            }
        }
    }

    fn target_sequence(
        &self,
        config: &ModelConfig,
        sess: &mut Session,
        graph: &FamilyGraph,
        feature_mask: Option<&Tensor>,
    ) -> Result<Tensor> {
        self.node_sequence(config, sess, graph, 0, feature_mask)
    }

    /// Time-major `[T, F]` sequence for node `i`, with the per-node feature
    /// mask row applied when present.
    fn node_sequence(
        &self,
        config: &ModelConfig,
        sess: &mut Session,
        graph: &FamilyGraph,
        i: usize,
        feature_mask: Option<&Tensor>,
    ) -> Result<Tensor> {
        let (f, t) = (config.n_long_features, config.n_years);
        if graph.node_long.is_empty() {
            return Err(Error::Config(
                "architecture requires longitudinal tracks but the graph has none".into(),
            ));
        }
        let track = &graph.node_long[i]; // feature-major [F*T]
        let mut data = Vec::with_capacity(f * t);
        for year in 0..t {
            for feat in 0..f {
                data.push(track[feat * t + year]);
            }
        }
        let seq = sess.input(data, &[t, f]);
        match feature_mask {
            Some(m) => {
                let row = m.row(i)?.reshape(&[t, f])?;
                seq.mul(&row)
            }
            None => Ok(seq),
        }
    }
}

fn single_head(logit: Tensor) -> Forward {
    Forward {
        y_model: logit,
        y_target: None,
        y_family: None,
        y_family_lstm: None,
        node_embeddings: None,
    }
}

/// Undirected edge list with kinship weights for the layer stack.
pub fn graph_edges(graph: &FamilyGraph) -> GraphEdges {
    let pairs = graph
        .edges
        .iter()
        .zip(&graph.edge_features)
        .filter(|(&(u, v), _)| u < v)
        .map(|(&(u, v), feat)| (u, v, feat[0]))
        .collect();
    GraphEdges {
        n_nodes: graph.n_nodes(),
        pairs,
    }
}

/// Weighted multi-head BCE:
/// gamma*L_model + alpha*L_target + beta*L_family + delta*L_family_lstm,
/// each head weighted by the class weight of the true label. Heads absent in
/// the architecture contribute zero.
pub fn compute_loss(
    config: &ModelConfig,
    fwd: &Forward,
    y: f64,
    weights: &ClassWeights,
) -> Result<Tensor> {
    let w = weights.weight(y);
    let mut terms: Vec<Tensor> = Vec::new();
    let heads = [
        ("y_model", Some(&fwd.y_model), config.gamma),
        ("y_target", fwd.y_target.as_ref(), config.alpha),
        ("y_family", fwd.y_family.as_ref(), config.beta),
        ("y_family_lstm", fwd.y_family_lstm.as_ref(), config.delta),
    ];
    for (name, logit, coeff) in heads {
        let Some(logit) = logit else { continue };
        if coeff == 0.0 {
            continue;
        }
        let term = logit.bce_with_logits(&[y], &[w])?.scale(coeff);
        if !term.scalar_value().is_finite() {
            return Err(Error::Numeric(format!("non-finite loss in head {name}")));
        }
        terms.push(term);
    }
    let mut total = terms[0].clone();
    for t in &terms[1..] {
        total = total.add(t)?;
    }
    Ok(total)
}

/// Rule-based screen: positive iff any relative-type history bit is set.
/// Availability bits are ignored.
pub fn predict_rule_based(history: &[f64]) -> u8 {
    history
        .iter()
        .take(HISTORY_TYPES.len())
        .any(|&b| b >= 0.5) as u8
}

pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub net: Net,
    pub init_seed: u64,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model> {
        let mut store = ParamStore::new();
        let mut rng = stream(seed, &["model-init", config.architecture.name()]);
        let net = Net::build(&config, &mut store, &mut rng)?;
        Ok(Model {
            config,
            store,
            net,
            init_seed: seed,
        })
    }

    pub fn forward<R: Rng>(
        &self,
        sess: &mut Session,
        sample: &Sample,
        train: bool,
        rng: &mut R,
    ) -> Result<Forward> {
        self.net
            .forward(&self.config, sess, sample, train, rng, None, None)
    }

    /// Deterministic inference probabilities (dropout off).
    pub fn predict(&self, sample: &Sample) -> Result<ModelOutputs> {
        let mut sess = Session::new(&self.store);
        let mut rng = stream(0, &["inference"]);
        let fwd = self.forward(&mut sess, sample, false, &mut rng)?;
        Ok(fwd.outputs())
    }

    pub fn compute_loss(&self, fwd: &Forward, y: f64, weights: &ClassWeights) -> Result<Tensor> {
        compute_loss(&self.config, fwd, y, weights)
    }

    pub fn to_archive(&self) -> Archive {
        Archive {
            version: ARCHIVE_VERSION,
            config: self.config.clone(),
            seed: self.init_seed,
            params: self
                .store
                .params
                .iter()
                .map(|p| ArchiveParam {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    value: p.value.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_archive()).expect("archive serializes")
    }

    pub fn from_archive(archive: Archive) -> Result<Model> {
        if archive.version != ARCHIVE_VERSION {
            return Err(Error::Archive(format!(
                "unsupported archive version {}",
                archive.version
            )));
        }
        let mut model = Model::new(archive.config, archive.seed)?;
        if archive.params.len() != model.store.params.len() {
            return Err(Error::Archive(format!(
                "archive has {} parameters, architecture defines {}",
                archive.params.len(),
                model.store.params.len()
            )));
        }
        for rec in archive.params {
            let id = model.store.by_name(&rec.name).ok_or_else(|| {
                Error::Archive(format!("unknown parameter {} in archive", rec.name))
            })?;
            let p = &mut model.store.params[id];
            if p.shape != rec.shape || rec.value.len() != p.value.len() {
                return Err(Error::Archive(format!(
                    "shape mismatch for {}: archive {:?}, architecture {:?}",
                    rec.name, rec.shape, p.shape
                )));
            }
            p.value = rec.value;
        }
        Ok(model)
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let archive: Archive = serde_json::from_str(text)
            .map_err(|e| Error::Archive(format!("unparseable archive: {e}")))?;
        Model::from_archive(archive)
    }

    /// Load with an architecture guard.
    pub fn from_json_expecting(text: &str, expected: Architecture) -> Result<Model> {
        let model = Model::from_json(text)?;
        if model.config.architecture != expected {
            return Err(Error::Config(format!(
                "archive holds a {} model, expected {}",
                model.config.architecture.name(),
                expected.name()
            )));
        }
        Ok(model)
    }
}

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Archive {
    pub version: u32,
    pub config: ModelConfig,
    pub seed: u64,
    pub params: Vec<ArchiveParam>,
}

/// L2-penalized logistic regression trained with Adam on the autodiff core.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
}

impl LogisticFit {
    /// Feature indices sorted by decreasing |coefficient|.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.weights.len()).collect();
        idx.sort_by(|&a, &b| {
            self.weights[b]
                .abs()
                .total_cmp(&self.weights[a].abs())
                .then(a.cmp(&b))
        });
        idx
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let z: f64 =
            self.intercept + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>();
        1.0 / (1.0 + (-z).exp())
    }
}

/// Fit by full-batch Adam; stops early when the gradient max-norm drops below
/// 1e-5, otherwise returns the last iterate with `converged = false`.
pub fn logistic_regression_fit(
    x: &[Vec<f64>],
    y: &[u8],
    l2: f64,
    max_iters: usize,
    lr: f64,
) -> Result<LogisticFit> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Param(format!(
            "{} feature rows vs {} labels",
            x.len(),
            y.len()
        )));
    }
    if l2 < 0.0 {
        return Err(Error::Param("l2 penalty must be non-negative".into()));
    }
    let d = x[0].len();
    if x.iter().any(|row| row.len() != d) {
        return Err(Error::Param("ragged feature matrix".into()));
    }
    let n = x.len();
    let flat: Vec<f64> = x.iter().flatten().copied().collect();
    let targets: Vec<f64> = y.iter().map(|&l| l as f64).collect();
    let unit = vec![1.0; n];

    let mut store = ParamStore::new();
    let w = store.add_zeros("w", &[d, 1]);
    let b = store.add_zeros("b", &[1]);
    let mut adam = crate::params::Adam::new(lr, 0.9, 0.999, &store);
    let mut converged = false;
    for _ in 0..max_iters {
        let mut sess = Session::new(&store);
        let xs = sess.input(flat.clone(), &[n, d]);
        let wt = sess.param(w);
        let bt = sess.param(b);
        let logits = xs.matmul(&wt)?.reshape(&[n])?.add(&bt)?;
        let mut loss = logits.bce_with_logits(&targets, &unit)?;
        if l2 > 0.0 {
            loss = loss.add(&wt.mul(&wt)?.sum_all().scale(l2))?;
        }
        let grads = sess.grads(&loss)?;
        drop(sess);
        let gmax = grads
            .iter()
            .flatten()
            .fold(0.0f64, |acc, g| acc.max(g.abs()));
        if gmax < 1e-5 {
            converged = true;
            break;
        }
        adam.step(&mut store, &grads);
    }
    Ok(LogisticFit {
        weights: store.params[w].value.clone(),
        intercept: store.params[b].value[0],
        converged,
    })
}
