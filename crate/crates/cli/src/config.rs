//! Flat sectioned key-value experiment configuration. Every key is
//! documented below; unknown sections or keys are hard errors so a typo
//! fails loudly instead of silently running defaults.
//!
//! ```text
//! [simulation]
//! h2 = 0.5                  # heritable liability variance
//! e2 = 0.5                  # noise liability variance
//! beta_age = 0.25
//! beta_sex = 0.25
//! alpha1 = 0.5              # maternal weight, alpha1 + alpha2 = 1
//! alpha2 = 0.5
//! prevalence = 0.05
//! gen_sizes = 1000,1000,1000
//! stabilizer = variance_preserving   # or paper_literal
//! observation_years = 10
//! seed = 0
//!
//! [dataset]
//! edge_mode = all_related   # parent_child | parent_child_target | all_related
//! channels = diagnosis,noise:0.2,status:0.1,parent:mother
//! n_years = 10
//! min_graph_nodes = 3
//!
//! [model]
//! architecture = gnn_lstm   # rule_based | mlp_age_sex | mlp_family_history |
//!                           # lstm_target | lstm_target_history | gnn_static | gnn_lstm
//! gnn = kgnn                # gcn | kgnn
//! pooling = target          # target | mean | sum
//! h_g = 20
//! h_l = 40
//! h_m = 20
//! dropout = 0.5
//! gamma = 1.0
//! alpha = 1.0
//! beta = 1.0
//! delta = 1.0
//! r_weighted = false
//!
//! [train]
//! lr = 0.001
//! batch_size = 250
//! max_epochs = 100
//! patience = 5
//!
//! [split]
//! train_frac = 0.7
//! val_frac = 0.1
//! test_frac = 0.2
//! train_case_fraction = 0.15
//!
//! [eval]
//! mc_samples = 3
//!
//! [sweep]
//! h2 = 0.1,0.3,0.5,0.7
//! seeds = 1,2,3,4,5
//! models = rule_based,mlp_age_sex,mlp_family_history,gnn_static
//!
//! [design]
//! learning_rates = 0.001,0.01
//! seeds = 1,2,3
//!
//! [explain]
//! steps = 200
//! lr = 0.01
//! size_coeff = 0.005
//! entropy_coeff = 0.1
//! max_targets = 50          # cap on explained test targets
//! n_top = 20,50,100         # feature-selection comparison sizes
//! ```

use famrisk::error::{Error, Result};
use famrisk::experiment::{DatasetConfig, RunSettings};
use famrisk::explain::ExplainConfig;
use famrisk::graph::EdgeMode;
use famrisk::layers::PoolMode;
use famrisk::model::{Architecture, GnnKind, ModelConfig};
use famrisk::pedigree::{ChannelSpec, StabilizerMode};

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub settings: RunSettings,
    pub sweep_h2: Vec<f64>,
    pub sweep_seeds: Vec<u64>,
    pub sweep_models: Vec<Architecture>,
    pub design_lrs: Vec<f64>,
    pub design_seeds: Vec<u64>,
    pub explain: ExplainConfig,
    pub explain_max_targets: usize,
    pub n_top: Vec<usize>,
    /// True when the config text contains a [sweep] section; `simulate`
    /// then emits one dataset directory per (h2, seed) pair.
    pub sweep_requested: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            settings: RunSettings::default(),
            sweep_h2: vec![0.1, 0.3, 0.5, 0.7],
            sweep_seeds: vec![1, 2, 3, 4, 5],
            sweep_models: vec![
                Architecture::RuleBased,
                Architecture::MlpAgeSex,
                Architecture::MlpFamilyHistory,
                Architecture::GnnStatic,
            ],
            design_lrs: vec![0.001, 0.01],
            design_seeds: vec![1, 2, 3],
            explain: ExplainConfig::default(),
            explain_max_targets: 50,
            n_top: vec![20, 50, 100],
            sweep_requested: false,
        }
    }
}

fn bad(line_no: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("config line {line_no}: {msg}"))
}

fn parse_num<T: std::str::FromStr>(line_no: usize, key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| bad(line_no, format!("bad value {v:?} for {key}")))
}

fn parse_list<T: std::str::FromStr>(line_no: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|part| parse_num(line_no, key, part))
        .collect()
}

fn parse_bool(line_no: usize, key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(bad(line_no, format!("bad value {other:?} for {key}"))),
    }
}

pub fn parse_architecture(v: &str) -> Option<Architecture> {
    Some(match v.trim() {
        "rule_based" => Architecture::RuleBased,
        "mlp_age_sex" => Architecture::MlpAgeSex,
        "mlp_family_history" => Architecture::MlpFamilyHistory,
        "lstm_target" => Architecture::LstmTarget,
        "lstm_target_history" => Architecture::LstmTargetPlusHistory,
        "gnn_static" => Architecture::GnnStatic,
        "gnn_lstm" => Architecture::GnnLstm,
        _ => return None,
    })
}

fn parse_channel(line_no: usize, part: &str) -> Result<ChannelSpec> {
    let part = part.trim();
    let (kind, arg) = match part.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (part, None),
    };
    match (kind, arg) {
        ("diagnosis", None) => Ok(ChannelSpec::Diagnosis),
        ("noise", Some(rate)) => Ok(ChannelSpec::Noise {
            rate: parse_num(line_no, "channels", rate)?,
        }),
        ("status", Some(p)) => Ok(ChannelSpec::StatusCorrelated {
            flip_prob: parse_num(line_no, "channels", p)?,
        }),
        ("parent", Some("mother")) => Ok(ChannelSpec::ParentStatus { mother: true }),
        ("parent", Some("father")) => Ok(ChannelSpec::ParentStatus { mother: false }),
        _ => Err(bad(line_no, format!("unknown channel spec {part:?}"))),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let no = i + 1;
            let line = match raw.split_once('#') {
                Some((before, _)) => before.trim(),
                None => raw.trim(),
            };
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                if section == "sweep" {
                    config.sweep_requested = true;
                }
                match section.as_str() {
                    "simulation" | "dataset" | "model" | "train" | "split" | "eval"
                    | "sweep" | "design" | "explain" => {}
                    other => return Err(bad(no, format!("unknown section [{other}]"))),
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(no, format!("expected key = value, got {line:?}")))?;
            let (key, v) = (key.trim(), value.trim());
            config.apply(no, &section, key, v)?;
        }
        // re-class validation failures as configuration errors so the CLI
        // reports them with the config-error exit code
        let as_config = |e: Error| Error::Config(e.to_string());
        config.dataset.sim.validate().map_err(as_config)?;
        // dataset dimensions reach the model config at run time; validate
        // with them filled in so recurrent architectures don't false-fail.
        // A recurrent [model] with no channels is only an error if a command
        // actually instantiates it, which Model::new checks.
        let mut model = config.model.clone();
        if model.architecture.uses_longitudinal() {
            model.n_long_features = config.dataset.channels.len().max(1);
            model.n_years = config.dataset.n_years.max(1);
        }
        model.validate().map_err(as_config)?;
        config.settings.split.validate().map_err(as_config)?;
        config.settings.train.validate().map_err(as_config)?;
        config.explain.validate().map_err(as_config)?;
        Ok(config)
    }

    fn apply(&mut self, no: usize, section: &str, key: &str, v: &str) -> Result<()> {
        let sim = &mut self.dataset.sim;
        match (section, key) {
            ("simulation", "h2") => sim.h2 = parse_num(no, key, v)?,
            ("simulation", "e2") => sim.e2 = parse_num(no, key, v)?,
            ("simulation", "beta_age") => sim.beta_age = parse_num(no, key, v)?,
            ("simulation", "beta_sex") => sim.beta_sex = parse_num(no, key, v)?,
            ("simulation", "alpha1") => sim.alpha1 = parse_num(no, key, v)?,
            ("simulation", "alpha2") => sim.alpha2 = parse_num(no, key, v)?,
            ("simulation", "prevalence") => sim.prevalence_k = parse_num(no, key, v)?,
            ("simulation", "gen_sizes") => {
                sim.gen_sizes = parse_list(no, key, v)?;
                sim.n_generations = sim.gen_sizes.len();
            }
            ("simulation", "stabilizer") => {
                sim.stabilizer_mode = match v {
                    "variance_preserving" => StabilizerMode::VariancePreserving,
                    "paper_literal" => StabilizerMode::PaperLiteral,
                    other => return Err(bad(no, format!("unknown stabilizer {other:?}"))),
                }
            }
            ("simulation", "observation_years") => {
                sim.observation_years = parse_num(no, key, v)?
            }
            ("simulation", "seed") => sim.seed = parse_num(no, key, v)?,

            ("dataset", "edge_mode") => {
                self.dataset.edge_mode = match v {
                    "parent_child" => EdgeMode::ParentChild,
                    "parent_child_target" => EdgeMode::ParentChildPlusTarget,
                    "all_related" => EdgeMode::AllRelated,
                    other => return Err(bad(no, format!("unknown edge mode {other:?}"))),
                };
            }
            ("dataset", "channels") => {
                self.dataset.channels = v
                    .split(',')
                    .map(|part| parse_channel(no, part))
                    .collect::<Result<_>>()?;
            }
            ("dataset", "n_years") => self.dataset.n_years = parse_num(no, key, v)?,
            ("dataset", "min_graph_nodes") => {
                self.dataset.min_graph_nodes = parse_num(no, key, v)?
            }

            ("model", "architecture") => {
                self.model.architecture = parse_architecture(v)
                    .ok_or_else(|| bad(no, format!("unknown architecture {v:?}")))?;
            }
            ("model", "gnn") => {
                self.model.gnn_kind = match v {
                    "gcn" => GnnKind::Gcn,
                    "kgnn" => GnnKind::Kgnn,
                    other => return Err(bad(no, format!("unknown gnn kind {other:?}"))),
                };
            }
            ("model", "pooling") => {
                self.model.pooling = match v {
                    "target" => PoolMode::Target,
                    "mean" => PoolMode::Mean,
                    "sum" => PoolMode::Sum,
                    other => return Err(bad(no, format!("unknown pooling {other:?}"))),
                };
            }
            ("model", "h_g") => self.model.h_g = parse_num(no, key, v)?,
            ("model", "h_l") => self.model.h_l = parse_num(no, key, v)?,
            ("model", "h_m") => self.model.h_m = parse_num(no, key, v)?,
            ("model", "dropout") => self.model.dropout = parse_num(no, key, v)?,
            ("model", "gamma") => self.model.gamma = parse_num(no, key, v)?,
            ("model", "alpha") => self.model.alpha = parse_num(no, key, v)?,
            ("model", "beta") => self.model.beta = parse_num(no, key, v)?,
            ("model", "delta") => self.model.delta = parse_num(no, key, v)?,
            ("model", "r_weighted") => self.model.r_weighted = parse_bool(no, key, v)?,

            ("train", "lr") => self.settings.train.lr = parse_num(no, key, v)?,
            ("train", "batch_size") => self.settings.train.batch_size = parse_num(no, key, v)?,
            ("train", "max_epochs") => self.settings.train.max_epochs = parse_num(no, key, v)?,
            ("train", "patience") => self.settings.train.patience = parse_num(no, key, v)?,

            ("split", "train_frac") => self.settings.split.train_frac = parse_num(no, key, v)?,
            ("split", "val_frac") => self.settings.split.val_frac = parse_num(no, key, v)?,
            ("split", "test_frac") => self.settings.split.test_frac = parse_num(no, key, v)?,
            ("split", "train_case_fraction") => {
                self.settings.split.train_case_fraction = parse_num(no, key, v)?
            }

            ("eval", "mc_samples") => self.settings.mc_samples = parse_num(no, key, v)?,

            ("sweep", "h2") => self.sweep_h2 = parse_list(no, key, v)?,
            ("sweep", "seeds") => self.sweep_seeds = parse_list(no, key, v)?,
            ("sweep", "models") => {
                self.sweep_models = v
                    .split(',')
                    .map(|part| {
                        parse_architecture(part)
                            .ok_or_else(|| bad(no, format!("unknown architecture {part:?}")))
                    })
                    .collect::<Result<_>>()?;
            }

            ("design", "learning_rates") => self.design_lrs = parse_list(no, key, v)?,
            ("design", "seeds") => self.design_seeds = parse_list(no, key, v)?,

            ("explain", "steps") => self.explain.steps = parse_num(no, key, v)?,
            ("explain", "lr") => self.explain.lr = parse_num(no, key, v)?,
            ("explain", "size_coeff") => self.explain.size_coeff = parse_num(no, key, v)?,
            ("explain", "entropy_coeff") => {
                self.explain.entropy_coeff = parse_num(no, key, v)?
            }
            ("explain", "max_targets") => self.explain_max_targets = parse_num(no, key, v)?,
            ("explain", "n_top") => self.n_top = parse_list(no, key, v)?,

            ("", k) => return Err(bad(no, format!("key {k:?} outside any section"))),
            (s, k) => return Err(bad(no, format!("unknown key {k:?} in section [{s}]"))),
        }
        Ok(())
    }

    /// Propagate one root seed into every seeded component.
    pub fn override_seed(&mut self, seed: u64) {
        self.dataset.sim.seed = seed;
        self.settings.seed = seed;
        self.settings.split.seed = seed;
        self.settings.train.seed = seed;
        self.explain.seed = seed;
    }
}
