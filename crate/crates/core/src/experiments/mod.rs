//! Experiment configs, multi-seed runs, robustness and ablation sweeps.

mod stats;
mod sweeps;
mod synth;
mod table;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NgnnError, Result};
use crate::graph::{perturb_edges, perturb_features_add, perturb_features_concat, LinkDataset, NodeDataset, PerturbMode, PerturbSpec};
use crate::model::{build_model, LayerParams, ModelConfig, NgnnPosition};
use crate::rng::{stream, streams};
use crate::train::{config_hash, mean_std, train_link_predictor, train_node_classifier, RunResult, TrainConfig};

pub use stats::{paired_smaller, sign_test_p, PairedComparison};
pub use sweeps::{depth_sweep, edge_noise_sweep, noise_sweep, position_sweep};
pub use synth::{generate_sbm, generate_sbm_links, LinkSplitSpec, SbmSpec};
pub use table::{GapRow, ResultRow, ResultTable, SweepValue, DESK_SCALE_CAVEAT};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    NodeClass,
    LinkPred,
}

/// The single axis a sweep command varies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum Sweep {
    FeatureAdd { sigmas: Vec<f64> },
    FeatureConcat { sigmas: Vec<f64> },
    EdgeNoise { ratios: Vec<f64> },
    /// NGNN depths `k` (0 = vanilla) crossed with hidden widths; an empty
    /// width list means the model's own width.
    NgnnDepth {
        depths: Vec<usize>,
        #[serde(default)]
        hidden: Vec<usize>,
    },
    /// An empty list means all five positions.
    Position {
        #[serde(default)]
        positions: Vec<NgnnPosition>,
    },
}

impl Sweep {
    pub fn axis(&self) -> &'static str {
        match self {
            Sweep::FeatureAdd { .. } => "feature_add",
            Sweep::FeatureConcat { .. } => "feature_concat",
            Sweep::EdgeNoise { .. } => "edge_noise",
            Sweep::NgnnDepth { .. } => "ngnn_depth",
            Sweep::Position { .. } => "position",
        }
    }

    fn validate(&self) -> Result<()> {
        let levels = match self {
            Sweep::FeatureAdd { sigmas } | Sweep::FeatureConcat { sigmas } => sigmas,
            Sweep::EdgeNoise { ratios } => ratios,
            Sweep::NgnnDepth { depths, hidden } => {
                if depths.is_empty() || hidden.contains(&0) {
                    return Err(NgnnError::Config("ngnn_depth sweep needs depths and positive widths".into()));
                }
                return Ok(());
            }
            Sweep::Position { .. } => return Ok(()),
        };
        if levels.is_empty() || levels.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(NgnnError::Config(format!(
                "{} sweep needs a non-empty list of finite values >= 0",
                self.axis()
            )));
        }
        Ok(())
    }
}

/// Model variants compared by the noise sweeps. Each starts from the
/// configured model with its NGNN blocks removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    DoubleWidth,
    ExtraLayer,
    Ngnn1,
    Ngnn2,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::DoubleWidth,
        Variant::ExtraLayer,
        Variant::Ngnn1,
        Variant::Ngnn2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::DoubleWidth => "double_width",
            Variant::ExtraLayer => "extra_layer",
            Variant::Ngnn1 => "ngnn1",
            Variant::Ngnn2 => "ngnn2",
        }
    }

    /// `ngnn1`/`ngnn2` attach `1-relu`/`2-relu` blocks to the hidden layers
    /// and need at least one hidden layer.
    pub fn apply(self, base: &ModelConfig) -> Result<ModelConfig> {
        let vanilla = base.clone().with_ngnn(NgnnPosition::None, "");
        let ngnn = |spec: &str| {
            if base.num_layers < 3 {
                return Err(NgnnError::Config(format!(
                    "variant {} needs a hidden GNN layer (num_layers >= 3)",
                    self.name()
                )));
            }
            Ok(vanilla.clone().with_ngnn(NgnnPosition::Hidden, spec))
        };
        match self {
            Variant::Baseline => Ok(vanilla),
            Variant::DoubleWidth => Ok(ModelConfig {
                hidden_dim: 2 * base.hidden_dim,
                ..vanilla
            }),
            Variant::ExtraLayer => Ok(vanilla.clone().with_layers(base.num_layers + 1)),
            Variant::Ngnn1 => ngnn("1-relu"),
            Variant::Ngnn2 => ngnn("2-relu"),
        }
    }
}

fn default_runs() -> usize {
    10
}

fn default_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}

/// One JSON experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset directory; relative paths are resolved against the config
    /// file's directory.
    pub dataset: PathBuf,
    #[serde(default)]
    pub task: Task,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Run `i` uses seed `seed + i`; overrides `train.seed`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| NgnnError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if cfg.dataset.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.dataset = dir.join(&cfg.dataset);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(NgnnError::Config("runs must be >= 1".into()));
        }
        if self.variants.is_empty() {
            return Err(NgnnError::Config("variants must not be empty".into()));
        }
        self.model
            .ngnn_activations()
            .map_err(|e| NgnnError::Config(format!("model.ngnn_spec: {e}")))?;
        self.train
            .validate(self.model.num_layers)
            .map_err(|e| NgnnError::Config(format!("train: {e}")))?;
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|i| self.seed + i).collect()
    }
}

/// A loaded dataset of either task.
#[derive(Clone, Debug, PartialEq)]
pub enum Data {
    Node(NodeDataset),
    Link(LinkDataset),
}

impl Data {
    pub fn load(task: Task, dir: &Path) -> Result<Self> {
        Ok(match task {
            Task::NodeClass => Data::Node(NodeDataset::load(dir)?),
            Task::LinkPred => Data::Link(LinkDataset::load(dir)?),
        })
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Data::Node(d) => d.feature_dim(),
            Data::Link(d) => d.features.cols(),
        }
    }

    pub fn num_undirected_edges(&self) -> usize {
        match self {
            Data::Node(d) => d.graph.num_undirected_edges(),
            Data::Link(d) => d.graph.num_undirected_edges(),
        }
    }

    /// Applies a perturbation with the noise streams of `seed`. For link
    /// data the training graph receives the edge noise.
    pub fn perturb(&self, mode: PerturbMode, seed: u64) -> Result<Data> {
        match self {
            Data::Node(d) => PerturbSpec { mode, seed }.apply(d).map(Data::Node),
            Data::Link(d) => {
                let mut out = d.clone();
                match mode {
                    PerturbMode::FeatureConcat { sigma } => {
                        let mut rng = stream(seed, streams::FEATURE_NOISE);
                        out.features = perturb_features_concat(&d.features, sigma, &mut rng)?;
                    }
                    PerturbMode::FeatureAdd { sigma } => {
                        let mut rng = stream(seed, streams::FEATURE_NOISE);
                        out.features = perturb_features_add(&d.features, sigma, &mut rng)?;
                    }
                    PerturbMode::EdgeAdd { ratio } => {
                        let mut rng = stream(seed, streams::EDGE_NOISE);
                        out.graph = perturb_edges(&d.graph, ratio, &mut rng)?;
                    }
                }
                Ok(Data::Link(out))
            }
        }
    }

    pub fn train(&self, model: &ModelConfig, train: &TrainConfig) -> Result<RunResult> {
        match self {
            Data::Node(d) => train_node_classifier(d, model, train),
            Data::Link(d) => train_link_predictor(d, model, train),
        }
    }
}

/// Runs `f` over `jobs` on `threads` workers (0 = one per core). Results
/// keep the order of `jobs`, so output never depends on scheduling.
pub fn run_parallel<J, T, F>(threads: usize, jobs: &[J], f: F) -> Result<Vec<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| NgnnError::Config(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(&f).collect())
}

/// Summary of the runs of one `train` invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub config_hash: String,
    pub metric: String,
    pub caveat: String,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub test_metrics: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub best_valid_mean: f64,
    pub best_valid_std: f64,
    pub param_count: usize,
    pub epoch_s: f64,
}

impl Aggregate {
    /// `runs` must be sorted by seed and non-empty.
    pub fn from_runs(runs: &[RunResult]) -> Self {
        let test: Vec<f64> = runs.iter().map(|r| r.test_metric).collect();
        let valid: Vec<f64> = runs.iter().map(|r| r.best_valid).collect();
        let epoch: Vec<f64> = runs.iter().map(RunResult::mean_epoch_seconds).collect();
        let (mean, std) = mean_std(&test);
        let (best_valid_mean, best_valid_std) = mean_std(&valid);
        Aggregate {
            config_hash: runs[0].config_hash.clone(),
            metric: runs[0].metric.clone(),
            caveat: DESK_SCALE_CAVEAT.into(),
            runs: runs.len(),
            seeds: runs.iter().map(|r| r.seed).collect(),
            test_metrics: test,
            mean,
            std,
            best_valid_mean,
            best_valid_std,
            param_count: runs[0].param_count,
            epoch_s: mean_std(&epoch).0,
        }
    }
}

/// Trains the configured model once per seed.
pub fn train_runs(cfg: &ExperimentConfig, data: &Data, threads: usize) -> Result<(Vec<RunResult>, Aggregate)> {
    cfg.validate()?;
    let seeds = cfg.seeds();
    let runs = run_parallel(threads, &seeds, |&seed| {
        data.train(&cfg.model, &cfg.train.clone().with_seed(seed))
    })?;
    let agg = Aggregate::from_runs(&runs);
    Ok((runs, agg))
}

/// Parameter total and per-layer breakdown of a model config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub model: ModelConfig,
    pub total: usize,
    pub layers: Vec<LayerParams>,
}

pub fn param_report(model: &ModelConfig) -> Result<ParamReport> {
    let m = build_model::<f32, _>(model, &mut stream(0, streams::INIT))?;
    Ok(ParamReport {
        model: model.clone(),
        total: m.param_count(),
        layers: m.param_breakdown(),
    })
}

/// Hash of a model/train pair as recorded in run results.
pub fn experiment_hash(cfg: &ExperimentConfig) -> String {
    config_hash(&cfg.model, &cfg.train)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Arch;

    #[test]
    fn config_parsing_and_validation() {
        let cfg = ExperimentConfig::from_json(
            r#"{"dataset":"data","model":{"arch":"sage","hidden_dim":8},
                "sweep":{"axis":"feature_add","sigmas":[0,1,2]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.runs, 10);
        assert_eq!(cfg.variants, Variant::ALL.to_vec());
        assert_eq!(cfg.sweep.as_ref().unwrap().axis(), "feature_add");
        assert_eq!(cfg.seeds(), (0..10).collect::<Vec<_>>());

        let bad = [
            r#"{"dataset":"d","model":{"arch":"sage","hidden_dim":8},"runs":0}"#,
            r#"{"dataset":"d","model":{"arch":"sage","hidden_dim":8},"sweep":{"axis":"edge_noise","ratios":[]}}"#,
            r#"{"dataset":"d","model":{"arch":"sage","hidden_dim":8},"sweep":{"axis":"feature_add","sigmas":[-1]}}"#,
            r#"{"dataset":"d","model":{"arch":"sage","hidden_dim":8,"ngnn_position":"hidden","ngnn_spec":"2-rel"}}"#,
            r#"{"dataset":"d","model":{"arch":"sage","hidden_dim":8},"sweep":{"axis":"depth"}}"#,
            r#"{"dataset":"d","model":{"arch":"sage","hidden_dim":8},"extra":1}"#,
        ];
        for b in bad {
            let e = ExperimentConfig::from_json(b).unwrap_err();
            assert!(e.is_config_error(), "{b}: {e}");
        }
    }

    #[test]
    fn variants_reshape_base_model() {
        let base = ModelConfig::new(Arch::Sage, 10, 16, 3).with_ngnn(NgnnPosition::All, "1-sigmoid");
        let get = |v: Variant| v.apply(&base).unwrap();
        assert_eq!(get(Variant::Baseline).ngnn_position, NgnnPosition::None);
        assert_eq!(get(Variant::DoubleWidth).hidden_dim, 32);
        assert_eq!(get(Variant::ExtraLayer).num_layers, 4);
        let n2 = get(Variant::Ngnn2);
        assert_eq!((n2.ngnn_position, n2.ngnn_spec.as_str()), (NgnnPosition::Hidden, "2-relu"));
        assert!(Variant::Ngnn1.apply(&base.clone().with_layers(2)).is_err());
    }

    #[test]
    fn param_report_breakdown() {
        let m = ModelConfig::new(Arch::Sage, 100, 256, 47).with_ngnn(NgnnPosition::Hidden, "2-relu");
        let r = param_report(&m).unwrap();
        assert_eq!(r.total, 338_479);
        assert_eq!(r.layers.iter().map(|l| l.gnn + l.ngnn).sum::<usize>(), r.total);
    }

    #[test]
    fn parallel_results_keep_job_order() {
        let jobs: Vec<u64> = (0..50).collect();
        let one = run_parallel(1, &jobs, |&j| Ok(j * j)).unwrap();
        let many = run_parallel(4, &jobs, |&j| Ok(j * j)).unwrap();
        assert_eq!(one, many);
        assert_eq!(one[7], 49);
    }
}
