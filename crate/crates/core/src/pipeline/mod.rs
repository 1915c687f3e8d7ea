//! End-to-end runs driven by one JSON config: generate, tune, train,
//! ensemble, threshold, evaluate and compare-raters. Every command reads the
//! previous command's files from the output directory.

mod commands;

pub use commands::{
    cmd_compare_raters, cmd_ensemble, cmd_evaluate, cmd_generate, cmd_threshold, cmd_train, cmd_tune,
    ensemble_test_scores, run_all, tune, EnsembleChoice, ModelRecord, TestSummary, TuneOutcome,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetSpec, SplitParams};
use crate::hyperopt::SearchSpace;
use crate::nn::NetworkSpec;
use crate::raterstats::ExpertModel;
use crate::training::TrainConfig;

/// Output file names, relative to the run directory.
pub mod files {
    pub const MANIFEST: &str = crate::dataset::MANIFEST_FILE;
    pub const LR_RANGE: &str = "lr_range.csv";
    pub const TRIALS: &str = "trials.csv";
    pub const SEARCH_SUMMARY: &str = "search_summary.json";
    pub const CHECKPOINTS: &str = "checkpoints";
    pub const MODELS: &str = "models.json";
    pub const OOF_SCORES: &str = "oof_scores.csv";
    pub const ENSEMBLE_REPORT: &str = "ensemble_report.csv";
    pub const ENSEMBLE: &str = "ensemble.json";
    pub const PR_ANY: &str = "pr_any.csv";
    pub const PR_HEAVY: &str = "pr_heavy.csv";
    pub const OPERATING_POINTS: &str = "operating_points.json";
    pub const THRESHOLD_REPORT: &str = "threshold_report.csv";
    pub const TEST_SCORES: &str = "test_scores.csv";
    pub const TEST_METRICS: &str = "test_metrics.csv";
    pub const TEST_SUMMARY: &str = "test_summary.json";
    pub const EXPERT_RATINGS: &str = "expert_ratings.csv";
    pub const METHOD_LABELS: &str = "method_labels.csv";
    pub const RATER_REPORT: &str = "rater_report.csv";
}

/// Synthetic dataset shape; the image seed is the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_images: usize,
    pub image_size: usize,
    pub class_mix: [f64; 3],
    pub n_vessels: usize,
    pub split: SplitParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let d = DatasetSpec::default();
        Self {
            n_images: d.n_images,
            image_size: d.image_size,
            class_mix: d.class_mix,
            n_vessels: d.n_vessels,
            split: SplitParams::default(),
        }
    }
}

impl DatasetConfig {
    pub fn spec(&self, seed: u64) -> DatasetSpec {
        DatasetSpec {
            n_images: self.n_images,
            image_size: self.image_size,
            class_mix: self.class_mix,
            n_vessels: self.n_vessels,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeTestConfig {
    pub lr_min: f64,
    pub lr_max: f64,
    pub iters: usize,
    /// Replace the bounds of the `lr` axis with `[s / 10, s * 10]` around the
    /// suggested rate `s`.
    pub set_lr_axis: bool,
}

impl Default for RangeTestConfig {
    fn default() -> Self {
        Self {
            lr_min: 1e-5,
            lr_max: 1.0,
            iters: 100,
            set_lr_axis: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub space: SearchSpace,
    pub budget: usize,
    pub range_test: RangeTestConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            space: SearchSpace::default(),
            budget: 16,
            range_test: RangeTestConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Epochs {
    pub short: usize,
    pub full: usize,
}

/// One ensemble member: the search config at `rank`, trained at `widths`
/// with seed variant `seed_offset`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberSpec {
    pub rank: usize,
    pub widths: Vec<usize>,
    pub seed_offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaterConfig {
    pub n_images: usize,
    pub n_experts: usize,
    pub expert_model: ExpertModel,
    /// Operating point used for the classifier's labels.
    pub recall_target: f64,
    pub margin: f64,
    pub confidence: f64,
    /// External ratings to use instead of the simulated panel.
    #[serde(default)]
    pub ratings_csv: Option<PathBuf>,
    /// External method labels (`image_id,method,slof`).
    #[serde(default)]
    pub methods_csv: Option<PathBuf>,
}

impl Default for RaterConfig {
    fn default() -> Self {
        Self {
            n_images: 120,
            n_experts: 3,
            expert_model: ExpertModel::default(),
            recall_target: 0.8,
            margin: 0.05,
            confidence: 0.95,
            ratings_csv: None,
            methods_csv: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub network: NetworkSpec,
    /// Baseline training config; search axes are overlaid on it.
    pub train: TrainConfig,
    pub search: SearchConfig,
    pub epochs: Epochs,
    pub members: Vec<MemberSpec>,
    pub recall_targets: Vec<f64>,
    pub raters: RaterConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let widths = vec![8, 16, 32];
        Self {
            seed: 2021,
            out_dir: PathBuf::from("run"),
            dataset: DatasetConfig::default(),
            network: NetworkSpec::default(),
            train: TrainConfig::default(),
            search: SearchConfig::default(),
            epochs: Epochs { short: 3, full: 30 },
            members: vec![
                MemberSpec {
                    rank: 1,
                    widths: widths.clone(),
                    seed_offset: 0,
                },
                MemberSpec {
                    rank: 1,
                    widths: widths.clone(),
                    seed_offset: 1,
                },
                MemberSpec {
                    rank: 2,
                    widths,
                    seed_offset: 0,
                },
                MemberSpec {
                    rank: 1,
                    widths: vec![12, 24, 48],
                    seed_offset: 0,
                },
            ],
            recall_targets: vec![0.5, 0.8, 0.95],
            raters: RaterConfig::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> crate::Error {
    crate::Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => crate::Error::Config(format!("config {} not found", path.display())),
            _ => crate::Error::io(path, e),
        })?;
        let cfg = Self::from_json(&text).map_err(|source| crate::Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> crate::Result<()> {
        self.dataset.spec(self.seed).validate()?;
        if !(self.dataset.split.test_fraction > 0.0 && self.dataset.split.test_fraction < 1.0) {
            return Err(invalid("dataset.split.test_fraction must lie in (0, 1)"));
        }
        if self.dataset.split.k_folds < 2 {
            return Err(invalid("dataset.split.k_folds must be at least 2"));
        }
        self.network.validate()?;
        if self.network.input_size != self.dataset.image_size {
            return Err(invalid(format!(
                "network input size {} differs from image size {}",
                self.network.input_size, self.dataset.image_size
            )));
        }
        self.train.validate()?;
        self.search.space.validate()?;
        if self.search.budget == 0 {
            return Err(invalid("search.budget must be at least 1"));
        }
        let rt = &self.search.range_test;
        if !(rt.lr_min > 0.0 && rt.lr_min < rt.lr_max) || rt.iters < 10 {
            return Err(invalid("search.range_test needs 0 < lr_min < lr_max and iters >= 10"));
        }
        if self.epochs.short == 0 || self.epochs.full == 0 {
            return Err(invalid("epochs.short and epochs.full must be positive"));
        }
        if self.members.is_empty() || self.members.len() > crate::ensemble::MAX_MODELS {
            return Err(invalid(format!(
                "members: need 1..={} models",
                crate::ensemble::MAX_MODELS
            )));
        }
        for m in &self.members {
            if m.rank == 0 || m.rank > self.search.budget {
                return Err(invalid(format!(
                    "member rank {} outside 1..={}",
                    m.rank, self.search.budget
                )));
            }
            NetworkSpec::with_widths(self.network.input_size, &m.widths).validate()?;
        }
        if self.recall_targets.is_empty() || self.recall_targets.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(invalid("recall_targets must be non-empty and lie in (0, 1]"));
        }
        let r = &self.raters;
        if !self.recall_targets.contains(&r.recall_target) {
            return Err(invalid("raters.recall_target must be one of recall_targets"));
        }
        if r.n_images == 0 || r.n_experts < 2 {
            return Err(invalid("raters need n_images >= 1 and n_experts >= 2"));
        }
        if !(r.margin > 0.0 && r.margin < 1.0) || !(r.confidence > 0.0 && r.confidence < 1.0) {
            return Err(invalid("raters.margin and raters.confidence must lie in (0, 1)"));
        }
        Ok(())
    }
}
