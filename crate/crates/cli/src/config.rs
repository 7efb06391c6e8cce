//! Strict experiment configuration: JSON in, unknown fields rejected with
//! a field path, defaults filled, and the fully resolved form echoed back
//! out so `parse(emit(resolved)) == resolved`.

use crate::{CliError, Result};
use normlab::data::ShortcutDatasetConfig;
use normlab::model::{appendix_cnn, mlp, strip_batchnorm, ModelSpec};
use normlab::train::{Optimizer, Schedule, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TheoryMinNorm,
    TheoryMaxMargin,
    TheoryCentering,
    Shortcut,
    CorruptionRobustness,
    BnAdaptation,
    LambdaSweep,
    Calibration,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::TheoryMinNorm => "theory_min_norm",
            ExperimentKind::TheoryMaxMargin => "theory_max_margin",
            ExperimentKind::TheoryCentering => "theory_centering",
            ExperimentKind::Shortcut => "shortcut",
            ExperimentKind::CorruptionRobustness => "corruption_robustness",
            ExperimentKind::BnAdaptation => "bn_adaptation",
            ExperimentKind::LambdaSweep => "lambda_sweep",
            ExperimentKind::Calibration => "calibration",
        }
    }
}

/// Which architecture family a training experiment instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cnn,
    Mlp,
}

impl ModelKind {
    /// Batch-norm spec and its norm-free counterpart.
    pub fn specs(self) -> (ModelSpec, ModelSpec) {
        let bn = match self {
            ModelKind::Cnn => appendix_cnn(3, 28, 28, 2),
            ModelKind::Mlp => mlp(3 * 28 * 28, &[256, 128], 2, true),
        };
        let free = strip_batchnorm(&bn);
        (bn, free)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSettings {
    pub train_per_class: usize,
    pub eval_per_class: usize,
    pub noise_sigma: f64,
    pub square_contrast: f64,
    pub square_size: usize,
}

impl Default for DataSettings {
    fn default() -> Self {
        DataSettings {
            train_per_class: 96,
            eval_per_class: 128,
            noise_sigma: 0.8,
            square_contrast: 0.4,
            square_size: 4,
        }
    }
}

impl DataSettings {
    pub fn dataset_config(&self, seed: u64) -> ShortcutDatasetConfig {
        let mut cfg =
            ShortcutDatasetConfig::synthetic(seed, self.train_per_class, self.eval_per_class);
        cfg.noise_sigma = self.noise_sigma;
        cfg.square_contrast = self.square_contrast;
        cfg.square_size = self.square_size;
        cfg
    }

    fn validate(&self, path: &str) -> Result<()> {
        if self.train_per_class == 0 || self.eval_per_class == 0 {
            return Err(CliError::Config(format!(
                "{path}: per-class sample counts must be >= 1"
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(CliError::Config(format!(
                "{path}.noise_sigma: must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(self.square_contrast > 0.0 && self.square_contrast <= 1.0) {
            return Err(CliError::Config(format!(
                "{path}.square_contrast: must be in (0, 1], got {}",
                self.square_contrast
            )));
        }
        if self.square_size == 0 {
            return Err(CliError::Config(format!(
                "{path}.square_size: must be >= 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub optimizer: Optimizer,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2_coefficient: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            optimizer: Optimizer::Sgd {
                lr: 0.02,
                momentum: 0.9,
                nesterov: true,
            },
            schedule: Schedule::Constant,
            batch_size: 64,
            epochs: 18,
            l2_coefficient: 0.0,
        }
    }
}

impl TrainSettings {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            optimizer: self.optimizer.clone(),
            schedule: self.schedule.clone(),
            batch_size: self.batch_size,
            epochs: self.epochs,
            l2_coefficient: self.l2_coefficient,
            seed,
        }
    }

    fn validate(&self, path: &str, has_bn: bool) -> Result<()> {
        self.to_train_config(0)
            .validate(has_bn)
            .map_err(|e| CliError::Config(format!("{path}: {e}")))
    }
}

/// Architecture + data + optimization bundle shared by every training
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSettings {
    pub arch: ModelKind,
    pub data: DataSettings,
    pub train: TrainSettings,
}

impl Default for ModelKind {
    fn default() -> Self {
        ModelKind::Cnn
    }
}

impl TaskSettings {
    fn validate(&self, path: &str) -> Result<()> {
        self.data.validate(&format!("{path}.data"))?;
        // The BN variant has the stricter batch rule; validate against it.
        self.train.validate(&format!("{path}.train"), true)?;
        let split = 2 * self.data.train_per_class;
        if split % self.train.batch_size != 0 {
            return Err(CliError::Config(format!(
                "{path}.train.batch_size: {} must divide the training set size {} \
                 (batch-norm rejects trailing batches of one sample)",
                self.train.batch_size, split
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryMinNormConfig {
    pub num_seeds: usize,
    pub n: usize,
    pub d: usize,
    pub low_var_count: usize,
    pub sigma_low: f64,
    pub sigma_high: f64,
    pub projection_instances: usize,
    pub projection_n: usize,
    pub projection_d: usize,
}

impl Default for TheoryMinNormConfig {
    fn default() -> Self {
        TheoryMinNormConfig {
            num_seeds: 200,
            n: 20,
            d: 100,
            low_var_count: 50,
            sigma_low: 0.1,
            sigma_high: 1.0,
            projection_instances: 100,
            projection_n: 8,
            projection_d: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryMaxMarginConfig {
    pub num_instances: usize,
    pub min_n: usize,
    pub max_n: usize,
    pub max_d: usize,
}

impl Default for TheoryMaxMarginConfig {
    fn default() -> Self {
        TheoryMaxMarginConfig {
            num_instances: 50,
            min_n: 4,
            max_n: 10,
            max_d: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryCenteringConfig {
    pub num_instances: usize,
    pub n: usize,
    pub d: usize,
    /// Off-sample probe points per instance.
    pub probes: usize,
}

impl Default for TheoryCenteringConfig {
    fn default() -> Self {
        TheoryCenteringConfig {
            num_instances: 100,
            n: 8,
            d: 40,
            probes: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShortcutExpConfig {
    pub num_seeds: usize,
    pub task: TaskSettings,
    /// Consistency-weight candidates for the student mini-sweep.
    pub lambdas: Vec<f64>,
}

impl Default for ShortcutExpConfig {
    fn default() -> Self {
        ShortcutExpConfig {
            num_seeds: 3,
            task: TaskSettings::default(),
            lambdas: vec![0.1, 1.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionExpConfig {
    pub num_seeds: usize,
    pub task: TaskSettings,
    pub lambda: f64,
    pub severities: Vec<u8>,
}

impl Default for CorruptionExpConfig {
    fn default() -> Self {
        CorruptionExpConfig {
            num_seeds: 3,
            task: TaskSettings::default(),
            lambda: 1.0,
            severities: vec![1, 3, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptationExpConfig {
    pub scenario_seeds: usize,
    pub adapt_batch_size: usize,
    pub task: TaskSettings,
}

impl Default for AdaptationExpConfig {
    fn default() -> Self {
        AdaptationExpConfig {
            scenario_seeds: 5,
            adapt_batch_size: 64,
            task: TaskSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaSweepConfig {
    pub task: TaskSettings,
    pub lambdas: Vec<f64>,
}

impl Default for LambdaSweepConfig {
    fn default() -> Self {
        LambdaSweepConfig {
            task: TaskSettings::default(),
            lambdas: vec![0.0, 0.1, 1.0, 10.0],
        }
    }
}

/// Which trained network the calibration experiment measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainedNet {
    WBn,
    NoBn,
    Ct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationExpConfig {
    pub net: TrainedNet,
    pub lambda: f64,
    pub task: TaskSettings,
    pub group_fractions: Vec<f64>,
    pub trials: usize,
}

impl Default for CalibrationExpConfig {
    fn default() -> Self {
        CalibrationExpConfig {
            net: TrainedNet::WBn,
            lambda: 1.0,
            task: TaskSettings::default(),
            group_fractions: normlab::metrics::ADVERSARIAL_GROUP_FRACTIONS.to_vec(),
            trials: normlab::metrics::ADVERSARIAL_TRIALS,
        }
    }
}

/// The complete experiment configuration. Every section is present in the
/// resolved form with defaults filled, so one resolved file fully
/// reproduces a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub theory_min_norm: TheoryMinNormConfig,
    #[serde(default)]
    pub theory_max_margin: TheoryMaxMarginConfig,
    #[serde(default)]
    pub theory_centering: TheoryCenteringConfig,
    #[serde(default)]
    pub shortcut: ShortcutExpConfig,
    #[serde(default)]
    pub corruption: CorruptionExpConfig,
    #[serde(default)]
    pub adaptation: AdaptationExpConfig,
    #[serde(default)]
    pub lambda_sweep: LambdaSweepConfig,
    #[serde(default)]
    pub calibration: CalibrationExpConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.theory_min_norm;
        if c.num_seeds == 0 || c.n == 0 || c.d <= c.n {
            return Err(CliError::Config(
                "theory_min_norm: need num_seeds >= 1 and d > n >= 1".into(),
            ));
        }
        if c.low_var_count == 0 || c.low_var_count >= c.d {
            return Err(CliError::Config(format!(
                "theory_min_norm.low_var_count: must be in 1..d, got {}",
                c.low_var_count
            )));
        }
        if !(c.sigma_low > 0.0 && c.sigma_high > 0.0) {
            return Err(CliError::Config(
                "theory_min_norm: feature scales must be positive".into(),
            ));
        }
        if c.projection_instances == 0 || c.projection_d <= c.projection_n || c.projection_n == 0 {
            return Err(CliError::Config(
                "theory_min_norm: projection block needs instances >= 1 and d > n >= 1".into(),
            ));
        }
        let m = &self.theory_max_margin;
        if m.num_instances == 0 || m.min_n < 2 || m.max_n < m.min_n || m.max_d < m.max_n {
            return Err(CliError::Config(
                "theory_max_margin: need num_instances >= 1 and 2 <= min_n <= max_n <= max_d"
                    .into(),
            ));
        }
        let ce = &self.theory_centering;
        if ce.num_instances == 0 || ce.n < 2 || ce.d == 0 {
            return Err(CliError::Config(
                "theory_centering: need num_instances >= 1, n >= 2, d >= 1".into(),
            ));
        }
        if self.shortcut.num_seeds == 0 {
            return Err(CliError::Config("shortcut.num_seeds: must be >= 1".into()));
        }
        if self.shortcut.lambdas.is_empty() {
            return Err(CliError::Config("shortcut.lambdas: must be nonempty".into()));
        }
        for (i, l) in self.shortcut.lambdas.iter().enumerate() {
            if !(*l >= 0.0) || !l.is_finite() {
                return Err(CliError::Config(format!(
                    "shortcut.lambdas[{i}]: must be finite and >= 0, got {l}"
                )));
            }
        }
        self.shortcut.task.validate("shortcut.task")?;
        let co = &self.corruption;
        if co.num_seeds == 0 {
            return Err(CliError::Config("corruption.num_seeds: must be >= 1".into()));
        }
        if !(co.lambda >= 0.0) || !co.lambda.is_finite() {
            return Err(CliError::Config(format!(
                "corruption.lambda: must be finite and >= 0, got {}",
                co.lambda
            )));
        }
        if co.severities.is_empty() {
            return Err(CliError::Config(
                "corruption.severities: must be nonempty".into(),
            ));
        }
        for (i, s) in co.severities.iter().enumerate() {
            if !(1..=5).contains(s) {
                return Err(CliError::Config(format!(
                    "corruption.severities[{i}]: must be in 1..=5, got {s}"
                )));
            }
        }
        co.task.validate("corruption.task")?;
        let ad = &self.adaptation;
        if ad.scenario_seeds == 0 {
            return Err(CliError::Config(
                "adaptation.scenario_seeds: must be >= 1".into(),
            ));
        }
        if ad.adapt_batch_size < 2 {
            return Err(CliError::Config(format!(
                "adaptation.adapt_batch_size: must be >= 2, got {}",
                ad.adapt_batch_size
            )));
        }
        ad.task.validate("adaptation.task")?;
        let sw = &self.lambda_sweep;
        if sw.lambdas.is_empty() {
            return Err(CliError::Config(
                "lambda_sweep.lambdas: must be nonempty".into(),
            ));
        }
        for (i, l) in sw.lambdas.iter().enumerate() {
            if !(*l >= 0.0) || !l.is_finite() {
                return Err(CliError::Config(format!(
                    "lambda_sweep.lambdas[{i}]: must be finite and >= 0, got {l}"
                )));
            }
        }
        sw.task.validate("lambda_sweep.task")?;
        let ca = &self.calibration;
        if !(ca.lambda >= 0.0) || !ca.lambda.is_finite() {
            return Err(CliError::Config(format!(
                "calibration.lambda: must be finite and >= 0, got {}",
                ca.lambda
            )));
        }
        if ca.group_fractions.is_empty() || ca.trials == 0 {
            return Err(CliError::Config(
                "calibration: need at least one group fraction and one trial".into(),
            ));
        }
        for (i, f) in ca.group_fractions.iter().enumerate() {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(CliError::Config(format!(
                    "calibration.group_fractions[{i}]: must be in (0, 1], got {f}"
                )));
            }
        }
        ca.task.validate("calibration.task")?;
        Ok(())
    }
}

/// Where the effective seed came from, recorded in the run manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Config,
    Env,
    Flag,
}

/// Parse a config file strictly; unknown or ill-typed fields fail with
/// their JSON path.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| CliError::Config(format!("{}: {}", e.path(), e.inner())))?;
    Ok(cfg)
}

/// Fold CLI flags and the `NORMLAB_SEED` environment variable into the
/// parsed config. Precedence for the seed: `--seed` flag, then the
/// environment, then the config file.
pub fn resolve(
    mut cfg: ExperimentConfig,
    out_flag: Option<&Path>,
    seed_flag: Option<u64>,
) -> Result<(ExperimentConfig, SeedSource)> {
    let mut source = SeedSource::Config;
    if let Ok(raw) = std::env::var("NORMLAB_SEED") {
        let parsed: u64 = raw.parse().map_err(|_| {
            CliError::Config(format!("NORMLAB_SEED: expected an unsigned integer, got {raw:?}"))
        })?;
        cfg.seed = parsed;
        source = SeedSource::Env;
    }
    if let Some(seed) = seed_flag {
        cfg.seed = seed;
        source = SeedSource::Flag;
    }
    if let Some(out) = out_flag {
        cfg.output_dir = Some(out.to_path_buf());
    }
    if cfg.output_dir.is_none() {
        return Err(CliError::Config(
            "output_dir: required (set it in the config or pass --out)".into(),
        ));
    }
    cfg.validate()?;
    Ok((cfg, source))
}
