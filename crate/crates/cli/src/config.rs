//! Experiment configuration: a single versioned TOML file.
//!
//! Every seed is explicit — there are no wall-clock defaults anywhere — so
//! a config file plus its data fully determines every output byte. The
//! static validator enforces the leakage rules before anything runs:
//! resampling may only target training partitions and the blend
//! calibration set may never be the test partition.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shapaudit_core::dataset::TableSchema;
use shapaudit_core::xq::MaskStrategy;

pub const SUPPORTED_CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub config_version: u32,
    /// Master seed; every stage derives its own from it.
    pub seed: u64,
    pub data: DataSection,
    pub split: SplitSection,
    #[serde(default)]
    pub velocity: Option<VelocitySection>,
    #[serde(default)]
    pub resample: Option<ResampleSection>,
    #[serde(default)]
    pub normalize: NormalizeSection,
    #[serde(default, rename = "model")]
    pub models: Vec<ModelSection>,
    #[serde(default)]
    pub attribution: AttributionSection,
    #[serde(default)]
    pub xq: XqSection,
    #[serde(default)]
    pub sgae: Option<SgaeSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    pub label: String,
    #[serde(default)]
    pub time: Option<String>,
    #[serde(default)]
    pub account: Option<String>,
    #[serde(default)]
    pub features: Option<Vec<String>>,
}

impl DataSection {
    pub fn schema(&self) -> TableSchema {
        TableSchema {
            label: self.label.clone(),
            time: self.time.clone(),
            account: self.account.clone(),
            features: self.features.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub kind: SplitKind,
    #[serde(default)]
    pub test_fraction: Option<f64>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub train_quantile: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Stratified,
    Kfold,
    Chronological,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySection {
    pub amount: String,
    pub merchant: String,
    #[serde(default)]
    pub location: Option<(String, String)>,
    #[serde(default = "default_day")]
    pub day_duration: f64,
}

fn default_day() -> f64 {
    86_400.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResampleSection {
    pub method: ResampleMethod,
    #[serde(default = "default_k_neighbors")]
    pub k_neighbors: usize,
    /// Which partition the resampler touches. Only "train" is legal; the
    /// field exists so the validator can reject configs that ask for
    /// anything else.
    #[serde(default = "default_apply_to")]
    pub apply_to: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMethod {
    None,
    SmoteTomek,
}

fn default_k_neighbors() -> usize {
    5
}

fn default_apply_to() -> String {
    "train".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizeSection {
    pub enabled: bool,
}

impl Default for NormalizeSection {
    fn default() -> Self {
        Self { enabled: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    pub kind: ModelKind,
    #[serde(default)]
    pub explainer: ExplainerKind,
    // logistic
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub l2: Option<f64>,
    #[serde(default)]
    pub class_weight: Option<f64>,
    // gbdt
    #[serde(default)]
    pub n_trees: Option<usize>,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default)]
    pub min_leaf: Option<usize>,
    // external
    #[serde(default)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Gbdt,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainerKind {
    /// No attributions for this model.
    #[default]
    None,
    /// Exact enumeration (needs <= 15 features).
    Exact,
    /// Kernel-weighted least squares.
    Kernel,
    /// Exact tree paths; gbdt models only.
    Tree,
    /// Attributions come from the external score file's phi columns.
    File,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributionSection {
    pub background_size: usize,
    pub n_coalitions: usize,
}

impl Default for AttributionSection {
    fn default() -> Self {
        Self {
            background_size: 100,
            n_coalitions: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XqSection {
    pub k_list: Vec<usize>,
    pub n_subsamples: usize,
    pub subsample_size: usize,
    pub top_n: usize,
    pub n_boot: usize,
    /// Rows of the evaluation partition explained for the faithfulness
    /// ranking and the agreement comparison.
    pub explain_sample: usize,
    pub mask_strategy: MaskStrategy,
    /// Per-instance top-k faithfulness instead of one global ranking.
    pub per_instance: bool,
}

impl Default for XqSection {
    fn default() -> Self {
        Self {
            k_list: vec![5, 10, 15],
            n_subsamples: 30,
            subsample_size: 200,
            top_n: 30,
            n_boot: 1000,
            explain_sample: 500,
            mask_strategy: MaskStrategy::Mean,
            per_instance: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgaeSection {
    pub model_l: String,
    pub model_x: String,
    #[serde(default = "default_k_top")]
    pub k_top: usize,
    #[serde(default = "default_tau_a")]
    pub tau_a: f64,
    #[serde(default = "default_w_min")]
    pub w_min: f64,
    #[serde(default = "default_w_max")]
    pub w_max: f64,
    /// Fraction of the training partition carved out (stratified) as the
    /// sigma calibration set.
    #[serde(default = "default_calibration_fraction")]
    pub calibration_fraction: f64,
    /// Which partition calibrates sigma. Only "validation" is legal.
    #[serde(default = "default_calibration")]
    pub calibration: String,
    #[serde(default = "default_true")]
    pub per_transaction_topk: bool,
}

fn default_k_top() -> usize {
    10
}
fn default_tau_a() -> f64 {
    0.60
}
fn default_w_min() -> f64 {
    0.30
}
fn default_w_max() -> f64 {
    0.70
}
fn default_calibration_fraction() -> f64 {
    0.25
}
fn default_calibration() -> String {
    "validation".into()
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Parse a config file. Parse failures are validation failures.
    pub fn load(path: &Path) -> Result<(Self, String), String> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config '{}': {e}", path.display()))?;
        let config: ExperimentConfig =
            toml::from_str(&raw).map_err(|e| format!("config parse error: {e}"))?;
        Ok((config, raw))
    }

    /// Hash of the config bytes and the effective master seed; identical
    /// hash means byte-identical reports.
    pub fn config_hash(raw: &str, effective_seed: u64) -> String {
        let mut hasher = Sha256::new();
        hasher.update(raw.as_bytes());
        hasher.update(effective_seed.to_le_bytes());
        hex(&hasher.finalize())
    }

    /// Static checks: schema consistency, referenced files, and the
    /// leakage rules. Returns every violation, not just the first.
    pub fn validate(&self, base_dir: &Path) -> Vec<String> {
        let mut problems = Vec::new();

        if self.config_version != SUPPORTED_CONFIG_VERSION {
            problems.push(format!(
                "config_version {} unsupported (expected {SUPPORTED_CONFIG_VERSION})",
                self.config_version
            ));
        }

        // data file and declared columns
        let data_path = resolve(base_dir, &self.data.path);
        let header: Option<Vec<String>> = match read_header(&data_path) {
            Ok(h) => Some(h),
            Err(e) => {
                problems.push(e);
                None
            }
        };
        if let Some(header) = &header {
            let mut need: Vec<&String> = vec![&self.data.label];
            need.extend(self.data.time.iter());
            need.extend(self.data.account.iter());
            if let Some(fs) = &self.data.features {
                need.extend(fs.iter());
            }
            if let Some(v) = &self.velocity {
                need.push(&v.amount);
                need.push(&v.merchant);
                if let Some((x, y)) = &v.location {
                    need.push(x);
                    need.push(y);
                }
            }
            for col in need {
                if !header.contains(col) {
                    problems.push(format!("column '{col}' not present in the data header"));
                }
            }
        }

        match self.split.kind {
            SplitKind::Stratified => match self.split.test_fraction {
                Some(f) if f > 0.0 && f < 1.0 => {}
                _ => problems.push("stratified split needs test_fraction in (0,1)".into()),
            },
            SplitKind::Kfold => match self.split.k {
                Some(k) if k >= 2 => {}
                _ => problems.push("kfold split needs k >= 2".into()),
            },
            SplitKind::Chronological => {
                match self.split.train_quantile {
                    Some(q) if q > 0.0 && q < 1.0 => {}
                    _ => problems.push("chronological split needs train_quantile in (0,1)".into()),
                }
                if self.data.time.is_none() {
                    problems.push("chronological split needs a declared time column".into());
                }
            }
        }

        if self.velocity.is_some() && (self.data.time.is_none() || self.data.account.is_none()) {
            problems.push("velocity features need declared time and account columns".into());
        }

        if let Some(r) = &self.resample {
            if r.method == ResampleMethod::SmoteTomek {
                if r.apply_to != "train" {
                    problems.push(format!(
                        "resample.apply_to = \"{}\" violates the leakage rule: \
                         SMOTE-Tomek runs exclusively within training partitions \
                         (each cross-validation training fold or the training side \
                         of a holdout split), never the full table or a test side",
                        r.apply_to
                    ));
                }
                if r.k_neighbors == 0 {
                    problems.push("resample.k_neighbors must be positive".into());
                }
            }
        }

        let mut names = HashSet::new();
        for m in &self.models {
            if !names.insert(&m.name) {
                problems.push(format!("duplicate model name '{}'", m.name));
            }
            match m.kind {
                ModelKind::External => {
                    match &m.scores {
                        None => problems.push(format!(
                            "external model '{}' needs a scores file",
                            m.name
                        )),
                        Some(p) => {
                            let p = resolve(base_dir, p);
                            if !p.is_file() {
                                problems.push(format!(
                                    "scores file '{}' for model '{}' does not exist",
                                    p.display(),
                                    m.name
                                ));
                            } else if m.explainer == ExplainerKind::File {
                                match read_header(&p) {
                                    Ok(h) if h.get(1).map(String::as_str) == Some("phi0") => {}
                                    Ok(_) => problems.push(format!(
                                        "model '{}' wants file attributions but '{}' has no phi columns",
                                        m.name,
                                        p.display()
                                    )),
                                    Err(e) => problems.push(e),
                                }
                            }
                        }
                    }
                    if matches!(
                        m.explainer,
                        ExplainerKind::Exact | ExplainerKind::Kernel | ExplainerKind::Tree
                    ) {
                        problems.push(format!(
                            "external model '{}' cannot be explained by a function-based \
                             explainer; use \"file\" or \"none\"",
                            m.name
                        ));
                    }
                }
                ModelKind::Logistic => {
                    if m.explainer == ExplainerKind::Tree {
                        problems.push(format!(
                            "model '{}': the tree explainer needs a gbdt model",
                            m.name
                        ));
                    }
                    if m.explainer == ExplainerKind::File {
                        problems.push(format!(
                            "model '{}': file attributions need an external model",
                            m.name
                        ));
                    }
                }
                ModelKind::Gbdt => {
                    if m.explainer == ExplainerKind::File {
                        problems.push(format!(
                            "model '{}': file attributions need an external model",
                            m.name
                        ));
                    }
                    if m.max_depth == Some(0) {
                        problems.push(format!("model '{}': max_depth must be >= 1", m.name));
                    }
                }
            }
        }

        if self.attribution.background_size == 0 {
            problems.push("attribution.background_size must be positive".into());
        }

        if self.xq.k_list.is_empty() {
            problems.push("xq.k_list must not be empty".into());
        }
        if self.xq.n_subsamples < 2 || self.xq.subsample_size == 0 {
            problems.push("xq needs n_subsamples >= 2 and subsample_size >= 1".into());
        }

        if let Some(s) = &self.sgae {
            for name in [&s.model_l, &s.model_x] {
                if !self.models.iter().any(|m| &m.name == name) {
                    problems.push(format!("sgae references undefined model '{name}'"));
                }
            }
            if s.model_l == s.model_x {
                problems.push("sgae.model_l and sgae.model_x must differ".into());
            }
            if s.calibration != "validation" {
                problems.push(format!(
                    "sgae.calibration = \"{}\" violates the leakage rule: sigma is \
                     calibrated on a held-out validation carve-out of the training \
                     partition, never the test set",
                    s.calibration
                ));
            }
            if !(s.calibration_fraction > 0.0 && s.calibration_fraction < 1.0) {
                problems.push("sgae.calibration_fraction must be in (0,1)".into());
            }
            if s.k_top < 2 {
                problems.push("sgae.k_top must be >= 2".into());
            }
            if !(s.w_min <= 0.5 && 0.5 <= s.w_max && s.tau_a >= s.w_min && s.tau_a <= s.w_max) {
                problems.push(
                    "sgae weight bounds must satisfy w_min <= 0.5 <= w_max and \
                     tau_a in [w_min, w_max]"
                        .into(),
                );
            }
        }

        problems
    }

    pub fn model(&self, name: &str) -> Option<&ModelSection> {
        self.models.iter().find(|m| m.name == name)
    }
}

/// Paths in the config resolve relative to the config file's directory.
pub fn resolve(base_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_owned()
    } else {
        base_dir.join(p)
    }
}

fn read_header(path: &Path) -> Result<Vec<String>, String> {
    let file = std::fs::File::open(path)
        .map_err(|e| format!("cannot open '{}': {e}", path.display()))?;
    let mut reader = std::io::BufReader::new(file);
    let mut line = String::new();
    std::io::BufRead::read_line(&mut reader, &mut line)
        .map_err(|e| format!("cannot read '{}': {e}", path.display()))?;
    Ok(line
        .trim_end()
        .split(',')
        .map(str::to_owned)
        .collect())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
