//! Experiment configuration: the JSON schema, per-dataset defaults and resolution
//! into a fully explicit [`ResolvedConfig`].

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dpkm_core::collab::{Method, PathId, SplitSpec};
use dpkm_core::mechanisms::ProbL1;
use dpkm_core::metrics::BOOTSTRAP_RESAMPLES;
use serde::{Deserialize, Serialize};

/// Datasets with a built-in defaults row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Gbsg,
    Metabric,
    Support,
}

impl DatasetName {
    /// Guesses the dataset from a file name such as `gbsg.csv`.
    pub fn infer(path: &Path) -> Option<Self> {
        let stem = path.file_stem()?.to_string_lossy().to_ascii_lowercase();
        [
            ("gbsg", DatasetName::Gbsg),
            ("metabric", DatasetName::Metabric),
            ("support", DatasetName::Support),
        ]
        .into_iter()
        .find(|(key, _)| stem.contains(key))
        .map(|(_, name)| name)
    }

    /// Default bin size per mechanism.
    pub fn default_bin_size(self, method: Method) -> f64 {
        use DatasetName::*;
        use Method::*;
        match (method, self) {
            (DpSurv, Gbsg) => 1.0,
            (DpSurv, Metabric) => 6.0,
            (DpSurv, Support) => 2.0,
            (DpProb, Gbsg) => 2.0,
            (DpProb, Metabric) => 4.0,
            (DpProb, Support) => 6.0,
            (DpMatrix, Gbsg) => 2.0,
            (DpMatrix, Metabric) => 6.0,
            (DpMatrix, Support) => 6.0,
        }
    }
}

/// Default fraction of DCT coefficients kept by DP-Surv.
pub const DEFAULT_K_FRACTION: f64 = 0.10;

/// Which non-private dataset the logrank p-value is computed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    /// The input records with their original (unbinned) times.
    #[default]
    Raw,
    /// The input records binned onto the experiment grid.
    Discretized,
}

/// `centralized` or one of the collaboration paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PathChoice {
    Centralized,
    Path(PathId),
}

impl TryFrom<String> for PathChoice {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl std::str::FromStr for PathChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("centralized") {
            Ok(PathChoice::Centralized)
        } else {
            s.parse::<PathId>().map(PathChoice::Path).map_err(|e| e.to_string())
        }
    }
}

impl From<PathChoice> for String {
    fn from(p: PathChoice) -> String {
        match p {
            PathChoice::Centralized => "centralized".into(),
            PathChoice::Path(id) => id.to_string(),
        }
    }
}

/// Split as written in config files: `"even"` or `{"minority_fraction": f}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSetting {
    Named(SplitName),
    Uneven { minority_fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Even,
}

impl From<SplitSetting> for SplitSpec {
    fn from(s: SplitSetting) -> Self {
        match s {
            SplitSetting::Named(SplitName::Even) => SplitSpec::Even,
            SplitSetting::Uneven { minority_fraction } => SplitSpec::Uneven { minority_fraction },
        }
    }
}

/// Parses `even` or `uneven:<fraction>`.
pub fn parse_split(s: &str) -> std::result::Result<SplitSpec, String> {
    if s.eq_ignore_ascii_case("even") {
        return Ok(SplitSpec::Even);
    }
    match s.split_once(':') {
        Some((kind, f)) if kind.eq_ignore_ascii_case("uneven") => f
            .parse()
            .map(|minority_fraction| SplitSpec::Uneven { minority_fraction })
            .map_err(|_| format!("bad minority fraction {f:?}")),
        _ => Err(format!("split must be `even` or `uneven:<fraction>`, got {s:?}")),
    }
}

/// Experiment file as written by users. Unset fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// CSV with `duration,event` columns. Relative paths resolve against the config file.
    pub dataset: PathBuf,
    /// Defaults row to use; inferred from the file name when absent.
    #[serde(default)]
    pub dataset_name: Option<DatasetName>,
    #[serde(default = "yes")]
    pub uncensored_only: bool,
    #[serde(default)]
    pub method: Option<Method>,
    #[serde(default)]
    pub path: Option<PathChoice>,
    #[serde(default)]
    pub bin_size: Option<f64>,
    /// Study horizon; defaults to the largest time in the (filtered) data.
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub k_fraction: Option<f64>,
    pub epsilons: Vec<f64>,
    /// Number of clients; defaults to 10 for collaboration paths and 1 for `centralized`.
    #[serde(default)]
    pub clients: Option<usize>,
    #[serde(default)]
    pub split: Option<SplitSetting>,
    #[serde(default)]
    pub runs: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub resplit_per_run: bool,
    #[serde(default)]
    pub prob_l1: ProbL1,
    #[serde(default)]
    pub p_value_reference: ReferenceKind,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub bootstrap_resamples: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

/// Every setting made explicit. Embedded in result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub dataset: PathBuf,
    pub dataset_name: Option<DatasetName>,
    pub uncensored_only: bool,
    pub method: Method,
    pub path: PathChoice,
    pub bin_size: f64,
    pub t_max: Option<f64>,
    pub k_fraction: f64,
    pub epsilons: Vec<f64>,
    pub clients: usize,
    pub split: SplitSpec,
    pub runs: usize,
    pub master_seed: u64,
    pub resplit_per_run: bool,
    pub prob_l1: ProbL1,
    pub p_value_reference: ReferenceKind,
    pub alpha: f64,
    pub bootstrap_resamples: usize,
}

impl ResolvedConfig {
    /// The collaboration path actually executed.
    pub fn path_id(&self) -> PathId {
        match self.path {
            PathChoice::Centralized => PathId::pooled(self.method),
            PathChoice::Path(id) => id,
        }
    }

    /// Short row label such as `dp-surv/centralized` or `dp-prob/E`.
    pub fn label(&self) -> String {
        let method = match self.method {
            Method::DpSurv => "dp-surv",
            Method::DpProb => "dp-prob",
            Method::DpMatrix => "dp-matrix",
        };
        format!("{method}/{}", String::from(self.path))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if cfg.dataset.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.dataset = dir.join(&cfg.dataset);
            }
        }
        cfg.dataset = std::fs::canonicalize(&cfg.dataset).unwrap_or(cfg.dataset);
        Ok(cfg)
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let method = match (self.method, self.path) {
            (Some(m), Some(PathChoice::Path(p))) if p.method() != m => {
                bail!("path {p} uses {:?}, not {m:?}", p.method())
            }
            (Some(m), _) => m,
            (None, Some(PathChoice::Path(p))) => p.method(),
            (None, _) => bail!("set `method` (or a collaboration `path`)"),
        };
        let path = self.path.unwrap_or(PathChoice::Centralized);
        let dataset_name = self.dataset_name.or_else(|| DatasetName::infer(&self.dataset));
        let bin_size = match (self.bin_size, dataset_name) {
            (Some(b), _) => b,
            (None, Some(name)) => name.default_bin_size(method),
            (None, None) => bail!("no default bin size for {}; set `bin_size`", self.dataset.display()),
        };
        let clients = match (path, self.clients) {
            (PathChoice::Centralized, Some(k)) if k != 1 => bail!("centralized runs use a single client"),
            (PathChoice::Centralized, _) => 1,
            (_, Some(k)) => k,
            (_, None) => 10,
        };
        if self.epsilons.is_empty() {
            bail!("`epsilons` is empty");
        }
        if let Some(&e) = self.epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            bail!("epsilon must be positive, got {e}");
        }
        if !(bin_size.is_finite() && bin_size > 0.0) {
            bail!("bin size must be positive");
        }
        Ok(ResolvedConfig {
            dataset: self.dataset.clone(),
            dataset_name,
            uncensored_only: self.uncensored_only,
            method,
            path,
            bin_size,
            t_max: self.t_max,
            k_fraction: self.k_fraction.unwrap_or(DEFAULT_K_FRACTION),
            epsilons: self.epsilons.clone(),
            clients,
            split: self.split.map_or(SplitSpec::Even, Into::into),
            runs: self.runs.unwrap_or(100),
            master_seed: self.master_seed,
            resplit_per_run: self.resplit_per_run,
            prob_l1: self.prob_l1,
            p_value_reference: self.p_value_reference,
            alpha: self.alpha.unwrap_or(0.05),
            bootstrap_resamples: self.bootstrap_resamples.unwrap_or(BOOTSTRAP_RESAMPLES),
        })
    }
}

/// Loads an experiment file, or the resolved `config` embedded in a results JSON
/// so that a finished run can be repeated exactly. Also returns the file's
/// `output_dir`, if any.
pub fn load_resolved(path: &Path) -> Result<(ResolvedConfig, Option<PathBuf>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    match value.get("config") {
        Some(embedded) => Ok((
            ResolvedConfig::deserialize(embedded).with_context(|| format!("embedded config in {}", path.display()))?,
            None,
        )),
        None => {
            let cfg = ExperimentConfig::load(path)?;
            Ok((cfg.resolve()?, cfg.output_dir.clone()))
        }
    }
}
