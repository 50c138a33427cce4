use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use jointdetect::detection::{DeviceClass, ThresholdGrid, ThresholdPair};
use jointdetect::inference::{Covariate, ModelSpec, Scope};

/// Everything a command reads. Every field is optional in the file so that
/// flags can fill gaps; commands report all problems at once.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histories: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locations: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub devices: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_classes: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<ModelConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quota_per_cell: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propensity_floor: Option<f64>,
    /// "unweighted" or "probability".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_weighting: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    /// Written by the tool itself; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub scope: String,
    /// One threshold pair, e.g. "S:10;T:0.8" or "placeid;T:1.0".
    pub threshold: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participants: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activities_per_group_size: Option<BTreeMap<String, usize>>,
    /// YYYY-MM-DD.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    /// "+09:00".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utc_offset: Option<String>,
    /// "HH:MM".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_start: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_minutes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_location: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_location: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_max_minutes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walking_speed_m_per_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_minutes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_budget: Option<usize>,
    /// "descending_round_robin" or "one_per_slot".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_rule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub travel_matrix: Option<Vec<TravelEntry>>,
    /// Used when no location file is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_pool_per_level: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TravelEntry {
    pub from: String,
    pub to: String,
    pub minutes: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// "typical" (default) or "noiseless"; the fields below override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recording: Option<RecordingSection>,
    /// Keys "<os>:<far level index>", e.g. "android:3".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_m: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_noise_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal: Option<TemporalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place_id_flip_prob: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persons: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activities_per_group_size: Option<BTreeMap<String, usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locations_per_level: Option<usize>,
    /// Keys are FAR level indices "0".."3".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_shares: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_min_range: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_gap_min: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RecordingSection {
    pub intercept: f64,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum TemporalSection {
    Full,
    ClippedBeta { alpha: f64, beta: f64, scale: f64 },
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub thresholds: Option<String>,
    pub scope: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Vec<String>> {
        let text = std::fs::read_to_string(path).map_err(|e| vec![format!("config {}: {e}", path.display())])?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| vec![format!("config {}: {e}", path.display())])?;
        cfg.provenance = None;
        Ok(cfg)
    }

    /// Makes relative input paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.histories, &mut self.ground_truth, &mut self.locations, &mut self.devices]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.thresholds.is_some() {
            self.thresholds.clone_from(&o.thresholds);
        }
        if o.scope.is_some() {
            self.scope.clone_from(&o.scope);
        }
    }

    /// SHA-256 of the effective configuration.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.provenance = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Collects problems instead of stopping at the first.
#[derive(Debug, Default)]
pub struct Problems(pub Vec<String>);

impl Problems {
    pub fn push(&mut self, p: impl Into<String>) {
        self.0.push(p.into());
    }

    pub fn check<T, E: std::fmt::Display>(&mut self, what: &str, r: Result<T, E>) -> Option<T> {
        r.map_err(|e| self.push(format!("{what}: {e}"))).ok()
    }

    pub fn finish<T>(self, value: impl FnOnce() -> T) -> Result<T, Vec<String>> {
        if self.0.is_empty() {
            Ok(value())
        } else {
            Err(self.0)
        }
    }
}

pub fn require_seed(cfg: &RunConfig, p: &mut Problems) -> u64 {
    cfg.seed.unwrap_or_else(|| {
        p.push("seed is required (config `seed` or --seed)");
        0
    })
}

pub fn require_path(value: &Option<PathBuf>, key: &str, dir: bool, p: &mut Problems) -> PathBuf {
    match value {
        None => {
            p.push(format!("`{key}` is required"));
            PathBuf::new()
        }
        Some(path) => {
            let ok = if dir { path.is_dir() } else { path.is_file() };
            if !ok {
                p.push(format!("`{key}`: {} does not exist", path.display()));
            }
            path.clone()
        }
    }
}

pub const DEFAULT_THRESHOLDS: &str = "S:10,50;T:0.6,0.8,1.0;placeid";

pub fn threshold_grid(cfg: &RunConfig, p: &mut Problems) -> Option<ThresholdGrid> {
    let text = cfg.thresholds.as_deref().unwrap_or(DEFAULT_THRESHOLDS);
    p.check("thresholds", text.parse::<ThresholdGrid>())
}

pub fn device_classes(cfg: &RunConfig, p: &mut Problems) -> Vec<DeviceClass> {
    let names = cfg
        .device_classes
        .clone()
        .unwrap_or_else(|| vec!["android".into(), "ios".into(), "mixed".into()]);
    names
        .iter()
        .filter_map(|n| p.check(&format!("device class `{n}`"), n.parse::<DeviceClass>()))
        .collect()
}

pub fn group_sizes(cfg: &RunConfig, p: &mut Problems) -> Vec<usize> {
    let sizes = cfg.group_sizes.clone().unwrap_or_else(|| vec![1, 2, 3, 4]);
    if sizes.iter().any(|g| *g == 0) {
        p.push("group sizes must be positive");
    }
    sizes
}

fn single_pair(text: &str) -> Result<ThresholdPair, String> {
    let pairs = text
        .parse::<ThresholdGrid>()
        .and_then(|g| g.pairs())
        .map_err(|e| e.to_string())?;
    match pairs.as_slice() {
        [one] => Ok(*one),
        _ => Err(format!("`{text}` must name exactly one threshold pair")),
    }
}

/// Explicit model list, or every selected scope crossed with the threshold
/// grid using default covariates.
pub fn model_specs(cfg: &RunConfig, p: &mut Problems) -> Vec<ModelSpec> {
    let scope_filter = cfg
        .scope
        .as_deref()
        .and_then(|s| p.check("scope", s.parse::<Scope>()));
    if let Some(models) = &cfg.models {
        let mut out = Vec::new();
        for (i, m) in models.iter().enumerate() {
            let what = format!("models[{i}]");
            let scope = p.check(&format!("{what}.scope"), m.scope.parse::<Scope>());
            let thr = p.check(&format!("{what}.threshold"), single_pair(&m.threshold));
            let covs = match &m.covariates {
                None => scope.map(Scope::default_covariates),
                Some(names) => {
                    let parsed: Vec<Option<Covariate>> = names
                        .iter()
                        .map(|n| p.check(&format!("{what}.covariates"), n.parse::<Covariate>()))
                        .collect();
                    parsed.into_iter().collect()
                }
            };
            if let (Some(scope), Some(thr), Some(covs)) = (scope, thr, covs) {
                if scope_filter.is_some_and(|f| f != scope) {
                    continue;
                }
                if let Some(spec) = p.check(&what, ModelSpec::new(thr, covs, scope)) {
                    out.push(spec);
                }
            }
        }
        return out;
    }
    let Some(grid) = threshold_grid(cfg, p) else {
        return Vec::new();
    };
    let Some(pairs) = p.check("thresholds", grid.pairs()) else {
        return Vec::new();
    };
    let scopes: Vec<Scope> = scope_filter.map_or_else(|| Scope::ALL.to_vec(), |s| vec![s]);
    let mut out = Vec::new();
    for scope in scopes {
        out.extend(pairs.iter().map(|thr| ModelSpec::with_defaults(*thr, scope)));
    }
    out
}
