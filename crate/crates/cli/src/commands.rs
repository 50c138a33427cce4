use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{FixedOffset, NaiveDate, NaiveTime};
use serde_json::{json, Value};

use jointdetect::accuracy::{match_all, write_matched_csv, MatchedObservation};
use jointdetect::detection::{detection_grid, detection_grid_by_wifi, write_grid_csv, write_wifi_grid_csv};
use jointdetect::geo::LatLon;
use jointdetect::inference::{
    bootstrap_effects, build_composite_groups, dataset_from_features, fit_logit, individual_rows, joint_rows,
    resampled_effects, write_effects_csv, BootstrapOptions, CompositePool, Covariate, Dataset, EffectOptions,
    EffectReport, ModelSpec, ResampleOptions, Weighting,
};
use jointdetect::ingest::{
    locations_to_json, parse_devices, parse_ground_truth, parse_location_history, parse_locations, write_devices,
    write_ground_truth, DeviceHistory, FarLevel, GroundTruthActivity, LocationRecord, OsClass, Registries,
};
use jointdetect::rng;
use jointdetect::scheduler::{check_feasibility, generate_schedule, ScheduleConfig, SlotRule, TravelTime};
use jointdetect::simulator::{
    generate_location_pool, simulate, synthetic_world, write_truth_csv, RecordingModel, SimParams, TemporalLaw,
    WorldConfig,
};
use jointdetect::validation::{ipw_weights, kfold_cv, write_cv_csv, CvOptions, DEFAULT_PROPENSITY_FLOOR};

use crate::config::{
    device_classes, group_sizes, model_specs, require_path, require_seed, threshold_grid, Problems, RunConfig,
    TemporalSection,
};

/// Failure of a command: bad configuration or a runtime error.
#[derive(Debug)]
pub enum Failure {
    Config(Vec<String>),
    Runtime(Vec<String>),
}

impl From<jointdetect::Error> for Failure {
    fn from(e: jointdetect::Error) -> Self {
        Failure::Runtime(vec![e.to_string()])
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(vec![e.to_string()])
    }
}

pub type Outcome = Result<(), Failure>;

fn config_err<T>(r: Result<T, Vec<String>>) -> Result<T, Failure> {
    r.map_err(Failure::Config)
}

/// Output directory plus the provenance stamped on every file.
pub struct Output {
    dir: PathBuf,
    provenance: Value,
}

impl Output {
    pub fn new(dir: &Path, command: &str, seed: u64, digest: &str) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Config(vec![format!("output {}: {e}", dir.display())]))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            provenance: json!({
                "tool": "jointdetect",
                "version": env!("CARGO_PKG_VERSION"),
                "command": command,
                "seed": seed,
                "config_sha256": digest,
            }),
        })
    }

    fn header_line(&self) -> String {
        let p = &self.provenance;
        format!(
            "# {} {} command={} seed={} config_sha256={}\n",
            p["tool"].as_str().unwrap_or_default(),
            p["version"].as_str().unwrap_or_default(),
            p["command"].as_str().unwrap_or_default(),
            p["seed"],
            p["config_sha256"].as_str().unwrap_or_default(),
        )
    }

    pub fn csv(
        &self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> jointdetect::Result<()>,
    ) -> Result<PathBuf, Failure> {
        let mut buf = self.header_line().into_bytes();
        body(&mut buf)?;
        let path = self.dir.join(name);
        fs::write(&path, buf)?;
        Ok(path)
    }

    /// Writes `{"provenance": ..., key: value}`.
    pub fn json(&self, name: &str, key: &str, value: Value) -> Result<PathBuf, Failure> {
        let mut map = serde_json::Map::new();
        map.insert("provenance".into(), self.provenance.clone());
        map.insert(key.into(), value);
        let mut text = serde_json::to_string_pretty(&Value::Object(map)).expect("JSON serializes");
        text.push('\n');
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, text)?;
        Ok(path)
    }
}

/// Drops provenance comment lines from a CSV produced by this tool.
fn read_table(path: &Path) -> Result<String, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Runtime(vec![format!("{}: {e}", path.display())]))?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect())
}

fn read_json_payload(path: &Path, key: &str) -> Result<String, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Runtime(vec![format!("{}: {e}", path.display())]))?;
    if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&text) {
        if let Some(inner) = map.get(key) {
            return Ok(inner.to_string());
        }
    }
    Ok(text)
}

fn in_file<T>(path: &Path, r: jointdetect::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Runtime(vec![format!("{}: {e}", path.display())]))
}

struct Inputs {
    activities: Vec<GroundTruthActivity>,
    registries: Registries,
    histories: BTreeMap<String, DeviceHistory>,
}

struct InputPaths {
    ground_truth: PathBuf,
    locations: PathBuf,
    devices: PathBuf,
    histories: Option<PathBuf>,
}

fn input_paths(cfg: &RunConfig, p: &mut Problems, with_histories: bool) -> InputPaths {
    InputPaths {
        ground_truth: require_path(&cfg.ground_truth, "ground_truth", false, p),
        locations: require_path(&cfg.locations, "locations", false, p),
        devices: require_path(&cfg.devices, "devices", false, p),
        histories: with_histories.then(|| require_path(&cfg.histories, "histories", true, p)),
    }
}

fn load_registries(paths: &InputPaths) -> Result<Registries, Failure> {
    let locations = in_file(&paths.locations, parse_locations(&read_json_payload(&paths.locations, "locations")?))?;
    let devices = in_file(&paths.devices, parse_devices(&read_table(&paths.devices)?))?;
    Ok(Registries { locations, devices })
}

fn load_histories(dir: &Path) -> Result<BTreeMap<String, DeviceHistory>, Failure> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut out = BTreeMap::new();
    let mut errors = Vec::new();
    for f in files {
        let id = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let text = fs::read_to_string(&f)?;
        match parse_location_history(&id, &text) {
            Ok(h) => {
                out.insert(id, h);
            }
            Err(e) => errors.push(format!("{}: {e}", f.display())),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(Failure::Runtime(errors))
    }
}

fn load_inputs(paths: &InputPaths) -> Result<Inputs, Failure> {
    let registries = load_registries(paths)?;
    let activities = in_file(&paths.ground_truth, parse_ground_truth(&read_table(&paths.ground_truth)?))?;
    let histories = match &paths.histories {
        Some(d) => load_histories(d)?,
        None => BTreeMap::new(),
    };
    Ok(Inputs {
        activities,
        registries,
        histories,
    })
}

fn matched(inputs: &Inputs) -> Result<Vec<MatchedObservation>, Failure> {
    Ok(match_all(&inputs.activities, &inputs.histories, &inputs.registries)?)
}

pub fn cmd_match(cfg: &RunConfig, out: &Path, digest: &str) -> Outcome {
    let mut p = Problems::default();
    let seed = require_seed(cfg, &mut p);
    let paths = input_paths(cfg, &mut p, true);
    let paths = config_err(p.finish(|| paths))?;
    let inputs = load_inputs(&paths)?;
    let m = matched(&inputs)?;
    let o = Output::new(out, "match", seed, digest)?;
    o.csv("matched.csv", |w| write_matched_csv(&m, w))?;
    Ok(())
}

pub fn cmd_grid(cfg: &RunConfig, out: &Path, digest: &str) -> Outcome {
    let mut p = Problems::default();
    let seed = require_seed(cfg, &mut p);
    let paths = input_paths(cfg, &mut p, true);
    let grid = threshold_grid(cfg, &mut p);
    let classes = device_classes(cfg, &mut p);
    let sizes = group_sizes(cfg, &mut p);
    let grid = config_err(p.finish(|| grid.expect("grid parsed")))?;
    let inputs = load_inputs(&paths)?;
    let m = matched(&inputs)?;
    let cells = detection_grid(&inputs.activities, &m, &grid, &classes, &sizes)?;
    let wifi = detection_grid_by_wifi(&inputs.activities, &m, &grid, &classes, &sizes)?;
    let o = Output::new(out, "grid", seed, digest)?;
    o.csv("grid.csv", |w| write_grid_csv(&cells, w))?;
    o.csv("grid_wifi.csv", |w| write_wifi_grid_csv(&wifi, w))?;
    Ok(())
}

fn effect_options(cfg: &RunConfig, p: &mut Problems) -> EffectOptions {
    let marginal_weighting = match cfg.marginal_weighting.as_deref() {
        None | Some("unweighted") => Weighting::Unweighted,
        Some("probability") => Weighting::Probability,
        Some(other) => {
            p.push(format!("marginal_weighting `{other}` must be `unweighted` or `probability`"));
            Weighting::Unweighted
        }
    };
    EffectOptions { marginal_weighting }
}

/// Rows for one model: every admitted device for individual scopes, a
/// balanced composite draw for joint scopes.
fn model_dataset(
    inputs: &Inputs,
    m: &[MatchedObservation],
    spec: &ModelSpec,
    seed: u64,
    stream: u64,
    quota: Option<usize>,
) -> jointdetect::Result<Dataset> {
    let rows = if spec.scope.is_joint() {
        let pool = CompositePool::build(&inputs.activities, m, spec.scope.device_class())?;
        let groups = build_composite_groups(&pool, quota, &mut rng::derived(seed, stream));
        joint_rows(&groups, &inputs.activities, &inputs.registries, spec)?
    } else {
        individual_rows(&inputs.activities, m, &inputs.registries, spec)?
    };
    dataset_from_features(&spec.covariates, &rows)
}

fn model_label(spec: &ModelSpec) -> String {
    format!("{} {}", spec.scope, spec.threshold)
}

pub fn cmd_fit(cfg: &RunConfig, out: &Path, digest: &str) -> Outcome {
    let mut p = Problems::default();
    let seed = require_seed(cfg, &mut p);
    let paths = input_paths(cfg, &mut p, true);
    let specs = model_specs(cfg, &mut p);
    let effects = effect_options(cfg, &mut p);
    let iterations = cfg.iterations.unwrap_or(300);
    if iterations == 0 {
        p.push("iterations must be positive");
    }
    if specs.is_empty() {
        p.push("no models selected");
    }
    config_err(p.finish(|| ()))?;
    let inputs = load_inputs(&paths)?;
    let m = matched(&inputs)?;
    let mut reports: Vec<(&ModelSpec, EffectReport)> = Vec::new();
    let mut failures = Vec::new();
    for spec in &specs {
        let result = if spec.scope.is_joint() {
            let opts = ResampleOptions {
                repetitions: iterations,
                seed,
                quota_per_cell: cfg.quota_per_cell,
                effects,
                ..ResampleOptions::new(seed)
            };
            resampled_effects(&inputs.activities, &m, &inputs.registries, spec, &opts)
        } else {
            let opts = BootstrapOptions {
                iterations,
                effects,
                ..BootstrapOptions::new(seed)
            };
            individual_rows(&inputs.activities, &m, &inputs.registries, spec)
                .and_then(|rows| dataset_from_features(&spec.covariates, &rows))
                .and_then(|d| bootstrap_effects(&d, &opts))
        };
        match result {
            Ok(r) => {
                if let Some(w) = &r.warning {
                    let doc = json!({ "status": "warning", "command": "fit", "model": model_label(spec), "message": w });
                    eprintln!("{doc}");
                }
                reports.push((spec, r));
            }
            Err(e) => failures.push(format!("{}: {e}", model_label(spec))),
        }
    }
    let o = Output::new(out, "fit", seed, digest)?;
    let refs: Vec<(&ModelSpec, &EffectReport)> = reports.iter().map(|(s, r)| (*s, r)).collect();
    o.csv("effects.csv", |w| write_effects_csv(&refs, w))?;
    finish_models(failures)
}

fn finish_models(failures: Vec<String>) -> Outcome {
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(failures))
    }
}

pub fn cmd_cv(cfg: &RunConfig, out: &Path, digest: &str) -> Outcome {
    let mut p = Problems::default();
    let seed = require_seed(cfg, &mut p);
    let paths = input_paths(cfg, &mut p, true);
    let specs = model_specs(cfg, &mut p);
    let folds = cfg.folds.unwrap_or(10);
    if folds < 2 {
        p.push("folds must be at least 2");
    }
    if specs.is_empty() {
        p.push("no models selected");
    }
    config_err(p.finish(|| ()))?;
    let inputs = load_inputs(&paths)?;
    let m = matched(&inputs)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let opts = CvOptions {
            folds,
            ..CvOptions::new(seed)
        };
        match model_dataset(&inputs, &m, spec, seed, i as u64 + 1, cfg.quota_per_cell).and_then(|d| kfold_cv(&d, &opts)) {
            Ok(cv) => rows.push((spec.scope, spec.threshold, cv)),
            Err(e) => failures.push(format!("{}: {e}", model_label(spec))),
        }
    }
    let o = Output::new(out, "cv", seed, digest)?;
    o.csv("cv.csv", |w| write_cv_csv(&rows, w))?;
    finish_models(failures)
}

pub const IPW_HEADER: [&str; 11] = [
    "scope",
    "spatial_mode",
    "S_m",
    "T",
    "n_obs",
    "raw_count",
    "weighted_count",
    "raw_frequency",
    "weighted_frequency",
    "n_flagged",
    "propensity_floor",
];

pub fn cmd_ipw(cfg: &RunConfig, out: &Path, digest: &str) -> Outcome {
    let mut p = Problems::default();
    let seed = require_seed(cfg, &mut p);
    let paths = input_paths(cfg, &mut p, true);
    let specs = model_specs(cfg, &mut p);
    let floor = cfg.propensity_floor.unwrap_or(DEFAULT_PROPENSITY_FLOOR);
    if !(floor > 0.0 && floor < 1.0) {
        p.push("propensity_floor must lie in (0, 1)");
    }
    if specs.is_empty() {
        p.push("no models selected");
    }
    config_err(p.finish(|| ()))?;
    let inputs = load_inputs(&paths)?;
    let m = matched(&inputs)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut failures = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let est = model_dataset(&inputs, &m, spec, seed, i as u64 + 1, cfg.quota_per_cell).and_then(|d| {
            let fit = fit_logit(&d)?;
            Ok((d.n_obs(), ipw_weights(&fit, &d, floor)?))
        });
        match est {
            Ok((n, e)) => rows.push(vec![
                spec.scope.to_string(),
                spec.threshold.spatial().mode().to_string(),
                spec.threshold.spatial().meters().map_or("NA".into(), |s| format!("{s}")),
                format!("{}", spec.threshold.temporal()),
                n.to_string(),
                e.raw_count.to_string(),
                format!("{:.6}", e.weighted_count),
                format!("{:.6}", e.raw_frequency(n as f64)),
                format!("{:.6}", e.weighted_frequency(n as f64)),
                e.flagged.len().to_string(),
                format!("{floor}"),
            ]),
            Err(e) => failures.push(format!("{}: {e}", model_label(spec))),
        }
    }
    let o = Output::new(out, "ipw", seed, digest)?;
    o.csv("ipw.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(IPW_HEADER)?;
        for r in &rows {
            c.write_record(r)?;
        }
        c.flush()?;
        Ok(())
    })?;
    finish_models(failures)
}

fn parse_group_counts(map: &BTreeMap<String, usize>, what: &str, p: &mut Problems) -> BTreeMap<usize, usize> {
    map.iter()
        .filter_map(|(k, v)| {
            p.check(&format!("{what} key `{k}`"), k.parse::<usize>().map_err(|e| e.to_string()))
                .map(|g| (g, *v))
        })
        .collect()
}

fn mean_centroid(pool: &[LocationRecord]) -> LatLon {
    let n = pool.len().max(1) as f64;
    let (lat, lon) = pool
        .iter()
        .fold((0.0, 0.0), |(a, b), l| (a + l.centroid.lat, b + l.centroid.lon));
    LatLon::new(lat / n, lon / n)
}

pub fn schedule_config(cfg: &RunConfig, p: &mut Problems) -> Option<ScheduleConfig> {
    let seed = require_seed(cfg, p);
    let s = cfg.schedule.clone().unwrap_or_default();
    let pool: Vec<LocationRecord> = match &cfg.locations {
        Some(path) => {
            let text = p.check("locations", read_json_payload(path, "locations").map_err(|_| "cannot read file"))?;
            p.check("locations", parse_locations(&text))?.into_values().collect()
        }
        None => generate_location_pool(s.synthetic_pool_per_level.unwrap_or(5)),
    };
    let centre = mean_centroid(&pool);
    let ll = |v: Option<[f64; 2]>| v.map_or(centre, |[lat, lon]| LatLon::new(lat, lon));
    let mut c = ScheduleConfig::new(pool, ll(s.start_location), ll(s.end_location), seed);
    if let Some(v) = s.participants {
        c.participants = v;
    }
    if let Some(m) = &s.activities_per_group_size {
        c.activities_per_group_size = parse_group_counts(m, "schedule.activities_per_group_size", p);
    }
    if let Some(d) = &s.date {
        c.date = p.check("schedule.date", NaiveDate::parse_from_str(d, "%Y-%m-%d"))?;
    }
    if let Some(o) = &s.utc_offset {
        c.utc_offset_s = p.check("schedule.utc_offset", o.parse::<FixedOffset>())?.local_minus_utc();
    }
    if let Some(t) = &s.window_start {
        c.window_start = p.check("schedule.window_start", NaiveTime::parse_from_str(t, "%H:%M"))?;
    }
    if let Some(v) = s.window_minutes {
        c.window_minutes = v;
    }
    if let Some(v) = s.long_max_minutes {
        c.long_max_minutes = v;
    }
    if let Some(v) = s.walking_speed_m_per_min {
        c.walking_speed_m_per_min = v;
    }
    if let Some(v) = s.buffer_minutes {
        c.buffer_minutes = v;
    }
    if let Some(v) = s.retry_budget {
        c.retry_budget = v;
    }
    match s.slot_rule.as_deref() {
        None | Some("descending_round_robin") => {}
        Some("one_per_slot") => c.slot_rule = SlotRule::OnePerSlot,
        Some(other) => p.push(format!("schedule.slot_rule `{other}` is not a known rule")),
    }
    if let Some(tm) = s.travel_matrix {
        c.travel_matrix = tm
            .into_iter()
            .map(|t| TravelTime {
                from: t.from,
                to: t.to,
                minutes: t.minutes,
            })
            .collect();
    }
    for problem in c.problems() {
        p.push(format!("schedule: {problem}"));
    }
    Some(c)
}

pub fn cmd_schedule(cfg: &RunConfig, out: &Path, digest: &str) -> Outcome {
    let mut p = Problems::default();
    let c = schedule_config(cfg, &mut p);
    let c = config_err(p.finish(|| c.expect("schedule config built")))?;
    let schedule = generate_schedule(&c)?;
    let violations = check_feasibility(&schedule, &c);
    if !violations.is_empty() {
        return Err(Failure::Runtime(violations.into_iter().map(|v| v.message).collect()));
    }
    let o = Output::new(out, "schedule", c.seed, digest)?;
    o.json("schedule.json", "schedule", schedule.to_json())?;
    o.csv("ground_truth_template.csv", |w| schedule.write_ground_truth_template(w))?;
    Ok(())
}

fn sim_params(cfg: &RunConfig, seed: u64, p: &mut Problems) -> SimParams {
    let s = cfg.simulate.clone().unwrap_or_default();
    let mut params = match s.preset.as_deref() {
        None | Some("typical") => SimParams::typical(seed),
        Some("noiseless") => SimParams::noiseless(seed),
        Some(other) => {
            p.push(format!("simulate.preset `{other}` must be `typical` or `noiseless`"));
            SimParams::typical(seed)
        }
    };
    if let Some(r) = s.recording {
        let coefficients = r
            .coefficients
            .iter()
            .filter_map(|(k, b)| p.check("simulate.recording", k.parse::<Covariate>()).map(|c| (c, *b)))
            .collect();
        params.recording = RecordingModel {
            intercept: r.intercept,
            coefficients,
        };
    }
    if let Some(noise) = s.noise_m {
        for (k, v) in noise {
            let parsed = k.split_once(':').and_then(|(os, lvl)| {
                let os = os.parse::<OsClass>().ok()?;
                let lvl = FarLevel::ALL.get(lvl.parse::<usize>().ok()?).copied()?;
                Some((os, lvl))
            });
            match parsed {
                Some(key) => {
                    params.spatial_noise_m.insert(key, v);
                }
                None => p.push(format!("simulate.noise_m key `{k}` must look like `android:3`")),
            }
        }
    }
    if let Some(v) = s.default_noise_m {
        params.default_noise_m = v;
    }
    if let Some(t) = s.temporal {
        params.temporal = match t {
            TemporalSection::Full => TemporalLaw::Full,
            TemporalSection::ClippedBeta { alpha, beta, scale } => TemporalLaw::ClippedBeta { alpha, beta, scale },
        };
    }
    if let Some(v) = s.place_id_flip_prob {
        params.place_id_flip_prob = v;
    }
    for problem in params.problems() {
        p.push(format!("simulate: {problem}"));
    }
    params
}

fn world_config(cfg: &RunConfig, seed: u64, p: &mut Problems) -> Option<WorldConfig> {
    let w = cfg.simulate.as_ref()?.world.clone()?;
    let mut c = WorldConfig::experiment(seed);
    if let Some(v) = w.persons {
        c.persons = v;
    }
    if let Some(m) = &w.activities_per_group_size {
        c.activities_per_group_size = parse_group_counts(m, "simulate.world.activities_per_group_size", p);
    }
    if let Some(v) = w.locations_per_level {
        c.locations_per_level = v;
    }
    if let Some(shares) = &w.level_shares {
        c.level_shares = shares
            .iter()
            .filter_map(|(k, v)| {
                let level = k.parse::<usize>().ok().and_then(|i| FarLevel::ALL.get(i).copied());
                if level.is_none() {
                    p.push(format!("simulate.world.level_shares key `{k}` must be a level index 0-3"));
                }
                level.map(|l| (l, *v))
            })
            .collect();
    }
    if let Some([lo, hi]) = w.duration_min_range {
        c.duration_min_range = (lo, hi);
    }
    if let Some(v) = w.min_gap_min {
        c.min_gap_min = v;
    }
    Some(c)
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path, digest: &str) -> Outcome {
    let mut p = Problems::default();
    let seed = require_seed(cfg, &mut p);
    let params = sim_params(cfg, seed, &mut p);
    let world_cfg = world_config(cfg, seed, &mut p);
    let paths = world_cfg.is_none().then(|| input_paths(cfg, &mut p, false));
    config_err(p.finish(|| ()))?;

    let (activities, registries) = match (&world_cfg, &paths) {
        (Some(w), _) => {
            let world = synthetic_world(w)?;
            (world.activities, world.registries)
        }
        (None, Some(paths)) => {
            let inputs = load_inputs(paths)?;
            (inputs.activities, inputs.registries)
        }
        (None, None) => unreachable!("either a world or input paths"),
    };
    let sim = simulate(&activities, &registries, &params)?;
    let o = Output::new(out, "simulate", seed, digest)?;
    for (id, h) in &sim.histories {
        o.json(&format!("histories/{id}.json"), "timelineObjects", h.to_json())?;
    }
    o.csv("truth.csv", |w| write_truth_csv(&sim.truth, w))?;
    o.csv("ground_truth.csv", |w| write_ground_truth(&activities, w))?;
    o.csv("devices.csv", |w| write_devices(&registries.devices, w))?;
    let locations: Value = serde_json::from_str(&locations_to_json(&registries.locations)).expect("registry JSON");
    o.json("locations.json", "locations", locations)?;

    // A config that points the analysis commands at this corpus.
    let next = RunConfig {
        seed: Some(seed),
        histories: Some("histories".into()),
        ground_truth: Some("ground_truth.csv".into()),
        locations: Some("locations.json".into()),
        devices: Some("devices.csv".into()),
        thresholds: cfg.thresholds.clone(),
        scope: cfg.scope.clone(),
        ..RunConfig::default()
    };
    let value = serde_json::to_value(&next).expect("config serializes");
    let mut map = value.as_object().cloned().unwrap_or_default();
    map.insert("provenance".into(), o.provenance.clone());
    fs::write(
        out.join("pipeline.json"),
        serde_json::to_string_pretty(&Value::Object(map)).expect("JSON serializes") + "\n",
    )?;
    Ok(())
}
