//! Synthetic location histories for a known ground truth.
//!
//! Each (activity, person, device) is recorded with a logit probability of
//! the true covariates. A recorded visit is displaced from the location's
//! reference point by Rayleigh noise at a uniform bearing, covers a share of
//! the true interval drawn from a clipped Beta law, and may carry a
//! neighbouring place's ID.


use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;

use crate::detection::{SpatialCriterion, ThresholdPair, TEMPORAL_TOLERANCE};
use crate::error::{Error, Result};
use crate::geo::{LatLon, Polygon};
use crate::inference::{logistic, Covariate, Features};
use crate::ingest::{
    DeviceHistory, DeviceRecord, FarLevel, GroundTruthActivity, LocationRecord, OsClass, PlaceVisit, Registries,
};
use crate::rng;


/// Logit of the probability that a device records a visit at all.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingModel {
    pub intercept: f64,
    pub coefficients: Vec<(Covariate, f64)>,
}

impl RecordingModel {
    /// Same recording probability everywhere.
    pub fn constant(p: f64) -> Self {
        Self {
            intercept: (p / (1.0 - p)).ln(),
            coefficients: Vec::new(),
        }
    }

    pub fn linear_predictor(&self, f: &Features) -> f64 {
        self.coefficients
            .iter()
            .filter(|(_, b)| *b != 0.0)
            .fold(self.intercept, |acc, (c, b)| acc + b * c.value(f))
    }

    pub fn probability(&self, f: &Features) -> f64 {
        logistic(self.linear_predictor(f))
    }
}

/// Law of the temporal intersect of a recorded visit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemporalLaw {
    /// The visit always covers the whole activity.
    Full,
    /// `min(1, scale * B)` with `B ~ Beta(alpha, beta)`.
    ClippedBeta { alpha: f64, beta: f64, scale: f64 },
}

impl TemporalLaw {
    /// P(intersect >= t).
    pub fn survival(&self, t: f64) -> f64 {
        match *self {
            TemporalLaw::Full => 1.0,
            TemporalLaw::ClippedBeta { alpha, beta, scale } => {
                let x = t / scale;
                if x <= 0.0 {
                    1.0
                } else if x > 1.0 {
                    0.0
                } else {
                    1.0 - statrs::function::beta::beta_reg(alpha, beta, x)
                }
            }
        }
    }

    fn draw<R: Rng + ?Sized>(&self, beta_dist: Option<&Beta<f64>>, rng: &mut R) -> f64 {
        match (self, beta_dist) {
            (TemporalLaw::ClippedBeta { scale, .. }, Some(d)) => (scale * d.sample(rng)).min(1.0),
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub recording: RecordingModel,
    /// Rayleigh scale in meters per (class, FAR level); missing pairs use
    /// `default_noise_m`.
    pub spatial_noise_m: BTreeMap<(OsClass, FarLevel), f64>,
    pub default_noise_m: f64,
    pub temporal: TemporalLaw,
    pub place_id_flip_prob: f64,
    pub seed: u64,
}

impl SimParams {
    /// Every device records every activity exactly, at the true place.
    pub fn noiseless(seed: u64) -> Self {
        Self {
            recording: RecordingModel {
                intercept: f64::INFINITY,
                coefficients: Vec::new(),
            },
            spatial_noise_m: BTreeMap::new(),
            default_noise_m: 0.0,
            temporal: TemporalLaw::Full,
            place_id_flip_prob: 0.0,
            seed,
        }
    }

    /// Moderate noise growing with density, slightly larger on iOS.
    pub fn typical(seed: u64) -> Self {
        let mut noise = BTreeMap::new();
        for (level, base) in [
            (FarLevel::OpenSpace, 15.0),
            (FarLevel::LowDensity, 20.0),
            (FarLevel::MidDensity, 30.0),
            (FarLevel::HighDensity, 45.0),
        ] {
            noise.insert((OsClass::Android, level), base);
            noise.insert((OsClass::Ios, level), base * 1.3);
        }
        Self {
            recording: RecordingModel {
                intercept: -0.5,
                coefficients: vec![
                    (Covariate::FarOver100, -0.15),
                    (Covariate::DurationMin, 0.02),
                    (Covariate::AndroidDummy, 1.5),
                    (Covariate::OpenSpace, -0.5),
                ],
            },
            spatial_noise_m: noise,
            default_noise_m: 25.0,
            temporal: TemporalLaw::ClippedBeta {
                alpha: 5.0,
                beta: 2.0,
                scale: 1.25,
            },
            place_id_flip_prob: 0.1,
            seed,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.recording.intercept.is_nan() || self.recording.coefficients.iter().any(|(_, b)| !b.is_finite()) {
            out.push("recording coefficients must be finite (intercept may be infinite)".into());
        }
        for ((os, level), s) in &self.spatial_noise_m {
            if !(*s >= 0.0 && s.is_finite()) {
                out.push(format!("noise scale for {os}/{level} must be non-negative"));
            }
        }
        if !(self.default_noise_m >= 0.0 && self.default_noise_m.is_finite()) {
            out.push("default noise scale must be non-negative".into());
        }
        if let TemporalLaw::ClippedBeta { alpha, beta, scale } = self.temporal {
            if !(alpha > 0.0 && beta > 0.0 && scale > 0.0) {
                out.push("temporal Beta parameters and scale must be positive".into());
            }
        }
        if !(0.0..=1.0).contains(&self.place_id_flip_prob) {
            out.push("place_id_flip_prob must lie in [0, 1]".into());
        }
        out
    }

    pub fn noise_m(&self, os: OsClass, level: FarLevel) -> f64 {
        self.spatial_noise_m.get(&(os, level)).copied().unwrap_or(self.default_noise_m)
    }
}

/// True covariates of one device observation.
pub fn device_features(activity: &GroundTruthActivity, location: &LocationRecord, device: &DeviceRecord) -> Features {
    let ind = |b: bool| f64::from(u8::from(b));
    Features {
        far_over_100: location.far_over_100(),
        duration_min: activity.duration_min(),
        open_space: location.open_space,
        android_ratio: ind(device.os_class == OsClass::Android),
        sharp702sh_ratio: ind(device.is_702sh()),
        wifi_on_ratio: ind(device.wifi_on),
        group_size: activity.group_size(),
    }
}

/// What the simulator drew for one (activity, person, device).
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub activity_id: String,
    pub person_id: String,
    pub device_id: String,
    pub os_class: OsClass,
    pub model: String,
    pub wifi_on: bool,
    pub features: Features,
    pub recording_probability: f64,
    pub recorded: bool,
    pub intersect: Option<f64>,
    pub noise_m: Option<f64>,
    pub place_id_flipped: bool,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub histories: BTreeMap<String, DeviceHistory>,
    pub truth: Vec<TruthRow>,
}

/// Place ID of the nearest other location, per location.
fn neighbour_place_ids(registries: &Registries) -> BTreeMap<&str, String> {
    let locs: Vec<&LocationRecord> = registries.locations.values().collect();
    locs.iter()
        .map(|l| {
            let other = locs
                .iter()
                .filter(|o| o.location_id != l.location_id && o.place_id != l.place_id)
                .min_by(|a, b| {
                    l.centroid
                        .distance_m(&a.centroid)
                        .total_cmp(&l.centroid.distance_m(&b.centroid))
                        .then(a.location_id.cmp(&b.location_id))
                });
            let id = other.map_or_else(|| format!("{}-neighbour", l.place_id), |o| o.place_id.clone());
            (l.location_id.as_str(), id)
        })
        .collect()
}

fn to_e7(v: f64) -> i64 {
    (v * 1e7).round() as i64
}

struct DeviceJob<'a> {
    index: u64,
    device: &'a DeviceRecord,
    activities: Vec<&'a GroundTruthActivity>,
}

fn simulate_device(
    job: &DeviceJob<'_>,
    registries: &Registries,
    neighbours: &BTreeMap<&str, String>,
    params: &SimParams,
    beta_dist: Option<&Beta<f64>>,
) -> Result<(DeviceHistory, Vec<TruthRow>)> {
    // Stream 0 belongs to the master generator used for synthetic worlds.
    let mut r = rng::derived(params.seed, job.index + 1);
    let dev = job.device;
    let mut visits = Vec::new();
    let mut truth = Vec::with_capacity(job.activities.len());
    for (i, a) in job.activities.iter().enumerate() {
        let loc = registries.location(&a.location_id)?;
        let features = device_features(a, loc, dev);
        let p = params.recording.probability(&features);
        let recorded = r.random::<f64>() < p;
        let mut row = TruthRow {
            activity_id: a.activity_id.clone(),
            person_id: dev.person_id.clone(),
            device_id: dev.device_id.clone(),
            os_class: dev.os_class,
            model: dev.model.clone(),
            wifi_on: dev.wifi_on,
            features,
            recording_probability: p,
            recorded,
            intersect: None,
            noise_m: None,
            place_id_flipped: false,
        };
        if recorded {
            let t = params.temporal.draw(beta_dist, &mut r);
            let len = a.end_ms - a.start_ms;
            let (start, end) = if t >= 1.0 {
                // Whole activity plus up to a minute either side, never
                // reaching halfway to a neighbouring activity.
                let before = i.checked_sub(1).map_or(i64::MAX, |j| (a.start_ms - job.activities[j].end_ms) / 2);
                let after = job.activities.get(i + 1).map_or(i64::MAX, |n| (n.start_ms - a.end_ms) / 2);
                let s = r.random_range(0..=60_000i64).min(before.max(0));
                let e = r.random_range(0..=60_000i64).min(after.max(0));
                (a.start_ms - s, a.end_ms + e)
            } else {
                let covered = ((t * len as f64).round() as i64).max(1);
                let offset = r.random_range(0..=len - covered);
                (a.start_ms + offset, a.start_ms + offset + covered)
            };
            let sigma = params.noise_m(dev.os_class, loc.far_level());
            let radius = if sigma > 0.0 {
                sigma * (-2.0 * (1.0 - r.random::<f64>()).ln()).sqrt()
            } else {
                0.0
            };
            let bearing = r.random::<f64>() * std::f64::consts::TAU;
            let point = loc.centroid.offset_m(radius * bearing.sin(), radius * bearing.cos());
            let flipped = r.random::<f64>() < params.place_id_flip_prob;
            let place_id = if flipped {
                neighbours[loc.location_id.as_str()].clone()
            } else {
                loc.place_id.clone()
            };
            row.intersect = Some(t);
            row.noise_m = Some(radius);
            row.place_id_flipped = flipped;
            visits.push(PlaceVisit {
                latitude_e7: to_e7(point.lat),
                longitude_e7: to_e7(point.lon),
                place_id,
                name: Some(loc.name.clone()),
                address: None,
                device_tag: None,
                location_confidence: Some(if flipped { 40.0 } else { 90.0 }),
                start_ms: start,
                end_ms: end,
                place_confidence: Some("HIGH_CONFIDENCE".into()),
                center_lat_e7: None,
                center_lng_e7: None,
                visit_confidence: Some(90),
                other_candidates: Vec::new(),
                edit_confirmation_status: Some("NOT_CONFIRMED".into()),
            });
        }
        truth.push(row);
    }
    Ok((DeviceHistory::new(dev.device_id.clone(), visits, Vec::new())?, truth))
}

/// Simulated histories for every registered device of every participant.
pub fn simulate(activities: &[GroundTruthActivity], registries: &Registries, params: &SimParams) -> Result<SimOutput> {
    let problems = params.problems();
    if !problems.is_empty() {
        return Err(Error::Validation(problems.join("; ")));
    }
    let mut by_person: BTreeMap<&str, Vec<&GroundTruthActivity>> = BTreeMap::new();
    for a in activities {
        registries.location(&a.location_id)?;
        for p in &a.participant_ids {
            by_person.entry(p.as_str()).or_default().push(a);
        }
    }
    for (p, acts) in by_person.iter_mut() {
        if registries.devices_of(p).next().is_none() {
            return Err(Error::Dangling {
                kind: "person",
                id: p.to_string(),
            });
        }
        acts.sort_by_key(|a| (a.start_ms, a.end_ms));
    }
    let jobs: Vec<DeviceJob<'_>> = registries
        .devices
        .values()
        .enumerate()
        .map(|(i, d)| DeviceJob {
            index: i as u64,
            device: d,
            activities: by_person.get(d.person_id.as_str()).cloned().unwrap_or_default(),
        })
        .collect();
    let beta_dist = match params.temporal {
        TemporalLaw::ClippedBeta { alpha, beta, .. } => {
            Some(Beta::new(alpha, beta).map_err(|e| Error::Validation(format!("temporal law: {e}")))?)
        }
        TemporalLaw::Full => None,
    };
    let neighbours = neighbour_place_ids(registries);
    let results: Vec<Result<(DeviceHistory, Vec<TruthRow>)>> = jobs
        .par_iter()
        .map(|j| simulate_device(j, registries, &neighbours, params, beta_dist.as_ref()))
        .collect();
    let mut histories = BTreeMap::new();
    let mut truth = Vec::new();
    for r in results {
        let (h, t) = r?;
        truth.extend(t);
        histories.insert(h.device_id.clone(), h);
    }
    truth.sort_by(|a, b| {
        (a.activity_id.as_str(), a.person_id.as_str(), a.device_id.as_str()).cmp(&(
            b.activity_id.as_str(),
            b.person_id.as_str(),
            b.device_id.as_str(),
        ))
    });
    Ok(SimOutput { histories, truth })
}

/// P(Rayleigh(sigma) <= s).
pub fn rayleigh_cdf(s: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return if s >= 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - (-(s * s) / (2.0 * sigma * sigma)).exp()
}

/// Probability that a point displaced from `center` by Rayleigh noise lies
/// within `s` meters of the perimeter (0 inside). Quadrature over bearings;
/// along each ray the distance is assumed non-decreasing, which holds for
/// convex perimeters containing `center`.
pub fn open_space_pass_probability(perimeter: &Polygon, center: LatLon, sigma: f64, s: f64) -> f64 {
    if sigma <= 0.0 {
        return if perimeter.distance_m(&center) <= s { 1.0 } else { 0.0 };
    }
    const BEARINGS: usize = 720;
    let reach = perimeter
        .vertices()
        .iter()
        .map(|v| center.distance_m(v))
        .fold(0.0, f64::max)
        + s
        + 1.0;
    let mut total = 0.0;
    for k in 0..BEARINGS {
        let th = (k as f64 + 0.5) / BEARINGS as f64 * std::f64::consts::TAU;
        let at = |r: f64| perimeter.distance_m(&center.offset_m(r * th.sin(), r * th.cos()));
        let (mut lo, mut hi) = (0.0, reach);
        if at(lo) > s {
            continue;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if at(mid) <= s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        total += rayleigh_cdf(lo, sigma);
    }
    total / BEARINGS as f64
}

/// Probability that one simulated observation passes `thr`.
pub fn analytic_detection_probability(
    params: &SimParams,
    features: &Features,
    os: OsClass,
    location: &LocationRecord,
    thr: &ThresholdPair,
) -> f64 {
    let p_rec = params.recording.probability(features);
    let temporal = params.temporal.survival(thr.temporal() - TEMPORAL_TOLERANCE);
    let spatial = match thr.spatial() {
        SpatialCriterion::PlaceId => 1.0 - params.place_id_flip_prob,
        SpatialCriterion::Distance(s) => {
            let sigma = params.noise_m(os, location.far_level());
            match (&location.perimeter, location.open_space) {
                (Some(poly), true) => open_space_pass_probability(poly, location.centroid, sigma, s),
                _ => rayleigh_cdf(s, sigma),
            }
        }
    };
    p_rec * spatial * temporal
}

/// Two-class detectability that reproduces an individual rate `p1` and a
/// `g`-member joint rate `pg`: a share of activities is detected per device
/// with probability `p_hi`, the rest with `p_lo`. Returns `(share, p_hi)`.
pub fn calibrate_shared_detectability(p1: f64, pg: f64, g: u32, p_lo: f64) -> Result<(f64, f64)> {
    if !(0.0 <= p_lo && p_lo < p1 && p1 < 1.0 && pg > 0.0 && pg < p1 && g >= 2) {
        return Err(Error::Validation(format!(
            "cannot calibrate p1={p1}, p{g}={pg} with p_lo={p_lo}"
        )));
    }
    let gi = g as i32;
    let f = |p_hi: f64| {
        let share = (p1 - p_lo) / (p_hi - p_lo);
        share * p_hi.powi(gi) + (1.0 - share) * p_lo.powi(gi) - pg
    };
    let (mut lo, mut hi) = (p1, 1.0);
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return Err(Error::Validation(format!(
            "p{g}={pg} is not reachable from p1={p1} with p_lo={p_lo}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p_hi = 0.5 * (lo + hi);
    Ok(((p1 - p_lo) / (p_hi - p_lo), p_hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceKind {
    pub suffix: String,
    pub os_class: OsClass,
    pub model: String,
    pub wifi_on: bool,
}

/// Two Android phones and two iPhones, one of each with Wi-Fi on.
pub fn standard_device_kinds() -> Vec<DeviceKind> {
    let k = |suffix: &str, os, model: &str, wifi_on| DeviceKind {
        suffix: suffix.into(),
        os_class: os,
        model: model.into(),
        wifi_on,
    };
    vec![
        k("a1", OsClass::Android, "Sharp Aquos sense basic 702SH", true),
        k("a2", OsClass::Android, "Kyocera Digno J", false),
        k("i1", OsClass::Ios, "Apple iPhone XR", true),
        k("i2", OsClass::Ios, "Apple iPhone 6s", false),
    ]
}

/// Representative FAR value for generated locations of a level.
fn far_percent_for(level: FarLevel, k: usize) -> f64 {
    let spread = (k % 5) as f64;
    match level {
        FarLevel::OpenSpace => 0.0,
        FarLevel::LowDensity => 80.0 + 40.0 * spread,
        FarLevel::MidDensity => 320.0 + 80.0 * spread,
        FarLevel::HighDensity => 750.0 + 150.0 * spread,
    }
}

/// `per_level` locations of every FAR level around central Tokyo, one
/// district per level. Open spaces get 80 m square perimeters.
pub fn generate_location_pool(per_level: usize) -> Vec<LocationRecord> {
    let origin = LatLon::new(35.7120, 139.7620);
    let mut out = Vec::new();
    for (li, level) in FarLevel::ALL.iter().enumerate() {
        for k in 0..per_level {
            let c = origin.offset_m(1500.0 * li as f64 + 120.0 * (k % 10) as f64, 120.0 * (k / 10) as f64);
            let perimeter = (*level == FarLevel::OpenSpace).then(|| {
                Polygon::new(vec![
                    c.offset_m(-40.0, -40.0),
                    c.offset_m(40.0, -40.0),
                    c.offset_m(40.0, 40.0),
                    c.offset_m(-40.0, 40.0),
                ])
                .expect("square perimeter")
            });
            out.push(LocationRecord {
                location_id: format!("loc-{}-{k:03}", level.index()),
                place_id: format!("SYN{}{k:05}", level.index()),
                name: format!("{} {k}", level.label()),
                centroid: c,
                perimeter,
                far_percent: far_percent_for(*level, k),
                open_space: *level == FarLevel::OpenSpace,
                district: Some(format!("district-{}", level.index())),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub persons: usize,
    pub activities_per_group_size: BTreeMap<usize, usize>,
    pub device_kinds: Vec<DeviceKind>,
    pub locations_per_level: usize,
    /// Probability of each FAR level for an activity.
    pub level_shares: Vec<(FarLevel, f64)>,
    /// First activity start, epoch milliseconds.
    pub start_ms: i64,
    pub utc_offset_s: i32,
    pub duration_min_range: (u32, u32),
    pub min_gap_min: u32,
    /// Shuffle Wi-Fi settings among each person's devices of one OS class,
    /// so that model and Wi-Fi setting are not confounded.
    pub randomize_wifi: bool,
    pub seed: u64,
}

impl WorldConfig {
    /// The experiment's observation counts: 16/32/16/25 activities at group
    /// sizes 1-4, four participants with four devices each.
    pub fn experiment(seed: u64) -> Self {
        Self {
            persons: 4,
            activities_per_group_size: BTreeMap::from([(1, 16), (2, 32), (3, 16), (4, 25)]),
            device_kinds: standard_device_kinds(),
            locations_per_level: 10,
            level_shares: FarLevel::ALL.iter().map(|l| (*l, 0.25)).collect(),
            // 2020-12-17T09:00:00+09:00
            start_ms: 1_608_163_200_000,
            utc_offset_s: 9 * 3600,
            duration_min_range: (15, 60),
            min_gap_min: 5,
            randomize_wifi: true,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub registries: Registries,
    pub activities: Vec<GroundTruthActivity>,
}

/// Sequential, non-overlapping activities with random members, durations
/// and locations.
pub fn synthetic_world(config: &WorldConfig) -> Result<World> {
    use rand::seq::{IndexedRandom, SliceRandom};

    let max_g = config.activities_per_group_size.keys().copied().max().unwrap_or(0);
    if max_g > config.persons || config.activities_per_group_size.contains_key(&0) {
        return Err(Error::Validation(format!(
            "group sizes must lie in 1..={}",
            config.persons
        )));
    }
    if config.device_kinds.is_empty() || config.locations_per_level == 0 {
        return Err(Error::Validation("need at least one device kind and one location per level".into()));
    }
    let (dlo, dhi) = config.duration_min_range;
    if dlo == 0 || dhi < dlo {
        return Err(Error::Validation("duration range must be positive and ordered".into()));
    }
    let total_share: f64 = config.level_shares.iter().map(|(_, s)| s).sum();
    if config.level_shares.iter().any(|(_, s)| *s < 0.0) || total_share <= 0.0 {
        return Err(Error::Validation("level shares must be non-negative with a positive sum".into()));
    }

    let mut r = rng::master(config.seed);
    let pool = generate_location_pool(config.locations_per_level);
    let persons: Vec<String> = (1..=config.persons).map(|i| format!("p{i:02}")).collect();
    let mut devices = BTreeMap::new();
    for p in &persons {
        let mut wifi: Vec<bool> = config.device_kinds.iter().map(|k| k.wifi_on).collect();
        if config.randomize_wifi {
            for os in [OsClass::Android, OsClass::Ios] {
                let idx: Vec<usize> = (0..wifi.len()).filter(|i| config.device_kinds[*i].os_class == os).collect();
                let mut flags: Vec<bool> = idx.iter().map(|i| wifi[*i]).collect();
                flags.shuffle(&mut r);
                for (i, f) in idx.into_iter().zip(flags) {
                    wifi[i] = f;
                }
            }
        }
        for (k, wifi_on) in config.device_kinds.iter().zip(wifi) {
            let id = format!("{p}-{}", k.suffix);
            devices.insert(
                id.clone(),
                DeviceRecord {
                    device_id: id,
                    person_id: p.clone(),
                    os_class: k.os_class,
                    model: k.model.clone(),
                    wifi_on,
                },
            );
        }
    }
    let by_level: BTreeMap<FarLevel, Vec<&LocationRecord>> = FarLevel::ALL
        .iter()
        .map(|l| (*l, pool.iter().filter(|x| x.far_level() == *l).collect()))
        .collect();

    let mut sizes: Vec<usize> = config
        .activities_per_group_size
        .iter()
        .flat_map(|(g, n)| std::iter::repeat_n(*g, *n))
        .collect();
    sizes.shuffle(&mut r);
    let width = sizes.len().to_string().len().max(3);
    let mut activities = Vec::with_capacity(sizes.len());
    let mut t = config.start_ms;
    for (i, g) in sizes.into_iter().enumerate() {
        let mut u = r.random::<f64>() * total_share;
        let level = config
            .level_shares
            .iter()
            .find(|(_, s)| {
                u -= s;
                u < 0.0
            })
            .map_or(config.level_shares[config.level_shares.len() - 1].0, |(l, _)| *l);
        let loc = by_level[&level].choose(&mut r).expect("every level has locations");
        let mut members: Vec<String> = persons.choose_multiple(&mut r, g).cloned().collect();
        members.sort();
        let dur_ms = i64::from(r.random_range(dlo..=dhi)) * 60_000 + r.random_range(0..60) * 1000;
        let start = t;
        let end = start + dur_ms;
        activities.push(
            GroundTruthActivity::new(format!("s{:0width$}", i + 1), loc.location_id.clone(), start, end, members)?
                .with_utc_offset(config.utc_offset_s),
        );
        t = end + i64::from(config.min_gap_min) * 60_000 + r.random_range(0..=10) * 60_000;
    }
    Ok(World {
        registries: Registries {
            locations: pool.into_iter().map(|l| (l.location_id.clone(), l)).collect(),
            devices,
        },
        activities,
    })
}

pub const TRUTH_HEADER: [&str; 17] = [
    "activity_id",
    "person_id",
    "device_id",
    "os_class",
    "model",
    "wifi_on",
    "far_over_100",
    "duration_min",
    "open_space",
    "group_size",
    "recording_probability",
    "recorded",
    "intersect",
    "noise_m",
    "place_id_flipped",
    "android",
    "sharp702sh",
];

pub fn write_truth_csv<W: Write>(rows: &[TruthRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRUTH_HEADER)?;
    let na = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.6}"));
    for t in rows {
        w.write_record([
            t.activity_id.clone(),
            t.person_id.clone(),
            t.device_id.clone(),
            t.os_class.to_string(),
            t.model.clone(),
            t.wifi_on.to_string(),
            format!("{:.6}", t.features.far_over_100),
            format!("{:.6}", t.features.duration_min),
            t.features.open_space.to_string(),
            t.features.group_size.to_string(),
            format!("{:.9}", t.recording_probability),
            t.recorded.to_string(),
            na(t.intersect),
            na(t.noise_m),
            t.place_id_flipped.to_string(),
            (t.features.android_ratio == 1.0).to_string(),
            (t.features.sharp702sh_ratio == 1.0).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
