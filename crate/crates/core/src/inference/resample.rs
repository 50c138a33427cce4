//! Bootstrap intervals and composite-group resampling.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use super::effects::{all_effects, EffectKind, EffectOptions, EffectValue};
use super::logit::{fit_logit_with, Dataset, FitOptions};
use super::model::{dataset_from_features, joint_rows, ModelSpec};
use crate::accuracy::MatchedObservation;
use crate::detection::{DeviceClass, GroupObservation, ObservationIndex};
use crate::error::{Error, Result};
use crate::ingest::{GroundTruthActivity, Registries};
use crate::rng;

/// Share of failed iterations above which a warning is attached.
pub const FAILURE_WARNING_SHARE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct EffectEstimate {
    pub covariate: String,
    pub kind: EffectKind,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectReport {
    pub estimates: Vec<EffectEstimate>,
    /// Rows per fitted sample.
    pub n_obs: usize,
    pub n_iterations: usize,
    pub n_failed: usize,
    pub warning: Option<String>,
}

/// Linear-interpolation percentile of sorted values, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn fit_effects(data: &Dataset, fit_opts: &FitOptions, effects: &EffectOptions) -> Result<Vec<EffectValue>> {
    let fit = fit_logit_with(data, fit_opts)?;
    if !fit.converged {
        return Err(Error::Precondition("fit did not converge".into()));
    }
    all_effects(&fit, data, effects)
}

/// Collects per-iteration effects into estimates. `point` is `None` to use the
/// mean over iterations.
fn summarise(
    template: &[EffectValue],
    runs: &[Result<Vec<EffectValue>>],
    point: Option<&[EffectValue]>,
    n_obs: usize,
) -> Result<EffectReport> {
    let ok: Vec<&Vec<EffectValue>> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    let n_failed = runs.len() - ok.len();
    if ok.is_empty() {
        return Err(Error::Precondition(format!("all {} iterations failed", runs.len())));
    }
    let estimates = template
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut vals: Vec<f64> = ok.iter().map(|r| r[i].value).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.sort_by(f64::total_cmp);
            EffectEstimate {
                covariate: t.covariate.clone(),
                kind: t.kind,
                point: point.map_or(mean, |p| p[i].value),
                ci_low: percentile(&vals, 0.025),
                ci_high: percentile(&vals, 0.975),
            }
        })
        .collect();
    let warning = (n_failed as f64 > FAILURE_WARNING_SHARE * runs.len() as f64)
        .then(|| format!("{n_failed} of {} iterations failed and were excluded", runs.len()));
    Ok(EffectReport {
        estimates,
        n_obs,
        n_iterations: runs.len(),
        n_failed,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOptions {
    pub iterations: usize,
    pub seed: u64,
    pub effects: EffectOptions,
    pub fit: FitOptions,
}

impl BootstrapOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            iterations: 300,
            seed,
            effects: EffectOptions::default(),
            fit: FitOptions::default(),
        }
    }
}

/// Full-sample effects with percentile intervals from `iterations`
/// resamples of the rows.
pub fn bootstrap_effects(data: &Dataset, opts: &BootstrapOptions) -> Result<EffectReport> {
    if opts.iterations == 0 {
        return Err(Error::Validation("bootstrap needs at least one iteration".into()));
    }
    let full = fit_effects(data, &opts.fit, &opts.effects)?;
    let n = data.n_obs();
    let runs: Vec<Result<Vec<EffectValue>>> = (0..opts.iterations)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::derived(opts.seed, i as u64);
            let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            fit_effects(&data.subset(&idx), &opts.fit, &opts.effects)
        })
        .collect();
    summarise(&full, &runs, Some(&full), n)
}

/// Balancing cell: (wifi-on members, android members, group size).
pub type CellKey = (usize, usize, usize);

/// Every composite group of every activity, bucketed by cell.
#[derive(Debug, Clone)]
pub struct CompositePool<'a> {
    pub cells: BTreeMap<CellKey, Vec<GroupObservation<'a>>>,
    /// Activities with at least two participants.
    pub n_joint_activities: usize,
}

fn push_subsets<'a>(
    activity_id: &'a str,
    per_member: &[Vec<&'a MatchedObservation>],
    class: DeviceClass,
    cells: &mut BTreeMap<CellKey, Vec<GroupObservation<'a>>>,
) {
    let g = per_member.len();
    for mask in 1u32..(1 << g) {
        if mask.count_ones() < 2 {
            continue;
        }
        let chosen: Vec<&Vec<&MatchedObservation>> = (0..g).filter(|i| mask & (1 << i) != 0).map(|i| &per_member[i]).collect();
        let mut combos: Vec<Vec<&MatchedObservation>> = vec![Vec::new()];
        for devs in chosen {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    devs.iter().map(move |d| {
                        let mut c = c.clone();
                        c.push(*d);
                        c
                    })
                })
                .collect();
        }
        for members in combos {
            let grp = GroupObservation {
                activity_id,
                members,
                device_class: class,
            };
            let key = (grp.wifi_on_count(), grp.android_count(), grp.group_size());
            cells.entry(key).or_default().push(grp);
        }
    }
}

impl<'a> CompositePool<'a> {
    /// Enumerates member subsets of size 2..g with one admitted device per
    /// chosen member.
    pub fn build(
        activities: &'a [GroundTruthActivity],
        matched: &'a [MatchedObservation],
        class: DeviceClass,
    ) -> Result<Self> {
        let index = ObservationIndex::new(matched);
        let mut cells = BTreeMap::new();
        let mut n_joint = 0;
        for a in activities.iter().filter(|a| a.group_size() >= 2) {
            n_joint += 1;
            let per_member = index.member_devices(a, class)?;
            push_subsets(&a.activity_id, &per_member, class, &mut cells);
        }
        if cells.is_empty() {
            return Err(Error::Precondition("no joint activities to resample".into()));
        }
        Ok(Self {
            cells,
            n_joint_activities: n_joint,
        })
    }

    pub fn n_composites(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    /// Per-cell quota giving roughly `3296 * joint activities / 73` rows.
    pub fn default_quota(&self) -> usize {
        let total = (3296.0 * self.n_joint_activities as f64 / 73.0).round();
        ((total / self.cells.len() as f64).round() as usize).max(1)
    }

    /// `quota` draws with replacement from every cell, in cell order.
    pub fn draw<R: Rng + ?Sized>(&self, quota: usize, rng: &mut R) -> Vec<&GroupObservation<'a>> {
        let mut out = Vec::with_capacity(quota * self.cells.len());
        for groups in self.cells.values() {
            for _ in 0..quota {
                out.push(&groups[rng.random_range(0..groups.len())]);
            }
        }
        out
    }
}

/// One balanced draw of composite groups.
pub fn build_composite_groups<'a, R: Rng + ?Sized>(
    pool: &'a CompositePool<'a>,
    quota: Option<usize>,
    rng: &mut R,
) -> Vec<&'a GroupObservation<'a>> {
    pool.draw(quota.unwrap_or_else(|| pool.default_quota()), rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResampleOptions {
    pub repetitions: usize,
    pub seed: u64,
    /// Rows per cell; `None` scales the total to the available activities.
    pub quota_per_cell: Option<usize>,
    pub effects: EffectOptions,
    pub fit: FitOptions,
}

impl ResampleOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            repetitions: 300,
            seed,
            quota_per_cell: None,
            effects: EffectOptions::default(),
            fit: FitOptions::default(),
        }
    }
}

/// Effects averaged over repeated balanced composite draws.
pub fn resampled_effects(
    activities: &[GroundTruthActivity],
    matched: &[MatchedObservation],
    registries: &Registries,
    spec: &ModelSpec,
    opts: &ResampleOptions,
) -> Result<EffectReport> {
    if !spec.scope.is_joint() {
        return Err(Error::Validation(format!("scope {} is not a joint scope", spec.scope)));
    }
    if opts.repetitions == 0 {
        return Err(Error::Validation("resampling needs at least one repetition".into()));
    }
    let pool = CompositePool::build(activities, matched, spec.scope.device_class())?;
    let quota = opts.quota_per_cell.unwrap_or_else(|| pool.default_quota());
    let n_obs = quota * pool.cells.len();
    let runs: Vec<Result<Vec<EffectValue>>> = (0..opts.repetitions)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::derived(opts.seed, i as u64);
            let groups = pool.draw(quota, &mut r);
            let rows = joint_rows(&groups, activities, registries, spec)?;
            let data = dataset_from_features(&spec.covariates, &rows)?;
            fit_effects(&data, &opts.fit, &opts.effects)
        })
        .collect();
    let template = runs
        .iter()
        .find_map(|r| r.as_ref().ok())
        .cloned()
        .ok_or_else(|| Error::Precondition(format!("all {} repetitions failed", runs.len())))?;
    summarise(&template, &runs, None, n_obs)
}

pub const EFFECTS_HEADER: [&str; 11] = [
    "scope",
    "spatial_mode",
    "S_m",
    "T",
    "covariate",
    "kind",
    "point",
    "ci_low",
    "ci_high",
    "n_obs",
    "n_failed_iterations",
];

pub fn write_effects_csv<W: Write>(reports: &[(&ModelSpec, &EffectReport)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EFFECTS_HEADER)?;
    for (spec, rep) in reports {
        let thr = spec.threshold;
        for e in &rep.estimates {
            w.write_record([
                spec.scope.name().to_string(),
                thr.spatial().mode().to_string(),
                thr.spatial().meters().map_or("NA".into(), |s| s.to_string()),
                thr.temporal().to_string(),
                e.covariate.clone(),
                e.kind.to_string(),
                format!("{:.6}", e.point),
                format!("{:.6}", e.ci_low),
                format!("{:.6}", e.ci_high),
                rep.n_obs.to_string(),
                rep.n_failed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
