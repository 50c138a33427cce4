//! End-to-end acceptance checks. Each test prints one line of the form
//! `criterion NN [PASS|FAIL] <summary>: <detail>` before asserting.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use jointdetect::accuracy::{match_all, MatchedObservation};
use jointdetect::detection::{
    detection_grid, enumerate_group_observations, group_detection, DeviceClass, GroupObservation, SpatialCriterion,
    ThresholdGrid, ThresholdPair,
};
use jointdetect::inference::{
    bootstrap_effects, dataset_from_features, elasticity_continuous, fit_logit, individual_rows, joint_rows, logistic,
    marginal_effect_continuous, BootstrapOptions, Column, Covariate, Dataset, EffectKind, ModelSpec, Scope, Weighting,
};
use jointdetect::ingest::{parse_location_history, FarLevel, GroundTruthActivity, OsClass};
use jointdetect::rng;
use jointdetect::scheduler::{allocate_duration_levels, check_feasibility, generate_schedule, DurationLevel, ScheduleConfig};
use jointdetect::simulator::{
    calibrate_shared_detectability, generate_location_pool, simulate, standard_device_kinds, synthetic_world,
    RecordingModel, SimParams, World, WorldConfig,
};
use jointdetect::validation::{confusion_metrics, ipw_weights};

fn report(n: u32, summary: &str, pass: bool, detail: impl AsRef<str>) {
    let status = if pass { "PASS" } else { "FAIL" };
    // Written to the raw handle so the line survives the test harness's capture.
    let line = format!("criterion {n:02} [{status}] {summary}: {}\n", detail.as_ref());
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {n} failed: {}", detail.as_ref());
}

fn world(seed: u64, persons: usize, counts: &[(usize, usize)]) -> WorldConfig {
    let mut c = WorldConfig::experiment(seed);
    c.persons = persons;
    c.activities_per_group_size = counts.iter().copied().collect();
    c
}

fn noiseless_with(recording: RecordingModel, seed: u64) -> SimParams {
    SimParams {
        recording,
        ..SimParams::noiseless(seed)
    }
}

fn run_pipeline(w: &World, params: &SimParams) -> Vec<MatchedObservation> {
    let out = simulate(&w.activities, &w.registries, params).unwrap();
    match_all(&w.activities, &out.histories, &w.registries).unwrap()
}

fn true_recording() -> RecordingModel {
    RecordingModel {
        intercept: -0.5,
        coefficients: vec![
            (Covariate::FarOver100, -0.15),
            (Covariate::DurationMin, 0.02),
            (Covariate::AndroidDummy, 1.5),
            (Covariate::OpenSpace, -0.5),
        ],
    }
}

const RECOVERY_COVARIATES: [Covariate; 4] = [
    Covariate::FarOver100,
    Covariate::DurationMin,
    Covariate::AndroidDummy,
    Covariate::OpenSpace,
];

fn recovery_spec() -> ModelSpec {
    ModelSpec::new(
        ThresholdPair::distance(50.0, 0.6).unwrap(),
        RECOVERY_COVARIATES.to_vec(),
        Scope::IndividualAllDevices,
    )
    .unwrap()
}

#[test]
fn criterion_01_location_history_fixture() {
    let start = Instant::now();
    let doc = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sample_export.json"))
        .unwrap();
    let h = parse_location_history("fixture", &doc).unwrap();
    let v = &h.visits[0];
    let p = v.position();
    let fields_ok = h.visits.len() == 1
        && (p.lat - 35.719_537_6).abs() < 1e-9
        && (p.lon - 139.745_083_9).abs() < 1e-9
        && v.latitude_e7 == 357_195_376
        && v.longitude_e7 == 1_397_450_839
        && v.place_id == "ChIJu8Eu6bONGGARxeXceJAa2Lg"
        && v.start_ms == 1_608_168_891_941
        && v.end_ms == 1_608_169_254_650;
    let back = parse_location_history("fixture", &h.to_json_string()).unwrap();
    let elapsed = start.elapsed();
    let pass = fields_ok && back == h && elapsed < Duration::from_secs(1);
    report(
        1,
        "location-history fixture parses and round-trips",
        pass,
        format!("fields {fields_ok}, round-trip {}, {elapsed:.2?}", back == h),
    );
}

#[test]
fn criterion_02_device_event_counts() {
    let start = Instant::now();
    let w = synthetic_world(&WorldConfig::experiment(2)).unwrap();
    let m = run_pipeline(&w, &SimParams::noiseless(2));
    let mut by_size = BTreeMap::new();
    for g in 1..=4 {
        let acts: Vec<GroundTruthActivity> = w.activities.iter().filter(|a| a.group_size() == g).cloned().collect();
        by_size.insert(g, enumerate_group_observations(&acts, &m, DeviceClass::Mixed).unwrap().device_events);
    }
    let total = enumerate_group_observations(&w.activities, &m, DeviceClass::Mixed)
        .unwrap()
        .device_events;
    let expected = BTreeMap::from([(1, 64), (2, 256), (3, 192), (4, 400)]);
    let elapsed = start.elapsed();
    let pass = by_size == expected && total == 912 && elapsed < Duration::from_secs(1);
    report(
        2,
        "device-event counts 64/256/192/400",
        pass,
        format!("{by_size:?}, total {total}, {elapsed:.2?}"),
    );
}

fn subsets<'a>(members: &[&'a MatchedObservation]) -> Vec<Vec<&'a MatchedObservation>> {
    let n = members.len();
    (1..(1u32 << n) - 1)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| members[i]).collect())
        .collect()
}

#[test]
fn criterion_03_threshold_monotonicity() {
    let start = Instant::now();
    let w = synthetic_world(&world(3, 4, &[(1, 500), (2, 500), (3, 200), (4, 100)])).unwrap();
    let m = run_pipeline(&w, &SimParams::typical(3));
    let grid: ThresholdGrid = "S:5,10,20,50,100,200;T:0.2,0.4,0.6,0.8,1.0".parse().unwrap();
    let classes = [DeviceClass::Android, DeviceClass::Ios, DeviceClass::Mixed];
    let cells = detection_grid(&w.activities, &m, &grid, &classes, &[1, 2, 3, 4]).unwrap();
    let rate: BTreeMap<(u64, u64, DeviceClass, usize), f64> = cells
        .iter()
        .filter_map(|c| {
            let s = c.threshold.spatial().meters()?;
            Some(((s.to_bits(), c.threshold.temporal().to_bits(), c.device_class, c.group_size), c.rate?))
        })
        .collect();
    let s_vals: Vec<f64> = grid.spatial.iter().filter_map(SpatialCriterion::meters).collect();
    let mut violations = 0;
    for class in classes {
        for g in 1..=4 {
            for (i, s) in s_vals.iter().enumerate() {
                for (j, t) in grid.temporal.iter().enumerate() {
                    let here = rate[&(s.to_bits(), t.to_bits(), class, g)];
                    if let Some(s2) = s_vals.get(i + 1) {
                        violations += usize::from(rate[&(s2.to_bits(), t.to_bits(), class, g)] < here);
                    }
                    if let Some(t2) = grid.temporal.get(j + 1) {
                        violations += usize::from(rate[&(s.to_bits(), t2.to_bits(), class, g)] > here);
                    }
                }
            }
        }
    }
    let mut dominance_failures = 0;
    let mut checked = 0;
    let pairs = grid.pairs().unwrap();
    for group in enumerate_group_observations(&w.activities, &m, DeviceClass::Mixed)
        .unwrap()
        .groups
        .iter()
        .filter(|g| g.group_size() >= 2)
    {
        for sub in subsets(&group.members) {
            let sg = GroupObservation::new(group.activity_id, sub, DeviceClass::Mixed).unwrap();
            for thr in &pairs {
                checked += 1;
                dominance_failures += usize::from(group_detection(group, thr) && !group_detection(&sg, thr));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = m.len() >= 10_000 && violations == 0 && dominance_failures == 0 && elapsed < Duration::from_secs(30);
    report(
        3,
        "rates monotone in S and T, subsets dominate groups",
        pass,
        format!(
            "{} observations, {violations} monotonicity violations, {dominance_failures} of {checked} subset checks failed, {elapsed:.2?}",
            m.len()
        ),
    );
}

#[test]
fn criterion_04_logit_recovery() {
    let start = Instant::now();
    let w = synthetic_world(&world(4, 4, &[(1, 500), (2, 500), (3, 200), (4, 100)])).unwrap();
    let m = run_pipeline(&w, &noiseless_with(true_recording(), 4));
    let spec = recovery_spec();
    let rows = individual_rows(&w.activities, &m, &w.registries, &spec).unwrap();
    let data = dataset_from_features(&spec.covariates, &rows).unwrap();
    let fit = fit_logit(&data).unwrap();
    let truth = [-0.5, -0.15, 0.02, 1.5, -0.5];
    let z: Vec<f64> = truth
        .iter()
        .enumerate()
        .map(|(k, b)| (fit.coefficients[k] - b) / fit.std_errors[k])
        .collect();
    let score = fit.score(&data).unwrap().amax();
    let elapsed = start.elapsed();
    let pass = data.n_obs() == 10_000
        && fit.converged
        && z.iter().all(|z| z.abs() <= 3.0)
        && score <= 1e-6
        && elapsed < Duration::from_secs(10);
    report(
        4,
        "logit recovers the generating coefficients",
        pass,
        format!(
            "n {}, z-scores {:?}, max |score| {score:.2e}, {elapsed:.2?}",
            data.n_obs(),
            z.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_05_effect_formulas_match_finite_differences() {
    let start = Instant::now();
    let mut r = rng::master(5);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let n = 3000;
        let b: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let x1: Vec<f64> = (0..n).map(|_| r.random_range(0.5..3.0)).collect();
        let x2: Vec<f64> = (0..n).map(|_| r.random_range(10.0..60.0) / 10.0).collect();
        let y: Vec<bool> = (0..n)
            .map(|i| r.random::<f64>() < logistic(b[0] + b[1] * x1[i] + b[2] * x2[i]))
            .collect();
        let data = Dataset::new(vec![Column::continuous("a", x1), Column::continuous("b", x2)], y).unwrap();
        let fit = fit_logit(&data).unwrap();
        let mean_p = |d: &Dataset| fit.probabilities(d).unwrap().mean();
        for name in ["a", "b"] {
            let h = 0.005;
            let up = mean_p(&data.scaled(name, 1.0 + h).unwrap()).ln();
            let down = mean_p(&data.scaled(name, 1.0 - h).unwrap()).ln();
            let fd_el = (up - down) / ((1.0 + h).ln() - (1.0 - h).ln());
            let el = elasticity_continuous(&fit, &data, name).unwrap();
            let d = 1e-4;
            let fd_me = (mean_p(&data.shifted(name, d).unwrap()) - mean_p(&data.shifted(name, -d).unwrap())) / (2.0 * d);
            let me = marginal_effect_continuous(&fit, &data, name, Weighting::Unweighted).unwrap();
            worst = worst.max(((el - fd_el) / fd_el).abs()).max(((me - fd_me) / fd_me).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-3 && elapsed < Duration::from_secs(10);
    report(
        5,
        "elasticities and marginal effects match finite differences",
        pass,
        format!("worst relative error {worst:.2e} over 5 fits, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_06_bootstrap_coverage() {
    let start = Instant::now();
    let spec = recovery_spec();
    let truth = [-0.5, -0.15, 0.02, 1.5, -0.5];
    let reps = 50;
    let mut covered = BTreeMap::from([("far_over_100", 0), ("duration_min", 0)]);
    for rep in 0..reps {
        let seed = 600 + rep;
        let w = synthetic_world(&world(seed, 4, &[(1, 50), (2, 50), (3, 50), (4, 50)])).unwrap();
        let m = run_pipeline(&w, &noiseless_with(true_recording(), seed));
        let rows = individual_rows(&w.activities, &m, &w.registries, &spec).unwrap();
        let data = dataset_from_features(&spec.covariates, &rows).unwrap();
        let rep_report = bootstrap_effects(&data, &BootstrapOptions::new(seed)).unwrap();
        let p: Vec<f64> = data
            .x()
            .row_iter()
            .map(|row| logistic(row.iter().zip(truth).map(|(x, b)| x * b).sum()))
            .collect();
        for (name, hits) in covered.iter_mut() {
            let k = data.column_index(name).unwrap();
            let num: f64 = p.iter().zip(data.x().column(k).iter()).map(|(pi, x)| pi * truth[k] * x * (1.0 - pi)).sum();
            let true_el = num / p.iter().sum::<f64>();
            let est = rep_report
                .estimates
                .iter()
                .find(|e| e.covariate == *name && e.kind == EffectKind::Elasticity)
                .unwrap();
            *hits += usize::from(est.ci_low <= true_el && true_el <= est.ci_high);
        }
    }
    let elapsed = start.elapsed();
    let min_rate = covered.values().map(|h| *h as f64 / reps as f64).fold(1.0, f64::min);
    let pass = min_rate >= 0.85 && elapsed < Duration::from_secs(300);
    report(
        6,
        "bootstrap intervals cover the true elasticity",
        pass,
        format!("covered {covered:?} of {reps}, {elapsed:.2?}"),
    );
}

/// One Android device per person, detection probability `p` per device.
fn independence_rate(p: f64, g: usize, n: usize, seed: u64) -> f64 {
    let mut c = world(seed, g, &[(g, n)]);
    c.device_kinds = standard_device_kinds().into_iter().take(1).collect();
    let w = synthetic_world(&c).unwrap();
    let m = run_pipeline(&w, &noiseless_with(RecordingModel::constant(p), seed));
    let grid: ThresholdGrid = "placeid;T:1.0".parse().unwrap();
    let cells = detection_grid(&w.activities, &m, &grid, &[DeviceClass::Android], &[g]).unwrap();
    assert_eq!(cells[0].n_obs, n);
    cells[0].rate.unwrap()
}

#[test]
fn criterion_07_joint_detection_independence() {
    let start = Instant::now();
    let n = 100_000;
    let p4 = independence_rate(0.25, 4, n, 7);
    let expected = 0.25f64.powi(4);
    let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
    let p2 = independence_rate(0.8, 2, n, 8);
    let elapsed = start.elapsed();
    let pass = (p4 - expected).abs() <= 3.0 * sigma && (p2 - 0.64).abs() <= 0.01 && elapsed < Duration::from_secs(60);
    report(
        7,
        "independent members multiply detection probabilities",
        pass,
        format!(
            "P4 {p4:.5} vs {expected:.5} (3 sigma {:.5}), P2 {p2:.4} vs 0.64, {elapsed:.2?}",
            3.0 * sigma
        ),
    );
}

#[test]
fn criterion_08_confusion_identities() {
    let start = Instant::now();
    let mut r = rng::master(8);
    let mut broken = 0;
    let mut undefined = 0;
    for _ in 0..1000 {
        let n = r.random_range(1..200);
        let probs: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let truth: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
        let m = confusion_metrics(&probs, &truth, 0.5).unwrap();
        match (m.tpr, m.fnr, m.tnr, m.fpr, m.balanced_accuracy) {
            (Some(tpr), Some(fnr), Some(tnr), Some(fpr), Some(bal)) => {
                broken += usize::from(tpr + fnr != 1.0 || tnr + fpr != 1.0 || bal != (tpr + tnr) / 2.0);
            }
            _ => undefined += 1,
        }
    }
    let elapsed = start.elapsed();
    let pass = broken == 0 && elapsed < Duration::from_secs(5);
    report(
        8,
        "confusion identities hold exactly",
        pass,
        format!("{broken} violations in 1000 vectors ({undefined} with an empty class), {elapsed:.2?}"),
    );
}

#[test]
fn criterion_09_ipw_recovers_joint_frequency() {
    let start = Instant::now();
    let n = 10_000;
    let mut c = world(9, 2, &[(2, n)]);
    c.device_kinds = standard_device_kinds().into_iter().take(1).collect();
    let w = synthetic_world(&c).unwrap();
    let recording = RecordingModel {
        intercept: 1.5,
        coefficients: vec![
            (Covariate::FarOver100, -0.2),
            (Covariate::DurationMin, 0.03),
            (Covariate::OpenSpace, -0.8),
        ],
    };
    let sim = simulate(&w.activities, &w.registries, &noiseless_with(recording, 9)).unwrap();
    let m = match_all(&w.activities, &sim.histories, &w.registries).unwrap();
    // True joint detection probability per activity.
    let mut joint_p: BTreeMap<&str, f64> = BTreeMap::new();
    for t in &sim.truth {
        *joint_p.entry(t.activity_id.as_str()).or_insert(1.0) *= t.recording_probability;
    }
    let mean_true = joint_p.values().sum::<f64>() / n as f64;
    let se = (joint_p.values().map(|p| p * (1.0 - p)).sum::<f64>()).sqrt() / n as f64;

    let spec = ModelSpec::new(
        ThresholdPair::place_id(1.0).unwrap(),
        vec![Covariate::FarOver100, Covariate::DurationMin, Covariate::OpenSpace],
        Scope::JointAndroidOnly,
    )
    .unwrap();
    let groups = enumerate_group_observations(&w.activities, &m, DeviceClass::Android).unwrap();
    let refs: Vec<&GroupObservation<'_>> = groups.groups.iter().collect();
    let rows = joint_rows(&refs, &w.activities, &w.registries, &spec).unwrap();
    let data = dataset_from_features(&spec.covariates, &rows).unwrap();
    let fit = fit_logit(&data).unwrap();
    let est = ipw_weights(&fit, &data, 0.01).unwrap();
    let raw = est.raw_frequency(n as f64);
    let weighted = est.weighted_frequency(n as f64);
    let elapsed = start.elapsed();
    let pass = (weighted - 1.0).abs() <= 0.05
        && (raw - mean_true).abs() <= 3.0 * se
        && raw < 0.95
        && elapsed < Duration::from_secs(30);
    report(
        9,
        "IPW restores the joint-activity frequency",
        pass,
        format!(
            "weighted {weighted:.4} of truth, raw {raw:.4} vs 1 - mean miss rate {mean_true:.4}, {} flagged, {elapsed:.2?}",
            est.flagged.len()
        ),
    );
}

#[test]
fn criterion_10_scheduler_soundness() {
    let start = Instant::now();
    let pool = generate_location_pool(5);
    let centre = pool[0].centroid;
    let mut infeasible = Vec::new();
    for seed in 0..100 {
        let cfg = ScheduleConfig::new(pool.clone(), centre, centre, seed);
        match generate_schedule(&cfg) {
            Ok(s) => {
                let v = check_feasibility(&s, &cfg);
                if !v.is_empty() {
                    infeasible.push(format!("seed {seed}: {}", v[0].message));
                }
            }
            Err(e) => infeasible.push(format!("seed {seed}: {e}")),
        }
    }
    let mut r = rng::master(10);
    let mut counts = [0usize; 3];
    let draws = 1000;
    for _ in 0..draws {
        for l in allocate_duration_levels(1, &DurationLevel::ALL, &mut r) {
            counts[l.index() as usize - 1] += 1;
        }
    }
    let shares: Vec<f64> = counts.iter().map(|c| *c as f64 / draws as f64).collect();
    let elapsed = start.elapsed();
    let pass = infeasible.is_empty()
        && shares.iter().all(|s| (s - 1.0 / 3.0).abs() <= 0.05)
        && elapsed < Duration::from_secs(30);
    report(
        10,
        "schedules feasible, duration bands uniform",
        pass,
        format!("{} of 100 infeasible {:?}, band shares {shares:?}, {elapsed:.2?}", infeasible.len(), infeasible.first()),
    );
}

#[test]
fn criterion_11_calibration_self_consistency() {
    let start = Instant::now();
    let (target1, target4) = (0.257, 0.22);
    let p_lo = 0.01;
    let (share, p_hi) = calibrate_shared_detectability(target1, target4, 4, p_lo).unwrap();
    let logit = |p: f64| (p / (1.0 - p)).ln();
    // Good places at FAR 100%, poor ones at FAR 900%.
    let b_far = (logit(p_lo) - logit(p_hi)) / 8.0;
    let b0 = logit(p_hi) - b_far;
    let mut c = world(11, 4, &[(1, 5000), (4, 5000)]);
    c.level_shares = vec![(FarLevel::LowDensity, share), (FarLevel::HighDensity, 1.0 - share)];
    let mut w = synthetic_world(&c).unwrap();
    for loc in w.registries.locations.values_mut() {
        match loc.far_level() {
            FarLevel::LowDensity => loc.far_percent = 100.0,
            FarLevel::HighDensity => loc.far_percent = 900.0,
            _ => {}
        }
    }
    let recording = RecordingModel {
        intercept: b0,
        coefficients: vec![(Covariate::FarOver100, b_far)],
    };
    let m = run_pipeline(&w, &noiseless_with(recording, 11));
    let grid: ThresholdGrid = "placeid;T:1.0".parse().unwrap();
    let cells = detection_grid(&w.activities, &m, &grid, &[DeviceClass::Android], &[1, 4]).unwrap();
    let p1 = cells[0].rate.unwrap();
    let p4 = cells[1].rate.unwrap();
    let elapsed = start.elapsed();
    let pass = (p1 - target1).abs() <= 0.02 && (p4 - target4).abs() <= 0.02 && elapsed < Duration::from_secs(60);
    report(
        11,
        "calibrated simulator reproduces android place-ID rates",
        pass,
        format!("P1 {p1:.4} (target {target1}), P4 {p4:.4} (target {target4}), share {share:.4}, p_hi {p_hi:.4}, {elapsed:.2?}"),
    );
}

fn run_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_jointdetect")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "jointdetect {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_12_cli_determinism() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let sim_cfg = root.join("simulate.json");
    std::fs::write(
        &sim_cfg,
        r#"{"seed": 12, "thresholds": "S:50;T:0.6",
            "simulate": {"world": {"activities_per_group_size": {"1": 40, "2": 40, "3": 40, "4": 40}}}}"#,
    )
    .unwrap();
    let sched_cfg = root.join("schedule.json");
    std::fs::write(&sched_cfg, r#"{"seed": 12, "schedule": {"synthetic_pool_per_level": 4}}"#).unwrap();

    let threads = ["1", "3"];
    for t in threads {
        let o = root.join(format!("t{t}"));
        let corpus = o.join("simulate");
        run_cli(&["simulate", "--config", sim_cfg.to_str().unwrap(), "--out", corpus.to_str().unwrap(), "--threads", t]);
        let pipeline = corpus.join("pipeline.json");
        for cmd in ["match", "grid", "fit", "cv", "ipw"] {
            let dest = o.join(cmd);
            let mut args = vec![cmd, "--config", pipeline.to_str().unwrap(), "--out", dest.to_str().unwrap(), "--threads", t];
            if cmd == "grid" {
                args.extend(["--thresholds", "S:10,50;T:0.6,0.8,1.0;placeid"]);
            }
            run_cli(&args);
        }
        let dest = o.join("schedule");
        run_cli(&["schedule", "--config", sched_cfg.to_str().unwrap(), "--out", dest.to_str().unwrap(), "--threads", t]);
    }
    let a = files_under(&root.join("t1"));
    let b = files_under(&root.join("t3"));
    let differing: Vec<&PathBuf> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    let pass = !a.is_empty() && a.len() == b.len() && differing.is_empty();
    report(
        12,
        "CLI outputs byte-identical across thread counts",
        pass,
        format!(
            "{} files compared, {} differ {:?}, {:.2?}",
            a.len(),
            differing.len(),
            differing.first(),
            start.elapsed()
        ),
    );
}

#[test]
fn shuffled_roster_counts_do_not_depend_on_order() {
    // The counting in criterion 2 is order-free: shuffling activities keeps it.
    let w = synthetic_world(&WorldConfig::experiment(21)).unwrap();
    let m = run_pipeline(&w, &SimParams::noiseless(21));
    let mut acts = w.activities.clone();
    acts.shuffle(&mut rng::master(1));
    let a = enumerate_group_observations(&w.activities, &m, DeviceClass::Mixed).unwrap().device_events;
    let b = enumerate_group_observations(&acts, &m, DeviceClass::Mixed).unwrap().device_events;
    assert_eq!(a, b);
    assert!(m.iter().all(|o| o.os_class == OsClass::Android || o.os_class == OsClass::Ios));
}
