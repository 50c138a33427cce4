//! Monte-Carlo detection rates from the full simulate -> match -> detect
//! pipeline against the closed-form detection probability.

use std::collections::{BTreeMap, HashMap};

use jointdetect::accuracy::match_all;
use jointdetect::detection::{individual_detection, ThresholdPair};
use jointdetect::ingest::OsClass;
use jointdetect::simulator::{analytic_detection_probability, simulate, synthetic_world, SimParams, WorldConfig};

#[test]
fn pipeline_rates_agree_with_analytic_oracle() {
    let mut cfg = WorldConfig::experiment(31);
    cfg.activities_per_group_size = BTreeMap::from([(4, 6250)]);
    let w = synthetic_world(&cfg).unwrap();
    let params = SimParams::typical(31);
    let sim = simulate(&w.activities, &w.registries, &params).unwrap();
    let matched = match_all(&w.activities, &sim.histories, &w.registries).unwrap();
    assert_eq!(matched.len(), 100_000);

    let location_of: HashMap<&str, &str> = w
        .activities
        .iter()
        .map(|a| (a.activity_id.as_str(), a.location_id.as_str()))
        .collect();
    let truth: HashMap<(&str, &str), _> = sim
        .truth
        .iter()
        .map(|t| ((t.activity_id.as_str(), t.device_id.as_str()), t))
        .collect();

    let thresholds = [
        ThresholdPair::distance(10.0, 0.6).unwrap(),
        ThresholdPair::distance(50.0, 0.8).unwrap(),
        ThresholdPair::distance(100.0, 1.0).unwrap(),
        ThresholdPair::place_id(0.8).unwrap(),
    ];
    for thr in &thresholds {
        // Spatial and temporal factors depend only on location and OS.
        let mut factor: HashMap<(&str, OsClass), f64> = HashMap::new();
        let (mut hits, mut expected, mut var) = (0usize, 0.0, 0.0);
        for obs in &matched {
            let row = truth[&(obs.activity_id.as_str(), obs.device_id.as_str())];
            let loc_id = location_of[obs.activity_id.as_str()];
            let loc = &w.registries.locations[loc_id];
            let f = *factor.entry((loc_id, obs.os_class)).or_insert_with(|| {
                let mut always = params.clone();
                always.recording = jointdetect::simulator::RecordingModel::constant(1.0);
                analytic_detection_probability(&always, &row.features, obs.os_class, loc, thr)
            });
            let p = row.recording_probability * f;
            expected += p;
            var += p * (1.0 - p);
            hits += usize::from(individual_detection(obs, thr));
        }
        let n = matched.len() as f64;
        let (mc, oracle, sigma) = (hits as f64 / n, expected / n, var.sqrt() / n);
        assert!(
            (mc - oracle).abs() <= 3.0 * sigma,
            "{thr:?}: simulated {mc:.5}, analytic {oracle:.5}, sigma {sigma:.5}"
        );
    }
}
