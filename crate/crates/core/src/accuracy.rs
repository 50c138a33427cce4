//! Pairing diary activities with recorded visits and scoring the pair.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::LatLon;
use crate::ingest::{DeviceHistory, DeviceRecord, GroundTruthActivity, LocationRecord, OsClass, PlaceVisit, Registries};

/// A half-open time interval in epoch milliseconds with `end > start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    start_ms: i64,
    end_ms: i64,
}

impl Interval {
    pub fn new(start_ms: i64, end_ms: i64) -> Result<Self> {
        if end_ms <= start_ms {
            return Err(Error::Interval { start_ms, end_ms });
        }
        Ok(Self { start_ms, end_ms })
    }

    pub fn start_ms(&self) -> i64 {
        self.start_ms
    }

    pub fn end_ms(&self) -> i64 {
        self.end_ms
    }

    pub fn len_ms(&self) -> i64 {
        self.end_ms - self.start_ms
    }

    pub fn overlap_ms(&self, other: &Interval) -> i64 {
        (self.end_ms.min(other.end_ms) - self.start_ms.max(other.start_ms)).max(0)
    }
}

impl From<&GroundTruthActivity> for Interval {
    fn from(a: &GroundTruthActivity) -> Self {
        Interval {
            start_ms: a.start_ms,
            end_ms: a.end_ms,
        }
    }
}

impl From<&PlaceVisit> for Interval {
    fn from(v: &PlaceVisit) -> Self {
        Interval {
            start_ms: v.start_ms,
            end_ms: v.end_ms,
        }
    }
}

/// Share of the ground-truth interval covered by the recorded one.
pub fn temporal_intersect(gt: Interval, rec: Interval) -> f64 {
    gt.overlap_ms(&rec) as f64 / gt.len_ms() as f64
}

/// Absolute start and end divergences, in minutes.
pub fn divergence_errors(gt: Interval, rec: Interval) -> (f64, f64) {
    (
        (gt.start_ms - rec.start_ms).abs() as f64 / 60_000.0,
        (gt.end_ms - rec.end_ms).abs() as f64 / 60_000.0,
    )
}

/// Distance in meters from a recorded position to the true location.
///
/// Open spaces are scored against their perimeter (zero inside), every other
/// location against its centroid.
pub fn spatial_error(point: LatLon, location: &LocationRecord) -> Result<f64> {
    if !point.is_valid() {
        return Err(Error::Validation(format!("coordinate ({}, {}) out of range", point.lat, point.lon)));
    }
    match (&location.perimeter, location.open_space) {
        (Some(poly), true) => Ok(poly.distance_m(&point)),
        _ => Ok(location.centroid.distance_m(&point)),
    }
}

/// Recorded quantities for one filled (activity, person, device) slot.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedMatch {
    pub observed_place_id: String,
    pub spatial_error_m: f64,
    pub start_divergence_min: f64,
    pub end_divergence_min: f64,
    pub place_id_match: bool,
}

/// One ground-truth activity as seen by one device of one participant.
///
/// `recorded` is `None` exactly when no visit overlaps the activity; the
/// accuracy fields are then undefined rather than zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedObservation {
    pub activity_id: String,
    pub person_id: String,
    pub device_id: String,
    pub os_class: OsClass,
    pub model: String,
    pub wifi_on: bool,
    pub intersect: f64,
    pub recorded: Option<RecordedMatch>,
}

impl MatchedObservation {
    pub fn missing(&self) -> bool {
        self.recorded.is_none()
    }

    pub fn spatial_error_m(&self) -> Option<f64> {
        self.recorded.as_ref().map(|r| r.spatial_error_m)
    }

    pub fn place_id_match(&self) -> bool {
        self.recorded.as_ref().is_some_and(|r| r.place_id_match)
    }

    pub fn is_702sh(&self) -> bool {
        self.model.to_ascii_uppercase().contains("702SH")
    }
}

/// Picks the visit with the largest overlap. Ties go to the smaller start
/// divergence, then to the earlier start.
fn best_visit<'a>(gt: Interval, history: &'a DeviceHistory) -> Option<(&'a PlaceVisit, i64)> {
    // Visits are sorted and disjoint, so both starts and ends are sorted.
    let first = history.visits.partition_point(|v| v.end_ms <= gt.start_ms);
    let last = history.visits.partition_point(|v| v.start_ms < gt.end_ms);
    history.visits[first..last.max(first)]
        .iter()
        .map(|v| (v, gt.overlap_ms(&Interval::from(v))))
        .filter(|(_, overlap)| *overlap > 0)
        .min_by_key(|(v, overlap)| (-overlap, (v.start_ms - gt.start_ms).abs(), v.start_ms))
}

/// Scores one device's history against a diary activity.
pub fn match_visit(
    activity: &GroundTruthActivity,
    history: &DeviceHistory,
    person_id: &str,
    device: &DeviceRecord,
    registries: &Registries,
) -> Result<MatchedObservation> {
    let location = registries.location(&activity.location_id)?;
    let gt = Interval::new(activity.start_ms, activity.end_ms)?;
    let mut obs = MatchedObservation {
        activity_id: activity.activity_id.clone(),
        person_id: person_id.to_string(),
        device_id: device.device_id.clone(),
        os_class: device.os_class,
        model: device.model.clone(),
        wifi_on: device.wifi_on,
        intersect: 0.0,
        recorded: None,
    };
    if let Some((visit, _)) = best_visit(gt, history) {
        let rec = Interval::from(visit);
        let (start_div, end_div) = divergence_errors(gt, rec);
        obs.intersect = temporal_intersect(gt, rec);
        obs.recorded = Some(RecordedMatch {
            observed_place_id: visit.place_id.clone(),
            spatial_error_m: spatial_error(visit.position(), location)?,
            start_divergence_min: start_div,
            end_divergence_min: end_div,
            place_id_match: visit.place_id == location.place_id,
        });
    }
    Ok(obs)
}

/// Matches every participant device of every activity. Devices without a
/// history file are treated as empty histories. Output is ordered by
/// activity, then person, then device.
pub fn match_all(
    activities: &[GroundTruthActivity],
    histories: &BTreeMap<String, DeviceHistory>,
    registries: &Registries,
) -> Result<Vec<MatchedObservation>> {
    let empty = DeviceHistory::default();
    let per_activity: Vec<Result<Vec<MatchedObservation>>> = activities
        .par_iter()
        .map(|a| {
            let mut out = Vec::new();
            let mut persons = a.participant_ids.clone();
            persons.sort();
            for person in &persons {
                let devices: Vec<_> = registries.devices_of(person).collect();
                if devices.is_empty() {
                    return Err(Error::Dangling {
                        kind: "person",
                        id: person.clone(),
                    });
                }
                for d in devices {
                    let h: &DeviceHistory = histories.get(&d.device_id).unwrap_or(&empty);
                    out.push(match_visit(a, h, person, d, registries)?);
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_activity {
        all.extend(r?);
    }
    Ok(all)
}

pub const MATCHED_HEADER: [&str; 12] = [
    "activity_id",
    "person_id",
    "device_id",
    "os_class",
    "model",
    "wifi_on",
    "spatial_error_m",
    "intersect",
    "start_div_min",
    "end_div_min",
    "missing",
    "place_id_match",
];

/// Undefined values are written as `NA`.
pub fn write_matched_csv<W: Write>(observations: &[MatchedObservation], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MATCHED_HEADER)?;
    let na = || "NA".to_string();
    for o in observations {
        let r = o.recorded.as_ref();
        w.write_record([
            o.activity_id.clone(),
            o.person_id.clone(),
            o.device_id.clone(),
            o.os_class.to_string(),
            o.model.clone(),
            o.wifi_on.to_string(),
            r.map_or_else(na, |r| format!("{:.3}", r.spatial_error_m)),
            format!("{:.6}", o.intersect),
            r.map_or_else(na, |r| format!("{:.3}", r.start_divergence_min)),
            r.map_or_else(na, |r| format!("{:.3}", r.end_divergence_min)),
            o.missing().to_string(),
            r.map_or_else(na, |r| r.place_id_match.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Polygon;
    use proptest::prelude::*;

    const MIN: i64 = 60_000;

    fn iv(a: i64, b: i64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    fn visit(place: &str, start: i64, end: i64, at: LatLon) -> PlaceVisit {
        PlaceVisit {
            latitude_e7: (at.lat * 1e7).round() as i64,
            longitude_e7: (at.lon * 1e7).round() as i64,
            place_id: place.into(),
            name: None,
            address: None,
            device_tag: None,
            location_confidence: None,
            start_ms: start,
            end_ms: end,
            place_confidence: None,
            center_lat_e7: None,
            center_lng_e7: None,
            visit_confidence: None,
            other_candidates: vec![],
            edit_confirmation_status: None,
        }
    }

    fn registries() -> Registries {
        let mut r = Registries::default();
        r.locations.insert(
            "garden".into(),
            LocationRecord {
                location_id: "garden".into(),
                place_id: "ChIJu8Eu6bONGGARxeXceJAa2Lg".into(),
                name: "Garden".into(),
                centroid: LatLon::new(35.7195376, 139.7450839),
                perimeter: None,
                far_percent: 200.0,
                open_space: false,
                district: None,
            },
        );
        r.devices.insert(
            "d1".into(),
            DeviceRecord {
                device_id: "d1".into(),
                person_id: "p1".into(),
                os_class: OsClass::Android,
                model: "702SH".into(),
                wifi_on: true,
            },
        );
        r
    }

    fn activity(start: i64, end: i64) -> GroundTruthActivity {
        GroundTruthActivity::new("a1", "garden", start, end, vec!["p1".into()]).unwrap()
    }

    #[test]
    fn intersect_examples() {
        let gt = iv(600 * MIN, 630 * MIN);
        assert_eq!(temporal_intersect(gt, gt), 1.0);
        let r = temporal_intersect(gt, iv(605 * MIN, 640 * MIN));
        assert!((r - 25.0 / 30.0).abs() < 1e-12);
        assert_eq!(temporal_intersect(gt, iv(660 * MIN, 670 * MIN)), 0.0);
        assert_eq!(temporal_intersect(gt, iv(590 * MIN, 700 * MIN)), 1.0);
    }

    #[test]
    fn degenerate_interval_rejected() {
        assert!(matches!(Interval::new(5, 5), Err(Error::Interval { .. })));
    }

    #[test]
    fn divergence_examples() {
        let gt = iv(600 * MIN, 630 * MIN);
        assert_eq!(divergence_errors(gt, gt), (0.0, 0.0));
        assert_eq!(divergence_errors(gt, iv(605 * MIN, 640 * MIN)), (5.0, 10.0));
        assert_eq!(divergence_errors(gt, iv(597 * MIN, 633 * MIN)), (3.0, 3.0));
    }

    #[test]
    fn spatial_error_examples() {
        let loc = registries().locations["garden"].clone();
        assert_eq!(spatial_error(loc.centroid, &loc).unwrap(), 0.0);

        let mut indoor = loc.clone();
        indoor.centroid = LatLon::new(35.72, 139.74);
        let north = LatLon::new(35.721, 139.74);
        assert!((spatial_error(north, &indoor).unwrap() - 111.195).abs() < 0.01);

        let mut park = loc.clone();
        park.open_space = true;
        park.perimeter = Some(
            Polygon::new(vec![
                LatLon::new(35.718, 139.744),
                LatLon::new(35.718, 139.746),
                LatLon::new(35.721, 139.746),
                LatLon::new(35.721, 139.744),
            ])
            .unwrap(),
        );
        assert_eq!(spatial_error(LatLon::new(35.7195, 139.7451), &park).unwrap(), 0.0);
        assert!(spatial_error(LatLon::new(35.7195, 139.7500), &park).unwrap() > 300.0);
    }

    #[test]
    fn perfect_record_matches() {
        let reg = registries();
        let loc = reg.locations["garden"].clone();
        let h = DeviceHistory::new(
            "d1",
            vec![visit(&loc.place_id, 1_608_168_891_941, 1_608_169_254_650, loc.centroid)],
            vec![],
        )
        .unwrap();
        let a = activity(1_608_168_900_000, 1_608_169_200_000);
        let o = match_visit(&a, &h, "p1", &reg.devices["d1"], &reg).unwrap();
        assert_eq!(o.intersect, 1.0);
        assert!(!o.missing());
        assert!(o.place_id_match());
        assert!(o.spatial_error_m().unwrap() < 0.01);
    }

    #[test]
    fn empty_history_is_missing() {
        let reg = registries();
        let a = activity(0, 30 * MIN);
        let o = match_visit(&a, &DeviceHistory::default(), "p1", &reg.devices["d1"], &reg).unwrap();
        assert!(o.missing());
        assert_eq!(o.intersect, 0.0);
        assert!(o.spatial_error_m().is_none());
        assert!(!o.place_id_match());
    }

    #[test]
    fn larger_overlap_wins() {
        let reg = registries();
        let c = reg.locations["garden"].centroid;
        // Visits within one history are disjoint, so the shares sum to at most 1: 30% vs 70%.
        let h = DeviceHistory::new(
            "d1",
            vec![visit("A", -20 * MIN, 30 * MIN, c), visit("B", 30 * MIN, 110 * MIN, c)],
            vec![],
        )
        .unwrap();
        let a = activity(0, 100 * MIN);
        let o = match_visit(&a, &h, "p1", &reg.devices["d1"], &reg).unwrap();
        assert_eq!(o.recorded.unwrap().observed_place_id, "B");
        assert!((o.intersect - 0.7).abs() < 1e-12);
    }

    #[test]
    fn ties_prefer_smaller_start_divergence() {
        let reg = registries();
        let c = reg.locations["garden"].centroid;
        // Both visits cover 30 of the 60 minutes.
        let h = DeviceHistory::new(
            "d1",
            vec![visit("early", -50 * MIN, 30 * MIN, c), visit("late", 30 * MIN, 90 * MIN, c)],
            vec![],
        )
        .unwrap();
        let a = activity(0, 60 * MIN);
        let o = match_visit(&a, &h, "p1", &reg.devices["d1"], &reg).unwrap();
        assert_eq!(o.recorded.unwrap().observed_place_id, "late");
    }

    #[test]
    fn dangling_location_is_an_error() {
        let reg = registries();
        let a = GroundTruthActivity::new("a", "nowhere", 0, MIN, vec!["p1".into()]).unwrap();
        let r = match_visit(&a, &DeviceHistory::default(), "p1", &reg.devices["d1"], &reg);
        assert!(matches!(r, Err(Error::Dangling { kind: "location", .. })));
    }

    #[test]
    fn csv_marks_undefined_fields() {
        let reg = registries();
        let a = activity(0, 30 * MIN);
        let o = match_visit(&a, &DeviceHistory::default(), "p1", &reg.devices["d1"], &reg).unwrap();
        let mut buf = Vec::new();
        write_matched_csv(&[o], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "a1,p1,d1,android,702SH,true,NA,0.000000,NA,NA,true,NA");
    }

    proptest! {
        #[test]
        fn intersect_is_monotone_in_recorded_interval(
            gs in 0i64..1000, gl in 1i64..500, rs in 0i64..1500, rl in 1i64..800, grow_l in 0i64..300, grow_r in 0i64..300,
        ) {
            let gt = iv(gs, gs + gl);
            let rec = iv(rs, rs + rl);
            let bigger = iv(rs - grow_l, rs + rl + grow_r);
            let t = temporal_intersect(gt, rec);
            prop_assert!((0.0..=1.0).contains(&t));
            prop_assert!(temporal_intersect(gt, bigger) >= t);
        }

        #[test]
        fn indoor_error_is_translation_consistent(dn in -200.0f64..200.0, de in -200.0f64..200.0, sn in -500.0f64..500.0, se in -500.0f64..500.0) {
            let base = LatLon::new(35.7, 139.7);
            let d0 = base.distance_m(&base.offset_m(de, dn));
            let shifted = base.offset_m(se, sn);
            let d1 = shifted.distance_m(&shifted.offset_m(de, dn));
            prop_assert!(d0 >= 0.0);
            prop_assert!((d0 - d1).abs() < 1e-3);
        }

        #[test]
        fn missing_iff_zero_intersect(vs in 0i64..200, vl in 1i64..100, gs in 0i64..200, gl in 1i64..100) {
            let reg = registries();
            let c = reg.locations["garden"].centroid;
            let h = DeviceHistory::new("d1", vec![visit("x", vs * MIN, (vs + vl) * MIN, c)], vec![]).unwrap();
            let a = activity(gs * MIN, (gs + gl) * MIN);
            let o = match_visit(&a, &h, "p1", &reg.devices["d1"], &reg).unwrap();
            prop_assert_eq!(o.missing(), o.intersect == 0.0);
        }
    }
}
