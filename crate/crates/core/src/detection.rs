//! Threshold-based detection of individual and group activities.
//!
//! An observation is detected when its spatial error is within the spatial
//! threshold `S` (or its Place ID matches) and its temporal intersect is at
//! least `T`. A group is detected only when every member is.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::accuracy::MatchedObservation;
use crate::error::{Error, Result};
use crate::ingest::{GroundTruthActivity, OsClass};

/// Slack for comparing intersects against `T`, so full-coverage intersects
/// that lost a bit to rounding still pass `T = 1`.
pub const TEMPORAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialCriterion {
    /// Maximum acceptable distance in meters.
    Distance(f64),
    /// Recorded Place ID must equal the true one.
    PlaceId,
}

impl SpatialCriterion {
    pub fn mode(&self) -> &'static str {
        match self {
            SpatialCriterion::Distance(_) => "distance",
            SpatialCriterion::PlaceId => "place_id",
        }
    }

    pub fn meters(&self) -> Option<f64> {
        match self {
            SpatialCriterion::Distance(s) => Some(*s),
            SpatialCriterion::PlaceId => None,
        }
    }

    fn sort_key(&self) -> (u8, f64) {
        match self {
            SpatialCriterion::Distance(s) => (0, *s),
            SpatialCriterion::PlaceId => (1, 0.0),
        }
    }
}

impl fmt::Display for SpatialCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpatialCriterion::Distance(s) => write!(f, "S={s}m"),
            SpatialCriterion::PlaceId => f.write_str("S=gID"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPair {
    spatial: SpatialCriterion,
    temporal: f64,
}

impl ThresholdPair {
    pub fn new(spatial: SpatialCriterion, temporal: f64) -> Result<Self> {
        if let SpatialCriterion::Distance(s) = spatial {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Threshold(format!("spatial threshold must be positive, got {s}")));
            }
        }
        if !(temporal > 0.0 && temporal <= 1.0) {
            return Err(Error::Threshold(format!(
                "temporal threshold must lie in (0, 1], got {temporal}"
            )));
        }
        Ok(Self { spatial, temporal })
    }

    pub fn distance(meters: f64, temporal: f64) -> Result<Self> {
        Self::new(SpatialCriterion::Distance(meters), temporal)
    }

    pub fn place_id(temporal: f64) -> Result<Self> {
        Self::new(SpatialCriterion::PlaceId, temporal)
    }

    pub fn spatial(&self) -> SpatialCriterion {
        self.spatial
    }

    pub fn temporal(&self) -> f64 {
        self.temporal
    }

    fn sort_key(&self) -> (u8, f64, f64) {
        let (m, s) = self.spatial.sort_key();
        (m, s, self.temporal)
    }

    pub fn cmp_key(&self, other: &Self) -> Ordering {
        let (a, b) = (self.sort_key(), other.sort_key());
        a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2))
    }
}

impl fmt::Display for ThresholdPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} T={}", self.spatial, self.temporal)
    }
}

fn temporal_pass(intersect: f64, t: f64) -> bool {
    intersect > 0.0 && intersect >= t - TEMPORAL_TOLERANCE
}

/// Distance-mode detection of one observation.
pub fn individual_detection(obs: &MatchedObservation, thr: &ThresholdPair) -> bool {
    match thr.spatial {
        SpatialCriterion::Distance(s) => {
            obs.spatial_error_m().is_some_and(|e| e <= s) && temporal_pass(obs.intersect, thr.temporal)
        }
        SpatialCriterion::PlaceId => individual_detection_place_id(obs, thr.temporal),
    }
}

/// Place-ID-mode detection; `t` is assumed to have been validated.
pub fn individual_detection_place_id(obs: &MatchedObservation, t: f64) -> bool {
    obs.place_id_match() && temporal_pass(obs.intersect, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DeviceClass {
    Android,
    Ios,
    /// Any device of each member.
    Mixed,
}

impl DeviceClass {
    pub fn admits(self, os: OsClass) -> bool {
        match self {
            DeviceClass::Android => os == OsClass::Android,
            DeviceClass::Ios => os == OsClass::Ios,
            DeviceClass::Mixed => true,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceClass::Android => "android",
            DeviceClass::Ios => "ios",
            DeviceClass::Mixed => "mixed",
        }
    }
}

impl fmt::Display for DeviceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeviceClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "android" => Ok(DeviceClass::Android),
            "ios" | "iphone" => Ok(DeviceClass::Ios),
            "mixed" | "all" => Ok(DeviceClass::Mixed),
            other => Err(Error::Validation(format!("unknown device class `{other}`"))),
        }
    }
}

/// One device per distinct member of an activity.
#[derive(Debug, Clone)]
pub struct GroupObservation<'a> {
    pub activity_id: &'a str,
    pub members: Vec<&'a MatchedObservation>,
    pub device_class: DeviceClass,
}

impl<'a> GroupObservation<'a> {
    pub fn new(activity_id: &'a str, members: Vec<&'a MatchedObservation>, device_class: DeviceClass) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Validation(format!("group for {activity_id} has no members")));
        }
        for (i, m) in members.iter().enumerate() {
            if m.activity_id != activity_id {
                return Err(Error::Validation(format!(
                    "member {} belongs to activity {}, not {activity_id}",
                    m.device_id, m.activity_id
                )));
            }
            if members[..i].iter().any(|o| o.person_id == m.person_id) {
                return Err(Error::Validation(format!(
                    "person {} appears twice in a group for {activity_id}",
                    m.person_id
                )));
            }
        }
        Ok(Self {
            activity_id,
            members,
            device_class,
        })
    }

    pub fn group_size(&self) -> usize {
        self.members.len()
    }

    fn ratio(&self, pred: impl Fn(&MatchedObservation) -> bool) -> f64 {
        self.members.iter().filter(|m| pred(m)).count() as f64 / self.members.len() as f64
    }

    pub fn android_ratio(&self) -> f64 {
        self.ratio(|m| m.os_class == OsClass::Android)
    }

    pub fn wifi_on_ratio(&self) -> f64 {
        self.ratio(|m| m.wifi_on)
    }

    pub fn sharp702sh_ratio(&self) -> f64 {
        self.ratio(MatchedObservation::is_702sh)
    }

    pub fn android_count(&self) -> usize {
        self.members.iter().filter(|m| m.os_class == OsClass::Android).count()
    }

    pub fn wifi_on_count(&self) -> usize {
        self.members.iter().filter(|m| m.wifi_on).count()
    }
}

/// Product of the member detections.
pub fn group_detection(grp: &GroupObservation<'_>, thr: &ThresholdPair) -> bool {
    grp.members.iter().all(|m| individual_detection(m, thr))
}

/// Matched observations indexed by (activity, person).
pub struct ObservationIndex<'a> {
    by_slot: BTreeMap<(&'a str, &'a str), Vec<&'a MatchedObservation>>,
}

impl<'a> ObservationIndex<'a> {
    pub fn new(matched: &'a [MatchedObservation]) -> Self {
        let mut by_slot: BTreeMap<(&str, &str), Vec<&MatchedObservation>> = BTreeMap::new();
        for m in matched {
            by_slot
                .entry((m.activity_id.as_str(), m.person_id.as_str()))
                .or_default()
                .push(m);
        }
        for v in by_slot.values_mut() {
            v.sort_by(|a, b| a.device_id.cmp(&b.device_id));
        }
        Self { by_slot }
    }

    /// Devices of `person` admitted by `class` for one activity, sorted by id.
    pub fn devices(&self, activity_id: &str, person_id: &str, class: DeviceClass) -> Vec<&'a MatchedObservation> {
        self.by_slot
            .get(&(activity_id, person_id))
            .map(|v| v.iter().copied().filter(|m| class.admits(m.os_class)).collect())
            .unwrap_or_default()
    }

    /// Per-member device lists for an activity (members sorted by person id).
    pub fn member_devices(
        &self,
        activity: &'a GroundTruthActivity,
        class: DeviceClass,
    ) -> Result<Vec<Vec<&'a MatchedObservation>>> {
        let mut persons: Vec<&str> = activity.participant_ids.iter().map(String::as_str).collect();
        persons.sort_unstable();
        persons
            .into_iter()
            .map(|p| {
                let devs = self.devices(&activity.activity_id, p, class);
                if devs.is_empty() {
                    Err(Error::Precondition(format!(
                        "participant {p} of {} has no {class} device observation",
                        activity.activity_id
                    )))
                } else {
                    Ok(devs)
                }
            })
            .collect()
    }
}

/// All group observations for one device class plus the number of distinct
/// device observations they draw on.
#[derive(Debug, Clone)]
pub struct GroupEnumeration<'a> {
    pub groups: Vec<GroupObservation<'a>>,
    pub device_events: usize,
}

impl GroupEnumeration<'_> {
    pub fn device_events_by_size(&self, index: &ObservationIndex<'_>, activities: &[GroundTruthActivity], class: DeviceClass) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for a in activities {
            let n: usize = a
                .participant_ids
                .iter()
                .map(|p| index.devices(&a.activity_id, p, class).len())
                .sum();
            *out.entry(a.group_size()).or_insert(0) += n;
        }
        out
    }
}

/// Cartesian product of the per-member device lists, in lexicographic order.
fn device_combinations<'a>(per_member: &[Vec<&'a MatchedObservation>]) -> Vec<Vec<&'a MatchedObservation>> {
    let mut combos: Vec<Vec<&MatchedObservation>> = vec![Vec::with_capacity(per_member.len())];
    for devs in per_member {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                devs.iter().map(move |d| {
                    let mut c = prefix.clone();
                    c.push(*d);
                    c
                })
            })
            .collect();
    }
    combos
}

/// Every assignment of one admitted device to each member of each activity.
///
/// With two devices per person and class this yields `2^g` group
/// observations per activity; the distinct device observations involved
/// (`device_events`) number `2g` per class, `4g` across classes.
pub fn enumerate_group_observations<'a>(
    activities: &'a [GroundTruthActivity],
    matched: &'a [MatchedObservation],
    device_class: DeviceClass,
) -> Result<GroupEnumeration<'a>> {
    let index = ObservationIndex::new(matched);
    let mut groups = Vec::new();
    let mut device_events = 0;
    for a in activities {
        let per_member = index.member_devices(a, device_class)?;
        device_events += per_member.iter().map(Vec::len).sum::<usize>();
        for combo in device_combinations(&per_member) {
            groups.push(GroupObservation {
                activity_id: &a.activity_id,
                members: combo,
                device_class,
            });
        }
    }
    Ok(GroupEnumeration { groups, device_events })
}

/// One uniformly drawn device assignment per activity, so that groups from
/// different activities are independent.
pub fn sample_group_observations<'a, R: Rng + ?Sized>(
    activities: &'a [GroundTruthActivity],
    matched: &'a [MatchedObservation],
    device_class: DeviceClass,
    rng: &mut R,
) -> Result<Vec<GroupObservation<'a>>> {
    let index = ObservationIndex::new(matched);
    activities
        .iter()
        .map(|a| {
            let per_member = index.member_devices(a, device_class)?;
            let members = per_member.iter().map(|devs| devs[rng.random_range(0..devs.len())]).collect();
            Ok(GroupObservation {
                activity_id: &a.activity_id,
                members,
                device_class,
            })
        })
        .collect()
}

/// Rate `P_g` for one threshold, class and group size. `rate` is `None`
/// when the cell holds no observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRateCell {
    pub threshold: ThresholdPair,
    pub device_class: DeviceClass,
    pub group_size: usize,
    pub detected: usize,
    pub n_obs: usize,
    pub rate: Option<f64>,
}

pub fn detection_rate(
    groups: &[GroupObservation<'_>],
    thr: &ThresholdPair,
    group_size: usize,
    device_class: DeviceClass,
) -> DetectionRateCell {
    let mut n = 0;
    let mut detected = 0;
    for g in groups.iter().filter(|g| g.group_size() == group_size) {
        n += 1;
        detected += usize::from(group_detection(g, thr));
    }
    DetectionRateCell {
        threshold: *thr,
        device_class,
        group_size,
        detected,
        n_obs: n,
        rate: (n > 0).then(|| detected as f64 / n as f64),
    }
}

/// The thresholds swept by a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid {
    pub spatial: Vec<SpatialCriterion>,
    pub temporal: Vec<f64>,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self {
            spatial: vec![
                SpatialCriterion::Distance(10.0),
                SpatialCriterion::Distance(50.0),
                SpatialCriterion::PlaceId,
            ],
            temporal: vec![0.6, 0.8, 1.0],
        }
    }
}

impl ThresholdGrid {
    pub fn pairs(&self) -> Result<Vec<ThresholdPair>> {
        if self.spatial.is_empty() || self.temporal.is_empty() {
            return Err(Error::Threshold("threshold lists must be non-empty".into()));
        }
        let mut out = Vec::new();
        for s in &self.spatial {
            for t in &self.temporal {
                out.push(ThresholdPair::new(*s, *t)?);
            }
        }
        out.sort_by(ThresholdPair::cmp_key);
        Ok(out)
    }
}

/// Parses `"S:10,50;T:0.6,0.8,1.0;placeid"`.
impl FromStr for ThresholdGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut grid = ThresholdGrid {
            spatial: Vec::new(),
            temporal: Vec::new(),
        };
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Threshold(format!("`{v}` is not a number")))
        };
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            if part.eq_ignore_ascii_case("placeid") || part.eq_ignore_ascii_case("gid") {
                grid.spatial.push(SpatialCriterion::PlaceId);
            } else if let Some(list) = part.strip_prefix("S:").or_else(|| part.strip_prefix("s:")) {
                for v in list.split(',') {
                    grid.spatial.push(SpatialCriterion::Distance(num(v)?));
                }
            } else if let Some(list) = part.strip_prefix("T:").or_else(|| part.strip_prefix("t:")) {
                for v in list.split(',') {
                    grid.temporal.push(num(v)?);
                }
            } else {
                return Err(Error::Threshold(format!("unrecognised threshold clause `{part}`")));
            }
        }
        grid.pairs()?;
        Ok(grid)
    }
}

/// Cross product of thresholds, classes and group sizes, sorted by
/// (spatial mode, S, T, class, g).
pub fn detection_grid(
    activities: &[GroundTruthActivity],
    matched: &[MatchedObservation],
    grid: &ThresholdGrid,
    classes: &[DeviceClass],
    group_sizes: &[usize],
) -> Result<Vec<DetectionRateCell>> {
    let pairs = grid.pairs()?;
    let mut cells = Vec::new();
    for &class in classes {
        let groups = enumerate_group_observations(activities, matched, class)?.groups;
        let jobs: Vec<(ThresholdPair, usize)> = pairs
            .iter()
            .flat_map(|p| group_sizes.iter().map(move |g| (*p, *g)))
            .collect();
        cells.par_extend(jobs.par_iter().map(|(p, g)| detection_rate(&groups, p, *g, class)));
    }
    cells.sort_by(|a, b| {
        a.threshold
            .cmp_key(&b.threshold)
            .then(a.device_class.cmp(&b.device_class))
            .then(a.group_size.cmp(&b.group_size))
    });
    Ok(cells)
}

/// Wi-Fi composition of a group observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum WifiSlot {
    AllOn,
    AllOff,
    Mixed,
}

impl WifiSlot {
    pub fn of(group: &GroupObservation<'_>) -> Self {
        match group.wifi_on_count() {
            0 => WifiSlot::AllOff,
            n if n == group.group_size() => WifiSlot::AllOn,
            _ => WifiSlot::Mixed,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WifiSlot::AllOn => "all_on",
            WifiSlot::AllOff => "all_off",
            WifiSlot::Mixed => "mixed",
        }
    }
}

/// The same grid split by the Wi-Fi composition of each group observation.
pub fn detection_grid_by_wifi(
    activities: &[GroundTruthActivity],
    matched: &[MatchedObservation],
    grid: &ThresholdGrid,
    classes: &[DeviceClass],
    group_sizes: &[usize],
) -> Result<Vec<(WifiSlot, DetectionRateCell)>> {
    let pairs = grid.pairs()?;
    let mut out = Vec::new();
    for &class in classes {
        let groups = enumerate_group_observations(activities, matched, class)?.groups;
        for slot in [WifiSlot::AllOn, WifiSlot::AllOff, WifiSlot::Mixed] {
            let subset: Vec<_> = groups.iter().filter(|g| WifiSlot::of(g) == slot).cloned().collect();
            for p in &pairs {
                for &g in group_sizes {
                    out.push((slot, detection_rate(&subset, p, g, class)));
                }
            }
        }
    }
    out.sort_by(|(sa, a), (sb, b)| {
        a.threshold
            .cmp_key(&b.threshold)
            .then(a.device_class.cmp(&b.device_class))
            .then(a.group_size.cmp(&b.group_size))
            .then(sa.cmp(sb))
    });
    Ok(out)
}

pub const GRID_HEADER: [&str; 7] = ["spatial_mode", "S_m", "T", "device_class", "group_size", "rate", "n_obs"];

fn cell_fields(c: &DetectionRateCell) -> Vec<String> {
    vec![
        c.threshold.spatial().mode().to_string(),
        c.threshold.spatial().meters().map_or("NA".into(), |s| s.to_string()),
        c.threshold.temporal().to_string(),
        c.device_class.to_string(),
        c.group_size.to_string(),
        c.rate.map_or("NA".into(), |r| format!("{r:.6}")),
        c.n_obs.to_string(),
    ]
}

pub fn write_grid_csv<W: Write>(cells: &[DetectionRateCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GRID_HEADER)?;
    for c in cells {
        w.write_record(cell_fields(c))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_wifi_grid_csv<W: Write>(cells: &[(WifiSlot, DetectionRateCell)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = GRID_HEADER[..5].to_vec();
    header.extend(["wifi_slot", "rate", "n_obs"]);
    w.write_record(header)?;
    for (slot, c) in cells {
        let mut f = cell_fields(c);
        f.insert(5, slot.as_str().to_string());
        w.write_record(f)?;
    }
    w.flush()?;
    Ok(())
}
