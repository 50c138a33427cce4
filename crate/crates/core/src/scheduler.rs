//! Experiment schedule generation.
//!
//! A schedule is a sequence of time slots. In each slot the participants are
//! split into groups, one activity per group. Slots are laid out in
//! contiguous blocks sharing a FAR level, and every participant's legs are
//! walked at a fixed speed (or looked up in a travel-time matrix).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use chrono::{FixedOffset, NaiveDate, NaiveTime, TimeZone};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geo::LatLon;
use crate::ingest::{write_ground_truth, FarLevel, GroundTruthActivity, LocationRecord};
use crate::rng;

const MINUTE_MS: i64 = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationLevel {
    Short,
    Medium,
    Long,
}

impl DurationLevel {
    pub const ALL: [DurationLevel; 3] = [DurationLevel::Short, DurationLevel::Medium, DurationLevel::Long];

    pub fn index(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(usize::from(i).checked_sub(1)?).copied()
    }

    /// Inclusive minute band; the long band is open-ended.
    pub fn band(self) -> (u32, Option<u32>) {
        match self {
            DurationLevel::Short => (15, Some(29)),
            DurationLevel::Medium => (30, Some(44)),
            DurationLevel::Long => (45, None),
        }
    }

    pub fn contains(self, minutes: f64) -> bool {
        let (lo, hi) = self.band();
        minutes >= f64::from(lo) && hi.is_none_or(|h| minutes <= f64::from(h))
    }
}

impl fmt::Display for DurationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.band() {
            (lo, Some(hi)) => write!(f, "{lo} to {hi} minutes"),
            (lo, None) => write!(f, "over {lo} minutes"),
        }
    }
}

/// Minutes between two points, one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelTime {
    pub from: String,
    pub to: String,
    pub minutes: f64,
}

/// Slot-to-group-size assignment rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotRule {
    /// Largest groups first, each into the first slot with enough free
    /// participants; slots dealt round-robin across FAR blocks.
    #[default]
    DescendingRoundRobin,
    /// One activity per slot, in descending group size.
    OnePerSlot,
}

pub const START_ID: &str = "start";
pub const END_ID: &str = "end";

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub participants: Vec<String>,
    pub activities_per_group_size: BTreeMap<usize, usize>,
    pub date: NaiveDate,
    pub utc_offset_s: i32,
    pub window_start: NaiveTime,
    pub window_minutes: u32,
    pub start_location: LatLon,
    pub end_location: LatLon,
    pub duration_levels: Vec<DurationLevel>,
    /// Upper end used when drawing long activities.
    pub long_max_minutes: u32,
    pub far_levels: Vec<FarLevel>,
    pub walking_speed_m_per_min: f64,
    pub location_pool: Vec<LocationRecord>,
    pub travel_matrix: Vec<TravelTime>,
    pub slot_rule: SlotRule,
    pub buffer_minutes: u32,
    pub retry_budget: usize,
    pub seed: u64,
}

impl ScheduleConfig {
    /// Four participants, an 8-hour day from 09:00 (+09:00) and the given pool.
    pub fn new(location_pool: Vec<LocationRecord>, start: LatLon, end: LatLon, seed: u64) -> Self {
        Self {
            participants: (1..=4).map(|i| format!("p{i}")).collect(),
            activities_per_group_size: BTreeMap::from([(1, 2), (2, 4), (3, 2), (4, 3)]),
            date: NaiveDate::from_ymd_opt(2020, 12, 17).expect("valid date"),
            utc_offset_s: 9 * 3600,
            window_start: NaiveTime::from_hms_opt(9, 0, 0).expect("valid time"),
            window_minutes: 480,
            start_location: start,
            end_location: end,
            duration_levels: DurationLevel::ALL.to_vec(),
            long_max_minutes: 60,
            far_levels: FarLevel::ALL.to_vec(),
            walking_speed_m_per_min: 80.0,
            location_pool,
            travel_matrix: Vec::new(),
            slot_rule: SlotRule::default(),
            buffer_minutes: 0,
            retry_budget: 20,
            seed,
        }
    }

    /// All problems with the configuration, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.participants.is_empty() {
            out.push("participants must be non-empty".to_string());
        }
        let distinct: BTreeSet<_> = self.participants.iter().collect();
        if distinct.len() != self.participants.len() {
            out.push("participants must be distinct".to_string());
        }
        for (g, n) in &self.activities_per_group_size {
            if *g == 0 || *g > self.participants.len() {
                out.push(format!("group size {g} needs between 1 and {} participants", self.participants.len()));
            }
            if *n > 0 && *g == 0 {
                out.push("activities of size 0 requested".to_string());
            }
        }
        if self.duration_levels.is_empty() {
            out.push("duration_levels must be non-empty".to_string());
        }
        if self.far_levels.is_empty() {
            out.push("far_levels must be non-empty".to_string());
        }
        if self.long_max_minutes < 45 {
            out.push("long_max_minutes must be at least 45".to_string());
        }
        if !(self.walking_speed_m_per_min > 0.0 && self.walking_speed_m_per_min.is_finite()) {
            out.push("walking_speed_m_per_min must be positive".to_string());
        }
        if self.window_minutes == 0 {
            out.push("window must be non-empty".to_string());
        }
        for level in &self.far_levels {
            if !self.location_pool.iter().any(|l| l.far_level() == *level) {
                out.push(format!("location pool has no \"{}\" location", level.label()));
            }
        }
        for t in &self.travel_matrix {
            if !(t.minutes >= 0.0 && t.minutes.is_finite()) {
                out.push(format!("travel time {} -> {} must be non-negative", t.from, t.to));
            }
        }
        out
    }

    pub fn window_start_ms(&self) -> i64 {
        let offset = FixedOffset::east_opt(self.utc_offset_s).unwrap_or(FixedOffset::east_opt(0).expect("zero offset"));
        offset
            .from_local_datetime(&self.date.and_time(self.window_start))
            .single()
            .expect("fixed offsets are unambiguous")
            .timestamp_millis()
    }

    pub fn window_end_ms(&self) -> i64 {
        self.window_start_ms() + i64::from(self.window_minutes) * MINUTE_MS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduledActivity {
    pub activity_id: String,
    pub location_id: String,
    pub participants: Vec<String>,
    pub start_ms: i64,
    pub end_ms: i64,
    pub duration_level: DurationLevel,
    pub far_level: FarLevel,
    pub district: Option<String>,
    pub block: usize,
    pub slot: usize,
}

impl ScheduledActivity {
    pub fn duration_min(&self) -> f64 {
        (self.end_ms - self.start_ms) as f64 / MINUTE_MS as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TravelLeg {
    pub participant: String,
    pub from: String,
    pub to: String,
    pub depart_ms: i64,
    pub arrive_ms: i64,
    pub travel_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub activities: Vec<ScheduledActivity>,
    pub legs: Vec<TravelLeg>,
    /// FAR level of each block, in time order.
    pub block_levels: Vec<FarLevel>,
    pub removed_activities: usize,
    pub utc_offset_s: i32,
}

/// Uniform draw of one level per activity.
pub fn allocate_duration_levels<R: Rng + ?Sized>(n: usize, levels: &[DurationLevel], rng: &mut R) -> Vec<DurationLevel> {
    (0..n).map(|_| levels[rng.random_range(0..levels.len())]).collect()
}

fn draw_minutes<R: Rng + ?Sized>(level: DurationLevel, long_max: u32, rng: &mut R) -> u32 {
    let (lo, hi) = level.band();
    rng.random_range(lo..=hi.unwrap_or(long_max))
}

struct Travel<'a> {
    matrix: BTreeMap<(&'a str, &'a str), f64>,
    speed: f64,
}

impl<'a> Travel<'a> {
    fn new(config: &'a ScheduleConfig) -> Self {
        Self {
            matrix: config
                .travel_matrix
                .iter()
                .map(|t| ((t.from.as_str(), t.to.as_str()), t.minutes))
                .collect(),
            speed: config.walking_speed_m_per_min,
        }
    }

    fn minutes(&self, from: (&str, LatLon), to: (&str, LatLon)) -> f64 {
        if from.0 == to.0 {
            return 0.0;
        }
        self.matrix
            .get(&(from.0, to.0))
            .copied()
            .unwrap_or_else(|| from.1.distance_m(&to.1) / self.speed)
    }
}

fn mean_point(points: impl Iterator<Item = LatLon>) -> LatLon {
    let (mut lat, mut lon, mut n) = (0.0, 0.0, 0.0);
    for p in points {
        lat += p.lat;
        lon += p.lon;
        n += 1.0;
    }
    LatLon::new(lat / n, lon / n)
}

fn permutations<T: Copy>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Block order minimising the walk start -> level centroids -> end.
fn order_blocks(config: &ScheduleConfig, levels: &[FarLevel]) -> Vec<FarLevel> {
    let centroid: BTreeMap<FarLevel, LatLon> = levels
        .iter()
        .map(|l| {
            let c = mean_point(config.location_pool.iter().filter(|r| r.far_level() == *l).map(|r| r.centroid));
            (*l, c)
        })
        .collect();
    let cost = |order: &[FarLevel]| {
        let mut d = 0.0;
        let mut at = config.start_location;
        for l in order {
            d += at.distance_m(&centroid[l]);
            at = centroid[l];
        }
        d + at.distance_m(&config.end_location)
    };
    permutations(levels)
        .into_iter()
        .min_by(|a, b| cost(a).total_cmp(&cost(b)))
        .unwrap_or_default()
}

#[derive(Debug, Clone)]
struct PlannedActivity {
    group_size: usize,
    level: DurationLevel,
    minutes: u32,
}

/// Slots as lists of indices into `planned`.
fn assign_slots(planned: &[PlannedActivity], capacity: usize, rule: SlotRule) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..planned.len()).collect();
    order.sort_by(|&a, &b| planned[b].group_size.cmp(&planned[a].group_size).then(a.cmp(&b)));
    let mut slots: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in order {
        let g = planned[i].group_size;
        let fit = match rule {
            SlotRule::DescendingRoundRobin => slots.iter_mut().find(|(free, _)| *free >= g),
            SlotRule::OnePerSlot => None,
        };
        match fit {
            Some((free, members)) => {
                *free -= g;
                members.push(i);
            }
            None => slots.push((capacity - g, vec![i])),
        }
    }
    slots.into_iter().map(|(_, m)| m).collect()
}

#[derive(Debug, Clone)]
struct Position {
    id: String,
    point: LatLon,
    ready_ms: i64,
}

enum Attempt {
    Done(Schedule),
    /// Minutes by which the latest participant overshoots the window, and who.
    Overflow { participant: String, over_min: f64 },
}

fn ceil_minute(ms: f64) -> i64 {
    ((ms / MINUTE_MS as f64) - 1e-9).ceil() as i64 * MINUTE_MS
}

#[allow(clippy::too_many_arguments)]
fn lay_out<R: Rng + ?Sized>(
    config: &ScheduleConfig,
    planned: &[PlannedActivity],
    block_levels: &[FarLevel],
    districts: &BTreeMap<FarLevel, Option<String>>,
    travel: &Travel<'_>,
    removed: usize,
    rng: &mut R,
) -> Result<Attempt> {
    let slots = assign_slots(planned, config.participants.len(), config.slot_rule);
    let nb = block_levels.len();
    let mut by_block: Vec<Vec<&Vec<usize>>> = vec![Vec::new(); nb];
    for (i, s) in slots.iter().enumerate() {
        by_block[i % nb].push(s);
    }

    let start_ms = config.window_start_ms();
    let mut pos: BTreeMap<&str, Position> = config
        .participants
        .iter()
        .map(|p| {
            (
                p.as_str(),
                Position {
                    id: START_ID.into(),
                    point: config.start_location,
                    ready_ms: start_ms,
                },
            )
        })
        .collect();
    let mut activities = Vec::new();
    let mut legs = Vec::new();
    let mut slot_no = 0;
    let buffer_ms = i64::from(config.buffer_minutes) * MINUTE_MS;

    for (block, level) in block_levels.iter().enumerate() {
        let district = districts.get(level).cloned().flatten();
        let in_level: Vec<&LocationRecord> = config.location_pool.iter().filter(|l| l.far_level() == *level).collect();
        let mut candidates: Vec<&LocationRecord> =
            in_level.iter().copied().filter(|l| l.district == district).collect();
        candidates.shuffle(rng);
        for slot in &by_block[block] {
            let mut members_free: Vec<&str> = config.participants.iter().map(String::as_str).collect();
            members_free.shuffle(rng);
            let mut used_here: BTreeSet<&str> = BTreeSet::new();
            for &ai in slot.iter() {
                let pa = &planned[ai];
                let members: Vec<&str> = members_free.drain(..pa.group_size).collect();
                // Nearest unused candidate by the slowest member's walk; the
                // rest of the level serves as a fallback.
                let walk = |loc: &LocationRecord| {
                    members
                        .iter()
                        .map(|m| {
                            let p = &pos[m];
                            p.ready_ms as f64 + travel.minutes((&p.id, p.point), (&loc.location_id, loc.centroid)) * MINUTE_MS as f64
                        })
                        .fold(f64::MIN, f64::max)
                };
                let pick = candidates
                    .iter()
                    .chain(in_level.iter())
                    .filter(|l| !used_here.contains(l.location_id.as_str()))
                    .min_by(|a, b| walk(a).total_cmp(&walk(b)))
                    .copied()
                    .ok_or_else(|| {
                        Error::Infeasible(format!(
                            "not enough \"{}\" locations for {} simultaneous activities",
                            level.label(),
                            slot.len()
                        ))
                    })?;
                used_here.insert(&pick.location_id);
                let begin = ceil_minute(walk(pick)) + buffer_ms;
                let end = begin + i64::from(pa.minutes) * MINUTE_MS;
                let mut participants: Vec<String> = members.iter().map(|m| m.to_string()).collect();
                participants.sort();
                for m in &members {
                    let p = pos.get_mut(m).expect("known participant");
                    let t = travel.minutes((&p.id, p.point), (&pick.location_id, pick.centroid));
                    legs.push(TravelLeg {
                        participant: m.to_string(),
                        from: p.id.clone(),
                        to: pick.location_id.clone(),
                        depart_ms: p.ready_ms,
                        arrive_ms: p.ready_ms + (t * MINUTE_MS as f64).ceil() as i64,
                        travel_min: t,
                    });
                    *p = Position {
                        id: pick.location_id.clone(),
                        point: pick.centroid,
                        ready_ms: end,
                    };
                }
                activities.push(ScheduledActivity {
                    activity_id: String::new(),
                    location_id: pick.location_id.clone(),
                    participants,
                    start_ms: begin,
                    end_ms: end,
                    duration_level: pa.level,
                    far_level: *level,
                    district: pick.district.clone(),
                    block,
                    slot: slot_no,
                });
            }
            slot_no += 1;
        }
    }

    let end_ms = config.window_end_ms();
    let mut worst: Option<(String, f64)> = None;
    for p in &config.participants {
        let at = &pos[p.as_str()];
        let t = travel.minutes((&at.id, at.point), (END_ID, config.end_location));
        let arrive = at.ready_ms + (t * MINUTE_MS as f64).ceil() as i64;
        legs.push(TravelLeg {
            participant: p.clone(),
            from: at.id.clone(),
            to: END_ID.into(),
            depart_ms: at.ready_ms,
            arrive_ms: arrive,
            travel_min: t,
        });
        let over = (arrive - end_ms) as f64 / MINUTE_MS as f64;
        if over > 0.0 && worst.as_ref().is_none_or(|(_, w)| over > *w) {
            worst = Some((p.clone(), over));
        }
    }
    if let Some((participant, over_min)) = worst {
        return Ok(Attempt::Overflow { participant, over_min });
    }

    activities.sort_by(|a, b| a.start_ms.cmp(&b.start_ms).then(a.slot.cmp(&b.slot)).then(a.participants.cmp(&b.participants)));
    for (i, a) in activities.iter_mut().enumerate() {
        a.activity_id = format!("a{:03}", i + 1);
    }
    legs.sort_by(|a, b| a.participant.cmp(&b.participant).then(a.depart_ms.cmp(&b.depart_ms)));
    Ok(Attempt::Done(Schedule {
        activities,
        legs,
        block_levels: block_levels.to_vec(),
        removed_activities: removed,
        utc_offset_s: config.utc_offset_s,
    }))
}

/// Builds a schedule following the nine design steps; see the module docs.
pub fn generate_schedule(config: &ScheduleConfig) -> Result<Schedule> {
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(Error::Validation(problems.join("; ")));
    }
    let mut rng = rng::master(config.seed);

    // Step 1: activities by group size.
    let sizes: Vec<usize> = config
        .activities_per_group_size
        .iter()
        .flat_map(|(g, n)| std::iter::repeat_n(*g, *n))
        .collect();
    if sizes.is_empty() {
        return Err(Error::Validation("no activities requested".into()));
    }
    // Step 3: random duration levels, then minutes within each band.
    let levels = allocate_duration_levels(sizes.len(), &config.duration_levels, &mut rng);
    let mut planned: Vec<PlannedActivity> = sizes
        .iter()
        .zip(&levels)
        .map(|(g, l)| PlannedActivity {
            group_size: *g,
            level: *l,
            minutes: draw_minutes(*l, config.long_max_minutes, &mut rng),
        })
        .collect();
    // Steps 2 and 4: one contiguous block per FAR level, ordered for travel.
    let block_levels = order_blocks(config, &config.far_levels);
    // Step 5: a district per level.
    let mut districts = BTreeMap::new();
    for level in &block_levels {
        let options: BTreeSet<Option<String>> = config
            .location_pool
            .iter()
            .filter(|l| l.far_level() == *level)
            .map(|l| l.district.clone())
            .collect();
        let options: Vec<_> = options.into_iter().collect();
        districts.insert(*level, options[rng.random_range(0..options.len())].clone());
    }
    let travel = Travel::new(config);

    // Steps 6 to 9.
    let mut removed = 0;
    loop {
        match lay_out(config, &planned, &block_levels, &districts, &travel, removed, &mut rng)? {
            Attempt::Done(s) => return Ok(s),
            Attempt::Overflow { participant, over_min } => {
                if removed >= config.retry_budget || planned.len() <= 1 {
                    return Err(Error::Infeasible(format!(
                        "window end: participant {participant} returns {over_min:.0} min late after removing {removed} activities"
                    )));
                }
                let longest = (0..planned.len())
                    .max_by(|&a, &b| planned[a].minutes.cmp(&planned[b].minutes).then(b.cmp(&a)))
                    .expect("non-empty plan");
                planned.remove(longest);
                removed += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Overlap,
    TravelTime,
    Window,
    DurationBand,
    FarLevel,
    UnknownLocation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub first: String,
    pub second: Option<String>,
    pub message: String,
}

/// Every broken schedule invariant; empty when the schedule is sound.
pub fn check_feasibility(schedule: &Schedule, config: &ScheduleConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let travel = Travel::new(config);
    let locs: BTreeMap<&str, &LocationRecord> =
        config.location_pool.iter().map(|l| (l.location_id.as_str(), l)).collect();
    let (w0, w1) = (config.window_start_ms(), config.window_end_ms());
    let tol = 1e-9;

    for a in &schedule.activities {
        if !a.duration_level.contains(a.duration_min()) {
            out.push(Violation {
                kind: ViolationKind::DurationBand,
                first: a.activity_id.clone(),
                second: None,
                message: format!("{:.1} min outside {}", a.duration_min(), a.duration_level),
            });
        }
        if a.start_ms < w0 || a.end_ms > w1 {
            out.push(Violation {
                kind: ViolationKind::Window,
                first: a.activity_id.clone(),
                second: None,
                message: "activity outside the experiment window".into(),
            });
        }
        match locs.get(a.location_id.as_str()) {
            None => out.push(Violation {
                kind: ViolationKind::UnknownLocation,
                first: a.activity_id.clone(),
                second: None,
                message: format!("location {} is not in the pool", a.location_id),
            }),
            Some(l) if l.far_level() != a.far_level => out.push(Violation {
                kind: ViolationKind::FarLevel,
                first: a.activity_id.clone(),
                second: None,
                message: format!("{} is \"{}\", planned \"{}\"", l.location_id, l.far_level(), a.far_level),
            }),
            _ => {}
        }
    }

    let point = |id: &str| -> Option<LatLon> {
        match id {
            START_ID => Some(config.start_location),
            END_ID => Some(config.end_location),
            other => locs.get(other).map(|l| l.centroid),
        }
    };
    for p in &config.participants {
        let mut mine: Vec<&ScheduledActivity> =
            schedule.activities.iter().filter(|a| a.participants.contains(p)).collect();
        mine.sort_by_key(|a| (a.start_ms, a.end_ms));
        // (id, location, free from)
        let mut prev: (String, &str, i64) = (START_ID.into(), START_ID, w0);
        for a in &mine {
            if a.start_ms < prev.2 && prev.1 != START_ID {
                out.push(Violation {
                    kind: ViolationKind::Overlap,
                    first: prev.0.clone(),
                    second: Some(a.activity_id.clone()),
                    message: format!("participant {p} is booked twice"),
                });
            } else if let (Some(from), Some(to)) = (point(prev.1), point(&a.location_id)) {
                let need = travel.minutes((prev.1, from), (&a.location_id, to));
                let gap = (a.start_ms - prev.2) as f64 / MINUTE_MS as f64;
                if gap + tol < need {
                    out.push(Violation {
                        kind: ViolationKind::TravelTime,
                        first: prev.0.clone(),
                        second: Some(a.activity_id.clone()),
                        message: format!("participant {p} needs {need:.1} min but has {gap:.1}"),
                    });
                }
            }
            prev = (a.activity_id.clone(), &a.location_id, a.end_ms);
        }
        if let Some(from) = point(prev.1) {
            let need = travel.minutes((prev.1, from), (END_ID, config.end_location));
            let gap = (w1 - prev.2) as f64 / MINUTE_MS as f64;
            if gap + tol < need {
                out.push(Violation {
                    kind: ViolationKind::Window,
                    first: prev.0.clone(),
                    second: Some(END_ID.into()),
                    message: format!("participant {p} cannot reach the end point in time"),
                });
            }
        }
    }
    out
}

impl Schedule {
    pub fn to_json(&self) -> Value {
        json!({
            "utcOffsetSeconds": self.utc_offset_s,
            "blockLevels": self.block_levels.iter().map(|l| l.label()).collect::<Vec<_>>(),
            "removedActivities": self.removed_activities,
            "activities": self.activities.iter().map(|a| json!({
                "activityId": a.activity_id,
                "locationId": a.location_id,
                "participants": a.participants,
                "startTimestampMs": a.start_ms.to_string(),
                "endTimestampMs": a.end_ms.to_string(),
                "durationLevel": a.duration_level.index(),
                "farLevel": a.far_level.index(),
                "farLevelLabel": a.far_level.label(),
                "district": a.district,
                "block": a.block,
                "slot": a.slot,
            })).collect::<Vec<_>>(),
            "legs": self.legs.iter().map(|l| json!({
                "participant": l.participant,
                "from": l.from,
                "to": l.to,
                "departTimestampMs": l.depart_ms.to_string(),
                "arriveTimestampMs": l.arrive_ms.to_string(),
                "travelMinutes": (l.travel_min * 1000.0).round() / 1000.0,
            })).collect::<Vec<_>>(),
        })
    }

    /// Planned activities as a ground-truth diary to be corrected in the field.
    pub fn ground_truth_template(&self) -> Result<Vec<GroundTruthActivity>> {
        self.activities
            .iter()
            .map(|a| {
                Ok(GroundTruthActivity::new(
                    a.activity_id.clone(),
                    a.location_id.clone(),
                    a.start_ms,
                    a.end_ms,
                    a.participants.clone(),
                )?
                .with_utc_offset(self.utc_offset_s))
            })
            .collect()
    }

    pub fn write_ground_truth_template<W: Write>(&self, out: W) -> Result<()> {
        write_ground_truth(&self.ground_truth_template()?, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn pool() -> Vec<LocationRecord> {
        let origin = LatLon::new(35.7100, 139.7600);
        let mut out = Vec::new();
        let specs = [(FarLevel::OpenSpace, 0.0), (FarLevel::LowDensity, 200.0), (FarLevel::MidDensity, 500.0), (FarLevel::HighDensity, 900.0)];
        for (li, (level, far)) in specs.iter().enumerate() {
            for d in 0..2 {
                for k in 0..4 {
                    let c = origin.offset_m(600.0 * li as f64 + 150.0 * k as f64, 400.0 * d as f64);
                    out.push(LocationRecord {
                        location_id: format!("L{li}{d}{k}"),
                        place_id: format!("PID{li}{d}{k}"),
                        name: format!("loc {li}{d}{k}"),
                        centroid: c,
                        perimeter: (*level == FarLevel::OpenSpace).then(|| {
                            crate::geo::Polygon::new(vec![c.offset_m(-20.0, -20.0), c.offset_m(20.0, -20.0), c.offset_m(20.0, 20.0), c.offset_m(-20.0, 20.0)]).unwrap()
                        }),
                        far_percent: *far,
                        open_space: *level == FarLevel::OpenSpace,
                        district: Some(format!("D{li}{d}")),
                    });
                }
            }
        }
        out
    }

    fn config(seed: u64) -> ScheduleConfig {
        let origin = LatLon::new(35.7100, 139.7600);
        ScheduleConfig::new(pool(), origin, origin.offset_m(100.0, 0.0), seed)
    }

    #[test]
    fn default_schedule_is_sound() {
        let c = config(1);
        let s = generate_schedule(&c).unwrap();
        assert!(check_feasibility(&s, &c).is_empty(), "{:?}", check_feasibility(&s, &c));
        assert_eq!(s.activities.len() + s.removed_activities, 11);
        assert_eq!(s, generate_schedule(&c).unwrap());
    }

    #[test]
    fn single_medium_activity() {
        let mut c = config(2);
        c.activities_per_group_size = BTreeMap::from([(1, 1)]);
        c.duration_levels = vec![DurationLevel::Medium];
        let s = generate_schedule(&c).unwrap();
        assert_eq!(s.activities.len(), 1);
        let d = s.activities[0].duration_min();
        assert!((30.0..=44.0).contains(&d));
        assert!(check_feasibility(&s, &c).is_empty());
    }

    #[test]
    fn missing_far_level_named() {
        let mut c = config(3);
        c.location_pool.retain(|l| l.far_level() != FarLevel::HighDensity);
        match generate_schedule(&c) {
            Err(Error::Validation(m)) => assert!(m.contains("Indoors - high density"), "{m}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn overflow_drops_activities_then_gives_up() {
        let mut c = config(4);
        c.window_minutes = 150;
        let s = generate_schedule(&c).unwrap();
        assert!(s.removed_activities > 0);
        assert!(check_feasibility(&s, &c).is_empty());

        c.window_minutes = 10;
        c.retry_budget = 2;
        assert!(matches!(generate_schedule(&c), Err(Error::Infeasible(m)) if m.contains("window end")));
    }

    fn two_activity_schedule(c: &ScheduleConfig, second_start_min: i64, second_loc: &str) -> Schedule {
        let w0 = c.window_start_ms();
        let mk = |id: &str, loc: &str, s: i64| ScheduledActivity {
            activity_id: id.into(),
            location_id: loc.into(),
            participants: vec!["p1".into()],
            start_ms: w0 + s * MINUTE_MS,
            end_ms: w0 + (s + 20) * MINUTE_MS,
            duration_level: DurationLevel::Short,
            far_level: FarLevel::OpenSpace,
            district: None,
            block: 0,
            slot: 0,
        };
        Schedule {
            activities: vec![mk("a1", "L000", 10), mk("a2", second_loc, second_start_min)],
            legs: vec![],
            block_levels: vec![FarLevel::OpenSpace],
            removed_activities: 0,
            utc_offset_s: c.utc_offset_s,
        }
    }

    #[test]
    fn hand_built_overlap() {
        let c = config(5);
        let s = two_activity_schedule(&c, 20, "L000");
        let v = check_feasibility(&s, &c);
        assert_eq!(v.iter().filter(|v| v.kind == ViolationKind::Overlap).count(), 1);
    }

    #[test]
    fn leg_too_short() {
        let mut c = config(6);
        c.travel_matrix.push(TravelTime {
            from: "L000".into(),
            to: "L001".into(),
            minutes: 30.0,
        });
        let s = two_activity_schedule(&c, 40, "L001");
        let v = check_feasibility(&s, &c);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].kind, ViolationKind::TravelTime);
        assert_eq!(v[0].second.as_deref(), Some("a2"));
    }

    #[test]
    fn template_round_trips_through_ingest() {
        let c = config(7);
        let s = generate_schedule(&c).unwrap();
        let mut buf = Vec::new();
        s.write_ground_truth_template(&mut buf).unwrap();
        let parsed = crate::ingest::parse_ground_truth(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(parsed, s.ground_truth_template().unwrap());
    }

    #[test]
    fn block_order_minimises_walk() {
        let c = config(8);
        let order = order_blocks(&c, &c.far_levels);
        // Levels are laid out eastwards from the origin.
        assert_eq!(order, FarLevel::ALL.to_vec());
    }
}
