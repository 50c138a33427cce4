//! Reader and writer for the December-2020 location-history export.
//!
//! A document is a list of timeline objects, each holding either a
//! `placeVisit` (a stay) or an `activitySegment` (travel between stays).
//! The `{"timelineObjects": [...]}` wrapper used by monthly export files is
//! accepted as well. Later export schemas (semantic segments, `visit`
//! records with `topCandidate`) are not supported; convert them to this
//! shape before calling [`parse_location_history`].

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geo::LatLon;
use super::byte_offset;

pub const MAX_LAT_E7: i64 = 900_000_000;
pub const MAX_LON_E7: i64 = 1_800_000_000;

/// An alternative place the exporter considered for a visit.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateLocation {
    pub latitude_e7: i64,
    pub longitude_e7: i64,
    pub place_id: String,
    pub location_confidence: Option<f64>,
}

/// One recorded stay. The top-level location is the exporter's
/// highest-confidence candidate and is the only one used for detection.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaceVisit {
    pub latitude_e7: i64,
    pub longitude_e7: i64,
    pub place_id: String,
    pub name: Option<String>,
    pub address: Option<String>,
    /// Opaque `sourceInfo.deviceTag`, stored verbatim.
    pub device_tag: Option<i64>,
    pub location_confidence: Option<f64>,
    pub start_ms: i64,
    pub end_ms: i64,
    pub place_confidence: Option<String>,
    pub center_lat_e7: Option<i64>,
    pub center_lng_e7: Option<i64>,
    pub visit_confidence: Option<i64>,
    pub other_candidates: Vec<CandidateLocation>,
    pub edit_confirmation_status: Option<String>,
}

impl PlaceVisit {
    pub fn position(&self) -> LatLon {
        LatLon::from_e7(self.latitude_e7, self.longitude_e7)
    }
}

/// A travel record. Parsed and retained, not analysed.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivitySegment {
    pub start_lat_e7: i64,
    pub start_lng_e7: i64,
    pub end_lat_e7: i64,
    pub end_lng_e7: i64,
    pub start_ms: i64,
    pub end_ms: i64,
    pub distance_m: Option<i64>,
    pub activity_type: Option<String>,
    pub confidence: Option<String>,
}

/// Everything recorded for one device account, sorted by start time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviceHistory {
    pub device_id: String,
    pub visits: Vec<PlaceVisit>,
    pub segments: Vec<ActivitySegment>,
}

impl DeviceHistory {
    /// Builds a history from already-validated records, sorting and checking
    /// the no-overlap invariant.
    pub fn new(
        device_id: impl Into<String>,
        mut visits: Vec<PlaceVisit>,
        mut segments: Vec<ActivitySegment>,
    ) -> Result<Self> {
        visits.sort_by_key(|v| (v.start_ms, v.end_ms));
        segments.sort_by_key(|s| (s.start_ms, s.end_ms));
        for pair in visits.windows(2) {
            if pair[0].end_ms > pair[1].start_ms {
                return Err(Error::Validation(format!(
                    "overlapping visits: {} [{}, {}] and {} [{}, {}]",
                    pair[0].place_id, pair[0].start_ms, pair[0].end_ms, pair[1].place_id, pair[1].start_ms, pair[1].end_ms
                )));
            }
        }
        Ok(Self {
            device_id: device_id.into(),
            visits,
            segments,
        })
    }

    /// Serializes back to the export schema; visits and segments are
    /// interleaved in start-time order.
    pub fn to_json(&self) -> Value {
        let mut objects: Vec<(i64, u8, Value)> = self
            .visits
            .iter()
            .map(|v| (v.start_ms, 1, json!({ "placeVisit": visit_to_json(v) })))
            .chain(
                self.segments
                    .iter()
                    .map(|s| (s.start_ms, 0, json!({ "activitySegment": segment_to_json(s) }))),
            )
            .collect();
        objects.sort_by_key(|(start, kind, _)| (*start, *kind));
        Value::Array(objects.into_iter().map(|(_, _, v)| v).collect())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("JSON values always serialize")
    }
}

/// Parses one device's export.
pub fn parse_location_history(device_id: &str, document: &str) -> Result<DeviceHistory> {
    let root: Value = serde_json::from_str(document).map_err(|e| Error::Json {
        offset: byte_offset(document, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let objects = match &root {
        Value::Array(items) => items,
        Value::Object(map) => match map.get("timelineObjects") {
            Some(Value::Array(items)) => items,
            _ => return Err(schema("$", "expected a list of timeline objects")),
        },
        _ => return Err(schema("$", "expected a list of timeline objects")),
    };

    let mut visits = Vec::new();
    let mut segments = Vec::new();
    for (i, obj) in objects.iter().enumerate() {
        let path = format!("$[{i}]");
        let Some(map) = obj.as_object() else {
            return Err(schema(&path, "timeline entry is not an object"));
        };
        if let Some(v) = map.get("placeVisit") {
            visits.push(parse_visit(v, &format!("{path}.placeVisit"))?);
        } else if let Some(s) = map.get("activitySegment") {
            segments.push(parse_segment(s, &format!("{path}.activitySegment"))?);
        }
    }
    DeviceHistory::new(device_id, visits, segments)
}

fn schema(path: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| schema(path, "expected an object"))
}

fn required<'a>(map: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    map.get(key)
        .ok_or_else(|| schema(&format!("{path}.{key}"), format!("missing required field `{key}`")))
}

fn int_value(v: &Value, path: &str) -> Result<i64> {
    v.as_i64().ok_or_else(|| schema(path, "expected an integer"))
}

fn req_int(map: &Map<String, Value>, key: &str, path: &str) -> Result<i64> {
    int_value(required(map, key, path)?, &format!("{path}.{key}"))
}

fn opt_int(map: &Map<String, Value>, key: &str, path: &str) -> Result<Option<i64>> {
    map.get(key).map(|v| int_value(v, &format!("{path}.{key}"))).transpose()
}

fn opt_f64(map: &Map<String, Value>, key: &str, path: &str) -> Result<Option<f64>> {
    map.get(key)
        .map(|v| v.as_f64().ok_or_else(|| schema(&format!("{path}.{key}"), "expected a number")))
        .transpose()
}

fn opt_str(map: &Map<String, Value>, key: &str, path: &str) -> Result<Option<String>> {
    map.get(key)
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| schema(&format!("{path}.{key}"), "expected a string"))
        })
        .transpose()
}

/// Timestamps are decimal strings of epoch milliseconds.
fn timestamp(map: &Map<String, Value>, key: &str, path: &str) -> Result<i64> {
    let p = format!("{path}.{key}");
    match required(map, key, path)? {
        Value::String(s) => {
            if s.is_empty() || !s.bytes().enumerate().all(|(i, b)| b.is_ascii_digit() || (i == 0 && b == b'-')) {
                return Err(schema(&p, format!("timestamp `{s}` is not a base-10 integer")));
            }
            s.parse::<i64>()
                .map_err(|_| schema(&p, format!("timestamp `{s}` is not a base-10 integer")))
        }
        Value::Number(n) => n.as_i64().ok_or_else(|| schema(&p, "timestamp is not an integer")),
        _ => Err(schema(&p, "expected a timestamp string")),
    }
}

fn checked_coords(lat: i64, lon: i64, path: &str) -> Result<()> {
    if !(-MAX_LAT_E7..=MAX_LAT_E7).contains(&lat) {
        return Err(Error::Validation(format!("{path}: latitudeE7 {lat} out of range")));
    }
    if !(-MAX_LON_E7..=MAX_LON_E7).contains(&lon) {
        return Err(Error::Validation(format!("{path}: longitudeE7 {lon} out of range")));
    }
    Ok(())
}

fn checked_interval(start: i64, end: i64, path: &str) -> Result<()> {
    if end <= start {
        return Err(Error::Validation(format!(
            "{path}: start {start} is not before end {end}"
        )));
    }
    Ok(())
}

fn parse_candidate(v: &Value, path: &str) -> Result<CandidateLocation> {
    let map = object(v, path)?;
    let c = CandidateLocation {
        latitude_e7: req_int(map, "latitudeE7", path)?,
        longitude_e7: req_int(map, "longitudeE7", path)?,
        place_id: opt_str(map, "placeId", path)?.unwrap_or_default(),
        location_confidence: opt_f64(map, "locationConfidence", path)?,
    };
    checked_coords(c.latitude_e7, c.longitude_e7, path)?;
    Ok(c)
}

fn parse_visit(v: &Value, path: &str) -> Result<PlaceVisit> {
    let map = object(v, path)?;
    let loc_path = format!("{path}.location");
    let loc = object(required(map, "location", path)?, &loc_path)?;
    let dur_path = format!("{path}.duration");
    let dur = object(required(map, "duration", path)?, &dur_path)?;

    let place_id = opt_str(loc, "placeId", &loc_path)?
        .ok_or_else(|| schema(&format!("{loc_path}.placeId"), "missing required field `placeId`"))?;
    let device_tag = match loc.get("sourceInfo") {
        Some(info) => opt_int(object(info, &format!("{loc_path}.sourceInfo"))?, "deviceTag", &loc_path)?,
        None => None,
    };
    let location_confidence = opt_f64(loc, "locationConfidence", &loc_path)?;
    if let Some(c) = location_confidence {
        if !(0.0..=100.0).contains(&c) {
            return Err(Error::Validation(format!("{loc_path}: locationConfidence {c} outside [0, 100]")));
        }
    }
    let visit_confidence = opt_int(map, "visitConfidence", path)?;
    if let Some(c) = visit_confidence {
        if !(0..=100).contains(&c) {
            return Err(Error::Validation(format!("{path}: visitConfidence {c} outside [0, 100]")));
        }
    }
    let other_candidates = match map.get("otherCandidateLocations") {
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, c)| parse_candidate(c, &format!("{path}.otherCandidateLocations[{i}]")))
            .collect::<Result<_>>()?,
        Some(_) => return Err(schema(&format!("{path}.otherCandidateLocations"), "expected a list")),
        None => Vec::new(),
    };

    let visit = PlaceVisit {
        latitude_e7: req_int(loc, "latitudeE7", &loc_path)?,
        longitude_e7: req_int(loc, "longitudeE7", &loc_path)?,
        place_id,
        name: opt_str(loc, "name", &loc_path)?,
        address: opt_str(loc, "address", &loc_path)?,
        device_tag,
        location_confidence,
        start_ms: timestamp(dur, "startTimestampMs", &dur_path)?,
        end_ms: timestamp(dur, "endTimestampMs", &dur_path)?,
        place_confidence: opt_str(map, "placeConfidence", path)?,
        center_lat_e7: opt_int(map, "centerLatE7", path)?,
        center_lng_e7: opt_int(map, "centerLngE7", path)?,
        visit_confidence,
        other_candidates,
        edit_confirmation_status: opt_str(map, "editConfirmationStatus", path)?,
    };
    checked_coords(visit.latitude_e7, visit.longitude_e7, &loc_path)?;
    checked_interval(visit.start_ms, visit.end_ms, &dur_path)?;
    Ok(visit)
}

fn parse_segment(v: &Value, path: &str) -> Result<ActivitySegment> {
    let map = object(v, path)?;
    let sp = format!("{path}.startLocation");
    let start = object(required(map, "startLocation", path)?, &sp)?;
    let ep = format!("{path}.endLocation");
    let end = object(required(map, "endLocation", path)?, &ep)?;
    let dp = format!("{path}.duration");
    let dur = object(required(map, "duration", path)?, &dp)?;
    let seg = ActivitySegment {
        start_lat_e7: req_int(start, "latitudeE7", &sp)?,
        start_lng_e7: req_int(start, "longitudeE7", &sp)?,
        end_lat_e7: req_int(end, "latitudeE7", &ep)?,
        end_lng_e7: req_int(end, "longitudeE7", &ep)?,
        start_ms: timestamp(dur, "startTimestampMs", &dp)?,
        end_ms: timestamp(dur, "endTimestampMs", &dp)?,
        distance_m: opt_int(map, "distance", path)?,
        activity_type: opt_str(map, "activityType", path)?,
        confidence: opt_str(map, "confidence", path)?,
    };
    checked_coords(seg.start_lat_e7, seg.start_lng_e7, &sp)?;
    checked_coords(seg.end_lat_e7, seg.end_lng_e7, &ep)?;
    checked_interval(seg.start_ms, seg.end_ms, &dp)?;
    if let Some(d) = seg.distance_m {
        if d < 0 {
            return Err(Error::Validation(format!("{path}: negative distance {d}")));
        }
    }
    Ok(seg)
}

fn insert_opt<T: Into<Value>>(map: &mut Map<String, Value>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        map.insert(key.to_string(), v.into());
    }
}

fn visit_to_json(v: &PlaceVisit) -> Value {
    let mut loc = Map::new();
    loc.insert("latitudeE7".into(), v.latitude_e7.into());
    loc.insert("longitudeE7".into(), v.longitude_e7.into());
    loc.insert("placeId".into(), v.place_id.clone().into());
    insert_opt(&mut loc, "address", v.address.clone());
    insert_opt(&mut loc, "name", v.name.clone());
    if let Some(tag) = v.device_tag {
        loc.insert("sourceInfo".into(), json!({ "deviceTag": tag }));
    }
    insert_opt(&mut loc, "locationConfidence", v.location_confidence);

    let mut map = Map::new();
    map.insert("location".into(), Value::Object(loc));
    map.insert(
        "duration".into(),
        json!({
            "startTimestampMs": v.start_ms.to_string(),
            "endTimestampMs": v.end_ms.to_string(),
        }),
    );
    insert_opt(&mut map, "placeConfidence", v.place_confidence.clone());
    insert_opt(&mut map, "centerLatE7", v.center_lat_e7);
    insert_opt(&mut map, "centerLngE7", v.center_lng_e7);
    insert_opt(&mut map, "visitConfidence", v.visit_confidence);
    if !v.other_candidates.is_empty() {
        let cands = v
            .other_candidates
            .iter()
            .map(|c| {
                let mut m = Map::new();
                m.insert("latitudeE7".into(), c.latitude_e7.into());
                m.insert("longitudeE7".into(), c.longitude_e7.into());
                m.insert("placeId".into(), c.place_id.clone().into());
                insert_opt(&mut m, "locationConfidence", c.location_confidence);
                Value::Object(m)
            })
            .collect();
        map.insert("otherCandidateLocations".into(), Value::Array(cands));
    }
    insert_opt(&mut map, "editConfirmationStatus", v.edit_confirmation_status.clone());
    Value::Object(map)
}

fn segment_to_json(s: &ActivitySegment) -> Value {
    let mut map = Map::new();
    map.insert(
        "startLocation".into(),
        json!({ "latitudeE7": s.start_lat_e7, "longitudeE7": s.start_lng_e7 }),
    );
    map.insert(
        "endLocation".into(),
        json!({ "latitudeE7": s.end_lat_e7, "longitudeE7": s.end_lng_e7 }),
    );
    map.insert(
        "duration".into(),
        json!({
            "startTimestampMs": s.start_ms.to_string(),
            "endTimestampMs": s.end_ms.to_string(),
        }),
    );
    insert_opt(&mut map, "distance", s.distance_m);
    insert_opt(&mut map, "activityType", s.activity_type.clone());
    insert_opt(&mut map, "confidence", s.confidence.clone());
    Value::Object(map)
}
