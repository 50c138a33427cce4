//! Location and device registries.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{LatLon, Polygon};

/// Floor-area-ratio design classes used when laying out schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FarLevel {
    OpenSpace,
    LowDensity,
    MidDensity,
    HighDensity,
}

impl FarLevel {
    pub const ALL: [FarLevel; 4] = [
        FarLevel::OpenSpace,
        FarLevel::LowDensity,
        FarLevel::MidDensity,
        FarLevel::HighDensity,
    ];

    /// Open spaces form their own class; indoor FAR below 300% is low,
    /// 300%..=700% mid and above 700% high.
    pub fn classify(far_percent: f64, open_space: bool) -> Self {
        if open_space {
            FarLevel::OpenSpace
        } else if far_percent < 300.0 {
            FarLevel::LowDensity
        } else if far_percent <= 700.0 {
            FarLevel::MidDensity
        } else {
            FarLevel::HighDensity
        }
    }

    pub fn index(self) -> u8 {
        self as u8 + 1
    }

    pub fn label(self) -> &'static str {
        match self {
            FarLevel::OpenSpace => "Open space",
            FarLevel::LowDensity => "Indoors - low density",
            FarLevel::MidDensity => "Indoors - mid density",
            FarLevel::HighDensity => "Indoors - high density",
        }
    }
}

impl fmt::Display for FarLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationRecord {
    pub location_id: String,
    pub place_id: String,
    pub name: String,
    pub centroid: LatLon,
    pub perimeter: Option<Polygon>,
    pub far_percent: f64,
    pub open_space: bool,
    /// Area tag used by the scheduler to keep same-level activities walkable.
    pub district: Option<String>,
}

impl LocationRecord {
    pub fn far_level(&self) -> FarLevel {
        FarLevel::classify(self.far_percent, self.open_space)
    }

    pub fn far_over_100(&self) -> f64 {
        self.far_percent / 100.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OsClass {
    Android,
    Ios,
}

impl OsClass {
    pub fn as_str(self) -> &'static str {
        match self {
            OsClass::Android => "android",
            OsClass::Ios => "ios",
        }
    }
}

impl fmt::Display for OsClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OsClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "android" => Ok(OsClass::Android),
            "ios" | "iphone" => Ok(OsClass::Ios),
            other => Err(Error::Validation(format!("unknown os_class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceRecord {
    pub device_id: String,
    pub person_id: String,
    pub os_class: OsClass,
    pub model: String,
    pub wifi_on: bool,
}

impl DeviceRecord {
    /// Sharp Aquos sense basic 702SH.
    pub fn is_702sh(&self) -> bool {
        self.model.to_ascii_uppercase().contains("702SH")
    }
}

pub type LocationMap = BTreeMap<String, LocationRecord>;
pub type DeviceMap = BTreeMap<String, DeviceRecord>;

#[derive(Debug, Clone, Default)]
pub struct Registries {
    pub locations: LocationMap,
    pub devices: DeviceMap,
}

impl Registries {
    pub fn location(&self, id: &str) -> Result<&LocationRecord> {
        self.locations.get(id).ok_or_else(|| Error::Dangling {
            kind: "location",
            id: id.to_string(),
        })
    }

    pub fn device(&self, id: &str) -> Result<&DeviceRecord> {
        self.devices.get(id).ok_or_else(|| Error::Dangling {
            kind: "device",
            id: id.to_string(),
        })
    }

    /// Devices carried by a person, in device-id order.
    pub fn devices_of<'a>(&'a self, person_id: &'a str) -> impl Iterator<Item = &'a DeviceRecord> + 'a {
        self.devices.values().filter(move |d| d.person_id == person_id)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LocationJson {
    location_id: String,
    place_id: String,
    name: String,
    lat: f64,
    lon: f64,
    far_percent: f64,
    open_space: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    perimeter: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    district: Option<String>,
}

pub fn parse_locations(doc: &str) -> Result<LocationMap> {
    let raw: Vec<LocationJson> = serde_json::from_str(doc).map_err(|e| Error::Json {
        offset: super::byte_offset(doc, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut map = LocationMap::new();
    for r in raw {
        let centroid = LatLon::new(r.lat, r.lon);
        if !centroid.is_valid() {
            return Err(Error::Validation(format!("location {}: centroid out of range", r.location_id)));
        }
        if !(r.far_percent >= 0.0) {
            return Err(Error::Validation(format!("location {}: negative FAR", r.location_id)));
        }
        let perimeter = r
            .perimeter
            .map(|ring| Polygon::new(ring.into_iter().map(|[lat, lon]| LatLon::new(lat, lon)).collect()))
            .transpose()
            .map_err(|e| Error::Validation(format!("location {}: {e}", r.location_id)))?;
        if r.open_space && perimeter.is_none() {
            return Err(Error::Validation(format!(
                "location {}: open space requires a perimeter",
                r.location_id
            )));
        }
        let rec = LocationRecord {
            location_id: r.location_id.clone(),
            place_id: r.place_id,
            name: r.name,
            centroid,
            perimeter,
            far_percent: r.far_percent,
            open_space: r.open_space,
            district: r.district,
        };
        if map.insert(r.location_id.clone(), rec).is_some() {
            return Err(Error::DuplicateKey(r.location_id));
        }
    }
    Ok(map)
}

pub fn locations_to_json(locations: &LocationMap) -> String {
    let raw: Vec<LocationJson> = locations
        .values()
        .map(|l| LocationJson {
            location_id: l.location_id.clone(),
            place_id: l.place_id.clone(),
            name: l.name.clone(),
            lat: l.centroid.lat,
            lon: l.centroid.lon,
            far_percent: l.far_percent,
            open_space: l.open_space,
            perimeter: l
                .perimeter
                .as_ref()
                .map(|p| p.vertices().iter().map(|v| [v.lat, v.lon]).collect()),
            district: l.district.clone(),
        })
        .collect();
    serde_json::to_string_pretty(&raw).expect("registry serializes")
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "on" | "yes" => Some(true),
        "false" | "0" | "off" | "no" => Some(false),
        _ => None,
    }
}

#[derive(Debug, Deserialize)]
struct DeviceRow {
    device_id: String,
    person_id: String,
    os_class: String,
    model: String,
    wifi_on: String,
}

pub fn parse_devices(table: &str) -> Result<DeviceMap> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(table.as_bytes());
    let mut map = DeviceMap::new();
    for (i, rec) in reader.deserialize::<DeviceRow>().enumerate() {
        let row = i + 2;
        let r = rec.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        let os_class = r.os_class.parse().map_err(|e: Error| Error::Row {
            row,
            message: e.to_string(),
        })?;
        let wifi_on = parse_bool(&r.wifi_on).ok_or_else(|| Error::Row {
            row,
            message: format!("wifi_on `{}` is not a boolean", r.wifi_on),
        })?;
        let dev = DeviceRecord {
            device_id: r.device_id.clone(),
            person_id: r.person_id,
            os_class,
            model: r.model,
            wifi_on,
        };
        if map.insert(r.device_id.clone(), dev).is_some() {
            return Err(Error::DuplicateKey(r.device_id));
        }
    }
    Ok(map)
}

pub fn write_devices<W: Write>(devices: &DeviceMap, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["device_id", "person_id", "os_class", "model", "wifi_on"])?;
    for d in devices.values() {
        w.write_record([
            d.device_id.as_str(),
            d.person_id.as_str(),
            d.os_class.as_str(),
            d.model.as_str(),
            if d.wifi_on { "true" } else { "false" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses both registries.
pub fn parse_registries(location_doc: &str, device_table: &str) -> Result<Registries> {
    Ok(Registries {
        locations: parse_locations(location_doc)?,
        devices: parse_devices(device_table)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOCS: &str = r#"[
      {"location_id": "office", "place_id": "P1", "name": "Office", "lat": 35.70, "lon": 139.76,
       "far_percent": 650, "open_space": false},
      {"location_id": "park", "place_id": "P2", "name": "Park", "lat": 35.7195, "lon": 139.7451,
       "far_percent": 0, "open_space": true,
       "perimeter": [[35.718, 139.744], [35.718, 139.746], [35.721, 139.746], [35.721, 139.744]]}
    ]"#;

    const DEVS: &str = "device_id,person_id,os_class,model,wifi_on\n\
                        dev-A1,p1,android,702SH,true\n\
                        dev-I1,p1,ios,iPhone XR,false\n";

    #[test]
    fn far_650_is_mid_density() {
        let r = parse_registries(LOCS, DEVS).unwrap();
        let office = r.location("office").unwrap();
        assert_eq!(office.far_percent, 650.0);
        assert_eq!(office.far_level(), FarLevel::MidDensity);
        assert_eq!(office.far_level().label(), "Indoors - mid density");
        assert_eq!(r.location("park").unwrap().far_level(), FarLevel::OpenSpace);
    }

    #[test]
    fn device_row_mapping() {
        let r = parse_registries(LOCS, DEVS).unwrap();
        let d = r.device("dev-A1").unwrap();
        assert_eq!(d.os_class, OsClass::Android);
        assert_eq!(d.person_id, "p1");
        assert!(d.wifi_on && d.is_702sh());
        assert_eq!(r.devices_of("p1").count(), 2);
    }

    #[test]
    fn duplicate_location_rejected() {
        let doc = r#"[
          {"location_id": "x", "place_id": "P1", "name": "A", "lat": 1, "lon": 1, "far_percent": 100, "open_space": false},
          {"location_id": "x", "place_id": "P2", "name": "B", "lat": 1, "lon": 1, "far_percent": 100, "open_space": false}
        ]"#;
        assert!(matches!(parse_locations(doc), Err(Error::DuplicateKey(k)) if k == "x"));
    }

    #[test]
    fn duplicate_device_rejected() {
        let t = "device_id,person_id,os_class,model,wifi_on\nd,p,android,m,true\nd,q,ios,m,false\n";
        assert!(matches!(parse_devices(t), Err(Error::DuplicateKey(k)) if k == "d"));
    }

    #[test]
    fn open_space_requires_perimeter() {
        let doc = r#"[{"location_id": "x", "place_id": "P", "name": "A", "lat": 1, "lon": 1,
                      "far_percent": 0, "open_space": true}]"#;
        assert!(matches!(parse_locations(doc), Err(Error::Validation(_))));
    }

    #[test]
    fn far_class_boundaries() {
        assert_eq!(FarLevel::classify(299.9, false), FarLevel::LowDensity);
        assert_eq!(FarLevel::classify(300.0, false), FarLevel::MidDensity);
        assert_eq!(FarLevel::classify(700.0, false), FarLevel::MidDensity);
        assert_eq!(FarLevel::classify(700.1, false), FarLevel::HighDensity);
    }

    #[test]
    fn registry_json_round_trip() {
        let locs = parse_locations(LOCS).unwrap();
        assert_eq!(parse_locations(&locations_to_json(&locs)).unwrap(), locs);
        let devs = parse_devices(DEVS).unwrap();
        let mut buf = Vec::new();
        write_devices(&devs, &mut buf).unwrap();
        assert_eq!(parse_devices(std::str::from_utf8(&buf).unwrap()).unwrap(), devs);
    }
}
