//! Parsing of location-history exports, ground-truth diaries and registries.

mod ground_truth;
mod location_history;
mod registry;

pub use ground_truth::{parse_ground_truth, write_ground_truth, GroundTruthActivity, GROUND_TRUTH_HEADER};
pub use location_history::{
    parse_location_history, ActivitySegment, CandidateLocation, DeviceHistory, PlaceVisit, MAX_LAT_E7, MAX_LON_E7,
};
pub use registry::{
    locations_to_json, parse_devices, parse_locations, parse_registries, write_devices, DeviceMap, DeviceRecord,
    FarLevel, LocationMap, LocationRecord, OsClass, Registries,
};

/// Converts serde_json's 1-based line/column into a byte offset.
pub(crate) fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let before: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (before + column.saturating_sub(1)).min(text.len())
}
