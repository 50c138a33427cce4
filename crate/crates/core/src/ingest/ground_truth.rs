//! Participant-logged activity diaries.

use std::collections::BTreeSet;
use std::io::Write;

use chrono::{DateTime, FixedOffset, TimeZone};
use serde::Deserialize;

use crate::error::{Error, Result};

pub const GROUND_TRUTH_HEADER: [&str; 6] = [
    "activity_id",
    "location_id",
    "start_time",
    "end_time",
    "group_size",
    "participant_ids",
];

/// One executed activity and the people who took part in it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthActivity {
    pub activity_id: String,
    pub location_id: String,
    pub start_ms: i64,
    pub end_ms: i64,
    /// Offset of the logged timestamps, kept so the diary can be re-emitted.
    pub utc_offset_s: i32,
    pub participant_ids: Vec<String>,
}

impl GroundTruthActivity {
    pub fn new(
        activity_id: impl Into<String>,
        location_id: impl Into<String>,
        start_ms: i64,
        end_ms: i64,
        participant_ids: Vec<String>,
    ) -> Result<Self> {
        let a = Self {
            activity_id: activity_id.into(),
            location_id: location_id.into(),
            start_ms,
            end_ms,
            utc_offset_s: 0,
            participant_ids,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn with_utc_offset(mut self, seconds: i32) -> Self {
        self.utc_offset_s = seconds;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.end_ms <= self.start_ms {
            return Err(Error::Interval {
                start_ms: self.start_ms,
                end_ms: self.end_ms,
            });
        }
        if self.participant_ids.is_empty() {
            return Err(Error::Validation(format!("activity {} has no participants", self.activity_id)));
        }
        let distinct: BTreeSet<_> = self.participant_ids.iter().collect();
        if distinct.len() != self.participant_ids.len() {
            return Err(Error::Validation(format!(
                "activity {} lists a participant twice",
                self.activity_id
            )));
        }
        Ok(())
    }

    pub fn group_size(&self) -> usize {
        self.participant_ids.len()
    }

    pub fn duration_min(&self) -> f64 {
        (self.end_ms - self.start_ms) as f64 / 60_000.0
    }

    fn format_time(&self, ms: i64) -> String {
        let offset = FixedOffset::east_opt(self.utc_offset_s).unwrap_or(FixedOffset::east_opt(0).unwrap());
        let dt = offset.timestamp_millis_opt(ms).single().expect("valid epoch milliseconds");
        if ms % 1000 == 0 {
            dt.format("%Y-%m-%dT%H:%M:%S%:z").to_string()
        } else {
            dt.format("%Y-%m-%dT%H:%M:%S%.3f%:z").to_string()
        }
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    activity_id: String,
    location_id: String,
    start_time: String,
    end_time: String,
    group_size: String,
    participant_ids: String,
}

fn parse_time(s: &str, row: usize, column: &str) -> Result<DateTime<FixedOffset>> {
    DateTime::parse_from_rfc3339(s.trim()).map_err(|e| Error::Row {
        row,
        message: format!("{column} `{s}` is not an ISO-8601 timestamp with offset: {e}"),
    })
}

/// Reads the diary table. Row numbers in errors count the header as row 1.
pub fn parse_ground_truth(table: &str) -> Result<Vec<GroundTruthActivity>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(table.as_bytes());
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, record) in reader.deserialize::<Row>().enumerate() {
        let row_no = i + 2;
        let row = record.map_err(|e| Error::Row {
            row: row_no,
            message: e.to_string(),
        })?;
        let start = parse_time(&row.start_time, row_no, "start_time")?;
        let end = parse_time(&row.end_time, row_no, "end_time")?;
        let group_size: usize = row.group_size.parse().map_err(|_| Error::Row {
            row: row_no,
            message: format!("group_size `{}` is not a positive integer", row.group_size),
        })?;
        let participants: Vec<String> = row
            .participant_ids
            .split('|')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::to_string)
            .collect();
        if group_size == 0 || participants.len() != group_size {
            return Err(Error::Row {
                row: row_no,
                message: format!(
                    "group_size {group_size} but {} participants listed",
                    participants.len()
                ),
            });
        }
        if !seen.insert(row.activity_id.clone()) {
            return Err(Error::DuplicateKey(row.activity_id));
        }
        let activity = GroundTruthActivity::new(
            row.activity_id,
            row.location_id,
            start.timestamp_millis(),
            end.timestamp_millis(),
            participants,
        )
        .map_err(|e| Error::Row {
            row: row_no,
            message: e.to_string(),
        })?
        .with_utc_offset(start.offset().local_minus_utc());
        out.push(activity);
    }
    Ok(out)
}

pub fn write_ground_truth<W: Write>(activities: &[GroundTruthActivity], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GROUND_TRUTH_HEADER)?;
    for a in activities {
        w.write_record([
            a.activity_id.clone(),
            a.location_id.clone(),
            a.format_time(a.start_ms),
            a.format_time(a.end_ms),
            a.group_size().to_string(),
            a.participant_ids.join("|"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "activity_id,location_id,start_time,end_time,group_size,participant_ids\n";

    #[test]
    fn duration_from_offset_timestamps() {
        let t = format!("{HEADER}a1,koishikawa,2020-12-17T09:54:51+09:00,2020-12-17T10:00:54+09:00,2,p1|p2\n");
        let acts = parse_ground_truth(&t).unwrap();
        assert_eq!(acts.len(), 1);
        let a = &acts[0];
        assert_eq!(a.group_size(), 2);
        assert!((a.duration_min() - 6.05).abs() < 1e-12);
        assert_eq!(a.start_ms, 1_608_166_491_000);
        assert_eq!(a.utc_offset_s, 9 * 3600);
    }

    #[test]
    fn twenty_five_four_person_rows() {
        let mut t = HEADER.to_string();
        for i in 0..25 {
            t.push_str(&format!(
                "g4-{i},loc,2020-12-17T10:00:00+09:00,2020-12-17T10:30:00+09:00,4,p1|p2|p3|p4\n"
            ));
        }
        let acts = parse_ground_truth(&t).unwrap();
        assert_eq!(acts.len(), 25);
        assert!(acts.iter().all(|a| a.group_size() == 4));
    }

    #[test]
    fn participant_count_mismatch() {
        let t = format!("{HEADER}a1,l,2020-12-17T10:00:00+09:00,2020-12-17T10:30:00+09:00,4,p1|p2|p3\n");
        match parse_ground_truth(&t) {
            Err(Error::Row { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn bad_timestamp_names_row() {
        let t = format!(
            "{HEADER}a1,l,2020-12-17T10:00:00+09:00,2020-12-17T10:30:00+09:00,1,p1\n\
             a2,l,2020-12-17 10:00,2020-12-17T10:30:00+09:00,1,p1\n"
        );
        match parse_ground_truth(&t) {
            Err(Error::Row { row, message }) => {
                assert_eq!(row, 3);
                assert!(message.contains("start_time"));
            }
            other => panic!("expected row error, got {other:?}"),
        }
        // No offset: rejected.
        let t = format!("{HEADER}a1,l,2020-12-17T10:00:00,2020-12-17T10:30:00,1,p1\n");
        assert!(parse_ground_truth(&t).is_err());
    }

    #[test]
    fn written_diary_parses_back() {
        let t = format!(
            "{HEADER}a1,l,2020-12-17T09:54:51+09:00,2020-12-17T10:00:54.250+09:00,2,p1|p2\n"
        );
        let acts = parse_ground_truth(&t).unwrap();
        let mut buf = Vec::new();
        write_ground_truth(&acts, &mut buf).unwrap();
        let again = parse_ground_truth(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(acts, again);
    }
}
