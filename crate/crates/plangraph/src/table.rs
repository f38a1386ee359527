//! Raw trajectory tables.
//!
//! Rows are whitespace- or comma-separated. Blank lines and lines starting
//! with `#` are skipped; columns past the fifth are ignored.
//!
//! * apollo-like: `frame_id agent_id type_code x y` (meters)
//! * ngsim-like: `vehicle_id frame_id local_x local_y lane_id` (feet, 10 Hz)

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use plangraph_core::scene::{AgentTrack, Recording, TrackPoint};
use plangraph_core::{Category, Vec2};

use crate::error::{Error, Result};

pub const FEET_TO_METERS: f64 = 0.3048;
/// Source frames per retained frame for ngsim-like tables.
pub const NGSIM_DOWNSAMPLE: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    ApolloLike,
    NgsimLike,
}

struct Row {
    frame: i64,
    agent: i64,
    category: Category,
    position: Vec2,
    lane: Option<i32>,
}

fn field<T: FromStr>(cols: &[&str], i: usize, what: &str) -> std::result::Result<T, String> {
    let raw = cols.get(i).ok_or_else(|| format!("missing column {} ({what})", i + 1))?;
    raw.parse().map_err(|_| format!("bad {what} `{raw}`"))
}

fn finite(v: f64, what: &str) -> std::result::Result<f64, String> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite {what}"))
    }
}

fn parse_row(cols: &[&str], format: TableFormat) -> std::result::Result<Row, String> {
    if cols.len() < 5 {
        return Err(format!("expected at least 5 columns, found {}", cols.len()));
    }
    match format {
        TableFormat::ApolloLike => {
            let code: i64 = field(cols, 2, "type code")?;
            Ok(Row {
                frame: field(cols, 0, "frame id")?,
                agent: field(cols, 1, "agent id")?,
                category: Category::from_apollo_code(code).ok_or_else(|| format!("unknown type code {code}"))?,
                position: Vec2::new(finite(field(cols, 3, "x")?, "x")?, finite(field(cols, 4, "y")?, "y")?),
                lane: None,
            })
        }
        TableFormat::NgsimLike => {
            let x = finite(field(cols, 2, "local x")?, "local x")?;
            let y = finite(field(cols, 3, "local y")?, "local y")?;
            Ok(Row {
                agent: field(cols, 0, "vehicle id")?,
                frame: field(cols, 1, "frame id")?,
                category: Category::Vehicle,
                position: Vec2::new(x * FEET_TO_METERS, y * FEET_TO_METERS),
                lane: Some(field(cols, 4, "lane id")?),
            })
        }
    }
}

/// Parses table text. `path` only labels errors and names the recording.
pub fn parse_table(text: &str, format: TableFormat, path: &Path) -> Result<Recording> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut tracks: BTreeMap<i64, AgentTrack> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let row = parse_row(&cols, format).map_err(|m| parse_err(line_no, m))?;
        if format == TableFormat::NgsimLike && row.frame.rem_euclid(NGSIM_DOWNSAMPLE) != 0 {
            continue;
        }
        let track = tracks.entry(row.agent).or_insert_with(|| AgentTrack {
            agent_id: row.agent,
            category: row.category,
            states: Vec::new(),
        });
        if track.category != row.category {
            return Err(parse_err(
                line_no,
                format!("agent {} changes type from {} to {}", row.agent, track.category, row.category),
            ));
        }
        if let Some(prev) = track.states.last() {
            if row.frame == prev.frame {
                return Err(parse_err(line_no, format!("duplicate row for agent {} frame {}", row.agent, row.frame)));
            }
            if row.frame < prev.frame {
                return Err(parse_err(
                    line_no,
                    format!("agent {}: frame {} after frame {}", row.agent, row.frame, prev.frame),
                ));
            }
        }
        track.states.push(TrackPoint {
            frame: row.frame,
            position: row.position,
            lane: row.lane,
        });
    }
    Ok(Recording {
        name: path.display().to_string(),
        tracks: tracks.into_values().collect(),
    })
}

/// Reads one table file as one recording.
pub fn load_trajectory_table(path: &Path, format: TableFormat) -> Result<Recording> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text, format, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, format: TableFormat) -> Result<Recording> {
        parse_table(text, format, Path::new("t.txt"))
    }

    #[test]
    fn empty_file_has_no_tracks() {
        assert!(parse("", TableFormat::ApolloLike).unwrap().tracks.is_empty());
        assert!(parse("\n# comment\n", TableFormat::NgsimLike).unwrap().tracks.is_empty());
    }

    #[test]
    fn apollo_rows_group_by_agent() {
        let text = "1 7 1 0.5 1.5 0 4 2 1 0\n1 3 3 2.0 2.0\n2 7 2 1.0 1.5\n2,3,3,2.5,2.0\n";
        let rec = parse(text, TableFormat::ApolloLike).unwrap();
        assert_eq!(rec.tracks.len(), 2);
        assert_eq!(rec.tracks[0].agent_id, 3);
        assert_eq!(rec.tracks[0].category, Category::Pedestrian);
        assert_eq!(rec.tracks[1].category, Category::Vehicle);
        assert_eq!(rec.tracks[1].states[1].position, Vec2::new(1.0, 1.5));
    }

    #[test]
    fn ngsim_keeps_even_frames() {
        let text: String = (0..10).map(|f| format!("1 {f} 1.0 {f}.0 2\n")).collect();
        let rec = parse(&text, TableFormat::NgsimLike).unwrap();
        let frames: Vec<i64> = rec.tracks[0].states.iter().map(|s| s.frame).collect();
        assert_eq!(frames, [0, 2, 4, 6, 8]);
        assert_eq!(rec.tracks[0].states[0].lane, Some(2));
    }

    #[test]
    fn ngsim_converts_feet() {
        let rec = parse("4 10 10.0 -3.5 1\n", TableFormat::NgsimLike).unwrap();
        let p = rec.tracks[0].states[0].position;
        assert!((p.x - 3.048).abs() < 1e-12);
        assert!((p.y + 1.0668).abs() < 1e-12);
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse("1 1 1 0 0\n2 1 1 zero 0\n", TableFormat::ApolloLike).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("zero"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicates_and_reversals_rejected() {
        let dup = parse("1 1 1 0 0\n1 1 1 0 0\n", TableFormat::ApolloLike).unwrap_err();
        assert!(matches!(dup, Error::Parse { line: 2, .. }));
        let back = parse("2 1 1 0 0\n1 1 1 0 0\n", TableFormat::ApolloLike).unwrap_err();
        assert!(back.to_string().contains("after frame"), "{back}");
    }

    #[test]
    fn unknown_type_code_rejected() {
        assert!(parse("1 1 9 0 0\n", TableFormat::ApolloLike).is_err());
        assert!(parse("1 1 1 nan 0\n", TableFormat::ApolloLike).is_err());
        assert!(parse("1 1 1 0\n", TableFormat::ApolloLike).is_err());
    }
}
