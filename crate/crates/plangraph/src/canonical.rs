//! Canonical sample files: UTF-8, one JSON record per line.
//!
//! ```text
//! {"version":1,"frame_rate":2,"origin":[x,y],"agent_ids":[..],"categories":["vehicle",..],
//!  "obs":[[[x,y],..],..],"obs_mask":[[true,..],..],"fut":[..],"fut_mask":[..],"plan":[[x,y],..]}
//! ```
//!
//! Numbers are written with 17 significant digits, so every `f64` reads back
//! to the same bits.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use plangraph_core::{Category, Sample, Vec2};
use serde::Deserialize;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

fn num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn point(out: &mut String, p: Vec2) {
    out.push('[');
    num(out, p.x);
    out.push(',');
    num(out, p.y);
    out.push(']');
}

fn list<T>(out: &mut String, items: &[T], mut each: impl FnMut(&mut String, &T)) {
    out.push('[');
    for (i, it) in items.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        each(out, it);
    }
    out.push(']');
}

/// One sample as a single line (no trailing newline).
pub fn encode_sample(s: &Sample) -> String {
    let mut o = String::with_capacity(256 + 48 * s.agent_count() * (s.obs_points() + s.pred_points()));
    let _ = write!(o, "{{\"version\":{FORMAT_VERSION},\"frame_rate\":");
    num(&mut o, s.frame_rate);
    o.push_str(",\"origin\":");
    point(&mut o, s.origin);
    o.push_str(",\"agent_ids\":");
    list(&mut o, &s.agent_ids, |o, id| {
        let _ = write!(o, "{id}");
    });
    o.push_str(",\"categories\":");
    list(&mut o, &s.categories, |o, c| {
        let _ = write!(o, "\"{}\"", c.as_str());
    });
    let rows = |o: &mut String, rows: &[Vec<Vec2>]| list(o, rows, |o, r| list(o, r, |o, p| point(o, *p)));
    let masks = |o: &mut String, rows: &[Vec<bool>]| {
        list(o, rows, |o, r| {
            list(o, r, |o, m| o.push_str(if *m { "true" } else { "false" }))
        })
    };
    o.push_str(",\"obs\":");
    rows(&mut o, &s.observed);
    o.push_str(",\"obs_mask\":");
    masks(&mut o, &s.obs_mask);
    o.push_str(",\"fut\":");
    rows(&mut o, &s.future);
    o.push_str(",\"fut_mask\":");
    masks(&mut o, &s.fut_mask);
    o.push_str(",\"plan\":");
    list(&mut o, &s.ego_plan, |o, p| point(o, *p));
    o.push('}');
    o
}

#[derive(Deserialize)]
struct Versioned {
    version: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    #[allow(dead_code)]
    version: u32,
    frame_rate: f64,
    origin: [f64; 2],
    agent_ids: Vec<i64>,
    categories: Vec<Category>,
    obs: Vec<Vec<[f64; 2]>>,
    obs_mask: Vec<Vec<bool>>,
    fut: Vec<Vec<[f64; 2]>>,
    fut_mask: Vec<Vec<bool>>,
    plan: Vec<[f64; 2]>,
}

fn v2(p: [f64; 2]) -> Vec2 {
    Vec2::new(p[0], p[1])
}

fn rows(r: Vec<Vec<[f64; 2]>>) -> Vec<Vec<Vec2>> {
    r.into_iter().map(|row| row.into_iter().map(v2).collect()).collect()
}

/// Parses one line written by [`encode_sample`] and validates the sample.
pub fn decode_sample(line: &str) -> std::result::Result<Sample, String> {
    let v: Versioned = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if v.version != FORMAT_VERSION {
        return Err(format!("unsupported format version {} (expected {FORMAT_VERSION})", v.version));
    }
    let r: Record = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let s = Sample {
        agent_ids: r.agent_ids,
        categories: r.categories,
        observed: rows(r.obs),
        obs_mask: r.obs_mask,
        future: rows(r.fut),
        fut_mask: r.fut_mask,
        ego_plan: r.plan.into_iter().map(v2).collect(),
        frame_rate: r.frame_rate,
        origin: v2(r.origin),
    };
    s.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

pub fn write_canonical<W: Write>(samples: &[Sample], mut out: W) -> std::io::Result<()> {
    for s in samples {
        out.write_all(encode_sample(s).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// `path` only labels errors.
pub fn read_canonical<R: Read>(input: R, path: &Path) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = decode_sample(&line).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        })?;
        out.push(sample);
    }
    Ok(out)
}

pub fn save_samples(samples: &[Sample], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_canonical(samples, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_samples(path: &Path) -> Result<Vec<Sample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_canonical(file, path)
}
