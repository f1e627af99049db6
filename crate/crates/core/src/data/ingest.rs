//! Benchmark-style CSV trajectories.
//!
//! One file holds one scenario: rows of `TIMESTAMP, TRACK_ID, X, Y` plus a way
//! to flag the focal track, either `OBJECT_TYPE = AGENT` or a truthy `FOCAL`
//! column. Column names are matched case-insensitively; other columns are
//! ignored.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::scene::{GroundTruth, Point, Scene};

/// Scenes ingested from one or more files.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ingested {
    pub samples: Vec<(Scene, GroundTruth)>,
    /// Files skipped because the focal track does not cover the window.
    pub skipped: Vec<PathBuf>,
}

#[derive(Clone, Debug, Default)]
struct Track {
    focal: bool,
    /// (time, position), sorted by time.
    samples: Vec<(f64, Point)>,
}

impl Track {
    /// Linear interpolation; `None` outside the observed time span.
    fn at(&self, t: f64) -> Option<Point> {
        const TOL: f64 = 1e-6;
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t < first.0 - TOL || t > last.0 + TOL {
            return None;
        }
        let i = self.samples.partition_point(|s| s.0 < t);
        if i == 0 {
            return Some(first.1);
        }
        if i == self.samples.len() {
            return Some(last.1);
        }
        let (t0, p0) = self.samples[i - 1];
        let (t1, p1) = self.samples[i];
        if (t1 - t).abs() <= TOL || t1 == t0 {
            return Some(p1);
        }
        let w = (t - t0) / (t1 - t0);
        Some([p0[0] + w * (p1[0] - p0[0]), p0[1] + w * (p1[1] - p0[1])])
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name))
}

fn read_tracks(path: &Path) -> Result<BTreeMap<String, Track>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let need = |name: &str| {
        column(&headers, name).ok_or_else(|| Error::parse(1, format!("missing column `{name}`")).with_source(path))
    };
    let (ts, id, x, y) = (need("timestamp")?, need("track_id")?, need("x")?, need("y")?);
    let object_type = column(&headers, "object_type");
    let focal_col = column(&headers, "focal");
    if object_type.is_none() && focal_col.is_none() {
        return Err(Error::parse(1, "need an `OBJECT_TYPE` or `FOCAL` column to find the focal track").with_source(path));
    }
    let mut tracks: BTreeMap<String, Track> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |c: usize| -> Result<f64> {
            let v = rec.get(c).unwrap_or("");
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(line, format!("expected a number, found `{v}`")).with_source(path))
        };
        let (t, px, py) = (num(ts)?, num(x)?, num(y)?);
        let focal = object_type.is_some_and(|c| rec.get(c).is_some_and(|v| v.eq_ignore_ascii_case("agent")))
            || focal_col.is_some_and(|c| rec.get(c).is_some_and(|v| matches!(v.to_ascii_lowercase().as_str(), "1" | "true" | "yes")));
        let track = tracks.entry(rec.get(id).unwrap_or("").to_string()).or_default();
        track.focal |= focal;
        track.samples.push((t, [px, py]));
    }
    for t in tracks.values_mut() {
        t.samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(tracks)
}

/// Scene from one CSV file, or `None` when the focal track is too short.
///
/// The time grid starts at the focal track's first timestamp and steps at the
/// configured sample rate. Every track is linearly interpolated onto it; only
/// tracks covering the whole window are candidates, and the `A − 1` nearest
/// to the focal agent at the last observed step are kept.
pub fn ingest_file(path: &Path, config: &Config) -> Result<Option<(Scene, GroundTruth)>> {
    let tracks = read_tracks(path)?;
    let mut focal = tracks.iter().filter(|(_, t)| t.focal);
    let (focal_id, focal) = match (focal.next(), focal.next()) {
        (Some(f), None) => f,
        (None, _) => return Err(Error::parse(1, "no focal track flagged").with_source(path)),
        (Some(_), Some(_)) => return Err(Error::parse(1, "more than one focal track flagged").with_source(path)),
    };
    let (t_in, t_out) = (config.t_in, config.t_out);
    let dt = 1.0 / config.sample_rate_hz;
    let start = focal.samples[0].0;
    let grid: Vec<f64> = (0..t_in + t_out).map(|k| start + k as f64 * dt).collect();
    let resample = |t: &Track| -> Option<Vec<Point>> { grid.iter().map(|&g| t.at(g)).collect() };
    let Some(focal_path) = resample(focal) else {
        return Ok(None);
    };
    let anchor = focal_path[t_in - 1];
    let mut others: Vec<(f64, &String, Vec<Point>)> = tracks
        .iter()
        .filter(|(id, _)| *id != focal_id)
        .filter_map(|(id, t)| {
            let path = resample(t)?;
            let p = path[t_in - 1];
            Some(((p[0] - anchor[0]).hypot(p[1] - anchor[1]), id, path))
        })
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    others.truncate(config.agents - 1);

    let mut paths = vec![focal_path];
    paths.extend(others.into_iter().map(|o| o.2));
    let real = paths.len();
    paths.resize(config.agents, vec![[0.0; 2]; t_in + t_out]);
    let agent_mask: Vec<bool> = (0..config.agents).map(|i| i < real).collect();
    let scene = Scene {
        histories: paths.iter().map(|p| p[..t_in].to_vec()).collect(),
        agent_mask: agent_mask.clone(),
        lanes: vec![vec![[0.0; 2]; config.lane_points]; config.lanes],
        lane_mask: vec![false; config.lanes],
    };
    let truth = GroundTruth {
        futures: paths.iter().map(|p| p[t_in..].to_vec()).collect(),
        agent_mask,
    };
    Ok(Some((scene, truth)))
}

/// Ingest a CSV file or every `.csv` file of a directory (in name order).
pub fn ingest_csv(path: &Path, config: &Config) -> Result<Ingested> {
    let files = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Ingested::default();
    for f in files {
        match ingest_file(&f, config)? {
            Some(s) => out.samples.push(s),
            None => out.skipped.push(f),
        }
    }
    Ok(out)
}
