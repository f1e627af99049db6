//! Line-oriented text files for scenes and forecasts.
//!
//! ```text
//! scene 1
//! dims 4 20 30 10 100 10
//! agent 0 1 x y x y ...
//! future 0 x y x y ...
//! lane 0 1 x y x y ...
//! ```
//!
//! `dims` lists agents, history, future, lanes, lane points and the sample
//! rate in Hz. `future` lines are optional but come for every agent or for
//! none. Numbers are written with 17 significant digits so reading a written
//! file restores every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scene::{Dims, ForecastSet, GroundTruth, Point, Scene};

const SCENE_TAG: &str = "scene";
const FORECAST_TAG: &str = "forecast";
const VERSION: u32 = 1;

/// A scene as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneFile {
    pub dims: Dims,
    pub sample_rate_hz: f64,
    pub scene: Scene,
    pub truth: Option<GroundTruth>,
}

pub(crate) fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_points(s: &mut String, pts: &[Point]) {
    for p in pts {
        let _ = write!(s, " {} {}", num(p[0]), num(p[1]));
    }
}

fn flag(b: bool) -> u8 {
    u8::from(b)
}

impl SceneFile {
    pub fn new(scene: Scene, truth: Option<GroundTruth>, future: usize, sample_rate_hz: f64) -> Result<Self> {
        let dims = scene.dims(future);
        let v = scene.validate(&dims);
        if !v.is_empty() {
            return Err(Error::InvalidScene(v));
        }
        if let Some(gt) = &truth {
            let v = gt.validate(&dims);
            if !v.is_empty() {
                return Err(Error::InvalidGroundTruth(v));
            }
            if gt.agent_mask != scene.agent_mask {
                return Err(Error::Incompatible("ground-truth mask differs from scene mask".into()));
            }
        }
        Ok(Self {
            dims,
            sample_rate_hz,
            scene,
            truth,
        })
    }

    pub fn to_text(&self) -> String {
        let d = &self.dims;
        let mut s = String::new();
        let _ = writeln!(s, "{SCENE_TAG} {VERSION}");
        let _ = writeln!(
            s,
            "dims {} {} {} {} {} {}",
            d.agents,
            d.history,
            d.future,
            d.lanes,
            d.lane_points,
            num(self.sample_rate_hz)
        );
        for (i, (h, &m)) in self.scene.histories.iter().zip(&self.scene.agent_mask).enumerate() {
            let _ = write!(s, "agent {i} {}", flag(m));
            push_points(&mut s, h);
            s.push('\n');
        }
        if let Some(gt) = &self.truth {
            for (i, f) in gt.futures.iter().enumerate() {
                let _ = write!(s, "future {i}");
                push_points(&mut s, f);
                s.push('\n');
            }
        }
        for (i, (l, &m)) in self.scene.lanes.iter().zip(&self.scene.lane_mask).enumerate() {
            let _ = write!(s, "lane {i} {}", flag(m));
            push_points(&mut s, l);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        lines.expect_header(SCENE_TAG)?;
        let (n, f) = lines.next_fields("dims")?;
        let d = lines.ints(n, &f, 5, 1)?;
        let dims = Dims {
            agents: d[0],
            history: d[1],
            future: d[2],
            lanes: d[3],
            lane_points: d[4],
        };
        let rate = parse_f64(n, f[5])?;

        let mut histories = Vec::with_capacity(dims.agents);
        let mut agent_mask = Vec::with_capacity(dims.agents);
        for i in 0..dims.agents {
            let (n, f) = lines.block("agent", i, dims.agents)?;
            agent_mask.push(parse_flag(n, f[1])?);
            histories.push(points(n, &f[2..], dims.history)?);
        }
        let mut futures = Vec::new();
        if lines.peek_tag() == Some("future") {
            for i in 0..dims.agents {
                let (n, f) = lines.block("future", i, dims.agents)?;
                futures.push(points(n, &f[1..], dims.future)?);
            }
        }
        let mut lanes = Vec::with_capacity(dims.lanes);
        let mut lane_mask = Vec::with_capacity(dims.lanes);
        for i in 0..dims.lanes {
            let (n, f) = lines.block("lane", i, dims.lanes)?;
            lane_mask.push(parse_flag(n, f[1])?);
            lanes.push(points(n, &f[2..], dims.lane_points)?);
        }
        lines.expect_end()?;
        let scene = Scene {
            histories,
            agent_mask,
            lanes,
            lane_mask,
        };
        let truth = (!futures.is_empty()).then(|| GroundTruth {
            futures,
            agent_mask: scene.agent_mask.clone(),
        });
        SceneFile::new(scene, truth, dims.future, rate)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| e.with_source(path))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// A forecast file: every head, the probabilities and the selected head.
///
/// ```text
/// forecast 1
/// dims 4 6 30
/// agent 0 1 2 p0 p1 ... p5
/// head 0 0 x y x y ...
/// ```
///
/// `agent i mask selected probabilities...`, then one `head i k` line per head.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastFile {
    pub agent_mask: Vec<bool>,
    /// `None` for a forecast without heads, written as `-`.
    pub selected: Vec<Option<usize>>,
    pub forecast: ForecastSet,
}

impl ForecastFile {
    pub fn new(forecast: ForecastSet, agent_mask: Vec<bool>) -> Result<Self> {
        let v = forecast.validate();
        if !v.is_empty() {
            return Err(Error::InvalidForecast(v));
        }
        if agent_mask.len() != forecast.agents() {
            return Err(Error::Incompatible(format!(
                "{} mask entries for {} agents",
                agent_mask.len(),
                forecast.agents()
            )));
        }
        let selected = crate::scene::select_trajectories(&forecast).iter().map(|s| s.map(|s| s.0)).collect();
        Ok(Self {
            agent_mask,
            selected,
            forecast,
        })
    }

    pub fn to_text(&self) -> String {
        let f = &self.forecast;
        let mut s = String::new();
        let _ = writeln!(s, "{FORECAST_TAG} {VERSION}");
        let _ = writeln!(s, "dims {} {} {}", f.agents(), f.heads(), f.horizon());
        for i in 0..f.agents() {
            let sel = self.selected[i].map_or("-".to_string(), |k| k.to_string());
            let _ = write!(s, "agent {i} {} {sel}", flag(self.agent_mask[i]));
            for p in &f.probabilities[i] {
                let _ = write!(s, " {}", num(*p));
            }
            s.push('\n');
            for (k, traj) in f.trajectories[i].iter().enumerate() {
                let _ = write!(s, "head {i} {k}");
                push_points(&mut s, traj);
                s.push('\n');
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        lines.expect_header(FORECAST_TAG)?;
        let (n, f) = lines.next_fields("dims")?;
        let d = lines.ints(n, &f, 3, 0)?;
        let (agents, heads, horizon) = (d[0], d[1], d[2]);
        let mut agent_mask = Vec::with_capacity(agents);
        let mut selected = Vec::with_capacity(agents);
        let mut trajectories = Vec::with_capacity(agents);
        let mut probabilities = Vec::with_capacity(agents);
        for i in 0..agents {
            let (n, f) = lines.block("agent", i, agents)?;
            if f.len() != 3 + heads {
                return Err(Error::parse(n, format!("expected {} probabilities, found {}", heads, f.len().saturating_sub(3))));
            }
            agent_mask.push(parse_flag(n, f[1])?);
            let sel = match f[2] {
                "-" => None,
                v => Some(v.parse::<usize>().map_err(|_| Error::parse(n, format!("bad head index `{v}`")))?),
            };
            selected.push(sel);
            probabilities.push(f[3..].iter().map(|v| parse_f64(n, v)).collect::<Result<Vec<_>>>()?);
            let mut heads_i = Vec::with_capacity(heads);
            for k in 0..heads {
                let (n, f) = lines.next_fields("head")?;
                if f.len() < 2 || f[0] != i.to_string() || f[1] != k.to_string() {
                    return Err(Error::parse(n, format!("expected `head {i} {k}`")));
                }
                heads_i.push(points(n, &f[2..], horizon)?);
            }
            trajectories.push(heads_i);
        }
        lines.expect_end()?;
        let file = Self::new(
            ForecastSet {
                trajectories,
                probabilities,
            },
            agent_mask,
        )?;
        if file.selected != selected {
            return Err(Error::Incompatible("selected heads disagree with the probabilities".into()));
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| e.with_source(path))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Numbered, comment-free line cursor.
struct Lines<'a> {
    lines: Vec<(usize, &'a str)>,
    at: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Self { lines, at: 0 }
    }

    fn last_line(&self) -> usize {
        self.lines.last().map_or(1, |l| l.0 + 1)
    }

    fn peek_tag(&self) -> Option<&'a str> {
        self.lines.get(self.at).and_then(|(_, l)| l.split_whitespace().next())
    }

    /// Next line, which must start with `tag`; returns the remaining fields.
    fn next_fields(&mut self, tag: &str) -> Result<(usize, Vec<&'a str>)> {
        let Some(&(n, line)) = self.lines.get(self.at) else {
            return Err(Error::parse(self.last_line(), format!("expected `{tag}` line, found end of file")));
        };
        let mut it = line.split_whitespace();
        let found = it.next().unwrap_or("");
        if found != tag {
            return Err(Error::parse(n, format!("expected `{tag}` line, found `{found}`")));
        }
        self.at += 1;
        Ok((n, it.collect()))
    }

    fn expect_header(&mut self, tag: &str) -> Result<()> {
        let (n, f) = self.next_fields(tag)?;
        match f.as_slice() {
            [v] if *v == VERSION.to_string() => Ok(()),
            _ => Err(Error::parse(n, format!("expected `{tag} {VERSION}`"))),
        }
    }

    /// Block `i` of `count` introduced by `tag i ...`.
    fn block(&mut self, tag: &str, i: usize, count: usize) -> Result<(usize, Vec<&'a str>)> {
        let (n, f) = match self.next_fields(tag) {
            Ok(v) => v,
            Err(Error::Parse { line, message, .. }) => {
                return Err(Error::parse(
                    line,
                    format!("{message}: header declares {count} `{tag}` blocks, only {i} present"),
                ))
            }
            Err(e) => return Err(e),
        };
        if f.first() != Some(&i.to_string().as_str()) {
            return Err(Error::parse(n, format!("expected `{tag} {i}`")));
        }
        Ok((n, f))
    }

    fn ints(&self, n: usize, f: &[&str], count: usize, extra: usize) -> Result<Vec<usize>> {
        if f.len() != count + extra {
            return Err(Error::parse(n, format!("expected {} fields, found {}", count + extra, f.len())));
        }
        f[..count]
            .iter()
            .map(|v| v.parse().map_err(|_| Error::parse(n, format!("expected a count, found `{v}`"))))
            .collect()
    }

    fn expect_end(&self) -> Result<()> {
        match self.lines.get(self.at) {
            None => Ok(()),
            Some((n, l)) => Err(Error::parse(*n, format!("unexpected trailing line `{}`", truncate(l)))),
        }
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(40) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn parse_f64(n: usize, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| Error::parse(n, format!("expected a number, found `{v}`")))?;
    if !x.is_finite() {
        return Err(Error::parse(n, format!("non-finite value `{v}`")));
    }
    Ok(x)
}

fn parse_flag(n: usize, v: &str) -> Result<bool> {
    match v {
        "1" => Ok(true),
        "0" => Ok(false),
        _ => Err(Error::parse(n, format!("expected mask 0 or 1, found `{v}`"))),
    }
}

fn points(n: usize, f: &[&str], count: usize) -> Result<Vec<Point>> {
    if f.len() != 2 * count {
        return Err(Error::parse(n, format!("expected {} coordinates, found {}", 2 * count, f.len())));
    }
    f.chunks(2)
        .map(|c| Ok([parse_f64(n, c[0])?, parse_f64(n, c[1])?]))
        .collect()
}

/// Scene files in a directory, sorted by file name.
pub fn list_scene_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scene"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_dataset(dir: &Path) -> Result<Vec<SceneFile>> {
    let files = list_scene_files(dir)?;
    if files.is_empty() {
        return Err(Error::Empty("dataset directory"));
    }
    files.iter().map(|p| SceneFile::read(p)).collect()
}

/// Writes `scene_00000.scene`, `scene_00001.scene`, ... into `dir`.
pub fn save_dataset(dir: &Path, files: &[SceneFile]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, f) in files.iter().enumerate() {
        let mut out = fs::File::create(dir.join(format!("scene_{i:05}.scene")))?;
        out.write_all(f.to_text().as_bytes())?;
    }
    Ok(())
}
