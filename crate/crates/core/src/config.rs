//! Run configuration and its flat `key = value` file format.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scene::Dims;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapMode {
    /// Map ignored; the map feature is the zero vector.
    None,
    /// Lane coordinates relative to the lane centroid.
    Raw,
    /// Segment lengths and turning angles only.
    Invariant,
}

impl FromStr for MapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(MapMode::None),
            "raw" => Ok(MapMode::Raw),
            "invariant" => Ok(MapMode::Invariant),
            other => Err(Error::Config(format!("unknown map mode `{other}`"))),
        }
    }
}

impl fmt::Display for MapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapMode::None => "none",
            MapMode::Raw => "raw",
            MapMode::Invariant => "invariant",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub t_in: usize,
    pub t_out: usize,
    pub agents: usize,
    pub lanes: usize,
    pub lane_points: usize,
    pub heads: usize,
    pub cycles: usize,
    pub hidden_dim: usize,
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub map_mode: MapMode,
    pub seed: u64,
    pub miss_threshold: f64,
    pub sample_rate_hz: f64,
    pub checkpoint_every: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            t_in: 20,
            t_out: 30,
            agents: 4,
            lanes: 10,
            lane_points: 100,
            heads: 6,
            cycles: 20,
            hidden_dim: 64,
            beta: 0.5,
            learning_rate: 1e-5,
            epochs: 50,
            batch_size: 512,
            map_mode: MapMode::Invariant,
            seed: 0,
            miss_threshold: 2.0,
            sample_rate_hz: 10.0,
            checkpoint_every: 10,
        }
    }
}

impl Config {
    /// The smallest configuration used for gradient checking.
    pub fn tiny() -> Self {
        Self {
            t_in: 4,
            t_out: 3,
            agents: 2,
            lanes: 2,
            lane_points: 5,
            heads: 2,
            cycles: 2,
            hidden_dim: 8,
            ..Self::default()
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            agents: self.agents,
            history: self.t_in,
            future: self.t_out,
            lanes: self.lanes,
            lane_points: self.lane_points,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("t_in", self.t_in),
            ("t_out", self.t_out),
            ("agents", self.agents),
            ("lanes", self.lanes),
            ("lane_points", self.lane_points),
            ("heads", self.heads),
            ("cycles", self.cycles),
            ("hidden_dim", self.hidden_dim),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("checkpoint_every", self.checkpoint_every),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.t_in < 2 {
            return Err(Error::Config("t_in must be at least 2".into()));
        }
        if self.lane_points < 3 {
            return Err(Error::Config("lane_points must be at least 3".into()));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta {} outside [0, 1]", self.beta)));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("miss_threshold", self.miss_threshold),
            ("sample_rate_hz", self.sample_rate_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Every field as a `(key, value)` pair, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("t_in", self.t_in.to_string()),
            ("t_out", self.t_out.to_string()),
            ("agents", self.agents.to_string()),
            ("lanes", self.lanes.to_string()),
            ("lane_points", self.lane_points.to_string()),
            ("heads", self.heads.to_string()),
            ("cycles", self.cycles.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("beta", self.beta.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("map_mode", self.map_mode.to_string()),
            ("seed", self.seed.to_string()),
            ("miss_threshold", self.miss_threshold.to_string()),
            ("sample_rate_hz", self.sample_rate_hz.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
        ]
    }

    /// Parse `key = value` lines over the defaults. Blank lines and `#`
    /// comments are skipped; unknown keys are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, format!("expected `key = value`, got `{line}`")))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value `{v}` for {key}")))
        }
        match key {
            "t_in" => self.t_in = num(key, value)?,
            "t_out" => self.t_out = num(key, value)?,
            "agents" => self.agents = num(key, value)?,
            "lanes" => self.lanes = num(key, value)?,
            "lane_points" => self.lane_points = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "cycles" => self.cycles = num(key, value)?,
            "hidden_dim" => self.hidden_dim = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "map_mode" => self.map_mode = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "miss_threshold" => self.miss_threshold = num(key, value)?,
            "sample_rate_hz" => self.sample_rate_hz = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_values() {
        let c = Config::default();
        assert_eq!((c.t_in, c.t_out, c.agents, c.lanes, c.lane_points), (20, 30, 4, 10, 100));
        assert_eq!((c.heads, c.cycles, c.hidden_dim), (6, 20, 64));
        assert_eq!((c.beta, c.learning_rate, c.epochs, c.batch_size), (0.5, 1e-5, 50, 512));
        assert_eq!(c.miss_threshold, 2.0);
    }

    #[test]
    fn text_round_trip() {
        let mut c = Config::tiny();
        c.map_mode = MapMode::Raw;
        c.learning_rate = 3e-4;
        assert_eq!(Config::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Config::from_text("beta = 1.5").is_err());
        assert!(Config::from_text("heads = 0").is_err());
        assert!(matches!(
            Config::from_text("colour = red"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(Config::from_text("# comment\nheads = 3\n").unwrap().heads == 3);
    }
}
