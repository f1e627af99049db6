//! Synthetic driving scenes with known kinematics.
//!
//! The focal agent (agent 0) follows the scenario kind. Neighbors drive at
//! constant speed on lanes laterally offset from the focal road. Lane
//! centerlines are laid along every path an agent can take. Each scene is
//! finally placed at a random pose in the plane and positions get Gaussian
//! noise.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::data::format::SceneFile;
use crate::error::{Error, Result};
use crate::scene::{Dims, GroundTruth, Point, Scene, Se2Transform};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    Straight,
    LeftTurn,
    RightTurn,
    Fork,
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight" => Ok(Self::Straight),
            "left-turn" => Ok(Self::LeftTurn),
            "right-turn" => Ok(Self::RightTurn),
            "fork" => Ok(Self::Fork),
            other => Err(Error::Config(format!("unknown scenario kind `{other}`"))),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Straight => "straight",
            Self::LeftTurn => "left-turn",
            Self::RightTurn => "right-turn",
            Self::Fork => "fork",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Focal speed in m/s; the fork kind jitters it per scene.
    pub speed: f64,
    /// Radius of the turn kinds and the tightest approach road of `fork`.
    pub turn_radius: f64,
    /// Number of distinct futures the fork kind chooses from.
    pub mode_count: usize,
    /// Standard deviation of position noise in meters.
    pub noise: f64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            kind,
            speed: 10.0,
            turn_radius: 50.0,
            mode_count: 3,
            noise: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode_count == 0 {
            return Err(Error::Config("mode count must be at least 1".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be non-negative".into()));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::Config("speed must be positive".into()));
        }
        if !(self.turn_radius > 0.0 && self.turn_radius.is_finite()) {
            return Err(Error::Config("turn radius must be positive".into()));
        }
        Ok(())
    }
}

/// One generated scene with the index of the future it follows.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub scene: Scene,
    pub truth: GroundTruth,
    /// Fork mode of the focal agent; 0 for the other kinds.
    pub mode: usize,
}

impl Sample {
    pub fn into_file(self, dims: &Dims, sample_rate_hz: f64) -> Result<SceneFile> {
        SceneFile::new(self.scene, Some(self.truth), dims.future, sample_rate_hz)
    }
}

#[derive(Clone, Copy, Debug)]
struct Pose {
    p: Point,
    heading: f64,
}

impl Pose {
    /// Follow a circular arc of curvature `k` for signed length `ds`.
    fn advance(self, k: f64, ds: f64) -> Pose {
        let turn = k * ds;
        let chord = if turn.abs() < 1e-12 { ds } else { 2.0 * (turn / 2.0).sin() / k };
        let dir = self.heading + turn / 2.0;
        Pose {
            p: [self.p[0] + chord * dir.cos(), self.p[1] + chord * dir.sin()],
            heading: self.heading + turn,
        }
    }

    fn offset(self, d: f64) -> Pose {
        Pose {
            p: [self.p[0] - d * self.heading.sin(), self.p[1] + d * self.heading.cos()],
            heading: self.heading,
        }
    }
}

/// How the focal agent moves after the present step.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Mode {
    curvature_factor: f64,
    acceleration: f64,
    /// Shift of the initial speed: a weak cue of the mode in the history.
    speed_cue: f64,
}

/// Fork futures: keep going, take the tighter exit and slow down, brake to a
/// stop, straighten out and speed up. Later modes repeat the cycle with the
/// curvature scaled up.
fn fork_mode(k: usize) -> Mode {
    let round = (k / 4) as f64;
    let base = match k % 4 {
        0 => Mode {
            curvature_factor: 1.0,
            acceleration: 0.0,
            speed_cue: 1.0,
        },
        1 => Mode {
            curvature_factor: 4.0,
            acceleration: -1.0,
            speed_cue: -1.0,
        },
        2 => Mode {
            curvature_factor: 1.0,
            acceleration: -3.5,
            speed_cue: -2.0,
        },
        _ => Mode {
            curvature_factor: 0.0,
            acceleration: 1.0,
            speed_cue: 2.0,
        },
    };
    Mode {
        curvature_factor: base.curvature_factor * (1.0 + round),
        ..base
    }
}

/// Positions at `steps` sample times, starting one step after `start`,
/// under constant curvature and acceleration (speed clamped at zero).
fn drive(start: Pose, speed: f64, k: f64, accel: f64, dt: f64, steps: usize) -> Vec<Point> {
    let mut pose = start;
    let mut v = speed;
    (0..steps)
        .map(|_| {
            let next = (v + accel * dt).max(0.0);
            let ds = if accel < 0.0 && next == 0.0 {
                v * v / (2.0 * -accel)
            } else {
                (v + next) / 2.0 * dt
            };
            pose = pose.advance(k, ds);
            v = next;
            pose.p
        })
        .collect()
}

/// `T_in` history points ending at `present`, at constant speed and curvature.
fn history(present: Pose, speed: f64, k: f64, dt: f64, steps: usize) -> Vec<Point> {
    let mut pts: Vec<Point> = drive(present, speed, k, 0.0, -dt, steps - 1);
    pts.reverse();
    pts.push(present.p);
    pts
}

/// `n` points evenly spaced in arc length over `[s0, s1]`, with curvature
/// `k_before` behind the origin pose and `k_after` ahead of it.
fn lane(origin: Pose, k_before: f64, k_after: f64, s0: f64, s1: f64, n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let s = s0 + (s1 - s0) * i as f64 / (n - 1) as f64;
            let k = if s < 0.0 { k_before } else { k_after };
            origin.advance(k, s).p
        })
        .collect()
}

struct Agent {
    history: Vec<Point>,
    future: Vec<Point>,
}

/// Generate `n` scenes sized by `dims` and sampled at `sample_rate_hz`.
/// The same arguments always give the same scenes.
pub fn generate_scenes(spec: &ScenarioSpec, dims: &Dims, sample_rate_hz: f64, n: usize, seed: u64) -> Result<Vec<Sample>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Empty("scene count"));
    }
    if dims.agents == 0 || dims.history < 2 || dims.future == 0 || dims.lane_points < 2 {
        return Err(Error::Config(format!("dims {dims:?} too small to generate scenes")));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..n).map(|_| one_scene(spec, dims, sample_rate_hz, &mut rng)).collect()
}

fn one_scene(spec: &ScenarioSpec, dims: &Dims, rate: f64, rng: &mut Xoshiro256PlusPlus) -> Result<Sample> {
    let dt = 1.0 / rate;
    let (t_in, t_out) = (dims.history, dims.future);
    let k_max = 1.0 / spec.turn_radius;
    let present = Pose { p: [0.0, 0.0], heading: 0.0 };

    let (road_k, mode, speed, mode_index) = match spec.kind {
        ScenarioKind::Straight => (0.0, None, spec.speed, 0),
        ScenarioKind::LeftTurn => (k_max, None, spec.speed, 0),
        ScenarioKind::RightTurn => (-k_max, None, spec.speed, 0),
        ScenarioKind::Fork => {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let k = sign * rng.random_range(0.5..=1.0) * k_max;
            let m = rng.random_range(0..spec.mode_count);
            let mode = fork_mode(m);
            let v = spec.speed + rng.random_range(-2.0..=2.0) + mode.speed_cue;
            (k, Some(mode), v.max(0.5), m)
        }
    };
    let (future_k, accel) = mode.map_or((road_k, 0.0), |m| (road_k * m.curvature_factor, m.acceleration));

    let mut agents = vec![Agent {
        history: history(present, speed, road_k, dt, t_in),
        future: drive(present, speed, future_k, accel, dt, t_out),
    }];

    // lanes along every branch the focal agent can take
    let back = speed * dt * t_in as f64 + 10.0;
    let ahead = spec.speed * dt * t_out as f64 * 1.5 + 10.0;
    let mut lanes = vec![lane(present, road_k, road_k, -back, ahead, dims.lane_points)];
    if spec.kind == ScenarioKind::Fork {
        let mut factors: Vec<f64> = Vec::new();
        for m in 0..spec.mode_count {
            let f = fork_mode(m).curvature_factor;
            if f != 1.0 && !factors.contains(&f) {
                factors.push(f);
            }
        }
        for f in factors {
            lanes.push(lane(present, road_k, road_k * f, -back, ahead, dims.lane_points));
        }
    }

    let neighbors = rng.random_range(0..dims.agents);
    let offsets = [3.5, -3.5, 7.0, -7.0, 10.5, -10.5];
    for j in 0..neighbors {
        let d = offsets[j % offsets.len()] * (1 + j / offsets.len()) as f64;
        let along = rng.random_range(-15.0..=15.0);
        let v = spec.speed * rng.random_range(0.8..=1.2);
        let k = road_k / (1.0 - road_k * d);
        let own = present.advance(road_k, along).offset(d);
        agents.push(Agent {
            history: history(own, v, k, dt, t_in),
            future: drive(own, v, k, 0.0, dt, t_out),
        });
        let lane_origin = present.offset(d);
        lanes.push(lane(lane_origin, k, k, -back - 20.0, ahead + 20.0, dims.lane_points));
    }

    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
    let g = Se2Transform::new(
        rng.random_range(-PI..PI),
        [rng.random_range(-100.0..=100.0), rng.random_range(-100.0..=100.0)],
    );
    let mut jitter = |pts: &[Point]| -> Vec<Point> {
        pts.iter()
            .map(|&p| {
                let q = g.apply(p);
                if spec.noise > 0.0 {
                    [q[0] + noise.sample(rng), q[1] + noise.sample(rng)]
                } else {
                    q
                }
            })
            .collect()
    };

    let mut histories = Vec::with_capacity(dims.agents);
    let mut futures = Vec::with_capacity(dims.agents);
    for a in &agents {
        histories.push(jitter(&a.history));
        futures.push(jitter(&a.future));
    }
    let real = agents.len();
    histories.resize(dims.agents, vec![[0.0; 2]; t_in]);
    futures.resize(dims.agents, vec![[0.0; 2]; t_out]);
    let agent_mask: Vec<bool> = (0..dims.agents).map(|i| i < real).collect();

    lanes.truncate(dims.lanes);
    let lane_count = lanes.len();
    let mut lanes: Vec<Vec<Point>> = lanes.iter().map(|l| l.iter().map(|&p| g.apply(p)).collect()).collect();
    lanes.resize(dims.lanes, vec![[0.0; 2]; dims.lane_points]);
    let lane_mask = (0..dims.lanes).map(|i| i < lane_count).collect();

    Ok(Sample {
        scene: Scene {
            histories,
            agent_mask: agent_mask.clone(),
            lanes,
            lane_mask,
        },
        truth: GroundTruth { futures, agent_mask },
        mode: mode_index,
    })
}
