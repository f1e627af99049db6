//! Scenes, forecasts, ground truth and the planar rigid motions acting on them.
//!
//! Padded agents and lanes are flagged by explicit masks and must hold
//! all-zero coordinates. Coordinates are absolute map-frame meters.

use std::fmt;

pub type Point = [f64; 2];

/// Tensor sizes shared by every scene in a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub agents: usize,
    pub history: usize,
    pub future: usize,
    pub lanes: usize,
    pub lane_points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    /// `agents × history` positions.
    pub histories: Vec<Vec<Point>>,
    pub agent_mask: Vec<bool>,
    /// `lanes × lane_points` centerline waypoints.
    pub lanes: Vec<Vec<Point>>,
    pub lane_mask: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// `agents × future` positions.
    pub futures: Vec<Vec<Point>>,
    pub agent_mask: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastSet {
    /// `agents × heads × future` positions.
    pub trajectories: Vec<Vec<Vec<Point>>>,
    /// `agents × heads`, each row a probability simplex.
    pub probabilities: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Shape {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    RowLength {
        field: &'static str,
        row: usize,
        expected: usize,
        found: usize,
    },
    NonFinite {
        field: &'static str,
        row: usize,
        col: usize,
    },
    PaddedAgentNonzero {
        agent: usize,
        step: usize,
    },
    PaddedLaneNonzero {
        lane: usize,
        point: usize,
    },
    ProbabilityRange {
        agent: usize,
        head: usize,
        value: f64,
    },
    ProbabilitySum {
        agent: usize,
        sum: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { field, expected, found } => {
                write!(f, "{field}: expected {expected} rows, found {found}")
            }
            Violation::RowLength { field, row, expected, found } => {
                write!(f, "{field}[{row}]: expected length {expected}, found {found}")
            }
            Violation::NonFinite { field, row, col } => write!(f, "{field}[{row}][{col}] is not finite"),
            Violation::PaddedAgentNonzero { agent, step } => {
                write!(f, "padded agent {agent} has nonzero coordinates at step {step}")
            }
            Violation::PaddedLaneNonzero { lane, point } => {
                write!(f, "padded lane {lane} has nonzero coordinates at point {point}")
            }
            Violation::ProbabilityRange { agent, head, value } => {
                write!(f, "probability[{agent}][{head}] = {value} outside [0, 1]")
            }
            Violation::ProbabilitySum { agent, sum } => {
                write!(f, "probabilities of agent {agent} sum to {sum}")
            }
        }
    }
}

fn check_grid(
    out: &mut Vec<Violation>,
    field: &'static str,
    rows: &[Vec<Point>],
    n_rows: usize,
    n_cols: usize,
) {
    if rows.len() != n_rows {
        out.push(Violation::Shape {
            field,
            expected: n_rows,
            found: rows.len(),
        });
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != n_cols {
            out.push(Violation::RowLength {
                field,
                row: r,
                expected: n_cols,
                found: row.len(),
            });
        }
        for (c, p) in row.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                out.push(Violation::NonFinite { field, row: r, col: c });
            }
        }
    }
}

fn check_mask_len(out: &mut Vec<Violation>, field: &'static str, mask: &[bool], n: usize) {
    if mask.len() != n {
        out.push(Violation::Shape {
            field,
            expected: n,
            found: mask.len(),
        });
    }
}

fn is_zero(p: &Point) -> bool {
    p[0] == 0.0 && p[1] == 0.0
}

impl Scene {
    pub fn dims(&self, future: usize) -> Dims {
        Dims {
            agents: self.histories.len(),
            history: self.histories.first().map_or(0, Vec::len),
            future,
            lanes: self.lanes.len(),
            lane_points: self.lanes.first().map_or(0, Vec::len),
        }
    }

    /// Every invariant violation, with index coordinates. Empty means valid.
    pub fn validate(&self, dims: &Dims) -> Vec<Violation> {
        let mut out = Vec::new();
        check_grid(&mut out, "histories", &self.histories, dims.agents, dims.history);
        check_mask_len(&mut out, "agent_mask", &self.agent_mask, dims.agents);
        check_grid(&mut out, "lanes", &self.lanes, dims.lanes, dims.lane_points);
        check_mask_len(&mut out, "lane_mask", &self.lane_mask, dims.lanes);
        for (a, (row, &valid)) in self.histories.iter().zip(&self.agent_mask).enumerate() {
            if !valid {
                if let Some(step) = row.iter().position(|p| !is_zero(p)) {
                    out.push(Violation::PaddedAgentNonzero { agent: a, step });
                }
            }
        }
        for (l, (row, &valid)) in self.lanes.iter().zip(&self.lane_mask).enumerate() {
            if !valid {
                if let Some(point) = row.iter().position(|p| !is_zero(p)) {
                    out.push(Violation::PaddedLaneNonzero { lane: l, point });
                }
            }
        }
        out
    }

    pub fn valid_agents(&self) -> usize {
        self.agent_mask.iter().filter(|&&m| m).count()
    }

    pub fn transformed(&self, g: &Se2Transform) -> Scene {
        Scene {
            histories: g.apply_rows(&self.histories, &self.agent_mask),
            agent_mask: self.agent_mask.clone(),
            lanes: g.apply_rows(&self.lanes, &self.lane_mask),
            lane_mask: self.lane_mask.clone(),
        }
    }

    /// Reorder agents so that new agent `i` is old agent `perm[i]`.
    pub fn permuted_agents(&self, perm: &[usize]) -> Scene {
        Scene {
            histories: perm.iter().map(|&i| self.histories[i].clone()).collect(),
            agent_mask: perm.iter().map(|&i| self.agent_mask[i]).collect(),
            lanes: self.lanes.clone(),
            lane_mask: self.lane_mask.clone(),
        }
    }
}

impl GroundTruth {
    pub fn validate(&self, dims: &Dims) -> Vec<Violation> {
        let mut out = Vec::new();
        check_grid(&mut out, "futures", &self.futures, dims.agents, dims.future);
        check_mask_len(&mut out, "agent_mask", &self.agent_mask, dims.agents);
        for (a, (row, &valid)) in self.futures.iter().zip(&self.agent_mask).enumerate() {
            if !valid {
                if let Some(step) = row.iter().position(|p| !is_zero(p)) {
                    out.push(Violation::PaddedAgentNonzero { agent: a, step });
                }
            }
        }
        out
    }

    pub fn transformed(&self, g: &Se2Transform) -> GroundTruth {
        GroundTruth {
            futures: g.apply_rows(&self.futures, &self.agent_mask),
            agent_mask: self.agent_mask.clone(),
        }
    }
}

impl ForecastSet {
    pub fn agents(&self) -> usize {
        self.trajectories.len()
    }

    pub fn heads(&self) -> usize {
        self.trajectories.first().map_or(0, Vec::len)
    }

    pub fn horizon(&self) -> usize {
        self.trajectories
            .first()
            .and_then(|a| a.first())
            .map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (heads, horizon) = (self.heads(), self.horizon());
        if self.probabilities.len() != self.agents() {
            out.push(Violation::Shape {
                field: "probabilities",
                expected: self.agents(),
                found: self.probabilities.len(),
            });
        }
        for agent in &self.trajectories {
            check_grid(&mut out, "trajectories", agent, heads, horizon);
        }
        for (a, row) in self.probabilities.iter().enumerate() {
            if row.len() != heads {
                out.push(Violation::RowLength {
                    field: "probabilities",
                    row: a,
                    expected: heads,
                    found: row.len(),
                });
            }
            for (h, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    out.push(Violation::ProbabilityRange { agent: a, head: h, value: p });
                }
            }
            let sum: f64 = row.iter().sum();
            if !row.is_empty() && (sum - 1.0).abs() > 1e-6 {
                out.push(Violation::ProbabilitySum { agent: a, sum });
            }
        }
        out
    }

    /// Transform every trajectory point.
    pub fn transformed(&self, g: &Se2Transform) -> ForecastSet {
        ForecastSet {
            trajectories: self
                .trajectories
                .iter()
                .map(|heads| {
                    heads
                        .iter()
                        .map(|t| t.iter().map(|p| g.apply(*p)).collect())
                        .collect()
                })
                .collect(),
            probabilities: self.probabilities.clone(),
        }
    }
}

/// Rotation followed by translation: `x ↦ R·x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Se2Transform {
    rotation: [[f64; 2]; 2],
    translation: Point,
}

impl Se2Transform {
    pub fn identity() -> Self {
        Self::new(0.0, [0.0, 0.0])
    }

    /// Counter-clockwise rotation by `angle` radians, then translation.
    pub fn new(angle: f64, translation: Point) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: [[c, -s], [s, c]],
            translation,
        }
    }

    pub fn rotation(&self) -> [[f64; 2]; 2] {
        self.rotation
    }

    pub fn translation(&self) -> Point {
        self.translation
    }

    pub fn angle(&self) -> f64 {
        self.rotation[1][0].atan2(self.rotation[0][0])
    }

    pub fn apply(&self, p: Point) -> Point {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + self.translation[0],
            r[1][0] * p[0] + r[1][1] * p[1] + self.translation[1],
        ]
    }

    pub fn rotate(&self, v: Point) -> Point {
        let r = &self.rotation;
        [r[0][0] * v[0] + r[0][1] * v[1], r[1][0] * v[0] + r[1][1] * v[1]]
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn compose(&self, inner: &Se2Transform) -> Se2Transform {
        let (a, b) = (&self.rotation, &inner.rotation);
        let mut rotation = [[0.0; 2]; 2];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Se2Transform {
            rotation,
            translation: self.apply(inner.translation),
        }
    }

    pub fn inverse(&self) -> Se2Transform {
        let r = &self.rotation;
        let rt = [[r[0][0], r[1][0]], [r[0][1], r[1][1]]];
        let t = self.translation;
        Se2Transform {
            rotation: rt,
            translation: [
                -(rt[0][0] * t[0] + rt[0][1] * t[1]),
                -(rt[1][0] * t[0] + rt[1][1] * t[1]),
            ],
        }
    }

    /// Max deviation of `RᵀR` from the identity.
    pub fn orthogonality_error(&self) -> f64 {
        let r = &self.rotation;
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let dot = r[0][i] * r[0][j] + r[1][i] * r[1][j];
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    fn apply_rows(&self, rows: &[Vec<Point>], mask: &[bool]) -> Vec<Vec<Point>> {
        rows.iter()
            .zip(mask)
            .map(|(row, &valid)| {
                if valid {
                    row.iter().map(|p| self.apply(*p)).collect()
                } else {
                    row.clone()
                }
            })
            .collect()
    }
}

/// Linear extrapolation from each agent's last two positions, one head with
/// probability 1. Agents with fewer than two points hold still; padded agents
/// stay at zero.
pub fn constant_velocity_baseline(scene: &Scene, future: usize) -> ForecastSet {
    let trajectories = scene
        .histories
        .iter()
        .zip(&scene.agent_mask)
        .map(|(hist, &valid)| {
            if !valid || hist.is_empty() {
                return vec![vec![[0.0, 0.0]; future]];
            }
            let last = hist[hist.len() - 1];
            let vel = if hist.len() >= 2 {
                let prev = hist[hist.len() - 2];
                [last[0] - prev[0], last[1] - prev[1]]
            } else {
                [0.0, 0.0]
            };
            let traj = (1..=future)
                .map(|k| [last[0] + k as f64 * vel[0], last[1] + k as f64 * vel[1]])
                .collect();
            vec![traj]
        })
        .collect();
    ForecastSet {
        trajectories,
        probabilities: vec![vec![1.0]; scene.histories.len()],
    }
}

/// Per agent, the highest-probability head (ties to the lowest index) with
/// its trajectory and probability. `None` when there are no heads.
pub fn select_trajectories(forecast: &ForecastSet) -> Vec<Option<(usize, &[Point], f64)>> {
    forecast
        .trajectories
        .iter()
        .zip(&forecast.probabilities)
        .map(|(heads, probs)| {
            if heads.is_empty() || probs.is_empty() {
                return None;
            }
            let mut best = 0;
            for (h, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = h;
                }
            }
            Some((best, heads[best].as_slice(), probs[best]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims {
            agents: 2,
            history: 3,
            future: 2,
            lanes: 1,
            lane_points: 2,
        }
    }

    fn scene() -> Scene {
        Scene {
            histories: vec![vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![[0.0, 0.0]; 3]],
            agent_mask: vec![true, false],
            lanes: vec![vec![[0.0, 0.0], [5.0, 0.0]]],
            lane_mask: vec![true],
        }
    }

    #[test]
    fn valid_scene_passes() {
        assert!(scene().validate(&dims()).is_empty());
    }

    #[test]
    fn masked_agent_with_coordinates_is_flagged() {
        let mut s = scene();
        s.histories[1][2] = [0.5, 0.0];
        assert_eq!(
            s.validate(&dims()),
            vec![Violation::PaddedAgentNonzero { agent: 1, step: 2 }]
        );
    }

    #[test]
    fn wrong_sizes_are_flagged() {
        let mut s = scene();
        s.histories[0].pop();
        s.lane_mask.push(false);
        let v = s.validate(&dims());
        assert!(v.contains(&Violation::RowLength {
            field: "histories",
            row: 0,
            expected: 3,
            found: 2
        }));
        assert!(v.contains(&Violation::Shape {
            field: "lane_mask",
            expected: 1,
            found: 2
        }));
    }

    #[test]
    fn probability_row_not_summing_to_one() {
        let f = ForecastSet {
            trajectories: vec![vec![vec![[0.0, 0.0]]; 2]],
            probabilities: vec![vec![0.5, 0.3]],
        };
        let v = f.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::ProbabilitySum { agent: 0, .. }));
    }

    #[test]
    fn transform_examples() {
        let s = scene();
        assert_eq!(s.transformed(&Se2Transform::identity()), s);
        let quarter = Se2Transform::new(std::f64::consts::FRAC_PI_2, [0.0, 0.0]);
        let p = quarter.apply([1.0, 0.0]);
        assert!((p[0] - 0.0).abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15);
        let shift = Se2Transform::new(0.0, [5.0, -2.0]);
        assert_eq!(shift.apply([1.0, 1.0]), [6.0, -1.0]);
        let moved = s.transformed(&quarter);
        assert_eq!(moved.histories[1], vec![[0.0, 0.0]; 3]);
        assert_eq!(moved.agent_mask, s.agent_mask);
    }

    #[test]
    fn baseline_extrapolates_linearly() {
        let f = constant_velocity_baseline(&scene(), 3);
        assert_eq!(f.trajectories[0][0], vec![[3.0, 0.0], [4.0, 0.0], [5.0, 0.0]]);
        assert_eq!(f.trajectories[1][0], vec![[0.0, 0.0]; 3]);
        assert!(f.validate().is_empty());
    }

    #[test]
    fn baseline_from_two_points() {
        let s = Scene {
            histories: vec![vec![[0.0, 0.0], [1.0, 0.0]]],
            agent_mask: vec![true],
            lanes: vec![],
            lane_mask: vec![],
        };
        let f = constant_velocity_baseline(&s, 3);
        assert_eq!(f.trajectories[0][0], vec![[2.0, 0.0], [3.0, 0.0], [4.0, 0.0]]);
    }

    #[test]
    fn single_point_history_holds_still() {
        let s = Scene {
            histories: vec![vec![[2.0, 3.0]]],
            agent_mask: vec![true],
            lanes: vec![],
            lane_mask: vec![],
        };
        let f = constant_velocity_baseline(&s, 2);
        assert_eq!(f.trajectories[0][0], vec![[2.0, 3.0]; 2]);
    }

    #[test]
    fn selection_ties_and_argmax() {
        let f = ForecastSet {
            trajectories: vec![vec![vec![[0.0, 0.0]]; 3]; 2],
            probabilities: vec![vec![0.1, 0.7, 0.2], vec![1.0 / 3.0; 3]],
        };
        let sel = select_trajectories(&f);
        assert_eq!(sel[0].unwrap().0, 1);
        assert_eq!(sel[1].unwrap().0, 0);
        let empty = ForecastSet {
            trajectories: vec![Vec::new()],
            probabilities: vec![Vec::new()],
        };
        assert_eq!(select_trajectories(&empty), vec![None]);
    }
}
