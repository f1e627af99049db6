//! Packing scenes into the batched arrays the model consumes.

use crate::error::{Error, Result};
use crate::ndiff::Array;
use crate::scene::{Dims, GroundTruth, Point, Scene};

/// Segment lengths followed by signed turning angles between consecutive
/// segments: `(n − 1) + (n − 2)` values, unchanged by rotations and
/// translations of the polyline. The angle next to a zero-length segment is 0.
pub fn polyline_descriptors(points: &[Point]) -> Vec<f64> {
    let n = points.len();
    let seg: Vec<Point> = points
        .windows(2)
        .map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]])
        .collect();
    let mut out = Vec::with_capacity(2 * n.saturating_sub(1));
    out.extend(seg.iter().map(|d| d[0].hypot(d[1])));
    out.extend(seg.windows(2).map(|w| {
        let (a, b) = (w[0], w[1]);
        let cross = a[0] * b[1] - a[1] * b[0];
        let dot = a[0] * b[0] + a[1] * b[1];
        cross.atan2(dot)
    }));
    out
}

pub fn descriptor_len(points: usize) -> usize {
    points.saturating_sub(1) + points.saturating_sub(2)
}

fn mask_value(m: bool) -> f64 {
    if m {
        1.0
    } else {
        0.0
    }
}

/// Scenes stacked along a leading batch axis.
#[derive(Clone, Debug)]
pub struct SceneBatch {
    pub dims: Dims,
    pub size: usize,
    /// `[B, A, T_in, 2]`
    pub histories: Array,
    /// `[B, A]`, 1 for real agents.
    pub agent_mask: Array,
    /// `[B, A, 2·T_in − 3]`
    pub history_descriptors: Array,
    /// `[B, L]`
    pub lane_mask: Array,
    /// `[B, L, 2·K]`, lane points relative to the centroid of valid lane points.
    pub lanes_centered: Array,
    /// `[B, L, 2·K − 3]`
    pub lane_descriptors: Array,
    /// `[B, A, A]`, 1 where both agents are real and distinct.
    pub pair_mask: Array,
    /// `[B, A, A, 1]`, neighbor weights for the mean over real `j ≠ i`.
    pub neighbor_weights: Array,
}

impl SceneBatch {
    pub fn new(scenes: &[&Scene], dims: &Dims) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::Empty("scene batch"));
        }
        for s in scenes {
            let v = s.validate(dims);
            if !v.is_empty() {
                return Err(Error::InvalidScene(v));
            }
        }
        let (b, a, t, l, k) = (scenes.len(), dims.agents, dims.history, dims.lanes, dims.lane_points);
        let hd = descriptor_len(t);
        let ld = descriptor_len(k);
        let mut histories = Vec::with_capacity(b * a * t * 2);
        let mut agent_mask = Vec::with_capacity(b * a);
        let mut history_descriptors = Vec::with_capacity(b * a * hd);
        let mut lane_mask = Vec::with_capacity(b * l);
        let mut lanes_centered = Vec::with_capacity(b * l * k * 2);
        let mut lane_descriptors = Vec::with_capacity(b * l * ld);
        let mut pair_mask = Vec::with_capacity(b * a * a);
        let mut neighbor_weights = Vec::with_capacity(b * a * a);
        for s in scenes {
            for (hist, &m) in s.histories.iter().zip(&s.agent_mask) {
                histories.extend(hist.iter().flatten());
                agent_mask.push(mask_value(m));
                if m {
                    history_descriptors.extend(polyline_descriptors(hist));
                } else {
                    history_descriptors.extend(std::iter::repeat_n(0.0, hd));
                }
            }
            let valid_lanes: Vec<&Vec<Point>> = s
                .lanes
                .iter()
                .zip(&s.lane_mask)
                .filter(|(_, &m)| m)
                .map(|(l, _)| l)
                .collect();
            let n_points = (valid_lanes.len() * k).max(1) as f64;
            let mut centroid = [0.0; 2];
            for p in valid_lanes.iter().flat_map(|l| l.iter()) {
                centroid[0] += p[0];
                centroid[1] += p[1];
            }
            centroid = [centroid[0] / n_points, centroid[1] / n_points];
            for (lane, &m) in s.lanes.iter().zip(&s.lane_mask) {
                lane_mask.push(mask_value(m));
                if m {
                    lanes_centered.extend(lane.iter().flat_map(|p| [p[0] - centroid[0], p[1] - centroid[1]]));
                    lane_descriptors.extend(polyline_descriptors(lane));
                } else {
                    lanes_centered.extend(std::iter::repeat_n(0.0, 2 * k));
                    lane_descriptors.extend(std::iter::repeat_n(0.0, ld));
                }
            }
            for i in 0..a {
                let count = (0..a).filter(|&j| j != i && s.agent_mask[j]).count().max(1) as f64;
                for j in 0..a {
                    let pair = i != j && s.agent_mask[i] && s.agent_mask[j];
                    pair_mask.push(mask_value(pair));
                    let neighbor = i != j && s.agent_mask[j];
                    neighbor_weights.push(if neighbor { 1.0 / count } else { 0.0 });
                }
            }
        }
        let arr = |shape: Vec<usize>, data: Vec<f64>| Array::new(shape, data).expect("sizes checked by validation");
        Ok(Self {
            dims: *dims,
            size: b,
            histories: arr(vec![b, a, t, 2], histories),
            agent_mask: arr(vec![b, a], agent_mask),
            history_descriptors: arr(vec![b, a, hd], history_descriptors),
            lane_mask: arr(vec![b, l], lane_mask),
            lanes_centered: arr(vec![b, l, 2 * k], lanes_centered),
            lane_descriptors: arr(vec![b, l, ld], lane_descriptors),
            pair_mask: arr(vec![b, a, a], pair_mask),
            neighbor_weights: arr(vec![b, a, a, 1], neighbor_weights),
        })
    }
}

/// Ground-truth futures stacked along the batch axis.
#[derive(Clone, Debug)]
pub struct TargetBatch {
    /// `[B, A, T_out, 2]`
    pub futures: Array,
    /// `[B, A]`
    pub agent_mask: Array,
}

impl TargetBatch {
    pub fn new(truths: &[&GroundTruth], dims: &Dims) -> Result<Self> {
        if truths.is_empty() {
            return Err(Error::Empty("target batch"));
        }
        let mut futures = Vec::new();
        let mut mask = Vec::new();
        for gt in truths {
            let v = gt.validate(dims);
            if !v.is_empty() {
                return Err(Error::InvalidGroundTruth(v));
            }
            futures.extend(gt.futures.iter().flatten().flatten());
            mask.extend(gt.agent_mask.iter().map(|&m| mask_value(m)));
        }
        let b = truths.len();
        Ok(Self {
            futures: Array::new(vec![b, dims.agents, dims.future, 2], futures)?,
            agent_mask: Array::new(vec![b, dims.agents], mask)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line_has_zero_turning() {
        let pts: Vec<Point> = (0..5).map(|i| [i as f64 * 2.0, 1.0]).collect();
        let d = polyline_descriptors(&pts);
        assert_eq!(d.len(), 7);
        assert!(d[..4].iter().all(|&v| (v - 2.0).abs() < 1e-15));
        assert!(d[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn left_turn_is_positive() {
        let d = polyline_descriptors(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]);
        assert!((d[2] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}
