//! Training loss and evaluation metrics.
//!
//! Everything here runs through the autodiff graph so the loss used for
//! training and the numbers reported at evaluation come from one code path.

use std::fmt::Write as _;

use crate::batch::TargetBatch;
use crate::error::{Error, Result};
use crate::ndiff::{Array, Graph, NdiffError, Var};
use crate::scene::{ForecastSet, GroundTruth, Point};

/// Probabilities are clamped here before the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// `E^h = (1/T) Σ_t ‖pred^h_t − gt_t‖` for every head.
pub fn ade_per_head(pred: &[Vec<Point>], gt: &[Point]) -> Result<Vec<f64>> {
    if gt.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    if let Some(bad) = pred.iter().find(|p| p.len() != gt.len()) {
        return Err(Error::Incompatible(format!(
            "prediction has {} steps, ground truth {}",
            bad.len(),
            gt.len()
        )));
    }
    let h = pred.len();
    let t = gt.len();
    let mut g = Graph::new();
    let p = g.constant(Array::new(vec![h, t, 2], pred.iter().flatten().flatten().copied().collect())?);
    let y = g.constant(Array::new(vec![1, t, 2], gt.iter().flatten().copied().collect())?);
    let e = ade_graph(&mut g, p, y, 1)?;
    Ok(g.value(e).data().to_vec())
}

/// Lowest index of the minimum.
pub fn min_ade_index(errors: &[f64]) -> usize {
    let mut best = 0;
    for (i, &e) in errors.iter().enumerate() {
        if e < errors[best] {
            best = i;
        }
    }
    best
}

/// ADE along `time_axis` of `pred − gt`, broadcasting `gt` over heads.
fn ade_graph(g: &mut Graph, pred: Var, gt: Var, time_axis: usize) -> Result<Var, NdiffError> {
    let diff = g.sub(pred, gt)?;
    let dist = g.l2_norm(diff)?;
    g.mean(dist, time_axis)
}

/// Graph nodes of the combined loss.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub trajectory: Var,
    pub probability: Var,
    pub combined: Var,
    /// One-hot best head `[B, A, H]`, no gradient.
    pub best: Var,
}

/// `β·L_traj + (1−β)·L_prob` over valid agents.
///
/// `trajectories` is `[B, A, H, T, 2]`, `probabilities` is `[B, A, H]`.
/// The best head is chosen by minimum ADE on values; only the chosen head's
/// error carries gradient.
pub fn combined_loss(
    g: &mut Graph,
    trajectories: Var,
    probabilities: Var,
    targets: &TargetBatch,
    beta: f64,
) -> Result<LossVars> {
    let s = targets.futures.shape().to_vec();
    let (b, a, t) = (s[0], s[1], s[2]);
    let valid: f64 = targets.agent_mask.data().iter().sum();
    if valid == 0.0 {
        return Err(Error::Empty("valid agents"));
    }
    let gt = g.constant(targets.futures.clone().reshaped(&[b, a, 1, t, 2])?);
    let errors = ade_graph(g, trajectories, gt, 3)?;
    let best = g.min_index(errors, 2)?;
    let weights = g.constant(targets.agent_mask.map(|m| m / valid));

    let chosen = g.mul(errors, best)?;
    let chosen = g.sum(chosen, 2)?;
    let trajectory = weighted_total(g, chosen, weights)?;

    let logp = g.ln(probabilities, LOG_FLOOR);
    let picked = g.mul(logp, best)?;
    let picked = g.sum(picked, 2)?;
    let neg = weighted_total(g, picked, weights)?;
    let probability = g.affine(neg, -1.0, 0.0);

    let a_part = g.affine(trajectory, beta, 0.0);
    let b_part = g.affine(probability, 1.0 - beta, 0.0);
    let combined = g.add(a_part, b_part)?;
    Ok(LossVars {
        trajectory,
        probability,
        combined,
        best,
    })
}

/// `Σ_{b,a} x·w` for `[B, A]` inputs, as a scalar.
fn weighted_total(g: &mut Graph, x: Var, w: Var) -> Result<Var, NdiffError> {
    let y = g.mul(x, w)?;
    let y = g.sum(y, 1)?;
    g.sum(y, 0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub trajectory: f64,
    pub probability: f64,
    pub combined: f64,
    /// Best head per agent per scene; `None` for padded agents.
    pub best_heads: Vec<Vec<Option<usize>>>,
}

/// Loss values for finished forecasts.
pub fn loss_breakdown(forecasts: &[ForecastSet], truths: &[GroundTruth], beta: f64) -> Result<LossBreakdown> {
    let (traj, prob, targets, h) = stack(forecasts, truths, None)?;
    let (b, a) = (forecasts.len(), targets.agent_mask.shape()[1]);
    let mut g = Graph::new();
    let tv = g.constant(traj);
    let pv = g.constant(prob);
    let vars = combined_loss(&mut g, tv, pv, &targets, beta)?;
    let onehot = g.value(vars.best).data();
    let best_heads = (0..b)
        .map(|s| {
            (0..a)
                .map(|i| {
                    let row = &onehot[(s * a + i) * h..(s * a + i + 1) * h];
                    truths[s].agent_mask[i].then(|| row.iter().position(|&v| v == 1.0).unwrap_or(0))
                })
                .collect()
        })
        .collect();
    Ok(LossBreakdown {
        trajectory: g.value(vars.trajectory).item(),
        probability: g.value(vars.probability).item(),
        combined: g.value(vars.combined).item(),
        best_heads,
    })
}

/// Stack forecasts and truths into `[B, A, H, τ, 2]`, `[B, A, H]` and a
/// target batch cut to the first `τ` steps.
fn stack(
    forecasts: &[ForecastSet],
    truths: &[GroundTruth],
    horizon: Option<usize>,
) -> Result<(Array, Array, TargetBatch, usize)> {
    if forecasts.is_empty() {
        return Err(Error::Empty("forecast list"));
    }
    if forecasts.len() != truths.len() {
        return Err(Error::Incompatible(format!(
            "{} forecasts for {} ground truths",
            forecasts.len(),
            truths.len()
        )));
    }
    let a = truths[0].agent_mask.len();
    let h = forecasts[0].heads();
    let full = forecasts[0].horizon();
    let tau = horizon.unwrap_or(full);
    if tau == 0 || tau > full {
        return Err(Error::Incompatible(format!("horizon {tau} outside 1..={full}")));
    }
    let mut traj = Vec::with_capacity(forecasts.len() * a * h * tau * 2);
    let mut prob = Vec::with_capacity(forecasts.len() * a * h);
    let mut fut = Vec::with_capacity(forecasts.len() * a * tau * 2);
    let mut mask = Vec::with_capacity(forecasts.len() * a);
    for (f, gt) in forecasts.iter().zip(truths) {
        let v = f.validate();
        if !v.is_empty() {
            return Err(Error::InvalidForecast(v));
        }
        if f.agents() != a || gt.agent_mask.len() != a || f.heads() != h || f.horizon() != full {
            return Err(Error::Incompatible(format!(
                "forecast {}×{}×{} against {a} agents, {h} heads, {full} steps",
                f.agents(),
                f.heads(),
                f.horizon()
            )));
        }
        if gt.futures.iter().any(|fu| fu.len() < tau) {
            return Err(Error::Incompatible(format!("ground truth shorter than horizon {tau}")));
        }
        for i in 0..a {
            for head in &f.trajectories[i] {
                traj.extend(head[..tau].iter().flatten());
            }
            prob.extend_from_slice(&f.probabilities[i]);
            fut.extend(gt.futures[i][..tau].iter().flatten());
            mask.push(if gt.agent_mask[i] { 1.0 } else { 0.0 });
        }
    }
    let b = forecasts.len();
    Ok((
        Array::new(vec![b, a, h, tau, 2], traj)?,
        Array::new(vec![b, a, h], prob)?,
        TargetBatch {
            futures: Array::new(vec![b, a, tau, 2], fut)?,
            agent_mask: Array::new(vec![b, a], mask)?,
        },
        h,
    ))
}

/// Metrics at one horizon, averaged over every valid agent of every scene.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub horizon: usize,
    pub threshold: f64,
    pub min_ade: f64,
    pub min_fde: f64,
    pub miss_rate: f64,
    pub agents: usize,
}

impl MetricReport {
    /// `prefix.key_τ = value` lines.
    pub fn to_text(&self, prefix: &str) -> String {
        let mut s = String::new();
        let tau = self.horizon;
        let _ = writeln!(s, "{prefix}.min_ade_{tau} = {}", self.min_ade);
        let _ = writeln!(s, "{prefix}.min_fde_{tau} = {}", self.min_fde);
        let _ = writeln!(s, "{prefix}.miss_rate_{tau} = {}", self.miss_rate);
        let _ = writeln!(s, "{prefix}.agents_{tau} = {}", self.agents);
        let _ = writeln!(s, "{prefix}.miss_threshold_{tau} = {}", self.threshold);
        s
    }
}

/// Per-agent minimum ADE and minimum final-point error over heads at `τ`.
fn per_agent_minima(forecasts: &[ForecastSet], truths: &[GroundTruth], tau: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (traj, _, targets, _) = stack(forecasts, truths, Some(tau))?;
    let (b, a) = (traj.shape()[0], traj.shape()[1]);
    let mut g = Graph::new();
    let p = g.constant(traj);
    let y = g.constant(targets.futures.clone().reshaped(&[b, a, 1, tau, 2])?);
    let ade = ade_graph(&mut g, p, y, 3)?;
    let best = g.min_index(ade, 2)?;
    let min_ade = g.mul(ade, best)?;
    let min_ade = g.sum(min_ade, 2)?;

    let p_end = g.slice(p, 3, tau - 1, tau)?;
    let y_end = g.slice(y, 3, tau - 1, tau)?;
    let fde = ade_graph(&mut g, p_end, y_end, 3)?;
    let best_end = g.min_index(fde, 2)?;
    let min_fde = g.mul(fde, best_end)?;
    let min_fde = g.sum(min_fde, 2)?;

    let mask = targets.agent_mask.data();
    let keep = |v: &Array| -> Vec<f64> {
        v.data()
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m == 1.0)
            .map(|(x, _)| *x)
            .collect()
    };
    Ok((keep(g.value(min_ade)), keep(g.value(min_fde))))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn metric_min_ade(forecasts: &[ForecastSet], truths: &[GroundTruth], tau: usize) -> Result<f64> {
    let (ade, _) = nonempty(per_agent_minima(forecasts, truths, tau)?)?;
    Ok(mean(&ade))
}

pub fn metric_min_fde(forecasts: &[ForecastSet], truths: &[GroundTruth], tau: usize) -> Result<f64> {
    let (_, fde) = nonempty(per_agent_minima(forecasts, truths, tau)?)?;
    Ok(mean(&fde))
}

/// Fraction of valid agents whose best final-point error exceeds `d`.
pub fn metric_miss_rate(forecasts: &[ForecastSet], truths: &[GroundTruth], tau: usize, d: f64) -> Result<f64> {
    if d.is_nan() || d <= 0.0 {
        return Err(Error::Config(format!("miss threshold {d} must be positive")));
    }
    let (_, fde) = nonempty(per_agent_minima(forecasts, truths, tau)?)?;
    Ok(fde.iter().filter(|&&e| e > d).count() as f64 / fde.len() as f64)
}

/// All three metrics at once.
pub fn metric_report(forecasts: &[ForecastSet], truths: &[GroundTruth], tau: usize, d: f64) -> Result<MetricReport> {
    if d.is_nan() || d <= 0.0 {
        return Err(Error::Config(format!("miss threshold {d} must be positive")));
    }
    let (ade, fde) = nonempty(per_agent_minima(forecasts, truths, tau)?)?;
    Ok(MetricReport {
        horizon: tau,
        threshold: d,
        min_ade: mean(&ade),
        min_fde: mean(&fde),
        miss_rate: fde.iter().filter(|&&e| e > d).count() as f64 / fde.len() as f64,
        agents: ade.len(),
    })
}

fn nonempty(v: (Vec<f64>, Vec<f64>)) -> Result<(Vec<f64>, Vec<f64>)> {
    if v.0.is_empty() {
        Err(Error::Empty("valid agents"))
    } else {
        Ok(v)
    }
}
