#![allow(dead_code)]

use equiforecast::config::{Config, MapMode};
use equiforecast::scene::{Dims, GroundTruth, Point, Scene, Se2Transform};
use rand::Rng;

/// A random but plausible scene: smooth curved histories and wavy lanes.
pub fn random_scene<R: Rng>(rng: &mut R, dims: &Dims) -> Scene {
    let valid_agents = rng.random_range(1..=dims.agents);
    let valid_lanes = rng.random_range(1..=dims.lanes);
    let histories = (0..dims.agents)
        .map(|i| {
            if i < valid_agents {
                random_track(rng, dims.history)
            } else {
                vec![[0.0, 0.0]; dims.history]
            }
        })
        .collect();
    let lanes = (0..dims.lanes)
        .map(|i| {
            if i < valid_lanes {
                random_track(rng, dims.lane_points)
            } else {
                vec![[0.0, 0.0]; dims.lane_points]
            }
        })
        .collect();
    Scene {
        histories,
        agent_mask: (0..dims.agents).map(|i| i < valid_agents).collect(),
        lanes,
        lane_mask: (0..dims.lanes).map(|i| i < valid_lanes).collect(),
    }
}

pub fn random_track<R: Rng>(rng: &mut R, n: usize) -> Vec<Point> {
    let mut p = [rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0)];
    let mut heading: f64 = rng.random_range(-3.1..3.1);
    let speed = rng.random_range(0.3..1.5);
    let turn = rng.random_range(-0.15..0.15);
    (0..n)
        .map(|_| {
            let out = p;
            heading += turn + rng.random_range(-0.05..0.05);
            p = [p[0] + speed * heading.cos(), p[1] + speed * heading.sin()];
            out
        })
        .collect()
}

pub fn random_truth<R: Rng>(rng: &mut R, scene: &Scene, future: usize) -> GroundTruth {
    GroundTruth {
        futures: scene
            .agent_mask
            .iter()
            .map(|&m| if m { random_track(rng, future) } else { vec![[0.0, 0.0]; future] })
            .collect(),
        agent_mask: scene.agent_mask.clone(),
    }
}

pub fn random_transform<R: Rng>(rng: &mut R) -> Se2Transform {
    Se2Transform::new(
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)],
    )
}

/// A small configuration that still exercises every module.
pub fn small_config(mode: MapMode) -> Config {
    Config {
        t_in: 6,
        t_out: 5,
        agents: 3,
        lanes: 3,
        lane_points: 7,
        heads: 3,
        cycles: 3,
        hidden_dim: 12,
        map_mode: mode,
        seed: 11,
        ..Config::default()
    }
}

/// max |a − b| / (max |b| + 1e-8)
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / (scale + 1e-8)
}

/// Apply `g` to every coordinate pair of a flat `[.., 2]` buffer, skipping
/// rows whose agent is masked (given per chunk of `per_agent` values).
pub fn transform_flat(g: &Se2Transform, data: &[f64]) -> Vec<f64> {
    data.chunks(2)
        .flat_map(|p| {
            let q = g.apply([p[0], p[1]]);
            [q[0], q[1]]
        })
        .collect()
}

use equiforecast::batch::{SceneBatch, TargetBatch};
use equiforecast::nn::Tape;
use equiforecast::objective::combined_loss;
use equiforecast::predictor::Model;

/// Branch pattern of a recorded graph: the sign of every relu input and the
/// winner of every argmin. The loss is smooth wherever this does not change.
fn branches(g: &equiforecast::ndiff::Graph) -> Vec<bool> {
    use equiforecast::ndiff::OpKind;
    let mut out = Vec::new();
    for v in g.vars() {
        match g.op_kind(v) {
            OpKind::Relu => out.extend(g.value(g.inputs(v)[0]).data().iter().map(|&x| x > 0.0)),
            OpKind::MinIndex => out.extend(g.value(v).data().iter().map(|&x| x > 0.5)),
            _ => {}
        }
    }
    out
}

/// Result of [`model_grad_check`].
pub struct GradCheck {
    /// Worst relative error `|a - n| / (|n| + 1e-6)` and where it occurred.
    pub worst: f64,
    pub at: String,
    pub entries: usize,
    /// Entries whose stencil crossed a relu kink or an argmin switch on one
    /// side and were checked with the one-sided three-point rule instead.
    pub one_sided: usize,
    /// Entries with a kink on both sides; no difference quotient applies.
    pub skipped: usize,
}

/// Backprop versus finite differences of the combined loss, over every
/// parameter entry. The probability scorer input is pinned at its
/// unperturbed value, matching the stop-gradient. Central differences are
/// used where the branch pattern is constant over the stencil.
pub fn model_grad_check(model: &Model, scenes: &[Scene], truths: &[GroundTruth], step: f64) -> GradCheck {
    let dims = model.config.dims();
    let batch = SceneBatch::new(&scenes.iter().collect::<Vec<_>>(), &dims).unwrap();
    let targets = TargetBatch::new(&truths.iter().collect::<Vec<_>>(), &dims).unwrap();
    let beta = model.config.beta;
    let mut t = Tape::new(&model.store, true);
    let out = model.forward(&mut t, &batch, None).unwrap();
    let pinned = t.value(out.trajectories).clone();
    let loss = combined_loss(&mut t.g, out.trajectories, out.probabilities, &targets, beta).unwrap();
    let analytic = t.param_grads(loss.combined).unwrap();
    let base = branches(&t.g);

    let mut store = model.store.clone();
    let eval = |store: &equiforecast::nn::ParamStore| {
        let mut t = Tape::new(store, false);
        let out = model.forward(&mut t, &batch, Some(&pinned)).unwrap();
        let loss = combined_loss(&mut t.g, out.trajectories, out.probabilities, &targets, beta).unwrap();
        (t.value(loss.combined).item(), branches(&t.g) == base)
    };
    let mut report = GradCheck {
        worst: 0.0,
        at: String::new(),
        entries: 0,
        one_sided: 0,
        skipped: 0,
    };
    let ids: Vec<_> = model.store.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        for e in 0..store.get(id).len() {
            let orig = store.get(id).data()[e];
            let mut at = |offset: f64| {
                store.get_mut(id).data_mut()[e] = orig + offset;
                let r = eval(&store);
                store.get_mut(id).data_mut()[e] = orig;
                r
            };
            let (f0, _) = at(0.0);
            let (up, up_ok) = at(step);
            let (down, down_ok) = at(-step);
            report.entries += 1;
            let numeric = if up_ok && down_ok {
                (up - down) / (2.0 * step)
            } else {
                let (up2, up2_ok) = at(2.0 * step);
                let (down2, down2_ok) = at(-2.0 * step);
                report.one_sided += 1;
                if up_ok && up2_ok {
                    (-3.0 * f0 + 4.0 * up - up2) / (2.0 * step)
                } else if down_ok && down2_ok {
                    (3.0 * f0 - 4.0 * down + down2) / (2.0 * step)
                } else {
                    report.skipped += 1;
                    continue;
                }
            };
            let a = analytic[k].data()[e];
            let rel = (a - numeric).abs() / (numeric.abs() + 1e-6);
            if rel > report.worst {
                report.worst = rel;
                report.at = format!("{}[{e}] analytic {a:e} numeric {numeric:e}", model.store.name(id));
            }
        }
    }
    report
}

use equiforecast::scene::ForecastSet;

pub fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Plain nested loops: (minADE, minFDE, miss rate, L_traj, L_prob).
#[allow(clippy::needless_range_loop)]
pub fn oracle(fs: &[ForecastSet], gts: &[GroundTruth], tau: usize, d: f64, beta: f64) -> [f64; 6] {
    let (mut ade_sum, mut fde_sum, mut misses, mut n) = (0.0, 0.0, 0.0, 0.0);
    let (mut lt, mut lp) = (0.0, 0.0);
    for (f, gt) in fs.iter().zip(gts) {
        for i in 0..gt.agent_mask.len() {
            if !gt.agent_mask[i] {
                continue;
            }
            n += 1.0;
            let mut best_ade = f64::INFINITY;
            let mut best_fde = f64::INFINITY;
            let mut full_best = (f64::INFINITY, 0);
            for (h, traj) in f.trajectories[i].iter().enumerate() {
                let mut s = 0.0;
                for t in 0..tau {
                    s += dist(traj[t], gt.futures[i][t]);
                }
                best_ade = best_ade.min(s / tau as f64);
                best_fde = best_fde.min(dist(traj[tau - 1], gt.futures[i][tau - 1]));
                let mut full = 0.0;
                for t in 0..traj.len() {
                    full += dist(traj[t], gt.futures[i][t]);
                }
                full /= traj.len() as f64;
                if full < full_best.0 {
                    full_best = (full, h);
                }
            }
            ade_sum += best_ade;
            fde_sum += best_fde;
            if best_fde > d {
                misses += 1.0;
            }
            lt += full_best.0;
            lp += -f.probabilities[i][full_best.1].max(1e-12).ln();
        }
    }
    let (lt, lp) = (lt / n, lp / n);
    [ade_sum / n, fde_sum / n, misses / n, lt, lp, beta * lt + (1.0 - beta) * lp]
}

pub fn random_case<R: Rng>(rng: &mut R) -> (Vec<ForecastSet>, Vec<GroundTruth>) {
    let scenes = rng.random_range(1..4);
    let agents = rng.random_range(1..4);
    let heads = rng.random_range(1..5);
    let t = rng.random_range(1..8);
    let mut fs = Vec::new();
    let mut gts = Vec::new();
    for _ in 0..scenes {
        let mut mask: Vec<bool> = (0..agents).map(|_| rng.random_bool(0.7)).collect();
        mask[0] = true;
        let futures: Vec<Vec<Point>> = mask
            .iter()
            .map(|&m| if m { random_track(rng, t) } else { vec![[0.0; 2]; t] })
            .collect();
        let trajectories = futures
            .iter()
            .map(|fu| {
                (0..heads)
                    .map(|_| {
                        let s = rng.random_range(0.0..3.0);
                        fu.iter()
                            .map(|p| [p[0] + rng.random_range(-s..=s), p[1] + rng.random_range(-s..=s)])
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let probabilities = (0..agents)
            .map(|_| {
                let w: Vec<f64> = (0..heads).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|v| v / s).collect()
            })
            .collect();
        fs.push(ForecastSet {
            trajectories,
            probabilities,
        });
        gts.push(GroundTruth {
            futures,
            agent_mask: mask,
        });
    }
    (fs, gts)
}
