//! Multi-head equivariant decoding, passive probability estimation and the
//! assembled model.

use rand::SeedableRng;
use rand::Rng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::backbone::{channel_mean, positive_gate, Backbone, BackboneOutput};
use crate::batch::SceneBatch;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::map_encoder::{MapEncoder, MapEncoding};
use crate::ndiff::{Array, NdiffError, Var};
use crate::nn::{ChannelMix, Mlp, ParamStore, Tape};
use crate::scene::{ForecastSet, Point, Scene};

/// One head: four channel maps `C → hidden → hidden → hidden → T_out` with
/// positive invariant gates between them, applied to mean-centered channels.
#[derive(Clone, Debug)]
pub struct HeadDecoder {
    pub mixes: Vec<ChannelMix>,
    pub gates: Vec<Mlp>,
}

impl HeadDecoder {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, channels: usize, hidden: usize, horizon: usize) -> Self {
        let sizes = [channels, hidden, hidden, hidden, horizon];
        let mixes = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| ChannelMix::new(store, rng, &format!("{name}/mix{i}"), w[0], w[1]))
            .collect();
        let gates = (0..3)
            .map(|i| Mlp::new(store, rng, &format!("{name}/gate{i}"), &[2 * hidden, hidden, hidden, hidden]))
            .collect();
        Self { mixes, gates }
    }

    /// `[B, A, C, 2]` → `[B, A, T_out, 2]`.
    pub fn forward(&self, t: &mut Tape, geometric: Var, pattern: Var) -> Result<Var, NdiffError> {
        let mean = channel_mean(t, geometric)?;
        let mut x = t.g.sub(geometric, mean)?;
        for (i, mix) in self.mixes.iter().enumerate() {
            x = mix.forward(t, x)?;
            if let Some(gate) = self.gates.get(i) {
                let shape = t.g.shape(x).to_vec();
                let norms = t.g.l2_norm(x)?;
                let s = positive_gate(t, gate, &[pattern, norms])?;
                let s = t.g.reshape(s, &[shape[0], shape[1], shape[2], 1])?;
                x = t.g.mul(x, s)?;
            }
        }
        t.g.add(x, mean)
    }
}

/// Shared per-head scorer over detached trajectories.
///
/// Each head is expressed in a frame fixed by the whole trajectory set: origin
/// at the set centroid, first axis along the mean direction of travel. The
/// scorer sees one head together with the average of all heads, so the
/// resulting distribution is invariant to rigid motions and to head order,
/// and identical heads get identical logits.
#[derive(Clone, Debug)]
pub struct ProbabilityEstimator {
    pub scorer: Mlp,
    horizon: usize,
}

impl ProbabilityEstimator {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, horizon: usize, hidden: usize) -> Self {
        let scorer = Mlp::new(store, rng, "probability/scorer", &[4 * horizon, hidden, hidden, 1]);
        Self { scorer, horizon }
    }

    /// Scorer inputs `[B, A, H, 4·T_out]` from trajectory values `[B, A, H, T_out, 2]`.
    pub fn inputs(&self, trajectories: &Array) -> Array {
        let s = trajectories.shape();
        let (b, a, h, tt) = (s[0], s[1], s[2], s[3]);
        let mut out = Vec::with_capacity(b * a * h * 4 * tt);
        for agent in trajectories.data().chunks(h * tt * 2) {
            let z = canonical_frame(agent, h, tt);
            let mut mean = vec![0.0; 2 * tt];
            for head in z.chunks(2 * tt) {
                for (m, v) in mean.iter_mut().zip(head) {
                    *m += v / h as f64;
                }
            }
            for head in z.chunks(2 * tt) {
                out.extend_from_slice(head);
                out.extend_from_slice(&mean);
            }
        }
        Array::new(vec![b, a, h, 4 * tt], out).expect("sizes follow the input shape")
    }

    /// Probabilities `[B, A, H]` from a constant input built by [`Self::inputs`].
    pub fn forward(&self, t: &mut Tape, inputs: Array) -> Result<Var, NdiffError> {
        let s = inputs.shape().to_vec();
        debug_assert_eq!(s[3], 4 * self.horizon);
        let x = t.constant(inputs);
        let logits = self.scorer.forward(t, x)?;
        let logits = t.g.reshape(logits, &[s[0], s[1], s[2]])?;
        t.g.softmax(logits)
    }
}

/// Rotation- and translation-free coordinates for one agent's `H × T` points.
fn canonical_frame(points: &[f64], heads: usize, horizon: usize) -> Vec<f64> {
    let n = (heads * horizon) as f64;
    let mut c = [0.0; 2];
    for p in points.chunks(2) {
        c[0] += p[0] / n;
        c[1] += p[1] / n;
    }
    // time-regression slope summed over heads
    let t_mean = (horizon as f64 - 1.0) / 2.0;
    let mut u = [0.0; 2];
    for head in points.chunks(2 * horizon) {
        for (t, p) in head.chunks(2).enumerate() {
            let w = t as f64 - t_mean;
            u[0] += w * p[0];
            u[1] += w * p[1];
        }
    }
    let len = u[0].hypot(u[1]);
    let u = if len < 1e-9 { [1.0, 0.0] } else { [u[0] / len, u[1] / len] };
    points
        .chunks(2)
        .flat_map(|p| {
            let d = [p[0] - c[0], p[1] - c[1]];
            [d[0] * u[0] + d[1] * u[1], -d[0] * u[1] + d[1] * u[0]]
        })
        .collect()
}

/// Everything one forward pass produces.
pub struct ModelOutput {
    pub map: MapEncoding,
    pub backbone: BackboneOutput,
    /// `[B, A, H, T_out, 2]`
    pub trajectories: Var,
    /// `[B, A, H]`
    pub probabilities: Var,
    /// Scorer input actually used, `[B, A, H, 4·T_out]`.
    pub probability_inputs: Array,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: Config,
    pub store: ParamStore,
    pub map_encoder: MapEncoder,
    pub backbone: Backbone,
    pub heads: Vec<HeadDecoder>,
    pub probability: ProbabilityEstimator,
}

/// Parameter counts per module.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCounts {
    pub map: usize,
    pub backbone: usize,
    pub decoder: usize,
    pub probability: usize,
    pub total: usize,
}

impl Model {
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let h = config.hidden_dim;
        let map_encoder = MapEncoder::new(&mut store, &mut rng, config.map_mode, config.lane_points, h);
        let backbone = Backbone::new(&mut store, &mut rng, config.t_in, h, config.cycles);
        let heads = (0..config.heads)
            .map(|k| HeadDecoder::new(&mut store, &mut rng, &format!("decoder/head{k}"), config.t_in, h, config.t_out))
            .collect();
        let probability = ProbabilityEstimator::new(&mut store, &mut rng, config.t_out, h);
        Ok(Self {
            config,
            store,
            map_encoder,
            backbone,
            heads,
            probability,
        })
    }

    pub fn param_counts(&self) -> ParamCounts {
        ParamCounts {
            map: self.store.count_with_prefix("map/"),
            backbone: self.store.count_with_prefix("backbone/"),
            decoder: self.store.count_with_prefix("decoder/"),
            probability: self.store.count_with_prefix("probability/"),
            total: self.store.count(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.store.count()
    }

    /// Full forward pass on a tape over `self.store`.
    ///
    /// The probability estimator reads trajectory values only. When `pinned`
    /// is given it is used instead of the freshly decoded values, which lets a
    /// finite-difference check hold that input fixed the way a stop-gradient
    /// does.
    pub fn forward(&self, t: &mut Tape, batch: &SceneBatch, pinned: Option<&Array>) -> Result<ModelOutput, NdiffError> {
        let map = self.map_encoder.encode(t, batch)?;
        let backbone = self.backbone.run(t, batch, map.feature)?;
        let (b, a) = (batch.size, batch.dims.agents);
        let tt = self.config.t_out;
        let mut per_head = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let y = head.forward(t, backbone.geometric, backbone.pattern)?;
            per_head.push(t.g.reshape(y, &[b, a, 1, tt, 2])?);
        }
        let trajectories = t.g.concat(&per_head, 2)?;
        let detached = t.g.detach(trajectories);
        let probability_inputs = self.probability.inputs(pinned.unwrap_or(t.value(detached)));
        let probabilities = self.probability.forward(t, probability_inputs.clone())?;
        Ok(ModelOutput {
            map,
            backbone,
            trajectories,
            probabilities,
            probability_inputs,
        })
    }

    pub fn forecast(&self, scene: &Scene) -> Result<ForecastSet> {
        Ok(self.forecast_batch(&[scene])?.remove(0))
    }

    /// Forecasts for several scenes in one pass. Padded agents get zero
    /// trajectories and a uniform distribution.
    pub fn forecast_batch(&self, scenes: &[&Scene]) -> Result<Vec<ForecastSet>> {
        let batch = SceneBatch::new(scenes, &self.config.dims())?;
        let mut t = Tape::new(&self.store, false);
        let out = self.forward(&mut t, &batch, None)?;
        let traj = t.value(out.trajectories);
        let prob = t.value(out.probabilities);
        let (a, h, tt) = (self.config.agents, self.config.heads, self.config.t_out);
        let sets = scenes
            .iter()
            .enumerate()
            .map(|(s, scene)| {
                let mut trajectories = Vec::with_capacity(a);
                let mut probabilities = Vec::with_capacity(a);
                for (i, &real) in scene.agent_mask.iter().enumerate() {
                    let base = (s * a + i) * h;
                    if real {
                        trajectories.push(
                            (0..h)
                                .map(|k| {
                                    traj.data()[(base + k) * tt * 2..(base + k + 1) * tt * 2]
                                        .chunks(2)
                                        .map(|p| [p[0], p[1]])
                                        .collect::<Vec<Point>>()
                                })
                                .collect(),
                        );
                        probabilities.push(prob.data()[base..base + h].to_vec());
                    } else {
                        trajectories.push(vec![vec![[0.0; 2]; tt]; h]);
                        probabilities.push(vec![1.0 / h as f64; h]);
                    }
                }
                ForecastSet {
                    trajectories,
                    probabilities,
                }
            })
            .collect::<Vec<_>>();
        for f in &sets {
            let v = f.validate();
            if !v.is_empty() {
                return Err(Error::InvalidForecast(v));
            }
        }
        Ok(sets)
    }
}
