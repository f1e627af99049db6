//! Equivariant geometric features and invariant pattern features.
//!
//! Geometric features are coordinate-valued channels `[B, A, C, 2]`. They are
//! only ever re-centered on their channel mean, mixed along the channel axis,
//! scaled per channel by positive gates computed from invariants, and shifted
//! back. Those three operations commute with every rotation and translation of
//! the input, so the geometric path is SE(2)-equivariant by construction.
//! Pattern features `[B, A, hidden]` and edge weights `[B, A, A]` only ever
//! see distances, norms, segment lengths and turning angles, so they are
//! invariant.

use rand::Rng;

use crate::batch::{descriptor_len, SceneBatch};
use crate::ndiff::{Array, NdiffError, Var};
use crate::nn::{ChannelMix, Mlp, ParamStore, Tape};

/// Per-cycle learnable maps.
#[derive(Clone, Debug)]
pub struct Cycle {
    pub self_mix: ChannelMix,
    pub interaction_mix: ChannelMix,
    pub gate: Mlp,
    pub message: Mlp,
    pub update: Mlp,
}

#[derive(Clone, Debug)]
pub struct Backbone {
    pub channels: usize,
    pub hidden: usize,
    pub time_mix: ChannelMix,
    pub pattern_init: Mlp,
    pub fuse: Mlp,
    pub edge: Mlp,
    pub cycles: Vec<Cycle>,
}

/// Final features plus the intermediates the tests inspect.
#[derive(Clone, Debug)]
pub struct BackboneOutput {
    /// `[B, A, C, 2]`
    pub geometric: Var,
    /// `[B, A, hidden]`
    pub pattern: Var,
    /// `[B, A, A]`
    pub edges: Var,
    pub initial_geometric: Var,
    pub initial_pattern: Var,
    pub fused_pattern: Var,
}

impl Backbone {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, history: usize, hidden: usize, cycles: usize) -> Self {
        let c = history;
        let mlp3 = |store: &mut ParamStore, rng: &mut R, name: &str, input: usize, out: usize| {
            Mlp::new(store, rng, name, &[input, hidden, hidden, out])
        };
        let time_mix = ChannelMix::new(store, rng, "backbone/init/time_mix", history, c);
        let pattern_init = mlp3(store, rng, "backbone/init/pattern", descriptor_len(history), hidden);
        let fuse = mlp3(store, rng, "backbone/fuse", 2 * hidden, hidden);
        let edge = mlp3(store, rng, "backbone/edge", 2 * hidden + 1, 1);
        let cycles = (0..cycles)
            .map(|q| {
                let p = format!("backbone/cycle{q}");
                Cycle {
                    self_mix: ChannelMix::new(store, rng, &format!("{p}/self_mix"), c, c),
                    interaction_mix: ChannelMix::new(store, rng, &format!("{p}/interaction_mix"), c, c),
                    gate: mlp3(store, rng, &format!("{p}/gate"), hidden + c, c),
                    message: mlp3(store, rng, &format!("{p}/message"), hidden + 1, hidden),
                    update: mlp3(store, rng, &format!("{p}/update"), 2 * hidden + c, hidden),
                }
            })
            .collect();
        Self {
            channels: c,
            hidden,
            time_mix,
            pattern_init,
            fuse,
            edge,
            cycles,
        }
    }

    /// Initial geometric channels (time-mixed, mean-centered history plus the
    /// history mean) and pattern features (MLP over history descriptors).
    pub fn init_features(&self, t: &mut Tape, batch: &SceneBatch) -> Result<(Var, Var), NdiffError> {
        let hist = t.constant(batch.histories.clone());
        let mean = channel_mean(t, hist)?;
        let centered = t.g.sub(hist, mean)?;
        let mixed = self.time_mix.forward(t, centered)?;
        let geometric = t.g.add(mixed, mean)?;
        let desc = t.constant(batch.history_descriptors.clone());
        let pattern = self.pattern_init.forward(t, desc)?;
        Ok((geometric, pattern))
    }

    /// MLP over `[pattern_a ; map]` for every agent.
    pub fn fuse_map(&self, t: &mut Tape, pattern: Var, map: Var) -> Result<Var, NdiffError> {
        let shape = t.g.shape(map).to_vec();
        let map = t.g.reshape(map, &[shape[0], 1, shape[1]])?;
        self.fuse.forward_parts(t, &[pattern, map])
    }

    /// `e_ij = MLP([H_i ; H_j ; ‖ḡ_i − ḡ_j‖])`, zero on the diagonal and for
    /// padded agents.
    pub fn edge_weights(&self, t: &mut Tape, geometric: Var, pattern: Var, batch: &SceneBatch) -> Result<Var, NdiffError> {
        let (b, a) = (batch.size, batch.dims.agents);
        let dist = pairwise_distances(t, geometric)?;
        let hi = t.g.reshape(pattern, &[b, a, 1, self.hidden])?;
        let hj = t.g.reshape(pattern, &[b, 1, a, self.hidden])?;
        let e = self.edge.forward_parts(t, &[hi, hj, dist])?;
        let e = t.g.reshape(e, &[b, a, a])?;
        let mask = t.constant(batch.pair_mask.clone());
        t.g.mul(e, mask)
    }

    pub fn geometric_layer(
        &self,
        t: &mut Tape,
        cycle: &Cycle,
        geometric: Var,
        pattern: Var,
        edges: Var,
    ) -> Result<Var, NdiffError> {
        let shape = t.g.shape(geometric).to_vec();
        let (b, a, c) = (shape[0], shape[1], shape[2]);
        let mean = channel_mean(t, geometric)?;
        let centered = t.g.sub(geometric, mean)?;
        let own = cycle.self_mix.forward(t, centered)?;

        // Σ_j e_ij (G_j − μ_i) = (Σ_j e_ij G_j) − (Σ_j e_ij) μ_i
        let flat = t.g.reshape(geometric, &[b, a, c * 2])?;
        let weighted = t.g.matmul(edges, flat)?;
        let weighted = t.g.reshape(weighted, &[b, a, c, 2])?;
        let total = t.g.sum(edges, 2)?;
        let total = t.g.reshape(total, &[b, a, 1, 1])?;
        let shift = t.g.mul(total, mean)?;
        let relative = t.g.sub(weighted, shift)?;
        let interaction = cycle.interaction_mix.forward(t, relative)?;

        let norms = t.g.l2_norm(centered)?;
        let gate = positive_gate(t, &cycle.gate, &[pattern, norms])?;
        let gate = t.g.reshape(gate, &[b, a, c, 1])?;
        let combined = t.g.add(own, interaction)?;
        let gated = t.g.mul(combined, gate)?;
        t.g.add(gated, mean)
    }

    /// Residual update `H + MLP([H ; mean_j msg(H_j, d_ij) ; channel norms])`.
    pub fn pattern_layer(
        &self,
        t: &mut Tape,
        cycle: &Cycle,
        geometric: Var,
        pattern: Var,
        batch: &SceneBatch,
    ) -> Result<Var, NdiffError> {
        let (b, a) = (batch.size, batch.dims.agents);
        let dist = pairwise_distances(t, geometric)?;
        let hj = t.g.reshape(pattern, &[b, 1, a, self.hidden])?;
        let msg = cycle.message.forward_parts(t, &[hj, dist])?;
        let w = t.constant(batch.neighbor_weights.clone());
        let msg = t.g.mul(msg, w)?;
        let aggregate = t.g.sum(msg, 2)?;
        let mean = channel_mean(t, geometric)?;
        let centered = t.g.sub(geometric, mean)?;
        let norms = t.g.l2_norm(centered)?;
        let delta = cycle.update.forward_parts(t, &[pattern, aggregate, norms])?;
        t.g.add(pattern, delta)
    }

    pub fn run(&self, t: &mut Tape, batch: &SceneBatch, map: Var) -> Result<BackboneOutput, NdiffError> {
        let (g0, h0) = self.init_features(t, batch)?;
        let fused = self.fuse_map(t, h0, map)?;
        let edges = self.edge_weights(t, g0, fused, batch)?;
        let (mut g, mut h) = (g0, fused);
        for cycle in &self.cycles {
            let next_g = self.geometric_layer(t, cycle, g, h, edges)?;
            let next_h = self.pattern_layer(t, cycle, g, h, batch)?;
            g = next_g;
            h = next_h;
        }
        Ok(BackboneOutput {
            geometric: g,
            pattern: h,
            edges,
            initial_geometric: g0,
            initial_pattern: h0,
            fused_pattern: fused,
        })
    }
}

/// Mean over the channel axis of `[B, A, C, 2]`, kept as `[B, A, 1, 2]`.
pub(crate) fn channel_mean(t: &mut Tape, x: Var) -> Result<Var, NdiffError> {
    let shape = t.g.shape(x).to_vec();
    let m = t.g.mean(x, 2)?;
    t.g.reshape(m, &[shape[0], shape[1], 1, 2])
}

/// `‖ḡ_i − ḡ_j‖` as `[B, A, A, 1]`, with ḡ the channel mean.
fn pairwise_distances(t: &mut Tape, geometric: Var) -> Result<Var, NdiffError> {
    let shape = t.g.shape(geometric).to_vec();
    let (b, a) = (shape[0], shape[1]);
    let centers = t.g.mean(geometric, 2)?;
    let ci = t.g.reshape(centers, &[b, a, 1, 2])?;
    let cj = t.g.reshape(centers, &[b, 1, a, 2])?;
    let diff = t.g.sub(ci, cj)?;
    let d = t.g.l2_norm(diff)?;
    t.g.reshape(d, &[b, a, a, 1])
}

/// `2·sigmoid(MLP(parts))`: strictly positive, equal to 1 at a zero output.
pub(crate) fn positive_gate(t: &mut Tape, mlp: &Mlp, parts: &[Var]) -> Result<Var, NdiffError> {
    let z = mlp.forward_parts(t, parts)?;
    let s = t.g.sigmoid(z);
    Ok(t.g.affine(s, 2.0, 0.0))
}

/// Plain-value helper: channel means of a `[B, A, C, 2]` array.
pub fn channel_means(geometric: &Array) -> Vec<[f64; 2]> {
    let c = geometric.shape()[2];
    geometric
        .data()
        .chunks(2 * c)
        .map(|ch| {
            let (mut x, mut y) = (0.0, 0.0);
            for p in ch.chunks(2) {
                x += p[0];
                y += p[1];
            }
            [x / c as f64, y / c as f64]
        })
        .collect()
}
