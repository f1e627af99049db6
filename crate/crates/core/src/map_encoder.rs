//! Map encoding: a per-lane token MLP, single-head scaled dot-product
//! self-attention across lanes, and mean pooling over valid lanes.

use rand::Rng;

use crate::batch::{descriptor_len, SceneBatch};
use crate::config::MapMode;
use crate::ndiff::{Array, NdiffError, Var};
use crate::nn::{uniform_array, Mlp, ParamId, ParamStore, Tape};

#[derive(Clone, Debug)]
struct Attention {
    query: ParamId,
    key: ParamId,
    value: ParamId,
}

#[derive(Clone, Debug)]
pub struct MapEncoder {
    mode: MapMode,
    hidden: usize,
    token: Option<Mlp>,
    attention: Option<Attention>,
}

/// Encoder output with the attention weights kept for inspection.
pub struct MapEncoding {
    /// `[B, hidden]`
    pub feature: Var,
    /// `[B, L, L]`, absent in mode `none`.
    pub attention: Option<Var>,
}

impl MapEncoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        mode: MapMode,
        lane_points: usize,
        hidden: usize,
    ) -> Self {
        let input = match mode {
            MapMode::None => {
                return Self {
                    mode,
                    hidden,
                    token: None,
                    attention: None,
                }
            }
            MapMode::Raw => 2 * lane_points,
            MapMode::Invariant => descriptor_len(lane_points),
        };
        let token = Mlp::new(store, rng, "map/token", &[input, hidden, hidden, hidden]);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut proj = |name: &str| store.add(format!("map/attention/{name}"), uniform_array(rng, &[hidden, hidden], bound));
        let attention = Attention {
            query: proj("query"),
            key: proj("key"),
            value: proj("value"),
        };
        Self {
            mode,
            hidden,
            token: Some(token),
            attention: Some(attention),
        }
    }

    pub fn mode(&self) -> MapMode {
        self.mode
    }

    pub fn encode(&self, t: &mut Tape, batch: &SceneBatch) -> Result<MapEncoding, NdiffError> {
        let (Some(token), Some(att)) = (&self.token, &self.attention) else {
            let zeros = t.constant(Array::zeros(&[batch.size, self.hidden]));
            return Ok(MapEncoding {
                feature: zeros,
                attention: None,
            });
        };
        let inputs = match self.mode {
            MapMode::Raw => batch.lanes_centered.clone(),
            _ => batch.lane_descriptors.clone(),
        };
        let (b, l) = (batch.size, batch.dims.lanes);
        let x = t.constant(inputs);
        let tokens = token.forward(t, x)?;
        let (wq, wk, wv) = (t.param(att.query), t.param(att.key), t.param(att.value));
        let q = t.g.matmul(tokens, wq)?;
        let k = t.g.matmul(tokens, wk)?;
        let v = t.g.matmul(tokens, wv)?;
        let kt = t.g.transpose(k, 1, 2)?;
        let scores = t.g.matmul(q, kt)?;
        let scores = t.g.affine(scores, 1.0 / (self.hidden as f64).sqrt(), 0.0);

        // keys restricted to valid lanes; rows of padded queries are dropped by pooling
        let lane_mask = batch.lane_mask.data();
        let mut key_mask = Vec::with_capacity(b * l * l);
        for s in 0..b {
            for _ in 0..l {
                key_mask.extend_from_slice(&lane_mask[s * l..(s + 1) * l]);
            }
        }
        let key_mask = Array::new(vec![b, l, l], key_mask)?;
        let weights = t.g.masked_softmax(scores, &key_mask)?;
        let attended = t.g.matmul(weights, v)?;

        let mut pool = Vec::with_capacity(b * l);
        for s in 0..b {
            let row = &lane_mask[s * l..(s + 1) * l];
            let n: f64 = row.iter().sum();
            pool.extend(row.iter().map(|&m| if n > 0.0 { m / n } else { 0.0 }));
        }
        let pool = t.constant(Array::new(vec![b, l, 1], pool)?);
        let weighted = t.g.mul(attended, pool)?;
        let feature = t.g.sum(weighted, 1)?;
        Ok(MapEncoding {
            feature,
            attention: Some(weights),
        })
    }
}
