//! Named parameter storage and the layer building blocks shared by the model.

use rand::Rng;

use crate::ndiff::{Array, Gradients, Graph, NdiffError, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named parameter arrays. Names are `/`-separated module paths.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Array {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Array] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Array] {
        &mut self.values
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.values.iter().map(Array::len).sum()
    }

    pub fn count_with_prefix(&self, prefix: &str) -> usize {
        self.iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, v)| v.len())
            .sum()
    }
}

/// A graph under construction together with the parameters it reads.
///
/// Parameters are bound lazily: the first use of a [`ParamId`] inserts it
/// as a leaf (trainable or constant), later uses share that leaf.
pub struct Tape<'p> {
    pub g: Graph,
    store: &'p ParamStore,
    bound: Vec<Option<Var>>,
    trainable: bool,
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore, trainable: bool) -> Self {
        Self {
            g: Graph::new(),
            store,
            bound: vec![None; store.len()],
            trainable,
        }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let value = self.store.get(id).clone();
        let v = if self.trainable {
            self.g.parameter(value)
        } else {
            self.g.constant(value)
        };
        self.bound[id.0] = Some(v);
        v
    }

    pub fn bound(&self, id: ParamId) -> Option<Var> {
        self.bound[id.0]
    }

    pub fn constant(&mut self, a: Array) -> Var {
        self.g.constant(a)
    }

    pub fn value(&self, v: Var) -> &Array {
        self.g.value(v)
    }

    /// Gradient of `root` for every stored parameter, zeros where unused.
    pub fn param_grads(&self, root: Var) -> Result<Vec<Array>, NdiffError> {
        let mut grads = self.g.backward(root)?;
        Ok(self.collect(&mut grads))
    }

    fn collect(&self, grads: &mut Gradients) -> Vec<Array> {
        self.bound
            .iter()
            .zip(self.store.values())
            .map(|(b, p)| {
                b.and_then(|v| grads.take(v))
                    .unwrap_or_else(|| Array::zeros(p.shape()))
            })
            .collect()
    }
}

pub(crate) fn uniform_array<R: Rng>(rng: &mut R, shape: &[usize], bound: f64) -> Array {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Array::new(shape.to_vec(), data).expect("shape matches data")
}

/// `y = x·W + b` over the last axis; `W` is `in × out`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = store.add(format!("{name}/weight"), uniform_array(rng, &[fan_in, fan_out], bound));
        let bias = store.add(format!("{name}/bias"), uniform_array(rng, &[fan_out], bound));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Result<Var, NdiffError> {
        let w = t.param(self.weight);
        let b = t.param(self.bias);
        let y = t.g.matmul(x, w)?;
        t.g.add(y, b)
    }

    /// Apply to an input given as pieces along the feature axis. Each piece
    /// meets its own row block of the weight, and the partial products are
    /// summed with broadcasting, so pieces may differ in leading shape.
    pub fn forward_parts(&self, t: &mut Tape, parts: &[Var]) -> Result<Var, NdiffError> {
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| t.g.shape(*p).last().copied().unwrap_or(0))
            .collect();
        let total: usize = widths.iter().sum();
        if total != self.fan_in {
            return Err(NdiffError::Invalid {
                op: "linear",
                detail: format!("input pieces {widths:?} do not sum to fan-in {}", self.fan_in),
            });
        }
        let w = t.param(self.weight);
        let b = t.param(self.bias);
        let mut acc: Option<Var> = None;
        let mut row = 0;
        for (p, width) in parts.iter().zip(widths) {
            let block = if width == self.fan_in {
                w
            } else {
                t.g.slice(w, 0, row, row + width)?
            };
            row += width;
            let y = t.g.matmul(*p, block)?;
            acc = Some(match acc {
                None => y,
                Some(a) => t.g.add(a, y)?,
            });
        }
        let acc = acc.ok_or(NdiffError::Invalid {
            op: "linear",
            detail: "no inputs".into(),
        })?;
        t.g.add(acc, b)
    }
}

/// Fully connected stack with ReLU between layers and a linear output.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `sizes = [in, hidden.., out]`.
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, rng, &format!("{name}/{i}"), w[0], w[1]))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Result<Var, NdiffError> {
        self.forward_parts(t, &[x])
    }

    pub fn forward_parts(&self, t: &mut Tape, parts: &[Var]) -> Result<Var, NdiffError> {
        let mut h = self.layers[0].forward_parts(t, parts)?;
        for layer in &self.layers[1..] {
            h = t.g.relu(h);
            h = layer.forward(t, h)?;
        }
        Ok(h)
    }

    pub fn output_layer(&self) -> &Linear {
        self.layers.last().expect("mlp has layers")
    }
}

/// Learnable map over the channel axis of coordinate-valued features
/// `[..., C_in, 2] → [..., C_out, 2]`; the coordinate axis is never mixed.
#[derive(Clone, Debug)]
pub struct ChannelMix {
    pub weight: ParamId,
    pub c_in: usize,
    pub c_out: usize,
}

impl ChannelMix {
    /// Square maps start at identity plus uniform noise of scale 0.01;
    /// rectangular ones use the fan-in uniform rule.
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, c_in: usize, c_out: usize) -> Self {
        let value = if c_in == c_out {
            let mut w = uniform_array(rng, &[c_in, c_out], 0.01);
            for i in 0..c_in {
                w.data_mut()[i * c_out + i] += 1.0;
            }
            w
        } else {
            uniform_array(rng, &[c_in, c_out], 1.0 / (c_in as f64).sqrt())
        };
        let weight = store.add(format!("{name}/weight"), value);
        Self { weight, c_in, c_out }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Result<Var, NdiffError> {
        let rank = t.g.shape(x).len();
        if rank < 2 {
            return Err(NdiffError::BadAxis {
                op: "channel_mix",
                axis: 1,
                shape: t.g.shape(x).to_vec(),
            });
        }
        let w = t.param(self.weight);
        let xt = t.g.transpose(x, rank - 2, rank - 1)?;
        let y = t.g.matmul(xt, w)?;
        t.g.transpose(y, rank - 2, rank - 1)
    }
}
