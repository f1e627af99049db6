//! Optimizer, training loop, checkpoints, evaluation and prediction.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::batch::{SceneBatch, TargetBatch};
use crate::config::Config;
use crate::data::format::num;
use crate::data::{ForecastFile, SceneFile};
use crate::error::{Error, Result};
use crate::ndiff::Array;
use crate::nn::Tape;
use crate::objective::{combined_loss, metric_report, MetricReport};
use crate::predictor::Model;
use crate::scene::{constant_velocity_baseline, Dims, ForecastSet, GroundTruth, Scene};

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Array>,
    pub v: Vec<Array>,
}

impl Adam {
    pub fn new(params: &[Array]) -> Self {
        let zeros = || params.iter().map(|p| Array::zeros(p.shape())).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn update(&mut self, params: &mut [Array], grads: &[Array], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Model parameters with optimizer state.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub adam: Adam,
}

const CHECKPOINT_TAG: &str = "checkpoint 1";

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        let adam = Adam::new(model.store.values());
        Self { model, adam }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{CHECKPOINT_TAG}");
        let _ = writeln!(s, "step {}", self.adam.step);
        for line in self.model.config.to_text().lines() {
            let _ = writeln!(s, "config {line}");
        }
        let arrays = [("param", self.model.store.values()), ("moment1", &self.adam.m[..]), ("moment2", &self.adam.v[..])];
        for (tag, values) in arrays {
            for ((name, _), a) in self.model.store.iter().zip(values) {
                let shape: Vec<String> = a.shape().iter().map(ToString::to_string).collect();
                let _ = write!(s, "{tag} {name} [{}]", shape.join(","));
                for v in a.data() {
                    let _ = write!(s, " {}", num(*v));
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim() == CHECKPOINT_TAG => {}
            _ => return Err(Error::parse(1, format!("expected `{CHECKPOINT_TAG}`"))),
        }
        let (n, step_line) = lines.next().ok_or_else(|| Error::parse(2, "missing step line"))?;
        let step: u64 = step_line
            .strip_prefix("step ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::parse(n, "expected `step <count>`"))?;
        let mut config_text = String::new();
        let mut rest = Vec::new();
        for (n, l) in lines {
            if let Some(c) = l.strip_prefix("config ") {
                config_text.push_str(c);
                config_text.push('\n');
            } else if !l.trim().is_empty() {
                rest.push((n, l));
            }
        }
        let config = Config::from_text(&config_text)?;
        let mut model = Model::new(config)?;
        let count = model.store.len();
        if rest.len() != 3 * count {
            return Err(Error::Incompatible(format!(
                "checkpoint holds {} arrays, the configured model needs {}",
                rest.len(),
                3 * count
            )));
        }
        let mut adam = Adam::new(model.store.values());
        adam.step = step;
        for (k, (n, line)) in rest.into_iter().enumerate() {
            let (tag, idx) = (["param", "moment1", "moment2"][k / count], k % count);
            let id = model.store.ids().nth(idx).expect("index below count");
            let expected_name = model.store.name(id).to_string();
            let mut f = line.split_whitespace();
            if f.next() != Some(tag) || f.next() != Some(expected_name.as_str()) {
                return Err(Error::parse(n, format!("expected `{tag} {expected_name}`")));
            }
            let target = match tag {
                "param" => model.store.get_mut(id),
                "moment1" => &mut adam.m[idx],
                _ => &mut adam.v[idx],
            };
            let shape: Vec<String> = target.shape().iter().map(ToString::to_string).collect();
            let shape = format!("[{}]", shape.join(","));
            if f.next() != Some(shape.as_str()) {
                return Err(Error::parse(n, format!("expected shape {shape} for {expected_name}")));
            }
            let values: Vec<f64> = f
                .map(|v| v.parse::<f64>().map_err(|_| Error::parse(n, format!("bad number `{v}`"))))
                .collect::<Result<_>>()?;
            if values.len() != target.len() {
                return Err(Error::parse(n, format!("expected {} values, found {}", target.len(), values.len())));
            }
            target.data_mut().copy_from_slice(&values);
        }
        Ok(Self { model, adam })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| e.with_source(path))
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub trajectory: f64,
    pub probability: f64,
    pub seconds: f64,
}

impl EpochLog {
    /// The loss fields only; identical across runs with the same seed.
    pub fn losses(&self) -> String {
        format!(
            "epoch {} loss {} trajectory {} probability {}",
            self.epoch,
            num(self.loss),
            num(self.trajectory),
            num(self.probability)
        )
    }

    pub fn line(&self) -> String {
        format!("{} time {:.3}s", self.losses(), self.seconds)
    }
}

/// Check that every file matches the model's tensor sizes and carries truth.
pub fn check_dataset<'a>(files: &'a [SceneFile], dims: &Dims) -> Result<Vec<(&'a Scene, &'a GroundTruth)>> {
    if files.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    files
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if f.dims != *dims {
                return Err(Error::Incompatible(format!(
                    "scene {i} has dims {:?}, the model expects {:?}",
                    f.dims, dims
                )));
            }
            let gt = f
                .truth
                .as_ref()
                .ok_or_else(|| Error::Incompatible(format!("scene {i} has no ground truth")))?;
            Ok((&f.scene, gt))
        })
        .collect()
}

/// Where the trainer writes.
#[derive(Clone, Debug, Default)]
pub struct TrainOutput {
    /// Checkpoint path, written every `checkpoint_every` epochs and at the end.
    pub checkpoint: Option<PathBuf>,
}

impl TrainOutput {
    /// File holding the repro details of a non-finite loss.
    pub fn failure_path(&self) -> Option<PathBuf> {
        self.checkpoint.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".nonfinite");
            PathBuf::from(s)
        })
    }
}

/// Mini-batch training. `on_epoch` sees each log line as it is produced.
pub fn train(
    ckpt: &mut Checkpoint,
    data: &[(&Scene, &GroundTruth)],
    output: &TrainOutput,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let cfg = ckpt.model.config.clone();
    let dims = cfg.dims();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed ^ 0x5e_ed0f_7a1e);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut total, mut traj, mut prob, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let scenes: Vec<&Scene> = chunk.iter().map(|&i| data[i].0).collect();
            let truths: Vec<&GroundTruth> = chunk.iter().map(|&i| data[i].1).collect();
            let batch = SceneBatch::new(&scenes, &dims)?;
            let targets = TargetBatch::new(&truths, &dims)?;
            let (grads, values) = {
                let mut t = Tape::new(&ckpt.model.store, true);
                let out = ckpt.model.forward(&mut t, &batch, None)?;
                let loss = combined_loss(&mut t.g, out.trajectories, out.probabilities, &targets, cfg.beta)?;
                let values = [
                    t.value(loss.combined).item(),
                    t.value(loss.trajectory).item(),
                    t.value(loss.probability).item(),
                ];
                if !values.iter().all(|v| v.is_finite()) {
                    if let Some(path) = output.failure_path() {
                        let mut s = format!("epoch {epoch}\nbatch {b}\nscenes");
                        for i in chunk {
                            let _ = write!(s, " {i}");
                        }
                        s.push('\n');
                        fs::write(path, s)?;
                    }
                    return Err(Error::NonFiniteLoss { epoch, batch: b });
                }
                (t.param_grads(loss.combined)?, values)
            };
            ckpt.adam.update(ckpt.model.store.values_mut(), &grads, cfg.learning_rate);
            total += values[0];
            traj += values[1];
            prob += values[2];
            batches += 1;
        }
        let n = batches as f64;
        let log = EpochLog {
            epoch,
            loss: total / n,
            trajectory: traj / n,
            probability: prob / n,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        logs.push(log);
        if let Some(path) = &output.checkpoint {
            if epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs {
                ckpt.save(path)?;
            }
        }
    }
    Ok(logs)
}

/// Forecasts for many scenes, in chunks of the configured batch size.
pub fn forecast_all(model: &Model, scenes: &[&Scene]) -> Result<Vec<ForecastSet>> {
    let mut out = Vec::with_capacity(scenes.len());
    for chunk in scenes.chunks(model.config.batch_size.max(1)) {
        out.extend(model.forecast_batch(chunk)?);
    }
    Ok(out)
}

/// Model and constant-velocity metrics at several horizons.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub model: Vec<MetricReport>,
    pub baseline: Vec<MetricReport>,
}

impl Evaluation {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.model {
            s.push_str(&r.to_text("model"));
        }
        for r in &self.baseline {
            s.push_str(&r.to_text("baseline"));
        }
        s
    }
}

pub fn evaluate(model: &Model, files: &[SceneFile], taus: &[usize], miss_threshold: f64) -> Result<Evaluation> {
    let pairs = check_dataset(files, &model.config.dims())?;
    let scenes: Vec<&Scene> = pairs.iter().map(|p| p.0).collect();
    let truths: Vec<GroundTruth> = pairs.iter().map(|p| p.1.clone()).collect();
    let forecasts = forecast_all(model, &scenes)?;
    let baseline: Vec<ForecastSet> = scenes
        .iter()
        .map(|s| constant_velocity_baseline(s, model.config.t_out))
        .collect();
    let report = |f: &[ForecastSet]| -> Result<Vec<MetricReport>> {
        taus.iter().map(|&tau| metric_report(f, &truths, tau, miss_threshold)).collect()
    };
    Ok(Evaluation {
        model: report(&forecasts)?,
        baseline: report(&baseline)?,
    })
}

pub fn predict(model: &Model, file: &SceneFile) -> Result<ForecastFile> {
    let dims = model.config.dims();
    let expect = Dims {
        future: file.dims.future,
        ..dims
    };
    if file.dims != expect {
        return Err(Error::Incompatible(format!(
            "scene has dims {:?}, the model expects {:?}",
            file.dims, dims
        )));
    }
    let forecast = model.forecast(&file.scene)?;
    ForecastFile::new(forecast, file.scene.agent_mask.clone())
}
