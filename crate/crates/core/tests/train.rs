mod common;

use common::*;
use equiforecast::config::{Config, MapMode};
use equiforecast::data::{generate_scenes, ScenarioKind, ScenarioSpec, SceneFile};
use equiforecast::error::Error;
use equiforecast::ndiff::Array;
use equiforecast::predictor::Model;
use equiforecast::train::*;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

#[test]
fn adam_ignores_zero_gradients() {
    let mut p = vec![Array::from_vec(vec![1.0, -2.0, 3.0])];
    let before = p.clone();
    let mut adam = Adam::new(&p);
    adam.update(&mut p, &[Array::zeros(&[3])], 0.1);
    assert_eq!(p, before);
}

#[test]
fn adam_first_step_moves_by_the_learning_rate() {
    let mut p = vec![Array::from_vec(vec![1.0, 1.0, 1.0])];
    let mut adam = Adam::new(&p);
    adam.update(&mut p, &[Array::from_vec(vec![0.3, -5.0, 1e-3])], 0.01);
    let expect = [0.99, 1.01, 0.99];
    for (v, e) in p[0].data().iter().zip(expect) {
        assert!((v - e).abs() < 1e-6, "{v}");
    }
}

#[test]
fn adam_matches_two_hand_rolled_steps() {
    let (lr, g1, g2) = (0.05, 0.7, -0.2);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut x = 2.0;
    let (mut m, mut v) = (0.0, 0.0);
    for (t, g) in [(1, g1), (2, g2)] {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t));
        let vh = v / (1.0 - b2.powi(t));
        x -= lr * mh / (vh.sqrt() + eps);
    }
    let mut p = vec![Array::scalar(2.0)];
    let mut adam = Adam::new(&p);
    adam.update(&mut p, &[Array::scalar(g1)], lr);
    adam.update(&mut p, &[Array::scalar(g2)], lr);
    assert!((p[0].item() - x).abs() < 1e-12);
    assert_eq!(adam.step, 2);
}

fn tiny_data(cfg: &Config, n: usize, seed: u64) -> Vec<SceneFile> {
    let dims = cfg.dims();
    generate_scenes(&ScenarioSpec::new(ScenarioKind::Fork), &dims, cfg.sample_rate_hz, n, seed)
        .unwrap()
        .into_iter()
        .map(|s| s.into_file(&dims, cfg.sample_rate_hz).unwrap())
        .collect()
}

fn tiny_train_config() -> Config {
    Config {
        epochs: 1,
        batch_size: 4,
        learning_rate: 1e-3,
        ..Config::tiny()
    }
}

#[test]
fn one_epoch_smoke_writes_a_checkpoint() {
    let cfg = tiny_train_config();
    let files = tiny_data(&cfg, 10, 1);
    let pairs = check_dataset(&files, &cfg.dims()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mut ckpt = Checkpoint::new(Model::new(cfg).unwrap());
    let logs = train(&mut ckpt, &pairs, &TrainOutput { checkpoint: Some(path.clone()) }, |_| {}).unwrap();
    assert_eq!(logs.len(), 1);
    assert!(logs[0].loss.is_finite());
    assert!(logs[0].line().starts_with("epoch 1 loss "));
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.model.store, ckpt.model.store);
    assert_eq!(back.adam, ckpt.adam);
}

#[test]
fn fixed_seed_gives_identical_first_epoch() {
    let cfg = tiny_train_config();
    let files = tiny_data(&cfg, 12, 2);
    let pairs = check_dataset(&files, &cfg.dims()).unwrap();
    let run = || {
        let mut ckpt = Checkpoint::new(Model::new(cfg.clone()).unwrap());
        train(&mut ckpt, &pairs, &TrainOutput::default(), |_| {}).unwrap()[0].losses()
    };
    assert_eq!(run(), run());
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let cfg = tiny_train_config();
    let files = tiny_data(&cfg, 8, 3);
    let pairs = check_dataset(&files, &cfg.dims()).unwrap();
    let mut ckpt = Checkpoint::new(Model::new(cfg).unwrap());
    train(&mut ckpt, &pairs, &TrainOutput::default(), |_| {}).unwrap();
    let text = ckpt.to_text();
    let back = Checkpoint::parse(&text).unwrap();
    assert_eq!(back.to_text(), text);
    let a = evaluate(&ckpt.model, &files, &[1, 3], 2.0).unwrap();
    let b = evaluate(&back.model, &files, &[1, 3], 2.0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let ckpt = Checkpoint::new(Model::new(Config::tiny()).unwrap());
    let text = ckpt.to_text();
    let broken = text.replacen("param map/token/0/weight", "param map/token/0/bias", 1);
    assert!(Checkpoint::parse(&broken).is_err());
    let short: String = text.lines().take(30).collect::<Vec<_>>().join("\n");
    assert!(Checkpoint::parse(&short).is_err());
}

#[test]
fn non_finite_loss_aborts_and_records_the_batch() {
    let cfg = tiny_train_config();
    let files = tiny_data(&cfg, 8, 4);
    let pairs = check_dataset(&files, &cfg.dims()).unwrap();
    let mut model = Model::new(cfg).unwrap();
    let id = model.store.find("decoder/head0/mix0/weight").unwrap();
    model.store.get_mut(id).data_mut()[0] = f64::NAN;
    let dir = tempfile::tempdir().unwrap();
    let output = TrainOutput {
        checkpoint: Some(dir.path().join("m.ckpt")),
    };
    let mut ckpt = Checkpoint::new(model);
    let err = train(&mut ckpt, &pairs, &output, |_| {}).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, batch: 0 }));
    let repro = std::fs::read_to_string(output.failure_path().unwrap()).unwrap();
    assert!(repro.contains("batch 0"));
}

#[test]
fn baseline_is_exact_on_clean_straight_scenes() {
    let cfg = Config::tiny();
    let dims = cfg.dims();
    let mut spec = ScenarioSpec::new(ScenarioKind::Straight);
    spec.noise = 0.0;
    let files: Vec<SceneFile> = generate_scenes(&spec, &dims, 10.0, 10, 5)
        .unwrap()
        .into_iter()
        .map(|s| s.into_file(&dims, 10.0).unwrap())
        .collect();
    let model = Model::new(cfg).unwrap();
    let r = evaluate(&model, &files, &[1, 2, 3], 2.0).unwrap();
    for b in &r.baseline {
        assert!(b.min_ade < 1e-9, "{}", b.min_ade);
    }
    assert_eq!(r.model.len(), 3);
}

#[test]
fn evaluation_reports_every_horizon_and_matches_recomputation() {
    let cfg = Config {
        t_out: 30,
        ..Config::tiny()
    };
    let files = tiny_data(&cfg, 6, 6);
    let model = Model::new(cfg).unwrap();
    let r = evaluate(&model, &files, &[10, 20, 30], 2.0).unwrap();
    let text = r.to_text();
    for tau in [10, 20, 30] {
        for key in ["min_ade", "min_fde", "miss_rate"] {
            assert!(text.contains(&format!("model.{key}_{tau} = ")));
            assert!(text.contains(&format!("baseline.{key}_{tau} = ")));
        }
    }
    // recompute from saved predictions
    let dir = tempfile::tempdir().unwrap();
    let mut forecasts = Vec::new();
    for (i, f) in files.iter().enumerate() {
        let p = dir.path().join(format!("{i}.forecast"));
        predict(&model, f).unwrap().write(&p).unwrap();
        forecasts.push(equiforecast::data::ForecastFile::read(&p).unwrap().forecast);
    }
    let truths: Vec<_> = files.iter().map(|f| f.truth.clone().unwrap()).collect();
    for (tau, rep) in [10, 20, 30].iter().zip(&r.model) {
        let again = equiforecast::objective::metric_report(&forecasts, &truths, *tau, 2.0).unwrap();
        assert!((again.min_ade - rep.min_ade).abs() < 1e-9);
        assert!((again.min_fde - rep.min_fde).abs() < 1e-9);
        assert!((again.miss_rate - rep.miss_rate).abs() < 1e-9);
    }
}

#[test]
fn mismatched_dataset_is_named() {
    let cfg = Config::tiny();
    let other = Config {
        agents: 3,
        ..Config::tiny()
    };
    let files = tiny_data(&other, 2, 7);
    let model = Model::new(cfg).unwrap();
    let err = evaluate(&model, &files, &[3], 2.0).unwrap_err();
    assert!(matches!(err, Error::Incompatible(_)));
    assert!(err.to_string().contains("dims"));
}

#[test]
fn predict_is_deterministic() {
    let cfg = Config::tiny();
    let files = tiny_data(&cfg, 1, 8);
    let model = Model::new(cfg).unwrap();
    let a = predict(&model, &files[0]).unwrap().to_text();
    let b = predict(&model, &files[0]).unwrap().to_text();
    assert_eq!(a, b);
}

#[test]
fn gradients_match_finite_differences_on_the_tiny_config() {
    let mut cfg = Config::tiny();
    cfg.map_mode = MapMode::Invariant;
    let model = Model::new(cfg).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
    let dims = model.config.dims();
    let scenes: Vec<_> = (0..2).map(|_| random_scene(&mut rng, &dims)).collect();
    let truths: Vec<_> = scenes.iter().map(|s| random_truth(&mut rng, s, dims.future)).collect();
    let r = model_grad_check(&model, &scenes, &truths, 1e-4);
    assert!(r.worst < 1e-4, "{:e} at {}", r.worst, r.at);
    assert_eq!(r.skipped, 0);
    eprintln!("{} entries, {} one-sided, worst {:e}", r.entries, r.one_sided, r.worst);
}

#[test]
fn predicted_probabilities_are_normalised_and_select_the_argmax() {
    let cfg = Config { heads: 4, ..Config::tiny() };
    let files = tiny_data(&cfg, 3, 10);
    let model = Model::new(cfg).unwrap();
    for f in &files {
        let out = predict(&model, f).unwrap();
        let back = equiforecast::data::ForecastFile::parse(&out.to_text()).unwrap();
        for (row, sel) in back.forecast.probabilities.iter().zip(&back.selected) {
            let sel = sel.unwrap();
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p <= row[sel]));
        }
    }
}
