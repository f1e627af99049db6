use std::path::Path;
use std::process::Command;

use equiforecast::config::Config;

fn run(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_equiforecast")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_train_eval_predict_plot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = Config {
        epochs: 2,
        batch_size: 4,
        learning_rate: 1e-3,
        checkpoint_every: 1,
        ..Config::tiny()
    };
    std::fs::write(d.join("tiny.cfg"), cfg.to_text()).unwrap();
    let (cfg_path, data, ckpt) = (d.join("tiny.cfg"), d.join("data"), d.join("m.ckpt"));

    run(&["gen", "--kind", "fork", "--n", "12", "--seed", "3", "--out", p(&data), "--config", p(&cfg_path)]);
    let log = run(&["train", "--config", p(&cfg_path), "--data", p(&data), "--out", p(&ckpt), "--set", "epochs=1"]);
    assert_eq!(log.lines().count(), 1);
    assert!(log.starts_with("epoch 1 loss "));

    let report = run(&["eval", "--ckpt", p(&ckpt), "--data", p(&data), "--tau", "1,3"]);
    for key in ["model.min_ade_1", "model.min_fde_3", "baseline.miss_rate_3"] {
        assert!(report.contains(key), "{report}");
    }

    let scene = d.join("data/scene_00000.scene");
    let (fa, fb) = (d.join("a.forecast"), d.join("b.forecast"));
    run(&["predict", "--ckpt", p(&ckpt), "--scene", p(&scene), "--out", p(&fa)]);
    run(&["predict", "--ckpt", p(&ckpt), "--scene", p(&scene), "--out", p(&fb)]);
    assert_eq!(std::fs::read(&fa).unwrap(), std::fs::read(&fb).unwrap());

    let svg = d.join("plot.svg");
    run(&["plot", "--scene", p(&scene), "--forecast", p(&fa), "--out", p(&svg)]);
    roxmltree::Document::parse(&std::fs::read_to_string(&svg).unwrap()).unwrap();
}

#[test]
fn bad_override_is_reported() {
    let out = Command::new(env!("CARGO_BIN_EXE_equiforecast"))
        .args(["train", "--data", "/nonexistent", "--out", "/tmp/x.ckpt", "--set", "heads"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("KEY=VALUE"));
}
