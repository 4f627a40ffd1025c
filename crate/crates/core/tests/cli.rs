use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn tastenet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tastenet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = tastenet(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn err(dir: &Path, args: &[&str]) -> Value {
    let out = tastenet(dir, args);
    assert_eq!(out.status.code(), Some(1), "{args:?} should fail");
    serde_json::from_slice(&out.stderr).unwrap()
}

fn out_dir(summary: &Value) -> PathBuf {
    PathBuf::from(summary["output_dir"].as_str().unwrap())
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

/// Generates a small synthetic dataset and returns the gen output directory.
fn generate(dir: &Path) -> PathBuf {
    fs::write(
        dir.join("gen.toml"),
        "seed = 3\n[generator]\nn_train = 400\nn_dev = 100\nn_test = 100\nseed = 3\n[data]\npreset = \"synthetic\"\n",
    )
    .unwrap();
    let g = ok(dir, &["gen", "-c", "gen.toml"]);
    let gdir = out_dir(&g);
    dir.join(gdir)
}

fn train_config(dir: &Path, gen: &Path, name: &str, model: &str, extra: &str) -> String {
    let text = format!(
        "seed = 3\n[data]\npreset = \"synthetic\"\ntrain = {:?}\ndev = {:?}\ntest = {:?}\n[model]\npreset = \"{model}\"\n\
         [training]\nrestarts = 1\nmax_epochs = 15\npatience = 5\nlearning_rate = 0.01\n{extra}",
        gen.join("train.csv"),
        gen.join("dev.csv"),
        gen.join("test.csv"),
    );
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn gen_writes_requested_rows_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let gdir = generate(dir);
    let lines = |f: &str| fs::read_to_string(gdir.join(f)).unwrap().lines().count() - 1;
    assert_eq!((lines("train.csv"), lines("dev.csv"), lines("test.csv")), (400, 100, 100));
    let manifest = read_json(gdir.join("manifest.json"));

    let again = ok(dir, &["gen", "-c", "gen.toml"]);
    assert_eq!(dir.join(out_dir(&again)), gdir);
    assert_eq!(read_json(gdir.join("manifest.json")), manifest);

    let other = ok(dir, &["gen", "-c", "gen.toml", "--seed", "4"]);
    assert_ne!(dir.join(out_dir(&other)), gdir);
}

#[test]
fn single_training_row_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("one.toml"),
        "seed = 1\n[generator]\nn_train = 1\nn_dev = 1\nn_test = 1\nseed = 1\n[data]\npreset = \"synthetic\"\n",
    )
    .unwrap();
    let g = ok(dir, &["gen", "-c", "one.toml"]);
    assert_eq!(g["rows"]["train"], 1);
}

#[test]
fn train_eval_indicators_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let gen = generate(dir);

    let cfg = train_config(dir, &gen, "mnl.toml", "mnl-true", "");
    let t = ok(dir, &["train", "-c", &cfg]);
    let tdir = dir.join(out_dir(&t));
    for f in ["model.json", "history.csv", "coefficients.json", "metrics.json", "manifest.json"] {
        assert!(tdir.join(f).is_file(), "{f}");
    }
    let coef = read_json(tdir.join("coefficients.json"));
    assert_eq!(coef["truth_aligned"].as_object().unwrap().len(), 8);

    let model = tdir.join("model.json");
    let test = gen.join("test.csv");
    let args = ["eval", "-m", model.to_str().unwrap(), "-d", test.to_str().unwrap()];
    let e = ok(dir, &args);
    let trained_nll = t["metrics"]["test"]["nll"].as_f64().unwrap();
    assert!((e["metrics"]["nll"].as_f64().unwrap() - trained_nll).abs() < 1e-12);

    let edir = dir.join(out_dir(&e));
    let first = fs::read(edir.join("metrics.json")).unwrap();
    ok(dir, &args);
    assert_eq!(fs::read(edir.join("metrics.json")).unwrap(), first);

    let i = ok(dir, &["indicators", "-m", model.to_str().unwrap(), "-d", test.to_str().unwrap(), "--elasticity", "alt1:time"]);
    let idir = dir.join(out_dir(&i));
    let rows = fs::read_to_string(idir.join("indicators.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 100);
    assert!(i["aggregate_elasticities"][0]["aggregate"]["groups"][0]["value"].as_f64().unwrap() < 0.0);
}

#[test]
fn random_coefficient_model_reports_positive_sigma() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let gen = generate(dir);
    let cfg = train_config(dir, &gen, "rcl.toml", "rcl-i", "");
    let t = ok(dir, &["train", "-c", &cfg]);
    let coef = read_json(dir.join(out_dir(&t)).join("coefficients.json"));
    assert!(coef["sigma"].as_f64().unwrap() > 0.0, "{coef}");
}

#[test]
fn singleton_grid_has_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let gen = generate(dir);
    let grid = "[grid]\nhidden_sizes = [[3]]\nactivations = [\"relu\"]\nconstrained_transforms = [\"non_positive_relu\"]\n\
                reg_norms = [2]\nreg_strengths = [0.0]\n";
    let cfg = train_config(dir, &gen, "grid.toml", "tastenet", grid);
    let g = ok(dir, &["grid", "-c", &cfg, "-w", "1"]);
    assert_eq!(g["runs"], 1);
    assert_eq!(g["failed"], 0);
    let gdir = dir.join(out_dir(&g));
    assert_eq!(fs::read_to_string(gdir.join("grid.csv")).unwrap().lines().count(), 2);
    assert!(gdir.join("best_model.json").is_file());
}

#[test]
fn failures_are_reported_as_json() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let gen = generate(dir);

    let missing = err(dir, &["train", "-c", "absent.toml"]);
    assert_eq!(missing["error"]["command"], "train");

    let cfg = train_config(dir, &gen, "mnl.toml", "mnl-i", "");
    let t = ok(dir, &["train", "-c", &cfg]);
    let model = dir.join(out_dir(&t)).join("model.json");

    let header = fs::read_to_string(gen.join("test.csv")).unwrap().lines().next().unwrap().to_string();
    fs::write(dir.join("empty.csv"), header + "\n").unwrap();
    let e = err(dir, &["eval", "-m", model.to_str().unwrap(), "-d", "empty.csv"]);
    assert_eq!(e["error"]["kind"], "data");

    fs::write(dir.join("probe.toml"), "[data]\n[probe]\nsweep = \"inc\"\nfrom = 0.0\nto = 1.0\nsteps = 3\n").unwrap();
    let p = err(dir, &["probe", "-m", model.to_str().unwrap(), "-c", "probe.toml"]);
    assert_eq!(p["error"]["kind"], "probe");
}
