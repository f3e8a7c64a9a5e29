use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use photon_pinn::checkpoint::{Checkpoint, CheckpointModel};
use photon_pinn::pinn::PDEProblem;

const TOY: &str = r#"{
  "arch": "tonn",
  "problem": "hjb-toy(2)",
  "tt": {"out_factors": [8, 8], "in_factors": [8, 8], "ranks": [1, 2, 1]},
  "epochs": 200,
  "learning_rate": 0.005,
  "val_every": 50,
  "n_val": 500
}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_photon-pinn"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn photon-pinn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn train(config: &str, out: &Path, threads: usize) -> Output {
    let threads = threads.to_string();
    run(&[
        "--threads",
        &threads,
        "--out-dir",
        out.to_str().unwrap(),
        "train",
        config,
    ])
}

#[test]
fn toy_train_writes_artifacts_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "toy.json", TOY);
    let a = tmp.path().join("a");
    let o = train(&cfg, &a, 1);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,train_loss,val_mse,cum_inferences,cum_energy_J,cum_modeled_time_s"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 200);
    assert!(rows[0].starts_with("1,"));
    assert!(rows[199].starts_with("200,"));
    assert!(a.join("wall_clock.csv").exists());

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "completed");
    assert_eq!(summary["epochs_completed"], 200);
    // D=2: 6 evaluations per point, 100 points, 10 N-counted loss evaluations.
    assert_eq!(summary["totals"]["inferences"], 200 * 6000);
    assert_eq!(summary["totals"]["measured_inferences"], 200 * 6600);

    let b = tmp.path().join("b");
    assert!(train(&cfg, &b, 1).status.success());
    assert_eq!(metrics, fs::read_to_string(b.join("metrics.csv")).unwrap());

    // Re-evaluating the final checkpoint agrees with the logged validation MSE.
    let ck = Checkpoint::load(&a.join("checkpoint.json")).unwrap();
    let recorded = ck.val_mse.unwrap();
    let e = run(&[
        "eval",
        a.join("checkpoint.json").to_str().unwrap(),
        "--n-val",
        "2000",
        "--seed",
        "77",
    ]);
    assert!(e.status.success());
    let text = stdout(&e);
    let mse: f64 = text
        .lines()
        .next()
        .unwrap()
        .strip_prefix("val_mse ")
        .unwrap()
        .parse()
        .unwrap();
    assert!(mse <= 2.0 * recorded && mse >= recorded / 2.0, "{mse} vs {recorded}");
    assert!(text.contains("residual_loss "));
}

#[test]
fn invalid_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    for (i, text) in [
        r#"{"arch": "tonn", "problem": "hjb-toy(2)", "epochs": 3, "colour": 1}"#,
        r#"{"arch": "tonn", "problem": "hjb-toy(2)", "epochs": 3, "learning_rate": -1}"#,
        r#"{"arch": "tonn", "problem": "heat", "epochs": 3}"#,
        "{not json",
    ]
    .iter()
    .enumerate()
    {
        let cfg = write_config(tmp.path(), &format!("bad{i}.json"), text);
        let o = train(&cfg, &tmp.path().join("out"), 1);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn divergent_training_aborts_with_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TOY.replace("\"learning_rate\": 0.005", "\"learning_rate\": 1e200");
    let text = text.replace("\"epochs\": 200", "\"epochs\": 20");
    let cfg = write_config(tmp.path(), "boom.json", &text);
    let out = tmp.path().join("out");
    let o = train(&cfg, &out, 1);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "aborted");
    assert!(summary["error"].as_str().unwrap().contains("non-finite"));
}

#[test]
fn corrupt_checkpoint_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("ck.json");
    fs::write(&p, "{\"schema_version\": 1, \"problem\": ").unwrap();
    assert_eq!(run(&["eval", p.to_str().unwrap()]).status.code(), Some(4));
    assert_eq!(
        run(&["eval", tmp.path().join("missing.json").to_str().unwrap()])
            .status
            .code(),
        Some(4)
    );
}

#[test]
fn exact_checkpoint_evaluates_to_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("exact.json");
    Checkpoint::new(PDEProblem::hjb_toy(3), CheckpointModel::Constant { value: 1.0 })
        .save(&p)
        .unwrap();
    let o = run(&["eval", p.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mse: f64 = text
        .lines()
        .next()
        .unwrap()
        .strip_prefix("val_mse ")
        .unwrap()
        .parse()
        .unwrap();
    assert!(mse <= 1e-12, "{text}");
    let again = run(&["eval", p.to_str().unwrap()]);
    assert_eq!(text, stdout(&again));
}

#[test]
fn cost_report_matches_reference_figures() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "hjb20.json",
        r#"{"arch": "tonn", "problem": "hjb20", "epochs": 5000}"#,
    );
    let out = tmp.path().join("cost");
    let o = run(&["--out-dir", out.to_str().unwrap(), "cost", &cfg]);
    assert!(o.status.success());
    let text = stdout(&o);
    let tonn1 = text.lines().find(|l| l.starts_with("TONN-1")).expect("TONN-1 row");
    assert!(tonn1.contains("550"), "{tonn1}");
    assert!(text.contains("1.17E3"), "{text}");
    assert!(out.join("cost_report.json").exists());

    let cfg = write_config(
        tmp.path(),
        "nodig.json",
        r#"{"arch": "tonn", "problem": "hjb20", "epochs": 5000, "device": {"t_dig_ns": 0}}"#,
    );
    let text = stdout(&run(&["cost", &cfg]));
    let tonn1 = text.lines().find(|l| l.starts_with("TONN-1")).unwrap();
    assert!(tonn1.contains("49.7"), "{tonn1}");
}

#[test]
fn mesh_demo_reports_mzi_count_and_error() {
    let o = run(&["mesh-demo", "8", "--seed", "5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("28 MZIs"), "{text}");
    let err: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("max reconstruction error "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(err <= 1e-10);
    assert_eq!(text, stdout(&run(&["mesh-demo", "8", "--seed", "5"])));

    assert!(stdout(&run(&["mesh-demo", "2"])).contains("\n1 MZI\n"));
    assert_eq!(run(&["mesh-demo", "1"]).status.code(), Some(2));
}
