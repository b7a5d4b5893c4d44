use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use readmit::checkpoint;
use readmit::manifest::RunManifest;
use readmit_core::featurizer::to_examples;
use readmit_core::model::SequenceModel;
use readmit_core::trainer::EvalReport;

fn readmit(data_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_readmit"))
        .env("READMIT_DATA_DIR", data_dir)
        .args(args)
        .output()
        .expect("run readmit")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth(dir: &Path, patients: &str) {
    ok(&readmit(dir, &["synth", "--patients", patients, "--seed", "7"]));
}

#[test]
fn synth_is_reproducible_and_writes_a_manifest() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), "300");
    synth(b.path(), "300");
    for f in ["claims.csv", "summary.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let m: RunManifest = serde_json::from_slice(&fs::read(a.path().join("manifest_synth.json")).unwrap()).unwrap();
    assert_eq!(m.command, "synth");
    assert_eq!(m.seed, Some(7));
    assert_eq!(m.resolved_config["n_patients"], 300);
    assert_eq!(m.outputs.len(), 2);
}

#[test]
fn invalid_rate_is_a_config_error_naming_the_field() {
    let d = tempfile::tempdir().unwrap();
    let out = readmit(d.path(), &["synth", "--set", "target_readmit_rate=1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("target_readmit_rate"));
    let typo = readmit(d.path(), &["synth", "--set", "target_readmit_rat=0.2"]);
    assert_eq!(typo.status.code(), Some(2));
}

#[test]
fn unknown_model_lists_the_catalog() {
    let d = tempfile::tempdir().unwrap();
    let out = readmit(d.path(), &["train", "--model", "transformer"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("rnncrf-pairwise") && msg.contains("lr-l1"), "{msg}");
}

#[test]
fn missing_inputs_exit_3() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(readmit(d.path(), &["train", "--model", "mlp"]).status.code(), Some(3));
    assert_eq!(readmit(d.path(), &["importance", "--metric", "diff_prob"]).status.code(), Some(3));
    assert_eq!(readmit(d.path(), &["report", "--table2"]).status.code(), Some(3));
}

#[test]
fn train_importance_and_report_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    synth(dir, "400");
    ok(&readmit(dir, &["train", "--model", "rnncrf-pairwise", "--set", "training.max_epochs=2", "--workers", "2"]));
    let run = dir.join("runs/rnncrf-pairwise");
    let report: EvalReport = serde_json::from_slice(&fs::read(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.folds.len(), 5);
    assert!(report.pooled.ci_low <= report.pooled.auc && report.pooled.auc <= report.pooled.ci_high);
    let curves = fs::read_to_string(run.join("curves.csv")).unwrap();
    assert!(curves.starts_with("fold,epoch,train_loss,validation_auc"));
    assert_eq!(curves.lines().count(), 1 + 5 * 2);

    // restored checkpoints reproduce the reported test scores
    let ck = checkpoint::load(&run.join("fold_0")).unwrap();
    let claims = readmit::io::read_claims(&dir.join("claims.csv")).unwrap();
    let tls = readmit_core::claims::build_timelines(&claims).timelines;
    let exs = to_examples(&ck.spec, &tls);
    for p in report.predictions.iter().filter(|p| p.fold == 0) {
        let ex = exs.iter().find(|e| e.id == p.patient_id).unwrap();
        assert_eq!(ck.model.predict(ex), p.score);
    }

    ok(&readmit(dir, &["train", "--model", "lr-l1"]));
    let coef = fs::read_to_string(dir.join("runs/lr-l1/coefficients.csv")).unwrap();
    assert!(coef.starts_with("fold,feature,coefficient"));

    ok(&readmit(dir, &["importance", "--metric", "diff_prob_weighted"]));
    let imp = fs::read_to_string(run.join("importance_diff_prob_weighted.csv")).unwrap();
    let ranks: Vec<usize> = imp.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(!ranks.is_empty());
    assert!(ranks.windows(2).all(|w| w[0] < w[1]));

    let bad = readmit(dir, &["importance", "--run", run.to_str().unwrap(), "--metric", "lasso_coefficient"]);
    assert_eq!(bad.status.code(), Some(2));

    ok(&readmit(dir, &["report", "--by-length"]));
    let by_len = fs::read_to_string(dir.join("runs/by_length.csv")).unwrap();
    assert_eq!(by_len.lines().count(), 1 + 2 * 5);
    ok(&readmit(dir, &["report", "--table2"]));
    let t2 = fs::read_to_string(dir.join("runs/table2.csv")).unwrap();
    assert!(t2.contains("RNNCRF (Pairwise)") && t2.contains("Logistic regression (L1 reg.)"));

    fs::remove_dir_all(run.join("fold_3")).unwrap();
    assert_eq!(readmit(dir, &["importance"]).status.code(), Some(3));
}

#[test]
fn hyperopt_writes_one_record_per_trial() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    synth(dir, "500");
    let args = ["hyperopt", "--model", "rnn", "--trials", "4", "--workers", "2", "--max-epochs", "1", "--restrict", "hidden=[8,16]", "--restrict", "layers=[1]"];
    ok(&readmit(dir, &args));
    let log = fs::read_to_string(dir.join("hyperopt/rnn/trials.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["trial"], i);
        assert!(l["wall_time_s"].as_f64().unwrap() >= 0.0);
        assert!(l["config"].is_object() && l["epochs"].as_u64().is_some());
    }
    assert!(dir.join("hyperopt/rnn/best_config.json").is_file());

    // a serial rerun logs the same trials
    let again = tempfile::tempdir().unwrap();
    let mut serial: Vec<&str> = args.to_vec();
    serial[6] = "1";
    let out_dir = again.path().to_str().unwrap();
    serial.extend(["--out", out_dir]);
    ok(&readmit(dir, &serial));
    let strip = |s: &str| -> Vec<serde_json::Value> {
        s.lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("wall_time_s");
                v
            })
            .collect()
    };
    let log2 = fs::read_to_string(again.path().join("rnn/trials.jsonl")).unwrap();
    assert_eq!(strip(&log), strip(&log2));

    // the best config trains through `train --config`
    let best = dir.join("hyperopt/rnn/best_config.json");
    ok(&readmit(dir, &["train", "--model", "rnn-lasthf", "--config", best.to_str().unwrap(), "--folds", "2", "--set", "training.max_epochs=1"]));
}
