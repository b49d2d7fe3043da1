use std::path::Path;
use std::process::Command;
use std::time::Instant;

use poirec::commands::{cmd_ablate, cmd_eval, cmd_gen, cmd_gradcheck, cmd_train};
use poirec::{CliError, RunConfig};
use poirec_core::interactions::parse_checkins;
use poirec_core::ukg::parse_triplets;
use serde_json::Value;

fn tiny(dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_text(
        "n_users = 40\nn_pois = 120\nn_brands = 15\ninteractions_per_user = 8\ndim = 8\nn_layers = 2\nbatch_size = 128\n",
    )
    .unwrap();
    cfg.out_dir = dir.to_path_buf();
    cfg
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_poirec"))
}

fn json_lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn gen_writes_three_reloadable_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.out_dir = dir.path().to_path_buf();
    let out = cmd_gen(&cfg).unwrap();
    let kg = parse_triplets(&std::fs::read_to_string(&out.kg).unwrap()).unwrap();
    kg.validate().unwrap();
    assert_eq!(kg.triplets().len(), out.tally.geographical + out.tally.functional);
    let checkins = parse_checkins(&std::fs::read_to_string(&out.checkins).unwrap()).unwrap();
    assert_eq!(checkins.n_users(), 500);
    assert!(out.truth.exists() && out.echo.exists());
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    cmd_gen(&tiny(a.path())).unwrap();
    cmd_gen(&tiny(b.path())).unwrap();
    for f in ["kg.tsv", "checkins.tsv", "truth.txt"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn invalid_city_is_a_single_line_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["gen", "--set", "n_pois=0", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.trim_end().lines().count(), 1);
    let v: Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(v["error"], "config");
}

#[test]
fn missing_kg_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    match cmd_train(&tiny(dir.path())) {
        Err(CliError::MissingFile(p)) => assert!(p.ends_with("kg.tsv")),
        other => panic!("{other:?}"),
    }
    let out = bin().args(["train", "--out"]).arg(dir.path()).output().unwrap();
    let v: Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"], "missing_file");
    assert!(v["message"].as_str().unwrap().contains("kg.tsv"));
}

#[test]
fn one_epoch_train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cmd_gen(&cfg).unwrap();
    cfg.hp.max_epochs = 1;
    let t = Instant::now();
    let out = cmd_train(&cfg).unwrap();
    assert!(t.elapsed().as_secs() < 60);
    let log = json_lines(&out.log);
    assert_eq!(log.len(), 1);
    for key in ["epoch", "l_f", "l_c", "l_ind_g", "l_ind_f", "total", "val_recall20", "wall_secs"] {
        assert!(log[0].get(key).is_some(), "{key}");
    }

    let eval = cmd_eval(&cfg).unwrap();
    assert_eq!(eval.record.val_recall20, log[0]["val_recall20"].as_f64().unwrap());
    let line: Value = serde_json::from_str(&std::fs::read_to_string(&eval.path).unwrap()).unwrap();
    for k in [20, 40, 60] {
        assert!(line.get(format!("recall@{k}")).is_some() && line.get(format!("ndcg@{k}")).is_some());
    }
}

#[test]
fn scorers_differ_only_in_scorer_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.hp.max_epochs = 2;
    cmd_gen(&cfg).unwrap();
    cmd_train(&cfg).unwrap();
    let tie = cmd_eval(&cfg).unwrap().record.to_json();
    cfg.apply_override("scorer=te").unwrap();
    let te = cmd_eval(&cfg).unwrap().record.to_json();
    let (a, b) = (tie.as_object().unwrap(), te.as_object().unwrap());
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    let changed: Vec<&String> = a.keys().filter(|k| a[*k] != b[*k]).collect();
    assert!(changed.contains(&&"scorer".to_string()));
    for k in changed {
        let metric = k.contains('@') || k == "auc";
        assert!(k == "scorer" || metric, "unexpected difference in {k}");
    }
}

#[test]
fn eval_rejects_checkpoint_with_other_dims() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.hp.max_epochs = 1;
    cmd_gen(&cfg).unwrap();
    cmd_train(&cfg).unwrap();
    cfg.dim = 6;
    let err = cmd_eval(&cfg).unwrap_err();
    assert_eq!(err.kind(), "dims_mismatch");
    let msg = err.to_string();
    assert!(msg.contains("d=6") && msg.contains("d=8"), "{msg}");
}

#[test]
fn ablation_has_three_rows_and_unsplit_bookkeeping() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.hp.max_epochs = 2;
    cmd_gen(&cfg).unwrap();
    let out = cmd_ablate(&cfg).unwrap();
    let names: Vec<&str> = out.rows.iter().map(|r| r.variant).collect();
    assert_eq!(names, ["full", "te_only", "no_disentangle"]);
    for row in &out.rows {
        for k in [20, 40, 60] {
            assert!(row.record.report.recall.contains_key(&k) && row.record.report.ndcg.contains_key(&k));
        }
    }
    let nd = &out.rows[2];
    assert_eq!((nd.geo_triplets, nd.func_triplets), (nd.kg_triplets, nd.kg_triplets));
    assert_eq!(out.rows[0].geo_triplets + out.rows[0].func_triplets, out.rows[0].kg_triplets);
    let lines = json_lines(&out.path);
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2]["graphs"], "unsplit");
    assert_eq!(out.table.lines().count(), 4);
}

#[test]
fn gradcheck_reports_worst_coordinates_and_catches_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.out_dir = dir.path().to_path_buf();
    let ok = cmd_gradcheck(&cfg, None).unwrap();
    assert!(ok.report.passed && ok.report.max_rel_err < 1e-4);
    let lines = json_lines(&ok.path);
    assert_eq!(lines.len(), 7);
    for l in &lines[..6] {
        assert!(l.get("worst_row").is_some() && l.get("worst_col").is_some());
    }
    assert_eq!(lines[6]["result"], "PASS");

    let bad = bin().args(["gradcheck", "--corrupt", "E_f", "--out"]).arg(dir.path()).output().unwrap();
    let text = String::from_utf8(bad.stdout).unwrap();
    let last: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["result"], "FAIL");
    assert_eq!(last["worst_tensor"], "E_f");
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    std::fs::write(&file, "seed = 3\nlr = 0.01\n").unwrap();
    let status = bin()
        .args(["gradcheck", "--seed", "5", "--set", "lr=0.002", "--config"])
        .arg(&file)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let mut echoed = RunConfig::default();
    echoed.apply_text(&std::fs::read_to_string(dir.path().join("gradcheck.config")).unwrap()).unwrap();
    assert_eq!(echoed.seed, 5);
    assert_eq!(echoed.hp.lr, 0.002);
}
