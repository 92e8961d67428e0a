use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_meshquery");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"{"version": 1, "benchmark": "ambiguity",
  "ambiguity": {"pairs": 1, "train_points": 30, "test_points": 20},
  "model": {"d_emb": 4, "patch_size": 4, "d_model": 8, "n_encoder": 1, "n_decoder": 1, "n_head": 2, "out_dim": 1,
            "attention": "dot_product"},
  "train": {"epochs": 3, "batch_size": 2}}"#;

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), SMALL).unwrap();
    let o = run(dir.path(), &["gen", "ambiguity", "--config", "cfg.json", "--out", "ds"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir
}

#[test]
fn gen_train_eval_query_pipeline() {
    let dir = setup();
    let d = dir.path();
    let o = run(d, &["train", "--config", "cfg.json", "--data", "ds", "--out", "run"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["checkpoint.json", "train_log.csv", "config.json"] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }
    let log = fs::read_to_string(d.join("run/train_log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,total,data,val_rel_l2,wall_s"));
    assert_eq!(log.lines().count(), 4);

    let o = run(d, &["eval", "--checkpoint", "run/checkpoint.json", "--data", "ds", "--out", "ev.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("field,rel_l2") && stdout.contains("\nT,"), "{stdout}");
    let ev = fs::read_to_string(d.join("ev.csv")).unwrap();
    assert_eq!(ev.lines().next(), Some("instance,x,y,T_pred,T_true,T_abs_err"));
    assert_eq!(ev.lines().count(), 1 + 2 * 20);

    let o = run(d, &["query", "--checkpoint", "run/checkpoint.json", "--data", "ds", "--instance", "test:1", "--resolution", "4x3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().next(), Some("x,y,T"));
    assert_eq!(out.lines().count(), 1 + 12);
}

#[test]
fn query_keeps_order_and_warns_outside_box() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(code(&run(d, &["train", "--config", "cfg.json", "--data", "ds", "--out", "run", "--epochs", "0"])), 0);
    fs::write(d.join("pts.csv"), "x,y\n4.0,0.5\n9.0,0.5\n1.0,0.25\n").unwrap();
    let o = run(d, &["query", "--checkpoint", "run/checkpoint.json", "--data", "ds", "--instance", "train:0", "--points", "pts.csv", "--out", "q.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("1 of 3 points lie outside"), "{}", stderr(&o));
    let q = fs::read_to_string(d.join("q.csv")).unwrap();
    let xs: Vec<&str> = q.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(xs, ["4", "9", "1"]);
}

#[test]
fn training_is_reproducible_and_config_round_trips() {
    let dir = setup();
    let d = dir.path();
    for out in ["a", "b"] {
        let o = run(d, &["train", "--config", "cfg.json", "--data", "ds", "--out", out, "--seed", "5"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let strip = |p: &str| -> Vec<String> {
        fs::read_to_string(d.join(p)).unwrap().lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
    };
    assert_eq!(strip("a/train_log.csv"), strip("b/train_log.csv"));
    assert_eq!(fs::read(d.join("a/checkpoint.json")).unwrap(), fs::read(d.join("b/checkpoint.json")).unwrap());

    // the resolved config reproduces itself
    let o = run(d, &["train", "--config", "a/config.json", "--out", "c", "--epochs", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(d.join("a/config.json")).unwrap(), fs::read_to_string(d.join("c/config.json")).unwrap());
    assert_eq!(strip("a/train_log.csv"), strip("c/train_log.csv"));
}

#[test]
fn exit_codes() {
    let dir = setup();
    let d = dir.path();

    fs::write(d.join("bad.json"), r#"{"version": 1, "benchmark": "ambiguity", "learning_rate": 0.1}"#).unwrap();
    assert_eq!(code(&run(d, &["train", "--config", "bad.json", "--out", "x"])), 2);
    assert_eq!(code(&run(d, &["train", "--config", "cfg.json", "--out", "x", "--precision", "16"])), 2);
    assert_eq!(code(&run(d, &["train", "--out", "x"])), 2);
    assert_eq!(code(&run(d, &["eval", "--checkpoint", "missing.json", "--data", "ds"])), 4);
    assert_eq!(code(&run(d, &["gen", "ambiguity", "--config", "missing.json", "--out", "y"])), 4);

    let diverging = SMALL.replace(r#""epochs": 3"#, r#""epochs": 3, "lr": 1e200"#);
    fs::write(d.join("div.json"), diverging).unwrap();
    let o = run(d, &["train", "--config", "div.json", "--data", "ds", "--out", "div"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(d.join("div/last_good.json").exists());
    assert!(!d.join("div/checkpoint.json").exists());
}

#[test]
fn attention_export_needs_dot_product() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(code(&run(d, &["train", "--config", "cfg.json", "--data", "ds", "--out", "dp", "--epochs", "0"])), 0);
    let o = run(d, &["export-attn", "--checkpoint", "dp/checkpoint.json", "--data", "ds", "--instance", "test:0", "--random", "3", "--out", "attn.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(d.join("attn.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("layer,head,query,token,weight"));
    // each (layer, head, query) row sums to one
    let mut sums = std::collections::BTreeMap::<(String, String, String), f64>::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        *sums.entry((f[0].into(), f[1].into(), f[2].into())).or_default() += f[4].parse::<f64>().unwrap();
    }
    assert_eq!(sums.len(), 2 * 3);
    assert!(sums.values().all(|s| (s - 1.0).abs() < 1e-9));

    fs::write(d.join("lin.json"), SMALL.replace("dot_product", "linear")).unwrap();
    assert_eq!(code(&run(d, &["train", "--config", "lin.json", "--data", "ds", "--out", "lin", "--epochs", "0"])), 0);
    let o = run(d, &["export-attn", "--checkpoint", "lin/checkpoint.json", "--data", "ds", "--instance", "test:0", "--random", "3", "--out", "a2.csv"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn mesh_file_query() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(code(&run(d, &["train", "--config", "cfg.json", "--data", "ds", "--out", "run", "--epochs", "0"])), 0);
    fs::write(d.join("mesh.csv"), "x,y,dirichlet\n0,0,1.0\n1,0,\n0,1,0.0\n1,1,\n").unwrap();
    let o = run(d, &["query", "--checkpoint", "run/checkpoint.json", "--mesh", "mesh.csv", "--random", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 6);
    let o = run(d, &["query", "--checkpoint", "run/checkpoint.json", "--mesh", "mesh.csv", "--resolution", "0x3"]);
    assert_eq!(code(&o), 2);
}
