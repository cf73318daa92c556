use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn marginlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marginlab"))
        .args(args)
        .env_remove("MARGINLAB_THREADS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn small_config(dir: &Path) -> String {
    write(
        dir,
        "small.json",
        r#"{"data": {"per_class": 40}, "training": {"epochs": 12}, "evaluation": {"held_out_per_class": 20, "pairs": 200}}"#,
    )
}

#[test]
fn train_writes_three_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = marginlab(&[
        "train",
        "--seed",
        "1",
        "--quiet",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    for f in ["trace.csv", "model.json", "angular_stats.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(
        trace.lines().next().unwrap(),
        "epoch,loss,train_accuracy,learning_rate"
    );
    assert_eq!(trace.lines().count(), 61);
    let stats = fs::read_to_string(out.join("angular_stats.csv")).unwrap();
    assert_eq!(
        stats.lines().next().unwrap(),
        "class,count,intra_spread,inter_gap"
    );
}

#[test]
fn negative_margin_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.json", r#"{"loss": {"m": -0.1}}"#);
    let o = marginlab(&[
        "train",
        "--config",
        &cfg,
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("loss.m"), "{}", stderr(&o));
    let cfg = write(tmp.path(), "unknown.json", r#"{"training": {"epoch": 3}}"#);
    assert_eq!(code(&marginlab(&["train", "--config", &cfg])), 1);
}

#[test]
fn usage_and_io_exit_codes() {
    assert_eq!(code(&marginlab(&[])), 1);
    assert_eq!(code(&marginlab(&["frobnicate"])), 1);
    assert_eq!(code(&marginlab(&["--help"])), 0);
    assert_eq!(
        code(&marginlab(&["bounds", "--classes", "1", "--dim", "2"])),
        1
    );
    assert_eq!(
        code(&marginlab(&["train", "--config", "/nonexistent/cfg.json"])),
        3
    );
    let o = Command::new(env!("CARGO_BIN_EXE_marginlab"))
        .args(["bounds", "--classes", "8", "--dim", "2"])
        .env("MARGINLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("MARGINLAB_THREADS"));
}

#[test]
fn train_reports_non_convergence() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "huge.json",
        r#"{"loss": {"m": 0.9}, "data": {"per_class": 40}, "training": {"epochs": 12}}"#,
    );
    let o = marginlab(&[
        "train",
        "--config",
        &cfg,
        "--seed",
        "1",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(tmp.path().join("trace.csv").is_file());
}

#[test]
fn toy2d_single_margin() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("toy");
    let o = marginlab(&[
        "toy2d",
        "--config",
        &cfg,
        "--seed",
        "2",
        "--m-grid",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "features_m0_angular.csv",
            "features_m0_euclidean.csv",
            "toy2d_report.json"
        ]
    );

    let angular = fs::read_to_string(out.join("features_m0_angular.csv")).unwrap();
    let mut lines = angular.lines();
    assert_eq!(lines.next().unwrap(), "label,x,y,angle");
    let mut rows = 0;
    for line in lines {
        let v: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|f| f.parse().unwrap())
            .collect();
        assert!((v[0].hypot(v[1]) - 1.0).abs() < 1e-12, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 8 * 40);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("toy2d_report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 1);
    assert_eq!(report["config"]["data"]["per_class"], 40);
}

#[test]
fn toy2d_requires_planar_features() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "k3.json", r#"{"model": {"feature_dim": 3}}"#);
    let o = marginlab(&[
        "toy2d",
        "--config",
        &cfg,
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("model.feature_dim"), "{}", stderr(&o));
}

#[test]
fn msweep_single_row_and_beyond_scope() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("sweep");
    let o = marginlab(&[
        "msweep",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--m-grid",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(out.join("msweep.csv")).unwrap();
    assert_eq!(
        table.lines().next().unwrap(),
        "m,median_accuracy,converged,converged_runs,median_final_loss,beyond_m_scope"
    );
    assert_eq!(table.lines().count(), 2);

    let o = marginlab(&[
        "msweep",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--m-grid",
        "0.9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(out.join("msweep.csv")).unwrap();
    let row: Vec<&str> = table.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], "false");
    assert_eq!(row[5], "true");
    assert_eq!(
        code(&marginlab(&[
            "msweep",
            "--m-grid",
            "1.5",
            "--out",
            out.to_str().unwrap()
        ])),
        1
    );
}

#[test]
fn bounds_report() {
    let o = marginlab(&[
        "bounds",
        "--classes",
        "8",
        "--dim",
        "2",
        "--p-w",
        "0.99",
        "--s",
        "30",
        "--m",
        "0.2",
        "--json",
    ]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((r["s_lower"].as_f64().unwrap() - 5.723).abs() < 1e-3);
    assert!((r["m_upper"].as_f64().unwrap() - 0.2929).abs() < 1e-4);
    assert_eq!(r["s_satisfied"], true);
    assert_eq!(r["m_satisfied"], true);

    let o = marginlab(&["bounds", "--classes", "4", "--dim", "3"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("EXACT"), "{text}");
    assert!(text.contains("1.3333"), "{text}");
}

#[test]
fn regions_csv() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("lmcl.csv");
    let o = marginlab(&[
        "regions",
        "--loss",
        "lmcl",
        "--m",
        "0.35",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("0.494975"), "{text}");
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "cos_theta1,cos_theta2,label");
    assert_eq!(csv.lines().count(), 512 * 512 + 1);

    let nsl = tmp.path().join("nsl.csv");
    assert_eq!(
        code(&marginlab(&[
            "regions",
            "--loss",
            "nsl",
            "--resolution",
            "64",
            "--out",
            nsl.to_str().unwrap()
        ])),
        0
    );
    assert!(!fs::read_to_string(&nsl).unwrap().contains("MARGIN"));
    let soft = tmp.path().join("soft.csv");
    let o = marginlab(&[
        "regions",
        "--loss",
        "softmax",
        "--norms",
        "2,1",
        "--resolution",
        "64",
        "--out",
        soft.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(&soft).unwrap().contains("OVERLAP"));
    assert_eq!(
        code(&marginlab(&[
            "regions",
            "--loss",
            "softmax",
            "--norms",
            "2",
            "--out",
            soft.to_str().unwrap()
        ])),
        1
    );
}

#[test]
fn eval_modes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let feats = write(
        d,
        "f.csv",
        "label,f0,f1\na,1,0\na,0.9,0.1\nb,0,1\nb,0.1,0.9\n",
    );
    let pairs = write(d, "p.csv", "index_a,index_b\n0,1\n2,3\n0,2\n1,3\n");
    let o = marginlab(&[
        "eval",
        "--features",
        &feats,
        "--pairs",
        &pairs,
        "--far",
        "0.5",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["accuracy"], 1.0);
    assert_eq!(r["tar_at_far"][0]["tar"], 1.0);

    let gallery = write(
        d,
        "g.csv",
        "index,role\n0,gallery\n2,gallery\n0,probe\n2,probe\n",
    );
    let out = d.join("id.json");
    let o = marginlab(&[
        "eval",
        "--features",
        &feats,
        "--gallery",
        &gallery,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["rank1"], 1.0);

    let empty = write(d, "empty.csv", "index_a,index_b\n");
    assert_eq!(
        code(&marginlab(&[
            "eval",
            "--features",
            &feats,
            "--pairs",
            &empty
        ])),
        2
    );

    let broken = write(d, "broken.csv", "label,f0,f1\na,1,0\nb,x,1\n");
    let o = marginlab(&["eval", "--features", &broken, "--pairs", &pairs]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    assert_eq!(code(&marginlab(&["eval", "--features", &feats])), 1);
    assert_eq!(
        code(&marginlab(&[
            "eval",
            "--features",
            &d.join("missing.csv").to_string_lossy(),
            "--pairs",
            &pairs
        ])),
        3
    );
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("rep");
    let args = [
        "msweep",
        "--config",
        &cfg,
        "--seed",
        "4",
        "--m-grid",
        "0,0.2",
        "--quiet",
        "--out",
        out.to_str().unwrap(),
    ];
    let read = || {
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().into_string().unwrap(),
                    fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };
    assert_eq!(code(&marginlab(&args)), 0);
    let first = read();
    let o = Command::new(env!("CARGO_BIN_EXE_marginlab"))
        .args(args)
        .env("MARGINLAB_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(read(), first);
    assert_eq!(first.len(), 2);
}
