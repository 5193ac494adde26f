use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ndarray::Array2;
use parapde::fields::{load_dataset, save_dataset, Dataset, Grid1D};
use parapde::Field1D;

fn parapde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parapde"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(
        code(&parapde(&[
            "generate",
            "--model",
            "unknown",
            "--out",
            s(&out)
        ])),
        2
    );
    assert_eq!(
        code(&parapde(&[
            "generate",
            "--model",
            "ks",
            "--out",
            s(&out),
            "--noise",
            "-1"
        ])),
        2
    );
    assert_eq!(
        code(&parapde(&[
            "discover",
            "--data",
            s(&out),
            "--out",
            s(&out),
            "--axis",
            "diagonal"
        ])),
        2
    );
    assert_eq!(
        code(&parapde(&["discover", "--data", s(&out), "--out", s(&out)])),
        2,
        "missing dataset"
    );
    assert_eq!(code(&parapde(&["frobnicate"])), 2);
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "data=a\nout=b\ncolour=red\n").unwrap();
    let o = parapde(&["discover", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_parapde"))
        .args([
            "generate",
            "--model",
            "burgers",
            "--out",
            s(&dir.path().join("b")),
        ])
        .env("PARAPDE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn zero_field_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("flat");
    let grid = Grid1D::periodic(0.0, 1.0, 32, 0.0, 1.0, 32).unwrap();
    let f = Field1D::new(grid, Array2::zeros((32, 32))).unwrap();
    save_dataset(&Dataset::One(f), &base).unwrap();
    let o = parapde(&[
        "discover",
        "--data",
        s(&base),
        "--out",
        s(&dir.path().join("r")),
    ]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn ks_generation_with_noise() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("ks");
    let o = parapde(&[
        "generate",
        "--model",
        "ks",
        "--noise",
        "0.0001",
        "--seed",
        "7",
        "--out",
        s(&base),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let Dataset::One(f) = load_dataset(&base).unwrap() else {
        panic!("1D dataset expected")
    };
    assert_eq!(f.u.dim(), (512, 512));
    assert!(dir.path().join("ks.run.meta").exists());
}

#[test]
fn burgers_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("burgers");
    let o = parapde(&["generate", "--model", "burgers", "--out", s(&data)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let Dataset::One(f) = load_dataset(&data).unwrap() else {
        panic!("1D dataset expected")
    };
    assert_eq!(f.u.dim(), (256, 256));

    let run = dir.path().join("run");
    let o = parapde(&[
        "discover",
        "--data",
        s(&data),
        "--axis",
        "time",
        "--method",
        "sgtr",
        "--out",
        s(&run),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["terms"], serde_json::json!(["u*u_x", "u_xx"]));
    assert_eq!(model["k"], 2);
    assert_eq!(model["method"], "sgtr");
    assert_eq!(model["axis"], "time");
    assert_eq!(model["seed"], 0);
    for key in ["hyperparameter", "loss"] {
        assert!(model[key].is_f64(), "{key}");
    }
    let coeffs = fs::read_to_string(run.join("coeffs.csv")).unwrap();
    let mut lines = coeffs.lines();
    assert_eq!(lines.next(), Some("coord,u*u_x,u_xx"));
    assert_eq!(lines.count(), 254);
    let sweep = fs::read_to_string(run.join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("hyperparameter,loss,k\n"));
    assert_eq!(sweep.lines().count(), 51);

    let rerun = dir.path().join("rerun");
    let o = parapde(&[
        "discover",
        "--config",
        s(&run.join("run.meta")),
        "--out",
        s(&rerun),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for file in ["model.json", "coeffs.csv", "sweep.csv"] {
        assert_eq!(
            fs::read(run.join(file)).unwrap(),
            fs::read(rerun.join(file)).unwrap(),
            "{file}"
        );
    }

    let cmp = dir.path().join("cmp");
    let o = parapde(&[
        "compare",
        "--data",
        s(&data),
        "--out",
        s(&cmp),
        "--count",
        "20",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(cmp.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows[0], "method,k,loss,hyperparameter,terms");
    assert!(rows[1].starts_with("sgtr,2,"));
    assert!(rows[2].starts_with("glasso,"));
    for m in ["sgtr", "glasso"] {
        assert!(cmp.join(m).join("model.json").exists());
    }
    assert!(fs::read_to_string(cmp.join("run.meta"))
        .unwrap()
        .contains("command=compare"));
}
