use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fbs_unroll::experiments::{gen_dataset, DataSpec};
use fbs_unroll::io::{read_dataset, read_network_params, RunManifest};
use fbs_unroll::learning::TrainConfig;
use fbs_unroll_cli::config::{load_config, RunConfig};

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbs-unroll"))
        .args(args)
        .current_dir(dir)
        .env_remove("FBS_UNROLL_THREADS")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = bin(dir, args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| l.starts_with('{')).collect();
    assert_eq!(lines.len(), 1, "{text}");
    serde_json::from_str(lines[0]).unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Tiny config so that every subcommand finishes in well under a second.
const SMALL: &str = r#"
[data]
m = 4
n = 12
train = 24
val = 6
[train]
epochs = 4
batch_size = 10
r0 = 1e-3
alpha0 = 1.0
[network]
depth = 4
[sweep]
layers = [2, 4, 8]
[gamma]
layers = [4, 8, 16]
n_ref = 128
grid = 32
[limit]
n_ref = 64
[stability]
depth = 3
count = 3
targets = ["x0", "y"]
"#;

fn small_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

#[test]
fn gen_data_example_writes_dataset_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "gen-data",
            "--m",
            "32",
            "--n",
            "128",
            "--train",
            "512",
            "--val",
            "64",
            "--sparsity",
            "0.1",
            "--noise",
            "0.01",
            "--seed",
            "7",
            "--out",
            "data.bin",
        ],
    );
    let data = read_dataset(&dir.path().join("data.bin")).unwrap();
    assert_eq!(data, gen_dataset(&DataSpec::default()).unwrap());

    let header: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("data.json")).unwrap()).unwrap();
    assert_eq!(header["manifest"], "data.bin.manifest.json");
    let m = RunManifest::read(&dir.path().join("data.bin.manifest.json")).unwrap();
    assert_eq!(m.command, "gen-data");
    assert_eq!(m.seed, 7);
    assert_eq!(m.config_hash.len(), 64);
    assert!(m.finished_unix.unwrap() >= m.started_unix);
    assert_eq!(m.outputs, ["data.bin", "data.json"]);
    assert!(m.code_version.starts_with("fbs-unroll-cli "));
}

#[test]
fn sweep_and_plot_examples() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(configs().join("desk.toml"), dir.path().join("desk.toml")).unwrap();
    // the shipped config with a short run; the schema is what is checked
    ok(
        dir.path(),
        &[
            "sweep-depth",
            "--layers",
            "4,8,16,32",
            "--config",
            "desk.toml",
            "--epochs",
            "2",
            "--out",
            "sweep.csv",
        ],
    );
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "N,final_train_objective,final_train_data_loss,final_val_data_loss,status"
    );
    assert_eq!(lines.len(), 5);
    for (line, n) in lines[1..].iter().zip(["4", "8", "16", "32"]) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!((f[0], f[4]), (n, "ok"));
        assert!(f[1..4].iter().all(|v| v.parse::<f64>().unwrap().is_finite()));
    }

    ok(
        dir.path(),
        &[
            "plot",
            "--in",
            "sweep.csv",
            "--out",
            "sweep.svg",
            "--x",
            "N",
            "--y",
            "final_train_data_loss",
        ],
    );
    let svg = std::fs::read_to_string(dir.path().join("sweep.svg")).unwrap();
    assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
    assert_eq!(svg.matches("<circle").count(), 4);
    assert!(dir.path().join("sweep.svg.manifest.json").exists());
}

#[test]
fn usage_errors_exit_1_with_a_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(dir.path(), &["sweep-depth", "--lyers", "4", "--out", "s.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let e = stderr_json(&out);
    assert_eq!(e["error"], "usage");
    assert!(e["message"].as_str().unwrap().contains("--layers"), "{e}");

    let out = bin(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "usage");

    assert_eq!(bin(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(bin(dir.path(), &["--version"]).status.code(), Some(0));
    assert_eq!(bin(dir.path(), &["train", "--help"]).status.code(), Some(0));
}

#[test]
fn missing_files_are_named() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["train", "--data", "nope.bin", "--out", "c.csv"][..],
        &["train", "--config", "nope.toml", "--out", "c.csv"][..],
        &["plot", "--in", "nope.csv", "--out", "p.svg", "--x", "a", "--y", "b"][..],
    ] {
        let out = bin(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let e = stderr_json(&out);
        assert_eq!(e["error"], "io");
        assert!(e["message"].as_str().unwrap().contains("nope."), "{e}");
    }
}

#[test]
fn config_errors_name_the_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[objective]\nbeta1 = -1.0\n").unwrap();
    let out = bin(dir.path(), &["train", "--config", "bad.toml", "--out", "c.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let e = stderr_json(&out);
    assert_eq!(e["error"], "config");
    assert!(e["message"].as_str().unwrap().contains("beta1 must be ≥ 0"), "{e}");

    std::fs::write(dir.path().join("typo.toml"), "[train]\n\nepohcs = 3\n").unwrap();
    let e = stderr_json(&bin(dir.path(), &["train", "--config", "typo.toml", "--out", "c.csv"]));
    let msg = e["message"].as_str().unwrap();
    assert!(msg.contains("line 3") && msg.contains("epohcs"), "{msg}");
    assert!(!dir.path().join("c.csv").exists());
}

#[test]
fn divergence_exits_2() {
    let dir = small_dir();
    let out = bin(
        dir.path(),
        &["train", "--config", "small.toml", "--r0", "1e30", "--out", "c.csv"],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_json(&out)["error"], "numeric");
    // the manifest records the failure
    let m = RunManifest::read(&dir.path().join("c.csv.manifest.json")).unwrap();
    assert!(m.finished_unix.is_some());
    assert!(m.notes["error"].as_str().unwrap().contains("diverged"));
}

#[test]
fn shipped_configs_parse() {
    assert_eq!(
        load_config(Some(&configs().join("desk.toml"))).unwrap(),
        RunConfig::default()
    );
    let full = load_config(Some(&configs().join("paper_full.toml"))).unwrap();
    assert_eq!(full.data, DataSpec::full_scale());
    assert_eq!(full.train, TrainConfig::full_scale());
    assert_eq!(full.sweep.layers, [5, 10, 15, 20, 25]);
    assert_eq!(
        [full.objective.beta1, full.objective.beta2, full.objective.beta3],
        [1e-7; 3]
    );
    assert_eq!((full.train.alpha0, full.train.lambda0), (10.0, 0.05));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.toml"), "").unwrap();
    assert_eq!(
        load_config(Some(&dir.path().join("empty.toml"))).unwrap(),
        RunConfig::default()
    );
}

#[test]
fn rerun_from_manifest_is_bitwise() {
    let dir = small_dir();
    ok(dir.path(), &["gen-data", "--config", "small.toml", "--out", "d.bin"]);
    ok(
        dir.path(),
        &[
            "train",
            "--config",
            "small.toml",
            "--data",
            "d.bin",
            "--out",
            "c.csv",
            "--params",
            "p.bin",
        ],
    );
    let curve = std::fs::read(dir.path().join("c.csv")).unwrap();
    let params = std::fs::read(dir.path().join("p.bin")).unwrap();
    // the config file is no longer needed
    std::fs::remove_file(dir.path().join("small.toml")).unwrap();
    std::fs::remove_file(dir.path().join("c.csv")).unwrap();
    std::fs::remove_file(dir.path().join("p.bin")).unwrap();
    ok(dir.path(), &["rerun", "--manifest", "c.csv.manifest.json"]);
    assert_eq!(std::fs::read(dir.path().join("c.csv")).unwrap(), curve);
    assert_eq!(std::fs::read(dir.path().join("p.bin")).unwrap(), params);
    let p = read_network_params(&dir.path().join("p.bin")).unwrap();
    assert_eq!(p.a.len(), 4);

    // tampering with the stored config is detected
    let path = dir.path().join("c.csv.manifest.json");
    let text = std::fs::read_to_string(&path)
        .unwrap()
        .replace("\"epochs\": 4", "\"epochs\": 5");
    std::fs::write(&path, text).unwrap();
    let out = bin(dir.path(), &["rerun", "--manifest", "c.csv.manifest.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("config_hash"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = small_dir();
    let run = |threads: &str, out: &str| {
        ok(
            dir.path(),
            &[
                "sweep-depth",
                "--config",
                "small.toml",
                "--threads",
                threads,
                "--out",
                out,
                "--curves",
                &format!("{out}.curves"),
            ],
        );
        (
            std::fs::read(dir.path().join(out)).unwrap(),
            std::fs::read(dir.path().join(format!("{out}.curves"))).unwrap(),
        )
    };
    let one = run("1", "s1.csv");
    let four = run("4", "s4.csv");
    assert_eq!(one, four);

    let env4 = Command::new(env!("CARGO_BIN_EXE_fbs-unroll"))
        .args(["stability", "--config", "small.toml", "--out", "e4.csv"])
        .current_dir(dir.path())
        .env("FBS_UNROLL_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(env4.status.code(), Some(0));
    ok(
        dir.path(),
        &[
            "stability",
            "--config",
            "small.toml",
            "--threads",
            "1",
            "--out",
            "e1.csv",
        ],
    );
    for t in ["x0", "y"] {
        assert_eq!(
            std::fs::read(dir.path().join(format!("e1.{t}.csv"))).unwrap(),
            std::fs::read(dir.path().join(format!("e4.{t}.csv"))).unwrap()
        );
    }
}

#[test]
fn train_matches_the_sweep_row_of_the_same_depth() {
    let dir = small_dir();
    ok(
        dir.path(),
        &[
            "sweep-depth",
            "--config",
            "small.toml",
            "--out",
            "s.csv",
            "--curves",
            "curves.csv",
        ],
    );
    ok(
        dir.path(),
        &["train", "--config", "small.toml", "--depth", "4", "--out", "c.csv"],
    );
    let curves = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    let train = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    let from_sweep: Vec<String> = curves
        .lines()
        .skip(1)
        .filter_map(|l| l.strip_prefix("4,").map(str::to_string))
        .collect();
    let direct: Vec<String> = train.lines().skip(1).map(str::to_string).collect();
    assert_eq!(from_sweep, direct);
}

#[test]
fn limit_gamma_and_stability_run_end_to_end() {
    let dir = small_dir();
    ok(
        dir.path(),
        &["train", "--config", "small.toml", "--out", "c.csv", "--params", "p.bin"],
    );
    let out = ok(
        dir.path(),
        &[
            "limit-eval",
            "--config",
            "small.toml",
            "--control",
            "p.bin",
            "--split",
            "val",
            "--out",
            "limit.csv",
        ],
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("6 samples"));
    let limit = std::fs::read_to_string(dir.path().join("limit.csv")).unwrap();
    assert_eq!(limit.lines().next(), Some("sample,data_loss,err_est"));
    assert_eq!(limit.lines().count(), 7);

    ok(dir.path(), &["gamma-check", "--config", "small.toml", "--out", "g.csv"]);
    let gamma = std::fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert_eq!(gamma.lines().next(), Some("N,value,gap"));
    let gaps: Vec<f64> = gamma
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(gaps.len(), 3);
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");

    ok(
        dir.path(),
        &[
            "gamma-check",
            "--config",
            "small.toml",
            "--control",
            "p.bin",
            "--layers",
            "8,16",
            "--out",
            "g2.csv",
        ],
    );

    ok(
        dir.path(),
        &[
            "stability",
            "--config",
            "small.toml",
            "--target",
            "b",
            "--out",
            "st.csv",
        ],
    );
    let st = std::fs::read_to_string(dir.path().join("st.csv")).unwrap();
    let rows: Vec<&str> = st.lines().collect();
    assert_eq!(rows[0], "r,magnitude,optimal_value_gap,solution_distance_lp");
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[1], "0,0,0,0");

    ok(
        dir.path(),
        &[
            "plot",
            "--in",
            "st.csv",
            "--out",
            "st.svg",
            "--x",
            "magnitude",
            "--y",
            "optimal_value_gap",
            "--log-y",
        ],
    );
    let m = RunManifest::read(&dir.path().join("st.csv.manifest.json")).unwrap();
    assert_eq!(m.outputs, ["st.csv"]);
}

#[test]
fn plot_groups_and_bad_columns() {
    let dir = small_dir();
    ok(
        dir.path(),
        &[
            "sweep-depth",
            "--config",
            "small.toml",
            "--out",
            "s.csv",
            "--curves",
            "curves.csv",
        ],
    );
    ok(
        dir.path(),
        &[
            "plot",
            "--in",
            "curves.csv",
            "--out",
            "c.svg",
            "--x",
            "epoch",
            "--y",
            "train_data_loss",
            "--group",
            "N",
        ],
    );
    let svg = std::fs::read_to_string(dir.path().join("c.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
    assert!(svg.contains("N = 8"));

    let out = bin(
        dir.path(),
        &["plot", "--in", "s.csv", "--out", "x.svg", "--x", "N", "--y", "nope"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["message"]
        .as_str()
        .unwrap()
        .contains("no column 'nope'"));
}
