mod common;

use common::*;
use fbs_unroll::dynamics::{extend_params, Control};
use fbs_unroll::experiments::{gen_dataset, DataSpec};
use fbs_unroll::io::*;
use fbs_unroll::learning::CurvePoint;
use fbs_unroll::Error;

#[test]
fn parameters_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let p = random_params(&mut rng(50), 5, 3, 4, 1.5);
    let path = dir.path().join("p.bin");
    write_network_params(&path, &p, Some("run.manifest.json")).unwrap();
    assert_eq!(read_network_params(&path).unwrap(), p);
    assert_eq!(read_network_params(&dir.path().join("p.json")).unwrap(), p);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes.len(), 8 * 5 * (12 + 2));
    assert_eq!(&bytes[..8], &p.a[0][[0, 0]].to_le_bytes());
    assert_eq!(&bytes[8..16], &p.a[0][[0, 1]].to_le_bytes());
    let header: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("p.json")).unwrap()).unwrap();
    assert_eq!(header["kind"], "network_params");
    assert_eq!(header["cells"], 5);
    assert_eq!(header["manifest"], "run.manifest.json");
}

#[test]
fn controls_round_trip_and_accept_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let u = random_control(&mut rng(51), 7, 2, 2, 1.0);
    let path = dir.path().join("u.bin");
    write_control(&path, &u, None).unwrap();
    assert_eq!(read_control(&path).unwrap(), u);
    assert!(read_network_params(&path).is_err());

    let p = random_params(&mut rng(52), 3, 2, 2, 1.0);
    write_network_params(&path, &p, None).unwrap();
    let as_control: Control = read_control(&path).unwrap();
    assert_eq!(as_control, extend_params(&p));
}

#[test]
fn datasets_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(&DataSpec {
        m: 3,
        n: 7,
        train: 5,
        val: 2,
        ..Default::default()
    })
    .unwrap();
    let path = dir.path().join("d.bin");
    write_dataset(&path, &data, None).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), data);
}

#[test]
fn corrupt_or_missing_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.bin");
    let err = read_dataset(&missing).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("nope.json"));

    let p = random_params(&mut rng(53), 2, 2, 2, 1.0);
    let path = dir.path().join("p.bin");
    write_network_params(&path, &p, None).unwrap();
    std::fs::write(&path, [0u8; 13]).unwrap();
    assert!(matches!(read_network_params(&path), Err(Error::Format { .. })));
    assert!(write_network_params(&dir.path().join("p.json"), &p, None).is_err());
}

#[test]
fn curve_csv_is_exact_and_reparses() {
    let curve = vec![
        CurvePoint {
            epoch: 1,
            train_objective: 0.1,
            train_data_loss: 1.0 / 3.0,
            val_data_loss: 2.5e-7,
        },
        CurvePoint {
            epoch: 2,
            train_objective: 1e300,
            train_data_loss: 0.0,
            val_data_loss: -1.5,
        },
    ];
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, &curve).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(!text.contains('\r'));
    assert_eq!(
        text.lines().next().unwrap(),
        "epoch,train_objective,train_data_loss,val_data_loss"
    );
    assert_eq!(
        text.lines().nth(1).unwrap(),
        "1,0.10000000000000001,0.33333333333333331,2.4999999999999999e-07"
    );
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    for (rec, c) in rdr.records().zip(&curve) {
        let rec = rec.unwrap();
        assert_eq!(rec[0].parse::<usize>().unwrap(), c.epoch);
        assert_eq!(rec[1].parse::<f64>().unwrap(), c.train_objective);
        assert_eq!(rec[2].parse::<f64>().unwrap(), c.train_data_loss);
        assert_eq!(rec[3].parse::<f64>().unwrap(), c.val_data_loss);
    }
}

#[test]
fn manifest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let m = RunManifest {
        manifest_version: 1,
        command: "train".into(),
        argv: vec!["fbs-unroll".into(), "train".into()],
        config: serde_json::json!({"train": {"epochs": 3}}),
        config_hash: "ab".into(),
        seed: 7,
        started_unix: 1,
        finished_unix: Some(2),
        outputs: vec!["out.csv".into()],
        code_version: "v0".into(),
        notes: serde_json::Value::Null,
    };
    let path = manifest_path(&dir.path().join("out.csv"));
    assert!(path.ends_with("out.csv.manifest.json"));
    m.write(&path).unwrap();
    assert_eq!(RunManifest::read(&path).unwrap(), m);
    assert!(!dir.path().join("out.csv.manifest.json.tmp").exists());
}
