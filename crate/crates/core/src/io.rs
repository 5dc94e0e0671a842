//! On-disk formats.
//!
//! Parameters, controls and datasets are stored as a JSON header next to a
//! raw payload of little-endian `f64` values. For a payload `run.bin` the
//! header is `run.json`; the header names the payload file and its length.
//!
//! Payload layouts (all matrices row-major):
//!
//! - `network_params` / `control` with `cells = K`: `A_0 .. A_{K-1}` (each
//!   `m x n`), then `alpha[K]`, then `lambda[K]`.
//! - `dataset`: `A_true` (`m x n`), then for each sample in split order
//!   `x0[n]`, `b[m]`, `y[n]`.
//!
//! Tables are RFC 4180 CSV with LF line endings and `%.17g` floats.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dynamics::{extend_params, CellParams, Control, NetworkParams};
use crate::error::{Error, Result};
use crate::experiments::{GammaCheck, RowStatus, StabilityRow, SweepResult};
use crate::learning::{CurvePoint, Dataset, GenMeta, Sample};

pub const FORMAT_NAME: &str = "fbs-unroll";
pub const FORMAT_VERSION: u32 = 1;

const CELLS_LAYOUT: &str = "A[cells][m][n] row-major, alpha[cells], lambda[cells]; f64 little-endian";
const DATASET_LAYOUT: &str = "A_true[m][n] row-major, then per sample: x0[n], b[m], y[n]; f64 little-endian";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    NetworkParams,
    Control,
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadHeader {
    pub format: String,
    pub version: u32,
    pub kind: PayloadKind,
    pub m: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Payload file name, relative to the header's directory.
    pub payload: String,
    /// Number of `f64` values in the payload.
    pub payload_len: usize,
    pub layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

/// Header path for a payload path (or the path itself if it is a header).
pub fn header_path(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "json") {
        path.to_path_buf()
    } else {
        path.with_extension("json")
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn encode(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn decode(path: &Path, bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("payload length {} is not a multiple of 8", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn payload_path(header: &Path, payload: &str) -> PathBuf {
    header.parent().unwrap_or(Path::new("")).join(payload)
}

fn write_payload(path: &Path, mut header: PayloadHeader, values: &[f64]) -> Result<()> {
    let hpath = header_path(path);
    if hpath == path {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "payload path must not end in .json".into(),
        });
    }
    header.payload = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    header.payload_len = values.len();
    write_atomic(path, &encode(values))?;
    let json = serde_json::to_vec_pretty(&header).expect("header serializes");
    write_atomic(&hpath, &json)
}

fn read_payload(path: &Path) -> Result<(PayloadHeader, Vec<f64>)> {
    let hpath = header_path(path);
    let text = fs::read_to_string(&hpath).map_err(|e| Error::io(&hpath, e))?;
    let header: PayloadHeader = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: hpath.clone(),
        msg: e.to_string(),
    })?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(Error::Format {
            path: hpath,
            msg: format!("unsupported format {} v{}", header.format, header.version),
        });
    }
    let ppath = payload_path(&hpath, &header.payload);
    let bytes = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    let values = decode(&ppath, &bytes)?;
    if values.len() != header.payload_len {
        return Err(Error::Format {
            path: ppath,
            msg: format!("expected {} values, found {}", header.payload_len, values.len()),
        });
    }
    Ok((header, values))
}

fn cells_header(kind: PayloadKind, p: &impl CellParams, manifest: Option<&str>) -> PayloadHeader {
    let (m, n) = p.dims();
    PayloadHeader {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        kind,
        m,
        n,
        horizon: Some(p.horizon()),
        cells: Some(p.cells()),
        train: None,
        val: None,
        sparsity: None,
        noise_sigma: None,
        seed: None,
        payload: String::new(),
        payload_len: 0,
        layout: CELLS_LAYOUT.into(),
        manifest: manifest.map(str::to_owned),
    }
}

fn cells_values(p: &impl CellParams) -> Vec<f64> {
    let mut v = Vec::new();
    for k in 0..p.cells() {
        v.extend(p.a(k).iter());
    }
    v.extend((0..p.cells()).map(|k| p.alpha(k)));
    v.extend((0..p.cells()).map(|k| p.lambda(k)));
    v
}

type RawCells = (f64, Vec<Array2<f64>>, Vec<f64>, Vec<f64>);

fn split_cells(path: &Path, header: &PayloadHeader, values: &[f64]) -> Result<RawCells> {
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let (m, n) = (header.m, header.n);
    let cells = header.cells.ok_or_else(|| bad("header lacks `cells`".into()))?;
    let horizon = header.horizon.ok_or_else(|| bad("header lacks `horizon`".into()))?;
    if values.len() != cells * (m * n + 2) {
        return Err(bad(format!(
            "payload has {} values for {cells} cells of {m}x{n}",
            values.len()
        )));
    }
    let (mats, scalars) = values.split_at(cells * m * n);
    let a = mats
        .chunks_exact(m * n)
        .map(|c| Array2::from_shape_vec((m, n), c.to_vec()).expect("chunk size"))
        .collect();
    Ok((horizon, a, scalars[..cells].to_vec(), scalars[cells..].to_vec()))
}

pub fn write_network_params(path: &Path, p: &NetworkParams, manifest: Option<&str>) -> Result<()> {
    write_payload(
        path,
        cells_header(PayloadKind::NetworkParams, p, manifest),
        &cells_values(p),
    )
}

pub fn write_control(path: &Path, u: &Control, manifest: Option<&str>) -> Result<()> {
    write_payload(path, cells_header(PayloadKind::Control, u, manifest), &cells_values(u))
}

pub fn read_network_params(path: &Path) -> Result<NetworkParams> {
    let (header, values) = read_payload(path)?;
    if header.kind != PayloadKind::NetworkParams {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("expected network_params, found {:?}", header.kind),
        });
    }
    let (h, a, al, la) = split_cells(path, &header, &values)?;
    NetworkParams::new(h, a, al, la)
}

/// Reads a control; network parameters are accepted and extended.
pub fn read_control(path: &Path) -> Result<Control> {
    let (header, values) = read_payload(path)?;
    let (h, a, al, la) = split_cells(path, &header, &values)?;
    match header.kind {
        PayloadKind::Control => Control::new(h, a, al, la),
        PayloadKind::NetworkParams => Ok(extend_params(&NetworkParams::new(h, a, al, la)?)),
        PayloadKind::Dataset => Err(Error::Format {
            path: path.to_path_buf(),
            msg: "expected a control or network parameters, found a dataset".into(),
        }),
    }
}

pub fn write_dataset(path: &Path, d: &Dataset, manifest: Option<&str>) -> Result<()> {
    let header = PayloadHeader {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        kind: PayloadKind::Dataset,
        m: d.m,
        n: d.n,
        horizon: None,
        cells: None,
        train: Some(d.train_count),
        val: Some(d.val_count),
        sparsity: Some(d.meta.sparsity),
        noise_sigma: Some(d.meta.noise_sigma),
        seed: Some(d.meta.seed),
        payload: String::new(),
        payload_len: 0,
        layout: DATASET_LAYOUT.into(),
        manifest: manifest.map(str::to_owned),
    };
    let mut v: Vec<f64> = d.meta.a_true.iter().copied().collect();
    for s in &d.samples {
        v.extend(s.x0.iter());
        v.extend(s.b.iter());
        v.extend(s.y.iter());
    }
    write_payload(path, header, &v)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let (header, values) = read_payload(path)?;
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    if header.kind != PayloadKind::Dataset {
        return Err(bad(format!("expected dataset, found {:?}", header.kind)));
    }
    let (m, n) = (header.m, header.n);
    let train = header.train.ok_or_else(|| bad("header lacks `train`".into()))?;
    let val = header.val.ok_or_else(|| bad("header lacks `val`".into()))?;
    let per = 2 * n + m;
    if values.len() != m * n + (train + val) * per {
        return Err(bad(format!(
            "payload has {} values for {} samples",
            values.len(),
            train + val
        )));
    }
    let (a, rest) = values.split_at(m * n);
    let samples = rest
        .chunks_exact(per)
        .map(|c| Sample {
            x0: Array1::from(c[..n].to_vec()),
            b: Array1::from(c[n..n + m].to_vec()),
            y: Array1::from(c[n + m..].to_vec()),
        })
        .collect();
    Dataset::new(
        samples,
        train,
        GenMeta {
            a_true: Array2::from_shape_vec((m, n), a.to_vec()).expect("m x n"),
            sparsity: header.sparsity.unwrap_or(f64::NAN),
            noise_sigma: header.noise_sigma.unwrap_or(f64::NAN),
            seed: header.seed.unwrap_or(0),
        },
    )
}

/// C-style `%.17g`: 17 significant digits, trailing zeros removed.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let strip = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-4..17).contains(&exp) {
        strip(&format!("{:.*}", (16 - exp) as usize, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip(mantissa), exp.abs())
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn csv_err(e: csv::Error) -> Error {
    Error::io("<csv>", std::io::Error::other(e))
}

fn write_rows<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(header).map_err(csv_err)?;
    for r in rows {
        out.write_record(&r).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

pub const CURVE_HEADER: [&str; 4] = ["epoch", "train_objective", "train_data_loss", "val_data_loss"];

pub fn write_curve_csv<W: Write>(w: W, curve: &[CurvePoint]) -> Result<()> {
    write_rows(
        w,
        &CURVE_HEADER,
        curve.iter().map(|c| {
            vec![
                c.epoch.to_string(),
                fmt_g17(c.train_objective),
                fmt_g17(c.train_data_loss),
                fmt_g17(c.val_data_loss),
            ]
        }),
    )
}

pub const SWEEP_HEADER: [&str; 5] = [
    "N",
    "final_train_objective",
    "final_train_data_loss",
    "final_val_data_loss",
    "status",
];

/// One row per depth; wall times are left out so the table is reproducible.
pub fn write_sweep_csv<W: Write>(w: W, sweep: &SweepResult) -> Result<()> {
    write_rows(
        w,
        &SWEEP_HEADER,
        sweep.rows.iter().map(|r| {
            vec![
                r.depth.to_string(),
                fmt_g17(r.final_train_objective),
                fmt_g17(r.final_train_data_loss),
                fmt_g17(r.final_val_data_loss),
                match &r.status {
                    RowStatus::Ok => "ok".to_string(),
                    RowStatus::Failed(msg) => format!("failed: {msg}"),
                },
            ]
        }),
    )
}

/// Per-epoch curves of every depth in long format.
pub fn write_sweep_curves_csv<W: Write>(w: W, sweep: &SweepResult) -> Result<()> {
    write_rows(
        w,
        &["N", "epoch", "train_objective", "train_data_loss", "val_data_loss"],
        sweep.rows.iter().flat_map(|r| {
            r.curve.iter().map(move |c| {
                vec![
                    r.depth.to_string(),
                    c.epoch.to_string(),
                    fmt_g17(c.train_objective),
                    fmt_g17(c.train_data_loss),
                    fmt_g17(c.val_data_loss),
                ]
            })
        }),
    )
}

pub fn write_gamma_csv<W: Write>(w: W, check: &GammaCheck) -> Result<()> {
    write_rows(
        w,
        &["N", "value", "gap"],
        check
            .rows
            .iter()
            .map(|r| vec![r.depth.to_string(), fmt_g17(r.value), fmt_g17(r.gap)]),
    )
}

pub fn write_stability_csv<W: Write>(w: W, rows: &[StabilityRow]) -> Result<()> {
    write_rows(
        w,
        &["r", "magnitude", "optimal_value_gap", "solution_distance_lp"],
        rows.iter().map(|r| {
            vec![
                r.r.to_string(),
                fmt_g17(r.magnitude),
                fmt_g17(r.value_gap),
                fmt_g17(r.solution_distance),
            ]
        }),
    )
}

/// Record of one command invocation, written before its results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub command: String,
    pub argv: Vec<String>,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    pub seed: u64,
    pub started_unix: u64,
    #[serde(default)]
    pub finished_unix: Option<u64>,
    pub outputs: Vec<String>,
    pub code_version: String,
    /// Command-specific results that are not reproducible byte for byte
    /// (wall times) or that summarise the outputs.
    #[serde(default)]
    pub notes: serde_json::Value,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        write_atomic(path, &json)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }
}

/// `<output>.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
