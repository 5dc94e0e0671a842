//! Fully resolved commands. A [`Job`] carries everything needed to produce
//! its outputs; it is what a run manifest stores, so replaying the manifest
//! replays the run.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fbs_unroll::dynamics::{limit_solve, Control};
use fbs_unroll::experiments::{
    depth_sweep, gamma_check, gen_dataset, stability_run, DataSpec, PerturbTarget, PerturbationSchedule, RowStatus,
    StabilityMode, StabilityProblem,
};
use fbs_unroll::io::{
    fmt_g17, manifest_path, read_control, read_dataset, write_atomic, write_curve_csv, write_dataset, write_gamma_csv,
    write_network_params, write_stability_csv, write_sweep_csv, write_sweep_curves_csv, RunManifest,
};
use fbs_unroll::learning::{init_params, loss, objective_continuous, sgd_train, Dataset};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, StabilityModeKind};
use crate::error::{io_err, CliError};
use crate::svg::{render, Chart, Series};

pub const MANIFEST_VERSION: u32 = 1;

pub fn code_version() -> String {
    format!(
        "{} {} ({})",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        env!("FBS_UNROLL_GIT_DESCRIBE")
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotSpec {
    pub input: PathBuf,
    pub x: String,
    pub y: String,
    pub group: Option<String>,
    pub log_y: bool,
    pub title: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Job {
    GenData {
        data: DataSpec,
        out: PathBuf,
    },
    Train {
        config: RunConfig,
        data: Option<PathBuf>,
        out: PathBuf,
        params: Option<PathBuf>,
    },
    SweepDepth {
        config: RunConfig,
        data: Option<PathBuf>,
        out: PathBuf,
        curves: Option<PathBuf>,
    },
    LimitEval {
        config: RunConfig,
        control: PathBuf,
        data: Option<PathBuf>,
        split: Split,
        out: PathBuf,
    },
    GammaCheck {
        config: RunConfig,
        control: Option<PathBuf>,
        data: Option<PathBuf>,
        out: PathBuf,
    },
    Stability {
        config: RunConfig,
        data: Option<PathBuf>,
        out: PathBuf,
    },
    Plot {
        plot: PlotSpec,
        out: PathBuf,
    },
}

/// Output path of one stability target when several share `--out`:
/// `stab.csv` becomes `stab.x0.csv`.
pub fn target_path(out: &Path, target: PerturbTarget, several: bool) -> PathBuf {
    if !several {
        return out.to_path_buf();
    }
    let name = serde_json::to_value(target).unwrap();
    let tag = name.as_str().unwrap();
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = match out.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    out.with_file_name(file)
}

fn with_header(path: &Path) -> [PathBuf; 2] {
    [path.to_path_buf(), fbs_unroll::io::header_path(path)]
}

impl Job {
    pub fn command(&self) -> &'static str {
        match self {
            Job::GenData { .. } => "gen-data",
            Job::Train { .. } => "train",
            Job::SweepDepth { .. } => "sweep-depth",
            Job::LimitEval { .. } => "limit-eval",
            Job::GammaCheck { .. } => "gamma-check",
            Job::Stability { .. } => "stability",
            Job::Plot { .. } => "plot",
        }
    }

    /// The path the manifest is named after.
    pub fn primary_output(&self) -> &Path {
        match self {
            Job::GenData { out, .. }
            | Job::Train { out, .. }
            | Job::SweepDepth { out, .. }
            | Job::LimitEval { out, .. }
            | Job::GammaCheck { out, .. }
            | Job::Stability { out, .. }
            | Job::Plot { out, .. } => out,
        }
    }

    pub fn outputs(&self) -> Vec<PathBuf> {
        match self {
            Job::GenData { out, .. } => with_header(out).to_vec(),
            Job::Train { out, params, .. } => {
                let mut v = vec![out.clone()];
                if let Some(p) = params {
                    v.extend(with_header(p));
                }
                v
            }
            Job::SweepDepth { out, curves, .. } => std::iter::once(out.clone()).chain(curves.clone()).collect(),
            Job::Stability { config, out, .. } => {
                let several = config.stability.targets.len() > 1;
                config
                    .stability
                    .targets
                    .iter()
                    .map(|&t| target_path(out, t, several))
                    .collect()
            }
            Job::LimitEval { out, .. } | Job::GammaCheck { out, .. } | Job::Plot { out, .. } => vec![out.clone()],
        }
    }

    /// Files read by the job, hashed into the manifest.
    pub fn inputs(&self) -> Vec<PathBuf> {
        let mut v = Vec::new();
        match self {
            Job::GenData { .. } => {}
            Job::Train { data, .. } | Job::SweepDepth { data, .. } | Job::Stability { data, .. } => {
                v.extend(data.iter().flat_map(|d| with_header(d)));
            }
            Job::LimitEval { control, data, .. } => {
                v.extend(with_header(control));
                v.extend(data.iter().flat_map(|d| with_header(d)));
            }
            Job::GammaCheck { control, data, .. } => {
                v.extend(control.iter().flat_map(|c| with_header(c)));
                v.extend(data.iter().flat_map(|d| with_header(d)));
            }
            Job::Plot { plot, .. } => v.push(plot.input.clone()),
        }
        v
    }

    pub fn seed(&self) -> u64 {
        match self {
            Job::GenData { data, .. } => data.seed,
            Job::Train { config, .. } | Job::SweepDepth { config, .. } | Job::Stability { config, .. } => {
                config.train.seed
            }
            Job::GammaCheck { config, .. } => config.gamma.seed,
            Job::LimitEval { config, .. } => config.data.seed,
            Job::Plot { .. } => 0,
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical (key-sorted, compact) JSON form of a job.
pub fn config_hash(config: &Value) -> String {
    sha256_hex(serde_json::to_string(config).expect("json value").as_bytes())
}

fn hash_inputs(job: &Job) -> Result<Value, CliError> {
    let mut map = serde_json::Map::new();
    for path in job.inputs() {
        let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
        map.insert(path.display().to_string(), Value::String(sha256_hex(&bytes)));
    }
    Ok(Value::Object(map))
}

fn manifest_name(job: &Job) -> String {
    manifest_path(job.primary_output())
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Writes the manifest, runs the job, then completes the manifest with the
/// finish time and the job's summary. The manifest is finalised even when
/// the job fails part-way.
pub fn execute(job: &Job, argv: &[String]) -> Result<String, CliError> {
    let config = serde_json::to_value(job).expect("jobs serialise");
    let path = manifest_path(job.primary_output());
    let inputs = hash_inputs(job)?;
    let mut manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        command: job.command().to_string(),
        argv: argv.to_vec(),
        config_hash: config_hash(&config),
        config,
        seed: job.seed(),
        started_unix: unix_now(),
        finished_unix: None,
        outputs: job.outputs().iter().map(|p| p.display().to_string()).collect(),
        code_version: code_version(),
        notes: json!({ "inputs": inputs }),
    };
    manifest.write(&path)?;
    let outcome = run_job(job, &manifest_name(job));
    manifest.finished_unix = Some(unix_now());
    match &outcome {
        Ok(report) => manifest.notes["results"] = report.results.clone(),
        Err(e) => manifest.notes["error"] = Value::String(e.to_string()),
    }
    manifest.write(&path)?;
    outcome.map(|r| r.summary)
}

/// Replays the job stored in a manifest.
pub fn rerun(manifest: &Path, argv: &[String]) -> Result<String, CliError> {
    let m = RunManifest::read(manifest)?;
    let job: Job = serde_json::from_value(m.config.clone())
        .map_err(|e| CliError::Config(format!("{}: config: {e}", manifest.display())))?;
    if config_hash(&m.config) != m.config_hash {
        return Err(CliError::Config(format!(
            "{}: config_hash does not match the stored config",
            manifest.display()
        )));
    }
    if m.code_version != code_version() {
        log::warn!(
            "manifest written by {}, replaying with {}",
            m.code_version,
            code_version()
        );
    }
    if let Some(old) = m.notes.get("inputs") {
        if *old != hash_inputs(&job)? {
            log::warn!("inputs changed since the manifest was written");
        }
    }
    execute(&job, argv)
}

struct Report {
    summary: String,
    results: Value,
}

fn report(summary: String, results: Value) -> Result<Report, CliError> {
    Ok(Report { summary, results })
}

fn load_data(cfg: &RunConfig, path: &Option<PathBuf>) -> Result<Dataset, CliError> {
    Ok(match path {
        Some(p) => read_dataset(p)?,
        None => gen_dataset(&cfg.data)?,
    })
}

fn write_csv(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> fbs_unroll::Result<()>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_atomic(path, &buf)?;
    Ok(())
}

/// `A_true + 0.5 sin(pi t) G / sqrt(m)`, `alpha = 1 + 0.5 cos(2 pi t)`,
/// `lambda = 0.05 (1 + t)`, sampled on `grid` cells of `[0, T]`.
pub fn synthetic_target(a_true: &Array2<f64>, grid: usize, horizon: f64, seed: u64) -> fbs_unroll::Result<Control> {
    use std::f64::consts::PI;
    let (m, n) = a_true.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Array2::from_shape_fn((m, n), |_| {
        rng.sample::<f64, _>(StandardNormal) * 0.5 / (m as f64).sqrt()
    });
    Control::sample(horizon, grid, |t| {
        let s = t / horizon;
        (
            a_true + &(&g * (PI * s).sin()),
            1.0 + 0.5 * (2.0 * PI * s).cos(),
            0.05 * (1.0 + s),
        )
    })
}

fn run_job(job: &Job, manifest: &str) -> Result<Report, CliError> {
    match job {
        Job::GenData { data, out } => {
            let d = gen_dataset(data)?;
            write_dataset(out, &d, Some(manifest))?;
            report(
                format!(
                    "wrote {} ({} train, {} val samples)",
                    out.display(),
                    d.train_count,
                    d.val().len()
                ),
                json!({ "samples": d.samples.len() }),
            )
        }
        Job::Train {
            config,
            data,
            out,
            params,
        } => {
            let d = load_data(config, data)?;
            let p0 = init_params(
                config.network.depth,
                config.network.horizon,
                &d.meta.a_true,
                &config.train,
            )?;
            let run = sgd_train(&p0, &d, &config.regularizer, &config.objective, &config.train)?;
            write_csv(out, |b| write_curve_csv(b, &run.curve))?;
            if let Some(p) = params {
                write_network_params(p, &run.params, Some(manifest))?;
            }
            let last = run.curve.last();
            let loss = last.map_or(f64::NAN, |c| c.train_data_loss);
            report(
                format!(
                    "wrote {} ({} epochs, final train data loss {})",
                    out.display(),
                    run.curve.len(),
                    fmt_g17(loss)
                ),
                json!({ "final_train_data_loss": fmt_g17(loss) }),
            )
        }
        Job::SweepDepth {
            config,
            data,
            out,
            curves,
        } => {
            let d = load_data(config, data)?;
            let sweep = depth_sweep(
                &config.sweep.layers,
                &d,
                &config.regularizer,
                &config.objective,
                &config.train,
                config.network.horizon,
            )?;
            write_csv(out, |b| write_sweep_csv(b, &sweep))?;
            if let Some(c) = curves {
                write_csv(c, |b| write_sweep_curves_csv(b, &sweep))?;
            }
            let failed: Vec<String> = sweep
                .rows
                .iter()
                .filter_map(|r| match &r.status {
                    RowStatus::Failed(msg) => Some(format!("N={}: {msg}", r.depth)),
                    RowStatus::Ok => None,
                })
                .collect();
            if !failed.is_empty() {
                return Err(fbs_unroll::Error::Numeric(format!(
                    "{} of {} depths failed ({}); results written to {}",
                    failed.len(),
                    sweep.rows.len(),
                    failed.join("; "),
                    out.display()
                ))
                .into());
            }
            report(
                format!("wrote {} ({} rows)", out.display(), sweep.rows.len()),
                json!({ "final_train_data_loss": sweep.final_train_data_losses().iter().map(|&v| fmt_g17(v)).collect::<Vec<_>>() }),
            )
        }
        Job::LimitEval {
            config,
            control,
            data,
            split,
            out,
        } => {
            let u = read_control(control)?;
            let d = load_data(config, data)?;
            let samples = match split {
                Split::Train => d.train(),
                Split::Val => d.val(),
            };
            if samples.is_empty() {
                return Err(CliError::Usage(format!("the {split:?} split is empty").to_lowercase()));
            }
            let n_ref = config.limit.n_ref;
            let mut buf = Vec::new();
            {
                let mut w = csv::WriterBuilder::new()
                    .terminator(csv::Terminator::Any(b'\n'))
                    .from_writer(&mut buf);
                let csv_err = |e: csv::Error| io_err(out, e);
                w.write_record(["sample", "data_loss", "err_est"]).map_err(csv_err)?;
                for (i, s) in samples.iter().enumerate() {
                    let sol = limit_solve(&u, s.x0.view(), s.b.view(), &config.regularizer, n_ref)
                        .map_err(|e| CliError::Core(e).context(format!("sample {i}")))?;
                    let l = loss(sol.terminal.view(), s.y.view())?;
                    w.write_record([i.to_string(), fmt_g17(l), fmt_g17(sol.err_est)])
                        .map_err(csv_err)?;
                }
                w.flush().map_err(|e| io_err(out, e))?;
            }
            write_atomic(out, &buf)?;
            let value = objective_continuous(&u, samples, &config.regularizer, &config.objective, n_ref)?;
            report(
                format!(
                    "wrote {} ({} samples, objective {})",
                    out.display(),
                    samples.len(),
                    fmt_g17(value)
                ),
                json!({ "objective_continuous": fmt_g17(value) }),
            )
        }
        Job::GammaCheck {
            config,
            control,
            data,
            out,
        } => {
            let d = load_data(config, data)?;
            let g = &config.gamma;
            let target = match control {
                Some(p) => read_control(p)?,
                None => synthetic_target(&d.meta.a_true, g.grid, config.network.horizon, g.seed)?,
            };
            let train = d.train();
            let samples = &train[..g.samples.min(train.len())];
            let check = gamma_check(
                &target,
                &g.layers,
                samples,
                &config.regularizer,
                &config.objective,
                g.n_ref,
            )?;
            write_csv(out, |b| write_gamma_csv(b, &check))?;
            let order = check.empirical_order();
            report(
                format!(
                    "wrote {} ({} rows, empirical order {order:.3})",
                    out.display(),
                    check.rows.len()
                ),
                json!({ "empirical_order": fmt_g17(order), "reference": fmt_g17(check.reference), "reference_err_est": fmt_g17(check.reference_err_est) }),
            )
        }
        Job::Stability { config, data, out } => {
            let d = load_data(config, data)?;
            let s = &config.stability;
            let problem = StabilityProblem {
                data: &d,
                reg: config.regularizer,
                ocfg: config.objective,
                tcfg: fbs_unroll::learning::TrainConfig {
                    r0: s.r0,
                    ..config.train
                },
                horizon: config.network.horizon,
            };
            let mode = match s.mode {
                StabilityModeKind::Discrete => StabilityMode::Discrete(s.depth),
                StabilityModeKind::Continuous => StabilityMode::Continuous(s.depth),
            };
            let several = s.targets.len() > 1;
            let mut results = serde_json::Map::new();
            let mut written = Vec::new();
            for &target in &s.targets {
                let sched = PerturbationSchedule::geometric(target, s.first, s.ratio, s.count, s.direction_seed)?;
                let rows = stability_run(&problem, &sched, mode)?;
                let path = target_path(out, target, several);
                write_csv(&path, |b| write_stability_csv(b, &rows))?;
                let last = rows.last().map_or(f64::NAN, |r| r.value_gap);
                results.insert(
                    serde_json::to_value(target).unwrap().as_str().unwrap().to_string(),
                    json!({ "smallest_magnitude_gap": fmt_g17(last) }),
                );
                written.push(path.display().to_string());
            }
            report(format!("wrote {}", written.join(", ")), Value::Object(results))
        }
        Job::Plot { plot, out } => {
            let chart = read_chart(plot)?;
            let svg = render(&chart).map_err(|e| CliError::Usage(format!("{}: {e}", plot.input.display())))?;
            write_atomic(out, svg.as_bytes())?;
            let points: usize = chart.series.iter().map(|s| s.points.len()).sum();
            report(
                format!("wrote {} ({} series)", out.display(), chart.series.len()),
                json!({ "series": chart.series.len(), "points": points }),
            )
        }
    }
}

impl CliError {
    fn context(self, what: String) -> CliError {
        match self {
            CliError::Core(e) if e.is_numeric() => CliError::Core(fbs_unroll::Error::Numeric(format!("{what}: {e}"))),
            CliError::Core(e) => CliError::Core(fbs_unroll::Error::Domain(format!("{what}: {e}"))),
            other => other,
        }
    }
}

/// Reads two numeric columns of a CSV, split into series by `group`.
fn read_chart(plot: &PlotSpec) -> Result<Chart, CliError> {
    let path = &plot.input;
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let headers = rdr.headers().map_err(|e| io_err(path, e))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Usage(format!(
                "{}: no column '{name}' (columns: {})",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
    };
    let (xi, yi) = (col(&plot.x)?, col(&plot.y)?);
    let gi = plot.group.as_deref().map(col).transpose()?;
    let mut series: Vec<Series> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let num = |i: usize| {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .unwrap_or(f64::NAN)
        };
        let label = gi.and_then(|i| rec.get(i)).unwrap_or("").to_string();
        let idx = match series.iter().position(|s| s.label == label) {
            Some(i) => i,
            None => {
                series.push(Series {
                    label,
                    points: Vec::new(),
                });
                series.len() - 1
            }
        };
        series[idx].points.push((num(xi), num(yi)));
    }
    if let Some(g) = &plot.group {
        for s in &mut series {
            s.label = format!("{g} = {}", s.label);
        }
    }
    Ok(Chart {
        title: plot
            .title
            .clone()
            .unwrap_or_else(|| format!("{} vs {}", plot.y, plot.x)),
        x_label: plot.x.clone(),
        y_label: plot.y.clone(),
        log_y: plot.log_y,
        series,
    })
}
