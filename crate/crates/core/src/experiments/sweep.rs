use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::learning::{init_params, sgd_train, CurvePoint, Dataset, ObjectiveConfig, TrainConfig};
use crate::regularizers::Regularizer;

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub depth: usize,
    pub final_train_objective: f64,
    pub final_train_data_loss: f64,
    pub final_val_data_loss: f64,
    pub wall_time: Duration,
    pub status: RowStatus,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn final_train_data_losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.final_train_data_loss).collect()
    }
}

pub(crate) fn check_increasing(layers: &[usize]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::domain("layer list is empty"));
    }
    if layers[0] == 0 {
        return Err(Error::domain("network depth must be ≥ 1"));
    }
    if layers.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain(format!(
            "layer list must be strictly increasing, got {layers:?}"
        )));
    }
    Ok(())
}

/// Trains one network per depth from the same dataset, seed and horizon; the
/// per-group rates follow `r0 * N^e`. A failed row is kept with NaN values.
pub fn depth_sweep(
    layers: &[usize],
    data: &Dataset,
    reg: &Regularizer,
    ocfg: &ObjectiveConfig,
    tcfg: &TrainConfig,
    horizon: f64,
) -> Result<SweepResult> {
    check_increasing(layers)?;
    ocfg.validate()?;
    tcfg.validate()?;
    let rows = layers
        .par_iter()
        .map(|&depth| {
            let start = Instant::now();
            let run = init_params(depth, horizon, &data.meta.a_true, tcfg)
                .and_then(|p0| sgd_train(&p0, data, reg, ocfg, tcfg));
            let wall_time = start.elapsed();
            match run {
                Ok(out) => {
                    let last = out.curve.last().copied();
                    let (obj, tr, va) = match last {
                        Some(c) => (c.train_objective, c.train_data_loss, c.val_data_loss),
                        None => (f64::NAN, f64::NAN, f64::NAN),
                    };
                    SweepRow {
                        depth,
                        final_train_objective: obj,
                        final_train_data_loss: tr,
                        final_val_data_loss: va,
                        wall_time,
                        status: RowStatus::Ok,
                        curve: out.curve,
                    }
                }
                Err(e) => {
                    log::warn!("depth {depth} failed: {e}");
                    SweepRow {
                        depth,
                        final_train_objective: f64::NAN,
                        final_train_data_loss: f64::NAN,
                        final_val_data_loss: f64::NAN,
                        wall_time,
                        status: RowStatus::Failed(e.to_string()),
                        curve: Vec::new(),
                    }
                }
            }
        })
        .collect();
    Ok(SweepResult { rows })
}
