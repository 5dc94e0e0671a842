//! Sensitivity of trained optimal values to perturbations of `(x0, b, y)`.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{extend_params, param_norm_lp, NetworkParams};
use crate::error::{Error, Result};
use crate::learning::{
    init_params, objective_continuous, objective_discrete, sgd_train, Dataset, ObjectiveConfig, TrainConfig,
};
use crate::regularizers::Regularizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbTarget {
    X0,
    B,
    Y,
    All,
}

impl PerturbTarget {
    fn fields(self) -> (bool, bool, bool) {
        match self {
            PerturbTarget::X0 => (true, false, false),
            PerturbTarget::B => (false, true, false),
            PerturbTarget::Y => (false, false, true),
            PerturbTarget::All => (true, true, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSchedule {
    pub target: PerturbTarget,
    pub magnitudes: Vec<f64>,
    pub direction_seed: u64,
}

impl PerturbationSchedule {
    pub fn new(target: PerturbTarget, magnitudes: Vec<f64>, direction_seed: u64) -> Result<Self> {
        if magnitudes.is_empty() {
            return Err(Error::domain("perturbation schedule is empty"));
        }
        if magnitudes.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::domain("perturbation magnitudes must be positive"));
        }
        if magnitudes.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::domain("perturbation magnitudes must be strictly decreasing"));
        }
        Ok(PerturbationSchedule {
            target,
            magnitudes,
            direction_seed,
        })
    }

    /// `first * ratio^r` for `r = 0..count`.
    pub fn geometric(target: PerturbTarget, first: f64, ratio: f64, count: usize, direction_seed: u64) -> Result<Self> {
        let mags = (0..count).map(|r| first * ratio.powi(r as i32)).collect();
        Self::new(target, mags, direction_seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMode {
    /// Train and evaluate the `N`-layer network.
    Discrete(usize),
    /// Train at the reference depth and evaluate the continuous objective of
    /// the extended parameters.
    Continuous(usize),
}

impl StabilityMode {
    fn depth(self) -> usize {
        match self {
            StabilityMode::Discrete(n) | StabilityMode::Continuous(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRow {
    pub r: usize,
    pub magnitude: f64,
    pub value_gap: f64,
    pub solution_distance: f64,
}

/// Problem shared by every row of a stability run.
#[derive(Debug, Clone)]
pub struct StabilityProblem<'a> {
    pub data: &'a Dataset,
    pub reg: Regularizer,
    pub ocfg: ObjectiveConfig,
    pub tcfg: TrainConfig,
    pub horizon: f64,
}

/// Unit vector in the stacked space of the targeted fields of every sample,
/// ordered sample by sample as `(x0, b, y)`.
pub fn perturbation_direction(data: &Dataset, target: PerturbTarget, seed: u64) -> Vec<f64> {
    let (px, pb, py) = target.fields();
    let per_sample = px as usize * data.n + pb as usize * data.m + py as usize * data.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d: Vec<f64> = (0..per_sample * data.samples.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    d.iter_mut().for_each(|v| *v /= norm);
    d
}

/// `data + magnitude * direction` on the targeted fields.
pub fn perturb_dataset(data: &Dataset, target: PerturbTarget, direction: &[f64], magnitude: f64) -> Dataset {
    let (px, pb, py) = target.fields();
    let mut out = data.clone();
    let mut it = direction.iter();
    let mut shift = |v: &mut Array1<f64>| {
        for x in v.iter_mut() {
            *x += magnitude * it.next().expect("direction covers every perturbed entry");
        }
    };
    for s in &mut out.samples {
        if px {
            shift(&mut s.x0);
        }
        if pb {
            shift(&mut s.b);
        }
        if py {
            shift(&mut s.y);
        }
    }
    out
}

fn train_and_value(
    problem: &StabilityProblem<'_>,
    data: &Dataset,
    mode: StabilityMode,
) -> Result<(NetworkParams, f64)> {
    let p0 = init_params(mode.depth(), problem.horizon, &problem.data.meta.a_true, &problem.tcfg)?;
    let out = sgd_train(&p0, data, &problem.reg, &problem.ocfg, &problem.tcfg)?;
    let value = match mode {
        StabilityMode::Discrete(_) => objective_discrete(&out.params, data.train(), &problem.reg, &problem.ocfg)?,
        StabilityMode::Continuous(n_ref) => objective_continuous(
            &extend_params(&out.params),
            data.train(),
            &problem.reg,
            &problem.ocfg,
            n_ref,
        )?,
    };
    Ok((out.params, value))
}

/// Retrains from the same initialisation and seed on each perturbed dataset
/// and reports the optimal-value gap and the parameter distance to the
/// unperturbed solution. Row `r = 0` is the zero-magnitude control.
///
/// The initial `A` always comes from the unperturbed dataset's generating
/// matrix so only the data changes across rows.
pub fn stability_run(
    problem: &StabilityProblem<'_>,
    sched: &PerturbationSchedule,
    mode: StabilityMode,
) -> Result<Vec<StabilityRow>> {
    if mode.depth() == 0 {
        return Err(Error::domain("stability depth must be ≥ 1"));
    }
    let (base_params, base_value) = train_and_value(problem, problem.data, mode)?;
    let direction = perturbation_direction(problem.data, sched.target, sched.direction_seed);
    let mags: Vec<f64> = std::iter::once(0.0).chain(sched.magnitudes.iter().copied()).collect();
    mags.par_iter()
        .enumerate()
        .map(|(r, &magnitude)| {
            let data = perturb_dataset(problem.data, sched.target, &direction, magnitude);
            let (params, value) = train_and_value(problem, &data, mode).map_err(|e| e.at_row(r))?;
            let diff = params.difference(&base_params)?;
            Ok(StabilityRow {
                r,
                magnitude,
                value_gap: (value - base_value).abs(),
                solution_distance: param_norm_lp(&diff, problem.ocfg.pnorm)?,
            })
        })
        .collect()
}
