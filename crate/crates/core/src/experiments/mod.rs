//! Numerical studies built on the learning module.

mod datagen;
mod gamma;
mod stability;
mod sweep;

pub use datagen::{gen_dataset, DataSpec};
pub use gamma::{gamma_check, GammaCheck, GammaRow};
pub use stability::{
    perturb_dataset, perturbation_direction, stability_run, PerturbTarget, PerturbationSchedule, StabilityMode,
    StabilityProblem, StabilityRow,
};
pub use sweep::{depth_sweep, RowStatus, SweepResult, SweepRow};

use crate::dynamics::{ListaParams, NetworkParams};
use crate::error::{Error, Result};
use crate::learning::{lista_objective, objective_discrete, ObjectiveConfig, Sample};
use crate::regularizers::Regularizer;

/// LISTA and FBS objectives evaluated side by side on the same samples,
/// returned as `(lista, fbs)`.
pub fn lista_compare(
    samples: &[Sample],
    lista: &ListaParams,
    fbs: &NetworkParams,
    reg: &Regularizer,
    ocfg: &ObjectiveConfig,
) -> Result<(f64, f64)> {
    if lista.depth != fbs.depth() {
        return Err(Error::dim(format!(
            "LISTA has {} layers, FBS network has {}",
            lista.depth,
            fbs.depth()
        )));
    }
    let (m, n) = fbs.a[0].dim();
    if lista.w2.dim() != (n, m) {
        return Err(Error::dim(format!(
            "LISTA W2 is {:?}, FBS layers are {m}x{n}",
            lista.w2.dim()
        )));
    }
    Ok((
        lista_objective(lista, samples, ocfg)?,
        objective_discrete(fbs, samples, reg, ocfg)?,
    ))
}
