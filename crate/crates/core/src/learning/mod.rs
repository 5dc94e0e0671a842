//! Learning problems over unrolled networks: objectives, gradients, training.

mod data;
mod grad;
mod lista;
mod objective;
mod train;

pub use data::{Dataset, GenMeta, Sample};
pub use grad::{grad_objective, Gradients};
pub use lista::{lista_grad_objective, lista_objective, lista_reg_terms, sgd_train_lista, ListaGradients};
pub use objective::{
    data_loss, loss, objective_continuous, objective_discrete, reg_terms, ObjectiveConfig, Psi, RegTerms,
};
pub use train::{
    epoch_order, init_params, sgd_train, sgd_train_observed, AInit, CurvePoint, StepEvent, TrainConfig, TrainOutcome,
};
