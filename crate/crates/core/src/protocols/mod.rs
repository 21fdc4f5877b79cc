//! Knowledge-distillation protocols between KRR agents.
//!
//! Simulations live in [`simulate`] and [`ekd`]; their algebraic
//! counterparts in [`closed_form`] and [`optimum`]; [`verify`] compares the
//! two.

pub mod closed_form;
pub mod config;
pub mod ekd;
pub mod optimum;
pub mod simulate;
pub mod trajectory;
pub mod verify;

pub use closed_form::{
    akd_closed_form, akd_closed_form_from, akd_closed_form_series, akd_product_form, akd_spectral,
    akd_spectral_series, avgkd_closed_form, avgkd_closed_form_series, avgkd_limit, pkd_closed_form,
    pkd_coupled_series, spectral_operators, AvgkdLimit, ClosedFormFit, Parity,
};
pub use config::{AgentSpec, EvalSet, ProtocolConfig, Scheme};
pub use ekd::{ekd_ensemble, run_ekd, EkdRun, EnsemblePredictor, EKD_MAX_TERMS};
pub use optimum::{solve_local_krr, solve_mixed_optimum, solve_mixed_system, solve_pooled_krr, MixedOptimum};
pub use simulate::{run_akd, run_avgkd, run_pkd, run_protocol};
pub use trajectory::{FittedModel, RoundRecord, Trajectory};
pub use verify::{equivalence_suite, random_instance, verify_run, RandomInstance, SuiteCheck, VerifyReport};
