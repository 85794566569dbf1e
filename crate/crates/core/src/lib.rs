//! Symmetric and symplectic exponential integrators for semilinear systems
//! `y' = My + f(y)`.
//!
//! * [`matfun`]: dense matrices and the matrix exponential.
//! * [`tableau`]: Butcher tableaux, their exponential lift, and condition checkers.
//! * [`stepper`]: exponential and classical one-step maps, fixed-step integration.
//! * [`problems`]: the Duffing and wind-induced oscillation benchmarks.
//! * [`harness`]: experiment drivers, metrics and CSV output.

pub mod error;
pub mod harness;
pub mod matfun;
pub mod problems;
pub mod stepper;
pub mod tableau;

pub use error::{Error, Result};
pub use matfun::{expm, SquareMatrix};
pub use problems::{duffing, jacobi_sn_cn_dn, wind_oscillation, DuffingParams, WindParams};
pub use stepper::{
    ei_step, integrate, precompute, rk_step, SemilinearProblem, SolverSettings, StepKernel,
    StepMap, StepOutcome, Trajectory,
};
pub use tableau::{
    builtin_methods, check_ei_symmetry, check_ei_symplecticity, check_order_conditions,
    check_rk_symmetry, check_rk_symplecticity, find_method, sei_abar, sei_bbar, ConditionReport,
    MethodKind, RkTableau, SeiMethod,
};
pub use harness::{
    run_convergence, run_energy, run_experiment, run_verify, Experiment, ExperimentConfig,
    ExperimentOutput, MetricRow, ProblemSpec,
};
