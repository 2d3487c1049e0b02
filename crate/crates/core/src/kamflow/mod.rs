//! KAM iteration for `θ̇ = ρ̃ + g(φ) + f(θ,φ)`.

mod chain;
mod drivers;
mod schedule;
mod steps;
mod system;

pub use drivers::{
    linearizable_approximant, mode_locked_approximant, run_almost_reducibility,
    run_rotations_reducibility, AlmostReducibilityRun, ConvergenceDiagnostics,
    LinearizableApproximant, ModeLockedApproximant, ReducibilityRun, RunOptions, StepReport,
};
pub use schedule::{
    certify_paper_schedule, ln_gamma, CertifiedInequality, EngineeringSchedule, KamSchedule,
    PaperInputs, PaperSchedule, PaperStep, RunMode,
};

pub use chain::{ChainElement, ConjugationChain};
pub use steps::{
    step_a_eliminate, step_b_reduce, step_c_conjugate_back, BoundCheck, InnerOptions, PassReport,
    StepA, StepB, StepC, EQUATION_TOL,
};
pub use system::{ClassData, QpfSystem};

use thiserror::Error;

use crate::arithmetic::ArithmeticError;
use crate::homological::HomologicalError;
use crate::spectral::SpectralError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KamError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Arithmetic(#[from] ArithmeticError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("homological solve failed at step {step}, pass {pass}: {source}")]
    Homological {
        step: usize,
        pass: usize,
        source: HomologicalError,
    },
    #[error("schedule infeasible: ε₀ must be below {required}, system has N(f) = {actual}")]
    ScheduleInfeasible { required: String, actual: String },
    #[error("bound violated: {which} = {actual:e} exceeds {bound:e}")]
    BoundViolated {
        which: String,
        actual: f64,
        bound: f64,
    },
    #[error("contraction failed at pass {pass}: N(f) = {achieved:e} > {bound:e}")]
    ContractionFailed {
        pass: usize,
        achieved: f64,
        bound: f64,
    },
    #[error("target distance {target:e} not reached; best {achieved:e}")]
    TargetUnreachable { achieved: f64, target: f64 },
    #[error("no mode-locking resonance found: {0}")]
    NotFound(String),
}
