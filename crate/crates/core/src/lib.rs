//! Core numerics for a chemotaxis–growth colony model: cell-centered grids
//! with Neumann boundaries, an IMEX stepper for the four-field system, the
//! spatially homogeneous kinetics, and run diagnostics.

pub mod diagnostics;
pub mod grid;
pub mod kinetics;
pub mod linalg;
pub mod model;
pub mod par;
pub mod stepper;

pub use diagnostics::{DiagnosticsSeries, MassRecord, MomentWeight};
pub use grid::{Field, FluxScheme, Grid};
pub use kinetics::KineticState;
pub use model::{Death, Growth, ModelParams, NonlinearitySpec, Sensitivity};
pub use stepper::{
    run_simulation, EllipticSolveSettings, Mode, RunHooks, RunResult, Schedule, SimState, StepControl, StopRules,
    TerminationCause,
};
