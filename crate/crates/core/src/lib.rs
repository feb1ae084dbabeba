//! Linear finite element discretisation of anisotropic reaction-diffusion
//! equations of Nagumo type, with time-step windows that certify discrete
//! nonnegativity and boundedness.

pub mod assembly;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod mesh;
pub mod output;
pub mod problem;
pub mod schemes;
pub mod sparse;

pub use assembly::{Assembler, Lumping, ReactionFunction, Treatment};
pub use error::{Error, Result};
pub use experiments::{
    convergence_study, exact_solution_ex1, scaled_l2_error, ConvergenceSpec, ConvergenceTable, ErrorReference, Example,
    StudyMode,
};
pub use geometry::{d_acute, AngleConditionReport, DiffusionField, ElementAveraging};
pub use mesh::{generate_structured_mesh, load_mesh, save_mesh, Mesh, Rect, StructuredMeshKind, StructuredVariant};
pub use problem::ProblemSpec;
pub use schemes::{
    boundedness_window, nonnegativity_window, run_simulation, ConditionWindow, Enforcement, RunSummary, SchemeConfig,
    SimulationState, TimeStepper,
};
pub use sparse::{matrix_properties, solve_linear, CsrMatrix, MatrixPropertyReport, SolverOptions, TripletBuilder};
