//! Collocation solvers for the steady and transient linearized problems,
//! gradient-norm evaluators and decay-rate fitting.

pub mod duhamel;
pub mod grid;
pub mod norms;
pub mod operator;
pub mod steady;
pub mod transient;

pub use duhamel::{Duhamel, WallModel, WallState};
pub use grid::{GridSpec, MeasureGrid, MeasureSpec, PhaseGrid, Stencil};
pub use operator::CollisionMatrix;
pub use steady::{SteadyOptions, SteadyProblem, SteadySolution};
pub use norms::{fit_decay_rate, gradient_norms, w1p_norm, weighted_gradient_norm, DecayFit, FieldEvaluator, GradientNorms, Interpolant};
pub use transient::{smooth_initial_data, InitialData, NormRecord, NormSeries, TransientOptions, TransientProblem, TransientRun};
