pub mod error;
pub mod escape;
pub mod model;
pub mod roots;
pub mod sde;
pub mod spectrum;
pub mod stats;
pub mod sweep;
pub mod stability;

pub use error::{Error, Result};
pub use model::{map_microscopic, ArrayState, MicroscopicParams, ModeState, ModelParams};
pub use spectrum::{pt_eigenstate_check, spectrum, Regime, SpectrumResult};
pub use stability::{
    classify_phase, find_fixed_points, phase_boundaries, FixedPoint, FixedPointKind, PhaseLabel, PhaseReport,
    PolarState,
};
pub use escape::{escape_rate, find_extrema, potential, predict_transition, EscapePrediction, Potential};
pub use sde::{run_ensemble, settle, EnsembleSample, IntegratorConfig, NoiselessState, Scheme};
pub use stats::{detect_transition, fit_radial, fit_samples, radial_histogram, symmetry_delta, RadialFit, SymmetryReport};
pub use sweep::{builtin_recipe, emit, run_sweep, Axis, Format, Pipeline, Recipe, ResultTable, SweepSpec};
