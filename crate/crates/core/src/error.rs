use num_complex::Complex64;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// The integrator produced a NaN or infinite amplitude.
    #[error("non-finite state in run {run} at t = {time}: alpha = {alpha}, beta = {beta} (cell {cell}; {params})")]
    NonFinite {
        run: usize,
        cell: usize,
        time: f64,
        alpha: Complex64,
        beta: Complex64,
        params: String,
    },

    #[error("polar coordinates are singular at r = {r}, z = {z}")]
    SingularPolar { r: f64, z: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("effective potential has no barrier at Gamma/g = {gamma_over_g}")]
    NoBarrier { gamma_over_g: f64 },

    #[error("no symmetry-broken fixed point at Gamma/g = {0}")]
    NoBrokenState(f64),

    #[error("curve never crosses {threshold} from below")]
    NoCrossing { threshold: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("plane-wave mode k = {k} is decoupled (g_k = 0)")]
    Decoupled { k: f64 },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

impl Error {
    /// True for errors caused by user input rather than by a numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::Config(_) | Error::Json(_) | Error::LengthMismatch(..)
        )
    }
}
