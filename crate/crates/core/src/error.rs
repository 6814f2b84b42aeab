use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series coefficient {index} is not finite ({value})")]
    NonFiniteCoefficient { index: usize, value: f64 },

    #[error("a truncated series needs at least one coefficient")]
    EmptySeries,

    #[error("coefficient index {index} exceeds series order {order}")]
    IndexOutOfRange { index: usize, order: usize },

    #[error("x = {x} is outside the domain of the {family} family")]
    OutOfDomain { family: String, x: f64 },

    #[error("{what} is not finite at k = {k}")]
    NonFinite { what: String, k: usize },

    #[error("the {family} family is not of power form g_n = g_1^n")]
    NotPowerForm { family: String },

    #[error("B_m moment guard failed for {family}: |B_m(e0)| = {e0:e}, |B_m(e1)| = {e1:e}, power form: {power_form}")]
    MomentGuard {
        family: String,
        e0: f64,
        e1: f64,
        power_form: bool,
    },

    #[error("the {family} operator series diverges for {function} at x = {x}")]
    Divergent {
        family: String,
        function: String,
        x: f64,
    },

    #[error("adaptive quadrature did not converge on [{lo}, {hi}]")]
    Quadrature { lo: f64, hi: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Configuration-class errors: bad names, bad parameters, bad files.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::UnknownName { .. } | Error::Json(_)
        )
    }
}
