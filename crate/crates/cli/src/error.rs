use npiv_core::bounds::BoundsError;
use npiv_core::firststage::FirstStageError;
use npiv_core::oracle::OracleError;
use npiv_core::shapes::ShapeError;
use npiv_core::splines::SplineError;
use npiv_core::synth::SynthError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<SplineError> for CliError {
    fn from(e: SplineError) -> Self {
        match e {
            SplineError::DimensionBelowOrder { .. } | SplineError::ZeroOrder => CliError::Config(e.to_string()),
            SplineError::InvalidDomain { .. } => CliError::Data(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<FirstStageError> for CliError {
    fn from(e: FirstStageError) -> Self {
        match e {
            FirstStageError::SingularDesign { .. } => CliError::Numerical(e.to_string()),
            FirstStageError::Spline(s) => s.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<BoundsError> for CliError {
    fn from(e: BoundsError) -> Self {
        match e {
            BoundsError::Config(_) | BoundsError::Shape(_) => CliError::Config(e.to_string()),
            BoundsError::DegenerateDomain(_) | BoundsError::TooFewObservations(_) => CliError::Data(e.to_string()),
            BoundsError::FirstStage(f) => f.into(),
            BoundsError::Spline(s) => s.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ShapeError> for CliError {
    fn from(e: ShapeError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::InvalidArgument(_) => CliError::Config(e.to_string()),
            OracleError::InvalidModel(_) | OracleError::Sample(_) => CliError::Data(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Config(e.to_string())
    }
}
