//! Set estimation for nonparametric instrumental-variables models that allow a
//! bounded failure of instrument validity.
//!
//! The structural function `h` is only assumed to satisfy
//! `|E[Y - h(X) | Z]| <= b` together with linear shape restrictions
//! `T[h](x) <= c(x)`. The [`bounds`] module estimates the pointwise lower and
//! upper envelopes of the resulting identified set by series regression and
//! linear programming; [`oracle`] computes the same objects exactly for finite
//! discrete populations.

pub mod bounds;
pub mod firststage;
pub mod lpsolve;
pub mod oracle;
pub mod quadrature;
pub mod shapes;
pub mod splines;
pub mod synth;

pub use bounds::{BoundsConfig, BoundsError, EnvelopeBand, EnvelopeProblem};
pub use firststage::{FirstStageError, FirstStageFit, Sample};
pub use lpsolve::{Constraints, LinearProgram, LpError, LpResult, LpStatus, Sense};
pub use oracle::{DiscreteModel, OracleError};
pub use shapes::{Bound, ShapeRow, ShapeSpec};
pub use splines::{BSplineBasis, SplineError};
pub use synth::{ContinuousDgp, DiscreteRegressorDgp, InstrumentShift, StructuralShape, SynthError};
