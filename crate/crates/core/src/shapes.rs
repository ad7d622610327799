//! Linear shape restrictions `T[h](x) <= c(x)` on the structural function.
//!
//! Each [`ShapeRow`] is one coordinate of the operator: a sign times the
//! value, first or second derivative of `h`, bounded above pointwise.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lpsolve::{Constraints, LpError};
use crate::splines::{BSplineBasis, SplineError};

/// Default floor `c_lower` used when auditing bound values.
pub const DEFAULT_BOUND_FLOOR: f64 = 1e-8;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ShapeError {
    #[error("derivative order {0} is not supported (expected 0, 1 or 2)")]
    DerivativeOrder(usize),

    #[error("sign must be +1 or -1, got {0}")]
    Sign(i64),

    #[error("shape bound must be positive, got {0}")]
    NonPositiveBound(f64),

    #[error("shape bound is not finite at x = {0}")]
    NonFiniteBound(f64),

    #[error("evaluation grid is empty")]
    EmptyGrid,

    #[error("unknown bound shorthand {0:?}")]
    UnknownShorthand(String),

    #[error("\"unit_interval\" shorthand only applies to derivative order 0")]
    ShorthandOrder,

    #[error(transparent)]
    Spline(Box<SplineError>),

    #[error(transparent)]
    Lp(#[from] LpError),
}

impl From<SplineError> for ShapeError {
    fn from(e: SplineError) -> Self {
        ShapeError::Spline(Box::new(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn from_int(s: i64) -> Result<Self, ShapeError> {
        match s {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(ShapeError::Sign(other)),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Right-hand side of a shape row.
#[derive(Clone)]
pub enum Bound {
    Constant(f64),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Bound {
    pub fn at(&self, x: f64) -> f64 {
        match self {
            Bound::Constant(v) => *v,
            Bound::Function(f) => f(x),
        }
    }
}

impl fmt::Debug for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Constant(v) => write!(f, "Constant({v})"),
            Bound::Function(_) => f.write_str("Function(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShapeRow {
    deriv_order: usize,
    sign: Sign,
    bound: Bound,
}

impl ShapeRow {
    pub fn new(deriv_order: usize, sign: i64, bound: Bound) -> Result<Self, ShapeError> {
        if deriv_order > 2 {
            return Err(ShapeError::DerivativeOrder(deriv_order));
        }
        Ok(Self {
            deriv_order,
            sign: Sign::from_int(sign)?,
            bound,
        })
    }

    pub fn deriv_order(&self) -> usize {
        self.deriv_order
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn bound(&self) -> &Bound {
        &self.bound
    }
}

/// The operator `T` and bound `c` defining the parameter space.
#[derive(Debug, Clone)]
pub struct ShapeSpec {
    rows: Vec<ShapeRow>,
}

impl ShapeSpec {
    pub fn new(rows: Vec<ShapeRow>) -> Self {
        Self { rows }
    }

    /// Functions into `[0, 1]` with `|h''| <= second_deriv_bound`:
    /// `T[h] = (h, -h, h'', -h'')` and `c = (1, 0, c, c)`.
    pub fn engel(second_deriv_bound: f64) -> Result<Self, ShapeError> {
        if !(second_deriv_bound > 0.0) || !second_deriv_bound.is_finite() {
            return Err(ShapeError::NonPositiveBound(second_deriv_bound));
        }
        let c = second_deriv_bound;
        Ok(Self::new(vec![
            ShapeRow::new(0, 1, Bound::Constant(1.0))?,
            ShapeRow::new(0, -1, Bound::Constant(0.0))?,
            ShapeRow::new(2, 1, Bound::Constant(c))?,
            ShapeRow::new(2, -1, Bound::Constant(c))?,
        ]))
    }

    /// The single restriction `h <= value`.
    pub fn upper_bound(value: f64) -> Self {
        Self::new(vec![ShapeRow {
            deriv_order: 0,
            sign: Sign::Plus,
            bound: Bound::Constant(value),
        }])
    }

    /// Adds `-h' <= 0` (weakly increasing) or `h' <= 0` (weakly decreasing).
    pub fn with_monotone(mut self, increasing: bool) -> Self {
        self.rows.push(ShapeRow {
            deriv_order: 1,
            sign: if increasing { Sign::Minus } else { Sign::Plus },
            bound: Bound::Constant(0.0),
        });
        self
    }

    pub fn rows(&self) -> &[ShapeRow] {
        &self.rows
    }

    /// Number of coordinates `d` of `T[h](x)`.
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// True when the rows bound `h` itself from both sides, so that every
    /// admissible function is uniformly bounded.
    pub fn implies_uniform_bound(&self) -> bool {
        let has = |s| self.rows.iter().any(|r| r.deriv_order == 0 && r.sign == s);
        has(Sign::Plus) && has(Sign::Minus)
    }

    /// Uniform bound `max(|upper|, |lower|)` on `|h|` over `grid`, if implied.
    pub fn sup_bound(&self, grid: &[f64]) -> Option<f64> {
        if !self.implies_uniform_bound() {
            return None;
        }
        grid.iter()
            .map(|&x| {
                let up = self
                    .rows
                    .iter()
                    .filter(|r| r.deriv_order == 0 && r.sign == Sign::Plus)
                    .map(|r| r.bound.at(x))
                    .fold(f64::INFINITY, f64::min);
                let lo = self
                    .rows
                    .iter()
                    .filter(|r| r.deriv_order == 0 && r.sign == Sign::Minus)
                    .map(|r| r.bound.at(x))
                    .fold(f64::INFINITY, f64::min);
                up.abs().max(lo.abs())
            })
            .reduce(f64::max)
    }

    /// Grid points and rows whose bound falls below `floor`.
    pub fn bounds_below(&self, grid: &[f64], floor: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            for &x in grid {
                if r.bound.at(x) < floor {
                    out.push((i, x));
                    break;
                }
            }
        }
        out
    }

    /// One inequality `sign * B^{(deriv)}(x)' beta <= bound(x)` per row and
    /// grid point, ordered grid-major.
    pub fn materialize(&self, basis: &BSplineBasis, grid: &[f64]) -> Result<Constraints, ShapeError> {
        if grid.is_empty() {
            return Err(ShapeError::EmptyGrid);
        }
        let k = basis.dimension();
        let mut out = Constraints::with_capacity(k, grid.len() * self.rows.len());
        let mut derivs: [Option<Vec<f64>>; 3] = [None, None, None];
        for &x in grid {
            for d in &mut derivs {
                *d = None;
            }
            for row in &self.rows {
                let r = row.bound.at(x);
                if !r.is_finite() {
                    return Err(ShapeError::NonFiniteBound(x));
                }
                let slot = &mut derivs[row.deriv_order];
                if slot.is_none() {
                    *slot = Some(basis.eval_deriv(x, row.deriv_order)?);
                }
                let s = row.sign.as_f64();
                let a: Vec<f64> = slot.iter().flatten().map(|c| s * c).collect();
                out.push_row(&a, r)?;
            }
        }
        Ok(out)
    }
}

/// On-disk form of a shape restriction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeConfig {
    pub rows: Vec<ShapeRowConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeRowConfig {
    pub deriv_order: usize,
    pub sign: i64,
    pub bound: BoundConfig,
}

/// A constant, or `"unit_interval"`: 1 for the upper row and 0 for the lower
/// row of a level restriction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundConfig {
    Constant(f64),
    Shorthand(String),
}

impl TryFrom<&ShapeConfig> for ShapeSpec {
    type Error = ShapeError;

    fn try_from(cfg: &ShapeConfig) -> Result<Self, ShapeError> {
        let rows = cfg
            .rows
            .iter()
            .map(|r| {
                let sign = Sign::from_int(r.sign)?;
                let bound = match &r.bound {
                    BoundConfig::Constant(v) => *v,
                    BoundConfig::Shorthand(s) if s == "unit_interval" => {
                        if r.deriv_order != 0 {
                            return Err(ShapeError::ShorthandOrder);
                        }
                        match sign {
                            Sign::Plus => 1.0,
                            Sign::Minus => 0.0,
                        }
                    }
                    BoundConfig::Shorthand(s) => return Err(ShapeError::UnknownShorthand(s.clone())),
                };
                if !bound.is_finite() {
                    return Err(ShapeError::NonFiniteBound(f64::NAN));
                }
                ShapeRow::new(r.deriv_order, r.sign, Bound::Constant(bound))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ShapeSpec::new(rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bounds(spec: &ShapeSpec) -> Vec<f64> {
        spec.rows().iter().map(|r| r.bound().at(0.0)).collect()
    }

    #[test]
    fn engel_rows() {
        let spec = ShapeSpec::engel(2.0).unwrap();
        assert_eq!(spec.dim(), 4);
        assert_eq!(bounds(&spec), vec![1.0, 0.0, 2.0, 2.0]);
        let orders: Vec<_> = spec.rows().iter().map(|r| r.deriv_order()).collect();
        assert_eq!(orders, vec![0, 0, 2, 2]);
        let signs: Vec<_> = spec.rows().iter().map(|r| r.sign().as_f64()).collect();
        assert_eq!(signs, vec![1.0, -1.0, 1.0, -1.0]);
        assert!(spec.implies_uniform_bound());

        let benchmark = ShapeSpec::engel(0.5).unwrap();
        assert_eq!(bounds(&benchmark), vec![1.0, 0.0, 0.5, 0.5]);
        assert!(benchmark.implies_uniform_bound());
        assert_eq!(benchmark.sup_bound(&[0.0, 1.0]), Some(1.0));
    }

    #[test]
    fn engel_rejects_bad_curvature() {
        assert_eq!(ShapeSpec::engel(0.0).unwrap_err(), ShapeError::NonPositiveBound(0.0));
        assert!(ShapeSpec::engel(-1.0).is_err());
        assert!(ShapeSpec::engel(f64::NAN).is_err());
    }

    #[test]
    fn structural_check() {
        assert!(!ShapeSpec::upper_bound(1.0).implies_uniform_bound());
        assert!(ShapeSpec::upper_bound(1.0).sup_bound(&[0.0]).is_none());
        assert!(ShapeRow::new(3, 1, Bound::Constant(1.0)).is_err());
        assert!(ShapeRow::new(0, 2, Bound::Constant(1.0)).is_err());
    }

    #[test]
    fn zero_lower_bound_is_reported_below_floor() {
        let spec = ShapeSpec::engel(1.0).unwrap();
        let low = spec.bounds_below(&[0.0, 0.5], DEFAULT_BOUND_FLOOR);
        assert_eq!(low, vec![(1, 0.0)]);
    }

    #[test]
    fn materialize_counts_and_coefficients() {
        let basis = BSplineBasis::new(0.0, 1.0, 4, 10).unwrap();
        let grid: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let spec = ShapeSpec::engel(1.0).unwrap();
        let rows = spec.materialize(&basis, &grid).unwrap();
        assert_eq!(rows.num_rows(), 400);
        assert_eq!(rows.num_vars(), 10);
        assert!(rows.is_satisfied_by(&[0.0; 10], 0.0));

        let single = ShapeSpec::upper_bound(1.0).materialize(&basis, &[0.3]).unwrap();
        assert_eq!(single.num_rows(), 1);
        assert_eq!(single.row(0), basis.eval(0.3).unwrap().as_slice());
        assert_eq!(single.rhs(), &[1.0]);

        // second row is -h <= 0
        let phi = basis.eval(0.3).unwrap();
        let r = spec.materialize(&basis, &[0.3]).unwrap();
        for (a, b) in r.row(1).iter().zip(&phi) {
            assert_abs_diff_eq!(*a, -b);
        }
        assert_eq!(r.rhs(), &[1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn materialize_errors() {
        let basis = BSplineBasis::new(0.0, 1.0, 4, 6).unwrap();
        let spec = ShapeSpec::engel(1.0).unwrap();
        assert_eq!(spec.materialize(&basis, &[]).unwrap_err(), ShapeError::EmptyGrid);
        assert!(matches!(spec.materialize(&basis, &[2.0]), Err(ShapeError::Spline(_))));
        let bad = ShapeSpec::new(vec![ShapeRow::new(0, 1, Bound::Function(Arc::new(|x| 1.0 / x))).unwrap()]);
        assert_eq!(bad.materialize(&basis, &[0.0]).unwrap_err(), ShapeError::NonFiniteBound(0.0));
    }

    #[test]
    fn monotone_rows() {
        let basis = BSplineBasis::new(0.0, 1.0, 4, 6).unwrap();
        let spec = ShapeSpec::engel(1.0).unwrap().with_monotone(false);
        assert_eq!(spec.dim(), 5);
        let rows = spec.materialize(&basis, &[0.5]).unwrap();
        // decreasing line 1 - x: beta = (1, 1 - 1/3 *..) via Greville points
        let greville: Vec<f64> = (0..6)
            .map(|i| basis.knots()[i + 1..i + 4].iter().sum::<f64>() / 3.0)
            .collect();
        let beta: Vec<f64> = greville.iter().map(|g| 1.0 - g).collect();
        assert!(rows.is_satisfied_by(&beta, 1e-12));
        let increasing: Vec<f64> = greville.clone();
        assert!(!rows.is_satisfied_by(&increasing, 1e-12));
    }

    #[test]
    fn config_round_trip() {
        let json = r#"{"rows":[
            {"deriv_order":0,"sign":1,"bound":"unit_interval"},
            {"deriv_order":0,"sign":-1,"bound":"unit_interval"},
            {"deriv_order":2,"sign":1,"bound":2.0},
            {"deriv_order":2,"sign":-1,"bound":2.0}]}"#;
        let cfg: ShapeConfig = serde_json::from_str(json).unwrap();
        let spec = ShapeSpec::try_from(&cfg).unwrap();
        assert_eq!(bounds(&spec), bounds(&ShapeSpec::engel(2.0).unwrap()));

        let bad: ShapeConfig =
            serde_json::from_str(r#"{"rows":[{"deriv_order":2,"sign":1,"bound":"unit_interval"}]}"#).unwrap();
        assert_eq!(ShapeSpec::try_from(&bad).unwrap_err(), ShapeError::ShorthandOrder);
        let bad: ShapeConfig =
            serde_json::from_str(r#"{"rows":[{"deriv_order":0,"sign":1,"bound":"unit"}]}"#).unwrap();
        assert!(matches!(ShapeSpec::try_from(&bad), Err(ShapeError::UnknownShorthand(_))));
    }
}
