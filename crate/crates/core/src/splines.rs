//! B-spline bases on a closed interval.
//!
//! Bases are stored as clamped knot vectors and evaluated with the Cox-de Boor
//! recurrence. Interior knots are evenly spaced between the endpoints, so an
//! order-4 basis of dimension `k` spans the same space as the truncated-power
//! family `1, x, x^2, x^3, |x - l_j|_+^3` with `k - 4` knots `l_j`.

use thiserror::Error;

use crate::lpsolve::{self, Constraints, LinearProgram, LpError, LpStatus, Sense};
use crate::shapes::{ShapeError, ShapeSpec};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SplineError {
    #[error("basis dimension {dimension} is smaller than the spline order {order}")]
    DimensionBelowOrder { order: usize, dimension: usize },

    #[error("spline order must be at least 1")]
    ZeroOrder,

    #[error("invalid domain [{lo}, {hi}]: endpoints must be finite with lo < hi")]
    InvalidDomain { lo: f64, hi: f64 },

    #[error("x = {x} lies outside the basis domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("derivative order {deriv} is not below the spline order {order}")]
    DerivativeTooHigh { deriv: usize, order: usize },

    #[error("target has {targets} values but the fit grid has {grid} points")]
    TargetLength { targets: usize, grid: usize },

    #[error("non-finite target value at fit-grid index {0}")]
    NonFiniteTarget(usize),

    #[error("shape constraints are mutually infeasible on the fit grid")]
    Infeasible,

    #[error(transparent)]
    Shape(#[from] ShapeError),

    #[error(transparent)]
    Lp(#[from] LpError),
}

/// A clamped B-spline basis with evenly spaced interior knots.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    order: usize,
    dimension: usize,
    lo: f64,
    hi: f64,
    /// Full knot vector: `lo` repeated `order` times, the interior knots, then
    /// `hi` repeated `order` times. Length `dimension + order`.
    knots: Vec<f64>,
}

impl BSplineBasis {
    /// Builds a basis of the given order (4 = cubic) and dimension on `[lo, hi]`.
    ///
    /// Interior knot `j` (for `j = 1..=dimension - order`) sits at
    /// `(j * hi + (m - j) * lo) / m` with `m = dimension - order + 1`; for
    /// order 4 this is the rule `j/(k-3) x_max + (k-3-j)/(k-3) x_min`.
    pub fn new(lo: f64, hi: f64, order: usize, dimension: usize) -> Result<Self, SplineError> {
        if order == 0 {
            return Err(SplineError::ZeroOrder);
        }
        if dimension < order {
            return Err(SplineError::DimensionBelowOrder { order, dimension });
        }
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(SplineError::InvalidDomain { lo, hi });
        }
        let interior = dimension - order;
        let segments = (interior + 1) as f64;
        let mut knots = Vec::with_capacity(dimension + order);
        knots.extend(std::iter::repeat_n(lo, order));
        for j in 1..=interior {
            let jf = j as f64;
            knots.push((jf * hi + (segments - jf) * lo) / segments);
        }
        knots.extend(std::iter::repeat_n(hi, order));
        Ok(Self {
            order,
            dimension,
            lo,
            hi,
            knots,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[self.order..self.dimension]
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    fn check_domain(&self, x: f64) -> Result<(), SplineError> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(SplineError::OutOfDomain {
                x,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    /// Index `s` of the knot span with `t[s] <= x < t[s + 1]`. At the right
    /// endpoint the last non-empty span is used.
    fn span(&self, x: f64) -> usize {
        let degree = self.order - 1;
        let last = self.dimension - 1;
        if x >= self.hi {
            return last;
        }
        // knots[degree..=last + 1] is sorted; find the last knot <= x.
        let slice = &self.knots[degree..=last + 1];
        let pos = slice.partition_point(|&t| t <= x);
        (degree + pos - 1).clamp(degree, last)
    }

    /// Evaluates all `dimension` basis functions at `x`.
    pub fn eval(&self, x: f64) -> Result<Vec<f64>, SplineError> {
        self.eval_deriv(x, 0)
    }

    /// Evaluates the `deriv`-th derivative of every basis function at `x`.
    ///
    /// At interior knots where the derivative jumps the right limit is
    /// returned (at the right endpoint, the left limit).
    pub fn eval_deriv(&self, x: f64, deriv: usize) -> Result<Vec<f64>, SplineError> {
        if deriv >= self.order {
            return Err(SplineError::DerivativeTooHigh {
                deriv,
                order: self.order,
            });
        }
        self.check_domain(x)?;
        let span = self.span(x);
        let local = self.local_derivs(span, x, deriv);
        let mut out = vec![0.0; self.dimension];
        let first = span + 1 - self.order;
        out[first..=span].copy_from_slice(&local);
        Ok(out)
    }

    /// Value of the spline `sum_k beta_k B_k` (or its derivative) at `x`.
    pub fn eval_combination(&self, beta: &[f64], x: f64, deriv: usize) -> Result<f64, SplineError> {
        let row = self.eval_deriv(x, deriv)?;
        Ok(row.iter().zip(beta).map(|(a, b)| a * b).sum())
    }

    /// Nonzero basis functions on `span` and their `deriv`-th derivatives
    /// (the triangular-table algorithm of Piegl & Tiller, A2.3). Returns the
    /// `order` values for functions `span - degree ..= span`.
    fn local_derivs(&self, span: usize, x: f64, deriv: usize) -> Vec<f64> {
        let p = self.order - 1;
        let t = &self.knots;
        // ndu[j][r]: basis values (upper triangle incl. diagonal) and knot
        // differences (strict lower triangle).
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        if deriv == 0 {
            return (0..=p).map(|j| ndu[j][p]).collect();
        }

        let mut out = vec![0.0; p + 1];
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            let mut d = 0.0;
            for k in 1..=deriv {
                d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    let rk = rk as usize;
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                    d = a[s2][0] * ndu[rk][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                std::mem::swap(&mut s1, &mut s2);
            }
            out[r] = d;
        }
        let mut factor = p as f64;
        for k in 1..=deriv {
            if k > 1 {
                factor *= (p + 1 - k) as f64;
            }
        }
        for v in &mut out {
            *v *= factor;
        }
        out
    }
}

/// Result of [`constrained_sup_approx`].
#[derive(Debug, Clone)]
pub struct SupApproximation {
    pub beta: Vec<f64>,
    pub sup_error: f64,
}

/// Best shape-constrained sup-norm approximation of `target` (values on
/// `fit_grid`) by the spline space of `basis`.
///
/// Solves `min t` over `(beta, t)` subject to `|Phi(x)'beta - target(x)| <= t`
/// and the shape rows of `shape`, both imposed at every point of `fit_grid`.
pub fn constrained_sup_approx(
    target: &[f64],
    basis: &BSplineBasis,
    shape: &ShapeSpec,
    fit_grid: &[f64],
) -> Result<SupApproximation, SplineError> {
    if target.len() != fit_grid.len() {
        return Err(SplineError::TargetLength {
            targets: target.len(),
            grid: fit_grid.len(),
        });
    }
    if let Some(i) = target.iter().position(|v| !v.is_finite()) {
        return Err(SplineError::NonFiniteTarget(i));
    }
    let k = basis.dimension();
    let shape_rows = shape.materialize(basis, fit_grid)?;

    let mut constraints = Constraints::new(k + 1);
    let mut coeffs = vec![0.0; k + 1];
    for (&x, &y) in fit_grid.iter().zip(target) {
        let phi = basis.eval(x)?;
        // phi'beta - t <= y
        coeffs[..k].copy_from_slice(&phi);
        coeffs[k] = -1.0;
        constraints.push_row(&coeffs, y)?;
        // -phi'beta - t <= -y
        for (c, p) in coeffs[..k].iter_mut().zip(&phi) {
            *c = -p;
        }
        constraints.push_row(&coeffs, -y)?;
    }
    for (row, rhs) in shape_rows.iter_rows() {
        coeffs[..k].copy_from_slice(row);
        coeffs[k] = 0.0;
        constraints.push_row(&coeffs, rhs)?;
    }

    let mut objective = vec![0.0; k + 1];
    objective[k] = 1.0;
    let lp = LinearProgram::new(objective, Sense::Minimize, constraints)?;
    let result = lpsolve::solve(&lp)?;
    match result.status {
        LpStatus::Optimal => {
            let mut beta = result.solution;
            let t = beta.pop().unwrap_or(0.0);
            Ok(SupApproximation {
                beta,
                sup_error: t.max(0.0),
            })
        }
        LpStatus::Infeasible => Err(SplineError::Infeasible),
        // t >= 0 is implied by any pair of fit rows, so the program is bounded.
        LpStatus::Unbounded => unreachable!("sup-norm approximation LP is bounded below"),
    }
}
