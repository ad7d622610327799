//! Envelope estimation for the identified set.
//!
//! The moment inequality `|E[Y - h(X) | Z]| <= b` is replaced by its series
//! analogue `|g_hat(z) - Pi_hat(z)'beta| <= b` on an instrument grid, the shape
//! restriction is imposed on a regressor grid, and at every regressor grid
//! point `x` the envelope values are `min/max Phi(x)'beta` over the resulting
//! polytope. The polytope does not depend on `x`, so feasibility is decided
//! once and all `2 |x grid|` programs share one constraint set.

use log::{debug, info};
use thiserror::Error;

use crate::firststage::{FirstStageError, FirstStageFit, Sample};
use crate::lpsolve::{self, Constraints, LpError, LpStatus, Sense};
use crate::shapes::{ShapeError, ShapeSpec, DEFAULT_BOUND_FLOOR};
use crate::splines::{BSplineBasis, SplineError};

/// Tolerance for `lower <= upper`.
pub const ENVELOPE_ORDER_TOL: f64 = 1e-7;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum BoundsError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("all observed {0} values are identical")]
    DegenerateDomain(&'static str),

    #[error("at least two observations are required, got {0}")]
    TooFewObservations(usize),

    #[error("envelope program at x = {x} is unbounded")]
    Unbounded { x: f64 },

    #[error("envelope program at x = {x} reported {status:?} after the feasibility check succeeded")]
    Inconsistent { x: f64, status: LpStatus },

    #[error("lower envelope exceeds upper envelope by {gap:e} at x = {x}")]
    CrossedEnvelopes { x: f64, gap: f64 },

    #[error("band is infeasible")]
    InfeasibleBand,

    #[error("point estimate has {got} values, band has {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error(transparent)]
    FirstStage(#[from] FirstStageError),

    #[error(transparent)]
    Spline(#[from] SplineError),

    #[error(transparent)]
    Shape(#[from] ShapeError),

    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone)]
pub struct BoundsConfig {
    /// Bound on `|E[Y - h(X) | Z]|`, in outcome units.
    pub b: f64,
    pub shape: ShapeSpec,
    /// Spline order of both bases (4 = cubic).
    pub order: usize,
    /// Dimension `K` of the structural basis `Phi`.
    pub k_dim: usize,
    /// Dimension `L` of the instrument basis `Psi`.
    pub l_dim: usize,
    pub x_grid_size: usize,
    pub z_grid_size: usize,
    /// Instrument grid spans the `trim` and `1 - trim` sample quantiles.
    pub z_quantile_trim: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            b: 0.005,
            shape: ShapeSpec::engel(1.0).expect("positive curvature bound"),
            order: 4,
            k_dim: 10,
            l_dim: 6,
            x_grid_size: 100,
            z_grid_size: 100,
            z_quantile_trim: 0.005,
        }
    }
}

impl BoundsConfig {
    pub fn with_b(mut self, b: f64) -> Self {
        self.b = b;
        self
    }

    pub fn with_shape(mut self, shape: ShapeSpec) -> Self {
        self.shape = shape;
        self
    }

    pub fn validate(&self) -> Result<(), BoundsError> {
        if !(self.b >= 0.0) || !self.b.is_finite() {
            return Err(BoundsError::Config(format!("b must be finite and >= 0, got {}", self.b)));
        }
        if self.x_grid_size < 2 || self.z_grid_size < 2 {
            return Err(BoundsError::Config("grid sizes must be at least 2".into()));
        }
        if !(0.0..0.5).contains(&self.z_quantile_trim) {
            return Err(BoundsError::Config(format!(
                "quantile trim must lie in [0, 0.5), got {}",
                self.z_quantile_trim
            )));
        }
        if !self.shape.implies_uniform_bound() {
            return Err(BoundsError::Config(
                "shape restriction must bound h from above and below".into(),
            ));
        }
        Ok(())
    }
}

/// `n` evenly spaced points from `lo` to `hi`, endpoints exact.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { (lo + step * i as f64).min(hi) })
                .collect()
        }
    }
}

/// Sample quantile by linear interpolation of order statistics (type 7):
/// position `(n - 1) p` in the sorted sample.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grids {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// Half the regressor grid spacing.
    pub d1: f64,
    /// Half the instrument grid spacing.
    pub d2: f64,
}

pub fn build_grids(sample: &Sample, config: &BoundsConfig) -> Result<Grids, BoundsError> {
    if sample.len() < 2 {
        return Err(BoundsError::TooFewObservations(sample.len()));
    }
    let (xl, xh) = sample.x_range();
    if xl == xh {
        return Err(BoundsError::DegenerateDomain("x"));
    }
    let (zl, zh) = sample.z_range();
    if zl == zh {
        return Err(BoundsError::DegenerateDomain("z"));
    }
    let mut z_sorted = sample.z().to_vec();
    z_sorted.sort_by(f64::total_cmp);
    let trim = config.z_quantile_trim;
    let (ql, qh) = if trim == 0.0 {
        (zl, zh)
    } else {
        (quantile(&z_sorted, trim), quantile(&z_sorted, 1.0 - trim))
    };
    if ql >= qh {
        return Err(BoundsError::DegenerateDomain("trimmed z"));
    }
    let x = linspace(xl, xh, config.x_grid_size);
    let z = linspace(ql, qh, config.z_grid_size);
    Ok(Grids {
        d1: 0.5 * (xh - xl) / (config.x_grid_size - 1) as f64,
        d2: 0.5 * (qh - ql) / (config.z_grid_size - 1) as f64,
        x,
        z,
    })
}

/// Constraint set over `beta`: two rows per instrument grid point from the
/// moment inequality, then `d` rows per regressor grid point from `shape`.
pub fn assemble_program(
    fit: &FirstStageFit,
    shape: &ShapeSpec,
    b: f64,
    grids: &Grids,
) -> Result<Constraints, BoundsError> {
    let k = fit.x_basis().dimension();
    let mut rows = Constraints::with_capacity(k, 2 * grids.z.len() + shape.dim() * grids.x.len());
    for &z in &grids.z {
        let (g, pi) = fit.predict(z)?;
        rows.push_row(&pi, g + b)?;
        let neg: Vec<f64> = pi.iter().map(|v| -v).collect();
        rows.push_row(&neg, b - g)?;
    }
    rows.append(&shape.materialize(fit.x_basis(), &grids.x)?)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub d1_grid_gap: f64,
    pub d2_grid_gap: f64,
    pub gram_condition: f64,
    pub n_constraints: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeBand {
    pub x_grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub central: Vec<f64>,
    pub feasible: bool,
    pub diagnostics: Diagnostics,
}

impl EnvelopeBand {
    pub fn width(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }
}

/// First stage and grids for one sample; envelopes for any `(b, shape)` can
/// be computed from it without refitting.
#[derive(Debug, Clone)]
pub struct EnvelopeProblem {
    fit: FirstStageFit,
    grids: Grids,
}

impl EnvelopeProblem {
    /// Builds `Phi` on the observed regressor range and `Psi` on the observed
    /// instrument range, fits the first stage on all observations, and lays
    /// out the grids.
    pub fn prepare(sample: &Sample, config: &BoundsConfig) -> Result<Self, BoundsError> {
        config.validate()?;
        let grids = build_grids(sample, config)?;
        let (xl, xh) = sample.x_range();
        let (zl, zh) = sample.z_range();
        let x_basis = BSplineBasis::new(xl, xh, config.order, config.k_dim)?;
        let z_basis = BSplineBasis::new(zl, zh, config.order, config.l_dim)?;
        let fit = FirstStageFit::fit(sample, &z_basis, &x_basis)?;
        Ok(Self { fit, grids })
    }

    pub fn fit(&self) -> &FirstStageFit {
        &self.fit
    }

    pub fn grids(&self) -> &Grids {
        &self.grids
    }

    /// `g_hat` on the instrument grid.
    pub fn reduced_form(&self) -> Result<Vec<f64>, BoundsError> {
        self.grids
            .z
            .iter()
            .map(|&z| self.fit.reduced_form(z).map_err(BoundsError::from))
            .collect()
    }

    pub fn constraints(&self, b: f64, shape: &ShapeSpec) -> Result<Constraints, BoundsError> {
        assemble_program(&self.fit, shape, b, &self.grids)
    }

    pub fn envelopes(&self, b: f64, shape: &ShapeSpec) -> Result<EnvelopeBand, BoundsError> {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(BoundsError::Config(format!("b must be finite and >= 0, got {b}")));
        }
        if !shape.implies_uniform_bound() {
            return Err(BoundsError::Config(
                "shape restriction must bound h from above and below".into(),
            ));
        }
        let low = shape.bounds_below(&self.grids.x, DEFAULT_BOUND_FLOOR);
        if !low.is_empty() {
            debug!("shape rows {low:?} have bounds below {DEFAULT_BOUND_FLOOR:e}; interior feasibility relies on the other rows");
        }
        let constraints = self.constraints(b, shape)?;
        let diagnostics = Diagnostics {
            d1_grid_gap: self.grids.d1,
            d2_grid_gap: self.grids.d2,
            gram_condition: self.fit.gram_condition(),
            n_constraints: constraints.num_rows(),
        };
        let x_grid = self.grids.x.clone();

        if let Err(certificate) = lpsolve::find_feasible_point(&constraints)? {
            let support = certificate.iter().filter(|v| **v > 0.0).count();
            info!("estimated identified set is empty (b = {b}); Farkas certificate uses {support} rows");
            return Ok(EnvelopeBand {
                x_grid,
                lower: Vec::new(),
                upper: Vec::new(),
                central: Vec::new(),
                feasible: false,
                diagnostics,
            });
        }

        let objectives = x_grid
            .iter()
            .map(|&x| self.fit.x_basis().eval(x))
            .collect::<Result<Vec<_>, _>>()?;
        let upper = self.extremes(&constraints, &objectives, Sense::Maximize)?;
        let lower = self.extremes(&constraints, &objectives, Sense::Minimize)?;
        for ((&x, &l), &u) in x_grid.iter().zip(&lower).zip(&upper) {
            if l > u + ENVELOPE_ORDER_TOL * (1.0 + u.abs()) {
                return Err(BoundsError::CrossedEnvelopes { x, gap: l - u });
            }
        }
        let central = lower.iter().zip(&upper).map(|(l, u)| (l + u) / 2.0).collect();
        Ok(EnvelopeBand {
            x_grid,
            lower,
            upper,
            central,
            feasible: true,
            diagnostics,
        })
    }

    fn extremes(&self, constraints: &Constraints, objectives: &[Vec<f64>], sense: Sense) -> Result<Vec<f64>, BoundsError> {
        let results = lpsolve::solve_many(constraints, objectives, sense)?;
        results
            .into_iter()
            .zip(&self.grids.x)
            .map(|(r, &x)| match r.status {
                LpStatus::Optimal => Ok(r.value),
                LpStatus::Unbounded => Err(BoundsError::Unbounded { x }),
                status => Err(BoundsError::Inconsistent { x, status }),
            })
            .collect()
    }
}

/// Lower and upper envelopes of the estimated identified set on the
/// regressor grid, with their midpoint as the central estimate.
pub fn estimate_envelopes(sample: &Sample, config: &BoundsConfig) -> Result<EnvelopeBand, BoundsError> {
    EnvelopeProblem::prepare(sample, config)?.envelopes(config.b, &config.shape)
}

/// Pointwise worst-case bias `max(|p - lower|, |p - upper|)` of a point
/// estimate whose limit is `point`, over all functions in the band.
pub fn worst_case_bias_of(point: &[f64], band: &EnvelopeBand) -> Result<Vec<f64>, BoundsError> {
    if !band.feasible {
        return Err(BoundsError::InfeasibleBand);
    }
    if point.len() != band.lower.len() {
        return Err(BoundsError::LengthMismatch {
            expected: band.lower.len(),
            got: point.len(),
        });
    }
    Ok(point
        .iter()
        .zip(band.lower.iter().zip(&band.upper))
        .map(|(p, (l, u))| (p - l).abs().max((p - u).abs()))
        .collect())
}
