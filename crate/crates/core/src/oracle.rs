//! Exact population computations for finite discrete distributions.
//!
//! With `X` and `Z` supported on finitely many points the conditional
//! expectation operator is the row-stochastic matrix `A[j, i] = P(X = x_i |
//! Z = z_j)`, the reduced form is a vector `g0 = A h0 + u0`, and the identified
//! set is a polytope in `R^m`. Its envelopes are found by one LP per support
//! point, with no sieve or grid approximation.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::firststage::{FirstStageError, Sample};
use crate::lpsolve::{self, Constraints, LpError, LpStatus, Sense};

/// Tolerance on the total mass of a joint pmf.
const PMF_SUM_TOL: f64 = 1e-9;
/// Relative residual below which `B alpha = w` is treated as consistent.
const REPRESENTER_TOL: f64 = 1e-9;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("support point {0} has an unbounded envelope")]
    Unbounded(usize),

    #[error(transparent)]
    Lp(#[from] LpError),

    #[error(transparent)]
    Sample(#[from] FirstStageError),
}

/// A finite joint law of `(Z, X)` plus the reduced form `E[Y | Z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteModel {
    pub x_support: Vec<f64>,
    pub z_support: Vec<f64>,
    /// `p x m`; row `j` holds `P(Z = z_j, X = x_i)` over `i`.
    pub joint_pmf: Vec<Vec<f64>>,
    pub g0: Vec<f64>,
}

impl DiscreteModel {
    pub fn new(
        x_support: Vec<f64>,
        z_support: Vec<f64>,
        joint_pmf: Vec<Vec<f64>>,
        g0: Vec<f64>,
    ) -> Result<Self, OracleError> {
        let model = Self {
            x_support,
            z_support,
            joint_pmf,
            g0,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let m = self.x_support.len();
        let p = self.z_support.len();
        let bad = |msg: String| Err(OracleError::InvalidModel(msg));
        if m == 0 || p == 0 {
            return bad("supports must be nonempty".into());
        }
        if self.joint_pmf.len() != p {
            return bad(format!("joint_pmf has {} rows, expected {p}", self.joint_pmf.len()));
        }
        if self.g0.len() != p {
            return bad(format!("g0 has {} entries, expected {p}", self.g0.len()));
        }
        let mut total = 0.0;
        for (j, row) in self.joint_pmf.iter().enumerate() {
            if row.len() != m {
                return bad(format!("joint_pmf row {j} has {} entries, expected {m}", row.len()));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return bad(format!("joint_pmf row {j} has a negative or non-finite entry"));
            }
            let s: f64 = row.iter().sum();
            if s <= 0.0 {
                return bad(format!("z value {j} has zero probability"));
            }
            total += s;
        }
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return bad(format!("joint_pmf sums to {total}, expected 1"));
        }
        if self.x_support.iter().chain(&self.z_support).chain(&self.g0).any(|v| !v.is_finite()) {
            return bad("supports and g0 must be finite".into());
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.x_support.len()
    }

    pub fn p(&self) -> usize {
        self.z_support.len()
    }

    pub fn mu_z(&self) -> Vec<f64> {
        self.joint_pmf.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn mu_x(&self) -> Vec<f64> {
        (0..self.m())
            .map(|i| self.joint_pmf.iter().map(|r| r[i]).sum())
            .collect()
    }

    /// `A[j][i] = P(X = x_i | Z = z_j)`.
    pub fn conditional_x_given_z(&self) -> Vec<Vec<f64>> {
        self.joint_pmf
            .iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|v| v / s).collect()
            })
            .collect()
    }

    /// `(A h)_j = E[h(X) | Z = z_j]`.
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        self.conditional_x_given_z()
            .iter()
            .map(|row| row.iter().zip(h).map(|(a, v)| a * v).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteEnvelopes {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Envelopes of `{h in R^m : |g0 - A h| <= b, lo <= h <= hi}` (plus
/// `|h_{i+1} - 2 h_i + h_{i-1}| <= c * delta^2` when a curvature bound is
/// given), one support point at a time. `None` when the set is empty.
pub fn discrete_envelopes(
    model: &DiscreteModel,
    b: f64,
    h_bounds: (f64, f64),
    second_diff_bound: Option<f64>,
) -> Result<Option<DiscreteEnvelopes>, OracleError> {
    model.validate()?;
    if !(b >= 0.0) || !b.is_finite() {
        return Err(OracleError::InvalidArgument(format!("b must be finite and >= 0, got {b}")));
    }
    let (lo, hi) = h_bounds;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(OracleError::InvalidArgument(format!("invalid bounds [{lo}, {hi}]")));
    }
    let m = model.m();
    let mut rows = Constraints::new(m);
    for (a, &g) in model.conditional_x_given_z().iter().zip(&model.g0) {
        rows.push_row(a, g + b)?;
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        rows.push_row(&neg, b - g)?;
    }
    let mut unit = vec![0.0; m];
    for i in 0..m {
        unit[i] = 1.0;
        rows.push_row(&unit, hi)?;
        unit[i] = -1.0;
        rows.push_row(&unit, -lo)?;
        unit[i] = 0.0;
    }
    if let Some(c) = second_diff_bound {
        add_second_differences(&mut rows, &model.x_support, c)?;
    }

    if lpsolve::find_feasible_point(&rows)?.is_err() {
        return Ok(None);
    }
    let objectives: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            e
        })
        .collect();
    let extract = |sense| -> Result<Vec<f64>, OracleError> {
        lpsolve::solve_many(&rows, &objectives, sense)?
            .into_iter()
            .enumerate()
            .map(|(i, r)| match r.status {
                LpStatus::Optimal => Ok(r.value),
                _ => Err(OracleError::Unbounded(i)),
            })
            .collect()
    };
    let upper = extract(Sense::Maximize)?;
    let lower = extract(Sense::Minimize)?;
    Ok(Some(DiscreteEnvelopes { lower, upper }))
}

fn add_second_differences(rows: &mut Constraints, x: &[f64], c: f64) -> Result<(), OracleError> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(OracleError::InvalidArgument(format!("curvature bound must be >= 0, got {c}")));
    }
    let m = x.len();
    if m < 3 {
        return Ok(());
    }
    let delta = x[1] - x[0];
    let even = delta > 0.0
        && x.windows(2)
            .all(|w| ((w[1] - w[0]) - delta).abs() <= 1e-9 * delta.abs().max(1.0));
    if !even {
        return Err(OracleError::InvalidArgument(
            "second-difference bounds need an increasing, evenly spaced x_support".into(),
        ));
    }
    let r = c * delta * delta;
    let mut coeffs = vec![0.0; m];
    for i in 1..m - 1 {
        coeffs[i - 1] = 1.0;
        coeffs[i] = -2.0;
        coeffs[i + 1] = 1.0;
        rows.push_row(&coeffs, r)?;
        for v in &mut coeffs[i - 1..=i + 1] {
            *v = -*v;
        }
        rows.push_row(&coeffs, r)?;
        coeffs[i - 1..=i + 1].fill(0.0);
    }
    Ok(())
}

/// Worst-case bias of a linear functional `E[w(X) h(X)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionalBias {
    Finite(f64),
    /// `w` has no representer `w(X) = E[alpha(Z) | X]`; the bias is infinite
    /// for every `b > 0`.
    Unrepresentable,
}

impl FunctionalBias {
    pub fn value(self) -> f64 {
        match self {
            FunctionalBias::Finite(v) => v,
            FunctionalBias::Unrepresentable => f64::INFINITY,
        }
    }
}

/// Minimum-`L2(mu_Z)`-norm solution `alpha` of `E[alpha(Z) | X = x_i] = w_i`,
/// or `None` when the system is inconsistent. Support points of `X` with zero
/// mass impose no condition.
pub fn representer(model: &DiscreteModel, w: &[f64]) -> Result<Option<Vec<f64>>, OracleError> {
    model.validate()?;
    if w.len() != model.m() {
        return Err(OracleError::InvalidArgument(format!(
            "w has {} entries, expected {}",
            w.len(),
            model.m()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::InvalidArgument("w must be finite".into()));
    }
    let mu_z = model.mu_z();
    let mu_x = model.mu_x();
    let active: Vec<usize> = (0..model.m()).filter(|&i| mu_x[i] > 0.0).collect();
    let p = model.p();
    // C[i, j] = P(Z = z_j | X = x_i) / sqrt(mu_Z(z_j)); alpha = D^{-1/2} a.
    let c = DMatrix::from_fn(active.len(), p, |r, j| {
        let i = active[r];
        model.joint_pmf[j][i] / mu_x[i] / mu_z[j].sqrt()
    });
    let target = DVector::from_iterator(active.len(), active.iter().map(|&i| w[i]));
    let svd = c.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let a = svd
        .solve(&target, smax * 1e-12)
        .map_err(|e| OracleError::InvalidModel(e.to_string()))?;
    let resid = (&c * &a - &target).norm();
    if resid > REPRESENTER_TOL * (1.0 + target.norm()) {
        return Ok(None);
    }
    Ok(Some(a.iter().zip(&mu_z).map(|(v, m)| v / m.sqrt()).collect()))
}

/// `b` times the smallest `L2(mu_Z)` norm of a representer of `w`.
pub fn functional_bias(model: &DiscreteModel, w: &[f64], b: f64) -> Result<FunctionalBias, OracleError> {
    if !(b >= 0.0) || !b.is_finite() {
        return Err(OracleError::InvalidArgument(format!("b must be finite and >= 0, got {b}")));
    }
    let Some(alpha) = representer(model, w)? else {
        return Ok(FunctionalBias::Unrepresentable);
    };
    let norm_sq: f64 = alpha.iter().zip(model.mu_z()).map(|(a, m)| m * a * a).sum();
    Ok(FunctionalBias::Finite(b * norm_sq.sqrt()))
}

/// Draws `n` iid observations from the model's joint law with
/// `Y = h0(X) + u0(Z) + noise_sd * N(0, 1)`, so that
/// `E[Y - h0(X) | Z = z_j] = u0_j` exactly.
pub fn discrete_dgp_sampler(
    model: &DiscreteModel,
    h0: &[f64],
    u0: &[f64],
    noise_sd: f64,
    n: usize,
    seed: u64,
) -> Result<Sample, OracleError> {
    model.validate()?;
    if h0.len() != model.m() || u0.len() != model.p() {
        return Err(OracleError::InvalidArgument("h0/u0 lengths must match the supports".into()));
    }
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(OracleError::InvalidArgument(format!("noise_sd must be >= 0, got {noise_sd}")));
    }
    let m = model.m();
    let cells = WeightedIndex::new(model.joint_pmf.iter().flatten().copied())
        .map_err(|e| OracleError::InvalidModel(e.to_string()))?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for _ in 0..n {
        let cell = cells.sample(&mut rng);
        let (j, i) = (cell / m, cell % m);
        let eps: f64 = normal.sample(&mut rng);
        y.push(h0[i] + u0[j] + noise_sd * eps);
        x.push(model.x_support[i]);
        z.push(model.z_support[j]);
    }
    Ok(Sample::new(y, x, z)?)
}
