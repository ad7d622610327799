//! Synthetic data-generating processes with a known structural function.
//!
//! [`ContinuousDgp`] is a triangular design: `Z ~ U[lo, hi]`, an independent
//! `V ~ U[lo, hi]` drives both `X = rho Z + (1 - rho) V` and part of the
//! outcome error, so `X` is endogenous while `E[eps | Z] = 0`. The outcome is
//! `Y = h0(X) + u0(Z) + eps`.
//!
//! [`DiscreteRegressorDgp`] keeps `Z ~ U[0, 1]` but lets `X` take finitely many
//! values with Bernstein conditional probabilities, so `E[Phi(X) | Z]` is a
//! polynomial in `z` and the population moment conditions can be written down
//! exactly as a [`DiscreteModel`] on any instrument grid.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::firststage::Sample;
use crate::oracle::DiscreteModel;
use crate::quadrature::integrate;

/// Absolute tolerance for conditional-mean quadrature.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Points in the audit grid used to verify declared bounds.
pub const AUDIT_POINTS: usize = 10_000;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid DGP parameter: {0}")]
    Parameter(String),

    #[error("declared bound {declared} on {what} is violated: audit found {found}")]
    BoundViolated {
        what: &'static str,
        declared: f64,
        found: f64,
    },

    #[error("unknown {kind} {name:?}")]
    Unknown { kind: &'static str, name: String },
}

/// Catalogue of structural functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StructuralShape {
    Constant(f64),
    /// `0.2 + 0.6 / (1 + exp(4 (x - 0.5)))`: decreasing from 0.8 to 0.2, `|h''| < 0.93`.
    Logistic,
    /// `0.25 + 0.2 sin(3x)`, `|h''| <= 1.8`.
    Sine,
}

impl StructuralShape {
    pub fn value(self, x: f64) -> f64 {
        match self {
            StructuralShape::Constant(c) => c,
            StructuralShape::Logistic => 0.2 + 0.6 / (1.0 + (4.0 * (x - 0.5)).exp()),
            StructuralShape::Sine => 0.25 + 0.2 * (3.0 * x).sin(),
        }
    }

    pub fn second_derivative(self, x: f64) -> f64 {
        match self {
            StructuralShape::Constant(_) => 0.0,
            StructuralShape::Logistic => {
                let l = 1.0 / (1.0 + (4.0 * (x - 0.5)).exp());
                0.6 * 16.0 * l * (1.0 - l) * (1.0 - 2.0 * l)
            }
            StructuralShape::Sine => -1.8 * (3.0 * x).sin(),
        }
    }

    /// Published curvature bound, used when building the DGP.
    pub fn declared_curvature(self) -> f64 {
        match self {
            StructuralShape::Constant(_) => 0.0,
            StructuralShape::Logistic => 1.0,
            StructuralShape::Sine => 2.0,
        }
    }
}

impl fmt::Display for StructuralShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructuralShape::Constant(c) => write!(f, "constant:{c}"),
            StructuralShape::Logistic => f.write_str("logistic"),
            StructuralShape::Sine => f.write_str("sine"),
        }
    }
}

impl FromStr for StructuralShape {
    type Err = SynthError;

    /// `logistic`, `sine` or `constant:<value>`.
    fn from_str(s: &str) -> Result<Self, SynthError> {
        let unknown = || SynthError::Unknown {
            kind: "structural function",
            name: s.to_string(),
        };
        match s.split_once(':') {
            None if s == "logistic" => Ok(StructuralShape::Logistic),
            None if s == "sine" => Ok(StructuralShape::Sine),
            Some(("constant", v)) => v.parse().map(StructuralShape::Constant).map_err(|_| unknown()),
            _ => Err(unknown()),
        }
    }
}

/// Catalogue of instrument-level deviations `u0(z) = E[Y - h0(X) | Z = z]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InstrumentShift {
    Zero,
    Constant(f64),
    /// `amplitude * sin(frequency * z)`.
    Sine { amplitude: f64, frequency: f64 },
}

impl InstrumentShift {
    pub fn value(self, z: f64) -> f64 {
        match self {
            InstrumentShift::Zero => 0.0,
            InstrumentShift::Constant(c) => c,
            InstrumentShift::Sine { amplitude, frequency } => amplitude * (frequency * z).sin(),
        }
    }

    pub fn declared_sup(self) -> f64 {
        match self {
            InstrumentShift::Zero => 0.0,
            InstrumentShift::Constant(c) => c.abs(),
            InstrumentShift::Sine { amplitude, .. } => amplitude.abs(),
        }
    }
}

impl fmt::Display for InstrumentShift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstrumentShift::Zero => f.write_str("zero"),
            InstrumentShift::Constant(c) => write!(f, "constant:{c}"),
            InstrumentShift::Sine { amplitude, frequency } => write!(f, "sine:{amplitude}:{frequency}"),
        }
    }
}

impl FromStr for InstrumentShift {
    type Err = SynthError;

    /// `zero`, `constant:<v>` or `sine:<amplitude>:<frequency>`.
    fn from_str(s: &str) -> Result<Self, SynthError> {
        let unknown = || SynthError::Unknown {
            kind: "instrument shift",
            name: s.to_string(),
        };
        let parts: Vec<&str> = s.split(':').collect();
        let num = |v: &str| v.parse::<f64>().map_err(|_| unknown());
        match parts.as_slice() {
            ["zero"] => Ok(InstrumentShift::Zero),
            ["constant", v] => Ok(InstrumentShift::Constant(num(v)?)),
            ["sine", a, f] => Ok(InstrumentShift::Sine {
                amplitude: num(a)?,
                frequency: num(f)?,
            }),
            _ => Err(unknown()),
        }
    }
}

fn audit_grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (AUDIT_POINTS - 1) as f64;
    (0..AUDIT_POINTS).map(move |i| lo + step * i as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousDgp {
    h0: StructuralShape,
    u0: InstrumentShift,
    z_lo: f64,
    z_hi: f64,
    rho: f64,
    endogeneity: f64,
    noise_sd: f64,
}

impl ContinuousDgp {
    /// `rho` in `(0, 1]` is the instrument weight in `X`; `endogeneity` in
    /// `[0, 1]` is the share of the error's unit-variance core loaded on `V`.
    pub fn new(
        h0: StructuralShape,
        u0: InstrumentShift,
        (z_lo, z_hi): (f64, f64),
        rho: f64,
        endogeneity: f64,
        noise_sd: f64,
    ) -> Result<Self, SynthError> {
        let bad = |m: String| Err(SynthError::Parameter(m));
        if !(z_lo.is_finite() && z_hi.is_finite() && z_lo < z_hi) {
            return bad(format!("instrument support [{z_lo}, {z_hi}] is invalid"));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return bad(format!("rho must lie in (0, 1], got {rho}"));
        }
        if !(0.0..=1.0).contains(&endogeneity) {
            return bad(format!("endogeneity must lie in [0, 1], got {endogeneity}"));
        }
        if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
            return bad(format!("noise_sd must be finite and >= 0, got {noise_sd}"));
        }
        let dgp = Self {
            h0,
            u0,
            z_lo,
            z_hi,
            rho,
            endogeneity,
            noise_sd,
        };
        dgp.audit()?;
        Ok(dgp)
    }

    /// Logistic Engel-type curve on `[0, 1]` with a moderately strong instrument.
    pub fn engel(u0: InstrumentShift, noise_sd: f64) -> Result<Self, SynthError> {
        Self::new(StructuralShape::Logistic, u0, (0.0, 1.0), 0.6, 0.5, noise_sd)
    }

    fn audit(&self) -> Result<(), SynthError> {
        let (xl, xh) = self.x_support();
        let curv = audit_grid(xl, xh)
            .map(|x| self.h0.second_derivative(x).abs())
            .fold(0.0, f64::max);
        if curv > self.h0.declared_curvature() {
            return Err(SynthError::BoundViolated {
                what: "|h0''|",
                declared: self.h0.declared_curvature(),
                found: curv,
            });
        }
        let sup = audit_grid(self.z_lo, self.z_hi)
            .map(|z| self.u0.value(z).abs())
            .fold(0.0, f64::max);
        if sup > self.u0.declared_sup() {
            return Err(SynthError::BoundViolated {
                what: "|u0|",
                declared: self.u0.declared_sup(),
                found: sup,
            });
        }
        Ok(())
    }

    pub fn h0(&self) -> StructuralShape {
        self.h0
    }

    pub fn u0(&self) -> InstrumentShift {
        self.u0
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Support of `X` (equal to that of `Z`).
    pub fn x_support(&self) -> (f64, f64) {
        (self.z_lo, self.z_hi)
    }

    pub fn z_support(&self) -> (f64, f64) {
        (self.z_lo, self.z_hi)
    }

    /// Quantile function of `Z`.
    pub fn z_quantile(&self, p: f64) -> f64 {
        self.z_lo + p * (self.z_hi - self.z_lo)
    }

    pub fn generate(&self, n: usize, seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let width = self.z_hi - self.z_lo;
        let mid = 0.5 * (self.z_lo + self.z_hi);
        let load = self.endogeneity;
        let idio = (1.0 - load * load).sqrt();
        let mut y = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for _ in 0..n {
            let zi = self.z_lo + width * rng.random::<f64>();
            let vi = self.z_lo + width * rng.random::<f64>();
            let xi = self.rho * zi + (1.0 - self.rho) * vi;
            // (V - mid) * sqrt(12) / width has unit variance.
            let v_std = (vi - mid) * 12f64.sqrt() / width;
            let xi_noise: f64 = normal.sample(&mut rng);
            let eps = self.noise_sd * (load * v_std + idio * xi_noise);
            y.push(self.h0.value(xi) + self.u0.value(zi) + eps);
            x.push(xi);
            z.push(zi);
        }
        Sample::new(y, x, z).expect("generated sample is finite and non-empty")
    }

    /// `E[f(X) | Z = z]`: the average of `f(rho z + (1 - rho) v)` over `v`.
    pub fn conditional_mean<F: Fn(f64) -> f64>(&self, f: F, z: f64) -> f64 {
        if self.rho == 1.0 {
            return f(z);
        }
        let width = self.z_hi - self.z_lo;
        // Integrate in x = rho z + (1 - rho) v; the density of X | Z is uniform.
        let a = self.rho * z + (1.0 - self.rho) * self.z_lo;
        let b = self.rho * z + (1.0 - self.rho) * self.z_hi;
        integrate(f, a, b, QUADRATURE_TOL * (b - a)) / ((1.0 - self.rho) * width)
    }

    /// `g0(z) = E[h0(X) | Z = z] + u0(z)` on each grid point.
    pub fn population_reduced_form(&self, z_grid: &[f64]) -> Vec<f64> {
        z_grid
            .iter()
            .map(|&z| self.conditional_mean(|x| self.h0.value(x), z) + self.u0.value(z))
            .collect()
    }
}

/// `X` on `m` points with `P(X = x_i | Z = z) = C(m-1, i) z^i (1 - z)^(m-1-i)`,
/// `Z ~ U[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteRegressorDgp {
    x_support: Vec<f64>,
    h0: Vec<f64>,
    u0: InstrumentShift,
    noise_sd: f64,
    endogeneity: f64,
}

impl DiscreteRegressorDgp {
    pub fn new(
        x_support: Vec<f64>,
        h0: Vec<f64>,
        u0: InstrumentShift,
        noise_sd: f64,
        endogeneity: f64,
    ) -> Result<Self, SynthError> {
        if x_support.len() < 2 || x_support.len() != h0.len() {
            return Err(SynthError::Parameter(
                "need at least two support points and one h0 value per point".into(),
            ));
        }
        if !x_support.windows(2).all(|w| w[0] < w[1]) {
            return Err(SynthError::Parameter("x_support must be strictly increasing".into()));
        }
        if !(noise_sd >= 0.0) || !endogeneity.is_finite() {
            return Err(SynthError::Parameter("noise_sd and endogeneity must be finite, noise_sd >= 0".into()));
        }
        let sup = audit_grid(0.0, 1.0).map(|z| u0.value(z).abs()).fold(0.0, f64::max);
        if sup > u0.declared_sup() {
            return Err(SynthError::BoundViolated {
                what: "|u0|",
                declared: u0.declared_sup(),
                found: sup,
            });
        }
        Ok(Self {
            x_support,
            h0,
            u0,
            noise_sd,
            endogeneity,
        })
    }

    pub fn x_support(&self) -> &[f64] {
        &self.x_support
    }

    pub fn h0(&self) -> &[f64] {
        &self.h0
    }

    pub fn u0(&self) -> InstrumentShift {
        self.u0
    }

    pub fn probabilities(&self, z: f64) -> Vec<f64> {
        let d = self.x_support.len() - 1;
        let mut coef = 1.0;
        (0..=d)
            .map(|i| {
                if i > 0 {
                    coef = coef * (d + 1 - i) as f64 / i as f64;
                }
                coef * z.powi(i as i32) * (1.0 - z).powi((d - i) as i32)
            })
            .collect()
    }

    pub fn population_reduced_form(&self, z: f64) -> f64 {
        let p = self.probabilities(z);
        p.iter().zip(&self.h0).map(|(a, h)| a * h).sum::<f64>() + self.u0.value(z)
    }

    /// Exact moment conditions on `z_grid`, weighting grid points equally.
    pub fn population_model(&self, z_grid: &[f64]) -> DiscreteModel {
        let w = 1.0 / z_grid.len() as f64;
        let joint_pmf = z_grid
            .iter()
            .map(|&z| self.probabilities(z).into_iter().map(|p| p * w).collect())
            .collect();
        let g0 = z_grid.iter().map(|&z| self.population_reduced_form(z)).collect();
        DiscreteModel {
            x_support: self.x_support.clone(),
            z_support: z_grid.to_vec(),
            joint_pmf,
            g0,
        }
    }

    /// `Y = h0(X) + u0(Z) + noise_sd * (xi + endogeneity * (I - E[I | Z]))`
    /// where `I` is the index of the realized support point.
    pub fn generate(&self, n: usize, seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let d = (self.x_support.len() - 1) as f64;
        let mut y = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for _ in 0..n {
            let zi: f64 = rng.random();
            let probs = self.probabilities(zi);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut idx = probs.len() - 1;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    idx = i;
                    break;
                }
            }
            let xi_noise: f64 = normal.sample(&mut rng);
            let eps = self.noise_sd * (xi_noise + self.endogeneity * (idx as f64 - d * zi));
            y.push(self.h0[idx] + self.u0.value(zi) + eps);
            x.push(self.x_support[idx]);
            z.push(zi);
        }
        Sample::new(y, x, z).expect("generated sample is finite and non-empty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn catalogue_parsing() {
        assert_eq!("logistic".parse::<StructuralShape>().unwrap(), StructuralShape::Logistic);
        assert_eq!("constant:0.4".parse::<StructuralShape>().unwrap(), StructuralShape::Constant(0.4));
        assert!("cubic".parse::<StructuralShape>().is_err());
        assert_eq!(
            "sine:0.01:1".parse::<InstrumentShift>().unwrap(),
            InstrumentShift::Sine {
                amplitude: 0.01,
                frequency: 1.0
            }
        );
        assert_eq!("zero".parse::<InstrumentShift>().unwrap(), InstrumentShift::Zero);
        assert!("sine:0.1".parse::<InstrumentShift>().is_err());
        for s in ["logistic", "sine", "constant:0.25"] {
            assert_eq!(s.parse::<StructuralShape>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn second_derivatives_match_finite_differences() {
        let h = 1e-4;
        for shape in [StructuralShape::Logistic, StructuralShape::Sine] {
            for &x in &[0.1, 0.4, 0.5, 0.83] {
                let fd = (shape.value(x + h) - 2.0 * shape.value(x) + shape.value(x - h)) / (h * h);
                assert_abs_diff_eq!(shape.second_derivative(x), fd, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn declared_bounds_are_audited() {
        let err = ContinuousDgp::new(
            StructuralShape::Logistic,
            InstrumentShift::Zero,
            (-20.0, 20.0),
            0.5,
            0.0,
            0.1,
        );
        assert!(err.is_ok(), "logistic curvature < 1 everywhere");
        let dgp = ContinuousDgp::new(StructuralShape::Sine, InstrumentShift::Zero, (0.0, 1.0), 0.5, 0.0, 0.1);
        assert!(dgp.is_ok());
        assert!(ContinuousDgp::new(StructuralShape::Logistic, InstrumentShift::Zero, (0.0, 1.0), 0.0, 0.0, 0.1).is_err());
        assert!(ContinuousDgp::new(StructuralShape::Logistic, InstrumentShift::Zero, (0.0, 1.0), 0.5, 1.5, 0.1).is_err());
    }

    #[test]
    fn reproducible_and_noise_free() {
        let dgp = ContinuousDgp::engel(InstrumentShift::Zero, 0.0).unwrap();
        let a = dgp.generate(500, 3);
        assert_eq!(a, dgp.generate(500, 3));
        assert_ne!(a, dgp.generate(500, 4));
        for i in 0..a.len() {
            assert_eq!(a.y()[i], StructuralShape::Logistic.value(a.x()[i]));
            assert!(a.x()[i] >= 0.0 && a.x()[i] <= 1.0);
        }
    }

    #[test]
    fn reduced_form_degenerate_cases() {
        let dgp = ContinuousDgp::new(StructuralShape::Sine, InstrumentShift::Constant(0.01), (0.0, 1.0), 1.0, 0.0, 0.1)
            .unwrap();
        for (g, z) in dgp.population_reduced_form(&[0.0, 0.3, 1.0]).iter().zip([0.0, 0.3, 1.0]) {
            assert_eq!(*g, StructuralShape::Sine.value(z) + 0.01);
        }
        let flat = ContinuousDgp::new(StructuralShape::Constant(0.4), InstrumentShift::Zero, (0.0, 1.0), 0.3, 0.5, 0.1)
            .unwrap();
        for g in flat.population_reduced_form(&[0.0, 0.5, 1.0]) {
            assert_abs_diff_eq!(g, 0.4, epsilon = 1e-12);
        }
    }

    #[test]
    fn bernstein_probabilities() {
        let dgp = DiscreteRegressorDgp::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.1; 4], InstrumentShift::Zero, 0.0, 0.0)
            .unwrap();
        let p = dgp.probabilities(0.5);
        assert_eq!(p, vec![0.125, 0.375, 0.375, 0.125]);
        let model = dgp.population_model(&[0.0, 0.25, 1.0]);
        model.validate().unwrap();
        assert_abs_diff_eq!(model.g0[1], 0.1, epsilon = 1e-15);
    }
}
