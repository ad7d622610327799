//! Series least-squares first stage: the reduced form `g(z) = E[Y | Z = z]`
//! and the conditional means `Pi(z) = E[Phi(X) | Z = z]` of the structural
//! basis, both regressed on an instrument spline basis `Psi`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::splines::{BSplineBasis, SplineError};

/// Above this Gram condition number the fit is refused.
pub const MAX_GRAM_CONDITION: f64 = 1e12;
/// Above this Gram condition number a warning is logged.
pub const WARN_GRAM_CONDITION: f64 = 1e8;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum FirstStageError {
    #[error("sample columns have different lengths (y: {y}, x: {x}, z: {z})")]
    LengthMismatch { y: usize, x: usize, z: usize },

    #[error("sample is empty")]
    Empty,

    #[error("non-finite {column} value at row {row}")]
    NonFinite { column: &'static str, row: usize },

    #[error("{n} observations cannot identify {l} instrument basis coefficients")]
    TooFewObservations { n: usize, l: usize },

    #[error(
        "instrument Gram matrix is singular (condition number {condition:e}) with L = {l} basis functions and n = {n} observations"
    )]
    SingularDesign { l: usize, n: usize, condition: f64 },

    #[error(transparent)]
    Spline(#[from] SplineError),
}

/// Observed triples `(Y_i, X_i, Z_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    y: Vec<f64>,
    x: Vec<f64>,
    z: Vec<f64>,
}

impl Sample {
    pub fn new(y: Vec<f64>, x: Vec<f64>, z: Vec<f64>) -> Result<Self, FirstStageError> {
        if y.len() != x.len() || x.len() != z.len() {
            return Err(FirstStageError::LengthMismatch {
                y: y.len(),
                x: x.len(),
                z: z.len(),
            });
        }
        if y.is_empty() {
            return Err(FirstStageError::Empty);
        }
        for (column, values) in [("y", &y), ("x", &x), ("z", &z)] {
            if let Some(row) = values.iter().position(|v| !v.is_finite()) {
                return Err(FirstStageError::NonFinite { column, row });
            }
        }
        Ok(Self { y, x, z })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn x_range(&self) -> (f64, f64) {
        min_max(&self.x)
    }

    pub fn z_range(&self) -> (f64, f64) {
        min_max(&self.z)
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn design(basis: &BSplineBasis, points: &[f64]) -> Result<DMatrix<f64>, SplineError> {
    let mut m = DMatrix::zeros(points.len(), basis.dimension());
    for (i, &p) in points.iter().enumerate() {
        for (j, v) in basis.eval(p)?.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

/// `Q = (1/n) sum_i Psi(z_i) Psi(z_i)'`.
pub fn gram_matrix(z_basis: &BSplineBasis, z: &[f64]) -> Result<DMatrix<f64>, SplineError> {
    let psi = design(z_basis, z)?;
    let n = z.len().max(1) as f64;
    Ok(psi.tr_mul(&psi) / n)
}

/// Fitted reduced form and basis conditional means.
#[derive(Debug, Clone)]
pub struct FirstStageFit {
    g_coef: DVector<f64>,
    /// `L x K`; column `k` holds the coefficients of `Pi_k`.
    pi_coef: DMatrix<f64>,
    gram_condition: f64,
    z_basis: BSplineBasis,
    x_basis: BSplineBasis,
}

impl FirstStageFit {
    /// Least-squares projection of `Y` and of each `Phi_k(X)` on `Psi(Z)`.
    ///
    /// Solved through a Householder QR of the `n x L` design, sharing one
    /// factorization across all `K + 1` right-hand sides.
    pub fn fit(sample: &Sample, z_basis: &BSplineBasis, x_basis: &BSplineBasis) -> Result<Self, FirstStageError> {
        let n = sample.len();
        let l = z_basis.dimension();
        let k = x_basis.dimension();
        if n < l {
            return Err(FirstStageError::TooFewObservations { n, l });
        }
        let psi = design(z_basis, sample.z())?;
        let mut rhs = DMatrix::zeros(n, k + 1);
        for i in 0..n {
            rhs[(i, 0)] = sample.y()[i];
            for (j, v) in x_basis.eval(sample.x()[i])?.into_iter().enumerate() {
                rhs[(i, j + 1)] = v;
            }
        }

        let qr = psi.qr();
        let r = qr.r();
        let sv = r.singular_values();
        let (smax, smin) = sv
            .iter()
            .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
        let gram_condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
        if !(gram_condition <= MAX_GRAM_CONDITION) {
            return Err(FirstStageError::SingularDesign {
                l,
                n,
                condition: gram_condition,
            });
        }
        if gram_condition > WARN_GRAM_CONDITION {
            warn!("instrument Gram matrix is ill-conditioned: condition number {gram_condition:e} (L = {l}, n = {n})");
        }

        qr.q_tr_mul(&mut rhs);
        let top = rhs.rows(0, l).into_owned();
        let coef = r.solve_upper_triangular(&top).ok_or(FirstStageError::SingularDesign {
            l,
            n,
            condition: gram_condition,
        })?;
        let g_coef = coef.column(0).into_owned();
        let pi_coef = coef.columns(1, k).into_owned();
        Ok(Self {
            g_coef,
            pi_coef,
            gram_condition,
            z_basis: z_basis.clone(),
            x_basis: x_basis.clone(),
        })
    }

    pub fn g_coef(&self) -> &[f64] {
        self.g_coef.as_slice()
    }

    pub fn pi_coef(&self) -> &DMatrix<f64> {
        &self.pi_coef
    }

    pub fn gram_condition(&self) -> f64 {
        self.gram_condition
    }

    pub fn z_basis(&self) -> &BSplineBasis {
        &self.z_basis
    }

    pub fn x_basis(&self) -> &BSplineBasis {
        &self.x_basis
    }

    /// `(g_hat(z), Pi_hat(z))`.
    pub fn predict(&self, z: f64) -> Result<(f64, Vec<f64>), SplineError> {
        let psi = DVector::from_vec(self.z_basis.eval(z)?);
        let g = psi.dot(&self.g_coef);
        let pi = self.pi_coef.tr_mul(&psi);
        Ok((g, pi.as_slice().to_vec()))
    }

    pub fn reduced_form(&self, z: f64) -> Result<f64, SplineError> {
        Ok(self.predict(z)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn uniform_sample(n: usize, seed: u64, f: impl Fn(f64) -> f64, sd: f64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd.max(1e-300)).unwrap();
        let z: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = z
            .iter()
            .map(|&zi| f(zi) + if sd > 0.0 { noise.sample(&mut rng) } else { 0.0 })
            .collect();
        Sample::new(y, z.clone(), z).unwrap()
    }

    fn bases(sample: &Sample, l: usize, k: usize) -> (BSplineBasis, BSplineBasis) {
        let (zl, zh) = sample.z_range();
        let (xl, xh) = sample.x_range();
        (
            BSplineBasis::new(zl, zh, 4, l).unwrap(),
            BSplineBasis::new(xl, xh, 4, k).unwrap(),
        )
    }

    #[test]
    fn sample_validation() {
        assert!(matches!(
            Sample::new(vec![1.0], vec![1.0, 2.0], vec![1.0]),
            Err(FirstStageError::LengthMismatch { .. })
        ));
        assert_eq!(Sample::new(vec![], vec![], vec![]), Err(FirstStageError::Empty));
        assert_eq!(
            Sample::new(vec![1.0, 2.0], vec![0.0, f64::NAN], vec![0.0, 1.0]),
            Err(FirstStageError::NonFinite { column: "x", row: 1 })
        );
    }

    #[test]
    fn gram_of_single_point_is_rank_one() {
        let basis = BSplineBasis::new(0.0, 1.0, 4, 6).unwrap();
        let q = gram_matrix(&basis, &[0.3]).unwrap();
        let e = DVector::from_vec(basis.eval(0.3).unwrap());
        assert_abs_diff_eq!((&q - &e * e.transpose()).amax(), 0.0, epsilon = 1e-15);
        let rank = q.clone().svd(false, false).rank(1e-12);
        assert_eq!(rank, 1);
        assert_eq!((&q - q.transpose()).amax(), 0.0);
    }

    #[test]
    fn gram_is_well_conditioned_for_uniform_draws() {
        let s = uniform_sample(10_000, 3, |z| z, 0.0);
        let basis = BSplineBasis::new(0.0, 1.0, 4, 6).unwrap();
        let q = gram_matrix(&basis, s.z()).unwrap();
        assert_eq!((&q - q.transpose()).amax(), 0.0);
        let eig = q.symmetric_eigen();
        let min = eig.eigenvalues.min();
        assert!(min > 1e-3, "{min}");
    }

    #[test]
    fn constant_outcome_is_reproduced() {
        let s = uniform_sample(300, 1, |_| 0.3, 0.0);
        let (zb, xb) = bases(&s, 6, 10);
        let fit = FirstStageFit::fit(&s, &zb, &xb).unwrap();
        for i in 0..=20 {
            let z = i as f64 / 20.0 * 0.99 + 0.005;
            assert_abs_diff_eq!(fit.reduced_form(z.clamp(zb.domain().0, zb.domain().1)).unwrap(), 0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn regressing_basis_on_itself_is_exact() {
        let s = uniform_sample(400, 2, |z| z, 0.0);
        let (zb, _) = bases(&s, 8, 8);
        let fit = FirstStageFit::fit(&s, &zb, &zb).unwrap();
        let (lo, hi) = zb.domain();
        for i in 0..=30 {
            let z = lo + (hi - lo) * i as f64 / 30.0;
            let (_, pi) = fit.predict(z).unwrap();
            for (a, b) in pi.iter().zip(zb.eval(z).unwrap()) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn smooth_reduced_form_recovered() {
        let s = uniform_sample(20_000, 11, |z| z * z, 0.1);
        let (zb, xb) = bases(&s, 6, 10);
        let fit = FirstStageFit::fit(&s, &zb, &xb).unwrap();
        let (lo, hi) = zb.domain();
        let err = (0..100)
            .map(|i| {
                let z = lo + (hi - lo) * i as f64 / 99.0;
                (fit.reduced_form(z).unwrap() - z * z).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 0.02, "{err}");
    }

    #[test]
    fn interpolation_when_n_equals_l() {
        let z = vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let y = vec![0.1, 0.5, -0.2, 0.7, 0.3, 0.9];
        let s = Sample::new(y.clone(), z.clone(), z.clone()).unwrap();
        let zb = BSplineBasis::new(0.0, 1.0, 4, 6).unwrap();
        let fit = FirstStageFit::fit(&s, &zb, &zb).unwrap();
        for (zi, yi) in z.iter().zip(&y) {
            assert_abs_diff_eq!(fit.reduced_form(*zi).unwrap(), *yi, epsilon = 1e-10);
        }
    }

    #[test]
    fn linear_in_outcome() {
        let s = uniform_sample(500, 5, |z| (3.0 * z).sin(), 0.2);
        let doubled = Sample::new(s.y().iter().map(|v| 2.0 * v).collect(), s.x().to_vec(), s.z().to_vec()).unwrap();
        let (zb, xb) = bases(&s, 6, 10);
        let a = FirstStageFit::fit(&s, &zb, &xb).unwrap();
        let b = FirstStageFit::fit(&doubled, &zb, &xb).unwrap();
        for &z in &[0.1, 0.5, 0.77] {
            let (g1, _) = a.predict(z).unwrap();
            let (g2, _) = b.predict(z).unwrap();
            assert_abs_diff_eq!(g2, 2.0 * g1, epsilon = 1e-12 * (1.0 + g1.abs()));
        }
    }

    #[test]
    fn normal_equations_hold() {
        let s = uniform_sample(2_000, 9, |z| 0.5 + z.powi(3), 0.3);
        let (zb, xb) = bases(&s, 7, 10);
        let fit = FirstStageFit::fit(&s, &zb, &xb).unwrap();
        let q = gram_matrix(&zb, s.z()).unwrap();
        let psi = design(&zb, s.z()).unwrap();
        let y = DVector::from_column_slice(s.y());
        let moment = psi.tr_mul(&y) / s.len() as f64;
        let resid = &q * DVector::from_column_slice(fit.g_coef()) - moment;
        let ymax = s.y().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(resid.amax() < 1e-10 * (1.0 + ymax), "{}", resid.amax());
    }

    #[test]
    fn pi_rows_lie_in_instrument_span() {
        let s = uniform_sample(1_000, 4, |z| z, 0.0);
        let (zb, xb) = bases(&s, 6, 10);
        let fit = FirstStageFit::fit(&s, &zb, &xb).unwrap();
        // Evaluate Pi_hat at the sample instruments and refit on Psi.
        let mut pi_values = Vec::new();
        for &z in s.z() {
            pi_values.push(fit.predict(z).unwrap().1);
        }
        let psi = design(&zb, s.z()).unwrap();
        let target = DMatrix::from_fn(s.len(), xb.dimension(), |i, j| pi_values[i][j]);
        let refit = psi.clone().svd(true, true).solve(&target, 1e-14).unwrap();
        assert!((refit - fit.pi_coef()).amax() < 1e-8);
    }

    #[test]
    fn too_few_and_singular() {
        let zb = BSplineBasis::new(0.0, 1.0, 4, 6).unwrap();
        let s = Sample::new(vec![1.0; 3], vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(
            FirstStageFit::fit(&s, &zb, &zb).unwrap_err(),
            FirstStageError::TooFewObservations { n: 3, l: 6 }
        );
        // All instruments in one knot interval: rank-deficient design.
        let z: Vec<f64> = (0..50).map(|i| 0.01 * i as f64 / 50.0).collect();
        let s = Sample::new(vec![1.0; 50], z.clone(), z).unwrap();
        let err = FirstStageFit::fit(&s, &zb, &zb).unwrap_err();
        assert!(matches!(err, FirstStageError::SingularDesign { l: 6, n: 50, .. }), "{err:?}");
        assert!(err.to_string().contains("L = 6"));
    }

    #[test]
    fn predict_outside_domain_errors() {
        let s = uniform_sample(100, 1, |z| z, 0.0);
        let (zb, xb) = bases(&s, 6, 6);
        let fit = FirstStageFit::fit(&s, &zb, &xb).unwrap();
        assert!(matches!(fit.predict(1.5), Err(SplineError::OutOfDomain { .. })));
    }
}
