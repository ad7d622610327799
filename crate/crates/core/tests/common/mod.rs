//! Brute-force reference implementations shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use npiv_core::{Constraints, DiscreteModel, LinearProgram, LpStatus, Sense};
use rand::Rng;

/// Box half-widths used to detect unboundedness by vertex enumeration.
const INNER_BOX: f64 = 1e4;
const OUTER_BOX: f64 = 2e4;

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn best_vertex(rows: &[(Vec<f64>, f64)], c: &[f64], maximize: bool) -> Option<f64> {
    let k = c.len();
    let mut best: Option<f64> = None;
    for subset in combinations(rows.len(), k) {
        let a = DMatrix::from_fn(k, k, |r, j| rows[subset[r]].0[j]);
        let rhs = DVector::from_iterator(k, subset.iter().map(|&r| rows[r].1));
        let lu = a.lu();
        if lu.determinant().abs() < 1e-10 {
            continue;
        }
        let Some(x) = lu.solve(&rhs) else { continue };
        let feasible = rows.iter().all(|(coef, b)| {
            let lhs: f64 = coef.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
            lhs <= b + 1e-9 * (1.0 + b.abs())
        });
        if feasible {
            let v: f64 = c.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
            best = Some(match best {
                None => v,
                Some(b) if maximize => b.max(v),
                Some(b) => b.min(v),
            });
        }
    }
    best
}

fn boxed(lp: &LinearProgram, half: f64) -> Vec<(Vec<f64>, f64)> {
    let k = lp.objective().len();
    let mut rows: Vec<(Vec<f64>, f64)> = lp.constraints().iter_rows().map(|(r, b)| (r.to_vec(), b)).collect();
    for i in 0..k {
        let mut e = vec![0.0; k];
        e[i] = 1.0;
        rows.push((e.clone(), half));
        e[i] = -1.0;
        rows.push((e, half));
    }
    rows
}

/// Status and optimal value of a small LP by enumerating the vertices of the
/// feasible set intersected with two nested boxes.
pub fn vertex_enumeration(lp: &LinearProgram) -> (LpStatus, f64) {
    let maximize = lp.sense() == Sense::Maximize;
    let inner = best_vertex(&boxed(lp, INNER_BOX), lp.objective(), maximize);
    let Some(inner) = inner else {
        return (LpStatus::Infeasible, f64::NAN);
    };
    let outer = best_vertex(&boxed(lp, OUTER_BOX), lp.objective(), maximize).expect("outer box contains inner");
    if (outer - inner).abs() > 1e-6 * (1.0 + inner.abs()) {
        (LpStatus::Unbounded, f64::NAN)
    } else {
        (LpStatus::Optimal, inner)
    }
}

/// Small LP with integer coefficients in `[-4, 4]`. About a third are made
/// infeasible by a contradictory pair of rows; the rest are feasible by
/// construction and may be bounded or not.
pub fn random_small_lp<R: Rng>(rng: &mut R) -> LinearProgram {
    let k = rng.random_range(1..=3);
    let m = rng.random_range(1..=6);
    let x0: Vec<f64> = (0..k).map(|_| rng.random_range(-3..=3) as f64).collect();
    let mut rows = Constraints::new(k);
    for _ in 0..m {
        let coef: Vec<f64> = (0..k).map(|_| rng.random_range(-4..=4) as f64).collect();
        let lhs: f64 = coef.iter().zip(&x0).map(|(a, b)| a * b).sum();
        let slack = rng.random_range(0..=3) as f64;
        rows.push_row(&coef, lhs + slack).unwrap();
    }
    if rng.random_bool(0.3) {
        let coef: Vec<f64> = (0..k).map(|_| rng.random_range(-4..=4) as f64).collect();
        let neg: Vec<f64> = coef.iter().map(|v| -v).collect();
        let rhs = rng.random_range(-3..=3) as f64;
        rows.push_row(&coef, rhs).unwrap();
        rows.push_row(&neg, -rhs - 1.0).unwrap();
    }
    let c: Vec<f64> = (0..k).map(|_| rng.random_range(-3..=3) as f64).collect();
    let sense = if rng.random_bool(0.5) { Sense::Maximize } else { Sense::Minimize };
    LinearProgram::new(c, sense, rows).unwrap()
}

/// Random discrete model with a full-rank `p x m` joint pmf.
pub fn random_full_rank_model<R: Rng>(rng: &mut R, p: usize, m: usize) -> DiscreteModel {
    loop {
        let raw: Vec<Vec<f64>> = (0..p).map(|_| (0..m).map(|_| rng.random_range(0.05..1.0)).collect()).collect();
        let total: f64 = raw.iter().flatten().sum();
        let pmf: Vec<Vec<f64>> = raw.iter().map(|r| r.iter().map(|v| v / total).collect()).collect();
        let mat = DMatrix::from_fn(p, m, |j, i| pmf[j][i]);
        let sv = mat.singular_values();
        if sv.min() / sv.max() < 1e-3 {
            continue;
        }
        let g0 = (0..p).map(|_| rng.random_range(0.0..1.0)).collect();
        return DiscreteModel::new(
            (0..m).map(|i| i as f64).collect(),
            (0..p).map(|j| j as f64).collect(),
            pmf,
            g0,
        )
        .unwrap();
    }
}

/// Worst-case bias of `E[w(X) h(X)]` over `u` in the ellipsoid
/// `sum_j mu_Z(j) u_j^2 <= b^2`, for a square invertible model: the functional
/// moves by `v'u` with `v = A^{-T} (mu_X * w)`, so the maximum is
/// `b sqrt(v' D^{-1} v)`, `D = diag(mu_Z)`.
pub fn ellipsoid_bias(model: &DiscreteModel, w: &[f64], b: f64) -> f64 {
    let m = model.m();
    assert_eq!(model.p(), m, "ellipsoid oracle needs a square model");
    let cond = model.conditional_x_given_z();
    let a = DMatrix::from_fn(m, m, |j, i| cond[j][i]);
    let mu_x = model.mu_x();
    let mu_z = model.mu_z();
    let target = DVector::from_iterator(m, (0..m).map(|i| mu_x[i] * w[i]));
    let v = a.transpose().lu().solve(&target).expect("invertible model");
    b * (0..m).map(|j| v[j] * v[j] / mu_z[j]).sum::<f64>().sqrt()
}
