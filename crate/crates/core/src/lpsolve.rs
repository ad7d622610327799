//! Dense linear programs over free variables.
//!
//! Problems have the inequality form `max/min c'beta  s.t.  A beta <= r` with
//! `beta` unrestricted in sign. They are solved through their dual,
//!
//! ```text
//! min r'y   s.t.   A'y = c,   y >= 0,
//! ```
//!
//! with a two-phase revised simplex whose basis is only `k x k` (`k` = number
//! of primal variables). Envelope problems have ~10 variables and several
//! hundred constraints, so the dual basis stays tiny. The primal optimum is the
//! vector of simplex multipliers of the optimal dual basis; an unbounded dual
//! ray is a Farkas certificate of primal infeasibility.

use rayon::prelude::*;
use thiserror::Error;

/// Primal feasibility tolerance (absolute per row, scaled by `1 + |rhs|`).
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Reduced-cost tolerance for optimality.
pub const OPTIMALITY_TOL: f64 = 1e-8;
/// Smallest acceptable pivot element.
pub const PIVOT_TOL: f64 = 1e-12;

/// Entries of the simplex direction below this are treated as zero in the
/// ratio test.
const RATIO_TOL: f64 = 1e-9;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum LpError {
    #[error("row has {got} coefficients, expected {expected}")]
    RowLength { expected: usize, got: usize },

    #[error("objective has {got} coefficients, expected {expected}")]
    ObjectiveLength { expected: usize, got: usize },

    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),

    #[error("simplex exceeded {0} pivots without terminating")]
    CyclingGuard(usize),

    #[error("basis became numerically singular (pivot {0:e})")]
    SingularBasis(f64),

    #[error("solution violates constraint {row} by {violation:e} after solve")]
    Breakdown { row: usize, violation: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// A set of linear inequalities `a_i' beta <= r_i` stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Constraints {
    cols: usize,
    coeffs: Vec<f64>,
    rhs: Vec<f64>,
}

impl Constraints {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            coeffs: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn with_capacity(cols: usize, rows: usize) -> Self {
        Self {
            cols,
            coeffs: Vec::with_capacity(rows * cols),
            rhs: Vec::with_capacity(rows),
        }
    }

    pub fn push_row(&mut self, coeffs: &[f64], rhs: f64) -> Result<(), LpError> {
        if coeffs.len() != self.cols {
            return Err(LpError::RowLength {
                expected: self.cols,
                got: coeffs.len(),
            });
        }
        if !rhs.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite("constraint row"));
        }
        self.coeffs.extend_from_slice(coeffs);
        self.rhs.push(rhs);
        Ok(())
    }

    /// Appends every row of `other`.
    pub fn append(&mut self, other: &Constraints) -> Result<(), LpError> {
        if other.cols != self.cols {
            return Err(LpError::RowLength {
                expected: self.cols,
                got: other.cols,
            });
        }
        self.coeffs.extend_from_slice(&other.coeffs);
        self.rhs.extend_from_slice(&other.rhs);
        Ok(())
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_vars(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coeffs[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.num_rows()).map(move |i| (self.row(i), self.rhs[i]))
    }

    /// Largest scaled violation `max_i (a_i'x - r_i) / (1 + |r_i|)`, with its row.
    pub fn max_violation(&self, x: &[f64]) -> Option<(usize, f64)> {
        self.iter_rows()
            .map(|(a, r)| (dot(a, x) - r) / (1.0 + r.abs()))
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn is_satisfied_by(&self, x: &[f64], tol: f64) -> bool {
        self.max_violation(x).is_none_or(|(_, v)| v <= tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    sense: Sense,
    constraints: Constraints,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, sense: Sense, constraints: Constraints) -> Result<Self, LpError> {
        check_objective(&objective, constraints.num_vars())?;
        Ok(Self {
            objective,
            sense,
            constraints,
        })
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn constraints(&self) -> &Constraints {
        &self.constraints
    }
}

fn check_objective(objective: &[f64], cols: usize) -> Result<(), LpError> {
    if objective.len() != cols {
        return Err(LpError::ObjectiveLength {
            expected: cols,
            got: objective.len(),
        });
    }
    if objective.iter().any(|c| !c.is_finite()) {
        return Err(LpError::NonFinite("objective"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    /// Objective value at `solution`; NaN unless optimal.
    pub value: f64,
    /// Optimal point; empty unless optimal.
    pub solution: Vec<f64>,
    /// Nonnegative row multipliers at the optimum: `A'y = c` when maximizing,
    /// `A'y = -c` when minimizing. Empty unless optimal.
    pub duals: Vec<f64>,
    /// Farkas certificate `y >= 0`, `y'A = 0`, `y'r < 0`; set when infeasible.
    pub certificate: Option<Vec<f64>>,
}

impl LpResult {
    fn infeasible(certificate: Vec<f64>) -> Self {
        Self {
            status: LpStatus::Infeasible,
            value: f64::NAN,
            solution: Vec::new(),
            duals: Vec::new(),
            certificate: Some(certificate),
        }
    }

    fn unbounded() -> Self {
        Self {
            status: LpStatus::Unbounded,
            value: f64::NAN,
            solution: Vec::new(),
            duals: Vec::new(),
            certificate: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpResult, LpError> {
    let scaled = ScaledRows::new(&lp.constraints);
    solve_scaled(&scaled, &lp.constraints, &lp.objective, lp.sense)
}

/// Solves one program per objective over a shared constraint set.
///
/// Each result is identical to an independent [`solve`] call; the row scaling
/// is computed once and the objectives are processed in parallel.
pub fn solve_many(
    constraints: &Constraints,
    objectives: &[Vec<f64>],
    sense: Sense,
) -> Result<Vec<LpResult>, LpError> {
    for obj in objectives {
        check_objective(obj, constraints.num_vars())?;
    }
    let scaled = ScaledRows::new(constraints);
    objectives
        .par_iter()
        .map(|obj| solve_scaled(&scaled, constraints, obj, sense))
        .collect()
}

/// Decides whether `A beta <= r` has a solution. Returns a feasible point, or
/// `Err` with a verified Farkas certificate.
pub fn find_feasible_point(constraints: &Constraints) -> Result<Result<Vec<f64>, Vec<f64>>, LpError> {
    let scaled = ScaledRows::new(constraints);
    let zero = vec![0.0; constraints.num_vars()];
    let res = solve_scaled(&scaled, constraints, &zero, Sense::Maximize)?;
    match res.status {
        LpStatus::Optimal => Ok(Ok(res.solution)),
        LpStatus::Infeasible => Ok(Err(res.certificate.unwrap_or_default())),
        LpStatus::Unbounded => unreachable!("zero objective cannot be unbounded"),
    }
}

/// Rows normalized to unit max-norm. Zero rows are split off: they are either
/// trivially satisfied (`r >= 0`) or make the program infeasible on their own.
struct ScaledRows {
    /// Original row index of each retained row.
    index: Vec<usize>,
    scale: Vec<f64>,
    cols: usize,
    coeffs: Vec<f64>,
    rhs: Vec<f64>,
    /// A zero row with negative right-hand side, if any.
    contradiction: Option<usize>,
}

impl ScaledRows {
    fn new(c: &Constraints) -> Self {
        let cols = c.num_vars();
        let mut out = Self {
            index: Vec::new(),
            scale: Vec::new(),
            cols,
            coeffs: Vec::with_capacity(c.coeffs.len()),
            rhs: Vec::new(),
            contradiction: None,
        };
        for (i, (row, r)) in c.iter_rows().enumerate() {
            let s = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if s == 0.0 {
                if r < -FEASIBILITY_TOL * (1.0 + r.abs()) && out.contradiction.is_none() {
                    out.contradiction = Some(i);
                }
                continue;
            }
            out.index.push(i);
            out.scale.push(s);
            out.coeffs.extend(row.iter().map(|v| v / s));
            out.rhs.push(r / s);
        }
        out
    }

    fn len(&self) -> usize {
        self.rhs.len()
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.coeffs[j * self.cols..(j + 1) * self.cols]
    }
}

fn solve_scaled(
    rows: &ScaledRows,
    original: &Constraints,
    objective: &[f64],
    sense: Sense,
) -> Result<LpResult, LpError> {
    let n_orig = original.num_rows();
    if let Some(i) = rows.contradiction {
        let mut cert = vec![0.0; n_orig];
        cert[i] = 1.0;
        return Ok(LpResult::infeasible(cert));
    }
    let c: Vec<f64> = match sense {
        Sense::Maximize => objective.to_vec(),
        Sense::Minimize => objective.iter().map(|v| -v).collect(),
    };

    let mut dual = DualSimplex::new(rows, &c);
    match dual.run()? {
        DualOutcome::Optimal { beta, y } => {
            if let Some((row, violation)) = original.max_violation(&beta) {
                if violation > FEASIBILITY_TOL {
                    return Err(LpError::Breakdown { row, violation });
                }
            }
            let mut duals = vec![0.0; n_orig];
            for (j, &yj) in y.iter().enumerate() {
                duals[rows.index[j]] = yj / rows.scale[j];
            }
            let value = dot(objective, &beta);
            Ok(LpResult {
                status: LpStatus::Optimal,
                value,
                solution: beta,
                duals,
                certificate: None,
            })
        }
        DualOutcome::Unbounded { ray } => Ok(LpResult::infeasible(lift_ray(rows, &ray, n_orig))),
        DualOutcome::Infeasible => {
            // Primal is unbounded or infeasible; decide with the zero objective.
            let zero = vec![0.0; rows.cols];
            let mut feas = DualSimplex::new(rows, &zero);
            match feas.run()? {
                DualOutcome::Optimal { .. } => Ok(LpResult::unbounded()),
                DualOutcome::Unbounded { ray } => {
                    Ok(LpResult::infeasible(lift_ray(rows, &ray, n_orig)))
                }
                DualOutcome::Infeasible => unreachable!("dual of the zero objective is always feasible"),
            }
        }
    }
}

fn lift_ray(rows: &ScaledRows, ray: &[f64], n_orig: usize) -> Vec<f64> {
    let mut cert = vec![0.0; n_orig];
    let norm = ray.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (j, &d) in ray.iter().enumerate() {
        cert[rows.index[j]] = d / rows.scale[j] / norm;
    }
    cert
}

enum DualOutcome {
    Optimal { beta: Vec<f64>, y: Vec<f64> },
    Unbounded { ray: Vec<f64> },
    Infeasible,
}

/// Revised simplex on `min r'y  s.t.  S A'y = S c,  y >= 0` where `S` flips
/// equation signs so that the right-hand side is nonnegative. Columns
/// `0..m` are the scaled constraint rows; columns `m..m+k` are artificials.
struct DualSimplex<'a> {
    rows: &'a ScaledRows,
    /// Equation signs (`S`).
    sign: Vec<f64>,
    /// Right-hand side `S c`.
    b: Vec<f64>,
    k: usize,
    m: usize,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    x_b: Vec<f64>,
    pivots: usize,
    bland_after: usize,
    max_pivots: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    One,
    Two,
}

enum PhaseOutcome {
    Optimal,
    Unbounded { entering: usize, direction: Vec<f64> },
}

impl<'a> DualSimplex<'a> {
    fn new(rows: &'a ScaledRows, c: &[f64]) -> Self {
        let k = rows.cols;
        let m = rows.len();
        let sign: Vec<f64> = c.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let b: Vec<f64> = c.iter().zip(&sign).map(|(v, s)| v * s).collect();
        let mut binv = vec![0.0; k * k];
        for i in 0..k {
            binv[i * k + i] = 1.0;
        }
        let mut in_basis = vec![false; m + k];
        for flag in &mut in_basis[m..] {
            *flag = true;
        }
        Self {
            rows,
            sign,
            x_b: b.clone(),
            b,
            k,
            m,
            basis: (m..m + k).collect(),
            in_basis,
            binv,
            pivots: 0,
            bland_after: 10 * (m + k),
            max_pivots: 50 * (m + k) + 1000,
        }
    }

    /// Column `j` of the signed equality system.
    fn column(&self, j: usize, out: &mut [f64]) {
        if j < self.m {
            for ((o, a), s) in out.iter_mut().zip(self.rows.row(j)).zip(&self.sign) {
                *o = a * s;
            }
        } else {
            out.fill(0.0);
            out[j - self.m] = 1.0;
        }
    }

    fn cost(&self, j: usize, phase: Phase) -> f64 {
        match phase {
            Phase::One => {
                if j >= self.m {
                    1.0
                } else {
                    0.0
                }
            }
            Phase::Two => {
                if j >= self.m {
                    0.0
                } else {
                    self.rows.rhs[j]
                }
            }
        }
    }

    /// Simplex multipliers `pi' = c_B' B^{-1}`.
    fn multipliers(&self, phase: Phase) -> Vec<f64> {
        let k = self.k;
        let mut pi = vec![0.0; k];
        for (r, &j) in self.basis.iter().enumerate() {
            let cj = self.cost(j, phase);
            if cj != 0.0 {
                for (p, v) in pi.iter_mut().zip(&self.binv[r * k..(r + 1) * k]) {
                    *p += cj * v;
                }
            }
        }
        pi
    }

    fn reduced_cost(&self, j: usize, pi: &[f64], phase: Phase) -> f64 {
        let cj = self.cost(j, phase);
        if j < self.m {
            let row = self.rows.row(j);
            let mut s = 0.0;
            for i in 0..self.k {
                s += row[i] * self.sign[i] * pi[i];
            }
            cj - s
        } else {
            cj - pi[j - self.m]
        }
    }

    /// `B^{-1} a_j`.
    fn ftran(&self, j: usize, scratch: &mut [f64]) -> Vec<f64> {
        self.column(j, scratch);
        let k = self.k;
        (0..k)
            .map(|r| dot(&self.binv[r * k..(r + 1) * k], scratch))
            .collect()
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let k = self.k;
        let mut mat = vec![0.0; k * k];
        let mut col = vec![0.0; k];
        for (c, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for r in 0..k {
                mat[r * k + c] = col[r];
            }
        }
        self.binv = invert(&mut mat, k)?;
        for r in 0..k {
            self.x_b[r] = dot(&self.binv[r * k..(r + 1) * k], &self.b);
        }
        Ok(())
    }

    fn pivot(&mut self, leave_row: usize, entering: usize, dir: &[f64]) -> Result<(), LpError> {
        let k = self.k;
        let piv = dir[leave_row];
        if piv.abs() < PIVOT_TOL {
            return Err(LpError::SingularBasis(piv));
        }
        let theta = self.x_b[leave_row] / piv;
        for r in 0..k {
            if r != leave_row {
                self.x_b[r] -= theta * dir[r];
            }
        }
        self.x_b[leave_row] = theta;
        let pivot_row: Vec<f64> = self.binv[leave_row * k..(leave_row + 1) * k]
            .iter()
            .map(|v| v / piv)
            .collect();
        for r in 0..k {
            if r == leave_row || dir[r] == 0.0 {
                continue;
            }
            let f = dir[r];
            for (v, p) in self.binv[r * k..(r + 1) * k].iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
        }
        self.binv[leave_row * k..(leave_row + 1) * k].copy_from_slice(&pivot_row);
        let leaving = self.basis[leave_row];
        self.in_basis[leaving] = false;
        self.in_basis[entering] = true;
        self.basis[leave_row] = entering;
        self.pivots += 1;
        if self.pivots % 64 == 0 {
            self.refactor()?;
        }
        Ok(())
    }

    fn iterate(&mut self, phase: Phase) -> Result<PhaseOutcome, LpError> {
        let mut scratch = vec![0.0; self.k];
        loop {
            if self.pivots > self.max_pivots {
                return Err(LpError::CyclingGuard(self.pivots));
            }
            let bland = self.pivots >= self.bland_after;
            let pi = self.multipliers(phase);
            let mut entering = None;
            let mut best = -OPTIMALITY_TOL;
            for j in 0..self.m {
                if self.in_basis[j] {
                    continue;
                }
                let d = self.reduced_cost(j, &pi, phase);
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = entering else {
                return Ok(PhaseOutcome::Optimal);
            };
            let dir = self.ftran(q, &mut scratch);

            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..self.k {
                let u = dir[r];
                if u <= RATIO_TOL {
                    continue;
                }
                let ratio = self.x_b[r].max(0.0) / u;
                let better = match leave {
                    None => true,
                    Some(l) => {
                        if ratio < best_ratio - 1e-12 {
                            true
                        } else if ratio <= best_ratio + 1e-12 {
                            if bland {
                                self.basis[r] < self.basis[l]
                            } else {
                                // Prefer driving artificials out, then larger pivots.
                                let art_r = self.basis[r] >= self.m;
                                let art_l = self.basis[l] >= self.m;
                                (art_r && !art_l) || (art_r == art_l && u > dir[l])
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    best_ratio = best_ratio.min(ratio);
                    leave = Some(r);
                }
            }
            match leave {
                Some(r) => self.pivot(r, q, &dir)?,
                None => {
                    return Ok(PhaseOutcome::Unbounded {
                        entering: q,
                        direction: dir,
                    })
                }
            }
        }
    }

    /// Pivots zero-level artificials out of the basis where possible. Those
    /// that remain mark redundant equations.
    fn expel_artificials(&mut self) -> Result<(), LpError> {
        let mut scratch = vec![0.0; self.k];
        for r in 0..self.k {
            if self.basis[r] < self.m {
                continue;
            }
            let k = self.k;
            let mut chosen = None;
            let mut best = 1e-9;
            for j in 0..self.m {
                if self.in_basis[j] {
                    continue;
                }
                self.column(j, &mut scratch);
                let v = dot(&self.binv[r * k..(r + 1) * k], &scratch).abs();
                if v > best {
                    best = v;
                    chosen = Some(j);
                }
            }
            if let Some(j) = chosen {
                let dir = self.ftran(j, &mut scratch);
                self.pivot(r, j, &dir)?;
            }
        }
        Ok(())
    }

    fn run(&mut self) -> Result<DualOutcome, LpError> {
        let scale = 1.0 + self.b.iter().fold(0.0f64, |m, v| m.max(*v));
        match self.iterate(Phase::One)? {
            PhaseOutcome::Optimal => {}
            PhaseOutcome::Unbounded { .. } => unreachable!("phase one is bounded below by zero"),
        }
        self.refactor()?;
        let infeasibility: f64 = self
            .basis
            .iter()
            .zip(&self.x_b)
            .filter(|(j, _)| **j >= self.m)
            .map(|(_, v)| v.max(0.0))
            .sum();
        if infeasibility > 1e-9 * scale {
            return Ok(DualOutcome::Infeasible);
        }
        self.expel_artificials()?;
        self.refactor()?;

        match self.iterate(Phase::Two)? {
            PhaseOutcome::Optimal => {
                self.refactor()?;
                let pi = self.multipliers(Phase::Two);
                let beta: Vec<f64> = pi.iter().zip(&self.sign).map(|(p, s)| p * s).collect();
                let mut y = vec![0.0; self.m];
                for (&j, &v) in self.basis.iter().zip(&self.x_b) {
                    if j < self.m {
                        y[j] = v.max(0.0);
                    }
                }
                Ok(DualOutcome::Optimal { beta, y })
            }
            PhaseOutcome::Unbounded { entering, direction } => {
                let mut ray = vec![0.0; self.m];
                ray[entering] = 1.0;
                for (&j, &u) in self.basis.iter().zip(&direction) {
                    if j < self.m {
                        ray[j] = (-u).max(0.0);
                    }
                }
                Ok(DualOutcome::Unbounded { ray })
            }
        }
    }
}

/// Gauss-Jordan inverse with partial pivoting. `mat` is destroyed.
fn invert(mat: &mut [f64], n: usize) -> Result<Vec<f64>, LpError> {
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let (p, pv) = (col..n)
            .map(|r| (r, mat[r * n + col].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((col, 0.0));
        if pv < PIVOT_TOL {
            return Err(LpError::SingularBasis(pv));
        }
        if p != col {
            for c in 0..n {
                mat.swap(p * n + c, col * n + c);
                inv.swap(p * n + c, col * n + c);
            }
        }
        let d = mat[col * n + col];
        for c in 0..n {
            mat[col * n + c] /= d;
            inv[col * n + c] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = mat[r * n + col];
            if f == 0.0 {
                continue;
            }
            for c in 0..n {
                mat[r * n + c] -= f * mat[col * n + c];
                inv[r * n + c] -= f * inv[col * n + c];
            }
        }
    }
    Ok(inv)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
