//! Constrained sparse least-squares machinery for the two fitting stages:
//! the joint bilinear weight/shared-value problem and the small per-location
//! ridge problems for the neighborhood coefficients.

mod joint;

pub use joint::{Csr, JointSolution, JointSystem};

use crate::error::{Error, Result};

/// Options controlling the joint solver.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_outer_iterations: usize,
    pub gradient_tolerance: f64,
    pub cg_max_iterations: usize,
    pub bound_penalty_weight: f64,
    pub ridge_lambda: f64,
    /// Reserved; the solver is deterministic.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_outer_iterations: 50,
            gradient_tolerance: 1e-8,
            cg_max_iterations: 500,
            bound_penalty_weight: 1e3,
            ridge_lambda: 1e-3,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.gradient_tolerance <= 0.0
            || self.bound_penalty_weight <= 0.0
            || self.ridge_lambda < 0.0
        {
            return Err(Error::Precondition(
                "solver tolerances and penalty weights must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Minimizes ||target - design v||^2 + lambda ||v - v0||^2 for a small dense
/// system (up to 9 unknowns), via the regularized normal equations.
///
/// `design` holds one row per equation, all rows of equal length.
pub fn solve_ridge(
    design: &[Vec<f64>],
    target: &[f64],
    v0: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    let m = design.len();
    if m == 0 || design[0].is_empty() {
        return Err(Error::Precondition(
            "ridge solve needs at least one equation and one neighbor".into(),
        ));
    }
    let n = design[0].len();
    if target.len() != m || v0.len() != n {
        return Err(Error::Precondition(
            "ridge solve dimensions are inconsistent".into(),
        ));
    }

    // normal matrix A'A + lambda I and right-hand side A'b + lambda v0
    let mut normal = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for (row, &t) in design.iter().zip(target) {
        for i in 0..n {
            rhs[i] += row[i] * t;
            for j in 0..n {
                normal[i * n + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..n {
        normal[i * n + i] += lambda;
        rhs[i] += lambda * v0[i];
    }
    solve_dense(&mut normal, &mut rhs, n)?;
    Ok(rhs)
}

/// Gaussian elimination with partial pivoting; solves in place, result in rhs.
fn solve_dense(a: &mut [f64], rhs: &mut [f64], n: usize) -> Result<()> {
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[pivot * n + col].abs() {
                pivot = r;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return Err(Error::Numerical(
                "singular normal matrix in ridge solve (use lambda > 0)".into(),
            ));
        }
        if pivot != col {
            for c in 0..n {
                a.swap(col * n + c, pivot * n + c);
            }
            rhs.swap(col, pivot);
        }
        let inv = 1.0 / a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] * inv;
            if f != 0.0 {
                for c in col..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut v = rhs[col];
        for c in col + 1..n {
            v -= a[col * n + c] * rhs[c];
        }
        rhs[col] = v / a[col * n + col];
    }
    Ok(())
}
