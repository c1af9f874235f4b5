//! Entropic transport by log-domain alternating dual maximization (softmin c-transforms)
//! with ε-scaling.

use rayon::prelude::*;

use crate::cost::RadialCost;
use crate::error::{Error, Result};
use crate::geometry::DensityField;
use crate::scalar::{ordered_sum, Scalar};

use super::{check_marginals, CostMatrix, SolverKind, TransportResult};

#[derive(Debug, Clone, PartialEq)]
pub struct EntropicOptions<T> {
    pub epsilon_final: T,
    /// Decreasing regularization levels ending at `epsilon_final`; `None` halves from the
    /// largest cost down to `epsilon_final`.
    pub schedule: Option<Vec<T>>,
    /// Iteration cap per ε level.
    pub max_iterations: usize,
    /// Required L¹ violation of the source marginal at the final level.
    pub tolerance: T,
}

impl<T: Scalar> EntropicOptions<T> {
    pub fn new(epsilon_final: T) -> Self {
        EntropicOptions { epsilon_final, schedule: None, max_iterations: 20_000, tolerance: T::lit(1e-7) }
    }

    fn levels(&self, max_cost: T) -> Result<Vec<T>> {
        if !(self.epsilon_final > T::zero()) {
            return Err(Error::param("epsilon_final", "must be positive"));
        }
        match &self.schedule {
            Some(s) => {
                if s.is_empty() || s.windows(2).any(|w| !(w[1] < w[0])) {
                    return Err(Error::param("schedule", "must be strictly decreasing"));
                }
                if s[s.len() - 1] != self.epsilon_final {
                    return Err(Error::param("schedule", "must end at epsilon_final"));
                }
                Ok(s.clone())
            }
            None => {
                let mut levels = Vec::new();
                let mut eps = max_cost.max(self.epsilon_final);
                while eps > self.epsilon_final {
                    levels.push(eps);
                    eps = eps * T::lit(0.5);
                }
                levels.push(self.epsilon_final);
                Ok(levels)
            }
        }
    }
}

/// Dual state of the log-domain iteration; reusable as a warm start across related solves.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LogSinkhorn<'a, T> {
    cost: &'a CostMatrix<T>,
    pub f: Vec<T>,
    pub g: Vec<T>,
}

impl<'a, T: Scalar> LogSinkhorn<'a, T> {
    pub fn new(cost: &'a CostMatrix<T>) -> Self {
        let n = cost.len();
        LogSinkhorn { cost, f: vec![T::zero(); n], g: vec![T::zero(); n] }
    }

    /// `-ε log Σ_j exp(log w_j + (other_j − c_ij)/ε)`. The cost matrix is symmetric (radial
    /// cost on a shared grid), so rows serve for both directions.
    fn softmin(&self, other: &[T], log_w: &[T], eps: T) -> Vec<T> {
        let n = self.cost.len();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let row = self.cost.row(i);
                let mut best = T::neg_infinity();
                for j in 0..n {
                    let e = log_w[j] + (other[j] - row[j]) / eps;
                    if e > best {
                        best = e;
                    }
                }
                if best == T::neg_infinity() {
                    return T::infinity();
                }
                let s = ordered_sum((0..n).map(|j| (log_w[j] + (other[j] - row[j]) / eps - best).exp()));
                -eps * (best + s.ln())
            })
            .collect()
    }

    fn relax(old: &mut [T], new: Vec<T>, omega: T) {
        for (o, n) in old.iter_mut().zip(new) {
            *o = if o.is_finite() && n.is_finite() { *o + omega * (n - *o) } else { n };
        }
    }

    /// Row sums of `π_ij = a_i b_j exp((f_i + g_j − c_ij)/ε)`.
    pub fn row_marginal(&self, log_a: &[T], log_b: &[T], eps: T) -> Vec<T> {
        let n = self.cost.len();
        (0..n)
            .into_par_iter()
            .map(|i| {
                if log_a[i] == T::neg_infinity() {
                    return T::zero();
                }
                let row = self.cost.row(i);
                ordered_sum(
                    (0..n).map(|j| (log_a[i] + log_b[j] + (self.f[i] + self.g[j] - row[j]) / eps).exp()),
                )
            })
            .collect()
    }

    pub fn plan(&self, log_a: &[T], log_b: &[T], eps: T) -> Vec<T> {
        let n = self.cost.len();
        let mut plan = vec![T::zero(); n * n];
        plan.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
            let row = self.cost.row(i);
            for j in 0..n {
                out[j] = (log_a[i] + log_b[j] + (self.f[i] + self.g[j] - row[j]) / eps).exp();
            }
        });
        plan
    }

    /// Runs over-relaxed f/g updates until the source marginal violation drops below `tol`
    /// or `max_iter` is reached; returns `(iterations, violation)`. The relaxation factor
    /// starts at 1.8 and falls back toward 1 whenever the violation grows.
    pub fn iterate(&mut self, a: &[T], log_a: &[T], log_b: &[T], eps: T, tol: T, max_iter: usize) -> (usize, T) {
        let mut omega = T::lit(1.8);
        let mut violation = T::infinity();
        let mut saved = (self.f.clone(), self.g.clone());
        for it in 1..=max_iter {
            let f = self.softmin(&self.g, log_b, eps);
            Self::relax(&mut self.f, f, omega);
            let g = self.softmin(&self.f, log_a, eps);
            Self::relax(&mut self.g, g, omega);
            if it % 5 == 0 || it == max_iter {
                let v = l1_violation(&self.row_marginal(log_a, log_b, eps), a);
                if v <= tol {
                    return (it, v);
                }
                if !(v < violation) && omega > T::one() {
                    omega = T::one() + (omega - T::one()) * T::lit(0.5);
                    if omega < T::lit(1.01) {
                        omega = T::one();
                    }
                    self.f.clone_from(&saved.0);
                    self.g.clone_from(&saved.1);
                } else if v < violation {
                    violation = v;
                    saved = (self.f.clone(), self.g.clone());
                }
            }
        }
        (max_iter, violation)
    }
}

pub(crate) fn log_masses<T: Scalar>(m: &[T]) -> Vec<T> {
    m.iter().map(|&x| if x > T::zero() { x.ln() } else { T::neg_infinity() }).collect()
}

pub(crate) fn l1_violation<T: Scalar>(got: &[T], want: &[T]) -> T {
    ordered_sum(got.iter().zip(want).map(|(x, y)| (*x - *y).abs()))
}

/// Projects a nonnegative matrix onto the transportation polytope of `(a, b)`: scale rows and
/// columns down, then restore the missing mass with a rank-one correction.
pub(crate) fn round_to_marginals<T: Scalar>(plan: &mut [T], a: &[T], b: &[T]) {
    let n = a.len();
    for i in 0..n {
        let r = ordered_sum(plan[i * n..(i + 1) * n].iter().copied());
        if r > a[i] && r > T::zero() {
            let s = a[i] / r;
            plan[i * n..(i + 1) * n].iter_mut().for_each(|x| *x *= s);
        }
    }
    for j in 0..n {
        let c = ordered_sum((0..n).map(|i| plan[i * n + j]));
        if c > b[j] && c > T::zero() {
            let s = b[j] / c;
            (0..n).for_each(|i| plan[i * n + j] *= s);
        }
    }
    let row_def: Vec<T> = (0..n).map(|i| (a[i] - ordered_sum(plan[i * n..(i + 1) * n].iter().copied())).max(T::zero())).collect();
    let col_def: Vec<T> = (0..n).map(|j| (b[j] - ordered_sum((0..n).map(|i| plan[i * n + j]))).max(T::zero())).collect();
    let total = ordered_sum(row_def.iter().copied());
    if total > T::zero() {
        for i in 0..n {
            if row_def[i] == T::zero() {
                continue;
            }
            for j in 0..n {
                plan[i * n + j] += row_def[i] * col_def[j] / total;
            }
        }
    }
}

pub fn solve_entropic<T: Scalar>(
    rho: &DensityField<T>,
    g: &DensityField<T>,
    cost: &RadialCost<T>,
    options: &EntropicOptions<T>,
) -> Result<TransportResult<T>> {
    let grid = *rho.grid();
    let (a, b) = check_marginals(rho, g)?;
    let matrix = CostMatrix::new(&grid, cost)?;
    let levels = options.levels(matrix.max_abs())?;
    let (log_a, log_b) = (log_masses(&a), log_masses(&b));
    let mut state = LogSinkhorn::new(&matrix);
    let mut total_iterations = 0;
    let mut violation = T::infinity();
    let last = levels.len() - 1;
    for (k, &eps) in levels.iter().enumerate() {
        let tol = if k == last { options.tolerance } else { options.tolerance.max(T::lit(1e-4)) };
        let (it, viol) = state.iterate(&a, &log_a, &log_b, eps, tol, options.max_iterations);
        total_iterations += it;
        violation = viol;
    }
    if !(violation <= options.tolerance) {
        return Err(Error::Convergence { iterations: total_iterations, residual: violation.to_f64_lossy() });
    }
    let eps = options.epsilon_final;
    let mut plan = state.plan(&log_a, &log_b, eps);
    round_to_marginals(&mut plan, &a, &b);
    let n = grid.len();
    let coupling = plan
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > T::zero())
        .map(|(k, &m)| (k / n, k % n, m))
        .collect();
    let (phi, psi) = matrix.canonicalize(&state.g);
    let params = vec![
        ("cost".into(), cost.describe()),
        ("epsilon".into(), eps.to_string()),
        ("levels".into(), levels.len().to_string()),
        ("iterations".into(), total_iterations.to_string()),
        ("marginal_violation".into(), violation.to_string()),
    ];
    Ok(TransportResult::assemble(grid, coupling, phi, psi, &matrix, &a, &b, SolverKind::Entropic, params))
}
