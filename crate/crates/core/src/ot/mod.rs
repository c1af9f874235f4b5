//! Discrete optimal transport between two densities on the same grid for the cost
//! `c(x, y) = h(x − y)`.
//!
//! Potentials follow the convention `φ(x) + ψ(y) ≤ h(x − y)`, with `φ = ψ^c` and
//! `ψ = φ^c̄` after canonicalization. Every solver returns potentials in that form.

mod entropic;
mod exact1d;
mod io;
mod map;
mod simplex;

pub use entropic::{solve_entropic, EntropicOptions};
pub use exact1d::{piecewise_wasserstein_1d, solve_exact_1d};
pub(crate) use exact1d::piecewise_transport;
pub use io::write_result_dir;
pub use map::{map_consistency_check, transport_map_from_potential, ConsistencyReport, MapField};
pub use simplex::{solve_lp, LpOptions};

use rayon::prelude::*;

use crate::cost::RadialCost;
use crate::error::{Error, Result};
use crate::geometry::{DensityField, Grid};
use crate::scalar::{ordered_sum, Scalar};
use crate::vector::{sub, Point};

/// Dense `h(x_i − y_j)` over all pairs of grid cells, row-major in the source index.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: Scalar> CostMatrix<T> {
    pub fn new(grid: &Grid<T>, cost: &RadialCost<T>) -> Result<Self> {
        let centers = grid.centers();
        let n = centers.len();
        if grid.diameter() > cost.radius() * (T::one() + T::lit(1e-12)) {
            return Err(Error::Domain {
                norm: grid.diameter().to_f64_lossy(),
                radius: cost.radius().to_f64_lossy(),
            });
        }
        let mut values = vec![T::zero(); n * n];
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, c) in row.iter_mut().enumerate() {
                *c = cost.value(sub(centers[i], centers[j]));
            }
        });
        Ok(CostMatrix { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `φ(x_i) = min_j c_ij − ψ_j`.
    pub fn c_transform(&self, psi: &[T]) -> Vec<T> {
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(psi)
                    .fold(T::infinity(), |m, (c, p)| m.min(*c - *p))
            })
            .collect()
    }

    /// `ψ(y_j) = min_i c_ij − φ_i`.
    pub fn cbar_transform(&self, phi: &[T]) -> Vec<T> {
        (0..self.n)
            .into_par_iter()
            .map(|j| (0..self.n).fold(T::infinity(), |m, i| m.min(self.get(i, j) - phi[i])))
            .collect()
    }

    /// Replaces `(φ, ψ)` by `(ψ^c, (ψ^c)^c̄)`, a c-conjugate pair whose dual value is at least
    /// that of any admissible input pair.
    pub fn canonicalize(&self, psi: &[T]) -> (Vec<T>, Vec<T>) {
        let phi = self.c_transform(psi);
        let psi = self.cbar_transform(&phi);
        (phi, psi)
    }
}

/// Target potential at the center of the optimal dual face of a coupling.
///
/// On the face, `φ_i − φ_k ≤ w_ki = min_{j:(k,j)∈supp} c_ij − c_kj`. With `D` the shortest
/// path lengths for `w`, every root `r` gives the extreme points `D(r, ·)` and `−D(·, r)`; the
/// returned pair averages their midpoints over all roots, then takes `ψ = φ^c̄` over the
/// supported sources. For the identity coupling this is the zero pair.
pub(crate) fn centered_target_potential<T: Scalar>(matrix: &CostMatrix<T>, coupling: &[(usize, usize, T)]) -> Vec<T> {
    let n = matrix.len();
    let mut support: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j, m) in coupling {
        if m > T::zero() {
            support[i].push(j);
        }
    }
    let sources: Vec<usize> = (0..n).filter(|&i| !support[i].is_empty()).collect();
    let m = sources.len();
    let mut dist: Vec<T> = (0..m * m)
        .into_par_iter()
        .map(|idx| {
            let (a, b) = (idx / m, idx % m);
            if a == b {
                return T::zero();
            }
            let (k, i) = (sources[a], sources[b]);
            support[k].iter().fold(T::infinity(), |w, &j| w.min(matrix.get(i, j) - matrix.get(k, j)))
        })
        .collect();
    for k in 0..m {
        let row_k: Vec<T> = dist[k * m..(k + 1) * m].to_vec();
        dist.par_chunks_mut(m).for_each(|row| {
            let through = row[k];
            for (d, via) in row.iter_mut().zip(&row_k) {
                let cand = through + *via;
                if cand < *d {
                    *d = cand;
                }
            }
        });
    }
    let half = T::lit(0.5);
    let count = T::from_count(m.max(1));
    let phi: Vec<T> = (0..m)
        .map(|b| ordered_sum((0..m).map(|r| (dist[r * m + b] - dist[b * m + r]) * half)) / count)
        .collect();
    (0..n)
        .map(|j| {
            sources
                .iter()
                .zip(&phi)
                .fold(T::infinity(), |acc, (&i, &f)| acc.min(matrix.get(i, j) - f))
        })
        .collect()
}

/// `φ(x) = min_y h(x − y) − ψ(y)` over the grid cells, computed exactly.
pub fn c_transform<T: Scalar>(grid: &Grid<T>, psi: &[T], cost: &RadialCost<T>) -> Result<Vec<T>> {
    if psi.len() != grid.len() {
        return Err(Error::Shape(format!("expected {} potential values, got {}", grid.len(), psi.len())));
    }
    if let Some(v) = psi.iter().find(|v| !v.is_finite()) {
        return Err(Error::Input(format!("potential must be finite, found {v}")));
    }
    Ok(CostMatrix::new(grid, cost)?.c_transform(psi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Exact1d,
    Lp,
    Entropic,
}

impl SolverKind {
    pub fn tag(&self) -> &'static str {
        match self {
            SolverKind::Exact1d => "exact1d",
            SolverKind::Lp => "lp",
            SolverKind::Entropic => "entropic",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact1d" => Ok(SolverKind::Exact1d),
            "lp" => Ok(SolverKind::Lp),
            "entropic" => Ok(SolverKind::Entropic),
            other => Err(Error::param("solver", format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportResult<T> {
    pub grid: Grid<T>,
    /// Nonzero entries `(source cell, target cell, mass)`.
    pub coupling: Vec<(usize, usize, T)>,
    pub phi: Vec<T>,
    pub psi: Vec<T>,
    pub primal: T,
    pub dual: T,
    pub gap: T,
    pub solver: SolverKind,
    pub params: Vec<(String, String)>,
}

impl<T: Scalar> TransportResult<T> {
    pub(crate) fn assemble(
        grid: Grid<T>,
        coupling: Vec<(usize, usize, T)>,
        phi: Vec<T>,
        psi: Vec<T>,
        matrix: &CostMatrix<T>,
        source: &[T],
        target: &[T],
        solver: SolverKind,
        params: Vec<(String, String)>,
    ) -> Self {
        let primal = ordered_sum(coupling.iter().map(|&(i, j, m)| m * matrix.get(i, j)));
        let dual = dual_value(&phi, &psi, source, target);
        TransportResult { grid, coupling, phi, psi, primal, dual, gap: primal - dual, solver, params }
    }

    pub fn row_sums(&self) -> Vec<T> {
        let mut rows = vec![T::zero(); self.grid.len()];
        for &(i, _, m) in &self.coupling {
            rows[i] += m;
        }
        rows
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut cols = vec![T::zero(); self.grid.len()];
        for &(_, j, m) in &self.coupling {
            cols[j] += m;
        }
        cols
    }

    pub fn total_mass(&self) -> T {
        ordered_sum(self.coupling.iter().map(|c| c.2))
    }

    /// Largest `φ_i + ψ_j − c_ij` over all pairs (nonpositive for admissible potentials).
    pub fn max_dual_violation(&self, matrix: &CostMatrix<T>) -> T {
        let n = matrix.len();
        (0..n)
            .map(|i| (0..n).fold(T::neg_infinity(), |m, j| m.max(self.phi[i] + self.psi[j] - matrix.get(i, j))))
            .fold(T::neg_infinity(), T::max)
    }

    /// Largest `|φ_i + ψ_j − c_ij|` over pairs carrying more than `mass_floor`.
    pub fn max_slackness_on_support(&self, matrix: &CostMatrix<T>, mass_floor: T) -> T {
        self.coupling
            .iter()
            .filter(|c| c.2 > mass_floor)
            .map(|&(i, j, _)| (self.phi[i] + self.psi[j] - matrix.get(i, j)).abs())
            .fold(T::zero(), T::max)
    }

    /// Barycentric projection `Σ_j π_ij y_j / Σ_j π_ij` of the coupling, `None` on empty rows.
    pub fn barycentric_map(&self) -> Vec<Option<Point<T>>> {
        let n = self.grid.len();
        let mut acc = vec![([T::zero(); 2], T::zero()); n];
        for &(i, j, m) in &self.coupling {
            let y = self.grid.center(j);
            acc[i].0[0] += m * y[0];
            acc[i].0[1] += m * y[1];
            acc[i].1 += m;
        }
        acc.into_iter()
            .map(|(s, m)| if m > T::zero() { Some([s[0] / m, s[1] / m]) } else { None })
            .collect()
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub(crate) fn dual_value<T: Scalar>(phi: &[T], psi: &[T], source: &[T], target: &[T]) -> T {
    let a = ordered_sum(phi.iter().zip(source).filter(|(_, m)| **m > T::zero()).map(|(p, m)| *p * *m));
    let b = ordered_sum(psi.iter().zip(target).filter(|(_, m)| **m > T::zero()).map(|(p, m)| *p * *m));
    a + b
}

/// Checks that two densities share a grid and carry the same mass to `1e-8`.
pub(crate) fn check_marginals<T: Scalar>(rho: &DensityField<T>, g: &DensityField<T>) -> Result<(Vec<T>, Vec<T>)> {
    if rho.grid() != g.grid() {
        return Err(Error::Shape("source and target densities live on different grids".into()));
    }
    let a = rho.masses();
    let b = g.masses();
    let (ma, mb) = (ordered_sum(a.iter().copied()), ordered_sum(b.iter().copied()));
    if (ma - mb).abs() > T::lit(1e-8) {
        return Err(Error::Input(format!("marginal masses differ: {ma} vs {mb}")));
    }
    if !(ma > T::zero()) {
        return Err(Error::Degenerate("marginals carry no mass".into()));
    }
    // remove the residual mismatch so the transportation polytope is nonempty
    let fix = ma / mb;
    Ok((a, b.into_iter().map(|m| m * fix).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> (Grid<f64>, RadialCost<f64>) {
        // centers at 0 and 1
        let grid = Grid::new_1d(-0.5, 1.5, 2).unwrap();
        let cost = RadialCost::power(2.0, grid.domain_radius()).unwrap();
        (grid, cost)
    }

    #[test]
    fn c_transform_two_points() {
        let (grid, cost) = two_point();
        // h = z²/2 here, so values scale by one half relative to h = z²
        let phi = c_transform(&grid, &[0.0, 0.0], &cost).unwrap();
        assert_eq!(phi, vec![0.0, 0.0]);
        let phi = c_transform(&grid, &[0.0, -1.0], &cost).unwrap();
        // min(0 - 0, 1/2 + 1) = 0 ; min(1/2 - 0, 0 + 1) = 1/2
        assert_eq!(phi, vec![0.0, 0.5]);
    }

    #[test]
    fn c_transform_with_squared_distance_cost() {
        // h(z) = z² as a tabulated profile reproduces the two-point example exactly
        let grid = Grid::new_1d(-0.5, 1.5, 2).unwrap();
        let radii: Vec<f64> = (0..=30).map(|k| k as f64 * 0.1).collect();
        let values: Vec<f64> = radii.iter().map(|r| r * r).collect();
        let cost = RadialCost::tabulated(&radii, &values, grid.domain_radius()).unwrap();
        let phi = c_transform(&grid, &[0.0, -1.0], &cost).unwrap();
        assert!((phi[0] - 0.0).abs() < 1e-12 && (phi[1] - 1.0).abs() < 1e-12, "{phi:?}");
    }

    #[test]
    fn double_transform_is_a_fixed_point() {
        let grid = Grid::<f64>::unit_interval(16).unwrap();
        let cost = RadialCost::power(1.5, grid.domain_radius()).unwrap();
        let m = CostMatrix::new(&grid, &cost).unwrap();
        let psi: Vec<f64> = (0..16).map(|k| ((k * 7919) % 13) as f64 * 0.01).collect();
        let (phi, psi1) = m.canonicalize(&psi);
        let (phi2, psi2) = m.canonicalize(&psi1);
        for k in 0..16 {
            assert!((phi[k] - phi2[k]).abs() < 1e-15 && (psi1[k] - psi2[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn c_transform_is_order_reversing() {
        let grid = Grid::<f64>::unit_interval(12).unwrap();
        let cost = RadialCost::power(3.0, grid.domain_radius()).unwrap();
        let low: Vec<f64> = (0..12).map(|k| (k as f64).sin()).collect();
        let high: Vec<f64> = low.iter().map(|v| v + 0.1 * (1.0 + v.abs())).collect();
        let a = c_transform(&grid, &low, &cost).unwrap();
        let b = c_transform(&grid, &high, &cost).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x >= y));
    }

    #[test]
    fn c_transform_rejects_bad_input() {
        let (grid, cost) = two_point();
        assert!(matches!(c_transform(&grid, &[0.0], &cost), Err(Error::Shape(_))));
        assert!(c_transform(&grid, &[0.0, f64::NAN], &cost).is_err());
        let small = RadialCost::power(2.0, 0.5).unwrap();
        assert!(matches!(CostMatrix::new(&grid, &small), Err(Error::Domain { .. })));
    }
}
