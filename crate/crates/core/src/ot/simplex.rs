//! Exact transportation-problem solver: primal simplex on the spanning-tree bases of the
//! complete bipartite graph (network simplex), with block pricing and a fallback to Bland's rule
//! against cycling.

use crate::cost::RadialCost;
use crate::error::{Error, Result};
use crate::geometry::DensityField;
use crate::scalar::Scalar;

use super::{centered_target_potential, check_marginals, CostMatrix, SolverKind, TransportResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LpOptions {
    /// Upper bound on `sources × targets`.
    pub max_pairs: usize,
    pub max_pivots: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions { max_pairs: 1 << 20, max_pivots: 50_000_000 }
    }
}

pub fn solve_lp<T: Scalar>(
    rho: &DensityField<T>,
    g: &DensityField<T>,
    cost: &RadialCost<T>,
    options: &LpOptions,
) -> Result<TransportResult<T>> {
    let grid = *rho.grid();
    let n = grid.len();
    if n.saturating_mul(n) > options.max_pairs {
        return Err(Error::Capacity { pairs: n.saturating_mul(n), limit: options.max_pairs });
    }
    let (a, b) = check_marginals(rho, g)?;
    let matrix = CostMatrix::new(&grid, cost)?;
    let solution = TransportSimplex::new(&a, &b, &matrix).solve(options.max_pivots)?;
    let coupling: Vec<_> = solution.flows.into_iter().filter(|f| f.2 > T::zero()).collect();
    let (phi, psi) = matrix.canonicalize(&centered_target_potential(&matrix, &coupling));
    let params = vec![
        ("cost".into(), cost.describe()),
        ("pivots".into(), solution.pivots.to_string()),
    ];
    Ok(TransportResult::assemble(grid, coupling, phi, psi, &matrix, &a, &b, SolverKind::Lp, params))
}

pub(crate) struct Solution<T> {
    pub flows: Vec<(usize, usize, T)>,
    pub pivots: usize,
}

/// Basis of `m + n − 1` arcs forming a spanning tree on rows `0..m` and columns `m..m+n`.
struct TransportSimplex<'a, T> {
    m: usize,
    n: usize,
    cost: &'a CostMatrix<T>,
    arcs: Vec<(usize, usize)>,
    flow: Vec<T>,
    adjacency: Vec<Vec<usize>>,
    in_basis: Vec<bool>,
}

impl<'a, T: Scalar> TransportSimplex<'a, T> {
    /// Initial basis by the least-cost rule. Each allocation retires exactly one line (never the
    /// last open row or column), which yields a spanning tree even on degenerate data.
    fn new(a: &[T], b: &[T], cost: &'a CostMatrix<T>) -> Self {
        let (m, n) = (a.len(), b.len());
        let mut order: Vec<usize> = (0..m * n).collect();
        order.sort_by(|&x, &y| {
            let (cx, cy) = (cost.get(x / n, x % n), cost.get(y / n, y % n));
            cx.partial_cmp(&cy).unwrap_or(std::cmp::Ordering::Equal).then(x.cmp(&y))
        });
        let mut row_rem = a.to_vec();
        let mut col_rem = b.to_vec();
        let mut row_open = vec![true; m];
        let mut col_open = vec![true; n];
        let (mut rows_left, mut cols_left) = (m, n);
        let mut simplex = TransportSimplex {
            m,
            n,
            cost,
            arcs: Vec::with_capacity(m + n - 1),
            flow: Vec::with_capacity(m + n - 1),
            adjacency: vec![Vec::new(); m + n],
            in_basis: vec![false; m * n],
        };
        for cell in order {
            if simplex.arcs.len() == m + n - 1 {
                break;
            }
            let (i, j) = (cell / n, cell % n);
            if !row_open[i] || !col_open[j] {
                continue;
            }
            let retire_row = if rows_left == 1 {
                false
            } else if cols_left == 1 {
                true
            } else {
                row_rem[i] <= col_rem[j]
            };
            let x = if retire_row { row_rem[i] } else { col_rem[j] }.max(T::zero());
            let x = x.min(row_rem[i].max(T::zero())).min(col_rem[j].max(T::zero()));
            simplex.push_arc(i, j, x);
            row_rem[i] -= x;
            col_rem[j] -= x;
            if simplex.arcs.len() == m + n - 1 {
                break;
            }
            if retire_row {
                row_open[i] = false;
                rows_left -= 1;
            } else {
                col_open[j] = false;
                cols_left -= 1;
            }
        }
        simplex
    }

    fn push_arc(&mut self, i: usize, j: usize, x: T) {
        let id = self.arcs.len();
        self.arcs.push((i, j));
        self.flow.push(x);
        self.adjacency[i].push(id);
        self.adjacency[self.m + j].push(id);
        self.in_basis[i * self.n + j] = true;
    }

    fn other_end(&self, arc: usize, node: usize) -> usize {
        let (i, j) = self.arcs[arc];
        if node == i {
            self.m + j
        } else {
            i
        }
    }

    /// `u_i + v_j = c_ij` on basic arcs, `u_0 = 0`.
    fn potentials(&self) -> (Vec<T>, Vec<T>) {
        let (m, n) = (self.m, self.n);
        let mut pot = vec![T::zero(); m + n];
        let mut seen = vec![false; m + n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(node) = stack.pop() {
            for &arc in &self.adjacency[node] {
                let next = self.other_end(arc, node);
                if seen[next] {
                    continue;
                }
                let (i, j) = self.arcs[arc];
                let c = self.cost.get(i, j);
                pot[next] = c - pot[node];
                seen[next] = true;
                stack.push(next);
            }
        }
        (pot[..m].to_vec(), pot[m..].to_vec())
    }

    /// Tree path from `from` to `to` as a list of arcs, starting at `from`.
    fn tree_path(&self, from: usize, to: usize) -> Vec<usize> {
        let total = self.m + self.n;
        let mut parent_arc = vec![usize::MAX; total];
        let mut seen = vec![false; total];
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(from);
        seen[from] = true;
        while let Some(node) = queue.pop_front() {
            if node == to {
                break;
            }
            for &arc in &self.adjacency[node] {
                let next = self.other_end(arc, node);
                if !seen[next] {
                    seen[next] = true;
                    parent_arc[next] = arc;
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = to;
        while node != from {
            let arc = parent_arc[node];
            path.push(arc);
            node = self.other_end(arc, node);
        }
        path.reverse();
        path
    }

    fn solve(mut self, max_pivots: usize) -> Result<Solution<T>> {
        let (m, n) = (self.m, self.n);
        let tol = T::epsilon() * T::lit(64.0) * (T::one() + self.cost.max_abs());
        let mut pivots = 0usize;
        let cells = m * n;
        let block = ((cells as f64).sqrt().ceil() as usize).max(1);
        let mut next = 0usize;
        let mut degenerate_run = 0usize;
        loop {
            let (u, v) = self.potentials();
            let reduced = |cell: usize| self.cost.get(cell / n, cell % n) - u[cell / n] - v[cell % n];
            let entering = if degenerate_run > m + n {
                // Bland's rule after a long degenerate stretch: lowest-index improving cell
                (0..cells).find(|&cell| !self.in_basis[cell] && reduced(cell) < -tol)
            } else {
                // cyclic block pricing: most negative reduced cost within the first block that
                // has an improving cell
                let mut best: Option<(usize, T)> = None;
                let mut scanned = 0;
                while scanned < cells {
                    let cell = (next + scanned) % cells;
                    scanned += 1;
                    if !self.in_basis[cell] {
                        let r = reduced(cell);
                        if r < -tol && best.map_or(true, |(_, b)| r < b) {
                            best = Some((cell, r));
                        }
                    }
                    if scanned % block == 0 && best.is_some() {
                        break;
                    }
                }
                next = (next + scanned) % cells;
                best.map(|(cell, _)| cell)
            };
            let Some(cell) = entering else {
                let flows = self.arcs.iter().zip(&self.flow).map(|(&(i, j), &f)| (i, j, f)).collect();
                return Ok(Solution { flows, pivots });
            };
            if pivots >= max_pivots {
                let (i, j) = (cell / n, cell % n);
                let residual = (self.cost.get(i, j) - u[i] - v[j]).to_f64_lossy();
                return Err(Error::Convergence { iterations: pivots, residual });
            }
            pivots += 1;
            let (ei, ej) = (cell / n, cell % n);
            // cycle: entering arc (+), then the tree path from column ej back to row ei,
            // alternating −, +, −, ...
            let path = self.tree_path(m + ej, ei);
            let mut theta = T::infinity();
            let mut leaving = usize::MAX;
            for (k, &arc) in path.iter().enumerate() {
                if k % 2 == 0 {
                    let f = self.flow[arc];
                    let (i, j) = self.arcs[arc];
                    let better = f < theta
                        || (f == theta && leaving != usize::MAX && {
                            let (li, lj) = self.arcs[leaving];
                            i * n + j < li * n + lj
                        });
                    if better {
                        theta = f;
                        leaving = arc;
                    }
                }
            }
            let theta = theta.max(T::zero());
            if theta > T::zero() {
                degenerate_run = 0;
            } else {
                degenerate_run += 1;
            }
            for (k, &arc) in path.iter().enumerate() {
                if k % 2 == 0 {
                    self.flow[arc] -= theta;
                } else {
                    self.flow[arc] += theta;
                }
            }
            // swap the leaving arc for the entering one in place
            let (li, lj) = self.arcs[leaving];
            self.in_basis[li * n + lj] = false;
            self.adjacency[li].retain(|&a| a != leaving);
            self.adjacency[m + lj].retain(|&a| a != leaving);
            self.arcs[leaving] = (ei, ej);
            self.flow[leaving] = theta;
            self.adjacency[ei].push(leaving);
            self.adjacency[m + ej].push(leaving);
            self.in_basis[cell] = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_smooth_density, Grid};
    use crate::ot::solve_exact_1d;

    #[test]
    fn two_point_space_stays_put() {
        let grid = Grid::<f64>::new_1d(-0.5, 1.5, 2).unwrap();
        let rho = DensityField::uniform(grid);
        for p in [1.5, 2.0, 3.0] {
            let cost = RadialCost::power(p, grid.domain_radius()).unwrap();
            let res = solve_lp(&rho, &rho, &cost, &LpOptions::default()).unwrap();
            assert_eq!(res.primal, 0.0);
            for &(i, j, m) in &res.coupling {
                assert_eq!(i, j);
                assert!((m - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matches_the_monotone_oracle() {
        let grid = Grid::<f64>::unit_interval(64).unwrap();
        let cost = RadialCost::power(2.0, grid.domain_radius()).unwrap();
        let rho = random_smooth_density(&grid, 11, 5, 0.1).unwrap();
        let g = random_smooth_density(&grid, 12, 5, 0.1).unwrap();
        let lp = solve_lp(&rho, &g, &cost, &LpOptions::default()).unwrap();
        let (exact, _) = solve_exact_1d(&rho, &g, &cost).unwrap();
        assert!((lp.primal - exact.primal).abs() <= 1e-6 * exact.primal.abs(), "{} vs {}", lp.primal, exact.primal);
        let matrix = CostMatrix::new(&grid, &cost).unwrap();
        assert!(lp.max_dual_violation(&matrix) <= 1e-9);
        assert!(lp.max_slackness_on_support(&matrix, 1e-6) <= 1e-6);
        assert!(lp.gap >= -1e-10 && lp.gap <= 1e-8 * (1.0 + lp.primal.abs()));
        for (r, m) in lp.row_sums().iter().zip(rho.masses()) {
            assert!((r - m).abs() <= 1e-8);
        }
        for (c, m) in lp.col_sums().iter().zip(g.masses()) {
            assert!((c - m).abs() <= 1e-8);
        }
    }

    #[test]
    fn swapping_marginals_transposes_the_coupling() {
        let grid = Grid::<f64>::unit_interval(24).unwrap();
        let cost = RadialCost::power(1.5, grid.domain_radius()).unwrap();
        let rho = random_smooth_density(&grid, 1, 3, 0.2).unwrap();
        let g = random_smooth_density(&grid, 2, 3, 0.2).unwrap();
        let fwd = solve_lp(&rho, &g, &cost, &LpOptions::default()).unwrap();
        let bwd = solve_lp(&g, &rho, &cost, &LpOptions::default()).unwrap();
        assert!((fwd.primal - bwd.primal).abs() < 1e-12);
        let dense = |res: &TransportResult<f64>, transpose: bool| {
            let mut d = vec![0.0; 24 * 24];
            for &(i, j, m) in &res.coupling {
                let (r, c) = if transpose { (j, i) } else { (i, j) };
                d[r * 24 + c] += m;
            }
            d
        };
        let a = dense(&fwd, false);
        let b = dense(&bwd, true);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
        // potentials swap up to an additive constant
        let shift = fwd.phi[0] - bwd.psi[0];
        for k in 0..24 {
            assert!((fwd.phi[k] - bwd.psi[k] - shift).abs() < 1e-9);
            assert!((fwd.psi[k] - bwd.phi[k] + shift).abs() < 1e-9);
        }
    }

    #[test]
    fn solves_a_small_2d_instance() {
        let grid = Grid::<f64>::unit_square(5).unwrap();
        let cost = RadialCost::power(2.0, grid.domain_radius()).unwrap();
        let rho = random_smooth_density(&grid, 3, 2, 0.2).unwrap();
        let g = random_smooth_density(&grid, 4, 2, 0.2).unwrap();
        let res = solve_lp(&rho, &g, &cost, &LpOptions::default()).unwrap();
        let matrix = CostMatrix::new(&grid, &cost).unwrap();
        assert!(res.max_dual_violation(&matrix) <= 1e-9);
        assert!(res.gap.abs() <= 1e-8 * (1.0 + res.primal));
    }

    #[test]
    fn capacity_and_marginal_errors() {
        let grid = Grid::<f64>::unit_interval(64).unwrap();
        let cost = RadialCost::power(2.0, grid.domain_radius()).unwrap();
        let rho = DensityField::uniform(grid);
        let small = LpOptions { max_pairs: 100, ..LpOptions::default() };
        assert!(matches!(solve_lp(&rho, &rho, &cost, &small), Err(Error::Capacity { .. })));
        let heavy = rho.scaled(1.5).unwrap();
        assert!(matches!(solve_lp(&rho, &heavy, &cost, &LpOptions::default()), Err(Error::Input(_))));
    }

    #[test]
    fn degenerate_marginals_with_empty_cells() {
        let grid = Grid::<f64>::unit_interval(8).unwrap();
        let cost = RadialCost::power(2.0, grid.domain_radius()).unwrap();
        let rho = DensityField::new(grid, vec![4.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let g = DensityField::new(grid, vec![0.0, 0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 2.0]).unwrap();
        let res = solve_lp(&rho, &g, &cost, &LpOptions::default()).unwrap();
        let (exact, _) = solve_exact_1d(&rho, &g, &cost).unwrap();
        assert!((res.primal - exact.primal).abs() < 1e-12);
    }
}
