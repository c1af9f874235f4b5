//! The five gradients functional `∫ ∇ϱ·∇H(∇φ) + ∇g·∇H(∇ψ)`, the boundary term, and the
//! curvature diagnostics on discrete potentials.

mod batch;
mod mollify;

pub use batch::{
    verify_batch, BatchOutcome, BatchSpec, BatchSummary, InequalityReport, InstanceKey, RefinementTrend, DEFAULT_KAPPA,
};
pub use mollify::{mollification_convergence_experiment, MollificationReport, MollificationRow};

use crate::cost::{HFunction, RadialCost, SemiconcavityBound};
use crate::error::{Error, Result};
use crate::geometry::{boundary_cells_and_normals, gradient, interpolate, second_difference, DensityField, Grid};
use crate::ot::MapField;
use crate::scalar::{ordered_sum, Scalar};
use crate::stats::weighted_quantile;
use crate::vector::{dot, norm, scale};

fn check_same_grid<T: Scalar>(grid: &Grid<T>, others: &[&Grid<T>]) -> Result<()> {
    if others.iter().any(|g| *g != grid) {
        return Err(Error::Shape("fields live on different grids".into()));
    }
    Ok(())
}

/// Cellwise integrand `∇ϱ·∇H(∇φ) + ∇g·∇H(∇ψ)`.
pub fn five_gradients_integrand<T: Scalar>(
    rho: &DensityField<T>,
    g: &DensityField<T>,
    phi: &[T],
    psi: &[T],
    hfun: &HFunction<T>,
) -> Result<Vec<T>> {
    let grid = rho.grid();
    check_same_grid(grid, &[g.grid()])?;
    let (d_rho, d_g) = (rho.gradient()?, g.gradient()?);
    let (d_phi, d_psi) = (gradient(grid, phi)?, gradient(grid, psi)?);
    Ok((0..grid.len())
        .map(|k| dot(d_rho.get(k), hfun.grad(d_phi.get(k))) + dot(d_g.get(k), hfun.grad(d_psi.get(k))))
        .collect())
}

/// Midpoint-rule integral of [`five_gradients_integrand`].
pub fn five_gradients_lhs<T: Scalar>(
    rho: &DensityField<T>,
    g: &DensityField<T>,
    phi: &[T],
    psi: &[T],
    hfun: &HFunction<T>,
) -> Result<T> {
    let integrand = five_gradients_integrand(rho, g, phi, psi, hfun)?;
    Ok(rho.grid().integrate(&integrand))
}

/// `Σ_facets area · (ϱ ∇H(∇φ)·n + g ∇H(∇ψ)·n)` with one-sided normal derivatives.
pub fn boundary_flux<T: Scalar>(
    rho: &DensityField<T>,
    g: &DensityField<T>,
    phi: &[T],
    psi: &[T],
    hfun: &HFunction<T>,
) -> Result<T> {
    let grid = rho.grid();
    check_same_grid(grid, &[g.grid()])?;
    let (d_phi, d_psi) = (gradient(grid, phi)?, gradient(grid, psi)?);
    let facets = boundary_cells_and_normals(grid);
    Ok(ordered_sum(facets.iter().map(|f| {
        let k = f.cell;
        f.area
            * (rho.values()[k] * dot(hfun.grad(d_phi.get(k)), f.normal)
                + g.values()[k] * dot(hfun.grad(d_psi.get(k)), f.normal))
    })))
}

/// Smallest `∇h*(∇φ)·n` over boundary facets whose cell carries `ϱ > min_density`; the
/// displacement `x − T(x)` must not point into the domain where mass sits on the boundary.
/// `None` when no facet qualifies.
pub fn boundary_displacement_min<T: Scalar>(
    rho: &DensityField<T>,
    phi: &[T],
    cost: &RadialCost<T>,
    min_density: T,
) -> Result<Option<T>> {
    let grid = rho.grid();
    let d_phi = gradient(grid, phi)?;
    let max = cost.max_gradient();
    let mut worst: Option<T> = None;
    for f in boundary_cells_and_normals(grid) {
        if rho.values()[f.cell] <= min_density {
            continue;
        }
        let mut w = d_phi.get(f.cell);
        let len = norm(w);
        if len > max {
            w = scale(w, max / len);
        }
        let v = dot(cost.grad_h_star(w)?, f.normal);
        worst = Some(worst.map_or(v, |m: T| m.min(v)));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiconcavityReport<T> {
    pub max_second_difference: T,
    pub constant: T,
    pub tolerance: T,
    pub pass: bool,
}

/// Largest centered second difference of `φ` over interior cells and axes, compared with
/// `C + 10·Δ·C`.
pub fn semiconcavity_check<T: Scalar>(phi: &[T], bound: &SemiconcavityBound<T>, grid: &Grid<T>) -> Result<SemiconcavityReport<T>> {
    if phi.len() != grid.len() {
        return Err(Error::Shape(format!("expected {} values, got {}", grid.len(), phi.len())));
    }
    let mut worst = T::neg_infinity();
    for k in 0..grid.len() {
        for axis in 0..grid.dim() {
            if let Some(d) = second_difference(grid, phi, k, axis) {
                worst = worst.max(d);
            }
        }
    }
    let worst = if worst == T::neg_infinity() { T::zero() } else { worst };
    let tolerance = T::lit(10.0) * grid.min_width() * bound.constant;
    Ok(SemiconcavityReport {
        max_second_difference: worst,
        constant: bound.constant,
        tolerance,
        pass: worst <= bound.constant + tolerance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderReport<T> {
    /// Mass-weighted 95th percentile of the largest eigenvalue of `D²φ(x) + D²ψ(T(x))`.
    pub p95: T,
    pub max: T,
    pub tolerance: T,
    /// Half-width of the difference stencil, in cells.
    pub stencil: usize,
    pub cells: usize,
    pub pass: bool,
}

/// Second differences with spacing `s` cells along each axis (and the matching mixed
/// difference), `None` where the stencil leaves the grid.
fn hessian_field<T: Scalar>(grid: &Grid<T>, values: &[T], s: usize) -> Vec<Option<[T; 3]>> {
    let two = T::lit(2.0);
    let (nx, ny) = (grid.cells(0), if grid.dim() == 2 { grid.cells(1) } else { 1 });
    let hx = grid.width(0) * T::from_count(s);
    let hy = grid.width(1) * T::from_count(s);
    (0..grid.len())
        .map(|k| {
            let (i, j) = grid.coords(k);
            if i < s || i + s >= nx {
                return None;
            }
            let v = |a: usize, b: usize| values[grid.index(a, b)];
            let dxx = (v(i + s, j) - two * v(i, j) + v(i - s, j)) / (hx * hx);
            if grid.dim() == 1 {
                return Some([dxx, T::zero(), T::zero()]);
            }
            if j < s || j + s >= ny {
                return None;
            }
            let dyy = (v(i, j + s) - two * v(i, j) + v(i, j - s)) / (hy * hy);
            let dxy = (v(i + s, j + s) - v(i + s, j - s) - v(i - s, j + s) + v(i - s, j - s)) / (T::lit(4.0) * hx * hy);
            Some([dxx, dxy, dyy])
        })
        .collect()
}

fn largest_eigenvalue<T: Scalar>(m: [T; 3]) -> T {
    let [a, b, c] = m;
    let half = T::lit(0.5);
    (a + c) * half + (((a - c) * half).powi(2) + b * b).sqrt()
}

/// Mass-weighted statistics of the largest eigenvalue of `D²φ(x) + D²ψ(T(x))` over masked
/// cells with `x` and `T(x)` at least `max(2, stencil)` cells inside the domain. Second
/// differences use spacing `stencil` cells; `D²ψ` is interpolated at `T(x)`. PASS if the
/// 95th percentile is at most `20·Δ·C`.
pub fn second_order_check<T: Scalar>(
    phi: &[T],
    psi: &[T],
    map: &MapField<T>,
    rho: &DensityField<T>,
    constant: T,
    stencil: usize,
) -> Result<SecondOrderReport<T>> {
    let grid = map.grid();
    check_same_grid(grid, &[rho.grid()])?;
    if phi.len() != grid.len() || psi.len() != grid.len() {
        return Err(Error::Shape("potentials do not match the grid".into()));
    }
    if stencil == 0 {
        return Err(Error::param("stencil", "must be at least one cell"));
    }
    let margin = stencil.max(2);
    let h_phi = hessian_field(grid, phi, stencil);
    let h_psi = hessian_field(grid, psi, stencil);
    let component = |c: usize| -> Vec<T> { h_psi.iter().map(|m| m.map_or(T::zero(), |m| m[c])).collect() };
    let psi_parts = [component(0), component(1), component(2)];
    let mut values = Vec::new();
    let mut weights = Vec::new();
    for (k, t) in map.defined() {
        if !grid.is_interior(k, margin) || grid.cells_from_boundary(t) < T::from_count(margin) + T::lit(0.5) {
            continue;
        }
        let Some(a) = h_phi[k] else { continue };
        let at = |c: usize| interpolate(grid, &psi_parts[c], t);
        values.push(largest_eigenvalue([a[0] + at(0), a[1] + at(1), a[2] + at(2)]));
        weights.push(rho.values()[k]);
    }
    let tolerance = T::lit(20.0) * grid.min_width() * constant;
    let (p95, max) = if values.is_empty() {
        (T::zero(), T::zero())
    } else {
        (weighted_quantile(&values, &weights, T::lit(0.95)), values.iter().copied().fold(T::neg_infinity(), T::max))
    };
    Ok(SecondOrderReport { p95, max, tolerance, stencil, cells: values.len(), pass: p95 <= tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::random_smooth_density;
    use crate::ot::{solve_lp, transport_map_from_potential, LpOptions};

    fn h(q: f64) -> HFunction<f64> {
        HFunction::power(q, HFunction::default_threshold(1.0)).unwrap()
    }

    #[test]
    fn zero_potentials_give_zero() {
        let grid = Grid::<f64>::unit_interval(32).unwrap();
        let rho = random_smooth_density(&grid, 1, 3, 0.2).unwrap();
        let zero = vec![0.0; 32];
        assert_eq!(five_gradients_lhs(&rho, &rho, &zero, &zero, &h(2.0)).unwrap(), 0.0);
        assert_eq!(boundary_flux(&rho, &rho, &zero, &zero, &h(1.5)).unwrap(), 0.0);
    }

    #[test]
    fn lhs_is_linear_in_h_and_symmetric_under_swap() {
        let grid = Grid::<f64>::unit_interval(64).unwrap();
        let cost = RadialCost::power(2.0, grid.domain_radius()).unwrap();
        let rho = random_smooth_density(&grid, 3, 4, 0.1).unwrap();
        let g = random_smooth_density(&grid, 4, 4, 0.1).unwrap();
        let lp = solve_lp(&rho, &g, &cost, &LpOptions::default()).unwrap();
        let base = five_gradients_lhs(&rho, &g, &lp.phi, &lp.psi, &h(1.5)).unwrap();
        let doubled = five_gradients_lhs(&rho, &g, &lp.phi, &lp.psi, &h(1.5).scaled(2.0).unwrap()).unwrap();
        assert!((doubled - 2.0 * base).abs() <= 1e-12 * base.abs().max(1.0));
        let swapped = five_gradients_lhs(&g, &rho, &lp.psi, &lp.phi, &h(1.5)).unwrap();
        assert!((swapped - base).abs() <= 1e-12 * base.abs().max(1.0));
    }

    #[test]
    fn quadratic_h_flux_is_the_plain_boundary_sum() {
        let grid = Grid::<f64>::unit_interval(32).unwrap();
        let rho = random_smooth_density(&grid, 5, 3, 0.2).unwrap();
        let g = random_smooth_density(&grid, 6, 3, 0.2).unwrap();
        let phi: Vec<f64> = grid.centers().iter().map(|c| 0.3 * c[0] * c[0] - 0.1 * c[0]).collect();
        let psi: Vec<f64> = grid.centers().iter().map(|c| (c[0] * 2.0).sin() * 0.05).collect();
        let flux = boundary_flux(&rho, &g, &phi, &psi, &h(2.0)).unwrap();
        let (dp, ds) = (gradient(&grid, &phi).unwrap(), gradient(&grid, &psi).unwrap());
        let direct = -(rho.values()[0] * dp.get(0)[0] + g.values()[0] * ds.get(0)[0])
            + rho.values()[31] * dp.get(31)[0]
            + g.values()[31] * ds.get(31)[0];
        assert!((flux - direct).abs() < 1e-14);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let rho = DensityField::uniform(Grid::<f64>::unit_interval(16).unwrap());
        let g = DensityField::uniform(Grid::<f64>::unit_interval(17).unwrap());
        let z = vec![0.0; 16];
        assert!(matches!(five_gradients_lhs(&rho, &g, &z, &z, &h(2.0)), Err(Error::Shape(_))));
        assert!(matches!(five_gradients_lhs(&rho, &rho, &z[..15], &z, &h(2.0)), Err(Error::Shape(_))));
    }

    #[test]
    fn semiconcavity_examples() {
        let grid = Grid::<f64>::unit_interval(64).unwrap();
        let bound = SemiconcavityBound { constant: 0.0, radius: 2.0 };
        let r = semiconcavity_check(&[1.0; 64], &bound, &grid).unwrap();
        assert!(r.pass && r.max_second_difference == 0.0);
        let kink: Vec<f64> = grid.centers().iter().map(|c| -(c[0] - 0.5).abs()).collect();
        assert!(semiconcavity_check(&kink, &bound, &grid).unwrap().pass);
        let convex: Vec<f64> = grid.centers().iter().map(|c| c[0] * c[0]).collect();
        assert!(!semiconcavity_check(&convex, &SemiconcavityBound { constant: 1.0, radius: 2.0 }, &grid).unwrap().pass);
    }

    #[test]
    fn second_order_vanishes_for_identical_marginals() {
        let grid = Grid::<f64>::unit_interval(64).unwrap();
        let cost = RadialCost::power(2.0, grid.domain_radius()).unwrap();
        let rho = random_smooth_density(&grid, 7, 3, 0.2).unwrap();
        let zero = vec![0.0; 64];
        let map = transport_map_from_potential(&grid, &zero, &cost, &rho, None).unwrap();
        let r = second_order_check(&zero, &zero, &map, &rho, 1.1, 1).unwrap();
        assert!(r.pass && r.p95 == 0.0 && r.cells > 0);
    }

    #[test]
    fn largest_eigenvalue_of_symmetric_matrices() {
        assert_eq!(largest_eigenvalue([1.0, 0.0, -2.0]), 1.0);
        assert!((largest_eigenvalue([0.0f64, 1.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((largest_eigenvalue([2.0f64, 1.0, 2.0]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_displacement_of_zero_potential() {
        let grid = Grid::<f64>::unit_interval(16).unwrap();
        let cost = RadialCost::power(2.0, grid.domain_radius()).unwrap();
        let rho = DensityField::uniform(grid);
        assert_eq!(boundary_displacement_min(&rho, &[0.0; 16], &cost, 0.5).unwrap(), Some(0.0));
        assert_eq!(boundary_displacement_min(&rho, &[0.0; 16], &cost, 2.0).unwrap(), None);
    }
}
