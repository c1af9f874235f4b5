//! The one-dimensional oracle: for a strictly convex `h(x − y)` on the line the optimal plan
//! is the monotone rearrangement, whatever the profile.

use crate::cost::RadialCost;
use crate::error::{Error, Result};
use crate::geometry::DensityField;
use crate::scalar::Scalar;

use super::map::MapField;
use super::{check_marginals, CostMatrix, SolverKind, TransportResult};

/// Monotone plan between the cell masses, the quantile map `T = G⁻¹∘F` of the piecewise
/// constant densities at the cell centers, and potentials obtained by integrating
/// `φ' = h'(x − T(x))` from the left end (`φ(left) = 0`), then canonicalized.
pub fn solve_exact_1d<T: Scalar>(
    rho: &DensityField<T>,
    g: &DensityField<T>,
    cost: &RadialCost<T>,
) -> Result<(TransportResult<T>, MapField<T>)> {
    let grid = *rho.grid();
    if grid.dim() != 1 {
        return Err(Error::Dimension { expected: 1, actual: grid.dim() });
    }
    let (a, b) = check_marginals(rho, g)?;
    let matrix = CostMatrix::new(&grid, cost)?;
    let n = grid.len();

    let coupling = monotone_plan(&a, &b);

    // quantile map at the cell centers
    let width = grid.width(0);
    let lower = grid.lower()[0];
    let mut cum_b = Vec::with_capacity(n + 1);
    cum_b.push(T::zero());
    for &m in &b {
        cum_b.push(cum_b[cum_b.len() - 1] + m);
    }
    let mut targets = Vec::with_capacity(n);
    let mut cum_a = T::zero();
    let mut j = 0usize;
    for &m in &a {
        let level = cum_a + m * T::lit(0.5);
        cum_a += m;
        while j + 1 < n && (cum_b[j + 1] < level || b[j] == T::zero()) {
            j += 1;
        }
        let frac = if b[j] > T::zero() { ((level - cum_b[j]) / b[j]).max(T::zero()).min(T::one()) } else { T::zero() };
        let y = lower + (T::from_count(j) + frac) * width;
        targets.push([y, T::zero()]);
    }

    // integrate φ' = h'(x − T(x)) with the trapezoid rule along the centers
    let slope: Vec<T> = (0..n)
        .map(|k| {
            let x = grid.center(k)[0];
            let z = x - targets[k][0];
            cost.profile_deriv(z.abs()) * z.signum()
        })
        .collect();
    let mut phi = Vec::with_capacity(n);
    phi.push(slope[0] * width * T::lit(0.5));
    for k in 1..n {
        let prev = phi[k - 1];
        phi.push(prev + width * (slope[k - 1] + slope[k]) * T::lit(0.5));
    }
    let psi = matrix.cbar_transform(&phi);
    let (phi, psi) = matrix.canonicalize(&psi);

    let threshold = MapField::<T>::default_mass_threshold(&grid);
    let mask = rho.values().iter().map(|&v| v > threshold).collect();
    let map = MapField::new(grid, targets, mask, T::zero());
    let result = TransportResult::assemble(
        grid,
        coupling,
        phi,
        psi,
        &matrix,
        &a,
        &b,
        SolverKind::Exact1d,
        vec![("cost".into(), cost.describe())],
    );
    Ok((result, map))
}

/// `W_p^p(ν, μ)/p` between the piecewise constant densities themselves, not their cell-center
/// atoms. Both quantile functions are piecewise linear, so the integral `∫₀¹ |Q_ν − Q_μ|^p / p`
/// is evaluated on the merged breakpoints. Unlike the atomic problem this does not charge a
/// full cell width for sub-cell motion.
pub fn piecewise_wasserstein_1d<T: Scalar>(nu: &DensityField<T>, mu: &DensityField<T>, p: T) -> Result<T> {
    let grid = *nu.grid();
    if grid.dim() != 1 {
        return Err(Error::Dimension { expected: 1, actual: grid.dim() });
    }
    if !(p > T::one()) {
        return Err(Error::param("p", format!("exponent must exceed 1, got {p}")));
    }
    let (a, b) = check_marginals(nu, mu)?;
    Ok(piecewise_transport(&a, &b, grid.width(0), p, false).0)
}

/// Value of `∫₀¹ |Q_a − Q_b|^p / p` for cell masses `a`, `b` on a common uniform grid, and
/// optionally its partial derivatives in the masses `a` (cells with zero mass get 0).
pub(crate) fn piecewise_transport<T: Scalar>(a: &[T], b: &[T], width: T, p: T, gradient: bool) -> (T, Vec<T>) {
    let cells = |m: &[T]| -> Vec<(usize, T, T)> {
        // (cell, mass, cumulative mass at its start)
        let mut out = Vec::new();
        let mut acc = T::zero();
        for (k, &w) in m.iter().enumerate() {
            if w > T::zero() {
                out.push((k, w, acc));
            }
            acc += w;
        }
        out
    };
    let (ca, cb) = (cells(a), cells(b));
    let quantile = |c: &(usize, T, T), s: T| {
        (T::from_count(c.0) + ((s - c.2) / c.1).max(T::zero()).min(T::one())) * width
    };
    // per source cell: ∫ h'(d) ds and ∫ h'(d)(s − A_i) ds over its quantile range
    let mut first = vec![T::zero(); ca.len()];
    let mut second = vec![T::zero(); ca.len()];
    let (mut i, mut j) = (0usize, 0usize);
    let mut s = T::zero();
    let mut total = T::zero();
    while i < ca.len() && j < cb.len() {
        let end_a = if i + 1 == ca.len() { T::infinity() } else { ca[i].2 + ca[i].1 };
        let end_b = if j + 1 == cb.len() { T::infinity() } else { cb[j].2 + cb[j].1 };
        let mut end = end_a.min(end_b);
        let last = end == T::infinity();
        if last {
            end = (ca[i].2 + ca[i].1).max(cb[j].2 + cb[j].1);
        }
        if end > s {
            let d0 = quantile(&ca[i], s) - quantile(&cb[j], s);
            let d1 = quantile(&ca[i], end) - quantile(&cb[j], end);
            total += (end - s) * mean_abs_power(d0, d1, p);
            if gradient {
                let (m0, m1) = slope_moments(d0, d1, s - ca[i].2, end - ca[i].2, p);
                first[i] += m0;
                second[i] += m1;
            }
            s = end;
        }
        if last {
            break;
        }
        if end_a <= end_b {
            i += 1;
        }
        if end_b <= end_a {
            j += 1;
        }
    }
    let mut grad = Vec::new();
    if gradient {
        // ∂Q_a(s)/∂a_k = −width/a_i for s in a later cell i, −width (s − A_k)/a_k² inside cell k
        grad = vec![T::zero(); a.len()];
        let mut tail = T::zero();
        for (c, &(k, m, _)) in ca.iter().enumerate().rev() {
            grad[k] = -width * (tail + second[c] / (m * m));
            tail += first[c] / m;
        }
    }
    (total / p, grad)
}

/// `∫ h'(d) ds` and `∫ h'(d) u ds` with `h'(d) = |d|^{p−1} sgn d`, `d` and `u` linear on
/// `[u0, u1]`; Simpson on each side of the sign change (exact for `p` = 2, 3).
fn slope_moments<T: Scalar>(d0: T, d1: T, u0: T, u1: T, p: T) -> (T, T) {
    if d0 * d1 < T::zero() {
        let r = d0 / (d0 - d1);
        let um = u0 + r * (u1 - u0);
        let (a0, a1) = slope_moments(d0, T::zero(), u0, um, p);
        let (b0, b1) = slope_moments(T::zero(), d1, um, u1, p);
        return (a0 + b0, a1 + b1);
    }
    let slope = |d: T| d.abs().powf(p - T::one()) * d.signum();
    let half = T::lit(0.5);
    let (s0, sm, s1) = (slope(d0), slope((d0 + d1) * half), slope(d1));
    let len = (u1 - u0) / T::lit(6.0);
    let um = (u0 + u1) * half;
    (len * (s0 + T::lit(4.0) * sm + s1), len * (s0 * u0 + T::lit(4.0) * sm * um + s1 * u1))
}

/// Mean of `|d|^p` over a segment on which `d` is linear from `d0` to `d1`.
fn mean_abs_power<T: Scalar>(d0: T, d1: T, p: T) -> T {
    if d0 * d1 < T::zero() {
        let r = d0 / (d0 - d1);
        return r * mean_abs_power(d0, T::zero(), p) + (T::one() - r) * mean_abs_power(T::zero(), d1, p);
    }
    let (u, v) = (d0.abs(), d1.abs());
    let spread = (v - u).abs();
    if spread <= T::lit(1e-6) * u.max(v) {
        let mid = (u + v) * T::lit(0.5);
        return (u.powf(p) + T::lit(4.0) * mid.powf(p) + v.powf(p)) / T::lit(6.0);
    }
    (v.powf(p + T::one()) - u.powf(p + T::one())) / ((p + T::one()) * (v - u))
}

/// North-west corner rule on the sorted cells, which is the monotone coupling.
pub(crate) fn monotone_plan<T: Scalar>(a: &[T], b: &[T]) -> Vec<(usize, usize, T)> {
    let mut plan = Vec::with_capacity(a.len() + b.len());
    if a.is_empty() || b.is_empty() {
        return plan;
    }
    let (last_i, last_j) = (a.len() - 1, b.len() - 1);
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ra, mut rb) = (a[0], b[0]);
    loop {
        let m = ra.min(rb);
        if m > T::zero() {
            plan.push((i, j, m));
        }
        ra -= m;
        rb -= m;
        if i == last_i && j == last_j {
            break;
        }
        if (ra <= rb && i < last_i) || j == last_j {
            i += 1;
            ra = a[i];
        } else {
            j += 1;
            rb = b[j];
        }
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_smooth_density, Grid};

    #[test]
    fn identical_densities_give_identity() {
        let grid = Grid::<f64>::unit_interval(64).unwrap();
        let rho = random_smooth_density(&grid, 5, 4, 0.2).unwrap();
        let cost = RadialCost::power(1.5, grid.domain_radius()).unwrap();
        let (res, map) = solve_exact_1d(&rho, &rho, &cost).unwrap();
        assert!(res.primal.abs() < 1e-14);
        for k in 0..64 {
            assert!((map.targets()[k][0] - grid.center(k)[0]).abs() < 1e-12);
        }
        assert!((res.total_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn shifted_uniform_blocks_map_by_one_half() {
        let grid = Grid::<f64>::unit_interval(64).unwrap();
        let rho = DensityField::from_fn(grid, |c| if c[0] < 0.5 { 2.0 } else { 0.0 }).unwrap();
        let g = DensityField::from_fn(grid, |c| if c[0] > 0.5 { 2.0 } else { 0.0 }).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let cost = RadialCost::power(p, grid.domain_radius()).unwrap();
            let (res, map) = solve_exact_1d(&rho, &g, &cost).unwrap();
            for k in 0..32 {
                let x = grid.center(k)[0];
                assert!((map.targets()[k][0] - (x + 0.5)).abs() <= grid.width(0));
                assert!(map.mask()[k]);
            }
            assert!(!map.mask()[40]);
            assert!((res.total_mass() - 1.0).abs() < 1e-10);
            assert!(res.gap >= -1e-10);
        }
    }

    #[test]
    fn piecewise_distance_of_shifted_blocks() {
        let grid = Grid::<f64>::unit_interval(64).unwrap();
        let rho = DensityField::from_fn(grid, |c| if c[0] < 0.5 { 2.0 } else { 0.0 }).unwrap();
        let g = DensityField::from_fn(grid, |c| if c[0] > 0.5 { 2.0 } else { 0.0 }).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let w = piecewise_wasserstein_1d(&rho, &g, p).unwrap();
            assert!((w - 0.5f64.powf(p) / p).abs() < 1e-12, "p={p}: {w}");
            assert!(piecewise_wasserstein_1d(&rho, &rho, p).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn piecewise_distance_matches_quantile_quadrature() {
        let grid = Grid::<f64>::unit_interval(32).unwrap();
        let rho = random_smooth_density(&grid, 3, 4, 0.1).unwrap();
        let g = random_smooth_density(&grid, 4, 4, 0.1).unwrap();
        // brute force: invert both CDFs by bisection on a fine level grid
        let quantile = |d: &DensityField<f64>, s: f64| {
            let cdf = |x: f64| {
                let k = ((x * 32.0).floor() as usize).min(31);
                d.values()[..k].iter().sum::<f64>() / 32.0 + d.values()[k] * (x - k as f64 / 32.0)
            };
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < s { lo = mid } else { hi = mid }
            }
            0.5 * (lo + hi)
        };
        let m = 20000;
        for p in [1.5, 2.0, 3.0] {
            let brute: f64 = (0..m)
                .map(|k| {
                    let s = (k as f64 + 0.5) / m as f64;
                    (quantile(&rho, s) - quantile(&g, s)).abs().powf(p)
                })
                .sum::<f64>()
                / m as f64
                / p;
            let w = piecewise_wasserstein_1d(&rho, &g, p).unwrap();
            assert!((w - brute).abs() < 1e-6 * brute.max(1e-6), "p={p}: {w} vs {brute}");
        }
    }

    #[test]
    fn piecewise_gradient_matches_finite_differences() {
        let grid = Grid::<f64>::unit_interval(16).unwrap();
        let a = random_smooth_density(&grid, 8, 3, 0.2).unwrap().masses();
        let b = random_smooth_density(&grid, 9, 3, 0.2).unwrap().masses();
        for p in [1.5, 2.0, 3.0] {
            let (_, grad) = piecewise_transport(&a, &b, 1.0 / 16.0, p, true);
            // mass-preserving directions e_k − e_l
            for (k, l) in [(0, 7), (5, 15), (15, 3)] {
                let h = 1e-6;
                let mut up = a.clone();
                up[k] += h;
                up[l] -= h;
                let mut down = a.clone();
                down[k] -= h;
                down[l] += h;
                let fd = (piecewise_transport(&up, &b, 1.0 / 16.0, p, false).0
                    - piecewise_transport(&down, &b, 1.0 / 16.0, p, false).0)
                    / (2.0 * h);
                let exact = grad[k] - grad[l];
                let tol = if p == 1.5 { 1e-3 } else { 1e-6 };
                assert!((fd - exact).abs() < tol * (1.0 + fd.abs()), "p={p} ({k},{l}): {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn piecewise_distance_is_below_the_atomic_one() {
        let grid = Grid::<f64>::unit_interval(64).unwrap();
        let rho = random_smooth_density(&grid, 5, 4, 0.2).unwrap();
        let g = random_smooth_density(&grid, 6, 4, 0.2).unwrap();
        let cost = RadialCost::power(2.0, grid.domain_radius()).unwrap();
        let atomic = solve_exact_1d(&rho, &g, &cost).unwrap().0.primal;
        let w = piecewise_wasserstein_1d(&rho, &g, 2.0).unwrap();
        assert!(w <= atomic + 1e-12);
        assert!(w > 0.0);
    }

    #[test]
    fn rejects_2d_grids() {
        let grid = Grid::<f64>::unit_square(4).unwrap();
        let rho = DensityField::uniform(grid);
        let cost = RadialCost::power(2.0, grid.domain_radius()).unwrap();
        assert!(matches!(solve_exact_1d(&rho, &rho, &cost), Err(Error::Dimension { .. })));
    }

    #[test]
    fn monotone_plan_preserves_marginals() {
        let a = [0.1f64, 0.4, 0.0, 0.5];
        let b = [0.25, 0.25, 0.25, 0.25];
        let plan = monotone_plan(&a, &b);
        let mut rows = [0.0f64; 4];
        let mut cols = [0.0f64; 4];
        for &(i, j, m) in &plan {
            rows[i] += m;
            cols[j] += m;
        }
        for k in 0..4 {
            assert!((rows[k] - a[k]).abs() < 1e-15);
            assert!((cols[k] - b[k]).abs() < 1e-15);
        }
        // monotone: (i, j) pairs are sorted in both coordinates
        assert!(plan.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    }
}
