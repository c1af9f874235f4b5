//! Maps from mollified costs against the map of the base cost as `ε → 0`.

use crate::cost::RadialCost;
use crate::error::{Error, Result};
use crate::geometry::DensityField;
use crate::ot::{solve_lp, transport_map_from_potential, LpOptions, MapField};
use crate::scalar::{ordered_sum, Scalar};
use crate::vector::{norm, sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollificationRow<T> {
    pub epsilon: T,
    /// `sup_{[0,R]} |p_{h_ε}' − p_h'|` on sampled radii.
    pub gradient_deviation: T,
    /// ϱ-mass of `{|T_ε − T| > 2Δ}`.
    pub deviation_measure: T,
    /// `‖T_ε − T‖` in `L^p(ϱ)`.
    pub map_distance: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MollificationReport<T> {
    pub rows: Vec<MollificationRow<T>>,
    /// Exponent of the `L^p(ϱ)` distance (the base cost exponent, 2 for tabulated costs).
    pub exponent: T,
    pub threshold: T,
    /// Bound on the last row's measure and distance, `5Δ`.
    pub final_limit: T,
    /// Both sequences non-increasing up to 10% relative slack; distance changes below the
    /// resolution floor `Δ/10` are not counted.
    pub monotone: bool,
    pub pass: bool,
}

const GRADIENT_SAMPLES: usize = 2000;

fn nonincreasing<T: Scalar>(values: impl Iterator<Item = T>, floor: T) -> bool {
    let v: Vec<T> = values.collect();
    v.windows(2).all(|w| w[1] <= w[0] * T::lit(1.1) + floor)
}

/// Solves the 1D problem with `h` and with each `h_ε` on the same grid (exact LP), builds
/// `T = x − ∇h*(∇φ)` and `T_ε = x − ∇h_ε*(∇φ_ε)`, and compares them on the support of ϱ.
pub fn mollification_convergence_experiment<T: Scalar>(
    rho: &DensityField<T>,
    g: &DensityField<T>,
    base_cost: &RadialCost<T>,
    epsilons: &[T],
    quadrature_order: usize,
) -> Result<MollificationReport<T>> {
    let grid = *rho.grid();
    if grid.dim() != 1 {
        return Err(Error::Dimension { expected: 1, actual: grid.dim() });
    }
    if epsilons.is_empty() {
        return Err(Error::param("epsilons", "need at least one value"));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("epsilons", "must be strictly decreasing"));
    }
    let exponent = base_cost.power_exponent().unwrap_or(T::lit(2.0));
    let delta = grid.width(0);
    let threshold = T::lit(2.0) * delta;
    let lp = LpOptions::default();

    let base = solve_lp(rho, g, base_cost, &lp)?;
    let reference = transport_map_from_potential(&grid, &base.phi, base_cost, rho, None)?;

    let radius = base_cost.radius();
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let cost = base_cost.mollify(eps, quadrature_order, 1)?;
        let gradient_deviation = (0..=GRADIENT_SAMPLES)
            .map(|k| {
                let r = radius * T::from_count(k) / T::from_count(GRADIENT_SAMPLES);
                (cost.profile_deriv(r) - base_cost.profile_deriv(r)).abs()
            })
            .fold(T::zero(), T::max);
        let solved = solve_lp(rho, g, &cost, &lp)?;
        let map = transport_map_from_potential(&grid, &solved.phi, &cost, rho, None)?;
        let (deviation_measure, map_distance) = compare(&reference, &map, rho, threshold, exponent);
        rows.push(MollificationRow { epsilon: eps, gradient_deviation, deviation_measure, map_distance });
    }
    let monotone = nonincreasing(rows.iter().map(|r| r.deviation_measure), T::lit(1e-12))
        && nonincreasing(rows.iter().map(|r| r.map_distance), delta * T::lit(0.1));
    let final_limit = T::lit(5.0) * delta;
    let last = rows[rows.len() - 1];
    let pass = monotone && last.deviation_measure <= final_limit && last.map_distance <= final_limit;
    Ok(MollificationReport { rows, exponent, threshold, final_limit, monotone, pass })
}

fn compare<T: Scalar>(reference: &MapField<T>, map: &MapField<T>, rho: &DensityField<T>, threshold: T, p: T) -> (T, T) {
    let vol = rho.grid().cell_volume();
    let mut measure = Vec::new();
    let mut moment = Vec::new();
    for (k, t) in reference.defined() {
        let d = norm(sub(map.targets()[k], t));
        let m = rho.values()[k] * vol;
        if d > threshold {
            measure.push(m);
        }
        moment.push(m * d.powf(p));
    }
    (ordered_sum(measure), ordered_sum(moment).powf(T::one() / p))
}
