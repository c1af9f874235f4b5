//! Transport maps assembled from potentials, and the map/potential consistency diagnostic.

use crate::cost::RadialCost;
use crate::error::{Error, Result};
use crate::geometry::{gradient, DensityField, Grid};
use crate::scalar::Scalar;
use crate::stats::QuantileSummary;
use crate::vector::{add, norm, scale, sub, Point};

/// One target point per cell, defined where the source density exceeds the mass threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MapField<T> {
    grid: Grid<T>,
    targets: Vec<Point<T>>,
    mask: Vec<bool>,
    max_clip: T,
}

impl<T: Scalar> MapField<T> {
    pub fn new(grid: Grid<T>, targets: Vec<Point<T>>, mask: Vec<bool>, max_clip: T) -> Self {
        MapField { grid, targets, mask, max_clip }
    }

    /// `1e-10 / cellVolume`.
    pub fn default_mass_threshold(grid: &Grid<T>) -> T {
        T::lit(1e-10) / grid.cell_volume()
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn targets(&self) -> &[Point<T>] {
        &self.targets
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Largest distance a target had to be moved to land in the box.
    pub fn max_clip(&self) -> T {
        self.max_clip
    }

    /// Masked cells as `(cell, target)`.
    pub fn defined(&self) -> impl Iterator<Item = (usize, Point<T>)> + '_ {
        self.targets.iter().enumerate().filter(|(k, _)| self.mask[*k]).map(|(k, t)| (k, *t))
    }
}

/// `T(x) = x − ∇h*(∇φ(x))` at every cell where `ϱ > mass_threshold`, clipped to the box.
pub fn transport_map_from_potential<T: Scalar>(
    grid: &Grid<T>,
    phi: &[T],
    cost: &RadialCost<T>,
    rho: &DensityField<T>,
    mass_threshold: Option<T>,
) -> Result<MapField<T>> {
    if rho.grid() != grid {
        return Err(Error::Shape("density and potential live on different grids".into()));
    }
    let threshold = mass_threshold.unwrap_or_else(|| MapField::default_mass_threshold(grid));
    let grad = gradient(grid, phi)?;
    let max = cost.max_gradient();
    let slack = T::lit(1e-6);
    let mut targets = Vec::with_capacity(grid.len());
    let mut mask = Vec::with_capacity(grid.len());
    let mut max_clip = T::zero();
    for (k, &density) in rho.values().iter().enumerate() {
        let x = grid.center(k);
        if density <= threshold {
            targets.push(x);
            mask.push(false);
            continue;
        }
        let mut w = grad.get(k);
        let len = norm(w);
        if len > max * (T::one() + slack) {
            return Err(Error::Range { norm: len.to_f64_lossy(), max: max.to_f64_lossy() });
        }
        if len > max {
            w = scale(w, max / len);
        }
        let (t, clip) = grid.clamp(sub(x, cost.grad_h_star(w)?));
        max_clip = max_clip.max(clip);
        targets.push(t);
        mask.push(true);
    }
    Ok(MapField { grid: *grid, targets, mask, max_clip })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport<T> {
    /// `|∇ψ(T(x)) + ∇h(x − T(x))|`.
    pub target_residual: QuantileSummary<T>,
    /// `|∇φ(x) − ∇h(x − T(x))|`.
    pub source_residual: QuantileSummary<T>,
    pub cells: usize,
}

/// ϱ-weighted statistics of how well `(φ, ψ, T)` satisfy `∇φ(x) = ∇h(x − T(x)) = −∇ψ(T(x))`.
/// `∇ψ` is interpolated multilinearly at the off-grid points `T(x)`.
pub fn map_consistency_check<T: Scalar>(
    phi: &[T],
    psi: &[T],
    map: &MapField<T>,
    cost: &RadialCost<T>,
    rho: &DensityField<T>,
) -> Result<ConsistencyReport<T>> {
    let grid = map.grid();
    if rho.grid() != grid {
        return Err(Error::Shape("density and map live on different grids".into()));
    }
    let grad_phi = gradient(grid, phi)?;
    let grad_psi = gradient(grid, psi)?;
    let mut target_res = Vec::new();
    let mut source_res = Vec::new();
    let mut weights = Vec::new();
    for (k, t) in map.defined() {
        let x = grid.center(k);
        let gh = cost.grad_h(sub(x, t))?;
        target_res.push(norm(add(grad_psi.interpolate(t), gh)));
        source_res.push(norm(sub(grad_phi.get(k), gh)));
        weights.push(rho.values()[k]);
    }
    Ok(ConsistencyReport {
        target_residual: QuantileSummary::of(&target_res, &weights),
        source_residual: QuantileSummary::of(&source_res, &weights),
        cells: weights.len(),
    })
}
