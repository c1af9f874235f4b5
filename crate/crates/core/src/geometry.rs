//! Uniform cell-centered grids on boxes, densities on them and the discrete calculus used by
//! the transport and inequality code.
//!
//! Cells are stored with the last axis fastest: in 2D the cell `(i, j)` (x index `i`, y index
//! `j`) lives at `i * ny + j`. Vectors are `[T; 2]` in both dimensions; in 1D the second
//! component is always zero, so norms and dot products need no special casing.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{ordered_sum, Scalar};
use crate::vector::{norm, Point};

/// Smallest per-axis cell count accepted by the finite-difference operators.
pub const MIN_STENCIL_CELLS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    dim: usize,
    lower: [T; 2],
    upper: [T; 2],
    cells: [usize; 2],
}

impl<T: Scalar> Grid<T> {
    pub fn new_1d(lower: T, upper: T, n: usize) -> Result<Self> {
        Self::build(1, [lower, T::zero()], [upper, T::one()], [n, 1])
    }

    pub fn new_2d(lower: [T; 2], upper: [T; 2], cells: [usize; 2]) -> Result<Self> {
        Self::build(2, lower, upper, cells)
    }

    /// `[0, 1]` with `n` cells.
    pub fn unit_interval(n: usize) -> Result<Self> {
        Self::new_1d(T::zero(), T::one(), n)
    }

    /// `[0, 1]^2` with `n` cells per axis.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new_2d([T::zero(); 2], [T::one(); 2], [n, n])
    }

    fn build(dim: usize, lower: [T; 2], upper: [T; 2], cells: [usize; 2]) -> Result<Self> {
        for axis in 0..dim {
            if !(lower[axis].is_finite() && upper[axis].is_finite()) {
                return Err(Error::param("bounds", "grid bounds must be finite"));
            }
            if upper[axis] <= lower[axis] {
                return Err(Error::param(
                    "bounds",
                    format!("upper must exceed lower on axis {axis}"),
                ));
            }
            // Two cells are enough for the pure transport routines; stencil users check
            // MIN_STENCIL_CELLS themselves.
            if cells[axis] < 2 {
                return Err(Error::param("cells", format!("need at least 2 cells on axis {axis}")));
            }
        }
        Ok(Grid { dim, lower, upper, cells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> [T; 2] {
        self.lower
    }

    pub fn upper(&self) -> [T; 2] {
        self.upper
    }

    pub fn cells(&self, axis: usize) -> usize {
        self.cells[axis]
    }

    pub fn width(&self, axis: usize) -> T {
        (self.upper[axis] - self.lower[axis]) / T::from_count(self.cells[axis])
    }

    /// The smallest cell width over the active axes.
    pub fn min_width(&self) -> T {
        (0..self.dim).map(|a| self.width(a)).fold(T::infinity(), T::min)
    }

    pub fn cell_volume(&self) -> T {
        (0..self.dim).fold(T::one(), |v, a| v * self.width(a))
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.cells[1] + j
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.cells[1], idx % self.cells[1])
    }

    pub fn center(&self, idx: usize) -> Point<T> {
        let (i, j) = self.coords(idx);
        let half = T::lit(0.5);
        let x = self.lower[0] + (T::from_count(i) + half) * self.width(0);
        if self.dim == 1 {
            [x, T::zero()]
        } else {
            [x, self.lower[1] + (T::from_count(j) + half) * self.width(1)]
        }
    }

    pub fn centers(&self) -> Vec<Point<T>> {
        (0..self.len()).map(|k| self.center(k)).collect()
    }

    /// `R` such that the box lies in the closed ball of radius `R/2` about the origin. Every
    /// difference of two points of the box then has norm at most `R`.
    pub fn domain_radius(&self) -> T {
        let mut far = [T::zero(); 2];
        for (axis, f) in far.iter_mut().enumerate().take(self.dim) {
            *f = self.lower[axis].abs().max(self.upper[axis].abs());
        }
        T::lit(2.0) * norm(far)
    }

    pub fn diameter(&self) -> T {
        let mut d = [T::zero(); 2];
        for (axis, v) in d.iter_mut().enumerate().take(self.dim) {
            *v = self.upper[axis] - self.lower[axis];
        }
        norm(d)
    }

    /// Projects a point onto the closed box, returning the projection and the distance moved.
    pub fn clamp(&self, p: Point<T>) -> (Point<T>, T) {
        let mut q = p;
        for axis in 0..self.dim {
            q[axis] = p[axis].max(self.lower[axis]).min(self.upper[axis]);
        }
        let moved = norm([p[0] - q[0], p[1] - q[1]]);
        (q, moved)
    }

    /// Distance (in cells, per axis minimum) from the cell containing `p` to the boundary.
    pub fn cells_from_boundary(&self, p: Point<T>) -> T {
        let mut best = T::infinity();
        for axis in 0..self.dim {
            let w = self.width(axis);
            let lo = (p[axis] - self.lower[axis]) / w;
            let hi = (self.upper[axis] - p[axis]) / w;
            best = best.min(lo).min(hi);
        }
        best
    }

    /// True when the cell's stencil stays `margin` cells away from every face.
    pub fn is_interior(&self, idx: usize, margin: usize) -> bool {
        let (i, j) = self.coords(idx);
        let ok_x = i >= margin && i + margin < self.cells[0];
        let ok_y = self.dim == 1 || (j >= margin && j + margin < self.cells[1]);
        ok_x && ok_y
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::Shape(format!("expected {} cell values, got {len}", self.len())));
        }
        Ok(())
    }

    fn check_stencil(&self) -> Result<()> {
        for axis in 0..self.dim {
            if self.cells[axis] < MIN_STENCIL_CELLS {
                return Err(Error::Shape(format!(
                    "finite differences need at least {MIN_STENCIL_CELLS} cells per axis, axis {axis} has {}",
                    self.cells[axis]
                )));
            }
        }
        Ok(())
    }

    /// Integral of cell values by the midpoint rule.
    pub fn integrate(&self, values: &[T]) -> T {
        ordered_sum(values.iter().copied()) * self.cell_volume()
    }
}

/// Nonnegative cell values; the "probability density" role is enforced by [`DensityField::normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField<T> {
    grid: Grid<T>,
    values: Vec<T>,
}

impl<T: Scalar> DensityField<T> {
    pub fn new(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        grid.check_len(values.len())?;
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < T::zero()) {
            return Err(Error::Input(format!("density values must be finite and nonnegative, found {v}")));
        }
        Ok(DensityField { grid, values })
    }

    pub fn from_fn(grid: Grid<T>, f: impl Fn(Point<T>) -> T) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(grid.center(k))).collect();
        Self::new(grid, values)
    }

    pub fn uniform(grid: Grid<T>) -> Self {
        let v = T::one() / (grid.cell_volume() * T::from_count(grid.len()));
        DensityField { grid, values: vec![v; grid.len()] }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn mass(&self) -> T {
        self.grid.integrate(&self.values)
    }

    /// Cell masses `value * cellVolume`.
    pub fn masses(&self) -> Vec<T> {
        let vol = self.grid.cell_volume();
        self.values.iter().map(|&v| v * vol).collect()
    }

    /// Unit-mass copy; fields already at unit mass up to rounding are returned unchanged.
    pub fn normalize(&self) -> Result<Self> {
        let mass = self.mass();
        if !(mass > T::zero()) || !mass.is_finite() {
            return Err(Error::Degenerate(format!("cannot normalize a field of mass {mass}")));
        }
        if (mass - T::one()).abs() <= T::epsilon() * T::from_count(self.values.len()) {
            return Ok(self.clone());
        }
        let values = self.values.iter().map(|&v| v / mass).collect();
        Ok(DensityField { grid: self.grid, values })
    }

    pub fn scaled(&self, factor: T) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| v * factor).collect())
    }

    pub fn gradient(&self) -> Result<VectorField<T>> {
        gradient(&self.grid, &self.values)
    }

    pub fn tv_norm(&self) -> Result<T> {
        tv_norm(&self.grid, &self.values)
    }

    pub fn l1_distance(&self, other: &Self) -> Result<T> {
        if self.grid != other.grid {
            return Err(Error::Shape("densities live on different grids".into()));
        }
        let diff = self.values.iter().zip(&other.values).map(|(a, b)| (*a - *b).abs());
        Ok(ordered_sum(diff) * self.grid.cell_volume())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_field_csv(&self.grid, &self.values, w)
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let (grid, values) = read_field_csv(r)?;
        Self::new(grid, values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<T> {
    grid: Grid<T>,
    values: Vec<Point<T>>,
}

impl<T: Scalar> VectorField<T> {
    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[Point<T>] {
        &self.values
    }

    pub fn get(&self, idx: usize) -> Point<T> {
        self.values[idx]
    }

    /// Multilinear interpolation of the field at an arbitrary point of the box.
    pub fn interpolate(&self, p: Point<T>) -> Point<T> {
        let x = interpolate_with(&self.grid, p, |k| self.values[k][0]);
        let y = interpolate_with(&self.grid, p, |k| self.values[k][1]);
        [x, y]
    }
}

/// Central differences at interior cells, first-order one-sided differences at boundary cells.
pub fn gradient<T: Scalar>(grid: &Grid<T>, values: &[T]) -> Result<VectorField<T>> {
    grid.check_len(values.len())?;
    grid.check_stencil()?;
    let mut out = vec![[T::zero(); 2]; grid.len()];
    for (idx, g) in out.iter_mut().enumerate() {
        let (i, j) = grid.coords(idx);
        g[0] = axis_difference(values, grid.cells(0), i, grid.width(0), |t| grid.index(t, j));
        if grid.dim() == 2 {
            g[1] = axis_difference(values, grid.cells(1), j, grid.width(1), |t| grid.index(i, t));
        }
    }
    Ok(VectorField { grid: *grid, values: out })
}

#[inline]
fn axis_difference<T: Scalar>(
    values: &[T],
    n: usize,
    t: usize,
    width: T,
    at: impl Fn(usize) -> usize,
) -> T {
    if t == 0 {
        (values[at(1)] - values[at(0)]) / width
    } else if t == n - 1 {
        (values[at(n - 1)] - values[at(n - 2)]) / width
    } else {
        (values[at(t + 1)] - values[at(t - 1)]) / (T::lit(2.0) * width)
    }
}

/// Centered second difference along `axis`; `None` at boundary cells of that axis.
pub fn second_difference<T: Scalar>(grid: &Grid<T>, values: &[T], idx: usize, axis: usize) -> Option<T> {
    let (i, j) = grid.coords(idx);
    let t = if axis == 0 { i } else { j };
    if t == 0 || t + 1 >= grid.cells(axis) {
        return None;
    }
    let at = |s: usize| if axis == 0 { grid.index(s, j) } else { grid.index(i, s) };
    let w = grid.width(axis);
    Some((values[at(t + 1)] - T::lit(2.0) * values[at(t)] + values[at(t - 1)]) / (w * w))
}

/// Centered mixed difference `∂x∂y`; `None` unless the cell is interior on both axes.
pub fn mixed_difference<T: Scalar>(grid: &Grid<T>, values: &[T], idx: usize) -> Option<T> {
    if grid.dim() != 2 || !grid.is_interior(idx, 1) {
        return None;
    }
    let (i, j) = grid.coords(idx);
    let v = |a: usize, b: usize| values[grid.index(a, b)];
    let num = v(i + 1, j + 1) - v(i + 1, j - 1) - v(i - 1, j + 1) + v(i - 1, j - 1);
    Some(num / (T::lit(4.0) * grid.width(0) * grid.width(1)))
}

/// Discrete total variation `Σ |∇f| · cellVolume`.
pub fn tv_norm<T: Scalar>(grid: &Grid<T>, values: &[T]) -> Result<T> {
    let g = gradient(grid, values)?;
    Ok(ordered_sum(g.values.iter().map(|v| norm(*v))) * grid.cell_volume())
}

/// Multilinear interpolation of cell-centered data; points outside the hull of the centers
/// are clamped onto it.
pub fn interpolate<T: Scalar>(grid: &Grid<T>, values: &[T], p: Point<T>) -> T {
    interpolate_with(grid, p, |k| values[k])
}

fn interpolate_with<T: Scalar>(grid: &Grid<T>, p: Point<T>, value: impl Fn(usize) -> T) -> T {
    let locate = |axis: usize| -> (usize, T) {
        let n = grid.cells(axis);
        let s = (p[axis] - grid.lower()[axis]) / grid.width(axis) - T::lit(0.5);
        let s = s.max(T::zero()).min(T::from_count(n - 1));
        let i0 = s.floor().to_usize().unwrap_or(0).min(n - 2);
        (i0, s - T::from_count(i0))
    };
    let (i0, tx) = locate(0);
    if grid.dim() == 1 {
        let a = value(grid.index(i0, 0));
        let b = value(grid.index(i0 + 1, 0));
        return a + (b - a) * tx;
    }
    let (j0, ty) = locate(1);
    let v00 = value(grid.index(i0, j0));
    let v10 = value(grid.index(i0 + 1, j0));
    let v01 = value(grid.index(i0, j0 + 1));
    let v11 = value(grid.index(i0 + 1, j0 + 1));
    let low = v00 + (v10 - v00) * tx;
    let high = v01 + (v11 - v01) * tx;
    low + (high - low) * ty
}

/// Deterministic strictly positive test density: a truncated random Fourier series shifted so
/// its minimum equals `floor`, normalized to unit mass.
pub fn random_smooth_density<T: Scalar>(
    grid: &Grid<T>,
    seed: u64,
    mode_count: usize,
    floor: T,
) -> Result<DensityField<T>> {
    if mode_count == 0 {
        return Err(Error::param("mode_count", "need at least one Fourier mode"));
    }
    if !(floor > T::zero()) {
        return Err(Error::param("floor", "floor must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi = T::lit(std::f64::consts::PI);
    let span = |axis: usize| grid.upper()[axis] - grid.lower()[axis];
    let values: Vec<T> = if grid.dim() == 1 {
        let modes: Vec<(T, T)> = (0..mode_count)
            .map(|_| (T::lit(rng.gen_range(-1.0..1.0)), T::lit(rng.gen_range(0.0..std::f64::consts::TAU))))
            .collect();
        (0..grid.len())
            .map(|k| {
                let u = (grid.center(k)[0] - grid.lower()[0]) / span(0);
                let s = ordered_sum(modes.iter().enumerate().map(|(m, &(amp, phase))| {
                    let freq = T::from_count(m + 1);
                    amp * (freq * pi * u + phase).cos() / freq
                }));
                s
            })
            .collect()
    } else {
        let mut modes = Vec::new();
        for kx in 0..=mode_count {
            for ky in 0..=mode_count {
                if kx + ky == 0 || kx + ky > mode_count {
                    continue;
                }
                let amp = T::lit(rng.gen_range(-1.0..1.0));
                let px = T::lit(rng.gen_range(0.0..std::f64::consts::TAU));
                let py = T::lit(rng.gen_range(0.0..std::f64::consts::TAU));
                modes.push((T::from_count(kx), T::from_count(ky), amp, px, py));
            }
        }
        (0..grid.len())
            .map(|k| {
                let c = grid.center(k);
                let u = (c[0] - grid.lower()[0]) / span(0);
                let v = (c[1] - grid.lower()[1]) / span(1);
                let s = ordered_sum(modes.iter().map(|&(kx, ky, amp, px, py)| {
                    amp * (kx * pi * u + px).cos() * (ky * pi * v + py).cos() / (T::one() + kx + ky)
                }));
                s
            })
            .collect()
    };
    let low = values.iter().copied().fold(T::infinity(), T::min);
    let values = values.into_iter().map(|s| floor + s - low).collect();
    DensityField::new(*grid, values)?.normalize()
}

/// `floor + exp(−|x − center|² / (2 width²))`, normalized to unit mass.
pub fn gaussian_bump<T: Scalar>(grid: &Grid<T>, center: Point<T>, width: T, floor: T) -> Result<DensityField<T>> {
    if !(width > T::zero()) || !(floor >= T::zero()) {
        return Err(Error::param("width", "bump needs a positive width and a nonnegative floor"));
    }
    let two = T::lit(2.0);
    DensityField::from_fn(*grid, |c| {
        let d = [c[0] - center[0], if grid.dim() == 2 { c[1] - center[1] } else { T::zero() }];
        floor + (-(d[0] * d[0] + d[1] * d[1]) / (two * width * width)).exp()
    })?
    .normalize()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFacet<T> {
    pub cell: usize,
    pub normal: Point<T>,
    pub area: T,
}

/// One entry per boundary facet; corner cells of a 2D box contribute one facet per face.
pub fn boundary_cells_and_normals<T: Scalar>(grid: &Grid<T>) -> Vec<BoundaryFacet<T>> {
    let one = T::one();
    let zero = T::zero();
    let nx = grid.cells(0);
    if grid.dim() == 1 {
        return vec![
            BoundaryFacet { cell: 0, normal: [-one, zero], area: one },
            BoundaryFacet { cell: nx - 1, normal: [one, zero], area: one },
        ];
    }
    let ny = grid.cells(1);
    let (wx, wy) = (grid.width(0), grid.width(1));
    let mut facets = Vec::with_capacity(2 * (nx + ny));
    for j in 0..ny {
        facets.push(BoundaryFacet { cell: grid.index(0, j), normal: [-one, zero], area: wy });
        facets.push(BoundaryFacet { cell: grid.index(nx - 1, j), normal: [one, zero], area: wy });
    }
    for i in 0..nx {
        facets.push(BoundaryFacet { cell: grid.index(i, 0), normal: [zero, -one], area: wx });
        facets.push(BoundaryFacet { cell: grid.index(i, ny - 1), normal: [zero, one], area: wx });
    }
    facets
}

/// Writes `x[,y],value` rows in cell order.
pub fn write_field_csv<T: Scalar, W: Write>(grid: &Grid<T>, values: &[T], mut w: W) -> Result<()> {
    grid.check_len(values.len())?;
    if grid.dim() == 1 {
        writeln!(w, "x,value")?;
    } else {
        writeln!(w, "x,y,value")?;
    }
    for (k, v) in values.iter().enumerate() {
        let c = grid.center(k);
        if grid.dim() == 1 {
            writeln!(w, "{},{}", c[0], v)?;
        } else {
            writeln!(w, "{},{},{}", c[0], c[1], v)?;
        }
    }
    Ok(())
}

/// Reads the layout written by [`write_field_csv`], reconstructing the grid from the centers.
pub fn read_field_csv<T: Scalar, R: BufRead>(r: R) -> Result<(Grid<T>, Vec<T>)> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty csv".into()))??;
    let dim = match header.trim() {
        "x,value" => 1,
        "x,y,value" => 2,
        other => return Err(Error::Parse(format!("unexpected header `{other}`"))),
    };
    let mut rows: Vec<[f64; 3]> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
        if fields.len() != dim + 1 {
            return Err(Error::Parse(format!("line {}: expected {} fields", lineno + 2, dim + 1)));
        }
        rows.push(if dim == 1 { [fields[0], 0.0, fields[1]] } else { [fields[0], fields[1], fields[2]] });
    }
    let axis_centers = |axis: usize| -> Vec<f64> {
        let mut c: Vec<f64> = rows.iter().map(|r| r[axis]).collect();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        c.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
        c
    };
    let bounds = |c: &[f64]| -> Result<(f64, f64, usize)> {
        if c.len() < 2 {
            return Err(Error::Parse("need at least two distinct centers per axis".into()));
        }
        let width = (c[c.len() - 1] - c[0]) / (c.len() - 1) as f64;
        Ok((c[0] - 0.5 * width, c[c.len() - 1] + 0.5 * width, c.len()))
    };
    let cx = axis_centers(0);
    let (lx, ux, nx) = bounds(&cx)?;
    let grid = if dim == 1 {
        Grid::new_1d(T::lit(lx), T::lit(ux), nx)?
    } else {
        let (ly, uy, ny) = bounds(&axis_centers(1))?;
        Grid::new_2d([T::lit(lx), T::lit(ly)], [T::lit(ux), T::lit(uy)], [nx, ny])?
    };
    if rows.len() != grid.len() {
        return Err(Error::Parse(format!("expected {} rows, found {}", grid.len(), rows.len())));
    }
    for (k, row) in rows.iter().enumerate() {
        let c = grid.center(k);
        let tol = 1e-6 * grid.min_width().to_f64_lossy();
        if (c[0].to_f64_lossy() - row[0]).abs() > tol || (c[1].to_f64_lossy() - row[1]).abs() > tol {
            return Err(Error::Parse(format!("row {} is out of cell order", k + 2)));
        }
    }
    Ok((grid, rows.iter().map(|r| T::lit(r[2])).collect()))
}
