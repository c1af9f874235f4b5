//! The `W_p` minimizing-movement scheme `ϱ_{k+1} ∈ argmin W_p^p(ϱ, ϱ_k)/(pτ^{p−1}) + ∫ f(ϱ)`,
//! a reference solver for `∂_t ϱ = Δ_q(g(ϱ))`, and their comparison.

mod energy;
mod pde;

pub use energy::{Energy, ENTROPY_FLOOR};
pub use pde::{jko_vs_pde_report, reference_pde_solve, stable_time_step, JkoPdeReport};

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::cost::RadialCost;
use crate::error::{Error, Result};
use crate::geometry::DensityField;
use crate::ot::{piecewise_transport, piecewise_wasserstein_1d, solve_lp, CostMatrix, LpOptions};
use crate::scalar::{ordered_sum, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct JkoConfig<T> {
    /// Cost exponent, `p > 1`.
    pub p: T,
    pub tau: T,
    pub steps: usize,
    pub energy: Energy<T>,
    /// Entropic regularization of the inner transport problem.
    pub epsilon: T,
    pub max_inner: usize,
    /// L¹ change between successive inner iterates that ends the inner loop.
    pub inner_tolerance: T,
    /// Halvings of the step toward `ϱ_k` tried when the exact objective does not decrease.
    pub max_backtracks: usize,
    /// Iterations of the unregularized (ε = 0) polish on 1D grids; 0 disables it.
    pub max_polish: usize,
    /// First-order residual `Σ m_i |f'(ϱ_i) + φ_i − λ|` that ends the polish. It also ends once
    /// the damping has shrunk below 1e-14, which happens at the rounding floor of the objective.
    pub polish_tolerance: T,
}

impl<T: Scalar> JkoConfig<T> {
    pub fn new(p: T, tau: T, steps: usize, energy: Energy<T>) -> Self {
        JkoConfig {
            p,
            tau,
            steps,
            energy,
            epsilon: T::lit(0.05),
            max_inner: 5000,
            inner_tolerance: T::lit(1e-8),
            max_backtracks: 30,
            max_polish: 20000,
            polish_tolerance: T::lit(1e-8),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > T::one()) || !self.p.is_finite() {
            return Err(Error::param("p", format!("cost exponent must exceed 1, got {}", self.p)));
        }
        if !(self.tau > T::zero()) || !self.tau.is_finite() {
            return Err(Error::param("tau", format!("time step must be positive, got {}", self.tau)));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::param("epsilon", "must be positive"));
        }
        if self.max_inner == 0 {
            return Err(Error::param("max_inner", "must be at least 1"));
        }
        if !(self.inner_tolerance > T::zero()) {
            return Err(Error::param("inner_tolerance", "must be positive"));
        }
        if !(self.polish_tolerance > T::zero()) {
            return Err(Error::param("polish_tolerance", "must be positive"));
        }
        self.energy.validate()
    }

    /// `c(x, y) = |x − y|^p / (p τ^{p−1})`.
    fn cost(&self, radius: T) -> Result<RadialCost<T>> {
        RadialCost::power(self.p, radius)
    }

    fn cost_scale(&self) -> T {
        T::one() / self.tau.powf(self.p - T::one())
    }
}

/// One accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct JkoStep<T> {
    pub density: DensityField<T>,
    /// `W_p^p(ϱ_{k+1}, ϱ_k) / (pτ^{p−1})`, computed exactly.
    pub transport: T,
    pub energy: T,
    /// Last L¹ change of the inner iteration.
    pub residual: T,
    pub iterations: usize,
    /// First-order residual and iteration count of the 1D polish, when it ran.
    pub polish_residual: Option<T>,
    pub polish_iterations: usize,
    /// Number of halvings toward `ϱ_k` needed for descent.
    pub backtracks: usize,
    /// Exact objective at `ϱ_k` and at the returned density.
    pub objective_before: T,
    pub objective_after: T,
}

/// Allowed increase of the exact objective.
pub const DESCENT_SLACK: f64 = 1e-10;

/// Exact `W_p^p(ν, μ)/p`: between the piecewise constant densities in 1D, between the
/// cell-center atoms (LP) in 2D.
fn exact_transport<T: Scalar>(nu: &DensityField<T>, mu: &DensityField<T>, cost: &RadialCost<T>, p: T) -> Result<T> {
    if nu.grid().dim() == 1 {
        piecewise_wasserstein_1d(nu, mu, p)
    } else {
        Ok(solve_lp(nu, mu, cost, &LpOptions::default())?.primal)
    }
}

fn lse<T: Scalar>(terms: impl Iterator<Item = T> + Clone) -> T {
    let best = terms.clone().fold(T::neg_infinity(), T::max);
    if best == T::neg_infinity() {
        return best;
    }
    best + ordered_sum(terms.map(|t| (t - best).exp())).ln()
}

/// Entropic proximal iteration in the log domain. With `π_ij = exp((f_i + g_j − c_ij)/ε)`,
/// the source update enforces `π 1 = ϱ_k·vol` and the target update replaces the column sums
/// by the KL-proximal point of the energy. Returns the column sums after the last source
/// update, with the final residual and iteration count.
fn entropic_prox<T: Scalar>(
    source: &[T],
    cost: &[T],
    config: &JkoConfig<T>,
    cell_volume: T,
) -> Result<(Vec<T>, T, usize)> {
    let n = source.len();
    let eps = config.epsilon;
    let log_a: Vec<T> = source.iter().map(|&m| if m > T::zero() { m.ln() } else { T::neg_infinity() }).collect();
    let row = |i: usize| &cost[i * n..(i + 1) * n];
    let mut f = vec![T::zero(); n];
    let mut g = vec![T::zero(); n];
    let mut previous: Option<Vec<T>> = None;
    let mut residual = T::infinity();
    for it in 1..=config.max_inner {
        f = (0..n)
            .into_par_iter()
            .map(|i| {
                if log_a[i] == T::neg_infinity() {
                    return T::neg_infinity();
                }
                let r = row(i);
                eps * (log_a[i] - lse((0..n).map(|j| (g[j] - r[j]) / eps)))
            })
            .collect();
        // symmetric cost: row j serves as column j
        let log_z: Vec<T> = (0..n).into_par_iter().map(|j| lse((0..n).map(|i| (f[i] - row(j)[i]) / eps))).collect();
        let masses: Vec<T> = (0..n).map(|j| (g[j] / eps + log_z[j]).exp()).collect();
        if let Some(prev) = &previous {
            residual = ordered_sum(masses.iter().zip(prev).map(|(a, b)| (*a - *b).abs()));
            if residual <= config.inner_tolerance {
                return Ok((masses, residual, it));
            }
        }
        g = log_z
            .iter()
            .map(|&lz| eps * (config.energy.log_prox(lz, cell_volume, eps) - lz))
            .collect();
        previous = Some(masses);
    }
    Err(Error::Step {
        step: 0,
        reason: format!("inner iteration did not settle within {} sweeps", config.max_inner),
        residual: residual.to_f64_lossy(),
    })
}

/// Mirror descent on the exact 1D objective over cell masses, started from the entropic
/// iterate. The update is the same pointwise first-order step as the entropic loop with the
/// exact potential in place of the entropic one, damped and accepted only when the objective
/// decreases. Returns the masses, the final first-order residual and the iteration count.
fn polish_1d<T: Scalar>(
    source: &[T],
    start: Vec<T>,
    config: &JkoConfig<T>,
    width: T,
) -> (Vec<T>, T, usize) {
    let scale = config.cost_scale();
    let evaluate = |a: &[T], gradient: bool| -> (T, Vec<T>) {
        let (w, gw) = piecewise_transport(a, source, width, config.p, gradient);
        let energy = ordered_sum(a.iter().map(|&m| config.energy.value(m / width))) * width;
        let grad = gw.iter().zip(a).map(|(&g, &m)| scale * g + config.energy.derivative(m / width)).collect();
        (scale * w + energy, grad)
    };
    let mut a = start;
    let (mut value, mut grad) = evaluate(&a, true);
    let mut step = T::one();
    let mut residual = T::infinity();
    for it in 0..config.max_polish {
        let mean = ordered_sum(a.iter().zip(&grad).map(|(&m, &g)| m * g));
        residual = ordered_sum(a.iter().zip(&grad).map(|(&m, &g)| m * (g - mean).abs()));
        if residual <= config.polish_tolerance || step < T::lit(1e-14) {
            return (a, residual, it);
        }
        let trial: Vec<T> = a.iter().zip(&grad).map(|(&m, &g)| m * (-(g - mean) * step).exp()).collect();
        let total = ordered_sum(trial.iter().copied());
        let trial: Vec<T> = trial.into_iter().map(|m| m / total).collect();
        let (v, _) = evaluate(&trial, false);
        if v < value {
            a = trial;
            (value, grad) = evaluate(&a, true);
            step = step * T::lit(1.5);
        } else {
            step = step * T::lit(0.5);
        }
    }
    (a, residual, config.max_polish)
}

/// One minimizing-movement step from `rho`. The entropic iterate is accepted only if the
/// exact objective does not increase by more than [`DESCENT_SLACK`]; otherwise the step is
/// halved toward `rho` (returning `rho` itself if no halving helps).
pub fn jko_step<T: Scalar>(rho: &DensityField<T>, config: &JkoConfig<T>) -> Result<JkoStep<T>> {
    config.validate()?;
    let grid = *rho.grid();
    let rho = rho.normalize()?;
    let vol = grid.cell_volume();
    let cost = config.cost(grid.domain_radius())?;
    let matrix = CostMatrix::new(&grid, &cost)?;
    let scale = config.cost_scale();
    let n = grid.len();
    let scaled: Vec<T> = (0..n * n).map(|k| matrix.get(k / n, k % n) * scale).collect();

    let (mut masses, residual, iterations) = entropic_prox(&rho.masses(), &scaled, config, vol)?;
    let (mut polish_residual, mut polish_iterations) = (None, 0);
    if grid.dim() == 1 && config.max_polish > 0 && masses.iter().all(|m| *m > T::zero()) {
        let total = ordered_sum(masses.iter().copied());
        let start = masses.iter().map(|m| *m / total).collect();
        let (m, r, it) = polish_1d(&rho.masses(), start, config, vol);
        (masses, polish_residual, polish_iterations) = (m, Some(r), it);
    }
    if let Some(bad) = masses.iter().find(|m| !(**m >= T::zero()) || !m.is_finite()) {
        return Err(Error::Projection(bad.to_f64_lossy()));
    }
    let total = ordered_sum(masses.iter().copied());
    let candidate = DensityField::new(grid, masses.iter().map(|m| *m / (total * vol)).collect())?;

    let energy_before = config.energy.integral(rho.values(), vol);
    let before = energy_before;
    let objective = |nu: &DensityField<T>| -> Result<(T, T, T)> {
        let transport = exact_transport(nu, &rho, &cost, config.p)? * scale;
        let energy = config.energy.integral(nu.values(), vol);
        Ok((transport + energy, transport, energy))
    };
    let limit = before + T::lit(DESCENT_SLACK);
    let (mut after, mut transport, mut energy) = objective(&candidate)?;
    let mut density = candidate.clone();
    let mut backtracks = 0;
    let mut t = T::one();
    while after > limit {
        if backtracks == config.max_backtracks {
            density = rho.clone();
            (after, transport, energy) = (before, T::zero(), energy_before);
            break;
        }
        backtracks += 1;
        t = t * T::lit(0.5);
        let mixed: Vec<T> =
            rho.values().iter().zip(candidate.values()).map(|(&a, &b)| (T::one() - t) * a + t * b).collect();
        density = DensityField::new(grid, mixed)?;
        (after, transport, energy) = objective(&density)?;
    }
    Ok(JkoStep {
        density,
        transport,
        energy,
        residual,
        iterations,
        polish_residual,
        polish_iterations,
        backtracks,
        objective_before: before,
        objective_after: after,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub densities: Vec<DensityField<T>>,
    pub times: Vec<T>,
    pub tv: Vec<T>,
    pub energy: Vec<T>,
    /// Transport term of the step that produced each iterate (0 for the initial density).
    pub cost: Vec<T>,
    /// Inner residual of that step: the polish residual in 1D, the entropic L¹ change otherwise
    /// (0 for the initial density).
    pub residual: Vec<T>,
    /// Set when a step failed; the trajectory holds the iterates computed before it.
    pub error: Option<String>,
}

impl<T: Scalar> Trajectory<T> {
    fn start(rho0: DensityField<T>, energy: &Energy<T>) -> Result<Self> {
        let tv = rho0.tv_norm()?;
        let e = energy.integral(rho0.values(), rho0.grid().cell_volume());
        Ok(Trajectory {
            densities: vec![rho0],
            times: vec![T::zero()],
            tv: vec![tv],
            energy: vec![e],
            cost: vec![T::zero()],
            residual: vec![T::zero()],
            error: None,
        })
    }

    fn push(&mut self, density: DensityField<T>, time: T, energy: T, cost: T, residual: T) -> Result<()> {
        self.tv.push(density.tv_norm()?);
        self.densities.push(density);
        self.times.push(time);
        self.energy.push(energy);
        self.cost.push(cost);
        self.residual.push(residual);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    pub fn last(&self) -> &DensityField<T> {
        &self.densities[self.densities.len() - 1]
    }

    /// Largest `TV(ϱ_{k+1}) − TV(ϱ_k)` (negative when TV strictly decreases).
    pub fn max_tv_increase(&self) -> T {
        self.tv.windows(2).map(|w| w[1] - w[0]).fold(T::neg_infinity(), T::max)
    }

    /// `step,time,tv,energy,cost,residual`.
    pub fn write_trace<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,time,tv,energy,cost,residual")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{k},{},{:e},{:e},{:e},{:e}",
                self.times[k], self.tv[k], self.energy[k], self.cost[k], self.residual[k]
            )?;
        }
        Ok(())
    }

    /// `trace.csv` plus `density_0000.csv`, `density_0001.csv`, ...
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join("trace.csv"))?);
        self.write_trace(&mut w)?;
        w.flush()?;
        for (k, d) in self.densities.iter().enumerate() {
            let mut w = BufWriter::new(File::create(dir.join(format!("density_{k:04}.csv")))?);
            d.write_csv(&mut w)?;
            w.flush()?;
        }
        Ok(())
    }
}

/// Runs `config.steps` steps from `rho0`. Invalid configurations are errors; a failing step
/// ends the run and is recorded in [`Trajectory::error`].
pub fn run_jko<T: Scalar>(rho0: &DensityField<T>, config: &JkoConfig<T>) -> Result<Trajectory<T>> {
    config.validate()?;
    let mut traj = Trajectory::start(rho0.normalize()?, &config.energy)?;
    for k in 0..config.steps {
        match jko_step(traj.last(), config) {
            Ok(step) => {
                let time = config.tau * T::from_count(k + 1);
                traj.push(step.density, time, step.energy, step.transport, step.polish_residual.unwrap_or(step.residual))?;
            }
            Err(e) => {
                let e = match e {
                    Error::Step { reason, residual, .. } => Error::Step { step: k + 1, reason, residual },
                    other => other,
                };
                traj.error = Some(e.to_string());
                break;
            }
        }
    }
    Ok(traj)
}
