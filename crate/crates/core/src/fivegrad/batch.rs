//! Seeded batches of random density pairs pushed through a solver and the five gradients
//! functional.

use std::io::Write;

use rayon::prelude::*;

use crate::cost::{HFunction, RadialCost};
use crate::error::{Error, Result};
use crate::geometry::{random_smooth_density, DensityField, Grid};
use crate::ot::{solve_entropic, solve_exact_1d, solve_lp, EntropicOptions, LpOptions, SolverKind, TransportResult};
use crate::scalar::Scalar;

use super::{boundary_flux, five_gradients_integrand};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec<T> {
    pub seeds: Vec<u64>,
    /// Cost exponents (`h(z) = |z|^p / p`).
    pub p: Vec<T>,
    /// `H` exponents.
    pub q: Vec<T>,
    /// Cells per axis.
    pub n: Vec<usize>,
    pub dim: usize,
    pub solver: SolverKind,
    /// Fourier modes of the random densities.
    pub mode_count: usize,
    /// Minimum of the random densities before normalization.
    pub floor: T,
    /// Tolerance constant: an instance passes when `LHS ≥ −κ (TV(ϱ) + TV(g)) / √n`.
    pub kappa: T,
    /// Use `g = ϱ`.
    pub identical: bool,
    pub entropic_epsilon: T,
}

impl<T: Scalar> BatchSpec<T> {
    pub fn new(seeds: Vec<u64>, p: Vec<T>, q: Vec<T>, n: Vec<usize>) -> Self {
        BatchSpec {
            seeds,
            p,
            q,
            n,
            dim: 1,
            solver: SolverKind::Lp,
            mode_count: 4,
            floor: T::lit(0.1),
            kappa: T::lit(DEFAULT_KAPPA),
            identical: false,
            entropic_epsilon: T::lit(1e-3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.p.is_empty() || self.q.is_empty() || self.n.is_empty() {
            return Err(Error::param("batch", "seeds, p, q and n must all be non-empty"));
        }
        if let Some(p) = self.p.iter().find(|p| !(**p > T::one())) {
            return Err(Error::param("p", format!("cost exponent must exceed 1, got {p}")));
        }
        if let Some(q) = self.q.iter().find(|q| !(**q >= T::one())) {
            return Err(Error::param("q", format!("H exponent must be at least 1, got {q}")));
        }
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::param("dim", "must be 1 or 2"));
        }
        if self.dim == 2 && self.solver == SolverKind::Exact1d {
            return Err(Error::param("solver", "exact1d only works in one dimension"));
        }
        if !(self.kappa >= T::zero()) {
            return Err(Error::param("kappa", "must be nonnegative"));
        }
        Ok(())
    }

    /// Densities of one instance: seeds `2s` and `2s + 1` (or `2s` twice when identical).
    pub fn densities(&self, seed: u64, grid: &Grid<T>) -> Result<(DensityField<T>, DensityField<T>)> {
        let rho = random_smooth_density(grid, seed.wrapping_mul(2), self.mode_count, self.floor)?;
        let g = if self.identical {
            rho.clone()
        } else {
            random_smooth_density(grid, seed.wrapping_mul(2).wrapping_add(1), self.mode_count, self.floor)?
        };
        Ok((rho, g))
    }

    pub fn grid(&self, n: usize) -> Result<Grid<T>> {
        if self.dim == 1 {
            Grid::unit_interval(n)
        } else {
            Grid::unit_square(n)
        }
    }

    pub fn tolerance(&self, tv_rho: T, tv_g: T, n: usize) -> T {
        self.kappa * (tv_rho + tv_g) / T::from_count(n).sqrt()
    }

    pub fn solve(&self, rho: &DensityField<T>, g: &DensityField<T>, cost: &RadialCost<T>) -> Result<TransportResult<T>> {
        match self.solver {
            SolverKind::Lp => solve_lp(rho, g, cost, &LpOptions::default()),
            SolverKind::Exact1d => solve_exact_1d(rho, g, cost).map(|(r, _)| r),
            SolverKind::Entropic => solve_entropic(rho, g, cost, &EntropicOptions::new(self.entropic_epsilon)),
        }
    }
}

/// Frozen tolerance constant, calibrated on the 1D `n = 128` batch.
pub const DEFAULT_KAPPA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceKey<T> {
    pub seed: u64,
    pub p: T,
    pub q: T,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport<T> {
    pub key: InstanceKey<T>,
    pub dim: usize,
    pub solver: SolverKind,
    pub cost: String,
    pub h: String,
    pub lhs: T,
    pub integrand: Vec<T>,
    pub flux: T,
    pub tv_rho: T,
    pub tv_g: T,
    pub tolerance: T,
    pub pass: bool,
}

/// Negative part of the LHS across resolutions for one `(seed, p, q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementTrend<T> {
    pub seed: u64,
    pub p: T,
    pub q: T,
    pub excursions: Vec<(usize, T)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary<T> {
    pub instances: usize,
    pub failed_instances: usize,
    pub min_lhs: T,
    /// Fraction of reports within tolerance.
    pub pass_fraction: T,
    /// Fraction of reports with `LHS ≥ 0`.
    pub nonnegative_fraction: T,
    pub refinement: Vec<RefinementTrend<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome<T> {
    pub reports: Vec<InequalityReport<T>>,
    /// Instances whose solve failed, with the error message.
    pub errors: Vec<(InstanceKey<T>, String)>,
    pub summary: BatchSummary<T>,
}

impl<T: Scalar> BatchOutcome<T> {
    pub fn all_pass(&self) -> bool {
        self.errors.is_empty() && self.reports.iter().all(|r| r.pass)
    }

    /// Columns `seed,p,q,n,solver,lhs,flux,tv_rho,tv_g,tolerance,pass`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "seed,p,q,n,solver,lhs,flux,tv_rho,tv_g,tolerance,pass")?;
        for r in &self.reports {
            let k = &r.key;
            writeln!(
                w,
                "{},{},{},{},{},{:e},{:e},{:e},{:e},{:e},{}",
                k.seed,
                k.p,
                k.q,
                k.n,
                r.solver.tag(),
                r.lhs,
                r.flux,
                r.tv_rho,
                r.tv_g,
                r.tolerance,
                r.pass
            )?;
        }
        Ok(())
    }
}

/// One solve per `(seed, p, n)`, evaluated for every `q`. Instances run in parallel; the
/// report order is `seed`, `p`, `q`, `n`, each in the given order.
pub fn verify_batch<T: Scalar>(spec: &BatchSpec<T>) -> Result<BatchOutcome<T>> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for (si, &seed) in spec.seeds.iter().enumerate() {
        for (pi, &p) in spec.p.iter().enumerate() {
            for (ni, &n) in spec.n.iter().enumerate() {
                jobs.push((si, seed, pi, p, ni, n));
            }
        }
    }
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(si, seed, pi, p, ni, n)| {
            let out = run_solve(spec, seed, p, n);
            (si, pi, ni, seed, p, n, out)
        })
        .collect();

    let mut keyed = Vec::new();
    let mut errors = Vec::new();
    for (si, pi, ni, seed, p, n, out) in results {
        for (qi, &q) in spec.q.iter().enumerate() {
            let key = InstanceKey { seed, p, q, n };
            match &out {
                Ok(solved) => match evaluate(spec, solved, key) {
                    Ok(report) => keyed.push(((si, pi, qi, ni), report)),
                    Err(e) => errors.push(((si, pi, qi, ni), key, e.to_string())),
                },
                Err(e) => errors.push(((si, pi, qi, ni), key, e.to_string())),
            }
        }
    }
    keyed.sort_by_key(|(idx, _)| *idx);
    errors.sort_by_key(|(idx, _, _)| *idx);
    let reports: Vec<_> = keyed.into_iter().map(|(_, r)| r).collect();
    let errors: Vec<_> = errors.into_iter().map(|(_, k, e)| (k, e)).collect();
    let summary = summarize(spec, &reports, errors.len());
    Ok(BatchOutcome { reports, errors, summary })
}

struct Solved<T> {
    rho: DensityField<T>,
    g: DensityField<T>,
    result: TransportResult<T>,
    cost: RadialCost<T>,
}

fn run_solve<T: Scalar>(spec: &BatchSpec<T>, seed: u64, p: T, n: usize) -> Result<Solved<T>> {
    let grid = spec.grid(n)?;
    let (rho, g) = spec.densities(seed, &grid)?;
    let cost = RadialCost::power(p, grid.domain_radius())?;
    let result = spec.solve(&rho, &g, &cost)?;
    Ok(Solved { rho, g, result, cost })
}

fn evaluate<T: Scalar>(spec: &BatchSpec<T>, s: &Solved<T>, key: InstanceKey<T>) -> Result<InequalityReport<T>> {
    let grid = s.rho.grid();
    let hfun = HFunction::power(key.q, HFunction::default_threshold(grid.diameter()))?;
    let integrand = five_gradients_integrand(&s.rho, &s.g, &s.result.phi, &s.result.psi, &hfun)?;
    let lhs = grid.integrate(&integrand);
    let flux = boundary_flux(&s.rho, &s.g, &s.result.phi, &s.result.psi, &hfun)?;
    let (tv_rho, tv_g) = (s.rho.tv_norm()?, s.g.tv_norm()?);
    let tolerance = spec.tolerance(tv_rho, tv_g, key.n);
    if !lhs.is_finite() || !flux.is_finite() {
        return Err(Error::Numerical(format!("non-finite functional value for seed {}", key.seed)));
    }
    Ok(InequalityReport {
        key,
        dim: spec.dim,
        solver: spec.solver,
        cost: s.cost.describe(),
        h: hfun.describe(),
        lhs,
        integrand,
        flux,
        tv_rho,
        tv_g,
        tolerance,
        pass: lhs >= -tolerance,
    })
}

fn summarize<T: Scalar>(spec: &BatchSpec<T>, reports: &[InequalityReport<T>], failed: usize) -> BatchSummary<T> {
    let count = T::from_count(reports.len().max(1));
    let min_lhs = reports.iter().map(|r| r.lhs).fold(T::infinity(), T::min);
    let pass = reports.iter().filter(|r| r.pass).count();
    let nonneg = reports.iter().filter(|r| r.lhs >= T::zero()).count();
    let mut refinement = Vec::new();
    if spec.n.len() > 1 {
        for &seed in &spec.seeds {
            for &p in &spec.p {
                for &q in &spec.q {
                    let excursions: Vec<(usize, T)> = reports
                        .iter()
                        .filter(|r| r.key.seed == seed && r.key.p == p && r.key.q == q)
                        .map(|r| (r.key.n, (-r.lhs).max(T::zero())))
                        .collect();
                    refinement.push(RefinementTrend { seed, p, q, excursions });
                }
            }
        }
    }
    BatchSummary {
        instances: reports.len() + failed,
        failed_instances: failed,
        min_lhs,
        pass_fraction: T::from_count(pass) / count,
        nonnegative_fraction: T::from_count(nonneg) / count,
        refinement,
    }
}
