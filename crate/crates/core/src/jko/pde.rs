//! Explicit finite volumes for `∂_t u = (|w_x|^{q−2} w_x)_x`, `w = g(u)`, `q = p/(p−1)`, with
//! zero flux through the boundary.

use crate::error::{Error, Result};
use crate::geometry::DensityField;
use crate::scalar::Scalar;

use super::{run_jko, Energy, JkoConfig, Trajectory};

/// Fraction of the linearized explicit stability limit that a time step may use.
pub const STABILITY_FACTOR: f64 = 0.2;

/// Floor on `|w_x|` when linearizing `|w_x|^{q−2}` for `q < 2`.
const GRADIENT_FLOOR: f64 = 1e-8;

fn conjugate_exponent<T: Scalar>(p: T) -> T {
    p / (p - T::one())
}

fn face_gradients<T: Scalar>(w: &[T], width: T) -> Vec<T> {
    w.windows(2).map(|x| (x[1] - x[0]) / width).collect()
}

/// `0.2 Δ² / D_max` with `D_max` the largest linearized face diffusivity
/// `(q−1) |w_x|^{q−2} g'(u)` of the state `u`. For `q = 2` this is `0.2 Δ² / max g'`.
pub fn stable_time_step<T: Scalar>(u: &DensityField<T>, p: T, energy: &Energy<T>) -> Result<T> {
    let grid = u.grid();
    if grid.dim() != 1 {
        return Err(Error::Dimension { expected: 1, actual: grid.dim() });
    }
    let q = conjugate_exponent(p);
    let width = grid.width(0);
    let v = u.values();
    let w: Vec<T> = v.iter().map(|&s| energy.diffusion_potential(s, p)).collect();
    let grads = face_gradients(&w, width);
    let mut d_max = T::zero();
    for (f, &dw) in grads.iter().enumerate() {
        let slope = energy.diffusion_slope(v[f], p).max(energy.diffusion_slope(v[f + 1], p));
        let nonlinear = if q == T::lit(2.0) {
            T::one()
        } else {
            (q - T::one()) * dw.abs().max(T::lit(GRADIENT_FLOOR)).powf(q - T::lit(2.0))
        };
        d_max = d_max.max(slope * nonlinear);
    }
    if d_max == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::lit(STABILITY_FACTOR) * width * width / d_max)
}

/// Explicit Euler in time, fluxes `|D|^{q−2} D` with `D = (w_{i+1} − w_i)/Δ` on interior faces
/// and zero on the boundary. The step is checked against [`stable_time_step`] before every
/// update. States after every `record_every` steps (and the last one) are recorded.
pub fn reference_pde_solve<T: Scalar>(
    rho0: &DensityField<T>,
    p: T,
    energy: &Energy<T>,
    dt: T,
    steps: usize,
    record_every: usize,
) -> Result<Trajectory<T>> {
    let grid = *rho0.grid();
    if grid.dim() != 1 {
        return Err(Error::Dimension { expected: 1, actual: grid.dim() });
    }
    if !(p > T::one()) {
        return Err(Error::param("p", format!("cost exponent must exceed 1, got {p}")));
    }
    if !(dt > T::zero()) {
        return Err(Error::param("dt", "must be positive"));
    }
    if record_every == 0 {
        return Err(Error::param("record_every", "must be at least 1"));
    }
    energy.validate()?;
    let q = conjugate_exponent(p);
    let width = grid.width(0);
    let vol = grid.cell_volume();
    let mut u = rho0.clone();
    let mut traj = Trajectory::start(u.clone(), energy)?;
    let mut values = u.values().to_vec();
    for k in 1..=steps {
        let limit = stable_time_step(&u, p, energy)?;
        if dt > limit {
            return Err(Error::param(
                "dt",
                format!("{dt} exceeds the explicit stability bound {limit} at step {k}"),
            ));
        }
        let w: Vec<T> = values.iter().map(|&s| energy.diffusion_potential(s, p)).collect();
        let flux: Vec<T> = face_gradients(&w, width)
            .into_iter()
            .map(|d| if d == T::zero() { d } else { d.abs().powf(q - T::lit(2.0)) * d })
            .collect();
        for i in 0..values.len() {
            let right = if i < flux.len() { flux[i] } else { T::zero() };
            let left = if i > 0 { flux[i - 1] } else { T::zero() };
            values[i] += dt * (right - left) / width;
        }
        if let Some(bad) = values.iter().find(|v| !(**v >= T::zero()) || !v.is_finite()) {
            return Err(Error::Numerical(format!("reference solution left the admissible set ({bad}) at step {k}")));
        }
        u = DensityField::new(grid, values.clone())?;
        if k % record_every == 0 || k == steps {
            let e = energy.integral(&values, vol);
            traj.push(u.clone(), dt * T::from_count(k), e, T::zero(), T::zero())?;
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JkoPdeReport<T> {
    pub times: Vec<T>,
    /// L¹ distance between the scheme with step `τ` and the reference at each checkpoint.
    pub distances: Vec<T>,
    /// Same with step `τ/2`.
    pub distances_half: Vec<T>,
    /// `τ` halving does not increase the distance at the final checkpoint.
    pub refinement_ok: bool,
    pub trajectory: Trajectory<T>,
    pub trajectory_half: Trajectory<T>,
}

impl<T: Scalar> JkoPdeReport<T> {
    pub fn final_distance(&self) -> T {
        self.distances.last().copied().unwrap_or(T::zero())
    }

    pub fn final_distance_half(&self) -> T {
        self.distances_half.last().copied().unwrap_or(T::zero())
    }
}

pub const CHECKPOINTS: usize = 5;

/// Runs the scheme with `τ` and `τ/2` to the horizon `Kτ` and the reference solver with step
/// `dt`, and compares them in L¹ at `t = c·Kτ/5`, `c = 1..5`. `K` and `Kτ/dt` must be
/// multiples of 5.
pub fn jko_vs_pde_report<T: Scalar>(rho0: &DensityField<T>, config: &JkoConfig<T>, dt: T) -> Result<JkoPdeReport<T>> {
    config.validate()?;
    let grid = rho0.grid();
    if grid.dim() != 1 {
        return Err(Error::Dimension { expected: 1, actual: grid.dim() });
    }
    let k = config.steps;
    if k % CHECKPOINTS != 0 {
        return Err(Error::param("steps", format!("must be a multiple of {CHECKPOINTS}, got {k}")));
    }
    let horizon = config.tau * T::from_count(k);
    let ratio = horizon / dt;
    let pde_steps = ratio.round().to_usize().unwrap_or(0);
    if (ratio - T::from_count(pde_steps)).abs() > T::lit(1e-6) * ratio.max(T::one()) || pde_steps % CHECKPOINTS != 0 {
        return Err(Error::param(
            "dt",
            format!("horizon / dt = {ratio} must be an integer multiple of {CHECKPOINTS}"),
        ));
    }
    let rho0 = rho0.normalize()?;
    let reference = reference_pde_solve(&rho0, config.p, &config.energy, dt, pde_steps, (pde_steps / CHECKPOINTS).max(1))?;
    let trajectory = run_jko(&rho0, config)?;
    let half_config = JkoConfig { tau: config.tau * T::lit(0.5), steps: 2 * k, ..config.clone() };
    let trajectory_half = run_jko(&rho0, &half_config)?;
    for t in [&trajectory, &trajectory_half] {
        if let Some(e) = &t.error {
            return Err(Error::Step { step: t.len(), reason: e.clone(), residual: f64::NAN });
        }
    }
    let mut times = Vec::new();
    let mut distances = Vec::new();
    let mut distances_half = Vec::new();
    for c in 1..=CHECKPOINTS {
        let reference_state = if k == 0 { &reference.densities[0] } else { &reference.densities[c] };
        times.push(horizon * T::from_count(c) / T::from_count(CHECKPOINTS));
        distances.push(trajectory.densities[c * k / CHECKPOINTS].l1_distance(reference_state)?);
        distances_half.push(trajectory_half.densities[2 * c * k / CHECKPOINTS].l1_distance(reference_state)?);
    }
    let refinement_ok = distances_half[CHECKPOINTS - 1] <= distances[CHECKPOINTS - 1];
    Ok(JkoPdeReport { times, distances, distances_half, refinement_ok, trajectory, trajectory_half })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gaussian_bump, Grid};

    #[test]
    fn constant_data_stays_constant() {
        let grid = Grid::<f64>::unit_interval(32).unwrap();
        let u = DensityField::uniform(grid);
        let traj = reference_pde_solve(&u, 2.0, &Energy::Entropy, 1e-5, 100, 50).unwrap();
        assert!(traj.last().l1_distance(&u).unwrap() < 1e-14);
    }

    #[test]
    fn heat_flow_flattens_and_conserves_mass() {
        let grid = Grid::<f64>::unit_interval(64).unwrap();
        let u = gaussian_bump(&grid, [0.5, 0.0], 0.08, 0.0).unwrap();
        let traj = reference_pde_solve(&u, 2.0, &Energy::Entropy, 2e-5, 1000, 250).unwrap();
        assert_eq!(traj.len(), 5);
        assert!((traj.last().mass() - 1.0).abs() <= 1e-10);
        let peak = |d: &DensityField<f64>| d.values().iter().copied().fold(0.0, f64::max);
        assert!(traj.densities.windows(2).all(|w| peak(&w[1]) < peak(&w[0])));
        assert!(traj.tv.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn self_convergence_under_refinement() {
        let coarse = Grid::<f64>::unit_interval(128).unwrap();
        let fine = Grid::<f64>::unit_interval(256).unwrap();
        let bump = |g: &Grid<f64>| gaussian_bump(g, [0.4, 0.0], 0.07, 0.02).unwrap();
        let a = reference_pde_solve(&bump(&coarse), 2.0, &Energy::Entropy, 1e-5, 5000, 5000).unwrap();
        let b = reference_pde_solve(&bump(&fine), 2.0, &Energy::Entropy, 2.5e-6, 20000, 20000).unwrap();
        let folded: Vec<f64> = b.last().values().chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect();
        let folded = DensityField::new(coarse, folded).unwrap();
        let diff = a.last().l1_distance(&folded).unwrap();
        assert!(diff <= 1e-3, "{diff}");
    }

    #[test]
    fn unstable_steps_are_rejected() {
        let grid = Grid::<f64>::unit_interval(64).unwrap();
        let u = gaussian_bump(&grid, [0.5, 0.0], 0.08, 0.1).unwrap();
        let limit = stable_time_step(&u, 2.0, &Energy::Entropy).unwrap();
        assert!((limit - 0.2 / (64.0 * 64.0)).abs() < 1e-15);
        assert!(matches!(
            reference_pde_solve(&u, 2.0, &Energy::Entropy, 2.0 * limit, 10, 1),
            Err(Error::Parameter { .. })
        ));
    }

    #[test]
    fn zero_horizon_report_is_zero() {
        let grid = Grid::<f64>::unit_interval(32).unwrap();
        let u = gaussian_bump(&grid, [0.5, 0.0], 0.1, 0.05).unwrap();
        let rep = jko_vs_pde_report(&u, &JkoConfig::new(2.0, 1e-3, 0, Energy::Entropy), 1e-5).unwrap();
        assert!(rep.distances.iter().all(|&d| d == 0.0));
        assert!(rep.refinement_ok);
    }
}
