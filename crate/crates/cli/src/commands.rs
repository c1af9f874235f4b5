use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};

use fivegrad_core::fivegrad::{mollification_convergence_experiment, verify_batch, BatchSpec, DEFAULT_KAPPA};
use fivegrad_core::geometry::{read_field_csv, write_field_csv};
use fivegrad_core::jko::{jko_vs_pde_report, run_jko, Trajectory};
use fivegrad_core::ot::{
    c_transform, solve_entropic, solve_exact_1d, solve_lp, transport_map_from_potential, write_result_dir,
    EntropicOptions, LpOptions, SolverKind,
};
use fivegrad_core::Error;

use crate::config::{CtransformConfig, JkoRunConfig, MollifyConfig, SolveOtConfig, VerifyConfig};

/// How a run ended, mapped one-to-one onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Solver(anyhow::Error),
    Acceptance(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Acceptance(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
            Failure::Solver(e) => write!(f, "solver error: {e:#}"),
            Failure::Acceptance(m) => write!(f, "acceptance failure: {m}"),
        }
    }
}

pub type Outcome = std::result::Result<(), Failure>;

pub fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

/// Parameter, input and size problems are the caller's fault; everything else is numerical.
pub fn classify(e: Error) -> Failure {
    match e {
        Error::Parameter { .. }
        | Error::Input(_)
        | Error::Parse(_)
        | Error::Shape(_)
        | Error::Dimension { .. }
        | Error::Capacity { .. }
        | Error::Io(_) => Failure::Config(e.into()),
        _ => Failure::Solver(e.into()),
    }
}

fn io_err(e: std::io::Error, what: &Path) -> Failure {
    Failure::Config(anyhow!("{}: {e}", what.display()))
}

fn create(dir: &Path, name: &str) -> std::result::Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| io_err(e, &path))
}

pub fn solve_ot(cfg: &SolveOtConfig, seed: u64, out: &Path, base: &Path) -> Outcome {
    let grid = cfg.grid.build().map_err(config_err)?;
    let cost = cfg.cost.build(&grid).map_err(config_err)?;
    let rho = cfg.source.build(&grid, seed, base).map_err(config_err)?;
    let g = cfg.target.build(&grid, seed, base).map_err(config_err)?;
    let kind = cfg.solver.kind().map_err(config_err)?;
    let (result, map) = match kind {
        SolverKind::Exact1d => {
            let (r, m) = solve_exact_1d(&rho, &g, &cost).map_err(classify)?;
            (r, m)
        }
        SolverKind::Lp | SolverKind::Entropic => {
            let r = if kind == SolverKind::Lp {
                solve_lp(&rho, &g, &cost, &LpOptions::default())
            } else {
                solve_entropic(&rho, &g, &cost, &EntropicOptions::new(cfg.solver.epsilon))
            }
            .map_err(classify)?;
            let m = transport_map_from_potential(&grid, &r.phi, &cost, &rho, None).map_err(classify)?;
            (r, m)
        }
    };
    write_result_dir(out, &result, Some(&map)).map_err(classify)?;
    println!(
        "solve-ot: {} cells, solver {}, primal {:e}, dual {:e}, gap {:e}",
        grid.len(),
        result.solver.tag(),
        result.primal,
        result.dual,
        result.gap
    );
    Ok(())
}

pub fn verify_5g(cfg: &VerifyConfig, seed: u64, out: &Path) -> Outcome {
    let b = &cfg.batch;
    if b.count == 0 {
        return Err(config_err(anyhow!("invalid parameter `batch.count`: must be at least 1")));
    }
    let seeds = (0..b.count).map(|k| seed.wrapping_add(k)).collect();
    let mut spec = BatchSpec::new(seeds, b.p.clone(), b.q.clone(), b.n.clone());
    spec.dim = b.dim;
    spec.solver = b.solver.parse().map_err(classify)?;
    spec.mode_count = b.modes;
    spec.floor = b.floor;
    spec.kappa = b.kappa.unwrap_or(DEFAULT_KAPPA);
    spec.identical = b.identical;
    spec.entropic_epsilon = b.entropic_epsilon;
    let outcome = verify_batch(&spec).map_err(classify)?;

    let mut w = create(out, "reports.csv")?;
    outcome.write_csv(&mut w).map_err(classify)?;
    w.flush().map_err(|e| io_err(e, out))?;
    if !outcome.errors.is_empty() {
        let mut w = create(out, "errors.csv")?;
        let mut write = || -> std::io::Result<()> {
            writeln!(w, "seed,p,q,n,error")?;
            for (k, msg) in &outcome.errors {
                writeln!(w, "{},{},{},{},\"{}\"", k.seed, k.p, k.q, k.n, msg.replace('"', "'"))?;
            }
            w.flush()
        };
        write().map_err(|e| io_err(e, out))?;
    }
    let s = &outcome.summary;
    println!(
        "verify-5g: {} reports, {} failed instances, min lhs {:e}, pass fraction {}, nonnegative fraction {}",
        s.instances, s.failed_instances, s.min_lhs, s.pass_fraction, s.nonnegative_fraction
    );
    if outcome.all_pass() {
        Ok(())
    } else {
        Err(Failure::Acceptance(format!(
            "{} of {} reports outside tolerance, {} instances errored",
            outcome.reports.iter().filter(|r| !r.pass).count(),
            outcome.reports.len(),
            outcome.errors.len()
        )))
    }
}

fn write_trajectory(traj: &Trajectory<f64>, out: &Path) -> Outcome {
    traj.write_dir(out).map_err(classify)
}

pub fn jko(cfg: &JkoRunConfig, seed: u64, out: &Path, base: &Path) -> Outcome {
    let grid = cfg.grid.build().map_err(config_err)?;
    let rho0 = cfg.initial.build(&grid, seed, base).map_err(config_err)?;
    let scheme = cfg.jko.build();
    scheme.validate().map_err(classify)?;
    let mut problems = Vec::new();

    let traj = match &cfg.compare {
        None => run_jko(&rho0, &scheme).map_err(classify)?,
        Some(c) => {
            let report = jko_vs_pde_report(&rho0, &scheme, c.dt).map_err(classify)?;
            let mut w = create(out, "comparison.csv")?;
            let mut write = || -> std::io::Result<()> {
                writeln!(w, "time,distance,distance_half")?;
                for k in 0..report.times.len() {
                    writeln!(w, "{},{:e},{:e}", report.times[k], report.distances[k], report.distances_half[k])?;
                }
                w.flush()
            };
            write().map_err(|e| io_err(e, out))?;
            println!(
                "jko: final L1 distance to the reference {:e} (τ/2: {:e}), refinement {}",
                report.final_distance(),
                report.final_distance_half(),
                if report.refinement_ok { "ok" } else { "not monotone" }
            );
            if let Some(limit) = c.max_final_distance {
                if !(report.final_distance() <= limit) {
                    problems.push(format!("final distance {:e} exceeds {limit:e}", report.final_distance()));
                }
            }
            if c.require_refinement && !report.refinement_ok {
                problems.push("τ halving increased the final distance".to_string());
            }
            report.trajectory
        }
    };
    write_trajectory(&traj, out)?;
    if let Some(e) = &traj.error {
        return Err(Failure::Solver(anyhow!("{e}")));
    }
    println!(
        "jko: {} iterates, TV {:e} -> {:e}, largest TV increase {:e}",
        traj.len(),
        traj.tv[0],
        traj.tv[traj.len() - 1],
        traj.max_tv_increase()
    );
    if let Some(slack) = cfg.tv_slack {
        let allowed = slack * traj.tv[0];
        if traj.max_tv_increase() > allowed {
            problems.push(format!("TV increased by {:e} > {allowed:e}", traj.max_tv_increase()));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Acceptance(problems.join("; ")))
    }
}

pub fn mollify_study(cfg: &MollifyConfig, seed: u64, out: &Path, base: &Path) -> Outcome {
    if cfg.mollify.epsilons.is_empty() {
        return Err(config_err(anyhow!("invalid parameter `mollify.epsilons`: need at least one value")));
    }
    let grid = cfg.grid.build().map_err(config_err)?;
    let cost = cfg.cost.build(&grid).map_err(config_err)?;
    let rho = cfg.source.build(&grid, seed, base).map_err(config_err)?;
    let g = cfg.target.build(&grid, seed, base).map_err(config_err)?;
    let report = mollification_convergence_experiment(&rho, &g, &cost, &cfg.mollify.epsilons, cfg.mollify.quadrature_order)
        .map_err(classify)?;
    let mut w = create(out, "convergence.csv")?;
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "epsilon,gradient_deviation,deviation_measure,map_distance")?;
        for r in &report.rows {
            writeln!(w, "{},{:e},{:e},{:e}", r.epsilon, r.gradient_deviation, r.deviation_measure, r.map_distance)?;
        }
        w.flush()
    };
    write().map_err(|e| io_err(e, out))?;
    println!(
        "mollify-study: {} levels, monotone {}, final limit {:e}, pass {}",
        report.rows.len(),
        report.monotone,
        report.final_limit,
        report.pass
    );
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Acceptance("mollification sequence is not convergent within the limits".into()))
    }
}

pub fn ctransform(cfg: &CtransformConfig, out: &Path, base: &Path) -> Outcome {
    let path = base.join(&cfg.psi);
    let file = File::open(&path).map_err(|e| io_err(e, &path))?;
    let (grid, psi) = read_field_csv::<f64, _>(BufReader::new(file)).map_err(classify)?;
    let cost = cfg.cost.build(&grid).map_err(config_err)?;
    let phi = c_transform(&grid, &psi, &cost).map_err(classify)?;
    let mut w = create(out, "phi.csv")?;
    write_field_csv(&grid, &phi, &mut w).map_err(classify)?;
    w.flush().map_err(|e| io_err(e, out))?;
    println!("ctransform: {} cells", grid.len());
    Ok(())
}

pub fn prepare_out(out: &Path) -> Outcome {
    fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display())).map_err(config_err)?;
    // probe writability before any work is done
    let probe = out.join(".write-probe");
    File::create(&probe).map_err(|e| io_err(e, out))?;
    fs::remove_file(&probe).map_err(|e| io_err(e, out))?;
    Ok(())
}
