//! `fivegrad`: runs the transport, five-gradients and JKO pipelines from TOML configs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 acceptance failure.

mod commands;
mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use commands::{config_err, Failure, Outcome};

#[derive(Parser, Debug)]
#[command(name = "fivegrad", version, about = "Optimal transport and five gradients experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one transport problem and write coupling, potentials and map.
    SolveOt(Common),
    /// Evaluate the five gradients inequality over a batch of random instances.
    #[command(name = "verify-5g")]
    Verify5g(Common),
    /// Run the minimizing-movement scheme, optionally against the reference PDE.
    Jko(Common),
    /// Compare transport maps of mollified costs with the unmollified one.
    MollifyStudy(Common),
    /// c-transform of a potential given as a field CSV.
    Ctransform(Common),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SolveOt(_) => "solve-ot",
            Command::Verify5g(_) => "verify-5g",
            Command::Jko(_) => "jko",
            Command::MollifyStudy(_) => "mollify-study",
            Command::Ctransform(_) => "ctransform",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::SolveOt(c)
            | Command::Verify5g(c)
            | Command::Jko(c)
            | Command::MollifyStudy(c)
            | Command::Ctransform(c) => c,
        }
    }
}

fn write_manifest(out: &Path, command: &str, text: &str, seed: u64) -> Outcome {
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    let path = out.join("manifest");
    let mut f = fs::File::create(&path).map_err(|e| config_err(anyhow!("{}: {e}", path.display())))?;
    write!(
        f,
        "tool = fivegrad\nversion = {}\ncommand = {command}\nconfig_sha256 = {hash}\nseed = {seed}\n",
        env!("CARGO_PKG_VERSION")
    )
    .map_err(|e| config_err(anyhow!("{}: {e}", path.display())))
}

/// Resolves seed and output directory, prepares the directory and writes the manifest.
fn setup(cmd: &Command, text: &str, cfg_seed: Option<u64>, cfg_out: Option<&PathBuf>) -> Result<(u64, PathBuf), Failure> {
    let common = cmd.common();
    let seed = common.seed.or(cfg_seed).unwrap_or(0);
    let out = common
        .out
        .clone()
        .or_else(|| cfg_out.cloned())
        .ok_or_else(|| config_err(anyhow!("no output directory: pass --out or set `out` in the config")))?;
    commands::prepare_out(&out)?;
    write_manifest(&out, cmd.name(), text, seed)?;
    Ok((seed, out))
}

fn run(cmd: &Command) -> Outcome {
    let common = cmd.common();
    if let Some(k) = common.threads {
        if k == 0 {
            return Err(config_err(anyhow!("invalid parameter `threads`: must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global().map_err(config_err)?;
    }
    let text = fs::read_to_string(&common.config)
        .map_err(|e| config_err(anyhow!("cannot read config {}: {e}", common.config.display())))?;
    let base = common.config.parent().map(Path::to_path_buf).unwrap_or_default();
    match cmd {
        Command::SolveOt(_) => {
            let cfg: config::SolveOtConfig = config::parse(&text).map_err(config_err)?;
            let (seed, out) = setup(cmd, &text, cfg.seed, cfg.out.as_ref())?;
            commands::solve_ot(&cfg, seed, &out, &base)
        }
        Command::Verify5g(_) => {
            let cfg: config::VerifyConfig = config::parse(&text).map_err(config_err)?;
            let (seed, out) = setup(cmd, &text, cfg.seed, cfg.out.as_ref())?;
            commands::verify_5g(&cfg, seed, &out)
        }
        Command::Jko(_) => {
            let cfg: config::JkoRunConfig = config::parse(&text).map_err(config_err)?;
            let (seed, out) = setup(cmd, &text, cfg.seed, cfg.out.as_ref())?;
            commands::jko(&cfg, seed, &out, &base)
        }
        Command::MollifyStudy(_) => {
            let cfg: config::MollifyConfig = config::parse(&text).map_err(config_err)?;
            let (seed, out) = setup(cmd, &text, cfg.seed, cfg.out.as_ref())?;
            commands::mollify_study(&cfg, seed, &out, &base)
        }
        Command::Ctransform(_) => {
            let cfg: config::CtransformConfig = config::parse(&text).map_err(config_err)?;
            let (_, out) = setup(cmd, &text, cfg.seed, cfg.out.as_ref())?;
            commands::ctransform(&cfg, &out, &base)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("fivegrad {}: {f}", cli.command.name());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
