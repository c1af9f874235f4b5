//! TOML schema for every subcommand. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use fivegrad_core::cost::RadialCost;
use fivegrad_core::geometry::{gaussian_bump, random_smooth_density, DensityField, Grid};
use fivegrad_core::jko::{Energy, JkoConfig};
use fivegrad_core::ot::SolverKind;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "one")]
    pub dim: usize,
    /// Cells per axis.
    pub n: usize,
}

fn one() -> usize {
    1
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid<f64>> {
        Ok(match self.dim {
            1 => Grid::unit_interval(self.n)?,
            2 => Grid::unit_square(self.n)?,
            d => bail!("invalid parameter `grid.dim`: must be 1 or 2, got {d}"),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    /// `h(z) = |z|^p / p`.
    Power { p: f64 },
    /// Profile given by samples `(r_k, p_h(r_k))`, linearly interpolated.
    Tabulated { radii: Vec<f64>, values: Vec<f64> },
}

impl CostSpec {
    pub fn build(&self, grid: &Grid<f64>) -> Result<RadialCost<f64>> {
        Ok(match self {
            CostSpec::Power { p } => RadialCost::power(*p, grid.domain_radius())?,
            CostSpec::Tabulated { radii, values } => RadialCost::tabulated(radii, values, grid.domain_radius())?,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform,
    /// Random Fourier density drawn from `2·seed + offset`.
    Random {
        #[serde(default)]
        offset: u64,
        #[serde(default = "default_modes")]
        modes: usize,
        #[serde(default = "default_floor")]
        floor: f64,
    },
    Bump {
        center: Vec<f64>,
        width: f64,
        #[serde(default)]
        floor: f64,
    },
    /// A field CSV (`x[,y],value`) on the same grid; relative to the config file.
    File { path: PathBuf },
}

fn default_modes() -> usize {
    4
}

fn default_floor() -> f64 {
    0.1
}

impl DensitySpec {
    pub fn build(&self, grid: &Grid<f64>, seed: u64, base: &Path) -> Result<DensityField<f64>> {
        Ok(match self {
            DensitySpec::Uniform => DensityField::uniform(*grid),
            DensitySpec::Random { offset, modes, floor } => {
                random_smooth_density(grid, seed.wrapping_mul(2).wrapping_add(*offset), *modes, *floor)?
            }
            DensitySpec::Bump { center, width, floor } => {
                if center.is_empty() || center.len() > 2 {
                    bail!("invalid parameter `center`: needs 1 or 2 coordinates");
                }
                let c = [center[0], center.get(1).copied().unwrap_or(0.0)];
                gaussian_bump(grid, c, *width, *floor)?
            }
            DensitySpec::File { path } => {
                let path = base.join(path);
                let file = std::fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
                let d = DensityField::read_csv(std::io::BufReader::new(file))?;
                if d.grid() != grid {
                    bail!("density file {} is not on the configured grid", path.display());
                }
                d
            }
        })
    }
}

fn default_solver() -> String {
    "lp".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_solver")]
    pub kind: String,
    /// Final regularization of the entropic solver.
    #[serde(default = "default_entropic_epsilon")]
    pub epsilon: f64,
}

fn default_entropic_epsilon() -> f64 {
    1e-3
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec { kind: default_solver(), epsilon: default_entropic_epsilon() }
    }
}

impl SolverSpec {
    pub fn kind(&self) -> Result<SolverKind> {
        Ok(self.kind.parse()?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOtConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub grid: GridSpec,
    pub cost: CostSpec,
    pub source: DensitySpec,
    pub target: DensitySpec,
    #[serde(default)]
    pub solver: SolverSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    /// Instances use seeds `seed, seed + 1, …, seed + count − 1`.
    pub count: u64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub n: Vec<usize>,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "default_solver")]
    pub solver: String,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_floor")]
    pub floor: f64,
    pub kappa: Option<f64>,
    #[serde(default)]
    pub identical: bool,
    #[serde(default = "default_entropic_epsilon")]
    pub entropic_epsilon: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub batch: BatchConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnergySpec {
    Entropy,
    Power { m: f64 },
}

impl EnergySpec {
    pub fn build(&self) -> Energy<f64> {
        match *self {
            EnergySpec::Entropy => Energy::Entropy,
            EnergySpec::Power { m } => Energy::Power { m },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub p: f64,
    pub tau: f64,
    pub steps: usize,
    pub energy: EnergySpec,
    pub epsilon: Option<f64>,
    pub max_inner: Option<usize>,
    pub inner_tolerance: Option<f64>,
    pub max_backtracks: Option<usize>,
    pub max_polish: Option<usize>,
    pub polish_tolerance: Option<f64>,
}

impl SchemeSpec {
    pub fn build(&self) -> JkoConfig<f64> {
        let mut c = JkoConfig::new(self.p, self.tau, self.steps, self.energy.build());
        if let Some(v) = self.epsilon {
            c.epsilon = v;
        }
        if let Some(v) = self.max_inner {
            c.max_inner = v;
        }
        if let Some(v) = self.inner_tolerance {
            c.inner_tolerance = v;
        }
        if let Some(v) = self.max_backtracks {
            c.max_backtracks = v;
        }
        if let Some(v) = self.max_polish {
            c.max_polish = v;
        }
        if let Some(v) = self.polish_tolerance {
            c.polish_tolerance = v;
        }
        c
    }
}

/// Optional comparison with the reference PDE; any bound given here becomes a pass/fail check.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    pub dt: f64,
    pub max_final_distance: Option<f64>,
    #[serde(default)]
    pub require_refinement: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JkoRunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub grid: GridSpec,
    pub initial: DensitySpec,
    pub jko: SchemeSpec,
    /// Allowed TV increase between iterates, relative to `TV(ϱ_0)`.
    pub tv_slack: Option<f64>,
    pub compare: Option<CompareSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifySpec {
    pub epsilons: Vec<f64>,
    #[serde(default = "default_quadrature")]
    pub quadrature_order: usize,
}

fn default_quadrature() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifyConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub grid: GridSpec,
    pub cost: CostSpec,
    pub source: DensitySpec,
    pub target: DensitySpec,
    pub mollify: MollifySpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtransformConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub cost: CostSpec,
    /// Field CSV holding `ψ`; the grid is read from its centers.
    pub psi: PathBuf,
}

/// Parses `text` as a config of type `C`; parse failures name the offending key.
pub fn parse<C: for<'de> Deserialize<'de>>(text: &str) -> Result<C> {
    toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid config: {}", e.to_string().trim_end()))
}
