//! TOML run configuration: schema, loading, overrides, and resolution into
//! domain objects.

use crate::forward::{SolverConfig, SolverMode};
use crate::geometry::{SphereQuadrature, VolumeGrid, build_sphere_quadrature, build_volume_grid};
use crate::inversion::{InversionConfig, NChoice};
use crate::medium::{Bump, MediumSpec, WaveParams};
use crate::{C64, Error, Result, V3};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub wave: WaveSection,
    pub medium: MediumSection,
    pub grids: GridsSection,
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub inversion: InversionSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSection {
    pub k: f64,
    #[serde(default = "one")]
    pub eps0: f64,
    #[serde(default = "one")]
    pub mu0: f64,
    /// defaults to k / sqrt(eps0 mu0)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSection {
    pub domain_radius: f64,
    #[serde(default, rename = "bump")]
    pub bumps: Vec<BumpSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSection {
    pub center: [f64; 3],
    pub radius: f64,
    /// [re, im]
    pub amplitude: [f64; 2],
    #[serde(default = "default_power")]
    pub power: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsSection {
    /// cells per axis for the forward solver (full-solver mode and the
    /// forward subcommand)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<usize>,
    /// cells per axis for integrating first-order data
    #[serde(default = "default_data_grid")]
    pub data: usize,
    /// cells per axis for the reconstruction volume
    #[serde(default = "default_recon_grid")]
    pub reconstruction: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    pub alpha_polar: usize,
    pub alpha_azimuth: usize,
    pub beta_polar: usize,
    pub beta_azimuth: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// "born-exact" or "full-solver"
    #[serde(default = "default_mode")]
    pub mode: String,
    /// noise level as a fraction of the weighted data norm
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { mode: default_mode(), noise: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tol_dense")]
    pub tolerance_dense: f64,
    #[serde(default = "default_tol_iterative")]
    pub tolerance_iterative: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_dense_cell_limit")]
    pub dense_cell_limit: usize,
    /// "auto", "dense", or "iterative"
    #[serde(default = "default_solver_mode")]
    pub mode: String,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tolerance_dense: default_tol_dense(),
            tolerance_iterative: default_tol_iterative(),
            max_iterations: default_max_iterations(),
            dense_cell_limit: default_dense_cell_limit(),
            mode: default_solver_mode(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionSection {
    /// "auto" or a positive integer
    #[serde(default = "default_n")]
    pub n: NSetting,
    /// defaults to medium.domain_radius
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_ball: Option<f64>,
    #[serde(default = "default_radial_points")]
    pub radial_points: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

impl Default for InversionSection {
    fn default() -> Self {
        InversionSection {
            n: default_n(),
            r_ball: None,
            radial_points: default_radial_points(),
            n_max: default_n_max(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NSetting {
    Fixed(usize),
    Keyword(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
}

fn one() -> f64 {
    1.0
}
fn default_power() -> u32 {
    3
}
fn default_data_grid() -> usize {
    32
}
fn default_recon_grid() -> usize {
    16
}
fn default_mode() -> String {
    "born-exact".to_string()
}
fn default_tol_dense() -> f64 {
    1e-10
}
fn default_tol_iterative() -> f64 {
    1e-8
}
fn default_max_iterations() -> usize {
    500
}
fn default_dense_cell_limit() -> usize {
    4096
}
fn default_solver_mode() -> String {
    "auto".to_string()
}
fn default_n() -> NSetting {
    NSetting::Keyword("auto".to_string())
}
fn default_radial_points() -> usize {
    128
}
fn default_n_max() -> usize {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataMode {
    BornExact,
    FullSolver,
}

/// Everything a run needs, validated and instantiated.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub raw: RunConfig,
    pub wave: WaveParams,
    pub medium: MediumSpec,
    pub alpha_quad: SphereQuadrature,
    pub beta_quad: SphereQuadrature,
    pub data_grid: VolumeGrid,
    pub forward_grid: Option<VolumeGrid>,
    pub recon_grid: VolumeGrid,
    pub solver: SolverConfig,
    pub inversion: InversionConfig,
    pub mode: DataMode,
    pub noise: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{path:?}: {e}")))
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub output: Option<PathBuf>,
}

pub fn apply_overrides(config: &mut RunConfig, ov: &Overrides) {
    if let Some(seed) = ov.seed {
        config.data.seed = seed;
    }
    if let Some(n) = ov.n {
        config.inversion.n = NSetting::Fixed(n);
    }
    if let Some(dir) = &ov.output {
        config.output.directory = dir.clone();
    }
}

pub fn resolve(raw: RunConfig) -> Result<Resolved> {
    let w = &raw.wave;
    if !w.k.is_finite() || w.k <= 0.0 {
        return Err(Error::invalid("wave.k", "must be positive and finite"));
    }
    if !w.eps0.is_finite() || w.eps0 <= 0.0 {
        return Err(Error::invalid("wave.eps0", "must be positive and finite"));
    }
    if !w.mu0.is_finite() || w.mu0 <= 0.0 {
        return Err(Error::invalid("wave.mu0", "must be positive and finite"));
    }
    let omega = w.omega.unwrap_or_else(|| w.k / (w.eps0 * w.mu0).sqrt());
    let wave = WaveParams::new(w.k, omega, w.eps0, w.mu0)?;

    let bumps: Vec<Bump> = raw
        .medium
        .bumps
        .iter()
        .map(|b| Bump {
            center: V3::new(b.center[0], b.center[1], b.center[2]),
            radius: b.radius,
            amplitude: C64::new(b.amplitude[0], b.amplitude[1]),
            power: b.power,
        })
        .collect();
    let medium = MediumSpec::new(bumps, raw.medium.domain_radius)?;

    let q = &raw.quadrature;
    for (name, v) in [
        ("quadrature.alpha_polar", q.alpha_polar),
        ("quadrature.alpha_azimuth", q.alpha_azimuth),
        ("quadrature.beta_polar", q.beta_polar),
        ("quadrature.beta_azimuth", q.beta_azimuth),
    ] {
        if v == 0 {
            return Err(Error::invalid(name, "must be at least 1"));
        }
    }
    let alpha_quad = build_sphere_quadrature(q.alpha_polar, q.alpha_azimuth);
    let beta_quad = build_sphere_quadrature(q.beta_polar, q.beta_azimuth);

    let mode = match raw.data.mode.as_str() {
        "born-exact" => DataMode::BornExact,
        "full-solver" => DataMode::FullSolver,
        other => {
            return Err(Error::invalid(
                "data.mode",
                format!("expected \"born-exact\" or \"full-solver\", got {other:?}"),
            ));
        }
    };
    if !raw.data.noise.is_finite() || raw.data.noise < 0.0 {
        return Err(Error::invalid("data.noise", "must be nonnegative and finite"));
    }

    if raw.grids.data == 0 {
        return Err(Error::invalid("grids.data", "must be at least 1"));
    }
    if raw.grids.reconstruction == 0 {
        return Err(Error::invalid("grids.reconstruction", "must be at least 1"));
    }
    if mode == DataMode::FullSolver && raw.grids.forward.is_none() {
        return Err(Error::invalid(
            "grids.forward",
            "required when data.mode is \"full-solver\"",
        ));
    }
    if raw.grids.forward == Some(0) {
        return Err(Error::invalid("grids.forward", "must be at least 1"));
    }
    let data_grid = build_volume_grid(medium.domain_radius, raw.grids.data);
    let recon_grid = build_volume_grid(medium.domain_radius, raw.grids.reconstruction);
    let forward_grid = raw
        .grids
        .forward
        .map(|n| build_volume_grid(medium.domain_radius, n));

    let s = &raw.solver;
    if !s.tolerance_dense.is_finite() || s.tolerance_dense <= 0.0 {
        return Err(Error::invalid("solver.tolerance_dense", "must be positive"));
    }
    if !s.tolerance_iterative.is_finite() || s.tolerance_iterative <= 0.0 {
        return Err(Error::invalid("solver.tolerance_iterative", "must be positive"));
    }
    if s.max_iterations == 0 {
        return Err(Error::invalid("solver.max_iterations", "must be at least 1"));
    }
    let solver_mode = match s.mode.as_str() {
        "auto" => SolverMode::Auto,
        "dense" => SolverMode::Dense,
        "iterative" => SolverMode::Iterative,
        other => {
            return Err(Error::invalid(
                "solver.mode",
                format!("expected \"auto\", \"dense\", or \"iterative\", got {other:?}"),
            ));
        }
    };
    let solver = SolverConfig {
        tol_dense: s.tolerance_dense,
        tol_iterative: s.tolerance_iterative,
        max_iterations: s.max_iterations,
        dense_cell_limit: s.dense_cell_limit,
        mode: solver_mode,
    };

    let inv = &raw.inversion;
    let n_choice = match &inv.n {
        NSetting::Fixed(n) => NChoice::Fixed(*n),
        NSetting::Keyword(s) if s == "auto" => NChoice::Auto,
        NSetting::Keyword(other) => {
            return Err(Error::invalid(
                "inversion.n",
                format!("expected \"auto\" or a positive integer, got {other:?}"),
            ));
        }
    };
    let r_ball = inv.r_ball.unwrap_or(medium.domain_radius);
    if r_ball + 1e-12 < medium.support_radius() {
        return Err(Error::invalid(
            "inversion.r_ball",
            format!(
                "must cover the medium support radius {:.6}",
                medium.support_radius()
            ),
        ));
    }
    let inversion = InversionConfig {
        n: n_choice,
        r_ball,
        radial_points: inv.radial_points,
        n_max: inv.n_max,
    };
    inversion.validate()?;

    let output_dir = raw.output.directory.clone();
    let noise = raw.data.noise;
    let seed = raw.data.seed;
    Ok(Resolved {
        raw,
        wave,
        medium,
        alpha_quad,
        beta_quad,
        data_grid,
        forward_grid,
        recon_grid,
        solver,
        inversion,
        mode,
        noise,
        seed,
        output_dir,
    })
}
