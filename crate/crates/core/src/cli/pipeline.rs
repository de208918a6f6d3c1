//! Run orchestration for the command-line interface. Each step is tagged
//! with a stage name so failures can be reported as a single diagnostic
//! line and mapped to an exit code.

use crate::born::{add_noise, synthesize_born, Provenance, ScatteringDataSet};
use crate::cli::config::{DataMode, Resolved};
use crate::cli::formats::{
    self, DatasetSummary, Manifest, OutputFiles, SolverSummary, SweepEntry, Timings,
};
use crate::forward::{
    divergence_diagnostic, orthonormal_polarizations, solve_forward, IncidentWave, SolverMode,
};
use crate::geometry::{Direction, VolumeGrid};
use crate::inversion::{error_metric, reconstruct};
use crate::medium::{p_field, p_to_eps, validate_medium};
use crate::{C64, Error, Result, V3};
use std::fmt;
use std::time::Instant;

#[derive(Debug)]
pub struct StagedError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StagedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.error)
    }
}

pub fn stage<T>(name: &'static str, result: Result<T>) -> std::result::Result<T, StagedError> {
    result.map_err(|error| StagedError { stage: name, error })
}

/// 2 for configuration problems, 3 for solver failures, 4 for I/O.
pub fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Io(_) => 4,
        Error::InvalidParameter { .. } | Error::Config(_) | Error::NegativeAbsorption(_) => 2,
        _ => 3,
    }
}

fn note(quiet: bool, msg: &str) {
    if !quiet {
        eprintln!("emscat: {msg}");
    }
}

fn mode_name(mode: SolverMode) -> &'static str {
    match mode {
        SolverMode::Auto => "auto",
        SolverMode::Dense => "dense",
        SolverMode::Iterative => "iterative",
    }
}

pub fn make_dataset(r: &Resolved, quiet: bool) -> Result<ScatteringDataSet> {
    let clean = match r.mode {
        DataMode::BornExact => {
            note(quiet, "synthesizing weak-contrast data");
            synthesize_born(&r.medium, &r.wave, &r.alpha_quad, &r.beta_quad, &r.data_grid)?
        }
        DataMode::FullSolver => {
            let grid = r
                .forward_grid
                .as_ref()
                .ok_or_else(|| Error::invalid("grids.forward", "required for full-solver data"))?;
            note(
                quiet,
                &format!(
                    "solving the forward problem on {} cells for {} incident directions",
                    grid.len(),
                    r.alpha_quad.len()
                ),
            );
            crate::amplitude::build_dataset(
                &r.medium,
                &r.wave,
                &r.alpha_quad,
                &r.beta_quad,
                grid,
                &r.solver,
            )?
        }
    };
    if r.noise > 0.0 {
        let norm = clean.f_norm();
        if norm == 0.0 {
            note(quiet, "data norm is zero, noise skipped");
            return Ok(clean);
        }
        let abs = r.noise * norm;
        note(quiet, &format!("perturbing data, absolute noise {abs:.6e}"));
        return add_noise(&clean, abs, r.seed);
    }
    Ok(clean)
}

fn score(p: &[C64], truth: &[C64], grid: &VolumeGrid) -> Result<(Option<f64>, Vec<String>)> {
    match error_metric(p, truth, grid) {
        Ok(e) => Ok((Some(e), Vec::new())),
        Err(Error::ZeroTruth) => Ok((None, vec!["zero truth: error metric skipped".to_string()])),
        Err(e) => Err(e),
    }
}

fn invert_and_write(
    r: &Resolved,
    data: &ScatteringDataSet,
    data_s: f64,
    write_data_file: bool,
    run_start: Instant,
    quiet: bool,
) -> std::result::Result<Manifest, StagedError> {
    let t0 = Instant::now();
    note(
        quiet,
        &format!(
            "reconstructing the contrast on {} cells from {} direction pairs",
            r.recon_grid.len(),
            r.alpha_quad.len() * r.beta_quad.len()
        ),
    );
    let recon = stage("invert", reconstruct(data, &r.recon_grid, &r.inversion))?;
    let truth = p_field(&r.medium, &r.wave, &r.recon_grid);
    let (error, mut notes) = stage("invert", score(&recon.p, &truth, &r.recon_grid))?;
    let invert_s = t0.elapsed().as_secs_f64();

    let dir = &r.output_dir;
    stage("write", std::fs::create_dir_all(dir).map_err(Error::from))?;
    if write_data_file {
        stage("write", formats::write_dataset(data, &dir.join("dataset.csv")))?;
    }
    stage(
        "write",
        formats::write_volume(&r.recon_grid, &recon.p, &dir.join("reconstruction.csv")),
    )?;
    let eps: Vec<C64> = recon.p.iter().map(|&p| p_to_eps(p, &r.wave)).collect();
    stage(
        "write",
        formats::write_volume(&r.recon_grid, &eps, &dir.join("permittivity.csv")),
    )?;

    let solver = match r.mode {
        DataMode::FullSolver => Some(SolverSummary {
            mode: mode_name(r.solver.mode).to_string(),
            tolerance_dense: r.solver.tol_dense,
            tolerance_iterative: r.solver.tol_iterative,
            cells: r.forward_grid.as_ref().map(VolumeGrid::len).unwrap_or(0),
        }),
        DataMode::BornExact => None,
    };
    if data.provenance == Provenance::Noisy {
        if let Some(seed) = data.seed {
            notes.push(format!("noise drawn from seed {seed}"));
        }
    }
    let manifest = Manifest {
        config: r.raw.clone(),
        f_norm: data.f_norm(),
        noise_absolute: data.noise_level,
        dataset: DatasetSummary {
            n_alpha: data.n_alpha(),
            n_beta: data.n_beta(),
            provenance: data.provenance.to_string(),
            seed: data.seed,
        },
        solver,
        chosen_n: recon.chosen_n,
        sweep: recon
            .sweep
            .iter()
            .map(|s| SweepEntry { n: s.n, increment: s.increment })
            .collect(),
        error_relative_l2: error,
        notes,
        outputs: OutputFiles {
            dataset: "dataset.csv".to_string(),
            reconstruction: "reconstruction.csv".to_string(),
            permittivity: "permittivity.csv".to_string(),
        },
        timings: Timings { data_s, invert_s, total_s: run_start.elapsed().as_secs_f64() },
    };
    stage("write", formats::write_manifest(&manifest, &dir.join("manifest.json")))?;
    if !quiet {
        match manifest.error_relative_l2 {
            Some(e) => println!(
                "order {} reconstruction, relative error {:.6e}, outputs in {}",
                manifest.chosen_n,
                e,
                dir.display()
            ),
            None => println!(
                "order {} reconstruction, outputs in {}",
                manifest.chosen_n,
                dir.display()
            ),
        }
    }
    Ok(manifest)
}

pub fn run_pipeline(r: &Resolved, quiet: bool) -> std::result::Result<Manifest, StagedError> {
    let start = Instant::now();
    let data = stage("data", make_dataset(r, quiet))?;
    let data_s = start.elapsed().as_secs_f64();
    invert_and_write(r, &data, data_s, true, start, quiet)
}

pub fn run_synth(r: &Resolved, quiet: bool) -> std::result::Result<(), StagedError> {
    let start = Instant::now();
    let data = stage("data", make_dataset(r, quiet))?;
    stage("write", std::fs::create_dir_all(&r.output_dir).map_err(Error::from))?;
    let path = r.output_dir.join("dataset.csv");
    stage("write", formats::write_dataset(&data, &path))?;
    if !quiet {
        println!(
            "wrote {} ({} alpha x {} beta samples, data norm {:.6e}, {:.2}s)",
            path.display(),
            data.n_alpha(),
            data.n_beta(),
            data.f_norm(),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

pub fn run_forward(r: &Resolved, quiet: bool) -> std::result::Result<(), StagedError> {
    let grid = stage(
        "config",
        r.forward_grid
            .as_ref()
            .ok_or_else(|| Error::invalid("grids.forward", "required by the forward command")),
    )?;
    let alpha = stage("config", Direction::new(V3::new(0.0, 0.0, 1.0)))?;
    let (e1, _) = orthonormal_polarizations(&alpha);
    let incident = stage("config", IncidentWave::new(alpha, e1, r.wave))?;
    note(quiet, &format!("solving the forward problem on {} cells", grid.len()));
    let field = stage("forward", solve_forward(grid, &r.medium, &incident, &r.solver))?;
    let divergence = match divergence_diagnostic(&field, &r.medium) {
        Ok(d) => Some(d),
        Err(Error::GridTooCoarse(n)) => {
            note(quiet, &format!("grid with {n} cells per axis is too coarse for the divergence check"));
            None
        }
        Err(e) => return Err(StagedError { stage: "forward", error: e }),
    };
    stage("write", std::fs::create_dir_all(&r.output_dir).map_err(Error::from))?;
    for (name, pick) in [
        ("e_x.csv", 0usize),
        ("e_y.csv", 1),
        ("e_z.csv", 2),
    ] {
        let component: Vec<C64> = field.e.iter().map(|v| v[pick]).collect();
        stage(
            "write",
            formats::write_volume(grid, &component, &r.output_dir.join(name)),
        )?;
    }
    if !quiet {
        match divergence {
            Some(d) => println!(
                "solver residual {:.6e}, divergence diagnostic {:.6e}, fields in {}",
                field.solver_residual,
                d,
                r.output_dir.display()
            ),
            None => println!(
                "solver residual {:.6e}, fields in {}",
                field.solver_residual,
                r.output_dir.display()
            ),
        }
    }
    Ok(())
}

pub fn run_invert(r: &Resolved, quiet: bool) -> std::result::Result<Manifest, StagedError> {
    let start = Instant::now();
    let path = r.output_dir.join("dataset.csv");
    note(quiet, &format!("reading {}", path.display()));
    let data = stage("read", formats::read_dataset(&path))?;
    if (data.wave.k - r.wave.k).abs() > 1e-12 * r.wave.k {
        return Err(StagedError {
            stage: "read",
            error: Error::Config(format!(
                "dataset wavenumber {} does not match the configured {}",
                data.wave.k, r.wave.k
            )),
        });
    }
    let data_s = start.elapsed().as_secs_f64();
    invert_and_write(r, &data, data_s, false, start, quiet)
}

pub fn run_validate(r: &Resolved, quiet: bool) -> std::result::Result<(), StagedError> {
    let report = stage("validate", validate_medium(&r.medium, &r.wave, &r.data_grid))?;
    if let Some(grid) = &r.forward_grid {
        stage("validate", validate_medium(&r.medium, &r.wave, grid).map(|_| ()))?;
    }
    let full_sphere = 4.0 * std::f64::consts::PI;
    for (name, quad) in [("alpha", &r.alpha_quad), ("beta", &r.beta_quad)] {
        let sum: f64 = quad.weights.iter().sum();
        if (sum - full_sphere).abs() > 1e-9 {
            return Err(StagedError {
                stage: "validate",
                error: Error::InconsistentQuadratures(format!(
                    "{name} weights sum to {sum:.12e}, expected the full sphere"
                )),
            });
        }
    }
    if !quiet {
        println!(
            "medium ok: min |k^2 + p| = {:.6e}, min Im p = {:.6e}, max |p|/k^2 = {:.6e}",
            report.min_abs_k2_plus_p, report.min_im_p, report.max_rel_contrast
        );
        println!(
            "quadratures ok: {} alpha and {} beta directions, weights cover the sphere",
            r.alpha_quad.len(),
            r.beta_quad.len()
        );
    }
    Ok(())
}
