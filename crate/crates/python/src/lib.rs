//! Python bindings for the scattering library: medium description, data
//! synthesis (first-order and full solver), noise, and regularized
//! reconstruction.

use emscat::amplitude::build_dataset;
use emscat::born::{add_noise, synthesize_born, ScatteringDataSet};
use emscat::cli::formats::{read_dataset, write_dataset};
use emscat::forward::{divergence_diagnostic, solve_forward, SolverConfig};
use emscat::geometry::{build_sphere_quadrature, build_volume_grid, VolumeGrid};
use emscat::inversion::{error_metric, InversionConfig, NChoice};
use emscat::medium::{eval_p, p_field, p_to_eps, Bump, MediumSpec, WaveParams};
use emscat::{C64, V3};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use std::path::Path;

fn err(e: emscat::Error) -> PyErr {
    match e {
        emscat::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn v3(t: (f64, f64, f64)) -> V3 {
    V3::new(t.0, t.1, t.2)
}

/// Piecewise-smooth complex contrast: a background plus radial bumps.
#[pyclass]
struct Medium {
    spec: MediumSpec,
}

#[pymethods]
impl Medium {
    #[new]
    fn new(domain_radius: f64) -> PyResult<Self> {
        let spec = MediumSpec::new(Vec::new(), domain_radius).map_err(err)?;
        Ok(Medium { spec })
    }

    /// Adds one radial bump; amplitude is the complex contrast value at the
    /// bump center, and its imaginary part must be nonnegative.
    #[pyo3(signature = (center, radius, amplitude, power = 3))]
    fn add_bump(
        &mut self,
        center: (f64, f64, f64),
        radius: f64,
        amplitude: C64,
        power: u32,
    ) -> PyResult<()> {
        let mut bumps = self.spec.bumps.clone();
        bumps.push(Bump { center: v3(center), radius, amplitude, power });
        self.spec = MediumSpec::new(bumps, self.spec.domain_radius).map_err(err)?;
        Ok(())
    }

    /// Contrast p(x) = K^2(x) - k^2 at a point.
    fn contrast_at(&self, k: f64, x: (f64, f64, f64)) -> PyResult<C64> {
        let wave = WaveParams::from_k(k).map_err(err)?;
        Ok(eval_p(&self.spec, &wave, &v3(x)))
    }

    #[getter]
    fn domain_radius(&self) -> f64 {
        self.spec.domain_radius
    }

    #[getter]
    fn n_bumps(&self) -> usize {
        self.spec.bumps.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Medium(domain_radius={}, bumps={})",
            self.spec.domain_radius,
            self.spec.bumps.len()
        )
    }
}

/// Scalar scattering data on a product of direction quadratures.
#[pyclass]
struct Dataset {
    inner: ScatteringDataSet,
}

#[pymethods]
impl Dataset {
    #[getter]
    fn n_alpha(&self) -> usize {
        self.inner.n_alpha()
    }

    #[getter]
    fn n_beta(&self) -> usize {
        self.inner.n_beta()
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.wave.k
    }

    #[getter]
    fn noise_level(&self) -> f64 {
        self.inner.noise_level
    }

    #[getter]
    fn seed(&self) -> Option<u64> {
        self.inner.seed
    }

    #[getter]
    fn provenance(&self) -> String {
        self.inner.provenance.to_string()
    }

    /// Quadrature-weighted norm of the data.
    fn f_norm(&self) -> f64 {
        self.inner.f_norm()
    }

    /// Data values as a nested list indexed [beta][alpha].
    fn values(&self) -> Vec<Vec<C64>> {
        self.inner
            .f
            .rows()
            .into_iter()
            .map(|row| row.to_vec())
            .collect()
    }

    /// A copy perturbed to the given absolute noise norm.
    fn with_noise(&self, delta: f64, seed: u64) -> PyResult<Dataset> {
        let inner = add_noise(&self.inner, delta, seed).map_err(err)?;
        Ok(Dataset { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        write_dataset(&self.inner, Path::new(path)).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Dataset> {
        let inner = read_dataset(Path::new(path)).map_err(err)?;
        Ok(Dataset { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n_alpha={}, n_beta={}, k={}, provenance={})",
            self.inner.n_alpha(),
            self.inner.n_beta(),
            self.inner.wave.k,
            self.inner.provenance
        )
    }
}

/// Recovered contrast on a volume grid, with the chosen regularization order.
#[pyclass]
struct Reconstruction {
    grid: VolumeGrid,
    wave: WaveParams,
    p: Vec<C64>,
    #[pyo3(get)]
    chosen_n: usize,
    sweep: Vec<(usize, f64)>,
}

#[pymethods]
impl Reconstruction {
    fn points(&self) -> Vec<(f64, f64, f64)> {
        self.grid.cell_centers.iter().map(|c| (c.x, c.y, c.z)).collect()
    }

    fn values(&self) -> Vec<C64> {
        self.p.clone()
    }

    /// Recovered complex permittivity at each grid point.
    fn permittivity(&self) -> Vec<C64> {
        self.p.iter().map(|&p| p_to_eps(p, &self.wave)).collect()
    }

    /// Order sweep used by the automatic choice: (order, increment) pairs.
    #[getter]
    fn sweep(&self) -> Vec<(usize, f64)> {
        self.sweep.clone()
    }

    /// Relative L2 distance to the true contrast of the given medium.
    fn error_against(&self, medium: &Medium) -> PyResult<f64> {
        let truth = p_field(&medium.spec, &self.wave, &self.grid);
        error_metric(&self.p, &truth, &self.grid).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Reconstruction(cells={}, chosen_n={})", self.grid.len(), self.chosen_n)
    }
}

/// First-order data for a medium: direction quadrature n_polar x n_azimuth
/// (used for both incidence and observation), integration grid with
/// grid_cells cells per axis.
#[pyfunction]
fn born_dataset(
    medium: &Medium,
    k: f64,
    n_polar: usize,
    n_azimuth: usize,
    grid_cells: usize,
) -> PyResult<Dataset> {
    let wave = WaveParams::from_k(k).map_err(err)?;
    let quad = build_sphere_quadrature(n_polar, n_azimuth);
    let grid = build_volume_grid(medium.spec.domain_radius, grid_cells);
    let inner = synthesize_born(&medium.spec, &wave, &quad, &quad, &grid).map_err(err)?;
    Ok(Dataset { inner })
}

/// Data from the full forward solver (one factorization, one solve per
/// incident direction).
#[pyfunction]
fn full_dataset(
    medium: &Medium,
    k: f64,
    n_polar: usize,
    n_azimuth: usize,
    grid_cells: usize,
) -> PyResult<Dataset> {
    let wave = WaveParams::from_k(k).map_err(err)?;
    let quad = build_sphere_quadrature(n_polar, n_azimuth);
    let grid = build_volume_grid(medium.spec.domain_radius, grid_cells);
    let config = SolverConfig::default();
    let inner = build_dataset(&medium.spec, &wave, &quad, &quad, &grid, &config).map_err(err)?;
    Ok(Dataset { inner })
}

/// Regularized reconstruction of the contrast on a grid of grid_cells cells
/// per axis over the ball of radius r_ball. Fixed order if n is given,
/// otherwise chosen automatically among 1..=n_max.
#[pyfunction]
#[pyo3(signature = (dataset, grid_cells, r_ball, n = None, n_max = 8, radial_points = 128))]
fn reconstruct(
    dataset: &Dataset,
    grid_cells: usize,
    r_ball: f64,
    n: Option<usize>,
    n_max: usize,
    radial_points: usize,
) -> PyResult<Reconstruction> {
    let grid = build_volume_grid(r_ball, grid_cells);
    let config = InversionConfig {
        n: n.map_or(NChoice::Auto, NChoice::Fixed),
        r_ball,
        radial_points,
        n_max,
    };
    let result = emscat::inversion::reconstruct(&dataset.inner, &grid, &config).map_err(err)?;
    Ok(Reconstruction {
        grid: result.grid,
        wave: dataset.inner.wave,
        p: result.p,
        chosen_n: result.chosen_n,
        sweep: result.sweep.iter().map(|s| (s.n, s.increment)).collect(),
    })
}

/// Solves the forward problem for a z-incident wave and returns
/// (solver residual, divergence diagnostic).
#[pyfunction]
fn forward_diagnostics(medium: &Medium, k: f64, grid_cells: usize) -> PyResult<(f64, f64)> {
    let wave = WaveParams::from_k(k).map_err(err)?;
    let grid = build_volume_grid(medium.spec.domain_radius, grid_cells);
    let alpha = emscat::geometry::Direction::new(V3::new(0.0, 0.0, 1.0)).map_err(err)?;
    let (pol, _) = emscat::forward::orthonormal_polarizations(&alpha);
    let incident = emscat::forward::IncidentWave::new(alpha, pol, wave).map_err(err)?;
    let field = solve_forward(&grid, &medium.spec, &incident, &SolverConfig::default()).map_err(err)?;
    let divergence = divergence_diagnostic(&field, &medium.spec).map_err(err)?;
    Ok((field.solver_residual, divergence))
}

#[pymodule]
fn _emscat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Medium>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Reconstruction>()?;
    m.add_function(wrap_pyfunction!(born_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(full_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(forward_diagnostics, m)?)?;
    Ok(())
}
