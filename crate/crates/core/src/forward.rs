//! Forward solver for the second-kind volume integral equation E = E0 + TE with
//! the outgoing scalar kernel, plus field diagnostics and off-grid evaluation.

use crate::geometry::{Direction, VolumeGrid, self_cell_integral};
use crate::medium::{MediumSpec, WaveParams, eval_p, eval_q, validate_medium};
use crate::{C64, CV3, Error, Result, V3};
use ndarray::{Array1, Array2};
use ndarray_linalg::solve::LUFactorized;
use ndarray_linalg::{FactorizeInto, Solve};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Plane wave: polarization * exp(i k alpha . x) with polarization orthogonal
/// to the propagation direction.
#[derive(Debug, Clone, Copy)]
pub struct IncidentWave {
    pub alpha: Direction,
    pub polarization: V3,
    pub wave: WaveParams,
}

impl IncidentWave {
    pub fn new(alpha: Direction, polarization: V3, wave: WaveParams) -> Result<Self> {
        if (polarization.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("polarization", "must be a unit vector"));
        }
        if polarization.dot(&alpha.vec()).abs() > 1e-12 {
            return Err(Error::invalid(
                "polarization",
                "must be orthogonal to the propagation direction",
            ));
        }
        Ok(Self { alpha, polarization, wave })
    }

    pub fn field_at(&self, x: &V3) -> CV3 {
        let phase = C64::new(0.0, self.wave.k * self.alpha.vec().dot(x)).exp();
        CV3::new(
            phase * self.polarization.x,
            phase * self.polarization.y,
            phase * self.polarization.z,
        )
    }
}

/// Two unit vectors orthogonal to each other and to `alpha`.
pub fn orthonormal_polarizations(alpha: &Direction) -> (V3, V3) {
    let a = alpha.vec();
    let seed = if a.x.abs() <= a.y.abs() && a.x.abs() <= a.z.abs() {
        V3::new(1.0, 0.0, 0.0)
    } else if a.y.abs() <= a.z.abs() {
        V3::new(0.0, 1.0, 0.0)
    } else {
        V3::new(0.0, 0.0, 1.0)
    };
    let e1 = (seed - a * seed.dot(&a)).normalize();
    let e2 = a.cross(&e1);
    (e1, e2)
}

/// Outgoing kernel e^{ik|x-y|}/(4 pi |x-y|).
pub fn green(x: &V3, y: &V3, k: f64) -> Result<C64> {
    let r = (x - y).norm();
    if r < 1e-14 {
        return Err(Error::SingularPoint(r));
    }
    Ok(C64::new(0.0, k * r).exp() / (4.0 * PI * r))
}

/// Gradient in x of the kernel: g (ik - 1/r) (x-y)/r.
pub fn grad_green(x: &V3, y: &V3, k: f64) -> Result<CV3> {
    let d = x - y;
    let r = d.norm();
    if r < 1e-14 {
        return Err(Error::SingularPoint(r));
    }
    let g = C64::new(0.0, k * r).exp() / (4.0 * PI * r);
    let fac = g * C64::new(-1.0 / r, k) / r;
    Ok(CV3::new(fac * d.x, fac * d.y, fac * d.z))
}

/// Precomputed per-cell data for applying T.
pub(crate) struct Kernel {
    pub centers: Vec<V3>,
    pub k: f64,
    pub h3: f64,
    pub p: Vec<C64>,
    pub q: Vec<CV3>,
    pub self_weight: C64,
}

impl Kernel {
    pub fn new(grid: &VolumeGrid, medium: &MediumSpec, wave: &WaveParams) -> Result<Self> {
        let mut p = Vec::with_capacity(grid.len());
        let mut q = Vec::with_capacity(grid.len());
        for x in &grid.cell_centers {
            p.push(eval_p(medium, wave, x));
            q.push(eval_q(medium, wave, x)?);
        }
        Ok(Self {
            centers: grid.cell_centers.clone(),
            k: wave.k,
            h3: grid.cell_volume,
            p,
            q,
            self_weight: self_cell_integral(grid.spacing, wave.k),
        })
    }

    /// (TE)(x_i) = sum_j w_ij p_j E_j + sum_j grad g(x_i, y_j) h^3 (q_j . E_j),
    /// with w_ii the singular self-cell weight and the gradient self-term zero.
    pub fn apply(&self, e: &[CV3]) -> Vec<CV3> {
        let n = self.centers.len();
        let pe: Vec<CV3> = (0..n).map(|j| e[j] * self.p[j]).collect();
        let qe: Vec<C64> = (0..n).map(|j| self.q[j].dot(&e[j])).collect();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = self.centers[i];
                let mut acc = pe[i] * self.self_weight;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let d = xi - self.centers[j];
                    let r = d.norm();
                    let (s, c) = (self.k * r).sin_cos();
                    let g = C64::new(c, s) * (self.h3 / (4.0 * PI * r));
                    acc += pe[j] * g;
                    let fac = g * C64::new(-1.0 / r, self.k) * (qe[j] / r);
                    acc += CV3::new(fac * d.x, fac * d.y, fac * d.z);
                }
                acc
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub tol_dense: f64,
    pub tol_iterative: f64,
    pub max_iterations: usize,
    pub dense_cell_limit: usize,
    pub mode: SolverMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_dense: 1e-10,
            tol_iterative: 1e-8,
            max_iterations: 500,
            dense_cell_limit: 4096,
            mode: SolverMode::Auto,
        }
    }
}

/// Total field on the grid for one incident wave, with the contrast data the
/// far-field and off-grid evaluations need.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub grid: VolumeGrid,
    pub incident: IncidentWave,
    pub e: Vec<CV3>,
    pub solver_residual: f64,
    pub p_cells: Vec<C64>,
    pub q_cells: Vec<CV3>,
}

fn flatten(e: &[CV3]) -> Vec<C64> {
    let mut out = Vec::with_capacity(3 * e.len());
    for v in e {
        out.extend_from_slice(&[v.x, v.y, v.z]);
    }
    out
}

fn unflatten(x: &[C64]) -> Vec<CV3> {
    x.chunks_exact(3).map(|c| CV3::new(c[0], c[1], c[2])).collect()
}

fn vec_norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn field_norm(e: &[CV3]) -> f64 {
    e.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
}

fn assemble_dense(kernel: &Kernel) -> Array2<C64> {
    let n = kernel.centers.len();
    let dim = 3 * n;
    let mut data = vec![C64::new(0.0, 0.0); dim * dim];
    data.par_chunks_mut(3 * dim).enumerate().for_each(|(i, rows)| {
        let xi = kernel.centers[i];
        for j in 0..n {
            if j == i {
                let d = kernel.self_weight * kernel.p[i];
                for r in 0..3 {
                    rows[r * dim + 3 * i + r] = -d;
                }
                continue;
            }
            let d = xi - kernel.centers[j];
            let r = d.norm();
            let (s, c) = (kernel.k * r).sin_cos();
            let g = C64::new(c, s) * (kernel.h3 / (4.0 * PI * r));
            let gp = g * kernel.p[j];
            let fac = g * C64::new(-1.0 / r, kernel.k) / r;
            let gg = [fac * d.x, fac * d.y, fac * d.z];
            for row in 0..3 {
                for col in 0..3 {
                    let mut v = gg[row] * kernel.q[j][col];
                    if row == col {
                        v += gp;
                    }
                    rows[row * dim + 3 * j + col] = -v;
                }
            }
        }
        for r in 0..3 {
            rows[r * dim + 3 * i + r] += 1.0;
        }
    });
    Array2::from_shape_vec((dim, dim), data).expect("shape matches construction")
}

/// Dense factorization of I - T, reusable across incident waves on the same
/// grid, medium, and wavenumber.
pub struct ForwardFactorization {
    kernel: Kernel,
    grid: VolumeGrid,
    wave: WaveParams,
    lu: LUFactorized<ndarray::OwnedRepr<C64>>,
    tol: f64,
}

pub fn factorize_forward(
    grid: &VolumeGrid,
    medium: &MediumSpec,
    wave: &WaveParams,
    config: &SolverConfig,
) -> Result<ForwardFactorization> {
    validate_medium(medium, wave, grid)?;
    if grid.is_empty() {
        return Err(Error::invalid("grid", "no cells"));
    }
    let kernel = Kernel::new(grid, medium, wave)?;
    let a = assemble_dense(&kernel);
    let lu = a
        .factorize_into()
        .map_err(|e| Error::SingularSystem(e.to_string()))?;
    Ok(ForwardFactorization {
        kernel,
        grid: grid.clone(),
        wave: *wave,
        lu,
        tol: config.tol_dense,
    })
}

impl ForwardFactorization {
    pub fn solve(&self, incident: &IncidentWave) -> Result<FieldSolution> {
        if (incident.wave.k - self.wave.k).abs() > 1e-12 * self.wave.k {
            return Err(Error::invalid("incident", "wavenumber differs from the factorized system"));
        }
        let e0: Vec<CV3> = self.grid.cell_centers.iter().map(|x| incident.field_at(x)).collect();
        let b = Array1::from_vec(flatten(&e0));
        let x = self
            .lu
            .solve_into(b)
            .map_err(|e| Error::SingularSystem(e.to_string()))?;
        let e = unflatten(x.as_slice().expect("contiguous"));
        self.package(incident, e0, e)
    }

    fn package(&self, incident: &IncidentWave, e0: Vec<CV3>, e: Vec<CV3>) -> Result<FieldSolution> {
        let te = self.kernel.apply(&e);
        let mut num = 0.0;
        for i in 0..e.len() {
            num += (e[i] - e0[i] - te[i]).norm_squared();
        }
        let residual = num.sqrt() / field_norm(&e0);
        if !(residual <= self.tol) {
            return Err(Error::NonConvergence { residual, iterations: 0 });
        }
        Ok(FieldSolution {
            grid: self.grid.clone(),
            incident: *incident,
            e,
            solver_residual: residual,
            p_cells: self.kernel.p.clone(),
            q_cells: self.kernel.q.clone(),
        })
    }
}

/// Restarted GMRES on the flattened system; returns (solution, relative
/// residual, iterations).
fn gmres<F>(
    apply: F,
    b: &[C64],
    tol: f64,
    max_iterations: usize,
    restart: usize,
) -> (Vec<C64>, f64, usize)
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let n = b.len();
    let bnorm = vec_norm(b);
    let mut x = vec![C64::new(0.0, 0.0); n];
    if bnorm == 0.0 {
        return (x, 0.0, 0);
    }
    let mut total_iters = 0;
    let mut final_res;
    'outer: loop {
        let ax = apply(&x);
        let mut r: Vec<C64> = (0..n).map(|i| b[i] - ax[i]).collect();
        let beta = vec_norm(&r);
        final_res = beta / bnorm;
        if final_res <= tol || total_iters >= max_iterations {
            break;
        }
        for z in r.iter_mut() {
            *z /= beta;
        }
        let m = restart.min(max_iterations - total_iters);
        let mut v: Vec<Vec<C64>> = vec![r];
        let mut h = vec![vec![C64::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![C64::new(1.0, 0.0); m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut cols = 0;
        for j in 0..m {
            total_iters += 1;
            let mut w = apply(&v[j]);
            for i in 0..=j {
                let hij: C64 = v[i].iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                h[i][j] = hij;
                for t in 0..n {
                    w[t] -= v[i][t] * hij;
                }
            }
            let wn = vec_norm(&w);
            h[j + 1][j] = C64::new(wn, 0.0);
            // previously computed rotations applied to the new column
            for i in 0..j {
                let hi = h[i][j];
                let hi1 = h[i + 1][j];
                h[i][j] = cs[i] * hi + sn[i] * hi1;
                h[i + 1][j] = -sn[i].conj() * hi + cs[i] * hi1;
            }
            let (c, s) = givens(h[j][j], h[j + 1][j]);
            cs[j] = c;
            sn[j] = s;
            h[j][j] = c * h[j][j] + s * h[j + 1][j];
            h[j + 1][j] = C64::new(0.0, 0.0);
            g[j + 1] = -s.conj() * g[j];
            g[j] = c * g[j];
            cols = j + 1;
            final_res = g[j + 1].norm() / bnorm;
            if wn < 1e-300 {
                break;
            }
            if final_res <= tol || total_iters >= max_iterations {
                break;
            }
            for z in w.iter_mut() {
                *z /= wn;
            }
            v.push(w);
        }
        // back substitution on the upper-triangular system
        let mut y = vec![C64::new(0.0, 0.0); cols];
        for i in (0..cols).rev() {
            let mut acc = g[i];
            for j in i + 1..cols {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for t in 0..n {
                x[t] += v[j][t] * yj;
            }
        }
        if final_res <= tol || total_iters >= max_iterations {
            let ax = apply(&x);
            let rl: Vec<C64> = (0..n).map(|i| b[i] - ax[i]).collect();
            final_res = vec_norm(&rl) / bnorm;
            if final_res <= tol || total_iters >= max_iterations {
                break 'outer;
            }
        }
    }
    (x, final_res, total_iters)
}

fn givens(a: C64, b: C64) -> (C64, C64) {
    if b.norm() == 0.0 {
        return (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    }
    if a.norm() == 0.0 {
        return (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    }
    let denom = (a.norm_sqr() + b.norm_sqr()).sqrt();
    let alpha = a / a.norm();
    (
        C64::new(a.norm() / denom, 0.0),
        alpha * b.conj() / denom,
    )
}

/// Solves (I - T) E = E0; dense factorization up to the configured cell limit,
/// matrix-free restarted GMRES beyond it.
pub fn solve_forward(
    grid: &VolumeGrid,
    medium: &MediumSpec,
    incident: &IncidentWave,
    config: &SolverConfig,
) -> Result<FieldSolution> {
    let dense = match config.mode {
        SolverMode::Dense => true,
        SolverMode::Iterative => false,
        SolverMode::Auto => grid.len() <= config.dense_cell_limit,
    };
    if dense {
        let fact = factorize_forward(grid, medium, &incident.wave, config)?;
        return fact.solve(incident);
    }
    validate_medium(medium, &incident.wave, grid)?;
    if grid.is_empty() {
        return Err(Error::invalid("grid", "no cells"));
    }
    let kernel = Kernel::new(grid, medium, &incident.wave)?;
    let e0: Vec<CV3> = grid.cell_centers.iter().map(|x| incident.field_at(x)).collect();
    let b = flatten(&e0);
    let apply = |x: &[C64]| {
        let e = unflatten(x);
        let te = kernel.apply(&e);
        let mut out = flatten(&e);
        let tf = flatten(&te);
        for i in 0..out.len() {
            out[i] -= tf[i];
        }
        out
    };
    let (x, residual, iterations) = gmres(apply, &b, config.tol_iterative, config.max_iterations, 60);
    if !(residual <= config.tol_iterative) {
        return Err(Error::NonConvergence { residual, iterations });
    }
    let e = unflatten(&x);
    Ok(FieldSolution {
        grid: grid.clone(),
        incident: *incident,
        e,
        solver_residual: residual,
        p_cells: kernel.p,
        q_cells: kernel.q,
    })
}

/// Applies the integral operator once; convenience wrapper over the kernel.
pub fn apply_t(grid: &VolumeGrid, medium: &MediumSpec, wave: &WaveParams, e: &[CV3]) -> Result<Vec<CV3>> {
    if e.len() != grid.len() {
        return Err(Error::invalid("field", "length does not match the grid"));
    }
    Ok(Kernel::new(grid, medium, wave)?.apply(e))
}

/// || div(K^2 E) || / (k ||K^2 E||) over interior cells, by second-order
/// central differences on the lattice.
pub fn divergence_diagnostic(field: &FieldSolution, medium: &MediumSpec) -> Result<f64> {
    let grid = &field.grid;
    let n = grid.n_per_axis;
    if n < 3 {
        return Err(Error::GridTooCoarse(n));
    }
    let wave = &field.incident.wave;
    let k2 = wave.k * wave.k;
    let w: Vec<CV3> = grid
        .cell_centers
        .iter()
        .zip(&field.e)
        .map(|(x, e)| *e * (eval_p(medium, wave, x) + k2))
        .collect();
    let inv2h = 1.0 / (2.0 * grid.spacing);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut interior = 0usize;
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            for l in 1..n - 1 {
                let Some(c) = grid.cell_at(i, j, l) else { continue };
                let neighbors = [
                    grid.cell_at(i + 1, j, l),
                    grid.cell_at(i - 1, j, l),
                    grid.cell_at(i, j + 1, l),
                    grid.cell_at(i, j - 1, l),
                    grid.cell_at(i, j, l + 1),
                    grid.cell_at(i, j, l - 1),
                ];
                let [Some(xp), Some(xm), Some(yp), Some(ym), Some(zp), Some(zm)] = neighbors
                else {
                    continue;
                };
                let div = (w[xp].x - w[xm].x + w[yp].y - w[ym].y + w[zp].z - w[zm].z) * inv2h;
                num += div.norm_sqr();
                den += w[c].norm_squared();
                interior += 1;
            }
        }
    }
    if interior == 0 {
        return Err(Error::GridTooCoarse(n));
    }
    Ok(num.sqrt() / (wave.k * den.sqrt()))
}

/// Scattered field at an exterior point: the integral representation summed
/// over grid cells (no singular terms since x is outside the domain).
pub fn scattered_field_at(field: &FieldSolution, x: &V3) -> Result<CV3> {
    let r = x.norm();
    if r <= field.grid.bounding_radius {
        return Err(Error::PointInsideDomain(r, field.grid.bounding_radius));
    }
    let k = field.incident.wave.k;
    let h3 = field.grid.cell_volume;
    let mut acc = CV3::zeros();
    for (j, y) in field.grid.cell_centers.iter().enumerate() {
        let d = x - y;
        let rr = d.norm();
        let (s, c) = (k * rr).sin_cos();
        let g = C64::new(c, s) * (h3 / (4.0 * PI * rr));
        acc += field.e[j] * (g * field.p_cells[j]);
        let qe = field.q_cells[j].dot(&field.e[j]);
        let fac = g * C64::new(-1.0 / rr, k) * (qe / rr);
        acc += CV3::new(fac * d.x, fac * d.y, fac * d.z);
    }
    Ok(acc)
}
