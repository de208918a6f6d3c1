//! Slow reference implementations for tests: adaptive quadratures and naive
//! loops, kept free of the production fast paths so the two can be compared.

use crate::born::ScatteringDataSet;
use crate::geometry::VolumeGrid;
use crate::medium::{Bump, MediumSpec, WaveParams};
use crate::{C64, CV3, Error, Result, V3};
use std::f64::consts::PI;

fn simpson(a: f64, b: f64, fa: C64, fm: C64, fb: C64) -> C64 {
    (fa + fm * 4.0 + fb) * ((b - a) / 6.0)
}

fn adapt<F: Fn(f64) -> C64>(
    f: &F,
    a: f64,
    b: f64,
    fa: C64,
    fm: C64,
    fb: C64,
    whole: C64,
    tol: f64,
    depth: u32,
) -> C64 {
    let m = 0.5 * (a + b);
    let flm = f(0.5 * (a + m));
    let frm = f(0.5 * (m + b));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

fn integrate<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, tol: f64) -> C64 {
    if a == b {
        return C64::new(0.0, 0.0);
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adapt(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// int_0^a r e^{ikr} dr with a the volume-equivalent ball radius of a cell
/// of spacing h, by adaptive quadrature.
pub fn oracle_self_cell(h: f64, k: f64) -> C64 {
    let a = (3.0 * h * h * h / (4.0 * PI)).cbrt();
    integrate(&|r| C64::new(0.0, k * r).exp() * r, 0.0, a, 1e-14 * a * a)
}

fn oracle_p(medium: &MediumSpec, k: f64, x: &V3) -> C64 {
    let mut p = C64::new(0.0, 0.0);
    for b in &medium.bumps {
        let u = (x - b.center).norm_squared() / (b.radius * b.radius);
        if u < 1.0 {
            p += b.amplitude * (k * k) * (1.0 - u).powi(b.power as i32);
        }
    }
    p
}

fn oracle_grad_p(medium: &MediumSpec, k: f64, x: &V3) -> CV3 {
    let mut g = CV3::zeros();
    for b in &medium.bumps {
        let d = x - b.center;
        let u = d.norm_squared() / (b.radius * b.radius);
        if u < 1.0 {
            let s = b.amplitude
                * (-2.0 * k * k * b.power as f64 * (1.0 - u).powi(b.power as i32 - 1)
                    / (b.radius * b.radius));
            g += CV3::new(s * d.x, s * d.y, s * d.z);
        }
    }
    g
}

/// Naive direct evaluation of E -> TE, quadratic in the number of cells.
pub fn oracle_apply_t(
    grid: &VolumeGrid,
    medium: &MediumSpec,
    wave: &WaveParams,
    e: &[CV3],
) -> Result<Vec<CV3>> {
    if grid.len() > 512 {
        return Err(Error::InstanceTooLarge(format!(
            "reference operator handles at most 512 cells, got {}",
            grid.len()
        )));
    }
    if e.len() != grid.len() {
        return Err(Error::invalid("e", "field length must match the grid"));
    }
    let k = wave.k;
    let k2 = k * k;
    let h3 = grid.cell_volume;
    let self_w = oracle_self_cell(grid.spacing, k);
    let mut out = vec![CV3::zeros(); grid.len()];
    for (i, x) in grid.cell_centers.iter().enumerate() {
        let mut acc = CV3::zeros();
        for (j, y) in grid.cell_centers.iter().enumerate() {
            let p = oracle_p(medium, k, y);
            let denom = p + k2;
            if denom.norm() < 1e-12 * k2 {
                return Err(Error::DegenerateMedium {
                    value: denom.norm(),
                    x: y.x,
                    y: y.y,
                    z: y.z,
                });
            }
            if i == j {
                // the gradient term integrates to zero over the centered cell
                acc += e[j] * (self_w * p);
                continue;
            }
            let d = x - y;
            let r = d.norm();
            let g = C64::new(0.0, k * r).exp() / (4.0 * PI * r);
            acc += e[j] * (g * h3 * p);
            let gp = oracle_grad_p(medium, k, y);
            let q = CV3::new(gp.x / denom, gp.y / denom, gp.z / denom);
            let fac = g * C64::new(-1.0 / r, k) / r * h3 * q.dot(&e[j]);
            acc += CV3::new(fac * d.x, fac * d.y, fac * d.z);
        }
        out[i] = acc;
    }
    Ok(out)
}

/// 4pi int_0^rho r^2 p(r) sinc(xi r) dr for a centered radial bump profile,
/// by adaptive quadrature. The bump's center field is ignored.
pub fn oracle_born_f_radial(bump: &Bump, k: f64, xi: f64) -> C64 {
    let rho = bump.radius;
    let amp = bump.amplitude * (k * k);
    let m = bump.power as i32;
    let tol = 1e-12 * amp.norm().max(1e-3) * rho * rho * rho;
    integrate(
        &|r| {
            let u = 1.0 - (r / rho) * (r / rho);
            let zr = xi * r;
            let s = if zr.abs() < 1e-8 { 1.0 - zr * zr / 6.0 } else { zr.sin() / zr };
            amp * (4.0 * PI * r * r * u.powi(m) * s)
        },
        0.0,
        rho,
        tol,
    )
}

fn oracle_delta(r: f64, big_r: f64, k: f64, n: usize) -> f64 {
    if !(0.0..=2.0 * big_r).contains(&r) {
        return 0.0;
    }
    let m = 2 * n as i32 + 3;
    let b = 2.0 * k * r / f64::from(m);
    let base = if b.abs() < 1e-6 {
        1.0 - b * b / 10.0 + b.powi(4) / 280.0
    } else {
        3.0 * (b.sin() - b * b.cos()) / (b * b * b)
    };
    (1.0 - r * r / (4.0 * big_r * big_r)).powi(n as i32)
        * (n as f64 / (4.0 * PI * big_r * big_r)).powf(1.5)
        * base.powi(m)
}

/// Volume integral of the mollifier against a plane wave along e3 over the
/// ball |x| <= 2R, in spherical coordinates with the flat azimuth integrated
/// analytically and the rest by nested adaptive quadrature.
pub fn oracle_a_n_3d(z: f64, big_r: f64, k: f64, n: usize) -> C64 {
    let f = |r: f64| {
        let d = oracle_delta(r, big_r, k, n);
        if d == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let polar = integrate(&|t| C64::new(0.0, -z * r * t).exp(), -1.0, 1.0, 1e-13);
        polar * (2.0 * PI * r * r * d)
    };
    integrate(&f, 0.0, 2.0 * big_r, 1e-11)
}

fn oracle_a(z: f64, big_r: f64, k: f64, n: usize) -> f64 {
    integrate(
        &|r| {
            let zr = z * r;
            let s = if zr.abs() < 1e-8 { 1.0 - zr * zr / 6.0 } else { zr.sin() / zr };
            C64::new(4.0 * PI * r * r * oracle_delta(r, big_r, k, n) * s, 0.0)
        },
        0.0,
        2.0 * big_r,
        1e-13,
    )
    .re
}

fn oracle_h(z: f64, big_r: f64, k: f64, n: usize) -> f64 {
    let a0 = oracle_a(0.0, big_r, k, n);
    let a = oracle_a(z, big_r, k, n);
    z.abs() * k * k / (16.0 * PI.powi(4)) * (1.0 - (1.0 - a / a0).powi(2 * n as i32 + 3))
}

/// Naive reconstruction: for every direction pair and every point the weight
/// is recomputed from scratch by adaptive quadrature.
pub fn oracle_reconstruct(
    data: &ScatteringDataSet,
    points: &[V3],
    r_ball: f64,
    n: usize,
) -> Result<Vec<C64>> {
    data.validate()?;
    let pairs = data.n_alpha() * data.n_beta();
    if pairs > 1000 {
        return Err(Error::InstanceTooLarge(format!(
            "reference inversion handles at most 1000 direction pairs, got {pairs}"
        )));
    }
    if points.len() > 1000 {
        return Err(Error::InstanceTooLarge(format!(
            "reference inversion handles at most 1000 evaluation points, got {}",
            points.len()
        )));
    }
    let k = data.wave.k;
    let mut out = vec![C64::new(0.0, 0.0); points.len()];
    for (pi, x) in points.iter().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (bi, beta) in data.beta_quadrature.nodes.iter().enumerate() {
            for (ai, alpha) in data.alpha_quadrature.nodes.iter().enumerate() {
                let d = alpha.vec() - beta.vec();
                let h = oracle_h(k * d.norm(), r_ball, k, n);
                let w = data.beta_quadrature.weights[bi] * data.alpha_quadrature.weights[ai];
                acc += data.f[(bi, ai)] * C64::new(0.0, k * d.dot(x)).exp() * (h * w);
            }
        }
        out[pi] = acc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrator_reproduces_closed_forms() {
        // int_0^b r e^{ikr} dr = (e^{ikb}(1 - ikb) - 1)/k^2
        let (b, k) = (0.7, 3.0);
        let got = integrate(&|r| C64::new(0.0, k * r).exp() * r, 0.0, b, 1e-14);
        let exact = (C64::new(0.0, k * b).exp() * C64::new(1.0, -k * b) - 1.0) / (k * k);
        assert!((got - exact).norm() < 1e-13);

        let got = integrate(&|r| C64::new(r * r, 0.0), 0.0, 2.0, 1e-15);
        assert!((got - C64::new(8.0 / 3.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn reference_operator_rejects_large_grids() {
        let grid = crate::geometry::build_volume_grid(1.0, 12);
        assert!(grid.len() > 512);
        let medium = MediumSpec::zero(1.0);
        let w = WaveParams::from_k(1.0).unwrap();
        let e = vec![CV3::zeros(); grid.len()];
        assert!(matches!(
            oracle_apply_t(&grid, &medium, &w, &e),
            Err(Error::InstanceTooLarge(_))
        ));
    }
}
