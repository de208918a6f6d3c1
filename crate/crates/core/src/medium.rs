//! Analytic complex-permittivity models: smooth radial bumps supplying the
//! contrast p(x), the logarithmic-derivative coefficient q(x), and eps'(x).

use crate::geometry::VolumeGrid;
use crate::{C64, CV3, Error, Result, V3};

/// Background wave parameters with k^2 = omega^2 eps0 mu0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveParams {
    pub k: f64,
    pub omega: f64,
    pub eps0: f64,
    pub mu0: f64,
}

impl WaveParams {
    pub fn new(k: f64, omega: f64, eps0: f64, mu0: f64) -> Result<Self> {
        if k <= 0.0 || omega <= 0.0 || eps0 <= 0.0 || mu0 <= 0.0 {
            return Err(Error::invalid("wave", "k, omega, eps0, mu0 must be positive"));
        }
        let lhs = k * k;
        let rhs = omega * omega * eps0 * mu0;
        if (lhs - rhs).abs() > 1e-12 * lhs {
            return Err(Error::invalid(
                "wave",
                format!("k^2 = {lhs:.15e} but omega^2 eps0 mu0 = {rhs:.15e}"),
            ));
        }
        Ok(Self { k, omega, eps0, mu0 })
    }

    /// Unit background: eps0 = mu0 = 1, omega = k.
    pub fn from_k(k: f64) -> Result<Self> {
        Self::new(k, k, 1.0, 1.0)
    }
}

/// One smooth radial bump: contributes k^2 c (1 - |x-center|^2/rho^2)^m inside
/// its ball and zero outside. m >= 3 keeps p, grad p zero on the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: V3,
    pub radius: f64,
    pub amplitude: C64,
    pub power: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediumSpec {
    pub bumps: Vec<Bump>,
    pub domain_radius: f64,
}

impl MediumSpec {
    pub fn new(bumps: Vec<Bump>, domain_radius: f64) -> Result<Self> {
        if domain_radius <= 0.0 {
            return Err(Error::invalid("domain_radius", "must be positive"));
        }
        for (i, b) in bumps.iter().enumerate() {
            if b.radius <= 0.0 {
                return Err(Error::invalid(
                    &format!("bump[{i}].radius"),
                    "must be positive",
                ));
            }
            if b.power < 3 {
                return Err(Error::invalid(
                    &format!("bump[{i}].power"),
                    "must be at least 3",
                ));
            }
            if b.amplitude.im < 0.0 {
                return Err(Error::NegativeAbsorption(b.amplitude.im));
            }
            if b.center.norm() + b.radius > domain_radius + 1e-12 {
                return Err(Error::invalid(
                    &format!("bump[{i}]"),
                    format!(
                        "ball of radius {} at distance {} exceeds domain radius {domain_radius}",
                        b.radius,
                        b.center.norm()
                    ),
                ));
            }
        }
        Ok(Self { bumps, domain_radius })
    }

    pub fn zero(domain_radius: f64) -> Self {
        Self { bumps: Vec::new(), domain_radius }
    }

    pub fn single(center: V3, radius: f64, amplitude: C64, power: u32, domain_radius: f64) -> Result<Self> {
        Self::new(vec![Bump { center, radius, amplitude, power }], domain_radius)
    }

    /// Smallest radius of an origin-centered ball containing every bump.
    pub fn support_radius(&self) -> f64 {
        self.bumps
            .iter()
            .map(|b| b.center.norm() + b.radius)
            .fold(0.0, f64::max)
    }
}

/// Contrast p(x) = K^2(x) - k^2, zero outside the bumps.
pub fn eval_p(spec: &MediumSpec, wave: &WaveParams, x: &V3) -> C64 {
    let k2 = wave.k * wave.k;
    let mut p = C64::new(0.0, 0.0);
    for b in &spec.bumps {
        let r2 = (x - b.center).norm_squared();
        let rho2 = b.radius * b.radius;
        if r2 < rho2 {
            p += b.amplitude * k2 * (1.0 - r2 / rho2).powi(b.power as i32);
        }
    }
    p
}

/// Analytic gradient of p.
pub fn eval_grad_p(spec: &MediumSpec, wave: &WaveParams, x: &V3) -> CV3 {
    let k2 = wave.k * wave.k;
    let mut g = CV3::zeros();
    for b in &spec.bumps {
        let d = x - b.center;
        let r2 = d.norm_squared();
        let rho2 = b.radius * b.radius;
        if r2 < rho2 {
            let scale = b.amplitude
                * (k2 * b.power as f64 * (1.0 - r2 / rho2).powi(b.power as i32 - 1) * (-2.0 / rho2));
            g += CV3::new(scale * d.x, scale * d.y, scale * d.z);
        }
    }
    g
}

/// q(x) = grad K^2 / K^2 = grad p / (k^2 + p), zero outside the bumps.
pub fn eval_q(spec: &MediumSpec, wave: &WaveParams, x: &V3) -> Result<CV3> {
    let k2 = wave.k * wave.k;
    let kk = k2 + eval_p(spec, wave, x);
    if kk.norm() < 1e-12 * k2 {
        return Err(Error::DegenerateMedium { value: kk.norm(), x: x.x, y: x.y, z: x.z });
    }
    Ok(eval_grad_p(spec, wave, x) / kk)
}

/// eps'(x) = (k^2 + p)/(omega^2 mu0).
pub fn p_to_eps(p: C64, wave: &WaveParams) -> C64 {
    (p + wave.k * wave.k) / (wave.omega * wave.omega * wave.mu0)
}

/// Inverse of [`p_to_eps`].
pub fn eps_to_p(eps: C64, wave: &WaveParams) -> C64 {
    eps * (wave.omega * wave.omega * wave.mu0) - wave.k * wave.k
}

#[derive(Debug, Clone, Copy)]
pub struct MediumReport {
    /// min over cells of |k^2 + p|.
    pub min_abs_k2_plus_p: f64,
    /// min over cells of Im p.
    pub min_im_p: f64,
    /// max over cells of |p| / k^2, the weak-contrast indicator.
    pub max_rel_contrast: f64,
}

/// p sampled at every cell center of the grid.
pub fn p_field(spec: &MediumSpec, wave: &WaveParams, grid: &VolumeGrid) -> Vec<C64> {
    grid.cell_centers.iter().map(|x| eval_p(spec, wave, x)).collect()
}

/// Samples p on the grid; rejects media that cancel the background or absorb
/// negatively anywhere.
pub fn validate_medium(spec: &MediumSpec, wave: &WaveParams, grid: &VolumeGrid) -> Result<MediumReport> {
    for (i, b) in spec.bumps.iter().enumerate() {
        if b.amplitude.im < 0.0 {
            return Err(Error::NegativeAbsorption(b.amplitude.im));
        }
        if b.power < 3 {
            return Err(Error::invalid(&format!("bump[{i}].power"), "must be at least 3"));
        }
    }
    let k2 = wave.k * wave.k;
    let mut report = MediumReport {
        min_abs_k2_plus_p: f64::INFINITY,
        min_im_p: f64::INFINITY,
        max_rel_contrast: 0.0,
    };
    for x in &grid.cell_centers {
        let p = eval_p(spec, wave, x);
        let kk = (p + k2).norm();
        if kk < 1e-12 * k2 {
            return Err(Error::DegenerateMedium { value: kk, x: x.x, y: x.y, z: x.z });
        }
        report.min_abs_k2_plus_p = report.min_abs_k2_plus_p.min(kk);
        report.min_im_p = report.min_im_p.min(p.im);
        report.max_rel_contrast = report.max_rel_contrast.max(p.norm() / k2);
    }
    if report.min_im_p < -1e-14 {
        return Err(Error::NegativeAbsorption(report.min_im_p));
    }
    Ok(report)
}
