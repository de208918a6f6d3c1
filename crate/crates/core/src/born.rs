//! First-order (weak-scattering) data synthesis and measurement noise.

use crate::geometry::{Direction, SphereQuadrature, VolumeGrid};
use crate::medium::{MediumSpec, WaveParams, eval_p, eval_q};
use crate::{C64, CV3, Error, Result, V3};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// How a dataset was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    BornExact,
    FullSolver,
    Noisy,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::BornExact => "born",
            Provenance::FullSolver => "full",
            Provenance::Noisy => "noisy",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "born" => Ok(Provenance::BornExact),
            "full" => Ok(Provenance::FullSolver),
            "noisy" => Ok(Provenance::Noisy),
            other => Err(Error::invalid(
                "provenance",
                format!("unknown value {other:?}"),
            )),
        }
    }
}

/// Scalar scattering data f(beta, alpha) on a product of sphere quadratures.
#[derive(Debug, Clone)]
pub struct ScatteringDataSet {
    pub alpha_quadrature: SphereQuadrature,
    pub beta_quadrature: SphereQuadrature,
    /// f[(i, j)] is the sample for beta node i and alpha node j
    pub f: Array2<C64>,
    pub wave: WaveParams,
    pub noise_level: f64,
    pub seed: Option<u64>,
    pub provenance: Provenance,
    /// per-sample polarization pick (0 or 1) in row-major (beta, alpha) order,
    /// present when the data came from full forward solves
    pub polarization_choice: Option<Vec<u8>>,
}

impl ScatteringDataSet {
    pub fn n_alpha(&self) -> usize {
        self.alpha_quadrature.len()
    }

    pub fn n_beta(&self) -> usize {
        self.beta_quadrature.len()
    }

    /// quadrature-weighted L2 norm of f over all direction pairs
    pub fn f_norm(&self) -> f64 {
        let mut sum = 0.0;
        for (bi, wb) in self.beta_quadrature.weights.iter().enumerate() {
            for (ai, wa) in self.alpha_quadrature.weights.iter().enumerate() {
                sum += wb * wa * self.f[(bi, ai)].norm_sqr();
            }
        }
        sum.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.f.dim();
        if dim != (self.n_beta(), self.n_alpha()) {
            return Err(Error::InconsistentQuadratures(format!(
                "data matrix is {}x{} but quadratures give {}x{}",
                dim.0,
                dim.1,
                self.n_beta(),
                self.n_alpha()
            )));
        }
        if let Some(c) = &self.polarization_choice {
            if c.len() != self.n_beta() * self.n_alpha() {
                return Err(Error::InconsistentQuadratures(format!(
                    "polarization choices hold {} entries, expected {}",
                    c.len(),
                    self.n_beta() * self.n_alpha()
                )));
            }
        }
        Ok(())
    }
}

fn to_complex(v: &V3) -> CV3 {
    CV3::new(C64::new(v.x, 0.0), C64::new(v.y, 0.0), C64::new(v.z, 0.0))
}

/// First-order data value sum_j e^{ik(alpha-beta).y_j} p(y_j) h^3.
pub fn born_f(
    medium: &MediumSpec,
    wave: &WaveParams,
    alpha: &Direction,
    beta: &Direction,
    grid: &VolumeGrid,
) -> C64 {
    let d = alpha.vec() - beta.vec();
    let mut sum = C64::new(0.0, 0.0);
    for y in &grid.cell_centers {
        let p = eval_p(medium, wave, y);
        if p != C64::new(0.0, 0.0) {
            sum += C64::new(0.0, wave.k * d.dot(y)).exp() * p;
        }
    }
    sum * grid.cell_volume
}

/// First-order far-field amplitude, obtained by substituting the incident
/// plane wave for the internal field.
pub fn born_amplitude(
    medium: &MediumSpec,
    wave: &WaveParams,
    alpha: &Direction,
    beta: &Direction,
    polarization: &V3,
    grid: &VolumeGrid,
) -> Result<CV3> {
    let k = wave.k;
    let d = alpha.vec() - beta.vec();
    let pol = to_complex(polarization);
    let mut ps = C64::new(0.0, 0.0);
    let mut qs = C64::new(0.0, 0.0);
    for y in &grid.cell_centers {
        let phase = C64::new(0.0, k * d.dot(y)).exp();
        ps += phase * eval_p(medium, wave, y);
        qs += phase * eval_q(medium, wave, y)?.dot(&pol);
    }
    let scale = grid.cell_volume / (4.0 * PI);
    Ok(pol * (ps * scale) + to_complex(&beta.vec()) * (C64::new(0.0, k * scale) * qs))
}

/// Builds the full first-order dataset with the phase sums factorized:
/// f = B A where B[i][j] = e^{-ik beta_i . y_j} p_j h^3 and
/// A[j][l] = e^{ik alpha_l . y_j}.
pub fn synthesize_born(
    medium: &MediumSpec,
    wave: &WaveParams,
    alpha_quad: &SphereQuadrature,
    beta_quad: &SphereQuadrature,
    grid: &VolumeGrid,
) -> Result<ScatteringDataSet> {
    if alpha_quad.is_empty() || beta_quad.is_empty() {
        return Err(Error::InconsistentQuadratures(
            "direction quadratures must be non-empty".into(),
        ));
    }
    let k = wave.k;
    let n = grid.len();
    let h3 = grid.cell_volume;
    let p: Vec<C64> = grid
        .cell_centers
        .iter()
        .map(|y| eval_p(medium, wave, y))
        .collect();
    let mut bmat = Array2::from_elem((beta_quad.len(), n), C64::new(0.0, 0.0));
    for (bi, beta) in beta_quad.nodes.iter().enumerate() {
        let bv = beta.vec();
        for (j, y) in grid.cell_centers.iter().enumerate() {
            bmat[(bi, j)] = C64::new(0.0, -k * bv.dot(y)).exp() * (p[j] * h3);
        }
    }
    let mut amat = Array2::from_elem((n, alpha_quad.len()), C64::new(0.0, 0.0));
    for (ai, alpha) in alpha_quad.nodes.iter().enumerate() {
        let av = alpha.vec();
        for (j, y) in grid.cell_centers.iter().enumerate() {
            amat[(j, ai)] = C64::new(0.0, k * av.dot(y)).exp();
        }
    }
    let f = bmat.dot(&amat);
    Ok(ScatteringDataSet {
        alpha_quadrature: alpha_quad.clone(),
        beta_quadrature: beta_quad.clone(),
        f,
        wave: *wave,
        noise_level: 0.0,
        seed: None,
        provenance: Provenance::BornExact,
        polarization_choice: None,
    })
}

/// Perturbs f with complex Gaussian noise scaled so the quadrature-weighted
/// norm of the perturbation equals delta exactly. Entries are drawn in
/// row-major (beta, alpha) order, real part before imaginary part.
pub fn add_noise(data: &ScatteringDataSet, delta: f64, seed: u64) -> Result<ScatteringDataSet> {
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::invalid(
            "delta",
            "noise level must be positive and finite",
        ));
    }
    data.validate()?;
    let (nb, na) = data.f.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut noise = Array2::from_elem((nb, na), C64::new(0.0, 0.0));
    for bi in 0..nb {
        for ai in 0..na {
            let re: f64 = normal.sample(&mut rng);
            let im: f64 = normal.sample(&mut rng);
            noise[(bi, ai)] = C64::new(re, im);
        }
    }
    let mut norm2 = 0.0;
    for bi in 0..nb {
        for ai in 0..na {
            norm2 += data.beta_quadrature.weights[bi]
                * data.alpha_quadrature.weights[ai]
                * noise[(bi, ai)].norm_sqr();
        }
    }
    if norm2 == 0.0 {
        return Err(Error::invalid("delta", "degenerate noise draw"));
    }
    let scale = C64::new(delta / norm2.sqrt(), 0.0);
    let mut out = data.clone();
    for bi in 0..nb {
        for ai in 0..na {
            out.f[(bi, ai)] += noise[(bi, ai)] * scale;
        }
    }
    out.noise_level = delta;
    out.seed = Some(seed);
    out.provenance = Provenance::Noisy;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_sphere_quadrature, build_volume_grid};
    use crate::medium::Bump;
    use crate::oracle::oracle_born_f_radial;

    fn wave(k: f64) -> WaveParams {
        WaveParams::from_k(k).unwrap()
    }

    fn zhat() -> Direction {
        Direction::new(V3::new(0.0, 0.0, 1.0)).unwrap()
    }

    fn xhat() -> Direction {
        Direction::new(V3::new(1.0, 0.0, 0.0)).unwrap()
    }

    #[test]
    fn born_f_matches_radial_oracle_under_refinement() {
        let w = wave(2.0);
        let c = C64::new(0.1, 0.02);
        let medium = MediumSpec::single(V3::zeros(), 0.8, c, 3, 1.0).unwrap();
        let bump = Bump { center: V3::zeros(), radius: 0.8, amplitude: c, power: 3 };
        let xi = w.k * (zhat().vec() - xhat().vec()).norm();
        let exact = oracle_born_f_radial(&bump, w.k, xi);
        let scale = oracle_born_f_radial(&bump, w.k, 0.0).norm();
        let err = |n: usize| {
            let grid = build_volume_grid(1.0, n);
            (born_f(&medium, &w, &zhat(), &xhat(), &grid) - exact).norm()
        };
        let e10 = err(10);
        let e20 = err(20);
        assert!(e20 < e10 / 3.0, "e10={e10} e20={e20}");
        assert!(e20 < 5e-3 * scale, "e20={e20} scale={scale}");
    }

    #[test]
    fn born_f_carries_center_phase() {
        let w = wave(2.0);
        let c = C64::new(0.05, 0.0);
        let center = V3::new(0.2, -0.1, 0.15);
        let medium = MediumSpec::single(center, 0.5, c, 3, 1.0).unwrap();
        let bump = Bump { center: V3::zeros(), radius: 0.5, amplitude: c, power: 3 };
        let d = zhat().vec() - xhat().vec();
        let xi = w.k * d.norm();
        let exact = oracle_born_f_radial(&bump, w.k, xi) * C64::new(0.0, w.k * d.dot(&center)).exp();
        let scale = oracle_born_f_radial(&bump, w.k, 0.0).norm();
        let err = |n: usize| {
            let grid = build_volume_grid(1.0, n);
            (born_f(&medium, &w, &zhat(), &xhat(), &grid) - exact).norm()
        };
        let e10 = err(10);
        let e20 = err(20);
        assert!(e20 < e10 / 3.0, "e10={e10} e20={e20}");
        assert!(e20 < 5e-3 * scale, "e20={e20} scale={scale}");
    }

    #[test]
    fn synthesize_matches_pointwise_born_f() {
        let w = wave(1.5);
        let medium =
            MediumSpec::single(V3::new(0.1, 0.0, -0.1), 0.6, C64::new(0.2, 0.05), 4, 1.0).unwrap();
        let grid = build_volume_grid(1.0, 5);
        let aq = build_sphere_quadrature(2, 3);
        let bq = build_sphere_quadrature(2, 2);
        let data = synthesize_born(&medium, &w, &aq, &bq, &grid).unwrap();
        data.validate().unwrap();
        assert_eq!(data.provenance, Provenance::BornExact);
        let mut fmax: f64 = 0.0;
        for v in data.f.iter() {
            fmax = fmax.max(v.norm());
        }
        for (bi, beta) in bq.nodes.iter().enumerate() {
            for (ai, alpha) in aq.nodes.iter().enumerate() {
                let direct = born_f(&medium, &w, alpha, beta, &grid);
                assert!((data.f[(bi, ai)] - direct).norm() <= 1e-12 * fmax);
            }
        }
    }

    #[test]
    fn noise_norm_is_exact_and_reproducible() {
        let w = wave(2.0);
        let medium = MediumSpec::single(V3::zeros(), 0.7, C64::new(0.1, 0.0), 3, 1.0).unwrap();
        let grid = build_volume_grid(1.0, 4);
        let aq = build_sphere_quadrature(2, 2);
        let bq = build_sphere_quadrature(2, 2);
        let clean = synthesize_born(&medium, &w, &aq, &bq, &grid).unwrap();
        let delta = 1e-3;
        let noisy = add_noise(&clean, delta, 7).unwrap();
        let mut norm2 = 0.0;
        for (bi, wb) in bq.weights.iter().enumerate() {
            for (ai, wa) in aq.weights.iter().enumerate() {
                norm2 += wb * wa * (noisy.f[(bi, ai)] - clean.f[(bi, ai)]).norm_sqr();
            }
        }
        assert!((norm2.sqrt() - delta).abs() <= 1e-15 * delta);
        assert_eq!(noisy.provenance, Provenance::Noisy);
        assert_eq!(noisy.noise_level, delta);
        assert_eq!(noisy.seed, Some(7));

        let again = add_noise(&clean, delta, 7).unwrap();
        assert_eq!(noisy.f, again.f);
        let other = add_noise(&clean, delta, 8).unwrap();
        assert!(noisy.f != other.f);
    }

    #[test]
    fn noise_rejects_nonpositive_delta() {
        let w = wave(2.0);
        let medium = MediumSpec::zero(1.0);
        let grid = build_volume_grid(1.0, 3);
        let q = build_sphere_quadrature(1, 2);
        let clean = synthesize_born(&medium, &w, &q, &q, &grid).unwrap();
        assert!(add_noise(&clean, 0.0, 1).is_err());
        assert!(add_noise(&clean, -1.0, 1).is_err());
        assert!(add_noise(&clean, f64::NAN, 1).is_err());
    }

    #[test]
    fn f_norm_uses_quadrature_weights() {
        let w = wave(2.0);
        let medium = MediumSpec::zero(1.0);
        let grid = build_volume_grid(1.0, 3);
        let aq = build_sphere_quadrature(3, 4);
        let bq = build_sphere_quadrature(2, 5);
        let mut data = synthesize_born(&medium, &w, &aq, &bq, &grid).unwrap();
        assert_eq!(data.f_norm(), 0.0);
        data.f.fill(C64::new(1.0, 0.0));
        assert!((data.f_norm() - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn validate_catches_shape_mismatch() {
        let w = wave(2.0);
        let medium = MediumSpec::zero(1.0);
        let grid = build_volume_grid(1.0, 3);
        let q = build_sphere_quadrature(2, 2);
        let mut data = synthesize_born(&medium, &w, &q, &q, &grid).unwrap();
        data.f = Array2::from_elem((2, 3), C64::new(0.0, 0.0));
        assert!(matches!(
            data.validate(),
            Err(Error::InconsistentQuadratures(_))
        ));
        let mut data2 = synthesize_born(&medium, &w, &q, &q, &grid).unwrap();
        data2.polarization_choice = Some(vec![0; 3]);
        assert!(data2.validate().is_err());
    }

    #[test]
    fn provenance_round_trips_through_strings() {
        for p in [Provenance::BornExact, Provenance::FullSolver, Provenance::Noisy] {
            assert_eq!(p.to_string().parse::<Provenance>().unwrap(), p);
        }
        assert!("bogus".parse::<Provenance>().is_err());
    }
}
