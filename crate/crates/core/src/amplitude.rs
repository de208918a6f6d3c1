//! Far-field scattering amplitude, the cross-product projection extracting the
//! scalar data function f, and dataset construction from full forward solves.

use crate::born::{Provenance, ScatteringDataSet};
use crate::forward::{
    FieldSolution, SolverConfig, factorize_forward, orthonormal_polarizations, scattered_field_at,
};
use crate::geometry::{Direction, SphereQuadrature, VolumeGrid};
use crate::medium::{MediumSpec, WaveParams};
use crate::{C64, CV3, Error, Result, V3};
use ndarray::Array2;
use std::f64::consts::PI;

pub const SIN2_THETA_MIN: f64 = 0.4;

#[derive(Debug, Clone, Copy)]
pub struct AmplitudeSample {
    pub alpha: Direction,
    pub beta: Direction,
    pub polarization: V3,
    pub a: CV3,
}

fn to_complex(v: &V3) -> CV3 {
    CV3::new(C64::new(v.x, 0.0), C64::new(v.y, 0.0), C64::new(v.z, 0.0))
}

/// A(beta) = h^3/(4 pi) sum_j e^{-ik beta . y_j} [ p_j E_j + ik beta (q_j . E_j) ].
pub fn scattering_amplitude(field: &FieldSolution, beta: &Direction) -> CV3 {
    let k = field.incident.wave.k;
    let b = beta.vec();
    let mut p_term = CV3::zeros();
    let mut q_term = C64::new(0.0, 0.0);
    for (j, y) in field.grid.cell_centers.iter().enumerate() {
        let phase = C64::new(0.0, -k * b.dot(y)).exp();
        p_term += field.e[j] * (phase * field.p_cells[j]);
        q_term += phase * field.q_cells[j].dot(&field.e[j]);
    }
    let scale = field.grid.cell_volume / (4.0 * PI);
    p_term * C64::new(scale, 0.0) + to_complex(&b) * (C64::new(0.0, k * scale) * q_term)
}

/// f = 4 pi ([beta, A] . [beta, pol]) / sin^2(theta), bilinear dot, with theta
/// the angle between beta and the (real) polarization.
pub fn project_f(a: &CV3, beta: &Direction, polarization: &V3) -> Result<C64> {
    let b = beta.vec();
    let cos_theta = b.dot(polarization);
    let sin2 = 1.0 - cos_theta * cos_theta;
    if sin2 < SIN2_THETA_MIN {
        return Err(Error::PolarizationDegenerate(sin2, SIN2_THETA_MIN));
    }
    let bc = to_complex(&b);
    let cross_a = bc.cross(a);
    let cross_e = to_complex(&b.cross(polarization));
    Ok(cross_a.dot(&cross_e) * (4.0 * PI / sin2))
}

/// Relative deviation of the scattered field at radius r along beta from the
/// leading far-field term (e^{ikr}/r) A.
pub fn far_field_residual(field: &FieldSolution, beta: &Direction, r: f64) -> Result<f64> {
    if r < 10.0 * field.grid.bounding_radius {
        return Err(Error::invalid(
            "r",
            "far-field comparison requires r >= 10 x grid bounding radius",
        ));
    }
    let k = field.incident.wave.k;
    let x = beta.vec() * r;
    let v = scattered_field_at(field, &x)?;
    let a = scattering_amplitude(field, beta);
    let ff = a * (C64::new(0.0, k * r).exp() / r);
    let denom = ff.norm();
    if denom == 0.0 {
        return Err(Error::ZeroAmplitude);
    }
    Ok((v - ff).norm() / denom)
}

/// Builds f(beta, alpha) from full forward solves: the system is factorized
/// once, each alpha node is solved with two orthonormal polarizations, and for
/// each (alpha, beta) pair the polarization with the larger |[beta, pol]| is
/// projected (this keeps sin^2(theta) >= 1/2). Choices are recorded per sample
/// as 0/1 in row-major (beta, alpha) order.
pub fn build_dataset(
    medium: &MediumSpec,
    wave: &WaveParams,
    alpha_quad: &SphereQuadrature,
    beta_quad: &SphereQuadrature,
    grid: &VolumeGrid,
    config: &SolverConfig,
) -> Result<ScatteringDataSet> {
    let n_alpha = alpha_quad.len();
    let n_beta = beta_quad.len();
    let dense = match config.mode {
        crate::forward::SolverMode::Dense => true,
        crate::forward::SolverMode::Iterative => false,
        crate::forward::SolverMode::Auto => grid.len() <= config.dense_cell_limit,
    };
    let fact = if dense {
        Some(factorize_forward(grid, medium, wave, config)?)
    } else {
        None
    };
    // phases e^{-ik beta . y_j}, reused across alpha solves
    let phases: Vec<Vec<C64>> = beta_quad
        .nodes
        .iter()
        .map(|b| {
            let bv = b.vec();
            grid.cell_centers
                .iter()
                .map(|y| C64::new(0.0, -wave.k * bv.dot(y)).exp())
                .collect()
        })
        .collect();
    let mut f = Array2::from_elem((n_beta, n_alpha), C64::new(0.0, 0.0));
    let mut choices = vec![0u8; n_beta * n_alpha];
    let scale = grid.cell_volume / (4.0 * PI);
    for (ai, alpha) in alpha_quad.nodes.iter().enumerate() {
        let (e1, e2) = orthonormal_polarizations(alpha);
        let pols = [e1, e2];
        let mut amplitudes: Vec<[CV3; 2]> = vec![[CV3::zeros(), CV3::zeros()]; n_beta];
        for (which, pol) in pols.iter().enumerate() {
            let incident = crate::forward::IncidentWave::new(*alpha, *pol, *wave)?;
            let sol = match &fact {
                Some(f) => f.solve(&incident)?,
                None => crate::forward::solve_forward(grid, medium, &incident, config)?,
            };
            let pe: Vec<CV3> = (0..grid.len()).map(|j| sol.e[j] * sol.p_cells[j]).collect();
            let qe: Vec<C64> = (0..grid.len()).map(|j| sol.q_cells[j].dot(&sol.e[j])).collect();
            for (bi, beta) in beta_quad.nodes.iter().enumerate() {
                let ph = &phases[bi];
                let mut p_term = CV3::zeros();
                let mut q_term = C64::new(0.0, 0.0);
                for j in 0..grid.len() {
                    p_term += pe[j] * ph[j];
                    q_term += ph[j] * qe[j];
                }
                amplitudes[bi][which] = p_term * C64::new(scale, 0.0)
                    + to_complex(&beta.vec()) * (C64::new(0.0, wave.k * scale) * q_term);
            }
        }
        for (bi, beta) in beta_quad.nodes.iter().enumerate() {
            let b = beta.vec();
            let sin2 = |pol: &V3| 1.0 - b.dot(pol).powi(2);
            let which = if sin2(&pols[0]) >= sin2(&pols[1]) { 0 } else { 1 };
            choices[bi * n_alpha + ai] = which as u8;
            f[(bi, ai)] = project_f(&amplitudes[bi][which], beta, &pols[which])?;
        }
    }
    Ok(ScatteringDataSet {
        alpha_quadrature: alpha_quad.clone(),
        beta_quadrature: beta_quad.clone(),
        f,
        wave: *wave,
        noise_level: 0.0,
        seed: None,
        provenance: Provenance::FullSolver,
        polarization_choice: Some(choices),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::born::{born_amplitude, born_f};
    use crate::forward::{IncidentWave, SolverMode, solve_forward};
    use crate::geometry::{build_sphere_quadrature, build_volume_grid};
    use crate::medium::eval_p;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn wave(k: f64) -> WaveParams {
        WaveParams::from_k(k).unwrap()
    }

    fn random_direction(rng: &mut impl Rng) -> Direction {
        loop {
            let v = V3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            if v.norm() > 1e-3 {
                return Direction::from_unnormalized(v).unwrap();
            }
        }
    }

    #[test]
    fn zero_medium_amplitude_vanishes() {
        let w = wave(2.0);
        let grid = build_volume_grid(1.0, 4);
        let medium = MediumSpec::zero(1.0);
        let alpha = Direction::new(V3::new(0.0, 0.0, 1.0)).unwrap();
        let incident = IncidentWave::new(alpha, V3::new(1.0, 0.0, 0.0), w).unwrap();
        let sol = solve_forward(&grid, &medium, &incident, &SolverConfig::default()).unwrap();
        let beta = Direction::from_unnormalized(V3::new(1.0, 2.0, -0.5)).unwrap();
        assert!(scattering_amplitude(&sol, &beta).norm() < 1e-15);
    }

    #[test]
    fn single_cell_born_amplitude_closed_form() {
        let w = wave(1.7);
        let grid = build_volume_grid(1.0, 1);
        let medium =
            MediumSpec::single(V3::zeros(), 0.9, C64::new(0.2, 0.04), 3, 1.0).unwrap();
        let alpha = Direction::new(V3::new(0.0, 0.0, 1.0)).unwrap();
        let pol = V3::new(1.0, 0.0, 0.0);
        let incident = IncidentWave::new(alpha, pol, w).unwrap();
        let e0 = incident.field_at(&V3::zeros());
        let field = FieldSolution {
            p_cells: vec![eval_p(&medium, &w, &V3::zeros())],
            q_cells: vec![crate::medium::eval_q(&medium, &w, &V3::zeros()).unwrap()],
            e: vec![e0],
            grid: grid.clone(),
            incident,
            solver_residual: 0.0,
        };
        let beta = Direction::from_unnormalized(V3::new(1.0, 1.0, 0.2)).unwrap();
        let a = scattering_amplitude(&field, &beta);
        // q(0) = 0 at the bump center, so only the p-term survives
        let p0 = eval_p(&medium, &w, &V3::zeros());
        let expect = e0 * (p0 * grid.cell_volume / (4.0 * PI));
        assert!((a - expect).norm() < 1e-15);
    }

    #[test]
    fn amplitude_p_term_linear_in_contrast() {
        let w = wave(1.7);
        let grid = build_volume_grid(1.0, 4);
        let alpha = Direction::new(V3::new(0.0, 0.0, 1.0)).unwrap();
        let pol = V3::new(1.0, 0.0, 0.0);
        let incident = IncidentWave::new(alpha, pol, w).unwrap();
        let beta = Direction::from_unnormalized(V3::new(0.3, -1.0, 0.4)).unwrap();
        let amp_at = |c: f64| {
            let medium = MediumSpec::single(V3::zeros(), 0.8, C64::new(c, 0.0), 3, 1.0).unwrap();
            let e: Vec<CV3> =
                grid.cell_centers.iter().map(|x| incident.field_at(x)).collect();
            let field = FieldSolution {
                p_cells: grid.cell_centers.iter().map(|x| eval_p(&medium, &w, x)).collect(),
                q_cells: vec![CV3::zeros(); grid.len()],
                e,
                grid: grid.clone(),
                incident,
                solver_residual: 0.0,
            };
            scattering_amplitude(&field, &beta)
        };
        let a1 = amp_at(0.05);
        let a2 = amp_at(0.1);
        assert!((a2 - a1 * C64::new(2.0, 0.0)).norm() < 1e-14 * a2.norm());
    }

    #[test]
    fn projection_kills_beta_parallel_amplitude() {
        let beta = Direction::from_unnormalized(V3::new(0.2, 0.3, 1.0)).unwrap();
        let pol = {
            let (e1, _) = orthonormal_polarizations(&beta);
            e1
        };
        let a = to_complex(&beta.vec()) * C64::new(0.7, -1.3);
        let f = project_f(&a, &beta, &pol).unwrap();
        assert!(f.norm() < 1e-15);
    }

    #[test]
    fn projection_inverts_known_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let beta = random_direction(&mut rng);
            let pol = loop {
                let d = random_direction(&mut rng);
                let p = (d.vec() - beta.vec() * d.vec().dot(&beta.vec())).normalize();
                if 1.0 - beta.vec().dot(&p).powi(2) >= SIN2_THETA_MIN {
                    break p;
                }
            };
            let scalar = C64::new(0.8, -0.4);
            let a = to_complex(&pol) * (scalar / (4.0 * PI) * 4.0 * PI)
                + to_complex(&beta.vec()) * C64::new(0.1, 0.9);
            let f = project_f(&a, &beta, &pol).unwrap();
            assert!((f - scalar * 4.0 * PI).norm() < 1e-12 * scalar.norm() * 4.0 * PI);
        }
    }

    #[test]
    fn projection_rejects_degenerate_polarization() {
        let beta = Direction::new(V3::new(0.0, 0.0, 1.0)).unwrap();
        let pol = V3::new((0.3f64).sqrt(), 0.0, (0.7f64).sqrt());
        let a = CV3::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        assert!(matches!(
            project_f(&a, &beta, &pol),
            Err(Error::PolarizationDegenerate(_, _))
        ));
    }

    #[test]
    fn cross_polarization_f_agrees_at_quadratic_order() {
        // with full fields the two polarizations give f differing by O(c^2)
        let w = wave(2.0);
        let grid = build_volume_grid(1.0, 8);
        let alpha = Direction::new(V3::new(0.0, 0.0, 1.0)).unwrap();
        // beta leans toward alpha so both transverse polarizations stay
        // admissible in the projection
        let beta = Direction::from_unnormalized(V3::new(0.5, 0.4, 1.0)).unwrap();
        let config = SolverConfig { mode: SolverMode::Dense, ..SolverConfig::default() };
        let spread = |c: f64| -> f64 {
            let medium = MediumSpec::single(
                V3::new(0.05, 0.1, -0.05),
                0.7,
                C64::new(c, 0.0),
                3,
                1.0,
            )
            .unwrap();
            let (e1, e2) = orthonormal_polarizations(&alpha);
            let mut fs = Vec::new();
            for pol in [e1, e2] {
                let incident = IncidentWave::new(alpha, pol, w).unwrap();
                let sol = solve_forward(&grid, &medium, &incident, &config).unwrap();
                let a = scattering_amplitude(&sol, &beta);
                fs.push(project_f(&a, &beta, &pol).unwrap());
            }
            (fs[0] - fs[1]).norm()
        };
        let d1 = spread(0.05);
        let d2 = spread(0.025);
        let ratio = d2 / d1;
        assert!((0.15..=0.4).contains(&ratio), "ratio={ratio}");
    }

    #[test]
    fn far_field_residual_decays_like_one_over_r() {
        let w = wave(2.0);
        let grid = build_volume_grid(1.0, 8);
        let medium = MediumSpec::single(V3::zeros(), 0.8, C64::new(0.1, 0.0), 3, 1.0).unwrap();
        let alpha = Direction::new(V3::new(0.0, 0.0, 1.0)).unwrap();
        let incident = IncidentWave::new(alpha, V3::new(1.0, 0.0, 0.0), w).unwrap();
        let sol = solve_forward(&grid, &medium, &incident, &SolverConfig::default()).unwrap();
        let beta = Direction::from_unnormalized(V3::new(0.4, 0.2, 1.0)).unwrap();
        let r1 = far_field_residual(&sol, &beta, 50.0).unwrap(); // kr = 100
        let r2 = far_field_residual(&sol, &beta, 500.0).unwrap(); // kr = 1000
        assert!(r1 <= 5.0 / 100.0, "r1={r1}");
        assert!(r2 <= 5.0 / 1000.0, "r2={r2}");
        let factor = r1 / r2;
        assert!((5.0..=20.0).contains(&factor), "factor={factor}");
        assert!(far_field_residual(&sol, &beta, 5.0).is_err());
    }

    #[test]
    fn far_field_residual_zero_medium_errors() {
        let w = wave(2.0);
        let grid = build_volume_grid(1.0, 4);
        let medium = MediumSpec::zero(1.0);
        let alpha = Direction::new(V3::new(0.0, 0.0, 1.0)).unwrap();
        let incident = IncidentWave::new(alpha, V3::new(1.0, 0.0, 0.0), w).unwrap();
        let sol = solve_forward(&grid, &medium, &incident, &SolverConfig::default()).unwrap();
        let beta = Direction::new(V3::new(0.0, 1.0, 0.0)).unwrap();
        assert!(matches!(
            far_field_residual(&sol, &beta, 100.0),
            Err(Error::ZeroAmplitude)
        ));
    }

    #[test]
    fn dataset_polarization_choice_keeps_projection_admissible() {
        let w = wave(2.0);
        let grid = build_volume_grid(1.0, 5);
        let medium = MediumSpec::single(V3::zeros(), 0.8, C64::new(0.05, 0.0), 3, 1.0).unwrap();
        let aq = build_sphere_quadrature(2, 4);
        let bq = build_sphere_quadrature(2, 3);
        let data =
            build_dataset(&medium, &w, &aq, &bq, &grid, &SolverConfig::default()).unwrap();
        assert_eq!(data.f.dim(), (bq.len(), aq.len()));
        assert_eq!(data.provenance, Provenance::FullSolver);
        let choices = data.polarization_choice.as_ref().unwrap();
        for (ai, alpha) in aq.nodes.iter().enumerate() {
            let (e1, e2) = orthonormal_polarizations(alpha);
            for (bi, beta) in bq.nodes.iter().enumerate() {
                let pol = if choices[bi * aq.len() + ai] == 0 { e1 } else { e2 };
                let sin2 = 1.0 - beta.vec().dot(&pol).powi(2);
                assert!(sin2 >= 0.5 - 1e-12);
            }
        }
    }

    #[test]
    fn dataset_scales_linearly_in_weak_contrast() {
        let w = wave(2.0);
        let grid = build_volume_grid(1.0, 5);
        let aq = build_sphere_quadrature(2, 2);
        let bq = build_sphere_quadrature(2, 2);
        let at = |c: f64| {
            let medium = MediumSpec::single(V3::zeros(), 0.8, C64::new(c, 0.0), 3, 1.0).unwrap();
            build_dataset(&medium, &w, &aq, &bq, &grid, &SolverConfig::default()).unwrap()
        };
        let d1 = at(0.04);
        let d2 = at(0.02);
        let mut worst: f64 = 0.0;
        for (a, b) in d1.f.iter().zip(d2.f.iter()) {
            worst = worst.max((a - b * C64::new(2.0, 0.0)).norm() / a.norm().max(1e-12));
        }
        // deviation from exact halving is the quadratic Born correction
        assert!(worst < 0.05, "worst={worst}");
    }

    #[test]
    fn born_projection_identity_on_random_triples() {
        let w = wave(2.0);
        let grid = build_volume_grid(1.0, 6);
        let medium = MediumSpec::single(
            V3::new(0.1, -0.1, 0.2),
            0.6,
            C64::new(0.08, 0.03),
            4,
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let alpha = random_direction(&mut rng);
            let (e1, e2) = orthonormal_polarizations(&alpha);
            let pol = if rng.random::<bool>() { e1 } else { e2 };
            let beta = loop {
                let b = random_direction(&mut rng);
                if 1.0 - b.vec().dot(&pol).powi(2) >= SIN2_THETA_MIN {
                    break b;
                }
            };
            let a = born_amplitude(&medium, &w, &alpha, &beta, &pol, &grid).unwrap();
            let f = project_f(&a, &beta, &pol).unwrap();
            let fb = born_f(&medium, &w, &alpha, &beta, &grid);
            assert!((f - fb).norm() <= 1e-12 * fb.norm().max(1.0));
        }
    }
}
