//! Mollifier-based inversion of the scalar scattering data back into the
//! contrast function p, with a band-limited spectral filter of adjustable
//! order and a quasi-optimal order selector.

use crate::born::ScatteringDataSet;
use crate::geometry::{VolumeGrid, gauss_legendre};
use crate::{C64, Error, Result};
use rayon::prelude::*;
use std::collections::HashMap;
use std::f64::consts::PI;

pub const MIN_RADIAL_POINTS: usize = 32;

/// Radial mollifier of order n supported on [0, 2R]:
/// (1 - r^2/4R^2)^n (n/4piR^2)^{3/2} (3(sin b - b cos b)/b^3)^{2n+3},
/// b = 2kr/(2n+3).
pub fn delta_n(r: f64, big_r: f64, k: f64, n: usize) -> f64 {
    if r < 0.0 || r > 2.0 * big_r {
        return 0.0;
    }
    let m = 2 * n as i32 + 3;
    let b = 2.0 * k * r / f64::from(m);
    let base = if b.abs() < 1e-4 {
        1.0 - b * b / 10.0
    } else {
        3.0 * (b.sin() - b * b.cos()) / (b * b * b)
    };
    let shape = 1.0 - r * r / (4.0 * big_r * big_r);
    shape.powi(n as i32) * (n as f64 / (4.0 * PI * big_r * big_r)).powf(1.5) * base.powi(m)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x }
}

/// Radial Fourier transform of the mollifier,
/// a_n(z) = 4pi int_0^{2R} r^2 delta_n(r) sinc(z r) dr,
/// integrated with a Gauss-Legendre rule of at least MIN_RADIAL_POINTS nodes.
pub fn a_n(z: f64, big_r: f64, k: f64, n: usize, radial_points: usize) -> f64 {
    let (x, w) = gauss_legendre(radial_points.max(MIN_RADIAL_POINTS));
    a_n_with_rule(z, big_r, k, n, &x, &w)
}

fn a_n_with_rule(z: f64, big_r: f64, k: f64, n: usize, gl_x: &[f64], gl_w: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (x, w) in gl_x.iter().zip(gl_w) {
        let r = big_r * (x + 1.0);
        sum += w * big_r * r * r * delta_n(r, big_r, k, n) * sinc(z * r);
    }
    4.0 * PI * sum
}

pub fn h_prefactor(z: f64, k: f64) -> f64 {
    z.abs() * k * k / (16.0 * PI.powi(4))
}

/// Spectral window 1 - (1 - a/a0)^{2n+3}; equals 1 where a = a0 and rolls
/// off to 0 where the mollifier transform has decayed.
pub fn h_window(a: f64, a0: f64, n: usize) -> f64 {
    1.0 - (1.0 - a / a0).powi(2 * n as i32 + 3)
}

/// Inversion weight h_n(z) = |z| k^2 (16 pi^4)^{-1} [1 - (1 - a_n(z)/a_n(0))^{2n+3}].
pub fn h_n(z: f64, big_r: f64, k: f64, n: usize, radial_points: usize) -> f64 {
    let (x, w) = gauss_legendre(radial_points.max(MIN_RADIAL_POINTS));
    let a0 = a_n_with_rule(0.0, big_r, k, n, &x, &w);
    let a = a_n_with_rule(z, big_r, k, n, &x, &w);
    h_prefactor(z, k) * h_window(a, a0, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NChoice {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone)]
pub struct InversionConfig {
    pub n: NChoice,
    /// radius of the ball the unknown contrast is confined to
    pub r_ball: f64,
    /// Gauss-Legendre nodes for the radial transform of the mollifier
    pub radial_points: usize,
    /// largest order tried when the order is chosen automatically
    pub n_max: usize,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            n: NChoice::Auto,
            r_ball: 1.0,
            radial_points: 128,
            n_max: 8,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.r_ball.is_finite() || self.r_ball <= 0.0 {
            return Err(Error::invalid("r_ball", "must be positive and finite"));
        }
        if self.radial_points < MIN_RADIAL_POINTS {
            return Err(Error::invalid(
                "radial_points",
                format!("must be at least {MIN_RADIAL_POINTS}"),
            ));
        }
        if self.n_max == 0 {
            return Err(Error::invalid("n_max", "must be at least 1"));
        }
        if let NChoice::Fixed(n) = self.n {
            if n == 0 {
                return Err(Error::invalid("n", "regularization order must be at least 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub n: usize,
    /// weighted L2 distance to the reconstruction of the next order
    pub increment: f64,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub grid: VolumeGrid,
    pub p: Vec<C64>,
    pub chosen_n: usize,
    pub sweep: Vec<SweepPoint>,
}

/// Reconstructions of the contrast at every requested order, evaluated as
/// p_n(x) = sum over direction pairs of w_beta w_alpha f h_n(k|alpha-beta|)
/// e^{ik(alpha-beta).x}. The plane-wave phases are shared across orders, and
/// h_n is evaluated once per distinct |alpha - beta| (binned at 1e-12).
pub fn reconstruct_multi(
    data: &ScatteringDataSet,
    grid: &VolumeGrid,
    r_ball: f64,
    radial_points: usize,
    ns: &[usize],
) -> Result<Vec<Vec<C64>>> {
    data.validate()?;
    if ns.is_empty() {
        return Err(Error::invalid("ns", "need at least one regularization order"));
    }
    if ns.iter().any(|&n| n == 0) {
        return Err(Error::invalid("n", "regularization order must be at least 1"));
    }
    if !r_ball.is_finite() || r_ball <= 0.0 {
        return Err(Error::invalid("r_ball", "must be positive and finite"));
    }
    let k = data.wave.k;
    let na = data.n_alpha();
    let nb = data.n_beta();

    let mut bin_ids: HashMap<i64, usize> = HashMap::new();
    let mut bin_values: Vec<f64> = Vec::new();
    let mut pair_bin = vec![0usize; nb * na];
    let mut pair_coeff = vec![C64::new(0.0, 0.0); nb * na];
    let mut idx = 0;
    for bi in 0..nb {
        let b = data.beta_quadrature.nodes[bi].vec();
        let wb = data.beta_quadrature.weights[bi];
        for ai in 0..na {
            let d = (data.alpha_quadrature.nodes[ai].vec() - b).norm();
            let key = (d / 1e-12).round() as i64;
            let bin = *bin_ids.entry(key).or_insert_with(|| {
                bin_values.push(d);
                bin_values.len() - 1
            });
            pair_bin[idx] = bin;
            pair_coeff[idx] =
                data.f[(bi, ai)] * (wb * data.alpha_quadrature.weights[ai]);
            idx += 1;
        }
    }

    let (gl_x, gl_w) = gauss_legendre(radial_points.max(MIN_RADIAL_POINTS));
    let mut h_tab: Vec<Vec<f64>> = Vec::with_capacity(ns.len());
    for &n in ns {
        let a0 = a_n_with_rule(0.0, r_ball, k, n, &gl_x, &gl_w);
        if !(a0 > 0.0) {
            return Err(Error::invalid(
                "n",
                format!("mollifier transform vanishes at the origin for order {n}"),
            ));
        }
        h_tab.push(
            bin_values
                .iter()
                .map(|&d| {
                    let z = k * d;
                    h_prefactor(z, k)
                        * h_window(a_n_with_rule(z, r_ball, k, n, &gl_x, &gl_w), a0, n)
                })
                .collect(),
        );
    }

    let per_point: Vec<Vec<C64>> = grid
        .cell_centers
        .par_iter()
        .map(|x| {
            let ap: Vec<C64> = data
                .alpha_quadrature
                .nodes
                .iter()
                .map(|a| C64::new(0.0, k * a.vec().dot(x)).exp())
                .collect();
            let bp: Vec<C64> = data
                .beta_quadrature
                .nodes
                .iter()
                .map(|b| C64::new(0.0, -k * b.vec().dot(x)).exp())
                .collect();
            let mut s = vec![C64::new(0.0, 0.0); bin_values.len()];
            let mut idx = 0;
            for pb in bp.iter().take(nb) {
                for pa in ap.iter().take(na) {
                    s[pair_bin[idx]] += pair_coeff[idx] * (pb * pa);
                    idx += 1;
                }
            }
            h_tab
                .iter()
                .map(|tab| {
                    let mut acc = C64::new(0.0, 0.0);
                    for (su, hu) in s.iter().zip(tab) {
                        acc += su * hu;
                    }
                    acc
                })
                .collect()
        })
        .collect();

    let mut fields = vec![vec![C64::new(0.0, 0.0); grid.len()]; ns.len()];
    for (pi, row) in per_point.iter().enumerate() {
        for (ni, v) in row.iter().enumerate() {
            fields[ni][pi] = *v;
        }
    }
    Ok(fields)
}

/// Quasi-optimal order pick: the index whose reconstruction is closest to the
/// next one in the weighted L2 norm; ties go to the smaller order.
pub fn choose_n(
    fields: &[Vec<C64>],
    ns: &[usize],
    cell_volume: f64,
) -> Result<(usize, Vec<SweepPoint>)> {
    if fields.is_empty() || fields.len() != ns.len() {
        return Err(Error::invalid("fields", "need one field per order"));
    }
    if fields.len() == 1 {
        return Ok((0, Vec::new()));
    }
    let mut sweep = Vec::with_capacity(fields.len() - 1);
    for i in 0..fields.len() - 1 {
        let mut d2 = 0.0;
        for (a, b) in fields[i].iter().zip(&fields[i + 1]) {
            d2 += (a - b).norm_sqr();
        }
        sweep.push(SweepPoint { n: ns[i], increment: (cell_volume * d2).sqrt() });
    }
    let mut best = 0;
    for (i, sp) in sweep.iter().enumerate() {
        if sp.increment < sweep[best].increment {
            best = i;
        }
    }
    Ok((best, sweep))
}

pub fn reconstruct(
    data: &ScatteringDataSet,
    grid: &VolumeGrid,
    config: &InversionConfig,
) -> Result<ReconstructionResult> {
    config.validate()?;
    match config.n {
        NChoice::Fixed(n) => {
            let fields =
                reconstruct_multi(data, grid, config.r_ball, config.radial_points, &[n])?;
            Ok(ReconstructionResult {
                grid: grid.clone(),
                p: fields.into_iter().next().unwrap(),
                chosen_n: n,
                sweep: Vec::new(),
            })
        }
        NChoice::Auto => {
            let ns: Vec<usize> = (1..=config.n_max).collect();
            let mut fields =
                reconstruct_multi(data, grid, config.r_ball, config.radial_points, &ns)?;
            let (best, sweep) = choose_n(&fields, &ns, grid.cell_volume)?;
            Ok(ReconstructionResult {
                grid: grid.clone(),
                p: fields.swap_remove(best),
                chosen_n: ns[best],
                sweep,
            })
        }
    }
}

/// Relative L2 distance between a reconstruction and the true contrast on the
/// same grid.
pub fn error_metric(approx: &[C64], truth: &[C64], grid: &VolumeGrid) -> Result<f64> {
    if approx.len() != grid.len() || truth.len() != grid.len() {
        return Err(Error::invalid("fields", "lengths must match the grid"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, t) in approx.iter().zip(truth) {
        num += (a - t).norm_sqr();
        den += t.norm_sqr();
    }
    if den == 0.0 {
        return Err(Error::ZeroTruth);
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::born::{add_noise, synthesize_born};
    use crate::geometry::{build_sphere_quadrature, build_volume_grid};
    use crate::medium::{MediumSpec, WaveParams};
    use crate::oracle::{oracle_a_n_3d, oracle_reconstruct};
    use crate::V3;

    #[test]
    fn mollifier_is_compact_and_nonnegative() {
        let (big_r, k) = (1.0, 3.0);
        for n in 1..=8 {
            assert!(delta_n(0.0, big_r, k, n) > 0.0);
            for i in 0..=200 {
                let r = 2.0 * big_r * i as f64 / 200.0;
                assert!(delta_n(r, big_r, k, n) >= 0.0, "n={n} r={r}");
            }
            assert_eq!(delta_n(2.0 * big_r + 1e-9, big_r, k, n), 0.0);
            assert_eq!(delta_n(10.0 * big_r, big_r, k, n), 0.0);
        }
    }

    #[test]
    fn mollifier_series_branch_is_continuous() {
        let (big_r, k) = (1.0, 3.0);
        for n in [1usize, 4] {
            let m = f64::from(2 * n as i32 + 3);
            // r values bracketing the b = 1e-4 switch
            let r_lo = 0.99e-4 * m / (2.0 * k);
            let r_hi = 1.01e-4 * m / (2.0 * k);
            let lo = delta_n(r_lo, big_r, k, n);
            let hi = delta_n(r_hi, big_r, k, n);
            assert!((lo - hi).abs() <= 1e-6 * lo.abs());
        }
    }

    #[test]
    fn radial_transform_matches_3d_oracle() {
        let (big_r, k, n) = (1.0, 3.0, 3);
        for z in [0.0, 0.7, 1.7, 2.0 * k] {
            let prod = a_n(z, big_r, k, n, 128);
            let full = oracle_a_n_3d(z, big_r, k, n);
            assert!((prod - full.re).abs() <= 1e-8, "z={z} prod={prod} full={full}");
            assert!(full.im.abs() <= 1e-8);
        }
    }

    #[test]
    fn radial_rule_size_is_clamped() {
        let (big_r, k, n) = (0.8, 2.0, 2);
        let a_small = a_n(1.3, big_r, k, n, 4);
        let a_min = a_n(1.3, big_r, k, n, MIN_RADIAL_POINTS);
        assert_eq!(a_small, a_min);
    }

    #[test]
    fn window_endpoints_and_monotonicity() {
        for n in 1..=8 {
            let a0 = 0.93;
            assert!((h_window(a0, a0, n) - 1.0).abs() < 1e-15);
            assert_eq!(h_window(0.0, a0, n), 0.0);
            let mut prev = 0.0;
            for i in 1..=50 {
                let a = a0 * i as f64 / 50.0;
                let w = h_window(a, a0, n);
                assert!(w >= prev, "window must grow with a");
                prev = w;
            }
        }
    }

    #[test]
    fn weight_scales_with_wavenumber_doubling() {
        // z -> 2z, R -> R/2, k -> 2k leaves the window invariant and
        // multiplies the prefactor by 8
        let (z, big_r, k, n) = (1.3, 1.0, 3.0, 2);
        let base = h_n(z, big_r, k, n, 128);
        let scaled = h_n(2.0 * z, big_r / 2.0, 2.0 * k, n, 128);
        assert!((scaled - 8.0 * base).abs() <= 1e-10 * base.abs().max(1e-30));
    }

    #[test]
    fn reconstruction_matches_naive_oracle() {
        let w = WaveParams::from_k(3.0).unwrap();
        let medium = MediumSpec::single(V3::zeros(), 0.8, C64::new(0.1, 0.01), 3, 1.0).unwrap();
        let data_grid = build_volume_grid(1.0, 8);
        let aq = build_sphere_quadrature(2, 3);
        let bq = build_sphere_quadrature(2, 3);
        let data = synthesize_born(&medium, &w, &aq, &bq, &data_grid).unwrap();
        let recon_grid = build_volume_grid(1.0, 3);
        let n = 3;
        let fields = reconstruct_multi(&data, &recon_grid, 1.0, 128, &[n]).unwrap();
        let reference = oracle_reconstruct(&data, &recon_grid.cell_centers, 1.0, n).unwrap();
        let mut scale: f64 = 0.0;
        for v in &reference {
            scale = scale.max(v.norm());
        }
        for (a, b) in fields[0].iter().zip(&reference) {
            assert!((a - b).norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn choose_n_picks_smallest_increment() {
        let mk = |v: f64| vec![C64::new(v, 0.0); 4];
        // increments 3, 1, 2 between consecutive fields
        let fields = vec![mk(0.0), mk(3.0), mk(4.0), mk(6.0)];
        let ns = vec![1, 2, 3, 4];
        let (best, sweep) = choose_n(&fields, &ns, 1.0).unwrap();
        assert_eq!(ns[best], 2);
        assert_eq!(sweep.len(), 3);
        assert!((sweep[1].increment - 2.0).abs() < 1e-15);

        // tie goes to the smaller order
        let fields = vec![mk(0.0), mk(1.0), mk(2.0), mk(3.0)];
        let (best, _) = choose_n(&fields, &ns, 1.0).unwrap();
        assert_eq!(ns[best], 1);
    }

    #[test]
    fn auto_choice_is_deterministic_and_in_range() {
        let w = WaveParams::from_k(3.0).unwrap();
        let medium = MediumSpec::single(V3::zeros(), 0.8, C64::new(0.1, 0.0), 3, 1.0).unwrap();
        let data_grid = build_volume_grid(1.0, 8);
        let q = build_sphere_quadrature(3, 4);
        let clean = synthesize_born(&medium, &w, &q, &q, &data_grid).unwrap();
        let data = add_noise(&clean, 0.05 * clean.f_norm(), 42).unwrap();
        let grid = build_volume_grid(1.0, 4);
        let config = InversionConfig { n_max: 4, ..InversionConfig::default() };
        let r1 = reconstruct(&data, &grid, &config).unwrap();
        let r2 = reconstruct(&data, &grid, &config).unwrap();
        assert_eq!(r1.chosen_n, r2.chosen_n);
        assert!(r1.chosen_n >= 1 && r1.chosen_n <= 4);
        assert_eq!(r1.p, r2.p);
        assert_eq!(r1.sweep.len(), 3);
    }

    #[test]
    fn fixed_choice_skips_sweep() {
        let w = WaveParams::from_k(2.0).unwrap();
        let medium = MediumSpec::single(V3::zeros(), 0.7, C64::new(0.1, 0.0), 3, 1.0).unwrap();
        let data_grid = build_volume_grid(1.0, 6);
        let q = build_sphere_quadrature(2, 2);
        let data = synthesize_born(&medium, &w, &q, &q, &data_grid).unwrap();
        let grid = build_volume_grid(1.0, 3);
        let config = InversionConfig { n: NChoice::Fixed(2), ..InversionConfig::default() };
        let r = reconstruct(&data, &grid, &config).unwrap();
        assert_eq!(r.chosen_n, 2);
        assert!(r.sweep.is_empty());
        assert_eq!(r.p.len(), grid.len());
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let ok = InversionConfig::default();
        ok.validate().unwrap();
        let bad = InversionConfig { r_ball: -1.0, ..ok.clone() };
        assert!(bad.validate().is_err());
        let bad = InversionConfig { radial_points: 8, ..ok.clone() };
        assert!(bad.validate().is_err());
        let bad = InversionConfig { n_max: 0, ..ok.clone() };
        assert!(bad.validate().is_err());
        let bad = InversionConfig { n: NChoice::Fixed(0), ..ok };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn error_metric_basics() {
        let grid = build_volume_grid(1.0, 2);
        let truth = vec![C64::new(1.0, 0.0); grid.len()];
        let same = error_metric(&truth, &truth, &grid).unwrap();
        assert_eq!(same, 0.0);
        let half = vec![C64::new(0.5, 0.0); grid.len()];
        let e = error_metric(&half, &truth, &grid).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
        let zeros = vec![C64::new(0.0, 0.0); grid.len()];
        assert!(matches!(error_metric(&truth, &zeros, &grid), Err(Error::ZeroTruth)));
        assert!(error_metric(&truth[..1], &truth, &grid).is_err());
    }
}
