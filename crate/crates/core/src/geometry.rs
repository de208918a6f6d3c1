//! Direction sets, sphere quadrature, volume grids, and the singular self-cell rule.

use crate::{C64, Error, Result, V3};
use std::f64::consts::PI;

/// Unit vector on S^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction(V3);

impl Direction {
    /// Wraps a vector that is already unit length to within 1e-12.
    pub fn new(v: V3) -> Result<Self> {
        let n = v.norm();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("direction", format!("norm {n:.15} is not 1")));
        }
        Ok(Self(v))
    }

    /// Normalizes a nonzero vector.
    pub fn from_unnormalized(v: V3) -> Result<Self> {
        let n = v.norm();
        if n == 0.0 {
            return Err(Error::invalid("direction", "zero vector"));
        }
        Ok(Self(v / n))
    }

    pub fn from_polar(cos_polar: f64, azimuth: f64) -> Self {
        let s = (1.0 - cos_polar * cos_polar).max(0.0).sqrt();
        Self(V3::new(s * azimuth.cos(), s * azimuth.sin(), cos_polar))
    }

    pub fn vec(&self) -> V3 {
        self.0
    }

    pub fn negated(&self) -> Self {
        Self(-self.0)
    }
}

/// Nodes and positive weights integrating over S^2 (weights sum to 4 pi).
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    pub nodes: Vec<Direction>,
    pub weights: Vec<f64>,
}

impl SphereQuadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                z -= p / d;
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Product rule: Gauss-Legendre in the polar cosine tensored with uniform azimuth.
pub fn build_sphere_quadrature(n_polar: usize, n_azimuth: usize) -> SphereQuadrature {
    assert!(n_polar >= 1 && n_azimuth >= 1);
    let (ct, wt) = gauss_legendre(n_polar);
    let w_az = 2.0 * PI / n_azimuth as f64;
    let mut nodes = Vec::with_capacity(n_polar * n_azimuth);
    let mut weights = Vec::with_capacity(n_polar * n_azimuth);
    for i in 0..n_polar {
        for j in 0..n_azimuth {
            let phi = 2.0 * PI * j as f64 / n_azimuth as f64;
            nodes.push(Direction::from_polar(ct[i], phi));
            weights.push(wt[i] * w_az);
        }
    }
    SphereQuadrature { nodes, weights }
}

/// Uniform Cartesian cells covering a ball, cell-center collocation.
#[derive(Debug, Clone)]
pub struct VolumeGrid {
    pub cell_centers: Vec<V3>,
    pub spacing: f64,
    pub cell_volume: f64,
    pub bounding_radius: f64,
    pub n_per_axis: usize,
    lattice: Vec<Option<usize>>,
}

impl VolumeGrid {
    pub fn len(&self) -> usize {
        self.cell_centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_centers.is_empty()
    }

    /// Cell index at lattice coordinates, if that cell is inside the ball.
    pub fn cell_at(&self, i: usize, j: usize, l: usize) -> Option<usize> {
        let n = self.n_per_axis;
        if n == 0 || i >= n || j >= n || l >= n {
            return None;
        }
        self.lattice[(i * n + j) * n + l]
    }

    /// Builds a grid from explicit cell centers; no lattice structure is attached,
    /// so finite-difference diagnostics are unavailable on such grids.
    pub fn with_centers(cell_centers: Vec<V3>, spacing: f64, bounding_radius: f64) -> Result<Self> {
        if spacing <= 0.0 {
            return Err(Error::invalid("spacing", "must be positive"));
        }
        for c in &cell_centers {
            if c.norm() >= bounding_radius {
                return Err(Error::invalid(
                    "cell_centers",
                    format!("center at radius {:.6} outside bounding radius {bounding_radius:.6}", c.norm()),
                ));
            }
        }
        Ok(Self {
            cell_centers,
            spacing,
            cell_volume: spacing.powi(3),
            bounding_radius,
            n_per_axis: 0,
            lattice: Vec::new(),
        })
    }
}

/// Uniform grid of spacing 2 R / n over the bounding box of the ball of radius
/// R_domain; keeps only cells whose centers lie strictly inside the ball.
pub fn build_volume_grid(r_domain: f64, n_per_axis: usize) -> VolumeGrid {
    assert!(r_domain > 0.0 && n_per_axis >= 1);
    let n = n_per_axis;
    let h = 2.0 * r_domain / n as f64;
    let coord = |i: usize| -r_domain + h * (i as f64 + 0.5);
    let mut centers = Vec::new();
    let mut lattice = vec![None; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let x = V3::new(coord(i), coord(j), coord(l));
                if x.norm() < r_domain {
                    lattice[(i * n + j) * n + l] = Some(centers.len());
                    centers.push(x);
                }
            }
        }
    }
    VolumeGrid {
        cell_centers: centers,
        spacing: h,
        cell_volume: h.powi(3),
        bounding_radius: r_domain,
        n_per_axis: n,
        lattice,
    }
}

/// Integral of e^{ikr}/(4 pi r) over the ball of volume h^3 centered at the
/// singularity: with a = (3 h^3 / 4 pi)^{1/3}, equals (e^{ika}(1-ika) - 1)/k^2,
/// evaluated by series for small ka to avoid cancellation; k = 0 gives a^2/2.
pub fn self_cell_integral(h: f64, k: f64) -> C64 {
    assert!(h > 0.0 && k >= 0.0);
    let a = (3.0 * h.powi(3) / (4.0 * PI)).cbrt();
    let x = k * a;
    if x < 1e-2 {
        // value = -a^2 sum_{m>=2} (m-1)/m! i^m x^{m-2}
        let mut sum = C64::new(0.0, 0.0);
        let mut ipow = C64::new(-1.0, 0.0); // i^2
        let mut xpow = 1.0; // x^{m-2}
        let mut fact = 2.0; // m!
        for m in 2..=14u32 {
            sum += ipow * ((m as f64 - 1.0) / fact * xpow);
            ipow *= C64::new(0.0, 1.0);
            xpow *= x;
            fact *= (m + 1) as f64;
        }
        -a * a * sum
    } else {
        let e = C64::new(0.0, x).exp();
        (e * C64::new(1.0, -x) - 1.0) / (k * k)
    }
}
