//! On-disk formats: dataset CSV, volume CSV, and the run manifest JSON.
//! All floats are written with 17 fractional digits so values round-trip
//! exactly.

use crate::born::{Provenance, ScatteringDataSet};
use crate::cli::config::RunConfig;
use crate::geometry::{Direction, SphereQuadrature, VolumeGrid};
use crate::medium::WaveParams;
use crate::{C64, Error, Result, V3};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DATASET_HEADER: &str = "alpha_index,beta_index,alpha_x,alpha_y,alpha_z,beta_x,beta_y,beta_z,weight_alpha,weight_beta,f_re,f_im";
pub const VOLUME_HEADER: &str = "x,y,z,re,im";

pub fn write_dataset(data: &ScatteringDataSet, path: &Path) -> Result<()> {
    data.validate()?;
    let seed = match data.seed {
        Some(s) => s.to_string(),
        None => "none".to_string(),
    };
    let mut out = format!(
        "# k={:.17e} delta={:.17e} provenance={} seed={}\n{DATASET_HEADER}\n",
        data.wave.k, data.noise_level, data.provenance, seed
    );
    for (ai, alpha) in data.alpha_quadrature.nodes.iter().enumerate() {
        let av = alpha.vec();
        let wa = data.alpha_quadrature.weights[ai];
        for (bi, beta) in data.beta_quadrature.nodes.iter().enumerate() {
            let bv = beta.vec();
            let wb = data.beta_quadrature.weights[bi];
            let f = data.f[(bi, ai)];
            out.push_str(&format!(
                "{ai},{bi},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                av.x, av.y, av.z, bv.x, bv.y, bv.z, wa, wb, f.re, f.im
            ));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn bad_file(path: &Path, what: impl std::fmt::Display) -> Error {
    Error::Config(format!("{}: {what}", path.display()))
}

fn parse_float(path: &Path, s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| bad_file(path, format!("cannot parse {what} from {s:?}")))
}

fn parse_preamble<'a>(path: &Path, line: &'a str) -> Result<Vec<(&'a str, &'a str)>> {
    let Some(rest) = line.strip_prefix('#') else {
        return Err(bad_file(path, "missing preamble comment line"));
    };
    let mut pairs = Vec::new();
    for token in rest.split_whitespace() {
        let Some((key, value)) = token.split_once('=') else {
            return Err(bad_file(path, format!("malformed preamble token {token:?}")));
        };
        pairs.push((key, value));
    }
    Ok(pairs)
}

fn preamble_value<'a>(
    path: &Path,
    pairs: &[(&'a str, &'a str)],
    key: &str,
) -> Result<&'a str> {
    pairs
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| bad_file(path, format!("preamble is missing {key}")))
}

pub fn read_dataset(path: &Path) -> Result<ScatteringDataSet> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let preamble = lines.next().ok_or_else(|| bad_file(path, "empty file"))?;
    let pairs = parse_preamble(path, preamble)?;
    let k = parse_float(path, preamble_value(path, &pairs, "k")?, "k")?;
    let delta = parse_float(path, preamble_value(path, &pairs, "delta")?, "delta")?;
    let provenance: Provenance = preamble_value(path, &pairs, "provenance")?.parse()?;
    let seed = match preamble_value(path, &pairs, "seed")? {
        "none" => None,
        s => Some(
            s.parse::<u64>()
                .map_err(|_| bad_file(path, format!("cannot parse seed from {s:?}")))?,
        ),
    };
    let header = lines.next().ok_or_else(|| bad_file(path, "missing header row"))?;
    if header != DATASET_HEADER {
        return Err(bad_file(path, format!("unexpected header {header:?}")));
    }

    struct Node {
        v: V3,
        w: f64,
    }
    let mut alphas: Vec<Option<Node>> = Vec::new();
    let mut betas: Vec<Option<Node>> = Vec::new();
    let mut rows: Vec<(usize, usize, C64)> = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 12 {
            return Err(bad_file(path, format!("row {}: expected 12 columns, got {}", ln + 3, cols.len())));
        }
        let ai: usize = cols[0]
            .trim()
            .parse()
            .map_err(|_| bad_file(path, format!("row {}: bad alpha_index", ln + 3)))?;
        let bi: usize = cols[1]
            .trim()
            .parse()
            .map_err(|_| bad_file(path, format!("row {}: bad beta_index", ln + 3)))?;
        let mut vals = [0.0; 10];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = parse_float(path, cols[i + 2], "a numeric column")?;
        }
        let av = V3::new(vals[0], vals[1], vals[2]);
        let bv = V3::new(vals[3], vals[4], vals[5]);
        store_node(path, &mut alphas, ai, av, vals[6], "alpha")?;
        store_node(path, &mut betas, bi, bv, vals[7], "beta")?;
        rows.push((ai, bi, C64::new(vals[8], vals[9])));

        fn store_node(
            path: &Path,
            nodes: &mut Vec<Option<Node>>,
            i: usize,
            v: V3,
            w: f64,
            which: &str,
        ) -> Result<()> {
            if nodes.len() <= i {
                nodes.resize_with(i + 1, || None);
            }
            match &nodes[i] {
                None => {
                    nodes[i] = Some(Node { v, w });
                    Ok(())
                }
                Some(n) if (n.v - v).norm() <= 1e-12 && (n.w - w).abs() <= 1e-12 => Ok(()),
                Some(_) => Err(bad_file(
                    path,
                    format!("{which} node {i} appears with conflicting values"),
                )),
            }
        }
    }
    let build_quad = |nodes: Vec<Option<Node>>, which: &str| -> Result<SphereQuadrature> {
        let mut out = SphereQuadrature { nodes: Vec::new(), weights: Vec::new() };
        for (i, n) in nodes.into_iter().enumerate() {
            let n = n.ok_or_else(|| bad_file(path, format!("{which} node {i} never appears")))?;
            out.nodes.push(Direction::new(n.v)?);
            out.weights.push(n.w);
        }
        if out.is_empty() {
            return Err(bad_file(path, format!("no {which} nodes")));
        }
        Ok(out)
    };
    let alpha_quadrature = build_quad(alphas, "alpha")?;
    let beta_quadrature = build_quad(betas, "beta")?;

    let (na, nb) = (alpha_quadrature.len(), beta_quadrature.len());
    let mut f = Array2::from_elem((nb, na), C64::new(0.0, 0.0));
    let mut seen = vec![false; na * nb];
    for (ai, bi, v) in rows {
        if seen[bi * na + ai] {
            return Err(bad_file(path, format!("duplicate sample ({ai}, {bi})")));
        }
        seen[bi * na + ai] = true;
        f[(bi, ai)] = v;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(bad_file(
            path,
            format!("missing sample (alpha {}, beta {})", missing % na, missing / na),
        ));
    }

    let data = ScatteringDataSet {
        alpha_quadrature,
        beta_quadrature,
        f,
        wave: WaveParams::from_k(k)?,
        noise_level: delta,
        seed,
        provenance,
        polarization_choice: None,
    };
    data.validate()?;
    Ok(data)
}

pub fn write_volume(grid: &VolumeGrid, values: &[C64], path: &Path) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::invalid("values", "length must match the grid"));
    }
    let mut out = format!(
        "# r_domain={:.17e} n={} spacing={:.17e}\n{VOLUME_HEADER}\n",
        grid.bounding_radius, grid.n_per_axis, grid.spacing
    );
    for (x, v) in grid.cell_centers.iter().zip(values) {
        out.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            x.x, x.y, x.z, v.re, v.im
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<(VolumeGrid, Vec<C64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let preamble = lines.next().ok_or_else(|| bad_file(path, "empty file"))?;
    let pairs = parse_preamble(path, preamble)?;
    let r_domain = parse_float(path, preamble_value(path, &pairs, "r_domain")?, "r_domain")?;
    let spacing = parse_float(path, preamble_value(path, &pairs, "spacing")?, "spacing")?;
    let header = lines.next().ok_or_else(|| bad_file(path, "missing header row"))?;
    if header != VOLUME_HEADER {
        return Err(bad_file(path, format!("unexpected header {header:?}")));
    }
    let mut centers = Vec::new();
    let mut values = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad_file(path, format!("row {}: expected 5 columns, got {}", ln + 3, cols.len())));
        }
        let mut vals = [0.0; 5];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = parse_float(path, cols[i], "a numeric column")?;
        }
        centers.push(V3::new(vals[0], vals[1], vals[2]));
        values.push(C64::new(vals[3], vals[4]));
    }
    let grid = VolumeGrid::with_centers(centers, spacing, r_domain)?;
    Ok((grid, values))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    /// weighted norm of the data that was inverted
    pub f_norm: f64,
    pub noise_absolute: f64,
    pub dataset: DatasetSummary,
    pub solver: Option<SolverSummary>,
    pub chosen_n: usize,
    pub sweep: Vec<SweepEntry>,
    pub error_relative_l2: Option<f64>,
    pub notes: Vec<String>,
    pub outputs: OutputFiles,
    /// wall-clock seconds; excluded from the determinism contract
    pub timings: Timings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_alpha: usize,
    pub n_beta: usize,
    pub provenance: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSummary {
    pub mode: String,
    pub tolerance_dense: f64,
    pub tolerance_iterative: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub n: usize,
    pub increment: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputFiles {
    pub dataset: String,
    pub reconstruction: String,
    pub permittivity: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timings {
    pub data_s: f64,
    pub invert_s: f64,
    pub total_s: f64,
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| bad_file(path, format!("manifest parse: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::born::{add_noise, synthesize_born};
    use crate::geometry::{build_sphere_quadrature, build_volume_grid};
    use crate::medium::MediumSpec;

    fn sample_dataset() -> ScatteringDataSet {
        let w = WaveParams::from_k(2.0).unwrap();
        let medium = MediumSpec::single(V3::zeros(), 0.7, C64::new(0.1, 0.02), 3, 1.0).unwrap();
        let grid = build_volume_grid(1.0, 5);
        let aq = build_sphere_quadrature(2, 3);
        let bq = build_sphere_quadrature(2, 2);
        let clean = synthesize_born(&medium, &w, &aq, &bq, &grid).unwrap();
        add_noise(&clean, 1e-4 * clean.f_norm(), 11).unwrap()
    }

    #[test]
    fn dataset_round_trips_exactly() {
        let data = sample_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.csv");
        write_dataset(&data, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.wave.k, data.wave.k);
        assert_eq!(back.noise_level, data.noise_level);
        assert_eq!(back.provenance, data.provenance);
        assert_eq!(back.seed, data.seed);
        assert_eq!(back.f, data.f);
        for i in 0..data.alpha_quadrature.len() {
            assert_eq!(back.alpha_quadrature.nodes[i].vec(), data.alpha_quadrature.nodes[i].vec());
            assert_eq!(back.alpha_quadrature.weights[i], data.alpha_quadrature.weights[i]);
        }
        for i in 0..data.beta_quadrature.len() {
            assert_eq!(back.beta_quadrature.nodes[i].vec(), data.beta_quadrature.nodes[i].vec());
            assert_eq!(back.beta_quadrature.weights[i], data.beta_quadrature.weights[i]);
        }
    }

    #[test]
    fn dataset_reader_rejects_corruption() {
        let data = sample_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.csv");
        write_dataset(&data, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        let mut lines: Vec<&str> = text.lines().collect();
        let dup = lines[2];
        lines.push(dup);
        let broken = dir.path().join("dup.csv");
        std::fs::write(&broken, lines.join("\n")).unwrap();
        assert!(read_dataset(&broken).is_err());

        let mut lines: Vec<&str> = text.lines().collect();
        lines.remove(2);
        let broken = dir.path().join("missing.csv");
        std::fs::write(&broken, lines.join("\n")).unwrap();
        assert!(read_dataset(&broken).is_err());

        let broken = dir.path().join("header.csv");
        std::fs::write(&broken, text.replace("alpha_index", "alpha_idx")).unwrap();
        assert!(read_dataset(&broken).is_err());

        let broken = dir.path().join("prov.csv");
        std::fs::write(&broken, text.replace("provenance=noisy", "provenance=magic")).unwrap();
        assert!(read_dataset(&broken).is_err());
    }

    #[test]
    fn volume_round_trips_exactly() {
        let grid = build_volume_grid(0.9, 4);
        let values: Vec<C64> = (0..grid.len())
            .map(|i| C64::new(i as f64 * 0.37 - 1.0, -(i as f64) * 0.11 + 0.05))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("volume.csv");
        write_volume(&grid, &values, &path).unwrap();
        let (back_grid, back_values) = read_volume(&path).unwrap();
        assert_eq!(back_grid.len(), grid.len());
        assert_eq!(back_grid.spacing, grid.spacing);
        assert_eq!(back_grid.bounding_radius, grid.bounding_radius);
        assert_eq!(back_values, values);
        for (a, b) in back_grid.cell_centers.iter().zip(&grid.cell_centers) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn volume_writer_checks_length() {
        let grid = build_volume_grid(1.0, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("volume.csv");
        assert!(write_volume(&grid, &[C64::new(1.0, 0.0)], &path).is_err());
    }
}
