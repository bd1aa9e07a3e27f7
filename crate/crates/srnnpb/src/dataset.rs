//! Sequence ingestion, normalization, and synthesis.
//!
//! The on-disk contract: one CSV file per sequence, UTF-8, comma-separated,
//! '.' decimal point, a required header row naming the dimensions, one row
//! per timestep. Files are discovered by the ".csv" extension and sorted
//! lexicographically so sequence indices are deterministic.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DatasetError, Error, Result};
use crate::numerics::{pca_fit, Matrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    None,
    MinmaxToUnit,
    Zscore,
}

impl std::str::FromStr for NormalizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NormalizationMode::None),
            "minmax" | "minmax_to_unit" => Ok(NormalizationMode::MinmaxToUnit),
            "zscore" => Ok(NormalizationMode::Zscore),
            other => Err(Error::invalid(format!("unknown normalization mode '{other}'"))),
        }
    }
}

/// Per-dimension transform metadata, stored so denormalization is exact:
/// (min, max) pairs for min-max scaling, (mean, std) pairs for z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mode: NormalizationMode,
    pub per_dim: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub sequences: Vec<Matrix>,
    pub names: Vec<String>,
    pub dim_names: Vec<String>,
    pub normalization: Option<Normalization>,
}

impl SequenceDataset {
    pub fn new(sequences: Vec<Matrix>, names: Vec<String>, dim_names: Vec<String>) -> Self {
        SequenceDataset {
            sequences,
            names,
            dim_names,
            normalization: None,
        }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.sequences.first().map_or(0, Matrix::cols)
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.sequences.iter().map(Matrix::rows).collect()
    }
}

/// Load every `.csv` in a directory (or a single file) as one sequence each.
/// All files must agree on the column count of the first file.
pub fn load_sequences(path: &Path) -> Result<SequenceDataset> {
    if !path.exists() {
        return Err(DatasetError::MissingPath(path.to_path_buf()).into());
    }
    let mut files: Vec<PathBuf> = if path.is_dir() {
        fs::read_dir(path)
            .map_err(DatasetError::Io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect()
    } else {
        vec![path.to_path_buf()]
    };
    files.sort();
    if files.is_empty() {
        return Err(DatasetError::EmptyDataset(path.to_path_buf()).into());
    }

    let mut sequences = Vec::with_capacity(files.len());
    let mut names = Vec::with_capacity(files.len());
    let mut dim_names: Vec<String> = Vec::new();
    let mut expected_cols = 0usize;

    for file in &files {
        let (headers, rows) = read_csv_file(file)?;
        if rows.is_empty() {
            return Err(DatasetError::EmptyFile(file.clone()).into());
        }
        if rows.len() < 2 {
            return Err(DatasetError::TooShort {
                file: file.clone(),
                rows: rows.len(),
            }
            .into());
        }
        if expected_cols == 0 {
            expected_cols = headers.len();
            dim_names = headers;
        } else if headers.len() != expected_cols {
            return Err(DatasetError::DimensionMismatch {
                file: file.clone(),
                expected: expected_cols,
                got: headers.len(),
            }
            .into());
        }
        sequences.push(Matrix::from_rows(&rows)?);
        names.push(
            file.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
    }
    Ok(SequenceDataset::new(sequences, names, dim_names))
}

fn read_csv_file(file: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(file)
        .map_err(DatasetError::Csv)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(DatasetError::Csv)?
        .iter()
        .map(str::to_owned)
        .collect();
    let expected = headers.len();
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(DatasetError::Csv)?;
        let line = idx + 2; // header is line 1
        if record.len() != expected {
            return Err(DatasetError::RaggedRow {
                file: file.to_path_buf(),
                line,
                expected,
                got: record.len(),
            }
            .into());
        }
        let mut row = Vec::with_capacity(expected);
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| DatasetError::NonNumericCell {
                file: file.to_path_buf(),
                line,
                column: col + 1,
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    Ok((headers, rows))
}

/// Write one CSV per sequence into `dir`, mirroring the load contract.
/// Values use the shortest representation that parses back bit-identically.
pub fn write_sequences(dataset: &SequenceDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (seq, name) in dataset.sequences.iter().zip(dataset.names.iter()) {
        let mut out = String::new();
        out.push_str(&dataset.dim_names.join(","));
        out.push('\n');
        for row in seq.iter_rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        let mut f = fs::File::create(dir.join(format!("{name}.csv")))?;
        f.write_all(out.as_bytes())?;
    }
    Ok(())
}

/// Per-dimension normalization over pooled timesteps, with metadata stored
/// so [`denormalize`] is an exact inverse.
pub fn normalize(dataset: &SequenceDataset, mode: NormalizationMode) -> Result<SequenceDataset> {
    let d = dataset.input_dim();
    let mut out = dataset.clone();
    match mode {
        NormalizationMode::None => {
            out.normalization = Some(Normalization {
                mode,
                per_dim: Vec::new(),
            });
            Ok(out)
        }
        NormalizationMode::MinmaxToUnit => {
            let mut per_dim = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
            for seq in &dataset.sequences {
                for row in seq.iter_rows() {
                    for (j, &v) in row.iter().enumerate() {
                        per_dim[j].0 = per_dim[j].0.min(v);
                        per_dim[j].1 = per_dim[j].1.max(v);
                    }
                }
            }
            for (j, &(lo, hi)) in per_dim.iter().enumerate() {
                if hi - lo == 0.0 {
                    return Err(DatasetError::ZeroRange { dim: j }.into());
                }
            }
            for seq in &mut out.sequences {
                let cols = seq.cols();
                for (k, v) in seq.data_mut().iter_mut().enumerate() {
                    let (lo, hi) = per_dim[k % cols];
                    *v = (*v - lo) / (hi - lo);
                }
            }
            out.normalization = Some(Normalization { mode, per_dim });
            Ok(out)
        }
        NormalizationMode::Zscore => {
            let mut count = 0usize;
            let mut mean = vec![0.0; d];
            for seq in &dataset.sequences {
                count += seq.rows();
                for row in seq.iter_rows() {
                    for (m, &v) in mean.iter_mut().zip(row.iter()) {
                        *m += v;
                    }
                }
            }
            for m in mean.iter_mut() {
                *m /= count as f64;
            }
            let mut var = vec![0.0; d];
            for seq in &dataset.sequences {
                for row in seq.iter_rows() {
                    for (j, &v) in row.iter().enumerate() {
                        var[j] += (v - mean[j]) * (v - mean[j]);
                    }
                }
            }
            let mut per_dim = Vec::with_capacity(d);
            for j in 0..d {
                let std = (var[j] / count as f64).sqrt();
                if std == 0.0 {
                    return Err(DatasetError::ZeroRange { dim: j }.into());
                }
                per_dim.push((mean[j], std));
            }
            for seq in &mut out.sequences {
                let cols = seq.cols();
                for (k, v) in seq.data_mut().iter_mut().enumerate() {
                    let (m, s) = per_dim[k % cols];
                    *v = (*v - m) / s;
                }
            }
            out.normalization = Some(Normalization { mode, per_dim });
            Ok(out)
        }
    }
}

/// Exact inverse of [`normalize`] using the stored metadata.
pub fn denormalize(dataset: &SequenceDataset) -> Result<SequenceDataset> {
    let Some(norm) = &dataset.normalization else {
        return Ok(dataset.clone());
    };
    let mut out = dataset.clone();
    out.normalization = None;
    match norm.mode {
        NormalizationMode::None => Ok(out),
        NormalizationMode::MinmaxToUnit => {
            for seq in &mut out.sequences {
                let cols = seq.cols();
                for (k, v) in seq.data_mut().iter_mut().enumerate() {
                    let (lo, hi) = norm.per_dim[k % cols];
                    *v = *v * (hi - lo) + lo;
                }
            }
            Ok(out)
        }
        NormalizationMode::Zscore => {
            for seq in &mut out.sequences {
                let cols = seq.cols();
                for (k, v) in seq.data_mut().iter_mut().enumerate() {
                    let (m, s) = norm.per_dim[k % cols];
                    *v = *v * s + m;
                }
            }
            Ok(out)
        }
    }
}

/// Recipe for deriving novel test patterns from a training set: project
/// source sequences onto the top-k principal components of the pooled
/// frames, reconstruct, then scale, shift, and add Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NovelPatternSpec {
    pub count: usize,
    pub pca_components: usize,
    pub noise_std: f64,
    pub scale: f64,
    pub shift: f64,
    pub seed: u64,
}

impl Default for NovelPatternSpec {
    fn default() -> Self {
        NovelPatternSpec {
            count: 10,
            pca_components: 3,
            noise_std: 0.05,
            scale: 1.1,
            shift: 0.1,
            seed: 0,
        }
    }
}

pub fn synthesize_novel_patterns(
    dataset: &SequenceDataset,
    spec: &NovelPatternSpec,
) -> Result<Vec<Matrix>> {
    if dataset.is_empty() {
        return Err(Error::InsufficientData {
            context: "cannot synthesize patterns from an empty dataset".into(),
        });
    }
    let d = dataset.input_dim();
    if spec.pca_components > d {
        return Err(Error::invalid(format!(
            "pca_components {} exceeds input_dim {d}",
            spec.pca_components
        )));
    }
    if spec.count < 1 || spec.pca_components < 1 {
        return Err(Error::invalid("count and pca_components must be >= 1"));
    }

    // PCA over all pooled frames.
    let total_rows: usize = dataset.sequences.iter().map(Matrix::rows).sum();
    let mut pooled = Vec::with_capacity(total_rows * d);
    for seq in &dataset.sequences {
        pooled.extend_from_slice(seq.data());
    }
    let basis = pca_fit(&Matrix::from_vec(total_rows, d, pooled)?)?;

    let mut rng = RngStream::new(spec.seed, 0);
    let start = rng.usize_below(dataset.len());
    let mut patterns = Vec::with_capacity(spec.count);
    for p in 0..spec.count {
        let source = &dataset.sequences[(start + p) % dataset.len()];
        let mut data = Vec::with_capacity(source.len());
        for row in source.iter_rows() {
            let coeffs = basis.project(row, spec.pca_components);
            let recon = basis.reconstruct(&coeffs);
            for v in recon {
                let noise = if spec.noise_std > 0.0 {
                    spec.noise_std * rng.standard_normal()
                } else {
                    0.0
                };
                data.push(spec.scale * v + spec.shift + noise);
            }
        }
        patterns.push(Matrix::from_vec(source.rows(), d, data)?);
    }
    Ok(patterns)
}

/// Deterministic desk-scale data: a family of related superposed sinusoids.
/// Each dimension has a shared slow carrier and a weaker overtone; every
/// sequence perturbs their amplitudes, frequencies, and phases by a seeded
/// per-sequence jitter, so the sequences are distinct variations of one
/// motion family rather than unrelated curves.
pub fn synthetic_sinusoid_dataset(
    n_sequences: usize,
    input_dim: usize,
    t_len: usize,
    seed: u64,
) -> SequenceDataset {
    let mut rng = RngStream::new(seed, 0);
    // Two carrier families per dimension: a base family and its anti-phase
    // mirror. Sequences alternate between them and add a small per-sequence
    // jitter, giving a bimodal set of related motions rather than unrelated
    // curves.
    let mut base_family = Vec::with_capacity(input_dim);
    for _ in 0..input_dim {
        let amps = vec![rng.uniform(0.16, 0.32), rng.uniform(0.03, 0.1)];
        let freqs = vec![rng.uniform(0.3, 0.9), rng.uniform(1.0, 1.8)];
        let phases = rng.uniform_vec(2, 0.0, std::f64::consts::TAU);
        base_family.push((amps, freqs, phases));
    }
    let mirror: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = base_family
        .iter()
        .map(|(a, f, p)| {
            (
                a.clone(),
                f.clone(),
                p.iter().map(|v| v + std::f64::consts::PI).collect(),
            )
        })
        .collect();
    let families = [base_family, mirror];
    let mut sequences = Vec::with_capacity(n_sequences);
    let mut names = Vec::with_capacity(n_sequences);
    for i in 0..n_sequences {
        let base = &families[i % families.len()];
        let mut parts = Vec::with_capacity(input_dim);
        for (amps, freqs, phases) in base {
            let a: Vec<f64> = amps.iter().map(|v| v * rng.uniform(0.85, 1.15)).collect();
            let f: Vec<f64> = freqs.iter().map(|v| v * rng.uniform(0.95, 1.05)).collect();
            let p: Vec<f64> = phases
                .iter()
                .map(|v| v + rng.uniform(-0.4, 0.4))
                .collect();
            parts.push((a, f, p));
        }
        // Per-sequence resting offset, like a posture baseline.
        let offsets = rng.uniform_vec(input_dim, -0.16, 0.16);
        let mut data = Vec::with_capacity(t_len * input_dim);
        for t in 0..t_len {
            let phase = t as f64 / t_len as f64;
            for ((amps, freqs, phases), offset) in parts.iter().zip(offsets.iter()) {
                let mut v = *offset;
                for k in 0..2 {
                    v += amps[k] * (std::f64::consts::TAU * freqs[k] * phase + phases[k]).sin();
                }
                data.push(v);
            }
        }
        sequences.push(Matrix::from_vec(t_len, input_dim, data).unwrap());
        names.push(format!("synth-{i:03}"));
    }
    let dim_names = (0..input_dim).map(|j| format!("dim{j}")).collect();
    SequenceDataset::new(sequences, names, dim_names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_file(dir: &Path, name: &str, content: &str) {
        let mut f = fs::File::create(dir.join(name)).unwrap();
        f.write_all(content.as_bytes()).unwrap();
    }

    #[test]
    fn loads_a_directory_of_csvs() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "b.csv", "x,y\n1.0,2.0\n3.0,4.0\n");
        write_file(dir.path(), "a.csv", "x,y\n5.0,6.0\n7.0,8.0\n9.5,-1.25\n");
        let ds = load_sequences(dir.path()).unwrap();
        assert_eq!(ds.len(), 2);
        // Lexicographic order: a.csv first.
        assert_eq!(ds.names, vec!["a", "b"]);
        assert_eq!(ds.sequences[0].rows(), 3);
        assert_eq!(ds.sequences[1].get(1, 1), 4.0);
        assert_eq!(ds.dim_names, vec!["x", "y"]);
    }

    #[test]
    fn ragged_row_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "bad.csv", "x,y\n1.0,2.0\n3.0\n5.0,6.0\n");
        let err = load_sequences(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "message: {msg}");
    }

    #[test]
    fn non_numeric_cell_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "bad.csv", "x,y\n1.0,2.0\n3.0,oops\n");
        let err = load_sequences(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("column 2"), "message: {msg}");
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_sequences(dir.path()),
            Err(Error::Dataset(DatasetError::EmptyDataset(_)))
        ));
    }

    #[test]
    fn missing_path_is_an_error() {
        assert!(matches!(
            load_sequences(Path::new("/does/not/exist")),
            Err(Error::Dataset(DatasetError::MissingPath(_)))
        ));
    }

    #[test]
    fn dimension_mismatch_across_files() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "a.csv", "x,y\n1.0,2.0\n3.0,4.0\n");
        write_file(dir.path(), "b.csv", "x,y,z\n1.0,2.0,3.0\n4.0,5.0,6.0\n");
        assert!(matches!(
            load_sequences(dir.path()),
            Err(Error::Dataset(DatasetError::DimensionMismatch { .. }))
        ));
    }

    #[test]
    fn loader_round_trips_exactly() {
        let ds = synthetic_sinusoid_dataset(3, 2, 10, 99);
        let dir = tempfile::tempdir().unwrap();
        write_sequences(&ds, dir.path()).unwrap();
        let back = load_sequences(dir.path()).unwrap();
        assert_eq!(ds.sequences, back.sequences);
        assert_eq!(ds.names, back.names);
        assert_eq!(ds.dim_names, back.dim_names);
    }

    #[test]
    fn mode_none_is_identity() {
        let ds = synthetic_sinusoid_dataset(2, 3, 8, 1);
        let out = normalize(&ds, NormalizationMode::None).unwrap();
        assert_eq!(ds.sequences, out.sequences);
    }

    #[test]
    fn minmax_round_trips() {
        let ds = synthetic_sinusoid_dataset(2, 3, 8, 2);
        let normed = normalize(&ds, NormalizationMode::MinmaxToUnit).unwrap();
        for seq in &normed.sequences {
            assert!(seq.data().iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        }
        let back = denormalize(&normed).unwrap();
        for (a, b) in ds.sequences.iter().zip(back.sequences.iter()) {
            for (x, y) in a.data().iter().zip(b.data().iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zscore_standardizes_pooled_frames() {
        let ds = synthetic_sinusoid_dataset(3, 2, 20, 3);
        let normed = normalize(&ds, NormalizationMode::Zscore).unwrap();
        let d = ds.input_dim();
        let mut count = 0.0;
        let mut mean = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for seq in &normed.sequences {
            for row in seq.iter_rows() {
                count += 1.0;
                for j in 0..d {
                    mean[j] += row[j];
                    sq[j] += row[j] * row[j];
                }
            }
        }
        for j in 0..d {
            let m = mean[j] / count;
            let v = sq[j] / count - m * m;
            assert!(m.abs() < 1e-10, "dim {j} mean {m}");
            assert!((v - 1.0).abs() < 1e-10, "dim {j} var {v}");
        }
        let back = denormalize(&normed).unwrap();
        for (a, b) in ds.sequences.iter().zip(back.sequences.iter()) {
            for (x, y) in a.data().iter().zip(b.data().iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_range_dimension_is_rejected() {
        let seq = Matrix::from_rows(&[vec![1.0, 5.0], vec![1.0, 6.0], vec![1.0, 7.0]]).unwrap();
        let ds = SequenceDataset::new(vec![seq], vec!["c".into()], vec!["a".into(), "b".into()]);
        let err = normalize(&ds, NormalizationMode::MinmaxToUnit).unwrap_err();
        assert!(err.to_string().contains("dimension 0"), "{err}");
    }

    #[test]
    fn full_rank_synthesis_reproduces_source() {
        let ds = synthetic_sinusoid_dataset(4, 3, 12, 7);
        let spec = NovelPatternSpec {
            count: 4,
            pca_components: 3,
            noise_std: 0.0,
            scale: 1.0,
            shift: 0.0,
            seed: 5,
        };
        let patterns = synthesize_novel_patterns(&ds, &spec).unwrap();
        // Each pattern must match some source exactly (round-robin order).
        for pat in &patterns {
            let matches = ds.sequences.iter().any(|src| {
                src.rows() == pat.rows()
                    && src
                        .data()
                        .iter()
                        .zip(pat.data().iter())
                        .all(|(a, b)| (a - b).abs() < 1e-8)
            });
            assert!(matches);
        }
    }

    #[test]
    fn zero_scale_gives_constant_shift() {
        let ds = synthetic_sinusoid_dataset(2, 2, 6, 8);
        let spec = NovelPatternSpec {
            count: 1,
            pca_components: 2,
            noise_std: 0.0,
            scale: 0.0,
            shift: 0.75,
            seed: 5,
        };
        let patterns = synthesize_novel_patterns(&ds, &spec).unwrap();
        assert!(patterns[0].data().iter().all(|&v| (v - 0.75).abs() < 1e-12));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let ds = synthetic_sinusoid_dataset(3, 4, 10, 9);
        let spec = NovelPatternSpec::default();
        let a = synthesize_novel_patterns(&ds, &spec).unwrap();
        let b = synthesize_novel_patterns(&ds, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn component_count_must_fit_dimensionality() {
        let ds = synthetic_sinusoid_dataset(2, 2, 6, 8);
        let spec = NovelPatternSpec {
            pca_components: 3,
            ..NovelPatternSpec::default()
        };
        assert!(synthesize_novel_patterns(&ds, &spec).is_err());
    }
}
