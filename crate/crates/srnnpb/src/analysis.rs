//! Plot-ready analyses of a trained model: PB density curves, latent-space
//! PCA scatter, correlation landscapes over the PB plane, and loss reports.
//! Every report is a pure function of (parameters, config, seed) and
//! serializes to a CSV of rows plus a JSON sidecar of provenance.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataset::SequenceDataset;
use crate::error::{Error, Result};
use crate::model::{generate_closed_loop, reparameterize, ModelParams};
use crate::numerics::{pca_fit, pearson_correlation, Matrix, RngStream};
use crate::recognition::TrialOutcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub checkpoint_id: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new(checkpoint_id: impl Into<String>, seed: u64, config: serde_json::Value) -> Self {
        Provenance {
            checkpoint_id: checkpoint_id.into(),
            seed,
            config,
        }
    }

    pub fn local(seed: u64) -> Self {
        Provenance::new("unsaved", seed, json!({}))
    }
}

/// Rectangular table of real values with a kind tag and column names.
/// Degenerate cells are explicit NaN markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub kind: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl AnalysisReport {
    pub fn new(kind: impl Into<String>, columns: Vec<String>, provenance: Provenance) -> Self {
        AnalysisReport {
            kind: kind.into(),
            columns,
            rows: Vec::new(),
            provenance,
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Mean and population standard deviation of one column.
    pub fn column_stats(&self, name: &str) -> Result<(f64, f64)> {
        let idx = self
            .column_index(name)
            .ok_or_else(|| Error::invalid(format!("no column '{name}' in {}", self.kind)))?;
        let values: Vec<f64> = self.rows.iter().map(|r| r[idx]).collect();
        if values.is_empty() {
            return Err(Error::InsufficientData {
                context: format!("column '{name}' has no rows"),
            });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok((mean, var.sqrt()))
    }

    /// `<kind>-<checkpoint-id>.csv` next to `<kind>-<checkpoint-id>.json`.
    pub fn write_with_sidecar(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let stem = format!("{}-{}", self.kind, self.provenance.checkpoint_id);
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        self.write_csv(&csv_path)?;
        let sidecar = json!({
            "kind": self.kind,
            "columns": self.columns,
            "rows": self.rows.len(),
            "provenance": self.provenance,
        });
        let mut f = fs::File::create(&json_path)?;
        f.write_all(serde_json::to_string_pretty(&sidecar).unwrap().as_bytes())?;
        f.write_all(b"\n")?;
        Ok((csv_path, json_path))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|v| {
                    if v.is_nan() {
                        "NaN".to_string()
                    } else {
                        format!("{v}")
                    }
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        let mut f = fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }
}

/// Table-style cell: mean with the standard deviation in parentheses, six
/// decimal places.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.6} ({std:.6})")
}

/// Gaussian pdf of each PB dimension over an x range.
pub fn pb_density_curves(
    mu: &[f64],
    sigma: &[f64],
    x_range: (f64, f64),
    samples: usize,
    provenance: Provenance,
) -> Result<AnalysisReport> {
    if mu.len() != sigma.len() {
        return Err(Error::shape(format!(
            "mu length {} != sigma length {}",
            mu.len(),
            sigma.len()
        )));
    }
    if sigma.iter().any(|&s| s <= 0.0) {
        return Err(Error::invalid("density curves need sigma > 0"));
    }
    if samples < 2 {
        return Err(Error::invalid("need at least 2 sample points"));
    }
    let mut columns = vec!["x".to_string()];
    columns.extend((0..mu.len()).map(|j| format!("pdf_{j}")));
    let mut report = AnalysisReport::new("pb-density", columns, provenance);
    let (lo, hi) = x_range;
    let step = (hi - lo) / (samples - 1) as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    for k in 0..samples {
        let x = lo + step * k as f64;
        let mut row = Vec::with_capacity(mu.len() + 1);
        row.push(x);
        for (m, s) in mu.iter().zip(sigma.iter()) {
            let z = (x - m) / s;
            row.push(norm / s * (-0.5 * z * z).exp());
        }
        report.push(row);
    }
    Ok(report)
}

/// Draw PBs from every sequence's learned distribution, fit a PCA over the
/// pooled samples, and emit 2D projections labeled by sequence. In
/// deterministic mode only the learned mu rows are plotted.
pub fn pb_pca_projection(
    params: &ModelParams,
    samples_per_sequence: usize,
    rng: &mut RngStream,
    provenance: Provenance,
) -> Result<AnalysisReport> {
    let n = params.n_sequences();
    let pb_dim = params.config.pb_dim;
    let mut pbs: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<(usize, usize)> = Vec::new();
    if params.config.deterministic {
        for i in 0..n {
            pbs.push(params.pb_mu.row(i).to_vec());
            labels.push((i, 0));
        }
    } else {
        for i in 0..n {
            let mu = params.pb_mu.row(i);
            let sigma = params.sigma_row(i);
            for s in 0..samples_per_sequence {
                let eps = rng.gaussian(pb_dim);
                pbs.push(reparameterize(mu, &sigma, &eps)?);
                labels.push((i, s));
            }
        }
    }
    let rows = Matrix::from_rows(&pbs)?;
    let basis = pca_fit(&rows)?;
    let k = pb_dim.min(2);
    let mut report = AnalysisReport::new(
        "pb-pca",
        vec![
            "sequence".to_string(),
            "sample".to_string(),
            "pc1".to_string(),
            "pc2".to_string(),
        ],
        provenance,
    );
    for (pb, (seq, sample)) in pbs.iter().zip(labels.iter()) {
        let proj = basis.project(pb, k);
        let pc1 = proj.first().copied().unwrap_or(0.0);
        let pc2 = proj.get(1).copied().unwrap_or(0.0);
        report.push(vec![*seq as f64, *sample as f64, pc1, pc2]);
    }
    Ok(report)
}

/// A grid over two PB dimensions, centered at one sequence's learned mu.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationGridSpec {
    pub sequence_index: usize,
    pub axis_dims: (usize, usize),
    pub grid_points: usize,
    pub span: f64,
}

impl CorrelationGridSpec {
    pub fn validate(&self, pb_dim: usize) -> Result<()> {
        if self.grid_points < 2 {
            return Err(Error::invalid("grid needs at least 2 points per axis"));
        }
        let (a, b) = self.axis_dims;
        if a == b || a >= pb_dim || b >= pb_dim {
            return Err(Error::invalid(format!(
                "axis dims ({a}, {b}) must be distinct and < pb_dim {pb_dim}"
            )));
        }
        Ok(())
    }
}

/// Sweep two PB-mean coordinates over a grid around the learned mu, roll
/// out with sigma = 0 at every cell, and record the Pearson correlation of
/// the generated sequence against the target over flattened values.
/// Degenerate (constant) rollouts flag their cell and report r = 0.
pub fn correlation_landscape(
    params: &ModelParams,
    target: &Matrix,
    spec: &CorrelationGridSpec,
    provenance: Provenance,
) -> Result<AnalysisReport> {
    spec.validate(params.config.pb_dim)?;
    if spec.sequence_index >= params.n_sequences() {
        return Err(Error::invalid(format!(
            "sequence index {} out of range ({} sequences)",
            spec.sequence_index,
            params.n_sequences()
        )));
    }
    let center = params.pb_mu.row(spec.sequence_index).to_vec();
    let (j1, j2) = spec.axis_dims;
    let g = spec.grid_points;
    let coord = |k: usize, c: f64| {
        if g == 1 {
            c
        } else {
            c - spec.span + 2.0 * spec.span * k as f64 / (g - 1) as f64
        }
    };

    let cells: Vec<(usize, usize)> = (0..g).flat_map(|r| (0..g).map(move |c| (r, c))).collect();
    let evaluated: Vec<Result<Vec<f64>>> = cells
        .par_iter()
        .map(|&(row, col)| {
            let mut mu = center.clone();
            mu[j1] = coord(row, center[j1]);
            mu[j2] = coord(col, center[j2]);
            let (seq, _) = generate_closed_loop(params, &mu, target.rows())?;
            let corr = pearson_correlation(seq.data(), target.data())?;
            Ok(vec![
                row as f64,
                col as f64,
                mu[j1],
                mu[j2],
                corr.r,
                if corr.degenerate { 1.0 } else { 0.0 },
            ])
        })
        .collect();

    let mut report = AnalysisReport::new(
        "correlation-landscape",
        vec![
            "row".to_string(),
            "col".to_string(),
            "mu_a".to_string(),
            "mu_b".to_string(),
            "r".to_string(),
            "degenerate".to_string(),
        ],
        provenance,
    );
    for cell in evaluated {
        report.push(cell?);
    }
    Ok(report)
}

/// Sample PBs from each sequence's learned distribution, roll out, and
/// report the summed squared error per sample. Deterministic models (or a
/// sigma-zero override) collapse to one sample per sequence.
pub fn reconstruction_report(
    params: &ModelParams,
    dataset: &SequenceDataset,
    samples_per_sequence: usize,
    sigma_zero: bool,
    rng: &mut RngStream,
    provenance: Provenance,
) -> Result<AnalysisReport> {
    if dataset.len() != params.n_sequences() {
        return Err(Error::shape(format!(
            "dataset has {} sequences, model has {} PB rows",
            dataset.len(),
            params.n_sequences()
        )));
    }
    let collapse = params.config.deterministic || sigma_zero;
    let per_seq = if collapse { 1 } else { samples_per_sequence.max(1) };
    let mut report = AnalysisReport::new(
        "reconstruction-report",
        vec![
            "sequence".to_string(),
            "sample".to_string(),
            "loss".to_string(),
        ],
        provenance,
    );
    for (i, target) in dataset.sequences.iter().enumerate() {
        let mu = params.pb_mu.row(i).to_vec();
        let sigma = params.sigma_row(i);
        for s in 0..per_seq {
            let pb = if collapse {
                mu.clone()
            } else {
                let eps = rng.gaussian(params.config.pb_dim);
                reparameterize(&mu, &sigma, &eps)?
            };
            let (seq, _) = generate_closed_loop(params, &pb, target.rows())?;
            let loss = crate::training::sequence_sq_error(target, &seq);
            report.push(vec![i as f64, s as f64, loss]);
        }
    }
    Ok(report)
}

/// Per-trial rows of a recognition experiment.
pub fn recognition_trial_report(
    outcomes: &[TrialOutcome],
    provenance: Provenance,
) -> AnalysisReport {
    let mut report = AnalysisReport::new(
        "recognition-trials",
        vec![
            "init_mode".to_string(),
            "pattern".to_string(),
            "trial".to_string(),
            "recon_loss".to_string(),
            "prediction_error".to_string(),
        ],
        provenance,
    );
    for o in outcomes {
        report.push(vec![
            mode_code(o),
            o.pattern as f64,
            o.trial as f64,
            o.result.reconstruction_loss,
            o.result.prediction_error.unwrap_or(f64::NAN),
        ]);
    }
    report
}

/// One summary row per init mode: mean and standard deviation of the
/// reconstruction loss and prediction error over all patterns and trials.
pub fn recognition_summary_report(
    outcomes: &[TrialOutcome],
    provenance: Provenance,
) -> AnalysisReport {
    let mut report = AnalysisReport::new(
        "recognition-summary",
        vec![
            "init_mode".to_string(),
            "recon_mean".to_string(),
            "recon_std".to_string(),
            "pred_mean".to_string(),
            "pred_std".to_string(),
            "n".to_string(),
        ],
        provenance,
    );
    let mut seen = Vec::new();
    for o in outcomes {
        if !seen.contains(&o.init_mode) {
            seen.push(o.init_mode);
        }
    }
    for mode in seen {
        let recon: Vec<f64> = outcomes
            .iter()
            .filter(|o| o.init_mode == mode)
            .map(|o| o.result.reconstruction_loss)
            .collect();
        let pred: Vec<f64> = outcomes
            .iter()
            .filter(|o| o.init_mode == mode)
            .filter_map(|o| o.result.prediction_error)
            .collect();
        let (rm, rs) = mean_std(&recon);
        let (pm, ps) = if pred.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            mean_std(&pred)
        };
        report.push(vec![
            mode_index(mode),
            rm,
            rs,
            pm,
            ps,
            recon.len() as f64,
        ]);
    }
    report
}

fn mode_code(o: &TrialOutcome) -> f64 {
    mode_index(o.init_mode)
}

fn mode_index(mode: crate::recognition::InitMode) -> f64 {
    match mode {
        crate::recognition::InitMode::Baseline => 0.0,
        crate::recognition::InitMode::Learned => 1.0,
        crate::recognition::InitMode::Random => 2.0,
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean absolute difference between 4-neighbor adjacent grid cells of a
/// correlation landscape. Lower means smoother.
pub fn smoothness_metric(grid: &AnalysisReport) -> Result<f64> {
    let row_idx = grid
        .column_index("row")
        .ok_or_else(|| Error::invalid("grid report lacks a 'row' column"))?;
    let col_idx = grid
        .column_index("col")
        .ok_or_else(|| Error::invalid("grid report lacks a 'col' column"))?;
    let r_idx = grid
        .column_index("r")
        .ok_or_else(|| Error::invalid("grid report lacks an 'r' column"))?;

    let mut n_rows = 0usize;
    let mut n_cols = 0usize;
    for row in &grid.rows {
        n_rows = n_rows.max(row[row_idx] as usize + 1);
        n_cols = n_cols.max(row[col_idx] as usize + 1);
    }
    if n_rows < 2 || n_cols < 2 {
        return Err(Error::InsufficientData {
            context: format!("smoothness needs at least a 2x2 grid, got {n_rows}x{n_cols}"),
        });
    }
    let mut values = vec![f64::NAN; n_rows * n_cols];
    for row in &grid.rows {
        values[row[row_idx] as usize * n_cols + row[col_idx] as usize] = row[r_idx];
    }
    let mut sum = 0.0;
    let mut edges = 0usize;
    for r in 0..n_rows {
        for c in 0..n_cols {
            let v = values[r * n_cols + c];
            if c + 1 < n_cols {
                sum += (v - values[r * n_cols + c + 1]).abs();
                edges += 1;
            }
            if r + 1 < n_rows {
                sum += (v - values[(r + 1) * n_cols + c]).abs();
                edges += 1;
            }
        }
    }
    Ok(sum / edges as f64)
}
