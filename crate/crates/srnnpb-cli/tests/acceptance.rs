//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `--nocapture` to see them). Heavy trained models are shared
//! through a lazily built fleet.
//!
//! Desk scale: 8 synthetic 4-dimensional superposed-sinusoid sequences,
//! T = 60, deterministic generator seed 12345; models use 48 hidden units
//! and train 5,000 epochs at learning rate 0.01.

use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;

use srnnpb::analysis::{
    correlation_landscape, reconstruction_report, smoothness_metric, CorrelationGridSpec,
    Provenance,
};
use srnnpb::dataset::{
    synthesize_novel_patterns, synthetic_sinusoid_dataset, NovelPatternSpec, SequenceDataset,
};
use srnnpb::model::{generate_closed_loop, ModelConfig, ModelParams};
use srnnpb::numerics::{Matrix, RngStream};
use srnnpb::recognition::{
    run_recognition_experiment, InitMode, RecognitionConfig, TrialOutcome,
};
use srnnpb::testutil::{epoch_fd_report, mc_kl_estimate};
use srnnpb::training::{kl_divergence, train, LossBreakdown, TrainConfig};

use srnnpb_cli::checkpoint::{load_checkpoint, now_unix, save_checkpoint, Provenance as CkptProv};

const DATA_SEED: u64 = 12345;
const PATTERN_SEED: u64 = 777;
const HIDDEN: usize = 48;
const LEARNING_RATE: f64 = 0.01;
const EPOCHS: usize = 5_000;
const SEEDS: [u64; 3] = [1, 2, 3];
const SMOOTHNESS_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Condition {
    Strong,
    Weak,
    Zero,
    Deterministic,
}

impl Condition {
    fn beta(self) -> f64 {
        match self {
            Condition::Strong => 1e-3,
            Condition::Weak => 1e-6,
            Condition::Zero => 0.0,
            Condition::Deterministic => 0.0,
        }
    }

    fn deterministic(self) -> bool {
        matches!(self, Condition::Deterministic)
    }
}

type ModelKey = (Condition, usize, u64); // (condition, pb_dim, seed)

struct Fleet {
    dataset: SequenceDataset,
    patterns: Vec<Matrix>,
    models: HashMap<ModelKey, (ModelParams, Vec<LossBreakdown>)>,
    train_wall_seconds: f64,
}

fn desk_dataset() -> SequenceDataset {
    synthetic_sinusoid_dataset(8, 4, 60, DATA_SEED)
}

fn desk_patterns(dataset: &SequenceDataset) -> Vec<Matrix> {
    synthesize_novel_patterns(
        dataset,
        &NovelPatternSpec {
            count: 5,
            pca_components: 4,
            noise_std: 0.01,
            scale: 1.0,
            shift: 0.02,
            seed: PATTERN_SEED,
        },
    )
    .unwrap()
}

fn train_one(dataset: &SequenceDataset, key: ModelKey) -> (ModelParams, Vec<LossBreakdown>) {
    let (condition, pb_dim, seed) = key;
    let model = ModelConfig {
        input_dim: dataset.input_dim(),
        pb_dim,
        hidden_dim: HIDDEN,
        deterministic: condition.deterministic(),
        beta: condition.beta(),
    };
    let cfg = TrainConfig {
        epochs: EPOCHS,
        learning_rate: LEARNING_RATE,
        seed,
        ..TrainConfig::default()
    };
    train(dataset, model, &cfg).unwrap()
}

fn fleet() -> &'static Fleet {
    static FLEET: OnceLock<Fleet> = OnceLock::new();
    FLEET.get_or_init(|| {
        let dataset = desk_dataset();
        let patterns = desk_patterns(&dataset);

        let mut keys: Vec<ModelKey> = Vec::new();
        for condition in [
            Condition::Strong,
            Condition::Weak,
            Condition::Zero,
            Condition::Deterministic,
        ] {
            for pb_dim in [2usize, 4] {
                for seed in SEEDS {
                    keys.push((condition, pb_dim, seed));
                }
            }
        }
        // Extra strong/deterministic models for the 5-seed smoothness trend.
        for seed in SMOOTHNESS_SEEDS {
            for condition in [Condition::Strong, Condition::Deterministic] {
                let key = (condition, 2usize, seed);
                if !keys.contains(&key) {
                    keys.push(key);
                }
            }
        }

        let started = Instant::now();
        let trained: Vec<(ModelKey, (ModelParams, Vec<LossBreakdown>))> = keys
            .par_iter()
            .map(|&key| (key, train_one(&dataset, key)))
            .collect();
        let train_wall_seconds = started.elapsed().as_secs_f64();

        Fleet {
            dataset,
            patterns,
            models: trained.into_iter().collect(),
            train_wall_seconds,
        }
    })
}

fn report_line(name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {name}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let config = ModelConfig {
        input_dim: 2,
        pb_dim: 2,
        hidden_dim: 3,
        deterministic: false,
        beta: 1e-3,
    };
    let mut rng = RngStream::new(99, 0);
    let params = ModelParams::init(config, 2, &mut rng).unwrap();
    let targets = vec![
        Matrix::from_vec(5, 2, rng.gaussian(10)).unwrap(),
        Matrix::from_vec(5, 2, rng.gaussian(10)).unwrap(),
    ];
    let epsilons = vec![rng.gaussian(2), rng.gaussian(2)];
    let report = epoch_fd_report(&params, &targets, &epsilons, 1e-5);
    let elapsed = started.elapsed().as_secs_f64();
    let pass = report.max_rel_error < 1e-4 && elapsed < 10.0;
    report_line(
        "1 (gradient correctness)",
        pass,
        &format!(
            "max relative error {:.3e} over {} parameters in {elapsed:.2}s",
            report.max_rel_error,
            report.analytic.len()
        ),
    );
    assert!(
        report.max_rel_error < 1e-4,
        "worst parameter {}: analytic {:.6e} vs numeric {:.6e}",
        report.worst_index,
        report.analytic[report.worst_index],
        report.numeric[report.worst_index]
    );
    assert!(elapsed < 10.0, "gradient check took {elapsed:.1}s");
}

#[test]
fn criterion_2_kl_closed_form() {
    // Exact trivial cases first.
    let mu = Matrix::zeros(3, 4);
    let ls = Matrix::zeros(3, 4);
    assert_eq!(kl_divergence(&mu, &ls).unwrap(), 0.0);
    let mu = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
    let ls = Matrix::zeros(1, 1);
    assert!((kl_divergence(&mu, &ls).unwrap() - 0.5).abs() < 1e-15);

    let mut rng = RngStream::new(2024, 0);
    let mut worst = 0.0f64;
    let mut pass = true;
    for _ in 0..20 {
        let d = 1 + rng.usize_below(4);
        let mu_v = rng.uniform_vec(d, -2.0, 2.0);
        let ls_v = rng.uniform_vec(d, -1.2, 0.8);
        let mu = Matrix::from_vec(1, d, mu_v.clone()).unwrap();
        let ls = Matrix::from_vec(1, d, ls_v.clone()).unwrap();
        let closed = kl_divergence(&mu, &ls).unwrap();
        let sigma: Vec<f64> = ls_v.iter().map(|v| v.exp()).collect();
        let (mc, se) = mc_kl_estimate(&mu_v, &sigma, 100_000, &mut rng);
        let sigmas_off = (closed - mc).abs() / se;
        worst = worst.max(sigmas_off);
        if sigmas_off > 3.0 {
            pass = false;
        }
    }
    report_line(
        "2 (KL closed form)",
        pass,
        &format!("worst deviation {worst:.2} standard errors over 20 draws"),
    );
    assert!(pass, "closed form deviated {worst:.2} standard errors");
}

#[test]
fn criterion_3_table1_trend() {
    let fleet = fleet();
    let mut all_pass = true;
    let mut details = Vec::new();
    for pb_dim in [2usize, 4] {
        let mut ordered = 0;
        for seed in SEEDS {
            let mut means = Vec::new();
            for condition in [Condition::Strong, Condition::Weak, Condition::Zero] {
                let (params, _) = &fleet.models[&(condition, pb_dim, seed)];
                let mut rng = RngStream::new(500 + seed, 0);
                let report = reconstruction_report(
                    params,
                    &fleet.dataset,
                    100,
                    false,
                    &mut rng,
                    Provenance::local(seed),
                )
                .unwrap();
                let (mean, _) = report.column_stats("loss").unwrap();
                means.push(mean);
            }
            if means[0] > means[1] && means[1] > means[2] {
                ordered += 1;
            }
            details.push(format!(
                "D_PB={pb_dim} seed {seed}: strong {:.3e} weak {:.3e} zero {:.3e}",
                means[0], means[1], means[2]
            ));
        }
        details.push(format!("D_PB={pb_dim}: ordering holds in {ordered}/3 seeds"));
        if ordered < 2 {
            all_pass = false;
        }
    }
    let detail = format!(
        "{} (training wall {:.0}s)",
        details.join("; "),
        fleet.train_wall_seconds
    );
    report_line("3 (Table I trend, desk scale)", all_pass, &detail);
    assert!(
        fleet.train_wall_seconds < 1800.0,
        "criterion 3 training exceeded its 30 min budget"
    );
    assert!(all_pass, "{detail}");
}

fn recognition_runs(
    params: &ModelParams,
    patterns: &[Matrix],
    modes: &[InitMode],
    seed: u64,
) -> Vec<TrialOutcome> {
    let cfg = RecognitionConfig {
        iterations: 100,
        learning_rate: 0.1,
        observed_fraction: 0.8,
        trials: 5,
        seed,
        ..RecognitionConfig::default()
    };
    run_recognition_experiment(params, patterns, &cfg, modes).unwrap()
}

fn mode_mean(runs: &[TrialOutcome], mode: InitMode) -> f64 {
    let v: Vec<f64> = runs
        .iter()
        .filter(|o| o.init_mode == mode)
        .map(|o| o.result.reconstruction_loss)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Recognition outcomes of criterion 4, shared with criterion 6.
fn criterion_4_outcomes() -> &'static Vec<(u64, Vec<TrialOutcome>, Vec<TrialOutcome>)> {
    static OUTCOMES: OnceLock<Vec<(u64, Vec<TrialOutcome>, Vec<TrialOutcome>)>> = OnceLock::new();
    OUTCOMES.get_or_init(|| {
        let fleet = fleet();
        let modes = [InitMode::Baseline, InitMode::Learned];
        SEEDS
            .iter()
            .map(|&seed| {
                let (weak, _) = &fleet.models[&(Condition::Weak, 4, seed)];
                let (det, _) = &fleet.models[&(Condition::Deterministic, 4, seed)];
                let weak_runs = recognition_runs(weak, &fleet.patterns, &modes, 1000 + seed);
                let det_runs = recognition_runs(det, &fleet.patterns, &modes, 1000 + seed);
                (seed, weak_runs, det_runs)
            })
            .collect()
    })
}

#[test]
fn criterion_4_table2_trend() {
    let started = Instant::now();
    let outcomes = criterion_4_outcomes();

    let mut a_hits = 0;
    let mut b_hits = 0;
    let mut details = Vec::new();
    for (seed, weak_runs, det_runs) in outcomes.iter() {
        let weak_base = mode_mean(weak_runs, InitMode::Baseline);
        let det_base = mode_mean(det_runs, InitMode::Baseline);
        let weak_learn = mode_mean(weak_runs, InitMode::Learned);
        let det_learn = mode_mean(det_runs, InitMode::Learned);
        if det_base >= 3.0 * weak_base {
            a_hits += 1;
        }
        let ratio = det_learn / weak_learn;
        if (1.0 / 3.0..=3.0).contains(&ratio) {
            b_hits += 1;
        }
        details.push(format!(
            "seed {seed}: baseline det/weak {:.3e}/{:.3e} (x{:.2}), learned det/weak {:.3e}/{:.3e} (x{:.2})",
            det_base,
            weak_base,
            det_base / weak_base,
            det_learn,
            weak_learn,
            ratio
        ));
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass_a = a_hits >= 2;
    let pass_b = b_hits >= 2;
    let detail = format!(
        "(a) factor>=3 in {a_hits}/3 seeds, (b) within factor 3 in {b_hits}/3 seeds; {}; {elapsed:.0}s",
        details.join("; ")
    );
    report_line("4 (Table II trend, desk scale)", pass_a && pass_b, &detail);
    assert!(elapsed < 900.0, "criterion 4 exceeded its 15 min budget");
    assert!(pass_b, "(b) failed: {detail}");
    assert!(pass_a, "(a) failed: {detail}");
}

/// Recognition outcomes of criterion 5, shared with criterion 6.
fn criterion_5_outcomes() -> &'static Vec<TrialOutcome> {
    static OUTCOMES: OnceLock<Vec<TrialOutcome>> = OnceLock::new();
    OUTCOMES.get_or_init(|| {
        let fleet = fleet();
        let (weak, _) = &fleet.models[&(Condition::Weak, 4, 1)];
        let mut all = Vec::new();
        for trial in 0..10u64 {
            let mu_star = weak.pb_mu.row((trial % 8) as usize).to_vec();
            let (target, _) = generate_closed_loop(weak, &mu_star, 60).unwrap();
            let cfg = RecognitionConfig {
                iterations: 1000,
                learning_rate: 0.1,
                observed_fraction: 0.8,
                trials: 1,
                seed: 3000 + trial,
                init_mode: InitMode::Learned,
                ..RecognitionConfig::default()
            };
            let runs =
                run_recognition_experiment(weak, &[target], &cfg, &[InitMode::Learned]).unwrap();
            all.extend(runs);
        }
        all
    })
}

#[test]
fn criterion_5_recognition_self_consistency() {
    let outcomes = criterion_5_outcomes();
    let mut hits = 0;
    let mut details = Vec::new();
    for (trial, outcome) in outcomes.iter().enumerate() {
        let recon = outcome.result.reconstruction_loss;
        let pred = outcome.result.prediction_error.unwrap();
        let ok = recon < 1e-4 && pred < 1e-3;
        hits += ok as usize;
        details.push(format!("trial {trial}: recon {recon:.2e} pred {pred:.2e}"));
    }
    let pass = hits >= 9;
    report_line(
        "5 (recognition self-consistency)",
        pass,
        &format!("{hits}/10 trials recovered; {}", details.join("; ")),
    );
    assert!(pass, "only {hits}/10 trials recovered the generating PB");
}

#[test]
fn criterion_6_early_update_invariants() {
    // Theta immutability: recognition-facing API takes &ModelParams; verify
    // bitwise anyway against a snapshot around a full experiment.
    let fleet = fleet();
    let (weak, _) = &fleet.models[&(Condition::Weak, 4, 1)];
    let snapshot = weak.to_flat();
    let _ = recognition_runs(weak, &fleet.patterns[..1].to_vec(), &[InitMode::Baseline], 42);
    let after = weak.to_flat();
    let theta_ok = snapshot
        .iter()
        .zip(after.iter())
        .all(|(a, b)| a.to_bits() == b.to_bits());

    // L_MIN monotone and fired updates copy the sampled PB exactly, over
    // every recognition run of criteria 4 and 5.
    let mut monotone_ok = true;
    let mut copy_ok = true;
    let mut runs = 0usize;
    let mut check = |outcomes: &[TrialOutcome]| {
        for o in outcomes {
            runs += 1;
            let mut prev = f64::INFINITY;
            for rec in &o.result.trace {
                if rec.l_min > prev {
                    monotone_ok = false;
                }
                prev = rec.l_min;
                if rec.early_update_fired && rec.mu_after != rec.pb {
                    copy_ok = false;
                }
            }
        }
    };
    for (_, weak_runs, det_runs) in criterion_4_outcomes() {
        check(weak_runs);
        check(det_runs);
    }
    check(criterion_5_outcomes());

    let pass = theta_ok && monotone_ok && copy_ok;
    report_line(
        "6 (early-update invariants)",
        pass,
        &format!(
            "{runs} recognition runs: L_MIN monotone {monotone_ok}, exact PB copies {copy_ok}, theta bitwise unchanged {theta_ok}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_latent_smoothness() {
    let fleet = fleet();
    let mut hits = 0;
    let mut details = Vec::new();
    for seed in SMOOTHNESS_SEEDS {
        let (strong, _) = &fleet.models[&(Condition::Strong, 2, seed)];
        let (det, _) = &fleet.models[&(Condition::Deterministic, 2, seed)];
        let mut strong_vals = Vec::new();
        let mut det_vals = Vec::new();
        for seq in 0..4usize {
            let spec = CorrelationGridSpec {
                sequence_index: seq,
                axis_dims: (0, 1),
                grid_points: 20,
                span: 1.0,
            };
            let target = &fleet.dataset.sequences[seq];
            let sg = correlation_landscape(strong, target, &spec, Provenance::local(seed)).unwrap();
            let dg = correlation_landscape(det, target, &spec, Provenance::local(seed)).unwrap();
            strong_vals.push(smoothness_metric(&sg).unwrap());
            det_vals.push(smoothness_metric(&dg).unwrap());
        }
        let s = strong_vals.iter().sum::<f64>() / strong_vals.len() as f64;
        let d = det_vals.iter().sum::<f64>() / det_vals.len() as f64;
        if s < d {
            hits += 1;
        }
        details.push(format!("seed {seed}: strong {s:.4} det {d:.4}"));
    }
    let pass = hits >= 4;
    report_line(
        "7 (latent smoothness trend)",
        pass,
        &format!("strong smoother in {hits}/5 seeds; {}", details.join("; ")),
    );
    assert!(pass, "strong prior smoother in only {hits}/5 seeds");
}

#[test]
fn criterion_8_determinism_and_persistence() {
    // Small but real training runs, twice, bitwise.
    let dataset = synthetic_sinusoid_dataset(4, 3, 20, 7);
    let model = ModelConfig {
        input_dim: 3,
        pb_dim: 2,
        hidden_dim: 8,
        deterministic: false,
        beta: 1e-6,
    };
    let cfg = TrainConfig {
        epochs: 200,
        learning_rate: 0.005,
        seed: 31,
        ..TrainConfig::default()
    };
    let (params_a, history_a) = train(&dataset, model.clone(), &cfg).unwrap();
    let (params_b, history_b) = train(&dataset, model, &cfg).unwrap();
    let bitwise_train = params_a
        .to_flat()
        .iter()
        .zip(params_b.to_flat().iter())
        .all(|(a, b)| a.to_bits() == b.to_bits())
        && history_a == history_b;

    // Checkpoint round-trip: bitwise lossless.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.srnnpb");
    let prov = CkptProv {
        seed: cfg.seed,
        epochs_completed: cfg.epochs,
        final_loss: *history_a.last().unwrap(),
        sequence_names: dataset.names.clone(),
        sequence_lengths: dataset.lengths(),
        dim_names: dataset.dim_names.clone(),
        created_unix: now_unix(),
    };
    save_checkpoint(&params_a, None, &prov, &path).unwrap();
    let (loaded, _) = load_checkpoint(&path).unwrap();
    let bitwise_ckpt = params_a
        .to_flat()
        .iter()
        .zip(loaded.to_flat().iter())
        .all(|(a, b)| a.to_bits() == b.to_bits());

    // Reports are pure functions of (params, seed).
    let report_a = reconstruction_report(
        &params_a,
        &dataset,
        20,
        false,
        &mut RngStream::new(5, 0),
        Provenance::local(5),
    )
    .unwrap();
    let report_b = reconstruction_report(
        &loaded,
        &dataset,
        20,
        false,
        &mut RngStream::new(5, 0),
        Provenance::local(5),
    )
    .unwrap();
    let reports_equal = report_a.rows == report_b.rows;

    let pass = bitwise_train && bitwise_ckpt && reports_equal;
    report_line(
        "8 (determinism and persistence)",
        pass,
        &format!(
            "training bitwise {bitwise_train}, checkpoint round-trip bitwise {bitwise_ckpt}, reports identical {reports_equal}"
        ),
    );
    assert!(pass);
}
