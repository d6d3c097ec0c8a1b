//! Acceptance suite: one test per release criterion, each printing a
//! `criterion N: PASS/SKIP` line (failures panic with the measurement).
//!
//! Criteria 1 and 9 need converted public datasets; they look in
//! `$EPAGCL_DATA_DIR` (default `<workspace>/data`) and report SKIP when a
//! dataset is absent (no network access here by design: see the README for
//! how to obtain and convert the files). Criterion 9 is an extended run and
//! is `#[ignore]`d by default:
//! `cargo test --test acceptance -- --ignored --nocapture`.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use epagcl::augment::{weights_to_probabilities, AugmentationConfig, WeightMode};
use epagcl::contrastive::{contrastive_loss, contrastive_loss_and_grad};
use epagcl::graph::{error_passing_rate, NormalizedAdjacency};
use epagcl::io::{load_dataset_dir, metrics_to_string, MetricsRecord};
use epagcl::matrix::Matrix;
use epagcl::nn::{backward, forward, EncoderConfig, EncoderParams};
use epagcl::pipeline::{
    embed, linear_probe, random_split, sbm_generate, train, train_with_mode, AugmentationMode,
    ProbeConfig, TrainConfig,
};
use epagcl::rng::StreamRng;
use epagcl::theory::{
    verify_identity_grid, verify_orientation_antisymmetry, verify_sign_law_exhaustive,
};

fn data_dir() -> PathBuf {
    std::env::var("EPAGCL_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|_| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR"))
                .join("../..")
                .join("data")
        })
}

#[test]
fn criterion_01_epr_fixtures_match_published_table() {
    let expected = [
        ("cora", 0.168),
        ("citeseer", 0.286),
        ("pubmed", 0.207),
        ("wikics", 0.288),
    ];
    let mut checked = 0;
    for (name, want) in expected {
        let dir = data_dir().join(name);
        if !dir.join("edges.txt").exists() {
            println!(
                "criterion 1: SKIP {name} - dataset not found at {} (see README: datasets)",
                dir.display()
            );
            continue;
        }
        let bundle = load_dataset_dir(&dir).expect("dataset loads");
        let start = Instant::now();
        let report = error_passing_rate(&bundle.graph).expect("labels present");
        let seconds = start.elapsed().as_secs_f64();
        let raw = epagcl::graph::error_passing_rate_with(
            &bundle.graph,
            epagcl::graph::MassConvention::Raw,
        )
        .unwrap();
        assert!(
            (report.rate - want).abs() <= 0.001,
            "criterion 1: FAIL {name} - rate {:.4} vs published {want} (±0.001; plain-degree variant {:.4})",
            report.rate,
            raw.rate
        );
        assert!(
            seconds < 2.0,
            "criterion 1: FAIL {name} - took {seconds:.2}s (>2s)"
        );
        println!(
            "criterion 1: PASS {name} - rate {:.4} vs {want} in {seconds:.3}s (plain-degree variant {:.4})",
            report.rate, raw.rate
        );
        checked += 1;
    }
    if checked == 0 {
        println!("criterion 1: SKIP - no converted datasets present");
    }
}

#[test]
fn criterion_02_sign_law_exhaustive_over_six_nodes() {
    let start = Instant::now();
    let report = verify_sign_law_exhaustive(6, 2).expect("sweep runs");
    let seconds = start.elapsed().as_secs_f64();
    assert!(
        report.violations.is_empty(),
        "criterion 2: FAIL - {} sign violations (first: {:?})",
        report.violations.len(),
        report.violations.first()
    );
    assert!(
        seconds <= 600.0,
        "criterion 2: FAIL - took {seconds:.0}s (>10min)"
    );
    println!(
        "criterion 2: PASS - {} additions over {} gated labeled graphs, zero violations, min |delta| {:.4}, {seconds:.1}s",
        report.additions_checked,
        report.labeled_graphs_checked,
        report.min_abs_delta.unwrap()
    );
}

#[test]
fn criterion_03_closed_form_identity_on_constructions() {
    let start = Instant::now();
    let report = verify_identity_grid(&[(3, 1), (2, 1), (2, 2)], &[12, 24, 48])
        .expect("constructions build");
    let seconds = start.elapsed().as_secs_f64();
    assert!(
        report.max_residual <= 1e-10,
        "criterion 3: FAIL - max residual {:.3e} (>1e-10)",
        report.max_residual
    );
    assert!(
        seconds <= 60.0,
        "criterion 3: FAIL - took {seconds:.1}s (>1min)"
    );
    let cells = report.cells.len();
    let candidates: usize = report.cells.iter().map(|c| c.candidates).sum();
    println!(
        "criterion 3: PASS - {candidates} candidate adds+drops across {cells} constructions, max residual {:.2e}, {seconds:.1}s",
        report.max_residual
    );
}

#[test]
fn criterion_04_orientation_antisymmetry() {
    let report = verify_orientation_antisymmetry(1000, 7).expect("random cases build");
    assert_eq!(report.cases, 1000);
    assert!(
        report.max_abs_sum <= 1e-12,
        "criterion 4: FAIL - max |delta_add + delta_drop| = {:.3e}",
        report.max_abs_sum
    );
    println!(
        "criterion 4: PASS - 1000 random cases, max |delta_add + delta_drop| = {:.1e}",
        report.max_abs_sum
    );
}

/// 10-node fixture with mixed degrees and fixed augmented views.
fn gradcheck_fixture() -> (NormalizedAdjacency, NormalizedAdjacency, Matrix, Matrix) {
    let edges = [
        (0usize, 1usize),
        (0, 2),
        (1, 2),
        (2, 3),
        (3, 4),
        (4, 5),
        (5, 6),
        (6, 7),
        (7, 8),
        (8, 9),
        (1, 9),
        (3, 7),
        (2, 8),
    ];
    let n = 10;
    let mut rng = StreamRng::new(77);
    let x1 = Matrix::from_fn(n, 3, |_, _| rng.gaussian() * 0.8);
    let x2 = Matrix::from_fn(n, 3, |_, _| rng.gaussian() * 0.8);
    let view1: Vec<(u32, u32)> = edges[..11]
        .iter()
        .map(|&(u, v)| (u as u32, v as u32))
        .collect();
    let view2: Vec<(u32, u32)> = edges[2..]
        .iter()
        .map(|&(u, v)| (u as u32, v as u32))
        .collect();
    (
        NormalizedAdjacency::from_edges(n, &view1),
        NormalizedAdjacency::from_edges(n, &view2),
        x1,
        x2,
    )
}

#[test]
fn criterion_05_full_model_gradient_check() {
    let start = Instant::now();
    let (adj1, adj2, x1, x2) = gradcheck_fixture();
    let tau = 0.5;
    let cfg = EncoderConfig {
        in_dim: 3,
        hidden_dim: 4,
        out_dim: 3,
        proj_dim: 3,
        seed: 21,
    };
    // scale weights and offset biases so every projected row has an O(1)
    // norm; near-zero embeddings make the cosine curvature blow up and the
    // finite-difference step would measure truncation, not the gradient
    let mut params = EncoderParams::init(&cfg);
    for name in ["w1", "w2", "proj_w1", "proj_w2"] {
        for v in params.block_mut(name).unwrap() {
            *v *= 2.5;
        }
    }
    let mut brng = StreamRng::new(21 ^ 0xb1a5);
    for name in ["proj_b1", "proj_b2"] {
        for v in params.block_mut(name).unwrap() {
            *v = brng.symmetric(0.4);
        }
    }

    let loss_of = |p: &EncoderParams| -> f64 {
        let t1 = forward(&adj1, x1.clone(), p).unwrap();
        let t2 = forward(&adj2, x2.clone(), p).unwrap();
        contrastive_loss(&t1.z, &t2.z, tau).unwrap().total
    };

    let t1 = forward(&adj1, x1.clone(), &params).unwrap();
    let t2 = forward(&adj2, x2.clone(), &params).unwrap();
    let (_, dz1, dz2) = contrastive_loss_and_grad(&t1.z, &t2.z, tau).unwrap();
    let mut grads = backward(&adj1, &t1, &params, &dz1).unwrap();
    grads.add_assign(&backward(&adj2, &t2, &params, &dz2).unwrap());

    let eps = 1e-5;
    let mut worst: (f64, String) = (0.0, String::new());
    for (name, _, _, data) in params.blocks() {
        for idx in 0..data.len() {
            let mut plus = params.clone();
            plus.block_mut(name).unwrap()[idx] += eps;
            let mut minus = params.clone();
            minus.block_mut(name).unwrap()[idx] -= eps;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
            let ad = grads.block(name).unwrap()[idx];
            let rel = (fd - ad).abs() / fd.abs().max(ad.abs()).max(1.0);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{idx}] fd={fd:.3e} ad={ad:.3e}"));
            }
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    assert!(
        worst.0 <= 1e-6,
        "criterion 5: FAIL - max relative error {:.3e} at {}",
        worst.0,
        worst.1
    );
    assert!(
        seconds <= 60.0,
        "criterion 5: FAIL - took {seconds:.1}s (>1min)"
    );
    println!(
        "criterion 5: PASS - max relative error {:.2e} across all parameter blocks, {seconds:.1}s",
        worst.0
    );
}

#[test]
fn criterion_06_probability_normalization_behavior() {
    // direct substitution example
    let p = weights_to_probabilities(&[1.0, 2.0, 3.0], 0.3, 0.9, WeightMode::Add).unwrap();
    assert!((p[0] - 0.6).abs() < 1e-12 && (p[1] - 0.3).abs() < 1e-12 && p[2].abs() < 1e-12);
    // extremes take zero probability in their mode
    let w = [0.4, 1.1, 2.2, 3.3];
    let add = weights_to_probabilities(&w, 0.5, 0.9, WeightMode::Add).unwrap();
    assert_eq!(add[3], 0.0);
    let drop = weights_to_probabilities(&w, 0.5, 0.9, WeightMode::Drop).unwrap();
    assert_eq!(drop[0], 0.0);

    // fuzz: monotonicity and the cutoff bound over 10^4 random vectors
    let mut rng = StreamRng::new(2024);
    for case in 0..10_000 {
        let len = 2 + rng.below(30) as usize;
        let weights: Vec<f64> = (0..len).map(|_| rng.unit() * 9.9 + 0.1).collect();
        let rate = rng.unit();
        let cutoff = rng.unit() * 0.95 + 0.05;
        for mode in [WeightMode::Add, WeightMode::Drop] {
            let probs = weights_to_probabilities(&weights, rate, cutoff, mode).unwrap();
            for (i, &p) in probs.iter().enumerate() {
                assert!(
                    (0.0..=cutoff + 1e-15).contains(&p),
                    "criterion 6: FAIL - case {case}: p[{i}] = {p} above cutoff {cutoff}"
                );
            }
            for i in 0..len {
                for j in 0..len {
                    if weights[i] < weights[j] {
                        let (lo, hi) = match mode {
                            WeightMode::Add => (j, i),
                            WeightMode::Drop => (i, j),
                        };
                        assert!(
                            probs[lo] <= probs[hi] + 1e-12,
                            "criterion 6: FAIL - monotonicity broken in case {case}"
                        );
                    }
                }
            }
        }
    }
    println!("criterion 6: PASS - examples exact, cutoff and monotonicity hold over 10^4 fuzzed weight vectors");
}

/// Shared desk-scale experiment for criteria 7 and 8: a 400-node two-block
/// model, five seeds, adaptive and random-baseline training plus probes.
struct SbmExperiment {
    epagcl_acc: Vec<f64>,
    raw_acc: Vec<f64>,
    random_acc: Vec<f64>,
    adaptive_seconds: f64,
}

static SBM_EXPERIMENT: OnceLock<SbmExperiment> = OnceLock::new();

fn sbm_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 250,
        temperature: 0.5,
        hidden_dim: 32,
        out_dim: 16,
        proj_dim: 16,
        seed,
        augmentation: AugmentationConfig {
            seed,
            // a high add volume separates the degree-weighted scheme from
            // the uniform-random baseline; at low volumes the two are
            // statistically indistinguishable on a 400-node block model
            p_add: Some(0.7),
            ..AugmentationConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn sbm_experiment() -> &'static SbmExperiment {
    SBM_EXPERIMENT.get_or_init(|| {
        let mut result = SbmExperiment {
            epagcl_acc: Vec::new(),
            raw_acc: Vec::new(),
            random_acc: Vec::new(),
            adaptive_seconds: 0.0,
        };
        for seed in 0..5u64 {
            let g = sbm_generate(&[200, 200], 0.05, 0.005, 16, 3.0, seed).unwrap();
            let labels = g.labels().unwrap().to_vec();
            let split = random_split(g.num_nodes(), seed).unwrap();
            let probe = ProbeConfig {
                seed,
                ..ProbeConfig::default()
            };
            let cfg = sbm_config(seed);

            let t = Instant::now();
            let out = train(&g, &cfg).unwrap();
            let h = embed(&g, &out.params).unwrap();
            result
                .epagcl_acc
                .push(linear_probe(&h, &labels, &split, &probe).unwrap());
            result
                .raw_acc
                .push(linear_probe(g.features().unwrap(), &labels, &split, &probe).unwrap());
            result.adaptive_seconds += t.elapsed().as_secs_f64();

            let out = train_with_mode(&g, &cfg, AugmentationMode::RandomAddBothViews).unwrap();
            let h = embed(&g, &out.params).unwrap();
            result
                .random_acc
                .push(linear_probe(&h, &labels, &split, &probe).unwrap());
        }
        result
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_07_learning_signal_over_raw_features() {
    let exp = sbm_experiment();
    let margin = mean(&exp.epagcl_acc) - mean(&exp.raw_acc);
    assert!(
        margin >= 0.05,
        "criterion 7: FAIL - embedding probe {:.4} vs raw probe {:.4} (margin {:.4} < 0.05)",
        mean(&exp.epagcl_acc),
        mean(&exp.raw_acc),
        margin
    );
    assert!(
        exp.adaptive_seconds <= 300.0,
        "criterion 7: FAIL - training+probe took {:.0}s (>5min)",
        exp.adaptive_seconds
    );
    println!(
        "criterion 7: PASS - embeddings {:.4} vs raw features {:.4} over 5 seeds (+{:.1} points, {:.0}s)",
        mean(&exp.epagcl_acc),
        mean(&exp.raw_acc),
        margin * 100.0,
        exp.adaptive_seconds
    );
}

#[test]
fn criterion_08_adaptive_vs_random_add_ablation() {
    let exp = sbm_experiment();
    let adaptive = mean(&exp.epagcl_acc);
    let random = mean(&exp.random_acc);
    assert!(
        adaptive >= random - 0.005,
        "criterion 8: FAIL - adaptive {adaptive:.4} vs random-add-both {random:.4} (below -0.5 points)"
    );
    println!(
        "criterion 8: PASS - adaptive {adaptive:.4} vs random-add-both-views {random:.4} ({:+.2} points)",
        (adaptive - random) * 100.0
    );
}

#[test]
#[ignore = "extended non-gating run; needs the converted cora dataset and ~10-30 min"]
fn criterion_09_protocol_fidelity_on_cora() {
    let dir = data_dir().join("cora");
    if !dir.join("edges.txt").exists() {
        println!(
            "criterion 9: SKIP - cora not found at {} (see README: datasets)",
            dir.display()
        );
        return;
    }
    let start = Instant::now();
    let bundle = load_dataset_dir(&dir).expect("cora loads");
    let mut cfg = TrainConfig::for_dataset("cora").unwrap();
    cfg.seed = 0;
    cfg.augmentation.seed = 0;
    let out = train(&bundle.graph, &cfg).expect("training runs");
    let h = embed(&bundle.graph, &out.params).unwrap();
    let labels = bundle.graph.labels().unwrap();
    let mut accs = Vec::new();
    for run in 0..5u64 {
        let split = random_split(h.rows(), run).unwrap();
        let probe = ProbeConfig {
            seed: run,
            ..ProbeConfig::default()
        };
        accs.push(linear_probe(&h, labels, &split, &probe).unwrap());
    }
    let acc = mean(&accs);
    let seconds = start.elapsed().as_secs_f64();
    assert!(
        acc >= 0.80,
        "criterion 9: FAIL - cora probe accuracy {acc:.4} < 0.80 after {} epochs",
        cfg.epochs
    );
    assert!(
        seconds <= 1800.0,
        "criterion 9: FAIL - took {seconds:.0}s (>30min)"
    );
    println!(
        "criterion 9: PASS - cora probe accuracy {acc:.4} (5 splits) after {} epochs in {seconds:.0}s",
        cfg.epochs
    );
}

#[test]
fn criterion_10_metrics_are_bit_deterministic() {
    let g = sbm_generate(&[40, 40], 0.12, 0.02, 8, 0.5, 17).unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        hidden_dim: 12,
        out_dim: 6,
        proj_dim: 6,
        seed: 5,
        ..TrainConfig::default()
    };
    let run = |_: u32| {
        let out = train(&g, &cfg).unwrap();
        metrics_to_string(&MetricsRecord::new(cfg.clone(), out.history)).unwrap()
    };
    let a = run(0);
    let b = run(1);
    assert_eq!(
        a.as_bytes(),
        b.as_bytes(),
        "criterion 10: FAIL - metrics bytes differ"
    );
    // and across graph reconstruction from the same seed
    let g2 = sbm_generate(&[40, 40], 0.12, 0.02, 8, 0.5, 17).unwrap();
    assert_eq!(g.edges(), g2.edges());
    println!(
        "criterion 10: PASS - identical seed/config reproduce metrics byte-for-byte ({} bytes)",
        a.len()
    );
}

#[test]
fn view_asymmetry_holds_during_training() {
    // view 1 never grows an edge; view 2 includes candidate additions with
    // high probability across epochs
    let g = sbm_generate(&[30, 30], 0.15, 0.02, 6, 0.5, 3).unwrap();
    let weights = epagcl::augment::select_candidate_edges(&g);
    let cfg = AugmentationConfig {
        p_add: Some(0.3),
        ..AugmentationConfig::default()
    };
    let mut view2_added_any = false;
    for epoch in 0..100 {
        let sampler = epagcl::augment::EpochSampler::new(9, epoch);
        let (v1, v2) = epagcl::augment::generate_views(&g, &weights, &cfg, &sampler).unwrap();
        for e in &v1.edges {
            assert!(g.edges().contains(e), "view 1 contains a non-original edge");
        }
        if v2.edges.iter().any(|e| !g.edges().contains(e)) {
            view2_added_any = true;
        }
    }
    assert!(
        view2_added_any,
        "view 2 never received an added edge in 100 epochs"
    );
}
