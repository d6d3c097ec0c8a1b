//! End-to-end training, embedding export, linear-probe evaluation, splits
//! and synthetic block-model data.
//!
//! One training run is a pure function of (graph, config): candidate weights
//! are computed once from the original graph, each epoch samples fresh views
//! through counter-based streams keyed by (seed, epoch), and the optimizer
//! is deterministic. Identical (graph, config) inputs reproduce the metrics
//! history bit for bit.

use serde::{Deserialize, Serialize};

use crate::augment::{
    generate_views, select_candidate_edges, AugmentationConfig, EpochSampler, SampleStream, View,
};
use crate::contrastive::contrastive_loss_and_grad;
use crate::error::{Error, Result};
use crate::graph::{epr_of_edges, Edge, Graph, MassConvention, NormalizedAdjacency};
use crate::matrix::Matrix;
use crate::nn::{
    adam_step, adam_update, backward, forward, AdamState, EncoderConfig, EncoderParams,
};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub temperature: f64,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub proj_dim: usize,
    pub augmentation: AugmentationConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            epochs: 500,
            temperature: 0.3,
            hidden_dim: 512,
            out_dim: 256,
            proj_dim: 256,
            augmentation: AugmentationConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Per-dataset defaults (learning rate, weight decay, drop rates, mask
    /// rates, temperature, epochs).
    pub fn for_dataset(name: &str) -> Option<TrainConfig> {
        let base = TrainConfig::default();
        let cfg = |lr: f64, wd: f64, p1: f64, p2: f64, f1: f64, f2: f64, t: f64, e: usize| {
            Some(TrainConfig {
                learning_rate: lr,
                weight_decay: wd,
                epochs: e,
                temperature: t,
                augmentation: AugmentationConfig {
                    p_drop_view1: p1,
                    p_drop_view2: p2,
                    p_f1: f1,
                    p_f2: f2,
                    ..AugmentationConfig::default()
                },
                ..base.clone()
            })
        };
        match name.to_ascii_lowercase().as_str() {
            "cora" => cfg(1e-3, 1e-4, 0.2, 0.3, 0.1, 0.1, 0.3, 500),
            "citeseer" => cfg(1e-3, 1e-4, 0.2, 0.3, 0.1, 0.1, 0.3, 500),
            "pubmed" => cfg(1e-3, 1e-4, 0.2, 0.3, 0.1, 0.1, 0.3, 1000),
            "wikics" => cfg(1e-3, 1e-4, 0.2, 0.3, 0.1, 0.1, 0.3, 3000),
            "amazon-photo" | "amz-photo" => cfg(0.01, 1e-3, 0.3, 0.5, 0.1, 0.1, 0.3, 1000),
            "coauthor-physics" | "co-physics" => cfg(0.01, 1e-3, 0.1, 0.4, 0.4, 0.1, 0.5, 1000),
            "ogbn-arxiv" => cfg(1e-3, 1e-4, 0.6, 0.6, 0.1, 0.1, 0.3, 500),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if self.temperature <= 0.0 {
            return Err(Error::invalid("temperature", "must be positive"));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::invalid("weight_decay", "must be non-negative"));
        }
        for (name, v) in [
            ("hidden_dim", self.hidden_dim),
            ("out_dim", self.out_dim),
            ("proj_dim", self.proj_dim),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "must be at least 1"));
            }
        }
        self.augmentation.validate()
    }
}

/// How each epoch's views are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationMode {
    /// Degree-weighted probabilities; view 1 drops only, view 2 drops and
    /// adds from the candidate pool.
    Adaptive,
    /// Ablation baseline: flat drop probabilities and uniformly random
    /// additions from all non-edges, applied to both views.
    RandomAddBothViews,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view1_epr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view2_epr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: EncoderParams,
    pub history: Vec<EpochRecord>,
}

const EPR_LOG_INTERVAL: usize = 50;

fn uniform_random_additions(
    g: &Graph,
    count: usize,
    rng: &mut StreamRng,
    already: &[Edge],
) -> Vec<Edge> {
    let n = g.num_nodes() as u64;
    let mut chosen: Vec<Edge> = Vec::with_capacity(count);
    let mut taken: std::collections::HashSet<Edge> = already.iter().copied().collect();
    let max_attempts = count * 50 + 100;
    let mut attempts = 0;
    while chosen.len() < count && attempts < max_attempts {
        attempts += 1;
        let u = rng.below(n) as usize;
        let v = rng.below(n) as usize;
        if u == v || g.has_edge(u, v) {
            continue;
        }
        let e = (u.min(v) as u32, u.max(v) as u32);
        if taken.insert(e) {
            chosen.push(e);
        }
    }
    chosen
}

fn views_for_epoch(
    g: &Graph,
    weights: &crate::augment::PerturbationWeights,
    cfg: &TrainConfig,
    mode: AugmentationMode,
    epoch: usize,
) -> Result<(View, View)> {
    let sampler = EpochSampler::new(cfg.seed, epoch as u64);
    match mode {
        AugmentationMode::Adaptive => generate_views(g, weights, &cfg.augmentation, &sampler),
        AugmentationMode::RandomAddBothViews => {
            let aug = &cfg.augmentation;
            let flat1 = vec![aug.p_drop_view1; g.num_edges()];
            let flat2 = vec![aug.p_drop_view2; g.num_edges()];
            let mut edges1 = crate::augment::sample_drop(
                g.edges(),
                &flat1,
                &sampler.stream(SampleStream::DropView1),
            )?;
            let mut edges2 = crate::augment::sample_drop(
                g.edges(),
                &flat2,
                &sampler.stream(SampleStream::DropView2),
            )?;
            let target = (aug.p_add() * weights.add_candidates.len() as f64).round() as usize;
            let mut rng1 = StreamRng::new(cfg.seed ^ 0xadd0_0001u64.wrapping_mul(epoch as u64 + 1));
            let mut rng2 = StreamRng::new(cfg.seed ^ 0xadd0_0002u64.wrapping_mul(epoch as u64 + 1));
            edges1.extend(uniform_random_additions(g, target, &mut rng1, &edges1));
            edges2.extend(uniform_random_additions(g, target, &mut rng2, &edges2));
            let (f1, f2) = match g.features() {
                Some(x) => (
                    Some(crate::augment::feature_mask(
                        x,
                        aug.p_f1,
                        &sampler.stream(SampleStream::MaskView1),
                    )?),
                    Some(crate::augment::feature_mask(
                        x,
                        aug.p_f2,
                        &sampler.stream(SampleStream::MaskView2),
                    )?),
                ),
                None => (None, None),
            };
            Ok((
                View {
                    edges: edges1,
                    features: f1,
                },
                View {
                    edges: edges2,
                    features: f2,
                },
            ))
        }
    }
}

/// The main training loop: weights once, then per epoch fresh views,
/// a forward/backward pass over both views, and one Adam step.
pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<TrainOutput> {
    train_with_mode(g, cfg, AugmentationMode::Adaptive)
}

pub fn train_with_mode(
    g: &Graph,
    cfg: &TrainConfig,
    mode: AugmentationMode,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let features = g.features_required()?;
    let weights = select_candidate_edges(g);
    let enc_cfg = EncoderConfig {
        in_dim: features.cols(),
        hidden_dim: cfg.hidden_dim,
        out_dim: cfg.out_dim,
        proj_dim: cfg.proj_dim,
        seed: cfg.seed,
    };
    let mut params = EncoderParams::init(&enc_cfg);
    let mut adam = AdamState::new(cfg.learning_rate, cfg.weight_decay, &params);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let (v1, v2) = views_for_epoch(g, &weights, cfg, mode, epoch)?;
        let (view1_epr, view2_epr) = if epoch % EPR_LOG_INTERVAL == 0 {
            match g.labels() {
                Some(labels) => {
                    let conv = MassConvention::default();
                    (
                        Some(epr_of_edges(g.num_nodes(), &v1.edges, labels, conv)?.rate),
                        Some(epr_of_edges(g.num_nodes(), &v2.edges, labels, conv)?.rate),
                    )
                }
                None => (None, None),
            }
        } else {
            (None, None)
        };
        let adj1 = NormalizedAdjacency::from_edges(g.num_nodes(), &v1.edges);
        let adj2 = NormalizedAdjacency::from_edges(g.num_nodes(), &v2.edges);
        let x1 = v1.features.ok_or(Error::MissingFeatures)?;
        let x2 = v2.features.ok_or(Error::MissingFeatures)?;
        let t1 = forward(&adj1, x1, &params)?;
        let t2 = forward(&adj2, x2, &params)?;
        let (loss, dz1, dz2) = contrastive_loss_and_grad(&t1.z, &t2.z, cfg.temperature)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                config: serde_json::to_string(cfg).unwrap_or_default(),
            });
        }
        let mut grads = backward(&adj1, &t1, &params, &dz1)?;
        grads.add_assign(&backward(&adj2, &t2, &params, &dz2)?);
        adam_step(&mut params, &grads, &mut adam)?;

        history.push(EpochRecord {
            epoch,
            loss: loss.total,
            view1_epr,
            view2_epr,
        });
    }
    Ok(TrainOutput { params, history })
}

/// Embeddings of the original, unaugmented graph.
pub fn embed(g: &Graph, params: &EncoderParams) -> Result<Matrix> {
    embed_with(g, params, false)
}

/// `projected = true` returns the projection-head output instead of the
/// encoder output.
pub fn embed_with(g: &Graph, params: &EncoderParams, projected: bool) -> Result<Matrix> {
    let features = g.features_required()?;
    let adj = NormalizedAdjacency::from_graph(g);
    let trace = forward(&adj, features.clone(), params)?;
    Ok(if projected { trace.z } else { trace.embeddings })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Disjoint, exhaustive 10% / 10% / 80% split.
pub fn random_split(n: usize, seed: u64) -> Result<Split> {
    if n < 10 {
        return Err(Error::invalid(
            "n",
            format!("{n} < 10 nodes cannot be split"),
        ));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    StreamRng::new(seed ^ 0x5911_7000_0000_0001).shuffle(&mut indices);
    let tenth = n / 10;
    Ok(Split {
        train: indices[..tenth].to_vec(),
        valid: indices[tenth..2 * tenth].to_vec(),
        test: indices[2 * tenth..].to_vec(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Optional explicit l2 penalty added to the gradient (off by default;
    /// the optimizer's weight decay is the stated 0.0).
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            learning_rate: 0.01,
            weight_decay: 0.0,
            epochs: 3000,
            l2_penalty: 0.0,
            seed: 0,
        }
    }
}

fn softmax_rows(logits: &mut Matrix) {
    for i in 0..logits.rows() {
        let row = logits.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn gather_rows(h: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), h.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(h.row(i));
    }
    out
}

/// Multinomial logistic regression on frozen embeddings; returns test
/// accuracy. Never touches graph structure or encoder state.
pub fn linear_probe(h: &Matrix, labels: &[u32], split: &Split, cfg: &ProbeConfig) -> Result<f64> {
    if h.rows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} embedding rows vs {} labels",
            h.rows(),
            labels.len()
        )));
    }
    let classes = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    {
        let first = labels[*split.train.first().ok_or(Error::SingleClassSplit)?];
        if split.train.iter().all(|&i| labels[i] == first) {
            return Err(Error::SingleClassSplit);
        }
    }
    let d = h.cols();
    let x_train = gather_rows(h, &split.train);
    let n_train = split.train.len();

    let mut rng = StreamRng::new(cfg.seed ^ 0x9906_e000_0000_0001);
    let scale = 1.0 / (d as f64).sqrt();
    let mut w = Matrix::from_fn(d, classes, |_, _| rng.symmetric(scale));
    let mut b = vec![0.0; classes];
    let mut m_w = vec![0.0; d * classes];
    let mut v_w = vec![0.0; d * classes];
    let mut m_b = vec![0.0; classes];
    let mut v_b = vec![0.0; classes];

    for step in 1..=cfg.epochs as u64 {
        let mut probs = x_train.matmul(&w);
        probs.add_row_broadcast(&b);
        softmax_rows(&mut probs);
        for (r, &i) in split.train.iter().enumerate() {
            let y = labels[i] as usize;
            let v = probs.get(r, y);
            probs.set(r, y, v - 1.0);
        }
        probs.scale(1.0 / n_train as f64);
        let mut grad_w = x_train.matmul_tn(&probs);
        if cfg.l2_penalty > 0.0 {
            for (gw, wv) in grad_w.data_mut().iter_mut().zip(w.data()) {
                *gw += 2.0 * cfg.l2_penalty * wv;
            }
        }
        let grad_b = probs.col_sums();
        adam_update(
            "probe_w",
            w.data_mut(),
            grad_w.data(),
            &mut m_w,
            &mut v_w,
            step,
            cfg.learning_rate,
            cfg.weight_decay,
            0.9,
            0.999,
            1e-8,
        )?;
        adam_update(
            "probe_b",
            &mut b,
            &grad_b,
            &mut m_b,
            &mut v_b,
            step,
            cfg.learning_rate,
            cfg.weight_decay,
            0.9,
            0.999,
            1e-8,
        )?;
    }

    let x_test = gather_rows(h, &split.test);
    let mut logits = x_test.matmul(&w);
    logits.add_row_broadcast(&b);
    let mut correct = 0usize;
    for (r, &i) in split.test.iter().enumerate() {
        let row = logits.row(r);
        let mut best = 0usize;
        for c in 1..classes {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best as u32 == labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / split.test.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub split_seeds: Vec<u64>,
}

/// Probe the same embeddings over `runs` fresh splits.
pub fn evaluate(
    h: &Matrix,
    labels: &[u32],
    runs: usize,
    seed: u64,
    probe: &ProbeConfig,
) -> Result<EvalResult> {
    if runs == 0 {
        return Err(Error::invalid("runs", "must be at least 1"));
    }
    let mut accuracies = Vec::with_capacity(runs);
    let mut split_seeds = Vec::with_capacity(runs);
    for run in 0..runs as u64 {
        let split_seed = seed.wrapping_add(run);
        let split = random_split(h.rows(), split_seed)?;
        let probe_cfg = ProbeConfig {
            seed: seed.wrapping_add(run),
            ..probe.clone()
        };
        accuracies.push(linear_probe(h, labels, &split, &probe_cfg)?);
        split_seeds.push(split_seed);
    }
    let mean = accuracies.iter().sum::<f64>() / runs as f64;
    let std = if runs > 1 {
        (accuracies
            .iter()
            .map(|a| (a - mean) * (a - mean))
            .sum::<f64>()
            / (runs as f64 - 1.0))
            .sqrt()
    } else {
        0.0
    };
    Ok(EvalResult {
        accuracies,
        mean,
        std,
        split_seeds,
    })
}

/// Stochastic block model with class-indicator features plus Gaussian noise.
/// Isolated nodes are repaired by attaching to a random same-block node.
pub fn sbm_generate(
    block_sizes: &[usize],
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    noise: f64,
    seed: u64,
) -> Result<Graph> {
    if block_sizes.is_empty() || block_sizes.contains(&0) {
        return Err(Error::Infeasible("every block must be non-empty".into()));
    }
    for (name, p) in [("p_in", p_in), ("p_out", p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(name, format!("{p} not in [0, 1]")));
        }
    }
    if feature_dim == 0 {
        return Err(Error::invalid("feature_dim", "must be at least 1"));
    }
    let n: usize = block_sizes.iter().sum();
    let mut labels = Vec::with_capacity(n);
    for (block, &size) in block_sizes.iter().enumerate() {
        labels.extend(std::iter::repeat_n(block as u32, size));
    }
    let mut rng = StreamRng::new(seed ^ 0x5b3d_0001);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if rng.unit() < p {
                edges.push((u, v));
            }
        }
    }
    let mut degrees = vec![0u32; n];
    for &(u, v) in &edges {
        degrees[u] += 1;
        degrees[v] += 1;
    }
    for u in 0..n {
        if degrees[u] > 0 {
            continue;
        }
        let same_block: Vec<usize> = (0..n)
            .filter(|&v| v != u && labels[v] == labels[u])
            .collect();
        let pool = if same_block.is_empty() {
            (0..n).filter(|&v| v != u).collect()
        } else {
            same_block
        };
        let v = pool[rng.below(pool.len() as u64) as usize];
        edges.push((u.min(v), u.max(v)));
        degrees[u] += 1;
        degrees[v] += 1;
    }
    let mut feat_rng = StreamRng::new(seed ^ 0x5b3d_0002);
    let mut features = Matrix::zeros(n, feature_dim);
    for (i, &label) in labels.iter().enumerate() {
        let row = features.row_mut(i);
        row[label as usize % feature_dim] = 1.0;
        for v in row.iter_mut() {
            *v += noise * feat_rng.gaussian();
        }
    }
    Graph::build(n, &edges, Some(features), Some(labels))
}
