//! Degree-weighted edge perturbation: candidate selection, weight-to-
//! probability normalization, Bernoulli edge sampling and feature masking.
//!
//! Weights are a pure function of the original graph and are computed once.
//! Every sampling decision is a counter-based draw keyed by
//! (seed, epoch, stream, index), so per-edge draws are independent of
//! evaluation order and identical across thread counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::matrix::Matrix;
use crate::rng::CounterRng;

/// Per-edge drop weights, candidate edges for addition and their weights.
///
/// Drop weights use the current degrees, `2/sqrt(d_i d_j)`; add weights use
/// `2/sqrt((d_i+1)(d_j+1))`. Both are the mass the perturbed edge carries,
/// measured in the degrees of the graph that contains it.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationWeights {
    pub drop_weights: Vec<f64>,
    pub candidate_nodes: Vec<u32>,
    pub add_candidates: Vec<Edge>,
    pub add_weights: Vec<f64>,
}

/// Candidate selection: the `ceil(sqrt(2 l))` highest-degree nodes (ties
/// broken by ascending id) span the pool of addable non-edges.
pub fn select_candidate_edges(g: &Graph) -> PerturbationWeights {
    let degrees = g.degrees();
    let drop_weights = g
        .edges()
        .iter()
        .map(|&(u, v)| 2.0 / ((degrees[u as usize] as f64) * (degrees[v as usize] as f64)).sqrt())
        .collect();

    let l = g.num_edges();
    let k = ((2.0 * l as f64).sqrt().ceil() as usize).min(g.num_nodes());
    let mut order: Vec<u32> = (0..g.num_nodes() as u32).collect();
    order.sort_by(|&a, &b| {
        degrees[b as usize]
            .cmp(&degrees[a as usize])
            .then(a.cmp(&b))
    });
    let mut candidate_nodes: Vec<u32> = order.into_iter().take(k).collect();
    candidate_nodes.sort_unstable();

    let mut add_candidates = Vec::new();
    let mut add_weights = Vec::new();
    for (idx, &u) in candidate_nodes.iter().enumerate() {
        for &v in &candidate_nodes[idx + 1..] {
            if !g.has_edge(u as usize, v as usize) {
                add_candidates.push((u, v));
                add_weights.push(
                    2.0 / ((degrees[u as usize] as f64 + 1.0) * (degrees[v as usize] as f64 + 1.0))
                        .sqrt(),
                );
            }
        }
    }
    if add_candidates.len() < l {
        log::debug!(
            "candidate pool smaller than edge count: |E_a| = {} < l = {}",
            add_candidates.len(),
            l
        );
    }
    PerturbationWeights {
        drop_weights,
        candidate_nodes,
        add_candidates,
        add_weights,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    Add,
    Drop,
}

/// Normalize weights into probabilities.
///
/// Add mode: `p = min((max(w) - w) / (max(w) - mean(w)) * rate, cutoff)`.
/// Drop mode: `p = min((w - min(w)) / (mean(w) - min(w)) * rate, cutoff)`.
/// When every weight is equal the ratio is degenerate and every probability
/// becomes `min(rate, cutoff)`.
pub fn weights_to_probabilities(
    weights: &[f64],
    overall_rate: f64,
    cutoff: f64,
    mode: WeightMode,
) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::invalid("weights", "weight vector is empty"));
    }
    for bound in [("overall_rate", overall_rate), ("cutoff", cutoff)] {
        if !(0.0..=1.0).contains(&bound.1) {
            return Err(Error::invalid(
                bound.0,
                format!("{} not in [0, 1]", bound.1),
            ));
        }
    }
    let max = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    let denom = match mode {
        WeightMode::Add => max - mean,
        WeightMode::Drop => mean - min,
    };
    if denom <= 0.0 {
        log::warn!("degenerate weight normalization (all weights equal); using flat rate");
        return Ok(vec![overall_rate.min(cutoff); weights.len()]);
    }
    Ok(weights
        .iter()
        .map(|&w| {
            let scaled = match mode {
                WeightMode::Add => (max - w) / denom,
                WeightMode::Drop => (w - min) / denom,
            };
            (scaled * overall_rate).min(cutoff)
        })
        .collect())
}

/// Probabilities and masking rates for the two views.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AugmentationConfig {
    pub p_drop_view1: f64,
    pub p_drop_view2: f64,
    /// Edge-adding rate for view 2; defaults to `p_drop_view2` when absent.
    pub p_add: Option<f64>,
    pub p_tau: f64,
    pub p_tau_prime: f64,
    pub p_f1: f64,
    pub p_f2: f64,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            p_drop_view1: 0.2,
            p_drop_view2: 0.3,
            p_add: None,
            p_tau: 0.7,
            p_tau_prime: 0.7,
            p_f1: 0.1,
            p_f2: 0.1,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn p_add(&self) -> f64 {
        self.p_add.unwrap_or(self.p_drop_view2)
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_drop_view1", self.p_drop_view1),
            ("p_drop_view2", self.p_drop_view2),
            ("p_add", self.p_add()),
            ("p_f1", self.p_f1),
            ("p_f2", self.p_f2),
        ];
        for (name, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, format!("{v} not in [0, 1]")));
            }
        }
        for (name, v) in [("p_tau", self.p_tau), ("p_tau_prime", self.p_tau_prime)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(name, format!("{v} not in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// An augmented view: an edge subset (plus added edges for view 2) and the
/// masked feature matrix, when the source graph carries features.
#[derive(Debug, Clone)]
pub struct View {
    pub edges: Vec<Edge>,
    pub features: Option<Matrix>,
}

/// Independent draw streams for one epoch.
#[derive(Debug, Clone, Copy)]
pub enum SampleStream {
    DropView1,
    DropView2,
    AddView2,
    MaskView1,
    MaskView2,
    /// Extra streams for the uniform-random ablation baseline.
    RandomAddView1,
    RandomAddView2,
}

/// Counter-based sampler for one (seed, epoch) pair.
#[derive(Debug, Clone, Copy)]
pub struct EpochSampler {
    seed: u64,
    epoch: u64,
}

impl EpochSampler {
    pub fn new(seed: u64, epoch: u64) -> Self {
        EpochSampler { seed, epoch }
    }

    pub fn stream(&self, stream: SampleStream) -> CounterRng {
        CounterRng::new(self.seed)
            .chain(self.epoch)
            .chain(stream as u64)
    }
}

/// Keep edge `i` with probability `1 - probs[i]`.
pub fn sample_drop(edges: &[Edge], probs: &[f64], draws: &CounterRng) -> Result<Vec<Edge>> {
    if edges.len() != probs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} edges vs {} probabilities",
            edges.len(),
            probs.len()
        )));
    }
    Ok(edges
        .iter()
        .zip(probs)
        .enumerate()
        .filter(|(i, (_, &p))| draws.unit_at(*i as u64) >= p)
        .map(|(_, (&e, _))| e)
        .collect())
}

/// Include candidate `i` with probability `probs[i]`.
pub fn sample_add(candidates: &[Edge], probs: &[f64], draws: &CounterRng) -> Result<Vec<Edge>> {
    if candidates.len() != probs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} candidates vs {} probabilities",
            candidates.len(),
            probs.len()
        )));
    }
    Ok(candidates
        .iter()
        .zip(probs)
        .enumerate()
        .filter(|(i, (_, &p))| draws.unit_at(*i as u64) < p)
        .map(|(_, (&e, _))| e)
        .collect())
}

/// Zero a Bernoulli(rate) selection of feature columns across all rows.
pub fn feature_mask(x: &Matrix, rate: f64, draws: &CounterRng) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid("mask rate", format!("{rate} not in [0, 1]")));
    }
    let masked: Vec<bool> = (0..x.cols())
        .map(|f| draws.unit_at(f as u64) < rate)
        .collect();
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        for (v, &m) in row.iter_mut().zip(&masked) {
            if m {
                *v = 0.0;
            }
        }
    }
    Ok(out)
}

/// Generate the two training views for one epoch. View 1 drops edges only;
/// view 2 drops edges and adds candidates. Weights must come from the
/// original graph; probabilities are recomputed here (cheap and pure).
pub fn generate_views(
    g: &Graph,
    weights: &PerturbationWeights,
    cfg: &AugmentationConfig,
    sampler: &EpochSampler,
) -> Result<(View, View)> {
    cfg.validate()?;
    let p_d1 = weights_to_probabilities(
        &weights.drop_weights,
        cfg.p_drop_view1,
        cfg.p_tau_prime,
        WeightMode::Drop,
    )?;
    let p_d2 = weights_to_probabilities(
        &weights.drop_weights,
        cfg.p_drop_view2,
        cfg.p_tau_prime,
        WeightMode::Drop,
    )?;

    let edges1 = sample_drop(g.edges(), &p_d1, &sampler.stream(SampleStream::DropView1))?;
    let mut edges2 = sample_drop(g.edges(), &p_d2, &sampler.stream(SampleStream::DropView2))?;

    if !weights.add_candidates.is_empty() && cfg.p_add() > 0.0 {
        let p_a = weights_to_probabilities(
            &weights.add_weights,
            cfg.p_add(),
            cfg.p_tau,
            WeightMode::Add,
        )?;
        let added = sample_add(
            &weights.add_candidates,
            &p_a,
            &sampler.stream(SampleStream::AddView2),
        )?;
        edges2.extend(added);
    }

    let (f1, f2) = match g.features() {
        Some(x) => (
            Some(feature_mask(
                x,
                cfg.p_f1,
                &sampler.stream(SampleStream::MaskView1),
            )?),
            Some(feature_mask(
                x,
                cfg.p_f2,
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
