//! Undirected graph storage, degree bookkeeping, the GCN message-passing
//! operator, and the error-passing-rate metric.
//!
//! Conventions fixed here and relied on by the rest of the crate:
//!
//! * Edges are canonical `(u, v)` pairs with `u < v`, sorted and deduplicated.
//! * Every node must have degree >= 1; loaders reject isolated nodes.
//! * [`NormalizedAdjacency`] is the self-loop-augmented operator used for
//!   message passing: off-diagonal entries `1/sqrt((d_i+1)(d_j+1))` and
//!   diagonal `1/(d_i+1)`.
//! * Error-passing-rate sums run over ORDERED node pairs (each undirected
//!   edge counted twice) and exclude self-loops. The default edge mass is
//!   the off-diagonal operator entry `1/sqrt((d_i+1)(d_j+1))`
//!   ([`MassConvention::SelfLoopScaled`]); the sign law for single-edge
//!   perturbations verifiably holds under it and fails under plain
//!   `1/sqrt(d_i d_j)` weighting, which remains available as
//!   [`MassConvention::Raw`] for comparison.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{KahanSum, Matrix};

pub type Edge = (u32, u32);

/// Immutable undirected graph with optional dense features and class labels.
#[derive(Debug, Clone)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<Edge>,
    degrees: Vec<u32>,
    edge_set: HashSet<Edge>,
    features: Option<Matrix>,
    labels: Option<Vec<u32>>,
}

/// Canonicalize an endpoint pair to `(min, max)`; rejects self-loops.
pub fn canonical_edge(u: usize, v: usize) -> Result<Edge> {
    if u == v {
        return Err(Error::SelfLoop { node: u });
    }
    let (a, b) = if u < v { (u, v) } else { (v, u) };
    Ok((a as u32, b as u32))
}

impl Graph {
    /// Build a graph from an edge list. Edges are canonicalized, sorted and
    /// deduplicated; the degree vector is cached.
    pub fn build(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Option<Matrix>,
        labels: Option<Vec<u32>>,
    ) -> Result<Self> {
        let mut canonical = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::EndpointOutOfRange { u, v, num_nodes });
            }
            canonical.push(canonical_edge(u, v)?);
        }
        canonical.sort_unstable();
        canonical.dedup();

        let mut degrees = vec![0u32; num_nodes];
        for &(u, v) in &canonical {
            degrees[u as usize] += 1;
            degrees[v as usize] += 1;
        }
        if let Some(node) = degrees.iter().position(|&d| d == 0) {
            return Err(Error::IsolatedNode { node });
        }

        if let Some(ref l) = labels {
            if l.len() != num_nodes {
                return Err(Error::LabelCount {
                    expected: num_nodes,
                    got: l.len(),
                });
            }
        }
        if let Some(ref f) = features {
            if f.rows() != num_nodes {
                return Err(Error::FeatureRows {
                    expected: num_nodes,
                    got: f.rows(),
                });
            }
        }

        let edge_set = canonical.iter().copied().collect();
        Ok(Graph {
            num_nodes,
            edges: canonical,
            degrees,
            edge_set,
            features,
            labels,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn degree(&self, node: usize) -> u32 {
        self.degrees[node]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        match canonical_edge(u, v) {
            Ok(e) => self.edge_set.contains(&e),
            Err(_) => false,
        }
    }

    pub fn features(&self) -> Option<&Matrix> {
        self.features.as_ref()
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn labels_required(&self) -> Result<&[u32]> {
        self.labels.as_deref().ok_or(Error::MissingLabels)
    }

    pub fn features_required(&self) -> Result<&Matrix> {
        self.features.as_ref().ok_or(Error::MissingFeatures)
    }

    /// Number of distinct labels (max label + 1), if labels are present.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m as usize + 1))
    }

    /// Copy with one edge added; degrees and caches are rebuilt.
    pub fn with_edge_added(&self, u: usize, v: usize) -> Result<Graph> {
        let e = canonical_edge(u, v)?;
        if u >= self.num_nodes || v >= self.num_nodes {
            return Err(Error::EndpointOutOfRange {
                u,
                v,
                num_nodes: self.num_nodes,
            });
        }
        if self.edge_set.contains(&e) {
            return Err(Error::EdgeAlreadyPresent { u, v });
        }
        let mut g = self.clone();
        g.edges.push(e);
        g.edges.sort_unstable();
        g.edge_set.insert(e);
        g.degrees[e.0 as usize] += 1;
        g.degrees[e.1 as usize] += 1;
        Ok(g)
    }

    /// Copy with one edge removed; rejects removals that isolate a node.
    pub fn with_edge_removed(&self, u: usize, v: usize) -> Result<Graph> {
        let e = canonical_edge(u, v)?;
        if !self.edge_set.contains(&e) {
            return Err(Error::EdgeNotFound { u, v });
        }
        if self.degrees[e.0 as usize] == 1 {
            return Err(Error::WouldIsolate { node: e.0 as usize });
        }
        if self.degrees[e.1 as usize] == 1 {
            return Err(Error::WouldIsolate { node: e.1 as usize });
        }
        let mut g = self.clone();
        g.edges.retain(|&x| x != e);
        g.edge_set.remove(&e);
        g.degrees[e.0 as usize] -= 1;
        g.degrees[e.1 as usize] -= 1;
        Ok(g)
    }
}

/// Which per-edge mass enters the error-passing-rate sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MassConvention {
    /// `1/sqrt(d_i d_j)` with plain degrees; kept for comparison.
    Raw,
    /// `1/sqrt((d_i+1)(d_j+1))`: entries of the self-loop-augmented
    /// message-passing operator (the default; the single-edge perturbation
    /// sign law holds under it).
    #[default]
    SelfLoopScaled,
}

impl MassConvention {
    /// Mass of one direction of an edge whose endpoints have plain degrees
    /// `d_u`, `d_v` in the graph containing it.
    #[inline]
    pub fn edge_mass(self, d_u: u32, d_v: u32) -> f64 {
        match self {
            MassConvention::Raw => 1.0 / ((d_u as f64) * (d_v as f64)).sqrt(),
            MassConvention::SelfLoopScaled => {
                1.0 / ((d_u as f64 + 1.0) * (d_v as f64 + 1.0)).sqrt()
            }
        }
    }
}

/// Error-passing-rate decomposition: `rate = wrong_mass / total_mass`,
/// both sums over ordered edge pairs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EprReport {
    pub rate: f64,
    pub wrong_mass: f64,
    pub total_mass: f64,
    pub convention: MassConvention,
}

/// EPR of an arbitrary edge set over `num_nodes` nodes. Degrees are computed
/// from the edge set itself, so augmented views (which may contain nodes of
/// degree zero) are accepted; only summed edges contribute mass.
pub fn epr_of_edges(
    num_nodes: usize,
    edges: &[Edge],
    labels: &[u32],
    convention: MassConvention,
) -> Result<EprReport> {
    if labels.len() != num_nodes {
        return Err(Error::LabelCount {
            expected: num_nodes,
            got: labels.len(),
        });
    }
    let mut degrees = vec![0u32; num_nodes];
    for &(u, v) in edges {
        degrees[u as usize] += 1;
        degrees[v as usize] += 1;
    }
    let mut total = KahanSum::default();
    let mut wrong = KahanSum::default();
    for &(u, v) in edges {
        // ordered-pair convention: each undirected edge counts twice
        let mass = 2.0 * convention.edge_mass(degrees[u as usize], degrees[v as usize]);
        total.add(mass);
        if labels[u as usize] != labels[v as usize] {
            wrong.add(mass);
        }
    }
    let total_mass = total.value();
    let wrong_mass = wrong.value();
    let rate = if total_mass > 0.0 {
        wrong_mass / total_mass
    } else {
        0.0
    };
    Ok(EprReport {
        rate,
        wrong_mass,
        total_mass,
        convention,
    })
}

/// EPR of a labeled graph under the default mass convention.
pub fn error_passing_rate(g: &Graph) -> Result<EprReport> {
    error_passing_rate_with(g, MassConvention::default())
}

pub fn error_passing_rate_with(g: &Graph, convention: MassConvention) -> Result<EprReport> {
    let labels = g.labels_required()?;
    epr_of_edges(g.num_nodes(), g.edges(), labels, convention)
}

/// Total ordered-pair edge mass of a graph.
pub fn total_mass(g: &Graph, convention: MassConvention) -> f64 {
    let mut total = KahanSum::default();
    for &(u, v) in g.edges() {
        total.add(2.0 * convention.edge_mass(g.degree(u as usize), g.degree(v as usize)));
    }
    total.value()
}

/// Per-node wrong-message fraction `M_wp,i / M_i`.
pub fn node_error_fractions(g: &Graph, convention: MassConvention) -> Result<Vec<f64>> {
    let labels = g.labels_required()?;
    let mut wrong = vec![KahanSum::default(); g.num_nodes()];
    let mut total = vec![KahanSum::default(); g.num_nodes()];
    for &(u, v) in g.edges() {
        let mass = convention.edge_mass(g.degree(u as usize), g.degree(v as usize));
        total[u as usize].add(mass);
        total[v as usize].add(mass);
        if labels[u as usize] != labels[v as usize] {
            wrong[u as usize].add(mass);
            wrong[v as usize].add(mass);
        }
    }
    Ok(wrong
        .iter()
        .zip(&total)
        .map(|(w, t)| {
            if t.value() > 0.0 {
                w.value() / t.value()
            } else {
                0.0
            }
        })
        .collect())
}

/// Sparse symmetric `D~^{-1/2} A~ D~^{-1/2}` with the diagonal stored apart
/// from the off-diagonal CSR block, so edge sums can exclude self-loops.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    num_nodes: usize,
    offsets: Vec<usize>,
    columns: Vec<u32>,
    values: Vec<f64>,
    diagonal: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn from_graph(g: &Graph) -> Self {
        Self::from_edges(g.num_nodes(), g.edges())
    }

    /// Build from a bare edge set; tolerates degree-zero nodes (their row is
    /// the self-loop alone), which occur in heavily dropped views.
    pub fn from_edges(num_nodes: usize, edges: &[Edge]) -> Self {
        let mut degrees = vec![0u32; num_nodes];
        for &(u, v) in edges {
            degrees[u as usize] += 1;
            degrees[v as usize] += 1;
        }
        let mut offsets = vec![0usize; num_nodes + 1];
        for &(u, v) in edges {
            offsets[u as usize + 1] += 1;
            offsets[v as usize + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let mut columns = vec![0u32; edges.len() * 2];
        let mut cursor = offsets.clone();
        for &(u, v) in edges {
            columns[cursor[u as usize]] = v;
            cursor[u as usize] += 1;
            columns[cursor[v as usize]] = u;
            cursor[v as usize] += 1;
        }
        for i in 0..num_nodes {
            columns[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        let inv_sqrt: Vec<f64> = degrees
            .iter()
            .map(|&d| 1.0 / (d as f64 + 1.0).sqrt())
            .collect();
        let mut values = vec![0.0; columns.len()];
        for i in 0..num_nodes {
            for idx in offsets[i]..offsets[i + 1] {
                values[idx] = inv_sqrt[i] * inv_sqrt[columns[idx] as usize];
            }
        }
        let diagonal = degrees.iter().map(|&d| 1.0 / (d as f64 + 1.0)).collect();
        NormalizedAdjacency {
            num_nodes,
            offsets,
            columns,
            values,
            diagonal,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Entry (i, j) including the diagonal; zero when no edge.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diagonal[i];
        }
        let range = self.offsets[i]..self.offsets[i + 1];
        match self.columns[range.clone()].binary_search(&(j as u32)) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.num_nodes)
            .map(|i| {
                let mut s = KahanSum::default();
                s.add(self.diagonal[i]);
                for idx in self.offsets[i]..self.offsets[i + 1] {
                    s.add(self.values[idx]);
                }
                s.value()
            })
            .collect()
    }

    /// Y = A_hat * X; rows computed independently (deterministic under
    /// any thread count).
    pub fn spmm(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.rows(), self.num_nodes, "spmm shape mismatch");
        use rayon::prelude::*;
        let cols = x.cols();
        let mut out = Matrix::zeros(self.num_nodes, cols);
        out.data_mut()
            .par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, out_row)| {
                let d = self.diagonal[i];
                for (o, &v) in out_row.iter_mut().zip(x.row(i)) {
                    *o = d * v;
                }
                for idx in self.offsets[i]..self.offsets[i + 1] {
                    let w = self.values[idx];
                    let src = x.row(self.columns[idx] as usize);
                    for (o, &v) in out_row.iter_mut().zip(src) {
                        *o += w * v;
                    }
                }
            });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path4() -> Graph {
        Graph::build(4, &[(0, 1), (1, 2), (2, 3)], None, Some(vec![0, 0, 1, 1])).unwrap()
    }

    #[test]
    fn single_edge_graph_degrees() {
        let g = Graph::build(2, &[(0, 1)], None, None).unwrap();
        assert_eq!(g.degrees(), &[1, 1]);
    }

    #[test]
    fn duplicate_and_reversed_edges_canonicalize() {
        let g = Graph::build(2, &[(1, 0), (0, 1)], None, None).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn isolated_node_is_rejected_by_name() {
        let err = Graph::build(3, &[(0, 1)], None, None).unwrap_err();
        match err {
            Error::IsolatedNode { node } => assert_eq!(node, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn out_of_range_endpoint_is_rejected() {
        assert!(matches!(
            Graph::build(2, &[(0, 5)], None, None),
            Err(Error::EndpointOutOfRange { .. })
        ));
    }

    #[test]
    fn self_loop_is_rejected() {
        assert!(matches!(
            Graph::build(2, &[(0, 0), (0, 1)], None, None),
            Err(Error::SelfLoop { node: 0 })
        ));
    }

    #[test]
    fn two_node_operator_entries_are_half() {
        let g = Graph::build(2, &[(0, 1)], None, None).unwrap();
        let a = NormalizedAdjacency::from_graph(&g);
        for i in 0..2 {
            for j in 0..2 {
                assert!((a.entry(i, j) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn triangle_operator_entries_are_third() {
        let g = Graph::build(3, &[(0, 1), (1, 2), (0, 2)], None, None).unwrap();
        let a = NormalizedAdjacency::from_graph(&g);
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.entry(i, j) - (1.0 / 3.0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn epr_zero_when_single_class() {
        let g = Graph::build(3, &[(0, 1), (1, 2), (0, 2)], None, Some(vec![1, 1, 1])).unwrap();
        let r = error_passing_rate(&g).unwrap();
        assert_eq!(r.rate, 0.0);
        assert_eq!(r.wrong_mass, 0.0);
        assert!(r.total_mass > 0.0);
    }

    #[test]
    fn epr_one_when_every_edge_crosses() {
        let g = Graph::build(2, &[(0, 1)], None, Some(vec![0, 1])).unwrap();
        let r = error_passing_rate(&g).unwrap();
        assert_eq!(r.rate, 1.0);
        assert_eq!(r.wrong_mass, r.total_mass);
    }

    #[test]
    fn epr_requires_labels() {
        let g = Graph::build(2, &[(0, 1)], None, None).unwrap();
        assert!(matches!(error_passing_rate(&g), Err(Error::MissingLabels)));
    }

    #[test]
    fn ordered_and_unordered_ratios_agree() {
        // the factor 2 cancels in the ratio
        let g = path4();
        for convention in [MassConvention::Raw, MassConvention::SelfLoopScaled] {
            let report = error_passing_rate_with(&g, convention).unwrap();
            let labels = g.labels().unwrap();
            let mut wrong = 0.0;
            let mut tot = 0.0;
            for &(u, v) in g.edges() {
                let m = convention.edge_mass(g.degree(u as usize), g.degree(v as usize));
                tot += m;
                if labels[u as usize] != labels[v as usize] {
                    wrong += m;
                }
            }
            assert!((report.rate - wrong / tot).abs() < 1e-12);
            assert!((report.total_mass - 2.0 * tot).abs() < 1e-12);
        }
    }

    #[test]
    fn node_fractions_match_global_on_regular_graph() {
        // 4-cycle, alternating labels: every node sees only cross edges
        let g = Graph::build(
            4,
            &[(0, 1), (1, 2), (2, 3), (0, 3)],
            None,
            Some(vec![0, 1, 0, 1]),
        )
        .unwrap();
        for convention in [MassConvention::Raw, MassConvention::SelfLoopScaled] {
            for f in node_error_fractions(&g, convention).unwrap() {
                assert!((f - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn edge_add_remove_roundtrip() {
        let g = path4();
        let g2 = g.with_edge_added(0, 3).unwrap();
        assert_eq!(g2.num_edges(), 4);
        assert!(g2.has_edge(3, 0));
        let g3 = g2.with_edge_removed(0, 3).unwrap();
        assert_eq!(g3.edges(), g.edges());
        assert!(matches!(
            g.with_edge_removed(0, 1),
            Err(Error::WouldIsolate { node: 0 })
        ));
        assert!(matches!(
            g.with_edge_added(0, 1),
            Err(Error::EdgeAlreadyPresent { .. })
        ));
    }

    #[test]
    fn spmm_matches_dense_multiply() {
        let g = path4();
        let a = NormalizedAdjacency::from_graph(&g);
        let x = Matrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.25 - 1.0);
        let y = a.spmm(&x);
        let dense = Matrix::from_fn(4, 4, |i, j| a.entry(i, j));
        let want = dense.matmul(&x);
        for (got, want) in y.data().iter().zip(want.data()) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn default_epr_sums_the_off_diagonal_operator_entries() {
        // the default masses are exactly the operator entries with the
        // self-loop diagonal excluded, summed over ordered pairs
        let g = Graph::build(
            5,
            &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)],
            None,
            Some(vec![0, 1, 1, 0, 2]),
        )
        .unwrap();
        let adj = NormalizedAdjacency::from_graph(&g);
        let labels = g.labels().unwrap();
        let mut wrong = 0.0;
        let mut total = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                if i == j {
                    continue;
                }
                let w = adj.entry(i, j);
                total += w;
                if labels[i] != labels[j] {
                    wrong += w;
                }
            }
        }
        let report = error_passing_rate(&g).unwrap();
        assert!((report.total_mass - total).abs() < 1e-12);
        assert!((report.wrong_mass - wrong).abs() < 1e-12);
        assert!((report.rate - wrong / total).abs() < 1e-12);
        assert!((total_mass(&g, MassConvention::default()) - total).abs() < 1e-12);
    }
}
