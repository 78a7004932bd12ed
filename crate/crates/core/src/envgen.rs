//! Social-environment hyperedge construction.
//!
//! Three families are built independently and concatenated in the order
//! TOP, SEM, FOR. Within a family, member sets are deduplicated keeping the
//! first occurrence in node (or group-name) order.

use std::collections::{BTreeMap, HashSet, VecDeque};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Features;
use crate::hypergraph::{Hyperedge, HyperedgeKind, Hypergraph};
use crate::ingest::{DatasetBundle, EdgeRecord};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Cosine,
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperedgeSpec {
    pub kinds: Vec<HyperedgeKind>,
    pub k_hop: usize,
    pub knn_k: usize,
    pub similarity: Similarity,
}

impl Default for HyperedgeSpec {
    fn default() -> Self {
        HyperedgeSpec {
            kinds: HyperedgeKind::ALL.to_vec(),
            k_hop: 2,
            knn_k: 10,
            similarity: Similarity::Cosine,
        }
    }
}

impl HyperedgeSpec {
    pub fn with_kinds(kinds: &[HyperedgeKind]) -> Self {
        HyperedgeSpec {
            kinds: kinds.to_vec(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::Precondition("hyperedge spec needs at least one kind".into()));
        }
        if self.k_hop == 0 || self.knn_k == 0 {
            return Err(Error::Precondition("k_hop and knn_k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn has(&self, kind: HyperedgeKind) -> bool {
        self.kinds.contains(&kind)
    }

    /// Subset identifier such as `"TOP+SEM"`, always in TOP, SEM, FOR order.
    pub fn label(&self) -> String {
        HyperedgeKind::ALL
            .iter()
            .filter(|k| self.has(**k))
            .map(|k| k.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Parses a subset identifier like `"TOP+FOR"`.
    pub fn parse_kinds(label: &str) -> Result<Vec<HyperedgeKind>> {
        let mut kinds: Vec<HyperedgeKind> = label
            .split(['+', ','])
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        kinds.sort();
        kinds.dedup();
        Ok(kinds)
    }
}

fn dedup_sets(sets: impl IntoIterator<Item = Vec<usize>>) -> Vec<Vec<usize>> {
    let mut seen = HashSet::new();
    sets.into_iter()
        .filter(|s| seen.insert(s.clone()))
        .collect()
}

/// `{v} ∪ N^k(v)` for every node, using undirected reachability over all link kinds.
pub fn topology_hyperedges(edges: &[EdgeRecord], num_nodes: usize, k_hop: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); num_nodes];
    for e in edges {
        if e.src < num_nodes && e.dst < num_nodes && e.src != e.dst {
            adj[e.src].push(e.dst);
            adj[e.dst].push(e.src);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }

    let mut dist = vec![usize::MAX; num_nodes];
    let mut queue = VecDeque::new();
    let mut sets = Vec::new();
    for v in 0..num_nodes {
        let mut reached = vec![v];
        dist[v] = 0;
        queue.push_back(v);
        while let Some(u) = queue.pop_front() {
            if dist[u] == k_hop {
                continue;
            }
            for &w in &adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    reached.push(w);
                    queue.push_back(w);
                }
            }
        }
        for &u in &reached {
            dist[u] = usize::MAX;
        }
        if reached.len() > 1 {
            reached.sort_unstable();
            sets.push(reached);
        }
    }
    dedup_sets(sets)
}

/// Result of semantic hyperedge construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticEdges {
    pub sets: Vec<Vec<usize>>,
    /// Nodes whose feature row had zero norm under cosine similarity.
    pub zero_norm_nodes: Vec<usize>,
}

/// `{v} ∪ KNN(v)` for every node. Ties are broken towards lower node ids.
pub fn semantic_hyperedges<S: Scalar>(
    features: &Features<S>,
    knn_k: usize,
    similarity: Similarity,
) -> Result<SemanticEdges> {
    let n = features.rows();
    if knn_k == 0 || knn_k >= n {
        return Err(Error::Precondition(format!(
            "knn_k must satisfy 1 <= knn_k < N, got knn_k={knn_k} with N={n}"
        )));
    }
    let x = features.view();
    let norms: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt())
        .collect();
    let zero_norm_nodes: Vec<usize> = match similarity {
        Similarity::Cosine => (0..n).filter(|&i| norms[i] == 0.0).collect(),
        Similarity::Euclidean => Vec::new(),
    };
    for &z in &zero_norm_nodes {
        warn!("node {z} has a zero feature row; cosine similarity treated as -inf");
    }

    let sim = |a: usize, b: usize| -> f64 {
        let ra = x.row(a);
        let rb = x.row(b);
        match similarity {
            Similarity::Cosine => {
                if norms[a] == 0.0 || norms[b] == 0.0 {
                    return f64::NEG_INFINITY;
                }
                let dot: f64 = ra.iter().zip(rb.iter()).map(|(p, q)| p.as_f64() * q.as_f64()).sum();
                dot / (norms[a] * norms[b])
            }
            Similarity::Euclidean => {
                let d2: f64 = ra
                    .iter()
                    .zip(rb.iter())
                    .map(|(p, q)| {
                        let d = p.as_f64() - q.as_f64();
                        d * d
                    })
                    .sum();
                -d2.sqrt()
            }
        }
    };

    let mut sets = Vec::with_capacity(n);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for v in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&u| u != v).map(|u| (sim(v, u), u)));
        // Descending similarity, then ascending id.
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        cand.select_nth_unstable_by(knn_k - 1, by_rank);
        let mut members: Vec<usize> = cand[..knn_k].iter().map(|&(_, u)| u).collect();
        members.push(v);
        members.sort_unstable();
        sets.push(members);
    }
    Ok(SemanticEdges {
        sets: dedup_sets(sets),
        zero_norm_nodes,
    })
}

/// One hyperedge per group with at least two members.
pub fn forum_hyperedges(group_index: &BTreeMap<String, Vec<usize>>) -> Vec<Vec<usize>> {
    dedup_sets(group_index.values().filter_map(|members| {
        let mut m = members.clone();
        m.sort_unstable();
        m.dedup();
        (m.len() >= 2).then_some(m)
    }))
}

/// Builds the hypergraph for the requested families with unit node and hyperedge weights.
pub fn assemble<S: Scalar>(
    spec: &HyperedgeSpec,
    bundle: &DatasetBundle,
    features: Option<&Features<S>>,
) -> Result<Hypergraph<S>> {
    spec.validate()?;
    let n = bundle.num_users();
    let sem = spec.has(HyperedgeKind::Sem);
    match (sem, features) {
        (true, None) => {
            return Err(Error::Precondition("SEM hyperedges require a feature matrix".into()))
        }
        (false, Some(_)) => {
            return Err(Error::Precondition(
                "features were supplied but SEM hyperedges were not requested".into(),
            ))
        }
        (true, Some(f)) if f.rows() != n => {
            return Err(Error::Shape(format!("{} feature rows for {n} users", f.rows())))
        }
        _ => {}
    }

    let mut edges = Vec::new();
    let mut push = |kind: HyperedgeKind, sets: Vec<Vec<usize>>| {
        for members in sets {
            edges.push(Hyperedge {
                id: edges.len(),
                kind,
                members,
            });
        }
    };
    if spec.has(HyperedgeKind::Top) {
        push(HyperedgeKind::Top, topology_hyperedges(&bundle.edges, n, spec.k_hop));
    }
    if let (true, Some(f)) = (sem, features) {
        push(HyperedgeKind::Sem, semantic_hyperedges(f, spec.knn_k, spec.similarity)?.sets);
    }
    if spec.has(HyperedgeKind::For) {
        push(HyperedgeKind::For, forum_hyperedges(&bundle.group_index));
    }
    if edges.is_empty() {
        return Err(Error::InvalidGraph(format!(
            "no hyperedges produced for {}; graph is untrainable",
            spec.label()
        )));
    }
    Hypergraph::with_unit_weights(n, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::LinkKind;
    use ndarray::arr2;

    fn e(src: usize, dst: usize) -> EdgeRecord {
        EdgeRecord {
            src,
            dst,
            kind: LinkKind::Follow,
        }
    }

    #[test]
    fn path_graph_two_hops() {
        let edges = [e(0, 1), e(1, 2), e(2, 3)];
        let sets = topology_hyperedges(&edges, 4, 2);
        assert_eq!(sets[0], vec![0, 1, 2]);
        assert_eq!(sets, vec![vec![0, 1, 2], vec![0, 1, 2, 3], vec![1, 2, 3]]);
    }

    #[test]
    fn triangle_dedups_to_one() {
        let edges = [e(0, 1), e(1, 2), e(2, 0)];
        assert_eq!(topology_hyperedges(&edges, 3, 2), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn isolated_node_contributes_nothing() {
        let edges = [e(0, 1)];
        let sets = topology_hyperedges(&edges, 6, 2);
        assert_eq!(sets, vec![vec![0, 1]]);
        assert!(sets.iter().all(|s| !s.contains(&5)));
    }

    #[test]
    fn direction_is_ignored() {
        let a = topology_hyperedges(&[e(0, 1), e(2, 1)], 3, 1);
        let b = topology_hyperedges(&[e(1, 0), e(1, 2)], 3, 1);
        assert_eq!(a, b);
    }

    #[test]
    fn knn_ties_go_to_lower_ids() {
        let f = Features::try_new(arr2(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])).unwrap();
        let s = semantic_hyperedges(&f, 1, Similarity::Cosine).unwrap();
        // node 0 -> 1, node 1 -> 0, node 2 -> 0
        assert_eq!(s.sets, vec![vec![0, 1], vec![0, 2]]);
    }

    #[test]
    fn knn_prefers_parallel_rows() {
        let f = Features::try_new(arr2(&[[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])).unwrap();
        let s = semantic_hyperedges(&f, 1, Similarity::Cosine).unwrap();
        assert_eq!(s.sets[0], vec![0, 1]);
        let s = semantic_hyperedges(&f, 1, Similarity::Euclidean).unwrap();
        assert_eq!(s.sets[0], vec![0, 1]);
    }

    #[test]
    fn knn_bound_checked() {
        let f = Features::try_new(arr2(&[[1.0], [2.0], [3.0]])).unwrap();
        assert!(semantic_hyperedges(&f, 3, Similarity::Cosine).is_err());
        assert!(semantic_hyperedges(&f, 0, Similarity::Cosine).is_err());
    }

    #[test]
    fn zero_row_is_reported() {
        let f = Features::try_new(arr2(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])).unwrap();
        let s = semantic_hyperedges(&f, 1, Similarity::Cosine).unwrap();
        assert_eq!(s.zero_norm_nodes, vec![0]);
        // node 0 still gets a hyperedge; others never pick it
        assert!(s.sets.contains(&vec![0, 1]));
        assert!(s.sets.contains(&vec![1, 2]));
    }

    #[test]
    fn forum_groups() {
        let mut g = BTreeMap::new();
        g.insert("book".to_string(), vec![0, 3, 7]);
        g.insert("solo".to_string(), vec![2]);
        g.insert("tome".to_string(), vec![7, 3, 0]);
        g.insert("walk".to_string(), vec![1, 2]);
        assert_eq!(forum_hyperedges(&g), vec![vec![0, 3, 7], vec![1, 2]]);
    }

    #[test]
    fn spec_labels() {
        let s = HyperedgeSpec::with_kinds(&[HyperedgeKind::For, HyperedgeKind::Top]);
        assert_eq!(s.label(), "TOP+FOR");
        assert_eq!(HyperedgeSpec::parse_kinds("FOR+TOP").unwrap(), s.kinds.iter().copied().rev().collect::<Vec<_>>());
    }
}
