//! Hypergraph with typed hyperedges and diagonal node/hyperedge weights.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which social environment a hyperedge models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HyperedgeKind {
    /// k-hop neighbourhood in the interaction network.
    #[serde(rename = "TOP")]
    Top,
    /// Feature-space nearest neighbours.
    #[serde(rename = "SEM")]
    Sem,
    /// Forum / interest group membership.
    #[serde(rename = "FOR")]
    For,
}

impl HyperedgeKind {
    pub const ALL: [HyperedgeKind; 3] = [HyperedgeKind::Top, HyperedgeKind::Sem, HyperedgeKind::For];

    pub fn as_str(self) -> &'static str {
        match self {
            HyperedgeKind::Top => "TOP",
            HyperedgeKind::Sem => "SEM",
            HyperedgeKind::For => "FOR",
        }
    }
}

impl fmt::Display for HyperedgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HyperedgeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TOP" => Ok(HyperedgeKind::Top),
            "SEM" => Ok(HyperedgeKind::Sem),
            "FOR" => Ok(HyperedgeKind::For),
            other => Err(Error::Format(format!("unknown hyperedge kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hyperedge {
    pub id: usize,
    pub kind: HyperedgeKind,
    /// Member node ids, sorted ascending and unique.
    pub members: Vec<usize>,
}

/// `G = (V, E, W, U)`; the incidence matrix is implied by the member lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph<S = f64> {
    num_nodes: usize,
    edges: Vec<Hyperedge>,
    node_weights: Vec<S>,
    edge_weights: Vec<S>,
}

impl<S: Scalar> Hypergraph<S> {
    pub fn new(
        num_nodes: usize,
        edges: Vec<Hyperedge>,
        node_weights: Vec<S>,
        edge_weights: Vec<S>,
    ) -> Result<Self> {
        let mut edges = edges;
        for e in &mut edges {
            e.members.sort_unstable();
            e.members.dedup();
        }
        let g = Hypergraph {
            num_nodes,
            edges,
            node_weights,
            edge_weights,
        };
        g.check()?;
        Ok(g)
    }

    /// All node and hyperedge weights set to one.
    pub fn with_unit_weights(num_nodes: usize, edges: Vec<Hyperedge>) -> Result<Self> {
        let m = edges.len();
        Self::new(num_nodes, edges, vec![S::one(); num_nodes], vec![S::one(); m])
    }

    /// Convenience constructor from bare member lists; ids are assigned in order.
    pub fn from_member_lists(
        num_nodes: usize,
        kind: HyperedgeKind,
        lists: impl IntoIterator<Item = Vec<usize>>,
    ) -> Result<Self> {
        let edges = lists
            .into_iter()
            .enumerate()
            .map(|(id, members)| Hyperedge { id, kind, members })
            .collect();
        Self::with_unit_weights(num_nodes, edges)
    }

    fn check(&self) -> Result<()> {
        if self.node_weights.len() != self.num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} node weights for {} nodes",
                self.node_weights.len(),
                self.num_nodes
            )));
        }
        if self.edge_weights.len() != self.edges.len() {
            return Err(Error::InvalidGraph(format!(
                "{} edge weights for {} hyperedges",
                self.edge_weights.len(),
                self.edges.len()
            )));
        }
        if let Some(i) = self.node_weights.iter().position(|w| !(*w > S::zero() && w.is_finite())) {
            return Err(Error::InvalidGraph(format!("node weight {i} is not strictly positive")));
        }
        if let Some(k) = self.edge_weights.iter().position(|w| !(*w > S::zero() && w.is_finite())) {
            return Err(Error::InvalidGraph(format!("edge weight {k} is not strictly positive")));
        }
        let mut ids = HashSet::new();
        let mut sets = HashSet::new();
        for e in &self.edges {
            if e.members.is_empty() {
                return Err(Error::InvalidGraph(format!("hyperedge {} is empty", e.id)));
            }
            if let Some(&bad) = e.members.iter().find(|&&u| u >= self.num_nodes) {
                return Err(Error::InvalidGraph(format!(
                    "hyperedge {} references node {bad} >= {}",
                    e.id, self.num_nodes
                )));
            }
            if !ids.insert(e.id) {
                return Err(Error::InvalidGraph(format!("duplicate edge id {}", e.id)));
            }
            if !sets.insert((e.kind, e.members.clone())) {
                return Err(Error::InvalidGraph(format!(
                    "hyperedge {} duplicates another {} hyperedge",
                    e.id, e.kind
                )));
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Hyperedge] {
        &self.edges
    }

    pub fn node_weights(&self) -> &[S] {
        &self.node_weights
    }

    pub fn edge_weights(&self) -> &[S] {
        &self.edge_weights
    }

    pub fn count_kind(&self, kind: HyperedgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// Replaces the weight vectors, revalidating positivity.
    pub fn with_weights(mut self, node_weights: Vec<S>, edge_weights: Vec<S>) -> Result<Self> {
        self.node_weights = node_weights;
        self.edge_weights = edge_weights;
        self.check()?;
        Ok(self)
    }

    /// Dense `|V| x |E|` incidence matrix.
    pub fn incidence_dense(&self) -> Array2<S> {
        let mut h = Array2::zeros((self.num_nodes, self.edges.len()));
        for (k, e) in self.edges.iter().enumerate() {
            for &u in &e.members {
                h[[u, k]] = S::one();
            }
        }
        h
    }

    /// Number of hyperedges each node belongs to.
    pub fn node_edge_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_nodes];
        for e in &self.edges {
            for &u in &e.members {
                c[u] += 1;
            }
        }
        c
    }

    pub fn cast<T: Scalar>(&self) -> Hypergraph<T> {
        Hypergraph {
            num_nodes: self.num_nodes,
            edges: self.edges.clone(),
            node_weights: self.node_weights.iter().map(|w| T::of(w.as_f64())).collect(),
            edge_weights: self.edge_weights.iter().map(|w| T::of(w.as_f64())).collect(),
        }
    }

    /// Writes one `edge_id,kind,member,...` line per hyperedge. `header` lines are
    /// emitted first as `#` comments.
    pub fn write_edges<W: Write>(&self, mut w: W, header: &[String]) -> std::io::Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        for e in &self.edges {
            write!(w, "{},{}", e.id, e.kind)?;
            for u in &e.members {
                write!(w, ",{u}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn weights_sidecar(&self) -> WeightsSidecar {
        WeightsSidecar {
            num_nodes: self.num_nodes,
            node_weights: self.node_weights.iter().map(|w| w.as_f64()).collect(),
            edge_weights: self.edge_weights.iter().map(|w| w.as_f64()).collect(),
            provenance: None,
        }
    }

    /// Inverse of [`Hypergraph::write_edges`] plus [`Hypergraph::weights_sidecar`].
    pub fn read<R: BufRead>(edges: R, sidecar: &WeightsSidecar) -> Result<Self> {
        let mut list = Vec::new();
        for (lineno, line) in edges.lines().enumerate() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::Format(format!("hyperedge line {}: {msg}", lineno + 1));
            let mut fields = line.split(',').map(str::trim);
            let id = fields
                .next()
                .and_then(|f| f.parse::<usize>().ok())
                .ok_or_else(|| bad("missing edge id".into()))?;
            let kind = fields
                .next()
                .ok_or_else(|| bad("missing kind".into()))?
                .parse::<HyperedgeKind>()?;
            let members = fields
                .map(|f| f.parse::<usize>().map_err(|e| bad(format!("member {f:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            list.push(Hyperedge { id, kind, members });
        }
        Hypergraph::new(
            sidecar.num_nodes,
            list,
            sidecar.node_weights.iter().map(|&w| S::of(w)).collect(),
            sidecar.edge_weights.iter().map(|&w| S::of(w)).collect(),
        )
    }
}

/// Node count and the `U`/`W` diagonals, stored next to the hyperedge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsSidecar {
    pub num_nodes: usize,
    pub node_weights: Vec<f64>,
    pub edge_weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(id: usize, kind: HyperedgeKind, members: &[usize]) -> Hyperedge {
        Hyperedge {
            id,
            kind,
            members: members.to_vec(),
        }
    }

    #[test]
    fn rejects_invalid_structures() {
        use HyperedgeKind::*;
        assert!(Hypergraph::<f64>::with_unit_weights(3, vec![edge(0, Top, &[])]).is_err());
        assert!(Hypergraph::<f64>::with_unit_weights(3, vec![edge(0, Top, &[0, 3])]).is_err());
        assert!(
            Hypergraph::<f64>::with_unit_weights(3, vec![edge(0, Top, &[0]), edge(0, Sem, &[1])]).is_err()
        );
        assert!(Hypergraph::<f64>::with_unit_weights(
            3,
            vec![edge(0, For, &[0, 1]), edge(1, For, &[1, 0])]
        )
        .is_err());
        // Same member set across kinds is allowed.
        assert!(Hypergraph::<f64>::with_unit_weights(
            3,
            vec![edge(0, For, &[0, 1]), edge(1, Top, &[1, 0])]
        )
        .is_ok());
        assert!(Hypergraph::new(2, vec![edge(0, Top, &[0, 1])], vec![1.0, 0.0], vec![1.0]).is_err());
        assert!(Hypergraph::new(2, vec![edge(0, Top, &[0, 1])], vec![1.0, 1.0], vec![-1.0]).is_err());
    }

    #[test]
    fn text_roundtrip() {
        use HyperedgeKind::*;
        let g = Hypergraph::new(
            5,
            vec![edge(0, Top, &[0, 1, 2]), edge(1, Sem, &[3, 4]), edge(2, For, &[0, 4])],
            vec![1.0, 2.0, 1.0, 1.0, 0.5],
            vec![1.0, 3.0, 1.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        g.write_edges(&mut buf, &["test".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("1,SEM,3,4\n"));
        let back = Hypergraph::<f64>::read(buf.as_slice(), &g.weights_sidecar()).unwrap();
        assert_eq!(back, g);
    }
}
