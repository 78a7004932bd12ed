//! Degree structures and the normalized node → hyperedge → node propagation operator.

use ndarray::{Array2, ArrayView2, Axis};

use crate::hypergraph::Hypergraph;
use crate::scalar::Scalar;

/// Node and hyperedge degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeData<S = f64> {
    /// `d_v[u] = Σ_k W[k]·H[u,k]`
    pub node: Vec<S>,
    /// `d_e[k] = Σ_u U[u]·H[u,k]`
    pub edge: Vec<S>,
}

pub fn degrees<S: Scalar>(graph: &Hypergraph<S>) -> DegreeData<S> {
    let u = graph.node_weights();
    let w = graph.edge_weights();
    let mut node = vec![S::zero(); graph.num_nodes()];
    let mut edge = vec![S::zero(); graph.num_edges()];
    for (k, e) in graph.edges().iter().enumerate() {
        for &v in &e.members {
            node[v] = node[v] + w[k];
            edge[k] = edge[k] + u[v];
        }
    }
    DegreeData { node, edge }
}

/// `D_v^{-1/2} U H W D_e^{-1} Hᵀ U D_v^{-1/2}`, kept in factored form.
///
/// Nodes with zero degree get a zero `D_v^{-1/2}` entry, so their rows and
/// columns of the operator vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOperator<S = f64> {
    num_nodes: usize,
    members: Vec<Vec<usize>>,
    /// `U[u] · d_v[u]^{-1/2}` (zero for isolated nodes).
    node_scale: Vec<S>,
    /// `W[k] / d_e[k]`.
    edge_scale: Vec<S>,
    degrees: DegreeData<S>,
}

impl<S: Scalar> PropagationOperator<S> {
    pub fn new(graph: &Hypergraph<S>) -> Self {
        let degrees = degrees(graph);
        let node_scale = degrees
            .node
            .iter()
            .zip(graph.node_weights())
            .map(|(&d, &u)| if d > S::zero() { u / d.sqrt() } else { S::zero() })
            .collect();
        let edge_scale = degrees
            .edge
            .iter()
            .zip(graph.edge_weights())
            .map(|(&d, &w)| w / d)
            .collect();
        PropagationOperator {
            num_nodes: graph.num_nodes(),
            members: graph.edges().iter().map(|e| e.members.clone()).collect(),
            node_scale,
            edge_scale,
            degrees,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn degrees(&self) -> &DegreeData<S> {
        &self.degrees
    }

    /// Computes `Θ_op · x` for an `N x d` matrix. Reductions run in a fixed order.
    pub fn apply(&self, x: ArrayView2<'_, S>) -> Array2<S> {
        assert_eq!(x.nrows(), self.num_nodes, "operator applied to wrong number of rows");
        let d = x.ncols();
        let mut out = Array2::zeros((self.num_nodes, d));
        let mut acc = ndarray::Array1::<S>::zeros(d);
        for (members, &scale) in self.members.iter().zip(&self.edge_scale) {
            acc.fill(S::zero());
            for &u in members {
                acc.scaled_add(self.node_scale[u], &x.row(u));
            }
            acc.mapv_inplace(|a| a * scale);
            for &u in members {
                out.row_mut(u).scaled_add(self.node_scale[u], &acc);
            }
        }
        out
    }

    /// Dense `N x N` operator matrix.
    pub fn to_dense(&self) -> Array2<S> {
        self.apply(Array2::eye(self.num_nodes).view())
    }

    /// Dense Laplacian `Δ = I − Θ_op`.
    pub fn laplacian_dense(&self) -> Array2<S> {
        Array2::eye(self.num_nodes) - self.to_dense()
    }

    /// `D_v^{1/2} 𝟙`.
    pub fn sqrt_degree_vector(&self) -> Array2<S> {
        Array2::from_shape_fn((self.num_nodes, 1), |(i, _)| self.degrees.node[i].sqrt())
    }

    /// Nodes with zero degree.
    pub fn isolated_nodes(&self) -> Vec<usize> {
        self.degrees
            .node
            .iter()
            .enumerate()
            .filter(|(_, d)| **d == S::zero())
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn propagation_operator<S: Scalar>(graph: &Hypergraph<S>) -> PropagationOperator<S> {
    PropagationOperator::new(graph)
}

/// Max absolute row sum of `a − aᵀ`.
pub fn asymmetry<S: Scalar>(a: &Array2<S>) -> f64 {
    let diff = a - &a.t();
    diff.map(|v| v.abs().as_f64())
        .sum_axis(Axis(1))
        .iter()
        .fold(0.0, |m, &v| f64::max(m, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::HyperedgeKind;

    #[test]
    fn degrees_by_hand() {
        // H = [[1,0],[1,1],[0,1]]
        let g = Hypergraph::<f64>::from_member_lists(3, HyperedgeKind::Top, [vec![0, 1], vec![1, 2]]).unwrap();
        let d = degrees(&g);
        assert_eq!(d.edge, vec![2.0, 2.0]);
        assert_eq!(d.node, vec![1.0, 2.0, 1.0]);

        let g2 = g.clone().with_weights(vec![2.0; 3], vec![1.0; 2]).unwrap();
        let d2 = degrees(&g2);
        assert_eq!(d2.edge, vec![4.0, 4.0]);
        assert_eq!(d2.node, d.node);

        let g3 = g.with_weights(vec![1.0; 3], vec![3.0; 2]).unwrap();
        let d3 = degrees(&g3);
        assert_eq!(d3.edge, d.edge);
        assert_eq!(d3.node, vec![3.0, 6.0, 3.0]);
    }

    #[test]
    fn single_pair_operator() {
        let g = Hypergraph::<f64>::from_member_lists(2, HyperedgeKind::For, [vec![0, 1]]).unwrap();
        let op = PropagationOperator::new(&g);
        let dense = op.to_dense();
        for v in dense.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn isolated_node_is_zeroed() {
        let g = Hypergraph::<f64>::from_member_lists(3, HyperedgeKind::For, [vec![0, 1]]).unwrap();
        let op = PropagationOperator::new(&g);
        let dense = op.to_dense();
        assert!(dense.row(2).iter().all(|&v| v == 0.0));
        assert!(dense.column(2).iter().all(|&v| v == 0.0));
        assert_eq!(op.laplacian_dense()[[2, 2]], 1.0);
        assert_eq!(op.isolated_nodes(), vec![2]);
    }

    #[test]
    fn f32_operator_matches_f64() {
        let g = Hypergraph::<f64>::from_member_lists(4, HyperedgeKind::Top, [vec![0, 1, 2], vec![2, 3]]).unwrap();
        let a = PropagationOperator::new(&g).to_dense();
        let b = PropagationOperator::new(&g.cast::<f32>()).to_dense();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - f64::from(*y)).abs() < 1e-6);
        }
    }
}
