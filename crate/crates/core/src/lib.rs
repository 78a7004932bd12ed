//! Personality classification over social-environment hypergraphs.
//!
//! The pipeline turns fragmented user records into a hypergraph whose
//! hyperedges are interaction neighbourhoods (`TOP`), feature-space
//! neighbourhoods (`SEM`) and forum groups (`FOR`); optionally rewrites each
//! record into a narrative through a language-model client; embeds the
//! narratives; and trains a skip-connected hypergraph network with a
//! class-weighted focal loss.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the scalar for the common cases.

pub mod domain;
pub mod enhance;
pub mod envgen;
pub mod error;
pub mod eval;
pub mod features;
pub mod hgnn;
pub mod hypergraph;
pub mod ingest;
pub mod scalar;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `N x d` node features in double precision.
pub type FeatureMatrix = features::Features<f64>;
pub type FeatureMatrix32 = features::Features<f32>;

pub type Hypergraph = hypergraph::Hypergraph<f64>;
pub type Hypergraph32 = hypergraph::Hypergraph<f32>;

pub type PropagationOperator = hgnn::PropagationOperator<f64>;
pub type PropagationOperator32 = hgnn::PropagationOperator<f32>;

pub type Model = hgnn::HgnnModel<f64>;
pub type Model32 = hgnn::HgnnModel<f32>;
