//! Graph-based recommendation toolkit.
//!
//! Builds a user/item/aspect knowledge graph from rating records and
//! aspect-level review opinions, trains complex-valued link-prediction
//! embeddings on it, and serves top-N recommendations together with
//! aspect-based explanations. A cross-validation harness with ranking
//! metrics and paired significance testing compares the graph models
//! against random, popularity, and matrix-factorization baselines.

pub mod cli;
pub mod corpus;
pub mod embed;
pub mod eval;
pub mod explain;
pub mod kgraph;
pub mod recsys;

pub(crate) mod util;
