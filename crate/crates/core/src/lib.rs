//! Market-network politics toolkit.
//!
//! Builds heterogeneous author/product/brand/category graphs from review
//! corpora, measures how politically relevant, aligned and polarized market
//! segments are, expands sparse political labels with a relational graph
//! convolutional network, and fits beta regressions on the resulting
//! lifestyle-politics scores.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default); every such loop has a sequential path selected through
//! [`par::Execution`].

pub mod hetgraph;
pub mod ingest;
pub mod par;
pub mod polmetrics;
pub mod rgcn;
pub mod sampler;
pub mod statlab;

pub use hetgraph::{EdgeKind, HeteroGraph, NodeId, NodeKind};
pub use polmetrics::{GlobalPoliticalTotals, PoliticsReport, SegmentCounts};
