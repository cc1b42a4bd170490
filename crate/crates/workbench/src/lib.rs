//! Pipeline driver and labeling service.
//!
//! [`pipeline`] runs each stage against a work directory with fixed artifact
//! names; [`service`] hosts the labeling loop over HTTP.

pub mod config;
pub mod fixture;
pub mod pipeline;
pub mod service;

pub use config::PipelineConfig;

/// Input or configuration rejected before any work started.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);
