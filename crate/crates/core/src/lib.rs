//! Clustering of high-dimensional time series by weak cluster-specific
//! factors hidden under strong common factors.

pub mod cli;
pub mod clustering;
pub mod error;
pub mod evaluation;
pub mod factor_count;
pub mod linalg;
pub mod loadings;
pub mod panel;
pub mod report;
pub mod simulation;

pub use clustering::{cluster_pipeline, ClusteringResult, OmegaChoice, PipelineConfig};
pub use error::{Error, Result};
pub use factor_count::{cumulative_ratio_sequence, FactorCountReport, FactorCounts};
pub use loadings::{LoadingKind, LoadingMatrix};
pub use panel::{load_panel, Orientation, TimeSeriesPanel};
