//! Elastic depths for functional data.
//!
//! This crate computes amplitude and phase depths for samples of curves
//! observed on `[0, 1]` with values in ℝ, ℝⁿ, or the unit sphere 𝕊², and
//! flags shape anomalies with depth boxplots. The pipeline is
//!
//! 1. map each curve to its square-root slope/velocity representation
//!    ([`transform`]),
//! 2. register pairs of curves by dynamic programming over warping
//!    functions, plus Procrustes rotation on ℝⁿ ([`alignment`]),
//! 3. reduce the registration residuals to amplitude/phase distance
//!    matrices ([`distance`]),
//! 4. convert row medians into depth values ([`depth`]) and flag
//!    low-depth curves with a one-sided boxplot rule ([`detect`]).
//!
//! [`simulate`] provides seeded generators for the benchmark scenarios and
//! [`eval`] the experiment drivers (outlier rank, F1 score, sensitivity
//! sweeps). [`io`] holds the CSV trajectory formats used by the CLI.

pub mod alignment;
pub mod depth;
pub mod detect;
pub mod distance;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod simulate;
pub mod transform;

pub use alignment::{align_pair, optimal_rotation, optimal_warping, AlignmentResult};
pub use depth::{elastic_depths, sample_outlyingness, DepthValues};
pub use detect::{detect, BoxplotConfig, Channel, OutlierReport};
pub use distance::{distance_matrices, DistanceMatrices, ElasticDistances};
pub use geometry::{Grid, ManifoldTag, Rotation, Trajectory};
pub use simulate::{sample_scenario, LabeledSample, ModelId, ScenarioSpec};
pub use transform::{QCurve, Warping};
