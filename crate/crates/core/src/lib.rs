//! Visual tracking-by-detection built on a cost-sensitively weighted online
//! sequential extreme learning machine.
//!
//! The pipeline per frame: compressed Haar-style features over an integral
//! image ([`features`]), a random-hidden-layer classifier updated in closed
//! form ([`elm`], [`oselm`], [`woselm`]), vote-based target selection from
//! the scored candidates ([`selector`]), and ring resampling around the new
//! position ([`geometry`], [`tracker`]). [`eval`] scores tracks against
//! ground truth.

pub mod elm;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod oselm;
pub mod selector;
pub mod tracker;
pub mod woselm;

pub use elm::{Activation, HiddenLayer};
pub use error::{CoreError, Result};
pub use eval::EvalResult;
pub use features::{GrayImage, IntegralImage, RectFilter, SparseProjection};
pub use geometry::{BBox, RingSpec};
pub use selector::{Candidate, SelectorConfig};
pub use tracker::{TrackRecord, TrackerConfig, TrackerState};
pub use woselm::{ClassWeights, Label, RegularizerMode, RhoMode, WoselmState};
