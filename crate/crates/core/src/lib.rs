//! False-positive reduction for CT nodule candidates using point-cloud
//! classifiers.

pub mod augment;
pub mod cloud;
pub mod config;
pub mod error;
pub mod eval;
pub mod formats;
pub mod model;
pub mod nvol;
pub mod phantom;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod volume;

pub use cloud::{Candidate, CloudPoint, PointCloud, RoiBox};
pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use eval::{FrocReport, LabeledCandidate, MatchConfig, Outcome, ScoredCandidate, Truth, FP_LEVELS};
pub use model::{FeatureSet, ModelWeights, TrainConfig};
pub use phantom::{PhantomConfig, Scan, TruthNodule};
pub use sampling::{SamplerConfig, SamplerMode};
pub use volume::{Mask, NormalizedVolume, Volume};
