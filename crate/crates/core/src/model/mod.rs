//! Point-set classifier: shared per-point MLP with optional edge
//! convolutions, max pooling and a small head.

mod features;
mod io;
mod network;
mod train;

pub use features::{select_features, FeatureSet};
pub use io::{decode_weights, encode_weights, load_weights, save_weights};
pub use network::{
    accumulate_gradients, backward, edgeconv_layer, forward, forward_trace, knn_indices, loss,
    predict, ArchConfig, Dense, ModelWeights, Trace, PROB_EPS,
};
pub use train::{
    evaluate, log_to_csv, predict_scores, train, Adam, EpochLog, Evaluation, TrainConfig,
    TrainOutcome, TrainSample, ValidationSet,
};
