//! The cascaded classifier and landing-point predictor.

mod config;
mod layers;
mod loss;
mod network;
mod sample;
mod train;

pub use config::{config_from_text, config_to_text, LabelSource, ModelConfig, ModelKind, SideStream, TrainConfig};
pub use layers::{
    multi_head_attention, multi_head_attention_weights, positional_encoding, AttentionVars, ParamSet, LN_EPS,
};
pub use network::{
    build_classifier_input, build_predictor_input, cascade_infer, cascade_labels, classify, classify_batch,
    encode_input, hard_label, predict_batch, predict_landing, relabel_with_classifier, split_streams, Model, Network,
    SCALE_X, SCALE_Y,
};
pub use sample::{TrajectorySample, IMAGE_HEIGHT, IMAGE_WIDTH, TRAJ_LEN};
pub use loss::{bce_loss, mse_loss};
pub use train::{split_indices, trace_csv, train, train_model, EpochLoss, TrainOutcome};
