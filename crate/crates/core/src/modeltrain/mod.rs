mod adam;
mod checkpoint;
mod config;
mod model;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CheckpointHeader, TensorEntry, FORMAT_VERSION, MAGIC,
};
pub use config::{ModelConfig, Variant};
pub use model::{
    build_model, joint_loss, model_forward, IntentBranch, Layout, LossNorms, Model, Outputs,
    Predictions,
};
pub use train::{batch_gradients, train, train_model, EpochRecord, StopReason, TrainOutcome};
