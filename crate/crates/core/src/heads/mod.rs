//! Multi-head clustering on frozen features.
//!
//! Each head is an affine map from standardized features to `C` cluster logits.
//! A student copy is trained with AdamW on anchor/neighbor pairs; a teacher copy
//! follows it by exponential moving average and supplies Sinkhorn-centered targets.

mod checkpoint;
mod config;
mod network;
mod objective;
mod train;

pub use checkpoint::{load_bank, save_bank};
pub use config::TrainConfig;
pub use network::{head_forward, HeadParams, Network};
pub use objective::{
    ce_term, composite_loss_and_grad, lambda_schedule, sinkhorn_knopp, smooth_teacher,
    temi_pair_loss, HeadBatch, LossParams, MARGINAL_FLOOR,
};
pub use train::{
    best_head, ema_update, predict_labeling, train_heads, AdamState, HeadBank, TrainReport,
};
