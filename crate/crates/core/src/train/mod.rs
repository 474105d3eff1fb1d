//! Losses, the staged training loop and free-running generation.

mod certify;
mod config;
mod forward;
mod infer;
mod trainer;

pub use certify::{certify_gradients, tiny_setup};
pub use config::{TrainConfig, KEYS as CONFIG_KEYS};
pub use forward::{
    combine, forward_pass, forward_without_iu, reinforce_terms, reward_tokens, topic_pretrain_loss, AlbumExample,
    ForwardOutput, LossBreakdown, LossWeights, RlBaseline, RlMode, RlPlan, RlSample, StageLosses,
};
pub use infer::{generate, generate_without_iu, GenerateOptions, Generated, StageAttention};
pub use trainer::{
    generate_options, history_csv, history_row, model_dims, run_epoch, story_words, train, validation_meteor,
    EpochRecord, Stage, StageEnd, StageSpec, TrainOutcome, HISTORY_HEADER,
};
