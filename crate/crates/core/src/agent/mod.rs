//! TD3 with a hybrid actor whose middle block is swappable between the
//! quantum layer (trained through its surrogate) and classical controls.

mod actor;
mod config;
mod critic;
mod replay;
mod td3;
mod train;

pub use actor::{ActorGrads, ActorNets, ActorOptimizer, ActorOutput, ActorTape, ForwardMode, HybridActor, MiddleBlock, PqcBlock};
pub use config::{AgentConfig, SurrogateConfig, Variant};
pub use critic::{Critic, CriticGrads, CriticOptimizer, CriticTape};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use td3::{td_targets, FitRecord, RngStreams, Td3Agent, UpdateStats};
pub use train::{
    evaluate, mean_std, Checkpoint, CheckpointSink, EvalPoint, MetricRecord, MetricSink, TrainOutcome, TrainSettings,
    Trainer, CHECKPOINT_FORMAT,
};
