//! Q-function learning: the network and its updates, the n-step queue,
//! and the ensemble training loop.

mod mlp;
mod nstep;
mod train;

pub use mlp::{
    gradients, load_checkpoint, q_forward, q_forward_target, save_checkpoint, td_update,
    AdamState, QNetworkParams,
};
pub use nstep::{n_step_targets, NStepBuffer};
pub use train::{
    epsilon_schedule, greedy_rollout, select_action, train_ensemble, train_member, EnsembleResult,
    EpisodeLog, RolloutReport, TrainedMember, TrainerConfig,
};
