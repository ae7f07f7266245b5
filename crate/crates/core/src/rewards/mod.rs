//! Motion reward models.
//!
//! Two discriminators score how plausible a clip's motion is:
//!
//! * the instantaneous model ([`ImrDiscriminator`]) reads the stacked
//!   optical-flow fields of consecutive frame pairs, and
//! * the long-term model ([`LmrDiscriminator`]) reads per-query point-track
//!   descriptors through an order-invariant pooled MLP.
//!
//! Their logits become rewards by clipping ([`RewardMode::Logit`]) or by a
//! sigmoid squash ([`RewardMode::Sigmoid`]), combined per [`CombineMode`].
//! [`pretrain_rewards`] fits both models against caller-supplied negative
//! clips; [`ema_update`] maintains the slow-moving shadow copies that the
//! fine-tuning loop scores against.

mod config;
mod discriminators;
mod training;

pub use config::{combined_reward, reward, sigmoid, CombineMode, RewardConfig, RewardMode};
pub use discriminators::{Discriminator, ImrDiscriminator, LmrDiscriminator};
pub use training::{
    ema_update, pretrain_rewards, train_discriminator_step, PretrainOptions, PretrainReport,
    RewardBundle,
};
