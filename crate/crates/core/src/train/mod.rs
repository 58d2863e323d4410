//! Losses, GAN warm-up, gradient clipping and the alternating training loop.

mod config;
mod losses;
mod trainer;

pub use config::{apply_train_keys, train_keys, LossWeights, TrainConfig, TRAIN_KEYS};
pub use losses::{
    clip_gradients, discriminator_loss, discriminator_loss_grad, fidelity_loss, gan_generator_loss, gan_warmup, generator_loss, mixed_norm,
    mixed_norm_grad, pixel_loss, GeneratorLossTerms,
};
pub use trainer::{
    discriminator_input, discriminator_step, generator_step, reconstruct, train, Batch, CheckpointHook, DiscriminatorStep, GeneratorStep, LogRow,
    TrainData, TrainLog, LOG_HEADER,
};
