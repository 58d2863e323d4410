//! The ResNet proximal generator, the discriminator and the unrolled network.

mod discriminator;
mod generator;
mod store;
mod unrolled;

pub use discriminator::{magnitude_backward, magnitude_forward, Discriminator, DiscriminatorCache, MIN_DISCRIMINATOR_SIZE};
pub use generator::{Generator, GeneratorCache, GeneratorConfig, ResidualBlock, ResidualBlockCache};
pub use store::{load_model, manifest, read_model, save_model, write_model, MODEL_HEADER};
pub use unrolled::{unroll, UnrolledCache, UnrolledModel, UnrolledOutput, ValueMap, WeightMode};
