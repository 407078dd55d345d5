//! Texture GAN: generator, discriminators, losses, training and inference.

pub mod config;
pub mod discriminator;
pub mod generate;
pub mod generator;
pub mod losses;
pub mod patches;
pub mod train;

pub use config::{GeneratorConfig, RealImages, RunConfig, TrainConfig};
pub use discriminator::{Discriminator, Layer};
pub use generate::{generate, interpolate, latent_from_seed, slerp, GenerateOutput, LoadedGenerator};
pub use generator::{Generator, NoiseBank};
pub use losses::{loss_disc, loss_disc_value, loss_nonsat, loss_nonsat_value, path_length, weighted_objective, PathLength};
pub use patches::{assemble_patch_batch, PatchConfig, PatchSource};
pub use train::{
    generator_gradients, load_dataset, synthetic_coloring, synthetic_real, train, Models, Sample, StepMetrics,
    TrainOutcome, TrainState, Trainer,
};
