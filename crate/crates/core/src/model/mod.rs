//! Small transformer sequence models: an encoder-decoder generator and a
//! decoder-only language model sharing one parameter layout, with exact
//! per-example gradients, nucleus sampling and a binary checkpoint format.

mod config;
mod metrics;
mod params;
mod sampling;
mod tape;
mod transformer;

pub use config::{Mode, ModelConfig, SamplerConfig, TrainConfig};
pub use metrics::{argmax, argmax_hits, lm_stats, next_word_accuracy, perplexity, LmStats};
pub use params::{
    checkpoint_bytes, init_model, layout, load_checkpoint, parse_checkpoint, save_checkpoint, Init,
    Parameters, TensorSpec,
};
pub use sampling::{generate, nucleus, sample_nucleus, sampling_distribution};
pub use transformer::{forward_loss, loss_and_grad, per_example_grad, ForwardOutput};
