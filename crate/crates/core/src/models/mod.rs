//! Network builders: autoencoder, classifier heads and baselines.

pub mod autoencoder;
pub mod blocks;
pub mod heads;
pub mod shape_context;
pub mod spec;
pub mod unet;

pub use autoencoder::{
    burn_in_batchnorm, decoder_table, encoder_patterns, encoder_table, nonconvnet_table, AeNodes, Autoencoder,
    Decoder, Encoder,
};
pub use blocks::{BlockRegistry, BlockStyle, SingleSsc, TwoResidual};
pub use heads::{Head, HeadConfig, HeadInput, HeadRegistry, NonConvNet, HEAD_PREFIX};
pub use shape_context::{shape_context, shape_context_channels};
pub use spec::{Growth, LatentMode, Level, NetworkSpec};
pub use unet::UNet;
