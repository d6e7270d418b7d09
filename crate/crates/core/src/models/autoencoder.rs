//! Sparse autoencoder: encoder, decoder and the layer tables behind them.

use std::sync::Arc;

use crate::autograd::{ParamStore, Var};
use crate::error::{Error, Result};
use crate::layers::{Builder, Context, Layer, LayerRegistry, LayerSpec, Mode, PatternStack, Rulebook, Sequential};
use crate::models::{BlockRegistry, NetworkSpec};
use crate::tensor::{Sites, SparseTensor};

/// Encoder layer table: an input stem, then per level a block followed by
/// the strided convolution to the next level.
pub fn encoder_table(spec: &NetworkSpec, blocks: &BlockRegistry) -> Result<Vec<LayerSpec>> {
    spec.validate()?;
    let style = blocks.get(&spec.block)?;
    let levels = spec.levels();
    let c0 = levels[0].channels;
    let mut t = vec![LayerSpec::ssc(spec.in_channels, c0, 3), LayerSpec::bn(c0), LayerSpec::relu(c0)];
    for (i, lv) in levels.iter().enumerate() {
        let Some((f, s)) = lv.down else { break };
        let next = levels[i + 1].channels;
        t.extend(style.encoder(lv.channels));
        t.extend([LayerSpec::sc(lv.channels, next, f, s), LayerSpec::bn(next), LayerSpec::relu(next)]);
    }
    Ok(t)
}

/// Decoder layer table: per level, from the latent back to the input
/// resolution, a transposed convolution, a block, a sparsifier restoring
/// that level and another block; finally a site-wise map to the input
/// channels.
pub fn decoder_table(spec: &NetworkSpec, blocks: &BlockRegistry) -> Result<Vec<LayerSpec>> {
    spec.validate()?;
    let style = blocks.get(&spec.block)?;
    let levels = spec.levels();
    let mut t = Vec::new();
    for i in (0..levels.len() - 1).rev() {
        let (f, s) = levels[i].down.expect("every non-latent level downsamples");
        let (c, up) = (levels[i].channels, levels[i + 1].channels);
        t.extend([LayerSpec::tc(up, c, f, s), LayerSpec::bn(c), LayerSpec::relu(c)]);
        t.extend(style.before_sparsify(c));
        t.push(LayerSpec::sparsify(c, i));
        t.extend(style.after_sparsify(c));
    }
    t.push(LayerSpec::linear(levels[0].channels, spec.in_channels));
    Ok(t)
}

/// Pattern-restoring decoder built from deconvolutions, with no
/// normalization so each latent site only influences the sites below it.
pub fn nonconvnet_table(spec: &NetworkSpec, classes: usize) -> Result<Vec<LayerSpec>> {
    spec.validate()?;
    let levels = spec.levels();
    let mut t = Vec::new();
    for i in (0..levels.len() - 1).rev() {
        let (f, s) = levels[i].down.expect("every non-latent level downsamples");
        let c = levels[i].channels;
        t.extend([LayerSpec::dc(levels[i + 1].channels, c, f, s, i), LayerSpec::relu(c)]);
    }
    t.push(LayerSpec::linear(levels[0].channels, classes));
    Ok(t)
}

/// Active sets of every encoder level, computed from the input sites alone.
pub fn encoder_patterns(spec: &NetworkSpec, input: &Arc<Sites>) -> Result<PatternStack> {
    spec.check_input(input.spatial_size())?;
    let mut stack = PatternStack::new();
    let mut sites = input.clone();
    for lv in spec.levels() {
        let Some((f, s)) = lv.down else { break };
        let rb = Arc::new(Rulebook::strided(&sites, f, s)?);
        sites = rb.out_sites().clone();
        stack.push_down(rb)?;
    }
    Ok(stack)
}

pub struct Encoder {
    pub spec: NetworkSpec,
    net: Sequential,
}

impl Encoder {
    pub fn build(spec: &NetworkSpec, reg: &LayerRegistry, blocks: &BlockRegistry, b: &mut Builder) -> Result<Self> {
        let net = Sequential::build(reg, encoder_table(spec, blocks)?, b, "encoder")?;
        Ok(Encoder { spec: spec.clone(), net })
    }

    pub fn table(&self) -> &[LayerSpec] {
        self.net.specs()
    }

    /// Encodes `x`, replacing the context's pattern stack with this input's.
    pub fn forward(&self, x: Var, cx: &mut Context) -> Result<Var> {
        let input = cx.value(x);
        if input.num_active() == 0 {
            return Err(Error::EmptyInput);
        }
        if input.channels() != self.spec.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "encoder expects {} input channels, got {}",
                self.spec.in_channels,
                input.channels()
            )));
        }
        self.spec.check_input(input.spatial_size())?;
        cx.patterns = PatternStack::new();
        self.net.forward(x, cx)
    }
}

pub struct Decoder {
    pub spec: NetworkSpec,
    net: Sequential,
}

impl Decoder {
    pub fn build(spec: &NetworkSpec, reg: &LayerRegistry, blocks: &BlockRegistry, b: &mut Builder) -> Result<Self> {
        let net = Sequential::build(reg, decoder_table(spec, blocks)?, b, "decoder")?;
        Ok(Decoder { spec: spec.clone(), net })
    }

    pub fn table(&self) -> &[LayerSpec] {
        self.net.specs()
    }

    pub fn forward(&self, z: Var, cx: &mut Context) -> Result<Var> {
        cx.sparsified.clear();
        cx.decoded.clear();
        self.net.forward(z, cx)
    }
}

pub struct Autoencoder {
    pub spec: NetworkSpec,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

/// Tape nodes of one autoencoder pass.
#[derive(Clone, Copy, Debug)]
pub struct AeNodes {
    pub input: Var,
    pub latent: Var,
    pub output: Var,
}

impl Autoencoder {
    pub fn build(spec: &NetworkSpec, b: &mut Builder) -> Result<Self> {
        let reg = LayerRegistry::standard();
        let blocks = BlockRegistry::standard();
        Ok(Autoencoder {
            spec: spec.clone(),
            encoder: Encoder::build(spec, &reg, &blocks, b)?,
            decoder: Decoder::build(spec, &reg, &blocks, b)?,
        })
    }

    /// Full pass; in train mode the sparsifiers copy the encoder patterns and
    /// their records land in `cx.sparsified`.
    pub fn forward(&self, x: SparseTensor, cx: &mut Context) -> Result<AeNodes> {
        let input = cx.input(x);
        let latent = self.encoder.forward(input, cx)?;
        let output = self.decoder.forward(latent, cx)?;
        Ok(AeNodes { input, latent, output })
    }
}

/// Runs train-mode forward passes without parameter updates so the batch
/// norm running statistics settle to the data.
pub fn burn_in_batchnorm(encoder: &Encoder, store: &mut ParamStore, batches: &[SparseTensor], passes: usize) -> Result<()> {
    if batches.is_empty() {
        return Ok(());
    }
    for p in 0..passes {
        let mut cx = Context::new(store, Mode::Train);
        let x = cx.input(batches[p % batches.len()].clone());
        encoder.forward(x, &mut cx)?;
    }
    Ok(())
}
