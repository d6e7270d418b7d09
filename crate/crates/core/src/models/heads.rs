//! Downstream heads and baselines, selected by name.
//!
//! Sample-level heads (`linear`, `mlp`) classify the `1^d` latent vector of
//! each sample. Site-level heads (`nonconvnet`, `unet`, `shape-context`)
//! produce logits on every active input site.

use std::collections::BTreeMap;

use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::layers::{Builder, Context, Layer, LayerRegistry, LayerSpec, Sequential};
use crate::models::{nonconvnet_table, shape_context, shape_context_channels, BlockRegistry, LatentMode, NetworkSpec, UNet};

/// Parameter-name prefix shared by every head.
pub const HEAD_PREFIX: &str = "head";

#[derive(Clone, Debug, PartialEq)]
pub struct HeadConfig {
    pub classes: usize,
    /// Hidden width of the latent MLP head.
    pub hidden: usize,
    /// SSC blocks run on the latent before the deconvolutions.
    pub latent_blocks: usize,
    pub shape_context_levels: usize,
    /// Hidden width of the shape-context MLP.
    pub shape_context_hidden: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            classes: 10,
            hidden: 512,
            latent_blocks: 0,
            shape_context_levels: 4,
            shape_context_hidden: 64,
        }
    }
}

/// What a head consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadInput {
    /// The encoder latent (and, for deconvolution heads, its patterns).
    Latent,
    /// The raw input; the head is a complete baseline network.
    Raw,
}

pub trait Head: Send + Sync {
    fn name(&self) -> &'static str;

    fn input(&self) -> HeadInput;

    /// Whether logits live on input sites rather than one row per sample.
    fn per_site(&self) -> bool;

    /// `x` is the latent or the raw input according to [`Head::input`].
    fn forward(&self, x: Var, cx: &mut Context) -> Result<Var>;
}

fn mlp_table(input: usize, hidden: usize, classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::linear(input, hidden),
        LayerSpec::relu(hidden),
        LayerSpec::linear(hidden, hidden),
        LayerSpec::relu(hidden),
        LayerSpec::linear(hidden, classes),
    ]
}

/// Linear or MLP classifier on a `1^d` latent.
pub struct LatentClassifier {
    name: &'static str,
    net: Sequential,
}

impl Head for LatentClassifier {
    fn name(&self) -> &'static str {
        self.name
    }

    fn input(&self) -> HeadInput {
        HeadInput::Latent
    }

    fn per_site(&self) -> bool {
        false
    }

    fn forward(&self, z: Var, cx: &mut Context) -> Result<Var> {
        if cx.value(z).spatial_size().iter().any(|&n| n != 1) {
            return Err(Error::SpecMismatch(format!(
                "{} head needs a 1^d latent, got extent {:?}",
                self.name,
                cx.value(z).spatial_size()
            )));
        }
        self.net.forward(z, cx)
    }
}

/// Deconvolution stack restoring the encoder patterns, then per-site logits.
pub struct NonConvNet {
    latent: Option<Sequential>,
    net: Sequential,
}

impl NonConvNet {
    pub fn table(&self) -> &[LayerSpec] {
        self.net.specs()
    }
}

impl Head for NonConvNet {
    fn name(&self) -> &'static str {
        "nonconvnet"
    }

    fn input(&self) -> HeadInput {
        HeadInput::Latent
    }

    fn per_site(&self) -> bool {
        true
    }

    fn forward(&self, z: Var, cx: &mut Context) -> Result<Var> {
        let z = match &self.latent {
            Some(seq) => seq.forward(z, cx)?,
            None => z,
        };
        self.net.forward(z, cx)
    }
}

struct UNetHead(UNet);

impl Head for UNetHead {
    fn name(&self) -> &'static str {
        "unet"
    }

    fn input(&self) -> HeadInput {
        HeadInput::Raw
    }

    fn per_site(&self) -> bool {
        true
    }

    fn forward(&self, x: Var, cx: &mut Context) -> Result<Var> {
        self.0.forward(x, cx)
    }
}

/// Fixed shape-context features followed by a site-wise MLP.
pub struct ShapeContextHead {
    levels: usize,
    net: Sequential,
}

impl Head for ShapeContextHead {
    fn name(&self) -> &'static str {
        "shape-context"
    }

    fn input(&self) -> HeadInput {
        HeadInput::Raw
    }

    fn per_site(&self) -> bool {
        true
    }

    fn forward(&self, x: Var, cx: &mut Context) -> Result<Var> {
        let feats = shape_context(cx.value(x), self.levels)?;
        let v = cx.input(feats);
        self.net.forward(v, cx)
    }
}

pub type HeadFactory = fn(&NetworkSpec, &HeadConfig, &mut Builder) -> Result<Box<dyn Head>>;

pub struct HeadRegistry {
    factories: BTreeMap<&'static str, HeadFactory>,
}

fn seq(specs: Vec<LayerSpec>, b: &mut Builder, name: &str) -> Result<Sequential> {
    Sequential::build(&LayerRegistry::standard(), specs, b, name)
}

fn need_point(spec: &NetworkSpec, head: &str) -> Result<()> {
    if spec.mode != LatentMode::ToPoint {
        return Err(Error::SpecMismatch(format!("{head} head needs a to_point encoder")));
    }
    Ok(())
}

impl HeadRegistry {
    pub fn standard() -> Self {
        let mut r = HeadRegistry {
            factories: BTreeMap::new(),
        };
        r.register("linear", |spec, cfg, b| {
            need_point(spec, "linear")?;
            let net = seq(vec![LayerSpec::linear(spec.latent_channels(), cfg.classes)], b, HEAD_PREFIX)?;
            Ok(Box::new(LatentClassifier { name: "linear", net }))
        });
        r.register("mlp", |spec, cfg, b| {
            need_point(spec, "mlp")?;
            let net = seq(mlp_table(spec.latent_channels(), cfg.hidden, cfg.classes), b, HEAD_PREFIX)?;
            Ok(Box::new(LatentClassifier { name: "mlp", net }))
        });
        r.register("nonconvnet", |spec, cfg, b| {
            let latent = if cfg.latent_blocks > 0 {
                let style = BlockRegistry::standard();
                let style = style.get(&spec.block)?;
                let c = spec.latent_channels();
                let table = (0..cfg.latent_blocks).flat_map(|_| style.encoder(c)).collect();
                Some(seq(table, b, &format!("{HEAD_PREFIX}.latent"))?)
            } else {
                None
            };
            let net = seq(nonconvnet_table(spec, cfg.classes)?, b, HEAD_PREFIX)?;
            Ok(Box::new(NonConvNet { latent, net }))
        });
        r.register("unet", |spec, cfg, b| {
            Ok(Box::new(UNetHead(UNet::build(spec, cfg.classes, b, HEAD_PREFIX)?)))
        });
        r.register("shape-context", |spec, cfg, b| {
            let l = cfg.shape_context_levels;
            let input = shape_context_channels(spec.d, spec.in_channels, l);
            let net = seq(mlp_table(input, cfg.shape_context_hidden, cfg.classes), b, HEAD_PREFIX)?;
            Ok(Box::new(ShapeContextHead { levels: l, net }))
        });
        r
    }

    pub fn register(&mut self, name: &'static str, f: HeadFactory) {
        self.factories.insert(name, f);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn build(&self, name: &str, spec: &NetworkSpec, cfg: &HeadConfig, b: &mut Builder) -> Result<Box<dyn Head>> {
        if cfg.classes == 0 {
            return Err(Error::SpecInvalid("a head needs at least one class".into()));
        }
        let f = self.factories.get(name).ok_or_else(|| Error::UnknownName {
            kind: "head",
            name: name.to_string(),
            known: self.names().join(", "),
        })?;
        f(spec, cfg, b)
    }
}
