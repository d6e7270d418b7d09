//! Block styles: the per-level layer groups used by encoders, decoders and
//! the U-Net, selected by name.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::layers::LayerSpec;

pub trait BlockStyle: Send + Sync {
    fn name(&self) -> &'static str;

    /// Layers applied at one encoder level before downsampling.
    fn encoder(&self, c: usize) -> Vec<LayerSpec>;

    /// Decoder layers between the transposed convolution and the sparsifier.
    fn before_sparsify(&self, c: usize) -> Vec<LayerSpec>;

    /// Decoder layers after the sparsifier.
    fn after_sparsify(&self, c: usize) -> Vec<LayerSpec>;
}

fn ssc_bn_relu(c: usize) -> Vec<LayerSpec> {
    vec![LayerSpec::ssc(c, c, 3), LayerSpec::bn(c), LayerSpec::relu(c)]
}

/// One submanifold convolution per slot.
pub struct SingleSsc;

impl BlockStyle for SingleSsc {
    fn name(&self) -> &'static str {
        "ssc"
    }

    fn encoder(&self, c: usize) -> Vec<LayerSpec> {
        ssc_bn_relu(c)
    }

    /// The sparsifier reads raw convolution output so its first channel can
    /// take either sign.
    fn before_sparsify(&self, c: usize) -> Vec<LayerSpec> {
        vec![LayerSpec::ssc(c, c, 3)]
    }

    fn after_sparsify(&self, c: usize) -> Vec<LayerSpec> {
        let mut v = vec![LayerSpec::bn(c), LayerSpec::relu(c)];
        v.extend(ssc_bn_relu(c));
        v
    }
}

/// Two pre-activation residual blocks per slot.
pub struct TwoResidual;

impl BlockStyle for TwoResidual {
    fn name(&self) -> &'static str {
        "res2"
    }

    fn encoder(&self, c: usize) -> Vec<LayerSpec> {
        vec![LayerSpec::res(c, 3), LayerSpec::res(c, 3)]
    }

    fn before_sparsify(&self, c: usize) -> Vec<LayerSpec> {
        self.encoder(c)
    }

    fn after_sparsify(&self, c: usize) -> Vec<LayerSpec> {
        self.encoder(c)
    }
}

pub struct BlockRegistry {
    styles: BTreeMap<&'static str, Box<dyn BlockStyle>>,
}

impl BlockRegistry {
    pub fn standard() -> Self {
        let mut r = BlockRegistry {
            styles: BTreeMap::new(),
        };
        r.register(Box::new(SingleSsc));
        r.register(Box::new(TwoResidual));
        r
    }

    pub fn register(&mut self, style: Box<dyn BlockStyle>) {
        self.styles.insert(style.name(), style);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.styles.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn BlockStyle> {
        self.styles
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownName {
                kind: "block style",
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }
}
