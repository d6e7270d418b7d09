//! U-Net segmentation baseline: a strided encoder path, a deconvolution
//! decoder path and same-scale skip concatenations.

use crate::autograd::Var;
use crate::error::Result;
use crate::layers::{concat, Builder, Context, Layer, LayerRegistry, LayerSpec, PatternStack, Sequential};
use crate::models::{BlockRegistry, NetworkSpec};

struct Stage {
    block: Sequential,
    down: Sequential,
    up: Sequential,
    merge: Sequential,
}

pub struct UNet {
    pub spec: NetworkSpec,
    pub classes: usize,
    stem: Sequential,
    stages: Vec<Stage>,
    bottom: Sequential,
    head: Sequential,
}

impl UNet {
    /// Depth and widths mirror `spec`'s encoder.
    pub fn build(spec: &NetworkSpec, classes: usize, b: &mut Builder, prefix: &str) -> Result<Self> {
        spec.validate()?;
        let reg = LayerRegistry::standard();
        let blocks = BlockRegistry::standard();
        let style = blocks.get(&spec.block)?;
        let levels = spec.levels();
        let c0 = levels[0].channels;
        let seq = |b: &mut Builder, specs: Vec<LayerSpec>, name: String| Sequential::build(&reg, specs, b, &name);
        let stem = seq(
            b,
            vec![LayerSpec::ssc(spec.in_channels, c0, 3), LayerSpec::bn(c0), LayerSpec::relu(c0)],
            format!("{prefix}.stem"),
        )?;
        let mut stages = Vec::new();
        for (i, lv) in levels.iter().enumerate() {
            let Some((f, s)) = lv.down else { break };
            let (c, next) = (lv.channels, levels[i + 1].channels);
            let mut merge = vec![LayerSpec::ssc(2 * c, c, 3), LayerSpec::bn(c), LayerSpec::relu(c)];
            merge.extend(style.encoder(c));
            stages.push(Stage {
                block: seq(b, style.encoder(c), format!("{prefix}.block{i}"))?,
                down: seq(
                    b,
                    vec![LayerSpec::sc(c, next, f, s), LayerSpec::bn(next), LayerSpec::relu(next)],
                    format!("{prefix}.down{i}"),
                )?,
                up: seq(
                    b,
                    vec![LayerSpec::dc(next, c, f, s, i), LayerSpec::bn(c), LayerSpec::relu(c)],
                    format!("{prefix}.up{i}"),
                )?,
                merge: seq(b, merge, format!("{prefix}.merge{i}"))?,
            });
        }
        let latent = spec.latent_channels();
        let bottom = seq(b, style.encoder(latent), format!("{prefix}.bottom"))?;
        let head = seq(b, vec![LayerSpec::linear(c0, classes)], format!("{prefix}.head"))?;
        Ok(UNet {
            spec: spec.clone(),
            classes,
            stem,
            stages,
            bottom,
            head,
        })
    }

    /// Channels entering the merge convolution of stage `i`.
    pub fn skip_channels(&self, i: usize) -> usize {
        2 * self.spec.levels()[i].channels
    }

    /// Per-site logits on the input's active set.
    pub fn forward(&self, x: Var, cx: &mut Context) -> Result<Var> {
        self.spec.check_input(cx.value(x).spatial_size())?;
        cx.patterns = PatternStack::new();
        let mut h = self.stem.forward(x, cx)?;
        let mut skips = Vec::with_capacity(self.stages.len());
        for st in &self.stages {
            h = st.block.forward(h, cx)?;
            skips.push(h);
            h = st.down.forward(h, cx)?;
        }
        h = self.bottom.forward(h, cx)?;
        for (st, skip) in self.stages.iter().zip(skips).rev() {
            let up = st.up.forward(h, cx)?;
            let cat = concat(cx, up, skip)?;
            h = st.merge.forward(cat, cx)?;
        }
        self.head.forward(h, cx)
    }
}
