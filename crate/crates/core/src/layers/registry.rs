//! Name-keyed construction of layers from declarative specs.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::layers::{
    BatchNorm, Context, Conv, ConvKind, Layer, Linear, Relu, ResidualBlock, Sparsify, TraceRow,
    BN_EPS, BN_MOMENTUM,
};

/// One row of a layer table: registry name plus geometry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub filter: usize,
    pub stride: usize,
    /// Pattern level consumed by `dc` and `sparsify`.
    pub level: usize,
}

impl LayerSpec {
    fn new(kind: &str, m: usize, n: usize, f: usize, s: usize, level: usize) -> Self {
        LayerSpec {
            kind: kind.to_string(),
            in_channels: m,
            out_channels: n,
            filter: f,
            stride: s,
            level,
        }
    }

    pub fn ssc(m: usize, n: usize, f: usize) -> Self {
        Self::new("ssc", m, n, f, 1, 0)
    }

    pub fn sc(m: usize, n: usize, f: usize, s: usize) -> Self {
        Self::new("sc", m, n, f, s, 0)
    }

    pub fn tc(m: usize, n: usize, f: usize, s: usize) -> Self {
        Self::new("tc", m, n, f, s, 0)
    }

    pub fn dc(m: usize, n: usize, f: usize, s: usize, level: usize) -> Self {
        Self::new("dc", m, n, f, s, level)
    }

    pub fn sparsify(c: usize, level: usize) -> Self {
        Self::new("sparsify", c, c, 1, 1, level)
    }

    pub fn bn(c: usize) -> Self {
        Self::new("bn", c, c, 1, 1, 0)
    }

    pub fn relu(c: usize) -> Self {
        Self::new("relu", c, c, 1, 1, 0)
    }

    pub fn linear(m: usize, n: usize) -> Self {
        Self::new("linear", m, n, 1, 1, 0)
    }

    pub fn res(c: usize, f: usize) -> Self {
        Self::new("res", c, c, f, 1, 0)
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (m, n, k, s) = (self.in_channels, self.out_channels, self.filter, self.stride);
        match self.kind.as_str() {
            "ssc" => write!(f, "SSC({m},{n},{k})"),
            "sc" => write!(f, "SC({m},{n},{k},{s})"),
            "tc" => write!(f, "TC({m},{n},{k},{s})"),
            "dc" => write!(f, "DC({m},{n},{k},{s})"),
            "sparsify" => write!(f, "Sparsify"),
            "bn" => write!(f, "BN({m})"),
            "relu" => write!(f, "ReLU"),
            "linear" => write!(f, "Linear({m},{n})"),
            "res" => write!(f, "Res({m},{k})"),
            other => write!(f, "{other}({m},{n},{k},{s})"),
        }
    }
}

/// Parameter allocation for layers under construction.
pub struct Builder<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut ChaCha8Rng,
    pub d: usize,
}

impl Builder<'_> {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))` with fans `m f^d`, `n f^d`.
    fn weights(&mut self, name: &str, volume: usize, m: usize, n: usize) -> (ParamId, ParamId) {
        let bound = (6.0 / ((m + n) * volume) as f64).sqrt();
        let data = (0..volume * m * n)
            .map(|_| self.rng.gen_range(-bound..bound))
            .collect();
        let w = self.store.add(format!("{name}.weight"), vec![volume, m, n], data, true);
        let b = self.store.add(format!("{name}.bias"), vec![n], vec![0.0; n], true);
        (w, b)
    }

    pub fn conv(&mut self, name: &str, kind: ConvKind, m: usize, n: usize, f: usize, s: usize) -> Conv {
        let (weight, bias) = self.weights(name, f.pow(self.d as u32), m, n);
        Conv {
            kind,
            m,
            n,
            f,
            s,
            weight,
            bias,
        }
    }

    pub fn linear(&mut self, name: &str, m: usize, n: usize) -> Linear {
        let (weight, bias) = self.weights(name, 1, m, n);
        Linear { m, n, weight, bias }
    }

    pub fn batchnorm(&mut self, name: &str, c: usize) -> BatchNorm {
        let s = &mut *self.store;
        BatchNorm {
            channels: c,
            scale: s.add(format!("{name}.scale"), vec![c], vec![1.0; c], true),
            shift: s.add(format!("{name}.shift"), vec![c], vec![0.0; c], true),
            running_mean: s.add(format!("{name}.running_mean"), vec![c], vec![0.0; c], false),
            running_var: s.add(format!("{name}.running_var"), vec![c], vec![1.0; c], false),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }
}

pub type LayerFactory = fn(&LayerSpec, &mut Builder, &str) -> Result<Box<dyn Layer>>;

/// Maps layer type names to constructors.
pub struct LayerRegistry {
    factories: BTreeMap<String, LayerFactory>,
}

fn conv_factory(kind: ConvKind) -> impl Fn(&LayerSpec, &mut Builder, &str) -> Result<Box<dyn Layer>> {
    move |spec, b, name| {
        if spec.in_channels == 0 || spec.out_channels == 0 || spec.filter == 0 || spec.stride == 0 {
            return Err(Error::SpecInvalid(format!("{spec}: zero-sized dimension")));
        }
        Ok(Box::new(b.conv(name, kind, spec.in_channels, spec.out_channels, spec.filter, spec.stride)))
    }
}

impl LayerRegistry {
    pub fn empty() -> Self {
        LayerRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// Registry holding every built-in layer type.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register("ssc", |s, b, n| conv_factory(ConvKind::Submanifold)(s, b, n));
        r.register("sc", |s, b, n| conv_factory(ConvKind::Strided)(s, b, n));
        r.register("tc", |s, b, n| conv_factory(ConvKind::Transpose)(s, b, n));
        r.register("dc", |s, b, n| conv_factory(ConvKind::Deconv { level: s.level })(s, b, n));
        r.register("bn", |s, b, n| Ok(Box::new(b.batchnorm(n, s.in_channels))));
        r.register("relu", |_, _, _| Ok(Box::new(Relu)));
        r.register("linear", |s, b, n| Ok(Box::new(b.linear(n, s.in_channels, s.out_channels))));
        r.register("sparsify", |s, _, _| Ok(Box::new(Sparsify { level: s.level })));
        r.register("res", |s, b, n| {
            let (c, f) = (s.in_channels, s.filter);
            if f % 2 == 0 {
                return Err(Error::EvenFilter(f));
            }
            Ok(Box::new(ResidualBlock {
                bn1: b.batchnorm(&format!("{n}.bn1"), c),
                conv1: b.conv(&format!("{n}.conv1"), ConvKind::Submanifold, c, c, f, 1),
                bn2: b.batchnorm(&format!("{n}.bn2"), c),
                conv2: b.conv(&format!("{n}.conv2"), ConvKind::Submanifold, c, c, f, 1),
            }))
        });
        r
    }

    pub fn register(&mut self, name: &str, factory: LayerFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(&self, spec: &LayerSpec, b: &mut Builder, name: &str) -> Result<Box<dyn Layer>> {
        let factory = self.factories.get(&spec.kind).ok_or_else(|| Error::UnknownName {
            kind: "layer",
            name: spec.kind.clone(),
            known: self.names().join(", "),
        })?;
        factory(spec, b, name)
    }
}

/// A layer stack built from a table of specs.
pub struct Sequential {
    specs: Vec<LayerSpec>,
    layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    /// Builds each row as `{prefix}.{index}`.
    pub fn build(registry: &LayerRegistry, specs: Vec<LayerSpec>, b: &mut Builder, prefix: &str) -> Result<Self> {
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, s)| registry.build(s, b, &format!("{prefix}.{i}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Sequential { specs, layers })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

impl Layer for Sequential {
    fn kind(&self) -> &'static str {
        "sequential"
    }

    fn forward(&self, mut x: Var, cx: &mut Context) -> Result<Var> {
        for (spec, layer) in self.specs.iter().zip(&self.layers) {
            let (in_c, in_size) = {
                let t = cx.value(x);
                (t.channels(), t.spatial_size().to_vec())
            };
            x = layer.forward(x, cx)?;
            if let Some(trace) = cx.trace.as_mut() {
                let t = cx.tape.value(x);
                trace.push(TraceRow {
                    label: spec.to_string(),
                    in_channels: in_c,
                    in_size,
                    out_channels: t.channels(),
                    out_size: t.spatial_size().to_vec(),
                });
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Mode;
    use crate::tensor::{Coord, Geometry, SparseTensor};
    use rand::SeedableRng;

    #[test]
    fn unknown_kind() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = Builder { store: &mut store, rng: &mut rng, d: 2 };
        let spec = LayerSpec { kind: "maxpool".into(), ..LayerSpec::relu(1) };
        let err = LayerRegistry::standard().build(&spec, &mut b, "x");
        assert!(matches!(err, Err(Error::UnknownName { .. })));
    }

    #[test]
    fn init_bounds_and_names() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = Builder { store: &mut store, rng: &mut rng, d: 2 };
        let reg = LayerRegistry::standard();
        Sequential::build(&reg, vec![LayerSpec::ssc(2, 3, 3), LayerSpec::bn(3)], &mut b, "enc").unwrap();
        let w = store.find("enc.0.weight").unwrap();
        let bound = (6.0f64 / (5.0 * 9.0)).sqrt();
        assert!(store.get(w).iter().all(|v| v.abs() < bound));
        assert_eq!(store.param(w).shape, vec![9, 2, 3]);
        assert!(store.get(store.find("enc.0.bias").unwrap()).iter().all(|&v| v == 0.0));
        assert!(!store.param(store.find("enc.1.running_var").unwrap()).trainable);
    }

    #[test]
    fn zero_residual_is_identity() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut b = Builder { store: &mut store, rng: &mut rng, d: 2 };
        let net = Sequential::build(&LayerRegistry::standard(), vec![LayerSpec::res(2, 3)], &mut b, "r").unwrap();
        let w = store.find("r.0.conv2.weight").unwrap();
        store.get_mut(w).iter_mut().for_each(|v| *v = 0.0);
        let x = SparseTensor::build(
            Geometry::cube(2, 4),
            2,
            vec![
                (Coord::new(0, &[0, 0]), vec![1.0, -1.0]),
                (Coord::new(0, &[0, 1]), vec![2.0, 0.5]),
            ],
        )
        .unwrap();
        let mut cx = Context::new(&mut store, Mode::Train);
        let v = cx.input(x.clone());
        let y = net.forward(v, &mut cx).unwrap();
        assert_eq!(cx.value(y), &x);
    }
}
