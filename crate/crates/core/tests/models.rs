mod common;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use sparsae::autograd::{cross_entropy, softmax, Adam, OptimConfig, Optimizer, ParamStore};
use sparsae::layers::{sparsify_test, Builder, Context, LayerRegistry, Mode};
use sparsae::models::{
    burn_in_batchnorm, encoder_patterns, shape_context, BlockRegistry, Encoder, Growth, HeadConfig, HeadRegistry,
    LatentMode, NetworkSpec, UNet,
};
use sparsae::{Coord, SparseTensor};

fn builder<'a>(store: &'a mut ParamStore, r: &'a mut rand_chacha::ChaCha8Rng, d: usize) -> Builder<'a> {
    Builder { store, rng: r, d }
}

fn encoder(spec: &NetworkSpec, store: &mut ParamStore, seed: u64) -> Encoder {
    let mut r = rng(seed);
    Encoder::build(spec, &LayerRegistry::standard(), &BlockRegistry::standard(), &mut builder(store, &mut r, spec.d))
        .unwrap()
}

fn encode(enc: &Encoder, store: &mut ParamStore, x: &SparseTensor, mode: Mode) -> SparseTensor {
    let mut cx = Context::new(store, mode);
    let v = cx.input(x.clone());
    let z = enc.forward(v, &mut cx).unwrap();
    cx.value(z).clone()
}

#[test]
fn latent_of_small_network() {
    let spec = NetworkSpec {
        k: 16,
        ..NetworkSpec::default()
    };
    assert_eq!(spec.latent_channels(), 256);
    let mut store = ParamStore::new();
    let enc = encoder(&spec, &mut store, 1);
    let z = encode(&enc, &mut store, &polyline_batch(2, 16, 2, 1, 1), Mode::Train);
    assert_eq!((z.channels(), z.spatial_size()), (256, &[1usize, 1][..]));
    assert_eq!(z.num_active(), 2);
}

#[test]
fn fixed_factor_latent_extent() {
    let spec = NetworkSpec {
        k: 2,
        scales: 4,
        mode: LatentMode::FixedFactor,
        ..NetworkSpec::default()
    };
    let mut store = ParamStore::new();
    let enc = encoder(&spec, &mut store, 2);
    let z = encode(&enc, &mut store, &polyline_batch(2, 64, 1, 1, 2), Mode::Eval);
    assert_eq!(z.spatial_size(), &[4, 4]);
}

#[test]
fn linear_growth_channels() {
    let spec = NetworkSpec {
        k: 32,
        scales: 4,
        growth: Growth::Linear,
        mode: LatentMode::FixedFactor,
        ..NetworkSpec::default()
    };
    assert_eq!(spec.channel_sequence(), vec![32, 64, 96, 128, 160]);
}

#[test]
fn residual_blocks_keep_sizes() {
    let spec = NetworkSpec {
        k: 4,
        block: "res2".into(),
        ..NetworkSpec::default()
    };
    let (ae, mut store) = build_autoencoder(&spec, 3);
    let x = polyline_batch(2, 16, 2, 1, 3);
    let mut cx = Context::new(&mut store, Mode::Train);
    let nodes = ae.forward(x.clone(), &mut cx).unwrap();
    assert_eq!(cx.value(nodes.output).sites(), x.sites());
    assert_eq!(cx.value(nodes.latent).channels(), spec.latent_channels());
}

#[test]
fn train_mode_output_pattern_equals_input() {
    for d in [2, 3] {
        let spec = NetworkSpec {
            d,
            k: 2,
            ..NetworkSpec::default()
        };
        let (ae, mut store) = build_autoencoder(&spec, 4);
        let mut r = rng(5);
        let sites = random_sites(&mut r, &vec![16; d], 0.03, 2);
        let x = random_tensor(&mut r, sites, 1);
        let mut cx = Context::new(&mut store, Mode::Train);
        let nodes = ae.forward(x.clone(), &mut cx).unwrap();
        assert_eq!(cx.value(nodes.output).sites(), x.sites());
    }
}

#[test]
fn threshold_with_oracle_channel_reproduces_patterns() {
    let spec = NetworkSpec {
        k: 2,
        ..NetworkSpec::default()
    };
    let mut r = rng(6);
    let sites = random_sites(&mut r, &[16, 16], 0.1, 2);
    let patterns = encoder_patterns(&spec, &sites).unwrap();
    for (i, level) in patterns.levels().iter().enumerate().take(patterns.depth() - 1) {
        let parent = patterns.levels()[i + 1].clone();
        let up = sparsae::layers::Rulebook::transpose(&parent, 2, 2);
        let candidates = match up {
            Ok(rb) if rb.out_sites().spatial_size() == level.spatial_size() => rb.out_sites().clone(),
            _ => continue,
        };
        let features: Vec<f64> = candidates
            .coords()
            .iter()
            .flat_map(|c| [if level.contains(c) { 1.0 } else { -1.0 }, 0.5])
            .collect();
        let t = SparseTensor::from_parts(candidates, 2, features).unwrap();
        assert_eq!(sparsify_test(&t).sites(), &**level);
    }
}

#[test]
fn nonconvnet_output_and_logit_shape() {
    let spec = NetworkSpec {
        k: 2,
        ..NetworkSpec::default()
    };
    let mut store = ParamStore::new();
    let enc = encoder(&spec, &mut store, 7);
    let mut r = rng(8);
    let head = HeadRegistry::standard()
        .build(
            "nonconvnet",
            &spec,
            &HeadConfig {
                classes: 5,
                ..HeadConfig::default()
            },
            &mut builder(&mut store, &mut r, 2),
        )
        .unwrap();
    let x = polyline_batch(2, 16, 3, 1, 8);
    let mut cx = Context::new(&mut store, Mode::Eval);
    let v = cx.input(x.clone());
    let z = enc.forward(v, &mut cx).unwrap();
    let y = head.forward(z, &mut cx).unwrap();
    let y = cx.value(y);
    assert_eq!(y.sites(), x.sites());
    assert_eq!(y.channels(), 5);
    assert!(head.per_site());
}

#[test]
fn latent_head_parameter_counts() {
    let spec = NetworkSpec {
        k: 2,
        ..NetworkSpec::default()
    };
    let cfg = HeadConfig {
        classes: 10,
        hidden: 7,
        ..HeadConfig::default()
    };
    let latent = spec.latent_channels();
    for (name, expect) in [
        ("linear", latent * 10 + 10),
        ("mlp", latent * 7 + 7 + 7 * 7 + 7 + 7 * 10 + 10),
    ] {
        let mut store = ParamStore::new();
        let mut r = rng(9);
        HeadRegistry::standard().build(name, &spec, &cfg, &mut builder(&mut store, &mut r, 2)).unwrap();
        let total: usize = store.trainable().iter().map(|&id| store.get(id).len()).sum();
        assert_eq!(total, expect, "{name}");
    }
}

#[test]
fn unet_shapes() {
    let spec = NetworkSpec {
        k: 2,
        ..NetworkSpec::default()
    };
    let mut store = ParamStore::new();
    let mut r = rng(10);
    let net = UNet::build(&spec, 3, &mut builder(&mut store, &mut r, 2), "unet").unwrap();
    assert_eq!(net.skip_channels(0), 4);
    assert_eq!(net.skip_channels(1), 8);
    let x = polyline_batch(2, 16, 2, 1, 10);
    let mut cx = Context::new(&mut store, Mode::Eval);
    let v = cx.input(x.clone());
    let y = net.forward(v, &mut cx).unwrap();
    assert_eq!(cx.value(y).sites(), x.sites());
    assert_eq!(cx.value(y).channels(), 3);
}

#[test]
fn unet_learns_half_plane_segmentation() {
    let spec = NetworkSpec {
        k: 4,
        ..NetworkSpec::default()
    };
    let mut store = ParamStore::new();
    let mut r = rng(11);
    let net = UNet::build(&spec, 2, &mut builder(&mut store, &mut r, 2), "unet").unwrap();
    let label = |c: &Coord| usize::from(c.pos[0] >= 8);
    let batch = |seed: u64| {
        let mut r = rng(seed);
        let x = SparseTensor::filled(random_sites(&mut r, &[16, 16], 0.08, 4), 1, 1.0);
        let y: Vec<usize> = x.sites().coords().iter().map(label).collect();
        (x, y)
    };
    let ids = store.trainable();
    let mut opt = Adam::new(OptimConfig {
        lr: 0.01,
        ..OptimConfig::default()
    });
    for step in 0..300 {
        let (x, y) = batch(1000 + step);
        let mut cx = Context::new(&mut store, Mode::Train);
        let v = cx.input(x);
        let out = net.forward(v, &mut cx).unwrap();
        let (_, g) = cross_entropy(cx.value(out), &y).unwrap();
        let grads = cx.tape.backward(vec![(out, g)], cx.store);
        opt.step(&mut store, &grads.params, &ids);
    }
    let (mut right, mut total) = (0, 0);
    for s in 0..8 {
        let (x, y) = batch(5000 + s);
        let mut cx = Context::new(&mut store, Mode::Eval);
        let v = cx.input(x);
        let out = net.forward(v, &mut cx).unwrap();
        let logits = cx.value(out);
        for (i, &l) in y.iter().enumerate() {
            let p = softmax(logits.row(i));
            right += usize::from((p[1] > p[0]) == (l == 1));
            total += 1;
        }
    }
    let acc = right as f64 / total as f64;
    assert!(acc >= 0.99, "site accuracy {acc}");
}

#[test]
fn burn_in_moves_statistics_only() {
    let spec = NetworkSpec {
        k: 2,
        ..NetworkSpec::default()
    };
    let mut store = ParamStore::new();
    let enc = encoder(&spec, &mut store, 12);
    let x = polyline_batch(2, 16, 4, 1, 12);
    let before = store.clone();
    let eval_before = encode(&enc, &mut store, &x, Mode::Eval);
    burn_in_batchnorm(&enc, &mut store, &[x.clone()], 100).unwrap();
    let mut stats_moved = false;
    for (id, p) in before.iter() {
        if p.trainable {
            assert_eq!(store.get(id), before.get(id), "{}", p.name);
        } else {
            stats_moved |= store.get(id) != before.get(id);
        }
    }
    assert!(stats_moved);
    assert_ne!(encode(&enc, &mut store, &x, Mode::Eval), eval_before);
}

/// Dense multi-scale pooling: average every `p^d` block of the zero-filled
/// grid, then read the `3^d` blocks around each active site.
fn shape_context_oracle(x: &SparseTensor, levels: usize) -> Vec<Vec<f64>> {
    let g = Grid::from_sparse(x);
    let d = g.size.len();
    let n = g.channels;
    let nbrs = positions(&vec![3; d]);
    x.sites()
        .coords()
        .iter()
        .map(|c| {
            let mut row = Vec::new();
            for l in 0..levels {
                let p = 1i32 << l;
                for off in &nbrs {
                    let cell: Vec<i32> = (0..d).map(|a| c.pos[a] / p + off[a] - 1).collect();
                    let mut acc = vec![0.0; n];
                    for q in positions(&vec![p as usize; d]) {
                        let pos: Vec<i32> = (0..d).map(|a| cell[a] * p + q[a]).collect();
                        if let Some(s) = g.site(c.batch as usize, &pos) {
                            for ch in 0..n {
                                acc[ch] += g.values[s * n + ch] / (p as f64).powi(d as i32);
                            }
                        }
                    }
                    row.extend(acc);
                }
            }
            row
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shape_context_matches_dense_pooling(seed in any::<u64>(), levels in 1usize..=3, d in 2usize..=3) {
        let mut r = rng(seed);
        let size = if d == 2 { 16 } else { 8 };
        let n = r.gen_range(1..=2);
        let x = random_input(&mut r, &vec![size; d], 0.1, 2, n);
        let y = shape_context(&x, levels).unwrap();
        prop_assert_eq!(y.channels(), 3usize.pow(d as u32) * n * levels);
        for (i, row) in shape_context_oracle(&x, levels).iter().enumerate() {
            for (a, b) in y.row(i).iter().zip(row) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encoder_pattern_chain(seed in any::<u64>()) {
        let spec = NetworkSpec { k: 1, ..NetworkSpec::default() };
        let mut r = rng(seed);
        let sites = random_sites(&mut r, &[16, 16], 0.1, 2);
        let p = encoder_patterns(&spec, &sites).unwrap();
        prop_assert_eq!(p.levels()[0].as_ref(), sites.as_ref());
        for i in 0..p.depth() - 1 {
            let rb = p.down(i).unwrap();
            prop_assert_eq!(rb.out_sites().as_ref(), p.levels()[i + 1].as_ref());
        }
    }
}
