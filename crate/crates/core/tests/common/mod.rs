//! Shared generators and independent oracles for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparsae::autograd::{hierarchical_loss, LossWeights, ParamStore};
use sparsae::layers::{Builder, ConvWeights, Context, Mode};
use sparsae::models::{Autoencoder, NetworkSpec};
use sparsae::{Coord, Geometry, Sites, SparseTensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every lattice position of `size`, last axis fastest.
pub fn positions(size: &[usize]) -> Vec<Vec<i32>> {
    let mut out = vec![vec![]];
    for &n in size {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n as i32).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Random active set with at least one site per sample.
pub fn random_sites(r: &mut ChaCha8Rng, size: &[usize], density: f64, batch: usize) -> Arc<Sites> {
    let all = positions(size);
    let mut coords = Vec::new();
    for b in 0..batch as u32 {
        let before = coords.len();
        for p in &all {
            if r.gen_bool(density) {
                coords.push(Coord::new(b, p));
            }
        }
        if coords.len() == before {
            coords.push(Coord::new(b, &all[r.gen_range(0..all.len())]));
        }
    }
    let g = Geometry::new(size.to_vec()).with_batch(batch);
    Arc::new(Sites::from_coords(g, coords).unwrap())
}

pub fn random_tensor(r: &mut ChaCha8Rng, sites: Arc<Sites>, channels: usize) -> SparseTensor {
    let f = (0..sites.len() * channels).map(|_| r.gen_range(-1.0..1.0)).collect();
    SparseTensor::from_parts(sites, channels, f).unwrap()
}

/// Random features on a fresh random active set.
pub fn random_input(r: &mut ChaCha8Rng, size: &[usize], density: f64, batch: usize, channels: usize) -> SparseTensor {
    let sites = random_sites(r, size, density, batch);
    random_tensor(r, sites, channels)
}

pub fn random_weights(r: &mut ChaCha8Rng, volume: usize, m: usize, n: usize) -> ConvWeights {
    ConvWeights {
        kernel: (0..volume * m * n).map(|_| r.gen_range(-1.0..1.0)).collect(),
        bias: (0..n).map(|_| r.gen_range(-1.0..1.0)).collect(),
        m,
        n,
    }
}

/// Fully materialized lattice with an activity mask.
#[derive(Clone, Debug)]
pub struct Grid {
    pub size: Vec<usize>,
    pub batch: usize,
    pub channels: usize,
    pub values: Vec<f64>,
    pub active: Vec<bool>,
}

impl Grid {
    pub fn new(size: Vec<usize>, batch: usize, channels: usize) -> Self {
        let vol: usize = size.iter().product();
        Grid {
            values: vec![0.0; batch * vol * channels],
            active: vec![false; batch * vol],
            size,
            batch,
            channels,
        }
    }

    pub fn site(&self, b: usize, p: &[i32]) -> Option<usize> {
        let mut lin = 0usize;
        for (&v, &n) in p.iter().zip(&self.size) {
            if v < 0 || v >= n as i32 {
                return None;
            }
            lin = lin * n + v as usize;
        }
        Some(b * self.size.iter().product::<usize>() + lin)
    }

    pub fn from_sparse(x: &SparseTensor) -> Self {
        let d = x.d();
        let mut g = Grid::new(x.spatial_size().to_vec(), x.geometry().batch_count, x.channels());
        for (r, c) in x.sites().coords().iter().enumerate() {
            let s = g.site(c.batch as usize, c.spatial(d)).unwrap();
            g.active[s] = true;
            g.values[s * g.channels..(s + 1) * g.channels].copy_from_slice(x.row(r));
        }
        g
    }

    fn accumulate(&mut self, s: usize, x: &[f64], w: &[f64]) {
        let n = self.channels;
        for (a, &xa) in x.iter().enumerate() {
            for b in 0..n {
                self.values[s * n + b] += xa * w[a * n + b];
            }
        }
    }

    fn add_bias(&mut self, bias: &[f64]) {
        for s in 0..self.active.len() {
            if self.active[s] {
                for (v, b) in self.values[s * self.channels..(s + 1) * self.channels].iter_mut().zip(bias) {
                    *v += b;
                }
            }
        }
    }

    fn input_row(&self, s: usize) -> &[f64] {
        &self.values[s * self.channels..(s + 1) * self.channels]
    }
}

/// Valid strided convolution of the zero-filled input; an output is active
/// when its window holds an active input.
pub fn oracle_strided(x: &Grid, w: &ConvWeights, f: usize, s: usize) -> Grid {
    let out_size: Vec<usize> = x.size.iter().map(|&n| (n - f) / s + 1).collect();
    let mut y = Grid::new(out_size.clone(), x.batch, w.n);
    let kernel = positions(&vec![f; x.size.len()]);
    for b in 0..x.batch {
        for p in positions(&out_size) {
            let o = y.site(b, &p).unwrap();
            for (k, off) in kernel.iter().enumerate() {
                let q: Vec<i32> = p.iter().zip(off).map(|(&v, &d)| v * s as i32 + d).collect();
                let i = x.site(b, &q).unwrap();
                if x.active[i] {
                    y.active[o] = true;
                }
                let row = x.input_row(i).to_vec();
                y.accumulate(o, &row, &w.kernel[k * w.m * w.n..(k + 1) * w.m * w.n]);
            }
        }
    }
    y.add_bias(&w.bias);
    mask_inactive(&mut y);
    y
}

/// Zero-padded centered convolution evaluated on the input's active set.
pub fn oracle_submanifold(x: &Grid, w: &ConvWeights, f: usize) -> Grid {
    let mut y = Grid::new(x.size.clone(), x.batch, w.n);
    y.active = x.active.clone();
    let r = (f / 2) as i32;
    let kernel = positions(&vec![f; x.size.len()]);
    for b in 0..x.batch {
        for p in positions(&x.size) {
            let o = y.site(b, &p).unwrap();
            for (k, off) in kernel.iter().enumerate() {
                let q: Vec<i32> = p.iter().zip(off).map(|(&v, &d)| v + d - r).collect();
                if let Some(i) = x.site(b, &q) {
                    let row = x.input_row(i).to_vec();
                    y.accumulate(o, &row, &w.kernel[k * w.m * w.n..(k + 1) * w.m * w.n]);
                }
            }
        }
    }
    y.add_bias(&w.bias);
    mask_inactive(&mut y);
    y
}

/// Full transposed convolution; every active input activates its footprint.
pub fn oracle_transpose(x: &Grid, w: &ConvWeights, f: usize, s: usize) -> Grid {
    let out_size: Vec<usize> = x.size.iter().map(|&n| s * (n - 1) + f).collect();
    let mut y = Grid::new(out_size, x.batch, w.n);
    let kernel = positions(&vec![f; x.size.len()]);
    for b in 0..x.batch {
        for p in positions(&x.size) {
            let i = x.site(b, &p).unwrap();
            for (k, off) in kernel.iter().enumerate() {
                let q: Vec<i32> = p.iter().zip(off).map(|(&v, &d)| v * s as i32 + d).collect();
                let o = y.site(b, &q).unwrap();
                if x.active[i] {
                    y.active[o] = true;
                }
                let row = x.input_row(i).to_vec();
                y.accumulate(o, &row, &w.kernel[k * w.m * w.n..(k + 1) * w.m * w.n]);
            }
        }
    }
    y.add_bias(&w.bias);
    mask_inactive(&mut y);
    y
}

/// Transposed convolution restricted to a recorded finer pattern.
pub fn oracle_deconv(x: &Grid, w: &ConvWeights, f: usize, s: usize, restore: &Grid) -> Grid {
    let out_size: Vec<usize> = x.size.iter().map(|&n| s * (n - 1) + f).collect();
    assert_eq!(out_size, restore.size);
    let mut y = Grid::new(out_size, x.batch, w.n);
    let kernel = positions(&vec![f; x.size.len()]);
    for b in 0..x.batch {
        for p in positions(&x.size) {
            let i = x.site(b, &p).unwrap();
            for (k, off) in kernel.iter().enumerate() {
                let q: Vec<i32> = p.iter().zip(off).map(|(&v, &d)| v * s as i32 + d).collect();
                let o = y.site(b, &q).unwrap();
                let row = x.input_row(i).to_vec();
                y.accumulate(o, &row, &w.kernel[k * w.m * w.n..(k + 1) * w.m * w.n]);
            }
        }
    }
    y.active = restore.active.clone();
    y.add_bias(&w.bias);
    mask_inactive(&mut y);
    y
}

fn mask_inactive(y: &mut Grid) {
    for s in 0..y.active.len() {
        if !y.active[s] {
            y.values[s * y.channels..(s + 1) * y.channels].iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Checks the active sets agree exactly and returns the max-norm relative
/// error of the features.
pub fn compare(sparse: &SparseTensor, oracle: &Grid) -> Result<f64, String> {
    let got = Grid::from_sparse(sparse);
    if got.size != oracle.size || got.batch != oracle.batch || got.channels != oracle.channels {
        return Err(format!("shape {:?}x{} vs {:?}x{}", got.size, got.channels, oracle.size, oracle.channels));
    }
    if got.active != oracle.active {
        let a = got.active.iter().filter(|&&v| v).count();
        let b = oracle.active.iter().filter(|&&v| v).count();
        return Err(format!("active sets differ ({a} vs {b} sites)"));
    }
    let scale = oracle.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = got
        .values
        .iter()
        .zip(&oracle.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(if scale == 0.0 { err } else { err / scale })
}

/// Relative gradient error. `loss` scales the floor applied to vanishing
/// gradients, since central differences of `loss` resolve no finer than
/// its rounding error divided by the step.
pub fn grad_rel_err(analytic: f64, numeric: f64, loss: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6 * loss.abs().max(1.0))
}

pub fn build_autoencoder(spec: &NetworkSpec, seed: u64) -> (Autoencoder, ParamStore) {
    let mut store = ParamStore::new();
    let mut r = rng(seed);
    let ae = Autoencoder::build(
        spec,
        &mut Builder {
            store: &mut store,
            rng: &mut r,
            d: spec.d,
        },
    )
    .unwrap();
    (ae, store)
}

/// Hierarchical loss of a train-mode pass that leaves the running
/// statistics untouched.
pub fn autoencoder_loss(ae: &Autoencoder, store: &mut ParamStore, x: &SparseTensor, w: &LossWeights) -> f64 {
    let mut cx = Context::new(store, Mode::Train);
    cx.update_stats = false;
    let nodes = ae.forward(x.clone(), &mut cx).unwrap();
    let records: Vec<_> = cx.sparsified.iter().map(|t| t.record.clone()).collect();
    hierarchical_loss(cx.value(nodes.input), cx.value(nodes.output), &records, w)
        .unwrap()
        .total
}

/// Random polyline-like active set: a few lattice lines per sample.
pub fn polyline_batch(d: usize, size: usize, batch: usize, channels: usize, seed: u64) -> SparseTensor {
    let mut r = rng(seed);
    let parts: Vec<SparseTensor> = (0..batch)
        .map(|b| {
            let s = sparsae::data::synth_sparse(
                d,
                size,
                sparsae::data::SynthStyle::Polyline { vertices: 4 },
                seed * 1000 + b as u64,
            )
            .unwrap();
            random_tensor(&mut r, s.tensor.sites_arc().clone(), channels)
        })
        .collect();
    SparseTensor::batch(&parts.iter().collect::<Vec<_>>()).unwrap()
}
