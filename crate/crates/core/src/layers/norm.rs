//! Batch normalization over active rows.
//!
//! Statistics are taken over the active sites of the whole minibatch only;
//! inactive sites carry no values. Running statistics follow
//! `running = momentum * running + (1 - momentum) * batch`.

use crate::autograd::{GradFn, ParamGrads, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::layers::{Context, Layer, Mode};
use crate::tensor::SparseTensor;

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

/// Stand-alone batch-norm parameters and population statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }
}

pub fn batchnorm_forward(
    state: &mut BatchNormState,
    input: &SparseTensor,
    mode: Mode,
) -> Result<SparseTensor> {
    if input.channels() != state.scale.len() {
        return Err(Error::ShapeMismatch(format!(
            "batch norm over {} channels given {}",
            state.scale.len(),
            input.channels()
        )));
    }
    let stats = Stats {
        scale: &state.scale,
        shift: &state.shift,
        momentum: state.momentum,
        eps: state.eps,
    };
    let (out, _) = normalize(
        input.features(),
        input.channels(),
        &stats,
        &mut state.running_mean,
        &mut state.running_var,
        mode,
        true,
    );
    input.with_features(input.channels(), out)
}

struct Stats<'a> {
    scale: &'a [f64],
    shift: &'a [f64],
    momentum: f64,
    eps: f64,
}

struct Cache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

fn normalize(
    x: &[f64],
    c: usize,
    p: &Stats,
    running_mean: &mut [f64],
    running_var: &mut [f64],
    mode: Mode,
    update: bool,
) -> (Vec<f64>, Cache) {
    let rows = x.len() / c;
    let batch_stats = mode == Mode::Train && rows > 0;
    let (mean, var) = if batch_stats {
        let mut mean = vec![0.0; c];
        for row in x.chunks(c) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0; c];
        for row in x.chunks(c) {
            for j in 0..c {
                let t = row[j] - mean[j];
                var[j] += t * t;
            }
        }
        var.iter_mut().for_each(|v| *v /= rows as f64);
        if update {
            for j in 0..c {
                running_mean[j] = p.momentum * running_mean[j] + (1.0 - p.momentum) * mean[j];
                running_var[j] = p.momentum * running_var[j] + (1.0 - p.momentum) * var[j];
            }
        }
        (mean, var)
    } else {
        (running_mean.to_vec(), running_var.to_vec())
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + p.eps).sqrt()).collect();
    let mut xhat = Vec::with_capacity(x.len());
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(c) {
        for j in 0..c {
            let h = (row[j] - mean[j]) * inv_std[j];
            xhat.push(h);
            out.push(p.scale[j] * h + p.shift[j]);
        }
    }
    (
        out,
        Cache {
            xhat,
            inv_std,
            batch_stats,
        },
    )
}

pub struct BatchNorm {
    pub channels: usize,
    pub scale: ParamId,
    pub shift: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
    pub eps: f64,
}

struct BatchNormGrad {
    cache: Cache,
    scale: ParamId,
    shift: ParamId,
    c: usize,
}

impl GradFn for BatchNormGrad {
    fn backward(
        &self,
        g: &[f64],
        _inputs: &[&SparseTensor],
        store: &ParamStore,
        grads: &mut ParamGrads,
    ) -> Vec<Vec<f64>> {
        let c = self.c;
        let rows = g.len() / c;
        let scale = store.get(self.scale);
        let xhat = &self.cache.xhat;
        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        for (grow, hrow) in g.chunks(c).zip(xhat.chunks(c)) {
            for j in 0..c {
                sum_g[j] += grow[j];
                sum_gx[j] += grow[j] * hrow[j];
            }
        }
        grads
            .get_mut(self.scale)
            .iter_mut()
            .zip(&sum_gx)
            .for_each(|(a, v)| *a += v);
        grads
            .get_mut(self.shift)
            .iter_mut()
            .zip(&sum_g)
            .for_each(|(a, v)| *a += v);
        let mut gin = Vec::with_capacity(g.len());
        for (grow, hrow) in g.chunks(c).zip(xhat.chunks(c)) {
            for j in 0..c {
                let k = scale[j] * self.cache.inv_std[j];
                gin.push(if self.cache.batch_stats {
                    let n = rows as f64;
                    k * (grow[j] - sum_g[j] / n - hrow[j] * sum_gx[j] / n)
                } else {
                    k * grow[j]
                });
            }
        }
        vec![gin]
    }
}

impl Layer for BatchNorm {
    fn kind(&self) -> &'static str {
        "bn"
    }

    fn forward(&self, x: Var, cx: &mut Context) -> Result<Var> {
        let c = self.channels;
        if cx.value(x).channels() != c {
            return Err(Error::ShapeMismatch(format!(
                "batch norm over {c} channels given {}",
                cx.value(x).channels()
            )));
        }
        let mut rm = cx.store.get(self.running_mean).to_vec();
        let mut rv = cx.store.get(self.running_var).to_vec();
        let p = Stats {
            scale: cx.store.get(self.scale),
            shift: cx.store.get(self.shift),
            momentum: self.momentum,
            eps: self.eps,
        };
        let input = cx.tape.value(x);
        let (out, cache) = normalize(input.features(), c, &p, &mut rm, &mut rv, cx.mode, cx.update_stats);
        let out = input.with_features(c, out)?;
        if cx.update_stats && cache.batch_stats {
            cx.store.get_mut(self.running_mean).copy_from_slice(&rm);
            cx.store.get_mut(self.running_var).copy_from_slice(&rv);
        }
        let grad = BatchNormGrad {
            cache,
            scale: self.scale,
            shift: self.shift,
            c,
        };
        Ok(cx.tape.record(out, vec![x], Box::new(grad)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Coord, Geometry};

    fn column(vals: &[f64]) -> SparseTensor {
        let sites = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| (Coord::new(0, &[i as i32, 0]), vec![v, 2.0 * v - 1.0]))
            .collect();
        SparseTensor::build(Geometry::cube(2, 8), 2, sites).unwrap()
    }

    #[test]
    fn constant_channel_maps_to_shift() {
        let x = SparseTensor::build(
            Geometry::cube(2, 4),
            1,
            (0..3).map(|i| (Coord::new(0, &[i, 0]), vec![4.0])).collect(),
        )
        .unwrap();
        let mut st = BatchNormState::new(1);
        st.shift = vec![0.7];
        let y = batchnorm_forward(&mut st, &x, Mode::Train).unwrap();
        assert!(y.features().iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn eval_identity_statistics() {
        let x = column(&[1.0, -2.0, 0.5]);
        let mut st = BatchNormState::new(2);
        st.eps = 0.0;
        let y = batchnorm_forward(&mut st, &x, Mode::Eval).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn train_standardizes_and_updates() {
        let x = column(&[1.0, -2.0, 0.5, 3.0, 7.0]);
        let mut st = BatchNormState::new(2);
        let y = batchnorm_forward(&mut st, &x, Mode::Train).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = (0..5).map(|i| y.row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / 5.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-5);
        }
        // running mean moved 10% of the way to the batch mean of 1.9
        assert!((st.running_mean[0] - 0.19).abs() < 1e-12);
    }

    #[test]
    fn empty_input_passes() {
        let x = SparseTensor::build(Geometry::cube(2, 4), 3, vec![]).unwrap();
        let mut st = BatchNormState::new(3);
        let y = batchnorm_forward(&mut st, &x, Mode::Train).unwrap();
        assert_eq!(y.num_active(), 0);
        assert_eq!(st.running_var, vec![1.0; 3]);
    }
}
