use std::sync::Arc;

use crate::autograd::{GradFn, ParamGrads, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::layers::{Context, Layer};
use crate::tensor::SparseTensor;

pub struct Relu;

struct ReluGrad;

impl GradFn for ReluGrad {
    fn backward(&self, g: &[f64], inputs: &[&SparseTensor], _: &ParamStore, _: &mut ParamGrads) -> Vec<Vec<f64>> {
        let x = inputs[0].features();
        vec![g.iter().zip(x).map(|(&g, &x)| if x > 0.0 { g } else { 0.0 }).collect()]
    }
}

impl Layer for Relu {
    fn kind(&self) -> &'static str {
        "relu"
    }

    fn forward(&self, x: Var, cx: &mut Context) -> Result<Var> {
        let input = cx.value(x);
        let out = input.features().iter().map(|v| v.max(0.0)).collect();
        let out = input.with_features(input.channels(), out)?;
        Ok(cx.tape.record(out, vec![x], Box::new(ReluGrad)))
    }
}

/// Site-wise affine map `m -> n`, i.e. a `1^d` convolution.
pub struct Linear {
    pub m: usize,
    pub n: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

struct LinearGrad {
    m: usize,
    n: usize,
    weight: ParamId,
    bias: ParamId,
}

impl GradFn for LinearGrad {
    fn backward(&self, g: &[f64], inputs: &[&SparseTensor], store: &ParamStore, grads: &mut ParamGrads) -> Vec<Vec<f64>> {
        let (m, n) = (self.m, self.n);
        let x = inputs[0].features();
        let w = store.get(self.weight);
        let mut gin = vec![0.0; x.len()];
        {
            let gw = grads.get_mut(self.weight);
            for ((xr, gr), gi) in x.chunks(m).zip(g.chunks(n)).zip(gin.chunks_mut(m)) {
                for a in 0..m {
                    let wa = &w[a * n..(a + 1) * n];
                    gi[a] = wa.iter().zip(gr).map(|(w, g)| w * g).sum();
                    for (acc, &gb) in gw[a * n..(a + 1) * n].iter_mut().zip(gr) {
                        *acc += xr[a] * gb;
                    }
                }
            }
        }
        let gb = grads.get_mut(self.bias);
        for gr in g.chunks(n) {
            gb.iter_mut().zip(gr).for_each(|(a, v)| *a += v);
        }
        vec![gin]
    }
}

impl Layer for Linear {
    fn kind(&self) -> &'static str {
        "linear"
    }

    fn forward(&self, x: Var, cx: &mut Context) -> Result<Var> {
        let (m, n) = (self.m, self.n);
        let input = cx.tape.value(x);
        if input.channels() != m {
            return Err(Error::ShapeMismatch(format!(
                "linear layer expects {m} channels, got {}",
                input.channels()
            )));
        }
        let w = cx.store.get(self.weight);
        let b = cx.store.get(self.bias);
        let mut out = Vec::with_capacity(input.num_active() * n);
        for xr in input.features().chunks(m) {
            let start = out.len();
            out.extend_from_slice(b);
            let y = &mut out[start..];
            for (a, &xa) in xr.iter().enumerate() {
                for (yb, &wb) in y.iter_mut().zip(&w[a * n..(a + 1) * n]) {
                    *yb += xa * wb;
                }
            }
        }
        let out = input.with_features(n, out)?;
        let grad = LinearGrad {
            m,
            n,
            weight: self.weight,
            bias: self.bias,
        };
        Ok(cx.tape.record(out, vec![x], Box::new(grad)))
    }
}

fn same_sites(a: &SparseTensor, b: &SparseTensor) -> Result<()> {
    if Arc::ptr_eq(a.sites_arc(), b.sites_arc()) || a.sites() == b.sites() {
        Ok(())
    } else {
        Err(Error::PatternMismatch)
    }
}

struct AddGrad;

impl GradFn for AddGrad {
    fn backward(&self, g: &[f64], _: &[&SparseTensor], _: &ParamStore, _: &mut ParamGrads) -> Vec<Vec<f64>> {
        vec![g.to_vec(), g.to_vec()]
    }
}

/// Elementwise sum of two tensors on the same active set.
pub fn add(cx: &mut Context, a: Var, b: Var) -> Result<Var> {
    let (ta, tb) = (cx.value(a), cx.value(b));
    same_sites(ta, tb)?;
    if ta.channels() != tb.channels() {
        return Err(Error::ShapeMismatch(format!(
            "adding {} and {} channels",
            ta.channels(),
            tb.channels()
        )));
    }
    let out = ta.features().iter().zip(tb.features()).map(|(x, y)| x + y).collect();
    let out = ta.with_features(ta.channels(), out)?;
    Ok(cx.tape.record(out, vec![a, b], Box::new(AddGrad)))
}

struct ConcatGrad {
    ca: usize,
    cb: usize,
}

impl GradFn for ConcatGrad {
    fn backward(&self, g: &[f64], _: &[&SparseTensor], _: &ParamStore, _: &mut ParamGrads) -> Vec<Vec<f64>> {
        let mut ga = Vec::new();
        let mut gb = Vec::new();
        for row in g.chunks(self.ca + self.cb) {
            ga.extend_from_slice(&row[..self.ca]);
            gb.extend_from_slice(&row[self.ca..]);
        }
        vec![ga, gb]
    }
}

/// Channel concatenation `[a | b]` of two tensors on the same active set.
pub fn concat(cx: &mut Context, a: Var, b: Var) -> Result<Var> {
    let (ta, tb) = (cx.value(a), cx.value(b));
    same_sites(ta, tb)?;
    let (ca, cb) = (ta.channels(), tb.channels());
    let mut out = Vec::with_capacity(ta.num_active() * (ca + cb));
    for i in 0..ta.num_active() {
        out.extend_from_slice(ta.row(i));
        out.extend_from_slice(tb.row(i));
    }
    let out = ta.with_features(ca + cb, out)?;
    Ok(cx.tape.record(out, vec![a, b], Box::new(ConcatGrad { ca, cb })))
}
