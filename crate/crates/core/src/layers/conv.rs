use std::sync::Arc;

use crate::autograd::{GradFn, ParamGrads, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::layers::rulebook::Rulebook;
use crate::layers::{Context, Layer};
use crate::tensor::SparseTensor;

/// Per-offset `m x n` matrices in rulebook offset order, plus a bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub m: usize,
    pub n: usize,
}

impl ConvWeights {
    pub fn zeros(volume: usize, m: usize, n: usize) -> Self {
        ConvWeights {
            kernel: vec![0.0; volume * m * n],
            bias: vec![0.0; n],
            m,
            n,
        }
    }

    pub fn volume(&self) -> usize {
        self.kernel.len() / (self.m * self.n)
    }
}

/// `out[y] = bias + sum over rules (x, y) of offset o: in[x] * kernel[o]`.
pub fn conv_forward(rb: &Rulebook, w: &ConvWeights, input: &SparseTensor) -> Result<SparseTensor> {
    check_shapes(rb, w.kernel.len(), w.bias.len(), w.m, w.n, input)?;
    let out = apply(rb, &w.kernel, &w.bias, input.features(), w.m, w.n);
    SparseTensor::from_parts(rb.out_sites().clone(), w.n, out)
}

fn check_shapes(
    rb: &Rulebook,
    kernel_len: usize,
    bias_len: usize,
    m: usize,
    n: usize,
    input: &SparseTensor,
) -> Result<()> {
    if input.channels() != m {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, layer expects {m}",
            input.channels()
        )));
    }
    if kernel_len != rb.offsets().len() * m * n || bias_len != n {
        return Err(Error::ShapeMismatch(format!(
            "kernel of {kernel_len} values for {} offsets x {m} x {n}",
            rb.offsets().len()
        )));
    }
    if input.num_active() != rb.in_sites().len() {
        return Err(Error::ShapeMismatch(
            "rulebook was built for a different active set".into(),
        ));
    }
    Ok(())
}

fn apply(rb: &Rulebook, kernel: &[f64], bias: &[f64], input: &[f64], m: usize, n: usize) -> Vec<f64> {
    let rows = rb.out_sites().len();
    let mut out = Vec::with_capacity(rows * n);
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    for (k, list) in rb.rules().iter().enumerate() {
        let w = &kernel[k * m * n..(k + 1) * m * n];
        for &(i, o) in list {
            let x = &input[i as usize * m..(i as usize + 1) * m];
            let y = &mut out[o as usize * n..(o as usize + 1) * n];
            for (a, &xa) in x.iter().enumerate() {
                if xa == 0.0 {
                    continue;
                }
                let wa = &w[a * n..(a + 1) * n];
                for (yb, &wb) in y.iter_mut().zip(wa) {
                    *yb += xa * wb;
                }
            }
        }
    }
    out
}

struct ConvGrad {
    rb: Arc<Rulebook>,
    weight: ParamId,
    bias: ParamId,
    m: usize,
    n: usize,
}

impl GradFn for ConvGrad {
    fn backward(
        &self,
        g: &[f64],
        inputs: &[&SparseTensor],
        store: &ParamStore,
        grads: &mut ParamGrads,
    ) -> Vec<Vec<f64>> {
        let (m, n) = (self.m, self.n);
        let x = inputs[0].features();
        let kernel = store.get(self.weight);
        let mut gin = vec![0.0; x.len()];
        {
            let gw = grads.get_mut(self.weight);
            for (k, list) in self.rb.rules().iter().enumerate() {
                let w = &kernel[k * m * n..(k + 1) * m * n];
                let gwk = &mut gw[k * m * n..(k + 1) * m * n];
                for &(i, o) in list {
                    let (i, o) = (i as usize, o as usize);
                    let go = &g[o * n..(o + 1) * n];
                    let xi = &x[i * m..(i + 1) * m];
                    let gi = &mut gin[i * m..(i + 1) * m];
                    for a in 0..m {
                        let wa = &w[a * n..(a + 1) * n];
                        gi[a] += wa.iter().zip(go).map(|(w, g)| w * g).sum::<f64>();
                        let gwa = &mut gwk[a * n..(a + 1) * n];
                        for (acc, &gb) in gwa.iter_mut().zip(go) {
                            *acc += xi[a] * gb;
                        }
                    }
                }
            }
        }
        let gb = grads.get_mut(self.bias);
        for row in g.chunks(n) {
            for (acc, &v) in gb.iter_mut().zip(row) {
                *acc += v;
            }
        }
        vec![gin]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvKind {
    /// SSC(m, n, f)
    Submanifold,
    /// SC(m, n, f, s); records its rulebook on the pattern stack.
    Strided,
    /// TC(m, n, f, s)
    Transpose,
    /// DC(m, n, f, s), restoring pattern level `level` from the stack.
    Deconv { level: usize },
}

/// A sparse convolution of any of the four kinds.
pub struct Conv {
    pub kind: ConvKind,
    pub m: usize,
    pub n: usize,
    pub f: usize,
    pub s: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv {
    fn rulebook(&self, sites: &Arc<crate::tensor::Sites>, cx: &mut Context) -> Result<Arc<Rulebook>> {
        Ok(match self.kind {
            ConvKind::Submanifold => cx.submanifold_rulebook(sites, self.f)?,
            ConvKind::Strided => {
                let rb = Arc::new(Rulebook::strided(sites, self.f, self.s)?);
                cx.patterns.push_down(rb.clone())?;
                rb
            }
            ConvKind::Transpose => Arc::new(Rulebook::transpose(sites, self.f, self.s)?),
            ConvKind::Deconv { level } => {
                let sc = cx.patterns.down(level)?;
                if sc.filter() != self.f || sc.stride() != self.s {
                    return Err(Error::ShapeMismatch(format!(
                        "DC(f={}, s={}) paired with SC(f={}, s={})",
                        self.f,
                        self.s,
                        sc.filter(),
                        sc.stride()
                    )));
                }
                if !(Arc::ptr_eq(sc.out_sites(), sites) || **sc.out_sites() == **sites) {
                    return Err(Error::ShapeMismatch(format!(
                        "DC input is not the level-{} pattern",
                        level + 1
                    )));
                }
                Arc::new(Rulebook::deconv(sc)?)
            }
        })
    }
}

impl Layer for Conv {
    fn kind(&self) -> &'static str {
        match self.kind {
            ConvKind::Submanifold => "ssc",
            ConvKind::Strided => "sc",
            ConvKind::Transpose => "tc",
            ConvKind::Deconv { .. } => "dc",
        }
    }

    fn forward(&self, x: Var, cx: &mut Context) -> Result<Var> {
        let sites = cx.value(x).sites_arc().clone();
        let rb = self.rulebook(&sites, cx)?;
        let input = cx.value(x);
        let kernel = cx.store.get(self.weight);
        let bias = cx.store.get(self.bias);
        check_shapes(&rb, kernel.len(), bias.len(), self.m, self.n, input)?;
        let out = apply(&rb, kernel, bias, input.features(), self.m, self.n);
        let out = SparseTensor::from_parts(rb.out_sites().clone(), self.n, out)?;
        let grad = ConvGrad {
            rb,
            weight: self.weight,
            bias: self.bias,
            m: self.m,
            n: self.n,
        };
        Ok(cx.tape.record(out, vec![x], Box::new(grad)))
    }
}
