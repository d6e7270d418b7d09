//! Reconstruction and sparsification losses, and cross-entropy for heads.
//!
//! The autoencoder objective is
//! `w0 * MSE + sum_i w_i * L_i` where MSE averages the squared L2 distance
//! between input and output rows over the shared active set, and `L_i` is
//! the squared-hinge loss on the first input channel `f` of sparsify layer
//! `i`: `sum_P max(1 - f, 0)^2 + sum_N max(1 + f, 0)^2`.

use std::sync::Arc;

use serde::Serialize;

use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::layers::{SparsifierRecord, SparsifyTrace};
use crate::tensor::SparseTensor;

pub fn mse_loss(input: &SparseTensor, output: &SparseTensor) -> Result<f64> {
    check_pair(input, output)?;
    let sq: f64 = input
        .features()
        .iter()
        .zip(output.features())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq / input.num_active() as f64)
}

fn check_pair(input: &SparseTensor, output: &SparseTensor) -> Result<()> {
    if input.num_active() == 0 {
        return Err(Error::EmptyInput);
    }
    if !(Arc::ptr_eq(input.sites_arc(), output.sites_arc()) || input.sites() == output.sites()) {
        return Err(Error::PatternMismatch);
    }
    if input.channels() != output.channels() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, output {}",
            input.channels(),
            output.channels()
        )));
    }
    Ok(())
}

/// `d MSE / d output`.
fn mse_grad(input: &SparseTensor, output: &SparseTensor, weight: f64) -> Vec<f64> {
    let k = 2.0 * weight / input.num_active() as f64;
    output
        .features()
        .iter()
        .zip(input.features())
        .map(|(o, i)| k * (o - i))
        .collect()
}

pub fn sparsifier_loss(rec: &SparsifierRecord) -> f64 {
    let pos: f64 = rec.f_kept.iter().map(|f| (1.0 - f).max(0.0).powi(2)).sum();
    let neg: f64 = rec.f_dropped.iter().map(|f| (1.0 + f).max(0.0).powi(2)).sum();
    pos + neg
}

/// Weights of the hierarchical loss terms.
#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    pub mse: f64,
    /// Per sparsify level in decoder order; missing entries default to 1.
    pub sparsifiers: Vec<f64>,
    /// Drop the reconstruction term (single-valued inputs).
    pub monochrome: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            mse: 1.0,
            sparsifiers: Vec::new(),
            monochrome: false,
        }
    }
}

impl LossWeights {
    fn sparsifier(&self, i: usize) -> f64 {
        self.sparsifiers.get(i).copied().unwrap_or(1.0)
    }

    fn mse_weight(&self) -> f64 {
        if self.monochrome {
            0.0
        } else {
            self.mse
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossReport {
    pub mse: f64,
    /// `(pattern level, loss)` in decoder order.
    pub sparsifier_losses: Vec<(usize, f64)>,
    pub total: f64,
    /// Weight of the MSE term followed by one weight per sparsifier term.
    pub term_weights: Vec<f64>,
}

pub fn hierarchical_loss(
    input: &SparseTensor,
    output: &SparseTensor,
    records: &[SparsifierRecord],
    weights: &LossWeights,
) -> Result<LossReport> {
    let mse = mse_loss(input, output)?;
    let sparsifier_losses: Vec<(usize, f64)> =
        records.iter().map(|r| (r.level, sparsifier_loss(r))).collect();
    let mut term_weights = vec![weights.mse_weight()];
    term_weights.extend((0..records.len()).map(|i| weights.sparsifier(i)));
    let total = term_weights[0] * mse
        + sparsifier_losses
            .iter()
            .zip(&term_weights[1..])
            .map(|((_, l), w)| w * l)
            .sum::<f64>();
    Ok(LossReport {
        mse,
        sparsifier_losses,
        total,
        term_weights,
    })
}

/// The hierarchical loss together with the seed gradients for the tape:
/// one for the output node and one per sparsify input node.
pub fn hierarchical_loss_seeds(
    input: &SparseTensor,
    output: (Var, &SparseTensor),
    traces: &[SparsifyTrace],
    sparsify_inputs: &[&SparseTensor],
    weights: &LossWeights,
) -> Result<(LossReport, Vec<(Var, Vec<f64>)>)> {
    let records: Vec<SparsifierRecord> = traces.iter().map(|t| t.record.clone()).collect();
    let report = hierarchical_loss(input, output.1, &records, weights)?;
    let mut seeds = Vec::with_capacity(traces.len() + 1);
    if report.term_weights[0] != 0.0 {
        seeds.push((output.0, mse_grad(input, output.1, report.term_weights[0])));
    }
    for ((trace, x), &w) in traces.iter().zip(sparsify_inputs).zip(&report.term_weights[1..]) {
        let c = x.channels();
        let mut g = vec![0.0; x.features().len()];
        let rec = &trace.record;
        for (&r, &f) in rec.kept_rows.iter().zip(&rec.f_kept) {
            g[r * c] = -2.0 * w * (1.0 - f).max(0.0);
        }
        for (&r, &f) in rec.dropped_rows.iter().zip(&rec.f_dropped) {
            g[r * c] = 2.0 * w * (1.0 + f).max(0.0);
        }
        seeds.push((trace.input, g));
    }
    Ok((report, seeds))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean softmax cross-entropy over rows, with its gradient.
pub fn cross_entropy(logits: &SparseTensor, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    let rows = logits.num_active();
    if rows == 0 {
        return Err(Error::EmptyInput);
    }
    if labels.len() != rows {
        return Err(Error::ShapeMismatch(format!("{} labels for {rows} rows", labels.len())));
    }
    let c = logits.channels();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(rows * c);
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::ShapeMismatch(format!("label {y} with {c} classes")));
        }
        let p = softmax(logits.row(i));
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
        grad.extend(p.iter().enumerate().map(|(k, &pk)| {
            (pk - if k == y { 1.0 } else { 0.0 }) / rows as f64
        }));
    }
    Ok((loss / rows as f64, grad))
}

/// Mean cross-entropy over the rows that carry a target; unlabelled rows get
/// zero gradient.
pub fn cross_entropy_masked(logits: &SparseTensor, targets: &[Option<usize>]) -> Result<(f64, Vec<f64>)> {
    let rows = logits.num_active();
    if targets.len() != rows {
        return Err(Error::ShapeMismatch(format!("{} targets for {rows} rows", targets.len())));
    }
    let labelled = targets.iter().flatten().count();
    if labelled == 0 {
        return Err(Error::EmptyInput);
    }
    let c = logits.channels();
    let mut loss = 0.0;
    let mut grad = vec![0.0; rows * c];
    for (i, t) in targets.iter().enumerate() {
        let Some(y) = *t else { continue };
        if y >= c {
            return Err(Error::ShapeMismatch(format!("label {y} with {c} classes")));
        }
        let p = softmax(logits.row(i));
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
        for (k, g) in grad[i * c..(i + 1) * c].iter_mut().enumerate() {
            *g = (p[k] - if k == y { 1.0 } else { 0.0 }) / labelled as f64;
        }
    }
    Ok((loss / labelled as f64, grad))
}

/// Index of the largest logit in each row.
pub fn argmax_rows(logits: &SparseTensor) -> Vec<usize> {
    (0..logits.num_active())
        .map(|i| {
            let row = logits.row(i);
            (0..row.len()).fold(0, |best, k| if row[k] > row[best] { k } else { best })
        })
        .collect()
}
