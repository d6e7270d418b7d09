use std::sync::Arc;

use crate::autograd::{GradFn, ParamGrads, ParamStore, Var};
use crate::error::{Error, Result};
use crate::layers::{Context, Layer, SparsifyPolicy, SparsifyTrace};
use crate::tensor::{Sites, SparseTensor};

/// First-channel values of a sparsify layer's input, split by whether the
/// encoder had the site active (P, kept) or not (N, dropped).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparsifierRecord {
    pub level: usize,
    pub kept_rows: Vec<usize>,
    pub dropped_rows: Vec<usize>,
    pub f_kept: Vec<f64>,
    pub f_dropped: Vec<f64>,
}

impl SparsifierRecord {
    /// Splits `input` by membership in `pattern`. Returns the record and, in
    /// pattern order, the input row of every pattern site that is present.
    fn split(input: &SparseTensor, pattern: &Sites, level: usize) -> (Self, Vec<Option<usize>>) {
        let c = input.channels();
        let f = |r: usize| input.features()[r * c];
        let mapping: Vec<Option<usize>> = pattern
            .coords()
            .iter()
            .map(|p| input.sites().row(p))
            .collect();
        let mut in_pattern = vec![false; input.num_active()];
        for &r in mapping.iter().flatten() {
            in_pattern[r] = true;
        }
        let mut kept_rows: Vec<usize> = mapping.iter().flatten().copied().collect();
        kept_rows.sort_unstable();
        let dropped_rows: Vec<usize> = (0..input.num_active()).filter(|&r| !in_pattern[r]).collect();
        let rec = SparsifierRecord {
            level,
            f_kept: kept_rows.iter().map(|&r| f(r)).collect(),
            f_dropped: dropped_rows.iter().map(|&r| f(r)).collect(),
            kept_rows,
            dropped_rows,
        };
        (rec, mapping)
    }

    /// Predicted-keep confusion against the encoder pattern among the
    /// incoming sites: `(tp, fp, fn)` where "predicted" means `f > 0`.
    pub fn confusion(&self) -> (usize, usize, usize) {
        let tp = self.f_kept.iter().filter(|&&f| f > 0.0).count();
        let fp = self.f_dropped.iter().filter(|&&f| f > 0.0).count();
        (tp, fp, self.f_kept.len() - tp)
    }
}

/// Training-mode sparsify: keep exactly the encoder pattern.
pub fn sparsify_train(
    input: &SparseTensor,
    pattern: &Arc<Sites>,
    level: usize,
) -> Result<(SparseTensor, SparsifierRecord)> {
    let (out, rec, _) = train_rows(input, pattern, level)?;
    Ok((out, rec))
}

fn train_rows(
    input: &SparseTensor,
    pattern: &Arc<Sites>,
    level: usize,
) -> Result<(SparseTensor, SparsifierRecord, Vec<usize>)> {
    let (rec, mapping) = SparsifierRecord::split(input, pattern, level);
    let missing = mapping.iter().filter(|m| m.is_none()).count();
    if missing > 0 {
        return Err(Error::PatternNotSubset { level, missing });
    }
    let rows: Vec<usize> = mapping.into_iter().flatten().collect();
    let out = gather(input, pattern.clone(), &rows)?;
    Ok((out, rec, rows))
}

/// Test-mode sparsify: keep the sites whose first channel is positive.
pub fn sparsify_test(input: &SparseTensor) -> SparseTensor {
    let (out, _) = threshold_rows(input);
    out
}

fn threshold_rows(input: &SparseTensor) -> (SparseTensor, Vec<usize>) {
    let c = input.channels();
    let rows: Vec<usize> = (0..input.num_active())
        .filter(|&r| input.features()[r * c] > 0.0)
        .collect();
    let coords = rows.iter().map(|&r| input.sites().coords()[r]).collect();
    let sites = Arc::new(Sites::from_sorted(input.geometry().clone(), coords));
    let out = gather(input, sites, &rows).expect("row count matches site count");
    (out, rows)
}

fn gather(input: &SparseTensor, sites: Arc<Sites>, rows: &[usize]) -> Result<SparseTensor> {
    let mut features = Vec::with_capacity(rows.len() * input.channels());
    for &r in rows {
        features.extend_from_slice(input.row(r));
    }
    SparseTensor::from_parts(sites, input.channels(), features)
}

/// Pass-through on kept rows; gating itself has no gradient.
struct GatherGrad {
    rows: Vec<usize>,
}

impl GradFn for GatherGrad {
    fn backward(
        &self,
        g: &[f64],
        inputs: &[&SparseTensor],
        _store: &ParamStore,
        _grads: &mut ParamGrads,
    ) -> Vec<Vec<f64>> {
        let c = inputs[0].channels();
        let mut gin = vec![0.0; inputs[0].features().len()];
        for (j, &r) in self.rows.iter().enumerate() {
            gin[r * c..(r + 1) * c].copy_from_slice(&g[j * c..(j + 1) * c]);
        }
        vec![gin]
    }
}

/// Sparsify layer restoring (or predicting) encoder pattern `level`.
pub struct Sparsify {
    pub level: usize,
}

impl Layer for Sparsify {
    fn kind(&self) -> &'static str {
        "sparsify"
    }

    fn forward(&self, x: Var, cx: &mut Context) -> Result<Var> {
        let input = cx.tape.value(x);
        let (out, rows, record) = match cx.sparsify {
            SparsifyPolicy::Pattern => {
                let pattern = cx.patterns.level(self.level)?;
                let (out, rec, rows) = train_rows(input, pattern, self.level)?;
                (out, rows, Some(rec))
            }
            SparsifyPolicy::Threshold => {
                let (out, rows) = threshold_rows(input);
                let rec = cx
                    .patterns
                    .level(self.level)
                    .ok()
                    .map(|p| SparsifierRecord::split(input, p, self.level).0);
                cx.decoded.push((self.level, out.sites_arc().clone()));
                (out, rows, rec)
            }
        };
        if let Some(record) = record {
            cx.sparsified.push(SparsifyTrace { input: x, record });
        }
        Ok(cx.tape.record(out, vec![x], Box::new(GatherGrad { rows })))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Coord, Geometry};

    fn input(vals: &[(i32, f64)]) -> SparseTensor {
        SparseTensor::build(
            Geometry::cube(2, 4),
            2,
            vals.iter()
                .map(|&(i, f)| (Coord::new(0, &[i, 0]), vec![f, 10.0 + i as f64]))
                .collect(),
        )
        .unwrap()
    }

    fn pattern(ix: &[i32]) -> Arc<Sites> {
        Arc::new(
            Sites::from_coords(
                Geometry::cube(2, 4),
                ix.iter().map(|&i| Coord::new(0, &[i, 0])).collect(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn full_pattern_is_identity() {
        let x = input(&[(0, 0.5), (2, -1.0)]);
        let (y, rec) = sparsify_train(&x, &pattern(&[0, 2]), 0).unwrap();
        assert_eq!(y, x);
        assert!(rec.dropped_rows.is_empty());
        assert_eq!(rec.f_kept, vec![0.5, -1.0]);
    }

    #[test]
    fn empty_pattern_drops_everything() {
        let x = input(&[(0, 0.5), (2, -1.0)]);
        let (y, rec) = sparsify_train(&x, &pattern(&[]), 1).unwrap();
        assert_eq!(y.num_active(), 0);
        assert!(rec.kept_rows.is_empty());
        assert_eq!(rec.dropped_rows, vec![0, 1]);
        assert_eq!(rec.level, 1);
    }

    #[test]
    fn partial_pattern() {
        let x = input(&[(1, 0.5), (3, 2.0)]);
        let (y, rec) = sparsify_train(&x, &pattern(&[1]), 0).unwrap();
        assert_eq!(y.sites().coords(), &[Coord::new(0, &[1, 0])]);
        assert_eq!(y.row(0), &[0.5, 11.0]);
        assert_eq!((rec.kept_rows, rec.dropped_rows), (vec![0], vec![1]));
        assert_eq!(rec.f_dropped, vec![2.0]);
    }

    #[test]
    fn pattern_must_be_subset() {
        let x = input(&[(1, 0.5)]);
        let err = sparsify_train(&x, &pattern(&[1, 2]), 3);
        assert!(matches!(err, Err(Error::PatternNotSubset { level: 3, missing: 1 })));
    }

    #[test]
    fn threshold() {
        let x = input(&[(0, 0.5), (1, 0.0), (2, -1.0), (3, 2.0)]);
        let y = sparsify_test(&x);
        let kept: Vec<i32> = y.sites().coords().iter().map(|c| c.pos[0]).collect();
        assert_eq!(kept, vec![0, 3]);
        assert_eq!(y.row(1), &[2.0, 13.0]);
        let all = input(&[(0, 0.5), (3, 2.0)]);
        assert_eq!(sparsify_test(&all), all);
        let none = input(&[(0, -0.5), (3, 0.0)]);
        assert_eq!(sparsify_test(&none).num_active(), 0);
    }

    #[test]
    fn single_channel_matches_relu_gating() {
        let x = SparseTensor::build(
            Geometry::cube(2, 4),
            1,
            (0..4).map(|i| (Coord::new(0, &[i, 1]), vec![i as f64 - 1.5])).collect(),
        )
        .unwrap();
        let y = sparsify_test(&x);
        let relu_dense: Vec<f64> = x.to_dense().unwrap().values.iter().map(|v| v.max(0.0)).collect();
        assert_eq!(y.to_dense().unwrap().values, relu_dense);
    }
}
