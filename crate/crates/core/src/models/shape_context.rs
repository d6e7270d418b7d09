//! Multi-scale shape-context features.
//!
//! At scales `p = 1, 2, ..., 2^(l-1)` the input is average-pooled over
//! `p^d` cells; every active site then gathers the pooled vectors of the
//! `3^d` cells around its own cell. Concatenating over scales gives
//! `3^d * n * l` channels on the input's active set.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::layers::kernel_offsets;
use crate::tensor::{SparseTensor, MAX_DIM};

pub fn shape_context_channels(d: usize, n: usize, levels: usize) -> usize {
    3usize.pow(d as u32) * n * levels
}

pub fn shape_context(input: &SparseTensor, levels: usize) -> Result<SparseTensor> {
    if levels == 0 {
        return Err(Error::BadGeometry("shape context needs at least one level".into()));
    }
    let d = input.d();
    let top = 1usize << (levels - 1);
    if let Some(n) = input.spatial_size().iter().find(|&&n| n % top != 0) {
        return Err(Error::BadGeometry(format!(
            "extent {n} not divisible by the coarsest pooling factor {top}"
        )));
    }
    let n = input.channels();
    let out_c = shape_context_channels(d, n, levels);
    let neighbours = kernel_offsets(d, 3);
    let coords = input.sites().coords();
    let mut out = vec![0.0; input.num_active() * out_c];
    for l in 0..levels {
        let p = 1i32 << l;
        let inv = 1.0 / (p as f64).powi(d as i32);
        let mut pooled: HashMap<(u32, [i32; MAX_DIM]), Vec<f64>> = HashMap::new();
        for (r, c) in coords.iter().enumerate() {
            let mut cell = [0; MAX_DIM];
            for a in 0..d {
                cell[a] = c.pos[a] / p;
            }
            let acc = pooled.entry((c.batch, cell)).or_insert_with(|| vec![0.0; n]);
            acc.iter_mut().zip(input.row(r)).for_each(|(s, v)| *s += v * inv);
        }
        for (r, c) in coords.iter().enumerate() {
            let row = &mut out[r * out_c..(r + 1) * out_c];
            for (k, off) in neighbours.iter().enumerate() {
                let mut cell = [0; MAX_DIM];
                for a in 0..d {
                    cell[a] = c.pos[a] / p + off[a] - 1;
                }
                if let Some(v) = pooled.get(&(c.batch, cell)) {
                    let base = (l * neighbours.len() + k) * n;
                    row[base..base + n].copy_from_slice(v);
                }
            }
        }
    }
    input.with_features(out_c, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Coord, Geometry};

    #[test]
    fn channel_count() {
        assert_eq!(shape_context_channels(2, 1, 4), 36);
        let x = SparseTensor::build(Geometry::cube(2, 16), 1, vec![(Coord::new(0, &[3, 5]), vec![1.0])]).unwrap();
        assert_eq!(shape_context(&x, 4).unwrap().channels(), 36);
    }

    #[test]
    fn single_level_single_site_hits_centre_only() {
        let x = SparseTensor::build(Geometry::cube(2, 4), 1, vec![(Coord::new(0, &[1, 2]), vec![2.5])]).unwrap();
        let y = shape_context(&x, 1).unwrap();
        let mut expect = vec![0.0; 9];
        expect[4] = 2.5;
        assert_eq!(y.row(0), &expect[..]);
    }

    #[test]
    fn indivisible_extent() {
        let x = SparseTensor::build(Geometry::new(vec![12, 16]), 1, vec![(Coord::new(0, &[0, 0]), vec![1.0])]).unwrap();
        assert!(shape_context(&x, 3).is_ok());
        assert!(matches!(shape_context(&x, 4), Err(Error::BadGeometry(_))));
    }
}
