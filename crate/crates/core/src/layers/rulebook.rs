//! Rulebooks: for every kernel offset, the `(input_row, output_row)` pairs a
//! sparse convolution touches.
//!
//! Kernel offsets are enumerated lexicographically over `[0, f)^d`. For
//! submanifold convolutions offset `o` means displacement `o - (f-1)/2`.
//! Each rule list is sorted by `(output_row, input_row)`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Coord, Geometry, Sites, MAX_DIM};

/// Below this many candidate rule lookups, offsets are scanned serially.
const PARALLEL_THRESHOLD: usize = 1 << 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleKind {
    /// SSC: stride 1, centered, output set = input set.
    Submanifold,
    /// SC: greedy strided convolution.
    Strided,
    /// TC: greedy transpose convolution.
    Transpose,
    /// DC: transpose of a stored SC rulebook.
    Deconv,
}

pub type Offset = [i32; MAX_DIM];

#[derive(Debug)]
pub struct Rulebook {
    kind: RuleKind,
    filter: usize,
    stride: usize,
    offsets: Vec<Offset>,
    rules: Vec<Vec<(u32, u32)>>,
    in_sites: Arc<Sites>,
    out_sites: Arc<Sites>,
}

/// All offsets of `[0, f)^d` in lexicographic order.
pub fn kernel_offsets(d: usize, f: usize) -> Vec<Offset> {
    let vol = f.pow(d as u32);
    (0..vol)
        .map(|mut lin| {
            let mut o = [0; MAX_DIM];
            for i in (0..d).rev() {
                o[i] = (lin % f) as i32;
                lin /= f;
            }
            o
        })
        .collect()
}

/// Output extent of a strided convolution, `(N - f) / s + 1`, requiring the
/// windows to tile the input exactly.
pub fn strided_output_size(n: usize, f: usize, s: usize) -> Result<usize> {
    if s == 0 || f < s {
        return Err(Error::BadGeometry(format!("need f >= s >= 1, got f={f} s={s}")));
    }
    if n < f || (n - f) % s != 0 {
        return Err(Error::BadGeometry(format!(
            "size {n} is not covered exactly by f={f} s={s}"
        )));
    }
    Ok((n - f) / s + 1)
}

/// Output extent of a transpose convolution: the inverse of
/// [`strided_output_size`], `s (N - 1) + f`.
pub fn transpose_output_size(n: usize, f: usize, s: usize) -> Result<usize> {
    if s == 0 || f < s || n == 0 {
        return Err(Error::BadGeometry(format!("need f >= s >= 1, got f={f} s={s}")));
    }
    Ok(s * (n - 1) + f)
}

fn gather_rules<F>(offsets: &[Offset], out_count: usize, lookup: F) -> Vec<Vec<(u32, u32)>>
where
    F: Fn(usize, usize) -> Option<usize> + Sync,
{
    let per_offset = |k: usize| -> Vec<(u32, u32)> {
        (0..out_count)
            .filter_map(|j| lookup(k, j).map(|i| (i as u32, j as u32)))
            .collect()
    };
    if offsets.len() * out_count >= PARALLEL_THRESHOLD {
        (0..offsets.len()).into_par_iter().map(per_offset).collect()
    } else {
        (0..offsets.len()).map(per_offset).collect()
    }
}

fn sorted_unique(mut coords: Vec<Coord>) -> Vec<Coord> {
    coords.sort_unstable();
    coords.dedup();
    coords
}

impl Rulebook {
    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn filter(&self) -> usize {
        self.filter
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn offsets(&self) -> &[Offset] {
        &self.offsets
    }

    pub fn rules(&self) -> &[Vec<(u32, u32)>] {
        &self.rules
    }

    pub fn in_sites(&self) -> &Arc<Sites> {
        &self.in_sites
    }

    pub fn out_sites(&self) -> &Arc<Sites> {
        &self.out_sites
    }

    pub fn num_rules(&self) -> usize {
        self.rules.iter().map(Vec::len).sum()
    }

    /// Submanifold rulebook: outputs are exactly the input sites, each seeing
    /// the active sites of its centered `f^d` window.
    pub fn submanifold(input: &Arc<Sites>, f: usize) -> Result<Self> {
        if f % 2 == 0 {
            return Err(Error::EvenFilter(f));
        }
        let d = input.d();
        let r = (f / 2) as i32;
        let offsets = kernel_offsets(d, f);
        let coords = input.coords();
        let rules = gather_rules(&offsets, coords.len(), |k, j| {
            let mut x = coords[j];
            for i in 0..d {
                x.pos[i] += offsets[k][i] - r;
            }
            input.row(&x)
        });
        Ok(Rulebook {
            kind: RuleKind::Submanifold,
            filter: f,
            stride: 1,
            offsets,
            rules,
            in_sites: input.clone(),
            out_sites: input.clone(),
        })
    }

    /// Greedy strided convolution: output `y` is active iff some active `x`
    /// lies in the window `s*y + [0, f)^d`.
    pub fn strided(input: &Arc<Sites>, f: usize, s: usize) -> Result<Self> {
        let g = input.geometry();
        let d = g.d();
        let out_size = g
            .spatial_size
            .iter()
            .map(|&n| strided_output_size(n, f, s))
            .collect::<Result<Vec<_>>>()?;
        let out_geom = Geometry {
            spatial_size: out_size,
            batch_count: g.batch_count,
        };
        let offsets = kernel_offsets(d, f);
        let mut candidates = Vec::new();
        for x in input.coords() {
            for o in &offsets {
                let mut y = Coord { batch: x.batch, pos: [0; MAX_DIM] };
                let ok = (0..d).all(|i| {
                    let t = x.pos[i] - o[i];
                    y.pos[i] = t.div_euclid(s as i32);
                    t >= 0 && t % s as i32 == 0
                });
                if ok && out_geom.contains(&y) {
                    candidates.push(y);
                }
            }
        }
        let out = Arc::new(Sites::from_sorted(out_geom, sorted_unique(candidates)));
        let out_coords = out.coords();
        let rules = gather_rules(&offsets, out_coords.len(), |k, j| {
            let mut x = out_coords[j];
            for i in 0..d {
                x.pos[i] = x.pos[i] * s as i32 + offsets[k][i];
            }
            input.row(&x)
        });
        Ok(Rulebook {
            kind: RuleKind::Strided,
            filter: f,
            stride: s,
            offsets,
            rules,
            in_sites: input.clone(),
            out_sites: out,
        })
    }

    /// Greedy transpose convolution: every active input activates all `f^d`
    /// sites `s*x + [0, f)^d`.
    pub fn transpose(input: &Arc<Sites>, f: usize, s: usize) -> Result<Self> {
        let g = input.geometry();
        let d = g.d();
        let out_size = g
            .spatial_size
            .iter()
            .map(|&n| transpose_output_size(n, f, s))
            .collect::<Result<Vec<_>>>()?;
        let out_geom = Geometry {
            spatial_size: out_size,
            batch_count: g.batch_count,
        };
        let offsets = kernel_offsets(d, f);
        let mut candidates = Vec::with_capacity(input.len() * offsets.len());
        for x in input.coords() {
            for o in &offsets {
                let mut y = *x;
                for i in 0..d {
                    y.pos[i] = x.pos[i] * s as i32 + o[i];
                }
                candidates.push(y);
            }
        }
        let out = Arc::new(Sites::from_sorted(out_geom, sorted_unique(candidates)));
        let out_coords = out.coords();
        let rules = gather_rules(&offsets, out_coords.len(), |k, j| {
            let y = out_coords[j];
            let mut x = y;
            for i in 0..d {
                let t = y.pos[i] - offsets[k][i];
                if t < 0 || t % s as i32 != 0 {
                    return None;
                }
                x.pos[i] = t / s as i32;
            }
            input.row(&x)
        });
        Ok(Rulebook {
            kind: RuleKind::Transpose,
            filter: f,
            stride: s,
            offsets,
            rules,
            in_sites: input.clone(),
            out_sites: out,
        })
    }

    /// Deconvolution: the transpose of a stored strided rulebook, restoring
    /// that layer's input pattern.
    pub fn deconv(matching: &Rulebook) -> Result<Self> {
        if matching.kind != RuleKind::Strided {
            return Err(Error::ShapeMismatch(format!(
                "deconvolution needs a strided rulebook, got {:?}",
                matching.kind
            )));
        }
        let rules = matching
            .rules
            .iter()
            .map(|list| {
                let mut t: Vec<(u32, u32)> = list.iter().map(|&(i, o)| (o, i)).collect();
                t.sort_unstable_by_key(|&(i, o)| (o, i));
                t
            })
            .collect();
        Ok(Rulebook {
            kind: RuleKind::Deconv,
            filter: matching.filter,
            stride: matching.stride,
            offsets: matching.offsets.clone(),
            rules,
            in_sites: matching.out_sites.clone(),
            out_sites: matching.in_sites.clone(),
        })
    }
}
