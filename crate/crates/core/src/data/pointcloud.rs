//! Point clouds: text format and voxelization.
//!
//! A record is a header line `d n_points n_features` followed by one line
//! per point: `d` coordinates, `n_features` features and a label (`-1` for
//! none). Records may be concatenated; `#` starts a comment line.

use std::collections::BTreeMap;

use crate::data::Affine;
use crate::error::{Error, Result};
use crate::tensor::{Coord, Geometry, SparseTensor, MAX_DIM};

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloudSample {
    pub d: usize,
    pub points: Vec<Vec<f64>>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Option<usize>>,
}

impl PointCloudSample {
    pub fn feature_count(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn parse_point_clouds(text: &str) -> Result<Vec<PointCloudSample>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut out = Vec::new();
    while let Some((hl, header)) = lines.next() {
        let h: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(hl, format!("bad header field {t:?}"))))
            .collect::<Result<_>>()?;
        let [d, n, nf] = h[..] else {
            return Err(parse_err(hl, "header must be `d n_points n_features`"));
        };
        if !(2..=MAX_DIM).contains(&d) {
            return Err(parse_err(hl, format!("dimension {d} outside 2..={MAX_DIM}")));
        }
        let mut s = PointCloudSample {
            d,
            points: Vec::with_capacity(n),
            features: Vec::with_capacity(n),
            labels: Vec::with_capacity(n),
        };
        for _ in 0..n {
            let (pl, line) = lines
                .next()
                .ok_or_else(|| parse_err(hl, format!("record declares {n} points but the input ends")))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != d + nf + 1 {
                return Err(parse_err(pl, format!("expected {} fields, found {}", d + nf + 1, toks.len())));
            }
            let nums = toks[..d + nf]
                .iter()
                .map(|t| match t.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(parse_err(pl, format!("bad number {t:?}"))),
                })
                .collect::<Result<Vec<f64>>>()?;
            let label: i64 = toks[d + nf]
                .parse()
                .map_err(|_| parse_err(pl, format!("bad label {:?}", toks[d + nf])))?;
            if label < -1 {
                return Err(parse_err(pl, format!("label {label} below -1")));
            }
            s.points.push(nums[..d].to_vec());
            s.features.push(nums[d..].to_vec());
            s.labels.push((label >= 0).then_some(label as usize));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn format_point_cloud(s: &PointCloudSample) -> String {
    let mut out = format!("{} {} {}\n", s.d, s.points.len(), s.feature_count());
    for (i, p) in s.points.iter().enumerate() {
        let f = s.features.get(i).map_or(&[][..], Vec::as_slice);
        let mut fields: Vec<String> = p.iter().chain(f).map(|v| v.to_string()).collect();
        fields.push(s.labels.get(i).copied().flatten().map_or("-1".to_string(), |l| l.to_string()));
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out
}

/// Lattice used to bin points.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    /// Edge length of one cell.
    pub resolution: f64,
    pub origin: Vec<f64>,
    pub size: Vec<usize>,
}

impl VoxelGrid {
    pub fn cube(d: usize, size: usize, resolution: f64) -> Self {
        VoxelGrid {
            resolution,
            origin: vec![0.0; d],
            size: vec![size; d],
        }
    }

    pub fn centre(&self) -> Vec<f64> {
        self.origin
            .iter()
            .zip(&self.size)
            .map(|(o, &n)| o + n as f64 * self.resolution / 2.0)
            .collect()
    }

    fn cell(&self, p: &[f64]) -> Option<[i32; MAX_DIM]> {
        let mut c = [0; MAX_DIM];
        for a in 0..self.size.len() {
            let v = ((p[a] - self.origin[a]) / self.resolution).floor();
            if !(v >= 0.0 && v < self.size[a] as f64) {
                return None;
            }
            c[a] = v as i32;
        }
        Some(c)
    }
}

#[derive(Clone, Debug)]
pub struct Voxelized {
    /// Mean point features per cell, or a single channel of ones when the
    /// cloud has no features.
    pub tensor: SparseTensor,
    /// Majority point label per site (ties to the smallest label).
    pub site_labels: Vec<Option<usize>>,
    /// Row of the site holding each input point, `None` if clipped.
    pub point_rows: Vec<Option<usize>>,
    /// Points per site.
    pub counts: Vec<usize>,
}

/// Bins points into `grid`. Points outside are an error unless `clip` is
/// set, in which case they are dropped. `affine` is applied about the grid
/// centre with translations in units of the grid extent.
pub fn voxelize(s: &PointCloudSample, grid: &VoxelGrid, affine: Option<&Affine>, clip: bool) -> Result<Voxelized> {
    if s.points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let d = s.d;
    if grid.size.len() != d || grid.origin.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{d}-dimensional cloud on a {}-dimensional grid",
            grid.size.len()
        )));
    }
    if !(grid.resolution > 0.0) {
        return Err(Error::BadGeometry(format!("voxel resolution {} is not positive", grid.resolution)));
    }
    let geometry = Geometry::new(grid.size.clone());
    geometry.validate()?;
    let nf = s.feature_count();
    let channels = nf.max(1);
    let centre = grid.centre();
    let unit = grid.size.iter().copied().max().unwrap_or(0) as f64 * grid.resolution;
    struct Acc {
        sum: Vec<f64>,
        count: usize,
        votes: BTreeMap<usize, usize>,
    }
    let mut cells: BTreeMap<Coord, Acc> = BTreeMap::new();
    let mut point_cells = Vec::with_capacity(s.points.len());
    for (i, p) in s.points.iter().enumerate() {
        let q = match affine {
            Some(a) => a.apply(p, &centre, unit),
            None => p.clone(),
        };
        let Some(pos) = grid.cell(&q) else {
            if clip {
                point_cells.push(None);
                continue;
            }
            return Err(Error::OutOfRange {
                coord: format!("{q:?}"),
                size: grid.size.clone(),
            });
        };
        let c = Coord::new(0, &pos[..d]);
        let acc = cells.entry(c).or_insert_with(|| Acc {
            sum: vec![0.0; channels],
            count: 0,
            votes: BTreeMap::new(),
        });
        if nf > 0 {
            acc.sum.iter_mut().zip(&s.features[i]).for_each(|(a, v)| *a += v);
        } else {
            acc.sum[0] = 1.0;
        }
        acc.count += 1;
        if let Some(l) = s.labels[i] {
            *acc.votes.entry(l).or_insert(0) += 1;
        }
        point_cells.push(Some(c));
    }
    if cells.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut rows = Vec::with_capacity(cells.len());
    let mut site_labels = Vec::with_capacity(cells.len());
    let mut counts = Vec::with_capacity(cells.len());
    for (c, acc) in cells {
        let f = if nf > 0 {
            acc.sum.iter().map(|v| v / acc.count as f64).collect()
        } else {
            acc.sum
        };
        let best = acc
            .votes
            .iter()
            .fold(None, |best: Option<(usize, usize)>, (&l, &n)| match best {
                Some((_, bn)) if bn >= n => best,
                _ => Some((l, n)),
            });
        site_labels.push(best.map(|(l, _)| l));
        counts.push(acc.count);
        rows.push((c, f));
    }
    let tensor = SparseTensor::build(geometry, channels, rows)?;
    let point_rows = point_cells
        .into_iter()
        .map(|c| c.and_then(|c| tensor.sites().row(&c)))
        .collect();
    Ok(Voxelized {
        tensor,
        site_labels,
        point_rows,
        counts,
    })
}
