//! Sparse tensors: an active-site index plus one contiguous feature row per
//! active site.
//!
//! The batch index is part of the site key, so a whole minibatch is a single
//! tensor and every rulebook pass serves all of its samples at once. Sites are
//! kept in canonical `(batch, pos)` lexicographic order; building the same set
//! in any insertion order yields identical tensors.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest supported number of spatial dimensions.
pub const MAX_DIM: usize = 4;

/// Default guard for [`SparseTensor::to_dense`], in scalars.
pub const DENSE_LIMIT: usize = 100_000_000;

/// A lattice site: batch index plus up to four spatial components.
///
/// Components beyond the owning tensor's dimension are always zero, which
/// makes the derived ordering the canonical `(batch, pos)` ordering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub batch: u32,
    pub pos: [i32; MAX_DIM],
}

impl Coord {
    pub fn new(batch: u32, pos: &[i32]) -> Self {
        assert!(pos.len() <= MAX_DIM, "at most {MAX_DIM} spatial dimensions");
        let mut p = [0; MAX_DIM];
        p[..pos.len()].copy_from_slice(pos);
        Coord { batch, pos: p }
    }

    pub fn spatial(&self, d: usize) -> &[i32] {
        &self.pos[..d]
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}:{:?}", self.batch, self.pos)
    }
}

/// Spatial extent and batch count shared by every site of a tensor.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Geometry {
    pub spatial_size: Vec<usize>,
    pub batch_count: usize,
}

impl Geometry {
    pub fn new(spatial_size: Vec<usize>) -> Self {
        Geometry {
            spatial_size,
            batch_count: 1,
        }
    }

    pub fn cube(d: usize, size: usize) -> Self {
        Geometry::new(vec![size; d])
    }

    pub fn with_batch(mut self, batch_count: usize) -> Self {
        self.batch_count = batch_count;
        self
    }

    pub fn d(&self) -> usize {
        self.spatial_size.len()
    }

    /// Number of lattice sites per sample.
    pub fn volume(&self) -> usize {
        self.spatial_size.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if !(2..=MAX_DIM).contains(&d) {
            return Err(Error::DimensionMismatch(format!(
                "dimension {d} outside 2..={MAX_DIM}"
            )));
        }
        if self.spatial_size.iter().any(|&s| s == 0) || self.batch_count == 0 {
            return Err(Error::BadGeometry(format!(
                "non-positive extent {:?} x batch {}",
                self.spatial_size, self.batch_count
            )));
        }
        Ok(())
    }

    pub fn contains(&self, c: &Coord) -> bool {
        (c.batch as usize) < self.batch_count
            && self
                .spatial_size
                .iter()
                .zip(c.pos.iter())
                .all(|(&s, &p)| p >= 0 && (p as usize) < s)
    }

    fn check(&self, c: &Coord) -> Result<()> {
        if c.pos[self.d()..].iter().any(|&p| p != 0) {
            return Err(Error::DimensionMismatch(format!(
                "{c} has components beyond dimension {}",
                self.d()
            )));
        }
        if !self.contains(c) {
            return Err(Error::OutOfRange {
                coord: c.to_string(),
                size: self.spatial_size.clone(),
            });
        }
        Ok(())
    }

    /// Row-major offset of a spatial position.
    pub fn linear(&self, pos: &[i32]) -> usize {
        pos.iter()
            .zip(&self.spatial_size)
            .fold(0, |acc, (&p, &s)| acc * s + p as usize)
    }

    pub fn delinear(&self, mut idx: usize) -> [i32; MAX_DIM] {
        let mut pos = [0; MAX_DIM];
        for i in (0..self.d()).rev() {
            let s = self.spatial_size[i];
            pos[i] = (idx % s) as i32;
            idx /= s;
        }
        pos
    }
}

/// An active set: sorted coordinates plus the inverse index.
#[derive(Clone, Debug)]
pub struct Sites {
    geometry: Geometry,
    coords: Vec<Coord>,
    index: HashMap<Coord, usize>,
}

impl PartialEq for Sites {
    fn eq(&self, other: &Self) -> bool {
        self.geometry == other.geometry && self.coords == other.coords
    }
}

impl Sites {
    /// Validates and canonically orders `coords`.
    pub fn from_coords(geometry: Geometry, mut coords: Vec<Coord>) -> Result<Self> {
        geometry.validate()?;
        for c in &coords {
            geometry.check(c)?;
        }
        coords.sort_unstable();
        if let Some(w) = coords.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateSite(w[0].to_string()));
        }
        Ok(Self::from_sorted(geometry, coords))
    }

    /// Internal constructor for coordinates that are already sorted, unique
    /// and in range.
    pub(crate) fn from_sorted(geometry: Geometry, coords: Vec<Coord>) -> Self {
        debug_assert!(coords.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(coords.iter().all(|c| geometry.contains(c)));
        let index = coords.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Sites {
            geometry,
            coords,
            index,
        }
    }

    pub fn empty(geometry: Geometry) -> Self {
        Self::from_sorted(geometry, Vec::new())
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn d(&self) -> usize {
        self.geometry.d()
    }

    pub fn spatial_size(&self) -> &[usize] {
        &self.geometry.spatial_size
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn row(&self, c: &Coord) -> Option<usize> {
        self.index.get(c).copied()
    }

    pub fn contains(&self, c: &Coord) -> bool {
        self.index.contains_key(c)
    }

    pub fn is_subset_of(&self, other: &Sites) -> bool {
        self.coords.iter().all(|c| other.contains(c))
    }

    /// Restricts the set to one sample, re-indexed as batch 0.
    pub fn sample(&self, batch: u32) -> Sites {
        let coords = self
            .coords
            .iter()
            .filter(|c| c.batch == batch)
            .map(|c| Coord { batch: 0, ..*c })
            .collect();
        Sites::from_sorted(self.geometry.clone().with_batch(1), coords)
    }
}

/// Features at active sites, `len() x channels`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseTensor {
    sites: Arc<Sites>,
    channels: usize,
    features: Vec<f64>,
}

impl SparseTensor {
    pub fn build(
        geometry: Geometry,
        channels: usize,
        mut sites: Vec<(Coord, Vec<f64>)>,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::DimensionMismatch("zero channels".into()));
        }
        if let Some((c, row)) = sites.iter().find(|(_, r)| r.len() != channels) {
            return Err(Error::DimensionMismatch(format!(
                "row at {c} has {} values, expected {channels}",
                row.len()
            )));
        }
        sites.sort_by(|a, b| a.0.cmp(&b.0));
        let (coords, rows): (Vec<_>, Vec<_>) = sites.into_iter().unzip();
        let sites = Sites::from_coords(geometry, coords)?;
        Ok(SparseTensor {
            sites: Arc::new(sites),
            channels,
            features: rows.concat(),
        })
    }

    pub fn from_parts(sites: Arc<Sites>, channels: usize, features: Vec<f64>) -> Result<Self> {
        if features.len() != sites.len() * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} sites x {channels} channels",
                features.len(),
                sites.len()
            )));
        }
        Ok(SparseTensor {
            sites,
            channels,
            features,
        })
    }

    pub fn zeros(sites: Arc<Sites>, channels: usize) -> Self {
        let features = vec![0.0; sites.len() * channels];
        SparseTensor {
            sites,
            channels,
            features,
        }
    }

    /// Every site of the set carries the constant row `value`.
    pub fn filled(sites: Arc<Sites>, channels: usize, value: f64) -> Self {
        let features = vec![value; sites.len() * channels];
        SparseTensor {
            sites,
            channels,
            features,
        }
    }

    pub fn sites(&self) -> &Sites {
        &self.sites
    }

    pub fn sites_arc(&self) -> &Arc<Sites> {
        &self.sites
    }

    pub fn geometry(&self) -> &Geometry {
        self.sites.geometry()
    }

    pub fn d(&self) -> usize {
        self.sites.d()
    }

    pub fn spatial_size(&self) -> &[usize] {
        self.sites.spatial_size()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_active(&self) -> usize {
        self.sites.len()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut [f64] {
        &mut self.features
    }

    pub fn into_features(self) -> Vec<f64> {
        self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.channels..(i + 1) * self.channels]
    }

    pub fn get(&self, c: &Coord) -> Option<&[f64]> {
        self.sites.row(c).map(|i| self.row(i))
    }

    /// Same active set, new feature matrix.
    pub fn with_features(&self, channels: usize, features: Vec<f64>) -> Result<Self> {
        Self::from_parts(self.sites.clone(), channels, features)
    }

    /// Fraction of lattice sites that are active.
    pub fn occupancy(&self) -> f64 {
        let g = self.geometry();
        self.num_active() as f64 / (g.batch_count * g.volume()) as f64
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        self.to_dense_with_limit(DENSE_LIMIT)
    }

    pub fn to_dense_with_limit(&self, limit: usize) -> Result<DenseTensor> {
        let g = self.geometry().clone();
        let scalars = g
            .volume()
            .saturating_mul(self.channels)
            .saturating_mul(g.batch_count);
        if scalars > limit {
            return Err(Error::TooLarge { scalars, limit });
        }
        let mut dense = DenseTensor::zeros(g, self.channels);
        for (i, c) in self.sites.coords().iter().enumerate() {
            for (ch, &v) in self.row(i).iter().enumerate() {
                dense.set(c, ch, v);
            }
        }
        Ok(dense)
    }

    /// Sites where any channel is non-zero become active.
    pub fn from_dense(x: &DenseTensor) -> Self {
        let g = &x.geometry;
        let mut coords = Vec::new();
        let mut features = Vec::new();
        for b in 0..g.batch_count {
            for lin in 0..g.volume() {
                let c = Coord {
                    batch: b as u32,
                    pos: g.delinear(lin),
                };
                let row: Vec<f64> = (0..x.channels).map(|ch| x.get(&c, ch)).collect();
                if row.iter().any(|&v| v != 0.0) {
                    coords.push(c);
                    features.extend(row);
                }
            }
        }
        // batch-major then row-major enumeration is already canonical order
        SparseTensor {
            sites: Arc::new(Sites::from_sorted(g.clone(), coords)),
            channels: x.channels,
            features,
        }
    }

    /// Stacks single-sample tensors into one batch, sample `i` becoming batch `i`.
    pub fn batch(parts: &[&SparseTensor]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyInput)?;
        let size = first.spatial_size().to_vec();
        let channels = first.channels;
        let mut coords = Vec::new();
        let mut features = Vec::new();
        for (b, t) in parts.iter().enumerate() {
            if t.spatial_size() != size.as_slice() || t.channels != channels {
                return Err(Error::ShapeMismatch(format!(
                    "batch element {b}: {:?}x{} vs {:?}x{channels}",
                    t.spatial_size(),
                    t.channels,
                    size
                )));
            }
            if t.geometry().batch_count != 1 {
                return Err(Error::ShapeMismatch(format!(
                    "batch element {b} is itself batched"
                )));
            }
            coords.extend(t.sites.coords().iter().map(|c| Coord {
                batch: b as u32,
                ..*c
            }));
            features.extend_from_slice(&t.features);
        }
        let geometry = Geometry::new(size).with_batch(parts.len());
        Ok(SparseTensor {
            sites: Arc::new(Sites::from_sorted(geometry, coords)),
            channels,
            features,
        })
    }

    /// Extracts one sample as a batch-1 tensor.
    pub fn sample(&self, batch: u32) -> SparseTensor {
        let sites = self.sites.sample(batch);
        let mut features = Vec::with_capacity(sites.len() * self.channels);
        for (i, c) in self.sites.coords().iter().enumerate() {
            if c.batch == batch {
                features.extend_from_slice(self.row(i));
            }
        }
        SparseTensor {
            sites: Arc::new(sites),
            channels: self.channels,
            features,
        }
    }
}

/// Dense oracle/export representation, laid out `[batch][channel][site]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    pub geometry: Geometry,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(geometry: Geometry, channels: usize) -> Self {
        let n = geometry.batch_count * channels * geometry.volume();
        DenseTensor {
            geometry,
            channels,
            values: vec![0.0; n],
        }
    }

    fn offset(&self, c: &Coord, ch: usize) -> usize {
        let g = &self.geometry;
        (c.batch as usize * self.channels + ch) * g.volume() + g.linear(c.spatial(g.d()))
    }

    pub fn get(&self, c: &Coord, ch: usize) -> f64 {
        self.values[self.offset(c, ch)]
    }

    pub fn set(&mut self, c: &Coord, ch: usize, v: f64) {
        let o = self.offset(c, ch);
        self.values[o] = v;
    }
}
