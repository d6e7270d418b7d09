//! Labelled datasets and the file formats that produce them.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::{
    parse_point_clouds, parse_strokes, rasterize_with, voxelize, Affine, PointCloudSample, StrokeSample, VoxelGrid,
};
use crate::error::{Error, Result};
use crate::tensor::SparseTensor;

/// One sample realized on the lattice.
#[derive(Clone, Debug)]
pub struct Realized {
    pub tensor: SparseTensor,
    pub site_labels: Option<Vec<Option<usize>>>,
    /// For point clouds: each point's label and the row of its site.
    pub points: Option<PointMap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointMap {
    pub labels: Vec<Option<usize>>,
    pub rows: Vec<Option<usize>>,
}

/// A raw sample that can be realized, optionally under an augmentation.
pub trait Sample: Send + Sync {
    fn label(&self) -> Option<usize>;

    fn realize(&self, affine: Option<&Affine>) -> Result<Realized>;
}

struct RasterSample {
    sample: StrokeSample,
    grid: usize,
}

impl Sample for RasterSample {
    fn label(&self) -> Option<usize> {
        Some(self.sample.label)
    }

    fn realize(&self, affine: Option<&Affine>) -> Result<Realized> {
        Ok(Realized {
            tensor: rasterize_with(&self.sample, self.grid, affine)?,
            site_labels: None,
            points: None,
        })
    }
}

struct CloudSample {
    cloud: PointCloudSample,
    grid: VoxelGrid,
}

impl Sample for CloudSample {
    fn label(&self) -> Option<usize> {
        None
    }

    fn realize(&self, affine: Option<&Affine>) -> Result<Realized> {
        let v = voxelize(&self.cloud, &self.grid, affine, affine.is_some())?;
        let labelled = v.site_labels.iter().any(Option::is_some);
        Ok(Realized {
            tensor: v.tensor,
            site_labels: labelled.then_some(v.site_labels),
            points: Some(PointMap {
                labels: self.cloud.labels.clone(),
                rows: v.point_rows,
            }),
        })
    }
}

/// How raw samples are placed on the lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadOptions {
    pub d: usize,
    /// Lattice extent per axis.
    pub grid: usize,
    /// Voxel edge length for point clouds.
    pub resolution: f64,
    pub origin: Option<Vec<f64>>,
}

pub struct Dataset {
    pub samples: Vec<Box<dyn Sample>>,
    pub d: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.samples.iter().map(|s| s.label()).collect()
    }
}

pub trait DatasetFormat: Send + Sync {
    fn name(&self) -> &'static str;

    fn parse(&self, text: &str, opts: &LoadOptions) -> Result<Vec<Box<dyn Sample>>>;
}

pub struct StrokeFormat;

impl DatasetFormat for StrokeFormat {
    fn name(&self) -> &'static str {
        "strokes"
    }

    fn parse(&self, text: &str, opts: &LoadOptions) -> Result<Vec<Box<dyn Sample>>> {
        if opts.d != 2 {
            return Err(Error::DimensionMismatch(format!("stroke data is 2-dimensional, d = {}", opts.d)));
        }
        Ok(parse_strokes(text)?
            .into_iter()
            .map(|sample| Box::new(RasterSample { sample, grid: opts.grid }) as Box<dyn Sample>)
            .collect())
    }
}

pub struct PointFormat;

impl DatasetFormat for PointFormat {
    fn name(&self) -> &'static str {
        "points"
    }

    fn parse(&self, text: &str, opts: &LoadOptions) -> Result<Vec<Box<dyn Sample>>> {
        let grid = VoxelGrid {
            resolution: opts.resolution,
            origin: opts.origin.clone().unwrap_or_else(|| vec![0.0; opts.d]),
            size: vec![opts.grid; opts.d],
        };
        parse_point_clouds(text)?
            .into_iter()
            .map(|cloud| {
                if cloud.d != opts.d {
                    return Err(Error::DimensionMismatch(format!(
                        "{}-dimensional cloud in a d = {} dataset",
                        cloud.d, opts.d
                    )));
                }
                Ok(Box::new(CloudSample { cloud, grid: grid.clone() }) as Box<dyn Sample>)
            })
            .collect()
    }
}

pub struct FormatRegistry {
    formats: BTreeMap<&'static str, Box<dyn DatasetFormat>>,
}

impl FormatRegistry {
    pub fn standard() -> Self {
        let mut r = FormatRegistry {
            formats: BTreeMap::new(),
        };
        r.register(Box::new(StrokeFormat));
        r.register(Box::new(PointFormat));
        r
    }

    pub fn register(&mut self, f: Box<dyn DatasetFormat>) {
        self.formats.insert(f.name(), f);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.formats.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn DatasetFormat> {
        self.formats.get(name).map(|f| f.as_ref()).ok_or_else(|| Error::UnknownName {
            kind: "dataset format",
            name: name.into(),
            known: self.names().join(", "),
        })
    }

    pub fn load(&self, name: &str, path: &Path, opts: &LoadOptions) -> Result<Dataset> {
        let format = self.get(name)?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let samples = format.parse(&text, opts)?;
        if samples.is_empty() {
            return Err(Error::Parse {
                line: 0,
                msg: format!("{} holds no samples", path.display()),
            });
        }
        Ok(Dataset { samples, d: opts.d })
    }
}
