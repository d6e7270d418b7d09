//! Dataset ingestion, rasterization, voxelization and augmentation.

pub mod augment;
pub mod convert;
pub mod dataset;
pub mod pointcloud;
pub mod strokes;
pub mod synth;

pub use augment::{random_affine, Affine, AffineConfig};
pub use convert::{convert_strokes, StrokeSource};
pub use dataset::{Dataset, DatasetFormat, FormatRegistry, LoadOptions, PointFormat, PointMap, Realized, Sample, StrokeFormat};
pub use pointcloud::{format_point_cloud, parse_point_clouds, voxelize, PointCloudSample, VoxelGrid, Voxelized};
pub use strokes::{fit_to_grid, format_strokes, line_cells, parse_strokes, rasterize, rasterize_with, StrokeSample};
pub use synth::{line_cells_nd, synth_sparse, SynthSample, SynthStyle};
