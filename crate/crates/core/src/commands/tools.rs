//! Dataset utilities: synthetic generation and stroke conversion.

use std::path::Path;

use crate::commands::{mix, write_atomic};
use crate::data::{convert_strokes, format_point_cloud, format_strokes, synth_sparse, PointCloudSample, SynthStyle};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GenSynth {
    pub d: usize,
    pub size: usize,
    pub style: String,
    pub count: usize,
    pub vertices: usize,
    pub p: f64,
    pub seed: u64,
}

impl Default for GenSynth {
    fn default() -> Self {
        GenSynth {
            d: 2,
            size: 16,
            style: "polyline".into(),
            count: 8,
            vertices: 4,
            p: 0.1,
            seed: 0,
        }
    }
}

/// Writes `count` synthetic samples as point-cloud records: integer cell
/// coordinates, no features, and the half-space site labels. Returns the
/// number of samples written.
pub fn gen_synth(opts: &GenSynth, out: &Path) -> Result<usize> {
    if opts.count == 0 {
        return Err(Error::Config("count must be positive".into()));
    }
    let style = SynthStyle::by_name(&opts.style, opts.vertices, opts.p)?;
    let mut text = String::new();
    for i in 0..opts.count {
        let s = synth_sparse(opts.d, opts.size, style, mix(opts.seed, 3, i as u64))?;
        let coords = s.tensor.sites().coords();
        let cloud = PointCloudSample {
            d: opts.d,
            points: coords.iter().map(|c| c.spatial(opts.d).iter().map(|&v| v as f64).collect()).collect(),
            features: vec![Vec::new(); coords.len()],
            labels: s.site_labels.iter().map(|&l| Some(l)).collect(),
        };
        text.push_str(&format_point_cloud(&cloud));
    }
    write_atomic(out, text.as_bytes())?;
    Ok(opts.count)
}

/// Converts a foreign stroke file to the native stroke format. Returns the
/// detected source name and the number of samples.
pub fn convert_strokes_file(input: &Path, out: &Path) -> Result<(&'static str, usize)> {
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let (name, samples) = convert_strokes(&text)?;
    write_atomic(out, format_strokes(&samples).as_bytes())?;
    Ok((name, samples.len()))
}
