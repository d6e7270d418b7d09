//! Seeded generators of small labelled sparse structures.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::line_cells;
use crate::error::{Error, Result};
use crate::tensor::{Coord, Geometry, SparseTensor, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SynthStyle {
    /// Random polyline through `vertices` lattice points.
    Polyline { vertices: usize },
    /// Surface of a random axis-aligned box.
    Shell,
    /// Every site independently active with probability `p`.
    Bernoulli { p: f64 },
}

impl SynthStyle {
    pub const NAMES: &'static [&'static str] = &["polyline", "shell", "random"];

    pub fn by_name(name: &str, vertices: usize, p: f64) -> Result<Self> {
        match name {
            "polyline" => Ok(SynthStyle::Polyline { vertices }),
            "shell" => Ok(SynthStyle::Shell),
            "random" => Ok(SynthStyle::Bernoulli { p }),
            _ => Err(Error::UnknownName {
                kind: "synthetic style",
                name: name.into(),
                known: Self::NAMES.join(", "),
            }),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthSample {
    /// One channel of ones on the active sites.
    pub tensor: SparseTensor,
    /// Per site: 1 in the upper half of the first axis, 0 otherwise.
    pub site_labels: Vec<usize>,
    /// Polyline vertices (empty for other styles).
    pub vertices: Vec<Vec<i32>>,
}

/// Lattice line in any dimension: `round(a + (b - a) t / n)` for the
/// largest axis difference `n`. In 2D this is the 8-connected integer line.
pub fn line_cells_nd(a: &[i32], b: &[i32]) -> Vec<[i32; MAX_DIM]> {
    if a.len() == 2 {
        return line_cells([a[0] as i64, a[1] as i64], [b[0] as i64, b[1] as i64])
            .into_iter()
            .map(|c| {
                let mut p = [0; MAX_DIM];
                p[0] = c[0] as i32;
                p[1] = c[1] as i32;
                p
            })
            .collect();
    }
    let n = a.iter().zip(b).map(|(x, y)| (y - x).abs()).max().unwrap_or(0);
    (0..=n)
        .map(|t| {
            let mut p = [0; MAX_DIM];
            for i in 0..a.len() {
                let v = a[i] as f64 + (b[i] - a[i]) as f64 * t as f64 / n.max(1) as f64;
                p[i] = v.round() as i32;
            }
            p
        })
        .collect()
}

pub fn synth_sparse(d: usize, size: usize, style: SynthStyle, seed: u64) -> Result<SynthSample> {
    let geometry = Geometry::cube(d, size);
    geometry.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells: BTreeSet<[i32; MAX_DIM]> = BTreeSet::new();
    let mut vertices = Vec::new();
    match style {
        SynthStyle::Polyline { vertices: n } => {
            if n == 0 {
                return Err(Error::BadGeometry("a polyline needs at least one vertex".into()));
            }
            vertices = (0..n)
                .map(|_| (0..d).map(|_| rng.gen_range(0..size as i32)).collect::<Vec<i32>>())
                .collect();
            if n == 1 {
                cells.extend(line_cells_nd(&vertices[0], &vertices[0]));
            }
            for w in vertices.windows(2) {
                cells.extend(line_cells_nd(&w[0], &w[1]));
            }
        }
        SynthStyle::Shell => {
            if size < 3 {
                return Err(Error::BadGeometry(format!("a shell needs extent at least 3, got {size}")));
            }
            let mut lo = [0; MAX_DIM];
            let mut hi = [0; MAX_DIM];
            for a in 0..d {
                let len = rng.gen_range(3..=size as i32);
                lo[a] = rng.gen_range(0..=size as i32 - len);
                hi[a] = lo[a] + len - 1;
            }
            for lin in 0..geometry.volume() {
                let p = geometry.delinear(lin);
                let inside = (0..d).all(|a| (lo[a]..=hi[a]).contains(&p[a]));
                let surface = (0..d).any(|a| p[a] == lo[a] || p[a] == hi[a]);
                if inside && surface {
                    cells.insert(p);
                }
            }
        }
        SynthStyle::Bernoulli { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::BadGeometry(format!("occupancy {p} outside [0, 1]")));
            }
            for lin in 0..geometry.volume() {
                if rng.gen_bool(p) {
                    cells.insert(geometry.delinear(lin));
                }
            }
        }
    }
    let half = (size / 2) as i32;
    let rows: Vec<(Coord, Vec<f64>)> = cells.iter().map(|p| (Coord::new(0, &p[..d]), vec![1.0])).collect();
    let tensor = SparseTensor::build(geometry, 1, rows)?;
    let site_labels = tensor
        .sites()
        .coords()
        .iter()
        .map(|c| usize::from(c.pos[0] >= half))
        .collect();
    Ok(SynthSample {
        tensor,
        site_labels,
        vertices,
    })
}
