//! Handwriting strokes: text format, line drawing and rasterization.
//!
//! One sample per line: `<label>;<x,y> <x,y> ...|<x,y> ...`. Strokes are
//! separated by `|`, points by whitespace, coordinates by a comma.

use std::collections::BTreeSet;

use crate::data::Affine;
use crate::error::{Error, Result};
use crate::tensor::{Coord, Geometry, SparseTensor};

#[derive(Clone, Debug, PartialEq)]
pub struct StrokeSample {
    pub label: usize,
    pub strokes: Vec<Vec<[f64; 2]>>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Parses every non-blank line not starting with `#`.
pub fn parse_strokes(text: &str) -> Result<Vec<StrokeSample>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let (label, body) = s
            .split_once(';')
            .ok_or_else(|| parse_err(line, "missing ';' after label"))?;
        let label = label
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("bad label {:?}", label.trim())))?;
        let mut strokes = Vec::new();
        for seg in body.split('|') {
            let mut pts = Vec::new();
            for tok in seg.split_whitespace() {
                let (x, y) = tok
                    .split_once(',')
                    .ok_or_else(|| parse_err(line, format!("point {tok:?} is not x,y")))?;
                let num = |v: &str| -> Result<f64> {
                    let f: f64 = v.parse().map_err(|_| parse_err(line, format!("bad coordinate {v:?}")))?;
                    if f.is_finite() {
                        Ok(f)
                    } else {
                        Err(parse_err(line, format!("non-finite coordinate {v:?}")))
                    }
                };
                pts.push([num(x)?, num(y)?]);
            }
            if pts.is_empty() {
                return Err(parse_err(line, "empty stroke"));
            }
            strokes.push(pts);
        }
        out.push(StrokeSample { label, strokes });
    }
    Ok(out)
}

pub fn format_strokes(samples: &[StrokeSample]) -> String {
    let mut s = String::new();
    for sample in samples {
        s.push_str(&sample.label.to_string());
        s.push(';');
        let strokes: Vec<String> = sample
            .strokes
            .iter()
            .map(|st| st.iter().map(|p| format!("{},{}", p[0], p[1])).collect::<Vec<_>>().join(" "))
            .collect();
        s.push_str(&strokes.join("|"));
        s.push('\n');
    }
    s
}

/// Cells of the 8-connected integer line from `a` to `b`, both included.
pub fn line_cells(a: [i64; 2], b: [i64; 2]) -> Vec<[i64; 2]> {
    let (dx, dy) = ((b[0] - a[0]).abs(), -(b[1] - a[1]).abs());
    let (sx, sy) = ((b[0] - a[0]).signum(), (b[1] - a[1]).signum());
    let mut err = dx + dy;
    let mut p = a;
    let mut cells = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        cells.push(p);
        if p == b {
            return cells;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            p[0] += sx;
        }
        if e2 <= dx {
            err += dx;
            p[1] += sy;
        }
    }
}

/// Points scaled (aspect-preserving, centred) into `[0, grid - 1]^2`.
/// A sample whose points all coincide maps to the grid centre.
pub fn fit_to_grid(sample: &StrokeSample, grid: usize) -> Result<Vec<Vec<[f64; 2]>>> {
    let pts = sample.strokes.iter().flatten();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut any = false;
    for p in pts {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(Error::DegenerateSample("non-finite coordinate".into()));
        }
        any = true;
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    if !any {
        return Err(Error::DegenerateSample("sample has no points".into()));
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let side = (grid - 1) as f64;
    let scale = if span > 0.0 { side / span } else { 0.0 };
    let offset: Vec<f64> = (0..2).map(|a| (side - (hi[a] - lo[a]) * scale) / 2.0).collect();
    Ok(sample
        .strokes
        .iter()
        .map(|st| {
            st.iter()
                .map(|p| [(p[0] - lo[0]) * scale + offset[0], (p[1] - lo[1]) * scale + offset[1]])
                .collect()
        })
        .collect())
}

pub fn rasterize(sample: &StrokeSample, grid: usize) -> Result<SparseTensor> {
    rasterize_with(sample, grid, None)
}

/// Rasterizes with an optional transform applied in grid units about the
/// grid centre; cells falling outside the grid are clipped.
pub fn rasterize_with(sample: &StrokeSample, grid: usize, affine: Option<&Affine>) -> Result<SparseTensor> {
    if grid < 8 {
        return Err(Error::BadGeometry(format!("raster grid {grid} is smaller than 8")));
    }
    let side = (grid - 1) as f64;
    let centre = [side / 2.0, side / 2.0];
    let mut cells = BTreeSet::new();
    for stroke in fit_to_grid(sample, grid)? {
        let pts: Vec<[i64; 2]> = stroke
            .iter()
            .map(|p| {
                let q = match affine {
                    Some(a) => {
                        let v = a.apply(p, &centre, grid as f64);
                        [v[0], v[1]]
                    }
                    None => *p,
                };
                [q[0].round() as i64, q[1].round() as i64]
            })
            .collect();
        let mut draw = |c: [i64; 2]| {
            if (0..grid as i64).contains(&c[0]) && (0..grid as i64).contains(&c[1]) {
                cells.insert(c);
            }
        };
        if pts.len() == 1 {
            draw(pts[0]);
        }
        for w in pts.windows(2) {
            line_cells(w[0], w[1]).into_iter().for_each(&mut draw);
        }
    }
    let rows = cells
        .into_iter()
        .map(|c| (Coord::new(0, &[c[0] as i32, c[1] as i32]), vec![1.0]))
        .collect();
    SparseTensor::build(Geometry::cube(2, grid), 1, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_example() {
        let s = parse_strokes("7;0,0 10,10|10,0 0,10\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].label, 7);
        assert_eq!(s[0].strokes, vec![vec![[0.0, 0.0], [10.0, 10.0]], vec![[10.0, 0.0], [0.0, 10.0]]]);
        assert_eq!(parse_strokes(&format_strokes(&s)).unwrap(), s);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let e = parse_strokes("1;0,0 1,1\n\n2;0,0||1,1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        assert!(matches!(parse_strokes("x;0,0"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_strokes("1 0,0"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_strokes("1;0,0 1"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn horizontal_line() {
        assert_eq!(line_cells([0, 0], [3, 0]), vec![[0, 0], [1, 0], [2, 0], [3, 0]]);
        assert_eq!(line_cells([2, 2], [2, 2]), vec![[2, 2]]);
    }

    #[test]
    fn single_dot_at_centre() {
        let s = StrokeSample { label: 0, strokes: vec![vec![[5.0, -3.0]]] };
        let t = rasterize(&s, 9).unwrap();
        assert_eq!(t.num_active(), 1);
        assert_eq!(t.sites().coords()[0], Coord::new(0, &[4, 4]));
    }

    #[test]
    fn degenerate_and_small_grid() {
        let empty = StrokeSample { label: 0, strokes: vec![] };
        assert!(matches!(rasterize(&empty, 16), Err(Error::DegenerateSample(_))));
        let s = StrokeSample { label: 0, strokes: vec![vec![[0.0, 0.0], [1.0, 1.0]]] };
        assert!(matches!(rasterize(&s, 4), Err(Error::BadGeometry(_))));
    }
}
