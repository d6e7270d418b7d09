//! Conversion of raw handwriting dumps to the stroke format.
//!
//! Two sources are recognised: UNIPEN-style pen traces (`.SEGMENT` lines
//! carrying the quoted label, `.PEN_DOWN`/`.PEN_UP` around coordinate lines)
//! and resampled digit vectors (16 comma-separated coordinates followed by
//! the label). Both use tablet coordinates with `y` pointing up, so `y` is
//! negated.

use crate::data::StrokeSample;
use crate::error::{Error, Result};

pub trait StrokeSource: Send + Sync {
    fn name(&self) -> &'static str;

    fn detect(&self, text: &str) -> bool;

    fn convert(&self, text: &str) -> Result<Vec<StrokeSample>>;
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub struct PenTrace;

impl StrokeSource for PenTrace {
    fn name(&self) -> &'static str {
        "pen-trace"
    }

    fn detect(&self, text: &str) -> bool {
        text.lines().any(|l| l.trim_start().starts_with(".SEGMENT"))
    }

    fn convert(&self, text: &str) -> Result<Vec<StrokeSample>> {
        let mut out: Vec<StrokeSample> = Vec::new();
        let mut current: Option<StrokeSample> = None;
        let mut pen_down = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() {
                continue;
            }
            if s.starts_with(".SEGMENT") {
                out.extend(current.take().filter(|c| !c.strokes.is_empty()));
                let label = s
                    .split('"')
                    .nth(1)
                    .and_then(|l| l.trim().parse().ok())
                    .ok_or_else(|| parse_err(line, "segment without a quoted numeric label"))?;
                current = Some(StrokeSample { label, strokes: Vec::new() });
                pen_down = false;
            } else if s.starts_with(".PEN_DOWN") {
                let c = current.as_mut().ok_or_else(|| parse_err(line, "pen down before any segment"))?;
                c.strokes.push(Vec::new());
                pen_down = true;
            } else if s.starts_with(".PEN_UP") {
                if let Some(c) = current.as_mut() {
                    if c.strokes.last().is_some_and(Vec::is_empty) {
                        c.strokes.pop();
                    }
                }
                pen_down = false;
            } else if s.starts_with('.') {
                continue;
            } else if pen_down {
                let v: Vec<f64> = s
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| parse_err(line, format!("bad coordinate {t:?}"))))
                    .collect::<Result<_>>()?;
                if v.len() < 2 {
                    return Err(parse_err(line, "coordinate line needs x and y"));
                }
                let c = current.as_mut().expect("pen down implies a segment");
                c.strokes.last_mut().expect("pen down opened a stroke").push([v[0], -v[1]]);
            }
        }
        out.extend(current.filter(|c| !c.strokes.is_empty()));
        Ok(out)
    }
}

pub struct DigitVectors;

impl StrokeSource for DigitVectors {
    fn name(&self) -> &'static str {
        "digit-vectors"
    }

    fn detect(&self, text: &str) -> bool {
        text.lines()
            .find(|l| !l.trim().is_empty())
            .is_some_and(|l| l.split(',').count() == 17)
    }

    fn convert(&self, text: &str) -> Result<Vec<StrokeSample>> {
        let mut out = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let s = raw.trim();
            if s.is_empty() {
                continue;
            }
            let v: Vec<f64> = s
                .split(',')
                .map(|t| t.trim().parse().map_err(|_| parse_err(i + 1, format!("bad field {t:?}"))))
                .collect::<Result<_>>()?;
            if v.len() != 17 {
                return Err(parse_err(i + 1, format!("expected 17 fields, found {}", v.len())));
            }
            let label = v[16];
            if label < 0.0 || label.fract() != 0.0 {
                return Err(parse_err(i + 1, format!("bad label {label}")));
            }
            let stroke = v[..16].chunks(2).map(|p| [p[0], -p[1]]).collect();
            out.push(StrokeSample {
                label: label as usize,
                strokes: vec![stroke],
            });
        }
        Ok(out)
    }
}

pub fn stroke_sources() -> Vec<Box<dyn StrokeSource>> {
    vec![Box::new(PenTrace), Box::new(DigitVectors)]
}

/// Detects the source format and converts it.
pub fn convert_strokes(text: &str) -> Result<(&'static str, Vec<StrokeSample>)> {
    for src in stroke_sources() {
        if src.detect(text) {
            return Ok((src.name(), src.convert(text)?));
        }
    }
    Err(parse_err(1, "unrecognised handwriting format"))
}
