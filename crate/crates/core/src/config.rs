//! Run configuration: `key = value` lines with `#` comments.
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `train`, `test` | dataset paths | none |
//! | `format` | `strokes` or `points` | `strokes` |
//! | `d` | spatial dimension | 2 |
//! | `grid` | lattice extent per axis | 16 |
//! | `resolution` | voxel edge for point clouds | 1 |
//! | `k`, `growth`, `block`, `scales`, `mode`, `factor`, `in_channels` | network | `8`, `doubling`, `ssc`, `2`, `to_point`, none, `1` |
//! | `optimizer`, `lr`, `momentum` | optimizer | `adam`, `0.001`, `0.9` |
//! | `mse_weight`, `sparsifier_weights`, `monochrome` | loss | `1`, all ones, `false` |
//! | `augment`, `rotation_deg`, `scale_min`, `scale_max`, `shear`, `translation` | augmentation | `false`, `15`, `0.85`, `1.15`, `0`, `0.1` |
//! | `epochs`, `steps`, `batch_size`, `seed` | schedule | `1`, `0` (use epochs), `8`, `0` |
//! | `head`, `protocol`, `classes`, `hidden`, `latent_blocks`, `shape_context_levels`, `shape_context_hidden`, `burn_in` | heads | `linear`, `unsupervised`, `10`, `512`, `0`, `4`, `64`, `100` |
//! | `encoder` | autoencoder checkpoint for `train-head` | none |
//! | `log` | per-step training log | `<out>.log` |

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::autograd::{LossWeights, OptimConfig};
use crate::data::{AffineConfig, LoadOptions};
use crate::error::{Error, Result};
use crate::models::{HeadConfig, NetworkSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    /// Encoder from an autoencoder checkpoint, frozen.
    Unsupervised,
    /// Randomly initialized encoder with batch-norm burn-in, frozen.
    Untrained,
    /// Encoder and head trained jointly from scratch.
    Supervised,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub encoder: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub format: String,
    pub grid: usize,
    pub resolution: f64,
    pub spec: NetworkSpec,
    pub optimizer: String,
    pub optim: OptimConfig,
    pub loss: LossWeights,
    pub augment: bool,
    pub affine: AffineConfig,
    pub epochs: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub head: String,
    pub protocol: Protocol,
    pub head_cfg: HeadConfig,
    pub burn_in: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: None,
            test: None,
            encoder: None,
            log: None,
            format: "strokes".into(),
            grid: 16,
            resolution: 1.0,
            spec: NetworkSpec::default(),
            optimizer: "adam".into(),
            optim: OptimConfig::default(),
            loss: LossWeights::default(),
            augment: false,
            affine: AffineConfig::planar(),
            epochs: 1,
            steps: 0,
            batch_size: 8,
            seed: 0,
            head: "linear".into(),
            protocol: Protocol::Unsupervised,
            head_cfg: HeadConfig::default(),
            burn_in: 100,
        }
    }
}

fn bad(key: &str, v: &str, why: &str) -> Error {
    Error::Config(format!("{key} = {v}: {why}"))
}

fn positive<T: std::str::FromStr + PartialOrd + Default>(key: &str, v: &str) -> Result<T> {
    let x: T = v.parse().map_err(|_| bad(key, v, "not a number"))?;
    if x > T::default() {
        Ok(x)
    } else {
        Err(bad(key, v, "must be positive"))
    }
}

fn number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v, "not a number"))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, v, "expected true or false")),
    }
}

impl RunConfig {
    /// Parses `text` over the defaults, then validates.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let mut spec = self.spec.to_map();
        match key {
            "train" => self.train = Some(v.into()),
            "test" => self.test = Some(v.into()),
            "encoder" => self.encoder = Some(v.into()),
            "log" => self.log = Some(v.into()),
            "format" => self.format = v.into(),
            "grid" => self.grid = positive(key, v)?,
            "resolution" => self.resolution = positive(key, v)?,
            "d" | "k" | "in_channels" | "scales" | "block" | "growth" | "mode" => {
                spec.insert(key.into(), v.into());
                self.spec = NetworkSpec::from_map(&spec).map_err(|e| bad(key, v, &e.to_string()))?;
            }
            "factor" => {
                let f: usize = positive(key, v)?;
                if !f.is_power_of_two() || f < 2 {
                    return Err(bad(key, v, "must be a power of two, at least 2"));
                }
                spec.insert("mode".into(), "fixed_factor".into());
                spec.insert("scales".into(), f.trailing_zeros().to_string());
                self.spec = NetworkSpec::from_map(&spec).map_err(|e| bad(key, v, &e.to_string()))?;
            }
            "optimizer" => self.optimizer = v.into(),
            "lr" => self.optim.lr = positive(key, v)?,
            "momentum" => {
                self.optim.momentum = number(key, v)?;
                if !(0.0..1.0).contains(&self.optim.momentum) {
                    return Err(bad(key, v, "must lie in [0, 1)"));
                }
            }
            "mse_weight" => self.loss.mse = number(key, v)?,
            "sparsifier_weights" => {
                self.loss.sparsifiers = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| number(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "monochrome" => self.loss.monochrome = flag(key, v)?,
            "augment" => self.augment = flag(key, v)?,
            "rotation_deg" => self.affine.rotation = number::<f64>(key, v)?.to_radians(),
            "scale_min" => self.affine.scale.0 = positive(key, v)?,
            "scale_max" => self.affine.scale.1 = positive(key, v)?,
            "shear" => self.affine.shear = number(key, v)?,
            "translation" => self.affine.translation = number(key, v)?,
            "epochs" => self.epochs = number(key, v)?,
            "steps" => self.steps = number(key, v)?,
            "batch_size" => self.batch_size = positive(key, v)?,
            "seed" => self.seed = number(key, v)?,
            "head" => self.head = v.into(),
            "protocol" => {
                self.protocol = match v {
                    "unsupervised" => Protocol::Unsupervised,
                    "untrained" => Protocol::Untrained,
                    "supervised" => Protocol::Supervised,
                    _ => return Err(bad(key, v, "expected unsupervised, untrained or supervised")),
                }
            }
            "classes" => self.head_cfg.classes = positive(key, v)?,
            "hidden" => self.head_cfg.hidden = positive(key, v)?,
            "latent_blocks" => self.head_cfg.latent_blocks = number(key, v)?,
            "shape_context_levels" => self.head_cfg.shape_context_levels = positive(key, v)?,
            "shape_context_hidden" => self.head_cfg.shape_context_hidden = positive(key, v)?,
            "burn_in" => self.burn_in = number(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.affine.scale.0 > self.affine.scale.1 {
            return Err(Error::Config("scale_min exceeds scale_max".into()));
        }
        if self.affine.rotation < 0.0 || self.affine.shear < 0.0 || self.affine.translation < 0.0 {
            return Err(Error::Config("augmentation bounds must be non-negative".into()));
        }
        if self.loss.mse < 0.0 || self.loss.sparsifiers.iter().any(|&w| w < 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.epochs == 0 && self.steps == 0 {
            return Err(Error::Config("one of epochs or steps must be positive".into()));
        }
        if self.format == "strokes" && self.spec.d != 2 {
            return Err(Error::Config("stroke data needs d = 2".into()));
        }
        Ok(())
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            d: self.spec.d,
            grid: self.grid,
            resolution: self.resolution,
            origin: None,
        }
    }

    /// Every setting as `key=value` pairs, for reports.
    pub fn summary(&self) -> BTreeMap<String, String> {
        let mut m = self.spec.to_map();
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        m.insert("train".into(), path(&self.train));
        m.insert("test".into(), path(&self.test));
        m.insert("format".into(), self.format.clone());
        m.insert("grid".into(), self.grid.to_string());
        m.insert("optimizer".into(), self.optimizer.clone());
        m.insert("lr".into(), self.optim.lr.to_string());
        m.insert("epochs".into(), self.epochs.to_string());
        m.insert("steps".into(), self.steps.to_string());
        m.insert("batch_size".into(), self.batch_size.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("monochrome".into(), self.loss.monochrome.to_string());
        m.insert("augment".into(), self.augment.to_string());
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file() {
        let c = RunConfig::parse(
            "# demo\ntrain = a.txt\nk = 4  # base width\nfactor = 16\nlr=0.01\nmonochrome = true\nsparsifier_weights = 1, 0.5\n",
        )
        .unwrap();
        assert_eq!(c.spec.k, 4);
        assert_eq!(c.spec.scales, 4);
        assert_eq!(c.spec.mode, crate::models::LatentMode::FixedFactor);
        assert_eq!(c.optim.lr, 0.01);
        assert!(c.loss.monochrome);
        assert_eq!(c.loss.sparsifiers, vec![1.0, 0.5]);
        assert_eq!(c.train, Some(PathBuf::from("a.txt")));
    }

    #[test]
    fn rejects_bad_values() {
        for text in ["k = 0", "lr = -1", "grid = x", "nonsense = 1", "factor = 12", "momentum = 1.5", "k 4", "d = 3"] {
            let e = RunConfig::parse(text).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{text}: {e}");
        }
        assert!(RunConfig::parse("d = 3\nformat = points").is_ok());
    }
}
