//! Workflows behind the command-line interface.
//!
//! Every workflow is deterministic given its configuration: sample order,
//! augmentations and initial weights all derive from `seed`.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::data::{random_affine, AffineConfig, Dataset, FormatRegistry, PointMap};
use crate::error::{Error, Result};
use crate::tensor::SparseTensor;

pub mod autoencoder;
pub mod classifier;
pub mod tools;

pub use autoencoder::{autoencoder_step, evaluate_autoencoder, load_autoencoder, reconstruct, train_autoencoder, AeEvalReport, AeTrainSummary};
pub use classifier::{evaluate_classifier, train_head, ClassReport, Classifier, HeadTrainSummary};
pub use tools::{convert_strokes_file, gen_synth, GenSynth};

/// SplitMix64 finalizer over three words.
pub fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Minibatch schedule: a fresh seeded permutation per epoch.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub samples: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub total_steps: usize,
}

impl Schedule {
    pub fn new(cfg: &RunConfig, samples: usize) -> Self {
        let per_epoch = samples.div_ceil(cfg.batch_size);
        Schedule {
            samples,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
            total_steps: if cfg.steps > 0 { cfg.steps } else { cfg.epochs * per_epoch },
        }
    }

    pub fn per_epoch(&self) -> usize {
        self.samples.div_ceil(self.batch_size)
    }

    pub fn order(&self, epoch: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.samples).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(self.seed, 1, epoch as u64)));
        idx
    }

    /// `(epoch, sample indices)` of step `step`.
    pub fn batch(&self, step: usize) -> (usize, Vec<usize>) {
        let epoch = step / self.per_epoch();
        let b = step % self.per_epoch();
        let order = self.order(epoch);
        let end = ((b + 1) * self.batch_size).min(self.samples);
        (epoch, order[b * self.batch_size..end].to_vec())
    }

    pub fn ends_epoch(&self, step: usize) -> bool {
        (step + 1) % self.per_epoch() == 0 || step + 1 == self.total_steps
    }
}

/// A realized minibatch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub tensor: SparseTensor,
    pub labels: Vec<Option<usize>>,
    /// Per tensor row; `None` where the sample has no site labels.
    pub site_labels: Vec<Option<usize>>,
    pub has_site_labels: bool,
    /// Per sample, for point clouds.
    pub points: Vec<Option<PointMap>>,
    /// First tensor row of each sample.
    pub row_offsets: Vec<usize>,
}

/// Realizes `idx` and stacks it; with `augment`, sample `i` of epoch `e`
/// uses the transform seeded by `(seed, e, i)`.
pub fn realize_batch(ds: &Dataset, idx: &[usize], augment: Option<(&AffineConfig, u64, usize)>) -> Result<Batch> {
    let parts = idx
        .par_iter()
        .map(|&i| {
            let affine = augment.map(|(cfg, seed, epoch)| random_affine(ds.d, cfg, mix(seed, 2 + epoch as u64, i as u64)));
            ds.samples[i].realize(affine.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;
    let tensors: Vec<&SparseTensor> = parts.iter().map(|p| &p.tensor).collect();
    let tensor = SparseTensor::batch(&tensors)?;
    let mut site_labels = Vec::with_capacity(tensor.num_active());
    let mut row_offsets = Vec::with_capacity(parts.len());
    for p in &parts {
        row_offsets.push(site_labels.len());
        match &p.site_labels {
            Some(l) => site_labels.extend_from_slice(l),
            None => site_labels.extend(std::iter::repeat(None).take(p.tensor.num_active())),
        }
    }
    Ok(Batch {
        tensor,
        labels: idx.iter().map(|&i| ds.samples[i].label()).collect(),
        has_site_labels: parts.iter().any(|p| p.site_labels.is_some()),
        site_labels,
        points: parts.into_iter().map(|p| p.points).collect(),
        row_offsets,
    })
}

/// Consecutive unaugmented batches covering the dataset in file order.
pub fn sequential_batches(ds: &Dataset, batch_size: usize) -> impl Iterator<Item = Result<Batch>> + '_ {
    (0..ds.len())
        .step_by(batch_size)
        .map(move |s| realize_batch(ds, &(s..(s + batch_size).min(ds.len())).collect::<Vec<_>>(), None))
}

pub fn load_dataset(cfg: &RunConfig, path: Option<&Path>, what: &str) -> Result<Dataset> {
    let path = path.ok_or_else(|| Error::Config(format!("no {what} dataset given")))?;
    FormatRegistry::standard().load(&cfg.format, path, &cfg.load_options())
}

/// Step log writer; the file is created on the first line.
pub struct StepLog {
    path: PathBuf,
    file: Option<std::io::BufWriter<std::fs::File>>,
}

impl StepLog {
    pub fn new(path: PathBuf) -> Self {
        StepLog { path, file: None }
    }

    pub fn line(&mut self, line: &str) -> Result<()> {
        if self.file.is_none() {
            let f = std::fs::File::create(&self.path).map_err(|e| Error::io(&self.path, e))?;
            self.file = Some(std::io::BufWriter::new(f));
        }
        let f = self.file.as_mut().unwrap();
        writeln!(f, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(f) = self.file.as_mut() {
            f.flush().map_err(|e| Error::io(&self.path, e))?;
        }
        Ok(())
    }
}

pub fn log_path(cfg: &RunConfig, out: &Path) -> PathBuf {
    cfg.log.clone().unwrap_or_else(|| {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".log");
        out.with_file_name(name)
    })
}

/// Writes `key=value` lines to the command's standard output.
pub fn emit(w: &mut dyn Write, pairs: &[(&str, String)]) -> Result<()> {
    let line: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(w, "{}", line.join(" ")).map_err(|e| Error::io("<stdout>", e))
}

/// Writes `text` to `path` via a sibling temporary and a rename.
pub fn write_atomic(path: &Path, text: &[u8]) -> Result<()> {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_covers_each_epoch() {
        let cfg = RunConfig {
            batch_size: 3,
            epochs: 2,
            ..Default::default()
        };
        let s = Schedule::new(&cfg, 7);
        assert_eq!(s.total_steps, 6);
        let mut seen: Vec<usize> = (0..3).flat_map(|st| s.batch(st).1).collect();
        seen.sort();
        assert_eq!(seen, (0..7).collect::<Vec<_>>());
        assert!(s.ends_epoch(2) && !s.ends_epoch(1));
        assert_ne!(s.order(0), s.order(1));
        assert_eq!(s.batch(4), s.batch(4));
    }
}
