//! Autoencoder training, evaluation and reconstruction export.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autograd::{
    hierarchical_loss, hierarchical_loss_seeds, mse_loss, optimizer_by_name, Gradients, LossReport, LossWeights,
    ParamStore,
};
use crate::checkpoint::Checkpoint;
use crate::commands::{emit, load_dataset, log_path, realize_batch, sequential_batches, Schedule, StepLog};
use crate::config::RunConfig;
use crate::data::{format_point_cloud, Dataset, PointCloudSample};
use crate::error::{Error, Result};
use crate::layers::{Builder, Context, Mode, SparsifierRecord, SparsifyPolicy};
use crate::metrics::{pattern_confusion, PatternConfusion};
use crate::models::Autoencoder;
use crate::tensor::{Sites, SparseTensor};

/// Loss, parameter gradients and sparsifier decisions of one training pass.
pub struct StepOutcome {
    pub report: LossReport,
    pub grads: Gradients,
    pub confusion: PatternConfusion,
}

fn records_confusion(records: &[SparsifierRecord]) -> PatternConfusion {
    let mut c = PatternConfusion::default();
    for r in records {
        let (tp, fp, fn_) = r.confusion();
        c += PatternConfusion { tp, fp, fn_ };
    }
    c
}

/// One train-mode pass with the hierarchical loss and its gradients.
pub fn autoencoder_step(ae: &Autoencoder, store: &mut ParamStore, x: SparseTensor, weights: &LossWeights) -> Result<StepOutcome> {
    let mut cx = Context::new(store, Mode::Train);
    let nodes = ae.forward(x, &mut cx)?;
    let traces = cx.sparsified.clone();
    let inputs: Vec<&SparseTensor> = traces.iter().map(|t| cx.value(t.input)).collect();
    let (report, seeds) = hierarchical_loss_seeds(
        cx.value(nodes.input),
        (nodes.output, cx.value(nodes.output)),
        &traces,
        &inputs,
        weights,
    )?;
    let grads = cx.tape.backward(seeds, cx.store);
    let records: Vec<SparsifierRecord> = traces.into_iter().map(|t| t.record).collect();
    Ok(StepOutcome {
        report,
        grads,
        confusion: records_confusion(&records),
    })
}

fn check_data(cfg: &RunConfig, ds: &Dataset) -> Result<()> {
    let first = ds.samples[0].realize(None)?;
    if first.tensor.channels() != cfg.spec.in_channels {
        return Err(Error::Config(format!(
            "in_channels = {} but the data has {} channels",
            cfg.spec.in_channels,
            first.tensor.channels()
        )));
    }
    cfg.spec
        .check_input(first.tensor.spatial_size())
        .map_err(|e| Error::Config(format!("grid = {}: {e}", cfg.grid)))
}

#[derive(Clone, Debug, Serialize)]
pub struct AeTrainSummary {
    pub steps: usize,
    pub last: LossReport,
    pub eval: AeEvalReport,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

pub fn train_autoencoder(cfg: &RunConfig, out: &Path, w: &mut dyn Write) -> Result<AeTrainSummary> {
    let ds = load_dataset(cfg, cfg.train.as_deref(), "training")?;
    check_data(cfg, &ds)?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ae = Autoencoder::build(
        &cfg.spec,
        &mut Builder {
            store: &mut store,
            rng: &mut rng,
            d: cfg.spec.d,
        },
    )?;
    let mut opt = optimizer_by_name(&cfg.optimizer, cfg.optim.clone())?;
    let ids = store.trainable();
    let schedule = Schedule::new(cfg, ds.len());
    let log = log_path(cfg, out);
    let mut steplog = StepLog::new(log.clone());
    let mut last = None;
    let (mut epoch_loss, mut epoch_mse, mut epoch_steps) = (0.0, 0.0, 0);
    let mut epoch_conf = PatternConfusion::default();
    for step in 0..schedule.total_steps {
        let (epoch, idx) = schedule.batch(step);
        let aug = cfg.augment.then_some((&cfg.affine, cfg.seed, epoch));
        let batch = realize_batch(&ds, &idx, aug)?;
        let s = autoencoder_step(&ae, &mut store, batch.tensor, &cfg.loss)?;
        opt.step(&mut store, &s.grads.params, &ids);
        let mut line = format!("step={} loss={} mse={}", step + 1, s.report.total, s.report.mse);
        for (i, (_, l)) in s.report.sparsifier_losses.iter().enumerate() {
            line.push_str(&format!(" sp{i}={l}"));
        }
        steplog.line(&line)?;
        epoch_loss += s.report.total;
        epoch_mse += s.report.mse;
        epoch_steps += 1;
        epoch_conf += s.confusion;
        if schedule.ends_epoch(step) {
            emit(
                w,
                &[
                    ("epoch", (epoch + 1).to_string()),
                    ("loss", (epoch_loss / epoch_steps as f64).to_string()),
                    ("mse", (epoch_mse / epoch_steps as f64).to_string()),
                    ("pattern_acc", epoch_conf.accuracy().to_string()),
                ],
            )?;
            (epoch_loss, epoch_mse, epoch_steps) = (0.0, 0.0, 0);
            epoch_conf = PatternConfusion::default();
        }
        last = Some(s.report);
    }
    steplog.finish()?;
    let last = last.ok_or_else(|| Error::Config("no training steps scheduled".into()))?;
    let eval = evaluate_autoencoder(&ae, &mut store, &ds, cfg.batch_size, &cfg.loss)?;
    let mut ck = Checkpoint::default();
    ck.set_spec(&cfg.spec);
    ck.meta.insert("kind".into(), "autoencoder".into());
    ck.meta.insert("seed".into(), cfg.seed.to_string());
    ck.meta.insert("step".into(), schedule.total_steps.to_string());
    ck.meta.insert("format".into(), cfg.format.clone());
    ck.meta.insert("grid".into(), cfg.grid.to_string());
    ck.meta.insert("resolution".into(), cfg.resolution.to_string());
    ck.meta.insert("monochrome".into(), cfg.loss.monochrome.to_string());
    ck.put_params(&store);
    ck.put_optimizer(opt.as_ref(), &store);
    ck.save(out)?;
    emit(
        w,
        &[
            ("steps", schedule.total_steps.to_string()),
            ("train_mse", eval.mse.to_string()),
            ("train_pattern_acc", eval.teacher_forced_accuracy.to_string()),
            ("decoded_pattern_acc", eval.decoded_accuracy.to_string()),
            ("checkpoint", out.display().to_string()),
        ],
    )?;
    Ok(AeTrainSummary {
        steps: schedule.total_steps,
        last,
        eval,
        checkpoint: out.to_path_buf(),
        log,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AeEvalReport {
    pub samples: usize,
    pub active_sites: usize,
    pub mean_occupancy: f64,
    /// Reconstruction MSE with sparsifiers copying the encoder patterns.
    pub mse: f64,
    /// Hierarchical loss of the same pass, averaged over batches.
    pub loss: f64,
    /// Sparsifier decisions (first channel > 0) against the encoder patterns.
    pub teacher_forced: PatternConfusion,
    pub teacher_forced_accuracy: f64,
    /// Free-running decoding: final active set against the input's.
    pub decoded: PatternConfusion,
    pub decoded_accuracy: f64,
    /// Free-running decoding per pattern level.
    pub decoded_levels: Vec<PatternConfusion>,
}

/// Eval-mode statistics over `ds` in file order.
pub fn evaluate_autoencoder(
    ae: &Autoencoder,
    store: &mut ParamStore,
    ds: &Dataset,
    batch_size: usize,
    weights: &LossWeights,
) -> Result<AeEvalReport> {
    let mut active = 0;
    let mut occupancy = 0.0;
    let mut sq = 0.0;
    let mut loss = 0.0;
    let mut batches = 0;
    let mut tf = PatternConfusion::default();
    let mut dec = PatternConfusion::default();
    let mut levels: Vec<PatternConfusion> = Vec::new();
    for batch in sequential_batches(ds, batch_size) {
        let x = batch?.tensor;
        let n = x.num_active();
        active += n;
        occupancy += x.occupancy() * x.geometry().batch_count as f64;
        batches += 1;
        {
            let mut cx = Context::new(store, Mode::Eval);
            cx.sparsify = SparsifyPolicy::Pattern;
            let nodes = ae.forward(x.clone(), &mut cx)?;
            let records: Vec<SparsifierRecord> = cx.sparsified.iter().map(|t| t.record.clone()).collect();
            let out = cx.value(nodes.output);
            sq += mse_loss(&x, out)? * n as f64;
            loss += hierarchical_loss(&x, out, &records, weights)?.total;
            tf += records_confusion(&records);
        }
        let mut cx = Context::new(store, Mode::Eval);
        let nodes = ae.forward(x.clone(), &mut cx)?;
        dec += pattern_confusion(cx.value(nodes.output).sites(), x.sites());
        for (level, sites) in &cx.decoded {
            if levels.len() <= *level {
                levels.resize(level + 1, PatternConfusion::default());
            }
            levels[*level] += pattern_confusion(sites, cx.patterns.level(*level)?);
        }
    }
    Ok(AeEvalReport {
        samples: ds.len(),
        active_sites: active,
        mean_occupancy: occupancy / ds.len() as f64,
        mse: sq / active.max(1) as f64,
        loss: loss / batches.max(1) as f64,
        teacher_forced_accuracy: tf.accuracy(),
        teacher_forced: tf,
        decoded_accuracy: dec.accuracy(),
        decoded: dec,
        decoded_levels: levels,
    })
}

/// Site classes in reconstruction dumps.
pub const TRUE_POSITIVE: usize = 0;
pub const FALSE_POSITIVE: usize = 1;
pub const FALSE_NEGATIVE: usize = 2;

fn confusion_cloud(pred: &SparseTensor, truth: &Sites, features: bool) -> PointCloudSample {
    let d = truth.d();
    let nf = if features { pred.channels() } else { 0 };
    let mut rows: Vec<(Vec<i32>, Vec<f64>, usize)> = Vec::new();
    for (r, c) in pred.sites().coords().iter().enumerate() {
        let class = if truth.contains(c) { TRUE_POSITIVE } else { FALSE_POSITIVE };
        let f = if features { pred.row(r).to_vec() } else { Vec::new() };
        rows.push((c.spatial(d).to_vec(), f, class));
    }
    for c in truth.coords() {
        if !pred.sites().contains(c) {
            rows.push((c.spatial(d).to_vec(), vec![0.0; nf], FALSE_NEGATIVE));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    PointCloudSample {
        d,
        points: rows.iter().map(|r| r.0.iter().map(|&v| v as f64).collect()).collect(),
        features: rows.iter().map(|r| r.1.clone()).collect(),
        labels: rows.iter().map(|r| Some(r.2)).collect(),
    }
}

/// Free-running reconstructions of every sample as point-cloud records:
/// per sample the output level (with features) and every coarser decoded
/// level, each site labelled 0 = true positive, 1 = false positive,
/// 2 = false negative against the encoder pattern. Coordinates are lattice
/// cells.
pub fn reconstruct(ae: &Autoencoder, store: &mut ParamStore, ds: &Dataset, w: &mut dyn Write) -> Result<Vec<PatternConfusion>> {
    let mut confusions = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let x = ds.samples[i].realize(None)?.tensor;
        let mut cx = Context::new(store, Mode::Eval);
        let nodes = ae.forward(x.clone(), &mut cx)?;
        let out = cx.value(nodes.output);
        confusions.push(pattern_confusion(out.sites(), x.sites()));
        let mut text = format!("# sample {i} level 0 extent {:?}\n", x.spatial_size());
        text.push_str(&format_point_cloud(&confusion_cloud(out, x.sites(), true)));
        let mut decoded: Vec<&(usize, Arc<Sites>)> = cx.decoded.iter().filter(|(l, _)| *l > 0).collect();
        decoded.sort_by_key(|(l, _)| *l);
        for (level, sites) in decoded {
            let truth = cx.patterns.level(*level)?;
            let pred = SparseTensor::zeros(sites.clone(), 1);
            text.push_str(&format!("# sample {i} level {level} extent {:?}\n", truth.spatial_size()));
            text.push_str(&format_point_cloud(&confusion_cloud(&pred, truth, false)));
        }
        w.write_all(text.as_bytes()).map_err(|e| Error::io("<reconstruction>", e))?;
    }
    Ok(confusions)
}

/// Rebuilds an autoencoder and its parameters from a checkpoint.
pub fn load_autoencoder(ck: &Checkpoint) -> Result<(Autoencoder, ParamStore)> {
    if ck.meta_get("kind")? != "autoencoder" {
        return Err(Error::SpecMismatch(format!("expected an autoencoder checkpoint, got {}", ck.meta_get("kind")?)));
    }
    let spec = ck.spec()?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ae = Autoencoder::build(
        &spec,
        &mut Builder {
            store: &mut store,
            rng: &mut rng,
            d: spec.d,
        },
    )?;
    ck.load_params(&mut store, &[""])?;
    Ok((ae, store))
}
