//! Head training and classifier evaluation under the three protocols.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autograd::{argmax_rows, cross_entropy_masked, optimizer_by_name, ParamStore, Var};
use crate::checkpoint::Checkpoint;
use crate::commands::{emit, load_dataset, log_path, realize_batch, sequential_batches, Batch, Schedule, StepLog};
use crate::config::{Protocol, RunConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::{Builder, Context, LayerRegistry, Mode};
use crate::metrics::{classification_error, per_class_iou, IouReport};
use crate::models::{burn_in_batchnorm, BlockRegistry, Encoder, Head, HeadConfig, HeadInput, HeadRegistry, NetworkSpec, HEAD_PREFIX};
use crate::tensor::SparseTensor;

/// An optional encoder feeding a named head.
pub struct Classifier {
    pub spec: NetworkSpec,
    pub encoder: Option<Encoder>,
    pub head: Box<dyn Head>,
    pub head_name: String,
    pub head_cfg: HeadConfig,
}

impl Classifier {
    /// Heads on the latent get an encoder; raw-input heads stand alone.
    pub fn build(spec: &NetworkSpec, head: &str, cfg: &HeadConfig, b: &mut Builder) -> Result<Self> {
        let head_net = HeadRegistry::standard().build(head, spec, cfg, b)?;
        let encoder = if head_net.input() == HeadInput::Latent {
            Some(Encoder::build(spec, &LayerRegistry::standard(), &BlockRegistry::standard(), b)?)
        } else {
            None
        };
        Ok(Classifier {
            spec: spec.clone(),
            encoder,
            head: head_net,
            head_name: head.to_string(),
            head_cfg: cfg.clone(),
        })
    }

    /// Runs the network on `x`. With `frozen`, the encoder runs in eval mode
    /// in its own context and only the head is recorded for differentiation.
    pub fn forward<'s>(&self, store: &'s mut ParamStore, x: SparseTensor, mode: Mode, frozen: bool) -> Result<(Context<'s>, Var)> {
        match &self.encoder {
            Some(enc) if frozen => {
                let (latent, patterns) = {
                    let mut ecx = Context::new(store, Mode::Eval);
                    let v = ecx.input(x);
                    let z = enc.forward(v, &mut ecx)?;
                    (ecx.value(z).clone(), std::mem::take(&mut ecx.patterns))
                };
                let mut cx = Context::new(store, mode);
                cx.patterns = patterns;
                let z = cx.input(latent);
                let out = self.head.forward(z, &mut cx)?;
                Ok((cx, out))
            }
            Some(enc) => {
                let mut cx = Context::new(store, mode);
                let v = cx.input(x);
                let z = enc.forward(v, &mut cx)?;
                let out = self.head.forward(z, &mut cx)?;
                Ok((cx, out))
            }
            None => {
                let mut cx = Context::new(store, mode);
                let v = cx.input(x);
                let out = self.head.forward(v, &mut cx)?;
                Ok((cx, out))
            }
        }
    }

    /// One target per logit row: the sample label for sample-level heads,
    /// the site label for site-level heads.
    pub fn targets(&self, logits: &SparseTensor, batch: &Batch) -> Result<Vec<Option<usize>>> {
        if self.head.per_site() {
            if logits.sites() != batch.tensor.sites() {
                return Err(Error::ShapeMismatch("site-level logits do not cover the input sites".into()));
            }
            if !batch.has_site_labels {
                return Err(Error::Config(format!("the {} head needs per-site labels", self.head_name)));
            }
            Ok(batch.site_labels.clone())
        } else {
            if batch.labels.iter().all(Option::is_none) {
                return Err(Error::Config(format!("the {} head needs per-sample labels", self.head_name)));
            }
            Ok(logits
                .sites()
                .coords()
                .iter()
                .map(|c| batch.labels[c.batch as usize])
                .collect())
        }
    }

    fn put_meta(&self, ck: &mut Checkpoint) {
        ck.set_spec(&self.spec);
        let c = &self.head_cfg;
        for (k, v) in [
            ("kind", "classifier".to_string()),
            ("head", self.head_name.clone()),
            ("head.classes", c.classes.to_string()),
            ("head.hidden", c.hidden.to_string()),
            ("head.latent_blocks", c.latent_blocks.to_string()),
            ("head.shape_context_levels", c.shape_context_levels.to_string()),
            ("head.shape_context_hidden", c.shape_context_hidden.to_string()),
        ] {
            ck.meta.insert(k.into(), v);
        }
    }

    /// Rebuilds a classifier and its parameters from a checkpoint.
    pub fn load(ck: &Checkpoint) -> Result<(Self, ParamStore)> {
        if ck.meta_get("kind")? != "classifier" {
            return Err(Error::SpecMismatch(format!("expected a classifier checkpoint, got {}", ck.meta_get("kind")?)));
        }
        let num = |k: &str| -> Result<usize> {
            let v = ck.meta_get(k)?;
            v.parse().map_err(|_| Error::SpecMismatch(format!("{k} = {v}")))
        };
        let cfg = HeadConfig {
            classes: num("head.classes")?,
            hidden: num("head.hidden")?,
            latent_blocks: num("head.latent_blocks")?,
            shape_context_levels: num("head.shape_context_levels")?,
            shape_context_hidden: num("head.shape_context_hidden")?,
        };
        let spec = ck.spec()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let clf = Classifier::build(
            &spec,
            ck.meta_get("head")?,
            &cfg,
            &mut Builder {
                store: &mut store,
                rng: &mut rng,
                d: spec.d,
            },
        )?;
        ck.load_params(&mut store, &[""])?;
        Ok((clf, store))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassReport {
    pub samples: usize,
    pub per_site: bool,
    /// Rows (samples or sites) carrying a label.
    pub labelled: usize,
    /// Percentage of misclassified labelled rows.
    pub error_percent: f64,
    /// Site-level IOU, for site-level heads.
    pub iou: Option<IouReport>,
    /// Point-level IOU: each point takes its voxel's prediction.
    pub point_iou: Option<IouReport>,
    /// Points whose voxel fell outside the lattice.
    pub unmapped_points: usize,
    pub mean_occupancy: f64,
}

pub fn evaluate_classifier(clf: &Classifier, store: &mut ParamStore, ds: &Dataset, batch_size: usize) -> Result<ClassReport> {
    let classes = clf.head_cfg.classes;
    let (mut preds, mut labels) = (Vec::new(), Vec::new());
    let (mut point_preds, mut point_labels) = (Vec::new(), Vec::new());
    let mut unmapped = 0;
    let mut occupancy = 0.0;
    for batch in sequential_batches(ds, batch_size) {
        let batch = batch?;
        occupancy += batch.tensor.occupancy() * batch.labels.len() as f64;
        let (cx, out) = clf.forward(store, batch.tensor.clone(), Mode::Eval, true)?;
        let logits = cx.value(out);
        let targets = clf.targets(logits, &batch)?;
        let rows = argmax_rows(logits);
        for (p, t) in rows.iter().zip(&targets) {
            if let Some(t) = t {
                preds.push(*p);
                labels.push(*t);
            }
        }
        if clf.head.per_site() {
            for (s, points) in batch.points.iter().enumerate() {
                let Some(points) = points else { continue };
                for (label, row) in points.labels.iter().zip(&points.rows) {
                    match (label, row) {
                        (Some(l), Some(r)) => {
                            point_preds.push(rows[batch.row_offsets[s] + r]);
                            point_labels.push(*l);
                        }
                        (Some(_), None) => unmapped += 1,
                        _ => {}
                    }
                }
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let per_site = clf.head.per_site();
    Ok(ClassReport {
        samples: ds.len(),
        per_site,
        labelled: labels.len(),
        error_percent: classification_error(&preds, &labels)?,
        iou: if per_site { Some(per_class_iou(&preds, &labels, classes)?) } else { None },
        point_iou: if point_labels.is_empty() {
            None
        } else {
            Some(per_class_iou(&point_preds, &point_labels, classes)?)
        },
        unmapped_points: unmapped,
        mean_occupancy: occupancy / ds.len() as f64,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HeadTrainSummary {
    pub steps: usize,
    pub protocol: String,
    pub frozen: bool,
    /// Parameters updated by the optimizer.
    pub trained_parameters: usize,
    /// Scalar count of the head's parameters.
    pub head_parameters: usize,
    pub last_loss: f64,
    pub train: ClassReport,
    pub test: Option<ClassReport>,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

fn protocol_name(p: Protocol) -> &'static str {
    match p {
        Protocol::Unsupervised => "unsupervised",
        Protocol::Untrained => "untrained",
        Protocol::Supervised => "supervised",
    }
}

pub fn train_head(cfg: &RunConfig, out: &Path, w: &mut dyn Write) -> Result<HeadTrainSummary> {
    let ds = load_dataset(cfg, cfg.train.as_deref(), "training")?;
    let test = cfg.test.as_deref().map(|p| load_dataset(cfg, Some(p), "test")).transpose()?;
    let encoder_ck = match (cfg.protocol, cfg.encoder.as_deref()) {
        (Protocol::Unsupervised, Some(p)) => Some(Checkpoint::load(p)?),
        _ => None,
    };
    let spec = match &encoder_ck {
        Some(ck) => {
            let s = ck.spec()?;
            if s != cfg.spec {
                return Err(Error::SpecMismatch(format!("encoder checkpoint has network `{s}`, configuration has `{}`", cfg.spec)));
            }
            s
        }
        None => cfg.spec.clone(),
    };
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let clf = Classifier::build(
        &spec,
        &cfg.head,
        &cfg.head_cfg,
        &mut Builder {
            store: &mut store,
            rng: &mut rng,
            d: spec.d,
        },
    )?;
    let frozen = clf.encoder.is_some() && cfg.protocol != Protocol::Supervised;
    if let Some(enc) = &clf.encoder {
        match cfg.protocol {
            Protocol::Unsupervised => {
                let ck = encoder_ck
                    .as_ref()
                    .ok_or_else(|| Error::Config("the unsupervised protocol needs `encoder = <checkpoint>`".into()))?;
                ck.load_params(&mut store, &["encoder."])?;
            }
            Protocol::Untrained => {
                let batches = sequential_batches(&ds, cfg.batch_size)
                    .map(|b| b.map(|b| b.tensor))
                    .collect::<Result<Vec<_>>>()?;
                burn_in_batchnorm(enc, &mut store, &batches, cfg.burn_in)?;
            }
            Protocol::Supervised => {}
        }
    }
    let ids = if frozen {
        store.trainable_with_prefix(HEAD_PREFIX)
    } else {
        store.trainable()
    };
    let mut opt = optimizer_by_name(&cfg.optimizer, cfg.optim.clone())?;
    let schedule = Schedule::new(cfg, ds.len());
    let log = log_path(cfg, out);
    let mut steplog = StepLog::new(log.clone());
    let mut last_loss = f64::NAN;
    let (mut epoch_loss, mut epoch_steps, mut wrong, mut seen) = (0.0, 0, 0usize, 0usize);
    for step in 0..schedule.total_steps {
        let (epoch, idx) = schedule.batch(step);
        let aug = cfg.augment.then_some((&cfg.affine, cfg.seed, epoch));
        let batch = realize_batch(&ds, &idx, aug)?;
        let (cx, out_var) = clf.forward(&mut store, batch.tensor.clone(), Mode::Train, frozen)?;
        let logits = cx.value(out_var);
        let targets = clf.targets(logits, &batch)?;
        let (loss, grad) = cross_entropy_masked(logits, &targets)?;
        for (p, t) in argmax_rows(logits).iter().zip(&targets) {
            if let Some(t) = t {
                seen += 1;
                wrong += usize::from(p != t);
            }
        }
        let grads = cx.tape.backward(vec![(out_var, grad)], cx.store);
        drop(cx);
        opt.step(&mut store, &grads.params, &ids);
        steplog.line(&format!("step={} loss={loss}", step + 1))?;
        epoch_loss += loss;
        epoch_steps += 1;
        last_loss = loss;
        if schedule.ends_epoch(step) {
            emit(
                w,
                &[
                    ("epoch", (epoch + 1).to_string()),
                    ("loss", (epoch_loss / epoch_steps as f64).to_string()),
                    ("train_error", (100.0 * wrong as f64 / seen.max(1) as f64).to_string()),
                ],
            )?;
            (epoch_loss, epoch_steps, wrong, seen) = (0.0, 0, 0, 0);
        }
    }
    steplog.finish()?;
    if schedule.total_steps == 0 {
        return Err(Error::Config("no training steps scheduled".into()));
    }
    let train = evaluate_classifier(&clf, &mut store, &ds, cfg.batch_size)?;
    let test = test
        .as_ref()
        .map(|t| evaluate_classifier(&clf, &mut store, t, cfg.batch_size))
        .transpose()?;
    let mut ck = Checkpoint::default();
    clf.put_meta(&mut ck);
    ck.meta.insert("protocol".into(), protocol_name(cfg.protocol).into());
    ck.meta.insert("seed".into(), cfg.seed.to_string());
    ck.meta.insert("step".into(), schedule.total_steps.to_string());
    ck.meta.insert("format".into(), cfg.format.clone());
    ck.meta.insert("grid".into(), cfg.grid.to_string());
    ck.meta.insert("resolution".into(), cfg.resolution.to_string());
    ck.put_params(&store);
    ck.put_optimizer(opt.as_ref(), &store);
    ck.save(out)?;
    let head_parameters = store.count_with_prefix(HEAD_PREFIX);
    let mut pairs = vec![
        ("steps", schedule.total_steps.to_string()),
        ("protocol", protocol_name(cfg.protocol).to_string()),
        ("head_parameters", head_parameters.to_string()),
        ("train_error", train.error_percent.to_string()),
    ];
    if let Some(iou) = &train.iou {
        pairs.push(("train_iou", iou.mean.to_string()));
    }
    if let Some(t) = &test {
        pairs.push(("test_error", t.error_percent.to_string()));
        if let Some(iou) = &t.iou {
            pairs.push(("test_iou", iou.mean.to_string()));
        }
    }
    pairs.push(("checkpoint", out.display().to_string()));
    emit(w, &pairs)?;
    Ok(HeadTrainSummary {
        steps: schedule.total_steps,
        protocol: protocol_name(cfg.protocol).into(),
        frozen,
        trained_parameters: ids.len(),
        head_parameters,
        last_loss,
        train,
        test,
        checkpoint: out.to_path_buf(),
        log,
    })
}
