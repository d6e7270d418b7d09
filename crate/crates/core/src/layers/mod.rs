//! Sparse layers and the forward context they run in.
//!
//! Every layer implements [`Layer`] and is constructed by name through the
//! [`LayerRegistry`] from a declarative [`LayerSpec`]. Networks are stacks of
//! boxed layers; the [`Context`] carries the tape, the parameter store, the
//! encoder's [`PatternStack`] and whatever the sparsify layers record.

use std::collections::HashMap;
use std::sync::Arc;

use crate::autograd::{ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Sites;

pub mod basic;
pub mod conv;
pub mod norm;
pub mod registry;
pub mod residual;
pub mod rulebook;
pub mod sparsify;

pub use basic::{add, concat, Linear, Relu};
pub use conv::{conv_forward, Conv, ConvKind, ConvWeights};
pub use norm::{batchnorm_forward, BatchNorm, BatchNormState, BN_EPS, BN_MOMENTUM};
pub use registry::{Builder, LayerRegistry, LayerSpec, Sequential};
pub use residual::ResidualBlock;
pub use rulebook::{kernel_offsets, RuleKind, Rulebook};
pub use sparsify::{sparsify_test, sparsify_train, Sparsify, SparsifierRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// How sparsify layers choose which sites survive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SparsifyPolicy {
    /// Copy the encoder pattern of the same scale.
    Pattern,
    /// Keep sites whose first channel is positive.
    Threshold,
}

/// Per-scale active sets captured by the strided convolutions of an encoder,
/// with the rulebooks that produced them.
///
/// Level 0 is the input pattern; `down(i)` maps level `i` to level `i + 1`.
#[derive(Clone, Debug, Default)]
pub struct PatternStack {
    levels: Vec<Arc<Sites>>,
    downs: Vec<Arc<Rulebook>>,
}

impl PatternStack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_down(&mut self, rb: Arc<Rulebook>) -> Result<()> {
        match self.levels.last() {
            None => self.levels.push(rb.in_sites().clone()),
            Some(top) if Arc::ptr_eq(top, rb.in_sites()) || **top == **rb.in_sites() => {}
            Some(_) => {
                return Err(Error::ShapeMismatch(
                    "strided convolution input is not the current top pattern".into(),
                ))
            }
        }
        self.levels.push(rb.out_sites().clone());
        self.downs.push(rb);
        Ok(())
    }

    pub fn level(&self, i: usize) -> Result<&Arc<Sites>> {
        self.levels.get(i).ok_or(Error::MissingPattern(i))
    }

    pub fn down(&self, i: usize) -> Result<&Arc<Rulebook>> {
        self.downs.get(i).ok_or(Error::MissingPattern(i))
    }

    /// Number of stored levels, including the input level.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[Arc<Sites>] {
        &self.levels
    }
}

/// One sparsify layer's keep/drop bookkeeping, tied to its input node.
#[derive(Clone, Debug)]
pub struct SparsifyTrace {
    pub input: Var,
    pub record: SparsifierRecord,
}

/// Size bookkeeping for one executed layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRow {
    pub label: String,
    pub in_channels: usize,
    pub in_size: Vec<usize>,
    pub out_channels: usize,
    pub out_size: Vec<usize>,
}

pub struct Context<'a> {
    pub tape: Tape,
    pub store: &'a mut ParamStore,
    pub mode: Mode,
    /// Whether train-mode batch norm updates its running statistics.
    pub update_stats: bool,
    pub sparsify: SparsifyPolicy,
    pub patterns: PatternStack,
    pub sparsified: Vec<SparsifyTrace>,
    /// Active sets produced by threshold-mode sparsify layers, by level.
    pub decoded: Vec<(usize, Arc<Sites>)>,
    pub trace: Option<Vec<TraceRow>>,
    ssc_cache: HashMap<(usize, usize), Arc<Rulebook>>,
}

impl<'a> Context<'a> {
    pub fn new(store: &'a mut ParamStore, mode: Mode) -> Self {
        Context {
            tape: Tape::new(),
            store,
            mode,
            update_stats: mode == Mode::Train,
            sparsify: match mode {
                Mode::Train => SparsifyPolicy::Pattern,
                Mode::Eval => SparsifyPolicy::Threshold,
            },
            patterns: PatternStack::new(),
            sparsified: Vec::new(),
            decoded: Vec::new(),
            trace: None,
            ssc_cache: HashMap::new(),
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn input(&mut self, t: crate::tensor::SparseTensor) -> Var {
        self.tape.leaf(t)
    }

    pub fn value(&self, v: Var) -> &crate::tensor::SparseTensor {
        self.tape.value(v)
    }

    /// Submanifold rulebooks are shared by every layer on the same active set.
    pub fn submanifold_rulebook(&mut self, sites: &Arc<Sites>, f: usize) -> Result<Arc<Rulebook>> {
        let key = (Arc::as_ptr(sites) as usize, f);
        if let Some(rb) = self.ssc_cache.get(&key) {
            return Ok(rb.clone());
        }
        let rb = Arc::new(Rulebook::submanifold(sites, f)?);
        self.ssc_cache.insert(key, rb.clone());
        Ok(rb)
    }
}

/// A differentiable sparse layer.
pub trait Layer: Send + Sync {
    /// Registry name of the layer type.
    fn kind(&self) -> &'static str;

    fn forward(&self, x: Var, cx: &mut Context) -> Result<Var>;
}
