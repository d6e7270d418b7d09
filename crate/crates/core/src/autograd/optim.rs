//! First-order optimizers, selectable by name.

use std::collections::BTreeMap;

use crate::autograd::{ParamGrads, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub momentum: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            momentum: 0.9,
        }
    }
}

pub trait Optimizer {
    fn name(&self) -> &'static str;

    /// Updates the parameters listed in `ids` in place.
    fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads, ids: &[ParamId]);

    /// Number of steps taken so far.
    fn steps(&self) -> u64;

    /// Named state buffers, keyed by the parameter names they shadow.
    fn state(&self, store: &ParamStore) -> Vec<(String, Vec<f64>)>;

    fn load_state(&mut self, store: &ParamStore, steps: u64, state: &[(String, Vec<f64>)]) -> Result<()>;
}

fn slot<'a>(bufs: &'a mut BTreeMap<ParamId, Vec<f64>>, id: ParamId, len: usize) -> &'a mut Vec<f64> {
    bufs.entry(id).or_insert_with(|| vec![0.0; len])
}

fn export(prefix: &str, bufs: &BTreeMap<ParamId, Vec<f64>>, store: &ParamStore) -> Vec<(String, Vec<f64>)> {
    bufs.iter()
        .map(|(id, v)| (format!("{prefix}.{}", store.param(*id).name), v.clone()))
        .collect()
}

fn import(prefix: &str, bufs: &mut BTreeMap<ParamId, Vec<f64>>, store: &ParamStore, state: &[(String, Vec<f64>)]) -> Result<()> {
    for (name, v) in state {
        let Some(pname) = name.strip_prefix(prefix).and_then(|n| n.strip_prefix('.')) else {
            continue;
        };
        let id = store
            .find(pname)
            .ok_or_else(|| Error::SpecMismatch(format!("optimizer state for unknown parameter {pname}")))?;
        if store.get(id).len() != v.len() {
            return Err(Error::SpecMismatch(format!("optimizer state size for {pname}")));
        }
        bufs.insert(id, v.clone());
    }
    Ok(())
}

pub struct Adam {
    cfg: OptimConfig,
    t: u64,
    m: BTreeMap<ParamId, Vec<f64>>,
    v: BTreeMap<ParamId, Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: OptimConfig) -> Self {
        Adam {
            cfg,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads, ids: &[ParamId]) {
        self.t += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for &id in ids {
            let g = grads.get(id);
            let m = slot(&mut self.m, id, g.len());
            let v = slot(&mut self.v, id, g.len());
            let p = store.get_mut(id);
            for i in 0..g.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                p[i] -= c.lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + c.eps);
            }
        }
    }

    fn steps(&self) -> u64 {
        self.t
    }

    fn state(&self, store: &ParamStore) -> Vec<(String, Vec<f64>)> {
        let mut s = export("adam.m", &self.m, store);
        s.extend(export("adam.v", &self.v, store));
        s
    }

    fn load_state(&mut self, store: &ParamStore, steps: u64, state: &[(String, Vec<f64>)]) -> Result<()> {
        self.t = steps;
        import("adam.m", &mut self.m, store, state)?;
        import("adam.v", &mut self.v, store, state)
    }
}

/// SGD with heavy-ball momentum: `v = mu v + g; p -= lr v`.
pub struct Sgd {
    cfg: OptimConfig,
    t: u64,
    velocity: BTreeMap<ParamId, Vec<f64>>,
}

impl Sgd {
    pub fn new(cfg: OptimConfig) -> Self {
        Sgd {
            cfg,
            t: 0,
            velocity: BTreeMap::new(),
        }
    }
}

impl Optimizer for Sgd {
    fn name(&self) -> &'static str {
        "sgd"
    }

    fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads, ids: &[ParamId]) {
        self.t += 1;
        for &id in ids {
            let g = grads.get(id);
            let v = slot(&mut self.velocity, id, g.len());
            let p = store.get_mut(id);
            for i in 0..g.len() {
                v[i] = self.cfg.momentum * v[i] + g[i];
                p[i] -= self.cfg.lr * v[i];
            }
        }
    }

    fn steps(&self) -> u64 {
        self.t
    }

    fn state(&self, store: &ParamStore) -> Vec<(String, Vec<f64>)> {
        export("sgd.velocity", &self.velocity, store)
    }

    fn load_state(&mut self, store: &ParamStore, steps: u64, state: &[(String, Vec<f64>)]) -> Result<()> {
        self.t = steps;
        import("sgd.velocity", &mut self.velocity, store, state)
    }
}

pub const OPTIMIZERS: &[&str] = &["adam", "sgd"];

pub fn optimizer_by_name(name: &str, cfg: OptimConfig) -> Result<Box<dyn Optimizer>> {
    match name {
        "adam" => Ok(Box::new(Adam::new(cfg))),
        "sgd" => Ok(Box::new(Sgd::new(cfg))),
        _ => Err(Error::UnknownName {
            kind: "optimizer",
            name: name.to_string(),
            known: OPTIMIZERS.join(", "),
        }),
    }
}
