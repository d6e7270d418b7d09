//! Binary checkpoints.
//!
//! Layout (little-endian): magic `SPAE`, `u32` version, `u32`-prefixed UTF-8
//! metadata blob of sorted `key=value` lines, `u32` tensor count, then per
//! tensor: `u32`-prefixed UTF-8 name, `u8` dtype code, `u32` rank, `u64`
//! dims and the raw values. Files are written to a sibling temporary and
//! renamed into place.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::autograd::{Optimizer, ParamStore};
use crate::error::{Error, Result};
use crate::models::NetworkSpec;

pub const MAGIC: &[u8; 4] = b"SPAE";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;

const PARAM: &str = "param/";
const OPTIM: &str = "optim/";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(Error::Truncated(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &'static str) -> Result<String> {
        let n = self.u32(what)? as usize;
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| Error::SpecMismatch(format!("{what} is not UTF-8")))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let blob: String = self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        put_str(&mut out, &blob);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.push(DTYPE_F32);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::BadMagic);
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        let mut meta = BTreeMap::new();
        for line in r.string("metadata")?.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::SpecMismatch(format!("metadata line {line:?}")))?;
            meta.insert(k.to_string(), v.to_string());
        }
        let count = r.u32("tensor count")?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = r.string("tensor name")?;
            let dtype = r.take(1, "dtype")?[0];
            if dtype != DTYPE_F32 {
                return Err(Error::SpecMismatch(format!("tensor {name} has unknown dtype code {dtype}")));
            }
            let rank = r.u32("rank")? as usize;
            let shape = (0..rank)
                .map(|_| r.u64("dims").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or(Error::Truncated("tensor data"))?;
            let data = r
                .take(n, "tensor data")?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        Ok(Checkpoint { meta, tensors })
    }

    /// Writes to a temporary next to `path` and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tmp = PathBuf::from(path);
        let mut file_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        file_name.push(".tmp");
        tmp.set_file_name(file_name);
        let write = || -> std::io::Result<()> {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()
        };
        if let Err(e) = write() {
            let _ = std::fs::remove_file(&tmp);
            return Err(Error::CheckpointIo { path: tmp, source: e });
        }
        std::fs::rename(&tmp, path).map_err(|e| Error::CheckpointIo {
            path: path.into(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::CheckpointIo {
            path: path.into(),
            source: e,
        })?;
        Self::from_bytes(&buf)
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn meta_get(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::SpecMismatch(format!("checkpoint has no `{key}` entry")))
    }

    pub fn set_spec(&mut self, spec: &NetworkSpec) {
        for (k, v) in spec.to_map() {
            self.meta.insert(format!("spec.{k}"), v);
        }
    }

    pub fn spec(&self) -> Result<NetworkSpec> {
        let m = self
            .meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("spec.").map(|k| (k.to_string(), v.clone())))
            .collect();
        NetworkSpec::from_map(&m).map_err(|e| Error::SpecMismatch(e.to_string()))
    }

    /// Stores every parameter (trainable or not) of `store`.
    pub fn put_params(&mut self, store: &ParamStore) {
        for (_, p) in store.iter() {
            self.tensors.push(NamedTensor {
                name: format!("{PARAM}{}", p.name),
                shape: p.shape.clone(),
                data: p.data.iter().map(|&v| v as f32).collect(),
            });
        }
    }

    pub fn put_optimizer(&mut self, opt: &dyn Optimizer, store: &ParamStore) {
        self.meta.insert("optimizer".into(), opt.name().into());
        self.meta.insert("optimizer.steps".into(), opt.steps().to_string());
        for (name, v) in opt.state(store) {
            self.tensors.push(NamedTensor {
                name: format!("{OPTIM}{name}"),
                shape: vec![v.len()],
                data: v.iter().map(|&x| x as f32).collect(),
            });
        }
    }

    /// Copies stored parameters into `store` for every parameter name that
    /// starts with one of `prefixes`; every such parameter must be present
    /// with a matching shape. Returns the number of parameters loaded.
    pub fn load_params(&self, store: &mut ParamStore, prefixes: &[&str]) -> Result<usize> {
        let wanted: Vec<_> = store
            .iter()
            .filter(|(_, p)| prefixes.iter().any(|pre| p.name.starts_with(pre)))
            .map(|(id, p)| (id, p.name.clone(), p.shape.clone()))
            .collect();
        for (id, name, shape) in &wanted {
            let t = self
                .get(&format!("{PARAM}{name}"))
                .ok_or_else(|| Error::SpecMismatch(format!("parameter {name} missing from checkpoint")))?;
            if &t.shape != shape {
                return Err(Error::SpecMismatch(format!(
                    "parameter {name} has shape {:?} in the checkpoint, {:?} in the network",
                    t.shape, shape
                )));
            }
            store.get_mut(*id).iter_mut().zip(&t.data).for_each(|(d, &s)| *d = s as f64);
        }
        Ok(wanted.len())
    }

    pub fn optimizer_state(&self) -> Vec<(String, Vec<f64>)> {
        self.tensors
            .iter()
            .filter_map(|t| {
                t.name
                    .strip_prefix(OPTIM)
                    .map(|n| (n.to_string(), t.data.iter().map(|&v| v as f64).collect()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::default();
        c.set_spec(&NetworkSpec::default());
        c.meta.insert("seed".into(), "3".into());
        let mut store = ParamStore::new();
        store.add("a.weight", vec![2, 3], vec![0.1, -2.0, 3.5, 1e-8, 0.0, 7.25], true);
        store.add("a.running_var", vec![1], vec![1.0], false);
        c.put_params(&store);
        c
    }

    #[test]
    fn bytes_round_trip() {
        let c = sample();
        let b = c.to_bytes();
        let back = Checkpoint::from_bytes(&b).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), b);
        assert_eq!(back.spec().unwrap(), NetworkSpec::default());
    }

    #[test]
    fn corrupt_inputs() {
        let mut b = sample().to_bytes();
        for cut in [0, 3, 7, 12, b.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&b[..cut]), Err(Error::Truncated(_))), "cut {cut}");
        }
        b[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&b), Err(Error::VersionUnsupported(9))));
        b[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&b), Err(Error::BadMagic)));
    }

    #[test]
    fn load_params_checks_shapes() {
        let c = sample();
        let mut store = ParamStore::new();
        let id = store.add("a.weight", vec![2, 3], vec![0.0; 6], true);
        assert_eq!(c.load_params(&mut store, &["a."]).unwrap(), 1);
        assert_eq!(store.get(id)[2], 3.5);
        let mut other = ParamStore::new();
        other.add("a.weight", vec![3, 2], vec![0.0; 6], true);
        assert!(matches!(c.load_params(&mut other, &["a."]), Err(Error::SpecMismatch(_))));
        let mut missing = ParamStore::new();
        missing.add("b.weight", vec![1], vec![0.0], true);
        assert!(c.load_params(&mut missing, &["b."]).is_err());
    }
}
