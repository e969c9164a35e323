//! Checkpoint file: an 8-byte magic, a length-prefixed JSON manifest (format
//! version, config echo, named entries with shapes and byte offsets) and a
//! little-endian 64-bit float payload holding parameters and Adam moments.
//! Save → load → save is byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{AdamState, DiffError};
use crate::model::{EasqConfig, EasqModel};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"EASQCKP\0";

#[derive(Debug, Error)]
pub enum CkptError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {found} (supported: {FORMAT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("entry `{name}`: shape {manifest:?} does not match model shape {model:?}")]
    ShapeMismatch {
        name: String,
        manifest: Vec<usize>,
        model: Vec<usize>,
    },
    #[error("manifest entry `{name}` missing")]
    MissingEntry { name: String },
    #[error("manifest error: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimizerMeta {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    model: EasqConfig,
    n_users: usize,
    n_items: usize,
    optimizer: OptimizerMeta,
    global_step: u64,
    entries: Vec<Entry>,
}

/// A parsed checkpoint: manifest plus raw payload.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    manifest: Manifest,
    payload: Vec<u8>,
}

fn entry_len(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Writes model parameters, Adam moments and the step counter.
pub fn save_checkpoint(
    model: &EasqModel,
    adam: &AdamState,
    global_step: u64,
    path: &Path,
) -> Result<(), CkptError> {
    let mut entries = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, values: &[f64], payload: &mut Vec<u8>| {
        entries.push(Entry {
            name,
            shape,
            offset: payload.len(),
        });
        for v in values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    };

    for p in model.params() {
        push(
            p.name.clone(),
            model.graph().shape(p.var).to_vec(),
            model.graph().values(p.var),
            &mut payload,
        );
    }
    for (i, p) in model.params().iter().enumerate() {
        push(
            format!("opt.m.{}", p.name),
            vec![adam.first_moment[i].len()],
            &adam.first_moment[i],
            &mut payload,
        );
        push(
            format!("opt.v.{}", p.name),
            vec![adam.second_moment[i].len()],
            &adam.second_moment[i],
            &mut payload,
        );
    }

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        model: model.config().clone(),
        n_users: model.n_users(),
        n_items: model.n_items(),
        optimizer: OptimizerMeta {
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            step_count: adam.step_count,
        },
        global_step,
        entries,
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;

    let mut f = std::fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    f.write_all(&manifest_bytes)?;
    f.write_all(&payload)?;
    Ok(())
}

/// Reads and validates a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CkptError> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic).map_err(|_| CkptError::BadMagic)?;
    if &magic != MAGIC {
        return Err(CkptError::BadMagic);
    }
    let mut len_bytes = [0u8; 8];
    f.read_exact(&mut len_bytes)?;
    let manifest_len = u64::from_le_bytes(len_bytes) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    f.read_exact(&mut manifest_bytes)
        .map_err(|_| CkptError::Truncated {
            expected: manifest_len,
            found: 0,
        })?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(CkptError::VersionMismatch {
            found: manifest.format_version,
        });
    }
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    let expected: usize = manifest
        .entries
        .iter()
        .map(|e| e.offset + 8 * entry_len(&e.shape))
        .max()
        .unwrap_or(0);
    if payload.len() < expected {
        return Err(CkptError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    Ok(Checkpoint { manifest, payload })
}

impl Checkpoint {
    pub fn config(&self) -> &EasqConfig {
        &self.manifest.model
    }

    pub fn n_users(&self) -> usize {
        self.manifest.n_users
    }

    pub fn n_items(&self) -> usize {
        self.manifest.n_items
    }

    pub fn global_step(&self) -> u64 {
        self.manifest.global_step
    }

    fn read_entry(&self, entry: &Entry) -> Vec<f64> {
        let n = entry_len(&entry.shape);
        let mut out = Vec::with_capacity(n);
        let base = entry.offset;
        for i in 0..n {
            let mut b = [0u8; 8];
            b.copy_from_slice(&self.payload[base + 8 * i..base + 8 * (i + 1)]);
            out.push(f64::from_le_bytes(b));
        }
        out
    }

    fn entry(&self, name: &str) -> Result<&Entry, CkptError> {
        self.manifest
            .entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| CkptError::MissingEntry { name: name.into() })
    }

    /// Restores parameter values and Adam moments into an existing model.
    /// Shapes are validated entry by entry; the first mismatch is reported by
    /// name.
    pub fn restore_into(&self, model: &mut EasqModel) -> Result<AdamState, CkptError> {
        let infos: Vec<(String, crate::diffcore::Var, Vec<usize>)> = model
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.var, model.graph().shape(p.var).to_vec()))
            .collect();
        for (name, var, shape) in &infos {
            let e = self.entry(name)?;
            if &e.shape != shape {
                return Err(CkptError::ShapeMismatch {
                    name: name.clone(),
                    manifest: e.shape.clone(),
                    model: shape.clone(),
                });
            }
            let values = self.read_entry(e);
            model.graph_mut().set_values(*var, &values)?;
        }
        let opt = &self.manifest.optimizer;
        let mut adam = AdamState::new(model.graph(), &model.param_vars(), opt.lr);
        adam.beta1 = opt.beta1;
        adam.beta2 = opt.beta2;
        adam.eps = opt.eps;
        adam.step_count = opt.step_count;
        for (i, (name, _, shape)) in infos.iter().enumerate() {
            let m = self.entry(&format!("opt.m.{name}"))?;
            let v = self.entry(&format!("opt.v.{name}"))?;
            let n = entry_len(shape);
            if entry_len(&m.shape) != n || entry_len(&v.shape) != n {
                return Err(CkptError::ShapeMismatch {
                    name: format!("opt.m.{name}"),
                    manifest: m.shape.clone(),
                    model: shape.clone(),
                });
            }
            adam.first_moment[i] = self.read_entry(m);
            adam.second_moment[i] = self.read_entry(v);
        }
        Ok(adam)
    }

    /// Builds a fresh model from the manifest config and restores everything
    /// into it.
    pub fn build_model(&self) -> Result<(EasqModel, AdamState, u64), CkptError> {
        let mut model = EasqModel::new(
            self.manifest.model.clone(),
            self.manifest.n_users,
            self.manifest.n_items,
        )?;
        let adam = self.restore_into(&mut model)?;
        Ok((model, adam, self.manifest.global_step))
    }
}
