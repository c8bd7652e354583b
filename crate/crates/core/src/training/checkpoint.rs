//! Binary checkpoint container.
//!
//! Layout: 8-byte magic `QPNETCKP`, `u32` format version, `u32` header
//! length, a JSON header (config, step, tensor names and shapes, optimizer
//! hyperparameters), then raw little-endian `f32` data: every parameter
//! buffer in header order, followed by the Adam first and second moments
//! when present.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, NetworkParams};
use crate::tensor::AdamState;

const MAGIC: &[u8; 8] = b"QPNETCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: NetworkParams<f32>,
    pub adam: Option<AdamState>,
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct AdamHeader {
    step_count: u64,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    step: u64,
    tensors: Vec<TensorHeader>,
    adam: Option<AdamHeader>,
}

fn push_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        config: ckpt.config.clone(),
        step: ckpt.step,
        tensors: ckpt
            .params
            .tensors
            .iter()
            .map(|t| TensorHeader {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
        adam: ckpt.adam.as_ref().map(|a| AdamHeader {
            step_count: a.step_count,
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
        }),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + 12 * ckpt.params.count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in &ckpt.params.tensors {
        push_f32s(&mut out, &t.values);
    }
    if let Some(adam) = &ckpt.adam {
        for m in adam.first_moment.iter().chain(&adam.second_moment) {
            push_f32s(&mut out, m);
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                offset: self.bytes.len() as u64,
                message: format!("truncated: {what} needs {n} bytes at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        Ok(self
            .take(4 * n, what)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: "not a checkpoint file".into(),
        });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header_len = r.u32("header length")? as usize;
    let header_at = r.pos;
    let header: Header = serde_json::from_slice(r.take(header_len, "header")?).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        offset: header_at as u64,
        message: format!("bad header: {e}"),
    })?;

    let mut buffers = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        buffers.push(r.f32s(t.shape.iter().product(), &t.name)?);
    }
    let params = NetworkParams::from_buffers(&header.config, buffers)?;
    let adam = match header.adam {
        Some(h) => {
            let sizes = params.sizes();
            let first = sizes.iter().map(|&n| r.f32s(n, "adam first moment")).collect::<Result<Vec<_>>>()?;
            let second = sizes.iter().map(|&n| r.f32s(n, "adam second moment")).collect::<Result<Vec<_>>>()?;
            Some(AdamState {
                first_moment: first,
                second_moment: second,
                step_count: h.step_count,
                learning_rate: h.learning_rate,
                beta1: h.beta1,
                beta2: h.beta2,
                epsilon: h.epsilon,
            })
        }
        None => None,
    };
    if r.pos != bytes.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: r.pos as u64,
            message: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok(Checkpoint {
        config: header.config,
        params,
        adam,
        step: header.step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MacroblockSpec, ModelKind, Profile};
    use crate::training::{build_item, train_step, DatasetSpec};

    fn small() -> ModelConfig {
        let mut c = ModelConfig::preset(ModelKind::QPNet, Profile::Desk, 8);
        c.macroblocks = vec![MacroblockSpec::fixed(1, 2), MacroblockSpec::adaptive(1, 2)];
        c.residual_channels = 6;
        c.gate_channels = 6;
        c.skip_channels = 6;
        c.output_mid_channels = 5;
        c
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = small();
        let params = NetworkParams::init(&c, 9);
        let mut adam = AdamState::new(params.sizes(), 1e-4);
        adam.first_moment[3][1] = 0.25;
        adam.step_count = 7;
        let ckpt = Checkpoint {
            config: c,
            params,
            adam: Some(adam),
            step: 7,
        };
        let path = dir.path().join("a.qpnt");
        save_checkpoint(&path, &ckpt).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
    }

    #[test]
    fn wrong_version_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let c = small();
        let ckpt = Checkpoint {
            params: NetworkParams::init(&c, 1),
            config: c,
            adam: None,
            step: 0,
        };
        let path = dir.path().join("v.qpnt");
        save_checkpoint(&path, &ckpt).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[8] = 99;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Version { found: 99, .. })));
    }

    #[test]
    fn truncation_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let c = small();
        let ckpt = Checkpoint {
            params: NetworkParams::init(&c, 1),
            config: c,
            adam: None,
            step: 0,
        };
        let path = dir.path().join("t.qpnt");
        save_checkpoint(&path, &ckpt).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn continuation_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let c = small();
        let spec = DatasetSpec {
            utterances: 2,
            seconds_per_utterance: 0.03,
            ..DatasetSpec::default()
        };
        let items = [build_item(&spec, 0).unwrap(), build_item(&spec, 1).unwrap()];
        let mut params = NetworkParams::init(&c, 2);
        let mut adam = AdamState::new(params.sizes(), 1e-3);
        train_step(&mut params, &mut adam, &c, &items[0], 0, 600).unwrap();

        let path = dir.path().join("mid.qpnt");
        save_checkpoint(
            &path,
            &Checkpoint {
                config: c.clone(),
                params: params.clone(),
                adam: Some(adam.clone()),
                step: adam.step_count,
            },
        )
        .unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let (mut p2, mut a2) = (loaded.params, loaded.adam.unwrap());

        let l1 = train_step(&mut params, &mut adam, &c, &items[1], 0, 600).unwrap();
        let l2 = train_step(&mut p2, &mut a2, &loaded.config, &items[1], 0, 600).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert_eq!(params, p2);
        assert_eq!(adam, a2);
    }
}
