//! Model parameters and the on-disk model format.
//!
//! Layout: magic `MLNN`, format version (u32 LE), the arch descriptor as a
//! length-prefixed flat key-value block, the preprocess config the same way,
//! a tensor count (u32 LE), then per tensor: name (u16 LE length + UTF-8),
//! rank (u8), dims (u32 LE each), payload (f32 LE). Tensors are written in
//! sorted name order, so byte-identical parameters serialize identically.

use std::collections::BTreeMap;
use std::path::Path;

use super::{ArchDescriptor, ArchVariant, NnetError, Result, Tensor};
use crate::augment::RngStream;
use crate::imaging::PreprocessConfig;
use crate::kv::KvConfig;

const MAGIC: &[u8; 4] = b"MLNN";
const FORMAT_VERSION: u32 = 1;

/// All learnable weights plus the descriptors needed to reuse them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: ArchDescriptor,
    pub preprocess: PreprocessConfig,
    tensors: BTreeMap<String, Tensor>,
}

impl ModelParams {
    /// He-normal initialization (fan-in) for conv and FC weights, zero
    /// biases, drawn deterministically from `seed`.
    pub fn init(arch: &ArchDescriptor, preprocess: PreprocessConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        // dedicated derivation stream, disjoint from augmentation indices
        let mut rng = crate::augment::rng_for(seed, u64::MAX, 0);
        let mut tensors = BTreeMap::new();

        let mut in_ch = 3usize;
        for (i, &out_ch) in arch.stage_channels.iter().enumerate() {
            let name = layer_name(i);
            let fan_in = in_ch * 9;
            tensors.insert(
                format!("{name}.weight"),
                he_normal(&mut rng, vec![out_ch, in_ch, 3, 3], fan_in)?,
            );
            tensors.insert(format!("{name}.bias"), Tensor::zeros(vec![out_ch]));
            in_ch = out_ch;
        }
        let concat = arch.concat_width();
        tensors.insert(
            "fc1.weight".into(),
            he_normal(&mut rng, vec![arch.head_hidden, concat], concat)?,
        );
        tensors.insert("fc1.bias".into(), Tensor::zeros(vec![arch.head_hidden]));
        tensors.insert(
            "fc2.weight".into(),
            he_normal(
                &mut rng,
                vec![arch.classes, arch.head_hidden],
                arch.head_hidden,
            )?,
        );
        tensors.insert("fc2.bias".into(), Tensor::zeros(vec![arch.classes]));

        Ok(Self {
            arch: arch.clone(),
            preprocess,
            tensors,
        })
    }

    /// All-zero weights; useful as a neutral reference (every input maps to
    /// probability 0.5).
    pub fn zeros(arch: &ArchDescriptor, preprocess: PreprocessConfig) -> Result<Self> {
        let mut model = Self::init(arch, preprocess, 0)?;
        for t in model.tensors.values_mut() {
            t.data_mut().fill(0.0);
        }
        Ok(model)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| NnetError::Shape(format!("model has no tensor {name:?}")))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| NnetError::Shape(format!("model has no tensor {name:?}")))
    }

    /// Tensors in sorted name order.
    pub fn tensors(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn tensor_names(&self) -> Vec<String> {
        self.tensors.keys().cloned().collect()
    }
}

pub(crate) fn layer_name(stage: usize) -> String {
    if stage == 0 {
        "stem".to_string()
    } else {
        format!("stage{stage}")
    }
}

fn he_normal(rng: &mut RngStream, shape: Vec<usize>, fan_in: usize) -> Result<Tensor> {
    let std = (2.0 / fan_in as f64).sqrt();
    let numel = shape.iter().product();
    let data = (0..numel).map(|_| (rng.next_normal() * std) as f32).collect();
    Tensor::new(shape, data)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

pub fn model_to_bytes(model: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());

    let arch_block = model.arch.to_kv();
    out.extend_from_slice(&(arch_block.len() as u32).to_le_bytes());
    out.extend_from_slice(arch_block.as_bytes());

    let pre_block = model.preprocess.to_kv();
    out.extend_from_slice(&(pre_block.len() as u32).to_le_bytes());
    out.extend_from_slice(pre_block.as_bytes());

    out.extend_from_slice(&(model.tensors.len() as u32).to_le_bytes());
    for (name, tensor) in &model.tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(tensor.shape().len() as u8);
        for &dim in tensor.shape() {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(NnetError::UnexpectedEof);
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16_le(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn utf8(&mut self, n: usize) -> Result<&'a str> {
        std::str::from_utf8(self.take(n)?)
            .map_err(|_| NnetError::Malformed("invalid UTF-8 in text block".into()))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NnetError::BadMagic);
    }
    let version = r.u32_le()?;
    if version != FORMAT_VERSION {
        return Err(NnetError::UnsupportedVersion(version));
    }

    let arch_len = r.u32_le()? as usize;
    let mut arch = ArchDescriptor::default();
    arch.apply_kv(r.utf8(arch_len)?)
        .map_err(|e| NnetError::Malformed(format!("arch block: {e}")))?;
    arch.validate()?;

    let pre_len = r.u32_le()? as usize;
    let mut preprocess = PreprocessConfig::default();
    preprocess
        .apply_kv(r.utf8(pre_len)?)
        .map_err(|e| NnetError::Malformed(format!("preprocess block: {e}")))?;

    let count = r.u32_le()? as usize;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u16_le()? as usize;
        let name = r.utf8(name_len)?.to_string();
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32_le()? as usize);
        }
        let numel: usize = shape.iter().product();
        let payload = r.take(numel * 4)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(shape, data)?;
        if tensors.insert(name.clone(), tensor).is_some() {
            return Err(NnetError::Malformed(format!("duplicate tensor {name:?}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(NnetError::Malformed(format!(
            "{} trailing bytes after tensor payload",
            bytes.len() - r.pos
        )));
    }

    let model = ModelParams {
        arch,
        preprocess,
        tensors,
    };
    check_consistency(&model)?;
    Ok(model)
}

/// Every expected tensor must be present with the shape the arch implies.
fn check_consistency(model: &ModelParams) -> Result<()> {
    let reference = ModelParams::zeros(&model.arch, model.preprocess.clone())?;
    let expected: Vec<String> = reference.tensor_names();
    let found: Vec<String> = model.tensor_names();
    if expected != found {
        return Err(NnetError::Malformed(format!(
            "tensor set {found:?} does not match arch (expected {expected:?})"
        )));
    }
    for (name, tensor) in reference.tensors() {
        let actual = model.tensor(name)?;
        if actual.shape() != tensor.shape() {
            return Err(NnetError::Malformed(format!(
                "tensor {name:?} has shape {:?}, arch implies {:?}",
                actual.shape(),
                tensor.shape()
            )));
        }
    }
    Ok(())
}

pub fn save_model(model: &ModelParams, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, model_to_bytes(model))?)
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    model_from_bytes(&std::fs::read(path)?)
}

/// Hex SHA-256 of the serialized model, used for fine-tuning provenance.
pub fn model_hash(model: &ModelParams) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(model_to_bytes(model));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
