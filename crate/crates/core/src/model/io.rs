//! Model file container.
//!
//! Layout: magic `MKWS`, format version (u32 LE), header length (u32 LE),
//! JSON header, tensor count (u32 LE), then per tensor: name length (u32),
//! name bytes, dtype code (u8, 0 = f32), rank (u8), dims (u32 each),
//! row-major little-endian data; finally a CRC32 (u32 LE) over everything
//! before it. The header is readable without touching the tensor data.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::FrontendConfig;
use crate::error::{Error, Result};
use crate::model::{build_model, EmbeddingModel, EmbeddingNetSpec, TrainingFingerprint};
use crate::nn::Tensor;

pub const MAGIC: &[u8; 4] = b"MKWS";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub spec: EmbeddingNetSpec,
    pub classes: Vec<String>,
    pub frontend: FrontendConfig,
    pub fingerprint: TrainingFingerprint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FewshotHeader {
    pub target_word: String,
    pub language: String,
    pub class_order: Vec<String>,
    pub embedding_fingerprint: String,
    /// The five training shots, for provenance and eval-time exclusion.
    pub shot_paths: Vec<String>,
    pub frontend: FrontendConfig,
    pub embedding_units: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContainerHeader {
    Embedding(Box<EmbeddingHeader>),
    FewshotHead(Box<FewshotHeader>),
}

pub fn write_container<P: AsRef<Path>>(
    path: P,
    header: &ContainerHeader,
    tensors: &[(&str, &Tensor)],
) -> Result<()> {
    let header_json = serde_json::to_vec(header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, tensor) in tensors {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u32).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(DTYPE_F32);
        buf.push(tensor.rank() as u8);
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::ModelFormat("file truncated".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

fn parse_header<'a>(cursor: &mut Cursor<'a>) -> Result<ContainerHeader> {
    let magic = cursor.take(4)?;
    if magic != MAGIC {
        return Err(Error::ModelFormat("bad magic; not a model file".into()));
    }
    let version = cursor.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "format version {version} unsupported (this build reads {FORMAT_VERSION})"
        )));
    }
    let header_len = cursor.u32()? as usize;
    let header_bytes = cursor.take(header_len)?;
    Ok(serde_json::from_slice(header_bytes)?)
}

/// Read only the JSON header: magic, version, and header bytes. Does not
/// touch tensor data or the checksum.
pub fn read_header<P: AsRef<Path>>(path: P) -> Result<ContainerHeader> {
    use std::io::Read;
    let mut file = fs::File::open(path)?;
    let mut prefix = [0u8; 12];
    file.read_exact(&mut prefix)
        .map_err(|_| Error::ModelFormat("file truncated".into()))?;
    let header_len = u32::from_le_bytes([prefix[8], prefix[9], prefix[10], prefix[11]]) as usize;
    let mut rest = vec![0u8; header_len];
    file.read_exact(&mut rest)
        .map_err(|_| Error::ModelFormat("file truncated".into()))?;
    let mut bytes = prefix.to_vec();
    bytes.extend_from_slice(&rest);
    let mut cursor = Cursor { bytes: &bytes, pos: 0 };
    parse_header(&mut cursor)
}

pub fn read_container<P: AsRef<Path>>(
    path: P,
) -> Result<(ContainerHeader, Vec<(String, Tensor)>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 {
        return Err(Error::ModelFormat("file truncated".into()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes([crc_bytes[0], crc_bytes[1], crc_bytes[2], crc_bytes[3]]);
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::ModelFormat(format!(
            "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }

    let mut cursor = Cursor { bytes: body, pos: 0 };
    let header = parse_header(&mut cursor)?;
    let count = cursor.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cursor.u32()? as usize;
        let name = String::from_utf8(cursor.take(name_len)?.to_vec())
            .map_err(|_| Error::ModelFormat("tensor name is not utf-8".into()))?;
        let dtype = cursor.u8()?;
        if dtype != DTYPE_F32 {
            return Err(Error::ModelFormat(format!("unsupported dtype code {dtype}")));
        }
        let rank = cursor.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cursor.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = cursor.take(len * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.push((name, Tensor::from_vec(&shape, data)?));
    }
    if cursor.pos != body.len() {
        return Err(Error::ModelFormat("trailing bytes after tensor data".into()));
    }
    Ok((header, tensors))
}

pub(crate) fn save_model<P: AsRef<Path>>(model: &EmbeddingModel, path: P) -> Result<()> {
    let header = ContainerHeader::Embedding(Box::new(EmbeddingHeader {
        spec: model.spec.clone(),
        classes: model.classes.clone(),
        frontend: model.frontend.clone(),
        fingerprint: model.fingerprint.clone(),
    }));
    let params = model.parameters();
    let tensors: Vec<(&str, &Tensor)> = params.iter().map(|p| (p.name.as_str(), &p.value)).collect();
    write_container(path, &header, &tensors)
}

pub(crate) fn load_model<P: AsRef<Path>>(path: P) -> Result<EmbeddingModel> {
    let (header, tensors) = read_container(path)?;
    let header = match header {
        ContainerHeader::Embedding(h) => h,
        ContainerHeader::FewshotHead(_) => {
            return Err(Error::ModelFormat(
                "file holds a few-shot head, not an embedding model".into(),
            ))
        }
    };
    // rebuild the layer stack, then overwrite every parameter from the file
    let mut model = build_model(&header.spec, header.classes, &header.frontend, 0)?;
    model.fingerprint = header.fingerprint;
    {
        let mut params = model.parameters_mut();
        if params.len() != tensors.len() {
            return Err(Error::ModelFormat(format!(
                "model expects {} tensors, file holds {}",
                params.len(),
                tensors.len()
            )));
        }
        for (param, (name, tensor)) in params.iter_mut().zip(tensors) {
            if param.name != name {
                return Err(Error::ModelFormat(format!(
                    "tensor order mismatch: expected {}, found {name}",
                    param.name
                )));
            }
            if param.value.shape() != tensor.shape() {
                return Err(Error::ModelFormat(format!(
                    "tensor {name} has shape {:?}, spec wants {:?}",
                    tensor.shape(),
                    param.value.shape()
                )));
            }
            param.value = tensor;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::class_list;

    fn sample_model() -> EmbeddingModel {
        let spec = EmbeddingNetSpec::desk_default(3);
        let classes = class_list(&["aa".into(), "bb".into(), "cc".into()]);
        build_model(&spec, classes, &FrontendConfig::default(), 77).unwrap()
    }

    #[test]
    fn save_load_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mkws");
        let mut model = sample_model();
        model.fingerprint = TrainingFingerprint {
            config_hash: "cfg".into(),
            data_hash: "data".into(),
        };
        model.save(&path).unwrap();
        let back = EmbeddingModel::load(&path).unwrap();
        assert_eq!(back.classes, model.classes);
        assert_eq!(back.spec, model.spec);
        assert_eq!(back.fingerprint, model.fingerprint);
        assert_eq!(back.param_hash(), model.param_hash());
        for (a, b) in back.parameters().iter().zip(model.parameters().iter()) {
            let a_bits: Vec<u32> = a.value.data().iter().map(|v| v.to_bits()).collect();
            let b_bits: Vec<u32> = b.value.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a_bits, b_bits, "{}", a.name);
        }
    }

    #[test]
    fn truncated_file_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mkws");
        sample_model().save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 37]).unwrap();
        let err = EmbeddingModel::load(&path).unwrap_err();
        assert!(matches!(err, Error::ModelFormat(_)), "{err}");
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mkws");
        sample_model().save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        fs::write(&path, &bytes).unwrap();
        assert!(EmbeddingModel::load(&path).is_err());
    }

    #[test]
    fn header_only_inspection_skips_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mkws");
        let model = sample_model();
        model.save(&path).unwrap();
        // damage the tensor section; the header must still read
        let mut bytes = fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 20] ^= 0xff;
        fs::write(&path, &bytes).unwrap();

        match read_header(&path).unwrap() {
            ContainerHeader::Embedding(h) => {
                assert_eq!(h.spec, model.spec);
                assert_eq!(h.classes, model.classes);
            }
            ContainerHeader::FewshotHead(_) => panic!("wrong header kind"),
        }
        assert!(EmbeddingModel::load(&path).is_err(), "full load must fail checksum");
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mkws");
        sample_model().save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4] = 99; // bump version field
        let body_len = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&crc.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        let err = EmbeddingModel::load(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }
}
