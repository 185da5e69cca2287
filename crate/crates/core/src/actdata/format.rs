//! Binary payload layout (all integers and floats little-endian):
//!
//! ```text
//! "CLAPACT1"  version:u32  count:u64
//! per record:
//!   prompt_id:u64 response_id:u32 label:u8 flags:u8 L:u32 d_llm:u32
//!   activations: L·d_llm × f32
//!   [flags & 1] len:u64, token log-probs as f32
//!   [flags & 2] len:u64, n_layers:u32 n_heads:u32 d_head:u32, f32 values
//!   [flags & 4] len:u64, UTF-8 response text
//! index: count × u64 record offsets
//! index_offset:u64
//! ```
//!
//! The JSON manifest lives next to the payload.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numcore::DenseArray;

use super::record::{validate_record, ActivationRecord, Dataset, DatasetManifest};

pub const MAGIC: &[u8; 8] = b"CLAPACT1";
pub const FORMAT_VERSION: u32 = 1;

const FLAG_LOGPROBS: u8 = 1;
const FLAG_HEADS: u8 = 2;
const FLAG_TEXT: u8 = 4;
const HEADER_LEN: u64 = 8 + 4 + 8;

/// Manifest and payload paths for a dataset stem; a `.json` path is taken as
/// the manifest itself.
pub fn dataset_paths(path: &Path) -> (PathBuf, PathBuf) {
    let manifest = if path.extension().is_some_and(|e| e == "json") {
        path.to_path_buf()
    } else {
        path.with_extension("json")
    };
    let payload = manifest.with_extension("bin");
    (manifest, payload)
}

fn encode_record(r: &ActivationRecord, out: &mut Vec<u8>) -> Result<()> {
    let (l, d) = r.activations.dims2()?;
    let mut flags = 0u8;
    if r.token_logprobs.is_some() {
        flags |= FLAG_LOGPROBS;
    }
    if r.head_activations.is_some() {
        flags |= FLAG_HEADS;
    }
    if r.response_text.is_some() {
        flags |= FLAG_TEXT;
    }
    out.extend_from_slice(&r.prompt_id.to_le_bytes());
    out.extend_from_slice(&r.response_id.to_le_bytes());
    out.push(r.label);
    out.push(flags);
    out.extend_from_slice(&(l as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    extend_f32(out, r.activations.data());
    if let Some(lp) = &r.token_logprobs {
        out.extend_from_slice(&((lp.len() * 4) as u64).to_le_bytes());
        extend_f32(out, lp);
    }
    if let Some(h) = &r.head_activations {
        let s = h.shape();
        out.extend_from_slice(&((12 + h.len() * 4) as u64).to_le_bytes());
        for &dim in s {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        extend_f32(out, h.data());
    }
    if let Some(t) = &r.response_text {
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        out.extend_from_slice(t.as_bytes());
    }
    Ok(())
}

fn extend_f32(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Writes the manifest (with refreshed statistics) and the binary payload.
/// Returns `(manifest_path, payload_path)`.
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<(PathBuf, PathBuf)> {
    dataset.validate()?;
    let (manifest_path, payload_path) = dataset_paths(path);
    let mut manifest = dataset.manifest.clone();
    manifest.stats = dataset.recomputed_stats()?;
    manifest.format_version = FORMAT_VERSION;
    manifest.payload = payload_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut w = BufWriter::new(File::create(&payload_path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(dataset.records.len() as u64).to_le_bytes())?;
    let mut offsets = Vec::with_capacity(dataset.records.len());
    let mut offset = HEADER_LEN;
    let mut buf = Vec::new();
    for r in &dataset.records {
        buf.clear();
        encode_record(r, &mut buf)?;
        offsets.push(offset);
        offset += buf.len() as u64;
        w.write_all(&buf)?;
    }
    for o in &offsets {
        w.write_all(&o.to_le_bytes())?;
    }
    w.write_all(&offset.to_le_bytes())?;
    w.flush()?;

    fs::write(&manifest_path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok((manifest_path, payload_path))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    record: Option<usize>,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::load(self.record, "truncated payload"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::load(self.record, "length overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn section_len(&mut self) -> Result<usize> {
        let len = self.u64()?;
        usize::try_from(len).map_err(|_| Error::load(self.record, "section too large"))
    }
}

fn decode_record(c: &mut Cursor<'_>) -> Result<ActivationRecord> {
    let prompt_id = c.u64()?;
    let response_id = c.u32()?;
    let label = c.u8()?;
    let flags = c.u8()?;
    if flags & !(FLAG_LOGPROBS | FLAG_HEADS | FLAG_TEXT) != 0 {
        return Err(Error::load(c.record, format!("unknown flags {flags:#x}")));
    }
    let l = c.u32()? as usize;
    let d = c.u32()? as usize;
    let n = l
        .checked_mul(d)
        .ok_or_else(|| Error::load(c.record, "activation size overflow"))?;
    let activations = DenseArray::from_vec(&[l, d], c.f32s(n)?)?;
    let token_logprobs = if flags & FLAG_LOGPROBS != 0 {
        let len = c.section_len()?;
        if len % 4 != 0 {
            return Err(Error::load(c.record, "log-prob section not a multiple of 4 bytes"));
        }
        Some(c.f32s(len / 4)?)
    } else {
        None
    };
    let head_activations = if flags & FLAG_HEADS != 0 {
        let len = c.section_len()?;
        let dims = [c.u32()? as usize, c.u32()? as usize, c.u32()? as usize];
        let count: usize = dims.iter().product();
        if len != 12 + count * 4 {
            return Err(Error::load(c.record, "head section length disagrees with its shape"));
        }
        Some(DenseArray::from_vec(&dims, c.f32s(count)?)?)
    } else {
        None
    };
    let response_text = if flags & FLAG_TEXT != 0 {
        let len = c.section_len()?;
        let bytes = c.take(len)?;
        Some(
            String::from_utf8(bytes.to_vec())
                .map_err(|_| Error::load(c.record, "response text is not UTF-8"))?,
        )
    } else {
        None
    };
    Ok(ActivationRecord {
        prompt_id,
        response_id,
        label,
        activations,
        token_logprobs,
        head_activations,
        response_text,
    })
}

fn check_header(c: &mut Cursor<'_>) -> Result<u64> {
    if c.take(8)? != MAGIC {
        return Err(Error::load(None, "bad magic, not an activation payload"));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::load(None, format!("unsupported format version {version}")));
    }
    c.u64()
}

/// Reads a dataset written by [`write_dataset`], validating every record
/// against the manifest.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let (manifest_path, default_payload) = dataset_paths(path);
    let manifest: DatasetManifest = serde_json::from_slice(&fs::read(&manifest_path)?)?;
    let payload_path = if manifest.payload.is_empty() {
        default_payload
    } else {
        manifest_path.with_file_name(&manifest.payload)
    };
    let bytes = fs::read(&payload_path)?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
        record: None,
    };
    let count = usize::try_from(check_header(&mut c)?).map_err(|_| Error::load(None, "record count too large"))?;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    let mut offsets = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        c.record = Some(i);
        offsets.push(c.pos as u64);
        let r = decode_record(&mut c)?;
        validate_record(i, &r, &manifest)?;
        records.push(r);
    }
    c.record = None;
    let index_start = c.pos as u64;
    for (i, &expected) in offsets.iter().enumerate() {
        if c.u64()? != expected {
            return Err(Error::load(i, "index offset disagrees with record position"));
        }
    }
    if c.u64()? != index_start || c.pos != bytes.len() {
        return Err(Error::load(None, "corrupt index footer"));
    }
    let ds = Dataset { manifest, records };
    ds.validate()?;
    Ok(ds)
}

/// Random access to individual records through the trailing index.
pub struct PayloadReader {
    file: File,
    offsets: Vec<u64>,
    index_start: u64,
}

impl PayloadReader {
    pub fn open(payload_path: &Path) -> Result<Self> {
        let mut file = File::open(payload_path)?;
        let mut header = [0u8; HEADER_LEN as usize];
        file.read_exact(&mut header)
            .map_err(|_| Error::load(None, "truncated header"))?;
        let count = check_header(&mut Cursor {
            bytes: &header,
            pos: 0,
            record: None,
        })?;
        let len = file.metadata()?.len();
        if len < HEADER_LEN + 8 {
            return Err(Error::load(None, "truncated payload"));
        }
        file.seek(SeekFrom::End(-8))?;
        let mut footer = [0u8; 8];
        file.read_exact(&mut footer)?;
        let index_start = u64::from_le_bytes(footer);
        if index_start.checked_add(count * 8 + 8) != Some(len) {
            return Err(Error::load(None, "corrupt index footer"));
        }
        file.seek(SeekFrom::Start(index_start))?;
        let mut raw = vec![0u8; (count * 8) as usize];
        file.read_exact(&mut raw)?;
        let offsets = raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            file,
            offsets,
            index_start,
        })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn read_record(&mut self, i: usize) -> Result<ActivationRecord> {
        let start = *self
            .offsets
            .get(i)
            .ok_or_else(|| Error::Argument(format!("record {i} out of range")))?;
        let end = self.offsets.get(i + 1).copied().unwrap_or(self.index_start);
        if end < start {
            return Err(Error::load(i, "index offsets out of order"));
        }
        self.file.seek(SeekFrom::Start(start))?;
        let mut buf = vec![0u8; (end - start) as usize];
        self.file.read_exact(&mut buf)?;
        let mut c = Cursor {
            bytes: &buf,
            pos: 0,
            record: Some(i),
        };
        decode_record(&mut c)
    }
}
