use std::collections::HashSet;
use std::path::Path;

use super::arch::ArchitectureSpec;
use super::model::DescriptorModel;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const MODEL_MAGIC: &[u8; 4] = b"HNET";
pub const MODEL_VERSION: u16 = 1;

/// Little-endian cursor over a byte buffer; every read is length-checked.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8], what: &'static str) -> Self {
        Self { buf, pos: 0, what }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Format(format!(
                "{} truncated: need {n} bytes at offset {}, {} left",
                self.what,
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4).map_err(|_| bad_magic(expected, self.buf))?;
        if got != expected {
            return Err(bad_magic(expected, got));
        }
        Ok(())
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let bytes = count
            .checked_mul(4)
            .ok_or_else(|| Error::Format(format!("{}: element count {count} overflows", self.what)))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect())
    }
}

fn bad_magic(expected: &[u8; 4], got: &[u8]) -> Error {
    Error::Format(format!(
        "bad magic: expected {:?}, found {:?}",
        String::from_utf8_lossy(expected),
        String::from_utf8_lossy(&got[..got.len().min(4)])
    ))
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("value {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

/// Serializes the architecture and every parameter and buffer as f32.
pub fn model_to_bytes<T: Element>(model: &DescriptorModel<T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    let text = model.spec().to_text();
    put_u32(&mut out, text.len())?;
    out.extend_from_slice(text.as_bytes());
    for (name, t) in model.state() {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rank())?;
        for &d in t.shape() {
            put_u32(&mut out, d)?;
        }
        for &v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a model file. Every tensor the architecture needs must be present
/// exactly once with the right shape; nothing is returned on any error.
pub fn model_from_bytes<T: Element>(bytes: &[u8]) -> Result<DescriptorModel<T>> {
    let mut r = Reader::new(bytes, "model file");
    r.magic(MODEL_MAGIC)?;
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "unsupported model version {version}, expected {MODEL_VERSION}"
        )));
    }
    let len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Format("architecture text is not utf-8".into()))?;
    let spec = ArchitectureSpec::parse(text).map_err(|e| Error::Format(format!("architecture: {e}")))?;
    let mut model = DescriptorModel::<T>::zeros(spec).map_err(|e| Error::Format(format!("architecture: {e}")))?;
    let expected: Vec<String> = model.state().into_iter().map(|(n, _)| n).collect();
    let mut seen = HashSet::new();
    while r.remaining() > 0 {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Format("tensor name is not utf-8".into()))?;
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(Error::Format(format!("tensor `{name}` has implausible rank {rank}")));
        }
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let count = count.ok_or_else(|| Error::Format(format!("tensor `{name}` size overflows")))?;
        let data = r.f32s(count)?;
        let slot = model
            .state_mut(&name)
            .ok_or_else(|| Error::Format(format!("unknown tensor `{name}`")))?;
        if slot.shape() != dims.as_slice() {
            return Err(Error::Format(format!(
                "tensor `{name}` has shape {dims:?}, architecture needs {:?}",
                slot.shape()
            )));
        }
        if !seen.insert(name.clone()) {
            return Err(Error::Format(format!("tensor `{name}` appears twice")));
        }
        *slot = Tensor::new(dims, data.into_iter().map(|v| T::from_f64(v as f64)).collect())?;
    }
    if let Some(missing) = expected.iter().find(|n| !seen.contains(*n)) {
        return Err(Error::Format(format!("model file lacks tensor `{missing}`")));
    }
    Ok(model)
}

pub fn save_model<T: Element>(model: &DescriptorModel<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)?)?;
    Ok(())
}

pub fn load_model<T: Element>(path: impl AsRef<Path>) -> Result<DescriptorModel<T>> {
    model_from_bytes(&std::fs::read(path)?)
}
