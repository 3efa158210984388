use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{put_u32, Reader};
use crate::tensor::{Element, Tensor};

pub const DESC_MAGIC: &[u8; 4] = b"HDSC";

pub fn descriptors_to_bytes<T: Element>(descs: &Tensor<T>) -> Result<Vec<u8>> {
    let [n, d] = *descs.shape() else {
        return Err(Error::Shape(format!(
            "descriptors must be [n, d], got {:?}",
            descs.shape()
        )));
    };
    let mut out = Vec::with_capacity(12 + 4 * n * d);
    out.extend_from_slice(DESC_MAGIC);
    put_u32(&mut out, n)?;
    put_u32(&mut out, d)?;
    for &v in descs.data() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn descriptors_from_bytes(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut r = Reader::new(bytes, "descriptor file");
    r.magic(DESC_MAGIC)?;
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let count = n
        .checked_mul(d)
        .ok_or_else(|| Error::Format(format!("descriptor count {n} x {d} overflows")))?;
    let data = r.f32s(count)?;
    if r.remaining() != 0 {
        return Err(Error::Format(format!(
            "descriptor file has {} bytes after {n} x {d} values",
            r.remaining()
        )));
    }
    Tensor::new(vec![n, d], data)
}

pub fn export_descriptors<T: Element>(descs: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, descriptors_to_bytes(descs)?)?;
    Ok(())
}

pub fn import_descriptors(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    descriptors_from_bytes(&std::fs::read(path)?)
}
