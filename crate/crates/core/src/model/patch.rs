use super::model::DescriptorModel;
use crate::error::{Error, Result};
use crate::nn::LayerMode;
use crate::tensor::{Element, Tensor};

/// Floor on the standard deviation used by [`normalize_patch`].
pub const MIN_PATCH_STD: f64 = 1e-7;

/// Square grayscale patch with intensities in `[0, 1]`, row-major.
///
/// Two patches correspond when their `point_id`s are equal.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    size: usize,
    pixels: Vec<f32>,
    pub point_id: u64,
}

impl Patch {
    pub fn new(size: usize, pixels: Vec<f32>, point_id: u64) -> Result<Self> {
        if size == 0 || pixels.len() != size * size {
            return Err(Error::Shape(format!(
                "patch of size {size} needs {} pixels, got {}",
                size * size,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!("patch intensity {v} outside [0, 1]")));
        }
        Ok(Self { size, pixels, point_id })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.size + col]
    }

    /// True when every pixel has the same value.
    pub fn is_constant(&self) -> bool {
        self.pixels.iter().all(|&v| v == self.pixels[0])
    }
}

/// 2×2 box-average downsampling of a 64×64 patch.
pub fn resize_patch_64_to_32(p: &Patch) -> Result<Patch> {
    if p.size != 64 {
        return Err(Error::Shape(format!(
            "resize expects a 64x64 patch, got {0}x{0}",
            p.size
        )));
    }
    let mut out = Vec::with_capacity(32 * 32);
    for r in 0..32 {
        for c in 0..32 {
            let sum = p.at(2 * r, 2 * c) + p.at(2 * r, 2 * c + 1) + p.at(2 * r + 1, 2 * c) + p.at(2 * r + 1, 2 * c + 1);
            out.push((sum * 0.25).clamp(0.0, 1.0));
        }
    }
    Patch::new(32, out, p.point_id)
}

/// Subtracts the patch mean and divides by `max(std, 1e-7)` (population
/// std). Returns `[1, s, s]`.
pub fn normalize_patch<T: Element>(p: &Patch) -> Tensor<T> {
    let n = p.pixels.len() as f64;
    let mean = p.pixels.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = p.pixels.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(MIN_PATCH_STD);
    let data = p.pixels.iter().map(|&v| T::from_f64((v as f64 - mean) / std)).collect();
    Tensor::new(vec![1, p.size, p.size], data).expect("size checked at construction")
}

/// Resizes (when 64×64 and the model expects 32) and normalizes patches into
/// a `[n, 1, s, s]` batch. Constant patches are kept and logged.
pub fn prepare_batch<T: Element>(patches: &[&Patch], input_size: usize) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(patches.len() * input_size * input_size);
    let mut degenerate = 0usize;
    for p in patches {
        let resized;
        let p = if p.size == input_size {
            *p
        } else if p.size == 64 && input_size == 32 {
            resized = resize_patch_64_to_32(p)?;
            &resized
        } else {
            return Err(Error::Shape(format!(
                "patch of size {} cannot feed a {input_size}x{input_size} model",
                p.size
            )));
        };
        if p.is_constant() {
            degenerate += 1;
        }
        data.extend(normalize_patch::<T>(p).into_data());
    }
    if degenerate > 0 {
        log::warn!("{degenerate} constant patch(es) normalize to all zeros");
    }
    Tensor::new(vec![patches.len(), 1, input_size, input_size], data)
}

/// Inference-mode descriptors for raw patches, `[n, dim]`.
pub fn describe_patches<T: Element>(model: &DescriptorModel<T>, patches: &[&Patch]) -> Result<Tensor<T>> {
    if patches.is_empty() {
        return Ok(Tensor::zeros(vec![0, model.descriptor_dim()]));
    }
    let batch = prepare_batch(patches, model.input_size())?;
    model.describe(&batch, LayerMode::Inference, &mut NoRng)
}

/// Inference never draws random numbers; this satisfies the signature.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("inference does not sample")
    }

    fn next_u64(&mut self) -> u64 {
        unreachable!("inference does not sample")
    }

    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("inference does not sample")
    }
}
