use std::path::{Path, PathBuf};

use image::{GrayImage, ImageFormat, Luma};

use super::dataset::{PatchDataset, Provenance};
use crate::error::{Error, Result};
use crate::model::Patch;

pub const BROWN_PATCH: usize = 64;
/// Patches per montage side.
pub const BROWN_GRID: usize = 16;
pub const INFO_FILE: &str = "info.txt";

fn montage_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("bmp") || e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn read_info(dir: &Path) -> Result<Vec<u64>> {
    let path = dir.join(INFO_FILE);
    let text = std::fs::read_to_string(&path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let tok = l.split_whitespace().next().unwrap_or("");
            tok.parse::<u64>()
                .map_err(|_| Error::Format(format!("{}: line {} has point id `{tok}`", path.display(), i + 1)))
        })
        .collect()
}

/// Loads montages (sorted by file name, patches row-major) and `info.txt`
/// (first token of each line is the point id). Montage sides must be
/// multiples of 64; unused cells after the last listed patch are ignored.
pub fn load_brown(dir: impl AsRef<Path>) -> Result<PatchDataset> {
    let dir = dir.as_ref();
    let ids = read_info(dir)?;
    let files = montage_files(dir)?;
    let mut patches = Vec::with_capacity(ids.len());
    for (fi, file) in files.iter().enumerate() {
        if patches.len() == ids.len() {
            return Err(Error::Format(format!(
                "{} patches listed in {INFO_FILE} but montage {} is left over",
                ids.len(),
                file.display()
            )));
        }
        let img = image::open(file)?.to_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w == 0 || h == 0 || w % BROWN_PATCH != 0 || h % BROWN_PATCH != 0 {
            return Err(Error::Format(format!(
                "{}: montage size {w}x{h} is not a multiple of {BROWN_PATCH}",
                file.display()
            )));
        }
        let (cols, rows) = (w / BROWN_PATCH, h / BROWN_PATCH);
        'cells: for r in 0..rows {
            for c in 0..cols {
                if patches.len() == ids.len() {
                    if fi + 1 != files.len() {
                        return Err(Error::Format(format!(
                            "{} patches listed in {INFO_FILE} but more montages follow {}",
                            ids.len(),
                            file.display()
                        )));
                    }
                    break 'cells;
                }
                let mut px = Vec::with_capacity(BROWN_PATCH * BROWN_PATCH);
                for y in 0..BROWN_PATCH {
                    for x in 0..BROWN_PATCH {
                        let v = img.get_pixel((c * BROWN_PATCH + x) as u32, (r * BROWN_PATCH + y) as u32)[0];
                        px.push(v as f32 / 255.0);
                    }
                }
                patches.push(Patch::new(BROWN_PATCH, px, ids[patches.len()])?);
            }
        }
    }
    if patches.len() != ids.len() {
        return Err(Error::Format(format!(
            "{INFO_FILE} lists {} patches but the montages hold {}",
            ids.len(),
            patches.len()
        )));
    }
    PatchDataset::new(patches, Provenance::Brown)
}

/// Writes 64×64 patches as 1024×1024 BMP montages plus `info.txt`.
///
/// Pixels are stored as 8-bit gray, so intensities should be multiples of
/// 1/255 for an exact round trip. The last montage is shrunk to the rows it
/// needs.
pub fn write_brown(dataset: &PatchDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if let Some(s) = dataset.patch_size().filter(|&s| s != BROWN_PATCH) {
        return Err(Error::Shape(format!(
            "montages hold {BROWN_PATCH}x{BROWN_PATCH} patches, got {s}x{s}"
        )));
    }
    std::fs::create_dir_all(dir)?;
    let per = BROWN_GRID * BROWN_GRID;
    for (m, chunk) in dataset.patches().chunks(per).enumerate() {
        let rows = chunk.len().div_ceil(BROWN_GRID);
        let side = (BROWN_GRID * BROWN_PATCH) as u32;
        let mut img = GrayImage::new(side, (rows * BROWN_PATCH) as u32);
        for (k, p) in chunk.iter().enumerate() {
            let (r, c) = (k / BROWN_GRID, k % BROWN_GRID);
            for y in 0..BROWN_PATCH {
                for x in 0..BROWN_PATCH {
                    let v = (p.at(y, x) * 255.0).round().clamp(0.0, 255.0) as u8;
                    img.put_pixel((c * BROWN_PATCH + x) as u32, (r * BROWN_PATCH + y) as u32, Luma([v]));
                }
            }
        }
        img.save_with_format(dir.join(format!("patches{m:04}.bmp")), ImageFormat::Bmp)?;
    }
    let info: String = dataset
        .patches()
        .iter()
        .map(|p| format!("{} 0\n", p.point_id))
        .collect();
    std::fs::write(dir.join(INFO_FILE), info)?;
    Ok(())
}
