use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{PatchDataset, Provenance};
use crate::error::{Error, Result};
use crate::kv::{parse_list, KeyValues};
use crate::model::Patch;

pub const SYNTH_PATCH: usize = 64;

/// (cell size in pixels, amplitude) per value-noise octave.
const OCTAVES: [(f64, f64); 3] = [(16.0, 1.0), (8.0, 0.4), (4.0, 0.15)];
/// Stretches the octave sum so textures use most of `[0, 1]`.
const TEXTURE_GAIN: f64 = 1.6;

const PURPOSE_TEXTURE: u64 = 1;
const PURPOSE_GEOMETRY: u64 = 2;
const PURPOSE_PHOTOMETRY: u64 = 3;
const PURPOSE_NOISE: u64 = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub num_points: usize,
    pub patches_per_point: usize,
    pub texture_seed: u64,
    pub max_rotation_deg: f64,
    pub scale_range: (f64, f64),
    pub max_translation: f64,
    /// Additive offset drawn from `[-brightness, brightness]`.
    pub brightness: f64,
    pub contrast_range: (f64, f64),
    pub noise_sigma: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_points: 2000,
            patches_per_point: 2,
            texture_seed: 0,
            max_rotation_deg: 15.0,
            scale_range: (0.9, 1.1),
            max_translation: 2.0,
            brightness: 0.05,
            contrast_range: (0.9, 1.1),
            noise_sigma: 0.02,
        }
    }
}

const KEYS: [&str; 9] = [
    "num_points",
    "patches_per_point",
    "texture_seed",
    "max_rotation_deg",
    "scale_range",
    "max_translation",
    "brightness",
    "contrast_range",
    "noise_sigma",
];

fn range(kv: &KeyValues, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
    match kv.get(key) {
        None => Ok(default),
        Some(v) => match parse_list::<f64>(key, v)?.as_slice() {
            [lo, hi] => Ok((*lo, *hi)),
            _ => Err(Error::config(key, format!("expected `lo,hi`, got `{v}`"))),
        },
    }
}

impl SyntheticConfig {
    /// No jitter, no noise: every patch of a point is identical.
    pub fn without_jitter(num_points: usize, patches_per_point: usize) -> Self {
        Self {
            num_points,
            patches_per_point,
            max_rotation_deg: 0.0,
            scale_range: (1.0, 1.0),
            max_translation: 0.0,
            brightness: 0.0,
            contrast_range: (1.0, 1.0),
            noise_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |k: &str, m: String| Err(Error::config(k, m));
        if self.num_points == 0 {
            return err("num_points", "must be >= 1".into());
        }
        if self.patches_per_point < 2 {
            return err(
                "patches_per_point",
                format!("must be >= 2, got {}", self.patches_per_point),
            );
        }
        if !(0.0..=180.0).contains(&self.max_rotation_deg) {
            return err(
                "max_rotation_deg",
                format!("must lie in [0, 180], got {}", self.max_rotation_deg),
            );
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return err("scale_range", format!("needs 0 < lo <= hi, got {lo},{hi}"));
        }
        if !(0.0..=16.0).contains(&self.max_translation) {
            return err(
                "max_translation",
                format!("must lie in [0, 16], got {}", self.max_translation),
            );
        }
        if !(0.0..=1.0).contains(&self.brightness) {
            return err("brightness", format!("must lie in [0, 1], got {}", self.brightness));
        }
        let (lo, hi) = self.contrast_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return err("contrast_range", format!("needs 0 < lo <= hi, got {lo},{hi}"));
        }
        if !(0.0..=1.0).contains(&self.noise_sigma) {
            return err("noise_sigma", format!("must lie in [0, 1], got {}", self.noise_sigma));
        }
        Ok(())
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(&KEYS)?;
        let d = Self::default();
        let c = Self {
            num_points: kv.parsed("num_points")?.unwrap_or(d.num_points),
            patches_per_point: kv.parsed("patches_per_point")?.unwrap_or(d.patches_per_point),
            texture_seed: kv.parsed("texture_seed")?.unwrap_or(d.texture_seed),
            max_rotation_deg: kv.parsed("max_rotation_deg")?.unwrap_or(d.max_rotation_deg),
            scale_range: range(kv, "scale_range", d.scale_range)?,
            max_translation: kv.parsed("max_translation")?.unwrap_or(d.max_translation),
            brightness: kv.parsed("brightness")?.unwrap_or(d.brightness),
            contrast_range: range(kv, "contrast_range", d.contrast_range)?,
            noise_sigma: kv.parsed("noise_sigma")?.unwrap_or(d.noise_sigma),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("num_points", self.num_points);
        kv.set("patches_per_point", self.patches_per_point);
        kv.set("texture_seed", self.texture_seed);
        kv.set("max_rotation_deg", self.max_rotation_deg);
        kv.set("scale_range", format!("{},{}", self.scale_range.0, self.scale_range.1));
        kv.set("max_translation", self.max_translation);
        kv.set("brightness", self.brightness);
        kv.set(
            "contrast_range",
            format!("{},{}", self.contrast_range.0, self.contrast_range.1),
        );
        kv.set("noise_sigma", self.noise_sigma);
        kv
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based hash of a tuple of words.
pub(crate) fn key(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x1234_5678_9ABC_DEF0, |h, &p| splitmix(h ^ splitmix(p)))
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn quintic(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Band-limited value noise of one point, defined on the continuous plane.
struct Texture {
    key: u64,
}

impl Texture {
    fn lattice(&self, octave: usize, ix: i64, iy: i64) -> f64 {
        unit(key(&[self.key, octave as u64, ix as u64, iy as u64]))
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let mut sum = 0.0;
        let mut norm = 0.0;
        for (o, &(cell, amp)) in OCTAVES.iter().enumerate() {
            let (gx, gy) = (x / cell, y / cell);
            let (fx0, fy0) = (libm::floor(gx), libm::floor(gy));
            let (ix, iy) = (fx0 as i64, fy0 as i64);
            let (tx, ty) = (quintic(gx - fx0), quintic(gy - fy0));
            let top = self.lattice(o, ix, iy) * (1.0 - tx) + self.lattice(o, ix + 1, iy) * tx;
            let bottom = self.lattice(o, ix, iy + 1) * (1.0 - tx) + self.lattice(o, ix + 1, iy + 1) * tx;
            sum += amp * ((top * (1.0 - ty) + bottom * ty) - 0.5);
            norm += amp;
        }
        0.5 + TEXTURE_GAIN * sum / norm
    }
}

fn between<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn symmetric<R: Rng>(rng: &mut R, bound: f64) -> f64 {
    between(rng, -bound, bound)
}

/// Box-Muller on libm so the stream is identical across platforms.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
}

fn stream(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(key(parts))
}

fn render(config: &SyntheticConfig, seed: u64, point: u64, view: u64) -> Result<Patch> {
    let texture = Texture {
        key: key(&[seed, config.texture_seed, point, PURPOSE_TEXTURE]),
    };
    let mut geo = stream(&[seed, point, view, PURPOSE_GEOMETRY]);
    let theta = symmetric(&mut geo, config.max_rotation_deg).to_radians();
    let scale = between(&mut geo, config.scale_range.0, config.scale_range.1);
    let (tx, ty) = (
        symmetric(&mut geo, config.max_translation),
        symmetric(&mut geo, config.max_translation),
    );
    let mut photo = stream(&[seed, point, view, PURPOSE_PHOTOMETRY]);
    let brightness = symmetric(&mut photo, config.brightness);
    let contrast = between(&mut photo, config.contrast_range.0, config.contrast_range.1);
    let mut noise = stream(&[seed, point, view, PURPOSE_NOISE]);

    let (c, s) = (libm::cos(theta) * scale, libm::sin(theta) * scale);
    let half = SYNTH_PATCH as f64 / 2.0;
    let mut px = Vec::with_capacity(SYNTH_PATCH * SYNTH_PATCH);
    for i in 0..SYNTH_PATCH {
        for j in 0..SYNTH_PATCH {
            let (x, y) = (j as f64 + 0.5 - half, i as f64 + 0.5 - half);
            let (u, v) = (c * x - s * y + tx, s * x + c * y + ty);
            let mut val = contrast * (texture.at(u, v) - 0.5) + 0.5 + brightness;
            if config.noise_sigma > 0.0 {
                val += config.noise_sigma * gaussian(&mut noise);
            }
            px.push((libm::round(val.clamp(0.0, 1.0) * 255.0) / 255.0) as f32);
        }
    }
    Patch::new(SYNTH_PATCH, px, point)
}

/// Renders `num_points × patches_per_point` 64×64 patches, each an
/// independently jittered view of its point's texture. Point ids are
/// `0..num_points`; patches are ordered by point, then view.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<PatchDataset> {
    config.validate()?;
    let mut patches = Vec::with_capacity(config.num_points * config.patches_per_point);
    for point in 0..config.num_points as u64 {
        for view in 0..config.patches_per_point as u64 {
            patches.push(render(config, seed, point, view)?);
        }
    }
    let ds = PatchDataset::new(patches, Provenance::Synthetic)?;
    debug_assert!(ds.index().values().all(|v| v.len() == config.patches_per_point));
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let cfg = SyntheticConfig {
            num_points: 5,
            ..SyntheticConfig::default()
        };
        assert_eq!(
            generate_synthetic(&cfg, 42).unwrap(),
            generate_synthetic(&cfg, 42).unwrap()
        );
        assert_ne!(
            generate_synthetic(&cfg, 42).unwrap(),
            generate_synthetic(&cfg, 43).unwrap()
        );
    }

    #[test]
    fn earlier_draws_do_not_depend_on_counts() {
        let small = SyntheticConfig {
            num_points: 3,
            ..SyntheticConfig::default()
        };
        let big = SyntheticConfig {
            num_points: 6,
            patches_per_point: 3,
            ..SyntheticConfig::default()
        };
        let a = generate_synthetic(&small, 1).unwrap();
        let b = generate_synthetic(&big, 1).unwrap();
        for p in 0..3 {
            for v in 0..2 {
                assert_eq!(a.patch(p * 2 + v), b.patch(p * 3 + v));
            }
        }
    }

    #[test]
    fn zero_jitter_views_are_identical() {
        let d = generate_synthetic(&SyntheticConfig::without_jitter(4, 3), 7).unwrap();
        for idx in d.index().values() {
            assert!(idx.iter().all(|&i| d.patch(i) == d.patch(idx[0])));
        }
        assert_ne!(d.patch(0).pixels(), d.patch(3).pixels());
    }

    #[test]
    fn dataset_invariants() {
        let d = generate_synthetic(
            &SyntheticConfig {
                num_points: 10,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        assert_eq!(d.num_points(), 10);
        assert_eq!(d.trainable_points().len(), 10);
        for p in d.patches() {
            assert!(p.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(p
                .pixels()
                .iter()
                .all(|&v| ((v * 255.0).round() - v * 255.0).abs() < 1e-3));
            assert!(!p.is_constant());
        }
    }

    #[test]
    fn raw_pixel_nearest_neighbour_finds_the_match() {
        let d = generate_synthetic(
            &SyntheticConfig {
                num_points: 100,
                ..Default::default()
            },
            42,
        )
        .unwrap();
        let n = d.len();
        let mut hits = 0;
        for i in 0..n {
            let a = d.patch(i).pixels();
            let mut best = (f64::INFINITY, usize::MAX);
            for j in (0..n).filter(|&j| j != i) {
                let dist: f64 = a
                    .iter()
                    .zip(d.patch(j).pixels())
                    .map(|(x, y)| ((x - y) as f64).powi(2))
                    .sum();
                if dist < best.0 {
                    best = (dist, j);
                }
            }
            if d.patch(best.1).point_id == d.patch(i).point_id {
                hits += 1;
            }
        }
        let rate = hits as f64 / n as f64;
        assert!(rate >= 0.9, "raw-pixel nearest-neighbour rate {rate}");
    }

    #[test]
    fn config_round_trip_and_validation() {
        let c = SyntheticConfig::default();
        assert_eq!(SyntheticConfig::from_kv(&c.to_kv()).unwrap(), c);
        let kv = KeyValues::parse("scale_range = 1.2, 0.8").unwrap();
        let err = SyntheticConfig::from_kv(&kv).unwrap_err().to_string();
        assert!(err.contains("scale_range"), "{err}");
        let kv = KeyValues::parse("max_rotation_deg = -5").unwrap();
        assert!(SyntheticConfig::from_kv(&kv)
            .unwrap_err()
            .to_string()
            .contains("max_rotation_deg"));
        assert!(SyntheticConfig::from_kv(&KeyValues::parse("colour = 1").unwrap()).is_err());
        assert!(SyntheticConfig::from_kv(&KeyValues::parse("patches_per_point = 1").unwrap()).is_err());
    }
}
