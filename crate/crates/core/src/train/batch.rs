use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::data::{transform, PatchDataset};
use crate::error::{Error, Result};
use crate::model::Patch;

/// `n` anchor/positive pairs from `n` distinct points.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchBatch {
    pub anchors: Vec<Patch>,
    pub positives: Vec<Patch>,
    pub point_ids: Vec<u64>,
    /// Dataset indices of the anchors (before augmentation).
    pub anchor_indices: Vec<usize>,
    pub positive_indices: Vec<usize>,
}

impl PatchBatch {
    pub fn len(&self) -> usize {
        self.point_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_ids.is_empty()
    }

    pub fn has_distinct_points(&self) -> bool {
        let mut ids = self.point_ids.clone();
        ids.sort_unstable();
        ids.windows(2).all(|w| w[0] != w[1])
    }
}

/// One pair per listed point: anchor and positive drawn without replacement
/// from that point's patches. With `augment`, both get the same random flip
/// and quarter-turn.
pub fn batch_from_points<R: Rng + ?Sized>(
    dataset: &PatchDataset,
    points: &[u64],
    augment: bool,
    rng: &mut R,
) -> Result<PatchBatch> {
    let mut b = PatchBatch {
        anchors: Vec::with_capacity(points.len()),
        positives: Vec::with_capacity(points.len()),
        point_ids: points.to_vec(),
        anchor_indices: Vec::with_capacity(points.len()),
        positive_indices: Vec::with_capacity(points.len()),
    };
    for &id in points {
        let idx = dataset
            .index()
            .get(&id)
            .filter(|v| v.len() >= 2)
            .ok_or_else(|| Error::DatasetTooSmall(format!("point {id} has fewer than two patches")))?;
        let pick: Vec<usize> = idx.choose_multiple(rng, 2).copied().collect();
        let (a, p) = (dataset.patch(pick[0]), dataset.patch(pick[1]));
        let (a, p) = if augment {
            let flip = rng.random_bool(0.5);
            let turns = rng.random_range(0..4u8);
            (transform(a, flip, turns), transform(p, flip, turns))
        } else {
            (a.clone(), p.clone())
        };
        b.anchors.push(a);
        b.positives.push(p);
        b.anchor_indices.push(pick[0]);
        b.positive_indices.push(pick[1]);
    }
    if !b.has_distinct_points() {
        return Err(Error::Contract("batch repeats a point".into()));
    }
    Ok(b)
}

/// `n` pairs from `n` distinct points sampled uniformly.
pub fn assemble_batch<R: Rng + ?Sized>(
    dataset: &PatchDataset,
    n: usize,
    augment: bool,
    rng: &mut R,
) -> Result<PatchBatch> {
    let points = dataset.trainable_points();
    if points.len() < n {
        return Err(Error::DatasetTooSmall(format!(
            "batch of {n} needs {n} points with two patches, dataset has {}",
            points.len()
        )));
    }
    let chosen: Vec<u64> = points.choose_multiple(rng, n).copied().collect();
    batch_from_points(dataset, &chosen, augment, rng)
}

/// Point lists for one epoch: trainable points shuffled, cut into
/// `⌊points / n⌋` batches; the remainder is dropped.
pub fn epoch_batches<R: Rng + ?Sized>(dataset: &PatchDataset, n: usize, rng: &mut R) -> Result<Vec<Vec<u64>>> {
    let mut points = dataset.trainable_points();
    if points.len() < n || n == 0 {
        return Err(Error::DatasetTooSmall(format!(
            "batch of {n} needs {n} points with two patches, dataset has {}",
            points.len()
        )));
    }
    points.shuffle(rng);
    Ok(points.chunks_exact(n).map(<[u64]>::to_vec).collect())
}
