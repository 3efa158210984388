use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Patch;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Brown,
    Synthetic,
}

/// Patches plus a `point_id → patch indices` index.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchDataset {
    patches: Vec<Patch>,
    index: BTreeMap<u64, Vec<usize>>,
    pub provenance: Provenance,
}

impl PatchDataset {
    pub fn new(patches: Vec<Patch>, provenance: Provenance) -> Result<Self> {
        let mut index: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, p) in patches.iter().enumerate() {
            index.entry(p.point_id).or_default().push(i);
        }
        if let Some(size) = patches.first().map(Patch::size) {
            if let Some(p) = patches.iter().find(|p| p.size() != size) {
                return Err(Error::Shape(format!("mixed patch sizes {size} and {}", p.size())));
            }
        }
        Ok(Self {
            patches,
            index,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn patch(&self, i: usize) -> &Patch {
        &self.patches[i]
    }

    pub fn patch_size(&self) -> Option<usize> {
        self.patches.first().map(Patch::size)
    }

    pub fn index(&self) -> &BTreeMap<u64, Vec<usize>> {
        &self.index
    }

    pub fn num_points(&self) -> usize {
        self.index.len()
    }

    pub fn point_ids(&self) -> Vec<u64> {
        self.patches.iter().map(|p| p.point_id).collect()
    }

    /// Points with at least two patches, in ascending id order.
    pub fn trainable_points(&self) -> Vec<u64> {
        self.index
            .iter()
            .filter(|(_, v)| v.len() >= 2)
            .map(|(&k, _)| k)
            .collect()
    }

    /// Dataset restricted to the given points (patch order preserved).
    pub fn subset(&self, points: &[u64]) -> Self {
        let keep: std::collections::BTreeSet<u64> = points.iter().copied().collect();
        let patches = self
            .patches
            .iter()
            .filter(|p| keep.contains(&p.point_id))
            .cloned()
            .collect();
        Self::new(patches, self.provenance).expect("subset of a valid dataset")
    }

    /// Splits by point: a seeded shuffle sends `held_out` points to the
    /// second dataset.
    pub fn split_points(&self, held_out: usize, seed: u64) -> Result<(Self, Self)> {
        let mut ids: Vec<u64> = self.index.keys().copied().collect();
        if held_out >= ids.len() {
            return Err(Error::DatasetTooSmall(format!(
                "cannot hold out {held_out} of {} points",
                ids.len()
            )));
        }
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (test, train) = ids.split_at(held_out);
        Ok((self.subset(train), self.subset(test)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy(ids: &[u64]) -> PatchDataset {
        let patches = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| Patch::new(2, vec![(i % 5) as f32 / 4.0; 4], id).unwrap())
            .collect();
        PatchDataset::new(patches, Provenance::Synthetic).unwrap()
    }

    #[test]
    fn index_lists_every_patch() {
        let d = toy(&[7, 7, 9, 9, 3]);
        assert_eq!(d.num_points(), 3);
        assert_eq!(d.index()[&7], vec![0, 1]);
        assert_eq!(d.trainable_points(), vec![7, 9]);
        let total: usize = d.index().values().map(Vec::len).sum();
        assert_eq!(total, d.len());
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let ids: Vec<u64> = (0..20).flat_map(|i| [i, i]).collect();
        let d = toy(&ids);
        let (a, b) = d.split_points(5, 1).unwrap();
        assert_eq!(b.num_points(), 5);
        assert_eq!(a.num_points(), 15);
        assert!(b.index().keys().all(|k| !a.index().contains_key(k)));
        assert_eq!(d.split_points(5, 1).unwrap(), (a, b));
        assert!(d.split_points(20, 1).is_err());
    }

    #[test]
    fn mixed_sizes_rejected() {
        let p = vec![
            Patch::new(2, vec![0.0; 4], 1).unwrap(),
            Patch::new(1, vec![0.0], 1).unwrap(),
        ];
        assert!(PatchDataset::new(p, Provenance::Brown).is_err());
    }
}
