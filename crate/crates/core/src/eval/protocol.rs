use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::{fdr_at_recall, fpr_at_recall, matching_map, ScoredPairs};
use crate::data::PatchDataset;
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::model::{describe_patches, DescriptorModel};
use crate::tensor::{Element, Tensor};

pub const DEFAULT_RECALL: f64 = 0.95;

/// Patch index pairs for verification.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerificationPairs {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

/// Every same-point pair is a positive. `num_negatives` negatives pair two
/// patches of distinct points drawn uniformly with a seeded rng.
pub fn verification_pairs(dataset: &PatchDataset, num_negatives: usize, seed: u64) -> Result<VerificationPairs> {
    let mut positives = Vec::new();
    for idx in dataset.index().values() {
        for (k, &i) in idx.iter().enumerate() {
            positives.extend(idx[k + 1..].iter().map(|&j| (i, j)));
        }
    }
    if positives.is_empty() {
        return Err(Error::DatasetTooSmall("no point has two patches".into()));
    }
    if dataset.num_points() < 2 {
        return Err(Error::DatasetTooSmall("negatives need at least two points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dataset.len();
    let mut negatives = Vec::with_capacity(num_negatives);
    while negatives.len() < num_negatives {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if dataset.patch(i).point_id != dataset.patch(j).point_id {
            negatives.push((i, j));
        }
    }
    Ok(VerificationPairs { positives, negatives })
}

fn row_distance<T: Element>(descs: &Tensor<T>, i: usize, j: usize) -> f64 {
    let (a, b) = (descs.row(i), descs.row(j));
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// L2 distances of each pair of descriptor rows.
pub fn score_pairs<T: Element>(descs: &Tensor<T>, pairs: &VerificationPairs) -> Result<ScoredPairs> {
    let [n, _] = *descs.shape() else {
        return Err(Error::Shape(format!(
            "descriptors must be [n, d], got {:?}",
            descs.shape()
        )));
    };
    if let Some(&(i, j)) = pairs
        .positives
        .iter()
        .chain(&pairs.negatives)
        .find(|&&(i, j)| i >= n || j >= n)
    {
        return Err(Error::Contract(format!(
            "pair ({i}, {j}) out of range for {n} descriptors"
        )));
    }
    let score = |v: &[(usize, usize)]| v.iter().map(|&(i, j)| row_distance(descs, i, j)).collect();
    ScoredPairs::new(score(&pairs.positives), score(&pairs.negatives))
}

/// Rows `a_i` and `b_i` match. Each `a_i` also gets one negative `b_j`,
/// `j ≠ i` drawn uniformly with a seeded rng.
pub fn aligned_verification<T: Element>(a: &Tensor<T>, b: &Tensor<T>, seed: u64) -> Result<ScoredPairs> {
    if a.shape() != b.shape() || a.rank() != 2 {
        return Err(Error::ShapeMismatch {
            op: "aligned_verification",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let m = a.shape()[0];
    if m < 2 {
        return Err(Error::Contract(format!(
            "verification needs at least 2 descriptor pairs, got {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let joint = Tensor::concat_leading(&[a, b])?;
    let pairs = VerificationPairs {
        positives: (0..m).map(|i| (i, m + i)).collect(),
        negatives: (0..m)
            .map(|i| {
                let j = rng.random_range(0..m - 1);
                (i, m + if j >= i { j + 1 } else { j })
            })
            .collect(),
    };
    score_pairs(&joint, &pairs)
}

/// First and second patch of every point that has two, as row indices.
pub fn correspondence_split(dataset: &PatchDataset) -> (Vec<usize>, Vec<usize>) {
    dataset
        .index()
        .values()
        .filter(|v| v.len() >= 2)
        .map(|v| (v[0], v[1]))
        .unzip()
}

pub fn gather_rows<T: Element>(descs: &Tensor<T>, rows: &[usize]) -> Result<Tensor<T>> {
    let [n, d] = *descs.shape() else {
        return Err(Error::Shape(format!(
            "descriptors must be [n, d], got {:?}",
            descs.shape()
        )));
    };
    let mut out = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        if r >= n {
            return Err(Error::Contract(format!("row {r} out of range for {n} descriptors")));
        }
        out.extend_from_slice(descs.row(r));
    }
    Tensor::new(vec![rows.len(), d], out)
}

pub fn describe_dataset<T: Element>(model: &DescriptorModel<T>, dataset: &PatchDataset) -> Result<Tensor<T>> {
    let refs: Vec<_> = dataset.patches().iter().collect();
    describe_patches(model, &refs)
}

/// FPR95 and FDR95 of a descriptor set over the dataset's verification
/// pairs, with as many negatives as positives.
pub fn verification_rates<T: Element>(descs: &Tensor<T>, dataset: &PatchDataset, seed: u64) -> Result<(f64, f64)> {
    let positives = verification_pairs(dataset, 0, seed)?.positives.len();
    let pairs = verification_pairs(dataset, positives, seed)?;
    let scored = score_pairs(descs, &pairs)?;
    Ok((
        fpr_at_recall(&scored, DEFAULT_RECALL)?,
        fdr_at_recall(&scored, DEFAULT_RECALL)?,
    ))
}

pub fn model_fpr95<T: Element>(model: &DescriptorModel<T>, dataset: &PatchDataset, seed: u64) -> Result<f64> {
    Ok(verification_rates(&describe_dataset(model, dataset)?, dataset, seed)?.0)
}

/// Matching mAP between the first and second views of every point.
pub fn dataset_matching_map<T: Element>(descs: &Tensor<T>, dataset: &PatchDataset) -> Result<f64> {
    let (a, b) = correspondence_split(dataset);
    matching_map(&gather_rows(descs, &a)?, &gather_rows(descs, &b)?)
}

pub fn model_matching_map<T: Element>(model: &DescriptorModel<T>, dataset: &PatchDataset) -> Result<f64> {
    dataset_matching_map(&describe_dataset(model, dataset)?, dataset)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub fpr95: Option<f64>,
    pub fdr95: Option<f64>,
    pub matching_map: Option<f64>,
    pub retrieval: Vec<(usize, f64)>,
}

impl EvalReport {
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        let fields = [
            ("fpr95", self.fpr95),
            ("fdr95", self.fdr95),
            ("matching_map", self.matching_map),
        ];
        for (k, v) in fields {
            if let Some(v) = v {
                kv.set(k, v);
            }
        }
        for &(k, m) in &self.retrieval {
            kv.set(&format!("retrieval_map.{k}"), m);
        }
        kv
    }

    pub fn retrieval_csv(&self) -> String {
        let mut s = String::from("distractor_count,map\n");
        for &(k, m) in &self.retrieval {
            s.push_str(&format!("{k},{m}\n"));
        }
        s
    }
}
