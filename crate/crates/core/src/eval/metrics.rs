use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Guards `ceil(recall · P)` against representation error, so that
/// `0.95 · 20` counts as 19 and not 20.
const CEIL_SLACK: f64 = 1e-9;

/// Distances of matching (positive) and non-matching (negative) pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoredPairs {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

impl ScoredPairs {
    pub fn new(positives: Vec<f64>, negatives: Vec<f64>) -> Result<Self> {
        if let Some(v) = positives
            .iter()
            .chain(&negatives)
            .find(|v| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Contract(format!(
                "pair distance {v} is not a finite non-negative number"
            )));
        }
        Ok(Self { positives, negatives })
    }
}

/// Operating point at a target recall: distances `<= threshold` are accepted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
}

/// Smallest positive distance `t` such that at least `ceil(recall · P)`
/// positives satisfy `d <= t`; no interpolation between thresholds.
pub fn operating_point(pairs: &ScoredPairs, recall: f64) -> Result<OperatingPoint> {
    if !(recall > 0.0 && recall <= 1.0) {
        return Err(Error::Contract(format!("recall {recall} outside (0, 1]")));
    }
    if pairs.positives.is_empty() {
        return Err(Error::Contract("no positive pairs".into()));
    }
    let mut pos = pairs.positives.clone();
    pos.sort_by(f64::total_cmp);
    let needed = ((recall * pos.len() as f64 - CEIL_SLACK).ceil() as usize).clamp(1, pos.len());
    let threshold = pos[needed - 1];
    Ok(OperatingPoint {
        threshold,
        true_positives: pos.iter().filter(|&&d| d <= threshold).count(),
        false_positives: pairs.negatives.iter().filter(|&&d| d <= threshold).count(),
    })
}

/// False positive rate `FP / N` at the recall operating point.
pub fn fpr_at_recall(pairs: &ScoredPairs, recall: f64) -> Result<f64> {
    let op = operating_point(pairs, recall)?;
    if pairs.negatives.is_empty() {
        return Err(Error::Contract("no negative pairs".into()));
    }
    Ok(op.false_positives as f64 / pairs.negatives.len() as f64)
}

/// False discovery rate `FP / (FP + TP)` at the recall operating point.
pub fn fdr_at_recall(pairs: &ScoredPairs, recall: f64) -> Result<f64> {
    let op = operating_point(pairs, recall)?;
    Ok(op.false_positives as f64 / (op.false_positives + op.true_positives) as f64)
}

/// Mean over match positions `k` (1-based) of `matches in top k / k`.
pub fn average_precision(ranked_matches: &[bool]) -> Result<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &m) in ranked_matches.iter().enumerate() {
        if m {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::Contract("average precision needs at least one match".into()));
    }
    Ok(sum / hits as f64)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rows_f64<T: Element>(t: &Tensor<T>, what: &str) -> Result<(usize, usize, Vec<f64>)> {
    match *t.shape() {
        [n, d] => Ok((n, d, t.data().iter().map(|v| v.as_f64()).collect())),
        _ => Err(Error::Shape(format!("{what} must be [n, d], got {:?}", t.shape()))),
    }
}

/// 1-based rank of candidate `target` when `candidates` are sorted by
/// distance to `query`, ties going to the lower index.
fn rank_of(query: &[f64], candidates: &[f64], d: usize, target: usize) -> usize {
    let dt = squared_distance(query, &candidates[target * d..(target + 1) * d]);
    let mut rank = 1;
    for (j, c) in candidates.chunks(d).enumerate() {
        let dj = squared_distance(query, c);
        if dj < dt || (dj == dt && j < target) {
            rank += 1;
        }
    }
    rank
}

/// Each `a_i` ranks all of `b`; the true match is `b_i`. Mean of `1/rank`.
pub fn matching_map<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let (m, d, av) = rows_f64(a, "query descriptors")?;
    let (mb, db, bv) = rows_f64(b, "database descriptors")?;
    if m != mb || d != db {
        return Err(Error::ShapeMismatch {
            op: "matching_map",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    if m < 2 {
        return Err(Error::Contract(format!(
            "matching needs at least 2 descriptors, got {m}"
        )));
    }
    let total: f64 = (0..m)
        .map(|i| 1.0 / rank_of(&av[i * d..(i + 1) * d], &bv, d, i) as f64)
        .sum();
    Ok(total / m as f64)
}

/// Query `i` ranks `matching_db ∪ distractors`; its only relevant item is
/// `matching_db[i]`. Mean of `1/rank`.
pub fn retrieval_map<T: Element>(queries: &Tensor<T>, matching_db: &Tensor<T>, distractors: &Tensor<T>) -> Result<f64> {
    let (q, d, qv) = rows_f64(queries, "queries")?;
    let (m, dm, mv) = rows_f64(matching_db, "matching database")?;
    let (_, dd, xv) = rows_f64(distractors, "distractors")?;
    if m != q {
        return Err(Error::Contract(format!("{q} queries but {m} true matches")));
    }
    if d != dm || (dd != d && !xv.is_empty()) {
        return Err(Error::Shape(format!("descriptor dims differ: {d}, {dm}, {dd}")));
    }
    if q == 0 {
        return Err(Error::Empty("no retrieval queries".into()));
    }
    let mut pool = mv;
    pool.extend_from_slice(&xv);
    let total: f64 = (0..q)
        .map(|i| 1.0 / rank_of(&qv[i * d..(i + 1) * d], &pool, d, i) as f64)
        .sum();
    Ok(total / q as f64)
}

/// `retrieval_map` using the first `k` distractors, for each `k` in `counts`.
pub fn retrieval_curve<T: Element>(
    queries: &Tensor<T>,
    matching_db: &Tensor<T>,
    distractors: &Tensor<T>,
    counts: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let available = distractors.shape().first().copied().unwrap_or(0);
    counts
        .iter()
        .map(|&k| {
            if k > available {
                return Err(Error::Contract(format!(
                    "{k} distractors requested, {available} available"
                )));
            }
            Ok((
                k,
                retrieval_map(queries, matching_db, &distractors.slice_leading(0, k)?)?,
            ))
        })
        .collect()
}
