use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Which side of the distance matrix the chosen negative came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NegativeSource {
    /// `p_{j_min}`: an off-diagonal entry `D[i][j]` of row `i`.
    Column,
    /// `a_{k_min}`: an off-diagonal entry `D[k][i]` of column `i`.
    Row,
}

/// One anchor/positive pair `i` with its chosen negative.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletSelection {
    pub index: usize,
    pub j_min: usize,
    /// Absent for random sampling, which only draws column negatives.
    pub k_min: Option<usize>,
    pub source: NegativeSource,
    pub d_pos: f64,
    pub d_neg: f64,
}

impl TripletSelection {
    /// Flat index of the positive distance in an `n × n` matrix.
    pub fn pos_flat(&self, n: usize) -> usize {
        self.index * n + self.index
    }

    /// Flat index of the negative distance in an `n × n` matrix.
    pub fn neg_flat(&self, n: usize) -> usize {
        match self.source {
            NegativeSource::Column => self.index * n + self.j_min,
            NegativeSource::Row => self.k_min.expect("row source has k_min") * n + self.index,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingStrategy {
    HardestInBatch,
    RandomInBatch,
    EpochHardMining,
}

impl SamplingStrategy {
    pub const ALL: [SamplingStrategy; 3] = [Self::HardestInBatch, Self::RandomInBatch, Self::EpochHardMining];

    pub fn name(self) -> &'static str {
        match self {
            Self::HardestInBatch => "hardest_in_batch",
            Self::RandomInBatch => "random_in_batch",
            Self::EpochHardMining => "epoch_hard_mining",
        }
    }
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("sampling", format!("unknown strategy `{s}`")))
    }
}

fn square<T: Element>(d: &Tensor<T>) -> Result<usize> {
    match *d.shape() {
        [n, m] if n == m => Ok(n),
        _ => Err(Error::Shape(format!(
            "distance matrix must be square, got {:?}",
            d.shape()
        ))),
    }
}

/// Hardest-in-batch negatives: for each `i` the closest non-matching entry
/// of row `i` (`j_min`) and of column `i` (`k_min`); the smaller wins, the
/// column negative on ties. Within a row or column the lowest index wins.
pub fn hardest_in_batch<T: Element>(d: &Tensor<T>) -> Result<Vec<TripletSelection>> {
    let n = square(d)?;
    if n < 2 {
        return Err(Error::NoNegatives(format!("batch of {n} has no non-matching pairs")));
    }
    let v = d.data();
    let at = |r: usize, c: usize| v[r * n + c].as_f64();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut j_min = usize::MAX;
        let mut k_min = usize::MAX;
        for j in (0..n).filter(|&j| j != i) {
            if j_min == usize::MAX || at(i, j) < at(i, j_min) {
                j_min = j;
            }
            if k_min == usize::MAX || at(j, i) < at(k_min, i) {
                k_min = j;
            }
        }
        let (col, row) = (at(i, j_min), at(k_min, i));
        let (source, d_neg) = if col <= row {
            (NegativeSource::Column, col)
        } else {
            (NegativeSource::Row, row)
        };
        out.push(TripletSelection {
            index: i,
            j_min,
            k_min: Some(k_min),
            source,
            d_pos: at(i, i),
            d_neg,
        });
    }
    Ok(out)
}

/// Uniform `j ≠ i` per row, independent across rows.
pub fn random_negative_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::NoNegatives(format!("batch of {n} has no non-matching pairs")));
    }
    Ok((0..n)
        .map(|i| {
            let j = rng.random_range(0..n - 1);
            if j >= i {
                j + 1
            } else {
                j
            }
        })
        .collect())
}

/// Random column negatives with distances read from `d`.
pub fn random_negatives<T: Element, R: Rng + ?Sized>(d: &Tensor<T>, rng: &mut R) -> Result<Vec<TripletSelection>> {
    let n = square(d)?;
    let js = random_negative_indices(n, rng)?;
    let v = d.data();
    Ok(js
        .into_iter()
        .enumerate()
        .map(|(i, j)| TripletSelection {
            index: i,
            j_min: j,
            k_min: None,
            source: NegativeSource::Column,
            d_pos: v[i * n + i].as_f64(),
            d_neg: v[i * n + j].as_f64(),
        })
        .collect())
}
