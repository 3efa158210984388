use std::fmt;
use std::str::FromStr;

use super::select::TripletSelection;
use crate::error::{Error, Result};
use crate::tensor::{Element, Graph, ReduceKind, Tensor, Var};

/// Guards the per-channel variance in [`cpr_penalty`].
pub const CPR_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// `max(0, m + d_pos − d_neg)`
    TripletMargin,
    /// `d_pos + max(0, m − d_neg)`
    Contrastive,
    /// `−log softmax(−d)[pos]` over `{d_pos, d_neg}`, i.e. `softplus(d_pos − d_neg)`
    Softmin,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [Self::TripletMargin, Self::Contrastive, Self::Softmin];

    pub fn name(self) -> &'static str {
        match self {
            Self::TripletMargin => "triplet_margin",
            Self::Contrastive => "contrastive",
            Self::Softmin => "softmin",
        }
    }

    pub fn uses_margin(self) -> bool {
        self != Self::Softmin
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("loss", format!("unknown loss `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    pub margin: f64,
    pub cpr_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::TripletMargin,
            margin: 1.0,
            cpr_weight: 0.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kind.uses_margin() && !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::config(
                "margin",
                format!("must be positive, got {}", self.margin),
            ));
        }
        if !(self.cpr_weight >= 0.0 && self.cpr_weight.is_finite()) {
            return Err(Error::config(
                "cpr_weight",
                format!("must be >= 0, got {}", self.cpr_weight),
            ));
        }
        Ok(())
    }

    /// Mean loss over matching `[n]` vectors of positive and negative
    /// distances.
    pub fn from_distances<T: Element>(&self, g: &mut Graph<T>, d_pos: Var, d_neg: Var) -> Result<Var> {
        self.validate()?;
        if g.shape(d_pos) != g.shape(d_neg) {
            return Err(Error::ShapeMismatch {
                op: "loss",
                lhs: g.shape(d_pos).to_vec(),
                rhs: g.shape(d_neg).to_vec(),
            });
        }
        if g.value(d_pos).numel() == 0 {
            return Err(Error::Empty("loss over zero triplets".into()));
        }
        let terms = match self.kind {
            LossKind::TripletMargin => {
                let diff = g.sub(d_pos, d_neg)?;
                let shifted = g.affine(diff, 1.0, self.margin);
                g.relu(shifted)?
            }
            LossKind::Contrastive => {
                let slack = g.affine(d_neg, -1.0, self.margin);
                let hinge = g.relu(slack)?;
                g.add(d_pos, hinge)?
            }
            LossKind::Softmin => {
                let diff = g.sub(d_pos, d_neg)?;
                g.softplus(diff)?
            }
        };
        g.mean(terms)
    }

    /// Mean loss over selections from the distance matrix `d: [n, n]`.
    pub fn from_selections<T: Element>(
        &self,
        g: &mut Graph<T>,
        d: Var,
        selections: &[TripletSelection],
    ) -> Result<Var> {
        let (d_pos, d_neg) = gather_distances(g, d, selections)?;
        self.from_distances(g, d_pos, d_neg)
    }
}

/// Differentiable `[n]` vectors of the selected positive and negative
/// distances.
pub fn gather_distances<T: Element>(g: &mut Graph<T>, d: Var, selections: &[TripletSelection]) -> Result<(Var, Var)> {
    if selections.is_empty() {
        return Err(Error::Empty("no triplet selections".into()));
    }
    let n = match *g.shape(d) {
        [n, m] if n == m => n,
        _ => {
            return Err(Error::Shape(format!(
                "distance matrix must be square, got {:?}",
                g.shape(d)
            )))
        }
    };
    let pos: Vec<usize> = selections.iter().map(|s| s.pos_flat(n)).collect();
    let neg: Vec<usize> = selections.iter().map(|s| s.neg_flat(n)).collect();
    Ok((g.gather(d, &pos)?, g.gather(d, &neg)?))
}

pub fn triplet_margin_loss<T: Element>(g: &mut Graph<T>, d: Var, sel: &[TripletSelection], margin: f64) -> Result<Var> {
    LossConfig {
        kind: LossKind::TripletMargin,
        margin,
        cpr_weight: 0.0,
    }
    .from_selections(g, d, sel)
}

pub fn contrastive_loss<T: Element>(g: &mut Graph<T>, d: Var, sel: &[TripletSelection], margin: f64) -> Result<Var> {
    LossConfig {
        kind: LossKind::Contrastive,
        margin,
        cpr_weight: 0.0,
    }
    .from_selections(g, d, sel)
}

pub fn softmin_loss<T: Element>(g: &mut Graph<T>, d: Var, sel: &[TripletSelection]) -> Result<Var> {
    LossConfig {
        kind: LossKind::Softmin,
        margin: 1.0,
        cpr_weight: 0.0,
    }
    .from_selections(g, d, sel)
}

/// Mean squared off-diagonal correlation between descriptor channels over
/// the batch, in `[0, 1]`.
pub fn cpr_penalty<T: Element>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let [n, d] = *g.shape(x) else {
        return Err(Error::Shape(format!("cpr expects [n, d], got {:?}", g.shape(x))));
    };
    if n < 2 || d < 2 {
        return Err(Error::Contract(format!("cpr needs n >= 2 and d >= 2, got [{n}, {d}]")));
    }
    let mean = g.reduce(x, ReduceKind::Mean, Some(0))?;
    let centered = g.sub(x, mean)?;
    let ct = g.transpose(centered)?;
    let cov = g.matmul(ct, centered)?;
    let sq = g.mul(centered, centered)?;
    let var = g.reduce(sq, ReduceKind::Sum, Some(0))?;
    let var = g.affine(var, 1.0, CPR_EPS);
    let std = g.sqrt(var)?;
    let ones = g.constant(Tensor::ones(vec![d]));
    let inv = g.div(ones, std)?;
    let col = g.reshape(inv, &[d, 1])?;
    let row = g.reshape(inv, &[1, d])?;
    let outer = g.matmul(col, row)?;
    let r = g.mul(cov, outer)?;
    let r2 = g.mul(r, r)?;
    let total = g.sum(r2)?;
    let diag_idx: Vec<usize> = (0..d).map(|i| i * d + i).collect();
    let diag = g.gather(r2, &diag_idx)?;
    let diag = g.sum(diag)?;
    let off = g.sub(total, diag)?;
    // Σ_{i<j} r² = off / 2, normalized by d(d−1)/2 pairs
    Ok(g.affine(off, 1.0 / (d * (d - 1)) as f64, 0.0))
}
