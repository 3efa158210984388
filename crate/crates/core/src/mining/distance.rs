use crate::error::{Error, Result};
use crate::tensor::{Element, Graph, MatMut, MatRef, ReduceKind, Tensor, Var};

/// Added under the square root so the distance stays differentiable at 0.
pub const DIST_EPS: f64 = 1e-8;

/// Allowed deviation of a descriptor row from unit norm.
pub const UNIT_NORM_TOL: f64 = 1e-4;

fn check_unit_rows<T: Element>(t: &Tensor<T>, what: &str) -> Result<()> {
    let [n, d] = *t.shape() else {
        return Err(Error::Shape(format!("{what} must be [n, d], got {:?}", t.shape())));
    };
    for i in 0..n {
        let norm = t.data()[i * d..(i + 1) * d]
            .iter()
            .map(|v| v.as_f64().powi(2))
            .sum::<f64>()
            .sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Contract(format!("{what} row {i} has norm {norm}, expected 1")));
        }
    }
    Ok(())
}

/// `sqrt(clamp(2 − 2·s, 0, 4) + 1e-8)` for a similarity var `s`.
fn sphere_distance<T: Element>(g: &mut Graph<T>, sim: Var) -> Result<Var> {
    let sq = g.affine(sim, -2.0, 2.0);
    let sq = g.clamp(sq, 0.0, 4.0)?;
    let sq = g.affine(sq, 1.0, DIST_EPS);
    g.sqrt(sq)
}

/// `D[i][j] = d(a_i, p_j)` for unit-norm rows of `a, p: [n, d]`.
pub fn distance_matrix<T: Element>(g: &mut Graph<T>, a: Var, p: Var) -> Result<Var> {
    check_unit_rows(g.value(a), "anchor descriptors")?;
    check_unit_rows(g.value(p), "positive descriptors")?;
    if g.shape(a)[1] != g.shape(p)[1] {
        return Err(Error::ShapeMismatch {
            op: "distance_matrix",
            lhs: g.shape(a).to_vec(),
            rhs: g.shape(p).to_vec(),
        });
    }
    let pt = g.transpose(p)?;
    let sim = g.matmul(a, pt)?;
    sphere_distance(g, sim)
}

/// `d(a_i, b_i)` for matching rows, shape `[n]`.
pub fn paired_distance<T: Element>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var> {
    check_unit_rows(g.value(a), "anchor descriptors")?;
    check_unit_rows(g.value(b), "paired descriptors")?;
    if g.shape(a) != g.shape(b) {
        return Err(Error::ShapeMismatch {
            op: "paired_distance",
            lhs: g.shape(a).to_vec(),
            rhs: g.shape(b).to_vec(),
        });
    }
    let prod = g.mul(a, b)?;
    let sim = g.reduce(prod, ReduceKind::Sum, Some(1))?;
    sphere_distance(g, sim)
}

/// For each row of `descs`, the index of the closest row with a different
/// label (lowest index on ties). Scans all pairs with blocked GEMM.
pub fn hardest_negative_table<T: Element>(descs: &Tensor<T>, labels: &[u64]) -> Result<Vec<usize>> {
    let [n, d] = *descs.shape() else {
        return Err(Error::Shape(format!(
            "descriptors must be [n, d], got {:?}",
            descs.shape()
        )));
    };
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} descriptors but {} labels", labels.len())));
    }
    if labels.iter().all(|&l| Some(l) == labels.first().copied()) {
        return Err(Error::NoNegatives("every patch belongs to the same point".into()));
    }
    const BLOCK: usize = 512;
    let data = descs.data();
    let mut best = vec![(f64::INFINITY, usize::MAX); n];
    let mut sim = vec![T::zero(); BLOCK * BLOCK];
    for r0 in (0..n).step_by(BLOCK) {
        let rows = BLOCK.min(n - r0);
        for c0 in (0..n).step_by(BLOCK) {
            let cols = BLOCK.min(n - c0);
            T::gemm(
                rows,
                d,
                cols,
                T::one(),
                MatRef::rows(&data[r0 * d..], d),
                MatRef::transposed(&data[c0 * d..], d),
                T::zero(),
                MatMut::rows(&mut sim[..rows * cols], cols),
            );
            for i in 0..rows {
                let li = labels[r0 + i];
                let slot = &mut best[r0 + i];
                for j in 0..cols {
                    if labels[c0 + j] == li {
                        continue;
                    }
                    let s = sim[i * cols + j].as_f64();
                    let dist = ((2.0 - 2.0 * s).clamp(0.0, 4.0) + DIST_EPS).sqrt();
                    // columns arrive in increasing order, so strict < keeps the lowest index
                    if dist < slot.0 {
                        *slot = (dist, c0 + j);
                    }
                }
            }
        }
    }
    Ok(best.into_iter().map(|(_, j)| j).collect())
}
