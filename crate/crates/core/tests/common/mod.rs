//! Independent oracles shared by the property and acceptance suites.
#![allow(dead_code)]

use hardnet::eval::ScoredPairs;
use hardnet::model::DescriptorModel;
use hardnet::tensor::{Element, Graph, Tensor, Var};

/// Exhaustive hardest-negative scan of an `n × n` matrix: `(j, k, column_wins, d_neg)`
/// per row, lowest index within a row or column, column on ties.
pub fn hardest_oracle(d: &[f64], n: usize) -> Vec<(usize, usize, bool, f64)> {
    (0..n)
        .map(|i| {
            let others = || (0..n).filter(move |&x| x != i);
            let col_min = others().map(|j| d[i * n + j]).fold(f64::INFINITY, f64::min);
            let row_min = others().map(|k| d[k * n + i]).fold(f64::INFINITY, f64::min);
            let j = others().find(|&j| d[i * n + j] == col_min).unwrap();
            let k = others().find(|&k| d[k * n + i] == row_min).unwrap();
            let column = col_min <= row_min;
            (j, k, column, col_min.min(row_min))
        })
        .collect()
}

/// Tries every distinct distance as the acceptance threshold and keeps the
/// smallest one reaching the recall target. Returns `(fpr, fdr)`.
pub fn brute_rates(pairs: &ScoredPairs, recall: f64) -> (f64, f64) {
    let mut cands: Vec<f64> = pairs.positives.iter().chain(&pairs.negatives).copied().collect();
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let target = recall * pairs.positives.len() as f64 - 1e-9;
    for t in cands {
        let tp = pairs.positives.iter().filter(|&&d| d <= t).count();
        if tp as f64 >= target {
            let fp = pairs.negatives.iter().filter(|&&d| d <= t).count();
            return (fp as f64 / pairs.negatives.len() as f64, fp as f64 / (fp + tp) as f64);
        }
    }
    unreachable!("the largest distance reaches full recall")
}

/// Six nested loops over `[n, c, h, w]` input and `[o, c, k, k]` weights.
#[allow(clippy::too_many_arguments)]
pub fn conv_direct(
    x: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    weight: &[f64],
    bias: &[f64],
    (o, k): (usize, usize),
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * o * oh * ow];
    for b in 0..n {
        for f in 0..o {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = bias[f];
                    for ch in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (xo * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x[((b * c + ch) * h + iy as usize) * w + ix as usize]
                                    * weight[((f * c + ch) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((b * o + f) * oh + y) * ow + xo] = acc;
                }
            }
        }
    }
    (out, oh, ow)
}

/// Largest deviation of `WWᵀ` (or `WᵀW` when tall) from `gain²·I`.
pub fn orthogonality_error(w: &Tensor<f64>, gain: f64) -> f64 {
    let (r, c) = (w.shape()[0], w.shape()[1]);
    let v = w.data();
    let (count, len, at): (usize, usize, Box<dyn Fn(usize, usize) -> f64>) = if r <= c {
        (r, c, Box::new(|i, j| v[i * c + j]))
    } else {
        (c, r, Box::new(|i, j| v[j * c + i]))
    };
    let mut worst: f64 = 0.0;
    for a in 0..count {
        for b in 0..count {
            let dot: f64 = (0..len).map(|j| at(a, j) * at(b, j)).sum();
            let want = if a == b { gain * gain } else { 0.0 };
            worst = worst.max((dot - want).abs());
        }
    }
    worst
}

/// Registers every model parameter as a constant.
pub fn constant_params<T: Element>(model: &DescriptorModel<T>, g: &mut Graph<T>) -> Vec<Var> {
    model
        .parameters()
        .into_iter()
        .map(|(_, t)| g.constant(t.clone()))
        .collect()
}

/// Rows of `d` normalized to unit length.
pub fn unit_rows(values: Vec<f64>, d: usize) -> Tensor<f64> {
    let n = values.len() / d;
    let mut v = values;
    for row in v.chunks_mut(d) {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        row.iter_mut().for_each(|x| *x /= norm);
    }
    Tensor::new(vec![n, d], v).unwrap()
}
