use rand::Rng;
use rand_distr::StandardNormal;

use crate::tensor::{Element, Tensor};

/// Random `[out, in_flat]` matrix with mutually orthogonal rows (when
/// `out <= in_flat`) or columns (otherwise), each of norm `gain`.
///
/// A Gaussian matrix is orthonormalized with two passes of modified
/// Gram-Schmidt, then scaled. Conv weights `[o, c, k, k]` use `in_flat = c·k·k`
/// and are reshaped by the caller.
pub fn orthogonal_init<T: Element, R: Rng + ?Sized>(out: usize, in_flat: usize, gain: f64, rng: &mut R) -> Tensor<T> {
    assert!(out >= 1 && in_flat >= 1, "orthogonal_init needs a non-empty shape");
    let gaussian: Vec<f64> = (0..out * in_flat).map(|_| rng.sample(StandardNormal)).collect();
    // orthonormalize the shorter side as a set of long vectors
    let (count, len) = if out <= in_flat { (out, in_flat) } else { (in_flat, out) };
    let mut vecs: Vec<Vec<f64>> = (0..count)
        .map(|i| {
            (0..len)
                .map(|j| {
                    if out <= in_flat {
                        gaussian[i * in_flat + j]
                    } else {
                        gaussian[j * in_flat + i]
                    }
                })
                .collect()
        })
        .collect();
    for _ in 0..2 {
        for i in 0..count {
            let (done, rest) = vecs.split_at_mut(i);
            let v = &mut rest[0];
            for u in done.iter() {
                let dot: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                for (vj, uj) in v.iter_mut().zip(u) {
                    *vj -= dot * uj;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for vj in v.iter_mut() {
                *vj /= norm;
            }
        }
    }
    let mut data = vec![T::zero(); out * in_flat];
    for (i, v) in vecs.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            let idx = if out <= in_flat {
                i * in_flat + j
            } else {
                j * in_flat + i
            };
            data[idx] = T::from_f64(gain * x);
        }
    }
    Tensor::new(vec![out, in_flat], data).expect("shape matches data")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Max deviation of the Gram matrix of the shorter side from gain²·I.
    fn gram_error(w: &Tensor<f64>, gain: f64) -> f64 {
        let (r, c) = (w.shape()[0], w.shape()[1]);
        let d = w.data();
        let rows = r <= c;
        let (count, len) = if rows { (r, c) } else { (c, r) };
        let at = |i: usize, j: usize| if rows { d[i * c + j] } else { d[j * c + i] };
        let mut worst = 0.0f64;
        for i in 0..count {
            for k in 0..count {
                let dot: f64 = (0..len).map(|j| at(i, j) * at(k, j)).sum();
                let want = if i == k { gain * gain } else { 0.0 };
                worst = worst.max((dot - want).abs());
            }
        }
        worst
    }

    #[test]
    fn gain_scaled_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = orthogonal_init::<f64, _>(32, 288, 0.6, &mut rng);
        assert!(gram_error(&w, 0.6) < 1e-5);
    }

    #[test]
    fn single_row_is_unit_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = orthogonal_init::<f64, _>(1, 10, 1.0, &mut rng);
        let norm: f64 = w.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let a = orthogonal_init::<f32, _>(8, 9, 0.6, &mut ChaCha8Rng::seed_from_u64(5));
        let b = orthogonal_init::<f32, _>(8, 9, 0.6, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn twenty_random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let out = rng.random_range(1..40);
            let inn = rng.random_range(1..40);
            let gain = rng.random_range(0.1..2.0);
            let w = orthogonal_init::<f64, _>(out, inn, gain, &mut rng);
            assert!(gram_error(&w, gain) < 1e-5, "{out}x{inn}");
        }
    }
}
