use super::LayerMode;
use crate::error::{Error, Result};
use crate::tensor::{Element, Graph, Tensor, Var};

/// Per-channel batch normalization state.
///
/// Non-affine by default: the descriptor is L2-normalized at the end, so a
/// learned scale/shift adds nothing. `gamma`/`beta` exist only when `affine`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormLayer<T> {
    pub eps: f64,
    pub momentum: f64,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub gamma: Option<Tensor<T>>,
    pub beta: Option<Tensor<T>>,
}

impl<T: Element> BatchNormLayer<T> {
    pub fn new(channels: usize, affine: bool) -> Self {
        Self {
            eps: 1e-5,
            momentum: 0.1,
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor::ones(vec![channels]),
            gamma: affine.then(|| Tensor::ones(vec![channels])),
            beta: affine.then(|| Tensor::zeros(vec![channels])),
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.numel()
    }

    pub fn affine(&self) -> bool {
        self.gamma.is_some()
    }

    /// Folds one batch's statistics into the running averages.
    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (rm, &mu) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *rm = T::from_f64((1.0 - m) * rm.as_f64() + m * mu);
        }
        for (rv, &var) in self.running_var.data_mut().iter_mut().zip(&stats.unbiased_var) {
            *rv = T::from_f64((1.0 - m) * rv.as_f64() + m * var);
        }
    }
}

/// Per-channel statistics of one training batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub unbiased_var: Vec<f64>,
}

/// Normalizes `x: [n, c, h, w]` (or `[n, c]`) per channel.
///
/// Training mode normalizes with the batch mean and biased variance and
/// returns the batch statistics for [`BatchNormLayer::update_running`];
/// inference mode uses the running statistics. `affine` carries
/// `(gamma, beta)` vars when the layer is affine.
pub fn batch_norm<T: Element>(
    g: &mut Graph<T>,
    x: Var,
    layer: &BatchNormLayer<T>,
    affine: Option<(Var, Var)>,
    mode: LayerMode,
) -> Result<(Var, Option<BatchStats>)> {
    let shape = g.shape(x).to_vec();
    let (n, c, spatial) = match shape.as_slice() {
        [n, c] => (*n, *c, 1),
        [n, c, h, w] => (*n, *c, h * w),
        _ => return Err(Error::Shape(format!("batch_norm expects rank 2 or 4, got {shape:?}"))),
    };
    if c != layer.channels() {
        return Err(Error::Shape(format!(
            "batch_norm has {} channels, input {shape:?}",
            layer.channels()
        )));
    }
    let count = n * spatial;
    let xd = g.value(x).data();
    let at = move |s: usize, ch: usize| (s * c + ch) * spatial;

    let mut stats = None;
    let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
        LayerMode::Training => {
            if count < 2 {
                return Err(Error::Contract(format!(
                    "training-mode batch_norm needs >= 2 values per channel, got {count}"
                )));
            }
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mut sum = 0.0;
                for s in 0..n {
                    sum += xd[at(s, ch)..][..spatial].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let mu = sum / count as f64;
                let mut sq = 0.0;
                for s in 0..n {
                    sq += xd[at(s, ch)..][..spatial]
                        .iter()
                        .map(|v| {
                            let d = v.as_f64() - mu;
                            d * d
                        })
                        .sum::<f64>();
                }
                mean[ch] = mu;
                var[ch] = sq / count as f64;
            }
            let unbiased = count as f64 / (count - 1) as f64;
            stats = Some(BatchStats {
                mean: mean.clone(),
                unbiased_var: var.iter().map(|v| v * unbiased).collect(),
            });
            (mean, var)
        }
        LayerMode::Inference => (
            layer.running_mean.data().iter().map(|v| v.as_f64()).collect(),
            layer.running_var.data().iter().map(|v| v.as_f64()).collect(),
        ),
    };
    let inv_std: Vec<T> = var.iter().map(|v| T::from_f64(1.0 / (v + layer.eps).sqrt())).collect();
    let mean: Vec<T> = mean.into_iter().map(T::from_f64).collect();

    let mut xhat = vec![T::zero(); xd.len()];
    for s in 0..n {
        for ch in 0..c {
            let o = at(s, ch);
            for (y, &v) in xhat[o..o + spatial].iter_mut().zip(&xd[o..o + spatial]) {
                *y = (v - mean[ch]) * inv_std[ch];
            }
        }
    }

    let (out, parents) = match affine {
        None => (xhat.clone(), vec![x]),
        Some((gamma, beta)) => {
            let (gd, bd) = (g.value(gamma).data(), g.value(beta).data());
            let mut out = xhat.clone();
            for s in 0..n {
                for ch in 0..c {
                    for y in &mut out[at(s, ch)..][..spatial] {
                        *y = *y * gd[ch] + bd[ch];
                    }
                }
            }
            (out, vec![x, gamma, beta])
        }
    };
    let value = Tensor::new(shape.clone(), out)?;
    let training = mode == LayerMode::Training;
    let out = g.record(
        "batch_norm",
        value,
        &parents,
        Box::new(move |args| {
            let gy = args.grad.data();
            let gamma = args.inputs.get(1).map(|t| t.data());
            // gradient with respect to xhat
            let mut gx = gy.to_vec();
            if let Some(gd) = gamma {
                for s in 0..n {
                    for ch in 0..c {
                        for v in &mut gx[at(s, ch)..][..spatial] {
                            *v *= gd[ch];
                        }
                    }
                }
            }
            let mut grads = Vec::with_capacity(3);
            if args.needs[0] {
                let mut dx = vec![T::zero(); gx.len()];
                for ch in 0..c {
                    let (mut sum_g, mut sum_gx) = (0.0f64, 0.0f64);
                    if training {
                        for s in 0..n {
                            let o = at(s, ch);
                            for (gv, xv) in gx[o..o + spatial].iter().zip(&xhat[o..o + spatial]) {
                                sum_g += gv.as_f64();
                                sum_gx += (*gv * *xv).as_f64();
                            }
                        }
                    }
                    let mean_g = T::from_f64(sum_g / count as f64);
                    let mean_gx = T::from_f64(sum_gx / count as f64);
                    for s in 0..n {
                        let o = at(s, ch);
                        for i in o..o + spatial {
                            dx[i] = inv_std[ch] * (gx[i] - mean_g - xhat[i] * mean_gx);
                        }
                    }
                }
                grads.push(Some(Tensor::new(shape.clone(), dx)?));
            } else {
                grads.push(None);
            }
            if gamma.is_some() {
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for s in 0..n {
                    for ch in 0..c {
                        let o = at(s, ch);
                        for i in o..o + spatial {
                            dgamma[ch] += gy[i] * xhat[i];
                            dbeta[ch] += gy[i];
                        }
                    }
                }
                grads.push(Some(Tensor::from_vec(dgamma)));
                grads.push(Some(Tensor::from_vec(dbeta)));
            }
            Ok(grads)
        }),
    );
    Ok((out, stats))
}
