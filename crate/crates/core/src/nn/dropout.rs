use rand::Rng;

use super::LayerMode;
use crate::error::{Error, Result};
use crate::tensor::{Element, Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutLayer {
    pub rate: f64,
}

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Architecture(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self { rate })
    }
}

/// Inverted dropout: survivors are scaled by `1/(1 − rate)` so inference is
/// the identity. No random numbers are drawn in inference mode or at rate 0.
pub fn dropout<T: Element, R: Rng + ?Sized>(
    g: &mut Graph<T>,
    x: Var,
    layer: DropoutLayer,
    mode: LayerMode,
    rng: &mut R,
) -> Result<Var> {
    if !(0.0..1.0).contains(&layer.rate) {
        return Err(Error::Contract(format!("dropout rate {} outside [0, 1)", layer.rate)));
    }
    if mode == LayerMode::Inference || layer.rate == 0.0 {
        return Ok(x);
    }
    let keep = T::from_f64(1.0 / (1.0 - layer.rate));
    let xv = g.value(x);
    let mask: Vec<T> = (0..xv.numel())
        .map(|_| {
            if rng.random::<f64>() < layer.rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let out: Vec<T> = xv.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    let value = Tensor::new(xv.shape().to_vec(), out)?;
    Ok(g.record(
        "dropout",
        value,
        &[x],
        Box::new(move |args| {
            let d: Vec<T> = args.grad.data().iter().zip(&mask).map(|(&gv, &m)| gv * m).collect();
            Ok(vec![Some(Tensor::new(args.grad.shape().to_vec(), d)?)])
        }),
    ))
}
