use super::config::{lr_at, TrainConfig};
use crate::error::{Error, Result};
use crate::model::DescriptorModel;
use crate::tensor::{Element, Tensor};

/// Momentum buffers, one per trainable tensor, plus the schedule position.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T> {
    pub velocity: Vec<Tensor<T>>,
    pub step: usize,
    pub total_steps: usize,
}

impl<T: Element> OptimState<T> {
    pub fn new(model: &DescriptorModel<T>, total_steps: usize) -> Self {
        Self {
            velocity: model
                .parameters()
                .iter()
                .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
                .collect(),
            step: 0,
            total_steps,
        }
    }
}

/// One SGD update of every trainable tensor:
/// `g' = g + wd·w; v = μ·v + g'; w = w − lr·v` with `lr = lr_at(step)`.
/// BN running statistics are not parameters and are left alone.
/// Returns the learning rate used.
pub fn sgd_step<T: Element>(
    model: &mut DescriptorModel<T>,
    grads: &[Option<Tensor<T>>],
    state: &mut OptimState<T>,
    config: &TrainConfig,
) -> Result<f64> {
    let names: Vec<String> = model.parameters().into_iter().map(|(n, _)| n).collect();
    if grads.len() != names.len() || state.velocity.len() != names.len() {
        return Err(Error::Contract(format!(
            "{} parameters, {} gradients, {} velocity buffers",
            names.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    if let Some(i) = grads.iter().position(Option::is_none) {
        return Err(Error::Contract(format!("missing gradient for `{}`", names[i])));
    }
    let lr = lr_at(state.step, state.total_steps, config.learning_rate)?;
    let (mu, wd) = (config.momentum, config.weight_decay);
    for (((w, g), v), name) in model
        .parameters_mut()
        .into_iter()
        .zip(grads)
        .zip(&mut state.velocity)
        .zip(&names)
    {
        let g = g.as_ref().expect("checked above");
        if g.shape() != w.shape() || v.shape() != w.shape() {
            return Err(Error::Contract(format!(
                "`{name}` has shape {:?}, gradient {:?}, velocity {:?}",
                w.shape(),
                g.shape(),
                v.shape()
            )));
        }
        for ((wi, &gi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            let gd = gi.as_f64() + wd * wi.as_f64();
            let vn = mu * vi.as_f64() + gd;
            *vi = T::from_f64(vn);
            *wi = T::from_f64(wi.as_f64() - lr * vn);
        }
    }
    state.step += 1;
    Ok(lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArchitectureSpec;

    fn tiny() -> DescriptorModel<f64> {
        let mut m = DescriptorModel::zeros(ArchitectureSpec::reduced()).unwrap();
        for t in m.parameters_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = 1.0);
        }
        m
    }

    fn grads_of(v: f64) -> Vec<Option<Tensor<f64>>> {
        tiny()
            .parameters()
            .iter()
            .map(|(_, t)| Some(Tensor::full(t.shape().to_vec(), v)))
            .collect()
    }

    fn config(lr: f64, mu: f64, wd: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            momentum: mu,
            weight_decay: wd,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn worked_update() {
        let mut m = tiny();
        let mut s = OptimState::new(&m, 10);
        let g = grads_of(0.5);
        assert_eq!(sgd_step(&mut m, &g, &mut s, &config(0.1, 0.9, 1e-4)).unwrap(), 0.1);
        let (_, w) = &m.parameters()[0];
        assert!((w.data()[0] - 0.94999).abs() < 1e-12);
        assert!((s.velocity[0].data()[0] - 0.5001).abs() < 1e-12);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradient_decays_velocity() {
        let mut m = tiny();
        let mut s = OptimState::new(&m, 10);
        s.velocity
            .iter_mut()
            .for_each(|v| v.data_mut().iter_mut().for_each(|x| *x = 2.0));
        sgd_step(&mut m, &grads_of(0.0), &mut s, &config(0.1, 0.9, 0.0)).unwrap();
        assert!((s.velocity[0].data()[0] - 1.8).abs() < 1e-12);
        // with zero velocity as well, w stays put
        let mut m2 = tiny();
        let mut s2 = OptimState::new(&m2, 10);
        sgd_step(&mut m2, &grads_of(0.0), &mut s2, &config(0.1, 0.9, 0.0)).unwrap();
        assert_eq!(m2, tiny());
    }

    #[test]
    fn momentum_free_is_gradient_descent() {
        let (lr, wd, g) = (0.05, 0.01, 0.3);
        let mut m = tiny();
        let mut s = OptimState::new(&m, 100);
        let c = config(lr, 0.0, wd);
        let mut w = 1.0f64;
        for step in 0..2 {
            let lr_t = lr * (1.0 - step as f64 / 100.0);
            sgd_step(&mut m, &grads_of(g), &mut s, &c).unwrap();
            w -= lr_t * (g + wd * w);
        }
        assert!((m.parameters()[0].1.data()[0] - w).abs() < 1e-14);
    }

    #[test]
    fn weight_decay_is_l2_gradient() {
        // loss(w) = ½·a·w² + (wd/2)·w² has gradient (a + wd)·w
        let (a, wd, lr) = (0.7, 0.2, 0.1);
        let mut m = tiny();
        let mut s = OptimState::new(&m, 1);
        let grads: Vec<_> = m.parameters().iter().map(|(_, t)| Some(t.map(|w| a * w))).collect();
        sgd_step(&mut m, &grads, &mut s, &config(lr, 0.0, wd)).unwrap();
        assert!((m.parameters()[0].1.data()[0] - (1.0 - lr * (a + wd))).abs() < 1e-15);
    }

    #[test]
    fn missing_gradient_names_parameter() {
        let mut m = tiny();
        let mut s = OptimState::new(&m, 10);
        let mut g = grads_of(0.1);
        g[2] = None;
        let err = sgd_step(&mut m, &g, &mut s, &TrainConfig::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains(&m.parameters()[2].0), "{err}");
    }

    #[test]
    fn schedule_exhaustion_and_buffers_untouched() {
        let mut m = tiny();
        let buffers: Vec<Tensor<f64>> = m.buffers().into_iter().map(|(_, t)| t.clone()).collect();
        let mut s = OptimState::new(&m, 1);
        sgd_step(&mut m, &grads_of(0.1), &mut s, &TrainConfig::default()).unwrap();
        // the step at the end of the schedule uses lr 0
        assert_eq!(
            sgd_step(&mut m, &grads_of(0.1), &mut s, &TrainConfig::default()).unwrap(),
            0.0
        );
        assert!(matches!(
            sgd_step(&mut m, &grads_of(0.1), &mut s, &TrainConfig::default()),
            Err(Error::ScheduleExhausted { .. })
        ));
        let after: Vec<Tensor<f64>> = m.buffers().into_iter().map(|(_, t)| t.clone()).collect();
        assert_eq!(after, buffers);
    }
}
