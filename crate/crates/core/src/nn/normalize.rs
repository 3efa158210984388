use crate::error::{Error, Result};
use crate::tensor::{Element, Graph, Tensor, Var};

/// Added to the squared norm before the square root.
pub const L2_EPS: f64 = 1e-10;

/// Divides each row of `x: [n, d]` by `sqrt(‖row‖² + 1e-10)`.
pub fn l2_normalize<T: Element>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let xv = g.value(x);
    let [n, d] = *xv.shape() else {
        return Err(Error::Shape(format!(
            "l2_normalize expects [n, d], got {:?}",
            xv.shape()
        )));
    };
    let eps = T::from_f64(L2_EPS);
    let mut norms = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n * d);
    for row in xv.data().chunks(d.max(1)).take(n) {
        let r = (row.iter().map(|&v| v * v).sum::<T>() + eps).sqrt();
        norms.push(r);
        out.extend(row.iter().map(|&v| v / r));
    }
    let value = Tensor::new(vec![n, d], out)?;
    Ok(g.record(
        "l2_normalize",
        value,
        &[x],
        Box::new(move |args| {
            let (y, gy) = (args.output.data(), args.grad.data());
            let mut dx = Vec::with_capacity(n * d);
            for i in 0..n {
                let (yr, gr) = (&y[i * d..(i + 1) * d], &gy[i * d..(i + 1) * d]);
                let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                dx.extend(yr.iter().zip(gr).map(|(&yv, &gv)| (gv - yv * dot) / norms[i]));
            }
            Ok(vec![Some(Tensor::new(vec![n, d], dx)?)])
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;

    fn run(x: Tensor<f64>) -> Tensor<f64> {
        let mut g = Graph::new();
        let v = g.constant(x);
        let y = l2_normalize(&mut g, v).unwrap();
        g.value(y).clone()
    }

    #[test]
    fn three_four_five() {
        let y = run(Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap());
        assert!((y.data()[0] - 0.6).abs() < 1e-9 && (y.data()[1] - 0.8).abs() < 1e-9);
    }

    #[test]
    fn unit_vector_is_fixed_point() {
        let s = 0.5f64.sqrt();
        let y = run(Tensor::new(vec![1, 2], vec![s, s]).unwrap());
        assert!((y.data()[0] - s).abs() < 1e-7 && (y.data()[1] - s).abs() < 1e-7);
    }

    #[test]
    fn zero_row_stays_near_zero() {
        let y = run(Tensor::zeros(vec![2, 4]));
        let norm = y.row(0).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-4);
    }

    #[test]
    fn rows_have_unit_norm() {
        let y = run(Tensor::new(vec![3, 3], vec![1.0, -2.0, 0.5, 0.01, 0.02, 0.0, 7.0, 7.0, 7.0]).unwrap());
        for i in 0..3 {
            let norm = y.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient() {
        let x = Tensor::new(vec![2, 3], vec![0.3, -1.2, 0.8, 2.0, 0.1, -0.4]).unwrap();
        let err = grad_check(
            |g, xv| {
                let y = l2_normalize(g, xv)?;
                let p = g.constant(Tensor::new(vec![2, 3], vec![1.0, 2.0, -1.0, 0.5, -0.3, 0.9])?);
                let m = g.mul(y, p)?;
                g.sum(m)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
