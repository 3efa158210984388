//! Differentiable primitives recorded on a [`Graph`].

use super::dense::Tensor;
use super::element::{Element, MatMut, MatRef};
use super::graph::{Graph, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryKind {
    Relu,
    Sqrt,
    Exp,
    Log,
    Neg,
    Clamp {
        lo: f64,
        hi: f64,
    },
    /// `ln(1 + e^x)`, evaluated without overflow.
    Softplus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
    Matmul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
}

/// Result of an arg-reduction: differentiable values plus winning indices
/// along the reduced axis (first occurrence on ties).
#[derive(Clone, Debug)]
pub struct ArgReduce {
    pub values: Var,
    pub indices: Vec<usize>,
}

fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Element>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Splits `shape` around `axis` into (outer, len, inner).
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Elementwise broadcast rule: `b` matches `a` exactly, is a trailing-suffix
/// of `a`'s shape, or holds a single element.
fn broadcast_inner(a: &[usize], b: &[usize], op: &'static str) -> Result<usize> {
    let bn: usize = b.iter().product();
    if bn == 1 {
        return Ok(1);
    }
    if b.len() <= a.len() && a[a.len() - b.len()..] == *b {
        return Ok(bn);
    }
    Err(Error::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    })
}

/// Sums a gradient shaped like `a` down to the broadcast operand shape.
fn reduce_broadcast<T: Element>(g: &[T], inner: usize, shape: &[usize]) -> Tensor<T> {
    let mut out = vec![T::zero(); inner];
    for chunk in g.chunks(inner) {
        for (o, &v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    Tensor::new(shape.to_vec(), out).expect("broadcast operand shape")
}

impl<T: Element> Graph<T> {
    pub fn unary(&mut self, x: Var, kind: UnaryKind) -> Result<Var> {
        let input = self.value(x);
        let data = input.data();
        let out: Vec<T> = match kind {
            // NaN passes through so a poisoned input stays visible downstream
            UnaryKind::Relu => data
                .iter()
                .map(|&v| if v < T::zero() { T::zero() } else { v })
                .collect(),
            UnaryKind::Sqrt => {
                if let Some(bad) = data.iter().find(|v| !(**v >= T::zero())) {
                    return Err(Error::Domain {
                        op: "sqrt",
                        detail: format!("input {bad:?} is negative or NaN"),
                    });
                }
                data.iter().map(|&v| v.sqrt()).collect()
            }
            UnaryKind::Exp => data.iter().map(|&v| v.exp()).collect(),
            UnaryKind::Log => {
                if let Some(bad) = data.iter().find(|v| !(**v > T::zero())) {
                    return Err(Error::Domain {
                        op: "log",
                        detail: format!("input {bad:?} is not positive"),
                    });
                }
                data.iter().map(|&v| v.ln()).collect()
            }
            UnaryKind::Neg => data.iter().map(|&v| -v).collect(),
            UnaryKind::Clamp { lo, hi } => {
                if lo > hi {
                    return Err(Error::Contract(format!("clamp bounds {lo} > {hi}")));
                }
                let (lo, hi) = (T::from_f64(lo), T::from_f64(hi));
                data.iter()
                    .map(|&v| {
                        if v < lo {
                            lo
                        } else if v > hi {
                            hi
                        } else {
                            v
                        }
                    })
                    .collect()
            }
            UnaryKind::Softplus => data.iter().map(|&v| softplus(v)).collect(),
        };
        let value = Tensor::new(input.shape().to_vec(), out)?;
        Ok(self.record(
            "unary",
            value,
            &[x],
            Box::new(move |args| {
                let x = args.inputs[0].data();
                let y = args.output.data();
                let g = args.grad.data();
                let dx: Vec<T> = match kind {
                    UnaryKind::Relu => x
                        .iter()
                        .zip(g)
                        .map(|(&xv, &gv)| if xv > T::zero() { gv } else { T::zero() })
                        .collect(),
                    UnaryKind::Sqrt => y.iter().zip(g).map(|(&yv, &gv)| gv / (T::from_f64(2.0) * yv)).collect(),
                    UnaryKind::Exp => y.iter().zip(g).map(|(&yv, &gv)| gv * yv).collect(),
                    UnaryKind::Log => x.iter().zip(g).map(|(&xv, &gv)| gv / xv).collect(),
                    UnaryKind::Neg => g.iter().map(|&gv| -gv).collect(),
                    UnaryKind::Clamp { lo, hi } => {
                        let (lo, hi) = (T::from_f64(lo), T::from_f64(hi));
                        x.iter()
                            .zip(g)
                            .map(|(&xv, &gv)| if xv >= lo && xv <= hi { gv } else { T::zero() })
                            .collect()
                    }
                    UnaryKind::Softplus => x.iter().zip(g).map(|(&xv, &gv)| gv * sigmoid(xv)).collect(),
                };
                Ok(vec![Some(Tensor::new(args.grad.shape().to_vec(), dx)?)])
            }),
        ))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Relu)
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Sqrt)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Exp)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Log)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Neg)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(x, UnaryKind::Clamp { lo, hi })
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Softplus)
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let (s, b) = (T::from_f64(scale), T::from_f64(shift));
        let value = self.value(x).map(|v| s * v + b);
        self.record(
            "affine",
            value,
            &[x],
            Box::new(move |args| Ok(vec![Some(args.grad.map(|g| g * s))])),
        )
    }

    pub fn binary(&mut self, a: Var, b: Var, kind: BinaryKind) -> Result<Var> {
        if kind == BinaryKind::Matmul {
            return self.matmul(a, b);
        }
        let (av, bv) = (self.value(a), self.value(b));
        let inner = broadcast_inner(av.shape(), bv.shape(), "binary")?;
        let bd = bv.data();
        let out: Vec<T> = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = bd[i % inner];
                match kind {
                    BinaryKind::Add => x + y,
                    BinaryKind::Sub => x - y,
                    BinaryKind::Mul => x * y,
                    BinaryKind::Div => x / y,
                    BinaryKind::Matmul => unreachable!(),
                }
            })
            .collect();
        let value = Tensor::new(av.shape().to_vec(), out)?;
        Ok(self.record(
            "binary",
            value,
            &[a, b],
            Box::new(move |args| {
                let (av, bv) = (args.inputs[0], args.inputs[1]);
                let g = args.grad.data();
                let bd = bv.data();
                let ga: Option<Tensor<T>> = if args.needs[0] {
                    let d: Vec<T> = match kind {
                        BinaryKind::Add | BinaryKind::Sub => g.to_vec(),
                        BinaryKind::Mul => g.iter().enumerate().map(|(i, &gv)| gv * bd[i % inner]).collect(),
                        BinaryKind::Div => g.iter().enumerate().map(|(i, &gv)| gv / bd[i % inner]).collect(),
                        BinaryKind::Matmul => unreachable!(),
                    };
                    Some(Tensor::new(av.shape().to_vec(), d)?)
                } else {
                    None
                };
                let gb = if args.needs[1] {
                    let ad = av.data();
                    let full: Vec<T> = match kind {
                        BinaryKind::Add => g.to_vec(),
                        BinaryKind::Sub => g.iter().map(|&gv| -gv).collect(),
                        BinaryKind::Mul => g.iter().zip(ad).map(|(&gv, &x)| gv * x).collect(),
                        BinaryKind::Div => g
                            .iter()
                            .zip(ad)
                            .enumerate()
                            .map(|(i, (&gv, &x))| {
                                let y = bd[i % inner];
                                -gv * x / (y * y)
                            })
                            .collect(),
                        BinaryKind::Matmul => unreachable!(),
                    };
                    Some(reduce_broadcast(&full, inner, bv.shape()))
                } else {
                    None
                };
                Ok(vec![ga, gb])
            }),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Div)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            MatRef::rows(av.data(), k),
            MatRef::rows(bv.data(), n),
            T::zero(),
            MatMut::rows(&mut out, n),
        );
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.record(
            "matmul",
            value,
            &[a, b],
            Box::new(move |args| {
                let (av, bv) = (args.inputs[0], args.inputs[1]);
                let g = args.grad.data();
                let ga = if args.needs[0] {
                    // dA = G · Bᵀ
                    let mut d = vec![T::zero(); m * k];
                    T::gemm(
                        m,
                        n,
                        k,
                        T::one(),
                        MatRef::rows(g, n),
                        MatRef::transposed(bv.data(), n),
                        T::zero(),
                        MatMut::rows(&mut d, k),
                    );
                    Some(Tensor::new(vec![m, k], d)?)
                } else {
                    None
                };
                let gb = if args.needs[1] {
                    // dB = Aᵀ · G
                    let mut d = vec![T::zero(); k * n];
                    T::gemm(
                        k,
                        m,
                        n,
                        T::one(),
                        MatRef::transposed(av.data(), k),
                        MatRef::rows(g, n),
                        T::zero(),
                        MatMut::rows(&mut d, n),
                    );
                    Some(Tensor::new(vec![k, n], d)?)
                } else {
                    None
                };
                Ok(vec![ga, gb])
            }),
        ))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(Error::Shape(format!("transpose needs rank 2, got {:?}", xv.shape())));
        }
        let (r, c) = (xv.shape()[0], xv.shape()[1]);
        let value = Tensor::new(vec![c, r], transpose_data(xv.data(), r, c))?;
        Ok(self.record(
            "transpose",
            value,
            &[x],
            Box::new(move |args| {
                Ok(vec![Some(Tensor::new(
                    vec![r, c],
                    transpose_data(args.grad.data(), c, r),
                )?)])
            }),
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let old = self.shape(x).to_vec();
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.record(
            "reshape",
            value,
            &[x],
            Box::new(move |args| Ok(vec![Some(args.grad.clone().reshape(old.clone())?)])),
        ))
    }

    /// Sum or mean over one axis, or over everything when `axis` is `None`
    /// (producing a rank-0 tensor).
    pub fn reduce(&mut self, x: Var, kind: ReduceKind, axis: Option<usize>) -> Result<Var> {
        let xv = self.value(x);
        let in_shape = xv.shape().to_vec();
        let (outer, len, inner, out_shape) = match axis {
            None => (1, xv.numel(), 1, Vec::new()),
            Some(ax) => {
                if ax >= in_shape.len() {
                    return Err(Error::Shape(format!("axis {ax} out of range for {in_shape:?}")));
                }
                let (o, l, i) = axis_split(&in_shape, ax);
                let mut s = in_shape.clone();
                s.remove(ax);
                (o, l, i, s)
            }
        };
        if len == 0 {
            return Err(Error::Empty(format!("reduction over empty axis of {in_shape:?}")));
        }
        let scale = match kind {
            ReduceKind::Sum => T::one(),
            ReduceKind::Mean => T::one() / T::from_f64(len as f64),
        };
        let d = xv.data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                for i in 0..inner {
                    out[o * inner + i] += d[base + i];
                }
            }
        }
        for v in &mut out {
            *v *= scale;
        }
        let value = Tensor::new(out_shape, out)?;
        Ok(self.record(
            "reduce",
            value,
            &[x],
            Box::new(move |args| {
                let g = args.grad.data();
                let mut dx = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    for l in 0..len {
                        let base = (o * len + l) * inner;
                        for i in 0..inner {
                            dx[base + i] = g[o * inner + i] * scale;
                        }
                    }
                }
                Ok(vec![Some(Tensor::new(in_shape.clone(), dx)?)])
            }),
        ))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.reduce(x, ReduceKind::Sum, None)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.reduce(x, ReduceKind::Mean, None)
    }

    pub fn min_with_index(&mut self, x: Var, axis: Option<usize>) -> Result<ArgReduce> {
        self.arg_reduce(x, axis, |cand, best| cand < best)
    }

    pub fn max_with_index(&mut self, x: Var, axis: Option<usize>) -> Result<ArgReduce> {
        self.arg_reduce(x, axis, |cand, best| cand > best)
    }

    fn arg_reduce(&mut self, x: Var, axis: Option<usize>, better: fn(T, T) -> bool) -> Result<ArgReduce> {
        let xv = self.value(x);
        let in_shape = xv.shape().to_vec();
        let (outer, len, inner, out_shape) = match axis {
            None => (1, xv.numel(), 1, Vec::new()),
            Some(ax) => {
                if ax >= in_shape.len() {
                    return Err(Error::Shape(format!("axis {ax} out of range for {in_shape:?}")));
                }
                let (o, l, i) = axis_split(&in_shape, ax);
                let mut s = in_shape.clone();
                s.remove(ax);
                (o, l, i, s)
            }
        };
        if len == 0 {
            return Err(Error::Empty(format!("arg-reduction over empty axis of {in_shape:?}")));
        }
        let d = xv.data();
        let mut values = Vec::with_capacity(outer * inner);
        let mut indices = Vec::with_capacity(outer * inner);
        // flat source offsets, for the backward scatter
        let mut sources = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| (o * len + l) * inner + i;
                let mut best = 0;
                for l in 1..len {
                    if better(d[at(l)], d[at(best)]) {
                        best = l;
                    }
                }
                values.push(d[at(best)]);
                indices.push(best);
                sources.push(at(best));
            }
        }
        let value = Tensor::new(out_shape, values)?;
        let values = self.record(
            "arg_reduce",
            value,
            &[x],
            Box::new(move |args| {
                let mut dx = Tensor::zeros(in_shape.clone());
                let dd = dx.data_mut();
                for (&src, &g) in sources.iter().zip(args.grad.data()) {
                    dd[src] += g;
                }
                Ok(vec![Some(dx)])
            }),
        );
        Ok(ArgReduce { values, indices })
    }

    /// Picks elements by flat index; output has shape `[indices.len()]`.
    pub fn gather(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let n = xv.numel();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Shape(format!(
                "gather index {bad} out of range for {n} elements"
            )));
        }
        let d = xv.data();
        let value = Tensor::from_vec(indices.iter().map(|&i| d[i]).collect());
        let in_shape = xv.shape().to_vec();
        let idx = indices.to_vec();
        Ok(self.record(
            "gather",
            value,
            &[x],
            Box::new(move |args| {
                let mut dx = Tensor::zeros(in_shape.clone());
                let dd = dx.data_mut();
                for (&i, &g) in idx.iter().zip(args.grad.data()) {
                    dd[i] += g;
                }
                Ok(vec![Some(dx)])
            }),
        ))
    }

    /// Rows `[start, end)` of the leading axis.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let xv = self.value(x);
        let value = xv.slice_leading(start, end)?;
        let in_shape = xv.shape().to_vec();
        let inner: usize = in_shape[1..].iter().product();
        Ok(self.record(
            "slice_rows",
            value,
            &[x],
            Box::new(move |args| {
                let mut dx = Tensor::zeros(in_shape.clone());
                dx.data_mut()[start * inner..end * inner].copy_from_slice(args.grad.data());
                Ok(vec![Some(dx)])
            }),
        ))
    }
}

pub(crate) fn transpose_data<T: Copy>(d: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(d.len());
    for c in 0..cols {
        for r in 0..rows {
            out.push(d[r * cols + c]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64s(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn unary_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[3], &[-1.0, 0.0, 2.0]));
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
        let x = g.constant(t(&[1], &[f64::NAN]));
        let y = g.relu(x).unwrap();
        assert!(g.value(y).data()[0].is_nan());

        let x = g.constant(t(&[2], &[4.0, 9.0]));
        let y = g.sqrt(x).unwrap();
        assert_eq!(g.value(y).data(), &[2.0, 3.0]);

        let x = g.constant(t(&[2], &[-0.5, 1.5]));
        let y = g.clamp(x, 0.0, 1.0).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 1.0]);
    }

    #[test]
    fn domain_errors_are_explicit() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[2], &[1.0, -1.0]));
        assert!(matches!(g.sqrt(x), Err(Error::Domain { op: "sqrt", .. })));
        let z = g.constant(t(&[1], &[0.0]));
        assert!(matches!(g.log(z), Err(Error::Domain { op: "log", .. })));
        let nan = g.constant(t(&[1], &[f64::NAN]));
        assert!(g.sqrt(nan).is_err());
    }

    #[test]
    fn softplus_is_stable() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[3], &[-800.0, 0.0, 800.0]));
        let y = g.softplus(x).unwrap();
        let v = g.value(y).data();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(v[2], 800.0);
    }

    #[test]
    fn binary_examples() {
        let mut g = Graph::<f64>::new();
        let eye = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let m = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let y = g.matmul(eye, m).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);

        let a = g.constant(t(&[2], &[1.0, 2.0]));
        let b = g.constant(t(&[2], &[3.0, 4.0]));
        let y = g.add(a, b).unwrap();
        assert_eq!(g.value(y).data(), &[4.0, 6.0]);

        let r = g.constant(t(&[1, 2], &[1.0, 0.0]));
        let c = g.constant(t(&[2, 1], &[2.0, 5.0]));
        let y = g.matmul(r, c).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1]);
        assert_eq!(g.value(y).data(), &[2.0]);
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(vec![2, 3]));
        let b = g.constant(Tensor::zeros(vec![2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
        let c = g.constant(Tensor::zeros(vec![2]));
        let err = g.add(a, c).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2]"), "{err}");
    }

    #[test]
    fn reduce_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[3], &[0.3, 0.1, 0.1]));
        let r = g.min_with_index(x, None).unwrap();
        assert_eq!(g.value(r.values).data(), &[0.1]);
        assert_eq!(r.indices, vec![1]);

        let x = g.constant(t(&[3], &[1.0, 2.0, 3.0]));
        let m = g.mean(x).unwrap();
        assert_eq!(g.value(m).item().unwrap(), 2.0);

        let x = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let s = g.reduce(x, ReduceKind::Sum, Some(0)).unwrap();
        assert_eq!(g.value(s).data(), &[4.0, 6.0]);
        let s = g.reduce(x, ReduceKind::Sum, Some(1)).unwrap();
        assert_eq!(g.value(s).data(), &[3.0, 7.0]);

        let e = g.constant(Tensor::zeros(vec![2, 0]));
        assert!(matches!(g.reduce(e, ReduceKind::Sum, Some(1)), Err(Error::Empty(_))));
        assert!(matches!(g.min_with_index(e, Some(1)), Err(Error::Empty(_))));
        assert!(g.reduce(x, ReduceKind::Sum, Some(2)).is_err());
    }

    #[test]
    fn backward_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[3], &[0.5, -1.0, 2.0]));
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);

        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0]);

        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[1], &[4.0]));
        let r = g.sqrt(x).unwrap();
        g.backward(r).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.25]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let y = g.relu(x).unwrap();
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn non_participating_leaf_reads_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let unused = g.param(t(&[3], &[1.0, 2.0, 3.0]));
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert!(g.grad(unused).is_none());
        assert_eq!(g.grad_or_zero(unused).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn multi_path_gradients_accumulate() {
        // y = x + x + x: three paths from one leaf
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[2], &[0.3, -0.7]));
        let a = g.add(x, x).unwrap();
        let b = g.add(a, x).unwrap();
        let s = g.sum(b).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn broadcast_gradient_sums_over_leading_dims() {
        let mut g = Graph::<f64>::new();
        let a = g.param(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let b = g.param(t(&[3], &[1.0, 1.0, 1.0]));
        let y = g.mul(a, b).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(b).unwrap().data(), &[5.0, 7.0, 9.0]);
    }
}
