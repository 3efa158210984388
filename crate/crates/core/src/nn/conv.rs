use crate::error::{Error, Result};
use crate::tensor::{Element, Graph, MatMut, MatRef, Tensor, Var};

/// 2D convolution parameters: weights `[out_ch, in_ch, k, k]`, bias `[out_ch]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Element> ConvLayer<T> {
    /// Zero-initialized layer; see [`crate::nn::orthogonal_init`] for the
    /// initialization used by the descriptor network.
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize) -> Result<Self> {
        if kernel == 0 || stride == 0 || in_ch == 0 || out_ch == 0 {
            return Err(Error::Architecture(format!(
                "conv needs positive channels, kernel and stride (in {in_ch}, out {out_ch}, k {kernel}, s {stride})"
            )));
        }
        Ok(Self {
            weight: Tensor::zeros(vec![out_ch, in_ch, kernel, kernel]),
            bias: Tensor::zeros(vec![out_ch]),
            stride,
            padding,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn output_size(&self, input: usize) -> Result<usize> {
        conv_output_size(input, self.kernel(), self.stride, self.padding)
    }
}

/// `floor((in + 2·pad − k) / stride) + 1`, or a shape error when that is < 1.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || padded < kernel {
        return Err(Error::Shape(format!(
            "conv output empty: input {input}, kernel {kernel}, stride {stride}, padding {padding}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn ckk(&self) -> usize {
        self.c * self.k * self.k
    }

    fn ohw(&self) -> usize {
        self.oh * self.ow
    }

    /// Samples per im2col block; bounds the column buffer to ~2M elements.
    fn chunk(&self) -> usize {
        let per_sample = self.ckk() * self.ohw();
        ((1 << 21) / per_sample.max(1)).clamp(1, self.n.max(1))
    }

    /// Unfolds samples `s0..s1` into `cols`, laid out `[c·k·k, (s1−s0)·oh·ow]`.
    fn im2col<T: Element>(&self, x: &[T], s0: usize, s1: usize, cols: &mut [T]) {
        let cn = (s1 - s0) * self.ohw();
        let (h, w, k) = (self.h as isize, self.w as isize, self.k);
        for ci in 0..self.c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut cols[row * cn..(row + 1) * cn];
                    for s in s0..s1 {
                        let plane = &x[(s * self.c + ci) * self.h * self.w..][..self.h * self.w];
                        let base = (s - s0) * self.ohw();
                        for oy in 0..self.oh {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            let out = &mut dst[base + oy * self.ow..base + (oy + 1) * self.ow];
                            if iy < 0 || iy >= h {
                                out.fill(T::zero());
                                continue;
                            }
                            let src = &plane[iy as usize * self.w..][..self.w];
                            for (ox, o) in out.iter_mut().enumerate() {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                *o = if ix < 0 || ix >= w { T::zero() } else { src[ix as usize] };
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`im2col`](Self::im2col): accumulates `cols` back into `dx`.
    fn col2im<T: Element>(&self, cols: &[T], s0: usize, s1: usize, dx: &mut [T]) {
        let cn = (s1 - s0) * self.ohw();
        let (h, w, k) = (self.h as isize, self.w as isize, self.k);
        for ci in 0..self.c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &cols[row * cn..(row + 1) * cn];
                    for s in s0..s1 {
                        let plane = &mut dx[(s * self.c + ci) * self.h * self.w..][..self.h * self.w];
                        let base = (s - s0) * self.ohw();
                        for oy in 0..self.oh {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= h {
                                continue;
                            }
                            let dst = &mut plane[iy as usize * self.w..][..self.w];
                            let vals = &src[base + oy * self.ow..base + (oy + 1) * self.ow];
                            for (ox, &v) in vals.iter().enumerate() {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix >= 0 && ix < w {
                                    dst[ix as usize] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Zero-padded, strided cross-correlation of `x: [n, c, h, w]` with
/// `weight: [o, c, k, k]` plus per-channel `bias: [o]`.
pub fn conv2d<T: Element>(
    g: &mut Graph<T>,
    x: Var,
    weight: Var,
    bias: Var,
    stride: usize,
    padding: usize,
) -> Result<Var> {
    let (xs, ws, bs) = (g.shape(x).to_vec(), g.shape(weight).to_vec(), g.shape(bias).to_vec());
    if xs.len() != 4 || ws.len() != 4 || ws[2] != ws[3] {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            lhs: xs,
            rhs: ws,
        });
    }
    if xs[1] != ws[1] {
        return Err(Error::Shape(format!(
            "conv2d channel mismatch: input has {} channels, weights expect {} ({xs:?} vs {ws:?})",
            xs[1], ws[1]
        )));
    }
    if bs != [ws[0]] {
        return Err(Error::ShapeMismatch {
            op: "conv2d bias",
            lhs: bs,
            rhs: vec![ws[0]],
        });
    }
    let k = ws[2];
    let geom = Geometry {
        n: xs[0],
        c: xs[1],
        h: xs[2],
        w: xs[3],
        o: ws[0],
        k,
        stride,
        pad: padding,
        oh: conv_output_size(xs[2], k, stride, padding)?,
        ow: conv_output_size(xs[3], k, stride, padding)?,
    };

    let out = {
        let (xd, wd, bd) = (g.value(x).data(), g.value(weight).data(), g.value(bias).data());
        forward(&geom, xd, wd, bd)
    };
    let value = Tensor::new(vec![geom.n, geom.o, geom.oh, geom.ow], out)?;
    Ok(g.record(
        "conv2d",
        value,
        &[x, weight, bias],
        Box::new(move |args| {
            let (xd, wd) = (args.inputs[0].data(), args.inputs[1].data());
            let (dx, dw, db) = backward(&geom, xd, wd, args.grad.data(), args.needs);
            Ok(vec![
                dx.map(|d| Tensor::new(vec![geom.n, geom.c, geom.h, geom.w], d))
                    .transpose()?,
                dw.map(|d| Tensor::new(vec![geom.o, geom.c, geom.k, geom.k], d))
                    .transpose()?,
                db.map(Tensor::from_vec),
            ])
        }),
    ))
}

fn forward<T: Element>(geom: &Geometry, x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let (ckk, ohw, o) = (geom.ckk(), geom.ohw(), geom.o);
    let chunk = geom.chunk();
    let mut out = vec![T::zero(); geom.n * o * ohw];
    let mut cols = vec![T::zero(); ckk * chunk * ohw];
    let mut tmp = vec![T::zero(); o * chunk * ohw];
    for s0 in (0..geom.n).step_by(chunk) {
        let s1 = (s0 + chunk).min(geom.n);
        let cn = (s1 - s0) * ohw;
        geom.im2col(x, s0, s1, &mut cols[..ckk * cn]);
        T::gemm(
            o,
            ckk,
            cn,
            T::one(),
            MatRef::rows(w, ckk),
            MatRef::rows(&cols[..ckk * cn], cn),
            T::zero(),
            MatMut::rows(&mut tmp[..o * cn], cn),
        );
        for s in s0..s1 {
            for oc in 0..o {
                let src = &tmp[oc * cn + (s - s0) * ohw..][..ohw];
                let dst = &mut out[(s * o + oc) * ohw..][..ohw];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = v + b[oc];
                }
            }
        }
    }
    out
}

type ConvGrads<T> = (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>);

fn backward<T: Element>(geom: &Geometry, x: &[T], w: &[T], grad: &[T], needs: &[bool]) -> ConvGrads<T> {
    let (ckk, ohw, o) = (geom.ckk(), geom.ohw(), geom.o);
    let chunk = geom.chunk();
    let mut dx = needs[0].then(|| vec![T::zero(); x.len()]);
    let mut dw = needs[1].then(|| vec![T::zero(); w.len()]);
    let mut db = needs[2].then(|| vec![T::zero(); o]);
    let mut cols = vec![T::zero(); ckk * chunk * ohw];
    let mut gtmp = vec![T::zero(); o * chunk * ohw];
    for s0 in (0..geom.n).step_by(chunk) {
        let s1 = (s0 + chunk).min(geom.n);
        let cn = (s1 - s0) * ohw;
        for s in s0..s1 {
            for oc in 0..o {
                gtmp[oc * cn + (s - s0) * ohw..][..ohw].copy_from_slice(&grad[(s * o + oc) * ohw..][..ohw]);
            }
        }
        let gchunk = &gtmp[..o * cn];
        if let Some(db) = db.as_mut() {
            for (oc, d) in db.iter_mut().enumerate() {
                *d += gchunk[oc * cn..(oc + 1) * cn].iter().copied().sum::<T>();
            }
        }
        if let Some(dw) = dw.as_mut() {
            geom.im2col(x, s0, s1, &mut cols[..ckk * cn]);
            // dW += G · colsᵀ
            T::gemm(
                o,
                cn,
                ckk,
                T::one(),
                MatRef::rows(gchunk, cn),
                MatRef::transposed(&cols[..ckk * cn], cn),
                T::one(),
                MatMut::rows(dw, ckk),
            );
        }
        if let Some(dx) = dx.as_mut() {
            // dcols = Wᵀ · G
            T::gemm(
                ckk,
                o,
                cn,
                T::one(),
                MatRef::transposed(w, ckk),
                MatRef::rows(gchunk, cn),
                T::zero(),
                MatMut::rows(&mut cols[..ckk * cn], cn),
            );
            geom.col2im(&cols[..ckk * cn], s0, s1, dx);
        }
    }
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Six-nested-loop reference convolution.
    fn direct_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let [n, c, h, wd] = x.shape().try_into().unwrap();
        let [o, _, k, _] = w.shape().try_into().unwrap();
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0; n * o * oh * ow];
        for s in 0..n {
            for oc in 0..o {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.data()[oc];
                        for ic in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += x.data()[((s * c + ic) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((oc * c + ic) * k + ky) * k + kx];
                                }
                            }
                        }
                        out[((s * o + oc) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        Tensor::new(vec![n, o, oh, ow], out).unwrap()
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn run(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
        let y = conv2d(&mut g, xv, wv, bv, stride, pad).unwrap();
        g.value(y).clone()
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor::new(vec![1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let mut w = Tensor::zeros(vec![1, 1, 3, 3]);
        w.data_mut()[4] = 1.0;
        let y = run(&x, &w, &Tensor::zeros(vec![1]), 1, 1);
        assert_eq!(y, x);
    }

    #[test]
    fn strided_output_size() {
        let x = Tensor::ones(vec![1, 1, 4, 4]);
        let y = run(&x, &Tensor::ones(vec![1, 1, 3, 3]), &Tensor::zeros(vec![1]), 2, 1);
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
    }

    #[test]
    fn all_ones_sum() {
        let y = run(
            &Tensor::ones(vec![1, 1, 3, 3]),
            &Tensor::ones(vec![1, 1, 3, 3]),
            &Tensor::zeros(vec![1]),
            1,
            0,
        );
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn errors() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(vec![1, 2, 4, 4]));
        let w = g.constant(Tensor::zeros(vec![3, 1, 3, 3]));
        let b = g.constant(Tensor::zeros(vec![3]));
        assert!(matches!(conv2d(&mut g, x, w, b, 1, 1), Err(Error::Shape(_))));
        let w = g.constant(Tensor::zeros(vec![3, 2, 5, 5]));
        assert!(matches!(conv2d(&mut g, x, w, b, 1, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, c, o, hw, k, stride, pad) in &[
            (2, 4, 3, 16, 3, 1, 1),
            (2, 4, 5, 16, 3, 2, 1),
            (3, 2, 4, 9, 4, 1, 0),
            (1, 3, 2, 8, 8, 1, 0),
            (2, 1, 2, 5, 3, 3, 2),
        ] {
            let x = random(&[n, c, hw, hw], &mut rng);
            let w = random(&[o, c, k, k], &mut rng);
            let b = random(&[o], &mut rng);
            let got = run(&x, &w, &b, stride, pad);
            let want = direct_conv(&x, &w, &b, stride, pad);
            assert_eq!(got.shape(), want.shape());
            for (a, e) in got.data().iter().zip(want.data()) {
                assert!((a - e).abs() < 1e-10, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn gradients_pass_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(&[2, 2, 5, 5], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        // weighted sum so every output position has a distinct sensitivity
        let probe = random(&[2, 3, 3, 3], &mut rng);
        let loss = |g: &mut Graph<f64>, y: Var| -> Result<Var> {
            let p = g.constant(probe.clone());
            let m = g.mul(y, p)?;
            g.sum(m)
        };
        let err_x = grad_check(
            |g, xv| {
                let (wv, bv) = (g.constant(w.clone()), g.constant(b.clone()));
                let y = conv2d(g, xv, wv, bv, 2, 1)?;
                loss(g, y)
            },
            &x,
            1e-5,
        )
        .unwrap();
        let err_w = grad_check(
            |g, wv| {
                let (xv, bv) = (g.constant(x.clone()), g.constant(b.clone()));
                let y = conv2d(g, xv, wv, bv, 2, 1)?;
                loss(g, y)
            },
            &w,
            1e-5,
        )
        .unwrap();
        let err_b = grad_check(
            |g, bv| {
                let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
                let y = conv2d(g, xv, wv, bv, 2, 1)?;
                loss(g, y)
            },
            &b,
            1e-5,
        )
        .unwrap();
        assert!(err_x < 1e-4 && err_w < 1e-4 && err_b < 1e-4, "{err_x} {err_w} {err_b}");
    }
}
