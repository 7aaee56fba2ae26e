use crate::error::{CoreError, Result};
use crate::real::{real, Real};
use crate::tensor::Tensor;
use rand::Rng;

/// Logits are clamped to this magnitude before exponentiation; avoids
/// overflow without measurable bias.
pub const SIGMOID_CLAMP: f64 = 30.0;

pub fn sigmoid<E: Real>(logit: E) -> E {
    let c = real::<E>(SIGMOID_CLAMP);
    let z = logit.max(-c).min(c);
    E::one() / (E::one() + (-z).exp())
}

/// d sigmoid / d logit expressed through the output probability.
pub fn sigmoid_derivative<E: Real>(p: E) -> E {
    p * (E::one() - p)
}

pub fn relu<E: Real>(x: &Tensor<E>) -> Tensor<E> {
    x.map(|v| v.max(E::zero()))
}

/// Backward through ReLU given the activated output (mask = output > 0).
pub fn relu_backward<E: Real>(activated: &Tensor<E>, grad: &Tensor<E>) -> Result<Tensor<E>> {
    activated.zip_map(grad, |a, g| if a > E::zero() { g } else { E::zero() })
}

pub fn tanh_forward<E: Real>(x: &Tensor<E>) -> Tensor<E> {
    x.map(|v| v.tanh())
}

/// Backward through tanh given the activated output: grad * (1 - y^2).
pub fn tanh_backward<E: Real>(activated: &Tensor<E>, grad: &Tensor<E>) -> Result<Tensor<E>> {
    activated.zip_map(grad, |y, g| g * (E::one() - y * y))
}

/// Fully connected layer; weight is (out, in), bias is (out).
#[derive(Clone, Debug)]
pub struct Dense<E = f32> {
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

#[derive(Clone, Debug)]
pub struct DenseGrads<E = f32> {
    pub input: Tensor<E>,
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

impl<E: Real> Dense<E> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Tensor::he_uniform(&[out_dim, in_dim], in_dim, rng),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    /// `(n, in) -> (n, out)`.
    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        if x.rank() != 2 || x.cols() != self.in_dim() {
            return Err(CoreError::ShapeMismatch {
                context: "dense forward",
                expected: vec![self.in_dim()],
                got: x.shape().to_vec(),
            });
        }
        let mut y = x.matmul_nt(&self.weight)?;
        y.add_row_bias(&self.bias)?;
        Ok(y)
    }

    /// Gradients for the layer and its input, given the forward input and the
    /// upstream gradient of shape `(n, out)`.
    pub fn backward(&self, x: &Tensor<E>, grad_out: &Tensor<E>) -> Result<DenseGrads<E>> {
        if grad_out.rank() != 2 || grad_out.cols() != self.out_dim() || grad_out.rows() != x.rows()
        {
            return Err(CoreError::ShapeMismatch {
                context: "dense backward",
                expected: vec![x.rows(), self.out_dim()],
                got: grad_out.shape().to_vec(),
            });
        }
        Ok(DenseGrads {
            input: grad_out.matmul(&self.weight)?,
            weight: grad_out.matmul_tn(x)?,
            bias: grad_out.sum_rows(),
        })
    }
}

/// 3x3-style convolution with stride 1 and same-size zero padding.
/// Kernel is (out_c, in_c, k, k), input is (in_c, h, w).
#[derive(Clone, Debug)]
pub struct Conv2d<E = f32> {
    pub kernel: Tensor<E>,
    pub bias: Tensor<E>,
}

#[derive(Clone, Debug)]
pub struct ConvGrads<E = f32> {
    pub input: Tensor<E>,
    pub kernel: Tensor<E>,
    pub bias: Tensor<E>,
}

impl<E: Real> Conv2d<E> {
    pub fn new(in_c: usize, out_c: usize, ksize: usize, rng: &mut impl Rng) -> Self {
        assert!(ksize % 2 == 1, "same-padding needs an odd kernel size");
        let fan_in = in_c * ksize * ksize;
        Self {
            kernel: Tensor::he_uniform(&[out_c, in_c, ksize, ksize], fan_in, rng),
            bias: Tensor::zeros(&[out_c]),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn ksize(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let (oc, ic, k) = (self.out_channels(), self.in_channels(), self.ksize());
        if x.rank() != 3 || x.shape()[0] != ic {
            return Err(CoreError::ShapeMismatch {
                context: "conv forward",
                expected: vec![ic],
                got: x.shape().to_vec(),
            });
        }
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let pad = k / 2;
        let xd = x.data();
        let kd = self.kernel.data();
        let mut out = vec![E::zero(); oc * h * w];
        for o in 0..oc {
            let b = self.bias.data()[o];
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = b;
                    for i in 0..ic {
                        for ky in 0..k {
                            let sy = y + ky;
                            if sy < pad || sy - pad >= h {
                                continue;
                            }
                            let sy = sy - pad;
                            for kx in 0..k {
                                let sx = xx + kx;
                                if sx < pad || sx - pad >= w {
                                    continue;
                                }
                                let sx = sx - pad;
                                acc = acc
                                    + kd[((o * ic + i) * k + ky) * k + kx]
                                        * xd[(i * h + sy) * w + sx];
                            }
                        }
                    }
                    out[(o * h + y) * w + xx] = acc;
                }
            }
        }
        Tensor::new(vec![oc, h, w], out)
    }

    pub fn backward(&self, x: &Tensor<E>, grad_out: &Tensor<E>) -> Result<ConvGrads<E>> {
        let (oc, ic, k) = (self.out_channels(), self.in_channels(), self.ksize());
        let (h, w) = (x.shape()[1], x.shape()[2]);
        if grad_out.shape() != [oc, h, w] {
            return Err(CoreError::ShapeMismatch {
                context: "conv backward",
                expected: vec![oc, h, w],
                got: grad_out.shape().to_vec(),
            });
        }
        let pad = k / 2;
        let xd = x.data();
        let kd = self.kernel.data();
        let gd = grad_out.data();
        let mut dk = vec![E::zero(); kd.len()];
        let mut db = vec![E::zero(); oc];
        let mut dx = vec![E::zero(); xd.len()];
        for o in 0..oc {
            for y in 0..h {
                for xx in 0..w {
                    let g = gd[(o * h + y) * w + xx];
                    if g == E::zero() {
                        continue;
                    }
                    db[o] = db[o] + g;
                    for i in 0..ic {
                        for ky in 0..k {
                            let sy = y + ky;
                            if sy < pad || sy - pad >= h {
                                continue;
                            }
                            let sy = sy - pad;
                            for kx in 0..k {
                                let sx = xx + kx;
                                if sx < pad || sx - pad >= w {
                                    continue;
                                }
                                let sx = sx - pad;
                                let kidx = ((o * ic + i) * k + ky) * k + kx;
                                let xidx = (i * h + sy) * w + sx;
                                dk[kidx] = dk[kidx] + g * xd[xidx];
                                dx[xidx] = dx[xidx] + g * kd[kidx];
                            }
                        }
                    }
                }
            }
        }
        Ok(ConvGrads {
            input: Tensor::new(vec![ic, h, w], dx)?,
            kernel: Tensor::new(self.kernel.shape().to_vec(), dk)?,
            bias: Tensor::new(vec![oc], db)?,
        })
    }
}

/// 2x2 max pooling with stride 2 on a (c, h, w) tensor; h and w must be even.
/// Returns the pooled tensor and the flat argmax index per output cell.
pub fn max_pool2<E: Real>(x: &Tensor<E>) -> Result<(Tensor<E>, Vec<usize>)> {
    if x.rank() != 3 || x.shape()[1] % 2 != 0 || x.shape()[2] % 2 != 0 {
        return Err(CoreError::ShapeMismatch {
            context: "max pool",
            expected: vec![x.shape()[0]],
            got: x.shape().to_vec(),
        });
    }
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = vec![E::zero(); c * oh * ow];
    let mut arg = vec![0usize; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let mut best_idx = (ch * h + 2 * y) * w + 2 * xx;
                let mut best = xd[best_idx];
                for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let idx = (ch * h + 2 * y + dy) * w + 2 * xx + dx;
                    if xd[idx] > best {
                        best = xd[idx];
                        best_idx = idx;
                    }
                }
                let oidx = (ch * oh + y) * ow + xx;
                out[oidx] = best;
                arg[oidx] = best_idx;
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, arg))
}

pub fn max_pool2_backward<E: Real>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<E>,
) -> Result<Tensor<E>> {
    if grad_out.len() != argmax.len() {
        return Err(CoreError::ShapeMismatch {
            context: "max pool backward",
            expected: vec![argmax.len()],
            got: grad_out.shape().to_vec(),
        });
    }
    let mut dx = Tensor::zeros(input_shape);
    let dxd = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        dxd[idx] = dxd[idx] + g;
    }
    Ok(dx)
}

/// Inverted dropout: zeroes a fraction `rate` of units and rescales survivors
/// by 1/(1-rate). Disabled at inference by simply not calling it.
#[derive(Clone, Copy, Debug)]
pub struct Dropout {
    pub rate: f64,
}

#[derive(Clone, Debug)]
pub struct DropoutMask {
    keep: Vec<bool>,
    scale: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Self { rate }
    }

    pub fn forward<E: Real>(&self, x: &Tensor<E>, rng: &mut impl Rng) -> (Tensor<E>, DropoutMask) {
        let keep: Vec<bool> = (0..x.len()).map(|_| rng.gen::<f64>() >= self.rate).collect();
        let scale = 1.0 / (1.0 - self.rate);
        let mask = DropoutMask { keep, scale };
        (mask.apply(x), mask)
    }
}

impl DropoutMask {
    pub fn apply<E: Real>(&self, x: &Tensor<E>) -> Tensor<E> {
        let s = real::<E>(self.scale);
        let mut out = x.clone();
        for (v, &k) in out.data_mut().iter_mut().zip(&self.keep) {
            *v = if k { *v * s } else { E::zero() };
        }
        out
    }

    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigmoid_is_clamped_and_bounded() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        let hi = sigmoid(1e9f64);
        let lo = sigmoid(-1e9f64);
        assert!(hi < 1.0 && hi > 0.999_999_99);
        assert!(lo > 0.0 && lo < 1e-12);
        assert_eq!(hi, sigmoid(SIGMOID_CLAMP));
    }

    #[test]
    fn dense_forward_matches_manual() {
        let layer = Dense {
            weight: Tensor::<f64>::new(vec![2, 3], vec![1., 0., -1., 0.5, 0.5, 0.5]).unwrap(),
            bias: Tensor::new(vec![2], vec![0.1, -0.1]).unwrap(),
        };
        let x = Tensor::new(vec![1, 3], vec![2., 4., 6.]).unwrap();
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.data(), &[2. - 6. + 0.1, 6.0 - 0.1]);
    }

    #[test]
    fn max_pool_tracks_argmax() {
        let x = Tensor::<f64>::new(
            vec![1, 4, 2],
            vec![1., 2., 3., 0., -1., -2., -3., -4.],
        )
        .unwrap();
        let (y, arg) = max_pool2(&x).unwrap();
        assert_eq!(y.shape(), &[1, 2, 1]);
        assert_eq!(y.data(), &[3., -1.]);
        assert_eq!(arg, vec![2, 4]);
        let dx = max_pool2_backward(&[1, 4, 2], &arg, &y).unwrap();
        assert_eq!(dx.data()[2], 3.0);
        assert_eq!(dx.data()[4], -1.0);
    }

    #[test]
    fn dropout_rate_and_rescale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = 0.25;
        let layer = Dropout::new(q);
        let x = Tensor::<f64>::filled(&[100_000], 1.0);
        let (y, mask) = layer.forward(&x, &mut rng);
        let dropped = 1.0 - mask.kept() as f64 / mask.len() as f64;
        assert!((dropped - q).abs() <= 0.02, "dropped fraction {dropped}");
        for &v in y.data() {
            assert!(v == 0.0 || (v - 1.0 / (1.0 - q)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rate_dropout_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f32>::filled(&[64], 2.0);
        let (y, _) = Dropout::new(0.0).forward(&x, &mut rng);
        assert_eq!(y.data(), x.data());
    }
}
