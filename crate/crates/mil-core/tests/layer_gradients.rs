//! Central finite-difference verification of every hand-written backward
//! pass, in 32-bit training precision and 64-bit verification mode.

use mil_core::{
    grad_check, max_pool2, max_pool2_backward, real, relu, relu_backward, sigmoid,
    sigmoid_derivative, sparsemax, sparsemax_backward, tanh_backward, tanh_forward, Conv2d, Dense,
    Dropout, FocalLoss, Real, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor<E: Real>(shape: &[usize], rng: &mut impl Rng) -> Tensor<E> {
    Tensor::from_fn(shape, |_| real(rng.gen_range(-1.0..1.0)))
}

fn dense_layer_check<E: Real>(epsilon: f64, tol: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let layer: Dense<E> = Dense::new(5, 4, &mut rng);
    let x = rand_tensor::<E>(&[3, 5], &mut rng);
    let params = [layer.weight.clone(), layer.bias.clone(), x.clone()];

    let loss = |ps: &[Tensor<E>]| {
        let l = Dense {
            weight: ps[0].clone(),
            bias: ps[1].clone(),
        };
        let y = l.forward(&ps[2]).unwrap();
        let n = real::<E>(y.len() as f64);
        y.data().iter().map(|&v| v * v).sum::<E>() / n
    };

    let y = layer.forward(&x).unwrap();
    let scale = real::<E>(2.0 / y.len() as f64);
    let grad_out = y.map(|v| v * scale);
    let grads = layer.backward(&x, &grad_out).unwrap();
    let analytic = [grads.weight, grads.bias, grads.input];

    let report = grad_check(loss, &params, &analytic, epsilon, 200, &mut rng);
    assert!(
        report.max_rel_err <= tol,
        "dense layer rel err {} > {tol}",
        report.max_rel_err
    );
}

fn conv_layer_check<E: Real>(epsilon: f64, tol: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let layer: Conv2d<E> = Conv2d::new(2, 3, 3, &mut rng);
    let x = rand_tensor::<E>(&[2, 6, 6], &mut rng);
    let params = [layer.kernel.clone(), layer.bias.clone(), x.clone()];

    let loss = |ps: &[Tensor<E>]| {
        let l = Conv2d {
            kernel: ps[0].clone(),
            bias: ps[1].clone(),
        };
        let y = l.forward(&ps[2]).unwrap();
        let n = real::<E>(y.len() as f64);
        y.data().iter().map(|&v| v * v).sum::<E>() / n
    };

    let y = layer.forward(&x).unwrap();
    let scale = real::<E>(2.0 / y.len() as f64);
    let grad_out = y.map(|v| v * scale);
    let grads = layer.backward(&x, &grad_out).unwrap();
    let analytic = [grads.kernel, grads.bias, grads.input];

    let report = grad_check(loss, &params, &analytic, epsilon, 200, &mut rng);
    assert!(
        report.max_rel_err <= tol,
        "conv layer rel err {} > {tol}",
        report.max_rel_err
    );
}

fn pool_check<E: Real>(epsilon: f64, tol: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let x = rand_tensor::<E>(&[2, 4, 4], &mut rng);

    let loss = |ps: &[Tensor<E>]| {
        let (y, _) = max_pool2(&ps[0]).unwrap();
        let n = real::<E>(y.len() as f64);
        y.data().iter().map(|&v| v * v).sum::<E>() / n
    };

    let (y, arg) = max_pool2(&x).unwrap();
    let scale = real::<E>(2.0 / y.len() as f64);
    let grad_out = y.map(|v| v * scale);
    let dx = max_pool2_backward(x.shape(), &arg, &grad_out).unwrap();

    let report = grad_check(loss, &[x], &[dx], epsilon, 64, &mut rng);
    assert!(
        report.max_rel_err <= tol,
        "max pool rel err {} > {tol}",
        report.max_rel_err
    );
}

/// dense -> tanh -> dense -> relu path, exercising both activations.
fn activation_chain_check<E: Real>(epsilon: f64, tol: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let l1: Dense<E> = Dense::new(4, 6, &mut rng);
    let l2: Dense<E> = Dense::new(6, 3, &mut rng);
    let x = rand_tensor::<E>(&[2, 4], &mut rng);
    let params = [
        l1.weight.clone(),
        l1.bias.clone(),
        l2.weight.clone(),
        l2.bias.clone(),
    ];

    let fwd = |w1: &Tensor<E>, b1: &Tensor<E>, w2: &Tensor<E>, b2: &Tensor<E>| {
        let a = Dense {
            weight: w1.clone(),
            bias: b1.clone(),
        };
        let b = Dense {
            weight: w2.clone(),
            bias: b2.clone(),
        };
        let h = tanh_forward(&a.forward(&x).unwrap());
        let y = relu(&b.forward(&h).unwrap());
        let n = real::<E>(y.len() as f64);
        y.data().iter().map(|&v| v * v).sum::<E>() / n
    };
    let loss = |ps: &[Tensor<E>]| fwd(&ps[0], &ps[1], &ps[2], &ps[3]);

    // Analytic pass.
    let z1 = l1.forward(&x).unwrap();
    let h = tanh_forward(&z1);
    let z2 = l2.forward(&h).unwrap();
    let y = relu(&z2);
    let scale = real::<E>(2.0 / y.len() as f64);
    let dy = y.map(|v| v * scale);
    let dz2 = relu_backward(&y, &dy).unwrap();
    let g2 = l2.backward(&h, &dz2).unwrap();
    let dh = g2.input;
    let dz1 = tanh_backward(&h, &dh).unwrap();
    let g1 = l1.backward(&x, &dz1).unwrap();
    let analytic = [g1.weight, g1.bias, g2.weight, g2.bias];

    let report = grad_check(loss, &params, &analytic, epsilon, 200, &mut rng);
    assert!(
        report.max_rel_err <= tol,
        "activation chain rel err {} > {tol}",
        report.max_rel_err
    );
}

/// classifier path: dense -> sigmoid -> focal loss.
fn sigmoid_focal_check<E: Real>(epsilon: f64, tol: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let layer: Dense<E> = Dense::new(8, 1, &mut rng);
    let x = rand_tensor::<E>(&[1, 8], &mut rng);
    let focal = FocalLoss::new(0.25, 2.0).unwrap();
    let params = [layer.weight.clone(), layer.bias.clone()];

    let loss = |ps: &[Tensor<E>]| {
        let l = Dense {
            weight: ps[0].clone(),
            bias: ps[1].clone(),
        };
        let logit = l.forward(&x).unwrap().data()[0];
        focal.value(sigmoid(logit), true)
    };

    let logit = layer.forward(&x).unwrap().data()[0];
    let p = sigmoid(logit);
    let dlogit = focal.grad(p, true) * sigmoid_derivative(p);
    let grad_out = Tensor::new(vec![1, 1], vec![dlogit]).unwrap();
    let grads = layer.backward(&x, &grad_out).unwrap();
    let analytic = [grads.weight, grads.bias];

    let report = grad_check(loss, &params, &analytic, epsilon, 64, &mut rng);
    assert!(
        report.max_rel_err <= tol,
        "sigmoid+focal rel err {} > {tol}",
        report.max_rel_err
    );
}

/// attention-style pooling: scores through sparsemax, convex combination of
/// feature rows, quadratic readout.
fn sparsemax_pooling_check<E: Real>(epsilon: f64, tol: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let r = 5;
    let d = 4;
    let features = rand_tensor::<E>(&[r, d], &mut rng);
    let logits = rand_tensor::<E>(&[r], &mut rng);
    let readout = rand_tensor::<E>(&[d], &mut rng);

    let pooled_loss = |logits: &Tensor<E>, features: &Tensor<E>| {
        let a = sparsemax(logits.data()).unwrap();
        let mut z = vec![E::zero(); d];
        for (k, &ak) in a.iter().enumerate() {
            for (z_j, &f_j) in z.iter_mut().zip(features.row(k)) {
                *z_j = *z_j + ak * f_j;
            }
        }
        let s: E = z.iter().zip(readout.data()).map(|(&a, &b)| a * b).sum();
        s * s
    };
    let loss = |ps: &[Tensor<E>]| pooled_loss(&ps[0], &ps[1]);

    // Analytic: dL/dz = 2 s * readout; da_k = dL/dz . F_k; dlogits via JVP;
    // dF_kj = a_k * dL/dz_j.
    let a = sparsemax(logits.data()).unwrap();
    let mut z = vec![E::zero(); d];
    for (k, &ak) in a.iter().enumerate() {
        for (z_j, &f_j) in z.iter_mut().zip(features.row(k)) {
            *z_j = *z_j + ak * f_j;
        }
    }
    let s: E = z.iter().zip(readout.data()).map(|(&a, &b)| a * b).sum();
    let two_s = s + s;
    let dz: Vec<E> = readout.data().iter().map(|&v| two_s * v).collect();
    let da: Vec<E> = (0..r)
        .map(|k| {
            features
                .row(k)
                .iter()
                .zip(&dz)
                .map(|(&f, &g)| f * g)
                .sum()
        })
        .collect();
    let dlogits = sparsemax_backward(logits.data(), &da).unwrap();
    let dfeatures = Tensor::from_fn(&[r, d], |i| a[i / d] * dz[i % d]);
    let analytic = [
        Tensor::new(vec![r], dlogits).unwrap(),
        dfeatures,
    ];

    let report = grad_check(
        loss,
        &[logits, features],
        &analytic,
        epsilon,
        200,
        &mut rng,
    );
    assert!(
        report.max_rel_err <= tol,
        "sparsemax pooling rel err {} > {tol}",
        report.max_rel_err
    );
}

#[test]
fn dense_gradients_f32() {
    dense_layer_check::<f32>(1e-3, 1e-3);
}

#[test]
fn dense_gradients_f64() {
    dense_layer_check::<f64>(1e-5, 1e-5);
}

#[test]
fn conv_gradients_f32() {
    conv_layer_check::<f32>(1e-3, 1e-3);
}

#[test]
fn conv_gradients_f64() {
    conv_layer_check::<f64>(1e-5, 1e-5);
}

#[test]
fn max_pool_gradients_f32() {
    pool_check::<f32>(1e-3, 1e-3);
}

#[test]
fn max_pool_gradients_f64() {
    pool_check::<f64>(1e-5, 1e-5);
}

#[test]
fn activation_chain_gradients_f32() {
    activation_chain_check::<f32>(1e-3, 1e-3);
}

#[test]
fn activation_chain_gradients_f64() {
    activation_chain_check::<f64>(1e-5, 1e-5);
}

#[test]
fn sigmoid_focal_gradients_f32() {
    sigmoid_focal_check::<f32>(1e-3, 1e-3);
}

#[test]
fn sigmoid_focal_gradients_f64() {
    sigmoid_focal_check::<f64>(1e-5, 1e-5);
}

#[test]
fn sparsemax_pooling_gradients_f32() {
    sparsemax_pooling_check::<f32>(1e-3, 1e-3);
}

#[test]
fn sparsemax_pooling_gradients_f64() {
    sparsemax_pooling_check::<f64>(1e-5, 1e-5);
}

#[test]
fn dropout_backward_reapplies_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let x = Tensor::<f64>::from_fn(&[256], |i| (i + 1) as f64 / 256.0);
    let (y, mask) = Dropout::new(0.5).forward(&x, &mut rng);
    // The layer is linear in its input given the mask, so the backward pass
    // is the same masked rescaling applied to the upstream gradient.
    let upstream = Tensor::<f64>::filled(&[256], 1.0);
    let grad = mask.apply(&upstream);
    for i in 0..256 {
        if y.data()[i] == 0.0 {
            assert_eq!(grad.data()[i], 0.0);
        } else {
            assert_eq!(grad.data()[i], 2.0);
        }
    }
}
