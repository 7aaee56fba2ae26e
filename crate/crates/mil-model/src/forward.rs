use crate::bag::Bag;
use crate::error::{ModelError, Result};
use crate::params::{Encoder, LearnerKind, ModelParams};
use mil_core::{
    max_pool2, max_pool2_backward, relu, relu_backward, sigmoid, sigmoid_derivative, sparsemax,
    sparsemax_backward, tanh_backward, tanh_forward, Dropout, DropoutMask, Real, Tensor,
};
use rand_chacha::ChaCha8Rng;

/// Dropout between the encoder and the classifier, both learners.
const FEATURE_DROPOUT: f64 = 0.50;
/// Dropout after the first attention layer, weak learner only.
const ATTENTION_DROPOUT: f64 = 0.25;

fn check_input<E: Real>(params: &ModelParams<E>, x: &Tensor<E>) -> Result<()> {
    let expected = params.input_shape();
    if x.shape() != expected.as_slice() {
        return Err(ModelError::InputShape {
            expected,
            got: x.shape().to_vec(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Encoder forward/backward with caches.
// ---------------------------------------------------------------------------

pub(crate) struct ConvInstCache<E> {
    x: Tensor<E>,
    r1: Tensor<E>,
    arg1: Vec<usize>,
    p1: Tensor<E>,
    r2: Tensor<E>,
    arg2: Vec<usize>,
    p2_shape: Vec<usize>,
    flat: Tensor<E>,
    f_row: Tensor<E>,
}

pub(crate) enum EncodeCache<E> {
    Vector {
        x: Tensor<E>,
        a1: Tensor<E>,
        f: Tensor<E>,
    },
    Conv(Vec<ConvInstCache<E>>),
}

/// Encode a batch of instances into an (n, FEATURE_DIM) feature matrix.
pub(crate) fn encode_batch<E: Real>(
    encoder: &Encoder<E>,
    xs: &[&Tensor<E>],
) -> Result<(Tensor<E>, EncodeCache<E>)> {
    match encoder {
        Encoder::Vector(v) => {
            let d = v.fc1.in_dim();
            let n = xs.len();
            let mut data = Vec::with_capacity(n * d);
            for x in xs {
                data.extend_from_slice(x.data());
            }
            let x = Tensor::new(vec![n, d], data)?;
            let a1 = relu(&v.fc1.forward(&x)?);
            let f = relu(&v.fc2.forward(&a1)?);
            Ok((f.clone(), EncodeCache::Vector { x, a1, f }))
        }
        Encoder::Conv(c) => {
            let side = c.side;
            let n = xs.len();
            let feature_dim = c.fc.out_dim();
            let mut rows = Vec::with_capacity(n * feature_dim);
            let mut caches = Vec::with_capacity(n);
            for x in xs {
                let img = (*x).clone().reshape(vec![1, side, side])?;
                let r1 = relu(&c.conv1.forward(&img)?);
                let (p1, arg1) = max_pool2(&r1)?;
                let r2 = relu(&c.conv2.forward(&p1)?);
                let (p2, arg2) = max_pool2(&r2)?;
                let p2_shape = p2.shape().to_vec();
                let flat = p2.reshape(vec![1, c.fc.in_dim()])?;
                let f_row = relu(&c.fc.forward(&flat)?);
                rows.extend_from_slice(f_row.data());
                caches.push(ConvInstCache {
                    x: img,
                    r1,
                    arg1,
                    p1,
                    r2,
                    arg2,
                    p2_shape,
                    flat,
                    f_row,
                });
            }
            Ok((
                Tensor::new(vec![n, feature_dim], rows)?,
                EncodeCache::Conv(caches),
            ))
        }
    }
}

/// Encoder parameter gradients in canonical order, given dL/dF.
pub(crate) fn encode_backward<E: Real>(
    encoder: &Encoder<E>,
    cache: &EncodeCache<E>,
    grad_f: &Tensor<E>,
) -> Result<Vec<Tensor<E>>> {
    match (encoder, cache) {
        (Encoder::Vector(v), EncodeCache::Vector { x, a1, f }) => {
            let dz2 = relu_backward(f, grad_f)?;
            let g2 = v.fc2.backward(a1, &dz2)?;
            let dz1 = relu_backward(a1, &g2.input)?;
            let g1 = v.fc1.backward(x, &dz1)?;
            Ok(vec![g1.weight, g1.bias, g2.weight, g2.bias])
        }
        (Encoder::Conv(c), EncodeCache::Conv(caches)) => {
            let mut k1 = Tensor::zeros(c.conv1.kernel.shape());
            let mut b1 = Tensor::zeros(c.conv1.bias.shape());
            let mut k2 = Tensor::zeros(c.conv2.kernel.shape());
            let mut b2 = Tensor::zeros(c.conv2.bias.shape());
            let mut fw = Tensor::zeros(c.fc.weight.shape());
            let mut fb = Tensor::zeros(c.fc.bias.shape());
            let feature_dim = c.fc.out_dim();
            for (i, cache) in caches.iter().enumerate() {
                let row =
                    Tensor::new(vec![1, feature_dim], grad_f.row(i).to_vec())?;
                let dzf = relu_backward(&cache.f_row, &row)?;
                let gf = c.fc.backward(&cache.flat, &dzf)?;
                fw.axpy_in_place(E::one(), &gf.weight)?;
                fb.axpy_in_place(E::one(), &gf.bias)?;
                let dp2 = gf.input.reshape(cache.p2_shape.clone())?;
                let dr2 = max_pool2_backward(cache.r2.shape(), &cache.arg2, &dp2)?;
                let dz2 = relu_backward(&cache.r2, &dr2)?;
                let g2 = c.conv2.backward(&cache.p1, &dz2)?;
                k2.axpy_in_place(E::one(), &g2.kernel)?;
                b2.axpy_in_place(E::one(), &g2.bias)?;
                let dr1 = max_pool2_backward(cache.r1.shape(), &cache.arg1, &g2.input)?;
                let dz1 = relu_backward(&cache.r1, &dr1)?;
                let g1 = c.conv1.backward(&cache.x, &dz1)?;
                k1.axpy_in_place(E::one(), &g1.kernel)?;
                b1.axpy_in_place(E::one(), &g1.bias)?;
            }
            Ok(vec![k1, b1, k2, b2, fw, fb])
        }
        _ => unreachable!("cache kind always matches encoder kind"),
    }
}

fn classify_rows<E: Real>(params: &ModelParams<E>, features: &Tensor<E>) -> Result<Vec<E>> {
    let logits = params.classifier.fc.forward(features)?;
    Ok(logits.data().iter().map(|&z| sigmoid(z)).collect())
}

// ---------------------------------------------------------------------------
// Inference.
// ---------------------------------------------------------------------------

/// g(f(x)): both learner kinds can score a single instance.
pub fn predict_instance<E: Real>(
    params: &ModelParams<E>,
    x: &crate::bag::Instance<E>,
) -> Result<E> {
    check_input(params, &x.values)?;
    let (features, _) = encode_batch(&params.encoder, &[&x.values])?;
    Ok(classify_rows(params, &features)?[0])
}

/// Per-instance probabilities for every instance of a bag.
pub fn predict_instances<E: Real>(params: &ModelParams<E>, bag: &Bag<E>) -> Result<Vec<E>> {
    for inst in bag.instances() {
        check_input(params, &inst.values)?;
    }
    let xs: Vec<&Tensor<E>> = bag.instances().iter().map(|i| &i.values).collect();
    let (features, _) = encode_batch(&params.encoder, &xs)?;
    classify_rows(params, &features)
}

/// Max-pooled examination prediction of a strong learner; extends the
/// logical OR to probabilities.
pub fn predict_bag_strong<E: Real>(params: &ModelParams<E>, bag: &Bag<E>) -> Result<E> {
    if params.kind() != LearnerKind::Strong {
        return Err(ModelError::WrongKind {
            expected: LearnerKind::Strong,
            got: params.kind(),
        });
    }
    let probs = predict_instances(params, bag)?;
    Ok(probs
        .into_iter()
        .fold(E::neg_infinity(), |acc, p| acc.max(p)))
}

/// Weak-learner bag prediction: sparsemax attention weights over instance
/// features, convex combination, then the shared classifier. Returns the
/// probability and the attention weights.
pub fn predict_bag<E: Real>(params: &ModelParams<E>, bag: &Bag<E>) -> Result<(E, Vec<E>)> {
    let keep: Vec<usize> = (0..bag.len()).collect();
    predict_bag_subset(params, bag, &keep)
}

/// Weak-learner prediction on a sub-bag given by instance indices (order
/// preserved). Removal semantics: excluded instances simply do not appear.
pub fn predict_bag_subset<E: Real>(
    params: &ModelParams<E>,
    bag: &Bag<E>,
    keep: &[usize],
) -> Result<(E, Vec<E>)> {
    if params.kind() != LearnerKind::Weak {
        return Err(ModelError::WrongKind {
            expected: LearnerKind::Weak,
            got: params.kind(),
        });
    }
    if keep.is_empty() {
        return Err(ModelError::EmptyBag(bag.id().to_string()));
    }
    let attention = params.attention.as_ref().expect("weak learner attention");
    let mut xs = Vec::with_capacity(keep.len());
    for &i in keep {
        let inst = bag
            .instances()
            .get(i)
            .ok_or_else(|| ModelError::InvalidConfig(format!("instance index {i} out of range")))?;
        check_input(params, &inst.values)?;
        xs.push(&inst.values);
    }
    let (features, _) = encode_batch(&params.encoder, &xs)?;
    let h = tanh_forward(&attention.fc1.forward(&features)?);
    let scores = attention.fc2.forward(&h)?;
    let weights = sparsemax(scores.data())?;
    let pooled = pool_features(&features, &weights);
    let p = classify_rows(params, &pooled)?[0];
    Ok((p, weights))
}

/// Value of the empty sub-bag: the attention pooling degenerates to the
/// all-zero feature vector, so the surrogate is g(0).
pub fn predict_empty_surrogate<E: Real>(params: &ModelParams<E>) -> Result<E> {
    let zero = Tensor::zeros(&[1, params.classifier.fc.in_dim()]);
    Ok(classify_rows(params, &zero)?[0])
}

/// Convex combination of feature rows: z_j = sum_k w_k F_kj.
fn pool_features<E: Real>(features: &Tensor<E>, weights: &[E]) -> Tensor<E> {
    let dim = features.cols();
    let mut pooled = Tensor::zeros(&[1, dim]);
    let out = pooled.data_mut();
    for (k, &w) in weights.iter().enumerate() {
        for (o, &f) in out.iter_mut().zip(features.row(k)) {
            *o = *o + w * f;
        }
    }
    pooled
}

// ---------------------------------------------------------------------------
// Training passes (dropout active when an RNG is supplied).
// ---------------------------------------------------------------------------

#[doc(hidden)]
pub struct WeakForward<E> {
    pub(crate) enc: EncodeCache<E>,
    pub features: Tensor<E>,
    pub(crate) h_tanh: Tensor<E>,
    pub(crate) att_mask: Option<DropoutMask>,
    pub(crate) h_after: Tensor<E>,
    pub att_logits: Vec<E>,
    pub weights: Vec<E>,
    pub(crate) pool_mask: Option<DropoutMask>,
    pub(crate) pooled_after: Tensor<E>,
    pub logit: E,
    pub p: E,
}

#[doc(hidden)]
pub fn weak_train_forward<E: Real>(
    params: &ModelParams<E>,
    xs: &[&Tensor<E>],
    rng: Option<&mut ChaCha8Rng>,
) -> Result<WeakForward<E>> {
    debug_assert_eq!(params.kind(), LearnerKind::Weak);
    let attention = params.attention.as_ref().expect("weak learner attention");
    let (features, enc) = encode_batch(&params.encoder, xs)?;
    let h_tanh = tanh_forward(&attention.fc1.forward(&features)?);
    let (h_after, att_mask, pool_rng) = match rng {
        Some(r) => {
            let (h, m) = Dropout::new(ATTENTION_DROPOUT).forward(&h_tanh, r);
            (h, Some(m), Some(r))
        }
        None => (h_tanh.clone(), None, None),
    };
    let att_logits: Vec<E> = attention.fc2.forward(&h_after)?.into_data();
    let weights = sparsemax(&att_logits)?;
    let pooled = pool_features(&features, &weights);
    let (pooled_after, pool_mask) = match pool_rng {
        Some(r) => {
            let (z, m) = Dropout::new(FEATURE_DROPOUT).forward(&pooled, r);
            (z, Some(m))
        }
        None => (pooled, None),
    };
    let logit = params.classifier.fc.forward(&pooled_after)?.data()[0];
    let p = sigmoid(logit);
    Ok(WeakForward {
        enc,
        features,
        h_tanh,
        att_mask,
        h_after,
        att_logits,
        weights,
        pool_mask,
        pooled_after,
        logit,
        p,
    })
}

/// Full-parameter gradients (canonical tensor order) of a scalar loss with
/// upstream derivative dL/dp.
#[doc(hidden)]
pub fn weak_train_backward<E: Real>(
    params: &ModelParams<E>,
    fwd: &WeakForward<E>,
    dloss_dp: E,
) -> Result<Vec<Tensor<E>>> {
    let attention = params.attention.as_ref().expect("weak learner attention");
    let r = fwd.weights.len();
    let dim = fwd.features.cols();

    let dlogit = dloss_dp * sigmoid_derivative(fwd.p);
    let grad_logit = Tensor::new(vec![1, 1], vec![dlogit])?;
    let g_cls = params.classifier.fc.backward(&fwd.pooled_after, &grad_logit)?;
    let dz = match &fwd.pool_mask {
        Some(m) => m.apply(&g_cls.input),
        None => g_cls.input.clone(),
    };

    // Pooling z = sum_k a_k F_k.
    let da = fwd.features.matmul_nt(&dz)?; // (r, 1)
    let mut df_pool = Tensor::zeros(&[r, dim]);
    {
        let out = df_pool.data_mut();
        let dzr = dz.data();
        for (k, &ak) in fwd.weights.iter().enumerate() {
            for (j, &dzj) in dzr.iter().enumerate() {
                out[k * dim + j] = ak * dzj;
            }
        }
    }

    let de = sparsemax_backward(&fwd.att_logits, da.data())?;
    let de = Tensor::new(vec![r, 1], de)?;
    let g_att2 = attention.fc2.backward(&fwd.h_after, &de)?;
    let dh_after = match &fwd.att_mask {
        Some(m) => m.apply(&g_att2.input),
        None => g_att2.input.clone(),
    };
    let dh = tanh_backward(&fwd.h_tanh, &dh_after)?;
    let g_att1 = attention.fc1.backward(&fwd.features, &dh)?;

    let mut df = df_pool;
    df.axpy_in_place(E::one(), &g_att1.input)?;
    let mut grads = encode_backward(&params.encoder, &fwd.enc, &df)?;
    grads.push(g_att1.weight);
    grads.push(g_att1.bias);
    grads.push(g_att2.weight);
    grads.push(g_att2.bias);
    grads.push(g_cls.weight);
    grads.push(g_cls.bias);
    Ok(grads)
}

#[doc(hidden)]
pub struct StrongForward<E> {
    pub(crate) enc: EncodeCache<E>,
    pub(crate) mask: Option<DropoutMask>,
    pub(crate) features_after: Tensor<E>,
    pub probs: Vec<E>,
}

#[doc(hidden)]
pub fn strong_train_forward<E: Real>(
    params: &ModelParams<E>,
    xs: &[&Tensor<E>],
    rng: Option<&mut ChaCha8Rng>,
) -> Result<StrongForward<E>> {
    let (features, enc) = encode_batch(&params.encoder, xs)?;
    let (features_after, mask) = match rng {
        Some(r) => {
            let (f, m) = Dropout::new(FEATURE_DROPOUT).forward(&features, r);
            (f, Some(m))
        }
        None => (features, None),
    };
    let probs = classify_rows(params, &features_after)?;
    Ok(StrongForward {
        enc,
        mask,
        features_after,
        probs,
    })
}

#[doc(hidden)]
pub fn strong_train_backward<E: Real>(
    params: &ModelParams<E>,
    fwd: &StrongForward<E>,
    dloss_dp: &[E],
) -> Result<Vec<Tensor<E>>> {
    let n = fwd.probs.len();
    let dlogits = Tensor::new(
        vec![n, 1],
        fwd.probs
            .iter()
            .zip(dloss_dp)
            .map(|(&p, &d)| d * sigmoid_derivative(p))
            .collect(),
    )?;
    let g_cls = params.classifier.fc.backward(&fwd.features_after, &dlogits)?;
    let df = match &fwd.mask {
        Some(m) => m.apply(&g_cls.input),
        None => g_cls.input.clone(),
    };
    let mut grads = encode_backward(&params.encoder, &fwd.enc, &df)?;
    grads.push(g_cls.weight);
    grads.push(g_cls.bias);
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bag::Instance;
    use crate::params::EncoderConfig;
    use rand::{Rng, SeedableRng};

    fn vector_bag(seed: u64, r: usize, d: usize) -> Bag<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let instances = (0..r)
            .map(|_| {
                Instance::new(
                    Tensor::from_fn(&[d], |_| rng.gen_range(-1.0..1.0)),
                    None,
                )
            })
            .collect();
        Bag::new(format!("bag-{seed}"), instances, false).unwrap()
    }

    #[test]
    fn zero_classifier_scores_half() {
        let mut params =
            ModelParams::<f32>::init(LearnerKind::Strong, EncoderConfig::vector(4), 0).unwrap();
        let w = params.classifier.fc.weight.clone().map(|_| 0.0);
        params.classifier.fc.weight = w;
        let x = Instance::new(Tensor::filled(&[4], 0.3), None);
        assert_eq!(predict_instance(&params, &x).unwrap(), 0.5);
    }

    #[test]
    fn prediction_is_deterministic() {
        let params =
            ModelParams::<f32>::init(LearnerKind::Weak, EncoderConfig::vector(6), 3).unwrap();
        let bag = vector_bag(1, 5, 6);
        let (p1, w1) = predict_bag(&params, &bag).unwrap();
        let (p2, w2) = predict_bag(&params, &bag).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(w1, w2);
    }

    #[test]
    fn single_instance_bag_equals_instance_prediction_exactly() {
        let params =
            ModelParams::<f32>::init(LearnerKind::Weak, EncoderConfig::vector(6), 4).unwrap();
        for seed in 0..50 {
            let bag = vector_bag(seed, 1, 6);
            let (p, w) = predict_bag(&params, &bag).unwrap();
            let q = predict_instance(&params, &bag.instances()[0]).unwrap();
            assert_eq!(w, vec![1.0]);
            assert_eq!(p, q, "bit-exact at r = 1");
        }
    }

    #[test]
    fn identical_instances_share_attention() {
        let params =
            ModelParams::<f32>::init(LearnerKind::Weak, EncoderConfig::vector(6), 5).unwrap();
        let x = Instance::new(Tensor::<f32>::filled(&[6], 0.4), None);
        let bag = Bag::new("twin", vec![x.clone(), x], false).unwrap();
        let (_, w) = predict_bag(&params, &bag).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn strong_bag_prediction_is_max() {
        let params =
            ModelParams::<f32>::init(LearnerKind::Strong, EncoderConfig::vector(6), 6).unwrap();
        let bag = vector_bag(2, 7, 6);
        let probs = predict_instances(&params, &bag).unwrap();
        let max = probs.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        assert_eq!(predict_bag_strong(&params, &bag).unwrap(), max);
    }

    #[test]
    fn kind_checks_are_enforced() {
        let strong =
            ModelParams::<f32>::init(LearnerKind::Strong, EncoderConfig::vector(6), 7).unwrap();
        let weak =
            ModelParams::<f32>::init(LearnerKind::Weak, EncoderConfig::vector(6), 7).unwrap();
        let bag = vector_bag(3, 4, 6);
        assert!(matches!(
            predict_bag(&strong, &bag),
            Err(ModelError::WrongKind { .. })
        ));
        assert!(matches!(
            predict_bag_strong(&weak, &bag),
            Err(ModelError::WrongKind { .. })
        ));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let params =
            ModelParams::<f32>::init(LearnerKind::Strong, EncoderConfig::vector(6), 8).unwrap();
        let x = Instance::new(Tensor::<f32>::filled(&[5], 0.0), None);
        assert!(matches!(
            predict_instance(&params, &x),
            Err(ModelError::InputShape { .. })
        ));
    }

    #[test]
    fn permutation_invariance_of_bag_probability() {
        let params =
            ModelParams::<f32>::init(LearnerKind::Weak, EncoderConfig::vector(5), 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for seed in 0..100 {
            let bag = vector_bag(seed + 100, 6, 5);
            let (p, _) = predict_bag(&params, &bag).unwrap();
            let mut order: Vec<usize> = (0..bag.len()).collect();
            for _ in 0..3 {
                // Fisher-Yates shuffle of the instance order.
                for i in (1..order.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    order.swap(i, j);
                }
                let instances: Vec<Instance<f32>> = order
                    .iter()
                    .map(|&i| bag.instances()[i].clone())
                    .collect();
                let permuted = Bag::new(bag.id(), instances, bag.label()).unwrap();
                let (pp, _) = predict_bag(&params, &permuted).unwrap();
                assert!((p - pp).abs() <= 1e-6, "perm changed {p} -> {pp}");
            }
        }
    }

    #[test]
    fn strong_bag_score_is_monotone_in_instances() {
        let params =
            ModelParams::<f32>::init(LearnerKind::Strong, EncoderConfig::vector(5), 10).unwrap();
        let bag = vector_bag(4, 5, 5);
        let base = predict_bag_strong(&params, &bag).unwrap();
        let mut instances = bag.instances().to_vec();
        instances.push(Instance::new(Tensor::filled(&[5], 0.9), None));
        let larger = Bag::new("ext", instances, false).unwrap();
        assert!(predict_bag_strong(&params, &larger).unwrap() >= base);
    }

    #[test]
    fn empty_surrogate_is_classifier_bias() {
        let params =
            ModelParams::<f32>::init(LearnerKind::Weak, EncoderConfig::vector(5), 11).unwrap();
        let v = predict_empty_surrogate(&params).unwrap();
        let bias = params.classifier.fc.bias.data()[0];
        assert_eq!(v, sigmoid(bias));
    }
}
