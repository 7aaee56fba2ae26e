use crate::error::{ModelError, Result};
use mil_core::{Conv2d, Dense, Real, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

/// Every encoder maps an instance to a feature vector of this size,
/// regardless of instance count or input kind.
pub const FEATURE_DIM: usize = 256;

/// Hidden width of the two-layer attention mechanism (ungated form).
pub const ATTENTION_HIDDEN: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Strong,
    Weak,
}

impl LearnerKind {
    pub fn as_byte(self) -> u8 {
        match self {
            LearnerKind::Strong => 0,
            LearnerKind::Weak => 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(LearnerKind::Strong),
            1 => Ok(LearnerKind::Weak),
            other => Err(ModelError::BadKindByte(other)),
        }
    }
}

impl std::fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LearnerKind::Strong => write!(f, "strong"),
            LearnerKind::Weak => write!(f, "weak"),
        }
    }
}

/// Shape of the small trainable encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderConfig {
    /// Two dense layers: input_dim -> hidden -> FEATURE_DIM.
    Vector { input_dim: usize, hidden: usize },
    /// Two conv+pool stages then a dense layer: (side x side) grayscale
    /// image -> FEATURE_DIM. The side must be divisible by 4.
    Conv {
        side: usize,
        channels1: usize,
        channels2: usize,
    },
}

impl EncoderConfig {
    pub fn vector(input_dim: usize) -> Self {
        EncoderConfig::Vector {
            input_dim,
            hidden: 64,
        }
    }

    pub fn conv(side: usize) -> Self {
        EncoderConfig::Conv {
            side,
            channels1: 8,
            channels2: 16,
        }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match *self {
            EncoderConfig::Vector { input_dim, .. } => vec![input_dim],
            EncoderConfig::Conv { side, .. } => vec![side, side],
        }
    }
}

/// input_dim -> hidden (ReLU) -> FEATURE_DIM (ReLU).
#[derive(Clone, Debug)]
pub struct VectorEncoder<E = f32> {
    pub fc1: Dense<E>,
    pub fc2: Dense<E>,
}

/// conv (ReLU, pool) -> conv (ReLU, pool) -> dense (ReLU) -> FEATURE_DIM.
#[derive(Clone, Debug)]
pub struct ConvEncoder<E = f32> {
    pub conv1: Conv2d<E>,
    pub conv2: Conv2d<E>,
    pub fc: Dense<E>,
    pub side: usize,
}

#[derive(Clone, Debug)]
pub enum Encoder<E = f32> {
    Vector(VectorEncoder<E>),
    Conv(ConvEncoder<E>),
}

impl<E: Real> Encoder<E> {
    fn init(config: EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        match config {
            EncoderConfig::Vector { input_dim, hidden } => Ok(Encoder::Vector(VectorEncoder {
                fc1: Dense::new(input_dim, hidden, rng),
                fc2: Dense::new(hidden, FEATURE_DIM, rng),
            })),
            EncoderConfig::Conv {
                side,
                channels1,
                channels2,
            } => {
                if side % 4 != 0 || side == 0 {
                    return Err(ModelError::InvalidConfig(format!(
                        "conv encoder side {side} must be a positive multiple of 4"
                    )));
                }
                let flat = channels2 * (side / 4) * (side / 4);
                Ok(Encoder::Conv(ConvEncoder {
                    conv1: Conv2d::new(1, channels1, 3, rng),
                    conv2: Conv2d::new(channels1, channels2, 3, rng),
                    fc: Dense::new(flat, FEATURE_DIM, rng),
                    side,
                }))
            }
        }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            Encoder::Vector(v) => vec![v.fc1.in_dim()],
            Encoder::Conv(c) => vec![c.side, c.side],
        }
    }

    pub fn config(&self) -> EncoderConfig {
        match self {
            Encoder::Vector(v) => EncoderConfig::Vector {
                input_dim: v.fc1.in_dim(),
                hidden: v.fc1.out_dim(),
            },
            Encoder::Conv(c) => EncoderConfig::Conv {
                side: c.side,
                channels1: c.conv1.out_channels(),
                channels2: c.conv2.out_channels(),
            },
        }
    }
}

/// Two-layer attention scoring one scalar per instance feature vector:
/// tanh(W1 f + b1) fed into a single output unit.
#[derive(Clone, Debug)]
pub struct Attention<E = f32> {
    pub fc1: Dense<E>,
    pub fc2: Dense<E>,
}

impl<E: Real> Attention<E> {
    pub fn init(rng: &mut impl Rng) -> Self {
        Self {
            fc1: Dense::new(FEATURE_DIM, ATTENTION_HIDDEN, rng),
            fc2: Dense::new(ATTENTION_HIDDEN, 1, rng),
        }
    }
}

/// Fully connected layer with sigmoid activation mapping a feature vector to
/// one probability.
#[derive(Clone, Debug)]
pub struct Classifier<E = f32> {
    pub fc: Dense<E>,
}

impl<E: Real> Classifier<E> {
    fn init(rng: &mut impl Rng) -> Self {
        Self {
            fc: Dense::new(FEATURE_DIM, 1, rng),
        }
    }
}

/// All weights of one learner. Strong and weak learners share identical
/// encoder and classifier shapes; attention parameters exist only for the
/// weak learner and are never read by the strong one.
#[derive(Clone, Debug)]
pub struct ModelParams<E = f32> {
    pub encoder: Encoder<E>,
    pub attention: Option<Attention<E>>,
    pub classifier: Classifier<E>,
    kind: LearnerKind,
}

impl<E: Real> ModelParams<E> {
    /// Deterministic initialization from a seed: encoder, then classifier,
    /// then (weak only) attention, all He-uniform.
    pub fn init(kind: LearnerKind, config: EncoderConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::init(config, &mut rng)?;
        let classifier = Classifier::init(&mut rng);
        let attention = match kind {
            LearnerKind::Strong => None,
            LearnerKind::Weak => Some(Attention::init(&mut rng)),
        };
        Ok(Self {
            encoder,
            attention,
            classifier,
            kind,
        })
    }

    pub fn from_parts(
        kind: LearnerKind,
        encoder: Encoder<E>,
        attention: Option<Attention<E>>,
        classifier: Classifier<E>,
    ) -> Result<Self> {
        if kind == LearnerKind::Weak && attention.is_none() {
            return Err(ModelError::InvalidConfig(
                "weak learner requires attention parameters".into(),
            ));
        }
        Ok(Self {
            encoder,
            attention: match kind {
                LearnerKind::Strong => None,
                LearnerKind::Weak => attention,
            },
            classifier,
            kind,
        })
    }

    pub fn kind(&self) -> LearnerKind {
        self.kind
    }

    pub fn input_shape(&self) -> Vec<usize> {
        self.encoder.input_shape()
    }

    /// Convert a strong parameter set into a weak one (attention freshly
    /// initialized from `seed`) or vice versa (attention dropped).
    pub fn into_kind(mut self, kind: LearnerKind, seed: u64) -> Self {
        if self.kind == kind {
            return self;
        }
        match kind {
            LearnerKind::Strong => {
                self.attention = None;
            }
            LearnerKind::Weak => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                self.attention = Some(Attention::init(&mut rng));
            }
        }
        self.kind = kind;
        self
    }

    /// Stable (name, tensor) listing: encoder, attention (weak only),
    /// classifier. Checkpoints and optimizer slots rely on this order.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor<E>)> {
        let mut out: Vec<(&'static str, &Tensor<E>)> = Vec::new();
        match &self.encoder {
            Encoder::Vector(v) => {
                out.push(("encoder.fc1.weight", &v.fc1.weight));
                out.push(("encoder.fc1.bias", &v.fc1.bias));
                out.push(("encoder.fc2.weight", &v.fc2.weight));
                out.push(("encoder.fc2.bias", &v.fc2.bias));
            }
            Encoder::Conv(c) => {
                out.push(("encoder.conv1.kernel", &c.conv1.kernel));
                out.push(("encoder.conv1.bias", &c.conv1.bias));
                out.push(("encoder.conv2.kernel", &c.conv2.kernel));
                out.push(("encoder.conv2.bias", &c.conv2.bias));
                out.push(("encoder.fc.weight", &c.fc.weight));
                out.push(("encoder.fc.bias", &c.fc.bias));
            }
        }
        if let Some(att) = &self.attention {
            out.push(("attention.fc1.weight", &att.fc1.weight));
            out.push(("attention.fc1.bias", &att.fc1.bias));
            out.push(("attention.fc2.weight", &att.fc2.weight));
            out.push(("attention.fc2.bias", &att.fc2.bias));
        }
        out.push(("classifier.weight", &self.classifier.fc.weight));
        out.push(("classifier.bias", &self.classifier.fc.bias));
        out
    }

    /// Mutable tensors in the same order as [`Self::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<E>> {
        let mut out: Vec<&mut Tensor<E>> = Vec::new();
        match &mut self.encoder {
            Encoder::Vector(v) => {
                out.push(&mut v.fc1.weight);
                out.push(&mut v.fc1.bias);
                out.push(&mut v.fc2.weight);
                out.push(&mut v.fc2.bias);
            }
            Encoder::Conv(c) => {
                out.push(&mut c.conv1.kernel);
                out.push(&mut c.conv1.bias);
                out.push(&mut c.conv2.kernel);
                out.push(&mut c.conv2.bias);
                out.push(&mut c.fc.weight);
                out.push(&mut c.fc.bias);
            }
        }
        if let Some(att) = &mut self.attention {
            out.push(&mut att.fc1.weight);
            out.push(&mut att.fc1.bias);
            out.push(&mut att.fc2.weight);
            out.push(&mut att.fc2.bias);
        }
        out.push(&mut self.classifier.fc.weight);
        out.push(&mut self.classifier.fc.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = EncoderConfig::vector(16);
        let a = ModelParams::<f32>::init(LearnerKind::Weak, cfg, 7).unwrap();
        let b = ModelParams::<f32>::init(LearnerKind::Weak, cfg, 7).unwrap();
        let c = ModelParams::<f32>::init(LearnerKind::Weak, cfg, 8).unwrap();
        for ((na, ta), (nb, tb)) in a.named_tensors().iter().zip(b.named_tensors()) {
            assert_eq!(na, &nb);
            assert_eq!(ta.data(), tb.data());
        }
        let first_a = a.named_tensors()[0].1.data()[0];
        let first_c = c.named_tensors()[0].1.data()[0];
        assert_ne!(first_a, first_c);
    }

    #[test]
    fn strong_has_no_attention_tensors() {
        let strong =
            ModelParams::<f32>::init(LearnerKind::Strong, EncoderConfig::vector(8), 1).unwrap();
        assert!(strong
            .named_tensors()
            .iter()
            .all(|(n, _)| !n.starts_with("attention")));
        let weak = ModelParams::<f32>::init(LearnerKind::Weak, EncoderConfig::vector(8), 1).unwrap();
        assert_eq!(
            weak.named_tensors().len(),
            strong.named_tensors().len() + 4
        );
    }

    #[test]
    fn shared_shapes_across_kinds() {
        let strong =
            ModelParams::<f32>::init(LearnerKind::Strong, EncoderConfig::conv(16), 3).unwrap();
        let weak = ModelParams::<f32>::init(LearnerKind::Weak, EncoderConfig::conv(16), 3).unwrap();
        for (name, tensor) in strong.named_tensors() {
            let other = weak
                .named_tensors()
                .into_iter()
                .find(|(n, _)| *n == name)
                .unwrap();
            assert_eq!(tensor.shape(), other.1.shape(), "{name}");
        }
    }

    #[test]
    fn conv_side_must_be_multiple_of_four() {
        assert!(ModelParams::<f32>::init(
            LearnerKind::Strong,
            EncoderConfig::Conv {
                side: 18,
                channels1: 4,
                channels2: 8
            },
            0
        )
        .is_err());
    }

    #[test]
    fn kind_conversion_reinitializes_attention() {
        let strong =
            ModelParams::<f32>::init(LearnerKind::Strong, EncoderConfig::vector(8), 1).unwrap();
        let weak = strong.clone().into_kind(LearnerKind::Weak, 99);
        assert_eq!(weak.kind(), LearnerKind::Weak);
        assert!(weak.attention.is_some());
        let back = weak.into_kind(LearnerKind::Strong, 0);
        assert!(back.attention.is_none());
    }
}
