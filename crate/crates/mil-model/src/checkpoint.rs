use crate::error::{ModelError, Result};
use crate::params::{
    Attention, Classifier, ConvEncoder, Encoder, LearnerKind, ModelParams, VectorEncoder,
    ATTENTION_HIDDEN, FEATURE_DIM,
};
use mil_core::{Dense, Tensor};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MILB";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Parser guard rails for untrusted input.
const MAX_TENSORS: u32 = 64;
const MAX_NAME_LEN: u16 = 256;
const MAX_RANK: u8 = 4;
const MAX_EXTENT: u32 = 1 << 24;
const MAX_ELEMENTS: u64 = 1 << 26;

/// Serialize a parameter set, little-endian throughout, no padding:
/// magic "MILB", version u32, learner kind u8, tensor count u32, then per
/// tensor: name length u16, UTF-8 name, rank u8, extents u32 each, raw f32
/// values.
pub fn write_checkpoint<W: Write>(params: &ModelParams<f32>, mut w: W) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&[params.kind().as_byte()])?;
    let tensors = params.named_tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, tensor) in tensors {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&[tensor.rank() as u8])?;
        for &extent in tensor.shape() {
            w.write_all(&(extent as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(params: &ModelParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    write_checkpoint(params, &mut file)?;
    file.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
    context: &'static str,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| ModelError::Truncated(self.context.to_string()))?;
        Ok(buf)
    }

    fn u8(&mut self, context: &'static str) -> Result<u8> {
        self.context = context;
        Ok(self.bytes::<1>()?[0])
    }

    fn u16(&mut self, context: &'static str) -> Result<u16> {
        self.context = context;
        Ok(u16::from_le_bytes(self.bytes()?))
    }

    fn u32(&mut self, context: &'static str) -> Result<u32> {
        self.context = context;
        Ok(u32::from_le_bytes(self.bytes()?))
    }
}

/// Parse a checkpoint from any byte source. Rejects bad magic, unknown
/// versions, truncation, oversized records, duplicate and unknown tensors,
/// non-finite values, and shape disagreements, naming the offending tensor.
pub fn read_checkpoint<R: Read>(reader: R) -> Result<ModelParams<f32>> {
    let mut r = Reader {
        inner: reader,
        context: "header",
    };
    let magic: [u8; 4] = {
        r.context = "magic";
        r.bytes()?
    };
    if magic != CHECKPOINT_MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::UnsupportedVersion(version));
    }
    let kind = LearnerKind::from_byte(r.u8("learner kind")?)?;
    let count = r.u32("tensor count")?;
    if count > MAX_TENSORS {
        return Err(ModelError::BadTensor {
            tensor: "<header>".into(),
            reason: format!("tensor count {count} exceeds limit {MAX_TENSORS}"),
        });
    }

    let mut tensors: Vec<(String, Tensor<f32>)> = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = r.u16("tensor name length")?;
        if name_len == 0 || name_len > MAX_NAME_LEN {
            return Err(ModelError::BadTensor {
                tensor: "<unnamed>".into(),
                reason: format!("name length {name_len} outside 1..={MAX_NAME_LEN}"),
            });
        }
        r.context = "tensor name";
        let mut name_buf = vec![0u8; name_len as usize];
        r.inner
            .read_exact(&mut name_buf)
            .map_err(|_| ModelError::Truncated("tensor name".into()))?;
        let name = String::from_utf8(name_buf).map_err(|_| ModelError::BadTensor {
            tensor: "<unnamed>".into(),
            reason: "name is not UTF-8".into(),
        })?;
        if tensors.iter().any(|(n, _)| n == &name) {
            return Err(ModelError::BadTensor {
                tensor: name,
                reason: "duplicate tensor".into(),
            });
        }
        let rank = r.u8("tensor rank")?;
        if rank == 0 || rank > MAX_RANK {
            return Err(ModelError::BadTensor {
                tensor: name,
                reason: format!("rank {rank} outside 1..={MAX_RANK}"),
            });
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut elements: u64 = 1;
        for _ in 0..rank {
            let extent = r.u32("tensor extent")?;
            if extent == 0 || extent > MAX_EXTENT {
                return Err(ModelError::BadTensor {
                    tensor: name,
                    reason: format!("extent {extent} outside 1..={MAX_EXTENT}"),
                });
            }
            elements = elements.saturating_mul(extent as u64);
            shape.push(extent as usize);
        }
        if elements > MAX_ELEMENTS {
            return Err(ModelError::BadTensor {
                tensor: name,
                reason: format!("{elements} elements exceed limit {MAX_ELEMENTS}"),
            });
        }
        let mut data = Vec::with_capacity(elements as usize);
        r.context = "tensor data";
        let mut buf = [0u8; 4];
        for _ in 0..elements {
            r.inner
                .read_exact(&mut buf)
                .map_err(|_| ModelError::Truncated(name.clone()))?;
            let v = f32::from_le_bytes(buf);
            if !v.is_finite() {
                return Err(ModelError::BadTensor {
                    tensor: name,
                    reason: "non-finite value".into(),
                });
            }
            data.push(v);
        }
        let tensor = Tensor::new(shape, data).map_err(|e| ModelError::BadTensor {
            tensor: name.clone(),
            reason: e.to_string(),
        })?;
        tensors.push((name, tensor));
    }

    assemble(kind, tensors)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams<f32>> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

/// Load a checkpoint and adapt it to `kind`. Loading a strong checkpoint as
/// a weak learner initializes the attention freshly from `seed`; the
/// opposite direction drops it. Returns the adapted parameters and any
/// adaptation warnings.
pub fn load_checkpoint_as(
    path: impl AsRef<Path>,
    kind: LearnerKind,
    seed: u64,
) -> Result<(ModelParams<f32>, Vec<String>)> {
    let params = load_checkpoint(path)?;
    let mut warnings = Vec::new();
    if params.kind() != kind {
        let msg = match kind {
            LearnerKind::Weak => format!(
                "checkpoint holds a {} learner; attention parameters freshly initialized from seed {seed}",
                params.kind()
            ),
            LearnerKind::Strong => format!(
                "checkpoint holds a {} learner; attention parameters dropped",
                params.kind()
            ),
        };
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok((params.into_kind(kind, seed), warnings))
}

fn take(tensors: &mut Vec<(String, Tensor<f32>)>, name: &str) -> Result<Tensor<f32>> {
    let idx = tensors
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| ModelError::MissingTensor(name.to_string()))?;
    Ok(tensors.swap_remove(idx).1)
}

fn expect_shape(name: &str, tensor: &Tensor<f32>, expected: &[usize]) -> Result<()> {
    if tensor.shape() != expected {
        return Err(ModelError::TensorShape {
            tensor: name.to_string(),
            expected: expected.to_vec(),
            got: tensor.shape().to_vec(),
        });
    }
    Ok(())
}

fn expect_rank2(name: &str, tensor: &Tensor<f32>) -> Result<()> {
    if tensor.rank() != 2 {
        return Err(ModelError::BadTensor {
            tensor: name.to_string(),
            reason: format!("expected a rank-2 weight, got rank {}", tensor.rank()),
        });
    }
    Ok(())
}

fn dense(
    tensors: &mut Vec<(String, Tensor<f32>)>,
    weight_name: &str,
    bias_name: &str,
    expected_weight: Option<&[usize]>,
) -> Result<Dense<f32>> {
    let weight = take(tensors, weight_name)?;
    expect_rank2(weight_name, &weight)?;
    if let Some(expected) = expected_weight {
        expect_shape(weight_name, &weight, expected)?;
    }
    let bias = take(tensors, bias_name)?;
    expect_shape(bias_name, &bias, &[weight.shape()[0]])?;
    Ok(Dense { weight, bias })
}

fn assemble(
    kind: LearnerKind,
    mut tensors: Vec<(String, Tensor<f32>)>,
) -> Result<ModelParams<f32>> {
    let has_conv = tensors.iter().any(|(n, _)| n == "encoder.conv1.kernel");
    let encoder = if has_conv {
        let kernel1 = take(&mut tensors, "encoder.conv1.kernel")?;
        if kernel1.rank() != 4 || kernel1.shape()[2] != kernel1.shape()[3] {
            return Err(ModelError::BadTensor {
                tensor: "encoder.conv1.kernel".into(),
                reason: "expected a square rank-4 kernel".into(),
            });
        }
        let c1 = kernel1.shape()[0];
        let bias1 = take(&mut tensors, "encoder.conv1.bias")?;
        expect_shape("encoder.conv1.bias", &bias1, &[c1])?;
        let kernel2 = take(&mut tensors, "encoder.conv2.kernel")?;
        if kernel2.rank() != 4 || kernel2.shape()[1] != c1 {
            return Err(ModelError::TensorShape {
                tensor: "encoder.conv2.kernel".into(),
                expected: vec![kernel2.shape()[0], c1, 3, 3],
                got: kernel2.shape().to_vec(),
            });
        }
        let c2 = kernel2.shape()[0];
        let bias2 = take(&mut tensors, "encoder.conv2.bias")?;
        expect_shape("encoder.conv2.bias", &bias2, &[c2])?;
        let fc = dense(&mut tensors, "encoder.fc.weight", "encoder.fc.bias", None)?;
        if fc.out_dim() != FEATURE_DIM {
            return Err(ModelError::TensorShape {
                tensor: "encoder.fc.weight".into(),
                expected: vec![FEATURE_DIM, fc.in_dim()],
                got: fc.weight.shape().to_vec(),
            });
        }
        let flat = fc.in_dim();
        if flat % c2 != 0 {
            return Err(ModelError::BadTensor {
                tensor: "encoder.fc.weight".into(),
                reason: format!("input dim {flat} is not a multiple of {c2} channels"),
            });
        }
        let cells = flat / c2;
        let quarter = (cells as f64).sqrt() as usize;
        if quarter * quarter != cells {
            return Err(ModelError::BadTensor {
                tensor: "encoder.fc.weight".into(),
                reason: format!("{cells} pooled cells do not form a square grid"),
            });
        }
        Encoder::Conv(ConvEncoder {
            conv1: mil_core::Conv2d {
                kernel: kernel1,
                bias: bias1,
            },
            conv2: mil_core::Conv2d {
                kernel: kernel2,
                bias: bias2,
            },
            fc,
            side: quarter * 4,
        })
    } else {
        let fc1 = dense(&mut tensors, "encoder.fc1.weight", "encoder.fc1.bias", None)?;
        let fc2 = dense(&mut tensors, "encoder.fc2.weight", "encoder.fc2.bias", None)?;
        if fc2.in_dim() != fc1.out_dim() {
            return Err(ModelError::TensorShape {
                tensor: "encoder.fc2.weight".into(),
                expected: vec![fc2.out_dim(), fc1.out_dim()],
                got: fc2.weight.shape().to_vec(),
            });
        }
        if fc2.out_dim() != FEATURE_DIM {
            return Err(ModelError::TensorShape {
                tensor: "encoder.fc2.weight".into(),
                expected: vec![FEATURE_DIM, fc2.in_dim()],
                got: fc2.weight.shape().to_vec(),
            });
        }
        Encoder::Vector(VectorEncoder { fc1, fc2 })
    };

    let attention = match kind {
        LearnerKind::Strong => None,
        LearnerKind::Weak => {
            let fc1 = dense(
                &mut tensors,
                "attention.fc1.weight",
                "attention.fc1.bias",
                Some(&[ATTENTION_HIDDEN, FEATURE_DIM]),
            )?;
            let fc2 = dense(
                &mut tensors,
                "attention.fc2.weight",
                "attention.fc2.bias",
                Some(&[1, ATTENTION_HIDDEN]),
            )?;
            Some(Attention { fc1, fc2 })
        }
    };

    let fc = dense(
        &mut tensors,
        "classifier.weight",
        "classifier.bias",
        Some(&[1, FEATURE_DIM]),
    )?;
    let classifier = Classifier { fc };

    if let Some((name, _)) = tensors.first() {
        return Err(ModelError::UnknownTensor(name.clone()));
    }
    ModelParams::from_parts(kind, encoder, attention, classifier)
}
