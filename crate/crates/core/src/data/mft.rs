//! `MFT1` feature files: magic, then two tensors (image first), each as
//! `u8 ndim`, `ndim × u32` dims and row-major `f32` data, all little-endian.

use std::path::Path;

use crate::model::ModelConfig;
use crate::numerics::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MFT1";

/// Frozen encoder outputs of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    /// `m × image_dim`
    pub image: Tensor<f32>,
    /// `n_T × clip_text_dim`
    pub text: Tensor<f32>,
}

impl FeatureRecord {
    /// Checks the dimensions against a model configuration.
    pub fn check(&self, config: &ModelConfig) -> Result<()> {
        let want = [config.image_tokens, config.image_dim];
        if self.image.shape() != want {
            return Err(Error::Validation(format!(
                "features of `{}`: image tensor is {:?}, configuration expects {want:?}",
                self.id,
                self.image.shape()
            )));
        }
        if self.text.shape().len() != 2 || self.text.cols() != config.clip_text_dim {
            return Err(Error::Validation(format!(
                "features of `{}`: text tensor is {:?}, configuration expects n × {}",
                self.id,
                self.text.shape(),
                config.clip_text_dim
            )));
        }
        Ok(())
    }
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor<f32>) -> Result<()> {
    let ndim = u8::try_from(t.shape().len()).map_err(|_| Error::Shape("too many dimensions".into()))?;
    out.push(ndim);
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::Shape(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

pub fn encode(image: &Tensor<f32>, text: &Tensor<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(4 + 2 * 9 + 4 * (image.len() + text.len()));
    out.extend_from_slice(MAGIC);
    put_tensor(&mut out, image)?;
    put_tensor(&mut out, text)?;
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Decode(format!(
                "truncated at byte {} while reading {what} ({n} bytes needed, {} left)",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn tensor(&mut self, name: &str) -> Result<Tensor<f32>> {
        let ndim = self.take(1, name)?[0] as usize;
        if ndim == 0 {
            return Err(Error::Decode(format!("{name} tensor has zero dimensions")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let b = self.take(4, name)?;
            shape.push(u32::from_le_bytes(b.try_into().unwrap()) as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Decode(format!("{name} tensor has invalid dims {shape:?}")))?;
        let byte_len = len
            .checked_mul(4)
            .ok_or_else(|| Error::Decode(format!("{name} tensor dims {shape:?} overflow")))?;
        let raw = self.take(byte_len, name).map_err(|_| {
            Error::Decode(format!(
                "{name} tensor dims {shape:?} need {byte_len} payload bytes, {} available",
                self.bytes.len() - self.pos
            ))
        })?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape, data).map_err(|e| match e {
            Error::NonFinite { .. } => Error::Decode(format!("{name} tensor contains non-finite values")),
            other => Error::Decode(other.to_string()),
        })
    }
}

/// Decodes `(image, text)`. Trailing bytes are an error.
pub fn decode(bytes: &[u8]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Decode("bad magic, expected MFT1".into()));
    }
    let image = r.tensor("image")?;
    let text = r.tensor("text")?;
    if r.pos != bytes.len() {
        return Err(Error::Decode(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((image, text))
}

pub fn feature_path(dir: &Path, id: &str) -> std::path::PathBuf {
    dir.join(format!("{id}.mft"))
}

pub fn write_features(dir: &Path, record: &FeatureRecord) -> Result<()> {
    std::fs::write(feature_path(dir, &record.id), encode(&record.image, &record.text)?)?;
    Ok(())
}

/// Reads `<dir>/<id>.mft`, checking it against `config` when given.
pub fn load_features(dir: &Path, id: &str, config: Option<&ModelConfig>) -> Result<FeatureRecord> {
    let path = feature_path(dir, id);
    if !path.exists() {
        return Err(Error::MissingPath(path));
    }
    let (image, text) = decode(&std::fs::read(&path)?)
        .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
    if image.shape().len() != 2 || text.shape().len() != 2 {
        return Err(Error::Decode(format!("{}: feature tensors must be 2-D", path.display())));
    }
    let record = FeatureRecord {
        id: id.to_string(),
        image,
        text,
    };
    if let Some(c) = config {
        record.check(c)?;
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tensor(rows: usize, cols: usize, data: Vec<f32>) -> Tensor<f32> {
        Tensor::new(vec![rows, cols], data).unwrap()
    }

    fn sample() -> (Tensor<f32>, Tensor<f32>) {
        (
            tensor(2, 3, vec![1.0, -2.5, 3.0, 0.0, 1e-30, -7.0]),
            tensor(1, 2, vec![0.5, 0.25]),
        )
    }

    #[test]
    fn layout_is_little_endian() {
        let (i, t) = sample();
        let bytes = encode(&i, &t).unwrap();
        assert_eq!(&bytes[..4], b"MFT1");
        assert_eq!(bytes[4], 2);
        assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &3u32.to_le_bytes());
        assert_eq!(&bytes[13..17], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 4 + 9 + 24 + 9 + 8);
    }

    #[test]
    fn truncation_and_bad_headers_are_rejected() {
        let (i, t) = sample();
        let bytes = encode(&i, &t).unwrap();
        for cut in [0, 3, 4, 10, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Decode(_))), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Decode(_))));
        let mut wrong_dims = bytes.clone();
        wrong_dims[5..9].copy_from_slice(&3u32.to_le_bytes());
        assert!(matches!(decode(&wrong_dims), Err(Error::Decode(_))));
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(decode(&trailing), Err(Error::Decode(_))));
        let mut nan = bytes;
        nan[13..17].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode(&nan), Err(Error::Decode(_))));
    }

    #[test]
    fn load_checks_config_dims() {
        let dir = tempfile::tempdir().unwrap();
        let (image, text) = sample();
        let record = FeatureRecord {
            id: "a".into(),
            image,
            text,
        };
        write_features(dir.path(), &record).unwrap();
        assert_eq!(load_features(dir.path(), "a", None).unwrap(), record);
        let config = ModelConfig {
            image_tokens: 2,
            image_dim: 3,
            clip_text_dim: 2,
            ..ModelConfig::default()
        };
        assert!(load_features(dir.path(), "a", Some(&config)).is_ok());
        let other = ModelConfig {
            image_dim: 4,
            ..config
        };
        assert!(matches!(load_features(dir.path(), "a", Some(&other)), Err(Error::Validation(_))));
        assert!(matches!(load_features(dir.path(), "missing", None), Err(Error::MissingPath(_))));
    }

    fn finite_tensor() -> impl Strategy<Value = Tensor<f32>> {
        (1usize..5, 1usize..6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(
                any::<f32>().prop_filter("finite", |v| v.is_finite()),
                r * c,
            )
            .prop_map(move |data| Tensor::new(vec![r, c], data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn codec_round_trip_is_bit_exact(image in finite_tensor(), text in finite_tensor()) {
            let bytes = encode(&image, &text).unwrap();
            let (i2, t2) = decode(&bytes).unwrap();
            prop_assert_eq!(i2.shape(), image.shape());
            prop_assert_eq!(t2.shape(), text.shape());
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&i2), bits(&image));
            prop_assert_eq!(bits(&t2), bits(&text));
            prop_assert_eq!(encode(&i2, &t2).unwrap(), bytes);
        }
    }
}
