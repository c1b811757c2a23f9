//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "AUGTTACK"
//! version      u32      currently 1
//! scalar width u8       4 (f32) or 8 (f64)
//! input_dim    u64
//! hidden_dim   u64
//! num_classes  u64
//! payload len  u64      number of scalars that follow
//! payload      w1 (row-major, input_dim × hidden_dim), b1, gamma, beta,
//!              running_mean, running_var, w2 (row-major, hidden_dim ×
//!              num_classes), b2
//! ```

use std::fs;
use std::path::Path;

use super::{ArchSpec, Mlp};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"AUGTTACK";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 1 + 8 * 4;

fn payload_len(arch: &ArchSpec) -> usize {
    let (d, h, c) = (arch.input_dim, arch.hidden_dim, arch.num_classes);
    d * h + 5 * h + h * c + c
}

impl<T: Scalar> Mlp<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let arch = self.arch;
        let mut out = Vec::with_capacity(HEADER_LEN + payload_len(&arch) * T::BYTES);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(T::BYTES as u8);
        for v in [arch.input_dim, arch.hidden_dim, arch.num_classes, payload_len(&arch)] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        let parts: [&[T]; 8] = [
            self.w1.as_slice(),
            &self.b1,
            &self.gamma,
            &self.beta,
            &self.running_mean,
            &self.running_var,
            self.w2.as_slice(),
            &self.b2,
        ];
        for part in parts {
            part.iter().for_each(|v| v.write_le(&mut out));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::TruncatedCheckpoint);
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedCheckpoint);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        let width = bytes[12] as usize;
        if width != T::BYTES {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint stores {width}-byte scalars, expected {}",
                T::BYTES
            )));
        }
        let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
        let arch = ArchSpec::new(read_u64(13), read_u64(21), read_u64(29))
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let declared = read_u64(37);
        if declared != payload_len(&arch) {
            return Err(Error::ShapeMismatch(format!(
                "payload declares {declared} values, architecture needs {}",
                payload_len(&arch)
            )));
        }
        let body = &bytes[HEADER_LEN..];
        let expected_bytes = declared
            .checked_mul(T::BYTES)
            .ok_or_else(|| Error::ShapeMismatch("payload length overflow".into()))?;
        if body.len() < expected_bytes {
            return Err(Error::TruncatedCheckpoint);
        }
        if body.len() > expected_bytes {
            return Err(Error::ShapeMismatch(format!(
                "{} trailing bytes after payload",
                body.len() - expected_bytes
            )));
        }

        let mut values = body.chunks_exact(T::BYTES).map(T::read_le);
        let mut take = |n: usize| -> Vec<T> { values.by_ref().take(n).collect() };
        let (d, h, c) = (arch.input_dim, arch.hidden_dim, arch.num_classes);
        let w1 = Matrix::from_vec(d, h, take(d * h));
        let b1 = take(h);
        let gamma = take(h);
        let beta = take(h);
        let running_mean = take(h);
        let running_var = take(h);
        let w2 = Matrix::from_vec(h, c, take(h * c));
        let b2 = take(c);
        Ok(Self { arch, w1, b1, gamma, beta, running_mean, running_var, w2, b2 })
    }
}

pub fn save_checkpoint<T: Scalar>(model: &Mlp<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Mlp<T>> {
    Mlp::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Mlp<f64> {
        Mlp::init(ArchSpec::new(4, 8, 2).unwrap(), 9)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut m = small();
        m.gamma_mut()[2] = 1.234_567_890_123_456_7;
        save_checkpoint(&m, &path).unwrap();
        let back: Mlp<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(back.to_bytes(), m.to_bytes());
        assert_eq!(back, m);

        let m32 = Mlp::<f32>::init(ArchSpec::new(4, 8, 2).unwrap(), 9);
        assert_eq!(Mlp::<f32>::from_bytes(&m32.to_bytes()).unwrap(), m32);
    }

    #[test]
    fn truncated_file_is_reported() {
        let bytes = small().to_bytes();
        let err = Mlp::<f64>::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert_eq!(err.to_string(), "truncated checkpoint");
        assert!(matches!(Mlp::<f64>::from_bytes(&bytes[..20]), Err(Error::TruncatedCheckpoint)));
    }

    #[test]
    fn mismatched_declared_arch_is_a_shape_error() {
        let mut bytes = small().to_bytes();
        // claim hidden_dim = 9
        bytes[21..29].copy_from_slice(&9u64.to_le_bytes());
        let err = Mlp::<f64>::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().starts_with("shape mismatch"), "{err}");

        // wrong scalar width
        let bytes = small().to_bytes();
        assert!(matches!(Mlp::<f32>::from_bytes(&bytes), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn version_and_magic_are_checked() {
        let mut bytes = small().to_bytes();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            Mlp::<f64>::from_bytes(&bytes),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));
        let mut bytes = small().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Mlp::<f64>::from_bytes(&bytes), Err(Error::BadMagic)));
    }
}
