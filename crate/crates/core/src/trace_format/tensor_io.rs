//! Raw little-endian tensor files. Shapes live in the sidecar metadata; the
//! files themselves are bare row-major element arrays.

use std::fs;
use std::path::Path;

use half::f16;

use crate::error::{Error, Result};

/// Element encoding of a stored tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F16,
}

impl Precision {
    pub fn extension(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F16 => "f16",
        }
    }

    fn width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F16 => 2,
        }
    }
}

/// Reads `expected` elements from `path`, widening to `f32`. Fails with a
/// shape mismatch if the byte length disagrees and with `NonFinite` on the
/// first NaN or infinity.
pub fn read_tensor(
    path: &Path,
    precision: Precision,
    expected: usize,
    what: &str,
) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let width = precision.width();
    if bytes.len() % width != 0 || bytes.len() / width != expected {
        return Err(Error::ShapeMismatch {
            what: what.to_string(),
            expected,
            found: bytes.len() / width,
        });
    }
    let values: Vec<f32> = match precision {
        Precision::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        Precision::F16 => bytes
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
    };
    check_finite(&values, what)?;
    Ok(values)
}

pub fn write_tensor(path: &Path, precision: Precision, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * precision.width());
    match precision {
        Precision::F32 => {
            for v in values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        Precision::F16 => {
            for v in values {
                bytes.extend_from_slice(&f16::from_f32(*v).to_le_bytes());
            }
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn check_finite(values: &[f32], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            what: what.to_string(),
            index,
        }),
        None => Ok(()),
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.f32");
        let values = vec![0.0, -0.0, 1.5, f32::MIN_POSITIVE, -3.25e7];
        write_tensor(&path, Precision::F32, &values).unwrap();
        let back = read_tensor(&path, Precision::F32, values.len(), "t").unwrap();
        let a: Vec<u32> = values.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(std::fs::read(&path).unwrap()[8..12], 1.5f32.to_le_bytes());
    }

    #[test]
    fn f16_widens_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.f16");
        write_tensor(&path, Precision::F16, &[1.0, 0.5, -2.0]).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 6);
        let back = read_tensor(&path, Precision::F16, 3, "t").unwrap();
        assert_eq!(back, vec![1.0, 0.5, -2.0]);
    }

    #[test]
    fn length_and_finiteness_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.f32");
        write_tensor(&path, Precision::F32, &[1.0, f32::NAN]).unwrap();
        assert!(matches!(
            read_tensor(&path, Precision::F32, 3, "t"),
            Err(Error::ShapeMismatch {
                expected: 3,
                found: 2,
                ..
            })
        ));
        assert!(matches!(
            read_tensor(&path, Precision::F32, 2, "t"),
            Err(Error::NonFinite { index: 1, .. })
        ));
        assert!(matches!(
            read_tensor(&dir.path().join("absent.f32"), Precision::F32, 2, "t"),
            Err(Error::MissingFile { .. })
        ));
    }
}
