//! NFM1 binary matrix files.
//!
//! Layout: bytes 0-3 ASCII magic `NFM1`; bytes 4-7 little-endian u32
//! version (must be 1); bytes 8-15 LE u64 row count; bytes 16-23 LE u64
//! column count; then rows*cols LE IEEE-754 f64 values in row-major order.
//! Readers reject wrong magic, unsupported versions, truncated payloads and
//! non-finite values, reporting the byte offset of the failure.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAGIC: &[u8; 4] = b"NFM1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

/// Serializes a matrix into NFM1 bytes.
pub fn to_bytes(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses NFM1 bytes into a matrix.
pub fn from_bytes(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: "bad magic, expected ASCII \"NFM1\"".into(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            reason: format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            reason: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if rows == 0 || cols == 0 {
        return Err(Error::Format {
            offset: 8,
            reason: format!("dimensions must be positive, got {rows}x{cols}"),
        });
    }
    let count = rows
        .checked_mul(cols)
        .filter(|&n| n <= (usize::MAX as u64 - HEADER_LEN as u64) / 8)
        .ok_or_else(|| Error::Format {
            offset: 8,
            reason: format!("dimensions {rows}x{cols} overflow the payload size"),
        })? as usize;
    let expected = HEADER_LEN + 8 * count;
    if bytes.len() < expected {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            reason: format!("truncated payload: {} of {expected} bytes", bytes.len()),
        });
    }
    let mut data = Vec::with_capacity(count);
    for i in 0..count {
        let at = HEADER_LEN + 8 * i;
        let v = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Format {
                offset: at as u64,
                reason: format!("non-finite value {v}"),
            });
        }
        data.push(v);
    }
    Matrix::new(rows as usize, cols as usize, data)
}

/// Writes a matrix to an NFM1 file.
pub fn write_file<P: AsRef<Path>>(path: P, m: &Matrix) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&to_bytes(m))?;
    Ok(())
}

/// Reads a matrix from an NFM1 file.
pub fn read_file<P: AsRef<Path>>(path: P) -> Result<Matrix> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_byte_identical() {
        let m = Matrix::from_rows(&[&[1.5, -2.25, 0.0], &[1e-300, 3.14159, -1e300]]).unwrap();
        let bytes = to_bytes(&m);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = to_bytes(&Matrix::identity(2));
        bytes[0] = b'X';
        match from_bytes(&bytes) {
            Err(Error::Format { offset: 0, .. }) => {}
            other => panic!("expected bad-magic error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_truncation() {
        let bytes = to_bytes(&Matrix::identity(3));
        for cut in [2, 10, bytes.len() - 1] {
            assert!(from_bytes(&bytes[..cut]).is_err(), "cut at {cut} accepted");
        }
    }

    #[test]
    fn rejects_wrong_version_and_nan() {
        let mut bytes = to_bytes(&Matrix::identity(2));
        bytes[4] = 2;
        assert!(matches!(from_bytes(&bytes), Err(Error::Format { offset: 4, .. })));

        let mut bytes = to_bytes(&Matrix::identity(2));
        bytes[24..32].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(from_bytes(&bytes), Err(Error::Format { offset: 24, .. })));
    }
}
