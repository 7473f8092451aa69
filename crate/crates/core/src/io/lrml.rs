//! `.lrml` binary matrices.
//!
//! Layout: `b"LRML"`, `u32` version, `u64` rows, `u64` cols, then
//! `rows·cols` `f64` values in column-major order. All integers and floats
//! are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub const LRML_MAGIC: &[u8; 4] = b"LRML";
pub const LRML_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

pub fn encode_lrml(m: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(LRML_MAGIC);
    out.extend_from_slice(&LRML_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_lrml(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != LRML_MAGIC {
        return Err(Error::format("bad magic, expected LRML"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != LRML_VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    if rows == 0 || cols == 0 {
        return Err(Error::format(format!("empty dimensions {rows}x{cols}")));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::format(format!("dimensions {rows}x{cols} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::format(format!(
            "payload is {} bytes, {rows}x{cols} needs {expected}",
            payload.len()
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DenseMatrix::from_col_major(rows as usize, cols as usize, data).map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::Format(msg),
        other => other,
    })
}

/// Writes `m` as `.lrml`. Non-finite entries are refused, matching the reader.
pub fn save_matrix(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    if !m.all_finite() {
        return Err(Error::invalid("refusing to save a matrix with non-finite entries"));
    }
    super::write_file(path.as_ref(), &encode_lrml(m))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    decode_lrml(&super::read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let m = DenseMatrix::from_rows(&[&[1.0, 2.0]]).unwrap();
        let b = encode_lrml(&m);
        assert_eq!(&b[..4], b"LRML");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(b[8], 1);
        assert_eq!(b[16], 2);
        assert_eq!(b.len(), 24 + 16);
        assert_eq!(decode_lrml(&b).unwrap(), m);
    }

    #[test]
    fn rejects_malformed() {
        let b = encode_lrml(&DenseMatrix::filled(2, 3, 0.5));
        assert!(matches!(decode_lrml(&b[..b.len() - 1]), Err(Error::Format(_))));
        assert!(decode_lrml(&b[..10]).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(decode_lrml(&extra).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode_lrml(&bad).is_err());
        let mut v2 = b.clone();
        v2[4] = 2;
        assert!(decode_lrml(&v2).is_err());
        let mut zero = b.clone();
        zero[8..16].copy_from_slice(&0u64.to_le_bytes());
        assert!(matches!(decode_lrml(&zero), Err(Error::Format(_))));
        let mut nan = b;
        nan[24..32].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_lrml(&nan), Err(Error::Format(_))));
    }
}
