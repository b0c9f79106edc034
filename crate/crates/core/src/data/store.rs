//! PGRS binary embedding files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PGRS"
//! 4       4     format version (u32) = 1
//! 8       8     n, number of records (u64)
//! 16      4     d, dimension (u32)
//! 20      1     dtype code (u8) = 1, float32
//! 21      3     reserved, zero
//! 24      ...   n records of: id (u64), d x f32
//! ```

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{EmbeddingMatrix, SampleId};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PGRS";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 1;
pub const HEADER_LEN: usize = 24;

fn record_len(d: usize) -> u64 {
    8 + 4 * d as u64
}

pub fn encode_embeddings(m: &EmbeddingMatrix<f32>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + m.n() * record_len(m.d()) as usize);
    buf.extend_from_slice(MAGIC);
    // Writes into a Vec cannot fail.
    buf.write_u32::<LittleEndian>(FORMAT_VERSION).unwrap();
    buf.write_u64::<LittleEndian>(m.n() as u64).unwrap();
    buf.write_u32::<LittleEndian>(m.d() as u32).unwrap();
    buf.write_u8(DTYPE_F32).unwrap();
    buf.extend_from_slice(&[0u8; 3]);
    for (id, row) in m.ids().iter().zip(m.rows()) {
        buf.write_u64::<LittleEndian>(id.0).unwrap();
        for &v in row {
            buf.write_f32::<LittleEndian>(v).unwrap();
        }
    }
    buf
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix<f32>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let mut cur = Cursor::new(&bytes[4..HEADER_LEN]);
    let version = cur.read_u32::<LittleEndian>().unwrap();
    let n = cur.read_u64::<LittleEndian>().unwrap();
    let d = cur.read_u32::<LittleEndian>().unwrap() as usize;
    let dtype = cur.read_u8().unwrap();
    let mut reserved = [0u8; 3];
    cur.read_exact(&mut reserved).unwrap();

    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}"
        )));
    }
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype code {dtype}")));
    }
    if reserved != [0; 3] {
        return Err(Error::Format("reserved header bytes must be zero".into()));
    }
    if d == 0 {
        return Err(Error::Format("dimension d must be at least 1".into()));
    }
    let expected = n
        .checked_mul(record_len(d))
        .and_then(|b| b.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| Error::Format(format!("header sizes overflow (n = {n}, d = {d})")))?;
    if expected != bytes.len() as u64 {
        return Err(Error::Truncated {
            expected,
            found: bytes.len() as u64,
        });
    }

    let n = n as usize;
    let mut ids = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * d);
    let mut cur = Cursor::new(&bytes[HEADER_LEN..]);
    for _ in 0..n {
        ids.push(SampleId(cur.read_u64::<LittleEndian>().unwrap()));
        for _ in 0..d {
            data.push(cur.read_f32::<LittleEndian>().unwrap());
        }
    }
    EmbeddingMatrix::new(ids, d, data)
}

pub fn write_embeddings(m: &EmbeddingMatrix<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_embeddings(m))
        .map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> EmbeddingMatrix<f32> {
        let rows: Vec<Vec<f32>> = (0..3)
            .map(|i| (0..4).map(|j| (i * 4 + j) as f32 * 0.37 - 1.1).collect())
            .collect();
        EmbeddingMatrix::from_rows(vec![SampleId(10), SampleId(3), SampleId(77)], &rows).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_embeddings(&sample());
        assert_eq!(&bytes[..4], b"PGRS");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..16], &3u64.to_le_bytes());
        assert_eq!(&bytes[16..20], &4u32.to_le_bytes());
        assert_eq!(bytes[20], 1);
        assert_eq!(&bytes[21..24], &[0, 0, 0]);
        assert_eq!(&bytes[24..32], &10u64.to_le_bytes());
        assert_eq!(bytes.len(), 24 + 3 * (8 + 16));
    }

    #[test]
    fn file_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.pgrs");
        let m = sample();
        write_embeddings(&m, &path).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back.ids(), m.ids());
        let bits = |x: &EmbeddingMatrix<f32>| -> Vec<u32> {
            x.as_slice().iter().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode_embeddings(&sample());
        bytes[0] = b'X';
        assert!(matches!(decode_embeddings(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn length_mismatch_is_truncation() {
        let mut bytes = encode_embeddings(&sample());
        bytes.pop();
        assert!(matches!(
            decode_embeddings(&bytes),
            Err(Error::Truncated { .. })
        ));
        let mut bytes = encode_embeddings(&sample());
        bytes.push(0);
        assert!(matches!(
            decode_embeddings(&bytes),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            decode_embeddings(b"PGR"),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn header_field_checks() {
        let good = encode_embeddings(&sample());
        let mut v = good.clone();
        v[4] = 2;
        assert!(matches!(decode_embeddings(&v), Err(Error::Format(_))));
        let mut v = good.clone();
        v[20] = 2;
        assert!(matches!(decode_embeddings(&v), Err(Error::Format(_))));
        let mut v = good.clone();
        v[22] = 1;
        assert!(matches!(decode_embeddings(&v), Err(Error::Format(_))));
        let mut v = good;
        v[16..20].copy_from_slice(&5u32.to_le_bytes());
        assert!(matches!(
            decode_embeddings(&v),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn missing_file_is_io() {
        let err = read_embeddings("/definitely/not/here.pgrs").unwrap_err();
        assert!(err.is_io());
    }

    proptest! {
        #[test]
        fn encode_decode_identity(
            (d, rows) in (1usize..6).prop_flat_map(|d| (
                Just(d),
                prop::collection::vec(prop::collection::vec(-1e6f32..1e6, d), 0..8),
            ))
        ) {
            let ids = (0..rows.len() as u64).map(|i| SampleId(i * 31 + 5)).collect();
            let data = rows.concat();
            let m = EmbeddingMatrix::new(ids, d, data).unwrap();
            let back = decode_embeddings(&encode_embeddings(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
