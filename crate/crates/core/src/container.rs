//! The `VLRB` float32 matrix container.
//!
//! Layout (little-endian): magic `VLRB`, `u32` version (= 1), `u64` row
//! count, `u32` dim_a, `u32` dim_b, then `rows * (dim_a + dim_b)` IEEE-754
//! float32 values, row-major. Embedding files use `dim_a` for the text part
//! and `dim_b` for the image part; other matrices set `dim_b = 0`.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VLRB";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub rows: usize,
    pub dim_a: usize,
    pub dim_b: usize,
    pub data: Vec<f32>,
}

impl Container {
    pub fn new(rows: usize, dim_a: usize, dim_b: usize, data: Vec<f32>) -> Result<Self> {
        let width = dim_a + dim_b;
        if data.len() != rows * width {
            return Err(Error::Format(format!(
                "{} values do not fill {rows} rows of width {width}",
                data.len()
            )));
        }
        Ok(Self { rows, dim_a, dim_b, data })
    }

    pub fn width(&self) -> usize {
        self.dim_a + self.dim_b
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.width();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn byte_len(&self) -> usize {
        HEADER_LEN + self.data.len() * 4
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let dim_a = u32::try_from(self.dim_a).map_err(|_| Error::Format("dim_a overflows u32".into()))?;
        let dim_b = u32::try_from(self.dim_b).map_err(|_| Error::Format("dim_b overflows u32".into()))?;
        let mut buf = Vec::with_capacity(self.byte_len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.rows as u64).to_le_bytes());
        buf.extend_from_slice(&dim_a.to_le_bytes());
        buf.extend_from_slice(&dim_b.to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads exactly one container from `r`, leaving any trailing bytes unread.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        if &header[0..4] != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let rows = u64::from_le_bytes(header[8..16].try_into().unwrap());
        let dim_a = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
        let dim_b = u32::from_le_bytes(header[20..24].try_into().unwrap()) as usize;
        let rows = usize::try_from(rows).map_err(|_| Error::Format("row count overflows".into()))?;
        let n_values = rows
            .checked_mul(dim_a + dim_b)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        let mut payload = vec![0u8; n_values * 4];
        r.read_exact(&mut payload)
            .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { rows, dim_a, dim_b, data })
    }

    /// Parses a whole buffer; trailing bytes are a format error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let c = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", cursor.len())));
        }
        Ok(c)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Position of the first NaN/Inf, as (row, column).
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        let w = self.width().max(1);
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| (p / w, p % w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let c = Container::new(1, 2, 1, vec![1.0, -2.0, 0.5]).unwrap();
        let b = c.to_bytes();
        assert_eq!(&b[0..4], b"VLRB");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..16], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&b[16..20], &[2, 0, 0, 0]);
        assert_eq!(&b[20..24], &[1, 0, 0, 0]);
        assert_eq!(&b[24..28], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 24 + 12);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let c = Container::new(2, 1, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut b = c.to_bytes();
        assert!(matches!(Container::from_bytes(&b[..b.len() - 1]), Err(Error::Format(_))));
        b.push(0);
        assert!(matches!(Container::from_bytes(&b), Err(Error::Format(_))));
        b[0] = b'X';
        assert!(matches!(Container::from_bytes(&b), Err(Error::Format(_))));
    }

    #[test]
    fn locates_non_finite() {
        let c = Container::new(2, 2, 0, vec![0.0, 1.0, f32::NAN, 2.0]).unwrap();
        assert_eq!(c.first_non_finite(), Some((1, 0)));
    }
}
