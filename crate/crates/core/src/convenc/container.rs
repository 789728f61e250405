//! Binary tensor container.
//!
//! ```text
//! "W2CV" | u32 version (1) | u32 tensor_count |
//!   per tensor: u16 name_len | name (UTF-8) | u8 rank | rank x u64 dims | f32 data
//! | u64 FNV-1a of every preceding byte
//! ```
//! All integers and floats little-endian.

use super::WeightError;

pub const MAGIC: &[u8; 4] = b"W2CV";
pub const VERSION: u32 = 1;

/// Named row-major f32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBlob {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorBlob {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Self {
        TensorBlob {
            name: name.into(),
            dims,
            data,
        }
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

pub fn write_container(tensors: &[TensorBlob]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        assert_eq!(
            t.numel(),
            t.data.len(),
            "tensor {} dims/data mismatch",
            t.name
        );
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.dims.len() as u8);
        for &d in &t.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = fnv1a64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], WeightError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| WeightError::Truncated(format!("{what} at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, WeightError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, WeightError> {
        Ok(u16::from_le_bytes(
            self.take(2, what)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self, what: &str) -> Result<u32, WeightError> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64, WeightError> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
}

/// Parses and checksum-verifies a container.
pub fn read_container(bytes: &[u8]) -> Result<Vec<TensorBlob>, WeightError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(WeightError::BadMagic);
    }
    if bytes.len() < 20 {
        return Err(WeightError::Truncated(
            "container shorter than header + checksum".into(),
        ));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let computed = fnv1a64(body);
    if stored != computed {
        return Err(WeightError::Checksum { stored, computed });
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(WeightError::UnsupportedVersion(version));
    }
    let count = r.u32("tensor count")? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let name_len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| WeightError::Truncated(format!("tensor {i} name is not UTF-8")))?
            .to_string();
        let rank = r.u8("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u64("dims")? as usize);
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| WeightError::Truncated(format!("{name}: dims overflow")))?;
        let raw = r.take(numel.saturating_mul(4), &name)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(WeightError::NonFinite(name));
        }
        if out.iter().any(|t: &TensorBlob| t.name == name) {
            return Err(WeightError::Duplicate(name));
        }
        out.push(TensorBlob { name, dims, data });
    }
    if r.pos != body.len() {
        return Err(WeightError::Truncated(format!(
            "{} trailing bytes before checksum",
            body.len() - r.pos
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn layout_is_bit_exact() {
        let bytes = write_container(&[TensorBlob::new("ab", vec![2], vec![1.0, -2.0])]);
        let mut expect = Vec::new();
        expect.extend_from_slice(b"W2CV");
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&2u16.to_le_bytes());
        expect.extend_from_slice(b"ab");
        expect.push(1);
        expect.extend_from_slice(&2u64.to_le_bytes());
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&(-2.0f32).to_le_bytes());
        let sum = fnv1a64(&expect);
        expect.extend_from_slice(&sum.to_le_bytes());
        assert_eq!(bytes, expect);
    }

    #[test]
    fn rejects_corruption() {
        let mut bytes = write_container(&[TensorBlob::new("x", vec![1, 3], vec![1.0, 2.0, 3.0])]);
        assert_eq!(read_container(&bytes).unwrap().len(), 1);
        bytes[20] ^= 0x40;
        assert!(matches!(
            read_container(&bytes),
            Err(WeightError::Checksum { .. })
        ));
        assert!(matches!(
            read_container(b"NOPE...................."),
            Err(WeightError::BadMagic)
        ));
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut body = Vec::new();
        body.extend_from_slice(b"W2CV");
        body.extend_from_slice(&1u32.to_le_bytes());
        body.extend_from_slice(&1u32.to_le_bytes());
        body.extend_from_slice(&1u16.to_le_bytes());
        body.push(b'x');
        body.push(1);
        body.extend_from_slice(&10u64.to_le_bytes());
        body.extend_from_slice(&0f32.to_le_bytes());
        let sum = fnv1a64(&body);
        body.extend_from_slice(&sum.to_le_bytes());
        assert!(matches!(
            read_container(&body),
            Err(WeightError::Truncated(_))
        ));
    }
}
