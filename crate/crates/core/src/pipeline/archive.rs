//! Model archive container.
//!
//! ```text
//! magic      8 bytes  "RGBDACT\0"
//! version    u32
//! count      u32
//! table      count × { name_len u32, name utf-8, payload_len u64, crc32 u32 }
//! payloads   concatenated in table order
//! ```
//!
//! All integers are little-endian. Inside payloads, `usize` values are
//! written as u64, floats as IEEE-754 binary64, and arrays as a u64 length
//! followed by the elements.

use crate::error::ModelError;

pub const MAGIC: &[u8; 8] = b"RGBDACT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    components: Vec<(String, Vec<u8>)>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, payload: Vec<u8>) {
        self.components.push((name.to_string(), payload));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.components.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Result<&[u8], ModelError> {
        self.components
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p.as_slice())
            .ok_or_else(|| ModelError::MissingComponent(name.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.components.len() as u32).to_le_bytes());
        for (name, payload) in &self.components {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
        }
        for (_, payload) in &self.components {
            out.extend_from_slice(payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(ModelError::BadMagic);
        }
        let truncated = || ModelError::Checksum("<table>".into());
        let mut d = Decoder::new("<table>", &bytes[MAGIC.len()..]);
        let version = d.u32().map_err(|_| truncated())?;
        if version != FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let count = d.u32().map_err(|_| truncated())?;
        let mut table = Vec::new();
        for _ in 0..count {
            let name_len = d.u32().map_err(|_| truncated())? as usize;
            let name = d.take(name_len).map_err(|_| truncated())?;
            let name = String::from_utf8(name.to_vec()).map_err(|_| ModelError::Malformed {
                component: "<table>".into(),
                message: "component name is not utf-8".into(),
            })?;
            let len = d.u64().map_err(|_| truncated())?;
            let crc = d.u32().map_err(|_| truncated())?;
            table.push((name, len, crc));
        }
        let mut components = Vec::with_capacity(table.len());
        for (name, len, crc) in table {
            let payload = usize::try_from(len)
                .ok()
                .and_then(|l| d.take(l).ok())
                .ok_or_else(|| ModelError::Checksum(name.clone()))?;
            if crc32fast::hash(payload) != crc {
                return Err(ModelError::Checksum(name));
            }
            components.push((name, payload.to_vec()));
        }
        if !d.is_empty() {
            return Err(ModelError::Malformed {
                component: "<archive>".into(),
                message: "trailing bytes after last component".into(),
            });
        }
        Ok(Self { components })
    }
}

#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bool(&mut self, v: bool) {
        self.buf.push(u8::from(v));
    }

    pub fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|x| self.f64(*x));
    }

    pub fn rows(&mut self, rows: &[Vec<f64>]) {
        self.usize(rows.len());
        rows.iter().for_each(|r| self.f64s(r));
    }
}

pub struct Decoder<'a> {
    component: String,
    data: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(component: &str, data: &'a [u8]) -> Self {
        Self {
            component: component.to_string(),
            data,
            pos: 0,
        }
    }

    pub fn error(&self, message: impl Into<String>) -> ModelError {
        ModelError::Malformed {
            component: self.component.clone(),
            message: message.into(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.data.len()
    }

    pub fn finish(&self) -> Result<(), ModelError> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(self.error(format!("{} unread bytes", self.data.len() - self.pos)))
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.data.len() - self.pos < n {
            return Err(self.error("unexpected end of data"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ModelError> {
        Ok(self.take(N)?.try_into().expect("slice has requested length"))
    }

    pub fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn usize(&mut self) -> Result<usize, ModelError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.error(format!("length {v} too large")))
    }

    /// A length that must fit in the remaining bytes at `elem` bytes each.
    fn len(&mut self, elem: usize) -> Result<usize, ModelError> {
        let n = self.usize()?;
        if n.checked_mul(elem).is_none_or(|b| b > self.data.len() - self.pos) {
            return Err(self.error(format!("array length {n} exceeds payload")));
        }
        Ok(n)
    }

    pub fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn bool(&mut self) -> Result<bool, ModelError> {
        match self.take(1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(self.error(format!("bad bool byte {b}"))),
        }
    }

    pub fn str(&mut self) -> Result<String, ModelError> {
        let n = self.len(1)?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.error("string is not utf-8"))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>, ModelError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn rows(&mut self) -> Result<Vec<Vec<f64>>, ModelError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64s()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Archive {
        let mut a = Archive::new();
        let mut e = Encoder::new();
        e.str("hello");
        e.f64s(&[1.5, -0.0, f64::MAX]);
        e.bool(true);
        a.add("first", e.finish());
        a.add("second", vec![9, 8, 7]);
        a
    }

    #[test]
    fn round_trip() {
        let a = sample();
        let b = Archive::from_bytes(&a.to_bytes()).unwrap();
        assert_eq!(a, b);
        let mut d = Decoder::new("first", b.get("first").unwrap());
        assert_eq!(d.str().unwrap(), "hello");
        let v = d.f64s().unwrap();
        assert_eq!(v[1].to_bits(), (-0.0f64).to_bits());
        assert!(d.bool().unwrap());
        d.finish().unwrap();
        assert_eq!(b.get("third"), Err(ModelError::MissingComponent("third".into())));
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes();
        assert_eq!(Archive::from_bytes(b"nope"), Err(ModelError::BadMagic));
        let mut flipped = bytes.clone();
        *flipped.last_mut().unwrap() ^= 1;
        assert_eq!(Archive::from_bytes(&flipped), Err(ModelError::Checksum("second".into())));
        for cut in [10, 20, bytes.len() - 1] {
            assert!(matches!(
                Archive::from_bytes(&bytes[..cut]),
                Err(ModelError::Checksum(_))
            ));
        }
        let mut v2 = bytes.clone();
        v2[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert_eq!(
            Archive::from_bytes(&v2),
            Err(ModelError::UnsupportedVersion {
                found: 2,
                supported: 1
            })
        );
    }

    #[test]
    fn decoder_rejects_oversized_lengths() {
        let mut e = Encoder::new();
        e.usize(1 << 40);
        let bytes = e.finish();
        let mut d = Decoder::new("x", &bytes);
        assert!(d.f64s().is_err());
    }
}
