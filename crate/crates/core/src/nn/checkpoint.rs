//! Binary checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "ITOP"
//! 4       4     u32 format version (1)
//! 8       1     u8 element width in bytes (4 = f32, 8 = f64)
//! 9       4     u32 layer count L
//! then L layer records:
//!         4     u32 n_in
//!         4     u32 n_out
//!         ⌈n_in·n_out/8⌉   mask bitset, row-major, bit i in byte i/8 at position i%8
//!         n_in·n_out·w     weights
//!         n_in·n_out·w     momentum
//!         n_out·w          bias
//!         n_out·w          bias momentum
//! then zero or more tagged sections until end of file:
//!         4     ASCII tag (e.g. "FIRE", "TRNR")
//!         8     u64 payload length
//!         ...   payload
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::ndcore::{BitGrid, Mask, Matrix, Scalar};
use crate::nn::{Network, SparseLayer};

pub const MAGIC: &[u8; 4] = b"ITOP";
pub const VERSION: u32 = 1;

/// Extra tagged payload stored after the layer records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub tag: [u8; 4],
    pub payload: Vec<u8>,
}

impl Section {
    pub fn new(tag: &[u8; 4], payload: Vec<u8>) -> Self {
        Section { tag: *tag, payload }
    }
}

pub fn encode<T: Scalar>(net: &Network<T>, sections: &[Section]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::DTYPE);
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        out.extend_from_slice(&(layer.n_in() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.n_out() as u32).to_le_bytes());
        out.extend_from_slice(&BitGrid::from_mask(layer.mask()).to_bytes());
        for grid in [layer.weights(), layer.momentum()] {
            grid.as_slice().iter().for_each(|v| v.write_le(&mut out));
        }
        for vec in [layer.bias(), layer.bias_momentum()] {
            vec.iter().for_each(|v| v.write_le(&mut out));
        }
    }
    for s in sections {
        out.extend_from_slice(&s.tag);
        out.extend_from_slice(&(s.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&s.payload);
    }
    out
}

/// Little-endian cursor that reports the byte offset of any failure.
pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated: need {n} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn scalars<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        let raw = self.take(n * T::BYTES)?;
        Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(Network<T>, Vec<Section>)> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"ITOP\""));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let dtype = r.u8()?;
    if dtype != T::DTYPE {
        return Err(Error::format(
            8,
            format!("element width {dtype} does not match requested {}", T::DTYPE),
        ));
    }
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let at = r.offset();
        let n_in = r.u32()? as usize;
        let n_out = r.u32()? as usize;
        let n = n_in
            .checked_mul(n_out)
            .filter(|&n| n <= bytes.len() * 8)
            .ok_or_else(|| Error::format(at, "implausible layer dimensions"))?;
        let bits = BitGrid::from_bytes(n_in, n_out, r.take(n.div_ceil(8))?)
            .map_err(|_| Error::format(at, "bad mask bitset"))?;
        let mask = Mask::from_bits(n_in, n_out, (0..n).map(|i| bits.contains(i)).collect())?;
        let weights = Matrix::from_vec(n_in, n_out, r.scalars(n)?)?;
        let momentum = Matrix::from_vec(n_in, n_out, r.scalars(n)?)?;
        let bias = r.scalars(n_out)?;
        let bias_momentum = r.scalars(n_out)?;
        let mut layer = SparseLayer::from_parts(weights.clone(), bias, mask)?;
        if !layer.weights().bitwise_eq(&weights) {
            return Err(Error::format(at, "nonzero weight outside mask"));
        }
        layer.set_momenta(momentum, bias_momentum)?;
        layers.push(layer);
    }
    let net = Network::new(layers).map_err(|e| Error::format(r.offset(), e.to_string()))?;
    let mut sections = Vec::new();
    while r.remaining() > 0 {
        let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
        let len = r.u64()? as usize;
        sections.push(Section {
            tag,
            payload: r.take(len)?.to_vec(),
        });
    }
    Ok((net, sections))
}

pub fn save<T: Scalar>(path: &Path, net: &Network<T>, sections: &[Section]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode(net, sections)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<(Network<T>, Vec<Section>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn find<'a>(sections: &'a [Section], tag: &[u8; 4]) -> Option<&'a Section> {
    sections.iter().find(|s| &s.tag == tag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::Rng;

    fn sample_net() -> Network<f64> {
        let widths = [5, 4, 3];
        let mut rng = Rng::new(2);
        let masks = widths
            .windows(2)
            .map(|w| Mask::from_active(w[0], w[1], &rng.sample_indices(w[0] * w[1], 7)).unwrap())
            .collect();
        Network::init_sparse(&widths, masks, 9).unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let net = sample_net();
        let sections = vec![Section::new(b"TEST", vec![1, 2, 3])];
        let bytes = encode(&net, &sections);
        let (back, secs) = decode::<f64>(&bytes).unwrap();
        assert!(net.bitwise_eq(&back));
        assert_eq!(secs, sections);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample_net(), &[]);
        assert_eq!(&bytes[..4], b"ITOP");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(bytes[8], 8);
        assert_eq!(u32::from_le_bytes(bytes[9..13].try_into().unwrap()), 2);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&sample_net(), &[]);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode::<f64>(&bad), Err(Error::Format { offset: 0, .. })));
        assert!(decode::<f64>(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode::<f32>(&bytes).is_err());
    }
}
