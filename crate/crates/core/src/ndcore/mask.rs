use crate::error::{Error, Result};

/// Boolean connectivity grid. `true` marks an active connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn full(rows: usize, cols: usize) -> Self {
        Mask {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Mask {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} bits for a {rows}x{cols} mask",
                bits.len()
            )));
        }
        Ok(Mask { rows, cols, bits })
    }

    /// Mask with exactly the listed flat indices active.
    pub fn from_active(rows: usize, cols: usize, active: &[usize]) -> Result<Self> {
        let mut m = Self::empty(rows, cols);
        for &i in active {
            if i >= rows * cols {
                return Err(Error::Bounds(format!("index {i} outside {rows}x{cols}")));
            }
            m.bits[i] = true;
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    #[inline]
    pub fn is_active(&self, flat: usize) -> bool {
        self.bits[flat]
    }

    #[inline]
    pub fn set_flat(&mut self, flat: usize, on: bool) {
        self.bits[flat] = on;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn active_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn density(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.active_count() as f64 / self.bits.len() as f64
    }

    /// Active flat indices in ascending (row, col) order.
    pub fn active_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn inactive_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (!b).then_some(i))
            .collect()
    }

    /// True when every active bit of `self` is also active in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.shape() == other.shape()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Packed bitset over a rows x cols grid, LSB-first within each byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitGrid {
    rows: usize,
    cols: usize,
    words: Vec<u64>,
}

impl BitGrid {
    pub fn new(rows: usize, cols: usize) -> Self {
        BitGrid {
            rows,
            cols,
            words: vec![0; (rows * cols).div_ceil(64)],
        }
    }

    pub fn from_mask(mask: &Mask) -> Self {
        let mut g = Self::new(mask.rows(), mask.cols());
        for (i, &b) in mask.bits().iter().enumerate() {
            if b {
                g.insert(i);
            }
        }
        g
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    /// Sets bit `i`; returns true when it was previously clear.
    #[inline]
    pub fn insert(&mut self, i: usize) -> bool {
        let w = &mut self.words[i / 64];
        let bit = 1u64 << (i % 64);
        let fresh = *w & bit == 0;
        *w |= bit;
        fresh
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn covers(&self, mask: &Mask) -> bool {
        mask.shape() == self.shape()
            && mask
                .bits()
                .iter()
                .enumerate()
                .all(|(i, &b)| !b || self.contains(i))
    }

    /// Byte serialization: ceil(rows*cols/8) bytes, bit i at byte i/8, position i%8.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len().div_ceil(8);
        let mut out = Vec::with_capacity(n);
        for b in 0..n {
            out.push((self.words[b / 8] >> ((b % 8) * 8)) as u8);
        }
        out
    }

    pub fn from_bytes(rows: usize, cols: usize, bytes: &[u8]) -> Result<Self> {
        let n = (rows * cols).div_ceil(8);
        if bytes.len() != n {
            return Err(Error::shape(format!(
                "{} bytes for a {rows}x{cols} bitset",
                bytes.len()
            )));
        }
        let mut g = Self::new(rows, cols);
        for (b, &byte) in bytes.iter().enumerate() {
            g.words[b / 8] |= (byte as u64) << ((b % 8) * 8);
        }
        let len = rows * cols;
        if len % 64 != 0 && g.words.last().is_some_and(|w| w >> (len % 64) != 0) {
            return Err(Error::format(0, "padding bits set in bitset"));
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitgrid_bytes_roundtrip() {
        let mut g = BitGrid::new(7, 11);
        for i in [0, 5, 63, 64, 76] {
            g.insert(i);
        }
        let back = BitGrid::from_bytes(7, 11, &g.to_bytes()).unwrap();
        assert_eq!(g, back);
        assert_eq!(back.count(), 5);
    }

    #[test]
    fn insert_reports_freshness() {
        let mut g = BitGrid::new(2, 2);
        assert!(g.insert(3));
        assert!(!g.insert(3));
    }

    #[test]
    fn mask_active_listing_is_row_major() {
        let m = Mask::from_active(2, 3, &[4, 1]).unwrap();
        assert_eq!(m.active_indices(), vec![1, 4]);
        assert!(m.get(1, 1));
        assert_eq!(m.active_count(), 2);
    }
}
