//! IDX (MNIST-style) binary files.
//!
//! Images: big-endian magic 0x00000803, then u32 count, rows, cols, then
//! count·rows·cols unsigned bytes. Labels: magic 0x00000801, u32 count, then
//! count unsigned bytes. Files must contain exactly the declared payload.

use std::path::Path;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::ndcore::Matrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(at as u64, "truncated header"))
}

/// Raw images: (count, rows, cols, pixels).
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(0, format!("image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let payload = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format(4, "declared dimensions overflow"))?;
    let body = &bytes[16..];
    if body.len() < payload {
        return Err(Error::format(
            (16 + body.len()) as u64,
            format!("truncated pixel data: {payload} bytes declared"),
        ));
    }
    if body.len() > payload {
        return Err(Error::format(
            (16 + payload) as u64,
            format!("{} trailing bytes after pixel data", body.len() - payload),
        ));
    }
    Ok((n, rows, cols, body))
}

pub fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(0, format!("label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        let at = 8 + body.len().min(n);
        return Err(Error::format(
            at as u64,
            format!("{} label bytes for {n} declared", body.len()),
        ));
    }
    Ok(body)
}

/// Parses an image/label pair; pixels are flattened row-major and scaled by 1/255.
pub fn parse_idx(images: &[u8], labels: &[u8], split: Split) -> Result<Dataset> {
    let (n, rows, cols, pixels) = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if labels.len() != n {
        return Err(Error::format(
            4,
            format!("{n} images but {} labels", labels.len()),
        ));
    }
    let features = Matrix::from_vec(
        n,
        rows * cols,
        pixels.iter().map(|&p| p as f64 / 255.0).collect(),
    )?;
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let n_classes = labels.iter().max().map_or(1, |&m| m + 1);
    Dataset::new(features, labels, n_classes, split)
}

pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx(&images, &labels, split)
}

/// Encodes a dataset as IDX bytes. Features are quantized to round(v · 255);
/// `rows · cols` must equal the feature count.
pub fn encode_idx(dataset: &Dataset, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != dataset.n_features() {
        return Err(Error::shape(format!(
            "{rows}x{cols} images for {} features",
            dataset.n_features()
        )));
    }
    if dataset.n_classes > 256 {
        return Err(Error::Data("IDX labels hold at most 256 classes".into()));
    }
    let n = dataset.len() as u32;
    let mut img = Vec::with_capacity(16 + dataset.features.len());
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&n.to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    img.extend(
        dataset
            .features
            .as_slice()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    let mut lab = Vec::with_capacity(8 + dataset.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&n.to_be_bytes());
    lab.extend(dataset.labels.iter().map(|&l| l as u8));
    Ok((img, lab))
}

pub fn write_idx(dataset: &Dataset, rows: usize, cols: usize, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (img, lab) = encode_idx(dataset, rows, cols)?;
    std::fs::write(images_path, img).map_err(|e| Error::io(images_path, e))?;
    std::fs::write(labels_path, lab).map_err(|e| Error::io(labels_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fixture() -> (Vec<u8>, Vec<u8>) {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend_from_slice(&[0, 51, 102, 255, 255, 0, 204, 153]);
        let lab = vec![0, 0, 8, 1, 0, 0, 0, 2, 3, 1];
        (img, lab)
    }

    #[test]
    fn parses_fixture() {
        let (img, lab) = fixture();
        let d = parse_idx(&img, &lab, Split::Train).unwrap();
        assert_eq!(d.features.shape(), (2, 4));
        assert_eq!(d.features.row(0), &[0.0, 0.2, 0.4, 1.0]);
        assert_eq!(d.features.row(1), &[1.0, 0.0, 0.8, 0.6]);
        assert_eq!(d.labels, vec![3, 1]);
        assert_eq!(d.n_classes, 4);
    }

    #[test]
    fn count_mismatch_is_format_error() {
        let (img, _) = fixture();
        let lab = vec![0, 0, 8, 1, 0, 0, 0, 1, 3];
        assert!(matches!(parse_idx(&img, &lab, Split::Train), Err(Error::Format { .. })));
    }

    #[test]
    fn every_header_byte_corruption_rejected() {
        let (img, lab) = fixture();
        for at in 0..16 {
            let mut bad = img.clone();
            bad[at] ^= 0xFF;
            assert!(parse_idx(&bad, &lab, Split::Train).is_err(), "image byte {at}");
        }
        for at in 0..8 {
            let mut bad = lab.clone();
            bad[at] ^= 0xFF;
            assert!(parse_idx(&img, &bad, Split::Train).is_err(), "label byte {at}");
        }
    }

    #[test]
    fn truncation_reports_offset() {
        let (img, lab) = fixture();
        match parse_idx(&img[..20], &lab, Split::Train) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("{other:?}"),
        }
    }
}
