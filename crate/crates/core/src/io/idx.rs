//! IDX container: two zero bytes, a type byte, a dimension count, big-endian
//! u32 dimensions, then the row-major payload. Only unsigned bytes (0x08)
//! are supported.

use std::path::Path;

use crate::error::{Error, Result};
use crate::schema::{Dataset, Instance, Schema, Value};

const UBYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn items(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    pub fn item_len(&self) -> usize {
        self.dims.iter().skip(1).product()
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Format("IDX header truncated".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format(format!("bad IDX magic {:02x?}", &bytes[..4])));
    }
    if bytes[2] != UBYTE {
        return Err(Error::Format(format!(
            "unsupported IDX element type 0x{:02x}",
            bytes[2]
        )));
    }
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(Error::Format("IDX file declares zero dimensions".into()));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Format("IDX dimension table truncated".into()));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let expected: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "IDX payload has {} bytes, dimensions {:?} need {}",
            payload.len(),
            dims,
            expected
        )));
    }
    Ok(IdxArray {
        dims,
        data: payload.to_vec(),
    })
}

fn read_idx(path: &Path, expected_ndim: Option<usize>) -> Result<IdxArray> {
    let array = parse_idx(&super::read_maybe_gz(path)?)?;
    if let Some(n) = expected_ndim {
        if array.dims.len() != n {
            return Err(Error::Format(format!(
                "{}: expected {n}-dimensional IDX, found {}",
                path.display(),
                array.dims.len()
            )));
        }
    }
    Ok(array)
}

/// Loads an image file (`0x00000803`, or any ubyte IDX with ≥ 2 dimensions)
/// and optional labels (`0x00000801`). Files may be gzip-compressed. Pixels
/// keep their raw 0..=255 scale.
pub fn load_idx(images_path: &Path, labels_path: Option<&Path>) -> Result<Dataset> {
    let images = read_idx(images_path, None)?;
    let labels = labels_path.map(|p| read_idx(p, Some(1))).transpose()?;
    idx_dataset(&images, labels.as_ref()).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", images_path.display())),
        other => other,
    })
}

/// Builds a dataset from already parsed image and label arrays.
pub fn idx_dataset(images: &IdxArray, labels: Option<&IdxArray>) -> Result<Dataset> {
    if images.dims.len() < 2 {
        return Err(Error::Format("image IDX needs at least 2 dimensions".into()));
    }
    let labels = match labels {
        Some(arr) if arr.dims.len() != 1 => {
            return Err(Error::Format(format!(
                "label IDX has {} dimensions, expected 1",
                arr.dims.len()
            )))
        }
        Some(arr) => Some(arr.data.iter().map(|&b| b as u32).collect::<Vec<_>>()),
        None => None,
    };
    if let Some(labels) = &labels {
        if labels.len() != images.items() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.items(),
                labels.len()
            )));
        }
    }
    let d = images.item_len();
    if d == 0 {
        return Err(Error::Format("IDX images have zero pixels".into()));
    }
    let schema = if images.dims.len() == 3 {
        let w = images.dims[2];
        Schema::new(
            (0..d)
                .map(|i| crate::schema::Attribute::numeric(format!("px_{}_{}", i / w, i % w)))
                .collect(),
        )?
    } else {
        Schema::numeric(d)?
    };
    let instances = images
        .data
        .chunks_exact(d)
        .map(|px| Instance::from_values_unchecked(px.iter().map(|&b| Value::Number(b as f64)).collect()))
        .collect();
    Dataset::new(schema, instances, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn idx_bytes(dims: &[u32], payload: &[u8]) -> Vec<u8> {
        let mut out = vec![0, 0, UBYTE, dims.len() as u8];
        for d in dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn four_tiny_images() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        // Image k has every pixel equal to 85 * k.
        let payload: Vec<u8> = (0..4u8).flat_map(|k| [85 * k; 4]).collect();
        std::fs::write(&img, idx_bytes(&[4, 2, 2], &payload)).unwrap();
        std::fs::write(&lab, idx_bytes(&[4], &[3, 1, 4, 1])).unwrap();
        let ds = load_idx(&img, Some(&lab)).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.schema().len(), 4);
        assert_eq!(ds.schema().attribute(3).name, "px_1_1");
        assert_eq!(ds.instances()[2].to_reals().unwrap(), vec![170.0; 4]);
        assert_eq!(ds.labels().unwrap(), &[3, 1, 4, 1]);
        for b in ds.bounds() {
            let b = b.unwrap();
            assert_eq!((b.min, b.max), (0.0, 255.0));
        }
    }

    #[test]
    fn zero_items() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.idx");
        std::fs::write(&img, idx_bytes(&[0, 28, 28], &[])).unwrap();
        let ds = load_idx(&img, None).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.schema().len(), 784);
    }

    #[test]
    fn gzip_is_transparent() {
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.idx.gz");
        let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        gz.write_all(&idx_bytes(&[1, 1, 3], &[1, 2, 3])).unwrap();
        std::fs::write(&img, gz.finish().unwrap()).unwrap();
        let ds = load_idx(&img, None).unwrap();
        assert_eq!(ds.instances()[0].to_reals().unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(parse_idx(&[1, 0, 8, 1]), Err(Error::Format(_))));
        assert!(matches!(parse_idx(&[0, 0, 0x0d, 1, 0, 0, 0, 0]), Err(Error::Format(_))));
        assert!(matches!(parse_idx(&idx_bytes(&[2, 2], &[0; 3])), Err(Error::Format(_))));
        assert!(matches!(parse_idx(&[0, 0, 8]), Err(Error::Format(_))));
    }

    #[test]
    fn label_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        std::fs::write(&img, idx_bytes(&[2, 1, 1], &[0, 1])).unwrap();
        std::fs::write(&lab, idx_bytes(&[3], &[0, 1, 2])).unwrap();
        assert!(matches!(load_idx(&img, Some(&lab)), Err(Error::Shape(_))));
    }
}
