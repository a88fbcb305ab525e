//! IDX files (the MNIST distribution format), optionally gzip-compressed.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use flate2::read::GzDecoder;
use phocnn_core::training::Dataset;
use phocnn_core::Tensor;

use crate::error::{CliError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw contents of an IDX file: its dimensions and unsigned-byte payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Idx {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn malformed(path: &Path, reason: impl Into<String>) -> CliError {
    CliError::MalformedIdx {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads the whole file, inflating it when it starts with the gzip magic.
fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    BufReader::new(File::open(path).map_err(|e| CliError::io(path, e))?)
        .read_to_end(&mut raw)
        .map_err(|e| CliError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| malformed(path, format!("bad gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn parse_idx(bytes: &[u8], magic: u32, path: &Path) -> Result<Idx> {
    let mut cur = bytes;
    let found = cur.read_u32::<BigEndian>().map_err(|_| malformed(path, "missing header"))?;
    if found != magic {
        return Err(malformed(path, format!("magic 0x{found:08x}, expected 0x{magic:08x}")));
    }
    let rank = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = cur.read_u32::<BigEndian>().map_err(|_| malformed(path, "truncated header"))?;
        dims.push(d as usize);
    }
    let len = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| malformed(path, "dimensions overflow"))?;
    if cur.len() != len {
        return Err(malformed(path, format!("payload holds {} bytes, header says {len}", cur.len())));
    }
    Ok(Idx { dims, data: cur.to_vec() })
}

pub fn read_idx(path: &Path, magic: u32) -> Result<Idx> {
    parse_idx(&read_bytes(path)?, magic, path)
}

/// Loads up to `limit` images and labels, scaling pixels to `[0, 1]`.
pub fn load_dataset(images: &Path, labels: &Path, limit: Option<usize>) -> Result<Dataset> {
    let im = read_idx(images, IMAGES_MAGIC)?;
    let lb = read_idx(labels, LABELS_MAGIC)?;
    let (n, rows, cols) = (im.dims[0], im.dims[1], im.dims[2]);
    if lb.dims[0] != n {
        return Err(malformed(labels, format!("{} labels for {n} images", lb.dims[0])));
    }
    let n = limit.map_or(n, |l| l.min(n));
    let px = rows * cols;
    let images = (0..n)
        .map(|i| {
            let data = im.data[i * px..(i + 1) * px].iter().map(|&p| f64::from(p) / 255.0).collect();
            Tensor::new([1, rows, cols], data).expect("slice length matches shape")
        })
        .collect();
    let labels = lb.data[..n].iter().map(|&l| usize::from(l)).collect();
    Ok(Dataset::new(images, labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn parses_images() {
        let mut b = header(IMAGES_MAGIC, &[2, 2, 2]);
        b.extend_from_slice(&[0, 255, 1, 2, 3, 4, 5, 6]);
        let idx = parse_idx(&b, IMAGES_MAGIC, Path::new("x")).unwrap();
        assert_eq!(idx.dims, vec![2, 2, 2]);
        assert_eq!(idx.data.len(), 8);
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let b = header(LABELS_MAGIC, &[1]);
        assert!(matches!(
            parse_idx(&b, IMAGES_MAGIC, Path::new("x")),
            Err(CliError::MalformedIdx { .. })
        ));
        let b = header(LABELS_MAGIC, &[3]);
        assert!(parse_idx(&b, LABELS_MAGIC, Path::new("x")).is_err());
    }
}
