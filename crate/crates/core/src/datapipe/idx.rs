//! IDX (MNIST-family) parsing.

use std::path::Path;

use crate::error::{Error, Result};
use crate::netspec::ImageShape;

use super::Dataset;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Parses an unsigned-byte IDX header with the expected magic and returns
/// (dims, payload).
fn parse_header<'a>(bytes: &'a [u8], magic: u32, path: &Path) -> Result<(Vec<usize>, &'a [u8])> {
    if bytes.len() < 4 {
        return Err(Error::format(path, "file too short for an IDX header"));
    }
    let got = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
    if got != magic {
        return Err(Error::format(
            path,
            format!("bad magic {got:#010x}, expected {magic:#010x}"),
        ));
    }
    let ndim = (magic & 0xff) as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::format(path, "truncated IDX header"));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|d| u32::from_be_bytes(bytes[4 + 4 * d..8 + 4 * d].try_into().unwrap()) as usize)
        .collect();
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(path, "IDX dimensions overflow"))?;
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "payload is {} bytes, header {dims:?} implies {expected}",
                payload.len()
            ),
        ));
    }
    Ok((dims, payload))
}

/// Returns `(n, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let (dims, payload) = parse_header(bytes, IDX_IMAGES_MAGIC, path)?;
    if dims[1] == 0 || dims[2] == 0 {
        return Err(Error::format(path, "zero-sized images"));
    }
    Ok((dims[0], dims[1], dims[2], payload.to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    let (_, payload) = parse_header(bytes, IDX_LABELS_MAGIC, path)?;
    Ok(payload.iter().map(|&b| b as usize).collect())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads a pair of uncompressed IDX files. Class count is fixed at 10.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let (n, h, w, pixels) = parse_idx_images(&read(ip)?, ip)?;
    let labels = parse_idx_labels(&read(lp)?, lp)?;
    if labels.len() != n {
        return Err(Error::format(
            lp,
            format!("{} labels for {n} images", labels.len()),
        ));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= 10) {
        return Err(Error::format(lp, format!("label {l} outside 0..10")));
    }
    let name = ip
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(
        name,
        ImageShape {
            height: h,
            width: w,
            channels: 1,
        },
        10,
        pixels,
        labels,
    )
}

#[cfg(test)]
pub(crate) fn encode_idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend(d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}
