//! CIFAR-10 binary batches: one label byte then 3072 channel-planar pixels.

use std::path::Path;

use crate::error::{Error, Result};
use crate::netspec::ImageShape;

use super::Dataset;

pub const CIFAR_RECORD_LEN: usize = 1 + 3 * 32 * 32;

const CIFAR_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// Parses one batch file into HWC bytes.
pub fn parse_cifar10_binary(bytes: &[u8], path: &Path) -> Result<Dataset> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD_LEN != 0 {
        return Err(Error::format(
            path,
            format!(
                "length {} is not a positive multiple of {CIFAR_RECORD_LEN}",
                bytes.len()
            ),
        ));
    }
    let n = bytes.len() / CIFAR_RECORD_LEN;
    let plane = 32 * 32;
    let mut pixels = vec![0u8; n * 3 * plane];
    let mut labels = Vec::with_capacity(n);
    for (r, rec) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        if rec[0] >= 10 {
            return Err(Error::format(
                path,
                format!("record {r} has label {}", rec[0]),
            ));
        }
        labels.push(rec[0] as usize);
        let out = &mut pixels[r * 3 * plane..(r + 1) * 3 * plane];
        for c in 0..3 {
            for (k, &p) in rec[1 + c * plane..1 + (c + 1) * plane].iter().enumerate() {
                out[k * 3 + c] = p;
            }
        }
    }
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut ds = Dataset::new(
        name,
        ImageShape {
            height: 32,
            width: 32,
            channels: 3,
        },
        10,
        pixels,
        labels,
    )?;
    ds.class_names = CIFAR_CLASSES.iter().map(|s| s.to_string()).collect();
    Ok(ds)
}

/// Loads and concatenates one or more batch files.
pub fn load_cifar10_binary<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    let mut out: Option<Dataset> = None;
    for p in paths {
        let p = p.as_ref();
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        let ds = parse_cifar10_binary(&bytes, p)?;
        match &mut out {
            None => out = Some(ds),
            Some(acc) => acc.extend(ds)?,
        }
    }
    out.ok_or_else(|| Error::InvalidArgument("no CIFAR-10 batch files given".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_to_interleaved() {
        let mut rec = vec![0u8; CIFAR_RECORD_LEN];
        rec[0] = 7;
        rec[1] = 10; // R at (0,0)
        rec[1 + 1024] = 20; // G at (0,0)
        rec[1 + 2048 + 33] = 30; // B at (1,1)
        let ds = parse_cifar10_binary(&rec, Path::new("b")).unwrap();
        assert_eq!(ds.labels(), &[7]);
        let img = ds.image_bytes(0);
        assert_eq!(&img[0..3], &[10, 20, 0]);
        assert_eq!(img[(32 + 1) * 3 + 2], 30);
        assert_eq!(ds.class_names[7], "horse");
    }

    #[test]
    fn rejects_bad_length_and_label() {
        assert!(parse_cifar10_binary(&[], Path::new("b")).is_err());
        assert!(parse_cifar10_binary(&vec![0; CIFAR_RECORD_LEN + 1], Path::new("b")).is_err());
        let mut rec = vec![0u8; CIFAR_RECORD_LEN];
        rec[0] = 10;
        assert!(parse_cifar10_binary(&rec, Path::new("b")).is_err());
    }
}
