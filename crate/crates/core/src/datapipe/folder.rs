//! Class-per-subdirectory image folders, decoded and resized to a common size.

use std::path::Path;

use image::imageops::FilterType;

use crate::error::{Error, Result};
use crate::netspec::ImageShape;

use super::Dataset;

/// Loads `root/<class>/<image>` trees as RGB. Subdirectories sorted by name
/// define the class indices. Files that fail to decode are skipped and
/// counted; a class left with no images is an error.
pub fn load_image_folder(
    root: impl AsRef<Path>,
    height: usize,
    width: usize,
) -> Result<(Dataset, usize)> {
    let root = root.as_ref();
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(
            "resize target must be non-zero".into(),
        ));
    }
    let mut classes: Vec<_> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    classes.sort();
    if classes.len() < 2 {
        return Err(Error::format(
            root,
            format!("found {} class directories, need at least 2", classes.len()),
        ));
    }
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = 0;
    for (k, class) in classes.iter().enumerate() {
        let dir = root.join(class);
        let mut files: Vec<_> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let before = labels.len();
        for f in files {
            let img = match image::open(&f) {
                Ok(img) => img,
                Err(e) => {
                    log::warn!("skipping {}: {e}", f.display());
                    skipped += 1;
                    continue;
                }
            };
            let rgb = image::imageops::resize(
                &img.to_rgb8(),
                width as u32,
                height as u32,
                FilterType::Triangle,
            );
            pixels.extend_from_slice(rgb.as_raw());
            labels.push(k);
        }
        if labels.len() == before {
            return Err(Error::EmptyClass(class.clone()));
        }
    }
    let name = root
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut ds = Dataset::new(
        name,
        ImageShape {
            height,
            width,
            channels: 3,
        },
        classes.len(),
        pixels,
        labels,
    )?;
    ds.class_names = classes;
    Ok((ds, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_png(path: &Path, w: u32, h: u32, v: u8) {
        image::RgbImage::from_pixel(w, h, image::Rgb([v, v, v]))
            .save(path)
            .unwrap();
    }

    #[test]
    fn loads_resizes_and_skips() {
        let dir = tempfile::tempdir().unwrap();
        for (c, v) in [("normal", 0u8), ("pneumonia", 255)] {
            std::fs::create_dir(dir.path().join(c)).unwrap();
            write_png(&dir.path().join(c).join("a.png"), 20, 10, v);
            write_png(&dir.path().join(c).join("b.png"), 5, 5, v);
        }
        std::fs::write(dir.path().join("normal/broken.png"), b"not an image").unwrap();
        let (ds, skipped) = load_image_folder(dir.path(), 8, 8).unwrap();
        assert_eq!(skipped, 1);
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.labels(), &[0, 0, 1, 1]);
        assert_eq!(ds.class_names, vec!["normal", "pneumonia"]);
        assert_eq!(
            ds.shape,
            ImageShape {
                height: 8,
                width: 8,
                channels: 3
            }
        );
        assert!(ds.image_bytes(3).iter().all(|&p| p == 255));
    }

    #[test]
    fn empty_class_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("a")).unwrap();
        std::fs::create_dir(dir.path().join("b")).unwrap();
        write_png(&dir.path().join("a/x.png"), 4, 4, 9);
        std::fs::write(dir.path().join("b/junk.png"), b"??").unwrap();
        assert!(
            matches!(load_image_folder(dir.path(), 4, 4), Err(Error::EmptyClass(c)) if c == "b")
        );
    }
}
