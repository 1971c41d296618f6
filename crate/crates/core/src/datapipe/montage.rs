//! Image grids for visual inspection.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::denormalize_pixel;

/// Tiles `[n, H, W, C]` images (values in `[-1, 1]`) into a near-square
/// grid of 8-bit RGB pixels. Returns `(width, height, rgb bytes)`.
/// Grayscale is replicated to three channels; empty cells stay black.
pub fn montage<T: Scalar>(images: &Tensor<T>) -> Result<(u32, u32, Vec<u8>)> {
    let s = images.shape();
    if s.len() != 4 || !(s[3] == 1 || s[3] == 3) || s[0] == 0 {
        return Err(Error::Shape(format!(
            "montage needs [n, H, W, 1|3] images, got {s:?}"
        )));
    }
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let (width, height) = (cols * w, rows * h);
    let mut out = vec![0u8; width * height * 3];
    for i in 0..n {
        let img = images.row(i);
        let (oy, ox) = ((i / cols) * h, (i % cols) * w);
        for y in 0..h {
            for x in 0..w {
                let dst = ((oy + y) * width + ox + x) * 3;
                for ch in 0..3 {
                    out[dst + ch] =
                        denormalize_pixel(img[(y * w + x) * c + if c == 1 { 0 } else { ch }]);
                }
            }
        }
    }
    Ok((width as u32, height as u32, out))
}

pub fn write_montage_png<T: Scalar>(path: impl AsRef<Path>, images: &Tensor<T>) -> Result<()> {
    let path = path.as_ref();
    let (w, h, rgb) = montage(images)?;
    image::save_buffer(path, &rgb, w, h, image::ColorType::Rgb8)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixty_four_images_make_an_eight_by_eight_grid() {
        let imgs = Tensor::<f32>::full(&[64, 4, 5, 1], 1.0);
        let (w, h, rgb) = montage(&imgs).unwrap();
        assert_eq!((w, h), (40, 32));
        assert!(rgb.iter().all(|&p| p == 255));
        let (w, h, rgb) = montage(&Tensor::<f32>::full(&[3, 2, 2, 3], -1.0)).unwrap();
        assert_eq!((w, h), (4, 4));
        assert!(rgb.iter().all(|&p| p == 0));
    }
}
