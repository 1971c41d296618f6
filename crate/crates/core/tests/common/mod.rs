#![allow(dead_code)]

use acgan::datapipe::Dataset;
use acgan::netspec::{ArchSpec, ImageShape};
use acgan::trainer::ExperimentData;
use rand::Rng;

pub const TINY_SPEC: &str = r#"
name = "tiny"
num_classes = 3
latent_dim = 4
image = { height = 8, width = 8, channels = 1 }
backbone = [
  { kind = "conv", filters = 4, kernel = 3, stride = 2, padding = 1 },
  { kind = "layer_norm" },
  { kind = "leaky_relu", slope = 0.2 },
  { kind = "flatten" },
]
class_head = [{ kind = "dense", units = 3, in_features = 64 }]
source_head = [{ kind = "dense", units = 1, in_features = 64 }]
generator = [
  { kind = "dense", units = 32 },
  { kind = "batch_norm" },
  { kind = "relu" },
  { kind = "reshape", shape = [4, 4, 2] },
  { kind = "deconv", filters = 1, kernel = 4, stride = 2, padding = 1 },
  { kind = "tanh" },
]
"#;

pub fn tiny_spec() -> ArchSpec {
    ArchSpec::from_toml_str(TINY_SPEC).unwrap()
}

/// Three classes of 8x8 images: a bright row band, a bright column band, or
/// a bright centre, plus noise.
pub fn synthetic(n: usize, seed: u64) -> Dataset {
    let mut rng = acgan::SeedStream::new(seed).rng();
    let mut pixels = Vec::with_capacity(n * 64);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 3;
        for r in 0..8 {
            for col in 0..8 {
                let on = match c {
                    0 => (3..5).contains(&r),
                    1 => (3..5).contains(&col),
                    _ => (2..6).contains(&r) && (2..6).contains(&col),
                };
                let base: i32 = if on { 200 } else { 40 };
                pixels.push((base + rng.random_range(-30..=30)).clamp(0, 255) as u8);
            }
        }
        labels.push(c);
    }
    Dataset::new(
        "synthetic",
        ImageShape {
            height: 8,
            width: 8,
            channels: 1,
        },
        3,
        pixels,
        labels,
    )
    .unwrap()
}

pub fn tiny_data() -> ExperimentData {
    ExperimentData::new(synthetic(240, 1), synthetic(60, 2), 30, 5).unwrap()
}
