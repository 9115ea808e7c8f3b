use nalgebra::DMatrix;

use crate::encoder::ImageEncoder;
use crate::error::Result;
use crate::format::sha256_hex;
use crate::image::Image;
use crate::Vector;

/// Patch-mean image encoder: `f(x) = W·patch_means(x) + b`, where patch
/// means are per-channel averages over `patch×patch` tiles in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct ToyImageEncoder {
    resolution: u32,
    patch: u32,
    projection: DMatrix<f64>,
    bias: Vector,
}

impl ToyImageEncoder {
    pub fn new(resolution: u32, patch: u32, projection: DMatrix<f64>, bias: Vector) -> Self {
        assert!(patch > 0 && resolution.is_multiple_of(patch));
        let n = ((resolution / patch) * (resolution / patch) * 3) as usize;
        assert_eq!(projection.ncols(), n);
        assert_eq!(projection.nrows(), bias.len());
        Self { resolution, patch, projection, bias }
    }

    pub fn bias(&self) -> &Vector {
        &self.bias
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn patch_means(&self, image: &Image) -> Vector {
        patch_means(image, self.resolution, self.patch)
    }
}

/// Patch means ordered by (patch row, patch column, channel).
pub fn patch_means(image: &Image, resolution: u32, patch: u32) -> Vector {
    let img = image.resized(resolution, resolution);
    let per_side = resolution / patch;
    let area = (patch * patch) as f64 * 255.0;
    let mut out = Vector::zeros((per_side * per_side * 3) as usize);
    for py in 0..per_side {
        for px in 0..per_side {
            let mut acc = [0.0f64; 3];
            for dy in 0..patch {
                for dx in 0..patch {
                    let p = img.get(px * patch + dx, py * patch + dy);
                    for c in 0..3 {
                        acc[c] += p[c] as f64;
                    }
                }
            }
            let base = ((py * per_side + px) * 3) as usize;
            for c in 0..3 {
                out[base + c] = acc[c] / area;
            }
        }
    }
    out
}

impl ImageEncoder for ToyImageEncoder {
    fn dim(&self) -> usize {
        self.bias.len()
    }

    fn encode_image(&self, image: &Image) -> Result<Vector> {
        Ok(&self.projection * self.patch_means(image) + &self.bias)
    }

    fn parameter_checksum(&self) -> String {
        let bytes: Vec<u8> = self.projection.iter().chain(self.bias.iter()).flat_map(|x| x.to_le_bytes()).collect();
        sha256_hex(&bytes)
    }
}
