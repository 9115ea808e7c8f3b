use crate::image::Image;
use crate::Vector;

/// Image ↔ latent autoencoder (`ε` / `δ`).
pub trait LatentCodec: Send + Sync {
    fn latent_len(&self) -> usize;
    fn encode(&self, image: &Image) -> Vector;
    fn decode(&self, latent: &Vector) -> Image;
    fn parameter_checksum(&self) -> String {
        String::new()
    }
}

/// Parameter-free codec: `factor×factor` average pooling to a
/// `channels × side × side` latent scaled to `[-1, 1]`, nearest-neighbour
/// upsampling back.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolingCodec {
    pub image_side: u32,
    pub factor: u32,
}

impl PoolingCodec {
    pub fn new(image_side: u32, factor: u32) -> Self {
        assert!(factor > 0 && image_side.is_multiple_of(factor), "image side must be a multiple of the pooling factor");
        Self { image_side, factor }
    }

    pub fn latent_side(&self) -> u32 {
        self.image_side / self.factor
    }

    /// `[channels, side, side]`.
    pub fn latent_shape(&self) -> [usize; 3] {
        let s = self.latent_side() as usize;
        [3, s, s]
    }

    fn index(&self, c: usize, y: u32, x: u32) -> usize {
        let s = self.latent_side() as usize;
        c * s * s + y as usize * s + x as usize
    }
}

impl Default for PoolingCodec {
    fn default() -> Self {
        Self::new(16, 2)
    }
}

impl LatentCodec for PoolingCodec {
    fn latent_len(&self) -> usize {
        let s = self.latent_side() as usize;
        3 * s * s
    }

    fn encode(&self, image: &Image) -> Vector {
        let img = image.resized(self.image_side, self.image_side);
        let side = self.latent_side();
        let area = (self.factor * self.factor) as f64;
        let mut z = Vector::zeros(self.latent_len());
        for ly in 0..side {
            for lx in 0..side {
                let mut acc = [0.0f64; 3];
                for dy in 0..self.factor {
                    for dx in 0..self.factor {
                        let p = img.get(lx * self.factor + dx, ly * self.factor + dy);
                        for c in 0..3 {
                            acc[c] += p[c] as f64;
                        }
                    }
                }
                for c in 0..3 {
                    z[self.index(c, ly, lx)] = acc[c] / area / 127.5 - 1.0;
                }
            }
        }
        z
    }

    fn decode(&self, latent: &Vector) -> Image {
        assert_eq!(latent.len(), self.latent_len(), "latent length mismatch");
        Image::from_fn(self.image_side, self.image_side, |x, y| {
            let (lx, ly) = (x / self.factor, y / self.factor);
            let mut px = [0u8; 3];
            for (c, out) in px.iter_mut().enumerate() {
                let v = (latent[self.index(c, ly, lx)] + 1.0) * 127.5;
                *out = v.round().clamp(0.0, 255.0) as u8;
            }
            px
        })
    }
}
