//! Fixed random-feature encoder for the two camera views.
//!
//! Each 32x32 view is flattened, centred, and passed through a two-layer
//! tanh perceptron whose weights are drawn once from a seed and never
//! trained. Features are cheap to cache alongside transitions.

use image::GrayImage;

use crate::nn::mlp::{Activation, Mlp, MlpSpec};
use crate::nn::tensor::Matrix;
use crate::seed;

pub const VIEW_FEATURES: usize = 64;
pub const IMAGE_FEATURES: usize = 2 * VIEW_FEATURES;

#[derive(Clone, Debug)]
pub struct ImageEncoder {
    front: Mlp,
    wrist: Mlp,
    pixels: usize,
}

impl ImageEncoder {
    pub fn new(pixels: usize, seed_value: u64) -> Self {
        let spec = MlpSpec::linear(pixels, &[VIEW_FEATURES], VIEW_FEATURES, Activation::Tanh);
        let front = Mlp::new(spec.clone(), 1.0, &mut seed::stream(seed_value, "encoder", 0));
        let wrist = Mlp::new(spec, 1.0, &mut seed::stream(seed_value, "encoder", 1));
        ImageEncoder { front, wrist, pixels }
    }

    /// Output width for a given proprioceptive width.
    pub fn output_dim(proprio_dim: usize) -> usize {
        IMAGE_FEATURES + proprio_dim
    }

    fn pixels_to_row(&self, img: &GrayImage) -> Vec<f64> {
        assert_eq!(img.as_raw().len(), self.pixels, "image size");
        img.as_raw().iter().map(|p| *p as f64 / 255.0 - 0.5).collect()
    }

    /// Image features of both views, 128 values, bounded in `[-1, 1]`.
    pub fn image_features(&self, front: &GrayImage, wrist: &GrayImage) -> Vec<f64> {
        let mut out = Vec::with_capacity(IMAGE_FEATURES);
        for (net, img) in [(&self.front, front), (&self.wrist, wrist)] {
            let x = Matrix::from_vec(1, self.pixels, self.pixels_to_row(img));
            let y = net.predict(&x).expect("encoder input width is fixed");
            out.extend(y.data.iter().map(|v| v.tanh()));
        }
        out
    }

    /// Image features followed by the proprioceptive vector.
    pub fn encode(&self, front: &GrayImage, wrist: &GrayImage, proprio: &[f64]) -> Vec<f64> {
        let mut out = self.image_features(front, wrist);
        out.extend_from_slice(proprio);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_width_and_determinism() {
        let enc = ImageEncoder::new(1024, 5);
        let a = GrayImage::from_fn(32, 32, |c, r| image::Luma([((c * 7 + r * 3) % 256) as u8]));
        let b = GrayImage::from_pixel(32, 32, image::Luma([128]));
        let f = enc.encode(&a, &b, &[1.0, 2.0, 3.0]);
        assert_eq!(f.len(), ImageEncoder::output_dim(3));
        assert_eq!(f[IMAGE_FEATURES..], [1.0, 2.0, 3.0]);
        assert_eq!(f, ImageEncoder::new(1024, 5).encode(&a, &b, &[1.0, 2.0, 3.0]));
        assert!(f[..IMAGE_FEATURES].iter().all(|v| v.abs() <= 1.0));
        // swapping views changes the features
        assert_ne!(enc.image_features(&a, &b), enc.image_features(&b, &a));
    }
}
