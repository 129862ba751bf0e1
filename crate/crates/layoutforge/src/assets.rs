//! Background image and saliency map inputs for the content metrics.

use std::path::Path;

use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::layout::Layout;

/// Background image plus optional precomputed saliency map.
///
/// The saliency map is a single-channel image of the same dimensions; pixel
/// value / 255 gives the importance in `[0,1]`.
#[derive(Debug, Clone)]
pub struct BackgroundAssets {
    pub image: RgbImage,
    pub saliency: Option<GrayImage>,
}

impl BackgroundAssets {
    pub fn new(image: RgbImage, saliency: Option<GrayImage>) -> Result<Self> {
        if let Some(sal) = &saliency {
            if sal.dimensions() != image.dimensions() {
                let (iw, ih) = image.dimensions();
                let (sw, sh) = sal.dimensions();
                return Err(Error::AssetDimensionsMismatch {
                    canvas_w: iw,
                    canvas_h: ih,
                    asset_w: sw,
                    asset_h: sh,
                });
            }
        }
        Ok(Self { image, saliency })
    }

    pub fn load(image_path: &Path, saliency_path: Option<&Path>) -> Result<Self> {
        let image = image::open(image_path)
            .map_err(|e| Error::file(image_path, e.to_string()))?
            .to_rgb8();
        let saliency = match saliency_path {
            Some(p) => Some(
                image::open(p)
                    .map_err(|e| Error::file(p, e.to_string()))?
                    .to_luma8(),
            ),
            None => None,
        };
        Self::new(image, saliency)
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    /// Saliency at a pixel, normalized to `[0,1]`. Requires a saliency map.
    pub fn saliency_at(&self, x: u32, y: u32) -> Option<f64> {
        self.saliency
            .as_ref()
            .map(|s| s.get_pixel(x, y).0[0] as f64 / 255.0)
    }

    /// Fail unless the asset dimensions match the layout canvas.
    pub fn check_canvas(&self, layout: &Layout) -> Result<()> {
        if (layout.canvas_w, layout.canvas_h) != self.image.dimensions() {
            return Err(Error::AssetDimensionsMismatch {
                canvas_w: layout.canvas_w,
                canvas_h: layout.canvas_h,
                asset_w: self.image.width(),
                asset_h: self.image.height(),
            });
        }
        Ok(())
    }
}

/// Uniform single-color assets, handy for tests and synthetic corpora.
pub fn solid_assets(width: u32, height: u32, rgb: [u8; 3], saliency_level: Option<u8>) -> BackgroundAssets {
    let image = RgbImage::from_pixel(width, height, image::Rgb(rgb));
    let saliency = saliency_level.map(|v| GrayImage::from_pixel(width, height, image::Luma([v])));
    BackgroundAssets { image, saliency }
}
