//! Draws layout elements onto the background image, producing the visual
//! prompt consumed by refinement backends and preview exports.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::assets::BackgroundAssets;
use crate::error::Result;
use crate::geometry::PixelBox;
use crate::layout::Layout;

/// Box drawing style. Every parameter is recorded in run manifests, so two
/// runs with the same style render identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderStyle {
    /// Fill opacity in `[0,1]`.
    pub alpha: f32,
    /// Opaque border thickness in pixels, drawn inside the box.
    pub border_px: u32,
    /// Category color table; categories beyond `categories` hash into it.
    pub palette: Vec<[u8; 3]>,
    /// Known category order; position gives the palette slot and label.
    pub categories: Vec<String>,
    /// Draw the category-index label at the element's top-left corner.
    pub label: bool,
    pub label_color: [u8; 3],
    /// Divider width for side-by-side comparison renders.
    pub divider_px: u32,
    pub divider_color: [u8; 3],
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            alpha: 0.35,
            border_px: 2,
            palette: vec![
                [230, 57, 70],
                [29, 53, 87],
                [42, 157, 143],
                [233, 196, 106],
                [244, 162, 97],
                [38, 70, 83],
                [142, 202, 230],
                [255, 0, 110],
                [131, 56, 236],
                [58, 134, 255],
            ],
            categories: vec![
                "text".into(),
                "title".into(),
                "underlay".into(),
                "logo".into(),
                "image".into(),
                "embellishment".into(),
            ],
            label: true,
            label_color: [255, 255, 255],
            divider_px: 4,
            divider_color: [0, 0, 0],
        }
    }
}

impl RenderStyle {
    /// Stable index for a category name: its position in the known table,
    /// or an FNV-1a hash for names beyond it.
    pub fn category_index(&self, name: &str) -> usize {
        match self.categories.iter().position(|c| c == name) {
            Some(i) => i,
            None => fnv1a(name.as_bytes()) as usize,
        }
    }

    pub fn category_color(&self, name: &str) -> [u8; 3] {
        self.palette[self.category_index(name) % self.palette.len()]
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn blend(bg: Rgb<u8>, fill: [u8; 3], alpha: f32) -> Rgb<u8> {
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (alpha * fill[c] as f32 + (1.0 - alpha) * bg.0[c] as f32).round() as u8;
    }
    Rgb(out)
}

/// Render every element onto a copy of the background, in element order:
/// translucent category-colored fill, opaque border, and the category
/// index at the top-left corner. The input image is never modified.
pub fn render_layout(
    assets: &BackgroundAssets,
    layout: &Layout,
    style: &RenderStyle,
) -> Result<RgbImage> {
    assets.check_canvas(layout)?;
    let mut img = assets.image.clone();
    let (w, h) = img.dimensions();
    for el in &layout.elements {
        let b = PixelBox::of(el, w, h);
        if b.is_empty() {
            continue;
        }
        let color = style.category_color(&el.category.name);
        for y in b.y0..b.y1 {
            for x in b.x0..b.x1 {
                let p = blend(*img.get_pixel(x, y), color, style.alpha);
                img.put_pixel(x, y, p);
            }
        }
        for y in b.y0..b.y1 {
            for x in b.x0..b.x1 {
                let on_border = x < b.x0 + style.border_px
                    || x >= b.x1.saturating_sub(style.border_px)
                    || y < b.y0 + style.border_px
                    || y >= b.y1.saturating_sub(style.border_px);
                if on_border {
                    img.put_pixel(x, y, Rgb(color));
                }
            }
        }
        if style.label {
            let idx = style.category_index(&el.category.name) % 100;
            draw_number(
                &mut img,
                idx,
                b.x0 + style.border_px + 1,
                b.y0 + style.border_px + 1,
                b,
                style.label_color,
            );
        }
    }
    Ok(img)
}

/// Side-by-side render of two layouts over the same background, separated
/// by a divider.
pub fn render_comparison(
    assets: &BackgroundAssets,
    before: &Layout,
    after: &Layout,
    style: &RenderStyle,
) -> Result<RgbImage> {
    let left = render_layout(assets, before, style)?;
    let right = render_layout(assets, after, style)?;
    let (w, h) = left.dimensions();
    let mut out = RgbImage::from_pixel(2 * w + style.divider_px, h, Rgb(style.divider_color));
    for y in 0..h {
        for x in 0..w {
            out.put_pixel(x, y, *left.get_pixel(x, y));
            out.put_pixel(x + w + style.divider_px, y, *right.get_pixel(x, y));
        }
    }
    Ok(out)
}

// 3x5 digit glyphs, row-major bits.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

fn draw_number(img: &mut RgbImage, value: usize, x: u32, y: u32, clip: PixelBox, color: [u8; 3]) {
    let digits: Vec<usize> = value
        .to_string()
        .bytes()
        .map(|b| (b - b'0') as usize)
        .collect();
    let mut cx = x;
    for d in digits {
        for (row, bits) in DIGITS[d].iter().enumerate() {
            for col in 0..3u32 {
                if bits & (0b100 >> col) != 0 {
                    let px = cx + col;
                    let py = y + row as u32;
                    if clip.contains_pixel(px, py) && px < img.width() && py < img.height() {
                        img.put_pixel(px, py, Rgb(color));
                    }
                }
            }
        }
        cx += 4;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::solid_assets;
    use crate::layout::{Element, ElementCategory, Layout};

    fn text(l: f64, t: f64, w: f64, h: f64) -> Element {
        Element::new(ElementCategory::text("text"), l, t, w, h).unwrap()
    }

    #[test]
    fn empty_layout_is_background() {
        let assets = solid_assets(32, 32, [10, 200, 30], None);
        let layout = Layout::new(vec![], 32, 32).unwrap();
        let out = render_layout(&assets, &layout, &RenderStyle::default()).unwrap();
        assert_eq!(out, assets.image);
    }

    #[test]
    fn opaque_full_canvas_is_category_color() {
        let assets = solid_assets(32, 32, [1, 2, 3], None);
        let layout = Layout::new(vec![text(0.0, 0.0, 1.0, 1.0)], 32, 32).unwrap();
        let style = RenderStyle {
            alpha: 1.0,
            label: false,
            ..Default::default()
        };
        let out = render_layout(&assets, &layout, &style).unwrap();
        let expected = style.category_color("text");
        for p in out.pixels() {
            assert_eq!(p.0, expected);
        }
    }

    #[test]
    fn alpha_blend_matches_per_pixel_oracle() {
        let mut bg = RgbImage::new(40, 40);
        for (x, y, p) in bg.enumerate_pixels_mut() {
            *p = Rgb([(x * 6) as u8, (y * 6) as u8, ((x + y) * 3) as u8]);
        }
        let assets = BackgroundAssets::new(bg.clone(), None).unwrap();
        let layout = Layout::new(vec![text(0.25, 0.25, 0.5, 0.5)], 40, 40).unwrap();
        let style = RenderStyle {
            border_px: 2,
            label: false,
            ..Default::default()
        };
        let out = render_layout(&assets, &layout, &style).unwrap();
        let fill = style.category_color("text");
        // interior pixels (inside border band): blended exactly
        for y in 12..28u32 {
            for x in 12..28u32 {
                let b = bg.get_pixel(x, y);
                let expect: Vec<u8> = (0..3)
                    .map(|c| {
                        (style.alpha * fill[c] as f32 + (1.0 - style.alpha) * b.0[c] as f32)
                            .round() as u8
                    })
                    .collect();
                assert_eq!(out.get_pixel(x, y).0.to_vec(), expect, "at {x},{y}");
            }
        }
        // border pixels opaque, outside untouched
        assert_eq!(out.get_pixel(10, 10).0, fill);
        assert_eq!(out.get_pixel(5, 5), bg.get_pixel(5, 5));
    }

    #[test]
    fn rendering_is_pure_and_repeatable() {
        let assets = solid_assets(24, 24, [100, 100, 100], None);
        let before = assets.image.clone();
        let layout = Layout::new(vec![text(0.1, 0.1, 0.5, 0.4)], 24, 24).unwrap();
        let style = RenderStyle::default();
        let a = render_layout(&assets, &layout, &style).unwrap();
        let b = render_layout(&assets, &layout, &style).unwrap();
        assert_eq!(a, b);
        assert_eq!(assets.image, before);
    }

    #[test]
    fn comparison_halves() {
        let assets = solid_assets(20, 20, [50, 60, 70], None);
        let style = RenderStyle::default();
        let layout = Layout::new(vec![text(0.2, 0.2, 0.4, 0.4)], 20, 20).unwrap();
        let same = render_comparison(&assets, &layout, &layout, &style).unwrap();
        assert_eq!(same.width(), 44);
        for y in 0..20 {
            for x in 0..20 {
                assert_eq!(same.get_pixel(x, y), same.get_pixel(x + 24, y));
            }
            for d in 0..style.divider_px {
                assert_eq!(same.get_pixel(20 + d, y).0, style.divider_color);
            }
        }

        let empty = Layout::new(vec![], 20, 20).unwrap();
        let mixed = render_comparison(&assets, &empty, &layout, &style).unwrap();
        for y in 0..20 {
            for x in 0..20 {
                assert_eq!(mixed.get_pixel(x, y), assets.image.get_pixel(x, y));
            }
        }
    }

    #[test]
    fn category_colors_stable() {
        let style = RenderStyle::default();
        assert_eq!(style.category_index("text"), 0);
        assert_eq!(style.category_index("underlay"), 2);
        let a = style.category_color("mystery");
        let b = style.category_color("mystery");
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let assets = solid_assets(10, 10, [0, 0, 0], None);
        let layout = Layout::new(vec![], 11, 10).unwrap();
        assert!(render_layout(&assets, &layout, &RenderStyle::default()).is_err());
    }
}
