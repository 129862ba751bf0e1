//! Rule-based layout metrics and the composite violation score.
//!
//! Graphic metrics (`ali`, `ove`, `und_l`, `und_s`) depend only on the
//! layout; content metrics (`read`, `occ`) also need the background image
//! and saliency map. Metrics that have no measurable subject (no
//! underlays, no text elements, empty layout) are undefined rather than
//! zero, and corpus averages skip them.

use serde::{Deserialize, Serialize};

use crate::assets::BackgroundAssets;
use crate::error::{Error, Result};
use crate::geometry::{contains, intersection_area, iou, PixelBox};
use crate::layout::{Element, Layout};

/// The six rule-based scores plus the scalar composite used for
/// accept-if-better search and best-of-k selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub ali: f64,
    pub ove: f64,
    pub und_l: Option<f64>,
    pub und_s: Option<f64>,
    pub read: Option<f64>,
    pub occ: Option<f64>,
    pub composite: f64,
}

/// Non-negative weights aggregating the metrics into one violation score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeWeights {
    pub ove: f64,
    pub und: f64,
    pub occ: f64,
    pub ali: f64,
    pub read: f64,
    /// Alignment saturates at this value before weighting.
    pub ali_cap: f64,
}

impl Default for CompositeWeights {
    fn default() -> Self {
        Self {
            ove: 1.0,
            und: 1.0,
            occ: 0.5,
            ali: 0.5,
            read: 0.25,
            ali_cap: 0.05,
        }
    }
}

/// The six axis values of an element used by the alignment metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    Left,
    CenterX,
    Right,
    Top,
    CenterY,
    Bottom,
}

pub const AXES: [Axis; 6] = [
    Axis::Left,
    Axis::CenterX,
    Axis::Right,
    Axis::Top,
    Axis::CenterY,
    Axis::Bottom,
];

impl Axis {
    pub fn value(self, el: &Element) -> f64 {
        match self {
            Axis::Left => el.l,
            Axis::CenterX => el.center_x(),
            Axis::Right => el.right(),
            Axis::Top => el.t,
            Axis::CenterY => el.center_y(),
            Axis::Bottom => el.bottom(),
        }
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, Axis::Left | Axis::CenterX | Axis::Right)
    }
}

/// Distance from element `i` to its nearest alignment line: the minimum
/// over other elements and the six axes of the same-axis difference.
/// Returns the achieving axis and neighbor as well.
pub fn nearest_axis(layout: &Layout, i: usize) -> Option<(Axis, usize, f64)> {
    let el = layout.elements.get(i)?;
    let mut best: Option<(Axis, usize, f64)> = None;
    for (j, other) in layout.elements.iter().enumerate() {
        if j == i {
            continue;
        }
        for axis in AXES {
            let d = (axis.value(el) - axis.value(other)).abs();
            // Near-ties keep the earlier (neighbor, axis) so float noise in
            // derived axes (right edge, center) cannot flip the choice.
            if best.map_or(true, |(_, _, bd)| d < bd - 1e-12) {
                best = Some((axis, j, d));
            }
        }
    }
    best
}

/// Per-element nearest-axis distances; empty for layouts with fewer than
/// two elements.
pub fn nearest_axis_distances(layout: &Layout) -> Vec<f64> {
    if layout.len() < 2 {
        return vec![0.0; layout.len()];
    }
    (0..layout.len())
        .map(|i| nearest_axis(layout, i).map_or(0.0, |(_, _, d)| d))
        .collect()
}

/// Mean nearest-axis distance over all elements; 0 for k <= 1.
pub fn alignment(layout: &Layout) -> f64 {
    if layout.len() <= 1 {
        return 0.0;
    }
    let dists = nearest_axis_distances(layout);
    dists.iter().sum::<f64>() / dists.len() as f64
}

/// Mean pairwise IoU over non-underlay elements; 0 with fewer than two.
pub fn overlay(layout: &Layout) -> f64 {
    let idx = layout.non_underlay_indices();
    if idx.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            total += iou(&layout.elements[i], &layout.elements[j]);
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Loose and strict underlay effectiveness.
///
/// Per underlay: loose is the best coverage ratio of any non-underlay
/// element; strict is 1 iff some non-underlay element is contained within
/// tolerance. An element contained within tolerance counts as fully
/// covered, so strict never exceeds loose. Layouts without underlays have
/// neither defined.
pub fn underlay_effectiveness(layout: &Layout, tol: f64) -> (Option<f64>, Option<f64>) {
    let underlays = layout.underlay_indices();
    if underlays.is_empty() {
        return (None, None);
    }
    let others = layout.non_underlay_indices();
    let mut loose_sum = 0.0;
    let mut strict_sum = 0.0;
    for &u in &underlays {
        let under = &layout.elements[u];
        let mut loose: f64 = 0.0;
        let mut strict = 0.0;
        for &e in &others {
            let el = &layout.elements[e];
            loose = loose.max(intersection_area(under, el) / el.area());
            if contains(under, el, tol) {
                strict = 1.0;
            }
        }
        loose_sum += loose.max(strict);
        strict_sum += strict;
    }
    let n = underlays.len() as f64;
    (Some(loose_sum / n), Some(strict_sum / n))
}

/// Rec. 601 luminance plane in `[0,1]`.
pub fn luminance_plane(image: &image::RgbImage) -> Vec<f32> {
    image
        .pixels()
        .map(|p| (0.299 * p.0[0] as f32 + 0.587 * p.0[1] as f32 + 0.114 * p.0[2] as f32) / 255.0)
        .collect()
}

/// 3x3 Sobel gradient magnitude, normalized by 4 and clamped to `[0,1]`.
/// Borders replicate the edge pixel, so a uniform image is zero everywhere.
pub fn sobel_magnitude(luma: &[f32], width: u32, height: u32) -> Vec<f32> {
    assert_eq!(luma.len(), (width as usize) * (height as usize));
    let w = width as i64;
    let h = height as i64;
    let at = |x: i64, y: i64| -> f32 {
        let cx = x.clamp(0, w - 1) as usize;
        let cy = y.clamp(0, h - 1) as usize;
        luma[cy * w as usize + cx]
    };
    let mut out = vec![0.0f32; luma.len()];
    for y in 0..h {
        for x in 0..w {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let g = (gx * gx + gy * gy).sqrt() / 4.0;
            out[y as usize * w as usize + x as usize] = g.min(1.0);
        }
    }
    out
}

/// Summed-area table over a scalar plane; box sums in O(1).
#[derive(Debug, Clone)]
pub struct IntegralPlane {
    width: u32,
    height: u32,
    table: Vec<f64>,
}

impl IntegralPlane {
    pub fn new(plane: &[f32], width: u32, height: u32) -> Self {
        let (w, h) = (width as usize, height as usize);
        assert_eq!(plane.len(), w * h);
        let mut table = vec![0.0f64; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0f64;
            for x in 0..w {
                row += plane[y * w + x] as f64;
                table[(y + 1) * (w + 1) + (x + 1)] = table[y * (w + 1) + (x + 1)] + row;
            }
        }
        Self {
            width,
            height,
            table,
        }
    }

    pub fn sum(&self, b: PixelBox) -> f64 {
        if b.is_empty() {
            return 0.0;
        }
        let w1 = self.width as usize + 1;
        let (x0, x1, y0, y1) = (b.x0 as usize, b.x1 as usize, b.y0 as usize, b.y1 as usize);
        self.table[y1 * w1 + x1] - self.table[y0 * w1 + x1] - self.table[y1 * w1 + x0]
            + self.table[y0 * w1 + x0]
    }

    /// Mean over a footprint; None if the footprint has no pixels.
    pub fn mean(&self, b: PixelBox) -> Option<f64> {
        let n = b.pixel_count();
        if n == 0 {
            None
        } else {
            Some(self.sum(b) / n as f64)
        }
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

/// Precomputed per-asset planes so repeated metric evaluation against the
/// same background (as the refiner does) stays cheap.
#[derive(Debug, Clone)]
pub struct ContentPlanes {
    width: u32,
    height: u32,
    gradient: IntegralPlane,
    saliency_raw: Option<Vec<f32>>,
    saliency: Option<IntegralPlane>,
}

impl ContentPlanes {
    pub fn new(assets: &BackgroundAssets) -> Self {
        let (w, h) = assets.image.dimensions();
        let luma = luminance_plane(&assets.image);
        let grad = sobel_magnitude(&luma, w, h);
        let saliency_raw: Option<Vec<f32>> = assets
            .saliency
            .as_ref()
            .map(|s| s.pixels().map(|p| p.0[0] as f32 / 255.0).collect());
        let saliency = saliency_raw.as_ref().map(|p| IntegralPlane::new(p, w, h));
        Self {
            width: w,
            height: h,
            gradient: IntegralPlane::new(&grad, w, h),
            saliency_raw,
            saliency,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn has_saliency(&self) -> bool {
        self.saliency.is_some()
    }

    fn check_canvas(&self, layout: &Layout) -> Result<()> {
        if (layout.canvas_w, layout.canvas_h) != (self.width, self.height) {
            return Err(Error::AssetDimensionsMismatch {
                canvas_w: layout.canvas_w,
                canvas_h: layout.canvas_h,
                asset_w: self.width,
                asset_h: self.height,
            });
        }
        Ok(())
    }

    /// Mean gradient magnitude over one element; None for empty footprints.
    pub fn mean_gradient(&self, el: &Element) -> Option<f64> {
        self.gradient.mean(PixelBox::of(el, self.width, self.height))
    }

    /// Mean saliency over one element; None without a saliency map or for
    /// empty footprints.
    pub fn mean_saliency(&self, el: &Element) -> Option<f64> {
        self.saliency
            .as_ref()
            .and_then(|s| s.mean(PixelBox::of(el, self.width, self.height)))
    }

    /// Mean saliency over an arbitrary pixel box.
    pub fn mean_saliency_box(&self, b: PixelBox) -> Option<f64> {
        self.saliency.as_ref().and_then(|s| s.mean(b))
    }

    /// Mean saliency over the pixel union of all element footprints.
    fn union_mean_saliency(&self, layout: &Layout) -> Result<Option<f64>> {
        let raw = self.saliency_raw.as_ref().ok_or(Error::SaliencyRequired)?;
        if layout.is_empty() {
            return Ok(None);
        }
        let w = self.width as usize;
        let mut mask = vec![false; raw.len()];
        for el in &layout.elements {
            let b = PixelBox::of(el, self.width, self.height);
            for y in b.y0..b.y1 {
                let row = y as usize * w;
                mask[row + b.x0 as usize..row + b.x1 as usize].fill(true);
            }
        }
        let mut sum = 0.0f64;
        let mut count = 0u64;
        for (m, v) in mask.iter().zip(raw) {
            if *m {
                sum += *v as f64;
                count += 1;
            }
        }
        // A non-empty layout whose footprints rasterize to zero pixels
        // covers nothing.
        if count == 0 {
            return Ok(Some(0.0));
        }
        Ok(Some(sum / count as f64))
    }
}

/// Mean Sobel gradient under text elements; None when the layout has no
/// text elements with a non-empty footprint.
pub fn readability(layout: &Layout, assets: &BackgroundAssets) -> Result<Option<f64>> {
    assets.check_canvas(layout)?;
    readability_with(layout, &ContentPlanes::new(assets))
}

pub fn readability_with(layout: &Layout, planes: &ContentPlanes) -> Result<Option<f64>> {
    planes.check_canvas(layout)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for &i in &layout.text_indices() {
        if let Some(g) = planes.mean_gradient(&layout.elements[i]) {
            sum += g;
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Mean saliency over the union of all element footprints; None for empty
/// layouts. Requires a saliency map.
pub fn occlusion(layout: &Layout, assets: &BackgroundAssets) -> Result<Option<f64>> {
    if assets.saliency.is_none() {
        return Err(Error::SaliencyRequired);
    }
    assets.check_canvas(layout)?;
    ContentPlanes::new(assets).union_mean_saliency(layout)
}

pub fn occlusion_with(layout: &Layout, planes: &ContentPlanes) -> Result<Option<f64>> {
    planes.check_canvas(layout)?;
    planes.union_mean_saliency(layout)
}

/// Aggregate violation score: higher is worse, 0 is clean.
///
/// Undefined strict underlay effectiveness incurs no penalty; undefined
/// read/occ contribute zero.
pub fn composite_score(
    ali: f64,
    ove: f64,
    und_s: Option<f64>,
    read: Option<f64>,
    occ: Option<f64>,
    weights: &CompositeWeights,
) -> f64 {
    let ali_term = if weights.ali_cap > 0.0 {
        (ali / weights.ali_cap).min(1.0)
    } else if ali > 0.0 {
        1.0
    } else {
        0.0
    };
    weights.ove * ove
        + weights.und * (1.0 - und_s.unwrap_or(1.0))
        + weights.occ * occ.unwrap_or(0.0)
        + weights.ali * ali_term
        + weights.read * read.unwrap_or(0.0)
}

impl MetricVector {
    /// Evaluate every metric at once. Content metrics are left undefined
    /// when the corresponding asset is unavailable.
    pub fn compute(
        layout: &Layout,
        planes: Option<&ContentPlanes>,
        containment_tol: f64,
        weights: &CompositeWeights,
    ) -> Result<Self> {
        let ali = alignment(layout);
        let ove = overlay(layout);
        let (und_l, und_s) = underlay_effectiveness(layout, containment_tol);
        let (read, occ) = match planes {
            Some(p) => {
                let read = readability_with(layout, p)?;
                let occ = if p.has_saliency() {
                    occlusion_with(layout, p)?
                } else {
                    None
                };
                (read, occ)
            }
            None => (None, None),
        };
        let composite = composite_score(ali, ove, und_s, read, occ, weights);
        Ok(Self {
            ali,
            ove,
            und_l,
            und_s,
            read,
            occ,
            composite,
        })
    }
}

/// Corpus-level means; undefined samples are skipped per metric and the
/// defined counts reported alongside.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub samples: usize,
    pub ali: f64,
    pub ove: f64,
    pub composite: f64,
    pub und_l: Option<f64>,
    pub und_s: Option<f64>,
    pub read: Option<f64>,
    pub occ: Option<f64>,
    pub und_defined: usize,
    pub read_defined: usize,
    pub occ_defined: usize,
}

impl MetricSummary {
    pub fn from_vectors<'a>(vectors: impl IntoIterator<Item = &'a MetricVector>) -> Self {
        let mut out = MetricSummary::default();
        let mut und_l_sum = 0.0;
        let mut und_s_sum = 0.0;
        let mut read_sum = 0.0;
        let mut occ_sum = 0.0;
        for m in vectors {
            out.samples += 1;
            out.ali += m.ali;
            out.ove += m.ove;
            out.composite += m.composite;
            if let (Some(l), Some(s)) = (m.und_l, m.und_s) {
                und_l_sum += l;
                und_s_sum += s;
                out.und_defined += 1;
            }
            if let Some(r) = m.read {
                read_sum += r;
                out.read_defined += 1;
            }
            if let Some(o) = m.occ {
                occ_sum += o;
                out.occ_defined += 1;
            }
        }
        if out.samples > 0 {
            let n = out.samples as f64;
            out.ali /= n;
            out.ove /= n;
            out.composite /= n;
        }
        if out.und_defined > 0 {
            out.und_l = Some(und_l_sum / out.und_defined as f64);
            out.und_s = Some(und_s_sum / out.und_defined as f64);
        }
        if out.read_defined > 0 {
            out.read = Some(read_sum / out.read_defined as f64);
        }
        if out.occ_defined > 0 {
            out.occ = Some(occ_sum / out.occ_defined as f64);
        }
        out
    }
}
