//! Exact geometry primitives over normalized axis-aligned rectangles.

use crate::layout::Element;

/// Containment tolerance default: 0.5% of the canvas per side, absorbing
/// sub-pixel jitter in real annotations.
pub const DEFAULT_CONTAINMENT_TOL: f64 = 0.005;

/// Area of the rectangle intersection in normalized canvas units.
pub fn intersection_area(a: &Element, b: &Element) -> f64 {
    let ox = overlap_1d(a.l, a.right(), b.l, b.right());
    let oy = overlap_1d(a.t, a.bottom(), b.t, b.bottom());
    ox * oy
}

fn overlap_1d(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Intersection over union; 1 iff the rectangles coincide, 0 iff disjoint.
pub fn iou(a: &Element, b: &Element) -> f64 {
    let inter = intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// True iff `inner` lies within `outer` expanded by `tol` on every side.
pub fn contains(outer: &Element, inner: &Element, tol: f64) -> bool {
    inner.l >= outer.l - tol
        && inner.t >= outer.t - tol
        && inner.right() <= outer.right() + tol
        && inner.bottom() <= outer.bottom() + tol
}

/// Half-open pixel footprint `[x0,x1) x [y0,y1)` of a normalized box on a
/// `width x height` canvas. Rounding the edges keeps adjacent boxes from
/// sharing pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBox {
    pub x0: u32,
    pub x1: u32,
    pub y0: u32,
    pub y1: u32,
}

impl PixelBox {
    pub fn of(el: &Element, width: u32, height: u32) -> Self {
        let clamp_round = |v: f64, max: u32| -> u32 { (v.round().max(0.0) as u64).min(max as u64) as u32 };
        Self {
            x0: clamp_round(el.l * width as f64, width),
            x1: clamp_round(el.right() * width as f64, width),
            y0: clamp_round(el.t * height as f64, height),
            y1: clamp_round(el.bottom() * height as f64, height),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    pub fn pixel_count(&self) -> u64 {
        if self.is_empty() {
            0
        } else {
            (self.x1 - self.x0) as u64 * (self.y1 - self.y0) as u64
        }
    }

    pub fn contains_pixel(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::ElementCategory;
    use proptest::prelude::*;

    fn el(l: f64, t: f64, w: f64, h: f64) -> Element {
        Element::new(ElementCategory::plain("box"), l, t, w, h).unwrap()
    }

    #[test]
    fn self_intersection_is_own_area() {
        let a = el(0.1, 0.1, 0.4, 0.4);
        assert!((intersection_area(&a, &a) - 0.16).abs() < 1e-12);
    }

    #[test]
    fn partial_overlap_hand_geometry() {
        // overlap rect [0.3,0.5] x [0.3,0.5]
        let a = el(0.1, 0.1, 0.4, 0.4);
        let b = el(0.3, 0.3, 0.4, 0.4);
        assert!((intersection_area(&a, &b) - 0.04).abs() < 1e-12);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_rects() {
        let a = el(0.0, 0.0, 0.2, 0.2);
        let b = el(0.5, 0.5, 0.2, 0.2);
        assert_eq!(intersection_area(&a, &b), 0.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn touching_rects_do_not_intersect() {
        let a = el(0.0, 0.0, 0.5, 0.5);
        let b = el(0.5, 0.0, 0.5, 0.5);
        assert_eq!(intersection_area(&a, &b), 0.0);
    }

    #[test]
    fn identical_rects_iou_one() {
        let a = el(0.25, 0.25, 0.5, 0.25);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn containment_cases() {
        let outer = el(0.1, 0.1, 0.8, 0.8);
        let inner = el(0.2, 0.2, 0.2, 0.2);
        assert!(contains(&outer, &inner, 0.0));

        let outer = el(0.1, 0.1, 0.3, 0.3);
        let inner = el(0.35, 0.1, 0.2, 0.2); // right edge 0.55 > 0.4
        assert!(!contains(&outer, &inner, 0.0));

        let same = el(0.1, 0.1, 0.3, 0.3);
        assert!(contains(&same, &same, 0.0));
    }

    #[test]
    fn containment_tolerance_band() {
        let outer = el(0.1, 0.1, 0.3, 0.3);
        let inner = el(0.096, 0.1, 0.3, 0.3); // protrudes 0.004 left
        assert!(contains(&outer, &inner, 0.005));
        assert!(!contains(&outer, &inner, 0.003));
    }

    #[test]
    fn pixel_box_half_open_adjacent_disjoint() {
        let a = el(0.0, 0.0, 0.5, 1.0);
        let b = el(0.5, 0.0, 0.5, 1.0);
        let pa = PixelBox::of(&a, 100, 100);
        let pb = PixelBox::of(&b, 100, 100);
        assert_eq!(pa.x1, 50);
        assert_eq!(pb.x0, 50);
        assert_eq!(pa.pixel_count() + pb.pixel_count(), 100 * 100);
    }

    prop_compose! {
        fn arb_rect()(l in 0.0..0.9f64, t in 0.0..0.9f64, wf in 0.01..1.0f64, hf in 0.01..1.0f64) -> Element {
            let w = (wf * (1.0 - l)).max(1e-4);
            let h = (hf * (1.0 - t)).max(1e-4);
            el(l, t, w, h)
        }
    }

    proptest! {
        #[test]
        fn intersection_symmetric(a in arb_rect(), b in arb_rect()) {
            prop_assert!((intersection_area(&a, &b) - intersection_area(&b, &a)).abs() < 1e-15);
        }

        #[test]
        fn intersection_bounded_by_min_area(a in arb_rect(), b in arb_rect()) {
            let inter = intersection_area(&a, &b);
            prop_assert!(inter <= a.area().min(b.area()) + 1e-15);
            prop_assert!(inter >= 0.0);
        }

        #[test]
        fn iou_in_unit_interval(a in arb_rect(), b in arb_rect()) {
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }
    }
}
