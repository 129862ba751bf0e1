//! Canonical layout data model: categories, elements, layouts, and the
//! on-disk JSON schema.
//!
//! All geometry is stored normalized to `[0,1]` relative to the canvas;
//! pixel units appear only at rasterization boundaries (metrics, rendering).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on the far edge of an element (`l + w <= 1 + EPS_CLAMP`).
pub const EPS_CLAMP: f64 = 1e-6;

/// Decimal places kept by the canonical file format and markup.
pub const COORD_DECIMALS: usize = 4;

/// One entry of the closed per-dataset taxonomy.
///
/// `underlay` and `text` roles drive the underlay-effectiveness and
/// readability metrics; they are never both set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElementCategory {
    pub name: String,
    pub is_underlay: bool,
    pub is_text: bool,
}

impl ElementCategory {
    pub fn new(name: impl Into<String>, is_underlay: bool, is_text: bool) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidCategory("empty category name".into()));
        }
        if is_underlay && is_text {
            return Err(Error::InvalidCategory(format!(
                "{name:?} cannot be both underlay and text"
            )));
        }
        Ok(Self {
            name,
            is_underlay,
            is_text,
        })
    }

    pub fn plain(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            is_underlay: false,
            is_text: false,
        }
    }

    pub fn underlay(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            is_underlay: true,
            is_text: false,
        }
    }

    pub fn text(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            is_underlay: false,
            is_text: true,
        }
    }
}

/// Closed set of categories a corpus is allowed to use, keyed by name.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Taxonomy {
    categories: BTreeMap<String, ElementCategory>,
}

impl Taxonomy {
    pub fn new(categories: impl IntoIterator<Item = ElementCategory>) -> Self {
        Self {
            categories: categories
                .into_iter()
                .map(|c| (c.name.clone(), c))
                .collect(),
        }
    }

    /// Poster taxonomy used when a corpus does not ship its own.
    pub fn default_poster() -> Self {
        Self::new([
            ElementCategory::text("text"),
            ElementCategory::text("title"),
            ElementCategory::underlay("underlay"),
            ElementCategory::plain("logo"),
            ElementCategory::plain("image"),
            ElementCategory::plain("embellishment"),
        ])
    }

    pub fn resolve(&self, name: &str) -> Option<&ElementCategory> {
        self.categories.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&ElementCategory> {
        self.resolve(name).ok_or_else(|| Error::UnknownCategory {
            name: name.to_string(),
        })
    }

    pub fn insert(&mut self, category: ElementCategory) {
        self.categories.insert(category.name.clone(), category);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.categories.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &ElementCategory> {
        self.categories.values()
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map: BTreeMap<String, CategoryFlags> =
            serde_json::from_str(&raw).map_err(|e| Error::file(path, e.to_string()))?;
        let mut tax = Taxonomy::default();
        for (name, flags) in map {
            tax.insert(ElementCategory::new(name, flags.underlay, flags.text)?);
        }
        Ok(tax)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: BTreeMap<&str, CategoryFlags> = self
            .categories
            .values()
            .map(|c| {
                (
                    c.name.as_str(),
                    CategoryFlags {
                        underlay: c.is_underlay,
                        text: c.is_text,
                    },
                )
            })
            .collect();
        let body = serde_json::to_string_pretty(&map)?;
        std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct CategoryFlags {
    #[serde(default)]
    underlay: bool,
    #[serde(default)]
    text: bool,
}

/// One layout item: a category plus a normalized axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub category: ElementCategory,
    /// Left edge as a fraction of canvas width, in `[0,1]`.
    pub l: f64,
    /// Top edge as a fraction of canvas height, in `[0,1]`.
    pub t: f64,
    /// Width as a fraction of canvas width, in `(0,1]`.
    pub w: f64,
    /// Height as a fraction of canvas height, in `(0,1]`.
    pub h: f64,
}

impl Element {
    pub fn new(category: ElementCategory, l: f64, t: f64, w: f64, h: f64) -> Result<Self> {
        let el = Self { category, l, t, w, h };
        el.validate()?;
        Ok(el)
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, pos, size) in [("x", self.l, self.w), ("y", self.t, self.h)] {
            if !pos.is_finite() || !size.is_finite() {
                return Err(Error::InvalidElement(format!(
                    "non-finite {axis} geometry ({pos}, {size})"
                )));
            }
            if size <= 0.0 {
                return Err(Error::InvalidElement(format!(
                    "non-positive {axis} extent {size}"
                )));
            }
            if pos < 0.0 {
                return Err(Error::InvalidElement(format!(
                    "{axis} position {pos} below 0"
                )));
            }
            if pos + size > 1.0 + EPS_CLAMP {
                return Err(Error::InvalidElement(format!(
                    "{axis} span {pos}+{size} exceeds canvas"
                )));
            }
        }
        Ok(())
    }

    pub fn right(&self) -> f64 {
        self.l + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.t + self.h
    }

    pub fn center_x(&self) -> f64 {
        self.l + self.w / 2.0
    }

    pub fn center_y(&self) -> f64 {
        self.t + self.h / 2.0
    }

    /// Area in normalized canvas units.
    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Ordered list of elements on a canvas; the unit of evaluation,
/// perturbation, and refinement. Empty layouts are legal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub elements: Vec<Element>,
    pub canvas_w: u32,
    pub canvas_h: u32,
}

impl Layout {
    pub fn new(elements: Vec<Element>, canvas_w: u32, canvas_h: u32) -> Result<Self> {
        let layout = Self {
            elements,
            canvas_w,
            canvas_h,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.canvas_w == 0 || self.canvas_h == 0 {
            return Err(Error::InvalidLayout(format!(
                "canvas {}x{} must be positive",
                self.canvas_w, self.canvas_h
            )));
        }
        for (i, el) in self.elements.iter().enumerate() {
            el.validate()
                .map_err(|e| Error::InvalidLayout(format!("element {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Indices of elements whose category is an underlay.
    pub fn underlay_indices(&self) -> Vec<usize> {
        self.indices_where(|c| c.is_underlay)
    }

    /// Indices of elements whose category is not an underlay.
    pub fn non_underlay_indices(&self) -> Vec<usize> {
        self.indices_where(|c| !c.is_underlay)
    }

    /// Indices of text elements.
    pub fn text_indices(&self) -> Vec<usize> {
        self.indices_where(|c| c.is_text)
    }

    fn indices_where(&self, pred: impl Fn(&ElementCategory) -> bool) -> Vec<usize> {
        self.elements
            .iter()
            .enumerate()
            .filter(|(_, el)| pred(&el.category))
            .map(|(i, _)| i)
            .collect()
    }

    /// Canonical JSON form: category names only, coordinates rounded to
    /// [`COORD_DECIMALS`] places. Writing then reading then writing again
    /// produces identical bytes.
    pub fn to_canonical_json(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{{");
        let _ = writeln!(
            out,
            "  \"canvas\": {{\"w\": {}, \"h\": {}}},",
            self.canvas_w, self.canvas_h
        );
        if self.elements.is_empty() {
            let _ = writeln!(out, "  \"elements\": []");
        } else {
            let _ = writeln!(out, "  \"elements\": [");
            for (i, el) in self.elements.iter().enumerate() {
                let sep = if i + 1 == self.elements.len() { "" } else { "," };
                let _ = writeln!(
                    out,
                    "    {{\"category\": {}, \"l\": {:.p$}, \"t\": {:.p$}, \"w\": {:.p$}, \"h\": {:.p$}}}{sep}",
                    serde_json::to_string(&el.category.name).expect("string encodes"),
                    el.l,
                    el.t,
                    el.w,
                    el.h,
                    p = COORD_DECIMALS,
                );
            }
            let _ = writeln!(out, "  ]");
        }
        let _ = write!(out, "}}\n");
        out
    }

    /// Parse the canonical JSON form, resolving category flags through the
    /// given taxonomy.
    pub fn from_canonical_json(raw: &str, taxonomy: &Taxonomy) -> Result<Self> {
        let doc: CanonicalDoc = serde_json::from_str(raw)?;
        let mut elements = Vec::with_capacity(doc.elements.len());
        for el in doc.elements {
            let category = taxonomy.require(&el.category)?.clone();
            elements.push(Element::new(category, el.l, el.t, el.w, el.h)?);
        }
        Layout::new(elements, doc.canvas.w, doc.canvas.h)
    }

    pub fn save_canonical(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_canonical_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load_canonical(path: &Path, taxonomy: &Taxonomy) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_canonical_json(&raw, taxonomy)
            .map_err(|e| Error::file(path, e.to_string()))
    }
}

#[derive(Deserialize)]
struct CanonicalDoc {
    canvas: CanonicalCanvas,
    elements: Vec<CanonicalElement>,
}

#[derive(Deserialize)]
struct CanonicalCanvas {
    w: u32,
    h: u32,
}

#[derive(Deserialize)]
struct CanonicalElement {
    category: String,
    l: f64,
    t: f64,
    w: f64,
    h: f64,
}

/// Round a coordinate to the canonical file precision.
pub fn round_coord(v: f64) -> f64 {
    let scale = 10f64.powi(COORD_DECIMALS as i32);
    (v * scale).round() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text_el(l: f64, t: f64, w: f64, h: f64) -> Element {
        Element::new(ElementCategory::text("text"), l, t, w, h).unwrap()
    }

    #[test]
    fn category_rejects_conflicting_roles() {
        assert!(ElementCategory::new("x", true, true).is_err());
        assert!(ElementCategory::new("", false, false).is_err());
        assert!(ElementCategory::new("ok", true, false).is_ok());
    }

    #[test]
    fn element_invariants() {
        assert!(Element::new(ElementCategory::plain("a"), 0.0, 0.0, 1.0, 1.0).is_ok());
        // far edge epsilon
        assert!(Element::new(ElementCategory::plain("a"), 0.5, 0.0, 0.5 + 5e-7, 1.0).is_ok());
        assert!(Element::new(ElementCategory::plain("a"), 0.5, 0.0, 0.51, 1.0).is_err());
        assert!(Element::new(ElementCategory::plain("a"), -0.1, 0.0, 0.2, 0.2).is_err());
        assert!(Element::new(ElementCategory::plain("a"), 0.1, 0.0, 0.0, 0.2).is_err());
    }

    #[test]
    fn canonical_json_round_trips_bit_exactly() {
        let tax = Taxonomy::default_poster();
        let layout = Layout::new(
            vec![
                text_el(0.1234, 0.5, 0.25, 0.125),
                Element::new(tax.require("underlay").unwrap().clone(), 0.0, 0.0, 1.0, 0.5)
                    .unwrap(),
            ],
            640,
            480,
        )
        .unwrap();
        let json = layout.to_canonical_json();
        let back = Layout::from_canonical_json(&json, &tax).unwrap();
        assert_eq!(back, layout);
        assert_eq!(back.to_canonical_json(), json);
    }

    #[test]
    fn canonical_json_empty_layout() {
        let layout = Layout::new(vec![], 100, 200).unwrap();
        let json = layout.to_canonical_json();
        let back = Layout::from_canonical_json(&json, &Taxonomy::default_poster()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.to_canonical_json(), json);
    }

    #[test]
    fn unknown_category_is_rejected() {
        let json = r#"{"canvas": {"w": 10, "h": 10},
                       "elements": [{"category": "nope", "l": 0.1, "t": 0.1, "w": 0.2, "h": 0.2}]}"#;
        let err = Layout::from_canonical_json(json, &Taxonomy::default_poster()).unwrap_err();
        assert!(matches!(err, Error::UnknownCategory { .. }));
    }

    #[test]
    fn element_order_is_stable() {
        let tax = Taxonomy::default_poster();
        let layout = Layout::new(
            vec![
                text_el(0.5, 0.5, 0.1, 0.1),
                text_el(0.1, 0.1, 0.1, 0.1),
                text_el(0.3, 0.3, 0.1, 0.1),
            ],
            100,
            100,
        )
        .unwrap();
        let back = Layout::from_canonical_json(&layout.to_canonical_json(), &tax).unwrap();
        let lefts: Vec<f64> = back.elements.iter().map(|e| e.l).collect();
        assert_eq!(lefts, vec![0.5, 0.1, 0.3]);
    }
}
