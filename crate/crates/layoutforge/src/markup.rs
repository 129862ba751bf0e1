//! HTML-like layout markup for exchanging layouts with text-completion
//! backends.
//!
//! One self-closing `<el/>` tag per element inside a `<layout>` wrapper,
//! coordinates at 4 decimal places:
//!
//! ```text
//! <layout canvas_w="640" canvas_h="480">
//!   <el class="text" l="0.1000" t="0.2000" w="0.3000" h="0.0500"/>
//! </layout>
//! ```
//!
//! Parsing is tolerant: surrounding prose is ignored, attribute order and
//! whitespace are free, and coordinates slightly outside the legal range
//! are clamped with a recorded warning.

use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::layout::{Element, Layout, Taxonomy, COORD_DECIMALS};

/// Coordinates may protrude at most this far outside `[0,1]` before the
/// tag is rejected instead of clamped.
pub const CLAMP_BAND: f64 = 0.02;

/// Serialize a layout to markup. Lossless through [`markup_to_layout`] at
/// the canonical 4-decimal precision.
pub fn layout_to_markup(layout: &Layout) -> String {
    let mut out = format!(
        "<layout canvas_w=\"{}\" canvas_h=\"{}\">",
        layout.canvas_w, layout.canvas_h
    );
    for el in &layout.elements {
        let _ = write!(
            out,
            "\n  <el class=\"{}\" l=\"{:.p$}\" t=\"{:.p$}\" w=\"{:.p$}\" h=\"{:.p$}\"/>",
            el.category.name,
            el.l,
            el.t,
            el.w,
            el.h,
            p = COORD_DECIMALS,
        );
    }
    if layout.is_empty() {
        out.push_str("</layout>");
    } else {
        out.push_str("\n</layout>");
    }
    out
}

/// A parsed layout plus any clamp warnings produced along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMarkup {
    pub layout: Layout,
    pub warnings: Vec<String>,
}

fn layout_open_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<layout\b[^>]*>").expect("static regex"))
}

fn el_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<el\b[^>]*/?>").expect("static regex"))
}

fn attr_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"([a-zA-Z_][a-zA-Z0-9_]*)\s*=\s*"([^"]*)""#).expect("static regex"))
}

fn attrs_of(tag: &str) -> Vec<(String, String)> {
    attr_re()
        .captures_iter(tag)
        .map(|c| (c[1].to_string(), c[2].to_string()))
        .collect()
}

fn attr<'a>(attrs: &'a [(String, String)], name: &str) -> Option<&'a str> {
    attrs
        .iter()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v.as_str())
}

fn parse_num(attrs: &[(String, String)], name: &str, tag: &str) -> Result<f64> {
    let raw = attr(attrs, name)
        .ok_or_else(|| Error::Markup(format!("missing attribute {name:?} in {tag}")))?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| Error::Markup(format!("bad number {raw:?} for {name:?} in {tag}")))
}

/// Clamp a 1-D span into `[0,1]` when inside the clamp band; error when the
/// protrusion exceeds it.
fn clamp_span(
    mut pos: f64,
    mut size: f64,
    axis: &str,
    tag: &str,
    warnings: &mut Vec<String>,
) -> Result<(f64, f64)> {
    if size <= 0.0 {
        return Err(Error::Markup(format!(
            "non-positive {axis} extent {size} in {tag}"
        )));
    }
    if size > 1.0 {
        if size > 1.0 + CLAMP_BAND {
            return Err(Error::Markup(format!(
                "{axis} extent {size} exceeds canvas beyond clamp band in {tag}"
            )));
        }
        warnings.push(format!("clamped {axis} extent {size} to 1 in {tag}"));
        size = 1.0;
    }
    if pos < 0.0 {
        if pos < -CLAMP_BAND {
            return Err(Error::Markup(format!(
                "{axis} position {pos} below 0 beyond clamp band in {tag}"
            )));
        }
        warnings.push(format!("clamped {axis} position {pos} to 0 in {tag}"));
        pos = 0.0;
    }
    let overshoot = pos + size - 1.0;
    if overshoot > 0.0 {
        if overshoot > CLAMP_BAND {
            return Err(Error::Markup(format!(
                "{axis} span {pos}+{size} exceeds canvas by {overshoot:.4} in {tag}"
            )));
        }
        warnings.push(format!(
            "clamped {axis} position {pos} to {:.4} in {tag}",
            1.0 - size
        ));
        pos = 1.0 - size;
    }
    Ok((pos, size))
}

/// Extract the first well-formed `<layout>` block from free text and parse
/// it, resolving categories through the taxonomy.
pub fn markup_to_layout(text: &str, taxonomy: &Taxonomy) -> Result<ParsedMarkup> {
    let open = layout_open_re().find(text).ok_or(Error::NoLayoutFound)?;
    let open_attrs = attrs_of(open.as_str());
    let canvas_w = parse_num(&open_attrs, "canvas_w", open.as_str())? as u32;
    let canvas_h = parse_num(&open_attrs, "canvas_h", open.as_str())? as u32;
    let rest = &text[open.end()..];
    let close = rest
        .find("</layout>")
        .ok_or_else(|| Error::Markup("unterminated <layout> block".into()))?;
    let body = &rest[..close];

    let mut warnings = Vec::new();
    let mut elements = Vec::new();
    for tag_match in el_re().find_iter(body) {
        let tag = tag_match.as_str();
        let attrs = attrs_of(tag);
        let class = attr(&attrs, "class")
            .ok_or_else(|| Error::Markup(format!("missing attribute \"class\" in {tag}")))?;
        let category = taxonomy.require(class)?.clone();
        let l = parse_num(&attrs, "l", tag)?;
        let t = parse_num(&attrs, "t", tag)?;
        let w = parse_num(&attrs, "w", tag)?;
        let h = parse_num(&attrs, "h", tag)?;
        let (l, w) = clamp_span(l, w, "x", tag, &mut warnings)?;
        let (t, h) = clamp_span(t, h, "y", tag, &mut warnings)?;
        elements.push(
            Element::new(category, l, t, w, h)
                .map_err(|e| Error::Markup(format!("{e} in {tag}")))?,
        );
    }
    let layout = Layout::new(elements, canvas_w, canvas_h)
        .map_err(|e| Error::Markup(e.to_string()))?;
    Ok(ParsedMarkup { layout, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{round_coord, ElementCategory};
    use rand::{Rng, SeedableRng};

    fn taxonomy() -> Taxonomy {
        Taxonomy::default_poster()
    }

    fn text_el(l: f64, t: f64, w: f64, h: f64) -> Element {
        Element::new(ElementCategory::text("text"), l, t, w, h).unwrap()
    }

    #[test]
    fn empty_layout_markup() {
        let layout = Layout::new(vec![], 800, 600).unwrap();
        let markup = layout_to_markup(&layout);
        assert_eq!(markup, "<layout canvas_w=\"800\" canvas_h=\"600\"></layout>");
        let parsed = markup_to_layout(&markup, &taxonomy()).unwrap();
        assert_eq!(parsed.layout, layout);
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn single_element_has_four_decimals() {
        let layout = Layout::new(vec![text_el(0.1, 0.25, 0.5, 0.125)], 640, 480).unwrap();
        let markup = layout_to_markup(&layout);
        assert!(markup.contains("l=\"0.1000\""));
        assert!(markup.contains("h=\"0.1250\""));
        let parsed = markup_to_layout(&markup, &taxonomy()).unwrap();
        assert_eq!(parsed.layout, layout);
    }

    #[test]
    fn round_trip_random_layouts() {
        let tax = taxonomy();
        let names: Vec<&str> = tax.names().collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..1000 {
            let k = rng.random_range(0..=8);
            let mut elements = Vec::new();
            for _ in 0..k {
                let name = names[rng.random_range(0..names.len())];
                let l = round_coord(rng.random_range(0.0..0.9));
                let t = round_coord(rng.random_range(0.0..0.9));
                let w = round_coord(rng.random_range(0.0001..(1.0 - l)).max(0.0001));
                let h = round_coord(rng.random_range(0.0001..(1.0 - t)).max(0.0001));
                if w <= 0.0 || h <= 0.0 {
                    continue;
                }
                elements.push(
                    Element::new(tax.require(name).unwrap().clone(), l, t, w, h).unwrap(),
                );
            }
            let layout = Layout::new(elements, 1024, 768).unwrap();
            let parsed = markup_to_layout(&layout_to_markup(&layout), &tax).unwrap();
            assert_eq!(parsed.layout, layout);
        }
    }

    #[test]
    fn extracts_block_from_prose() {
        let markup = "Sure! Here is the refined layout you asked for:\n\n\
                      <layout canvas_w=\"100\" canvas_h=\"100\">\n\
                      <el class=\"text\" l=\"0.1000\" t=\"0.1000\" w=\"0.2000\" h=\"0.2000\"/>\n\
                      </layout>\n\nLet me know if you need anything else.";
        let parsed = markup_to_layout(markup, &taxonomy()).unwrap();
        assert_eq!(parsed.layout.len(), 1);
        assert_eq!(parsed.layout.canvas_w, 100);
    }

    #[test]
    fn attribute_order_and_whitespace_tolerated() {
        let markup = "<layout canvas_h=\"50\"  canvas_w=\"80\">\
                      <el h=\"0.2000\" w=\"0.2000\" t = \"0.3000\" class=\"logo\" l=\"0.0000\" />\
                      </layout>";
        let parsed = markup_to_layout(markup, &taxonomy()).unwrap();
        assert_eq!(parsed.layout.canvas_w, 80);
        assert_eq!(parsed.layout.canvas_h, 50);
        assert_eq!(parsed.layout.elements[0].category.name, "logo");
        assert_eq!(parsed.layout.elements[0].t, 0.3);
    }

    #[test]
    fn clamps_within_band_with_warning() {
        // right edge at 1.01: overshoot 0.01 within the 0.02 band
        let markup = "<layout canvas_w=\"100\" canvas_h=\"100\">\
                      <el class=\"text\" l=\"0.9600\" t=\"-0.0100\" w=\"0.0500\" h=\"0.2000\"/>\
                      </layout>";
        let parsed = markup_to_layout(markup, &taxonomy()).unwrap();
        let el = &parsed.layout.elements[0];
        assert!((el.l - 0.95).abs() < 1e-12);
        assert_eq!(el.t, 0.0);
        assert_eq!(parsed.warnings.len(), 2);
    }

    #[test]
    fn rejects_beyond_clamp_band() {
        // l + w = 1.06: overshoot 0.06 > 0.02
        let markup = "<layout canvas_w=\"100\" canvas_h=\"100\">\
                      <el class=\"text\" l=\"1.0100\" t=\"0.1000\" w=\"0.0500\" h=\"0.2000\"/>\
                      </layout>";
        let err = markup_to_layout(markup, &taxonomy()).unwrap_err();
        assert!(matches!(err, Error::Markup(_)), "{err}");
        assert!(err.to_string().contains("<el"));
    }

    #[test]
    fn no_layout_block_errors() {
        assert!(matches!(
            markup_to_layout("there is no markup here", &taxonomy()),
            Err(Error::NoLayoutFound)
        ));
        assert!(matches!(
            markup_to_layout("<layout canvas_w=\"10\" canvas_h=\"10\"> unterminated", &taxonomy()),
            Err(Error::Markup(_))
        ));
    }

    #[test]
    fn unknown_class_rejected() {
        let markup = "<layout canvas_w=\"100\" canvas_h=\"100\">\
                      <el class=\"wat\" l=\"0.1000\" t=\"0.1000\" w=\"0.2000\" h=\"0.2000\"/>\
                      </layout>";
        assert!(matches!(
            markup_to_layout(markup, &taxonomy()),
            Err(Error::UnknownCategory { .. })
        ));
    }

    #[test]
    fn first_block_wins() {
        let markup = "<layout canvas_w=\"10\" canvas_h=\"10\"></layout>\
                      <layout canvas_w=\"99\" canvas_h=\"99\"></layout>";
        let parsed = markup_to_layout(markup, &taxonomy()).unwrap();
        assert_eq!(parsed.layout.canvas_w, 10);
    }
}
