//! Converts external dataset annotations into the canonical corpus layout
//! (one canonical JSON per sample plus `taxonomy.json` and a manifest).
//!
//! Field names vary across dataset releases, so each format carries an
//! adapter config instead of hardcoded keys. The taxonomy map is data: it
//! assigns each raw category a canonical name and its underlay/text role,
//! and samples using unmapped categories are skipped with a recorded
//! reason.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::layout::{Element, ElementCategory, Layout, Taxonomy};

/// Field names for flat box-list annotations
/// (`{"width": 513, "height": 750, "elements": [{"category": ..., "box": [l,t,w,h]}]}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxListAdapter {
    pub width_key: String,
    pub height_key: String,
    pub elements_key: String,
    pub category_key: String,
    pub box_key: String,
    /// `ltwh` or `ltrb`, in pixels.
    pub box_format: String,
}

impl Default for BoxListAdapter {
    fn default() -> Self {
        Self {
            width_key: "width".into(),
            height_key: "height".into(),
            elements_key: "elements".into(),
            category_key: "category".into(),
            box_key: "box".into(),
            box_format: "ltwh".into(),
        }
    }
}

/// Field names for layered metadata annotations. Non-geometric layer
/// attributes (fonts, colors, content) are ingested and discarded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayeredAdapter {
    pub canvas_width_key: String,
    pub canvas_height_key: String,
    pub layers_key: String,
    pub type_key: String,
    pub left_key: String,
    pub top_key: String,
    pub width_key: String,
    pub height_key: String,
}

impl Default for LayeredAdapter {
    fn default() -> Self {
        Self {
            canvas_width_key: "canvas_width".into(),
            canvas_height_key: "canvas_height".into(),
            layers_key: "layers".into(),
            type_key: "type".into(),
            left_key: "left".into(),
            top_key: "top".into(),
            width_key: "width".into(),
            height_key: "height".into(),
        }
    }
}

/// Input annotation format plus its adapter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum IngestFormat {
    BoxList(BoxListAdapter),
    CrelloLike(LayeredAdapter),
}

/// Canonical category assignment for one raw category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    #[serde(default)]
    pub underlay: bool,
    #[serde(default)]
    pub text: bool,
}

/// Raw-category to canonical-category map, stored as editable JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaxonomyMap {
    pub map: BTreeMap<String, CategorySpec>,
}

impl TaxonomyMap {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::file(path, e.to_string()))
    }

    /// The canonical taxonomy this map produces.
    pub fn taxonomy(&self) -> Result<Taxonomy> {
        let mut tax = Taxonomy::default();
        for spec in self.map.values() {
            tax.insert(ElementCategory::new(&spec.name, spec.underlay, spec.text)?);
        }
        Ok(tax)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub file: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub files_in: usize,
    pub converted: usize,
    pub skipped: Vec<SkipEntry>,
    pub category_histogram: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

fn as_f64(v: &Value, key: &str) -> Result<f64> {
    v.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Markup(format!("missing numeric field {key:?}")))
}

fn as_str<'a>(v: &'a Value, key: &str) -> Result<&'a str> {
    v.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Markup(format!("missing string field {key:?}")))
}

/// Geometry slack when normalizing real annotations; spans protruding
/// further than this fraction of the canvas make the sample invalid.
const INGEST_CLAMP_BAND: f64 = 0.02;

fn clamp_unit_span(mut pos: f64, mut size: f64) -> Option<(f64, f64)> {
    if !(pos.is_finite() && size.is_finite()) || size <= 0.0 {
        return None;
    }
    if size > 1.0 {
        if size > 1.0 + INGEST_CLAMP_BAND {
            return None;
        }
        size = 1.0;
    }
    if pos < 0.0 {
        if pos < -INGEST_CLAMP_BAND {
            return None;
        }
        pos = 0.0;
    }
    if pos + size > 1.0 {
        if pos + size - 1.0 > INGEST_CLAMP_BAND {
            return None;
        }
        pos = 1.0 - size;
    }
    Some((pos, size))
}

fn convert_sample(
    doc: &Value,
    format: &IngestFormat,
    taxonomy_map: &TaxonomyMap,
    taxonomy: &Taxonomy,
) -> Result<Layout> {
    let (canvas_w, canvas_h, raw_elements): (f64, f64, Vec<(String, f64, f64, f64, f64)>) =
        match format {
            IngestFormat::BoxList(a) => {
                let w = as_f64(doc, &a.width_key)?;
                let h = as_f64(doc, &a.height_key)?;
                let elements = doc
                    .get(&a.elements_key)
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::Markup(format!("missing array {:?}", a.elements_key)))?;
                let mut out = Vec::new();
                for el in elements {
                    let category = as_str(el, &a.category_key)?.to_string();
                    let b = el
                        .get(&a.box_key)
                        .and_then(Value::as_array)
                        .filter(|b| b.len() == 4)
                        .ok_or_else(|| {
                            Error::Markup(format!("missing 4-number box {:?}", a.box_key))
                        })?;
                    let nums: Vec<f64> = b.iter().filter_map(Value::as_f64).collect();
                    if nums.len() != 4 {
                        return Err(Error::Markup("non-numeric box entry".into()));
                    }
                    let (l, t, bw, bh) = match a.box_format.as_str() {
                        "ltwh" => (nums[0], nums[1], nums[2], nums[3]),
                        "ltrb" => (nums[0], nums[1], nums[2] - nums[0], nums[3] - nums[1]),
                        other => {
                            return Err(Error::Markup(format!("unknown box_format {other:?}")))
                        }
                    };
                    out.push((category, l, t, bw, bh));
                }
                (w, h, out)
            }
            IngestFormat::CrelloLike(a) => {
                let w = as_f64(doc, &a.canvas_width_key)?;
                let h = as_f64(doc, &a.canvas_height_key)?;
                let layers = doc
                    .get(&a.layers_key)
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::Markup(format!("missing array {:?}", a.layers_key)))?;
                let mut out = Vec::new();
                for layer in layers {
                    out.push((
                        as_str(layer, &a.type_key)?.to_string(),
                        as_f64(layer, &a.left_key)?,
                        as_f64(layer, &a.top_key)?,
                        as_f64(layer, &a.width_key)?,
                        as_f64(layer, &a.height_key)?,
                    ));
                }
                (w, h, out)
            }
        };

    if canvas_w <= 0.0 || canvas_h <= 0.0 {
        return Err(Error::Markup(format!(
            "non-positive canvas {canvas_w}x{canvas_h}"
        )));
    }

    let mut elements = Vec::new();
    for (raw_category, l, t, w, h) in raw_elements {
        let spec = taxonomy_map
            .map
            .get(&raw_category)
            .ok_or_else(|| Error::UnknownCategory { name: raw_category })?;
        let category = taxonomy.require(&spec.name)?.clone();
        let (l, w) = clamp_unit_span(l / canvas_w, w / canvas_w)
            .ok_or_else(|| Error::Markup(format!("invalid x span for {:?}", category.name)))?;
        let (t, h) = clamp_unit_span(t / canvas_h, h / canvas_h)
            .ok_or_else(|| Error::Markup(format!("invalid y span for {:?}", category.name)))?;
        elements.push(Element::new(category, l, t, w, h)?);
    }
    Layout::new(elements, canvas_w.round() as u32, canvas_h.round() as u32)
}

/// Convert a directory of annotation JSON files into a canonical corpus
/// directory. Malformed files are skipped with a per-file reason; the run
/// continues. Deterministic: files are processed in sorted order and the
/// output is byte-stable.
pub fn convert_dataset(
    input_dir: &Path,
    format: &IngestFormat,
    taxonomy_map: &TaxonomyMap,
    out_dir: &Path,
) -> Result<IngestManifest> {
    let taxonomy = taxonomy_map.taxonomy()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut files: Vec<_> = std::fs::read_dir(input_dir)
        .map_err(|e| Error::io(input_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();

    let mut manifest = IngestManifest {
        files_in: files.len(),
        ..Default::default()
    };
    for path in files {
        let fname = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let raw = match std::fs::read_to_string(&path) {
            Ok(r) => r,
            Err(e) => {
                manifest.skipped.push(SkipEntry {
                    file: fname,
                    reason: format!("read error: {e}"),
                });
                continue;
            }
        };
        let doc: Value = match serde_json::from_str(&raw) {
            Ok(d) => d,
            Err(e) => {
                manifest.skipped.push(SkipEntry {
                    file: fname,
                    reason: format!("malformed json: {e}"),
                });
                continue;
            }
        };
        let id = doc
            .get("id")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| {
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
        match convert_sample(&doc, format, taxonomy_map, &taxonomy) {
            Ok(layout) => {
                for el in &layout.elements {
                    *manifest
                        .category_histogram
                        .entry(el.category.name.clone())
                        .or_insert(0) += 1;
                }
                layout.save_canonical(&out_dir.join(format!("{id}.json")))?;
                manifest.converted += 1;
            }
            Err(Error::UnknownCategory { name }) => {
                manifest.skipped.push(SkipEntry {
                    file: fname,
                    reason: format!("unmapped category: {name}"),
                });
            }
            Err(e) => {
                manifest.skipped.push(SkipEntry {
                    file: fname,
                    reason: e.to_string(),
                });
            }
        }
    }

    taxonomy.save(&out_dir.join("taxonomy.json"))?;
    let mpath = out_dir.join("manifest.json");
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

/// One corpus entry: stable id plus the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSample {
    pub id: String,
    pub layout: Layout,
}

/// Load a canonical corpus directory (every `*.json` except the manifest
/// and taxonomy), sorted by id. Uses `taxonomy.json` from the directory
/// when present, the default poster taxonomy otherwise.
pub fn load_corpus(dir: &Path, taxonomy: Option<&Taxonomy>) -> Result<Vec<CorpusSample>> {
    let local_tax;
    let taxonomy = match taxonomy {
        Some(t) => t,
        None => {
            let tax_path = dir.join("taxonomy.json");
            local_tax = if tax_path.exists() {
                Taxonomy::load(&tax_path)?
            } else {
                Taxonomy::default_poster()
            };
            &local_tax
        }
    };
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name()
                    .is_some_and(|n| n != "manifest.json" && n != "taxonomy.json")
        })
        .collect();
    files.sort();
    let mut out = Vec::new();
    for path in files {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.push(CorpusSample {
            id,
            layout: Layout::load_canonical(&path, taxonomy)?,
        });
    }
    Ok(out)
}

/// Scenes with more elements than the threshold are the difficult split;
/// the boundary count itself is easy.
pub const DEFAULT_DIFFICULTY_THRESHOLD: usize = 8;

pub fn is_difficult(layout: &Layout, threshold: usize) -> bool {
    layout.len() > threshold
}

/// Partition a corpus into (easy, hard) by element count, preserving order.
pub fn split_by_difficulty(
    corpus: Vec<CorpusSample>,
    threshold: usize,
) -> (Vec<CorpusSample>, Vec<CorpusSample>) {
    corpus
        .into_iter()
        .partition(|s| !is_difficult(&s.layout, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taxonomy_map() -> TaxonomyMap {
        serde_json::from_value(serde_json::json!({
            "text": {"name": "text", "text": true},
            "textElement": {"name": "text", "text": true},
            "svgElement": {"name": "embellishment"},
            "underlay": {"name": "underlay", "underlay": true},
            "logo": {"name": "logo"},
        }))
        .unwrap()
    }

    fn write(dir: &Path, name: &str, body: &str) {
        std::fs::write(dir.join(name), body).unwrap();
    }

    #[test]
    fn box_list_conversion_normalizes_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "s1.json",
            r#"{"id": "s1", "width": 513, "height": 750,
                "elements": [{"category": "text", "box": [102, 75, 200, 60]},
                             {"category": "logo", "box": [10, 600, 100, 100]}]}"#,
        );
        let manifest = convert_dataset(
            dir.path(),
            &IngestFormat::BoxList(BoxListAdapter::default()),
            &taxonomy_map(),
            out.path(),
        )
        .unwrap();
        assert_eq!(manifest.converted, 1);
        assert!(manifest.skipped.is_empty());
        assert_eq!(manifest.category_histogram["text"], 1);

        let corpus = load_corpus(out.path(), None).unwrap();
        assert_eq!(corpus.len(), 1);
        let el = &corpus[0].layout.elements[0];
        assert!((el.l - 102.0 / 513.0).abs() < 1e-4);
        assert!((el.t - 0.1).abs() < 1e-4);
        assert!(el.category.is_text);
        assert_eq!(corpus[0].layout.canvas_w, 513);
    }

    #[test]
    fn ltrb_box_format() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "s1.json",
            r#"{"width": 100, "height": 100,
                "elements": [{"category": "text", "box": [10, 20, 60, 90]}]}"#,
        );
        let adapter = BoxListAdapter {
            box_format: "ltrb".into(),
            ..Default::default()
        };
        convert_dataset(
            dir.path(),
            &IngestFormat::BoxList(adapter),
            &taxonomy_map(),
            out.path(),
        )
        .unwrap();
        let corpus = load_corpus(out.path(), None).unwrap();
        let el = &corpus[0].layout.elements[0];
        assert!((el.w - 0.5).abs() < 1e-9);
        assert!((el.h - 0.7).abs() < 1e-9);
    }

    #[test]
    fn crello_like_conversion_discards_extra_attributes() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "poster.json",
            r#"{"id": "poster", "canvas_width": 500, "canvas_height": 500,
                "layers": [
                  {"type": "textElement", "left": 50, "top": 50, "width": 200, "height": 40,
                   "font": "Lato", "color": [12, 20, 200], "content": "Sale!"},
                  {"type": "svgElement", "left": 0, "top": 400, "width": 500, "height": 100}
                ]}"#,
        );
        let manifest = convert_dataset(
            dir.path(),
            &IngestFormat::CrelloLike(LayeredAdapter::default()),
            &taxonomy_map(),
            out.path(),
        )
        .unwrap();
        assert_eq!(manifest.converted, 1);
        let corpus = load_corpus(out.path(), None).unwrap();
        assert_eq!(corpus[0].layout.elements.len(), 2);
        assert_eq!(corpus[0].layout.elements[1].category.name, "embellishment");
    }

    #[test]
    fn empty_input_dir_gives_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let manifest = convert_dataset(
            dir.path(),
            &IngestFormat::BoxList(BoxListAdapter::default()),
            &taxonomy_map(),
            out.path(),
        )
        .unwrap();
        assert_eq!(manifest.files_in, 0);
        assert_eq!(manifest.converted, 0);
        assert!(load_corpus(out.path(), None).unwrap().is_empty());
    }

    #[test]
    fn unmapped_category_skips_sample_with_reason() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "bad.json",
            r#"{"width": 100, "height": 100,
                "elements": [{"category": "hologram", "box": [0, 0, 10, 10]}]}"#,
        );
        let manifest = convert_dataset(
            dir.path(),
            &IngestFormat::BoxList(BoxListAdapter::default()),
            &taxonomy_map(),
            out.path(),
        )
        .unwrap();
        assert_eq!(manifest.converted, 0);
        assert_eq!(manifest.skipped.len(), 1);
        assert_eq!(manifest.skipped[0].reason, "unmapped category: hologram");
    }

    #[test]
    fn malformed_file_skipped_run_continues() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        write(dir.path(), "a_bad.json", "{not json");
        write(
            dir.path(),
            "b_good.json",
            r#"{"width": 100, "height": 100,
                "elements": [{"category": "text", "box": [5, 5, 50, 20]}]}"#,
        );
        let manifest = convert_dataset(
            dir.path(),
            &IngestFormat::BoxList(BoxListAdapter::default()),
            &taxonomy_map(),
            out.path(),
        )
        .unwrap();
        assert_eq!(manifest.converted, 1);
        assert_eq!(manifest.skipped.len(), 1);
        assert!(manifest.skipped[0].reason.contains("malformed json"));
    }

    #[test]
    fn conversion_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "s.json",
            r#"{"width": 513, "height": 750,
                "elements": [{"category": "text", "box": [102, 75, 200, 60]}]}"#,
        );
        let fmt = IngestFormat::BoxList(BoxListAdapter::default());
        let out1 = tempfile::tempdir().unwrap();
        let out2 = tempfile::tempdir().unwrap();
        convert_dataset(dir.path(), &fmt, &taxonomy_map(), out1.path()).unwrap();
        convert_dataset(dir.path(), &fmt, &taxonomy_map(), out2.path()).unwrap();
        let a = std::fs::read(out1.path().join("s.json")).unwrap();
        let b = std::fs::read(out2.path().join("s.json")).unwrap();
        assert_eq!(a, b);

        // converting the canonical output again (as a corpus) keeps geometry
        let corpus = load_corpus(out1.path(), None).unwrap();
        let reread = Layout::from_canonical_json(
            &corpus[0].layout.to_canonical_json(),
            &taxonomy_map().taxonomy().unwrap(),
        )
        .unwrap();
        assert_eq!(reread.to_canonical_json(), corpus[0].layout.to_canonical_json());
    }

    #[test]
    fn difficulty_split_boundary() {
        let tax = Taxonomy::default_poster();
        let text = tax.require("text").unwrap().clone();
        let make = |id: &str, k: usize| {
            let elements = (0..k)
                .map(|i| {
                    Element::new(text.clone(), 0.01 + 0.002 * i as f64, 0.01, 0.05, 0.05).unwrap()
                })
                .collect();
            CorpusSample {
                id: id.into(),
                layout: Layout::new(elements, 100, 100).unwrap(),
            }
        };
        let corpus = vec![make("a", 8), make("b", 9), make("c", 0), make("d", 12)];
        let (easy, hard) = split_by_difficulty(corpus.clone(), DEFAULT_DIFFICULTY_THRESHOLD);
        assert_eq!(
            easy.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(),
            vec!["a", "c"]
        );
        assert_eq!(
            hard.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(),
            vec!["b", "d"]
        );
        assert_eq!(easy.len() + hard.len(), corpus.len());
    }
}
