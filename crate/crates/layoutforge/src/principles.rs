//! The four design principles and the deterministic evaluation report.
//!
//! 1. Elements are not overlaid.
//! 2. Non-underlay elements should be covered by the underlay.
//! 3. Elements should not cover the object in the background.
//! 4. Elements should align with each other.
//!
//! The report text is a pure function of the verdicts: identical inputs
//! produce byte-identical strings, which makes the text usable as a
//! training and inference target.

use serde::{Deserialize, Serialize};

use crate::assets::BackgroundAssets;
use crate::geometry::{contains, iou, DEFAULT_CONTAINMENT_TOL};
use crate::layout::Layout;
use crate::metrics::{nearest_axis_distances, ContentPlanes};

pub const PASS_TEXT: &str = "current layout is fine";
pub const OVERLAP_TEXT: &str = "there is element overlap in the current poster";
pub const UNDERLAY_TEXT: &str = "an underlay does not cover any element";
pub const OCCLUSION_TEXT: &str = "an element covers the object in the background";
pub const ALIGNMENT_TEXT: &str = "elements are not aligned with each other";

/// Thresholds for the four principle predicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrincipleThresholds {
    /// Maximum tolerated pairwise IoU between non-underlay elements.
    pub overlap: f64,
    /// Maximum tolerated mean saliency under an element footprint.
    pub saliency: f64,
    /// Maximum tolerated nearest-axis distance per element.
    pub align: f64,
    /// Containment tolerance for the underlay check.
    pub containment: f64,
}

impl Default for PrincipleThresholds {
    fn default() -> Self {
        Self {
            overlap: 0.0,
            saliency: 0.5,
            align: 0.02,
            containment: DEFAULT_CONTAINMENT_TOL,
        }
    }
}

/// Offending elements of one failed principle: index pairs for the overlap
/// check, plain indices elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Offenders {
    Pairs(Vec<(usize, usize)>),
    Indices(Vec<usize>),
}

impl Offenders {
    pub fn is_empty(&self) -> bool {
        match self {
            Offenders::Pairs(v) => v.is_empty(),
            Offenders::Indices(v) => v.is_empty(),
        }
    }

    fn bracketed(&self) -> String {
        let items: Vec<String> = match self {
            Offenders::Pairs(v) => v.iter().map(|(a, b)| format!("({a},{b})")).collect(),
            Offenders::Indices(v) => v.iter().map(|i| i.to_string()).collect(),
        };
        format!("[{}]", items.join(", "))
    }
}

/// Outcome of one principle check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipleVerdict {
    /// 1..=4, matching the principle order above.
    pub principle: u8,
    pub passed: bool,
    pub offenders: Offenders,
    /// The scalar that triggered the verdict (worst IoU, uncovered-underlay
    /// fraction, worst mean saliency, worst nearest-axis distance).
    pub measure: f64,
    /// True when the check could not run (no saliency map) and the
    /// principle passed vacuously.
    pub skipped: bool,
}

/// The four verdicts in principle order plus the canonical report text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub verdicts: Vec<PrincipleVerdict>,
    pub text: String,
}

impl EvaluationReport {
    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn first_failed(&self) -> Option<&PrincipleVerdict> {
        self.verdicts.iter().find(|v| !v.passed)
    }
}

/// Canonical report text for a verdict set: one fixed sentence per failed
/// principle, in principle order, each followed by its offender list;
/// [`PASS_TEXT`] when everything passed.
pub fn report_text(verdicts: &[PrincipleVerdict]) -> String {
    let mut parts = Vec::new();
    for v in verdicts {
        if v.passed {
            continue;
        }
        let sentence = match v.principle {
            1 => OVERLAP_TEXT,
            2 => UNDERLAY_TEXT,
            3 => OCCLUSION_TEXT,
            4 => ALIGNMENT_TEXT,
            _ => unreachable!("principle ids are 1..=4"),
        };
        parts.push(format!("{sentence} {}", v.offenders.bracketed()));
    }
    if parts.is_empty() {
        PASS_TEXT.to_string()
    } else {
        parts.join("; ")
    }
}

/// Evaluate all four principles. The saliency check degrades to a flagged
/// pass when no saliency map is available.
pub fn evaluate_principles(
    layout: &Layout,
    assets: Option<&BackgroundAssets>,
    thresholds: &PrincipleThresholds,
) -> EvaluationReport {
    let planes = assets.map(ContentPlanes::new);
    evaluate_principles_with(layout, planes.as_ref(), thresholds)
}

/// Same as [`evaluate_principles`] but reusing precomputed content planes.
pub fn evaluate_principles_with(
    layout: &Layout,
    planes: Option<&ContentPlanes>,
    thresholds: &PrincipleThresholds,
) -> EvaluationReport {
    let verdicts = vec![
        check_overlap(layout, thresholds),
        check_underlay_coverage(layout, thresholds),
        check_background_occlusion(layout, planes, thresholds),
        check_alignment(layout, thresholds),
    ];
    let text = report_text(&verdicts);
    EvaluationReport { verdicts, text }
}

fn check_overlap(layout: &Layout, th: &PrincipleThresholds) -> PrincipleVerdict {
    let idx = layout.non_underlay_indices();
    let mut offenders = Vec::new();
    let mut worst: f64 = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let v = iou(&layout.elements[i], &layout.elements[j]);
            worst = worst.max(v);
            if v > th.overlap {
                offenders.push((i, j));
            }
        }
    }
    PrincipleVerdict {
        principle: 1,
        passed: offenders.is_empty(),
        offenders: Offenders::Pairs(offenders),
        measure: worst,
        skipped: false,
    }
}

fn check_underlay_coverage(layout: &Layout, th: &PrincipleThresholds) -> PrincipleVerdict {
    let underlays = layout.underlay_indices();
    let others = layout.non_underlay_indices();
    let mut offenders = Vec::new();
    for &u in &underlays {
        let covered = others
            .iter()
            .any(|&e| contains(&layout.elements[u], &layout.elements[e], th.containment));
        if !covered {
            offenders.push(u);
        }
    }
    let measure = if underlays.is_empty() {
        0.0
    } else {
        offenders.len() as f64 / underlays.len() as f64
    };
    PrincipleVerdict {
        principle: 2,
        passed: offenders.is_empty(),
        offenders: Offenders::Indices(offenders),
        measure,
        skipped: false,
    }
}

fn check_background_occlusion(
    layout: &Layout,
    planes: Option<&ContentPlanes>,
    th: &PrincipleThresholds,
) -> PrincipleVerdict {
    let usable = planes.filter(|p| {
        p.has_saliency() && (p.width(), p.height()) == (layout.canvas_w, layout.canvas_h)
    });
    let Some(planes) = usable else {
        return PrincipleVerdict {
            principle: 3,
            passed: true,
            offenders: Offenders::Indices(vec![]),
            measure: 0.0,
            skipped: true,
        };
    };
    let mut offenders = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, el) in layout.elements.iter().enumerate() {
        if let Some(mean) = planes.mean_saliency(el) {
            worst = worst.max(mean);
            if mean > th.saliency {
                offenders.push(i);
            }
        }
    }
    PrincipleVerdict {
        principle: 3,
        passed: offenders.is_empty(),
        offenders: Offenders::Indices(offenders),
        measure: worst,
        skipped: false,
    }
}

fn check_alignment(layout: &Layout, th: &PrincipleThresholds) -> PrincipleVerdict {
    let mut offenders = Vec::new();
    let mut worst: f64 = 0.0;
    if layout.len() >= 2 {
        // Underlays back whole content groups and are not expected to sit
        // on the alignment grid, so only non-underlay elements can offend.
        // Their distances are still measured against every element.
        let distances = nearest_axis_distances(layout);
        for i in layout.non_underlay_indices() {
            let d = distances[i];
            worst = worst.max(d);
            if d > th.align {
                offenders.push(i);
            }
        }
    }
    PrincipleVerdict {
        principle: 4,
        passed: offenders.is_empty(),
        offenders: Offenders::Indices(offenders),
        measure: worst,
        skipped: false,
    }
}

/// Partition a corpus into principle-clean layouts and removed layouts
/// carrying their failing report. Order-preserving.
pub fn prune_by_principles(
    corpus: &[(Layout, Option<&BackgroundAssets>)],
    thresholds: &PrincipleThresholds,
) -> (Vec<Layout>, Vec<(Layout, EvaluationReport)>) {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (layout, assets) in corpus {
        let report = evaluate_principles(layout, *assets, thresholds);
        if report.all_passed() {
            kept.push(layout.clone());
        } else {
            removed.push((layout.clone(), report));
        }
    }
    (kept, removed)
}
