//! Initial layout estimation: the pluggable interface plus a heuristic
//! column placer used when no external model is configured.

use std::sync::Arc;

use crate::assets::BackgroundAssets;
use crate::error::{Error, Result};
use crate::layout::{Element, ElementCategory, Layout, Taxonomy};
use crate::llm::{estimate_via_llm, CategoryConstraint, ChatTransport, EndpointConfig, PromptTemplate};
use crate::metrics::ContentPlanes;

/// Produces an initial layout for a background image under an exact
/// category constraint.
pub trait Estimator {
    fn name(&self) -> &str;

    fn estimate(
        &mut self,
        assets: &BackgroundAssets,
        constraint: &CategoryConstraint,
    ) -> Result<Layout>;
}

/// Deterministic column placer: stacks non-underlay elements into an
/// aligned column, wraps underlays around them, and when a saliency map is
/// available picks the column position covering the least salient region.
#[derive(Debug, Clone, Default)]
pub struct ColumnEstimator {
    pub taxonomy: Taxonomy,
}

impl ColumnEstimator {
    pub fn new(taxonomy: Taxonomy) -> Self {
        Self { taxonomy }
    }
}

impl Estimator for ColumnEstimator {
    fn name(&self) -> &str {
        "column"
    }

    fn estimate(
        &mut self,
        assets: &BackgroundAssets,
        constraint: &CategoryConstraint,
    ) -> Result<Layout> {
        let (w, h) = assets.image.dimensions();
        let mut content: Vec<ElementCategory> = Vec::new();
        let mut underlays: Vec<ElementCategory> = Vec::new();
        for (name, count) in &constraint.counts {
            let category = self.taxonomy.require(name)?.clone();
            for _ in 0..*count {
                if category.is_underlay {
                    underlays.push(category.clone());
                } else {
                    content.push(category.clone());
                }
            }
        }
        if content.is_empty() && underlays.is_empty() {
            return Layout::new(vec![], w, h);
        }

        let column_w: f64 = 0.5;
        let margin_y = 0.08;
        let usable = 1.0 - 2.0 * margin_y;
        let k = content.len().max(1) as f64;
        let slot = usable / k;
        let el_h = (slot * 0.72).min(0.25);

        // candidate column positions, least salient column wins
        let candidates = [0.25, 0.06, 0.44];
        let planes = assets.saliency.is_some().then(|| ContentPlanes::new(assets));
        let column_l = planes
            .as_ref()
            .map(|p| {
                let mut best = (f64::INFINITY, candidates[0]);
                for &l in &candidates {
                    let probe = Element {
                        category: ElementCategory::plain("probe"),
                        l,
                        t: margin_y,
                        w: column_w,
                        h: usable,
                    };
                    let mean = p.mean_saliency(&probe).unwrap_or(0.0);
                    if mean < best.0 {
                        best = (mean, l);
                    }
                }
                best.1
            })
            .unwrap_or(candidates[0]);

        let mut elements = Vec::new();
        let mut content_boxes = Vec::new();
        for (i, category) in content.into_iter().enumerate() {
            let el = Element::new(
                category,
                column_l,
                margin_y + i as f64 * slot,
                column_w,
                el_h,
            )?;
            content_boxes.push(el.clone());
            elements.push(el);
        }

        // wrap underlays around content slots, growing the margin when
        // several back the same element
        for (j, category) in underlays.into_iter().enumerate() {
            let pad = 0.015 * (1.0 + (j / content_boxes.len().max(1)) as f64);
            let target = content_boxes
                .get(j % content_boxes.len().max(1))
                .cloned()
                .unwrap_or(Element {
                    category: ElementCategory::plain("probe"),
                    l: column_l,
                    t: margin_y,
                    w: column_w,
                    h: el_h.max(0.1),
                });
            let l = (target.l - pad).max(0.0);
            let t = (target.t - pad).max(0.0);
            let right = (target.right() + pad).min(1.0);
            let bottom = (target.bottom() + pad).min(1.0);
            elements.insert(0, Element::new(category, l, t, right - l, bottom - t)?);
        }
        Layout::new(elements, w, h)
    }
}

/// [`Estimator`] backed by a chat endpoint.
pub struct LlmEstimator {
    pub transport: Arc<dyn ChatTransport>,
    pub endpoint: EndpointConfig,
    pub taxonomy: Taxonomy,
    pub template: PromptTemplate,
}

impl LlmEstimator {
    pub fn new(transport: Arc<dyn ChatTransport>, endpoint: EndpointConfig, taxonomy: Taxonomy) -> Self {
        Self {
            transport,
            endpoint,
            taxonomy,
            template: PromptTemplate::estimation_default(),
        }
    }
}

impl Estimator for LlmEstimator {
    fn name(&self) -> &str {
        "llm"
    }

    fn estimate(
        &mut self,
        assets: &BackgroundAssets,
        constraint: &CategoryConstraint,
    ) -> Result<Layout> {
        if constraint.counts.is_empty() {
            return Err(Error::InvalidLayout("empty constraint".into()));
        }
        estimate_via_llm(
            assets,
            Some(constraint),
            &self.taxonomy,
            &self.template,
            self.transport.as_ref(),
            &self.endpoint,
        )
    }
}
