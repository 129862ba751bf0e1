//! Ground-truth perturbation and refinement training data curation.
//!
//! Perturbed layouts diversify the refiner's inputs: one element of a
//! ground-truth layout is corrupted by one operator. The curation step
//! mixes model outputs with perturbed ground truth under a threshold
//! `epsilon` and can prune records whose ground truth violates the design
//! principles.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assets::BackgroundAssets;
use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::principles::{evaluate_principles, EvaluationReport, PrincipleThresholds};

/// Perturbation operators. Exactly one is applied to exactly one element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbOp {
    /// Translate by uniform offsets in `[-max_shift, max_shift]` per axis.
    Shift,
    /// Scale width and height by independent uniform factors.
    Resize,
    /// Adopt the position of another uniformly chosen element (no-op for
    /// single-element layouts).
    Swap,
    /// Add small jitter to exactly one of `l` or `t`.
    Misalign,
}

pub const PERTURB_OPS: [PerturbOp; 4] = [
    PerturbOp::Shift,
    PerturbOp::Resize,
    PerturbOp::Swap,
    PerturbOp::Misalign,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub seed: u64,
    /// Maximum translation per axis as a canvas fraction.
    pub max_shift: f64,
    /// Uniform range of resize factors.
    pub scale_range: (f64, f64),
    /// Sampling weights over [shift, resize, swap, misalign].
    pub op_weights: [f64; 4],
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_shift: 0.25,
            scale_range: (0.5, 1.5),
            op_weights: [1.0; 4],
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_shift > 0.0 && self.max_shift <= 1.0) {
            return Err(Error::InvalidLayout(format!(
                "max_shift {} outside (0,1]",
                self.max_shift
            )));
        }
        if self.scale_range.0 <= 0.0 || self.scale_range.1 < self.scale_range.0 {
            return Err(Error::InvalidLayout(format!(
                "bad scale_range {:?}",
                self.scale_range
            )));
        }
        if self.op_weights.iter().any(|w| *w < 0.0) || self.op_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidLayout(
                "op_weights must be non-negative and not all zero".into(),
            ));
        }
        Ok(())
    }

    fn sample_op(&self, rng: &mut impl Rng) -> PerturbOp {
        let total: f64 = self.op_weights.iter().sum();
        let mut r = rng.random::<f64>() * total;
        for (op, w) in PERTURB_OPS.iter().zip(self.op_weights) {
            if r < w {
                return *op;
            }
            r -= w;
        }
        PerturbOp::Misalign
    }
}

fn clamp_pos(pos: f64, size: f64) -> f64 {
    pos.clamp(0.0, (1.0 - size).max(0.0))
}

/// Corrupt exactly one uniformly chosen element of `gt` with one sampled
/// operator. The result is clamped to the canvas and always satisfies the
/// element invariants; all other elements are untouched. Deterministic for
/// a given RNG state.
pub fn perturb_layout(gt: &Layout, cfg: &PerturbConfig, rng: &mut impl Rng) -> Result<Layout> {
    cfg.validate()?;
    if gt.is_empty() {
        return Err(Error::EmptyPerturbInput);
    }
    let mut out = gt.clone();
    let idx = rng.random_range(0..gt.len());
    let op = cfg.sample_op(rng);
    let el = &mut out.elements[idx];
    match op {
        PerturbOp::Shift => {
            let dx = rng.random_range(-cfg.max_shift..=cfg.max_shift);
            let dy = rng.random_range(-cfg.max_shift..=cfg.max_shift);
            el.l = clamp_pos(el.l + dx, el.w);
            el.t = clamp_pos(el.t + dy, el.h);
        }
        PerturbOp::Resize => {
            let fx = rng.random_range(cfg.scale_range.0..=cfg.scale_range.1);
            let fy = rng.random_range(cfg.scale_range.0..=cfg.scale_range.1);
            el.w = (el.w * fx).min(1.0 - el.l).max(1e-4);
            el.h = (el.h * fy).min(1.0 - el.t).max(1e-4);
        }
        PerturbOp::Swap => {
            if gt.len() > 1 {
                let others: Vec<usize> = (0..gt.len()).filter(|&j| j != idx).collect();
                let j = *others.choose(rng).expect("non-empty");
                let (l, t) = (gt.elements[j].l, gt.elements[j].t);
                el.l = clamp_pos(l, el.w);
                el.t = clamp_pos(t, el.h);
            }
        }
        PerturbOp::Misalign => {
            let jitter = cfg.max_shift / 5.0;
            let d = rng.random_range(-jitter..=jitter);
            if rng.random::<bool>() {
                el.l = clamp_pos(el.l + d, el.w);
            } else {
                el.t = clamp_pos(el.t + d, el.h);
            }
        }
    }
    debug_assert!(out.validate().is_ok());
    Ok(out)
}

/// Where a curated input layout came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    ModelOutput,
    Perturbed,
}

/// One refinement training sample: the layout to refine, its provenance,
/// the ground truth, and the principle evaluation of the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationRecord {
    pub image_id: String,
    pub input_layout: Layout,
    pub input_source: InputSource,
    pub gt_layout: Layout,
    pub evaluation_gt: EvaluationReport,
}

/// Result of mixing model outputs with perturbed ground truth.
#[derive(Debug, Clone)]
pub struct MixOutcome {
    /// Records ordered by image id.
    pub records: Vec<CurationRecord>,
    /// Ids skipped with the reason (missing model output, empty ground truth).
    pub skipped: Vec<(String, String)>,
}

/// Mix model outputs and perturbed ground truth: per image id, draw
/// `p ~ U(0,1)` from the seeded stream and take the model output when
/// `p > epsilon` (a draw of exactly `epsilon` or below, including the
/// measure-zero tie at 0, perturbs instead). Deterministic given the seed;
/// records come out ordered by image id.
pub fn mix_inputs(
    ce_outputs: &BTreeMap<String, Layout>,
    gts: &BTreeMap<String, Layout>,
    epsilon: f64,
    cfg: &PerturbConfig,
    thresholds: &PrincipleThresholds,
) -> Result<MixOutcome> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (id, gt) in gts {
        let p = rng.random::<f64>();
        let (input_layout, input_source) = if p > epsilon {
            match ce_outputs.get(id) {
                Some(ce) => (ce.clone(), InputSource::ModelOutput),
                None => {
                    skipped.push((id.clone(), "no model output".to_string()));
                    continue;
                }
            }
        } else {
            match perturb_layout(gt, cfg, &mut rng) {
                Ok(p) => (p, InputSource::Perturbed),
                Err(Error::EmptyPerturbInput) => {
                    skipped.push((id.clone(), "empty ground truth".to_string()));
                    continue;
                }
                Err(e) => return Err(e),
            }
        };
        let evaluation_gt = evaluate_principles(&input_layout, None, thresholds);
        records.push(CurationRecord {
            image_id: id.clone(),
            input_layout,
            input_source,
            gt_layout: gt.clone(),
            evaluation_gt,
        });
    }
    Ok(MixOutcome { records, skipped })
}

/// Sidecar manifest written next to a curated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationManifest {
    pub records_in: usize,
    pub kept: usize,
    pub dropped_gt: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub prune_gt: bool,
    pub thresholds: PrincipleThresholds,
    /// Wall-clock creation time; excluded from determinism comparisons.
    pub created_unix: u64,
}

/// Manifest path for a dataset file: `x.jsonl` maps to `x.manifest.json`.
pub fn manifest_path(dataset: &Path) -> PathBuf {
    dataset.with_extension("manifest.json")
}

/// Write the curated dataset as JSONL plus a manifest.
///
/// With `prune_gt`, records whose ground-truth layout fails the principles
/// (evaluated with this id's assets when available) are dropped: the
/// supervision targets must satisfy the prior. Evaluations of kept inputs
/// are recomputed with assets so the stored report stays reproducible.
pub fn curate_fr_dataset<F>(
    records: &[CurationRecord],
    assets: F,
    thresholds: &PrincipleThresholds,
    prune_gt: bool,
    seed: u64,
    epsilon: f64,
    out_path: &Path,
) -> Result<CurationManifest>
where
    F: Fn(&str) -> Option<BackgroundAssets>,
{
    let mut kept = Vec::new();
    let mut dropped = 0usize;
    for rec in records {
        let sample_assets = assets(&rec.image_id);
        if prune_gt {
            let gt_report = evaluate_principles(&rec.gt_layout, sample_assets.as_ref(), thresholds);
            if !gt_report.all_passed() {
                dropped += 1;
                continue;
            }
        }
        let mut rec = rec.clone();
        rec.evaluation_gt =
            evaluate_principles(&rec.input_layout, sample_assets.as_ref(), thresholds);
        kept.push(rec);
    }

    let file = std::fs::File::create(out_path).map_err(|e| Error::io(out_path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    for rec in &kept {
        serde_json::to_writer(&mut writer, rec)?;
        writer.write_all(b"\n").map_err(|e| Error::io(out_path, e))?;
    }
    writer.flush().map_err(|e| Error::io(out_path, e))?;

    let manifest = CurationManifest {
        records_in: records.len(),
        kept: kept.len(),
        dropped_gt: dropped,
        seed,
        epsilon,
        prune_gt,
        thresholds: *thresholds,
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let mpath = manifest_path(out_path);
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}
