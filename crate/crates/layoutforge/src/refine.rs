//! Evaluate-then-repair refinement: a deterministic local search over the
//! design principles, an iterative driver, and a pluggable backend
//! interface for external refiners.
//!
//! Every accepted move must strictly decrease the composite violation
//! score, so the composite along a trace's accepted states is
//! non-increasing by construction.

use serde::{Deserialize, Serialize};

use crate::assets::BackgroundAssets;
use crate::error::{Error, Result};
use crate::geometry::PixelBox;
use crate::layout::{Element, Layout};
use crate::metrics::{
    nearest_axis, Axis, CompositeWeights, ContentPlanes, MetricVector,
};
use crate::principles::{
    evaluate_principles_with, EvaluationReport, Offenders, PrincipleThresholds,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Accepted-move budget per refinement round.
    pub max_moves: usize,
    /// Outer refinement rounds; 0 evaluates without changing anything.
    pub iterations: usize,
    pub thresholds: PrincipleThresholds,
    pub weights: CompositeWeights,
    /// Reserved for backends that sample; the built-in search resolves all
    /// ties by deterministic ordering.
    pub seed: u64,
    /// Grid resolution for the saliency relocation move.
    pub relocation_grid: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_moves: 50,
            iterations: 1,
            thresholds: PrincipleThresholds::default(),
            weights: CompositeWeights::default(),
            seed: 0,
            relocation_grid: 9,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_moves == 0 {
            return Err(Error::InvalidLayout("max_moves must be >= 1".into()));
        }
        if self.relocation_grid < 2 {
            return Err(Error::InvalidLayout("relocation_grid must be >= 2".into()));
        }
        Ok(())
    }
}

/// Why a refinement loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FixedPoint,
    MaxMoves,
    AllPrinciplesPass,
}

/// One accepted state along a refinement trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceState {
    pub round: usize,
    pub report: EvaluationReport,
    pub metrics: MetricVector,
    pub layout: Layout,
}

/// A backend output that was not applied, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub round: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineTrace {
    /// Initial state followed by every accepted state.
    pub states: Vec<TraceState>,
    pub accepted_moves: usize,
    pub terminated_by: Termination,
    pub rejections: Vec<Rejection>,
}

impl RefineTrace {
    pub fn final_state(&self) -> &TraceState {
        self.states.last().expect("trace holds the initial state")
    }
}

fn snapshot(
    round: usize,
    layout: &Layout,
    planes: Option<&ContentPlanes>,
    cfg: &RefineConfig,
) -> Result<TraceState> {
    let report = evaluate_principles_with(layout, planes, &cfg.thresholds);
    let metrics = MetricVector::compute(
        layout,
        planes,
        cfg.thresholds.containment,
        &cfg.weights,
    )?;
    Ok(TraceState {
        round,
        report,
        metrics,
        layout: layout.clone(),
    })
}

fn composite_of(layout: &Layout, planes: Option<&ContentPlanes>, cfg: &RefineConfig) -> Result<f64> {
    Ok(MetricVector::compute(layout, planes, cfg.thresholds.containment, &cfg.weights)?.composite)
}

fn clamp_pos(pos: f64, size: f64) -> f64 {
    pos.clamp(0.0, (1.0 - size).max(0.0))
}

/// Propose one repair move for the first failed principle and return the
/// candidate layout if it strictly decreases the composite score; the
/// input layout comes back unchanged otherwise.
///
/// Moves per principle:
/// 1. translate one element of the worst-IoU pair along the axis needing
///    the smallest displacement until the pair IoU drops to the threshold;
/// 2. center the nearest non-underlay element inside the uncovered
///    underlay, shrinking it to fit if needed;
/// 3. move the most salient offender to the lowest-saliency feasible cell
///    of a coarse position grid;
/// 4. snap the offender's nearest axis onto the closest neighbor axis line.
///
/// Offender ties break toward the lowest element index.
pub fn repair_step(
    layout: &Layout,
    report: &EvaluationReport,
    planes: Option<&ContentPlanes>,
    cfg: &RefineConfig,
) -> Result<Layout> {
    let Some(failed) = report.first_failed() else {
        return Ok(layout.clone());
    };
    let candidate = match failed.principle {
        1 => separate_worst_pair(layout, &failed.offenders, cfg),
        2 => cover_underlay(layout, &failed.offenders, cfg),
        3 => relocate_off_saliency(layout, &failed.offenders, planes, cfg),
        4 => snap_to_neighbor_axis(layout, &failed.offenders),
        _ => None,
    };
    let Some(candidate) = candidate else {
        return Ok(layout.clone());
    };
    if candidate.validate().is_err() {
        return Ok(layout.clone());
    }
    let before = composite_of(layout, planes, cfg)?;
    let after = composite_of(&candidate, planes, cfg)?;
    if after < before {
        Ok(candidate)
    } else {
        Ok(layout.clone())
    }
}

fn separate_worst_pair(layout: &Layout, offenders: &Offenders, cfg: &RefineConfig) -> Option<Layout> {
    let Offenders::Pairs(pairs) = offenders else {
        return None;
    };
    let (&(i, j), worst_iou) = pairs
        .iter()
        .map(|p| (p, crate::geometry::iou(&layout.elements[p.0], &layout.elements[p.1])))
        .fold(None::<(&(usize, usize), f64)>, |best, (p, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((p, v)),
        })?;
    if worst_iou <= cfg.thresholds.overlap {
        return None;
    }

    // Overlap allowed to remain so that iou == threshold exactly.
    let a = &layout.elements[i];
    let b = &layout.elements[j];
    let target_inter =
        cfg.thresholds.overlap * (a.area() + b.area()) / (1.0 + cfg.thresholds.overlap);

    let mut best: Option<(f64, usize, usize, f64, bool)> = None; // (dist, order, mover, new_pos, horizontal)
    for (order, (mover, other)) in [(i, j), (j, i)].into_iter().enumerate() {
        let m = &layout.elements[mover];
        let o = &layout.elements[other];
        let ox = (m.right().min(o.right()) - m.l.max(o.l)).max(0.0);
        let oy = (m.bottom().min(o.bottom()) - m.t.max(o.t)).max(0.0);
        let allowed_x = if oy > 0.0 { target_inter / oy } else { ox };
        let allowed_y = if ox > 0.0 { target_inter / ox } else { oy };
        // Candidate final positions per direction: right, left, down, up.
        let positions = [
            (o.right() - allowed_x, true),
            (o.l + allowed_x - m.w, true),
            (o.bottom() - allowed_y, false),
            (o.t + allowed_y - m.h, false),
        ];
        for (pos, horizontal) in positions {
            let (cur, size) = if horizontal { (m.l, m.w) } else { (m.t, m.h) };
            if pos < -1e-12 || pos + size > 1.0 + 1e-12 {
                continue;
            }
            let pos = clamp_pos(pos, size);
            let dist = (pos - cur).abs();
            if dist <= 0.0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bd, border, ..)) => {
                    dist < bd - 1e-15 || ((dist - bd).abs() <= 1e-15 && order < border)
                }
            };
            if better {
                best = Some((dist, order, mover, pos, horizontal));
            }
        }
    }
    let (_, _, mover, pos, horizontal) = best?;
    let mut out = layout.clone();
    if horizontal {
        out.elements[mover].l = pos;
    } else {
        out.elements[mover].t = pos;
    }
    Some(out)
}

fn cover_underlay(layout: &Layout, offenders: &Offenders, _cfg: &RefineConfig) -> Option<Layout> {
    let Offenders::Indices(indices) = offenders else {
        return None;
    };
    let &u = indices.first()?;
    let under = &layout.elements[u];
    let candidates = layout.non_underlay_indices();
    let &chosen = candidates.iter().min_by(|&&a, &&b| {
        let da = center_distance(&layout.elements[a], under);
        let db = center_distance(&layout.elements[b], under);
        da.partial_cmp(&db).unwrap().then(a.cmp(&b))
    })?;
    let el = &layout.elements[chosen];
    let w = el.w.min(under.w);
    let h = el.h.min(under.h);
    let mut out = layout.clone();
    let target = &mut out.elements[chosen];
    target.w = w;
    target.h = h;
    target.l = clamp_pos(under.l + (under.w - w) / 2.0, w);
    target.t = clamp_pos(under.t + (under.h - h) / 2.0, h);
    Some(out)
}

fn center_distance(a: &Element, b: &Element) -> f64 {
    let dx = a.center_x() - b.center_x();
    let dy = a.center_y() - b.center_y();
    (dx * dx + dy * dy).sqrt()
}

fn relocate_off_saliency(
    layout: &Layout,
    offenders: &Offenders,
    planes: Option<&ContentPlanes>,
    cfg: &RefineConfig,
) -> Option<Layout> {
    let Offenders::Indices(indices) = offenders else {
        return None;
    };
    let &idx = indices.first()?;
    let planes = planes.filter(|p| p.has_saliency())?;
    let el = &layout.elements[idx];
    let n = cfg.relocation_grid as u32;
    let mut cells = Vec::with_capacity((n * n) as usize);
    for gy in 0..n {
        for gx in 0..n {
            let l = (1.0 - el.w).max(0.0) * gx as f64 / (n - 1) as f64;
            let t = (1.0 - el.h).max(0.0) * gy as f64 / (n - 1) as f64;
            let probe = Element {
                category: el.category.clone(),
                l,
                t,
                w: el.w,
                h: el.h,
            };
            let b = PixelBox::of(&probe, planes.width(), planes.height());
            let mean = planes.mean_saliency_box(b).unwrap_or(0.0);
            cells.push((mean, l, t));
        }
    }
    let min_mean = cells
        .iter()
        .map(|(m, ..)| *m)
        .fold(f64::INFINITY, f64::min);
    // Among the lowest-saliency cells, take the one whose resulting layout
    // scores best, so escaping the salient region does not wreck the rest
    // of the composition; remaining ties go to the cell nearest the
    // current position, then scan order.
    let mut best: Option<(f64, f64, Layout)> = None; // (composite, dist, layout)
    for (mean, l, t) in cells {
        if mean > min_mean + 1e-12 {
            continue;
        }
        let mut candidate = layout.clone();
        candidate.elements[idx].l = l;
        candidate.elements[idx].t = t;
        let composite = composite_of(&candidate, Some(planes), cfg).ok()?;
        let dist = ((l - el.l).powi(2) + (t - el.t).powi(2)).sqrt();
        let better = match &best {
            None => true,
            Some((bc, bd, _)) => {
                composite < bc - 1e-12 || ((composite - bc).abs() <= 1e-12 && dist < *bd)
            }
        };
        if better {
            best = Some((composite, dist, candidate));
        }
    }
    best.map(|(_, _, layout)| layout)
}

fn snap_to_neighbor_axis(layout: &Layout, offenders: &Offenders) -> Option<Layout> {
    let Offenders::Indices(indices) = offenders else {
        return None;
    };
    let &idx = indices.first()?;
    let (axis, neighbor, _) = nearest_axis(layout, idx)?;
    let el = &layout.elements[idx];
    let target = axis.value(&layout.elements[neighbor]);
    let mut out = layout.clone();
    let moved = &mut out.elements[idx];
    match axis {
        Axis::Left => moved.l = target,
        Axis::CenterX => moved.l = target - el.w / 2.0,
        Axis::Right => moved.l = target - el.w,
        Axis::Top => moved.t = target,
        Axis::CenterY => moved.t = target - el.h / 2.0,
        Axis::Bottom => moved.t = target - el.h,
    }
    if axis.is_horizontal() {
        moved.l = clamp_pos(moved.l, moved.w);
    } else {
        moved.t = clamp_pos(moved.t, moved.h);
    }
    Some(out)
}

/// One refinement round: repair until every principle passes, the move
/// budget is spent, or no proposal improves the score.
fn repair_round(
    start: &Layout,
    planes: Option<&ContentPlanes>,
    cfg: &RefineConfig,
    round: usize,
) -> Result<(Layout, Vec<TraceState>, usize, Termination)> {
    let mut current = start.clone();
    let mut report = evaluate_principles_with(&current, planes, &cfg.thresholds);
    let mut states = Vec::new();
    let mut accepted = 0usize;
    let termination = loop {
        if report.all_passed() {
            break Termination::AllPrinciplesPass;
        }
        if accepted >= cfg.max_moves {
            break Termination::MaxMoves;
        }
        let candidate = repair_step(&current, &report, planes, cfg)?;
        if candidate == current {
            break Termination::FixedPoint;
        }
        current = candidate;
        accepted += 1;
        let state = snapshot(round, &current, planes, cfg)?;
        report = state.report.clone();
        states.push(state);
    };
    Ok((current, states, accepted, termination))
}

/// Built-in iterative refinement: `iterations` evaluate-then-repair
/// rounds of deterministic local search.
pub fn refine(
    layout: &Layout,
    assets: Option<&BackgroundAssets>,
    cfg: &RefineConfig,
) -> Result<(Layout, RefineTrace)> {
    cfg.validate()?;
    let planes = match assets {
        Some(a) => {
            a.check_canvas(layout)?;
            Some(ContentPlanes::new(a))
        }
        None => None,
    };
    refine_with_planes(layout, planes.as_ref(), cfg)
}

/// [`refine`] over precomputed content planes, for callers evaluating many
/// variants against one background.
pub fn refine_with_planes(
    layout: &Layout,
    planes: Option<&ContentPlanes>,
    cfg: &RefineConfig,
) -> Result<(Layout, RefineTrace)> {
    cfg.validate()?;
    layout.validate()?;
    let initial = snapshot(0, layout, planes, cfg)?;
    let mut terminated_by = if initial.report.all_passed() {
        Termination::AllPrinciplesPass
    } else {
        Termination::FixedPoint
    };
    let mut trace = RefineTrace {
        states: vec![initial],
        accepted_moves: 0,
        terminated_by,
        rejections: Vec::new(),
    };
    let mut current = layout.clone();
    for round in 1..=cfg.iterations {
        let (next, states, accepted, termination) = repair_round(&current, planes, cfg, round)?;
        current = next;
        trace.states.extend(states);
        trace.accepted_moves += accepted;
        terminated_by = termination;
        if termination == Termination::AllPrinciplesPass && accepted == 0 {
            // Converged in an earlier round; later rounds are no-ops.
            break;
        }
        if termination == Termination::FixedPoint && accepted == 0 {
            break;
        }
    }
    trace.terminated_by = terminated_by;
    Ok((current, trace))
}

/// Pick the candidate with the lowest composite score; ties go to the
/// lowest index.
pub fn best_of_k(
    candidates: &[Layout],
    assets: Option<&BackgroundAssets>,
    weights: &CompositeWeights,
    containment_tol: f64,
) -> Result<(usize, Layout, MetricVector)> {
    let first = candidates.first().ok_or(Error::EmptyCandidates)?;
    let planes = match assets {
        Some(a) => {
            a.check_canvas(first)?;
            Some(ContentPlanes::new(a))
        }
        None => None,
    };
    let mut best: Option<(usize, MetricVector)> = None;
    for (i, cand) in candidates.iter().enumerate() {
        if (cand.canvas_w, cand.canvas_h) != (first.canvas_w, first.canvas_h) {
            return Err(Error::InvalidLayout(format!(
                "candidate {i} canvas differs from candidate 0"
            )));
        }
        let m = MetricVector::compute(cand, planes.as_ref(), containment_tol, weights)?;
        if best.map_or(true, |(_, bm)| m.composite < bm.composite) {
            best = Some((i, m));
        }
    }
    let (idx, metrics) = best.expect("candidates non-empty");
    Ok((idx, candidates[idx].clone(), metrics))
}

/// One round of an external (or built-in) refiner.
pub struct RoundContext<'a> {
    pub layout: &'a Layout,
    pub assets: Option<&'a BackgroundAssets>,
    /// 1-based round number.
    pub round: usize,
}

/// Backend output for one round: the evaluation text it produced and the
/// refined layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub evaluation: String,
    pub layout: Layout,
}

/// A refinement backend. Each concurrent sample gets its own session, so
/// implementations may keep per-sample state.
pub trait Refiner {
    fn name(&self) -> &str;

    fn refine_round(&mut self, ctx: &RoundContext<'_>) -> Result<RoundResult>;
}

/// The deterministic local search behind the [`Refiner`] interface.
#[derive(Debug, Clone)]
pub struct BuiltinRefiner {
    cfg: RefineConfig,
}

impl BuiltinRefiner {
    pub fn new(cfg: RefineConfig) -> Self {
        Self { cfg }
    }
}

impl Refiner for BuiltinRefiner {
    fn name(&self) -> &str {
        "builtin"
    }

    fn refine_round(&mut self, ctx: &RoundContext<'_>) -> Result<RoundResult> {
        let planes = ctx.assets.map(ContentPlanes::new);
        let (layout, _, _, _) = repair_round(ctx.layout, planes.as_ref(), &self.cfg, ctx.round)?;
        let report = evaluate_principles_with(&layout, planes.as_ref(), &self.cfg.thresholds);
        Ok(RoundResult {
            evaluation: report.text,
            layout,
        })
    }
}

/// Iterative refinement through a pluggable backend: per round the backend
/// proposes an (evaluation, layout) pair; proposals that fail validation,
/// change the canvas, or do not strictly improve the composite score are
/// rejected and the prior layout kept.
pub fn refine_via_backend(
    layout: &Layout,
    assets: Option<&BackgroundAssets>,
    backend: &mut dyn Refiner,
    cfg: &RefineConfig,
) -> Result<(Layout, RefineTrace)> {
    cfg.validate()?;
    layout.validate()?;
    let planes = match assets {
        Some(a) => {
            a.check_canvas(layout)?;
            Some(ContentPlanes::new(a))
        }
        None => None,
    };
    let planes = planes.as_ref();

    let initial = snapshot(0, layout, planes, cfg)?;
    let mut composite = initial.metrics.composite;
    let all_passed_initially = initial.report.all_passed();
    let mut trace = RefineTrace {
        states: vec![initial],
        accepted_moves: 0,
        terminated_by: if all_passed_initially {
            Termination::AllPrinciplesPass
        } else {
            Termination::FixedPoint
        },
        rejections: Vec::new(),
    };
    let mut current = layout.clone();

    for round in 1..=cfg.iterations {
        let report = evaluate_principles_with(&current, planes, &cfg.thresholds);
        if report.all_passed() {
            trace.terminated_by = Termination::AllPrinciplesPass;
            return Ok((current, trace));
        }
        let ctx = RoundContext {
            layout: &current,
            assets,
            round,
        };
        let result = match backend.refine_round(&ctx) {
            Ok(r) => r,
            Err(e) => {
                trace.rejections.push(Rejection {
                    round,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if let Err(e) = result.layout.validate() {
            trace.rejections.push(Rejection {
                round,
                reason: format!("invalid geometry: {e}"),
            });
            continue;
        }
        if (result.layout.canvas_w, result.layout.canvas_h) != (current.canvas_w, current.canvas_h)
        {
            trace.rejections.push(Rejection {
                round,
                reason: "canvas dimensions changed".to_string(),
            });
            continue;
        }
        let candidate_composite = composite_of(&result.layout, planes, cfg)?;
        if candidate_composite >= composite && result.layout != current {
            trace.rejections.push(Rejection {
                round,
                reason: format!(
                    "no composite improvement ({candidate_composite:.6} >= {composite:.6})"
                ),
            });
            continue;
        }
        if result.layout == current {
            trace.terminated_by = Termination::FixedPoint;
            continue;
        }
        current = result.layout;
        composite = candidate_composite;
        trace.accepted_moves += 1;
        trace.states.push(snapshot(round, &current, planes, cfg)?);
    }

    let final_report = evaluate_principles_with(&current, planes, &cfg.thresholds);
    trace.terminated_by = if final_report.all_passed() {
        Termination::AllPrinciplesPass
    } else if trace.accepted_moves == 0 && !trace.rejections.is_empty() {
        Termination::FixedPoint
    } else if cfg.iterations > 0 {
        Termination::MaxMoves
    } else {
        trace.terminated_by
    };
    Ok((current, trace))
}
