//! Constraint-based box placement for closed-set instructions.
//!
//! Boxes are placed one at a time in object order. Each candidate is drawn
//! inside a window derived from the constraints that involve already placed
//! boxes, then checked against every constraint; rejected candidates are
//! redrawn up to `max_retries` times before the whole layout restarts.

use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::LayoutError;
use crate::geometry::{
    overlaps, relation_holds_with, BoundingBox, RelationKind, RelationThresholds,
};
use crate::model::{DraftInstruction, Instruction, RelationSpec, Scenario};
use crate::seed::{rng_from_seed, Rng};

/// Tunable defaults for every scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub area_range: (f64, f64),
    pub small_area_range: (f64, f64),
    pub aspect_range: (f64, f64),
    pub max_retries: u32,
    pub max_restarts: u32,
    pub thresholds: RelationThresholds,
    /// Forbid overlap between any two boxes of a relationship prompt, not
    /// only between related ones.
    pub forbid_unrelated_overlap: bool,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            area_range: (0.05, 0.35),
            small_area_range: (0.03, 0.10),
            aspect_range: (0.5, 2.0),
            max_retries: 1000,
            max_restarts: 10,
            thresholds: RelationThresholds::default(),
            forbid_unrelated_overlap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementConstraints {
    pub scenario: Scenario,
    pub relations: Vec<RelationSpec>,
    pub area_range: (f64, f64),
    pub aspect_range: (f64, f64),
    pub require_overlap: bool,
    pub forbid_overlap: bool,
    pub max_retries: u32,
    pub max_restarts: u32,
    pub thresholds: RelationThresholds,
}

impl PlacementConstraints {
    /// Constraints implied by the instruction's scenario.
    pub fn for_draft(draft: &DraftInstruction, cfg: &LayoutConfig) -> Self {
        let (area_range, require_overlap, forbid_overlap) = match draft.scenario {
            Scenario::ObjectBinding | Scenario::ColorBinding | Scenario::AttributeBinding => {
                (cfg.area_range, false, true)
            }
            Scenario::SmallBboxes => (cfg.small_area_range, false, true),
            Scenario::ObjectRelationship => (cfg.area_range, false, cfg.forbid_unrelated_overlap),
            Scenario::OverlappedBboxes => (cfg.area_range, true, false),
            Scenario::ComplexCompositions => (cfg.area_range, false, false),
            Scenario::OpenSet => ((f64::EPSILON, 1.0), false, false),
        };
        let relations = if draft.scenario == Scenario::ObjectRelationship {
            draft.relations.clone()
        } else {
            Vec::new()
        };
        PlacementConstraints {
            scenario: draft.scenario,
            relations,
            area_range,
            aspect_range: cfg.aspect_range,
            require_overlap,
            forbid_overlap,
            max_retries: cfg.max_retries,
            max_restarts: cfg.max_restarts,
            thresholds: cfg.thresholds,
        }
    }

    pub fn check(&self, n_objects: usize) -> Result<(), LayoutError> {
        if self.require_overlap && self.forbid_overlap {
            return Err(LayoutError::InvalidConstraints(
                "overlap both required and forbidden".into(),
            ));
        }
        let (lo, hi) = self.area_range;
        if !(lo > 0.0 && lo < hi && hi <= 1.0) {
            return Err(LayoutError::InvalidConstraints(format!(
                "area range {:?} must satisfy 0 < min < max <= 1",
                self.area_range
            )));
        }
        let (alo, ahi) = self.aspect_range;
        if !(alo > 0.0 && alo <= ahi) {
            return Err(LayoutError::InvalidConstraints(format!(
                "aspect range {:?} must satisfy 0 < min <= max",
                self.aspect_range
            )));
        }
        for r in &self.relations {
            for index in [r.subject, r.object] {
                if index >= n_objects {
                    return Err(LayoutError::RelationIndex {
                        kind: r.kind,
                        index,
                        n_objects,
                    });
                }
            }
            if r.subject == r.object {
                return Err(LayoutError::InvalidConstraints(format!(
                    "relation {} relates object {} to itself",
                    r.kind, r.subject
                )));
            }
        }
        Ok(())
    }

    fn area_ok(&self, b: &BoundingBox) -> bool {
        let a = b.area();
        a >= self.area_range.0 && a <= self.area_range.1
    }

    /// Smallest width and height any sampled box can have.
    /// Sides of the smallest-area box whose aspect ratio is closest to 1;
    /// room left for a later box is measured against it.
    fn min_sides(&self) -> (f64, f64) {
        let aspect = 1.0_f64.clamp(self.aspect_range.0, self.aspect_range.1);
        let amin = self.area_range.0;
        ((amin * aspect).sqrt(), (amin / aspect).sqrt())
    }
}

fn sample_size(
    rng: &mut Rng,
    area_range: (f64, f64),
    aspect_range: (f64, f64),
    max_retries: u32,
) -> Result<(f64, f64), LayoutError> {
    for _ in 0..max_retries.max(1) {
        let area = rng.random_range(area_range.0..=area_range.1);
        let aspect = rng.random_range(aspect_range.0..=aspect_range.1);
        let w = (area * aspect).sqrt();
        let h = (area / aspect).sqrt();
        if w <= 1.0 && h <= 1.0 {
            return Ok((w, h));
        }
    }
    Err(LayoutError::InfeasibleGeometry {
        area: area_range,
        aspect: aspect_range,
    })
}

/// Draws one box: area uniform in `area_range`, aspect ratio (width/height)
/// uniform in `aspect_range`, position uniform over placements inside the
/// image. The returned box is quantized and its area lies in range.
pub fn sample_box(
    rng: &mut Rng,
    area_range: (f64, f64),
    aspect_range: (f64, f64),
    max_retries: u32,
) -> Result<BoundingBox, LayoutError> {
    for _ in 0..max_retries.max(1) {
        let (w, h) = sample_size(rng, area_range, aspect_range, max_retries)?;
        let x = rng.random_range(0.0..=(1.0 - w).max(0.0));
        let y = rng.random_range(0.0..=(1.0 - h).max(0.0));
        let b = BoundingBox {
            x_min: x,
            y_min: y,
            x_max: (x + w).min(1.0),
            y_max: (y + h).min(1.0),
        }
        .quantized();
        let a = b.area();
        if b.is_valid() && a >= area_range.0 && a <= area_range.1 {
            return Ok(b);
        }
    }
    Err(LayoutError::InfeasibleGeometry {
        area: area_range,
        aspect: aspect_range,
    })
}

/// Feasible range of `x_min` and `y_min` for a box of fixed size.
#[derive(Debug, Clone, Copy)]
struct Window {
    x: (f64, f64),
    y: (f64, f64),
}

impl Window {
    fn image(w: f64, h: f64) -> Self {
        Window {
            x: (0.0, 1.0 - w),
            y: (0.0, 1.0 - h),
        }
    }

    fn restrict_x(&mut self, lo: f64, hi: f64) {
        self.x = (self.x.0.max(lo), self.x.1.min(hi));
    }

    fn restrict_y(&mut self, lo: f64, hi: f64) {
        self.y = (self.y.0.max(lo), self.y.1.min(hi));
    }

    fn is_empty(&self) -> bool {
        self.x.0 > self.x.1 || self.y.0 > self.y.1
    }
}

/// How box `i` takes part in relations, from its point of view at placement time.
struct Roles {
    /// `holds(kind, anchor, me)` with `anchor` already placed.
    anchored: Vec<(RelationKind, usize)>,
    /// `holds(kind, me, later)` for a box placed later.
    leading: Vec<RelationKind>,
}

fn roles(i: usize, relations: &[RelationSpec]) -> Roles {
    let mut anchored = Vec::new();
    let mut leading = Vec::new();
    for r in relations {
        if r.subject == i && r.object < i {
            anchored.push((r.kind.mirror(), r.object));
        } else if r.object == i && r.subject < i {
            anchored.push((r.kind, r.subject));
        } else if r.subject == i && r.object > i {
            leading.push(r.kind);
        } else if r.object == i && r.subject > i {
            leading.push(r.kind.mirror());
        }
    }
    Roles { anchored, leading }
}

/// Whether a later box of minimal size can still satisfy `kind` with `me` as
/// subject. For `near` under non-overlap the later box must also clear every
/// box placed so far.
fn leaves_room(
    kind: RelationKind,
    me: &BoundingBox,
    placed: &[BoundingBox],
    c: &PlacementConstraints,
) -> bool {
    let (w_min, h_min) = c.min_sides();
    match kind {
        RelationKind::Above => 1.0 - me.y_max >= h_min,
        RelationKind::Below => me.y_min >= h_min,
        RelationKind::LeftOf => 1.0 - me.x_max >= w_min,
        RelationKind::RightOf => me.x_min >= w_min,
        RelationKind::FarFrom => {
            let (cx, cy) = me.center();
            let far_x = (cx - w_min / 2.0).max(1.0 - w_min / 2.0 - cx);
            let far_y = (cy - h_min / 2.0).max(1.0 - h_min / 2.0 - cy);
            far_x.hypot(far_y) >= c.thresholds.far
        }
        RelationKind::Near => {
            let (cx, cy) = me.center();
            let clamp_x = |v: f64| v.clamp(w_min / 2.0, 1.0 - w_min / 2.0);
            let clamp_y = |v: f64| v.clamp(h_min / 2.0, 1.0 - h_min / 2.0);
            // Minimal boxes touching each side of `me`, centered and shifted
            // by half a side along it.
            let mut probes = Vec::with_capacity(12);
            for shift in [0.0, -0.5, 0.5] {
                let (dx, dy) = (shift * w_min, shift * h_min);
                probes.push((me.x_max + w_min / 2.0, clamp_y(cy + dy)));
                probes.push((me.x_min - w_min / 2.0, clamp_y(cy + dy)));
                probes.push((clamp_x(cx + dx), me.y_max + h_min / 2.0));
                probes.push((clamp_x(cx + dx), me.y_min - h_min / 2.0));
            }
            probes.iter().any(|&(px, py)| {
                let probe = BoundingBox {
                    x_min: px - w_min / 2.0,
                    y_min: py - h_min / 2.0,
                    x_max: px + w_min / 2.0,
                    y_max: py + h_min / 2.0,
                };
                probe.x_min >= 0.0
                    && probe.x_max <= 1.0
                    && probe.y_min >= 0.0
                    && probe.y_max <= 1.0
                    && (px - cx).hypot(py - cy) <= c.thresholds.near
                    && !(c.forbid_overlap && placed.iter().any(|p| overlaps(p, &probe)))
            })
        }
    }
}

fn restrict_for_anchor(
    win: &mut Window,
    kind: RelationKind,
    anchor: &BoundingBox,
    w: f64,
    h: f64,
    near: f64,
) {
    match kind {
        RelationKind::Above => win.restrict_y(anchor.y_max, 1.0),
        RelationKind::Below => win.restrict_y(0.0, anchor.y_min - h),
        RelationKind::LeftOf => win.restrict_x(anchor.x_max, 1.0),
        RelationKind::RightOf => win.restrict_x(0.0, anchor.x_min - w),
        RelationKind::Near => {
            let (cx, cy) = anchor.center();
            win.restrict_x(cx - near - w / 2.0, cx + near - w / 2.0);
            win.restrict_y(cy - near - h / 2.0, cy + near - h / 2.0);
        }
        RelationKind::FarFrom => {}
    }
}

/// Sides of `anchor` where a disjoint `w` x `h` box can have its center
/// within `near` of the anchor's center.
fn near_sides(anchor: &BoundingBox, w: f64, h: f64, near: f64) -> Vec<u8> {
    let fits_x = (anchor.width() + w) / 2.0 <= near;
    let fits_y = (anchor.height() + h) / 2.0 <= near;
    let mut sides = Vec::with_capacity(4);
    if fits_x {
        if anchor.x_min >= w {
            sides.push(0);
        }
        if 1.0 - anchor.x_max >= w {
            sides.push(1);
        }
    }
    if fits_y {
        if anchor.y_min >= h {
            sides.push(2);
        }
        if 1.0 - anchor.y_max >= h {
            sides.push(3);
        }
    }
    sides
}

/// Keeps the box clear of `anchor` on one side: 0 left, 1 right, 2 above, 3 below.
fn restrict_to_side(win: &mut Window, side: u8, anchor: &BoundingBox, w: f64, h: f64) {
    match side {
        0 => win.restrict_x(0.0, anchor.x_min - w),
        1 => win.restrict_x(anchor.x_max, 1.0),
        2 => win.restrict_y(0.0, anchor.y_min - h),
        _ => win.restrict_y(anchor.y_max, 1.0),
    }
}

fn restrict_for_leading(win: &mut Window, kind: RelationKind, w: f64, h: f64, c: &PlacementConstraints) {
    let (w_min, h_min) = c.min_sides();
    match kind {
        RelationKind::Above => win.restrict_y(0.0, 1.0 - h - h_min),
        RelationKind::Below => win.restrict_y(h_min, 1.0),
        RelationKind::LeftOf => win.restrict_x(0.0, 1.0 - w - w_min),
        RelationKind::RightOf => win.restrict_x(w_min, 1.0),
        RelationKind::FarFrom | RelationKind::Near => {}
    }
}

/// Why the last candidate for an object was rejected.
fn describe_rejection(
    i: usize,
    candidate: &BoundingBox,
    placed: &[BoundingBox],
    c: &PlacementConstraints,
    roles: &Roles,
) -> String {
    if !candidate.is_valid() || !c.area_ok(candidate) {
        return format!("area range {:?}", c.area_range);
    }
    if c.forbid_overlap {
        if let Some(j) = placed.iter().position(|p| overlaps(p, candidate)) {
            return format!("non-overlap with object {j}");
        }
    }
    if c.require_overlap && i > 0 && !placed.iter().any(|p| overlaps(p, candidate)) {
        return "overlap with a previously placed box".into();
    }
    for &(kind, anchor) in &roles.anchored {
        if !relation_holds_with(kind, &placed[anchor], candidate, &c.thresholds) {
            return format!("relation {kind} from object {anchor}");
        }
    }
    for &kind in &roles.leading {
        if !leaves_room(kind, candidate, placed, c) {
            return format!("room for relation {kind}");
        }
    }
    "empty placement window".into()
}

fn accept(
    i: usize,
    candidate: &BoundingBox,
    placed: &[BoundingBox],
    c: &PlacementConstraints,
    roles: &Roles,
) -> bool {
    candidate.is_valid()
        && c.area_ok(candidate)
        && !(c.forbid_overlap && placed.iter().any(|p| overlaps(p, candidate)))
        && !(c.require_overlap && i > 0 && !placed.iter().any(|p| overlaps(p, candidate)))
        && roles
            .anchored
            .iter()
            .all(|&(kind, anchor)| relation_holds_with(kind, &placed[anchor], candidate, &c.thresholds))
        && roles.leading.iter().all(|&kind| leaves_room(kind, candidate, placed, c))
}

/// Places box `i` given the boxes before it; `Err` carries the last reason.
fn place_one(
    rng: &mut Rng,
    i: usize,
    placed: &[BoundingBox],
    c: &PlacementConstraints,
) -> Result<Result<BoundingBox, String>, LayoutError> {
    let roles = roles(i, &c.relations);
    let mut reason = String::from("empty placement window");
    for _ in 0..c.max_retries.max(1) {
        let (w, h) = sample_size(rng, c.area_range, c.aspect_range, c.max_retries)?;
        let mut win = Window::image(w, h);
        for &(kind, anchor) in &roles.anchored {
            restrict_for_anchor(&mut win, kind, &placed[anchor], w, h, c.thresholds.near);
            if kind == RelationKind::Near && c.forbid_overlap {
                let sides = near_sides(&placed[anchor], w, h, c.thresholds.near);
                if sides.is_empty() {
                    win.x = (1.0, 0.0);
                } else {
                    let side = sides[rng.random_range(0..sides.len())];
                    restrict_to_side(&mut win, side, &placed[anchor], w, h);
                }
            }
        }
        for &kind in &roles.leading {
            restrict_for_leading(&mut win, kind, w, h, c);
        }
        if c.require_overlap && i > 0 {
            let target = &placed[rng.random_range(0..placed.len())];
            win.restrict_x(target.x_min - w, target.x_max);
            win.restrict_y(target.y_min - h, target.y_max);
        }
        if win.is_empty() {
            continue;
        }
        let x = rng.random_range(win.x.0..=win.x.1);
        let y = rng.random_range(win.y.0..=win.y.1);
        let candidate = BoundingBox {
            x_min: x,
            y_min: y,
            x_max: x + w,
            y_max: y + h,
        }
        .quantized();
        if accept(i, &candidate, placed, c, &roles) {
            return Ok(Ok(candidate));
        }
        reason = describe_rejection(i, &candidate, placed, c, &roles);
    }
    Ok(Err(reason))
}

/// Assigns a box to every object of `draft` under `constraints`.
/// Deterministic in `seed`.
pub fn place_layout(
    draft: DraftInstruction,
    constraints: &PlacementConstraints,
    seed: u64,
) -> Result<Instruction, LayoutError> {
    let n = draft.n_objects();
    constraints.check(n)?;
    let mut rng = rng_from_seed(seed);
    let mut failure = (0, String::new());
    for _ in 0..constraints.max_restarts.max(1) {
        let mut boxes = Vec::with_capacity(n);
        for i in 0..n {
            match place_one(&mut rng, i, &boxes, constraints)? {
                Ok(b) => boxes.push(b),
                Err(reason) => {
                    failure = (i, reason);
                    break;
                }
            }
        }
        if boxes.len() == n {
            return Ok(draft.with_boxes(boxes));
        }
    }
    Err(LayoutError::PlacementExhausted {
        object: failure.0,
        restarts: constraints.max_restarts.max(1),
        constraint: failure.1,
    })
}

/// A broken layout constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ObjectCount { expected: usize, found: usize },
    AreaOutOfRange { index: usize, area: f64 },
    Overlap { first: usize, second: usize },
    NoPriorOverlap { index: usize },
    Relation { kind: RelationKind, subject: usize, object: usize },
    RelationIndex { kind: RelationKind, index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ObjectCount { expected, found } => {
                write!(f, "object count: expected {expected}, found {found}")
            }
            Violation::AreaOutOfRange { index, area } => {
                write!(f, "area: object {index} has area {area:.6}")
            }
            Violation::Overlap { first, second } => {
                write!(f, "non-overlap: objects {first} and {second} overlap")
            }
            Violation::NoPriorOverlap { index } => {
                write!(f, "overlap: object {index} overlaps no earlier box")
            }
            Violation::Relation { kind, subject, object } => {
                write!(f, "relation: {kind} does not hold for ({subject}, {object})")
            }
            Violation::RelationIndex { kind, index } => {
                write!(f, "relation: {kind} references missing object {index}")
            }
        }
    }
}

/// Every postcondition of [`place_layout`] that `instr` breaks.
pub fn validate_layout(instr: &Instruction, c: &PlacementConstraints) -> Vec<Violation> {
    let boxes = instr.boxes();
    let mut out = Vec::new();
    if instr.n_objects != boxes.len() {
        out.push(Violation::ObjectCount {
            expected: instr.n_objects,
            found: boxes.len(),
        });
    }
    for (index, b) in boxes.iter().enumerate() {
        if !c.area_ok(b) {
            out.push(Violation::AreaOutOfRange { index, area: b.area() });
        }
    }
    if c.forbid_overlap {
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if overlaps(&boxes[i], &boxes[j]) {
                    out.push(Violation::Overlap { first: i, second: j });
                }
            }
        }
    }
    if c.require_overlap {
        for i in 1..boxes.len() {
            if !boxes[..i].iter().any(|p| overlaps(p, &boxes[i])) {
                out.push(Violation::NoPriorOverlap { index: i });
            }
        }
    }
    for r in &c.relations {
        if let Some(&index) = [r.subject, r.object].iter().find(|&&k| k >= boxes.len()) {
            out.push(Violation::RelationIndex { kind: r.kind, index });
            continue;
        }
        if !relation_holds_with(r.kind, &boxes[r.subject], &boxes[r.object], &c.thresholds) {
            out.push(Violation::Relation {
                kind: r.kind,
                subject: r.subject,
                object: r.object,
            });
        }
    }
    out
}
