//! Normalized bounding boxes and the exact geometric predicates shared by the
//! layout generator, the layout validator and the metric engine.
//!
//! Coordinates are fractions of image width/height with the origin at the
//! top-left corner, so `y` grows downwards: "above" means a smaller `y`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::GeometryError;

/// Number of decimal places kept when boxes are quantized for storage.
pub const BOX_DECIMALS: i32 = 6;

/// Axis-aligned rectangle in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    /// Builds a box, rejecting anything outside `[0,1]²` or with zero extent.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let b = BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(GeometryError::InvalidBox([x_min, y_min, x_max, y_max]))
        }
    }

    pub fn is_valid(&self) -> bool {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        coords.iter().all(|c| c.is_finite() && (0.0..=1.0).contains(c))
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }

    /// The whole image.
    pub fn full() -> Self {
        BoundingBox {
            x_min: 0.0,
            y_min: 0.0,
            x_max: 1.0,
            y_max: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Smallest box enclosing both.
    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    /// Rounds every coordinate to [`BOX_DECIMALS`] places, so the in-memory
    /// value equals what a manifest stores. The result may be invalid when the
    /// box is thinner than the quantum; callers re-check.
    pub fn quantized(&self) -> BoundingBox {
        BoundingBox {
            x_min: quantize(self.x_min),
            y_min: quantize(self.y_min),
            x_max: quantize(self.x_max),
            y_max: quantize(self.y_max),
        }
    }

    /// Converts a pixel-space rectangle to normalized coordinates. Coordinates
    /// are clamped to the image and quantized.
    pub fn from_pixels(
        rect: [f64; 4],
        width: u32,
        height: u32,
    ) -> Result<BoundingBox, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyImage);
        }
        let (w, h) = (width as f64, height as f64);
        let b = BoundingBox {
            x_min: (rect[0] / w).clamp(0.0, 1.0),
            y_min: (rect[1] / h).clamp(0.0, 1.0),
            x_max: (rect[2] / w).clamp(0.0, 1.0),
            y_max: (rect[3] / h).clamp(0.0, 1.0),
        }
        .quantized();
        if b.is_valid() {
            Ok(b)
        } else {
            Err(GeometryError::InvalidBox(rect))
        }
    }

    /// Pixel rectangle for an image of the given size, rounding half-up.
    pub fn to_pixels(&self, width: u32, height: u32) -> [u32; 4] {
        let px = |v: f64, s: u32| (v * s as f64 + 0.5).floor() as u32;
        [
            px(self.x_min, width),
            px(self.y_min, height),
            px(self.x_max, width),
            px(self.y_max, height),
        ]
    }
}

pub fn quantize(v: f64) -> f64 {
    let scale = 10f64.powi(BOX_DECIMALS);
    (v * scale).round() / scale
}

impl Serialize for BoundingBox {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.as_array().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x_min, y_min, x_max, y_max] = <[f64; 4]>::deserialize(deserializer)?;
        BoundingBox::new(x_min, y_min, x_max, y_max).map_err(serde::de::Error::custom)
    }
}

pub fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

/// Intersection over union. Zero for disjoint or edge-touching boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// True iff the intersection has positive area; touching edges do not count.
pub fn overlaps(a: &BoundingBox, b: &BoundingBox) -> bool {
    intersection_area(a, b) > 0.0
}

pub fn center_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// Geometric meaning attached to a vocabulary relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Above,
    Below,
    LeftOf,
    RightOf,
    FarFrom,
    Near,
}

impl RelationKind {
    pub const ALL: [RelationKind; 6] = [
        RelationKind::Above,
        RelationKind::Below,
        RelationKind::LeftOf,
        RelationKind::RightOf,
        RelationKind::FarFrom,
        RelationKind::Near,
    ];

    /// The relation that holds with subject and object swapped.
    pub fn mirror(self) -> RelationKind {
        match self {
            RelationKind::Above => RelationKind::Below,
            RelationKind::Below => RelationKind::Above,
            RelationKind::LeftOf => RelationKind::RightOf,
            RelationKind::RightOf => RelationKind::LeftOf,
            RelationKind::FarFrom => RelationKind::FarFrom,
            RelationKind::Near => RelationKind::Near,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Above => "above",
            RelationKind::Below => "below",
            RelationKind::LeftOf => "left_of",
            RelationKind::RightOf => "right_of",
            RelationKind::FarFrom => "far_from",
            RelationKind::Near => "near",
        }
    }
}

impl std::fmt::Display for RelationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Center-distance thresholds for the distance relations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationThresholds {
    pub far: f64,
    pub near: f64,
}

impl Default for RelationThresholds {
    fn default() -> Self {
        RelationThresholds {
            far: 0.5,
            near: 0.25,
        }
    }
}

/// Checks `a <kind> b` with the default thresholds.
pub fn relation_holds(kind: RelationKind, a: &BoundingBox, b: &BoundingBox) -> bool {
    relation_holds_with(kind, a, b, &RelationThresholds::default())
}

pub fn relation_holds_with(
    kind: RelationKind,
    a: &BoundingBox,
    b: &BoundingBox,
    thresholds: &RelationThresholds,
) -> bool {
    match kind {
        RelationKind::Above => a.y_max <= b.y_min,
        RelationKind::Below => a.y_min >= b.y_max,
        RelationKind::LeftOf => a.x_max <= b.x_min,
        RelationKind::RightOf => a.x_min >= b.x_max,
        RelationKind::FarFrom => center_distance(a, b) >= thresholds.far,
        RelationKind::Near => center_distance(a, b) <= thresholds.near && !overlaps(a, b),
    }
}
