use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("box coordinates must be finite")]
    NonFinite,
    #[error("box coordinates must be non-negative")]
    Negative,
    #[error("degenerate box: min corner ({x_min}, {y_min}) is not strictly below max corner ({x_max}, {y_max})")]
    Degenerate {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
}

/// Axis-aligned rectangle in image pixels, origin at the top-left corner.
///
/// Fields are public so that ingest can carry malformed boxes through to
/// [`validate_annotation`](super::validate_annotation), which reports them
/// instead of failing the whole document. Use [`BoundingBox::new`] when a
/// checked value is wanted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let b = BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.check()?;
        Ok(b)
    }

    /// Converts a `(left, top, width, height)` tuple into corner form.
    pub fn from_left_top_width_height(
        left: f64,
        top: f64,
        width: f64,
        height: f64,
    ) -> Result<Self, GeometryError> {
        Self::new(left, top, left + width, top + height)
    }

    /// Smallest box enclosing all `points`. Returns `None` for an empty slice.
    /// The result is not validated: two identical points give a degenerate box.
    pub fn enclosing(points: &[(f64, f64)]) -> Option<Self> {
        let (&(x0, y0), rest) = points.split_first()?;
        let mut b = BoundingBox {
            x_min: x0,
            y_min: y0,
            x_max: x0,
            y_max: y0,
        };
        for &(x, y) in rest {
            b.x_min = b.x_min.min(x);
            b.y_min = b.y_min.min(y);
            b.x_max = b.x_max.max(x);
            b.y_max = b.y_max.max(y);
        }
        Some(b)
    }

    pub fn check(&self) -> Result<(), GeometryError> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if coords.iter().any(|&c| c < 0.0) {
            return Err(GeometryError::Negative);
        }
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(GeometryError::Degenerate {
                x_min: self.x_min,
                y_min: self.y_min,
                x_max: self.x_max,
                y_max: self.y_max,
            });
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.check().is_ok()
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Area, clamped to zero for degenerate boxes.
    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn fits_within(&self, extent: ImageExtent) -> bool {
        self.x_max <= f64::from(extent.width) && self.y_max <= f64::from(extent.height)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        BoundingBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageExtent {
    pub width: u32,
    pub height: u32,
}

/// Intersection over union of two boxes, in `[0, 1]`.
///
/// Disjoint boxes (including boxes that only share an edge) give 0. Invalid
/// boxes never divide by zero: an empty union also gives 0.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let ih = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}
