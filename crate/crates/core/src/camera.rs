//! Weak-perspective camera.
//!
//! Image axes: x to the right, y downwards, origin at the top-left of the crop.
//! The projection drops depth, scales by `s` (pixels per model unit) and
//! translates by `t` (pixels).

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakPerspectiveCamera {
    scale: f64,
    translation: Vector2<f64>,
}

impl WeakPerspectiveCamera {
    pub fn new(scale: f64, translation: Vector2<f64>) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Input(format!("camera scale must be positive, got {scale}")));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::Numeric("camera translation".into()));
        }
        Ok(WeakPerspectiveCamera { scale, translation })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn translation(&self) -> Vector2<f64> {
        self.translation
    }

    pub fn project_point(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(p.x, p.y) * self.scale + self.translation
    }

    pub fn project(&self, points: &[Vector3<f64>]) -> Vec<Vector2<f64>> {
        points.iter().map(|p| self.project_point(p)).collect()
    }
}

impl Default for WeakPerspectiveCamera {
    fn default() -> Self {
        WeakPerspectiveCamera {
            scale: 1.0,
            translation: Vector2::zeros(),
        }
    }
}
