//! Training losses and PCK/AUC evaluation.

use nalgebra::{SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::kinematics::AxisAngle;

/// Σ ‖θ̂ − θ‖² over joints.
pub fn loss_theta(pred: &[AxisAngle], gt: &[AxisAngle]) -> Result<f64> {
    check_len("pose", gt.len(), pred.len())?;
    Ok(pred.iter().zip(gt).map(|(a, b)| (a.0 - b.0).norm_squared()).sum())
}

/// Σ ‖Ĵ − J‖² over 3D joints.
pub fn loss_3d(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<f64> {
    check_len("3D joints", gt.len(), pred.len())?;
    Ok(pred.iter().zip(gt).map(|(a, b)| (a - b).norm_squared()).sum())
}

/// Exponent applied to per-joint 2D distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm2d {
    #[default]
    Squared,
    Plain,
}

/// Σ ‖ĵ − j‖² (or Σ ‖ĵ − j‖ with [`Norm2d::Plain`]) over 2D joints.
pub fn loss_2d(pred: &[Vector2<f64>], gt: &[Vector2<f64>], norm: Norm2d) -> Result<f64> {
    check_len("2D joints", gt.len(), pred.len())?;
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(a, b)| match norm {
            Norm2d::Squared => (a - b).norm_squared(),
            Norm2d::Plain => (a - b).norm(),
        })
        .sum())
}

/// ‖β‖².
pub fn loss_reg(betas: &[f64]) -> f64 {
    betas.iter().map(|b| b * b).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub theta: f64,
    pub joints_3d: f64,
    pub joints_2d: f64,
    pub reg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub theta: f64,
    pub joints_3d: f64,
    pub joints_2d: f64,
    pub reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            theta: 10.0,
            joints_3d: 100.0,
            joints_2d: 10.0,
            reg: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.theta, self.joints_3d, self.joints_2d, self.reg]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
        {
            Ok(())
        } else {
            Err(Error::Input("loss weights must be finite and non-negative".into()))
        }
    }
}

/// λ₁L_θ + λ₂L_3D + λ₃L_2D + λ₄L_reg.
pub fn overall_loss(parts: &LossParts, weights: &LossWeights) -> Result<f64> {
    weights.validate()?;
    Ok(weights.theta * parts.theta
        + weights.joints_3d * parts.joints_3d
        + weights.joints_2d * parts.joints_2d
        + weights.reg * parts.reg)
}

/// Optional alignment applied to both joint sets before measuring errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alignment {
    #[default]
    None,
    /// Subtract the given joint from every joint of each set.
    RootRelative(usize),
}

/// Per-joint Euclidean errors after alignment.
pub fn joint_errors<const D: usize>(
    pred: &[SVector<f64, D>],
    gt: &[SVector<f64, D>],
    align: Alignment,
) -> Result<Vec<f64>> {
    check_len("joints", gt.len(), pred.len())?;
    let (rp, rg) = match align {
        Alignment::None => (SVector::zeros(), SVector::zeros()),
        Alignment::RootRelative(r) => {
            if r >= gt.len() {
                return Err(Error::Input(format!("root joint {r} out of range")));
            }
            (pred[r], gt[r])
        }
    };
    let errs: Vec<f64> = pred.iter().zip(gt).map(|(a, b)| ((a - rp) - (b - rg)).norm()).collect();
    if errs.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numeric("joint error".into()));
    }
    Ok(errs)
}

/// Fraction of errors strictly below `threshold`.
///
/// At a threshold of exactly zero the right limit is returned (the fraction of
/// exact matches), so a curve starting at zero is continuous from the right.
pub fn pck_from_errors(errors: &[f64], threshold: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Input("no joints to evaluate".into()));
    }
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::Input(format!("invalid PCK threshold {threshold}")));
    }
    let hits = if threshold == 0.0 {
        errors.iter().filter(|e| **e == 0.0).count()
    } else {
        errors.iter().filter(|e| **e < threshold).count()
    };
    Ok(hits as f64 / errors.len() as f64)
}

pub fn pck<const D: usize>(
    pred: &[SVector<f64, D>],
    gt: &[SVector<f64, D>],
    threshold: f64,
    align: Alignment,
) -> Result<f64> {
    pck_from_errors(&joint_errors(pred, gt, align)?, threshold)
}

/// PCK sampled over ascending thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PckCurve {
    thresholds: Vec<f64>,
    values: Vec<f64>,
}

impl PckCurve {
    pub fn new(thresholds: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_len("PCK values", thresholds.len(), values.len())?;
        if thresholds.len() < 2 {
            return Err(Error::Input("a PCK curve needs at least two thresholds".into()));
        }
        if thresholds.iter().any(|t| !t.is_finite()) || thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input("thresholds must be finite and strictly ascending".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Input("PCK values must lie in [0, 1]".into()));
        }
        Ok(PckCurve { thresholds, values })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Default number of thresholds sampled across an evaluation range.
pub const DEFAULT_THRESHOLD_COUNT: usize = 100;

/// 3D range in millimetres.
pub const RANGE_3D_MM: (f64, f64) = (20.0, 50.0);
/// 2D range in pixels.
pub const RANGE_2D_PX: (f64, f64) = (0.0, 30.0);

/// `count` evenly spaced thresholds from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 || !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Input(format!("invalid threshold range {lo}..{hi} ({count} samples)")));
    }
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| if i + 1 == count { hi } else { lo + step * i as f64 })
        .collect())
}

pub fn pck_curve_from_errors(errors: &[f64], thresholds: &[f64]) -> Result<PckCurve> {
    let values = thresholds
        .iter()
        .map(|t| pck_from_errors(errors, *t))
        .collect::<Result<Vec<_>>>()?;
    PckCurve::new(thresholds.to_vec(), values)
}

pub fn pck_curve<const D: usize>(
    pred: &[SVector<f64, D>],
    gt: &[SVector<f64, D>],
    thresholds: &[f64],
    align: Alignment,
) -> Result<PckCurve> {
    pck_curve_from_errors(&joint_errors(pred, gt, align)?, thresholds)
}

/// Trapezoidal area under the curve divided by the threshold range.
pub fn auc(curve: &PckCurve) -> f64 {
    let t = &curve.thresholds;
    let v = &curve.values;
    let area: f64 = (1..t.len()).map(|i| (t[i] - t[i - 1]) * (v[i] + v[i - 1]) / 2.0).sum();
    area / (t[t.len() - 1] - t[0])
}
