//! Fusing body-module and hand-module outputs into one whole-body parameter set.
//!
//! Body angles, shape and camera come from the body prediction and finger
//! angles from the hand predictions. Each wrist gets the local angle that makes
//! its forward-kinematics world rotation equal to the hand's global orientation.

use nalgebra::{Vector2, Vector3};

use crate::camera::WeakPerspectiveCamera;
use crate::error::{check_len, Error, Result};
use crate::kinematics::{gamma_global_to_local, rodrigues, AxisAngle};
use crate::model::{pose_mesh, ParametricModel, PoseParams, ShapeParams, Side, FINGER_JOINTS};

/// Output of the body module.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyPrediction {
    pub global_orient: AxisAngle,
    /// One angle per body joint (wrists included), in [`ParametricModel::body_joints`] order.
    pub body_pose: Vec<AxisAngle>,
    pub shape: ShapeParams,
    pub camera: WeakPerspectiveCamera,
}

/// Output of the hand module for one hand, already in that hand's original space.
#[derive(Debug, Clone, PartialEq)]
pub struct HandPrediction {
    pub side: Side,
    /// Global orientation of the hand.
    pub global_orient: AxisAngle,
    pub hand_pose: Vec<AxisAngle>,
    pub shape: ShapeParams,
    pub camera: WeakPerspectiveCamera,
}

/// Whole-body parameters: body, left-hand and right-hand angles plus shape and camera.
#[derive(Debug, Clone, PartialEq)]
pub struct WholeBodyParams {
    pub global_orient: AxisAngle,
    pub body_pose: Vec<AxisAngle>,
    pub left_hand_pose: Vec<AxisAngle>,
    pub right_hand_pose: Vec<AxisAngle>,
    pub shape: ShapeParams,
    pub camera: WeakPerspectiveCamera,
}

impl WholeBodyParams {
    pub fn zeros(model: &ParametricModel, camera: WeakPerspectiveCamera) -> Self {
        WholeBodyParams {
            global_orient: AxisAngle::zero(),
            body_pose: vec![AxisAngle::zero(); model.body_joints().len()],
            left_hand_pose: vec![AxisAngle::zero(); FINGER_JOINTS],
            right_hand_pose: vec![AxisAngle::zero(); FINGER_JOINTS],
            shape: ShapeParams::zeros(model.shape_dim()),
            camera,
        }
    }

    pub fn hand_pose(&self, side: Side) -> &[AxisAngle] {
        match side {
            Side::Left => &self.left_hand_pose,
            Side::Right => &self.right_hand_pose,
        }
    }

    pub fn hand_pose_mut(&mut self, side: Side) -> &mut Vec<AxisAngle> {
        match side {
            Side::Left => &mut self.left_hand_pose,
            Side::Right => &mut self.right_hand_pose,
        }
    }

    pub fn validate(&self, model: &ParametricModel) -> Result<()> {
        check_len("body pose", model.body_joints().len(), self.body_pose.len())?;
        check_len("left hand pose", FINGER_JOINTS, self.left_hand_pose.len())?;
        check_len("right hand pose", FINGER_JOINTS, self.right_hand_pose.len())?;
        check_len("shape coefficients", model.shape_dim(), self.shape.betas.len())?;
        let all_finite = std::iter::once(&self.global_orient)
            .chain(&self.body_pose)
            .chain(&self.left_hand_pose)
            .chain(&self.right_hand_pose)
            .all(AxisAngle::is_finite)
            && self.shape.betas.iter().all(|b| b.is_finite());
        if !all_finite {
            return Err(Error::Numeric("whole-body parameters".into()));
        }
        Ok(())
    }

    /// Scatters the partitioned angles into a per-joint pose.
    pub fn to_pose(&self, model: &ParametricModel) -> Result<PoseParams> {
        self.validate(model)?;
        let mut pose = PoseParams::zeros(model);
        pose.global_orient = self.global_orient;
        for (&j, aa) in model.body_joints().iter().zip(&self.body_pose) {
            pose.set_joint(j, *aa);
        }
        for side in [Side::Left, Side::Right] {
            if let Some(h) = model.hand_joints(side) {
                for (&j, aa) in h.fingers.iter().zip(self.hand_pose(side)) {
                    pose.set_joint(j, *aa);
                }
            }
        }
        Ok(pose)
    }

    /// Whole-body 3D keypoints (see [`ParametricModel::keypoint_regressor`]).
    pub fn keypoints_3d(&self, model: &ParametricModel) -> Result<Vec<Vector3<f64>>> {
        let posed = pose_mesh(model, &self.to_pose(model)?, &self.shape)?;
        Ok(model.keypoint_regressor().mul_points(&posed.vertices))
    }
}

fn wrist_slot(model: &ParametricModel, side: Side) -> Result<(usize, usize)> {
    let hand = model
        .hand_joints(side)
        .ok_or_else(|| Error::InvalidModel(format!("no {} hand joints declared", side.as_str())))?;
    let slot = model
        .body_joints()
        .iter()
        .position(|&j| j == hand.wrist)
        .expect("wrists are body joints");
    Ok((hand.wrist, slot))
}

fn check_hand(pred: Option<&HandPrediction>, expected: Side) -> Result<()> {
    if let Some(p) = pred {
        if p.side != expected {
            return Err(Error::Input(format!(
                "{} hand slot received a {} hand prediction",
                expected.as_str(),
                p.side.as_str()
            )));
        }
        check_len("hand pose", FINGER_JOINTS, p.hand_pose.len())?;
    }
    Ok(())
}

/// Copy-and-paste fusion with global-to-local wrist conversion.
///
/// A missing hand keeps the body module's wrist angle and gets a zero finger
/// pose. Hand shape coefficients are not used.
pub fn copy_paste(
    model: &ParametricModel,
    body: &BodyPrediction,
    left: Option<&HandPrediction>,
    right: Option<&HandPrediction>,
) -> Result<WholeBodyParams> {
    fuse(model, body, left, right, true)
}

/// Same as [`copy_paste`] but leaves the wrists at the body module's angles.
/// This is the starting point for optimisation-based fusion.
pub fn copy_paste_keep_wrists(
    model: &ParametricModel,
    body: &BodyPrediction,
    left: Option<&HandPrediction>,
    right: Option<&HandPrediction>,
) -> Result<WholeBodyParams> {
    fuse(model, body, left, right, false)
}

fn fuse(
    model: &ParametricModel,
    body: &BodyPrediction,
    left: Option<&HandPrediction>,
    right: Option<&HandPrediction>,
    convert_wrists: bool,
) -> Result<WholeBodyParams> {
    check_len("body pose", model.body_joints().len(), body.body_pose.len())?;
    check_len("shape coefficients", model.shape_dim(), body.shape.betas.len())?;
    check_hand(left, Side::Left)?;
    check_hand(right, Side::Right)?;

    let mut out = WholeBodyParams {
        global_orient: body.global_orient,
        body_pose: body.body_pose.clone(),
        left_hand_pose: vec![AxisAngle::zero(); FINGER_JOINTS],
        right_hand_pose: vec![AxisAngle::zero(); FINGER_JOINTS],
        shape: body.shape.clone(),
        camera: body.camera,
    };
    let body_only = out.to_pose(model)?;
    let local = body_only.local_poses();

    for (side, pred) in [(Side::Left, left), (Side::Right, right)] {
        let Some(pred) = pred else { continue };
        out.hand_pose_mut(side).clone_from(&pred.hand_pose);
        let beta_norm = pred.shape.betas.iter().map(|b| b * b).sum::<f64>().sqrt();
        log::debug!("discarding {} hand shape (|beta| = {beta_norm:.4})", side.as_str());
        if convert_wrists {
            let (wrist, slot) = wrist_slot(model, side)?;
            let target = rodrigues(&pred.global_orient);
            out.body_pose[slot] =
                gamma_global_to_local(model.tree(), &body.global_orient, &local, wrist, &target)?;
        }
    }
    Ok(out)
}

/// Square box in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub center: Vector2<f64>,
    pub side: f64,
}

impl BoundingBox {
    pub fn min(&self) -> Vector2<f64> {
        self.center - Vector2::repeat(self.side / 2.0)
    }

    pub fn max(&self) -> Vector2<f64> {
        self.center + Vector2::repeat(self.side / 2.0)
    }
}

/// Default enlargement of hand boxes.
pub const DEFAULT_BOX_MARGIN: f64 = 0.2;

/// Square box around a set of 2D points, enlarged by `margin_ratio`, never
/// smaller than one pixel.
pub fn square_box(points: &[Vector2<f64>], margin_ratio: f64) -> Result<BoundingBox> {
    if points.is_empty() {
        return Err(Error::Input("no points to box".into()));
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = (hi - lo).max();
    Ok(BoundingBox {
        center: (lo + hi) / 2.0,
        side: (extent * (1.0 + margin_ratio)).max(1.0),
    })
}

/// Hand crop obtained by projecting the hand keypoints of the posed body.
pub fn hand_bbox_from_body(
    model: &ParametricModel,
    params: &WholeBodyParams,
    cam: &WeakPerspectiveCamera,
    side: Side,
    margin_ratio: f64,
) -> Result<BoundingBox> {
    let rows = model
        .hand_keypoint_rows(side)
        .ok_or_else(|| Error::InvalidModel(format!("no {} hand joints declared", side.as_str())))?;
    let kp = params.keypoints_3d(model)?;
    let pts: Vec<Vector2<f64>> = rows.iter().map(|&r| cam.project_point(&kp[r])).collect();
    square_box(&pts, margin_ratio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_examples() {
        let pts = [Vector2::new(10.0, 10.0), Vector2::new(20.0, 30.0)];
        let b = square_box(&pts, 0.0).unwrap();
        assert_eq!(b.center, Vector2::new(15.0, 20.0));
        assert_eq!(b.side, 20.0);
        let b = square_box(&pts, 0.2).unwrap();
        assert!((b.side - 24.0).abs() < 1e-12);
        let b = square_box(&[Vector2::new(3.0, 4.0); 3], 0.2).unwrap();
        assert_eq!(b.side, 1.0);
        assert_eq!(b.center, Vector2::new(3.0, 4.0));
        assert!(square_box(&[], 0.2).is_err());
    }
}
