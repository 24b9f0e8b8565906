//! Rotations, skeleton trees and forward kinematics.
//!
//! Every pose angle is an axis-angle vector holding the rotation of a joint
//! relative to its parent. A joint's local transform rotates about the joint's
//! rest position and translates by the rest offset from its parent, so a skeleton
//! with all-zero rotations reproduces its rest joints.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{check_len, Error, Result};

/// Orthonormality tolerance applied to rotation matrices read from outside.
pub const INPUT_ROTATION_TOLERANCE: f64 = 1e-6;

const SMALL_ANGLE: f64 = 1e-4;

/// Axis-angle rotation: direction is the axis, magnitude the angle in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AxisAngle(pub Vector3<f64>);

impl AxisAngle {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        AxisAngle(Vector3::new(x, y, z))
    }

    pub fn zero() -> Self {
        AxisAngle(Vector3::zeros())
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        AxisAngle(Vector3::new(v[0], v[1], v[2]))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        rodrigues(self)
    }

    /// Maps the vector to the equivalent rotation with angle in `[0, π]`.
    ///
    /// At exactly π the axis is chosen so its first nonzero component is
    /// positive. Vectors that are already canonical are returned bit-for-bit.
    pub fn canonical(self) -> AxisAngle {
        let angle = self.angle();
        if angle < PI {
            return self;
        }
        if angle == PI {
            return AxisAngle(positive_axis(self.0));
        }
        let axis = self.0 / angle;
        let wrapped = angle.rem_euclid(2.0 * PI);
        if wrapped <= PI {
            let v = axis * wrapped;
            if wrapped == PI {
                AxisAngle(positive_axis(v))
            } else {
                AxisAngle(v)
            }
        } else {
            AxisAngle(-axis * (2.0 * PI - wrapped))
        }
    }
}

fn positive_axis(v: Vector3<f64>) -> Vector3<f64> {
    let first = v.iter().copied().find(|c| *c != 0.0).unwrap_or(0.0);
    if first < 0.0 {
        -v
    } else {
        v
    }
}

/// Cross-product matrix `[v]×`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix of an axis-angle vector (Rodrigues' formula).
pub fn rodrigues(aa: &AxisAngle) -> Matrix3<f64> {
    let v = aa.0;
    let theta2 = v.norm_squared();
    if theta2 == 0.0 {
        return Matrix3::identity();
    }
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = skew(&v);
    Matrix3::identity() + k * a + k * k * b
}

/// Left Jacobian of SO(3): `∂R/∂v_i = [J_l(v) e_i]× R(v)`.
pub fn left_jacobian(aa: &AxisAngle) -> Matrix3<f64> {
    let v = aa.0;
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    let k = skew(&v);
    Matrix3::identity() + k * a + k * k * b
}

/// Largest elementwise deviation of `m` from being a proper rotation.
pub fn rotation_deviation(m: &Matrix3<f64>) -> f64 {
    let orth = (m.transpose() * m - Matrix3::identity()).abs().max();
    orth.max((m.determinant() - 1.0).abs())
}

/// Inverse of [`rodrigues`], returning the canonical axis-angle.
pub fn rotation_to_axis_angle(r: &Matrix3<f64>) -> Result<AxisAngle> {
    if !r.iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidRotation {
            deviation: f64::INFINITY,
        });
    }
    let deviation = rotation_deviation(r);
    if deviation > INPUT_ROTATION_TOLERANCE {
        return Err(Error::InvalidRotation { deviation });
    }
    let w = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    ) * 0.5;
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin = w.norm();
    let theta = sin.atan2(cos);
    if theta < SMALL_ANGLE {
        // sin θ / θ ≈ 1 − θ²/6
        return Ok(AxisAngle(w * (1.0 + theta * theta / 6.0)));
    }
    if cos > -0.99 {
        return Ok(AxisAngle(w * (theta / sin)).canonical());
    }
    // Near π the skew part vanishes; recover the axis from the symmetric part,
    // S = cos θ I + (1 − cos θ) a aᵀ.
    let sym = (r + r.transpose()) * 0.5;
    let outer = (sym - Matrix3::identity() * cos) / (1.0 - cos);
    let mut best = 0;
    for i in 1..3 {
        if outer[(i, i)] > outer[(best, best)] {
            best = i;
        }
    }
    let mut axis: Vector3<f64> = outer.column(best).into();
    axis /= axis.norm();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    Ok(AxisAngle(axis * theta).canonical())
}

/// Rotation plus translation acting as `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// Kinematic tree with joints stored in topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTree {
    parents: Vec<Option<usize>>,
    names: Vec<String>,
}

impl SkeletonTree {
    /// Validates that joint 0 is the only root and every parent precedes its child.
    pub fn new(parents: Vec<Option<usize>>, names: Vec<String>) -> Result<Self> {
        if parents.is_empty() {
            return Err(Error::InvalidSkeleton("no joints".into()));
        }
        check_len("joint names", parents.len(), names.len())?;
        if parents[0].is_some() {
            return Err(Error::InvalidSkeleton("joint 0 must be the root".into()));
        }
        for (j, p) in parents.iter().enumerate().skip(1) {
            match p {
                None => {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint {j} is a second root"
                    )))
                }
                Some(p) if *p >= j => {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint {j} has parent {p}; parents must precede children"
                    )))
                }
                _ => {}
            }
        }
        Ok(SkeletonTree { parents, names })
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, joint: usize) -> &str {
        &self.names[joint]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// True when `ancestor` lies on the path from `joint` to the root (inclusive).
    pub fn is_ancestor_or_self(&self, ancestor: usize, joint: usize) -> bool {
        let mut cur = Some(joint);
        while let Some(j) = cur {
            if j == ancestor {
                return true;
            }
            if j < ancestor {
                return false;
            }
            cur = self.parents[j];
        }
        false
    }
}

fn local_rotations(global_orient: &AxisAngle, local_poses: &[AxisAngle]) -> Vec<Matrix3<f64>> {
    let mut rots: Vec<Matrix3<f64>> = local_poses.iter().map(rodrigues).collect();
    rots[0] = rodrigues(global_orient) * rots[0];
    rots
}

/// World rotation of every joint; positions are not needed for this.
pub fn world_rotations(
    tree: &SkeletonTree,
    global_orient: &AxisAngle,
    local_poses: &[AxisAngle],
) -> Result<Vec<Matrix3<f64>>> {
    check_len("local poses", tree.len(), local_poses.len())?;
    let mut rots = local_rotations(global_orient, local_poses);
    for j in 1..tree.len() {
        let p = tree.parents[j].expect("validated tree");
        rots[j] = rots[p] * rots[j];
    }
    Ok(rots)
}

/// World transform of each joint frame.
///
/// `local_poses` holds one entry per joint, the root included; the root is
/// additionally rotated by `global_orient` about its rest position.
pub fn forward_kinematics(
    tree: &SkeletonTree,
    rest_joints: &[Vector3<f64>],
    global_orient: &AxisAngle,
    local_poses: &[AxisAngle],
) -> Result<Vec<RigidTransform>> {
    check_len("rest joints", tree.len(), rest_joints.len())?;
    check_len("local poses", tree.len(), local_poses.len())?;
    let rots = local_rotations(global_orient, local_poses);
    let mut world = Vec::with_capacity(tree.len());
    world.push(RigidTransform::new(rots[0], rest_joints[0]));
    for j in 1..tree.len() {
        let p = tree.parents[j].expect("validated tree");
        let local = RigidTransform::new(rots[j], rest_joints[j] - rest_joints[p]);
        let w = world[p].compose(&local);
        world.push(w);
    }
    Ok(world)
}

/// Local pose for `target_joint` that makes its world rotation equal `target_global`.
///
/// Only the ancestors of the target matter, so the target's own entry in
/// `local_poses` is ignored.
pub fn gamma_global_to_local(
    tree: &SkeletonTree,
    global_orient: &AxisAngle,
    local_poses: &[AxisAngle],
    target_joint: usize,
    target_global: &Matrix3<f64>,
) -> Result<AxisAngle> {
    if target_joint >= tree.len() {
        return Err(Error::InvalidJoint(format!(
            "joint {target_joint} out of range for {} joints",
            tree.len()
        )));
    }
    let Some(parent) = tree.parent(target_joint) else {
        return Err(Error::InvalidJoint("the root has no parent frame".into()));
    };
    let rots = world_rotations(tree, global_orient, local_poses)?;
    rotation_to_axis_angle(&(rots[parent].transpose() * target_global))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    mod approx_eq {
        use nalgebra::{Matrix3, Vector3};

        pub fn max_diff3(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
            (a - b).abs().max()
        }

        pub fn vdiff(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
            (a - b).abs().max()
        }
    }

    // Quaternion rotation of a point, independent of the matrix path.
    fn quat_rotate(aa: [f64; 3], p: Vector3<f64>) -> Vector3<f64> {
        let v = Vector3::from(aa);
        let th = v.norm();
        if th == 0.0 {
            return p;
        }
        let axis = v / th;
        let (w, q) = ((th / 2.0).cos(), axis * (th / 2.0).sin());
        // p' = p + 2w (q × p) + 2 q × (q × p)
        let t = q.cross(&p) * 2.0;
        p + t * w + q.cross(&t)
    }

    fn random_aa(rng: &mut ChaCha8Rng, max_angle: f64) -> AxisAngle {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        AxisAngle(axis * rng.random_range(0.0..max_angle))
    }

    #[test]
    fn rodrigues_zero_is_identity() {
        assert_eq!(rodrigues(&AxisAngle::zero()), Matrix3::identity());
    }

    #[test]
    fn rodrigues_quarter_turn_about_x() {
        let r = rodrigues(&AxisAngle::new(PI / 2.0, 0.0, 0.0));
        let p = r * Vector3::new(0.0, 1.0, 0.0);
        assert!(vdiff(&p, &Vector3::new(0.0, 0.0, 1.0)) < 1e-15);
    }

    #[test]
    fn rodrigues_half_turn_about_z_matches_quaternion() {
        let r = rodrigues(&AxisAngle::new(0.0, 0.0, PI));
        let p = r * Vector3::new(1.0, 0.0, 0.0);
        let q = quat_rotate([0.0, 0.0, PI], Vector3::new(1.0, 0.0, 0.0));
        assert!(vdiff(&p, &Vector3::new(-1.0, 0.0, 0.0)) < 1e-15);
        assert!(vdiff(&p, &q) < 1e-15);
    }

    #[test]
    fn rodrigues_agrees_with_quaternions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let aa = random_aa(&mut rng, 3.0 * PI);
            let p = Vector3::new(0.3, -1.2, 2.0);
            let a = rodrigues(&aa) * p;
            let b = quat_rotate(aa.to_array(), p);
            assert!(vdiff(&a, &b) < 1e-12);
        }
    }

    #[test]
    fn identity_maps_to_zero() {
        let aa = rotation_to_axis_angle(&Matrix3::identity()).unwrap();
        assert_eq!(aa, AxisAngle::zero());
    }

    #[test]
    fn round_trip_small_vector() {
        let v = AxisAngle::new(0.3, -0.1, 0.2);
        let back = rotation_to_axis_angle(&rodrigues(&v)).unwrap();
        assert!(vdiff(&back.0, &v.0) < 1e-6);
    }

    #[test]
    fn half_turn_about_z_uses_positive_axis() {
        // R = diag(-1,-1,1), built directly rather than through rodrigues.
        let r = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        let aa = rotation_to_axis_angle(&r).unwrap();
        assert!(vdiff(&aa.0, &Vector3::new(0.0, 0.0, PI)) < 1e-12);
        let r = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
        let aa = rotation_to_axis_angle(&r).unwrap();
        assert!(vdiff(&aa.0, &Vector3::new(PI, 0.0, 0.0)) < 1e-12);
    }

    #[test]
    fn near_pi_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let axis = random_aa(&mut rng, 1.0).0.normalize();
            let aa = AxisAngle(axis * (PI - rng.random_range(0.0..1e-3)));
            let r = rodrigues(&aa);
            let back = rotation_to_axis_angle(&r).unwrap();
            assert!(max_diff3(&rodrigues(&back), &r) < 1e-9);
        }
    }

    #[test]
    fn rejects_non_rotation() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 1.01));
        assert!(matches!(
            rotation_to_axis_angle(&m),
            Err(Error::InvalidRotation { .. })
        ));
        let reflection = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        assert!(rotation_to_axis_angle(&reflection).is_err());
    }

    #[test]
    fn canonical_is_idempotent_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let aa = random_aa(&mut rng, 20.0);
            let c = aa.canonical();
            assert!(c.angle() <= PI + 1e-12);
            assert_eq!(c.canonical(), c);
            assert!(max_diff3(&rodrigues(&c), &rodrigues(&aa)) < 1e-9);
        }
        let flipped = AxisAngle::new(0.0, -PI, 0.0).canonical();
        assert_eq!(flipped, AxisAngle::new(0.0, PI, 0.0));
    }

    #[test]
    fn left_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let aa = random_aa(&mut rng, 3.0);
            let r = rodrigues(&aa);
            let jl = left_jacobian(&aa);
            for i in 0..3 {
                let mut e = Vector3::zeros();
                e[i] = 1e-6;
                let fd = (rodrigues(&AxisAngle(aa.0 + e)) - rodrigues(&AxisAngle(aa.0 - e)))
                    / 2e-6;
                let analytic = skew(&jl.column(i).into()) * r;
                assert!(max_diff3(&fd, &analytic) < 1e-7);
            }
        }
    }

    #[test]
    fn skeleton_validation() {
        let names = |n: usize| (0..n).map(|i| format!("j{i}")).collect::<Vec<_>>();
        assert!(SkeletonTree::new(vec![None, Some(0), Some(1)], names(3)).is_ok());
        assert!(SkeletonTree::new(vec![Some(0)], names(1)).is_err());
        assert!(SkeletonTree::new(vec![None, None], names(2)).is_err());
        assert!(SkeletonTree::new(vec![None, Some(2), Some(0)], names(3)).is_err());
        assert!(SkeletonTree::new(vec![None, Some(1)], names(2)).is_err());
        assert!(SkeletonTree::new(vec![], vec![]).is_err());
    }

    fn chain2() -> (SkeletonTree, Vec<Vector3<f64>>) {
        let tree = SkeletonTree::new(vec![None, Some(0)], vec!["a".into(), "b".into()]).unwrap();
        (tree, vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)])
    }

    #[test]
    fn fk_rest_pose_reproduces_rest_joints() {
        let (tree, rest) = chain2();
        let world =
            forward_kinematics(&tree, &rest, &AxisAngle::zero(), &[AxisAngle::zero(); 2]).unwrap();
        for (w, r) in world.iter().zip(&rest) {
            assert_eq!(w.translation, *r);
            assert_eq!(w.rotation, Matrix3::identity());
        }
    }

    #[test]
    fn fk_two_joint_chain_quarter_turn() {
        let (tree, rest) = chain2();
        let poses = [AxisAngle::new(0.0, 0.0, PI / 2.0), AxisAngle::zero()];
        let world = forward_kinematics(&tree, &rest, &AxisAngle::zero(), &poses).unwrap();
        assert!(vdiff(&world[1].translation, &Vector3::new(0.0, 1.0, 0.0)) < 1e-15);
    }

    #[test]
    fn fk_global_half_turn_negates_xy() {
        let tree = SkeletonTree::new(
            vec![None, Some(0), Some(0), Some(1)],
            (0..4).map(|i| i.to_string()).collect(),
        )
        .unwrap();
        let rest = vec![
            Vector3::zeros(),
            Vector3::new(0.2, 0.5, -0.1),
            Vector3::new(-0.3, 0.1, 0.4),
            Vector3::new(0.7, 0.9, 0.2),
        ];
        let world = forward_kinematics(
            &tree,
            &rest,
            &AxisAngle::new(0.0, 0.0, PI),
            &[AxisAngle::zero(); 4],
        )
        .unwrap();
        for (w, p) in world.iter().zip(&rest) {
            assert!(vdiff(&w.translation, &Vector3::new(-p.x, -p.y, p.z)) < 1e-15);
        }
    }

    #[test]
    fn fk_dimension_errors() {
        let (tree, rest) = chain2();
        assert!(matches!(
            forward_kinematics(&tree, &rest, &AxisAngle::zero(), &[AxisAngle::zero()]),
            Err(Error::Dimension { .. })
        ));
        assert!(forward_kinematics(&tree, &rest[..1], &AxisAngle::zero(), &[AxisAngle::zero(); 2])
            .is_err());
    }

    #[test]
    fn gamma_with_identity_ancestors() {
        let (tree, _) = chain2();
        let target = rodrigues(&AxisAngle::new(0.2, -0.4, 0.1));
        let aa = gamma_global_to_local(&tree, &AxisAngle::zero(), &[AxisAngle::zero(); 2], 1, &target)
            .unwrap();
        let expect = rotation_to_axis_angle(&target).unwrap();
        assert!(vdiff(&aa.0, &expect.0) < 1e-15);
    }

    #[test]
    fn gamma_is_parent_transpose_times_target() {
        let (tree, _) = chain2();
        let parent = AxisAngle::new(0.5, 0.1, -0.3);
        let target = rodrigues(&AxisAngle::new(-0.2, 0.7, 0.4));
        let aa = gamma_global_to_local(&tree, &parent, &[AxisAngle::zero(); 2], 1, &target).unwrap();
        let direct = rodrigues(&parent).transpose() * target;
        assert!(max_diff3(&rodrigues(&aa), &direct) < 1e-12);
    }

    #[test]
    fn gamma_rejects_root() {
        let (tree, _) = chain2();
        assert!(matches!(
            gamma_global_to_local(
                &tree,
                &AxisAngle::zero(),
                &[AxisAngle::zero(); 2],
                0,
                &Matrix3::identity()
            ),
            Err(Error::InvalidJoint(_))
        ));
    }

    #[test]
    fn rigid_transform_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = RigidTransform::new(
            rodrigues(&random_aa(&mut rng, 3.0)),
            Vector3::new(1.0, -2.0, 0.5),
        );
        let id = t.compose(&t.inverse());
        assert!(max_diff3(&id.rotation, &Matrix3::identity()) < 1e-12);
        assert!(id.translation.norm() < 1e-12);
    }
}
