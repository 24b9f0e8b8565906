//! Parametric mesh model: shape blendshapes, linear blend skinning, joint
//! regression and extraction of stand-alone hand submodels.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::kinematics::{forward_kinematics, AxisAngle, RigidTransform, SkeletonTree};
use crate::sparse::SparseMatrix;

const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Finger joints per hand (three per finger).
pub const FINGER_JOINTS: usize = 15;
/// Fingertips per hand.
pub const FINGERTIPS: usize = 5;
/// Rows of the hand joint regressor: wrist, finger joints and fingertips.
pub const HAND_KEYPOINTS: usize = 1 + FINGER_JOINTS + FINGERTIPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// A value for each hand.
#[derive(Debug, Clone, PartialEq)]
pub struct PerSide<T> {
    pub left: T,
    pub right: T,
}

impl<T> PerSide<T> {
    pub fn get(&self, side: Side) -> &T {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

/// Wrist joint and the 15 finger joints of one hand, in skeleton order.
#[derive(Debug, Clone, PartialEq)]
pub struct HandJoints {
    pub wrist: usize,
    pub fingers: Vec<usize>,
}

/// Raw components of a model, validated by [`ParametricModel::new`].
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub template_vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    /// One displacement field per shape coefficient.
    pub shape_basis: Vec<Vec<Vector3<f64>>>,
    /// Vertices × joints.
    pub skin_weights: SparseMatrix,
    /// Regressed points × vertices. The first rows give the skeleton joints,
    /// any further rows are extra keypoints.
    pub joint_regressor: SparseMatrix,
    pub tree: SkeletonTree,
    pub hand_joints: Option<PerSide<HandJoints>>,
    pub fingertip_vertices: Option<PerSide<Vec<usize>>>,
    pub reference_knuckle_length: Option<f64>,
}

/// Immutable parametric model; shared read-only across threads.
#[derive(Debug, Clone)]
pub struct ParametricModel {
    parts: ModelParts,
    body_joints: Vec<usize>,
}

impl ParametricModel {
    pub fn new(parts: ModelParts) -> Result<Self> {
        let n = parts.template_vertices.len();
        let j = parts.tree.len();
        if n == 0 {
            return Err(Error::InvalidModel("model has no vertices".into()));
        }
        if parts.template_vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Numeric("template vertex".into()));
        }
        for f in &parts.faces {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidModel(format!("face {f:?} out of range")));
            }
        }
        for (k, basis) in parts.shape_basis.iter().enumerate() {
            check_len("shape basis vertices", n, basis.len())?;
            if basis.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
                return Err(Error::Numeric(format!("shape basis component {k}")));
            }
        }

        let w = &parts.skin_weights;
        check_len("skin weight rows", n, w.rows())?;
        check_len("skin weight columns", j, w.cols())?;
        for v in 0..n {
            if w.row(v).any(|(_, x)| x < 0.0) {
                return Err(Error::InvalidModel(format!("negative skin weight on vertex {v}")));
            }
            let s = w.row_sum(v);
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidModel(format!(
                    "skin weights of vertex {v} sum to {s}"
                )));
            }
        }

        let reg = &parts.joint_regressor;
        check_len("joint regressor columns", n, reg.cols())?;
        if reg.rows() < j {
            return Err(Error::InvalidModel(format!(
                "joint regressor has {} rows for {j} joints",
                reg.rows()
            )));
        }
        for r in 0..reg.rows() {
            let s = reg.row_sum(r);
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidModel(format!(
                    "joint regressor row {r} sums to {s}"
                )));
            }
        }

        if let Some(hands) = &parts.hand_joints {
            let mut seen = vec![false; j];
            for side in [Side::Left, Side::Right] {
                let h = hands.get(side);
                check_len("finger joints", FINGER_JOINTS, h.fingers.len())?;
                for &idx in std::iter::once(&h.wrist).chain(&h.fingers) {
                    if idx >= j || idx == 0 {
                        return Err(Error::InvalidModel(format!(
                            "{} hand joint {idx} is out of range or the root",
                            side.as_str()
                        )));
                    }
                    if std::mem::replace(&mut seen[idx], true) {
                        return Err(Error::InvalidModel(format!("hand joint {idx} listed twice")));
                    }
                }
                for &f in &h.fingers {
                    if !parts.tree.is_ancestor_or_self(h.wrist, f) {
                        return Err(Error::InvalidModel(format!(
                            "finger joint {f} does not descend from wrist {}",
                            h.wrist
                        )));
                    }
                }
            }
        }
        if let Some(tips) = &parts.fingertip_vertices {
            for side in [Side::Left, Side::Right] {
                let t = tips.get(side);
                check_len("fingertip vertices", FINGERTIPS, t.len())?;
                if let Some(bad) = t.iter().find(|&&v| v >= n) {
                    return Err(Error::InvalidModel(format!("fingertip vertex {bad} out of range")));
                }
            }
        }
        if let Some(len) = parts.reference_knuckle_length {
            if !(len.is_finite() && len > 0.0) {
                return Err(Error::InvalidModel(format!("reference knuckle length {len}")));
            }
        }

        let body_joints = (1..j)
            .filter(|idx| {
                parts.hand_joint_ids().is_none_or(|hands| {
                    !hands.left.fingers.contains(idx) && !hands.right.fingers.contains(idx)
                })
            })
            .collect();
        Ok(ParametricModel { parts, body_joints })
    }

    pub fn parts(&self) -> &ModelParts {
        &self.parts
    }

    pub fn into_parts(self) -> ModelParts {
        self.parts
    }

    pub fn vertex_count(&self) -> usize {
        self.parts.template_vertices.len()
    }

    pub fn joint_count(&self) -> usize {
        self.parts.tree.len()
    }

    pub fn shape_dim(&self) -> usize {
        self.parts.shape_basis.len()
    }

    pub fn tree(&self) -> &SkeletonTree {
        &self.parts.tree
    }

    pub fn template_vertices(&self) -> &[Vector3<f64>] {
        &self.parts.template_vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.parts.faces
    }

    pub fn skin_weights(&self) -> &SparseMatrix {
        &self.parts.skin_weights
    }

    pub fn joint_regressor(&self) -> &SparseMatrix {
        &self.parts.joint_regressor
    }

    pub fn shape_basis(&self) -> &[Vec<Vector3<f64>>] {
        &self.parts.shape_basis
    }

    pub fn hand_joints(&self, side: Side) -> Option<&HandJoints> {
        self.parts.hand_joints.as_ref().map(|h| h.get(side))
    }

    pub fn fingertip_vertices(&self, side: Side) -> Option<&[usize]> {
        self.parts
            .fingertip_vertices
            .as_ref()
            .map(|t| t.get(side).as_slice())
    }

    pub fn reference_knuckle_length(&self) -> Option<f64> {
        self.parts.reference_knuckle_length
    }

    /// Non-root joints that are not finger joints, ascending. Wrists are included.
    pub fn body_joints(&self) -> &[usize] {
        &self.body_joints
    }

    /// Sparse map from vertices to every keypoint the model exposes: all
    /// regressor rows followed by the fingertip vertices (left, then right).
    pub fn keypoint_regressor(&self) -> SparseMatrix {
        let reg = &self.parts.joint_regressor;
        let mut triplets: Vec<(usize, usize, f64)> = reg.triplets().collect();
        let mut rows = reg.rows();
        if let Some(tips) = &self.parts.fingertip_vertices {
            for &v in tips.left.iter().chain(&tips.right) {
                triplets.push((rows, v, 1.0));
                rows += 1;
            }
        }
        SparseMatrix::from_triplets(rows, self.vertex_count(), &triplets)
            .expect("indices validated at construction")
    }

    /// Names matching the rows of [`keypoint_regressor`](Self::keypoint_regressor).
    pub fn keypoint_names(&self) -> Vec<String> {
        let tree = &self.parts.tree;
        let mut names: Vec<String> = (0..self.parts.joint_regressor.rows())
            .map(|r| {
                if r < tree.len() {
                    tree.name(r).to_string()
                } else {
                    format!("extra_{r}")
                }
            })
            .collect();
        if let Some(tips) = &self.parts.fingertip_vertices {
            for (side, t) in [(Side::Left, &tips.left), (Side::Right, &tips.right)] {
                for i in 0..t.len() {
                    names.push(format!("{}_tip{}", side.as_str(), i + 1));
                }
            }
        }
        names
    }

    /// Keypoint rows belonging to one hand: wrist, fingers, then fingertips.
    pub fn hand_keypoint_rows(&self, side: Side) -> Option<Vec<usize>> {
        let h = self.hand_joints(side)?;
        let mut rows: Vec<usize> = std::iter::once(h.wrist).chain(h.fingers.iter().copied()).collect();
        if self.parts.fingertip_vertices.is_some() {
            let base = self.parts.joint_regressor.rows()
                + match side {
                    Side::Left => 0,
                    Side::Right => FINGERTIPS,
                };
            rows.extend(base..base + FINGERTIPS);
        }
        Some(rows)
    }
}

impl ModelParts {
    fn hand_joint_ids(&self) -> Option<&PerSide<HandJoints>> {
        self.hand_joints.as_ref()
    }
}

/// Global orientation plus one local rotation per non-root joint, in joint order.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseParams {
    pub global_orient: AxisAngle,
    pub joint_poses: Vec<AxisAngle>,
}

impl PoseParams {
    pub fn zeros(model: &ParametricModel) -> Self {
        PoseParams {
            global_orient: AxisAngle::zero(),
            joint_poses: vec![AxisAngle::zero(); model.joint_count() - 1],
        }
    }

    /// Per-joint local rotations including a zero slot for the root.
    pub fn local_poses(&self) -> Vec<AxisAngle> {
        std::iter::once(AxisAngle::zero())
            .chain(self.joint_poses.iter().copied())
            .collect()
    }

    pub fn joint(&self, joint: usize) -> AxisAngle {
        self.joint_poses[joint - 1]
    }

    pub fn set_joint(&mut self, joint: usize, aa: AxisAngle) {
        self.joint_poses[joint - 1] = aa;
    }
}

/// Shape coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShapeParams {
    pub betas: Vec<f64>,
}

impl ShapeParams {
    pub fn zeros(dim: usize) -> Self {
        ShapeParams {
            betas: vec![0.0; dim],
        }
    }

    pub fn new(betas: Vec<f64>) -> Self {
        ShapeParams { betas }
    }
}

/// Template plus the shape-coefficient-weighted blendshapes.
pub fn shape_template(model: &ParametricModel, shape: &ShapeParams) -> Result<Vec<Vector3<f64>>> {
    check_len("shape coefficients", model.shape_dim(), shape.betas.len())?;
    let mut out = model.template_vertices().to_vec();
    for (beta, basis) in shape.betas.iter().zip(model.shape_basis()) {
        if *beta == 0.0 {
            continue;
        }
        for (v, d) in out.iter_mut().zip(basis) {
            *v += d * *beta;
        }
    }
    Ok(out)
}

/// `regressor · vertices`.
pub fn regress_joints(regressor: &SparseMatrix, vertices: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>> {
    check_len("regressor columns", regressor.cols(), vertices.len())?;
    Ok(regressor.mul_points(vertices))
}

/// Rest-pose skeleton joints of a shaped mesh.
pub fn rest_joints(model: &ParametricModel, shaped: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>> {
    let mut joints = regress_joints(model.joint_regressor(), shaped)?;
    joints.truncate(model.joint_count());
    Ok(joints)
}

/// Linear blend skinning of rest-pose vertices with per-joint world transforms.
pub fn skin_vertices(
    weights: &SparseMatrix,
    shaped: &[Vector3<f64>],
    rest_joints: &[Vector3<f64>],
    world: &[RigidTransform],
) -> Vec<Vector3<f64>> {
    shaped
        .iter()
        .enumerate()
        .map(|(v, p)| {
            weights.row(v).fold(Vector3::zeros(), |acc, (j, w)| {
                let t = &world[j];
                acc + (t.rotation * (p - rest_joints[j]) + t.translation) * w
            })
        })
        .collect()
}

/// Output of [`pose_mesh`].
#[derive(Debug, Clone)]
pub struct PosedMesh {
    pub vertices: Vec<Vector3<f64>>,
    /// World transform of each skeleton joint frame.
    pub joint_transforms: Vec<RigidTransform>,
    /// Rest joints of the shaped template.
    pub rest_joints: Vec<Vector3<f64>>,
}

/// Shapes, poses and skins the model.
pub fn pose_mesh(model: &ParametricModel, pose: &PoseParams, shape: &ShapeParams) -> Result<PosedMesh> {
    check_len("joint poses", model.joint_count() - 1, pose.joint_poses.len())?;
    let shaped = shape_template(model, shape)?;
    let rest = rest_joints(model, &shaped)?;
    let world = forward_kinematics(model.tree(), &rest, &pose.global_orient, &pose.local_poses())?;
    let vertices = skin_vertices(model.skin_weights(), &shaped, &rest, &world);
    Ok(PosedMesh {
        vertices,
        joint_transforms: world,
        rest_joints: rest,
    })
}

/// A hand cut out of a whole-body model, usable as a stand-alone model.
///
/// The submodel skeleton is rooted at the wrist, followed by the 15 finger
/// joints; its global orientation is the hand's global orientation. The
/// regressor has 21 rows: wrist, finger joints and five fingertips.
#[derive(Debug, Clone)]
pub struct HandSubmodel {
    pub side: Side,
    pub model: ParametricModel,
    /// Submodel vertex → parent model vertex.
    pub vertex_map: Vec<usize>,
    /// Submodel joint → parent model joint.
    pub joint_map: Vec<usize>,
}

/// Index of the closest joint; ties go to the lower joint index.
pub fn nearest_joint(p: &Vector3<f64>, joints: &[Vector3<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, q) in joints.iter().enumerate() {
        let d = (p - q).norm_squared();
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Crops the vertices whose nearest rest joint is the side's wrist or one of
/// its finger joints, and builds the matching hand model.
pub fn extract_hand_submodel(model: &ParametricModel, side: Side) -> Result<HandSubmodel> {
    let hand = model
        .hand_joints(side)
        .ok_or_else(|| Error::InvalidModel(format!("no {} hand joints declared", side.as_str())))?;
    let joint_map: Vec<usize> = std::iter::once(hand.wrist).chain(hand.fingers.iter().copied()).collect();
    let mut sub_joint = vec![None; model.joint_count()];
    for (s, &p) in joint_map.iter().enumerate() {
        sub_joint[p] = Some(s);
    }

    let rest = rest_joints(model, model.template_vertices())?;
    let vertex_map: Vec<usize> = model
        .template_vertices()
        .iter()
        .enumerate()
        .filter(|(_, p)| sub_joint[nearest_joint(p, &rest)].is_some())
        .map(|(v, _)| v)
        .collect();
    if vertex_map.is_empty() {
        return Err(Error::DegenerateModel(format!(
            "no vertex is closest to a {} hand joint",
            side.as_str()
        )));
    }
    let mut sub_vertex = vec![None; model.vertex_count()];
    for (s, &p) in vertex_map.iter().enumerate() {
        sub_vertex[p] = Some(s);
    }

    let tree = model.tree();
    let mut parents = vec![None];
    for &p in &joint_map[1..] {
        let parent = tree.parent(p).and_then(|pp| sub_joint[pp]).ok_or_else(|| {
            Error::InvalidModel(format!("finger joint {p} has a parent outside the hand"))
        })?;
        parents.push(Some(parent));
    }
    let names = joint_map.iter().map(|&p| tree.name(p).to_string()).collect();
    let sub_tree = SkeletonTree::new(parents, names)?;

    // Keep only hand-joint columns and renormalise. A vertex with no hand
    // weight at all is bound rigidly to the wrist.
    let mut weights = Vec::new();
    for (s, &p) in vertex_map.iter().enumerate() {
        let row: Vec<(usize, f64)> = model
            .skin_weights()
            .row(p)
            .filter_map(|(j, w)| sub_joint[j].map(|sj| (sj, w)))
            .collect();
        let total: f64 = row.iter().map(|(_, w)| w).sum();
        if total > 0.0 {
            weights.extend(row.into_iter().map(|(sj, w)| (s, sj, w / total)));
        } else {
            weights.push((s, 0, 1.0));
        }
    }
    let skin_weights = SparseMatrix::from_triplets(vertex_map.len(), joint_map.len(), &weights)?;

    let mut reg = Vec::new();
    for (row, &p) in joint_map.iter().enumerate() {
        let entries: Vec<(usize, f64)> = model
            .joint_regressor()
            .row(p)
            .filter_map(|(v, w)| sub_vertex[v].map(|sv| (sv, w)))
            .collect();
        let total: f64 = entries.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Err(Error::DegenerateModel(format!(
                "regressor row of joint {} has no support inside the hand crop",
                tree.name(p)
            )));
        }
        reg.extend(entries.into_iter().map(|(sv, w)| (row, sv, w / total)));
    }
    let tips = model.fingertip_vertices(side).ok_or_else(|| {
        Error::InvalidModel(format!("no {} fingertip vertices declared", side.as_str()))
    })?;
    for (i, &tip) in tips.iter().enumerate() {
        let sv = sub_vertex[tip].ok_or_else(|| {
            Error::DegenerateModel(format!("fingertip vertex {tip} is outside the hand crop"))
        })?;
        reg.push((joint_map.len() + i, sv, 1.0));
    }
    let joint_regressor = SparseMatrix::from_triplets(HAND_KEYPOINTS, vertex_map.len(), &reg)?;

    let faces = model
        .faces()
        .iter()
        .filter_map(|f| {
            Some([
                sub_vertex[f[0]]?,
                sub_vertex[f[1]]?,
                sub_vertex[f[2]]?,
            ])
        })
        .collect();

    let parts = ModelParts {
        template_vertices: vertex_map.iter().map(|&v| model.template_vertices()[v]).collect(),
        faces,
        shape_basis: model
            .shape_basis()
            .iter()
            .map(|b| vertex_map.iter().map(|&v| b[v]).collect())
            .collect(),
        skin_weights,
        joint_regressor,
        tree: sub_tree,
        hand_joints: None,
        fingertip_vertices: None,
        reference_knuckle_length: model.reference_knuckle_length(),
    };
    Ok(HandSubmodel {
        side,
        model: ParametricModel::new(parts)?,
        vertex_map,
        joint_map,
    })
}

/// The 21 hand keypoints of posed hand-submodel vertices.
pub fn regress_hand_joints(hand: &HandSubmodel, posed: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>> {
    regress_joints(hand.model.joint_regressor(), posed)
}
