//! Optimisation-based fusion: fit whole-body parameters to 2D keypoints by
//! minimising a confidence-weighted reprojection cost plus a quadratic prior
//! that anchors pose to the initial estimate and shape to zero.
//!
//! The solver is damped least squares on the stacked residual vector. Rotation
//! parameters stay in axis-angle coordinates and are canonicalised after every
//! step. Jacobians are analytic by default; central differences are available
//! for comparison.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use crate::camera::WeakPerspectiveCamera;
use crate::error::{check_len, Error, Result};
use crate::integration::WholeBodyParams;
use crate::kinematics::{forward_kinematics, left_jacobian, AxisAngle};
use crate::model::{rest_joints, shape_template, skin_vertices, ParametricModel, Side};
use crate::sparse::SparseMatrix;

/// 2D keypoints aligned with [`ParametricModel::keypoint_names`].
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet2D {
    pub points: Vec<Vector2<f64>>,
    pub confidence: Vec<f64>,
}

impl KeypointSet2D {
    pub fn new(points: Vec<Vector2<f64>>, confidence: Vec<f64>) -> Result<Self> {
        check_len("keypoint confidences", points.len(), confidence.len())?;
        if let Some(c) = confidence.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::Input(format!("confidence {c} outside [0, 1]")));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Numeric("keypoint position".into()));
        }
        Ok(KeypointSet2D { points, confidence })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Which parameter groups the optimiser may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitMask {
    pub global_orient: bool,
    /// Body joints other than the wrists.
    pub body_pose: bool,
    pub wrists: bool,
    pub fingers: bool,
    pub shape: bool,
    pub camera: bool,
}

impl Default for FitMask {
    fn default() -> Self {
        FitMask {
            global_orient: true,
            body_pose: true,
            wrists: true,
            fingers: false,
            shape: false,
            camera: true,
        }
    }
}

impl FitMask {
    pub fn wrists_only() -> Self {
        FitMask {
            global_orient: false,
            body_pose: false,
            wrists: true,
            fingers: false,
            shape: false,
            camera: false,
        }
    }

    pub fn all() -> Self {
        FitMask {
            global_orient: true,
            body_pose: true,
            wrists: true,
            fingers: true,
            shape: true,
            camera: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianMode {
    #[default]
    Analytic,
    CentralDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Accepted iterations to run.
    pub iterations: usize,
    pub weight_2d: f64,
    pub weight_prior_pose: f64,
    pub weight_prior_shape: f64,
    pub mask: FitMask,
    /// Initial damping relative to the largest diagonal entry of JᵀJ.
    pub initial_damping: f64,
    /// Rejected steps tolerated within one iteration before giving up.
    pub max_retries: usize,
    pub jacobian: JacobianMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iterations: 20,
            weight_2d: 1.0,
            weight_prior_pose: 1e-2,
            weight_prior_shape: 1e-1,
            mask: FitMask::default(),
            initial_damping: 1e-3,
            max_retries: 12,
            jacobian: JacobianMode::Analytic,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Input("iterations must be at least 1".into()));
        }
        for (name, w) in [
            ("weight_2d", self.weight_2d),
            ("weight_prior_pose", self.weight_prior_pose),
            ("weight_prior_shape", self.weight_prior_shape),
            ("initial_damping", self.initial_damping),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Input(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStop {
    /// Every requested iteration was accepted.
    Completed,
    /// No cost-decreasing step was found within the retry budget.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: WholeBodyParams,
    pub initial_cost: f64,
    /// Cost after each accepted iteration.
    pub cost_trace: Vec<f64>,
    /// Root-mean-square pixel error over keypoints with nonzero confidence.
    pub reprojection_rms: f64,
    pub stop: FitStop,
}

/// Σ_k c_k ‖project(J_k) − kp_k‖² over the whole-body keypoints.
pub fn reprojection_cost(
    model: &ParametricModel,
    params: &WholeBodyParams,
    cam: &WeakPerspectiveCamera,
    kp: &KeypointSet2D,
) -> Result<f64> {
    let joints = params.keypoints_3d(model)?;
    check_len("keypoints", joints.len(), kp.len())?;
    Ok(joints
        .iter()
        .zip(&kp.points)
        .zip(&kp.confidence)
        .map(|((j, p), c)| c * (cam.project_point(j) - p).norm_squared())
        .sum())
}

/// Projects the whole-body keypoints of `params` with its own camera, all at confidence 1.
pub fn render_keypoints(model: &ParametricModel, params: &WholeBodyParams) -> Result<KeypointSet2D> {
    let points: Vec<Vector2<f64>> = params
        .keypoints_3d(model)?
        .iter()
        .map(|j| params.camera.project_point(j))
        .collect();
    let n = points.len();
    KeypointSet2D::new(points, vec![1.0; n])
}

/// Quadratic anchor prior: `w_pose ‖θ − θ_anchor‖² + w_shape ‖β‖²`.
pub fn prior_cost(params: &WholeBodyParams, anchor: &WholeBodyParams, config: &FitConfig) -> Result<f64> {
    check_len("body pose", anchor.body_pose.len(), params.body_pose.len())?;
    check_len("left hand pose", anchor.left_hand_pose.len(), params.left_hand_pose.len())?;
    check_len("right hand pose", anchor.right_hand_pose.len(), params.right_hand_pose.len())?;
    let pose: f64 = params
        .body_pose
        .iter()
        .chain(&params.left_hand_pose)
        .chain(&params.right_hand_pose)
        .zip(anchor.body_pose.iter().chain(&anchor.left_hand_pose).chain(&anchor.right_hand_pose))
        .map(|(a, b)| (a.0 - b.0).norm_squared())
        .sum();
    let shape: f64 = params.shape.betas.iter().map(|b| b * b).sum();
    Ok(config.weight_prior_pose * pose + config.weight_prior_shape * shape)
}

/// Where a rotation parameter lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RotSlot {
    Global,
    Body(usize),
    Hand(Side, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Rotation(RotSlot),
    Beta(usize),
    CamScale,
    CamTranslation,
}

/// Residuals and Jacobians of the fitting objective over a packed parameter vector.
///
/// Residual layout: two rows per keypoint (scaled by √(w₂d c_k)), three per
/// non-root joint for the pose prior, one per shape coefficient.
pub struct FitProblem<'a> {
    model: &'a ParametricModel,
    base: WholeBodyParams,
    anchor: WholeBodyParams,
    keypoints: &'a KeypointSet2D,
    config: FitConfig,
    slots: Vec<Slot>,
    keypoint_reg: SparseMatrix,
    /// Skeleton joint carried by each rotation slot of the whole-body pose.
    body_joint_of: Vec<usize>,
}

impl<'a> FitProblem<'a> {
    /// `init` provides the starting point, the frozen values and the prior
    /// anchor; `camera` replaces its camera.
    pub fn new(
        model: &'a ParametricModel,
        init: &WholeBodyParams,
        camera: &WeakPerspectiveCamera,
        keypoints: &'a KeypointSet2D,
        config: &FitConfig,
    ) -> Result<Self> {
        config.validate()?;
        init.validate(model)?;
        let keypoint_reg = model.keypoint_regressor();
        check_len("keypoints", keypoint_reg.rows(), keypoints.len())?;
        let mut base = init.clone();
        base.camera = *camera;

        let wrists: Vec<usize> = [Side::Left, Side::Right]
            .iter()
            .filter_map(|s| model.hand_joints(*s).map(|h| h.wrist))
            .collect();
        let mask = config.mask;
        let mut slots = Vec::new();
        if mask.global_orient {
            slots.push(Slot::Rotation(RotSlot::Global));
        }
        for (i, j) in model.body_joints().iter().enumerate() {
            let is_wrist = wrists.contains(j);
            if (is_wrist && mask.wrists) || (!is_wrist && mask.body_pose) {
                slots.push(Slot::Rotation(RotSlot::Body(i)));
            }
        }
        if mask.fingers {
            for side in [Side::Left, Side::Right] {
                if model.hand_joints(side).is_some() {
                    slots.extend((0..init.hand_pose(side).len()).map(|i| Slot::Rotation(RotSlot::Hand(side, i))));
                }
            }
        }
        if mask.shape {
            slots.extend((0..model.shape_dim()).map(Slot::Beta));
        }
        if mask.camera {
            slots.push(Slot::CamScale);
            slots.push(Slot::CamTranslation);
        }
        Ok(FitProblem {
            model,
            base: base.clone(),
            anchor: base,
            keypoints,
            config: config.clone(),
            slots,
            keypoint_reg,
            body_joint_of: model.body_joints().to_vec(),
        })
    }

    /// Number of free scalar parameters.
    pub fn dim(&self) -> usize {
        self.slots.iter().map(|s| slot_width(*s)).sum()
    }

    pub fn residual_len(&self) -> usize {
        2 * self.keypoints.len() + 3 * (self.model.joint_count() - 1) + self.model.shape_dim()
    }

    /// Packed free parameters of `params`.
    pub fn pack(&self, params: &WholeBodyParams) -> DVector<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for slot in &self.slots {
            match *slot {
                Slot::Rotation(r) => x.extend(rotation(params, r).0.iter()),
                Slot::Beta(k) => x.push(params.shape.betas[k]),
                Slot::CamScale => x.push(params.camera.scale()),
                Slot::CamTranslation => x.extend(params.camera.translation().iter()),
            }
        }
        DVector::from_vec(x)
    }

    pub fn initial_vector(&self) -> DVector<f64> {
        self.pack(&self.base)
    }

    /// Parameters with the free entries taken from `x`.
    pub fn unpack(&self, x: &DVector<f64>) -> Result<WholeBodyParams> {
        check_len("parameter vector", self.dim(), x.len())?;
        let mut p = self.base.clone();
        let mut scale = p.camera.scale();
        let mut trans = p.camera.translation();
        let mut i = 0;
        for slot in &self.slots {
            match *slot {
                Slot::Rotation(r) => {
                    *rotation_mut(&mut p, r) = AxisAngle::new(x[i], x[i + 1], x[i + 2]);
                }
                Slot::Beta(k) => p.shape.betas[k] = x[i],
                Slot::CamScale => scale = x[i],
                Slot::CamTranslation => trans = Vector2::new(x[i], x[i + 1]),
            }
            i += slot_width(*slot);
        }
        p.camera = WeakPerspectiveCamera::new(scale, trans)?;
        Ok(p)
    }

    /// Canonicalises every rotation block of `x` in place.
    pub fn canonicalize(&self, x: &mut DVector<f64>) {
        let mut i = 0;
        for slot in &self.slots {
            if let Slot::Rotation(_) = slot {
                let c = AxisAngle::new(x[i], x[i + 1], x[i + 2]).canonical();
                x[i] = c.0.x;
                x[i + 1] = c.0.y;
                x[i + 2] = c.0.z;
            }
            i += slot_width(*slot);
        }
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation> {
        let params = self.unpack(x)?;
        let pose = params.to_pose(self.model)?;
        let shaped = shape_template(self.model, &params.shape)?;
        let rest = rest_joints(self.model, &shaped)?;
        let world = forward_kinematics(self.model.tree(), &rest, &pose.global_orient, &pose.local_poses())?;
        let vertices = skin_vertices(self.model.skin_weights(), &shaped, &rest, &world);
        let keypoints = self.keypoint_reg.mul_points(&vertices);
        Ok(Evaluation {
            params,
            shaped,
            rest,
            world,
            keypoints,
        })
    }

    fn residuals_of(&self, e: &Evaluation) -> DVector<f64> {
        let mut r = DVector::zeros(self.residual_len());
        let cam = e.params.camera;
        for (k, j) in e.keypoints.iter().enumerate() {
            let w = (self.config.weight_2d * self.keypoints.confidence[k]).sqrt();
            let d = cam.project_point(j) - self.keypoints.points[k];
            r[2 * k] = w * d.x;
            r[2 * k + 1] = w * d.y;
        }
        let mut row = 2 * self.keypoints.len();
        let wp = self.config.weight_prior_pose.sqrt();
        let current = e.params.to_pose(self.model).expect("validated");
        let anchor = self.anchor.to_pose(self.model).expect("validated");
        for (a, b) in current.joint_poses.iter().zip(&anchor.joint_poses) {
            let d = (a.0 - b.0) * wp;
            r[row] = d.x;
            r[row + 1] = d.y;
            r[row + 2] = d.z;
            row += 3;
        }
        let ws = self.config.weight_prior_shape.sqrt();
        for b in &e.params.shape.betas {
            r[row] = ws * b;
            row += 1;
        }
        r
    }

    pub fn residuals(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.residuals_of(&self.evaluate(x)?))
    }

    /// Total objective `‖r(x)‖²`.
    pub fn cost(&self, x: &DVector<f64>) -> Result<f64> {
        let c = self.residuals(x)?.norm_squared();
        if !c.is_finite() {
            return Err(Error::Numeric("fitting cost".into()));
        }
        Ok(c)
    }

    /// Central-difference Jacobian with step `h`.
    pub fn jacobian_central_difference(&self, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(self.residual_len(), self.dim());
        for i in 0..self.dim() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let col = (self.residuals(&xp)? - self.residuals(&xm)?) / (2.0 * h);
            jac.set_column(i, &col);
        }
        Ok(jac)
    }

    /// Analytic Jacobian of the residual vector.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let e = self.evaluate(x)?;
        let model = self.model;
        let tree = model.tree();
        let nj = model.joint_count();
        let nk = self.keypoints.len();
        let weights = model.skin_weights();

        // C[k][j] = Σ_v K[k,v] w[v,j] X_vj and c[k][j] = Σ_v K[k,v] w[v,j],
        // where X_vj is vertex v moved by joint j. Summing over subtrees turns
        // them into the lever arms of each joint's rotation.
        let mut lever = vec![vec![Vector3::zeros(); nj]; nk];
        let mut mass = vec![vec![0.0; nj]; nk];
        for k in 0..nk {
            for (v, kv) in self.keypoint_reg.row(k) {
                for (j, w) in weights.row(v) {
                    let t = &e.world[j];
                    let moved = t.rotation * (e.shaped[v] - e.rest[j]) + t.translation;
                    lever[k][j] += moved * (kv * w);
                    mass[k][j] += kv * w;
                }
            }
            for j in (1..nj).rev() {
                let p = tree.parent(j).expect("non-root");
                let (l, m) = (lever[k][j], mass[k][j]);
                lever[k][p] += l;
                mass[k][p] += m;
            }
        }

        let cam = e.params.camera;
        let s = cam.scale();
        let row_weight: Vec<f64> = (0..nk)
            .map(|k| (self.config.weight_2d * self.keypoints.confidence[k]).sqrt())
            .collect();
        let pose = e.params.to_pose(model)?;
        let prior_row = |joint: usize| 2 * nk + 3 * (joint - 1);

        let mut jac = DMatrix::zeros(self.residual_len(), self.dim());
        let mut col = 0;
        for slot in &self.slots {
            match *slot {
                Slot::Rotation(r) => {
                    let (joint, aa, parent_rot) = match r {
                        RotSlot::Global => (0, pose.global_orient, nalgebra::Matrix3::identity()),
                        RotSlot::Body(i) => {
                            let j = self.body_joint_of[i];
                            (j, pose.joint(j), e.world[tree.parent(j).expect("non-root")].rotation)
                        }
                        RotSlot::Hand(side, i) => {
                            let j = model.hand_joints(side).expect("hand present").fingers[i];
                            (j, pose.joint(j), e.world[tree.parent(j).expect("non-root")].rotation)
                        }
                    };
                    let axes = parent_rot * left_jacobian(&aa);
                    let pivot = e.world[joint].translation;
                    for a in 0..3 {
                        let omega: Vector3<f64> = axes.column(a).into();
                        for k in 0..nk {
                            let arm = lever[k][joint] - pivot * mass[k][joint];
                            let d = omega.cross(&arm) * (s * row_weight[k]);
                            jac[(2 * k, col + a)] = d.x;
                            jac[(2 * k + 1, col + a)] = d.y;
                        }
                        if joint > 0 {
                            jac[(prior_row(joint) + a, col + a)] = self.config.weight_prior_pose.sqrt();
                        }
                    }
                }
                Slot::Beta(m) => {
                    let basis = &model.shape_basis()[m];
                    let mut d_rest = model.joint_regressor().mul_points(basis);
                    d_rest.truncate(nj);
                    let mut d_pos = vec![Vector3::zeros(); nj];
                    d_pos[0] = d_rest[0];
                    for j in 1..nj {
                        let p = tree.parent(j).expect("non-root");
                        d_pos[j] = d_pos[p] + e.world[p].rotation * (d_rest[j] - d_rest[p]);
                    }
                    for k in 0..nk {
                        let mut d = Vector3::zeros();
                        for (v, kv) in self.keypoint_reg.row(k) {
                            for (j, w) in weights.row(v) {
                                let dx = e.world[j].rotation * (basis[v] - d_rest[j]) + d_pos[j];
                                d += dx * (kv * w);
                            }
                        }
                        let d = d * (s * row_weight[k]);
                        jac[(2 * k, col)] = d.x;
                        jac[(2 * k + 1, col)] = d.y;
                    }
                    jac[(2 * nk + 3 * (nj - 1) + m, col)] = self.config.weight_prior_shape.sqrt();
                }
                Slot::CamScale => {
                    for (k, kp) in e.keypoints.iter().enumerate() {
                        jac[(2 * k, col)] = row_weight[k] * kp.x;
                        jac[(2 * k + 1, col)] = row_weight[k] * kp.y;
                    }
                }
                Slot::CamTranslation => {
                    for (k, w) in row_weight.iter().enumerate() {
                        jac[(2 * k, col)] = *w;
                        jac[(2 * k + 1, col + 1)] = *w;
                    }
                }
            }
            col += slot_width(*slot);
        }
        Ok(jac)
    }

    fn jacobian_for_solver(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self.config.jacobian {
            JacobianMode::Analytic => self.jacobian(x),
            JacobianMode::CentralDifference => self.jacobian_central_difference(x, 1e-6),
        }
    }

    /// RMS pixel error over keypoints with nonzero confidence.
    pub fn reprojection_rms(&self, x: &DVector<f64>) -> Result<f64> {
        let e = self.evaluate(x)?;
        let mut sum = 0.0;
        let mut n = 0usize;
        for (k, j) in e.keypoints.iter().enumerate() {
            if self.keypoints.confidence[k] > 0.0 {
                sum += (e.params.camera.project_point(j) - self.keypoints.points[k]).norm_squared();
                n += 1;
            }
        }
        Ok((sum / n.max(1) as f64).sqrt())
    }
}

struct Evaluation {
    params: WholeBodyParams,
    shaped: Vec<Vector3<f64>>,
    rest: Vec<Vector3<f64>>,
    world: Vec<crate::kinematics::RigidTransform>,
    keypoints: Vec<Vector3<f64>>,
}

fn slot_width(slot: Slot) -> usize {
    match slot {
        Slot::Rotation(_) => 3,
        Slot::Beta(_) | Slot::CamScale => 1,
        Slot::CamTranslation => 2,
    }
}

fn rotation(p: &WholeBodyParams, slot: RotSlot) -> AxisAngle {
    match slot {
        RotSlot::Global => p.global_orient,
        RotSlot::Body(i) => p.body_pose[i],
        RotSlot::Hand(side, i) => p.hand_pose(side)[i],
    }
}

fn rotation_mut(p: &mut WholeBodyParams, slot: RotSlot) -> &mut AxisAngle {
    match slot {
        RotSlot::Global => &mut p.global_orient,
        RotSlot::Body(i) => &mut p.body_pose[i],
        RotSlot::Hand(side, i) => &mut p.hand_pose_mut(side)[i],
    }
}

/// Fits whole-body parameters to 2D keypoints.
///
/// Runs `config.iterations` accepted damped least-squares steps. A step is
/// accepted when it does not increase the cost; a rejected step raises the
/// damping and is retried up to `config.max_retries` times, after which the
/// fit stops early with [`FitStop::Stalled`].
pub fn fit(
    model: &ParametricModel,
    init: &WholeBodyParams,
    cam_init: &WeakPerspectiveCamera,
    kp: &KeypointSet2D,
    config: &FitConfig,
) -> Result<FitResult> {
    if kp.confidence.iter().all(|c| *c == 0.0) {
        return Err(Error::UnconstrainedFit);
    }
    let problem = FitProblem::new(model, init, cam_init, kp, config)?;
    let mut x = problem.initial_vector();
    let mut cost = problem.cost(&x)?;
    let initial_cost = cost;
    let mut trace = Vec::with_capacity(config.iterations);
    let mut stop = FitStop::Completed;
    let mut lambda: Option<f64> = None;
    let mut nu = 2.0;

    if problem.dim() > 0 {
        'outer: for _ in 0..config.iterations {
            let r = problem.residuals(&x)?;
            let jac = problem.jacobian_for_solver(&x)?;
            let g = jac.tr_mul(&r);
            let h = jac.tr_mul(&jac);
            let max_diag = h.diagonal().max();
            let floor = (max_diag * 1e-12).max(f64::MIN_POSITIVE);
            let diag: DVector<f64> = h.diagonal().map(|d| d.max(floor));
            let lam = lambda.get_or_insert(config.initial_damping);

            let mut retries = 0;
            loop {
                let mut damped = h.clone();
                for i in 0..damped.nrows() {
                    damped[(i, i)] += *lam * diag[i];
                }
                let step = damped.cholesky().map(|c| c.solve(&(-&g)));
                let candidate = step.as_ref().and_then(|delta| {
                    let mut xn = &x + delta;
                    problem.canonicalize(&mut xn);
                    let c = problem.cost(&xn).ok()?;
                    Some((xn, c))
                });
                match (step, candidate) {
                    (Some(delta), Some((xn, new_cost))) if new_cost <= cost => {
                        let predicted = delta.dot(&(diag.component_mul(&delta) * *lam - &g));
                        if predicted > 0.0 {
                            let rho = (cost - new_cost) / predicted;
                            *lam *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                        }
                        nu = 2.0;
                        x = xn;
                        cost = new_cost;
                        trace.push(cost);
                        break;
                    }
                    _ => {
                        retries += 1;
                        if retries > config.max_retries {
                            stop = FitStop::Stalled;
                            break 'outer;
                        }
                        *lam *= nu;
                        nu *= 2.0;
                    }
                }
            }
        }
    } else {
        trace.resize(config.iterations, cost);
    }

    Ok(FitResult {
        params: problem.unpack(&x)?,
        initial_cost,
        cost_trace: trace,
        reprojection_rms: problem.reprojection_rms(&x)?,
        stop,
    })
}

/// Five-frame smoothing kernel applied per parameter dimension.
pub const SMOOTHING_KERNEL: [f64; 5] = [0.1, 0.2, 0.5, 0.2, 0.1];

/// How the interior kernel is scaled. The published weights sum to 1.1, so
/// applying them verbatim amplifies every dimension by 10% away from the
/// sequence ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelNormalization {
    /// Interior frames use the weights exactly as published.
    #[default]
    AsPublished,
    /// Interior frames use the weights divided by their sum.
    UnitSum,
}

/// Kernel taps `(frame, weight)` used at frame `t` of an `n`-frame sequence.
/// A kernel truncated by a sequence end is always renormalised to unit sum.
pub fn smoothing_weights(t: usize, n: usize, norm: KernelNormalization) -> Vec<(usize, f64)> {
    let taps: Vec<(usize, f64)> = SMOOTHING_KERNEL
        .iter()
        .enumerate()
        .filter_map(|(i, w)| {
            let frame = (t + i).checked_sub(2)?;
            (frame < n).then_some((frame, *w))
        })
        .collect();
    if taps.len() == SMOOTHING_KERNEL.len() && norm == KernelNormalization::AsPublished {
        return taps;
    }
    let total: f64 = taps.iter().map(|(_, w)| w).sum();
    taps.into_iter().map(|(f, w)| (f, w / total)).collect()
}

/// Smooths each dimension of a per-frame parameter sequence independently,
/// with the published interior weights.
pub fn temporal_smooth(seq: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    temporal_smooth_with(seq, KernelNormalization::AsPublished)
}

pub fn temporal_smooth_with(seq: &[Vec<f64>], norm: KernelNormalization) -> Result<Vec<Vec<f64>>> {
    let Some(first) = seq.first() else {
        return Err(Error::EmptySequence);
    };
    let dim = first.len();
    for frame in seq {
        check_len("frame dimension", dim, frame.len())?;
    }
    let n = seq.len();
    Ok((0..n)
        .map(|t| {
            let taps = smoothing_weights(t, n, norm);
            (0..dim)
                .map(|d| taps.iter().map(|(f, w)| w * seq[*f][d]).sum())
                .collect()
        })
        .collect())
}

/// Flattens parameters as φ, body θ, left θ, right θ, β, s, t.
pub fn params_to_vector(p: &WholeBodyParams) -> Vec<f64> {
    let mut v: Vec<f64> = std::iter::once(&p.global_orient)
        .chain(&p.body_pose)
        .chain(&p.left_hand_pose)
        .chain(&p.right_hand_pose)
        .flat_map(|aa| aa.to_array())
        .collect();
    v.extend(&p.shape.betas);
    v.push(p.camera.scale());
    v.extend(p.camera.translation().iter());
    v
}

/// Inverse of [`params_to_vector`], using `like` for the layout.
pub fn params_from_vector(v: &[f64], like: &WholeBodyParams) -> Result<WholeBodyParams> {
    check_len("parameter vector", params_to_vector(like).len(), v.len())?;
    let mut it = v.iter().copied();
    let mut next_aa = || {
        let x = it.next().expect("length checked");
        let y = it.next().expect("length checked");
        let z = it.next().expect("length checked");
        AxisAngle::new(x, y, z)
    };
    let global_orient = next_aa();
    let body_pose = (0..like.body_pose.len()).map(|_| next_aa()).collect();
    let left_hand_pose = (0..like.left_hand_pose.len()).map(|_| next_aa()).collect();
    let right_hand_pose = (0..like.right_hand_pose.len()).map(|_| next_aa()).collect();
    let offset = 3 * (1 + like.body_pose.len() + like.left_hand_pose.len() + like.right_hand_pose.len());
    let nb = like.shape.betas.len();
    let betas = v[offset..offset + nb].to_vec();
    let cam = &v[offset + nb..];
    Ok(WholeBodyParams {
        global_orient,
        body_pose,
        left_hand_pose,
        right_hand_pose,
        shape: crate::model::ShapeParams::new(betas),
        camera: WeakPerspectiveCamera::new(cam[0], Vector2::new(cam[1], cam[2]))?,
    })
}

/// Temporal smoothing of a sequence of fitted parameters (shape, pose and camera).
/// Axis-angle components are smoothed as plain numbers.
pub fn smooth_params(seq: &[WholeBodyParams], norm: KernelNormalization) -> Result<Vec<WholeBodyParams>> {
    let Some(first) = seq.first() else {
        return Err(Error::EmptySequence);
    };
    let flat: Vec<Vec<f64>> = seq.iter().map(params_to_vector).collect();
    temporal_smooth_with(&flat, norm)?
        .iter()
        .map(|v| params_from_vector(v, first))
        .collect()
}
