//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use mocapkit_core::dataprep::{
    convolve2d, flip_axis_angle, flip_hand_params, flip_keypoints_2d, motion_blur_kernel, rescale_keypoints, Image,
};
use mocapkit_core::fitting::{
    fit, render_keypoints, smoothing_weights, temporal_smooth, FitConfig, FitMask, FitProblem, KernelNormalization,
    KeypointSet2D,
};
use mocapkit_core::formats::{
    Document, EvalReport, FitTraceFile, KeypointFile, ModelAsset, ParamsFile, PredictionFile, Strictness,
};
use mocapkit_core::integration::{copy_paste, BodyPrediction, HandPrediction, WholeBodyParams};
use mocapkit_core::kinematics::{forward_kinematics, rodrigues, rotation_to_axis_angle, world_rotations};
use mocapkit_core::metrics::{
    auc, linspace, loss_2d, loss_3d, loss_theta, overall_loss, pck_curve, Alignment,
    LossParts, LossWeights, Norm2d, PckCurve, RANGE_2D_PX, RANGE_3D_MM,
};
use mocapkit_core::model::{pose_mesh, rest_joints, shape_template};
use mocapkit_core::toy::{gen_toy_model, SizeClass};
use mocapkit_core::{AxisAngle, ParametricModel, PoseParams, ShapeParams, Side, SkeletonTree, WeakPerspectiveCamera};
use nalgebra::{DMatrix, Matrix3, Matrix4, Rotation3, Unit, UnitQuaternion, Vector2, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: f64) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit {
        Ok(())
    } else {
        Err(format!("runtime {:.2} s exceeds {limit} s", elapsed.as_secs_f64()))
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_aa(rng: &mut ChaCha8Rng, scale: f64) -> AxisAngle {
    AxisAngle::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

/// Uniformly random rotation, built without the library's conversions.
fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let q: Vector4<f64> = Vector4::from_fn(|_, _| StandardNormal.sample(rng));
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(q)).to_rotation_matrix().into_inner()
}

/// Rotation from axis-angle through nalgebra, independent of the library's own formula.
fn oracle_rotation(aa: &AxisAngle) -> Matrix3<f64> {
    Rotation3::from_scaled_axis(aa.0).into_inner()
}

fn homogeneous(r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    m
}

/// World transform of every joint as the explicit product of 4×4 matrices
/// along the chain from the root.
fn brute_force_fk(
    parents: &[Option<usize>],
    rest: &[Vector3<f64>],
    global: &AxisAngle,
    local: &[AxisAngle],
) -> Vec<Matrix4<f64>> {
    (0..parents.len())
        .map(|j| {
            let mut chain = vec![j];
            while let Some(p) = parents[*chain.last().unwrap()] {
                chain.push(p);
            }
            chain.reverse();
            chain.iter().fold(Matrix4::identity(), |acc, &a| {
                let (r, t) = match parents[a] {
                    None => (oracle_rotation(global) * oracle_rotation(&local[a]), rest[a]),
                    Some(p) => (oracle_rotation(&local[a]), rest[a] - rest[p]),
                };
                acc * homogeneous(&r, &t)
            })
        })
        .collect()
}

fn kinematics_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst_fk = 0.0f64;
    for _ in 0..500 {
        let n = r.random_range(1..=20);
        let parents: Vec<Option<usize>> = (0..n).map(|j| (j > 0).then(|| r.random_range(0..j))).collect();
        let tree = SkeletonTree::new(parents.clone(), (0..n).map(|j| format!("j{j}")).collect()).unwrap();
        let rest: Vec<Vector3<f64>> = (0..n)
            .map(|_| Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
            .collect();
        let global = random_aa(&mut r, 2.0);
        let local: Vec<AxisAngle> = (0..n).map(|_| random_aa(&mut r, 1.5)).collect();
        let got = forward_kinematics(&tree, &rest, &global, &local).unwrap();
        let want = brute_force_fk(&parents, &rest, &global, &local);
        for (g, w) in got.iter().zip(&want) {
            let e = (homogeneous(&g.rotation, &g.translation) - w).amax();
            worst_fk = worst_fk.max(e);
        }
    }

    let mut worst_rot = 0.0f64;
    for i in 0..10_000 {
        // every fourth sample is a rotation near the identity or near a half turn
        let aa = match i % 4 {
            0 => {
                let axis = Unit::new_normalize(Vector3::from_fn(|_, _| r.sample::<f64, _>(StandardNormal)));
                let angle = if r.random_bool(0.5) {
                    r.random_range(0.0..1e-6)
                } else {
                    std::f64::consts::PI - r.random_range(0.0..1e-6)
                };
                AxisAngle(axis.into_inner() * angle)
            }
            _ => rotation_to_axis_angle(&random_rotation(&mut r)).unwrap(),
        };
        let m = rodrigues(&aa);
        worst_rot = worst_rot.max((m - oracle_rotation(&aa)).amax());
        let back = rotation_to_axis_angle(&m).unwrap();
        worst_rot = worst_rot.max((rodrigues(&back) - m).amax());
        if aa.angle() < std::f64::consts::PI - 1e-3 {
            worst_rot = worst_rot.max((back.0 - aa.0).amax());
        }
        let q = random_rotation(&mut r);
        worst_rot = worst_rot.max((rodrigues(&rotation_to_axis_angle(&q).unwrap()) - q).amax());
    }
    within(start.elapsed(), 10.0)?;
    check(
        worst_fk < 1e-12 && worst_rot < 1e-6,
        format!("max FK error {worst_fk:.2e} (tol 1e-12), max rotation round-trip error {worst_rot:.2e} (tol 1e-6)"),
    )
}

fn camera() -> WeakPerspectiveCamera {
    WeakPerspectiveCamera::new(200.0, Vector2::new(256.0, 256.0)).unwrap()
}

fn gamma_round_trip() -> Outcome {
    let start = Instant::now();
    let model = gen_toy_model(2, SizeClass::Standard);
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let body = BodyPrediction {
            global_orient: random_aa(&mut r, 3.0),
            body_pose: (0..model.body_joints().len()).map(|_| random_aa(&mut r, 1.0)).collect(),
            shape: ShapeParams::zeros(model.shape_dim()),
            camera: camera(),
        };
        let hand = |side, r: &mut ChaCha8Rng| HandPrediction {
            side,
            global_orient: rotation_to_axis_angle(&random_rotation(r)).unwrap(),
            hand_pose: (0..15).map(|_| random_aa(r, 0.5)).collect(),
            shape: ShapeParams::zeros(model.shape_dim()),
            camera: camera(),
        };
        let left = hand(Side::Left, &mut r);
        let right = hand(Side::Right, &mut r);
        let fused = copy_paste(&model, &body, Some(&left), Some(&right)).unwrap();
        let pose = fused.to_pose(&model).unwrap();
        let rots = world_rotations(model.tree(), &pose.global_orient, &pose.local_poses()).unwrap();
        for h in [&left, &right] {
            let wrist = model.hand_joints(h.side).unwrap().wrist;
            worst = worst.max((rots[wrist] - oracle_rotation(&h.global_orient)).amax());
        }
    }
    within(start.elapsed(), 5.0)?;
    check(worst < 1e-6, format!("max wrist rotation error {worst:.2e} over 1000 poses (tol 1e-6)"))
}

fn rigid_binding() -> Outcome {
    let model = gen_toy_model(3, SizeClass::Standard);
    let mut r = rng(3);
    let parents = model.tree().parents().to_vec();
    let rigid: Vec<(usize, usize)> = (0..model.vertex_count())
        .filter_map(|v| {
            let row: Vec<_> = model.skin_weights().row(v).collect();
            (row.len() == 1 && row[0].1 == 1.0).then_some((v, row[0].0))
        })
        .collect();
    if rigid.is_empty() {
        return Err("toy model has no rigidly bound vertices".into());
    }
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let shape = ShapeParams::new((0..model.shape_dim()).map(|_| r.random_range(-1.0..1.0)).collect());
        let mut pose = PoseParams::zeros(&model);
        pose.global_orient = random_aa(&mut r, 2.0);
        for p in pose.joint_poses.iter_mut() {
            *p = random_aa(&mut r, 0.8);
        }
        let posed = pose_mesh(&model, &pose, &shape).unwrap();
        let shaped = shape_template(&model, &shape).unwrap();
        let rest = rest_joints(&model, &shaped).unwrap();
        let world = brute_force_fk(&parents, &rest, &pose.global_orient, &pose.local_poses());
        for &(v, j) in &rigid {
            let p = shaped[v] - rest[j];
            let expect = world[j] * p.push(1.0);
            worst = worst.max((posed.vertices[v] - expect.xyz()).amax());
        }
    }
    check(
        worst < 1e-9,
        format!("{} rigid vertices × 100 poses, max error {worst:.2e} (tol 1e-9)", rigid.len()),
    )
}

fn ground_truth(model: &ParametricModel, r: &mut ChaCha8Rng) -> WholeBodyParams {
    let mut p = WholeBodyParams::zeros(model, camera());
    p.global_orient = random_aa(r, 0.4);
    for aa in p.body_pose.iter_mut() {
        *aa = random_aa(r, 0.25);
    }
    for side in [Side::Left, Side::Right] {
        for aa in p.hand_pose_mut(side).iter_mut() {
            *aa = random_aa(r, 0.3);
        }
    }
    for b in p.shape.betas.iter_mut() {
        *b = r.random_range(-1.0..1.0);
    }
    p
}

fn perturb(aa: &AxisAngle, angle: f64, r: &mut ChaCha8Rng) -> AxisAngle {
    let axis = Vector3::from_fn(|_, _| r.sample::<f64, _>(StandardNormal)).normalize();
    rotation_to_axis_angle(&(oracle_rotation(&AxisAngle(axis * angle)) * aa.to_matrix())).unwrap()
}

/// Wrists rotated by 0.3 rad and five other body joints by 0.1 rad.
fn perturbed_init(model: &ParametricModel, gt: &WholeBodyParams, r: &mut ChaCha8Rng) -> WholeBodyParams {
    let mut init = gt.clone();
    let wrists: Vec<usize> = [Side::Left, Side::Right]
        .iter()
        .map(|s| {
            let w = model.hand_joints(*s).unwrap().wrist;
            model.body_joints().iter().position(|&j| j == w).unwrap()
        })
        .collect();
    for &w in &wrists {
        init.body_pose[w] = perturb(&gt.body_pose[w], 0.3, r);
    }
    let mut others: Vec<usize> = (0..gt.body_pose.len()).filter(|i| !wrists.contains(i)).collect();
    for _ in 0..5 {
        let i = others.swap_remove(r.random_range(0..others.len()));
        init.body_pose[i] = perturb(&gt.body_pose[i], 0.1, r);
    }
    init
}

fn fit_recovery() -> Outcome {
    let start = Instant::now();
    let model = gen_toy_model(4, SizeClass::Standard);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let cfg = FitConfig::default();
    let mut clean = Vec::new();
    let mut noisy = Vec::new();
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let gt = ground_truth(&model, &mut r);
        let kp = render_keypoints(&model, &gt).unwrap();
        let init = perturbed_init(&model, &gt, &mut r);
        let a = fit(&model, &init, &gt.camera, &kp, &cfg).unwrap();
        if a.cost_trace.len() != cfg.iterations {
            return Err(format!("seed {seed}: {} trace entries, expected {}", a.cost_trace.len(), cfg.iterations));
        }
        clean.push(a.reprojection_rms);

        let points = kp.points.iter().map(|p| p + Vector2::new(noise.sample(&mut r), noise.sample(&mut r))).collect();
        let kp_noisy = KeypointSet2D::new(points, kp.confidence.clone()).unwrap();
        let init = perturbed_init(&model, &gt, &mut r);
        noisy.push(fit(&model, &init, &gt.camera, &kp_noisy, &cfg).unwrap().reprojection_rms);
    }
    let worst = clean.iter().cloned().fold(0.0, f64::max);
    noisy.sort_by(f64::total_cmp);
    let median = (noisy[9] + noisy[10]) / 2.0;
    within(start.elapsed(), 60.0)?;
    check(
        worst < 0.5 && median <= 2.0,
        format!("noise-free max RMS {worst:.2e} px (< 0.5), σ=1 median RMS {median:.3} px (≤ 2), 20 seeds"),
    )
}

fn gradient_check() -> Outcome {
    let model = gen_toy_model(5, SizeClass::Standard);
    let cfg = FitConfig {
        mask: FitMask::all(),
        ..FitConfig::default()
    };
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut r = rng(500 + seed);
        let gt = ground_truth(&model, &mut r);
        let mut kp = render_keypoints(&model, &gt).unwrap();
        for (p, c) in kp.points.iter_mut().zip(kp.confidence.iter_mut()) {
            *p += Vector2::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0));
            *c = r.random_range(0.0..1.0);
        }
        let init = perturbed_init(&model, &gt, &mut r);
        let problem = FitProblem::new(&model, &init, &gt.camera, &kp, &cfg).unwrap();
        let x = problem.initial_vector();
        let analytic = problem.jacobian(&x).unwrap();
        let numeric = problem.jacobian_central_difference(&x, 1e-5).unwrap();
        worst = worst.max((&analytic - &numeric).norm() / numeric.norm());
    }
    check(worst < 1e-3, format!("max relative Jacobian error {worst:.2e} over 100 configurations (tol 1e-3)"))
}

fn smoothing() -> Outcome {
    let mut r = rng(6);
    let mut failures = Vec::new();

    let mut constant_err = 0.0f64;
    for n in 1..=12 {
        let frame: Vec<f64> = (0..4).map(|_| r.random_range(-3.0..3.0)).collect();
        let out = temporal_smooth(&vec![frame.clone(); n]).unwrap();
        for f in &out {
            for (a, b) in f.iter().zip(&frame) {
                constant_err = constant_err.max((a - b).abs());
            }
        }
    }
    if constant_err != 0.0 {
        failures.push(format!("constant sequence moved by up to {constant_err:.3e}"));
    }

    let mut seq = vec![vec![0.0]; 11];
    seq[5][0] = 1.0;
    let out: Vec<f64> = temporal_smooth(&seq).unwrap().into_iter().map(|f| f[0]).collect();
    let expect = [0.0, 0.0, 0.0, 0.1, 0.2, 0.5, 0.2, 0.1, 0.0, 0.0, 0.0];
    if out != expect {
        failures.push(format!("impulse response {out:?}"));
    }

    let mut boundary_err = 0.0f64;
    for n in 1..=12 {
        for t in 0..n {
            let w = smoothing_weights(t, n, KernelNormalization::AsPublished);
            if w.len() < 5 {
                boundary_err = boundary_err.max((w.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs());
            }
        }
    }
    if boundary_err > 1e-12 {
        failures.push(format!("truncated kernel sum off by {boundary_err:.2e}"));
    }

    let summary = format!(
        "constant max deviation {constant_err:.3e}, impulse {}, boundary sum error {boundary_err:.1e}",
        if out == expect { "exact" } else { "wrong" }
    );
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!(
            "{summary}; the published weights sum to 1.1, so no linear filter satisfies both the constant and the impulse condition"
        ))
    }
}

/// Riemann sum of the piecewise-linear curve through the samples, over the threshold range.
fn riemann_auc(curve: &PckCurve, steps: usize) -> f64 {
    let t = curve.thresholds();
    let v = curve.values();
    let (lo, hi) = (t[0], t[t.len() - 1]);
    let h = (hi - lo) / steps as f64;
    let mut seg = 0;
    let mut area = 0.0;
    for i in 0..steps {
        let x = lo + (i as f64 + 0.5) * h;
        while seg + 2 < t.len() && x > t[seg + 1] {
            seg += 1;
        }
        let a = (x - t[seg]) / (t[seg + 1] - t[seg]);
        area += (v[seg] + a * (v[seg + 1] - v[seg])) * h;
    }
    area / (hi - lo)
}

fn metrics() -> Outcome {
    let mut r = rng(7);
    let mut pck_err = 0.0f64;
    let mut auc_err = 0.0f64;
    for _ in 0..200 {
        let n = r.random_range(1..300);
        let errors: Vec<f64> = (0..n)
            .map(|_| if r.random_bool(0.1) { 0.0 } else { r.random_range(0.0..60.0) })
            .collect();
        let lo = r.random_range(0.0..20.0);
        let hi = lo + r.random_range(1.0..40.0);
        let count = r.random_range(2..120);
        let thresholds = linspace(lo, hi, count).unwrap();
        let curve = mocapkit_core::metrics::pck_curve_from_errors(&errors, &thresholds).unwrap();
        for (t, v) in thresholds.iter().zip(curve.values()) {
            let hits = errors.iter().filter(|e| if *t == 0.0 { **e == 0.0 } else { **e < *t }).count();
            pck_err = pck_err.max((v - hits as f64 / n as f64).abs());
        }
        auc_err = auc_err.max((auc(&curve) - riemann_auc(&curve, 100_000)).abs());

        // an arbitrary curve on irregular thresholds
        let mut ts: Vec<f64> = (0..r.random_range(2..40)).map(|_| r.random_range(0.0..100.0)).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        if ts.len() >= 2 {
            let vs = (0..ts.len()).map(|_| r.random_range(0.0..=1.0)).collect();
            let c = PckCurve::new(ts, vs).unwrap();
            auc_err = auc_err.max((auc(&c) - riemann_auc(&c, 100_000)).abs());
        }
    }
    let gt3: Vec<Vector3<f64>> = (0..21).map(|_| Vector3::from_fn(|_, _| r.random_range(-0.1..0.1))).collect();
    let gt2: Vec<Vector2<f64>> = (0..21).map(|_| Vector2::from_fn(|_, _| r.random_range(0.0..224.0))).collect();
    let mut perfect = Vec::new();
    for align in [Alignment::None, Alignment::RootRelative(0)] {
        let mm: Vec<Vector3<f64>> = gt3.iter().map(|p| p * 1000.0).collect();
        let (lo, hi) = RANGE_3D_MM;
        perfect.push(auc(&pck_curve(&mm, &mm, &linspace(lo, hi, 100).unwrap(), align).unwrap()));
        let (lo, hi) = RANGE_2D_PX;
        perfect.push(auc(&pck_curve(&gt2, &gt2, &linspace(lo, hi, 100).unwrap(), align).unwrap()));
    }
    check(
        pck_err < 1e-4 && auc_err < 1e-4 && perfect.iter().all(|a| *a == 1.0),
        format!("max PCK error {pck_err:.1e}, max AUC error {auc_err:.1e} (tol 1e-4), pred = gt AUC {perfect:?}"),
    )
}

fn losses() -> Outcome {
    let total = overall_loss(
        &LossParts {
            theta: 1.0,
            joints_3d: 1.0,
            joints_2d: 1.0,
            reg: 1.0,
        },
        &LossWeights::default(),
    )
    .unwrap();
    let mut r = rng(8);
    let mut bad = Vec::new();
    for trial in 0..200 {
        let n = r.random_range(1..40);
        let th: Vec<AxisAngle> = (0..n).map(|_| random_aa(&mut r, 2.0)).collect();
        let j3: Vec<Vector3<f64>> = (0..n).map(|_| Vector3::from_fn(|_, _| r.random_range(-1.0..1.0))).collect();
        let j2: Vec<Vector2<f64>> = (0..n).map(|_| Vector2::from_fn(|_, _| r.random_range(0.0..500.0))).collect();
        let zero = [
            loss_theta(&th, &th).unwrap(),
            loss_3d(&j3, &j3).unwrap(),
            loss_2d(&j2, &j2, Norm2d::Squared).unwrap(),
            loss_2d(&j2, &j2, Norm2d::Plain).unwrap(),
        ];
        let (i, c) = (r.random_range(0..n), r.random_range(0..2));
        let eps = r.random_range(1e-6..1.0);
        let mut th2 = th.clone();
        th2[i].0[c] += eps;
        let mut j32 = j3.clone();
        j32[i][c] += eps;
        let mut j22 = j2.clone();
        j22[i][c] += eps;
        let nonzero = [
            loss_theta(&th2, &th).unwrap(),
            loss_3d(&j32, &j3).unwrap(),
            loss_2d(&j22, &j2, Norm2d::Squared).unwrap(),
            loss_2d(&j22, &j2, Norm2d::Plain).unwrap(),
        ];
        if zero.iter().any(|l| *l != 0.0) || nonzero.iter().any(|l| *l <= 0.0) {
            bad.push(trial);
        }
    }
    check(
        total == 120.1 && bad.is_empty(),
        format!("overall loss on unit parts = {total:?} (expected 120.1); zero-iff-equal violations in trials {bad:?}"),
    )
}

fn dataprep() -> Outcome {
    let mut r = rng(9);
    let mut failures = Vec::new();

    // keypoints on the 1/1024 pixel grid flip exactly; angles flip by sign changes only
    let width = 224.0;
    for _ in 0..1000 {
        let points = (0..21)
            .map(|_| Vector2::new(r.random_range(0..=224 * 1024) as f64 / 1024.0, r.random_range(0.0..224.0)))
            .collect();
        let kp = KeypointSet2D::new(points, (0..21).map(|_| r.random_range(0.0..=1.0)).collect()).unwrap();
        let twice = flip_keypoints_2d(&flip_keypoints_2d(&kp, width).unwrap(), width).unwrap();
        if twice != kp {
            failures.push("keypoint double flip is not exact".to_string());
            break;
        }
        let g = random_aa(&mut r, 3.0);
        let pose: Vec<AxisAngle> = (0..15).map(|_| random_aa(&mut r, 1.0)).collect();
        let (g1, p1) = flip_hand_params(&g, &pose);
        let (g2, p2) = flip_hand_params(&g1, &p1);
        if g2 != g || p2 != pose {
            failures.push("hand parameter double flip is not exact".to_string());
            break;
        }
    }

    let mirror = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
    let mut conj = 0.0f64;
    for _ in 0..1000 {
        let aa = rotation_to_axis_angle(&random_rotation(&mut r)).unwrap();
        let want = mirror * oracle_rotation(&aa) * mirror;
        conj = conj.max((flip_axis_angle(&aa).to_matrix() - want).amax());
    }
    if conj >= 1e-9 {
        failures.push(format!("conjugation error {conj:.2e}"));
    }

    let mut rescale = 0.0f64;
    for _ in 0..1000 {
        let joints: Vec<Vector3<f64>> = (0..21).map(|_| Vector3::from_fn(|_, _| r.random_range(-0.2..0.2))).collect();
        let reference = r.random_range(0.005..0.05);
        let out = rescale_keypoints(&joints, reference, (4, 5)).unwrap();
        rescale = rescale.max(((out[4] - out[5]).norm() - reference).abs() / reference);
    }
    if rescale > 1e-12 {
        failures.push(format!("rescaled knuckle relative error {rescale:.2e}"));
    }

    let mut kernel_sum = 0.0f64;
    for _ in 0..500 {
        let k = motion_blur_kernel(r.random_range(1.0..25.0), r.random_range(-7.0..7.0)).unwrap();
        kernel_sum = kernel_sum.max((k.weights().sum() - 1.0).abs());
    }
    if kernel_sum > 1e-12 {
        failures.push(format!("kernel sum error {kernel_sum:.2e}"));
    }
    let identity = motion_blur_kernel(1.0, r.random_range(-3.0..3.0)).unwrap();
    let img = Image::new(9, 13, 3, (0..9 * 13 * 3).map(|_| r.random_range(0.0..255.0)).collect()).unwrap();
    let identity_ok = identity.weights() == &DMatrix::from_element(1, 1, 1.0) && convolve2d(&img, &identity) == img;
    if !identity_ok {
        failures.push("length-1 kernel is not the identity".to_string());
    }
    let summary = format!(
        "conjugation {conj:.1e}, rescale {rescale:.1e}, kernel sums {kernel_sum:.1e}, identity kernel {identity_ok}"
    );
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", failures.join("; ")))
    }
}

fn mocapkit(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mocapkit"))
        .args(args)
        .current_dir(dir)
        .env_remove("MOCAPKIT_ASSET_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`mocapkit {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

const PIPELINE_FILES: [&str; 12] = [
    "model.json",
    "gt.json",
    "pred.json",
    "kp.json",
    "gt_joints.json",
    "init.json",
    "fit.json",
    "trace.json",
    "fit_joints.json",
    "eval3d.json",
    "fit_kp2d.json",
    "eval2d.json",
];

fn pipeline(dir: &Path) -> Result<(), String> {
    let steps: [&[&str]; 9] = [
        &["gen-model", "--seed", "42", "--out", "model.json"],
        &[
            "synth", "--asset", "model.json", "--seed", "7", "--frames", "8", "--gt-out", "gt.json",
            "--predictions-out", "pred.json", "--keypoints-out", "kp.json", "--wrist-noise", "0.3",
        ],
        &["pose", "--asset", "model.json", "--params", "gt.json", "--joints-out", "gt_joints.json", "--obj-dir", "gt_obj"],
        &["integrate", "--asset", "model.json", "--predictions", "pred.json", "--out", "init.json", "--keep-wrists"],
        &[
            "fit", "--asset", "model.json", "--init", "init.json", "--keypoints", "kp.json", "--out", "fit.json",
            "--trace-out", "trace.json", "--iters", "20", "--smooth", "--smooth-kernel", "unit-sum", "--jobs", "4",
        ],
        &[
            "pose", "--asset", "model.json", "--params", "fit.json", "--joints-out", "fit_joints.json",
            "--keypoints-out", "fit_kp2d.json",
        ],
        &["eval", "--pred", "fit_joints.json", "--gt", "gt_joints.json", "--metric", "3d", "--align", "root", "--out", "eval3d.json"],
        &["eval", "--pred", "fit_kp2d.json", "--gt", "kp.json", "--metric", "2d", "--out", "eval2d.json"],
        &["integrate", "--asset", "model.json", "--predictions", "pred.json", "--out", "copy_paste.json"],
    ];
    for args in steps {
        mocapkit(dir, args)?;
    }
    Ok(())
}

fn round_trips(dir: &Path, name: &str) -> Result<(), String> {
    fn same<T: Document>(text: &str) -> Result<bool, String> {
        let doc = T::from_json(text, Strictness::Strict).map_err(|e| e.to_string())?;
        Ok(doc.to_json().map_err(|e| e.to_string())? == text)
    }
    let text = std::fs::read_to_string(dir.join(name)).map_err(|e| e.to_string())?;
    let format = serde_json::from_str::<serde_json::Value>(&text).map_err(|e| e.to_string())?["format"].clone();
    let ok = match format.as_str() {
        Some(ModelAsset::FORMAT) => same::<ModelAsset>(&text)?,
        Some(ParamsFile::FORMAT) => same::<ParamsFile>(&text)?,
        Some(PredictionFile::FORMAT) => same::<PredictionFile>(&text)?,
        Some(KeypointFile::FORMAT) => same::<KeypointFile>(&text)?,
        Some(FitTraceFile::FORMAT) => same::<FitTraceFile>(&text)?,
        Some(EvalReport::FORMAT) => same::<EvalReport>(&text)?,
        other => return Err(format!("{name}: unexpected format {other:?}")),
    };
    if ok {
        Ok(())
    } else {
        Err(format!("{name} does not round-trip byte-identically"))
    }
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let runs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for run in &runs {
        pipeline(run.path())?;
    }
    within(start.elapsed(), 60.0)?;
    let per_run = start.elapsed().as_secs_f64() / 2.0;
    if per_run >= 30.0 {
        return Err(format!("pipeline took {per_run:.1} s per run (limit 30 s)"));
    }
    let mut compared = 0;
    for name in PIPELINE_FILES.iter().chain(&["copy_paste.json"]) {
        let a = std::fs::read(runs[0].path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        let b = std::fs::read(runs[1].path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        if a != b {
            return Err(format!("{name} differs between identical runs"));
        }
        round_trips(runs[0].path(), name)?;
        compared += 1;
    }
    for entry in std::fs::read_dir(runs[0].path().join("gt_obj")).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let b = std::fs::read(runs[1].path().join("gt_obj").join(entry.file_name())).map_err(|e| e.to_string())?;
        if std::fs::read(entry.path()).map_err(|e| e.to_string())? != b {
            return Err(format!("{:?} differs between identical runs", entry.file_name()));
        }
        compared += 1;
    }
    let report = EvalReport::read(&runs[0].path().join("eval2d.json"), Strictness::Strict).map_err(|e| e.to_string())?;
    Ok(format!(
        "{compared} outputs identical across two runs and round-trip byte-identically, {per_run:.2} s per run, 2D AUC {:.4}",
        report.auc
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 kinematics oracle", kinematics_oracle),
        ("2 wrist conversion round-trip", gamma_round_trip),
        ("3 rigid-binding skinning", rigid_binding),
        ("4 synthetic fit recovery", fit_recovery),
        ("5 Jacobian gradient check", gradient_check),
        ("6 temporal smoothing", smoothing),
        ("7 PCK/AUC metrics", metrics),
        ("8 loss formulas", losses),
        ("9 dataprep", dataprep),
        ("10 end-to-end CLI", end_to_end),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name} ({secs:.2} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name} ({secs:.2} s): {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
