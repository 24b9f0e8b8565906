//! Command implementations behind the `mocapkit` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use mocapkit_core::dataprep::{
    convolve2d, flip_keypoints_2d, motion_blur_kernel, reorder_joints, rescale_keypoints, Image,
};
use mocapkit_core::fitting::{
    fit, smooth_params, FitConfig, FitMask, FitStop, KernelNormalization, KeypointSet2D,
};
use mocapkit_core::formats::{
    BodyPredictionDoc, Document, EvalReport, FitTraceFile, FitTraceFrame, HandPredictionDoc, KeypointFile,
    KeypointFrame, ModelAsset, ParamsFile, PredictionFile, PredictionFrame, PrepConfig, Strictness,
    FORMAT_VERSION,
};
use mocapkit_core::integration::{copy_paste, copy_paste_keep_wrists};
use mocapkit_core::kinematics::{world_rotations, AxisAngle};
use mocapkit_core::metrics::{auc, joint_errors, linspace, pck_curve_from_errors, Alignment};
use mocapkit_core::model::{pose_mesh, ShapeParams};
use mocapkit_core::toy::{gen_toy_model, SizeClass};
use mocapkit_core::{
    BodyPrediction, HandPrediction, ParametricModel, Side, WeakPerspectiveCamera, WholeBodyParams,
};

/// Environment variable naming the directory searched for relative asset paths.
pub const ASSET_DIR_ENV: &str = "MOCAPKIT_ASSET_DIR";

#[derive(Debug, Parser)]
#[command(name = "mocapkit", version, about = "Whole-body and hand motion capture toolkit")]
pub struct Cli {
    /// Ignore unknown fields in input files instead of rejecting them.
    #[arg(long, global = true)]
    pub lenient: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the procedural toy model asset.
    GenModel(GenModelArgs),
    /// Generate ground-truth parameters plus matching module predictions and keypoints.
    Synth(SynthArgs),
    /// Pose the model: OBJ meshes, 3D joints and optional 2D keypoints.
    Pose(PoseArgs),
    /// Copy-and-paste fusion of body and hand predictions.
    Integrate(IntegrateArgs),
    /// Fit whole-body parameters to 2D keypoints.
    Fit(FitArgs),
    /// PCK curve and AUC of predicted against ground-truth keypoints.
    Eval(EvalArgs),
    /// Reorder, rescale or flip keypoints.
    Prep(PrepArgs),
    /// Apply linear motion blur to a PNG image.
    Blur(BlurArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SizeArg {
    Small,
    Standard,
}

#[derive(Debug, Args)]
pub struct GenModelArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "standard")]
    pub size: SizeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub asset: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    /// Ground-truth parameters.
    #[arg(long)]
    pub gt_out: PathBuf,
    /// Body and hand predictions consistent with the ground truth.
    #[arg(long)]
    pub predictions_out: PathBuf,
    /// Projected 2D keypoints.
    #[arg(long)]
    pub keypoints_out: PathBuf,
    /// Gaussian noise added to the 2D keypoints, in pixels.
    #[arg(long, default_value_t = 0.0)]
    pub keypoint_noise: f64,
    /// Random rotation applied to the body module's wrist angles, in radians.
    #[arg(long, default_value_t = 0.0)]
    pub wrist_noise: f64,
}

#[derive(Debug, Args)]
pub struct PoseArgs {
    #[arg(long)]
    pub asset: PathBuf,
    #[arg(long)]
    pub params: PathBuf,
    /// Directory receiving one `frame_NNNNNN.obj` per frame.
    #[arg(long)]
    pub obj_dir: Option<PathBuf>,
    /// 3D whole-body keypoints.
    #[arg(long)]
    pub joints_out: PathBuf,
    /// 2D keypoints projected with each frame's camera.
    #[arg(long)]
    pub keypoints_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    #[arg(long)]
    pub asset: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep the body module's wrist angles instead of converting the hands' global orientations.
    #[arg(long)]
    pub keep_wrists: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SmoothKernel {
    /// Weights exactly as published (interior sum 1.1).
    Published,
    /// Weights divided by their sum.
    UnitSum,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub asset: PathBuf,
    /// Initial parameters, also used as the pose prior anchor.
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long)]
    pub keypoints: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-frame cost trace.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    /// Temporally smooth the fitted sequence.
    #[arg(long)]
    pub smooth: bool,
    #[arg(long, value_enum, default_value = "published")]
    pub smooth_kernel: SmoothKernel,
    #[arg(long, default_value_t = 1.0)]
    pub weight_2d: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub weight_prior_pose: f64,
    #[arg(long, default_value_t = 1e-1)]
    pub weight_prior_shape: f64,
    #[arg(long)]
    pub optimize_fingers: bool,
    #[arg(long)]
    pub optimize_shape: bool,
    /// Only the wrists move.
    #[arg(long, conflicts_with_all = ["optimize_fingers", "optimize_shape"])]
    pub wrists_only: bool,
    /// Worker threads for per-frame fitting (0 = all cores).
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    #[value(name = "3d")]
    ThreeD,
    #[value(name = "2d")]
    TwoD,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlignArg {
    None,
    Root,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum)]
    pub metric: MetricArg,
    /// Threshold range `lo,hi`; defaults to 20,50 (mm) for 3d and 0,30 (px) for 2d.
    #[arg(long, value_parser = parse_range)]
    pub range: Option<(f64, f64)>,
    #[arg(long, default_value_t = mocapkit_core::metrics::DEFAULT_THRESHOLD_COUNT)]
    pub thresholds: usize,
    /// Factor converting file units to threshold units; defaults to 1000 (m → mm) for 3d, 1 for 2d.
    #[arg(long)]
    pub unit_scale: Option<f64>,
    #[arg(long, value_enum, default_value = "none")]
    pub align: AlignArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    #[arg(long)]
    pub keypoints: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BlurArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Blur length in pixels (≥ 1).
    #[arg(long)]
    pub length: f64,
    /// Direction in radians, counter-clockwise from +x.
    #[arg(long, default_value_t = 0.0)]
    pub angle: f64,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err("range must satisfy lo < hi".into());
    }
    Ok((lo, hi))
}

/// Machine-readable tag of an error chain.
pub fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<mocapkit_core::Error>() {
            return e.kind();
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
        if cause.downcast_ref::<image::ImageError>().is_some() {
            return "image";
        }
    }
    "other"
}

/// `{"error": {"kind": …, "message": …}}`.
pub fn error_json(err: &anyhow::Error) -> String {
    serde_json::json!({
        "error": {
            "kind": error_kind(err),
            "message": format!("{err:#}"),
        }
    })
    .to_string()
}

pub fn run(cli: Cli) -> Result<()> {
    let strictness = if cli.lenient {
        Strictness::Lenient
    } else {
        Strictness::Strict
    };
    match cli.command {
        Command::GenModel(a) => cmd_gen_model(&a),
        Command::Synth(a) => cmd_synth(&a, strictness),
        Command::Pose(a) => cmd_pose(&a, strictness),
        Command::Integrate(a) => cmd_integrate(&a, strictness),
        Command::Fit(a) => cmd_fit(&a, strictness),
        Command::Eval(a) => cmd_eval(&a, strictness),
        Command::Prep(a) => cmd_prep(&a, strictness),
        Command::Blur(a) => cmd_blur(&a),
    }
}

/// Uses `path` as given if it exists or is absolute, otherwise looks it up in
/// the asset directory named by [`ASSET_DIR_ENV`].
pub fn resolve_asset(path: &Path) -> PathBuf {
    if path.is_absolute() || path.exists() {
        return path.to_path_buf();
    }
    match std::env::var_os(ASSET_DIR_ENV) {
        Some(dir) => Path::new(&dir).join(path),
        None => path.to_path_buf(),
    }
}

pub fn load_asset(path: &Path, strictness: Strictness) -> Result<ParametricModel> {
    let resolved = resolve_asset(path);
    let asset = ModelAsset::read(&resolved, strictness)
        .with_context(|| format!("reading model asset {}", resolved.display()))?;
    Ok(asset.to_model()?)
}

fn read_doc<T: Document>(path: &Path, strictness: Strictness) -> Result<T> {
    T::read(path, strictness).with_context(|| format!("reading {}", path.display()))
}

fn write_doc<T: Document>(doc: &T, path: &Path) -> Result<()> {
    doc.write(path).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_gen_model(a: &GenModelArgs) -> Result<()> {
    let size = match a.size {
        SizeArg::Small => SizeClass::Small,
        SizeArg::Standard => SizeClass::Standard,
    };
    write_doc(&ModelAsset::from_model(&gen_toy_model(a.seed, size)), &a.out)
}

fn random_aa(rng: &mut ChaCha8Rng, scale: f64) -> AxisAngle {
    AxisAngle::new(
        rng.random_range(-scale..=scale),
        rng.random_range(-scale..=scale),
        rng.random_range(-scale..=scale),
    )
}

/// Smooth synthetic motion: a random base pose plus per-dimension sinusoids.
fn synth_sequence(model: &ParametricModel, rng: &mut ChaCha8Rng, frames: usize) -> Result<Vec<WholeBodyParams>> {
    let camera = WeakPerspectiveCamera::new(200.0, Vector2::new(256.0, 256.0))?;
    let mut base = WholeBodyParams::zeros(model, camera);
    base.global_orient = random_aa(rng, 0.3);
    base.body_pose.iter_mut().for_each(|p| *p = random_aa(rng, 0.2));
    for side in [Side::Left, Side::Right] {
        base.hand_pose_mut(side).iter_mut().for_each(|p| *p = random_aa(rng, 0.3));
    }
    base.shape.betas.iter_mut().for_each(|b| *b = rng.random_range(-1.0..=1.0));
    let dims = mocapkit_core::fitting::params_to_vector(&base).len();
    let angle_dims = dims - base.shape.betas.len() - 3;
    let waves: Vec<(f64, f64)> = (0..angle_dims)
        .map(|_| (rng.random_range(0.0..0.1), rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    let base_vec = mocapkit_core::fitting::params_to_vector(&base);
    (0..frames)
        .map(|t| {
            let mut v = base_vec.clone();
            for (d, (amp, phase)) in waves.iter().enumerate() {
                v[d] += amp * (0.3 * t as f64 + phase).sin();
            }
            Ok(mocapkit_core::fitting::params_from_vector(&v, &base)?)
        })
        .collect()
}

pub fn cmd_synth(a: &SynthArgs, strictness: Strictness) -> Result<()> {
    if !(a.keypoint_noise.is_finite() && a.keypoint_noise >= 0.0) {
        bail!(mocapkit_core::Error::Input("keypoint noise must be non-negative".into()));
    }
    let model = load_asset(&a.asset, strictness)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let seq = synth_sequence(&model, &mut rng, a.frames)?;
    let noise = Normal::new(0.0, a.keypoint_noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let names = model.keypoint_names();

    let mut predictions = Vec::new();
    let mut keypoints = Vec::new();
    for (t, gt) in seq.iter().enumerate() {
        let frame = t as u64;
        let pose = gt.to_pose(&model)?;
        let world = world_rotations(model.tree(), &pose.global_orient, &pose.local_poses())?;
        let mut body = BodyPrediction {
            global_orient: gt.global_orient,
            body_pose: gt.body_pose.clone(),
            shape: gt.shape.clone(),
            camera: gt.camera,
        };
        let mut hands = Vec::new();
        for side in [Side::Left, Side::Right] {
            let hj = model
                .hand_joints(side)
                .ok_or_else(|| anyhow!("asset declares no {} hand", side.as_str()))?;
            let slot = model.body_joints().iter().position(|&j| j == hj.wrist).expect("wrist");
            if a.wrist_noise > 0.0 {
                let delta = random_aa(&mut rng, 1.0).0.normalize() * a.wrist_noise;
                let m = AxisAngle(delta).to_matrix() * body.body_pose[slot].to_matrix();
                body.body_pose[slot] = mocapkit_core::kinematics::rotation_to_axis_angle(&m)?;
            }
            let hand_shape: Vec<f64> = (0..model.shape_dim()).map(|_| rng.random_range(-1.0..=1.0)).collect();
            hands.push(HandPrediction {
                side,
                global_orient: mocapkit_core::kinematics::rotation_to_axis_angle(&world[hj.wrist])?,
                hand_pose: gt.hand_pose(side).to_vec(),
                shape: ShapeParams::new(hand_shape),
                camera: gt.camera,
            });
        }
        predictions.push(PredictionFrame {
            frame,
            body: Some(BodyPredictionDoc::from_prediction(&body)),
            left_hand: Some(HandPredictionDoc::from_prediction(&hands[0])),
            right_hand: Some(HandPredictionDoc::from_prediction(&hands[1])),
        });

        let mut kp = mocapkit_core::fitting::render_keypoints(&model, gt)?;
        if a.keypoint_noise > 0.0 {
            for p in kp.points.iter_mut() {
                *p += Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
            }
        }
        keypoints.push((frame, kp));
    }
    write_doc(&ParamsFile::from_params(seq.iter().enumerate().map(|(t, p)| (t as u64, p))), &a.gt_out)?;
    write_doc(&PredictionFile::new(predictions), &a.predictions_out)?;
    write_doc(&KeypointFile::from_sets_2d(names, &keypoints)?, &a.keypoints_out)
}

fn obj_text(vertices: &[Vector3<f64>], faces: &[[usize; 3]]) -> String {
    let mut s = String::with_capacity(vertices.len() * 48 + faces.len() * 16);
    for v in vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn cmd_pose(a: &PoseArgs, strictness: Strictness) -> Result<()> {
    let model = load_asset(&a.asset, strictness)?;
    let params = read_doc::<ParamsFile>(&a.params, strictness)?.to_params(&model)?;
    if let Some(dir) = &a.obj_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let regressor = model.keypoint_regressor();
    let mut joints = Vec::new();
    let mut keypoints = Vec::new();
    for (frame, p) in &params {
        let mesh = pose_mesh(&model, &p.to_pose(&model)?, &p.shape)?;
        let kp3 = regressor.mul_points(&mesh.vertices);
        if let Some(dir) = &a.obj_dir {
            let path = dir.join(format!("frame_{frame:06}.obj"));
            std::fs::write(&path, obj_text(&mesh.vertices, model.faces()))
                .with_context(|| format!("writing {}", path.display()))?;
        }
        let kp2 = KeypointSet2D::new(p.camera.project(&kp3), vec![1.0; kp3.len()])?;
        joints.push((*frame, kp3));
        keypoints.push((*frame, kp2));
    }
    write_doc(&KeypointFile::from_points_3d(model.keypoint_names(), &joints)?, &a.joints_out)?;
    if let Some(path) = &a.keypoints_out {
        write_doc(&KeypointFile::from_sets_2d(model.keypoint_names(), &keypoints)?, path)?;
    }
    Ok(())
}

pub fn cmd_integrate(a: &IntegrateArgs, strictness: Strictness) -> Result<()> {
    let model = load_asset(&a.asset, strictness)?;
    let preds = read_doc::<PredictionFile>(&a.predictions, strictness)?;
    let mut out = Vec::new();
    for f in &preds.frames {
        let Some(body) = &f.body else {
            log::warn!("frame {}: no body prediction, skipped", f.frame);
            continue;
        };
        let body = body.to_prediction()?;
        let left = f.left_hand.as_ref().map(|h| h.to_prediction(Side::Left)).transpose()?;
        let right = f.right_hand.as_ref().map(|h| h.to_prediction(Side::Right)).transpose()?;
        let fused = if a.keep_wrists {
            copy_paste_keep_wrists(&model, &body, left.as_ref(), right.as_ref())
        } else {
            copy_paste(&model, &body, left.as_ref(), right.as_ref())
        }
        .with_context(|| format!("frame {}", f.frame))?;
        out.push((f.frame, fused));
    }
    write_doc(&ParamsFile::from_params(out.iter().map(|(f, p)| (*f, p))), &a.out)
}

fn stop_name(s: FitStop) -> &'static str {
    match s {
        FitStop::Completed => "completed",
        FitStop::Stalled => "stalled",
    }
}

pub fn cmd_fit(a: &FitArgs, strictness: Strictness) -> Result<()> {
    let model = load_asset(&a.asset, strictness)?;
    let init = read_doc::<ParamsFile>(&a.init, strictness)?.to_params(&model)?;
    let kp_file = read_doc::<KeypointFile>(&a.keypoints, strictness)?;
    let kps = kp_file.to_sets_2d(&model.keypoint_names())?;

    let mask = if a.wrists_only {
        FitMask::wrists_only()
    } else {
        FitMask {
            fingers: a.optimize_fingers,
            shape: a.optimize_shape,
            ..FitMask::default()
        }
    };
    let config = FitConfig {
        iterations: a.iters,
        weight_2d: a.weight_2d,
        weight_prior_pose: a.weight_prior_pose,
        weight_prior_shape: a.weight_prior_shape,
        mask,
        ..FitConfig::default()
    };
    config.validate()?;

    let jobs: Vec<(u64, &WholeBodyParams, &KeypointSet2D)> = init
        .iter()
        .map(|(frame, p)| {
            let kp = kps
                .iter()
                .find(|(f, _)| f == frame)
                .map(|(_, k)| k)
                .ok_or_else(|| anyhow!(mocapkit_core::Error::Input(format!("no keypoints for frame {frame}"))))?;
            Ok((*frame, p, kp))
        })
        .collect::<Result<_>>()?;

    let fit_one = |(frame, p, kp): &(u64, &WholeBodyParams, &KeypointSet2D)| {
        fit(&model, p, &p.camera, kp, &config).with_context(|| format!("fitting frame {frame}"))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .context("starting worker threads")?;
    let results: Vec<_> = pool.install(|| jobs.par_iter().map(fit_one).collect::<Result<Vec<_>>>())?;

    let mut fitted: Vec<WholeBodyParams> = results.iter().map(|r| r.params.clone()).collect();
    if a.smooth && !fitted.is_empty() {
        let norm = match a.smooth_kernel {
            SmoothKernel::Published => KernelNormalization::AsPublished,
            SmoothKernel::UnitSum => KernelNormalization::UnitSum,
        };
        fitted = smooth_params(&fitted, norm)?;
    }
    let frames: Vec<u64> = jobs.iter().map(|j| j.0).collect();
    write_doc(&ParamsFile::from_params(frames.iter().copied().zip(fitted.iter())), &a.out)?;
    if let Some(path) = &a.trace_out {
        let trace = FitTraceFile {
            format: FitTraceFile::FORMAT.into(),
            version: FORMAT_VERSION,
            frames: frames
                .iter()
                .zip(&results)
                .map(|(f, r)| FitTraceFrame {
                    frame: *f,
                    initial_cost: r.initial_cost,
                    cost_trace: r.cost_trace.clone(),
                    reprojection_rms: r.reprojection_rms,
                    stop: stop_name(r.stop).into(),
                })
                .collect(),
        };
        write_doc(&trace, path)?;
    }
    Ok(())
}

fn frame_errors(pred: &KeypointFile, gt: &KeypointFile, align: Alignment, scale: f64) -> Result<Vec<f64>> {
    if pred.dims != gt.dims {
        bail!(mocapkit_core::Error::Format("prediction and ground truth differ in dimension".into()));
    }
    if pred.joint_names != gt.joint_names {
        bail!(mocapkit_core::Error::Format("prediction and ground truth list different joints".into()));
    }
    let mut errors = Vec::new();
    for g in &gt.frames {
        let p = pred
            .frames
            .iter()
            .find(|p| p.frame == g.frame)
            .ok_or_else(|| anyhow!(mocapkit_core::Error::Input(format!("no prediction for frame {}", g.frame))))?;
        let errs = if gt.dims == 3 {
            let v = |f: &KeypointFrame| f.points.iter().map(|q| Vector3::new(q[0], q[1], q[2])).collect::<Vec<_>>();
            joint_errors(&v(p), &v(g), align)?
        } else {
            let v = |f: &KeypointFrame| f.points.iter().map(|q| Vector2::new(q[0], q[1])).collect::<Vec<_>>();
            joint_errors(&v(p), &v(g), align)?
        };
        errors.extend(errs.iter().zip(&g.confidence).filter(|(_, c)| **c > 0.0).map(|(e, _)| e * scale));
    }
    Ok(errors)
}

pub fn cmd_eval(a: &EvalArgs, strictness: Strictness) -> Result<()> {
    let pred = read_doc::<KeypointFile>(&a.pred, strictness)?;
    let gt = read_doc::<KeypointFile>(&a.gt, strictness)?;
    let (expected_dims, default_range, default_scale) = match a.metric {
        MetricArg::ThreeD => (3, mocapkit_core::metrics::RANGE_3D_MM, 1000.0),
        MetricArg::TwoD => (2, mocapkit_core::metrics::RANGE_2D_PX, 1.0),
    };
    if gt.dims != expected_dims {
        bail!(mocapkit_core::Error::Format(format!(
            "metric needs {expected_dims}D keypoints, ground truth is {}D",
            gt.dims
        )));
    }
    let scale = a.unit_scale.unwrap_or(default_scale);
    if !(scale.is_finite() && scale > 0.0) {
        bail!(mocapkit_core::Error::Input("unit scale must be positive".into()));
    }
    let align = match a.align {
        AlignArg::None => Alignment::None,
        AlignArg::Root => Alignment::RootRelative(0),
    };
    let (lo, hi) = a.range.unwrap_or(default_range);
    let errors = frame_errors(&pred, &gt, align, scale)?;
    let thresholds = linspace(lo, hi, a.thresholds)?;
    let curve = pck_curve_from_errors(&errors, &thresholds)?;
    let report = EvalReport {
        format: EvalReport::FORMAT.into(),
        version: FORMAT_VERSION,
        metric: match a.metric {
            MetricArg::ThreeD => "3d",
            MetricArg::TwoD => "2d",
        }
        .into(),
        alignment: match a.align {
            AlignArg::None => "none",
            AlignArg::Root => "root",
        }
        .into(),
        range: [lo, hi],
        frames: gt.frames.len(),
        joints: errors.len(),
        thresholds: curve.thresholds().to_vec(),
        pck: curve.values().to_vec(),
        auc: auc(&curve),
    };
    write_doc(&report, &a.out)?;
    if let Some(path) = &a.csv {
        let mut s = String::from("threshold,pck\n");
        for (t, v) in curve.thresholds().iter().zip(curve.values()) {
            let _ = writeln!(s, "{t},{v}");
        }
        std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn cmd_prep(a: &PrepArgs, strictness: Strictness) -> Result<()> {
    let input = read_doc::<KeypointFile>(&a.keypoints, strictness)?;
    let config = read_doc::<PrepConfig>(&a.config, strictness)?;
    let mut names = input.joint_names.clone();
    let mut frames = input.frames.clone();

    if let Some(doc) = &config.joint_map {
        let map = doc.to_map()?;
        names = match &config.target_joint_names {
            Some(n) => n.clone(),
            None => reorder_joints(&names, &map)?,
        };
        for f in frames.iter_mut() {
            f.points = reorder_joints(&f.points, &map)?;
            f.confidence = reorder_joints(&f.confidence, &map)?;
        }
    }
    if let Some(reference) = config.reference_knuckle_length {
        if input.dims != 3 {
            bail!(mocapkit_core::Error::Input("knuckle rescaling needs 3D keypoints".into()));
        }
        let pair = (config.knuckle_pair[0], config.knuckle_pair[1]);
        for f in frames.iter_mut() {
            let pts: Vec<Vector3<f64>> = f.points.iter().map(|q| Vector3::new(q[0], q[1], q[2])).collect();
            let scaled = rescale_keypoints(&pts, reference, pair).with_context(|| format!("frame {}", f.frame))?;
            f.points = scaled.iter().map(|p| vec![p.x, p.y, p.z]).collect();
        }
    }
    if let Some(width) = config.flip_width {
        if input.dims != 2 {
            bail!(mocapkit_core::Error::Input("flipping needs 2D keypoints".into()));
        }
        for f in frames.iter_mut() {
            let kp = KeypointSet2D::new(
                f.points.iter().map(|q| Vector2::new(q[0], q[1])).collect(),
                f.confidence.clone(),
            )?;
            let flipped = flip_keypoints_2d(&kp, width)?;
            f.points = flipped.points.iter().map(|p| vec![p.x, p.y]).collect();
        }
    }
    write_doc(&KeypointFile::new(input.dims, names, frames)?, &a.out)
}

pub fn cmd_blur(a: &BlurArgs) -> Result<()> {
    let kernel = motion_blur_kernel(a.length, a.angle)?;
    let img = image::open(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let (channels, raw, w, h) = match img {
        image::DynamicImage::ImageLuma8(b) => (1, b.as_raw().clone(), b.width(), b.height()),
        image::DynamicImage::ImageLumaA8(b) => (2, b.as_raw().clone(), b.width(), b.height()),
        image::DynamicImage::ImageRgb8(b) => (3, b.as_raw().clone(), b.width(), b.height()),
        other => {
            let b = other.to_rgba8();
            (4, b.as_raw().clone(), b.width(), b.height())
        }
    };
    let data = raw.iter().map(|v| *v as f64).collect();
    let input = Image::new(h as usize, w as usize, channels, data)?;
    let out = convolve2d(&input, &kernel);
    let bytes: Vec<u8> = out.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    let color = match channels {
        1 => image::ExtendedColorType::L8,
        2 => image::ExtendedColorType::La8,
        3 => image::ExtendedColorType::Rgb8,
        _ => image::ExtendedColorType::Rgba8,
    };
    image::save_buffer_with_format(&a.output, &bytes, w, h, color, image::ImageFormat::Png)
        .with_context(|| format!("writing {}", a.output.display()))
}
