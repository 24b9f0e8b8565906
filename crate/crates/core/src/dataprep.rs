//! Dataset harmonisation and augmentation: knuckle-length rescaling, joint
//! reordering, left/right flips and motion blur.

use nalgebra::{DMatrix, Vector2, Vector3};

use crate::error::{check_len, Error, Result};
use crate::fitting::KeypointSet2D;
use crate::kinematics::AxisAngle;

/// Middle-finger knuckle pair in 21-joint hand layouts.
pub const DEFAULT_KNUCKLE_PAIR: (usize, usize) = (4, 5);

/// Minimum knuckle length accepted by [`rescale_keypoints`].
pub const MIN_KNUCKLE_LENGTH: f64 = 1e-9;

/// Scales hand joints uniformly about joint 0 so that the distance between the
/// `knuckles` pair equals `reference_length`.
pub fn rescale_keypoints(
    joints: &[Vector3<f64>],
    reference_length: f64,
    knuckles: (usize, usize),
) -> Result<Vec<Vector3<f64>>> {
    if !(reference_length.is_finite() && reference_length > 0.0) {
        return Err(Error::Input(format!("invalid reference knuckle length {reference_length}")));
    }
    let (a, b) = knuckles;
    if a >= joints.len() || b >= joints.len() {
        return Err(Error::Input(format!(
            "knuckle pair ({a}, {b}) out of range for {} joints",
            joints.len()
        )));
    }
    let length = (joints[a] - joints[b]).norm();
    if !length.is_finite() {
        return Err(Error::Numeric("knuckle length".into()));
    }
    if length < MIN_KNUCKLE_LENGTH {
        return Err(Error::DegenerateKeypoints(format!(
            "knuckle joints {a} and {b} coincide (distance {length:e})"
        )));
    }
    let scale = reference_length / length;
    let pivot = joints[0];
    Ok(joints.iter().map(|j| pivot + (j - pivot) * scale).collect())
}

/// Maps source joints into a target layout.
///
/// `permutation[s]` is the target slot of source joint `s`, or `None` to drop it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointMap {
    target_count: usize,
    permutation: Vec<Option<usize>>,
}

impl JointMap {
    /// Fails unless the map is injective and every target slot is filled.
    pub fn new(target_count: usize, permutation: Vec<Option<usize>>) -> Result<Self> {
        let mut seen = vec![false; target_count];
        for (s, t) in permutation.iter().enumerate() {
            let Some(t) = *t else { continue };
            if t >= target_count {
                return Err(Error::Input(format!("source joint {s} maps to slot {t} of {target_count}")));
            }
            if std::mem::replace(&mut seen[t], true) {
                return Err(Error::Input(format!("target slot {t} is mapped twice")));
            }
        }
        if let Some(t) = seen.iter().position(|s| !s) {
            return Err(Error::Input(format!("target slot {t} is not covered")));
        }
        Ok(JointMap {
            target_count,
            permutation,
        })
    }

    pub fn identity(n: usize) -> Self {
        JointMap {
            target_count: n,
            permutation: (0..n).map(Some).collect(),
        }
    }

    pub fn source_count(&self) -> usize {
        self.permutation.len()
    }

    pub fn target_count(&self) -> usize {
        self.target_count
    }

    pub fn permutation(&self) -> &[Option<usize>] {
        &self.permutation
    }

    /// The reverse map; only defined when no source joint is dropped.
    pub fn inverse(&self) -> Result<JointMap> {
        let mut inv = vec![None; self.target_count];
        for (s, t) in self.permutation.iter().enumerate() {
            match t {
                Some(t) => inv[*t] = Some(s),
                None => return Err(Error::Input(format!("source joint {s} is dropped; map is not invertible"))),
            }
        }
        JointMap::new(self.permutation.len(), inv)
    }
}

/// `out[map(s)] = joints[s]` for every kept source joint.
pub fn reorder_joints<T: Clone>(joints: &[T], map: &JointMap) -> Result<Vec<T>> {
    check_len("joints for map", map.source_count(), joints.len())?;
    let mut out: Vec<Option<T>> = vec![None; map.target_count()];
    for (j, t) in joints.iter().zip(&map.permutation) {
        if let Some(t) = t {
            out[*t] = Some(j.clone());
        }
    }
    Ok(out.into_iter().map(|o| o.expect("maps cover every target")).collect())
}

/// Mirrors image x about the vertical centre line: `x ↦ width − x`.
pub fn flip_keypoints_2d(kp: &KeypointSet2D, image_width: f64) -> Result<KeypointSet2D> {
    if !(image_width.is_finite() && image_width > 0.0) {
        return Err(Error::Input(format!("invalid image width {image_width}")));
    }
    Ok(KeypointSet2D {
        points: kp.points.iter().map(|p| Vector2::new(image_width - p.x, p.y)).collect(),
        confidence: kp.confidence.clone(),
    })
}

/// Rotation conjugated by the reflection that negates x: `(x, y, z) ↦ (x, −y, −z)`.
pub fn flip_axis_angle(aa: &AxisAngle) -> AxisAngle {
    AxisAngle::new(aa.0.x, -aa.0.y, -aa.0.z)
}

/// Mirrors hand parameters between the left and right hand conventions.
pub fn flip_hand_params(global_orient: &AxisAngle, hand_pose: &[AxisAngle]) -> (AxisAngle, Vec<AxisAngle>) {
    (
        flip_axis_angle(global_orient),
        hand_pose.iter().map(flip_axis_angle).collect(),
    )
}

/// One annotated hand sample from a training dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct HandSample {
    pub side: crate::model::Side,
    /// 21 joints in the dataset's own order and units.
    pub joints_3d: Option<Vec<Vector3<f64>>>,
    pub keypoints_2d: Option<KeypointSet2D>,
    pub image: Option<Image>,
}

/// Where loaders for licensed hand datasets plug in. None ship with this
/// crate; a loader yields raw samples, which are then brought into the
/// model's layout with [`reorder_joints`], [`rescale_keypoints`] and, for
/// left hands, [`flip_keypoints_2d`].
pub trait HandDataset {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Map from the dataset's joint order to the model's hand keypoint order.
    fn joint_map(&self) -> &JointMap;

    fn sample(&self, index: usize) -> Result<HandSample>;
}

/// Odd-sized square convolution kernel with non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    weights: DMatrix<f64>,
}

impl BlurKernel {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if n != weights.ncols() || n.is_multiple_of(2) {
            return Err(Error::Input("blur kernels must be odd-sized squares".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Input("blur kernel weights must be finite and non-negative".into()));
        }
        if (weights.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("blur kernel sums to {}", weights.sum())));
        }
        Ok(BlurKernel { weights })
    }

    pub fn size(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }
}

/// Linear motion-blur kernel: a rasterised segment of `length` pixels through
/// the centre of the smallest odd grid that holds it, rotated by `angle`
/// radians (counter-clockwise from +x, image y pointing down).
///
/// Each cell is weighted by `max(0, 1 − d)`, where `d` is the distance from
/// the cell centre to the segment, then the kernel is normalised.
pub fn motion_blur_kernel(length: f64, angle: f64) -> Result<BlurKernel> {
    if !(length.is_finite() && angle.is_finite()) {
        return Err(Error::Numeric("blur parameters".into()));
    }
    if length < 1.0 {
        return Err(Error::Input(format!("blur length {length} is below one pixel")));
    }
    let mut n = length.ceil() as usize;
    if n.is_multiple_of(2) {
        n += 1;
    }
    let c = (n / 2) as f64;
    let half = (length - 1.0) / 2.0;
    let dir = Vector2::new(angle.cos(), -angle.sin());
    let mut w = DMatrix::from_fn(n, n, |r, col| {
        let p = Vector2::new(col as f64 - c, r as f64 - c);
        let along = p.dot(&dir).clamp(-half, half);
        let d = (p - dir * along).norm();
        (1.0 - d).max(0.0)
    });
    let total = w.sum();
    w /= total;
    BlurKernel::new(w)
}

/// Row-major `height × width × channels` image of floating-point samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_len("image samples", height * width * channels, data.len())?;
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Input("image dimensions must be positive".into()));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Same-size 2D convolution per channel with reflected borders.
///
/// A window whose samples are all equal yields that sample exactly, so flat
/// regions are untouched by rounding.
pub fn convolve2d(image: &Image, kernel: &BlurKernel) -> Image {
    let n = kernel.size();
    let c = (n / 2) as isize;
    let k = kernel.weights();
    let mut out = image.clone();
    for y in 0..image.height {
        for x in 0..image.width {
            for ch in 0..image.channels {
                let mut acc = 0.0;
                let mut first = None;
                let mut uniform = true;
                for i in 0..n {
                    let sy = reflect(y as isize - (i as isize - c), image.height);
                    for j in 0..n {
                        let w = k[(i, j)];
                        if w == 0.0 {
                            continue;
                        }
                        let sx = reflect(x as isize - (j as isize - c), image.width);
                        let v = image.get(sy, sx, ch);
                        match first {
                            None => first = Some(v),
                            Some(f) => uniform &= f == v,
                        }
                        acc += w * v;
                    }
                }
                out.set(y, x, ch, if uniform { first.unwrap_or(acc) } else { acc });
            }
        }
    }
    out
}
