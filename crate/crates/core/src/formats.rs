//! JSON file formats.
//!
//! Every document carries a `format` tag and a `version`. Writers emit keys in
//! a fixed order, two-space indentation and every float in scientific notation
//! with 17 significant digits, so write → read → write is byte-identical.
//! Readers are strict by default: unknown fields are an error.

use std::io;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::camera::WeakPerspectiveCamera;
use crate::dataprep::JointMap;
use crate::error::{Error, Result};
use crate::fitting::KeypointSet2D;
use crate::integration::{BodyPrediction, HandPrediction, WholeBodyParams};
use crate::kinematics::{AxisAngle, SkeletonTree};
use crate::model::{HandJoints, ModelParts, ParametricModel, PerSide, ShapeParams, Side};
use crate::sparse::SparseMatrix;

pub const FORMAT_VERSION: u32 = 1;

/// Upper bound on any declared matrix dimension, so hostile headers cannot
/// request huge allocations.
pub const MAX_DIMENSION: usize = 1 << 24;

/// Whether unknown fields are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

/// Pretty printer that writes floats as `{:.16e}`.
struct CanonicalFormatter(PrettyFormatter<'static>);

impl Formatter for CanonicalFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if !value.is_finite() {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "non-finite float"));
        }
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Canonical text of any serialisable value, newline-terminated. Non-finite
/// floats have no JSON representation and are rejected.
pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String> {
    value
        .serialize(finite::Check)
        .map_err(|e| Error::Format(format!("cannot serialise: {e}")))?;
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, CanonicalFormatter(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Format(format!("cannot serialise: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Serializer that only inspects floats; serde_json would silently write
/// non-finite values as `null`.
mod finite {
    use serde::ser::{self, Serialize};
    use std::fmt;

    #[derive(Debug)]
    pub struct NonFinite(String);

    impl fmt::Display for NonFinite {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str(&self.0)
        }
    }

    impl std::error::Error for NonFinite {}

    impl ser::Error for NonFinite {
        fn custom<T: fmt::Display>(msg: T) -> Self {
            NonFinite(msg.to_string())
        }
    }

    #[derive(Clone, Copy)]
    pub struct Check;

    type R = Result<(), NonFinite>;

    macro_rules! accept {
        ($($name:ident($ty:ty)),* $(,)?) => {
            $(fn $name(self, _: $ty) -> R { Ok(()) })*
        };
    }

    impl ser::Serializer for Check {
        type Ok = ();
        type Error = NonFinite;
        type SerializeSeq = Check;
        type SerializeTuple = Check;
        type SerializeTupleStruct = Check;
        type SerializeTupleVariant = Check;
        type SerializeMap = Check;
        type SerializeStruct = Check;
        type SerializeStructVariant = Check;

        accept!(
            serialize_bool(bool), serialize_i8(i8), serialize_i16(i16), serialize_i32(i32),
            serialize_i64(i64), serialize_u8(u8), serialize_u16(u16), serialize_u32(u32),
            serialize_u64(u64), serialize_char(char), serialize_str(&str), serialize_bytes(&[u8]),
            serialize_unit_struct(&'static str),
        );

        fn serialize_f32(self, v: f32) -> R {
            self.serialize_f64(v as f64)
        }

        fn serialize_f64(self, v: f64) -> R {
            if v.is_finite() {
                Ok(())
            } else {
                Err(NonFinite(format!("non-finite float {v}")))
            }
        }

        fn serialize_none(self) -> R {
            Ok(())
        }

        fn serialize_some<T: ?Sized + Serialize>(self, v: &T) -> R {
            v.serialize(self)
        }

        fn serialize_unit(self) -> R {
            Ok(())
        }

        fn serialize_unit_variant(self, _: &'static str, _: u32, _: &'static str) -> R {
            Ok(())
        }

        fn serialize_newtype_struct<T: ?Sized + Serialize>(self, _: &'static str, v: &T) -> R {
            v.serialize(self)
        }

        fn serialize_newtype_variant<T: ?Sized + Serialize>(
            self,
            _: &'static str,
            _: u32,
            _: &'static str,
            v: &T,
        ) -> R {
            v.serialize(self)
        }

        fn serialize_seq(self, _: Option<usize>) -> Result<Check, NonFinite> {
            Ok(self)
        }

        fn serialize_tuple(self, _: usize) -> Result<Check, NonFinite> {
            Ok(self)
        }

        fn serialize_tuple_struct(self, _: &'static str, _: usize) -> Result<Check, NonFinite> {
            Ok(self)
        }

        fn serialize_tuple_variant(
            self,
            _: &'static str,
            _: u32,
            _: &'static str,
            _: usize,
        ) -> Result<Check, NonFinite> {
            Ok(self)
        }

        fn serialize_map(self, _: Option<usize>) -> Result<Check, NonFinite> {
            Ok(self)
        }

        fn serialize_struct(self, _: &'static str, _: usize) -> Result<Check, NonFinite> {
            Ok(self)
        }

        fn serialize_struct_variant(
            self,
            _: &'static str,
            _: u32,
            _: &'static str,
            _: usize,
        ) -> Result<Check, NonFinite> {
            Ok(self)
        }
    }

    macro_rules! compound {
        ($tr:ident, $method:ident) => {
            impl ser::$tr for Check {
                type Ok = ();
                type Error = NonFinite;

                fn $method<T: ?Sized + Serialize>(&mut self, v: &T) -> R {
                    v.serialize(Check)
                }

                fn end(self) -> R {
                    Ok(())
                }
            }
        };
    }

    compound!(SerializeSeq, serialize_element);
    compound!(SerializeTuple, serialize_element);
    compound!(SerializeTupleStruct, serialize_field);
    compound!(SerializeTupleVariant, serialize_field);

    impl ser::SerializeMap for Check {
        type Ok = ();
        type Error = NonFinite;

        fn serialize_key<T: ?Sized + Serialize>(&mut self, k: &T) -> R {
            k.serialize(Check)
        }

        fn serialize_value<T: ?Sized + Serialize>(&mut self, v: &T) -> R {
            v.serialize(Check)
        }

        fn end(self) -> R {
            Ok(())
        }
    }

    impl ser::SerializeStruct for Check {
        type Ok = ();
        type Error = NonFinite;

        fn serialize_field<T: ?Sized + Serialize>(&mut self, _: &'static str, v: &T) -> R {
            v.serialize(Check)
        }

        fn end(self) -> R {
            Ok(())
        }
    }

    impl ser::SerializeStructVariant for Check {
        type Ok = ();
        type Error = NonFinite;

        fn serialize_field<T: ?Sized + Serialize>(&mut self, _: &'static str, v: &T) -> R {
            v.serialize(Check)
        }

        fn end(self) -> R {
            Ok(())
        }
    }
}

/// A top-level file type.
pub trait Document: Serialize + DeserializeOwned {
    /// Value of the `format` key.
    const FORMAT: &'static str;

    fn header(&self) -> (&str, u32);

    /// Structural checks beyond the schema.
    fn check(&self) -> Result<()> {
        Ok(())
    }

    fn from_json(text: &str, strictness: Strictness) -> Result<Self> {
        let doc: Self = match strictness {
            Strictness::Lenient => serde_json::from_str(text)?,
            Strictness::Strict => {
                let mut de = serde_json::Deserializer::from_str(text);
                let mut unknown = Vec::new();
                let doc: Self = serde_ignored::deserialize(&mut de, |path| unknown.push(path.to_string()))?;
                de.end()?;
                if !unknown.is_empty() {
                    return Err(Error::Format(format!("unknown field(s): {}", unknown.join(", "))));
                }
                doc
            }
        };
        let (format, version) = doc.header();
        if format != Self::FORMAT {
            return Err(Error::Format(format!("expected format {:?}, found {format:?}", Self::FORMAT)));
        }
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported {format} version {version}")));
        }
        doc.check()?;
        Ok(doc)
    }

    fn to_json(&self) -> Result<String> {
        to_canonical_string(self)
    }

    fn read(path: &Path, strictness: Strictness) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, strictness)
    }

    fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

fn v3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn aa_list(v: &[AxisAngle]) -> Vec<[f64; 3]> {
    v.iter().map(|a| a.to_array()).collect()
}

fn to_aa_list(v: &[[f64; 3]]) -> Vec<AxisAngle> {
    v.iter().map(|a| AxisAngle::from_array(*a)).collect()
}

fn check_frames<'a>(frames: impl Iterator<Item = &'a u64>) -> Result<()> {
    let mut prev: Option<u64> = None;
    for &f in frames {
        if prev.is_some_and(|p| f <= p) {
            return Err(Error::Format(format!("frame indices must increase (frame {f})")));
        }
        prev = Some(f);
    }
    Ok(())
}

fn check_dim(what: &str, n: usize) -> Result<()> {
    if n > MAX_DIMENSION {
        return Err(Error::Format(format!("{what} dimension {n} exceeds {MAX_DIMENSION}")));
    }
    Ok(())
}

/// Sparse matrix as `(row, col, value)` triplets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseDoc {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseDoc {
    pub fn from_matrix(m: &SparseMatrix) -> Self {
        SparseDoc {
            rows: m.rows(),
            cols: m.cols(),
            entries: m.triplets().collect(),
        }
    }

    pub fn to_matrix(&self, what: &str) -> Result<SparseMatrix> {
        check_dim(what, self.rows)?;
        check_dim(what, self.cols)?;
        SparseMatrix::from_triplets(self.rows, self.cols, &self.entries)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidesDoc<T> {
    pub left: T,
    pub right: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandJointsDoc {
    pub wrist: usize,
    pub fingers: Vec<usize>,
}

/// Serialised [`ParametricModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAsset {
    pub format: String,
    pub version: u32,
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    pub skin_weights: SparseDoc,
    pub joint_regressor: SparseDoc,
    pub parents: Vec<Option<usize>>,
    pub joint_names: Vec<String>,
    /// One displacement field per shape coefficient.
    pub shape_basis: Vec<Vec<[f64; 3]>>,
    #[serde(default)]
    pub fingertip_vertex_ids: Option<SidesDoc<Vec<usize>>>,
    #[serde(default)]
    pub hand_joint_ids: Option<SidesDoc<HandJointsDoc>>,
    #[serde(default)]
    pub reference_knuckle_length: Option<f64>,
    /// Reserved for pose-dependent correctives; must be absent or null.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_correctives: Option<serde_json::Value>,
}

impl Document for ModelAsset {
    const FORMAT: &'static str = "mocapkit.model";

    fn header(&self) -> (&str, u32) {
        (&self.format, self.version)
    }
}

impl ModelAsset {
    pub fn from_model(model: &ParametricModel) -> Self {
        let parts = model.parts();
        ModelAsset {
            format: Self::FORMAT.into(),
            version: FORMAT_VERSION,
            vertices: parts.template_vertices.iter().map(v3).collect(),
            faces: parts.faces.clone(),
            skin_weights: SparseDoc::from_matrix(&parts.skin_weights),
            joint_regressor: SparseDoc::from_matrix(&parts.joint_regressor),
            parents: parts.tree.parents().to_vec(),
            joint_names: parts.tree.names().to_vec(),
            shape_basis: parts.shape_basis.iter().map(|c| c.iter().map(v3).collect()).collect(),
            fingertip_vertex_ids: parts.fingertip_vertices.as_ref().map(|s| SidesDoc {
                left: s.left.clone(),
                right: s.right.clone(),
            }),
            hand_joint_ids: parts.hand_joints.as_ref().map(|s| SidesDoc {
                left: HandJointsDoc {
                    wrist: s.left.wrist,
                    fingers: s.left.fingers.clone(),
                },
                right: HandJointsDoc {
                    wrist: s.right.wrist,
                    fingers: s.right.fingers.clone(),
                },
            }),
            reference_knuckle_length: parts.reference_knuckle_length,
            pose_correctives: None,
        }
    }

    /// Builds and validates the model.
    pub fn to_model(&self) -> Result<ParametricModel> {
        if self.pose_correctives.as_ref().is_some_and(|v| !v.is_null()) {
            return Err(Error::Format("pose correctives are not supported".into()));
        }
        let tree = SkeletonTree::new(self.parents.clone(), self.joint_names.clone())?;
        let to_vec3 = |v: &[f64; 3]| Vector3::new(v[0], v[1], v[2]);
        let hand = |h: &HandJointsDoc| HandJoints {
            wrist: h.wrist,
            fingers: h.fingers.clone(),
        };
        ParametricModel::new(ModelParts {
            template_vertices: self.vertices.iter().map(to_vec3).collect(),
            faces: self.faces.clone(),
            shape_basis: self
                .shape_basis
                .iter()
                .map(|c| c.iter().map(to_vec3).collect())
                .collect(),
            skin_weights: self.skin_weights.to_matrix("skin_weights")?,
            joint_regressor: self.joint_regressor.to_matrix("joint_regressor")?,
            tree,
            hand_joints: self.hand_joint_ids.as_ref().map(|s| PerSide {
                left: hand(&s.left),
                right: hand(&s.right),
            }),
            fingertip_vertices: self.fingertip_vertex_ids.as_ref().map(|s| PerSide {
                left: s.left.clone(),
                right: s.right.clone(),
            }),
            reference_knuckle_length: self.reference_knuckle_length,
        })
    }
}

/// Reads, validates and builds a model.
pub fn load_model(path: &Path, strictness: Strictness) -> Result<ParametricModel> {
    ModelAsset::read(path, strictness)?.to_model()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraDoc {
    pub scale: f64,
    pub translation: [f64; 2],
}

impl CameraDoc {
    pub fn from_camera(c: &WeakPerspectiveCamera) -> Self {
        let t = c.translation();
        CameraDoc {
            scale: c.scale(),
            translation: [t.x, t.y],
        }
    }

    pub fn to_camera(&self) -> Result<WeakPerspectiveCamera> {
        WeakPerspectiveCamera::new(self.scale, Vector2::new(self.translation[0], self.translation[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyPredictionDoc {
    pub global_orient: [f64; 3],
    pub body_pose: Vec<[f64; 3]>,
    pub betas: Vec<f64>,
    pub camera: CameraDoc,
}

impl BodyPredictionDoc {
    pub fn from_prediction(p: &BodyPrediction) -> Self {
        BodyPredictionDoc {
            global_orient: p.global_orient.to_array(),
            body_pose: aa_list(&p.body_pose),
            betas: p.shape.betas.clone(),
            camera: CameraDoc::from_camera(&p.camera),
        }
    }

    pub fn to_prediction(&self) -> Result<BodyPrediction> {
        Ok(BodyPrediction {
            global_orient: AxisAngle::from_array(self.global_orient),
            body_pose: to_aa_list(&self.body_pose),
            shape: ShapeParams::new(self.betas.clone()),
            camera: self.camera.to_camera()?,
        })
    }
}

/// Hand prediction; the side is given by the slot it is stored in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandPredictionDoc {
    pub global_orient: [f64; 3],
    pub hand_pose: Vec<[f64; 3]>,
    pub betas: Vec<f64>,
    pub camera: CameraDoc,
}

impl HandPredictionDoc {
    pub fn from_prediction(p: &HandPrediction) -> Self {
        HandPredictionDoc {
            global_orient: p.global_orient.to_array(),
            hand_pose: aa_list(&p.hand_pose),
            betas: p.shape.betas.clone(),
            camera: CameraDoc::from_camera(&p.camera),
        }
    }

    pub fn to_prediction(&self, side: Side) -> Result<HandPrediction> {
        Ok(HandPrediction {
            side,
            global_orient: AxisAngle::from_array(self.global_orient),
            hand_pose: to_aa_list(&self.hand_pose),
            shape: ShapeParams::new(self.betas.clone()),
            camera: self.camera.to_camera()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFrame {
    pub frame: u64,
    pub body: Option<BodyPredictionDoc>,
    pub left_hand: Option<HandPredictionDoc>,
    pub right_hand: Option<HandPredictionDoc>,
}

/// Per-frame body and hand module outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub format: String,
    pub version: u32,
    pub frames: Vec<PredictionFrame>,
}

impl Document for PredictionFile {
    const FORMAT: &'static str = "mocapkit.predictions";

    fn header(&self) -> (&str, u32) {
        (&self.format, self.version)
    }

    fn check(&self) -> Result<()> {
        check_frames(self.frames.iter().map(|f| &f.frame))
    }
}

impl PredictionFile {
    pub fn new(frames: Vec<PredictionFrame>) -> Self {
        PredictionFile {
            format: Self::FORMAT.into(),
            version: FORMAT_VERSION,
            frames,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFrame {
    pub frame: u64,
    pub global_orient: [f64; 3],
    pub body_pose: Vec<[f64; 3]>,
    pub left_hand_pose: Vec<[f64; 3]>,
    pub right_hand_pose: Vec<[f64; 3]>,
    pub betas: Vec<f64>,
    pub camera: CameraDoc,
}

impl ParamsFrame {
    pub fn from_params(frame: u64, p: &WholeBodyParams) -> Self {
        ParamsFrame {
            frame,
            global_orient: p.global_orient.to_array(),
            body_pose: aa_list(&p.body_pose),
            left_hand_pose: aa_list(&p.left_hand_pose),
            right_hand_pose: aa_list(&p.right_hand_pose),
            betas: p.shape.betas.clone(),
            camera: CameraDoc::from_camera(&p.camera),
        }
    }

    pub fn to_params(&self) -> Result<WholeBodyParams> {
        Ok(WholeBodyParams {
            global_orient: AxisAngle::from_array(self.global_orient),
            body_pose: to_aa_list(&self.body_pose),
            left_hand_pose: to_aa_list(&self.left_hand_pose),
            right_hand_pose: to_aa_list(&self.right_hand_pose),
            shape: ShapeParams::new(self.betas.clone()),
            camera: self.camera.to_camera()?,
        })
    }
}

/// Per-frame whole-body parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub format: String,
    pub version: u32,
    pub frames: Vec<ParamsFrame>,
}

impl Document for ParamsFile {
    const FORMAT: &'static str = "mocapkit.params";

    fn header(&self) -> (&str, u32) {
        (&self.format, self.version)
    }

    fn check(&self) -> Result<()> {
        check_frames(self.frames.iter().map(|f| &f.frame))
    }
}

impl ParamsFile {
    pub fn new(frames: Vec<ParamsFrame>) -> Self {
        ParamsFile {
            format: Self::FORMAT.into(),
            version: FORMAT_VERSION,
            frames,
        }
    }

    pub fn from_params<'a>(frames: impl IntoIterator<Item = (u64, &'a WholeBodyParams)>) -> Self {
        Self::new(frames.into_iter().map(|(f, p)| ParamsFrame::from_params(f, p)).collect())
    }

    /// Frames converted and checked against `model`.
    pub fn to_params(&self, model: &ParametricModel) -> Result<Vec<(u64, WholeBodyParams)>> {
        self.frames
            .iter()
            .map(|f| {
                let p = f.to_params()?;
                p.validate(model)?;
                Ok((f.frame, p))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointFrame {
    pub frame: u64,
    /// One `dims`-long coordinate list per joint.
    pub points: Vec<Vec<f64>>,
    pub confidence: Vec<f64>,
}

/// Named 2D or 3D keypoints per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointFile {
    pub format: String,
    pub version: u32,
    pub dims: usize,
    pub joint_names: Vec<String>,
    pub frames: Vec<KeypointFrame>,
}

impl Document for KeypointFile {
    const FORMAT: &'static str = "mocapkit.keypoints";

    fn header(&self) -> (&str, u32) {
        (&self.format, self.version)
    }

    fn check(&self) -> Result<()> {
        if self.dims != 2 && self.dims != 3 {
            return Err(Error::Format(format!("dims must be 2 or 3, found {}", self.dims)));
        }
        let mut names: Vec<&String> = self.joint_names.iter().collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Format(format!("duplicate joint name {:?}", w[0])));
        }
        check_frames(self.frames.iter().map(|f| &f.frame))?;
        let n = self.joint_names.len();
        for f in &self.frames {
            if f.points.len() != n || f.confidence.len() != n {
                return Err(Error::Format(format!("frame {} does not list {n} joints", f.frame)));
            }
            if f.points.iter().any(|p| p.len() != self.dims) {
                return Err(Error::Format(format!("frame {} has a point without {} coordinates", f.frame, self.dims)));
            }
            if f.confidence.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::Format(format!("frame {} has a confidence outside [0, 1]", f.frame)));
            }
        }
        Ok(())
    }
}

impl KeypointFile {
    pub fn new(dims: usize, joint_names: Vec<String>, frames: Vec<KeypointFrame>) -> Result<Self> {
        let f = KeypointFile {
            format: Self::FORMAT.into(),
            version: FORMAT_VERSION,
            dims,
            joint_names,
            frames,
        };
        f.check()?;
        Ok(f)
    }

    pub fn from_sets_2d(joint_names: Vec<String>, sets: &[(u64, KeypointSet2D)]) -> Result<Self> {
        let frames = sets
            .iter()
            .map(|(frame, kp)| KeypointFrame {
                frame: *frame,
                points: kp.points.iter().map(|p| vec![p.x, p.y]).collect(),
                confidence: kp.confidence.clone(),
            })
            .collect();
        Self::new(2, joint_names, frames)
    }

    pub fn from_points_3d(joint_names: Vec<String>, frames: &[(u64, Vec<Vector3<f64>>)]) -> Result<Self> {
        let frames = frames
            .iter()
            .map(|(frame, pts)| KeypointFrame {
                frame: *frame,
                points: pts.iter().map(|p| v3(p).to_vec()).collect(),
                confidence: vec![1.0; pts.len()],
            })
            .collect();
        Self::new(3, joint_names, frames)
    }

    /// Index of each `layout` name in this file. Names absent from the file
    /// map to `None`; file names absent from `layout` are an error.
    pub fn resolve(&self, layout: &[String]) -> Result<Vec<Option<usize>>> {
        if let Some(extra) = self.joint_names.iter().find(|n| !layout.contains(n)) {
            return Err(Error::Format(format!("unknown joint name {extra:?}")));
        }
        Ok(layout
            .iter()
            .map(|n| self.joint_names.iter().position(|m| m == n))
            .collect())
    }

    /// 2D keypoints in `layout` order; missing joints get confidence 0.
    pub fn to_sets_2d(&self, layout: &[String]) -> Result<Vec<(u64, KeypointSet2D)>> {
        if self.dims != 2 {
            return Err(Error::Format("expected 2D keypoints".into()));
        }
        let idx = self.resolve(layout)?;
        self.frames
            .iter()
            .map(|f| {
                let (points, confidence) = idx
                    .iter()
                    .map(|i| match i {
                        Some(i) => (Vector2::new(f.points[*i][0], f.points[*i][1]), f.confidence[*i]),
                        None => (Vector2::zeros(), 0.0),
                    })
                    .unzip();
                Ok((f.frame, KeypointSet2D::new(points, confidence)?))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointMapDoc {
    pub target_count: usize,
    pub permutation: Vec<Option<usize>>,
}

impl JointMapDoc {
    pub fn to_map(&self) -> Result<JointMap> {
        check_dim("joint map", self.target_count)?;
        JointMap::new(self.target_count, self.permutation.clone())
    }
}

/// Settings for keypoint harmonisation: reorder, then rescale (3D) or flip (2D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub joint_map: Option<JointMapDoc>,
    /// Names of the target layout; defaults to the permuted source names.
    #[serde(default)]
    pub target_joint_names: Option<Vec<String>>,
    #[serde(default)]
    pub flip_width: Option<f64>,
    #[serde(default)]
    pub reference_knuckle_length: Option<f64>,
    #[serde(default = "default_knuckle_pair")]
    pub knuckle_pair: [usize; 2],
}

fn default_knuckle_pair() -> [usize; 2] {
    let (a, b) = crate::dataprep::DEFAULT_KNUCKLE_PAIR;
    [a, b]
}

impl Document for PrepConfig {
    const FORMAT: &'static str = "mocapkit.prep";

    fn header(&self) -> (&str, u32) {
        (&self.format, self.version)
    }

    fn check(&self) -> Result<()> {
        if let Some(m) = &self.joint_map {
            let map = m.to_map()?;
            if let Some(names) = &self.target_joint_names {
                if names.len() != map.target_count() {
                    return Err(Error::Format("target_joint_names does not match the map".into()));
                }
            }
        }
        Ok(())
    }
}

/// Evaluation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub metric: String,
    pub alignment: String,
    pub range: [f64; 2],
    pub frames: usize,
    pub joints: usize,
    pub thresholds: Vec<f64>,
    pub pck: Vec<f64>,
    pub auc: f64,
}

impl Document for EvalReport {
    const FORMAT: &'static str = "mocapkit.eval";

    fn header(&self) -> (&str, u32) {
        (&self.format, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTraceFrame {
    pub frame: u64,
    pub initial_cost: f64,
    pub cost_trace: Vec<f64>,
    pub reprojection_rms: f64,
    pub stop: String,
}

/// Per-frame optimiser diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTraceFile {
    pub format: String,
    pub version: u32,
    pub frames: Vec<FitTraceFrame>,
}

impl Document for FitTraceFile {
    const FORMAT: &'static str = "mocapkit.fit_trace";

    fn header(&self) -> (&str, u32) {
        (&self.format, self.version)
    }

    fn check(&self) -> Result<()> {
        check_frames(self.frames.iter().map(|f| &f.frame))
    }
}
