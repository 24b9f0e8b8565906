//! Procedural articulated toy model with the same structure as a full
//! body-and-hands asset: 22 body joints (wrists included), 15 finger joints
//! per hand, fingertip vertices and a 10-component shape basis.
//!
//! The mesh is a set of vertex rings around joints and bones. Every joint ring
//! is rigidly bound to its joint and regresses that joint; bone rings near the
//! parent end blend with the grandparent joint when both lie in the same
//! region (body or hand). The right half is the exact mirror image (x ↦ −x)
//! of the left half.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::kinematics::SkeletonTree;
use crate::model::{HandJoints, ModelParts, ParametricModel, PerSide};
use crate::sparse::SparseMatrix;

pub const SHAPE_DIM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SizeClass {
    /// Four vertices per ring, one ring per bone.
    Small,
    /// Six vertices per ring, two rings per bone.
    #[default]
    Standard,
}

impl SizeClass {
    fn ring_size(self) -> usize {
        match self {
            SizeClass::Small => 4,
            SizeClass::Standard => 6,
        }
    }

    fn bone_rings(self) -> &'static [f64] {
        match self {
            SizeClass::Small => &[0.25],
            SizeClass::Standard => &[0.2, 0.4],
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Region {
    Center,
    Left,
    Right,
}

const BODY: [(&str, Option<usize>); 22] = [
    ("pelvis", None),
    ("left_hip", Some(0)),
    ("right_hip", Some(0)),
    ("spine1", Some(0)),
    ("left_knee", Some(1)),
    ("right_knee", Some(2)),
    ("spine2", Some(3)),
    ("left_ankle", Some(4)),
    ("right_ankle", Some(5)),
    ("spine3", Some(6)),
    ("left_foot", Some(7)),
    ("right_foot", Some(8)),
    ("neck", Some(9)),
    ("left_collar", Some(9)),
    ("right_collar", Some(9)),
    ("head", Some(12)),
    ("left_shoulder", Some(13)),
    ("right_shoulder", Some(14)),
    ("left_elbow", Some(16)),
    ("right_elbow", Some(17)),
    ("left_wrist", Some(18)),
    ("right_wrist", Some(19)),
];

/// Left-side / centre positions of the body joints (metres, y up, +x = left).
const BODY_POS: [[f64; 3]; 22] = [
    [0.0, 0.0, 0.0],
    [0.09, -0.08, 0.0],
    [-0.09, -0.08, 0.0],
    [0.0, 0.11, -0.01],
    [0.1, -0.46, 0.01],
    [-0.1, -0.46, 0.01],
    [0.0, 0.25, -0.01],
    [0.1, -0.86, -0.02],
    [-0.1, -0.86, -0.02],
    [0.0, 0.31, 0.0],
    [0.11, -0.92, 0.1],
    [-0.11, -0.92, 0.1],
    [0.0, 0.53, -0.01],
    [0.08, 0.44, 0.0],
    [-0.08, 0.44, 0.0],
    [0.0, 0.63, 0.02],
    [0.18, 0.47, -0.01],
    [-0.18, 0.47, -0.01],
    [0.44, 0.47, -0.02],
    [-0.44, 0.47, -0.02],
    [0.69, 0.47, -0.02],
    [-0.69, 0.47, -0.02],
];

const BODY_RADIUS: [f64; 22] = [
    0.06, 0.05, 0.05, 0.06, 0.04, 0.04, 0.06, 0.03, 0.03, 0.06, 0.025, 0.025, 0.03, 0.03, 0.03,
    0.06, 0.035, 0.035, 0.03, 0.03, 0.025, 0.025,
];

/// Per finger: name, base offset from the wrist, direction, segment lengths
/// (three phalanges plus the tip), ring radius.
struct Finger {
    name: &'static str,
    base: [f64; 3],
    dir: [f64; 3],
    lengths: [f64; 3],
    radius: f64,
}

const FINGERS: [Finger; 5] = [
    Finger { name: "index", base: [0.09, 0.0, 0.025], dir: [1.0, 0.0, 0.0], lengths: [0.035, 0.025, 0.02], radius: 0.007 },
    Finger { name: "middle", base: [0.095, 0.0, 0.005], dir: [1.0, 0.0, 0.0], lengths: [0.04, 0.028, 0.022], radius: 0.007 },
    Finger { name: "pinky", base: [0.08, 0.0, -0.033], dir: [1.0, 0.0, -0.1], lengths: [0.028, 0.02, 0.018], radius: 0.006 },
    Finger { name: "ring", base: [0.09, 0.0, -0.015], dir: [1.0, 0.0, -0.05], lengths: [0.037, 0.026, 0.02], radius: 0.007 },
    Finger { name: "thumb", base: [0.03, -0.01, 0.03], dir: [1.0, -0.2, 1.0], lengths: [0.035, 0.03, 0.025], radius: 0.009 },
];

struct Skeleton {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    pos: Vec<Vector3<f64>>,
    radius: Vec<f64>,
    region: Vec<Region>,
    hand: Vec<bool>,
    /// Extra end point for leaf joints (head, feet, finger tips).
    tip: Vec<Option<Vector3<f64>>>,
    mirror: Vec<usize>,
}

fn region_of(name: &str) -> Region {
    if name.starts_with("left_") {
        Region::Left
    } else if name.starts_with("right_") {
        Region::Right
    } else {
        Region::Center
    }
}

fn mirror_point(p: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(-p.x, p.y, p.z)
}

fn build_skeleton(height_scale: f64) -> Skeleton {
    let mut names: Vec<String> = BODY.iter().map(|(n, _)| n.to_string()).collect();
    let mut parents: Vec<Option<usize>> = BODY.iter().map(|(_, p)| *p).collect();
    let mut pos: Vec<Vector3<f64>> = BODY_POS.iter().map(|p| Vector3::from(*p) * height_scale).collect();
    let mut radius = BODY_RADIUS.to_vec();
    let mut hand = vec![false; 22];
    hand[20] = true;
    hand[21] = true;
    let mut tip: Vec<Option<Vector3<f64>>> = vec![None; 22];
    tip[15] = Some(pos[15] + Vector3::new(0.0, 0.2, 0.0) * height_scale);
    tip[10] = Some(pos[10] + Vector3::new(0.0, -0.02, 0.1) * height_scale);
    tip[11] = Some(pos[11] + Vector3::new(0.0, -0.02, 0.1) * height_scale);

    for (side, wrist) in [("left", 20usize), ("right", 21usize)] {
        let sign = if side == "left" { 1.0 } else { -1.0 };
        let w = pos[wrist];
        for f in &FINGERS {
            let dir = Vector3::from(f.dir).normalize();
            let mut p = w + Vector3::new(f.base[0] * sign, f.base[1], f.base[2]) * height_scale;
            let mut parent = wrist;
            for seg in 0..3 {
                names.push(format!("{side}_{}{}", f.name, seg + 1));
                parents.push(Some(parent));
                pos.push(p);
                radius.push(f.radius);
                hand.push(true);
                parent = names.len() - 1;
                let step = Vector3::new(dir.x * sign, dir.y, dir.z) * f.lengths[seg] * height_scale;
                p += step;
                tip.push(if seg == 2 { Some(p) } else { None });
            }
        }
    }
    let region: Vec<Region> = names.iter().map(|n| region_of(n)).collect();
    let mirror = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let other = if let Some(rest) = n.strip_prefix("left_") {
                format!("right_{rest}")
            } else if let Some(rest) = n.strip_prefix("right_") {
                format!("left_{rest}")
            } else {
                return i;
            };
            names.iter().position(|m| *m == other).expect("mirror joint exists")
        })
        .collect();
    Skeleton {
        names,
        parents,
        pos,
        radius,
        region,
        hand,
        tip,
        mirror,
    }
}

struct Vert {
    pos: Vector3<f64>,
    weights: Vec<(usize, f64)>,
    owner: usize,
}

fn ring_frame(dir: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if dir.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = (helper - dir * helper.dot(dir)).normalize();
    let w = dir.cross(&u);
    (u, w)
}

fn ring(center: &Vector3<f64>, dir: &Vector3<f64>, r: f64, m: usize) -> Vec<Vector3<f64>> {
    let (u, w) = ring_frame(dir);
    (0..m)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            center + (u * a.cos() + w * a.sin()) * r
        })
        .collect()
}

/// Direction that defines a joint ring's plane.
fn joint_axis(sk: &Skeleton, j: usize) -> Vector3<f64> {
    let children: Vec<usize> = (0..sk.parents.len()).filter(|&c| sk.parents[c] == Some(j)).collect();
    let target = children
        .iter()
        .find(|&&c| sk.region[c] == sk.region[j])
        .or(children.first())
        .map(|&c| sk.pos[c])
        .or(sk.tip[j]);
    match target {
        Some(t) => (t - sk.pos[j]).normalize(),
        None => (sk.pos[j] - sk.pos[sk.parents[j].expect("non-root leaf")]).normalize(),
    }
}

struct Builder<'a> {
    sk: &'a Skeleton,
    size: SizeClass,
    verts: Vec<Vert>,
    faces: Vec<[usize; 3]>,
    joint_rings: Vec<Vec<usize>>,
    tip_vertex: Vec<Option<usize>>,
}

impl Builder<'_> {
    fn push_ring(&mut self, pts: Vec<Vector3<f64>>, weights: &[(usize, f64)], owner: usize) -> Vec<usize> {
        pts.into_iter()
            .map(|p| {
                self.verts.push(Vert {
                    pos: p,
                    weights: weights.to_vec(),
                    owner,
                });
                self.verts.len() - 1
            })
            .collect()
    }

    fn connect(&mut self, a: &[usize], b: &[usize]) {
        let m = a.len();
        for k in 0..m {
            let k1 = (k + 1) % m;
            self.faces.push([a[k], a[k1], b[k1]]);
            self.faces.push([a[k], b[k1], b[k]]);
        }
    }

    fn blend(&self, owner: usize) -> Vec<(usize, f64)> {
        match self.sk.parents[owner] {
            Some(p) if self.sk.hand[p] == self.sk.hand[owner] => vec![(owner, 0.75), (p, 0.25)],
            _ => vec![(owner, 1.0)],
        }
    }

    /// Rings along the segment from joint `owner` to `end`, owned by `owner`.
    fn bone(&mut self, owner: usize, end: Vector3<f64>, fingertip: bool) {
        let sk = self.sk;
        let start = sk.pos[owner];
        let dir = (end - start).normalize();
        let m = self.size.ring_size();
        let mut prev: Option<Vec<usize>> = None;
        for (i, &t) in self.size.bone_rings().iter().enumerate() {
            let weights = if i == 0 { self.blend(owner) } else { vec![(owner, 1.0)] };
            let pts = ring(&(start + (end - start) * t), &dir, sk.radius[owner], m);
            let ids = self.push_ring(pts, &weights, owner);
            if let Some(p) = &prev {
                self.connect(p, &ids);
            }
            prev = Some(ids);
        }
        if fingertip {
            let last = prev.expect("at least one ring");
            self.verts.push(Vert {
                pos: end,
                weights: vec![(owner, 1.0)],
                owner,
            });
            let tip = self.verts.len() - 1;
            for k in 0..last.len() {
                self.faces.push([last[k], last[(k + 1) % last.len()], tip]);
            }
            self.tip_vertex[owner] = Some(tip);
        }
    }

    fn joint_group(&mut self, j: usize) {
        let sk = self.sk;
        let m = self.size.ring_size();
        let pts = ring(&sk.pos[j], &joint_axis(sk, j), sk.radius[j], m);
        let ids = self.push_ring(pts, &[(j, 1.0)], j);
        self.joint_rings[j] = ids;
        let children: Vec<usize> = (0..sk.parents.len()).filter(|&c| sk.parents[c] == Some(j)).collect();
        for c in children {
            self.bone(j, sk.pos[c], false);
        }
        if let Some(t) = sk.tip[j] {
            self.bone(j, t, sk.hand[j]);
        }
    }

    /// Appends the mirror image of a previously built vertex range.
    fn mirror_range(&mut self, range: std::ops::Range<usize>, faces: std::ops::Range<usize>) -> usize {
        let offset = self.verts.len() - range.start;
        for v in range.clone() {
            let src = &self.verts[v];
            let mirrored = Vert {
                pos: mirror_point(&src.pos),
                weights: src.weights.iter().map(|&(j, w)| (self.sk.mirror[j], w)).collect(),
                owner: self.sk.mirror[src.owner],
            };
            self.verts.push(mirrored);
        }
        for f in faces {
            let [a, b, c] = self.faces[f];
            self.faces.push([a + offset, c + offset, b + offset]);
        }
        offset
    }
}

/// Generates the toy model. The same seed always yields the same model.
pub fn gen_toy_model(seed: u64, size: SizeClass) -> ParametricModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let height_scale = rng.random_range(0.95..1.05);
    let sk = build_skeleton(height_scale);
    let nj = sk.names.len();
    let mut b = Builder {
        sk: &sk,
        size,
        verts: Vec::new(),
        faces: Vec::new(),
        joint_rings: vec![Vec::new(); nj],
        tip_vertex: vec![None; nj],
    };

    // Mesh pieces are emitted per joint. A right-side joint copies the mirror
    // of its left counterpart; a centre joint's bones to right-side children
    // mirror the bones to the matching left-side children.
    let mut groups: Vec<Option<(std::ops::Range<usize>, std::ops::Range<usize>)>> = vec![None; nj];
    for j in 0..nj {
        let (v0, f0) = (b.verts.len(), b.faces.len());
        if sk.region[j] == Region::Right {
            let (vr, fr) = groups[sk.mirror[j]].clone().expect("left side built first");
            let offset = b.mirror_range(vr.clone(), fr);
            b.joint_rings[j] = b.joint_rings[sk.mirror[j]].iter().map(|v| v + offset).collect();
            if let Some(t) = b.tip_vertex[sk.mirror[j]] {
                b.tip_vertex[j] = Some(t + offset);
            }
        } else if sk.region[j] == Region::Center {
            let m = size.ring_size();
            let pts = ring(&sk.pos[j], &joint_axis(&sk, j), sk.radius[j], m);
            b.joint_rings[j] = b.push_ring(pts, &[(j, 1.0)], j);
            let children: Vec<usize> = (0..nj).filter(|&c| sk.parents[c] == Some(j)).collect();
            let mut left_bones = Vec::new();
            for &c in &children {
                match sk.region[c] {
                    Region::Right => {}
                    _ => {
                        let (bv, bf) = (b.verts.len(), b.faces.len());
                        b.bone(j, sk.pos[c], false);
                        if sk.region[c] == Region::Left {
                            left_bones.push((bv..b.verts.len(), bf..b.faces.len()));
                        }
                    }
                }
            }
            for (vr, fr) in left_bones {
                b.mirror_range(vr, fr);
            }
            if let Some(t) = sk.tip[j] {
                b.bone(j, t, false);
            }
        } else {
            b.joint_group(j);
        }
        groups[j] = Some((v0..b.verts.len(), f0..b.faces.len()));
    }

    let verts = b.verts;
    let n = verts.len();
    let template: Vec<Vector3<f64>> = verts.iter().map(|v| v.pos).collect();

    let mut wt = Vec::new();
    for (i, v) in verts.iter().enumerate() {
        wt.extend(v.weights.iter().map(|&(j, w)| (i, j, w)));
    }
    let skin_weights = SparseMatrix::from_triplets(n, nj, &wt).expect("valid weights");

    let mut rt = Vec::new();
    for (j, ids) in b.joint_rings.iter().enumerate() {
        let w = 1.0 / ids.len() as f64;
        rt.extend(ids.iter().map(|&v| (j, v, w)));
    }
    let joint_regressor = SparseMatrix::from_triplets(nj, n, &rt).expect("valid regressor");

    // Shape basis: d_k(v) = A_k v + c_k (v − owner joint). A_k commutes with
    // the x-mirror so the basis keeps the model symmetric.
    let entry = Normal::new(0.0, 0.03).expect("valid normal");
    let inflate = Normal::new(0.0, 0.15).expect("valid normal");
    let shape_basis = (0..SHAPE_DIM)
        .map(|_| {
            let mut a = Matrix3::zeros();
            a[(0, 0)] = entry.sample(&mut rng);
            for (r, c) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
                a[(r, c)] = entry.sample(&mut rng);
            }
            let c = inflate.sample(&mut rng);
            verts
                .iter()
                .map(|v| a * v.pos + (v.pos - sk.pos[v.owner]) * c)
                .collect()
        })
        .collect();

    let hand_for = |wrist: usize| HandJoints {
        wrist,
        fingers: (0..nj)
            .filter(|&j| sk.hand[j] && j != wrist && sk.region[j] == sk.region[wrist])
            .collect(),
    };
    let tips_for = |wrist: usize| -> Vec<usize> {
        (0..nj)
            .filter(|&j| sk.region[j] == sk.region[wrist])
            .filter_map(|j| if sk.hand[j] { b.tip_vertex[j] } else { None })
            .collect()
    };
    let left = hand_for(20);
    let knuckle = (sk.pos[left.fingers[4]] - sk.pos[left.fingers[3]]).norm();
    let parts = ModelParts {
        template_vertices: template,
        faces: b.faces,
        shape_basis,
        skin_weights,
        joint_regressor,
        tree: SkeletonTree::new(sk.parents.clone(), sk.names.clone()).expect("valid skeleton"),
        hand_joints: Some(PerSide {
            left,
            right: hand_for(21),
        }),
        fingertip_vertices: Some(PerSide {
            left: tips_for(20),
            right: tips_for(21),
        }),
        reference_knuckle_length: Some(knuckle),
    };
    ParametricModel::new(parts).expect("toy model satisfies model invariants")
}
