//! File formats: ASCII PLY and OBJ point input, the `NMVX` voxel cache, the
//! `NMSW` skin-weight matrix and the JSON artifact schemas.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::affinity::{AffinitySet, Matrix};
use crate::keypoints::{Keypoint, KeypointTracks};
use crate::kinematics::{MotionSequence, Pose, Rotation6D};
use crate::skeleton::SkeletonTree;
use crate::skinning::SkinWeights;
use crate::voxelize::{BBox, PointFrame, VoxelGrid, VoxelSequence};
use crate::{canonical, Error, Result, Vec3};

const NMVX_MAGIC: &[u8; 4] = b"NMVX";
const NMVX_VERSION: u32 = 1;
const NMSW_MAGIC: &[u8; 4] = b"NMSW";

/// ASCII PLY vertices. Other elements are skipped; binary PLY is rejected.
pub fn read_ply(path: &Path) -> Result<PointFrame> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text).map_err(|m| Error::format(path, m))
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
}

fn parse_ply(text: &str) -> std::result::Result<PointFrame, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing 'ply' magic line".into());
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut ascii = false;
    loop {
        let line = lines.next().ok_or("header has no end_header")?.trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => ascii = tok.next() == Some("ascii"),
            Some("element") => {
                let name = tok.next().ok_or("element without a name")?.to_string();
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| format!("element {name} has no valid count"))?;
                elements.push(PlyElement {
                    name,
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let name = tok.last().ok_or("property without a name")?.to_string();
                elements
                    .last_mut()
                    .ok_or("property before any element")?
                    .properties
                    .push(name);
            }
            Some("end_header") => break,
            _ => {}
        }
    }
    if !ascii {
        return Err("only ASCII PLY is supported".into());
    }
    let mut points = Vec::new();
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                lines.next().ok_or_else(|| format!("truncated {} data", el.name))?;
            }
            continue;
        }
        let index = |axis: &str| {
            el.properties
                .iter()
                .position(|p| p == axis)
                .ok_or_else(|| format!("vertex element lacks property {axis}"))
        };
        let (ix, iy, iz) = (index("x")?, index("y")?, index("z")?);
        for v in 0..el.count {
            let line = lines.next().ok_or_else(|| format!("truncated vertex data at {v}"))?;
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format!("vertex {v}: {e}"))?;
            let get = |i: usize| {
                values
                    .get(i)
                    .copied()
                    .ok_or_else(|| format!("vertex {v} has too few values"))
            };
            let p = Vec3::new(get(ix)?, get(iy)?, get(iz)?);
            if !p.iter().all(|c| c.is_finite()) {
                return Err(format!("vertex {v} is not finite"));
            }
            points.push(p);
        }
    }
    Ok(points.into())
}

/// `v x y z` lines of an OBJ file.
pub fn read_obj_vertices(path: &Path) -> Result<PointFrame> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        if tok.next() != Some("v") {
            continue;
        }
        let c: Vec<f64> = tok
            .take(3)
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        if c.len() != 3 {
            return Err(Error::format(path, format!("line {}: expected 3 coordinates", n + 1)));
        }
        points.push(Vec3::new(c[0], c[1], c[2]));
    }
    Ok(points.into())
}

/// Points from a `.ply` or `.obj` file, chosen by extension.
pub fn read_points(path: &Path) -> Result<PointFrame> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("obj") => read_obj_vertices(path),
        _ => read_ply(path),
    }
}

pub fn write_ply(path: &Path, frame: &PointFrame) -> Result<()> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", frame.len()));
    out.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in &frame.points {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// `.ply` files of a directory in file-name order.
pub fn list_ply_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("ply"))
        {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::format(dir, "directory contains no .ply files"));
    }
    Ok(files)
}

pub fn read_ply_sequence(dir: &Path) -> Result<Vec<PointFrame>> {
    list_ply_files(dir)?.iter().map(|p| read_ply(p)).collect()
}

pub fn write_ply_sequence(dir: &Path, frames: &[PointFrame]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, f) in frames.iter().enumerate() {
        write_ply(&dir.join(format!("frame_{t:04}.ply")), f)?;
    }
    Ok(())
}

/// Encodes a voxel sequence: magic, then little-endian `u32` version, frame
/// count and resolution, six `f64` bounding-box values (min then max), then
/// each frame's occupancy bits LSB-first, padded to a whole byte.
pub fn encode_nmvx(seq: &VoxelSequence) -> Vec<u8> {
    let res = seq.frames.first().map_or([0; 3], VoxelGrid::resolution);
    let mut out = Vec::new();
    out.extend_from_slice(NMVX_MAGIC);
    for v in [NMVX_VERSION, seq.frames.len() as u32, res[0] as u32, res[1] as u32, res[2] as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in seq.bbox.min.iter().chain(seq.bbox.max.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for frame in &seq.frames {
        let mut bytes = vec![0u8; frame.cell_count().div_ceil(8)];
        for (i, _) in frame.occupancy().iter().enumerate().filter(|(_, &b)| b) {
            bytes[i / 8] |= 1 << (i % 8);
        }
        out.extend_from_slice(&bytes);
    }
    out
}

pub fn decode_nmvx(bytes: &[u8]) -> std::result::Result<VoxelSequence, String> {
    const HEADER: usize = 4 + 5 * 4 + 6 * 8;
    if bytes.len() < HEADER || &bytes[..4] != NMVX_MAGIC {
        return Err("not an NMVX file".into());
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != NMVX_VERSION {
        return Err(format!("unsupported NMVX version {version}"));
    }
    let t = u32_at(8) as usize;
    let res = [u32_at(12) as usize, u32_at(16) as usize, u32_at(20) as usize];
    let bbox = BBox {
        min: Vec3::new(f64_at(24), f64_at(32), f64_at(40)),
        max: Vec3::new(f64_at(48), f64_at(56), f64_at(64)),
    };
    let cells = res[0] * res[1] * res[2];
    let stride = cells.div_ceil(8);
    if bytes.len() != HEADER + t * stride {
        return Err(format!(
            "expected {} payload bytes, found {}",
            t * stride,
            bytes.len() - HEADER
        ));
    }
    let frames = (0..t)
        .map(|f| {
            let data = &bytes[HEADER + f * stride..HEADER + (f + 1) * stride];
            let occ = (0..cells).map(|i| data[i / 8] >> (i % 8) & 1 == 1).collect();
            VoxelGrid::from_occupancy(res, occ).map_err(|e| e.to_string())
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    VoxelSequence::new(frames, bbox).map_err(|e| e.to_string())
}

pub fn write_nmvx(path: &Path, seq: &VoxelSequence) -> Result<()> {
    fs::write(path, encode_nmvx(seq)).map_err(|e| Error::io(path, e))
}

pub fn read_nmvx(path: &Path) -> Result<VoxelSequence> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_nmvx(&bytes).map_err(|m| Error::format(path, m))
}

/// Dense weights: magic, little-endian `u32` vertex count and `K`, then
/// row-major `f32` values.
pub fn write_nmsw(path: &Path, weights: &SkinWeights) -> Result<()> {
    let mut out = Vec::with_capacity(12 + 4 * weights.vertex_count() * weights.k);
    out.extend_from_slice(NMSW_MAGIC);
    out.extend_from_slice(&(weights.vertex_count() as u32).to_le_bytes());
    out.extend_from_slice(&(weights.k as u32).to_le_bytes());
    for w in weights.rows.iter().flatten() {
        out.extend_from_slice(&(*w as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_nmsw(path: &Path) -> Result<SkinWeights> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..4] != NMSW_MAGIC {
        return Err(Error::format(path, "not an NMSW file"));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let k = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if bytes.len() != 12 + 4 * n * k {
        return Err(Error::format(path, "payload size does not match header"));
    }
    let values: Vec<f64> = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    SkinWeights::new(k, values.chunks(k.max(1)).take(n).map(<[f64]>::to_vec).collect())
}

/// Config hash and seed stamped on every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

/// Reads a JSON artifact, reporting schema violations with the file path.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    canonical::read_file(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    canonical::write_file(path, value)
}

fn schema(field: &str, message: impl std::fmt::Display) -> Error {
    Error::Schema(format!("field `{field}`: {message}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointsJson {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T")]
    pub t: usize,
    /// `[x, y, z, alpha]` per keypoint per frame.
    pub frames: Vec<Vec<[f64; 4]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl KeypointsJson {
    pub fn from_tracks(tracks: &KeypointTracks, provenance: Option<Provenance>) -> Self {
        Self {
            k: tracks.k(),
            t: tracks.t(),
            frames: tracks
                .frames()
                .iter()
                .map(|f| f.iter().map(|kp| [kp.mu.x, kp.mu.y, kp.mu.z, kp.alpha]).collect())
                .collect(),
            provenance,
        }
    }

    pub fn to_tracks(&self) -> Result<KeypointTracks> {
        if self.frames.len() != self.t {
            return Err(schema("frames", format!("{} frames but T = {}", self.frames.len(), self.t)));
        }
        if let Some(i) = self.frames.iter().position(|f| f.len() != self.k) {
            return Err(schema("frames", format!("frame {i} does not have K = {} keypoints", self.k)));
        }
        KeypointTracks::new(
            self.frames
                .iter()
                .map(|f| f.iter().map(|v| Keypoint::new(Vec3::new(v[0], v[1], v[2]), v[3])).collect())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinityJson {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "A_n")]
    pub a_n: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl AffinityJson {
    pub fn from_set(set: &AffinitySet, provenance: Option<Provenance>) -> Self {
        Self {
            n: set.n(),
            k: set.k(),
            a_n: set.matrices.iter().map(Matrix::to_rows).collect(),
            a: set.combined.to_rows(),
            provenance,
        }
    }

    pub fn to_set(&self) -> Result<AffinitySet> {
        if self.a_n.len() != self.n {
            return Err(schema("A_n", format!("{} matrices but N = {}", self.a_n.len(), self.n)));
        }
        let square = |rows: &Vec<Vec<f64>>| rows.len() == self.k && rows.iter().all(|r| r.len() == self.k);
        if !self.a_n.iter().all(square) {
            return Err(schema("A_n", format!("matrices must be {0}x{0}", self.k)));
        }
        if !square(&self.a) {
            return Err(schema("A", format!("matrix must be {0}x{0}", self.k)));
        }
        let matrices = self
            .a_n
            .iter()
            .map(|m| Matrix::from_rows(m))
            .collect::<Result<Vec<_>>>()?;
        let set = AffinitySet::new(matrices)?;
        let stored = Matrix::from_rows(&self.a)?;
        if stored != set.combined {
            return Err(schema("A", "does not equal the elementwise max of A_n"));
        }
        Ok(set)
    }

    /// The combined matrix alone, for consumers that do not need `A_n`.
    pub fn combined(&self) -> Result<Matrix> {
        if self.a.len() != self.k || self.a.iter().any(|r| r.len() != self.k) {
            return Err(schema("A", format!("matrix must be {0}x{0}", self.k)));
        }
        Matrix::from_rows(&self.a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonJson {
    #[serde(rename = "K")]
    pub k: usize,
    pub root: usize,
    pub parents: Vec<usize>,
    pub unit_offsets: Vec<[f64; 3]>,
    pub offsets: Vec<[f64; 3]>,
    pub intensities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl SkeletonJson {
    pub fn from_skeleton(s: &SkeletonTree, provenance: Option<Provenance>) -> Self {
        Self {
            k: s.k(),
            root: s.root(),
            parents: s.parents().to_vec(),
            unit_offsets: s.unit_offsets.iter().map(arr).collect(),
            offsets: s.offsets.iter().map(arr).collect(),
            intensities: s.intensities.clone(),
            provenance,
        }
    }

    pub fn to_skeleton(&self) -> Result<SkeletonTree> {
        for (field, len) in [
            ("parents", self.parents.len()),
            ("unit_offsets", self.unit_offsets.len()),
            ("offsets", self.offsets.len()),
            ("intensities", self.intensities.len()),
        ] {
            if len != self.k {
                return Err(schema(field, format!("length {len} differs from K = {}", self.k)));
            }
        }
        if let Some(i) = self.parents.iter().position(|&p| p >= self.k) {
            return Err(Error::NotATree(format!("parent of {i} is out of range")));
        }
        SkeletonTree::new(
            self.root,
            self.parents.clone(),
            self.unit_offsets.iter().map(|v| Vec3::from(*v)).collect(),
            self.offsets.iter().map(|v| Vec3::from(*v)).collect(),
            self.intensities.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseJson {
    pub root_translation: [f64; 3],
    pub rotations_6d: Vec<[f64; 6]>,
    pub intensities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionJson {
    pub frames: Vec<PoseJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl MotionJson {
    pub fn from_motion(motion: &MotionSequence, provenance: Option<Provenance>) -> Self {
        Self {
            frames: motion
                .poses
                .iter()
                .map(|p| PoseJson {
                    root_translation: arr(&p.root_translation),
                    rotations_6d: p.rotations.iter().map(|r| Rotation6D::from_matrix(r).0).collect(),
                    intensities: p.intensities.clone(),
                })
                .collect(),
            provenance,
        }
    }

    pub fn to_motion(&self) -> Result<MotionSequence> {
        let k = self.frames.first().map_or(0, |f| f.rotations_6d.len());
        let poses = self
            .frames
            .iter()
            .enumerate()
            .map(|(t, f)| {
                if f.rotations_6d.len() != k || f.intensities.len() != k {
                    return Err(schema("frames", format!("frame {t} does not have {k} joints")));
                }
                let rotations = f
                    .rotations_6d
                    .iter()
                    .map(|r| Rotation6D(*r).to_matrix())
                    .collect::<Result<Vec<_>>>()?;
                Ok(Pose {
                    root_translation: Vec3::from(f.root_translation),
                    rotations,
                    intensities: f.intensities.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MotionSequence { poses })
    }
}

/// Per-frame joint positions, used for ground truth and retargeting output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointsJson {
    #[serde(rename = "K")]
    pub k: usize,
    pub frames: Vec<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parents: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl JointsJson {
    pub fn from_frames(frames: &[Vec<Vec3>]) -> Self {
        Self {
            k: frames.first().map_or(0, Vec::len),
            frames: frames.iter().map(|f| f.iter().map(arr).collect()).collect(),
            root: None,
            parents: None,
            provenance: None,
        }
    }

    pub fn to_frames(&self) -> Result<Vec<Vec<Vec3>>> {
        if let Some(t) = self.frames.iter().position(|f| f.len() != self.k) {
            return Err(schema("frames", format!("frame {t} does not have K = {} joints", self.k)));
        }
        Ok(self
            .frames
            .iter()
            .map(|f| f.iter().map(|v| Vec3::from(*v)).collect())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkinWeightsJson {
    #[serde(rename = "K")]
    pub k: usize,
    pub weights: Vec<Vec<f64>>,
}

impl SkinWeightsJson {
    pub fn from_weights(w: &SkinWeights) -> Self {
        Self {
            k: w.k,
            weights: w.rows.clone(),
        }
    }

    pub fn to_weights(&self) -> Result<SkinWeights> {
        SkinWeights::new(self.k, self.weights.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ply_with_extra_properties_and_faces() {
        let text = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty float nx\n\
                    property float x\nproperty float y\nproperty float z\nelement face 1\n\
                    property list uchar int vertex_indices\nend_header\n9 1 2 3\n9 4 5 6\n3 0 1 1\n";
        let f = parse_ply(text).unwrap();
        assert_eq!(f.points, vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0)]);
        assert!(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        assert!(parse_ply("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nend_header\n1\n2\n").is_err());
    }

    #[test]
    fn nmvx_round_trip() {
        let mut g = VoxelGrid::empty([3, 2, 5]);
        g.set([2, 1, 4], true);
        g.set([0, 0, 0], true);
        let seq = VoxelSequence::new(vec![g.clone(), VoxelGrid::empty([3, 2, 5]), g], BBox::unit()).unwrap();
        let bytes = encode_nmvx(&seq);
        assert_eq!(&bytes[..4], b"NMVX");
        assert_eq!(decode_nmvx(&bytes).unwrap(), seq);
        assert!(decode_nmvx(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn cyclic_skeleton_rejected() {
        let json = SkeletonJson {
            k: 3,
            root: 0,
            parents: vec![0, 2, 1],
            unit_offsets: vec![[0.0; 3]; 3],
            offsets: vec![[0.0; 3]; 3],
            intensities: vec![1.0; 3],
            provenance: None,
        };
        let err = json.to_skeleton().unwrap_err();
        assert!(err.to_string().contains("not a tree"), "{err}");
    }

    #[test]
    fn missing_field_is_named() {
        let err = canonical::from_str::<SkeletonJson>(r#"{"K":1,"root":0}"#).unwrap_err();
        assert!(err.to_string().contains("parents"), "{err}");
    }
}
