//! Per-face geometric input features.
//!
//! Positions and the Laplacian are computed on the mesh normalized to a unit
//! bounding cube. Curvature-like quantities are returned in mesh units by the
//! individual feature functions; [`assemble_input`] rescales them per mesh by
//! the 90th percentile of their magnitude and clamps to `[-10, 10]`, which
//! makes network inputs invariant to translation and uniform scale.

use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Matrix2, Vector2};

use crate::hierarchy::FeatureField;
use crate::mesh::{QuadMesh, Vec3};
use crate::neighborhood::NeighborhoodTable;
use crate::{Error, Result};

const FEATURE_MAGIC: &[u8; 4] = b"RSFF";
const CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FeatureSpec {
    None,
    Position,
    Laplacian,
    Curvatures,
    FundamentalForms,
    Normals,
    #[default]
    NormalsPlusCurvature,
}

impl FeatureSpec {
    pub const ALL: [FeatureSpec; 7] = [
        FeatureSpec::None,
        FeatureSpec::Position,
        FeatureSpec::Laplacian,
        FeatureSpec::Curvatures,
        FeatureSpec::FundamentalForms,
        FeatureSpec::Normals,
        FeatureSpec::NormalsPlusCurvature,
    ];

    pub fn channel_count(self) -> usize {
        match self {
            FeatureSpec::None => 0,
            FeatureSpec::Position | FeatureSpec::Laplacian | FeatureSpec::Normals => 3,
            FeatureSpec::Curvatures => 2,
            FeatureSpec::FundamentalForms => 8,
            FeatureSpec::NormalsPlusCurvature => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSpec::None => "none",
            FeatureSpec::Position => "position",
            FeatureSpec::Laplacian => "laplacian",
            FeatureSpec::Curvatures => "curvatures",
            FeatureSpec::FundamentalForms => "fundamental_forms",
            FeatureSpec::Normals => "normals",
            FeatureSpec::NormalsPlusCurvature => "normals_plus_curvature",
        }
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature spec {s:?}")))
    }
}

fn field(channels: usize, values: Vec<f64>) -> FeatureField<f64> {
    FeatureField { level: 0, channels, values }
}

/// Face centroids of the normalized mesh.
pub fn feature_position(mesh: &QuadMesh) -> FeatureField<f64> {
    let m = mesh.normalized();
    let values = (0..m.face_count())
        .flat_map(|f| {
            let p = m.face_vertices(f);
            let c = (p[0] + p[1] + p[2] + p[3]) / 4.0;
            [c.x, c.y, c.z]
        })
        .collect();
    field(3, values)
}

pub fn feature_normals(mesh: &QuadMesh) -> Result<FeatureField<f64>> {
    let geo = mesh.face_geometry()?;
    Ok(field(3, geo.iter().flat_map(|g| [g.normal.x, g.normal.y, g.normal.z]).collect()))
}

/// Umbrella operator on normalized face centroids over real neighbours.
pub fn feature_laplacian(mesh: &QuadMesh, nbr: &NeighborhoodTable) -> Result<FeatureField<f64>> {
    let geo = mesh.normalized().face_geometry()?;
    let mut values = Vec::with_capacity(geo.len() * 3);
    for (i, g) in geo.iter().enumerate() {
        let (sum, n) = nbr
            .real_neighbors(i)
            .fold((Vec3::zeros(), 0usize), |(s, n), j| (s + geo[j].centroid, n + 1));
        if n == 0 {
            return Err(Error::IsolatedFace(i));
        }
        let d = sum / n as f64 - g.centroid;
        values.extend([d.x, d.y, d.z]);
    }
    Ok(field(3, values))
}

/// Per-vertex `(mean, gaussian)` curvature in mesh units. Boundary vertices get zero.
///
/// Gaussian curvature is the angle defect over a quarter of the incident face
/// area. Mean curvature is `-2 sum(d_j . n) / sum |d_j|^2` over the vectors
/// `d_j` to every 1-ring vertex (edge and diagonal), with `n` the area-weighted
/// vertex normal: each term is a normal-curvature sample, and the estimate is
/// exact on spheres regardless of ring spacing. Positive on convex surfaces.
pub fn vertex_curvatures(mesh: &QuadMesh) -> Result<Vec<(f64, f64)>> {
    let geo = mesh.face_geometry()?;
    let boundary = mesh.boundary_vertices();
    let incident = mesh.vertex_faces();
    let verts = mesh.vertices();
    let mut out = Vec::with_capacity(verts.len());
    for (v, faces) in incident.iter().enumerate() {
        if boundary[v] || faces.is_empty() {
            out.push((0.0, 0.0));
            continue;
        }
        let p = verts[v];
        let mut angle_sum = 0.0;
        let mut area = 0.0;
        let mut normal = Vec3::zeros();
        let mut ring: Vec<u32> = Vec::with_capacity(2 * faces.len());
        for &f in faces {
            let face = mesh.faces()[f as usize];
            let k = face.iter().position(|&x| x as usize == v).expect("incident face contains vertex");
            let (next, prev) = (face[(k + 1) % 4], face[(k + 3) % 4]);
            let (a, b) = (verts[next as usize] - p, verts[prev as usize] - p);
            angle_sum += a.angle(&b);
            area += geo[f as usize].area;
            normal += geo[f as usize].normal * geo[f as usize].area;
            ring.extend([next, face[(k + 2) % 4], prev]);
        }
        ring.sort_unstable();
        ring.dedup();
        let gaussian = (2.0 * PI - angle_sum) / (area / 4.0);
        let n = normal.normalize();
        let (mut along, mut sq) = (0.0, 0.0);
        for &j in &ring {
            let d = verts[j as usize] - p;
            along += d.dot(&n);
            sq += d.norm_squared();
        }
        out.push((-2.0 * along / sq, gaussian));
    }
    Ok(out)
}

/// Per-face `(mean, gaussian)` curvature: mean of the four vertex values, in mesh units.
pub fn feature_curvatures(mesh: &QuadMesh) -> Result<FeatureField<f64>> {
    let per_vertex = vertex_curvatures(mesh)?;
    let values = mesh
        .faces()
        .iter()
        .flat_map(|f| {
            let (h, k) = f.iter().fold((0.0, 0.0), |(h, k), &v| {
                let c = per_vertex[v as usize];
                (h + c.0, k + c.1)
            });
            [h / 4.0, k / 4.0]
        })
        .collect();
    Ok(field(2, values))
}

/// Eight channels per face: `E, F, G` of the first fundamental form (edge
/// vectors in the face's tangent frame, divided by the mean squared edge
/// length), `L, M, N` of a least-squares shape operator fitted to neighbour
/// normal variation, and the two principal curvatures (larger first), in mesh
/// units.
///
/// Also returns how many faces had a rank-deficient fit and fell back to a
/// flat second form.
pub fn feature_fundamental_forms(mesh: &QuadMesh, nbr: &NeighborhoodTable) -> Result<(FeatureField<f64>, usize)> {
    let geo = mesh.face_geometry()?;
    let mut values = Vec::with_capacity(geo.len() * 8);
    let mut rank_deficient = 0;
    for (i, g) in geo.iter().enumerate() {
        let p = mesh.face_vertices(i);
        let n = g.normal;
        let e1 = p[1] - p[0];
        let t1 = (e1 - n * n.dot(&e1)).normalize();
        let t2 = n.cross(&t1);
        let to2 = |d: Vec3| Vector2::new(d.dot(&t1), d.dot(&t2));
        let a = to2(e1);
        let b = to2(p[3] - p[0]);
        let scale = (0..4).map(|k| (p[(k + 1) % 4] - p[k]).norm_squared()).sum::<f64>() / 4.0;
        let (e, f, gg) = (a.dot(&a) / scale, a.dot(&b) / scale, b.dot(&b) / scale);

        let mut uu = Matrix2::zeros();
        let mut nu = Matrix2::zeros();
        for j in nbr.real_neighbors(i) {
            let u = to2(geo[j].centroid - g.centroid);
            let dn = to2(geo[j].normal - n);
            uu += u * u.transpose();
            nu += dn * u.transpose();
        }
        let shape = match uu.try_inverse() {
            Some(inv) if uu.determinant() > 1e-12 * uu.trace().powi(2) => {
                let s = nu * inv;
                (s + s.transpose()) * 0.5
            }
            _ => {
                rank_deficient += 1;
                Matrix2::zeros()
            }
        };
        let (l, m, nn) = (shape[(0, 0)], shape[(0, 1)], shape[(1, 1)]);
        let mid = (l + nn) / 2.0;
        let rad = (((l - nn) / 2.0).powi(2) + m * m).sqrt();
        values.extend([e, f, gg, l, m, nn, mid + rad, mid - rad]);
    }
    Ok((field(8, values), rank_deficient))
}

/// Nearest-rank 90th percentile of `|values|` over channel `c`.
fn abs_p90(values: &[f64], channels: usize, cs: &[usize]) -> f64 {
    let mut mags: Vec<f64> = values
        .chunks_exact(channels)
        .flat_map(|row| cs.iter().map(move |&c| row[c].abs()))
        .collect();
    if mags.is_empty() {
        return 0.0;
    }
    mags.sort_by(f64::total_cmp);
    let rank = ((0.9 * mags.len() as f64).ceil() as usize).clamp(1, mags.len());
    mags[rank - 1]
}

/// Divides the given channels by a shared 90th-percentile magnitude, then
/// clamps them to `[-10, 10]`.
fn normalize_channels(f: &mut FeatureField<f64>, cs: &[usize]) {
    let p = abs_p90(&f.values, f.channels, cs);
    let scale = if p > 1e-9 { 1.0 / p } else { 1.0 };
    let ch = f.channels;
    for row in f.values.chunks_exact_mut(ch) {
        for &c in cs {
            row[c] = (row[c] * scale).clamp(-CLAMP, CLAMP);
        }
    }
}

fn concat(a: FeatureField<f64>, b: FeatureField<f64>) -> FeatureField<f64> {
    let rows = a.rows();
    let ch = a.channels + b.channels;
    let mut values = Vec::with_capacity(rows * ch);
    for i in 0..rows {
        values.extend_from_slice(a.row(i));
        values.extend_from_slice(b.row(i));
    }
    field(ch, values)
}

/// Network input for the requested feature set. `None` yields a zero-channel field.
pub fn assemble_input(mesh: &QuadMesh, nbr: &NeighborhoodTable, spec: FeatureSpec) -> Result<FeatureField<f64>> {
    let out = match spec {
        FeatureSpec::None => FeatureField { level: 0, channels: 0, values: Vec::new() },
        FeatureSpec::Position => feature_position(mesh),
        FeatureSpec::Laplacian => feature_laplacian(mesh, nbr)?,
        FeatureSpec::Normals => feature_normals(mesh)?,
        FeatureSpec::Curvatures => {
            let mut c = feature_curvatures(mesh)?;
            normalize_channels(&mut c, &[0]);
            normalize_channels(&mut c, &[1]);
            c
        }
        FeatureSpec::FundamentalForms => {
            let (mut ff, _) = feature_fundamental_forms(mesh, nbr)?;
            normalize_channels(&mut ff, &[3, 4, 5, 6, 7]);
            for row in ff.values.chunks_exact_mut(8) {
                for v in &mut row[..3] {
                    *v = v.clamp(-CLAMP, CLAMP);
                }
            }
            ff
        }
        FeatureSpec::NormalsPlusCurvature => {
            let curv = feature_curvatures(mesh)?;
            let mut mean = field(1, curv.values.chunks_exact(2).map(|r| r[0]).collect());
            normalize_channels(&mut mean, &[0]);
            concat(feature_normals(mesh)?, mean)
        }
    };
    debug_assert!(out.is_finite());
    Ok(out)
}

/// Writes a feature file: magic `RSFF`, `u32` rows, `u32` channels, `f32` data.
pub fn write_feature_file(path: impl AsRef<Path>, f: &FeatureField<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    w.write_u32::<LittleEndian>(f.rows() as u32)?;
    w.write_u32::<LittleEndian>(f.channels as u32)?;
    for v in &f.values {
        w.write_f32::<LittleEndian>(*v as f32)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureField<f32>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::Format("feature file magic is not RSFF".into()));
    }
    let rows = r.read_u32::<LittleEndian>()? as usize;
    let channels = r.read_u32::<LittleEndian>()? as usize;
    let mut values = vec![0f32; rows * channels];
    r.read_f32_into::<LittleEndian>(&mut values)?;
    Ok(FeatureField { level: 0, channels, values })
}
