//! Canonically ordered 8-neighbourhoods of quad faces.
//!
//! For face `i` the neighbours are all faces sharing at least one vertex with
//! it (four across edges and four across corners on a regular grid). They are
//! sorted anticlockwise around the face normal by the angle of their projected
//! centroids, and the cycle starts at the neighbour whose centroid is
//! lexicographically smallest in `(x, y, z)`. Faces touching a vertex of
//! valence below four have fewer than eight neighbours and are padded with
//! [`PAD`]; faces touching high-valence vertices keep the eight nearest.

use crate::mesh::{QuadMesh, Vec3};
use crate::{par, Error, Result};

/// Padding sentinel in neighbour rows.
pub const PAD: u32 = u32::MAX;

/// Number of ordered neighbour slots per face.
pub const SLOTS: usize = 8;

const LEX_TOLERANCE: f64 = 1e-9;
const ANGLE_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodTable {
    rows: Vec<[u32; SLOTS]>,
    singular_vertex_fraction: f64,
    truncated_faces: usize,
    ambiguous_orderings: usize,
    // Reverse lookup: for face j, every (i, tap) with rows[i][tap - 1] == j.
    reverse_offsets: Vec<u32>,
    reverse_entries: Vec<(u32, u8)>,
}

impl NeighborhoodTable {
    /// Wraps precomputed rows, checking that they are well formed.
    pub fn from_rows(rows: Vec<[u32; SLOTS]>, singular_vertex_fraction: f64) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            for (s, &j) in row.iter().enumerate() {
                if j == PAD {
                    continue;
                }
                if j as usize >= n || j as usize == i || row[..s].contains(&j) {
                    return Err(Error::Format(format!("invalid neighbour {j} in row {i}")));
                }
            }
        }
        let mut table = Self {
            rows,
            singular_vertex_fraction,
            truncated_faces: 0,
            ambiguous_orderings: 0,
            reverse_offsets: Vec::new(),
            reverse_entries: Vec::new(),
        };
        table.build_reverse();
        Ok(table)
    }

    fn build_reverse(&mut self) {
        let n = self.rows.len();
        let mut counts = vec![0u32; n + 1];
        for row in &self.rows {
            for &j in row.iter().filter(|&&j| j != PAD) {
                counts[j as usize + 1] += 1;
            }
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let mut fill = counts.clone();
        let mut entries = vec![(0u32, 0u8); counts[n] as usize];
        for (i, row) in self.rows.iter().enumerate() {
            for (s, &j) in row.iter().enumerate() {
                if j != PAD {
                    let at = &mut fill[j as usize];
                    entries[*at as usize] = (i as u32, s as u8 + 1);
                    *at += 1;
                }
            }
        }
        self.reverse_offsets = counts;
        self.reverse_entries = entries;
    }

    pub fn rows(&self) -> &[[u32; SLOTS]] {
        &self.rows
    }

    pub fn row(&self, face: usize) -> &[u32; SLOTS] {
        &self.rows[face]
    }

    pub fn face_count(&self) -> usize {
        self.rows.len()
    }

    /// Real (non-padded) neighbours of a face, in canonical order.
    pub fn real_neighbors(&self, face: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[face].iter().filter(|&&j| j != PAD).map(|&j| j as usize)
    }

    pub fn padded_slots(&self, face: usize) -> usize {
        self.rows[face].iter().filter(|&&j| j == PAD).count()
    }

    /// `(i, tap)` pairs where face `j` feeds tap `tap` (1..=8) of face `i`.
    pub fn consumers(&self, j: usize) -> &[(u32, u8)] {
        let (a, b) = (self.reverse_offsets[j] as usize, self.reverse_offsets[j + 1] as usize);
        &self.reverse_entries[a..b]
    }

    pub fn singular_vertex_fraction(&self) -> f64 {
        self.singular_vertex_fraction
    }

    /// Faces whose candidate set exceeded eight and was cut back.
    pub fn truncated_faces(&self) -> usize {
        self.truncated_faces
    }

    /// Neighbour pairs whose angles tied and were ordered by face index.
    pub fn ambiguous_orderings(&self) -> usize {
        self.ambiguous_orderings
    }
}

/// Number of faces incident to each vertex.
pub fn vertex_valences(mesh: &QuadMesh) -> Vec<u32> {
    let mut valence = vec![0u32; mesh.vertex_count()];
    for f in mesh.faces() {
        for &v in f {
            valence[v as usize] += 1;
        }
    }
    valence
}

/// Fraction of interior vertices whose valence differs from four.
pub fn singularity_stats(mesh: &QuadMesh) -> f64 {
    let valence = vertex_valences(mesh);
    let boundary = mesh.boundary_vertices();
    let (mut singular, mut interior) = (0usize, 0usize);
    for (v, &val) in valence.iter().enumerate() {
        if boundary[v] || val == 0 {
            continue;
        }
        interior += 1;
        if val != 4 {
            singular += 1;
        }
    }
    if interior == 0 {
        0.0
    } else {
        singular as f64 / interior as f64
    }
}

struct Row {
    slots: [u32; SLOTS],
    truncated: bool,
    ambiguous: usize,
}

pub fn build_neighborhood(mesh: &QuadMesh) -> Result<NeighborhoodTable> {
    let geometry = mesh.face_geometry()?;
    let incident = mesh.vertex_faces();
    let rows = par::map(mesh.face_count(), |i| order_row(mesh, &geometry, &incident, i));
    let mut table = NeighborhoodTable::from_rows(rows.iter().map(|r| r.slots).collect(), singularity_stats(mesh))?;
    table.truncated_faces = rows.iter().filter(|r| r.truncated).count();
    table.ambiguous_orderings = rows.iter().map(|r| r.ambiguous).sum();
    Ok(table)
}

fn order_row(
    mesh: &QuadMesh,
    geometry: &[crate::mesh::FaceGeometry],
    incident: &[Vec<u32>],
    i: usize,
) -> Row {
    let mut candidates: Vec<u32> = mesh.faces()[i]
        .iter()
        .flat_map(|&v| incident[v as usize].iter().copied())
        .filter(|&j| j as usize != i)
        .collect();
    candidates.sort_unstable();
    candidates.dedup();

    let center = geometry[i].centroid;
    let truncated = candidates.len() > SLOTS;
    if truncated {
        let dist = |j: &u32| (geometry[*j as usize].centroid - center).norm();
        candidates.sort_by(|a, b| dist(a).total_cmp(&dist(b)).then(a.cmp(b)));
        candidates.truncate(SLOTS);
    }

    let normal = geometry[i].normal;
    let (t1, t2) = tangent_frame(&normal);
    let mut angled: Vec<(f64, u32)> = candidates
        .iter()
        .map(|&j| {
            let d = geometry[j as usize].centroid - center;
            (d.dot(&t2).atan2(d.dot(&t1)), j)
        })
        .collect();
    angled.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let ambiguous = angled.windows(2).filter(|w| (w[1].0 - w[0].0).abs() < ANGLE_TIE).count();

    let mut first = 0;
    for k in 1..angled.len() {
        let c = &geometry[angled[k].1 as usize].centroid;
        if lex_less(c, &geometry[angled[first].1 as usize].centroid) {
            first = k;
        }
    }
    let mut slots = [PAD; SLOTS];
    for (s, k) in (0..angled.len()).map(|k| (first + k) % angled.len()).enumerate() {
        slots[s] = angled[k].1;
    }
    Row { slots, truncated, ambiguous }
}

/// Right-handed tangent basis `(t1, t2)` with `t1 x t2 = normal`.
pub(crate) fn tangent_frame(normal: &Vec3) -> (Vec3, Vec3) {
    let axis = if normal.x.abs() <= normal.y.abs() && normal.x.abs() <= normal.z.abs() {
        Vec3::x()
    } else if normal.y.abs() <= normal.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let t1 = (axis - normal * normal.dot(&axis)).normalize();
    (t1, normal.cross(&t1))
}

fn lex_less(a: &Vec3, b: &Vec3) -> bool {
    for c in 0..3 {
        if (a[c] - b[c]).abs() > LEX_TOLERANCE {
            return a[c] < b[c];
        }
    }
    false
}
