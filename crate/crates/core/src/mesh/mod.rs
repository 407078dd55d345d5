//! Quad meshes: representation, validation, per-face geometry, OBJ I/O and
//! synthetic generators.

mod generate;
mod obj;

use std::collections::HashMap;

use nalgebra::Vector3;

pub use generate::{
    make_cube_hierarchy_level, make_cylinder_patch, make_flat_grid, make_quad_sphere, make_torus,
    unit_cube,
};
pub use obj::{load_obj, read_colors, save_obj, sidecar_path, write_colors, Rgb};

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Minimum area of each triangle half of a quad.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// A validated quad mesh, one level of a hierarchy.
///
/// Faces are counter-clockwise when seen from outside. The mesh is immutable
/// once built.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 4]>,
    level_id: u32,
}

/// Centroid, unit normal and area of one face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry {
    pub centroid: Vec3,
    pub normal: Vec3,
    pub area: f64,
}

impl QuadMesh {
    /// Builds a mesh, checking indices, degeneracy, edge manifoldness and
    /// winding consistency.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 4]>, level_id: u32) -> Result<Self> {
        let mesh = Self { vertices, faces, level_id };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 4]] {
        &self.faces
    }

    pub fn level_id(&self) -> u32 {
        self.level_id
    }

    pub fn with_level_id(mut self, level_id: u32) -> Self {
        self.level_id = level_id;
        self
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face_vertices(&self, f: usize) -> [Vec3; 4] {
        self.faces[f].map(|v| self.vertices[v as usize])
    }

    fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        for (fi, face) in self.faces.iter().enumerate() {
            for (a, &v) in face.iter().enumerate() {
                if v as usize >= nv {
                    return Err(Error::Precondition(format!(
                        "face {fi} references vertex {v} but the mesh has {nv} vertices"
                    )));
                }
                if face[a + 1..].contains(&v) {
                    return Err(Error::DegenerateFace(fi));
                }
            }
            let [t0, t1] = triangle_halves(&self.face_vertices(fi));
            if t0.norm() * 0.5 <= MIN_TRIANGLE_AREA || t1.norm() * 0.5 <= MIN_TRIANGLE_AREA {
                return Err(Error::DegenerateFace(fi));
            }
        }
        // Each undirected edge may appear at most twice, and when twice, in
        // opposite directions.
        let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
        let mut undirected: HashMap<(u32, u32), usize> = HashMap::new();
        for face in &self.faces {
            for k in 0..4 {
                let (a, b) = (face[k], face[(k + 1) % 4]);
                let key = (a.min(b), a.max(b));
                let n = undirected.entry(key).or_insert(0);
                *n += 1;
                if *n > 2 {
                    return Err(Error::NonManifoldEdge(key.0, key.1));
                }
                if directed.insert((a, b), 1).is_some() {
                    return Err(Error::Orientation(a, b));
                }
            }
        }
        Ok(())
    }

    /// Undirected edges with the number of incident faces.
    pub fn edge_face_counts(&self) -> HashMap<(u32, u32), usize> {
        let mut edges = HashMap::new();
        for face in &self.faces {
            for k in 0..4 {
                let (a, b) = (face[k], face[(k + 1) % 4]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Every edge has exactly two incident faces.
    pub fn is_closed(&self) -> bool {
        self.edge_face_counts().values().all(|&n| n == 2)
    }

    /// Vertices lying on a boundary edge (an edge with one incident face).
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut on_boundary = vec![false; self.vertices.len()];
        for ((a, b), n) in self.edge_face_counts() {
            if n == 1 {
                on_boundary[a as usize] = true;
                on_boundary[b as usize] = true;
            }
        }
        on_boundary
    }

    /// `V - E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_face_counts().len() as i64 + self.faces.len() as i64
    }

    /// Incident faces per vertex, in face order.
    pub fn vertex_faces(&self) -> Vec<Vec<u32>> {
        let mut incident = vec![Vec::new(); self.vertices.len()];
        for (fi, face) in self.faces.iter().enumerate() {
            for &v in face {
                incident[v as usize].push(fi as u32);
            }
        }
        incident
    }

    /// Per-face centroid, normal and area.
    ///
    /// The quad is split along its 0-2 diagonal; the normal is the normalized
    /// sum of the two half-triangle cross products.
    pub fn face_geometry(&self) -> Result<Vec<FaceGeometry>> {
        (0..self.faces.len()).map(|f| self.geometry_of(f)).collect()
    }

    pub fn geometry_of(&self, f: usize) -> Result<FaceGeometry> {
        let p = self.face_vertices(f);
        let [t0, t1] = triangle_halves(&p);
        let sum = t0 + t1;
        let len = sum.norm();
        if len < 1e-12 {
            return Err(Error::DegenerateFace(f));
        }
        Ok(FaceGeometry {
            centroid: (p[0] + p[1] + p[2] + p[3]) / 4.0,
            normal: sum / len,
            area: 0.5 * (t0.norm() + t1.norm()),
        })
    }

    /// A copy with every vertex mapped through `f`.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Result<Self> {
        Self::new(self.vertices.iter().map(f).collect(), self.faces.clone(), self.level_id)
    }

    /// A copy with the winding of every face reversed.
    pub fn flipped(&self) -> Self {
        let faces = self.faces.iter().map(|&[a, b, c, d]| [a, d, c, b]).collect();
        Self { vertices: self.vertices.clone(), faces, level_id: self.level_id }
    }

    /// A copy with faces reordered so that new face `i` is old face `order[i]`.
    pub fn permute_faces(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.faces.len() {
            return Err(Error::ShapeMismatch("face permutation length".into()));
        }
        let faces = order.iter().map(|&i| self.faces[i]).collect();
        Ok(Self { vertices: self.vertices.clone(), faces, level_id: self.level_id })
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Mean of all vertex positions.
    pub fn centroid(&self) -> Vec3 {
        let sum: Vec3 = self.vertices.iter().sum();
        sum / self.vertices.len().max(1) as f64
    }

    /// Copy translated and uniformly scaled into a unit bounding cube centred at the origin.
    pub fn normalized(&self) -> Self {
        let (lo, hi) = self.bounds();
        let center = (lo + hi) * 0.5;
        let extent = (hi - lo).max();
        let scale = if extent > 0.0 { 1.0 / extent } else { 1.0 };
        Self {
            vertices: self.vertices.iter().map(|v| (v - center) * scale).collect(),
            faces: self.faces.clone(),
            level_id: self.level_id,
        }
    }
}

/// Cross products of the two triangle halves `(0,1,2)` and `(0,2,3)`.
pub(crate) fn triangle_halves(p: &[Vec3; 4]) -> [Vec3; 2] {
    [(p[1] - p[0]).cross(&(p[2] - p[0])), (p[2] - p[0]).cross(&(p[3] - p[0]))]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(z: f64) -> Vec<Vec3> {
        vec![
            Vec3::new(0.0, 0.0, z),
            Vec3::new(1.0, 0.0, z),
            Vec3::new(1.0, 1.0, z),
            Vec3::new(0.0, 1.0, z),
        ]
    }

    #[test]
    fn top_face_of_unit_cube() {
        let cube = unit_cube();
        let geo = cube.face_geometry().unwrap();
        let top = geo.iter().find(|g| g.centroid.z > 0.99).unwrap();
        assert!((top.normal - Vec3::z()).norm() < 1e-12);
        assert!((top.area - 1.0).abs() < 1e-12);
        assert!((top.centroid - Vec3::new(0.5, 0.5, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn planar_quad_normal_independent_of_diagonal() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 0.1, 0.3),
            Vec3::new(2.5, 1.7, 0.9),
            Vec3::new(-0.2, 1.2, 0.4),
        ];
        // Project onto a plane so the quad is exactly planar.
        let n = Vec3::new(0.2, -0.3, 1.0).normalize();
        let v: Vec<Vec3> = v.iter().map(|p| p - n * p.dot(&n)).collect();
        let a = QuadMesh::new(v.clone(), vec![[0, 1, 2, 3]], 0).unwrap();
        let b = QuadMesh::new(v, vec![[1, 2, 3, 0]], 0).unwrap();
        let ga = a.geometry_of(0).unwrap();
        let gb = b.geometry_of(0).unwrap();
        assert!((ga.normal - gb.normal).norm() < 1e-9);
        assert!((ga.area - gb.area).abs() < 1e-9);
    }

    #[test]
    fn rejects_repeated_vertex() {
        let err = QuadMesh::new(square(0.0), vec![[0, 1, 1, 3]], 0).unwrap_err();
        assert!(matches!(err, Error::DegenerateFace(0)));
    }

    #[test]
    fn rejects_collinear_half() {
        let mut v = square(0.0);
        v[1] = Vec3::new(0.5, 0.5, 0.0);
        assert!(matches!(
            QuadMesh::new(v, vec![[0, 1, 2, 3]], 0),
            Err(Error::DegenerateFace(0))
        ));
    }

    #[test]
    fn rejects_inconsistent_winding() {
        let mut v = square(0.0);
        v.push(Vec3::new(2.0, 0.0, 0.0));
        v.push(Vec3::new(2.0, 1.0, 0.0));
        // Second face traverses edge 1-2 in the same direction as the first.
        let err = QuadMesh::new(v, vec![[0, 1, 2, 3], [1, 2, 5, 4]], 0).unwrap_err();
        assert!(matches!(err, Error::Orientation(1, 2)));
    }

    #[test]
    fn rejects_non_manifold_edge() {
        let mut v = square(0.0);
        v.extend([Vec3::new(0.5, -1.0, 1.0), Vec3::new(0.5, -1.0, -1.0)]);
        v.extend([Vec3::new(0.5, 1.0, 1.0), Vec3::new(0.5, 1.0, -1.0)]);
        let faces = vec![[0, 1, 2, 3], [1, 0, 4, 5], [0, 1, 6, 7]];
        assert!(matches!(
            QuadMesh::new(v, faces, 0),
            Err(Error::NonManifoldEdge(_, _)) | Err(Error::Orientation(_, _))
        ));
    }

    #[test]
    fn rejects_out_of_range_index() {
        assert!(matches!(
            QuadMesh::new(square(0.0), vec![[0, 1, 2, 9]], 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn normalization_fits_unit_cube() {
        let m = make_quad_sphere(2).map_vertices(|v| v * 3.0 + Vec3::new(1.0, 2.0, 3.0)).unwrap();
        let (lo, hi) = m.normalized().bounds();
        assert!((hi - lo).max() - 1.0 < 1e-12);
        assert!((lo + hi).norm() < 1e-12);
    }
}
