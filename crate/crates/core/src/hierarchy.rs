//! Multi-resolution mesh stacks and the pooling/unpooling maps between them.
//!
//! Levels are indexed from 0 (finest) to `n - 1` (coarsest). Every fine face
//! is assigned to the coarse face with the nearest centroid (ties go to the
//! lower coarse index); the groups of fine faces owned by each coarse face are
//! the exact preimages of that assignment, so pooling followed by unpooling is
//! the identity on coarse fields.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::mesh::{QuadMesh, Vec3};
use crate::neighborhood::{build_neighborhood, NeighborhoodTable, SLOTS};
use crate::{par, Error, Result, Scalar};

const CACHE_MAGIC: &[u8; 4] = b"RSHY";
const CACHE_VERSION: u32 = 1;

/// One resolution level: the mesh and its neighbourhood table.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub mesh: QuadMesh,
    pub neighborhood: NeighborhoodTable,
}

/// Fine-to-coarse correspondence between two adjacent levels.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolMap {
    assignment: Vec<u32>,
    groups: Vec<Vec<u32>>,
}

impl PoolMap {
    pub fn from_assignment(assignment: Vec<u32>, coarse_faces: usize) -> Result<Self> {
        let mut groups = vec![Vec::new(); coarse_faces];
        for (f, &c) in assignment.iter().enumerate() {
            let group = groups
                .get_mut(c as usize)
                .ok_or_else(|| Error::Format(format!("fine face {f} assigned to missing coarse face {c}")))?;
            group.push(f as u32);
        }
        Ok(Self { assignment, groups })
    }

    /// Coarse face owning each fine face.
    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    /// Fine faces owned by each coarse face.
    pub fn groups(&self) -> &[Vec<u32>] {
        &self.groups
    }

    pub fn fine_faces(&self) -> usize {
        self.assignment.len()
    }

    pub fn coarse_faces(&self) -> usize {
        self.groups.len()
    }

    /// Mean over each group; empty groups give zero rows.
    pub fn pool_rows<T: Scalar>(&self, x: &[T], channels: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.groups.len() * channels];
        par::for_each_row(&mut out, channels, |j, row| {
            let group = &self.groups[j];
            if group.is_empty() {
                return;
            }
            for &f in group {
                for (o, v) in row.iter_mut().zip(&x[f as usize * channels..][..channels]) {
                    *o += *v;
                }
            }
            let inv = T::one() / T::of(group.len() as f64);
            row.iter_mut().for_each(|o| *o *= inv);
        });
        out
    }

    /// Adjoint of [`pool_rows`](Self::pool_rows): each fine row receives its
    /// group's gradient divided by the group size.
    pub fn pool_rows_backward<T: Scalar>(&self, grad: &[T], channels: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.assignment.len() * channels];
        par::for_each_row(&mut out, channels, |f, row| {
            let j = self.assignment[f] as usize;
            let inv = T::one() / T::of(self.groups[j].len() as f64);
            for (o, g) in row.iter_mut().zip(&grad[j * channels..][..channels]) {
                *o = *g * inv;
            }
        });
        out
    }

    /// Copies each coarse row to every fine face assigned to it.
    pub fn unpool_rows<T: Scalar>(&self, x: &[T], channels: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.assignment.len() * channels];
        par::for_each_row(&mut out, channels, |f, row| {
            let j = self.assignment[f] as usize;
            row.copy_from_slice(&x[j * channels..][..channels]);
        });
        out
    }

    /// Adjoint of [`unpool_rows`](Self::unpool_rows): sums the gradients of each group.
    pub fn unpool_rows_backward<T: Scalar>(&self, grad: &[T], channels: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.groups.len() * channels];
        par::for_each_row(&mut out, channels, |j, row| {
            for &f in &self.groups[j] {
                for (o, g) in row.iter_mut().zip(&grad[f as usize * channels..][..channels]) {
                    *o += *g;
                }
            }
        });
        out
    }
}

/// Per-face feature vectors on one level, stored row-major (`faces x channels`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureField<T> {
    pub level: usize,
    pub channels: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> FeatureField<T> {
    pub fn new(level: usize, channels: usize, values: Vec<T>) -> Result<Self> {
        if channels == 0 && !values.is_empty() || channels > 0 && values.len() % channels != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not divide into {channels} channels",
                values.len()
            )));
        }
        Ok(Self { level, channels, values })
    }

    pub fn zeros(level: usize, faces: usize, channels: usize) -> Self {
        Self { level, channels, values: vec![T::zero(); faces * channels] }
    }

    pub fn rows(&self) -> usize {
        self.values.len().checked_div(self.channels).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.channels..][..self.channels]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Accept coarse faces that own no fine faces instead of failing.
    pub allow_empty_groups: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshHierarchy {
    levels: Vec<Level>,
    pools: Vec<PoolMap>,
    allow_empty_groups: bool,
}

/// Builds a hierarchy from meshes ordered finest to coarsest.
pub fn build_hierarchy(meshes: Vec<QuadMesh>, options: BuildOptions) -> Result<MeshHierarchy> {
    if meshes.len() < 2 {
        return Err(Error::Precondition("a hierarchy needs at least two levels".into()));
    }
    for w in meshes.windows(2) {
        if w[1].face_count() >= w[0].face_count() {
            return Err(Error::Ordering(format!(
                "face counts must strictly decrease, got {} then {}",
                w[0].face_count(),
                w[1].face_count()
            )));
        }
    }
    let mut pools = Vec::with_capacity(meshes.len() - 1);
    for w in meshes.windows(2) {
        pools.push(nearest_centroid_map(&w[0], &w[1])?);
    }
    let levels = meshes
        .into_iter()
        .map(|mesh| Ok(Level { neighborhood: build_neighborhood(&mesh)?, mesh }))
        .collect::<Result<Vec<_>>>()?;
    let h = MeshHierarchy { levels, pools, allow_empty_groups: options.allow_empty_groups };
    h.check_groups()?;
    Ok(h)
}

fn nearest_centroid_map(fine: &QuadMesh, coarse: &QuadMesh) -> Result<PoolMap> {
    let fine_c: Vec<Vec3> = fine.face_geometry()?.iter().map(|g| g.centroid).collect();
    let coarse_c: Vec<Vec3> = coarse.face_geometry()?.iter().map(|g| g.centroid).collect();
    let assignment = par::map(fine_c.len(), |f| {
        let p = fine_c[f];
        let mut best = (f64::INFINITY, 0u32);
        for (j, c) in coarse_c.iter().enumerate() {
            let d = (c - p).norm_squared();
            if d < best.0 {
                best = (d, j as u32);
            }
        }
        best.1
    });
    PoolMap::from_assignment(assignment, coarse_c.len())
}

impl MeshHierarchy {
    /// Assembles a hierarchy from precomputed parts (used by the cache reader).
    pub fn from_parts(levels: Vec<Level>, pools: Vec<PoolMap>, options: BuildOptions) -> Result<Self> {
        let h = Self { levels, pools, allow_empty_groups: options.allow_empty_groups };
        h.validate()?;
        Ok(h)
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, l: usize) -> &Level {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn finest(&self) -> &Level {
        &self.levels[0]
    }

    pub fn coarsest(&self) -> &Level {
        &self.levels[self.levels.len() - 1]
    }

    /// Map between level `l` and level `l + 1`.
    pub fn pool_map(&self, l: usize) -> &PoolMap {
        &self.pools[l]
    }

    pub fn face_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.mesh.face_count()).collect()
    }

    pub fn allows_empty_groups(&self) -> bool {
        self.allow_empty_groups
    }

    fn check_groups(&self) -> Result<()> {
        if self.allow_empty_groups {
            return Ok(());
        }
        for (l, p) in self.pools.iter().enumerate() {
            if let Some(face) = p.groups.iter().position(|g| g.is_empty()) {
                return Err(Error::EmptyGroup { level: l + 1, face });
            }
        }
        Ok(())
    }

    /// Checks every structural invariant of the hierarchy.
    pub fn validate(&self) -> Result<()> {
        if self.levels.len() < 2 || self.pools.len() + 1 != self.levels.len() {
            return Err(Error::Format("hierarchy needs n >= 2 levels and n - 1 pool maps".into()));
        }
        for (l, level) in self.levels.iter().enumerate() {
            if level.neighborhood.face_count() != level.mesh.face_count() {
                return Err(Error::Format(format!("level {l}: neighbourhood rows do not match faces")));
            }
        }
        for (l, p) in self.pools.iter().enumerate() {
            let (fine, coarse) = (self.levels[l].mesh.face_count(), self.levels[l + 1].mesh.face_count());
            if coarse >= fine {
                return Err(Error::Ordering(format!("level {} is not coarser than level {l}", l + 1)));
            }
            if p.fine_faces() != fine || p.coarse_faces() != coarse {
                return Err(Error::Format(format!("pool map {l} has the wrong size")));
            }
            let members: usize = p.groups.iter().map(Vec::len).sum();
            if members != fine {
                return Err(Error::Format(format!("pool map {l} groups do not partition the fine level")));
            }
            for (j, g) in p.groups.iter().enumerate() {
                if g.iter().any(|&f| p.assignment[f as usize] as usize != j) {
                    return Err(Error::Format(format!("pool map {l}: group {j} disagrees with assignment")));
                }
            }
        }
        self.check_groups()
    }

    fn check_field<T: Scalar>(&self, x: &FeatureField<T>, level: usize) -> Result<()> {
        if x.level != level {
            return Err(Error::LevelMismatch { expected: level, got: x.level });
        }
        if level >= self.levels.len() {
            return Err(Error::LevelMismatch { expected: self.levels.len() - 1, got: level });
        }
        let faces = self.levels[level].mesh.face_count();
        if x.rows() != faces && x.channels > 0 {
            return Err(Error::ShapeMismatch(format!("field has {} rows, level {level} has {faces} faces", x.rows())));
        }
        Ok(())
    }

    fn coarser_of<T>(&self, x: &FeatureField<T>) -> Result<usize> {
        if x.level + 1 >= self.levels.len() {
            return Err(Error::LevelMismatch { expected: self.levels.len().saturating_sub(2), got: x.level });
        }
        Ok(x.level)
    }

    fn finer_of<T>(&self, x: &FeatureField<T>) -> Result<usize> {
        if x.level == 0 || x.level >= self.levels.len() {
            return Err(Error::LevelMismatch { expected: 1, got: x.level });
        }
        Ok(x.level - 1)
    }

    /// Mean-pools a field from level `l` to level `l + 1`.
    pub fn pool<T: Scalar>(&self, x: &FeatureField<T>) -> Result<FeatureField<T>> {
        let l = self.coarser_of(x)?;
        self.check_field(x, l)?;
        let values = self.pools[l].pool_rows(&x.values, x.channels);
        Ok(FeatureField { level: l + 1, channels: x.channels, values })
    }

    /// Copies a field from level `l + 1` down to level `l`.
    pub fn unpool<T: Scalar>(&self, x: &FeatureField<T>) -> Result<FeatureField<T>> {
        let l = self.finer_of(x)?;
        self.check_field(x, l + 1)?;
        let values = self.pools[l].unpool_rows(&x.values, x.channels);
        Ok(FeatureField { level: l, channels: x.channels, values })
    }

    /// Gradient of [`pool`](Self::pool): takes a gradient at `l + 1`, returns one at `l`.
    pub fn pool_backward<T: Scalar>(&self, grad_out: &FeatureField<T>) -> Result<FeatureField<T>> {
        let l = self.finer_of(grad_out)?;
        self.check_field(grad_out, l + 1)?;
        let values = self.pools[l].pool_rows_backward(&grad_out.values, grad_out.channels);
        Ok(FeatureField { level: l, channels: grad_out.channels, values })
    }

    /// Gradient of [`unpool`](Self::unpool): takes a gradient at `l`, returns one at `l + 1`.
    pub fn unpool_backward<T: Scalar>(&self, grad_out: &FeatureField<T>) -> Result<FeatureField<T>> {
        let l = self.coarser_of(grad_out)?;
        self.check_field(grad_out, l)?;
        let values = self.pools[l].unpool_rows_backward(&grad_out.values, grad_out.channels);
        Ok(FeatureField { level: l + 1, channels: grad_out.channels, values })
    }

    /// Writes the hierarchy cache: meshes, neighbourhood tables and pool assignments.
    pub fn write_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_u32::<LittleEndian>(CACHE_VERSION)?;
        w.write_u32::<LittleEndian>(self.levels.len() as u32)?;
        w.write_u32::<LittleEndian>(u32::from(self.allow_empty_groups))?;
        for (l, level) in self.levels.iter().enumerate() {
            let mesh = &level.mesh;
            w.write_u32::<LittleEndian>(mesh.level_id())?;
            w.write_u32::<LittleEndian>(mesh.vertex_count() as u32)?;
            for v in mesh.vertices() {
                for c in v.iter() {
                    w.write_f32::<LittleEndian>(*c as f32)?;
                }
            }
            w.write_u32::<LittleEndian>(mesh.face_count() as u32)?;
            for idx in mesh.faces().iter().flatten() {
                w.write_u32::<LittleEndian>(*idx)?;
            }
            for idx in level.neighborhood.rows().iter().flatten() {
                w.write_u32::<LittleEndian>(*idx)?;
            }
            w.write_f32::<LittleEndian>(level.neighborhood.singular_vertex_fraction() as f32)?;
            if let Some(p) = self.pools.get(l) {
                for &c in p.assignment() {
                    w.write_u32::<LittleEndian>(c)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_cache(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Format("hierarchy cache magic is not RSHY".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != CACHE_VERSION {
            return Err(Error::Format(format!("unsupported hierarchy cache version {version}")));
        }
        let count = r.read_u32::<LittleEndian>()? as usize;
        let options = BuildOptions { allow_empty_groups: r.read_u32::<LittleEndian>()? & 1 == 1 };
        let mut levels = Vec::with_capacity(count);
        let mut assignments = Vec::with_capacity(count.saturating_sub(1));
        for l in 0..count {
            let level_id = r.read_u32::<LittleEndian>()?;
            let nv = r.read_u32::<LittleEndian>()? as usize;
            let mut coords = vec![0f32; nv * 3];
            r.read_f32_into::<LittleEndian>(&mut coords)?;
            let vertices = coords
                .chunks_exact(3)
                .map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64))
                .collect();
            let nf = r.read_u32::<LittleEndian>()? as usize;
            let mut idx = vec![0u32; nf * 4];
            r.read_u32_into::<LittleEndian>(&mut idx)?;
            let faces = idx.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
            let mut nbr = vec![0u32; nf * SLOTS];
            r.read_u32_into::<LittleEndian>(&mut nbr)?;
            let rows = nbr.chunks_exact(SLOTS).map(|c| c.try_into().expect("slot row")).collect();
            let fraction = r.read_f32::<LittleEndian>()? as f64;
            let mesh = QuadMesh::new(vertices, faces, level_id)?;
            let neighborhood = NeighborhoodTable::from_rows(rows, fraction)?;
            if l + 1 < count {
                let mut a = vec![0u32; nf];
                r.read_u32_into::<LittleEndian>(&mut a)?;
                assignments.push(a);
            }
            levels.push(Level { mesh, neighborhood });
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(Error::Format("trailing bytes in hierarchy cache".into()));
        }
        let pools = assignments
            .into_iter()
            .enumerate()
            .map(|(l, a)| PoolMap::from_assignment(a, levels[l + 1].mesh.face_count()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(levels, pools, options)
    }
}

/// Canonical cube-family hierarchy with levels of depth `finest, finest - 1, ..., coarsest`.
pub fn cube_hierarchy(finest: u32, coarsest: u32) -> Result<MeshHierarchy> {
    if coarsest == 0 || coarsest >= finest {
        return Err(Error::Precondition("need finest > coarsest >= 1".into()));
    }
    let meshes = (coarsest..=finest)
        .rev()
        .map(crate::mesh::make_cube_hierarchy_level)
        .collect::<Result<Vec<_>>>()?;
    build_hierarchy(meshes, BuildOptions::default())
}

/// Same as [`cube_hierarchy`] but with every level projected to the unit sphere.
pub fn sphere_hierarchy(finest: u32, coarsest: u32) -> Result<MeshHierarchy> {
    if coarsest == 0 || coarsest >= finest {
        return Err(Error::Precondition("need finest > coarsest >= 1".into()));
    }
    let meshes = (coarsest..=finest).rev().map(crate::mesh::make_quad_sphere).collect();
    build_hierarchy(meshes, BuildOptions::default())
}
