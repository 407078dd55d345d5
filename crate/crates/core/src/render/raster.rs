//! Flat-colour rasterization of quad meshes.

use super::camera::Camera;
use crate::mesh::{QuadMesh, Rgb, Vec3};
use crate::nn::Tensor;
use crate::{par, Error, Result, Scalar};

/// Rows handled together when binning triangles.
const BAND: usize = 8;

/// Per-pixel visible face, `-1` for background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceIds {
    pub height: usize,
    pub width: usize,
    pub ids: Vec<i32>,
}

impl FaceIds {
    pub fn coverage(&self, faces: usize) -> Vec<u32> {
        let mut c = vec![0u32; faces];
        for &id in &self.ids {
            if id >= 0 {
                c[id as usize] += 1;
            }
        }
        c
    }

    pub fn foreground(&self) -> Vec<bool> {
        self.ids.iter().map(|&i| i >= 0).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.iter().all(|&i| i < 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    /// `[H, W, 3]` in `[0, 1]`.
    pub image: Tensor<f32>,
    pub face_id: FaceIds,
    pub coverage: Vec<u32>,
}

impl RenderOutput {
    /// True when no face covers any pixel.
    pub fn is_empty(&self) -> bool {
        self.face_id.is_empty()
    }
}

struct ScreenTri {
    face: i32,
    p: [(f64, f64); 3],
    inv_depth: [f64; 3],
    inv_area: f64,
    rows: (usize, usize),
    cols: (usize, usize),
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

fn setup(mesh: &QuadMesh, cam: &Camera, cull: bool) -> Vec<ScreenTri> {
    let (h, w) = cam.resolution;
    let projected: Vec<Option<(f64, f64, f64)>> = mesh.vertices().iter().map(|v| cam.project(v)).collect();
    let mut tris = Vec::with_capacity(mesh.face_count() * 2);
    for (f, face) in mesh.faces().iter().enumerate() {
        for idx in [[0, 1, 2], [0, 2, 3]] {
            let vs = idx.map(|k| face[k] as usize);
            let pos: [Vec3; 3] = vs.map(|v| mesh.vertices()[v]);
            if cull {
                let n = (pos[1] - pos[0]).cross(&(pos[2] - pos[0]));
                if n.dot(&(cam.eye - pos[0])) <= 0.0 {
                    continue;
                }
            }
            let [Some(a), Some(b), Some(c)] = vs.map(|v| projected[v]) else { continue };
            let p = [(a.0, a.1), (b.0, b.1), (c.0, c.1)];
            let area = edge(p[0], p[1], p[2]);
            if area.abs() < 1e-12 {
                continue;
            }
            let (xmin, xmax) = (a.0.min(b.0).min(c.0), a.0.max(b.0).max(c.0));
            let (ymin, ymax) = (a.1.min(b.1).min(c.1), a.1.max(b.1).max(c.1));
            // Pixels whose centres can fall inside.
            let lo = |v: f64| (v - 0.5).ceil().max(0.0) as usize;
            let hi = |v: f64, n: usize| ((v - 0.5).floor() + 1.0).clamp(0.0, n as f64) as usize;
            let rows = (lo(ymin), hi(ymax, h));
            let cols = (lo(xmin), hi(xmax, w));
            if rows.0 >= rows.1 || cols.0 >= cols.1 {
                continue;
            }
            tris.push(ScreenTri {
                face: f as i32,
                p,
                inv_depth: [1.0 / a.2, 1.0 / b.2, 1.0 / c.2],
                inv_area: 1.0 / area,
                rows,
                cols,
            });
        }
    }
    tris
}

/// Visible face per pixel. Back faces are culled when the mesh is closed.
pub fn rasterize_ids(mesh: &QuadMesh, cam: &Camera) -> FaceIds {
    let (h, w) = cam.resolution;
    let tris = setup(mesh, cam, mesh.is_closed());
    let bands = h.div_ceil(BAND);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); bands];
    for (t, tri) in tris.iter().enumerate() {
        for bin in &mut bins[tri.rows.0 / BAND..tri.rows.1.div_ceil(BAND)] {
            bin.push(t as u32);
        }
    }
    let mut ids = vec![-1i32; h * w];
    par::for_each_row(&mut ids, BAND * w, |band, out| {
        let mut depth = vec![0.0f64; out.len()];
        let r0 = band * BAND;
        for &t in &bins[band] {
            let tri = &tris[t as usize];
            for y in tri.rows.0.max(r0)..tri.rows.1.min(r0 + out.len() / w) {
                for x in tri.cols.0..tri.cols.1 {
                    let p = (x as f64 + 0.5, y as f64 + 0.5);
                    let b0 = edge(tri.p[1], tri.p[2], p) * tri.inv_area;
                    let b1 = edge(tri.p[2], tri.p[0], p) * tri.inv_area;
                    let b2 = edge(tri.p[0], tri.p[1], p) * tri.inv_area;
                    if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                        continue;
                    }
                    let inv_d = b0 * tri.inv_depth[0] + b1 * tri.inv_depth[1] + b2 * tri.inv_depth[2];
                    let k = (y - r0) * w + x;
                    if inv_d > depth[k] {
                        depth[k] = inv_d;
                        out[k] = tri.face;
                    }
                }
            }
        }
    });
    FaceIds { height: h, width: w, ids }
}

/// Paints each pixel with its face colour or the background. `colors` is `[F, 3]` row-major.
pub fn shade_pixels<T: Scalar>(colors: &[T], ids: &FaceIds, background: [T; 3]) -> Vec<T> {
    let mut img = vec![T::zero(); ids.ids.len() * 3];
    par::for_each_row(&mut img, 3, |p, px| {
        let id = ids.ids[p];
        if id < 0 {
            px.copy_from_slice(&background);
        } else {
            px.copy_from_slice(&colors[id as usize * 3..][..3]);
        }
    });
    img
}

/// Colour gradient: every foreground pixel's gradient is added to its face.
pub fn shade_backward<T: Scalar>(grad_image: &[T], ids: &FaceIds, faces: usize) -> Vec<T> {
    let mut g = vec![T::zero(); faces * 3];
    for (p, &id) in ids.ids.iter().enumerate() {
        if id >= 0 {
            for c in 0..3 {
                g[id as usize * 3 + c] += grad_image[p * 3 + c];
            }
        }
    }
    g
}

fn check_colors(colors: &[Rgb], mesh: &QuadMesh) -> Result<()> {
    if colors.len() != mesh.face_count() {
        return Err(Error::ShapeMismatch(format!("{} colours for {} faces", colors.len(), mesh.face_count())));
    }
    if colors.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::Precondition("face colours must lie in [0, 1]".into()));
    }
    Ok(())
}

pub fn rasterize(mesh: &QuadMesh, colors: &[Rgb], cam: &Camera, background: Rgb) -> Result<RenderOutput> {
    check_colors(colors, mesh)?;
    let face_id = rasterize_ids(mesh, cam);
    let flat: Vec<f32> = colors.iter().flatten().copied().collect();
    let image = Tensor::new(vec![face_id.height, face_id.width, 3], shade_pixels(&flat, &face_id, background))?;
    let coverage = face_id.coverage(mesh.face_count());
    Ok(RenderOutput { image, face_id, coverage })
}

/// Gradient of a loss with respect to the face colours, given its gradient
/// with respect to the rendered image. Visibility contributes nothing.
pub fn rasterize_backward(render: &RenderOutput, grad_image: &Tensor<f32>) -> Result<Vec<Rgb>> {
    if grad_image.shape() != render.image.shape() {
        return Err(Error::ShapeMismatch(format!(
            "image gradient {:?} vs image {:?}",
            grad_image.shape(),
            render.image.shape()
        )));
    }
    let g = shade_backward(grad_image.data(), &render.face_id, render.coverage.len());
    Ok(g.chunks(3).map(|c| [c[0], c[1], c[2]]).collect())
}
