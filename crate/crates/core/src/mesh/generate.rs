use std::collections::HashMap;
use std::f64::consts::PI;

use super::{QuadMesh, Vec3};
use crate::{Error, Result};

/// Unit cube `[0,1]^3` with one quad per side.
pub fn unit_cube() -> QuadMesh {
    cube_grid(1)
}

/// Unit cube with every side split into a `2^k x 2^k` grid: `6 * 4^k` faces.
pub fn make_cube_hierarchy_level(k: u32) -> Result<QuadMesh> {
    if k == 0 || k > 12 {
        return Err(Error::Precondition(format!("cube subdivision depth must be in 1..=12, got {k}")));
    }
    Ok(cube_grid(1 << k).with_level_id(k))
}

/// Cube of depth `k` centred at the origin with vertices pushed onto the unit sphere.
pub fn make_quad_sphere(k: u32) -> QuadMesh {
    let cube = cube_grid(1 << k.clamp(1, 12));
    let half = Vec3::repeat(0.5);
    cube.map_vertices(|v| (v - half).normalize())
        .expect("projection of a convex grid stays valid")
        .with_level_id(k)
}

fn cube_grid(n: u32) -> QuadMesh {
    let mut index: HashMap<[u32; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vertex = |p: [u32; 3]| -> u32 {
        *index.entry(p).or_insert_with(|| {
            vertices.push(Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64) / n as f64);
            (vertices.len() - 1) as u32
        })
    };
    let mut faces = Vec::with_capacity(6 * (n * n) as usize);
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for max_side in [false, true] {
            let lattice = |i: u32, j: u32| {
                let mut p = [0u32; 3];
                p[axis] = if max_side { n } else { 0 };
                p[u] = i;
                p[v] = j;
                p
            };
            for j in 0..n {
                for i in 0..n {
                    let a = vertex(lattice(i, j));
                    let b = vertex(lattice(i + 1, j));
                    let c = vertex(lattice(i + 1, j + 1));
                    let d = vertex(lattice(i, j + 1));
                    // e_u x e_v = e_axis, so (a,b,c,d) faces +axis.
                    faces.push(if max_side { [a, b, c, d] } else { [a, d, c, b] });
                }
            }
        }
    }
    QuadMesh::new(vertices, faces, 0).expect("cube grid is a valid closed quad mesh")
}

/// Open `nx x ny` grid of square quads with side `spacing` in the `z = 0` plane, facing `+z`.
pub fn make_flat_grid(nx: usize, ny: usize, spacing: f64) -> QuadMesh {
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
        }
    }
    let id = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut faces = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    QuadMesh::new(vertices, faces, 0).expect("flat grid is valid")
}

/// Closed torus grid with `nu` segments around the axis and `nv` around the tube.
pub fn make_torus(nu: usize, nv: usize, major: f64, minor: f64) -> QuadMesh {
    let mut vertices = Vec::with_capacity(nu * nv);
    for j in 0..nv {
        let b = 2.0 * PI * j as f64 / nv as f64;
        for i in 0..nu {
            let a = 2.0 * PI * i as f64 / nu as f64;
            let ring = major + minor * b.cos();
            vertices.push(Vec3::new(ring * a.cos(), ring * a.sin(), minor * b.sin()));
        }
    }
    let id = |i: usize, j: usize| ((j % nv) * nu + (i % nu)) as u32;
    let mut faces = Vec::with_capacity(nu * nv);
    for j in 0..nv {
        for i in 0..nu {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    QuadMesh::new(vertices, faces, 0).expect("torus grid is valid")
}

/// Open cylindrical strip of radius `radius` spanning `angle` radians around
/// the z axis with `nu` segments, and `nv` segments of length `dz` along it.
pub fn make_cylinder_patch(radius: f64, angle: f64, nu: usize, nv: usize, dz: f64) -> QuadMesh {
    let mut vertices = Vec::with_capacity((nu + 1) * (nv + 1));
    for j in 0..=nv {
        for i in 0..=nu {
            let t = angle * i as f64 / nu as f64;
            vertices.push(Vec3::new(radius * t.cos(), radius * t.sin(), j as f64 * dz));
        }
    }
    let id = |i: usize, j: usize| (j * (nu + 1) + i) as u32;
    let mut faces = Vec::with_capacity(nu * nv);
    for j in 0..nv {
        for i in 0..nu {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    QuadMesh::new(vertices, faces, 0).expect("cylinder patch is valid")
}
