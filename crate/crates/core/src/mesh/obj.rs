//! OBJ subset (`v x y z`, `f i j k l`) and the binary per-face colour sidecar.
//!
//! Sidecar layout: magic `RSFC`, `u32` face count, then `count * 3`
//! little-endian `f32` values in `[0, 1]`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{QuadMesh, Vec3};
use crate::{Error, Result};

/// Linear RGB colour of one face, components in `[0, 1]`.
pub type Rgb = [f32; 3];

const COLOR_MAGIC: &[u8; 4] = b"RSFC";

/// Records that carry no geometry and are skipped.
const IGNORED: &[&str] = &["o", "g", "s", "mtllib", "usemtl", "l"];

pub fn load_obj(path: impl AsRef<Path>) -> Result<QuadMesh> {
    parse_obj(BufReader::new(File::open(path)?))
}

pub(crate) fn parse_obj(reader: impl BufRead) -> Result<QuadMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let parse_err = |msg: String| Error::Parse { line: lineno, msg };
        let mut tokens = line.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        if tag.starts_with('#') || IGNORED.contains(&tag) {
            continue;
        }
        match tag {
            "v" => {
                let xyz: Vec<f64> = tokens
                    .map(|t| t.parse::<f64>().map_err(|e| parse_err(format!("bad coordinate {t:?}: {e}"))))
                    .collect::<Result<_>>()?;
                if xyz.len() < 3 || xyz.len() > 4 || xyz.iter().any(|c| !c.is_finite()) {
                    return Err(parse_err("vertex needs three finite coordinates".into()));
                }
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            "f" => {
                let idx: Vec<u32> = tokens
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or(t);
                        match head.parse::<i64>() {
                            Ok(i) if i >= 1 && i <= u32::MAX as i64 => Ok((i - 1) as u32),
                            _ => Err(parse_err(format!("bad vertex reference {t:?}"))),
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 4 {
                    return Err(Error::TriangleFaceFound { line: lineno, count: idx.len() });
                }
                if let Some(&bad) = idx.iter().find(|&&i| i as usize >= vertices.len()) {
                    return Err(parse_err(format!("vertex {} referenced before definition", bad + 1)));
                }
                faces.push([idx[0], idx[1], idx[2], idx[3]]);
            }
            other => return Err(parse_err(format!("unsupported record {other:?}"))),
        }
    }
    QuadMesh::new(vertices, faces, 0)
}

/// Path of the colour sidecar written next to an OBJ file.
pub fn sidecar_path(obj_path: impl AsRef<Path>) -> PathBuf {
    obj_path.as_ref().with_extension("rsfc")
}

/// Writes the mesh as OBJ and, if `colors` is given, the colour sidecar at
/// [`sidecar_path`].
pub fn save_obj(mesh: &QuadMesh, colors: Option<&[Rgb]>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(c) = colors {
        check_colors(c, mesh.face_count())?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for v in mesh.vertices() {
        // `{}` on f64 prints the shortest string that parses back exactly.
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in mesh.faces() {
        writeln!(w, "f {} {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1, f[3] + 1)?;
    }
    w.flush()?;
    if let Some(c) = colors {
        write_colors(sidecar_path(path), c)?;
    }
    Ok(())
}

fn check_colors(colors: &[Rgb], faces: usize) -> Result<()> {
    if colors.len() != faces {
        return Err(Error::Precondition(format!(
            "{} colours given for {faces} faces",
            colors.len()
        )));
    }
    if colors.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::Precondition("colour components must lie in [0, 1]".into()));
    }
    Ok(())
}

pub fn write_colors(path: impl AsRef<Path>, colors: &[Rgb]) -> Result<()> {
    check_colors(colors, colors.len())?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(COLOR_MAGIC)?;
    w.write_u32::<LittleEndian>(colors.len() as u32)?;
    for c in colors.iter().flatten() {
        w.write_f32::<LittleEndian>(*c)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_colors(path: impl AsRef<Path>) -> Result<Vec<Rgb>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != COLOR_MAGIC {
        return Err(Error::Format("colour sidecar magic is not RSFC".into()));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut colors = Vec::with_capacity(n);
    for _ in 0..n {
        let mut c = [0f32; 3];
        r.read_f32_into::<LittleEndian>(&mut c)?;
        colors.push(c);
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes after colour data".into()));
    }
    check_colors(&colors, n)?;
    Ok(colors)
}
