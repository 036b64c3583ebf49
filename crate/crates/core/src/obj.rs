//! ASCII Wavefront OBJ reading and OBJ/MTL writing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Point2, Point3};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Material name written by [`save_obj`] when a texture is attached.
pub const MATERIAL_NAME: &str = "texture";

pub fn load_obj(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, &path.display().to_string())
}

/// Parses OBJ text. Only `v` and `f` records are interpreted; faces must be
/// triangles. `name` is used in error messages.
pub fn parse_obj(text: &str, name: &str) -> Result<Mesh> {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: name.to_string(),
        line,
        message,
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| parse_err(line_no, "vertex needs 3 coordinates".into()))?;
                    *c = tok
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad coordinate `{tok}`")))?;
                }
                positions.push(Point3::from(xyz));
            }
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    if refs.len() > 3 {
                        return Err(Error::NonTriangleFace {
                            line: line_no,
                            count: refs.len(),
                        });
                    }
                    return Err(parse_err(line_no, format!("face has {} vertices", refs.len())));
                }
                let mut face = [0usize; 3];
                for (slot, tok) in face.iter_mut().zip(&refs) {
                    let head = tok.split('/').next().unwrap_or("");
                    let index: i64 = head
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad face index `{tok}`")))?;
                    // 1-based, negative indices count back from the last vertex read.
                    let resolved = match index {
                        0 => return Err(parse_err(line_no, "face index 0".into())),
                        i if i > 0 => i - 1,
                        i => positions.len() as i64 + i,
                    };
                    if resolved < 0 {
                        return Err(parse_err(line_no, format!("face index `{tok}` out of range")));
                    }
                    *slot = resolved as usize;
                }
                faces.push(face);
            }
            _ => {}
        }
    }

    Mesh::new(positions, faces)
}

/// Renders a mesh as OBJ text. With `uvs` (image-normalized, v pointing down),
/// one `vt` per vertex is written with v flipped to the OBJ bottom-left origin
/// and faces use `i/i` references; with `mtl_name`, `mtllib`/`usemtl` lines are
/// emitted.
pub fn obj_string(mesh: &Mesh, uvs: Option<&[Point2<f64>]>, mtl_name: Option<&str>) -> Result<String> {
    if let Some(uvs) = uvs {
        if uvs.len() != mesh.vertex_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} uvs, got {}",
                mesh.vertex_count(),
                uvs.len()
            )));
        }
    }
    let mut out = String::new();
    if let Some(mtl) = mtl_name {
        let _ = writeln!(out, "mtllib {mtl}");
    }
    for p in mesh.positions() {
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    if let Some(uvs) = uvs {
        for uv in uvs {
            let _ = writeln!(out, "vt {} {}", uv.x, 1.0 - uv.y);
        }
    }
    if mtl_name.is_some() {
        let _ = writeln!(out, "usemtl {MATERIAL_NAME}");
    }
    for f in mesh.faces() {
        let [a, b, c] = f.map(|i| i + 1);
        if uvs.is_some() {
            let _ = writeln!(out, "f {a}/{a} {b}/{b} {c}/{c}");
        } else {
            let _ = writeln!(out, "f {a} {b} {c}");
        }
    }
    Ok(out)
}

pub fn mtl_string(texture_name: &str) -> String {
    format!("newmtl {MATERIAL_NAME}\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd {texture_name}\n")
}

/// Writes `path` and, when `texture_name` is given, a sibling `.mtl` file
/// whose `map_Kd` names the texture.
pub fn save_obj(
    mesh: &Mesh,
    uvs: Option<&[Point2<f64>]>,
    texture_name: Option<&str>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mtl_path = path.with_extension("mtl");
    let mtl_file = texture_name.map(|_| {
        mtl_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "mesh.mtl".into())
    });
    let text = obj_string(mesh, uvs, mtl_file.as_deref())?;
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    if let Some(tex) = texture_name {
        fs::write(&mtl_path, mtl_string(tex)).map_err(|e| Error::io(&mtl_path, e))?;
    }
    Ok(())
}
