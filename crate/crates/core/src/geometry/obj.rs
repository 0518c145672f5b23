//! Wavefront OBJ subset: `v x y z` and `f i j k ...` records, 1-based
//! indices. Other record types are skipped; polygons are fan-triangulated.

use std::fmt::Write as _;
use std::path::Path;

use super::{GeometryError, Mesh};
use crate::math::Vec3;

pub fn parse_obj(name: &str, text: &str) -> Result<Mesh, GeometryError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let coords: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| GeometryError::Obj {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                if coords.len() != 3 {
                    return Err(GeometryError::Obj {
                        line: line_no,
                        message: "vertex needs three coordinates".into(),
                    });
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    // `f 1/2/3` style: only the position index matters
                    let head = tok.split('/').next().unwrap_or(tok);
                    let i: i64 = head.parse().map_err(|_| GeometryError::Obj {
                        line: line_no,
                        message: format!("bad face index `{tok}`"),
                    })?;
                    if i < 1 {
                        return Err(GeometryError::Obj {
                            line: line_no,
                            message: format!("face index {i} is not 1-based positive"),
                        });
                    }
                    idx.push(i as usize - 1);
                }
                if idx.len() < 3 {
                    return Err(GeometryError::Obj {
                        line: line_no,
                        message: "face needs at least three vertices".into(),
                    });
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Mesh::new(name, vertices, faces)
}

pub fn read_obj(path: &Path) -> Result<Mesh, GeometryError> {
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_obj(&name, &text)
}

pub fn write_obj_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {}", mesh.name);
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn write_obj(mesh: &Mesh, path: &Path) -> Result<(), GeometryError> {
    std::fs::write(path, write_obj_string(mesh))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_cube() {
        let m = Mesh::unit_cube();
        let back = parse_obj("unit_cube", &write_obj_string(&m)).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.faces, m.faces);
    }

    #[test]
    fn quads_and_slashes() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/1 3/3/1 4/4/1\n";
        let m = parse_obj("q", text).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn bad_index_reports_line() {
        let err = parse_obj("x", "v 0 0 0\nf 1 2 x\n").unwrap_err();
        assert!(matches!(err, GeometryError::Obj { line: 2, .. }));
        assert!(matches!(
            parse_obj("x", "v 0 0 0\nf 1 2 3\n"),
            Err(GeometryError::IndexOutOfRange { .. })
        ));
    }
}
