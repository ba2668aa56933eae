//! Mesh files: Wavefront OBJ surfaces and a plain-text tetrahedral format.
//!
//! The `.tet` format is line based. `v x y z` declares a vertex, `t a b c d`
//! a tetrahedron with zero-based vertex indices; `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, SimError};
use crate::math::Vec3;
use crate::mesh::{SurfaceMesh, TetMesh};

/// Vertices and tetrahedra as stored in a `.tet` file.
#[derive(Debug, Clone, PartialEq)]
pub struct TetFile {
    pub vertices: Vec<Vec3>,
    pub tets: Vec<[usize; 4]>,
}

pub fn parse_tet(text: &str) -> Result<TetFile> {
    let mut out = TetFile { vertices: Vec::new(), tets: Vec::new() };
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        let Some(tag) = it.next() else { continue };
        let rest: Vec<&str> = it.collect();
        let bad = || SimError::Mesh(format!("line {}: malformed `{tag}` record", n + 1));
        match tag {
            "v" => {
                let c: Vec<f64> = rest.iter().map(|s| s.parse().map_err(|_| bad())).collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(bad());
                }
                out.vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            "t" => {
                let c: Vec<usize> = rest.iter().map(|s| s.parse().map_err(|_| bad())).collect::<Result<_>>()?;
                if c.len() != 4 {
                    return Err(bad());
                }
                out.tets.push([c[0], c[1], c[2], c[3]]);
            }
            _ => return Err(SimError::Mesh(format!("line {}: unknown record `{tag}`", n + 1))),
        }
    }
    let n = out.vertices.len();
    if let Some(t) = out.tets.iter().find(|t| t.iter().any(|&i| i >= n)) {
        return Err(SimError::Mesh(format!("tet {t:?} references a missing vertex")));
    }
    Ok(out)
}

pub fn format_tet(vertices: &[Vec3], tets: &[[usize; 4]]) -> String {
    let mut s = String::new();
    for v in vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in tets {
        let _ = writeln!(s, "t {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    s
}

pub fn load_tet(path: &Path) -> Result<TetFile> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Mesh(format!("{}: {e}", path.display())))?;
    parse_tet(&text)
}

/// Triangle surface from an OBJ file (all groups merged, polygons fanned)
/// or the boundary of a `.tet` mesh.
pub fn load_surface(path: &Path) -> Result<SurfaceMesh> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tet") => {
            let f = load_tet(path)?;
            let mesh = TetMesh::new(&f.vertices, &f.tets)?;
            Ok(compact(&f.vertices, &mesh.boundary_faces()))
        }
        Some("obj") => {
            let opts = tobj::LoadOptions { triangulate: true, single_index: true, ..Default::default() };
            let (models, _) = tobj::load_obj(path, &opts).map_err(|e| SimError::Mesh(format!("{}: {e}", path.display())))?;
            let mut out = SurfaceMesh::default();
            for m in models {
                let base = out.vertices.len();
                let p = &m.mesh.positions;
                out.vertices.extend(p.chunks(3).map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64)));
                out.triangles.extend(m.mesh.indices.chunks(3).map(|c| [base + c[0] as usize, base + c[1] as usize, base + c[2] as usize]));
            }
            if out.triangles.is_empty() {
                return Err(SimError::Mesh(format!("{}: no faces", path.display())));
            }
            Ok(out)
        }
        _ => Err(SimError::Mesh(format!("{}: expected an .obj or .tet file", path.display()))),
    }
}

/// Keeps only the vertices referenced by `tris`, renumbered in first-use
/// order.
fn compact(vertices: &[Vec3], tris: &[[usize; 3]]) -> SurfaceMesh {
    let mut map = vec![usize::MAX; vertices.len()];
    let mut out = SurfaceMesh::default();
    for t in tris {
        let t = t.map(|i| {
            if map[i] == usize::MAX {
                map[i] = out.vertices.len();
                out.vertices.push(vertices[i]);
            }
            map[i]
        });
        out.triangles.push(t);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::box_tet_grid;

    #[test]
    fn tet_text_round_trip() {
        let (v, t) = box_tet_grid([2, 1, 1], Vec3::new(2.0, 1.0, 1.0), Vec3::zeros());
        let f = parse_tet(&format_tet(&v, &t)).unwrap();
        assert_eq!(f.vertices, v);
        assert_eq!(f.tets, t);
    }

    #[test]
    fn rejects_dangling_index() {
        assert!(parse_tet("v 0 0 0\nt 0 1 2 3\n").is_err());
        assert!(parse_tet("v 0 0\n").is_err());
        assert!(parse_tet("q 1\n").is_err());
    }

    #[test]
    fn obj_and_tet_surfaces() {
        let dir = tempfile::tempdir().unwrap();
        let obj = dir.path().join("quad.obj");
        std::fs::write(&obj, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
        let s = load_surface(&obj).unwrap();
        assert_eq!(s.vertices.len(), 4);
        assert_eq!(s.triangles.len(), 2);

        let (v, t) = box_tet_grid([1, 1, 1], Vec3::repeat(1.0), Vec3::zeros());
        let tet = dir.path().join("cube.tet");
        std::fs::write(&tet, format_tet(&v, &t)).unwrap();
        let s = load_surface(&tet).unwrap();
        assert_eq!(s.vertices.len(), 8);
        assert_eq!(s.triangles.len(), 12);
    }
}
