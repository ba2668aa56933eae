//! Simulation meshes (tetrahedral solids, triangle shells) and the
//! primitive generators used by the built-in scenes.

use std::collections::BTreeMap;

use nalgebra::Matrix2;

use crate::dynamics::shell::dihedral_angle;
use crate::error::{Result, SimError};
use crate::math::{Mat3, Vec3};

/// Constant-strain tetrahedra over a shared particle array.
#[derive(Debug, Clone)]
pub struct TetMesh {
    pub tets: Vec<[usize; 4]>,
    /// Inverse of the rest-shape matrix `[x1-x0, x2-x0, x3-x0]`.
    pub rest_inv: Vec<Mat3>,
    pub rest_volume: Vec<f64>,
}

impl TetMesh {
    /// Builds rest-state data. Negatively oriented elements are flipped so
    /// every rest volume is positive; degenerate elements are rejected.
    pub fn new(rest: &[Vec3], tets: &[[usize; 4]]) -> Result<Self> {
        let mut out = TetMesh {
            tets: Vec::with_capacity(tets.len()),
            rest_inv: Vec::with_capacity(tets.len()),
            rest_volume: Vec::with_capacity(tets.len()),
        };
        for (e, t) in tets.iter().enumerate() {
            if t.iter().any(|&i| i >= rest.len()) {
                return Err(SimError::Mesh(format!("tet {e} references a missing vertex")));
            }
            let mut t = *t;
            let mut dm = rest_shape(rest, &t);
            if dm.determinant() < 0.0 {
                t.swap(2, 3);
                dm = rest_shape(rest, &t);
            }
            let det = dm.determinant();
            if det <= 1e-15 {
                return Err(SimError::Mesh(format!("tet {e} is degenerate (volume {det:e})")));
            }
            let inv = dm
                .try_inverse()
                .ok_or_else(|| SimError::Mesh(format!("tet {e} rest shape is singular")))?;
            out.tets.push(t);
            out.rest_inv.push(inv);
            out.rest_volume.push(det / 6.0);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.tets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tets.is_empty()
    }

    /// Outward-facing boundary triangles (faces owned by exactly one tet).
    pub fn boundary_faces(&self) -> Vec<[usize; 3]> {
        let mut count: BTreeMap<[usize; 3], (usize, [usize; 3])> = BTreeMap::new();
        for t in &self.tets {
            let [a, b, c, d] = *t;
            for f in [[a, c, b], [a, b, d], [a, d, c], [b, c, d]] {
                let mut key = f;
                key.sort_unstable();
                count.entry(key).or_insert((0, f)).0 += 1;
            }
        }
        count.into_values().filter(|(n, _)| *n == 1).map(|(_, f)| f).collect()
    }

    /// Lumped per-vertex volume (a quarter of each incident tet).
    pub fn lumped_volume(&self, vertex_count: usize) -> Vec<f64> {
        let mut v = vec![0.0; vertex_count];
        for (t, vol) in self.tets.iter().zip(&self.rest_volume) {
            for &i in t {
                v[i] += vol / 4.0;
            }
        }
        v
    }
}

fn rest_shape(x: &[Vec3], t: &[usize; 4]) -> Mat3 {
    Mat3::from_columns(&[x[t[1]] - x[t[0]], x[t[2]] - x[t[0]], x[t[3]] - x[t[0]]])
}

/// Interior edge of a shell: the shared edge plus the two opposite (wing)
/// vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HingeEdge {
    pub wings: [usize; 2],
    pub edge: [usize; 2],
    pub rest_angle: f64,
}

#[derive(Debug, Clone)]
pub struct TriShellMesh {
    pub tris: Vec<[usize; 3]>,
    /// Inverse of the 2D rest-shape matrix in each triangle's local frame.
    pub rest_inv: Vec<Matrix2<f64>>,
    pub rest_area: Vec<f64>,
    pub edges: Vec<HingeEdge>,
}

impl TriShellMesh {
    pub fn new(rest: &[Vec3], tris: &[[usize; 3]]) -> Result<Self> {
        let mut rest_inv = Vec::with_capacity(tris.len());
        let mut rest_area = Vec::with_capacity(tris.len());
        let mut kept = Vec::with_capacity(tris.len());
        let mut warned = false;
        for (e, t) in tris.iter().enumerate() {
            if t.iter().any(|&i| i >= rest.len()) {
                return Err(SimError::Mesh(format!("triangle {e} references a missing vertex")));
            }
            let e1 = rest[t[1]] - rest[t[0]];
            let e2 = rest[t[2]] - rest[t[0]];
            let area = 0.5 * e1.cross(&e2).norm();
            if area < 1e-12 {
                if !warned {
                    log::warn!("skipping degenerate shell triangle {e} (area {area:e})");
                    warned = true;
                }
                continue;
            }
            let a1 = e1.normalize();
            let n = e1.cross(&e2).normalize();
            let a2 = n.cross(&a1);
            let dm = Matrix2::new(a1.dot(&e1), a1.dot(&e2), a2.dot(&e1), a2.dot(&e2));
            let inv = dm.try_inverse().ok_or_else(|| {
                SimError::Mesh(format!("triangle {e} rest shape is singular"))
            })?;
            kept.push(*t);
            rest_inv.push(inv);
            rest_area.push(area);
        }

        let mut edge_map: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (ti, t) in kept.iter().enumerate() {
            for k in 0..3 {
                let a = t[k];
                let b = t[(k + 1) % 3];
                let opp = t[(k + 2) % 3];
                edge_map.entry((a.min(b), a.max(b))).or_default().push((ti, opp));
            }
        }
        let mut edges = Vec::new();
        for ((a, b), owners) in edge_map {
            match owners.len() {
                1 => {}
                2 => {
                    let wings = [owners[0].1, owners[1].1];
                    let edge = [a, b];
                    let rest_angle =
                        dihedral_angle(rest[wings[0]], rest[wings[1]], rest[edge[0]], rest[edge[1]]);
                    edges.push(HingeEdge { wings, edge, rest_angle });
                }
                n => {
                    return Err(SimError::Mesh(format!(
                        "edge ({a},{b}) is shared by {n} triangles"
                    )))
                }
            }
        }
        Ok(TriShellMesh { tris: kept, rest_inv, rest_area, edges })
    }

    pub fn len(&self) -> usize {
        self.tris.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    pub fn lumped_area(&self, vertex_count: usize) -> Vec<f64> {
        let mut v = vec![0.0; vertex_count];
        for (t, a) in self.tris.iter().zip(&self.rest_area) {
            for &i in t {
                v[i] += a / 3.0;
            }
        }
        v
    }
}

/// Vertices and triangles of a closed surface.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfaceMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

/// Axis-aligned box centered at the origin with outward-wound faces.
pub fn box_surface(size: Vec3) -> SurfaceMesh {
    let h = size / 2.0;
    let mut vertices = Vec::with_capacity(8);
    for i in 0..8 {
        let sx = if i & 1 == 0 { -h.x } else { h.x };
        let sy = if i & 2 == 0 { -h.y } else { h.y };
        let sz = if i & 4 == 0 { -h.z } else { h.z };
        vertices.push(Vec3::new(sx, sy, sz));
    }
    let quads = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let mut triangles = Vec::with_capacity(12);
    for q in quads {
        triangles.push([q[0], q[1], q[2]]);
        triangles.push([q[0], q[2], q[3]]);
    }
    SurfaceMesh { vertices, triangles }
}

/// Tetrahedralized box: `cells` hexahedra per axis, each split into six
/// tets sharing the main diagonal so neighbouring cells conform.
pub fn box_tet_grid(cells: [usize; 3], size: Vec3, origin: Vec3) -> (Vec<Vec3>, Vec<[usize; 4]>) {
    let [nx, ny, nz] = cells;
    let idx = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
    let mut verts = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                verts.push(
                    origin
                        + Vec3::new(
                            size.x * i as f64 / nx as f64,
                            size.y * j as f64 / ny as f64,
                            size.z * k as f64 / nz as f64,
                        ),
                );
            }
        }
    }
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tets = Vec::with_capacity(nx * ny * nz * 6);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for p in perms {
                    let mut c = [i, j, k];
                    let mut t = [idx(c[0], c[1], c[2]); 4];
                    for (s, axis) in p.iter().enumerate() {
                        c[*axis] += 1;
                        t[s + 1] = idx(c[0], c[1], c[2]);
                    }
                    let dm = rest_shape(&verts, &t);
                    if dm.determinant() < 0.0 {
                        t.swap(2, 3);
                    }
                    tets.push(t);
                }
            }
        }
    }
    (verts, tets)
}

/// Cell counts for a box grid with roughly `target` tets and the given
/// aspect ratio.
pub fn grid_for_tet_count(target: usize, aspect: [f64; 3]) -> [usize; 3] {
    let cells = (target as f64 / 6.0).max(1.0);
    let vol: f64 = aspect.iter().product();
    let s = (cells / vol).cbrt();
    let mut best = [1, 1, 1];
    let mut best_err = f64::INFINITY;
    let base = aspect.map(|a| (a * s).max(1.0));
    for dx in -1..=1i64 {
        for dy in -1..=1i64 {
            for dz in -1..=1i64 {
                let c = [
                    (base[0].round() as i64 + dx).max(1) as usize,
                    (base[1].round() as i64 + dy).max(1) as usize,
                    (base[2].round() as i64 + dz).max(1) as usize,
                ];
                let n = (c[0] * c[1] * c[2] * 6) as f64;
                let err = (n - target as f64).abs();
                if err < best_err {
                    best_err = err;
                    best = c;
                }
            }
        }
    }
    best
}

/// Flat rectangular cloth in the XZ plane: `cells[0] × cells[1]` quads,
/// two triangles each.
pub fn cloth_grid(cells: [usize; 2], size: [f64; 2], origin: Vec3) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let [nx, nz] = cells;
    let idx = |i: usize, k: usize| k * (nx + 1) + i;
    let mut verts = Vec::with_capacity((nx + 1) * (nz + 1));
    for k in 0..=nz {
        for i in 0..=nx {
            verts.push(
                origin
                    + Vec3::new(size[0] * i as f64 / nx as f64, 0.0, size[1] * k as f64 / nz as f64),
            );
        }
    }
    let mut tris = Vec::with_capacity(nx * nz * 2);
    for k in 0..nz {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, k), idx(i + 1, k), idx(i + 1, k + 1), idx(i, k + 1));
            // Upward (+y) facing winding.
            tris.push([a, c, b]);
            tris.push([a, d, c]);
        }
    }
    (verts, tris)
}

/// Area-weighted inertia of a closed surface treated as a solid of unit
/// mass, about its centroid. Uses the tetrahedral decomposition against the
/// origin, so the surface must be closed and outward-wound.
pub fn unit_mass_inertia(mesh: &SurfaceMesh) -> (Vec3, Mat3) {
    let mut vol = 0.0;
    let mut com = Vec3::zeros();
    // Second moments ∫ x xᵀ dV
    let mut second = Mat3::zeros();
    for t in &mesh.triangles {
        let a = mesh.vertices[t[0]];
        let b = mesh.vertices[t[1]];
        let c = mesh.vertices[t[2]];
        let det = a.dot(&b.cross(&c));
        let v = det / 6.0;
        vol += v;
        com += v * (a + b + c) / 4.0;
        // ∫ over tet (0,a,b,c) of x xᵀ = det/120 · (Σ p pᵀ + (Σ p)(Σ p)ᵀ)
        let s = a + b + c;
        let sum_outer = a * a.transpose() + b * b.transpose() + c * c.transpose();
        second += (sum_outer + s * s.transpose()) * (det / 120.0);
    }
    com /= vol;
    let second_c = second / vol - com * com.transpose();
    let inertia = Mat3::identity() * second_c.trace() - second_c;
    (com, inertia)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_grid_volume_and_orientation() {
        let (v, t) = box_tet_grid([2, 3, 4], Vec3::new(1.0, 1.5, 2.0), Vec3::zeros());
        let mesh = TetMesh::new(&v, &t).unwrap();
        assert_eq!(mesh.len(), 2 * 3 * 4 * 6);
        let total: f64 = mesh.rest_volume.iter().sum();
        assert!((total - 3.0).abs() < 1e-12);
        assert!(mesh.rest_volume.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn boundary_faces_of_grid_are_closed_and_outward() {
        let (v, t) = box_tet_grid([2, 2, 2], Vec3::new(1.0, 1.0, 1.0), Vec3::zeros());
        let mesh = TetMesh::new(&v, &t).unwrap();
        let faces = mesh.boundary_faces();
        // 6 sides × 4 quads × 2 triangles
        assert_eq!(faces.len(), 48);
        let center = Vec3::new(0.5, 0.5, 0.5);
        for f in faces {
            let n = (v[f[1]] - v[f[0]]).cross(&(v[f[2]] - v[f[0]]));
            let c = (v[f[0]] + v[f[1]] + v[f[2]]) / 3.0;
            assert!(n.dot(&(c - center)) > 0.0);
        }
    }

    #[test]
    fn box_surface_is_outward() {
        let m = box_surface(Vec3::new(1.0, 2.0, 3.0));
        for f in &m.triangles {
            let v = &m.vertices;
            let n = (v[f[1]] - v[f[0]]).cross(&(v[f[2]] - v[f[0]]));
            let c = (v[f[0]] + v[f[1]] + v[f[2]]) / 3.0;
            assert!(n.dot(&c) > 0.0);
        }
    }

    #[test]
    fn unit_cube_inertia() {
        let m = box_surface(Vec3::new(1.0, 1.0, 1.0));
        let (com, i) = unit_mass_inertia(&m);
        assert!(com.norm() < 1e-12);
        assert!((i - Mat3::identity() / 6.0).norm() < 1e-12);
    }

    #[test]
    fn cloth_grid_hinges() {
        let (v, t) = cloth_grid([4, 8], [1.0, 1.0], Vec3::zeros());
        assert_eq!(t.len(), 64);
        let shell = TriShellMesh::new(&v, &t).unwrap();
        // interior edges of a 4×8 grid: horizontal + vertical + diagonals
        let interior = 4 * 7 + 3 * 8 + 32;
        assert_eq!(shell.edges.len(), interior);
        assert!(shell.edges.iter().all(|e| e.rest_angle.abs() < 1e-12));
    }

    #[test]
    fn non_manifold_edge_rejected() {
        let v = vec![
            Vec3::zeros(),
            Vec3::x(),
            Vec3::y(),
            Vec3::z(),
            -Vec3::y(),
        ];
        let t = [[0, 1, 2], [0, 1, 3], [0, 1, 4]];
        assert!(TriShellMesh::new(&v, &t).is_err());
    }

    #[test]
    fn grid_for_tet_count_is_close() {
        for n in [100, 1000, 10000] {
            let c = grid_for_tet_count(n, [4.0, 1.0, 1.0]);
            let got = c[0] * c[1] * c[2] * 6;
            assert!((got as f64 - n as f64).abs() / (n as f64) < 0.35, "{n} -> {got}");
        }
    }
}
