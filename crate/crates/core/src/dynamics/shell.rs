//! Thin shells: constant-strain membrane triangles, dihedral hinge bending
//! and a lift/drag air model.
//!
//! Membrane: the stable neo-Hookean energy applied to the 3×2 deformation
//! gradient of each triangle, `J` being the area ratio `|F₀ × F₁|`.
//!
//! Bending, per interior edge: `fᵢ = −k_b·|e|·sin((θ − θ₀)/2 + a)·dᵢ` where
//! `θ` is the signed angle between the two face normals, `θ₀` its rest value,
//! `a` the edge activation and `dᵢ = ∂θ/∂xᵢ` the hinge directions of
//! Bridson et al.
//!
//! Air: for relative velocity `r = v̄ − wind` and unit normal `n`
//! (`vₙ = r·n`), each triangle receives
//! `A·[−c_d |vₙ| vₙ n + c_l vₙ (vₙ r − |r|² n)]`, split evenly over its
//! vertices. The lift term is perpendicular to `r` and vanishes for flow
//! along or across the face.

use nalgebra::{Matrix2, Matrix3x2};
use serde::{Deserialize, Serialize};

use crate::math::{cross_adjoint, normalize_adjoint, Vec3};
use crate::mesh::TriShellMesh;

pub type Mat32 = Matrix3x2<f64>;

/// `d/(d+1)` for a two dimensional element.
pub const SHELL_REST_OFFSET: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeroCoefficients {
    pub drag: f64,
    pub lift: f64,
}

impl Default for AeroCoefficients {
    fn default() -> Self {
        AeroCoefficients { drag: 1.0, lift: 0.1 }
    }
}

// ---------------------------------------------------------------- membrane

fn area_gradient(f: &Mat32) -> (Mat32, f64, Vec3) {
    let a: Vec3 = f.column(0).into();
    let b: Vec3 = f.column(1).into();
    let c = a.cross(&b);
    let j = c.norm();
    let n = c / j;
    (Mat32::from_columns(&[b.cross(&n), n.cross(&a)]), j, n)
}

pub fn membrane_pk1(f: &Mat32, mu: f64, lambda: f64) -> Mat32 {
    let ic = f.norm_squared();
    let (g, j, _) = area_gradient(f);
    let s1 = mu * (1.0 - 1.0 / (ic + 1.0));
    let s2 = lambda * (j - 1.0) - SHELL_REST_OFFSET * mu;
    f * s1 + g * s2
}

pub fn membrane_pk1_hvp(f: &Mat32, mu: f64, lambda: f64, df: &Mat32) -> Mat32 {
    let ic = f.norm_squared();
    let (g, j, n) = area_gradient(f);
    let a: Vec3 = f.column(0).into();
    let b: Vec3 = f.column(1).into();
    let da: Vec3 = df.column(0).into();
    let db: Vec3 = df.column(1).into();
    let s1 = mu * (1.0 - 1.0 / (ic + 1.0));
    let s2 = lambda * (j - 1.0) - SHELL_REST_OFFSET * mu;
    let dic = 2.0 * f.component_mul(df).sum();
    let dj = g.component_mul(df).sum();
    let dc = da.cross(&b) + a.cross(&db);
    let dn = (dc - n * n.dot(&dc)) / j;
    let dg = Mat32::from_columns(&[db.cross(&n) + b.cross(&dn), dn.cross(&a) + n.cross(&da)]);
    df * s1 + f * (mu * dic / (ic + 1.0).powi(2)) + g * (lambda * dj) + dg * s2
}

pub fn membrane_energy_density(f: &Mat32, mu: f64, lambda: f64) -> f64 {
    let ic = f.norm_squared();
    let (_, j, _) = area_gradient(f);
    let alpha = 1.0 + SHELL_REST_OFFSET * mu / lambda;
    0.5 * mu * (ic - 2.0) + 0.5 * lambda * (j - alpha).powi(2) - 0.5 * mu * (ic + 1.0).ln()
}

pub fn triangle_forces(x: &[Vec3; 3], rest_inv: &Matrix2<f64>, area: f64, mu: f64, lambda: f64) -> [Vec3; 3] {
    let ds = Mat32::from_columns(&[x[1] - x[0], x[2] - x[0]]);
    let f = ds * rest_inv;
    let h = membrane_pk1(&f, mu, lambda) * rest_inv.transpose() * (-area);
    let f1: Vec3 = h.column(0).into();
    let f2: Vec3 = h.column(1).into();
    [-(f1 + f2), f1, f2]
}

#[derive(Debug, Clone, Copy)]
pub struct TriangleAdjoint {
    pub x: [Vec3; 3],
    pub mu: f64,
    pub lambda: f64,
}

pub fn triangle_forces_adjoint(
    x: &[Vec3; 3],
    rest_inv: &Matrix2<f64>,
    area: f64,
    mu: f64,
    lambda: f64,
    f_bar: &[Vec3; 3],
) -> TriangleAdjoint {
    let ds = Mat32::from_columns(&[x[1] - x[0], x[2] - x[0]]);
    let f = ds * rest_inv;
    let h_bar = Mat32::from_columns(&[f_bar[1] - f_bar[0], f_bar[2] - f_bar[0]]);
    let p_bar = h_bar * rest_inv * (-area);
    let ic = f.norm_squared();
    let (g, j, _) = area_gradient(&f);
    let g_dot = g.component_mul(&p_bar).sum();
    let mu_bar = (1.0 - 1.0 / (ic + 1.0)) * f.component_mul(&p_bar).sum() - SHELL_REST_OFFSET * g_dot;
    let lambda_bar = (j - 1.0) * g_dot;
    let ds_bar = membrane_pk1_hvp(&f, mu, lambda, &p_bar) * rest_inv.transpose();
    let d1: Vec3 = ds_bar.column(0).into();
    let d2: Vec3 = ds_bar.column(1).into();
    TriangleAdjoint { x: [-(d1 + d2), d1, d2], mu: mu_bar, lambda: lambda_bar }
}

// ----------------------------------------------------------------- bending

/// Signed angle between the normals of the faces `(w1, e0, e1)` and
/// `(w2, e1, e0)`; zero when the hinge is flat.
pub fn dihedral_angle(w1: Vec3, w2: Vec3, e0: Vec3, e1: Vec3) -> f64 {
    let n1 = (e0 - w1).cross(&(e1 - w1));
    let n2 = (e1 - w2).cross(&(e0 - w2));
    let e = (e1 - e0).normalize();
    n2.cross(&n1).dot(&e).atan2(n1.dot(&n2))
}

struct Hinge {
    n1: Vec3,
    n2: Vec3,
    m1: Vec3,
    m2: Vec3,
    e_hat: Vec3,
    len: f64,
    a13: f64,
    a23: f64,
    a31: f64,
    a32: f64,
    d: [Vec3; 4],
    theta: f64,
}

/// `x = [w1, w2, e0, e1]`.
fn hinge(x: &[Vec3; 4]) -> Hinge {
    let [x1, x2, x3, x4] = *x;
    let n1 = (x3 - x1).cross(&(x4 - x1));
    let n2 = (x4 - x2).cross(&(x3 - x2));
    let e = x4 - x3;
    let len = e.norm();
    let e_hat = e / len;
    let m1 = n1 / n1.norm_squared();
    let m2 = n2 / n2.norm_squared();
    let a13 = (x1 - x4).dot(&e_hat);
    let a23 = (x2 - x4).dot(&e_hat);
    let a31 = (x3 - x1).dot(&e_hat);
    let a32 = (x3 - x2).dot(&e_hat);
    let d = [m1 * len, m2 * len, m1 * a13 + m2 * a23, m1 * a31 + m2 * a32];
    let theta = n2.cross(&n1).dot(&e_hat).atan2(n1.dot(&n2));
    Hinge { n1, n2, m1, m2, e_hat, len, a13, a23, a31, a32, d, theta }
}

/// Hinge directions `∂θ/∂xᵢ` for `x = [w1, w2, e0, e1]`.
pub fn dihedral_gradient(x: &[Vec3; 4]) -> [Vec3; 4] {
    hinge(x).d
}

pub fn bending_forces(x: &[Vec3; 4], rest_angle: f64, stiffness: f64, act: f64) -> [Vec3; 4] {
    let h = hinge(x);
    let phase = 0.5 * (h.theta - rest_angle) + act;
    let c = -stiffness * h.len * phase.sin();
    h.d.map(|d| d * c)
}

#[derive(Debug, Clone, Copy)]
pub struct BendingAdjoint {
    pub x: [Vec3; 4],
    pub stiffness: f64,
    pub act: f64,
}

pub fn bending_forces_adjoint(
    x: &[Vec3; 4],
    rest_angle: f64,
    stiffness: f64,
    act: f64,
    f_bar: &[Vec3; 4],
) -> BendingAdjoint {
    let h = hinge(x);
    let [x1, x2, x3, x4] = *x;
    let phase = 0.5 * (h.theta - rest_angle) + act;
    let (sp, cp) = phase.sin_cos();
    let c = -stiffness * h.len * sp;

    let c_bar: f64 = (0..4).map(|i| f_bar[i].dot(&h.d[i])).sum();
    let d_bar = f_bar.map(|f| f * c);
    let stiffness_bar = -c_bar * h.len * sp;
    let mut len_bar = -c_bar * stiffness * sp;
    let phase_bar = -c_bar * stiffness * h.len * cp;
    let act_bar = phase_bar;
    let theta_bar = 0.5 * phase_bar;

    let mut xb = h.d.map(|d| d * theta_bar);

    let m1_bar = d_bar[0] * h.len + d_bar[2] * h.a13 + d_bar[3] * h.a31;
    let m2_bar = d_bar[1] * h.len + d_bar[2] * h.a23 + d_bar[3] * h.a32;
    len_bar += h.m1.dot(&d_bar[0]) + h.m2.dot(&d_bar[1]);
    let a13_bar = h.m1.dot(&d_bar[2]);
    let a23_bar = h.m2.dot(&d_bar[2]);
    let a31_bar = h.m1.dot(&d_bar[3]);
    let a32_bar = h.m2.dot(&d_bar[3]);

    let e_hat_bar = (x1 - x4) * a13_bar + (x2 - x4) * a23_bar + (x3 - x1) * a31_bar + (x3 - x2) * a32_bar;
    let eh = h.e_hat;
    xb[0] += eh * (a13_bar - a31_bar);
    xb[1] += eh * (a23_bar - a32_bar);
    xb[2] += eh * (a31_bar + a32_bar);
    xb[3] -= eh * (a13_bar + a23_bar);

    let q1 = h.n1.norm_squared();
    let q2 = h.n2.norm_squared();
    let n1_bar = m1_bar / q1 - h.n1 * (2.0 * h.n1.dot(&m1_bar) / (q1 * q1));
    let n2_bar = m2_bar / q2 - h.n2 * (2.0 * h.n2.dot(&m2_bar) / (q2 * q2));

    let e = x4 - x3;
    let e_bar = normalize_adjoint(&e, &e_hat_bar) + eh * len_bar;
    xb[3] += e_bar;
    xb[2] -= e_bar;

    let (u1_bar, w1_bar) = cross_adjoint(&(x3 - x1), &(x4 - x1), &n1_bar);
    xb[2] += u1_bar;
    xb[3] += w1_bar;
    xb[0] -= u1_bar + w1_bar;
    let (u2_bar, w2_bar) = cross_adjoint(&(x4 - x2), &(x3 - x2), &n2_bar);
    xb[3] += u2_bar;
    xb[2] += w2_bar;
    xb[1] -= u2_bar + w2_bar;

    BendingAdjoint { x: xb, stiffness: stiffness_bar, act: act_bar }
}

// --------------------------------------------------------------------- air

pub fn aero_force(x: &[Vec3; 3], v: &[Vec3; 3], wind: &Vec3, coeff: &AeroCoefficients) -> Vec3 {
    let c = (x[1] - x[0]).cross(&(x[2] - x[0]));
    let cn = c.norm();
    if cn < 1e-24 {
        return Vec3::zeros();
    }
    let area = 0.5 * cn;
    let n = c / cn;
    let r = (v[0] + v[1] + v[2]) / 3.0 - wind;
    let vn = r.dot(&n);
    let rr = r.norm_squared();
    let alpha_n = -coeff.drag * vn.abs() * vn - coeff.lift * vn * rr;
    let beta = coeff.lift * vn * vn;
    (n * alpha_n + r * beta) * area
}

#[derive(Debug, Clone, Copy)]
pub struct AeroAdjoint {
    pub x: [Vec3; 3],
    pub v: [Vec3; 3],
    pub wind: Vec3,
}

/// Adjoint of [`aero_force`] given the cotangent of the total triangle force.
pub fn aero_force_adjoint(
    x: &[Vec3; 3],
    v: &[Vec3; 3],
    wind: &Vec3,
    coeff: &AeroCoefficients,
    force_bar: &Vec3,
) -> AeroAdjoint {
    let u = x[1] - x[0];
    let w = x[2] - x[0];
    let c = u.cross(&w);
    let cn = c.norm();
    if cn < 1e-24 {
        return AeroAdjoint { x: [Vec3::zeros(); 3], v: [Vec3::zeros(); 3], wind: Vec3::zeros() };
    }
    let area = 0.5 * cn;
    let n = c / cn;
    let r = (v[0] + v[1] + v[2]) / 3.0 - wind;
    let vn = r.dot(&n);
    let rr = r.norm_squared();
    let alpha_n = -coeff.drag * vn.abs() * vn - coeff.lift * vn * rr;
    let beta = coeff.lift * vn * vn;

    let area_bar = force_bar.dot(&(n * alpha_n + r * beta));
    let alpha_bar = area * force_bar.dot(&n);
    let beta_bar = area * force_bar.dot(&r);
    let mut n_bar = force_bar * (area * alpha_n);
    let mut r_bar = force_bar * (area * beta);

    let vn_bar = alpha_bar * (-2.0 * coeff.drag * vn.abs() - coeff.lift * rr) + beta_bar * 2.0 * coeff.lift * vn;
    let rr_bar = alpha_bar * (-coeff.lift * vn);
    r_bar += n * vn_bar + r * (2.0 * rr_bar);
    n_bar += r * vn_bar;

    let c_bar = normalize_adjoint(&c, &n_bar) + n * (0.5 * area_bar);
    let (u_bar, w_bar) = cross_adjoint(&u, &w, &c_bar);
    let vb = r_bar / 3.0;
    AeroAdjoint { x: [-(u_bar + w_bar), u_bar, w_bar], v: [vb; 3], wind: -r_bar }
}

// -------------------------------------------------------------- assembled

/// Material and actuation inputs of the assembled shell force.
pub struct ShellInputs<'a> {
    pub tri_mu: &'a [f64],
    pub tri_lambda: &'a [f64],
    pub edge_stiffness: &'a [f64],
    pub edge_act: &'a [f64],
    pub wind: Vec3,
    pub aero: AeroCoefficients,
}

fn tri3(a: &[Vec3], t: &[usize; 3]) -> [Vec3; 3] {
    [a[t[0]], a[t[1]], a[t[2]]]
}

fn hinge4(a: &[Vec3], e: &crate::mesh::HingeEdge) -> [Vec3; 4] {
    [a[e.wings[0]], a[e.wings[1]], a[e.edge[0]], a[e.edge[1]]]
}

fn hinge_index(e: &crate::mesh::HingeEdge) -> [usize; 4] {
    [e.wings[0], e.wings[1], e.edge[0], e.edge[1]]
}

/// Membrane, bending and air forces accumulated into `out` in element order.
pub fn shell_forces(x: &[Vec3], v: &[Vec3], mesh: &TriShellMesh, inp: &ShellInputs, out: &mut [Vec3]) {
    for (e, t) in mesh.tris.iter().enumerate() {
        let f = triangle_forces(&tri3(x, t), &mesh.rest_inv[e], mesh.rest_area[e], inp.tri_mu[e], inp.tri_lambda[e]);
        for k in 0..3 {
            out[t[k]] += f[k];
        }
    }
    for (e, edge) in mesh.edges.iter().enumerate() {
        let f = bending_forces(&hinge4(x, edge), edge.rest_angle, inp.edge_stiffness[e], inp.edge_act[e]);
        for (k, i) in hinge_index(edge).iter().enumerate() {
            out[*i] += f[k];
        }
    }
    if inp.aero.drag != 0.0 || inp.aero.lift != 0.0 {
        for t in &mesh.tris {
            let f = aero_force(&tri3(x, t), &tri3(v, t), &inp.wind, &inp.aero) / 3.0;
            for &i in t {
                out[i] += f;
            }
        }
    }
}

/// Cotangent sinks for [`shell_forces_adjoint`].
pub struct ShellGrads<'a> {
    pub x: &'a mut [Vec3],
    pub v: &'a mut [Vec3],
    pub tri_mu: &'a mut [f64],
    pub tri_lambda: &'a mut [f64],
    pub edge_stiffness: &'a mut [f64],
    pub edge_act: &'a mut [f64],
    pub wind: &'a mut Vec3,
}

pub fn shell_forces_adjoint(
    x: &[Vec3],
    v: &[Vec3],
    mesh: &TriShellMesh,
    inp: &ShellInputs,
    f_bar: &[Vec3],
    g: &mut ShellGrads,
) {
    for (e, t) in mesh.tris.iter().enumerate() {
        let adj = triangle_forces_adjoint(
            &tri3(x, t),
            &mesh.rest_inv[e],
            mesh.rest_area[e],
            inp.tri_mu[e],
            inp.tri_lambda[e],
            &tri3(f_bar, t),
        );
        for k in 0..3 {
            g.x[t[k]] += adj.x[k];
        }
        g.tri_mu[e] += adj.mu;
        g.tri_lambda[e] += adj.lambda;
    }
    for (e, edge) in mesh.edges.iter().enumerate() {
        let idx = hinge_index(edge);
        let fb = [f_bar[idx[0]], f_bar[idx[1]], f_bar[idx[2]], f_bar[idx[3]]];
        let adj = bending_forces_adjoint(&hinge4(x, edge), edge.rest_angle, inp.edge_stiffness[e], inp.edge_act[e], &fb);
        for k in 0..4 {
            g.x[idx[k]] += adj.x[k];
        }
        g.edge_stiffness[e] += adj.stiffness;
        g.edge_act[e] += adj.act;
    }
    if inp.aero.drag != 0.0 || inp.aero.lift != 0.0 {
        for t in &mesh.tris {
            let fb = (f_bar[t[0]] + f_bar[t[1]] + f_bar[t[2]]) / 3.0;
            let adj = aero_force_adjoint(&tri3(x, t), &tri3(v, t), &inp.wind, &inp.aero, &fb);
            for k in 0..3 {
                g.x[t[k]] += adj.x[k];
                g.v[t[k]] += adj.v[k];
            }
            *g.wind += adj.wind;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::vec3;

    fn flat_hinge() -> [Vec3; 4] {
        [vec3(0.5, 0.0, 1.0), vec3(0.5, 0.0, -1.0), vec3(0.0, 0.0, 0.0), vec3(1.0, 0.0, 0.0)]
    }

    #[test]
    fn hinge_directions_are_angle_gradient() {
        let x = [vec3(0.4, 0.3, 1.0), vec3(0.6, -0.2, -0.9), vec3(0.0, 0.05, 0.0), vec3(1.1, 0.0, 0.1)];
        let d = dihedral_gradient(&x);
        let h = 1e-6;
        for i in 0..4 {
            for c in 0..3 {
                let mut p = x;
                let mut m = x;
                p[i][c] += h;
                m[i][c] -= h;
                let fd = (dihedral_angle(p[0], p[1], p[2], p[3]) - dihedral_angle(m[0], m[1], m[2], m[3])) / (2.0 * h);
                assert!((fd - d[i][c]).abs() < 1e-7, "vertex {i} axis {c}: {fd} vs {}", d[i][c]);
            }
        }
    }

    #[test]
    fn flat_rest_hinge_has_no_bending_force() {
        let x = flat_hinge();
        let rest = dihedral_angle(x[0], x[1], x[2], x[3]);
        assert!(rest.abs() < 1e-15);
        let f = bending_forces(&x, rest, 5.0, 0.0);
        assert!(f.iter().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn bending_work_along_dihedral_coordinate() {
        // Rotating a wing about the hinge axis by dθ moves it along d₁ with
        // d₁·(∂x₁/∂θ) = 1, so the work is −k_b|e| sin(δ/2 + a) dθ.
        let x = flat_hinge();
        let (kb, act) = (3.0, 0.2);
        let rot = |angle: f64| {
            let mut y = x;
            let r = nalgebra::Rotation3::from_axis_angle(&Vec3::x_axis(), angle);
            y[0] = r * x[0];
            y
        };
        for angle in [0.3, -0.5, 1.0] {
            let y = rot(angle);
            let theta = dihedral_angle(y[0], y[1], y[2], y[3]);
            let f = bending_forces(&y, 0.0, kb, act);
            let h = 1e-6;
            let dx = (rot(angle + h)[0] - rot(angle - h)[0]) / (2.0 * h);
            let dtheta = (dihedral_angle(rot(angle + h)[0], y[1], y[2], y[3])
                - dihedral_angle(rot(angle - h)[0], y[1], y[2], y[3]))
                / (2.0 * h);
            let work = f[0].dot(&dx);
            let expected = -kb * 1.0 * (0.5 * theta + act).sin() * dtheta;
            assert!((work - expected).abs() / expected.abs() <= 1e-4, "{work} vs {expected}");
        }
    }

    #[test]
    fn still_air_has_no_force() {
        let x = [Vec3::zeros(), Vec3::x(), Vec3::z()];
        let f = aero_force(&x, &[Vec3::zeros(); 3], &Vec3::zeros(), &AeroCoefficients::default());
        assert_eq!(f, Vec3::zeros());
    }

    #[test]
    fn lift_is_perpendicular_to_flow() {
        let coeff = AeroCoefficients { drag: 0.0, lift: 0.7 };
        let x = [Vec3::zeros(), Vec3::x(), Vec3::z()];
        let v = [vec3(1.0, -0.4, 0.3); 3];
        let f = aero_force(&x, &v, &Vec3::zeros(), &coeff);
        assert!(f.norm() > 0.0);
        assert!(f.dot(&v[0]).abs() < 1e-12);
    }

    #[test]
    fn membrane_rest_state_is_force_free() {
        let x = [Vec3::zeros(), Vec3::x(), vec3(0.3, 0.0, 0.8)];
        let mesh = TriShellMesh::new(&x, &[[0, 1, 2]]).unwrap();
        let f = triangle_forces(&x, &mesh.rest_inv[0], mesh.rest_area[0], 100.0, 50.0);
        assert!(f.iter().all(|v| v.norm() < 1e-10));
    }

    #[test]
    fn membrane_force_matches_energy_fd() {
        let x = [Vec3::zeros(), Vec3::x(), vec3(0.3, 0.0, 0.8)];
        let mesh = TriShellMesh::new(&x, &[[0, 1, 2]]).unwrap();
        let (ri, area) = (mesh.rest_inv[0], mesh.rest_area[0]);
        let y = [vec3(0.0, 0.1, 0.0), vec3(1.2, 0.0, 0.1), vec3(0.2, -0.1, 0.9)];
        let energy = |p: &[Vec3; 3]| {
            let ds = Mat32::from_columns(&[p[1] - p[0], p[2] - p[0]]);
            area * membrane_energy_density(&(ds * ri), 100.0, 50.0)
        };
        let f = triangle_forces(&y, &ri, area, 100.0, 50.0);
        let h = 1e-6;
        for i in 0..3 {
            for c in 0..3 {
                let mut p = y;
                let mut m = y;
                p[i][c] += h;
                m[i][c] -= h;
                let fd = -(energy(&p) - energy(&m)) / (2.0 * h);
                assert!((fd - f[i][c]).abs() / fd.abs().max(1.0) < 1e-6);
            }
        }
    }
}
