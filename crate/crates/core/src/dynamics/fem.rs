//! Constant-strain tetrahedral FEM with the stable neo-Hookean energy
//!
//! `Ψ(F) = μ/2 (I_C − 3) + λ/2 (J − α)² − μ/2 log(I_C + 1)`
//!
//! with `I_C = tr(FᵀF)`, `J = det F` and `α = 1 + a + ¾·μ/λ`. The `¾·μ/λ`
//! offset makes `F = I` stress free; `a` is the element's activation
//! (passive elements have `a = 0`). Nodal forces are `−V ∂Ψ/∂x`.
//!
//! The stress is written as `P = s₁ F + s₂ cof(F)` with
//! `s₁ = μ (1 − 1/(I_C+1))` and `s₂ = λ (J − 1 − a) − ¾ μ`, which stays finite
//! as `λ → 0`.

use rayon::prelude::*;

use crate::math::{ddot, Mat3, Vec3};
use crate::mesh::TetMesh;

/// `d/(d+1)` for a three dimensional element.
pub const SOLID_REST_OFFSET: f64 = 0.75;

/// Element counts above this are evaluated on the rayon pool.
const PAR_THRESHOLD: usize = 512;

/// The passive volume target `α` that makes the rest shape force free.
pub fn rest_stable_alpha(mu: f64, lambda: f64) -> f64 {
    1.0 + SOLID_REST_OFFSET * mu / lambda
}

/// Energy density with an explicit `α`. Used by tests and diagnostics; the
/// force path never evaluates the energy.
pub fn energy_density(f: &Mat3, mu: f64, lambda: f64, alpha: f64) -> f64 {
    let ic = f.norm_squared();
    let j = f.determinant();
    0.5 * mu * (ic - 3.0) + 0.5 * lambda * (j - alpha).powi(2) - 0.5 * mu * (ic + 1.0).ln()
}

fn cofactor(f: &Mat3) -> Mat3 {
    let (c0, c1, c2) = (f.column(0), f.column(1), f.column(2));
    Mat3::from_columns(&[c1.cross(&c2), c2.cross(&c0), c0.cross(&c1)])
}

fn cofactor_dir(f: &Mat3, df: &Mat3) -> Mat3 {
    let (c0, c1, c2) = (f.column(0), f.column(1), f.column(2));
    let (d0, d1, d2) = (df.column(0), df.column(1), df.column(2));
    Mat3::from_columns(&[
        d1.cross(&c2) + c1.cross(&d2),
        d2.cross(&c0) + c2.cross(&d0),
        d0.cross(&c1) + c0.cross(&d1),
    ])
}

/// First Piola–Kirchhoff stress `∂Ψ/∂F`.
pub fn pk1(f: &Mat3, mu: f64, lambda: f64, act: f64) -> Mat3 {
    let ic = f.norm_squared();
    let j = f.determinant();
    let s1 = mu * (1.0 - 1.0 / (ic + 1.0));
    let s2 = lambda * (j - 1.0 - act) - SOLID_REST_OFFSET * mu;
    f * s1 + cofactor(f) * s2
}

/// Directional derivative of the stress, `∂²Ψ/∂F² : dF`. The energy Hessian
/// is symmetric, so this is also the vector-Jacobian product of `pk1`.
pub fn pk1_hvp(f: &Mat3, mu: f64, lambda: f64, act: f64, df: &Mat3) -> Mat3 {
    let ic = f.norm_squared();
    let j = f.determinant();
    let g = cofactor(f);
    let s1 = mu * (1.0 - 1.0 / (ic + 1.0));
    let s2 = lambda * (j - 1.0 - act) - SOLID_REST_OFFSET * mu;
    let dic = 2.0 * ddot(f, df);
    let dj = ddot(&g, df);
    df * s1 + f * (mu * dic / (ic + 1.0).powi(2)) + g * (lambda * dj) + cofactor_dir(f, df) * s2
}

/// Nodal forces of one element.
pub fn tet_forces(x: &[Vec3; 4], rest_inv: &Mat3, vol: f64, mu: f64, lambda: f64, act: f64) -> [Vec3; 4] {
    let ds = Mat3::from_columns(&[x[1] - x[0], x[2] - x[0], x[3] - x[0]]);
    let f = ds * rest_inv;
    let h = pk1(&f, mu, lambda, act) * rest_inv.transpose() * (-vol);
    let f1: Vec3 = h.column(0).into();
    let f2: Vec3 = h.column(1).into();
    let f3: Vec3 = h.column(2).into();
    [-(f1 + f2 + f3), f1, f2, f3]
}

#[derive(Debug, Clone, Copy)]
pub struct TetAdjoint {
    pub x: [Vec3; 4],
    pub mu: f64,
    pub lambda: f64,
    pub act: f64,
}

/// Vector-Jacobian product of [`tet_forces`].
pub fn tet_forces_adjoint(
    x: &[Vec3; 4],
    rest_inv: &Mat3,
    vol: f64,
    mu: f64,
    lambda: f64,
    act: f64,
    f_bar: &[Vec3; 4],
) -> TetAdjoint {
    let ds = Mat3::from_columns(&[x[1] - x[0], x[2] - x[0], x[3] - x[0]]);
    let f = ds * rest_inv;
    let h_bar = Mat3::from_columns(&[f_bar[1] - f_bar[0], f_bar[2] - f_bar[0], f_bar[3] - f_bar[0]]);
    let p_bar = h_bar * rest_inv * (-vol);

    let ic = f.norm_squared();
    let j = f.determinant();
    let g = cofactor(&f);
    let g_dot = ddot(&g, &p_bar);
    let mu_bar = (1.0 - 1.0 / (ic + 1.0)) * ddot(&f, &p_bar) - SOLID_REST_OFFSET * g_dot;
    let lambda_bar = (j - 1.0 - act) * g_dot;
    let act_bar = -lambda * g_dot;

    let f_grad = pk1_hvp(&f, mu, lambda, act, &p_bar);
    let ds_bar = f_grad * rest_inv.transpose();
    let d1: Vec3 = ds_bar.column(0).into();
    let d2: Vec3 = ds_bar.column(1).into();
    let d3: Vec3 = ds_bar.column(2).into();
    TetAdjoint {
        x: [-(d1 + d2 + d3), d1, d2, d3],
        mu: mu_bar,
        lambda: lambda_bar,
        act: act_bar,
    }
}

fn gather(x: &[Vec3], t: &[usize; 4]) -> [Vec3; 4] {
    [x[t[0]], x[t[1]], x[t[2]], x[t[3]]]
}

/// Accumulates the elastic forces of every element into `out`.
///
/// Elements are evaluated independently (in parallel for large meshes) and
/// summed in element order, so the result is bitwise reproducible.
pub fn fem_forces(x: &[Vec3], mesh: &TetMesh, mu: &[f64], lambda: &[f64], act: &[f64], out: &mut [Vec3]) {
    let eval = |e: usize| {
        tet_forces(&gather(x, &mesh.tets[e]), &mesh.rest_inv[e], mesh.rest_volume[e], mu[e], lambda[e], act[e])
    };
    let per_elem: Vec<[Vec3; 4]> = if mesh.len() >= PAR_THRESHOLD {
        (0..mesh.len()).into_par_iter().map(eval).collect()
    } else {
        (0..mesh.len()).map(eval).collect()
    };
    for (t, fe) in mesh.tets.iter().zip(&per_elem) {
        for k in 0..4 {
            out[t[k]] += fe[k];
        }
    }
}

/// Adjoint of [`fem_forces`]: accumulates position and material cotangents.
#[allow(clippy::too_many_arguments)]
pub fn fem_forces_adjoint(
    x: &[Vec3],
    mesh: &TetMesh,
    mu: &[f64],
    lambda: &[f64],
    act: &[f64],
    f_bar: &[Vec3],
    x_bar: &mut [Vec3],
    mu_bar: &mut [f64],
    lambda_bar: &mut [f64],
    act_bar: &mut [f64],
) {
    let eval = |e: usize| {
        let t = &mesh.tets[e];
        tet_forces_adjoint(
            &gather(x, t),
            &mesh.rest_inv[e],
            mesh.rest_volume[e],
            mu[e],
            lambda[e],
            act[e],
            &gather(f_bar, t),
        )
    };
    let per_elem: Vec<TetAdjoint> = if mesh.len() >= PAR_THRESHOLD {
        (0..mesh.len()).into_par_iter().map(eval).collect()
    } else {
        (0..mesh.len()).map(eval).collect()
    };
    for (e, adj) in per_elem.iter().enumerate() {
        let t = &mesh.tets[e];
        for k in 0..4 {
            x_bar[t[k]] += adj.x[k];
        }
        mu_bar[e] += adj.mu;
        lambda_bar[e] += adj.lambda;
        act_bar[e] += adj.act;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::vec3;

    fn unit_tet() -> [Vec3; 4] {
        [Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()]
    }

    fn element_energy(x: &[Vec3; 4], rest_inv: &Mat3, vol: f64, mu: f64, lambda: f64, act: f64) -> f64 {
        let ds = Mat3::from_columns(&[x[1] - x[0], x[2] - x[0], x[3] - x[0]]);
        let alpha = 1.0 + act + SOLID_REST_OFFSET * mu / lambda;
        vol * energy_density(&(ds * rest_inv), mu, lambda, alpha)
    }

    #[test]
    fn rest_state_is_force_free() {
        let x = unit_tet();
        let mesh = TetMesh::new(&x, &[[0, 1, 2, 3]]).unwrap();
        let (mu, lambda) = (1000.0, 1000.0);
        let f = tet_forces(&x, &mesh.rest_inv[0], mesh.rest_volume[0], mu, lambda, 0.0);
        let scale = mu * mesh.rest_volume[0].powf(2.0 / 3.0);
        for fi in f {
            assert!(fi.norm() <= 1e-9 * scale, "{fi}");
        }
        // Energy gradient at F = I vanishes for the rest-stable alpha.
        let alpha = rest_stable_alpha(mu, lambda);
        let h = 1e-6;
        for r in 0..3 {
            for c in 0..3 {
                let mut fp = Mat3::identity();
                let mut fm = Mat3::identity();
                fp[(r, c)] += h;
                fm[(r, c)] -= h;
                let g = (energy_density(&fp, mu, lambda, alpha) - energy_density(&fm, mu, lambda, alpha)) / (2.0 * h);
                assert!(g.abs() < 1e-5, "dΨ/dF[{r},{c}] = {g}");
            }
        }
    }

    #[test]
    fn translation_invariant() {
        let x = unit_tet();
        let mesh = TetMesh::new(&x, &[[0, 1, 2, 3]]).unwrap();
        let y = [x[0] * 1.1, x[1] * 0.9, x[2] + vec3(0.1, 0.0, 0.2), x[3]];
        let shift = vec3(3.0, -2.0, 7.5);
        let z = y.map(|p| p + shift);
        let a = tet_forces(&y, &mesh.rest_inv[0], mesh.rest_volume[0], 10.0, 20.0, 0.0);
        let b = tet_forces(&z, &mesh.rest_inv[0], mesh.rest_volume[0], 10.0, 20.0, 0.0);
        for k in 0..4 {
            assert!((a[k] - b[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn uniaxial_stretch_matches_energy_fd() {
        let x = unit_tet();
        let mesh = TetMesh::new(&x, &[[0, 1, 2, 3]]).unwrap();
        let (mu, lambda) = (1000.0, 1000.0);
        let y = [x[0], vec3(1.3, 0.0, 0.0), x[2], x[3]];
        let (ri, vol) = (mesh.rest_inv[0], mesh.rest_volume[0]);
        let f = tet_forces(&y, &ri, vol, mu, lambda, 0.0);
        let h = 1e-6;
        for v in 0..4 {
            for c in 0..3 {
                let mut p = y;
                let mut m = y;
                p[v][c] += h;
                m[v][c] -= h;
                let fd = -(element_energy(&p, &ri, vol, mu, lambda, 0.0) - element_energy(&m, &ri, vol, mu, lambda, 0.0))
                    / (2.0 * h);
                let rel = (f[v][c] - fd).abs() / fd.abs().max(1.0);
                assert!(rel <= 1e-6, "vertex {v} axis {c}: {} vs {fd}", f[v][c]);
            }
        }
    }

    #[test]
    fn inverted_element_is_finite() {
        let x = unit_tet();
        let mesh = TetMesh::new(&x, &[[0, 1, 2, 3]]).unwrap();
        let inverted = [x[0], x[1], x[2], vec3(0.0, 0.0, -1.0)];
        let f = tet_forces(&inverted, &mesh.rest_inv[0], mesh.rest_volume[0], 100.0, 100.0, 0.0);
        assert!(f.iter().all(|v| v.iter().all(|c| c.is_finite())));
    }
}
