//! Semi-implicit Euler update for point masses.
//!
//! `v⁺ = v + (f·w + g·step(w))·dt`, `x⁺ = x + v⁺·dt`, where `w` is the
//! inverse mass and `step(w)` is 1 for dynamic particles and 0 for static
//! ones. Gravity `g` is the world acceleration vector (e.g. `(0, -9.8, 0)`).

use crate::error::{Result, SimError};
use crate::math::Vec3;

#[inline]
fn step(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn integrate_particles(
    x: &[Vec3],
    v: &[Vec3],
    f: &[Vec3],
    inv_mass: &[f64],
    gravity: &Vec3,
    dt: f64,
) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    let n = x.len();
    if v.len() != n || f.len() != n || inv_mass.len() != n {
        return Err(SimError::ShapeMismatch(format!(
            "particle arrays differ in length: x={n} v={} f={} w={}",
            v.len(),
            f.len(),
            inv_mass.len()
        )));
    }
    let mut x_new = Vec::with_capacity(n);
    let mut v_new = Vec::with_capacity(n);
    for i in 0..n {
        if !(f[i].x.is_finite() && f[i].y.is_finite() && f[i].z.is_finite()) {
            return Err(SimError::NonFiniteForce(i));
        }
        let w = inv_mass[i];
        let v1 = v[i] + (f[i] * w + gravity * step(w)) * dt;
        v_new.push(v1);
        x_new.push(x[i] + v1 * dt);
    }
    Ok((x_new, v_new))
}

/// Cotangents flowing out of one particle update.
#[derive(Debug, Clone)]
pub struct ParticleAdjoint {
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub f: Vec<Vec3>,
    pub inv_mass: Vec<f64>,
    pub gravity: Vec3,
}

pub fn integrate_particles_adjoint(
    f: &[Vec3],
    inv_mass: &[f64],
    dt: f64,
    x_new_bar: &[Vec3],
    v_new_bar: &[Vec3],
) -> ParticleAdjoint {
    let n = f.len();
    let mut out = ParticleAdjoint {
        x: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        f: Vec::with_capacity(n),
        inv_mass: Vec::with_capacity(n),
        gravity: Vec3::zeros(),
    };
    for i in 0..n {
        let w = inv_mass[i];
        let v1_bar = v_new_bar[i] + x_new_bar[i] * dt;
        out.x.push(x_new_bar[i]);
        out.v.push(v1_bar);
        out.f.push(v1_bar * (w * dt));
        out.inv_mass.push(dt * f[i].dot(&v1_bar));
        out.gravity += v1_bar * (dt * step(w));
    }
    out
}
