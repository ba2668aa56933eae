//! Penalty contact against planes with relaxed Coulomb friction.
//!
//! For a point `p` with velocity `u` against a plane `n·x = offset`:
//! * gap `C = max(0, offset − n·p)`, rate `Ċ = −n·u`
//! * normal force `fₙ = n (k_e C + k_d Ċ)` while `C > 0`, zero otherwise
//! * sliding velocity `u_s = Dᵀu` in the fixed tangent basis `D`
//! * friction `f_f = −D t` with `t = k_f u_s` clamped in norm to `μ|fₙ|`
//!
//! The force is C⁰: its derivative jumps where the gap opens and where the
//! friction switches between stick and slip.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::math::{tangent_basis, Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactParams {
    /// Elastic stiffness `k_e`.
    pub ke: f64,
    /// Damping `k_d`.
    pub kd: f64,
    /// Frictional stiffness `k_f`.
    pub kf: f64,
    /// Coulomb coefficient `μ`.
    pub mu: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams { ke: 500.0, kd: 5.0, kf: 50.0, mu: 0.5 }
    }
}

impl ContactParams {
    pub fn zero() -> Self {
        ContactParams { ke: 0.0, kd: 0.0, kf: 0.0, mu: 0.0 }
    }

    pub fn add(&mut self, o: &ContactParams) {
        self.ke += o.ke;
        self.kd += o.kd;
        self.kf += o.kf;
        self.mu += o.mu;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPlane {
    normal: Vec3,
    offset: f64,
    threshold: f64,
    tangents: (Vec3, Vec3),
}

impl ContactPlane {
    /// Plane `normal·x = offset`; contacts are generated for points closer
    /// than `threshold` to it (or behind it).
    pub fn new(normal: Vec3, offset: f64, threshold: f64) -> Result<Self> {
        let len = normal.norm();
        if !(len.is_finite() && len > 0.0) {
            return Err(SimError::config("contact plane normal must be non-zero"));
        }
        if !(threshold >= 0.0) {
            return Err(SimError::config("contact threshold must be non-negative"));
        }
        let n = normal / len;
        Ok(ContactPlane { normal: n, offset: offset / len, threshold, tangents: tangent_basis(&n) })
    }

    pub fn ground() -> Self {
        ContactPlane::new(Vec3::y(), 0.0, 0.0).unwrap()
    }

    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn tangents(&self) -> (Vec3, Vec3) {
        self.tangents
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// Contact generation test.
    pub fn generates_contact(&self, p: &Vec3) -> bool {
        self.signed_distance(p) <= self.threshold
    }
}

/// Force on one contact point.
pub fn contact_force(p: &Vec3, u: &Vec3, plane: &ContactPlane, k: &ContactParams) -> Vec3 {
    contact_force_parts(p, u, plane, k).0
}

/// Returns `(total, normal magnitude, friction vector)`.
pub fn contact_force_parts(p: &Vec3, u: &Vec3, plane: &ContactPlane, k: &ContactParams) -> (Vec3, f64, Vec3) {
    let n = plane.normal;
    let gap = plane.offset - n.dot(p);
    if gap <= 0.0 {
        return (Vec3::zeros(), 0.0, Vec3::zeros());
    }
    let fn_mag = k.ke * gap - k.kd * n.dot(u);
    let (t1, t2) = plane.tangents;
    let us = Vec2::new(t1.dot(u), t2.dot(u));
    let t = us * k.kf;
    let cap = k.mu * fn_mag.abs();
    let tn = t.norm();
    let ft = if tn <= cap { t } else { t * (cap / tn) };
    let ff = -(t1 * ft.x + t2 * ft.y);
    (n * fn_mag + ff, fn_mag, ff)
}

#[derive(Debug, Clone, Copy)]
pub struct ContactAdjoint {
    pub p: Vec3,
    pub u: Vec3,
    pub params: ContactParams,
}

pub fn contact_force_adjoint(
    p: &Vec3,
    u: &Vec3,
    plane: &ContactPlane,
    k: &ContactParams,
    f_bar: &Vec3,
) -> ContactAdjoint {
    let mut out = ContactAdjoint { p: Vec3::zeros(), u: Vec3::zeros(), params: ContactParams::zero() };
    let n = plane.normal;
    let gap = plane.offset - n.dot(p);
    if gap <= 0.0 {
        return out;
    }
    let cdot = -n.dot(u);
    let fn_mag = k.ke * gap + k.kd * cdot;
    let (t1, t2) = plane.tangents;
    let us = Vec2::new(t1.dot(u), t2.dot(u));
    let t = us * k.kf;
    let cap = k.mu * fn_mag.abs();
    let tn = t.norm();

    let mut fn_bar = n.dot(f_bar);
    let ft_bar = Vec2::new(-t1.dot(f_bar), -t2.dot(f_bar));
    let mut us_bar = Vec2::zeros();
    if tn <= cap {
        us_bar += ft_bar * k.kf;
        out.params.kf += us.dot(&ft_bar);
    } else {
        let usn = us.norm();
        let s = us / usn;
        let cap_bar = ft_bar.dot(&s);
        us_bar += (ft_bar - s * s.dot(&ft_bar)) * (cap / usn);
        out.params.mu += cap_bar * fn_mag.abs();
        fn_bar += cap_bar * k.mu * fn_mag.signum();
    }
    out.params.ke += fn_bar * gap;
    out.params.kd += fn_bar * cdot;
    let gap_bar = fn_bar * k.ke;
    let cdot_bar = fn_bar * k.kd;
    out.p = -n * gap_bar;
    out.u = -n * cdot_bar + t1 * us_bar.x + t2 * us_bar.y;
    out
}

/// Contact forces on free points (particles), one per point. Points that do
/// not generate a contact get zero.
pub fn ground_contact_forces(x: &[Vec3], v: &[Vec3], plane: &ContactPlane, k: &ContactParams) -> Vec<Vec3> {
    x.iter()
        .zip(v)
        .map(|(p, u)| {
            if plane.generates_contact(p) {
                contact_force(p, u, plane, k)
            } else {
                Vec3::zeros()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::vec3;

    #[test]
    fn separated_vertex_has_no_force() {
        let plane = ContactPlane::ground();
        let k = ContactParams::default();
        let f = contact_force(&vec3(0.0, 1.0, 0.0), &vec3(0.0, -3.0, 1.0), &plane, &k);
        assert_eq!(f, Vec3::zeros());
    }

    #[test]
    fn static_penetration_pushes_out() {
        let plane = ContactPlane::ground();
        let k = ContactParams { ke: 500.0, kd: 0.0, kf: 10.0, mu: 0.5 };
        let f = contact_force(&vec3(0.0, -0.01, 0.0), &Vec3::zeros(), &plane, &k);
        assert!((f - vec3(0.0, 5.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn fast_sliding_saturates_at_coulomb_cap() {
        let plane = ContactPlane::ground();
        let k = ContactParams { ke: 500.0, kd: 0.0, kf: 100.0, mu: 0.3 };
        let (_, fn_mag, ff) = contact_force_parts(&vec3(0.0, -0.02, 0.0), &vec3(20.0, 0.0, -5.0), &plane, &k);
        assert!((ff.norm() - 0.3 * fn_mag.abs()).abs() < 1e-12);
        // Friction opposes sliding.
        assert!(ff.dot(&vec3(20.0, 0.0, -5.0)) < 0.0);
    }

    #[test]
    fn threshold_controls_generation_only() {
        let plane = ContactPlane::new(Vec3::y(), 0.0, 0.1).unwrap();
        assert!(plane.generates_contact(&vec3(0.0, 0.05, 0.0)));
        let f = ground_contact_forces(&[vec3(0.0, 0.05, 0.0)], &[vec3(0.0, -1.0, 0.0)], &plane, &ContactParams::default());
        assert_eq!(f[0], Vec3::zeros());
    }

    #[test]
    fn plane_normal_is_normalized() {
        let plane = ContactPlane::new(vec3(0.0, 2.0, 0.0), 1.0, 0.0).unwrap();
        assert!((plane.normal().norm() - 1.0).abs() < 1e-15);
        assert!((plane.offset() - 0.5).abs() < 1e-15);
        assert!(ContactPlane::new(Vec3::zeros(), 0.0, 0.0).is_err());
    }
}
