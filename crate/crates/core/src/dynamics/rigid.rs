//! Rigid bodies: Newton–Euler with semi-implicit Euler.
//!
//! The inertia tensor of a body scales with its mass, `I = m·Ĩ` with `Ĩ` the
//! body-frame inertia of the same shape at unit mass, so mass gradients see
//! both the linear and the angular response. With `A = R Ĩ Rᵀ` and
//! `B = R Ĩ⁻¹ Rᵀ` the step is
//!
//! ```text
//! v⁺ = v + dt (F/m + g)
//! ω⁺ = ω + dt (B τ / m − B (ω × A ω))
//! x⁺ = x + dt v⁺
//! r⁺ = normalize(r + ½ dt (0, ω⁺) ⊗ r)
//! ```
//!
//! The gyroscopic term uses `ω` from the start of the step.

use crate::dynamics::contact::{contact_force, contact_force_adjoint, ContactParams, ContactPlane};
use crate::error::{Result, SimError};
use crate::math::{
    cross_adjoint, omega_mul, omega_mul_adjoint, quat_add, quat_identity, quat_norm, quat_normalize_adjoint,
    quat_scale, quat_to_mat, quat_to_mat_adjoint, quat_zero, Mat3, Quat, Vec3,
};

/// Pose and velocity of one body. Also used for cotangents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidState {
    pub x: Vec3,
    pub r: Quat,
    pub v: Vec3,
    pub w: Vec3,
}

impl RigidState {
    pub fn at_rest(x: Vec3) -> Self {
        RigidState { x, r: quat_identity(), v: Vec3::zeros(), w: Vec3::zeros() }
    }

    pub fn zero() -> Self {
        RigidState { x: Vec3::zeros(), r: quat_zero(), v: Vec3::zeros(), w: Vec3::zeros() }
    }

    pub fn rotation(&self) -> Mat3 {
        quat_to_mat(&self.r)
    }

    pub fn add(&mut self, o: &RigidState) {
        self.x += o.x;
        self.r = quat_add(&self.r, &o.r);
        self.v += o.v;
        self.w += o.w;
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.v.iter()).chain(self.w.iter()).all(|c| c.is_finite())
            && [self.r.w, self.r.i, self.r.j, self.r.k].iter().all(|c| c.is_finite())
    }
}

/// Body-frame inertia at unit mass and its inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitInertia {
    pub tensor: Mat3,
    pub inverse: Mat3,
}

impl UnitInertia {
    pub fn new(tensor: Mat3) -> Result<Self> {
        if (tensor - tensor.transpose()).norm() > 1e-12 * tensor.norm().max(1.0) {
            return Err(SimError::config("inertia tensor must be symmetric"));
        }
        let chol = nalgebra::Cholesky::new(tensor)
            .ok_or_else(|| SimError::config("inertia tensor must be positive definite"))?;
        Ok(UnitInertia { tensor, inverse: chol.inverse() })
    }

    /// Solid box of the given edge lengths.
    pub fn solid_box(size: Vec3) -> Self {
        let s = size.component_mul(&size);
        let t = Mat3::from_diagonal(&Vec3::new(s.y + s.z, s.x + s.z, s.x + s.y)) / 12.0;
        UnitInertia::new(t).expect("box inertia is positive definite")
    }

    fn world(&self, r: &Mat3) -> (Mat3, Mat3) {
        (r * self.tensor * r.transpose(), r * self.inverse * r.transpose())
    }
}

pub fn rigid_step(
    s: &RigidState,
    force: &Vec3,
    torque: &Vec3,
    mass: f64,
    inertia: &UnitInertia,
    gravity: &Vec3,
    dt: f64,
) -> RigidState {
    let rot = quat_to_mat(&s.r);
    let (a, b) = inertia.world(&rot);
    let v1 = s.v + (force / mass + gravity) * dt;
    let gyro = s.w.cross(&(a * s.w));
    let w1 = s.w + (b * torque / mass - b * gyro) * dt;
    let x1 = s.x + v1 * dt;
    let rt = quat_add(&s.r, &quat_scale(&omega_mul(&w1, &s.r), 0.5 * dt));
    let r1 = quat_scale(&rt, 1.0 / quat_norm(&rt));
    RigidState { x: x1, r: r1, v: v1, w: w1 }
}

#[derive(Debug, Clone, Copy)]
pub struct RigidStepAdjoint {
    pub state: RigidState,
    pub force: Vec3,
    pub torque: Vec3,
    pub mass: f64,
    pub gravity: Vec3,
}

#[allow(clippy::too_many_arguments)]
pub fn rigid_step_adjoint(
    s: &RigidState,
    force: &Vec3,
    torque: &Vec3,
    mass: f64,
    inertia: &UnitInertia,
    dt: f64,
    out_bar: &RigidState,
) -> RigidStepAdjoint {
    let rot = quat_to_mat(&s.r);
    let (a, b) = inertia.world(&rot);
    let aw = a * s.w;
    let gyro = s.w.cross(&aw);
    let w1 = s.w + (b * torque / mass - b * gyro) * dt;
    let rt = quat_add(&s.r, &quat_scale(&omega_mul(&w1, &s.r), 0.5 * dt));

    let mut r_bar = quat_zero();
    let rt_bar = quat_normalize_adjoint(&rt, &out_bar.r);
    r_bar = quat_add(&r_bar, &rt_bar);
    let (w1_q, r_q) = omega_mul_adjoint(&w1, &s.r, &quat_scale(&rt_bar, 0.5 * dt));
    r_bar = quat_add(&r_bar, &r_q);
    let w1_bar = out_bar.w + w1_q;
    let v1_bar = out_bar.v + out_bar.x * dt;

    let force_bar = v1_bar * (dt / mass);
    let mut mass_bar = -dt * v1_bar.dot(force) / (mass * mass);
    let gravity_bar = v1_bar * dt;

    let y_bar = w1_bar * dt;
    let b_bar = y_bar * (torque / mass - gyro).transpose();
    let by = b * y_bar;
    let torque_bar = by / mass;
    mass_bar -= by.dot(torque) / (mass * mass);
    let gyro_bar = -by;
    let (w_g, aw_bar) = cross_adjoint(&s.w, &aw, &gyro_bar);
    let w_bar = w1_bar + w_g + a.transpose() * aw_bar;
    let a_bar = aw_bar * s.w.transpose();

    let rot_bar = (a_bar + a_bar.transpose()) * rot * inertia.tensor + (b_bar + b_bar.transpose()) * rot * inertia.inverse;
    r_bar = quat_add(&r_bar, &quat_to_mat_adjoint(&s.r, &rot_bar));

    RigidStepAdjoint {
        state: RigidState { x: out_bar.x, r: r_bar, v: v1_bar, w: w_bar },
        force: force_bar,
        torque: torque_bar,
        mass: mass_bar,
        gravity: gravity_bar,
    }
}

/// Instantaneous impulse `J` applied at world point `p`:
/// `Δv = J/m`, `Δω = I⁻¹((p − x) × J)`.
pub fn apply_impulse(s: &RigidState, mass: f64, inertia: &UnitInertia, impulse: &Vec3, point: &Vec3) -> RigidState {
    let (_, b) = inertia.world(&quat_to_mat(&s.r));
    let lever = point - s.x;
    RigidState { v: s.v + impulse / mass, w: s.w + b * lever.cross(impulse) / mass, ..*s }
}

/// Cotangents `(state, mass)` of [`apply_impulse`]; the impulse itself is
/// treated as known.
pub fn apply_impulse_adjoint(
    s: &RigidState,
    mass: f64,
    inertia: &UnitInertia,
    impulse: &Vec3,
    point: &Vec3,
    out_bar: &RigidState,
) -> (RigidState, f64) {
    let rot = quat_to_mat(&s.r);
    let (_, b) = inertia.world(&rot);
    let lever = point - s.x;
    let c = lever.cross(impulse);
    let bc = b * c;
    let mass_bar = -(out_bar.v.dot(impulse) + out_bar.w.dot(&bc)) / (mass * mass);
    let c_bar = b * out_bar.w / mass;
    let b_bar = out_bar.w * c.transpose() / mass;
    let (lever_bar, _) = cross_adjoint(&lever, impulse, &c_bar);
    let rot_bar = (b_bar + b_bar.transpose()) * rot * inertia.inverse;
    let r_bar = quat_add(&out_bar.r, &quat_to_mat_adjoint(&s.r, &rot_bar));
    (RigidState { x: out_bar.x - lever_bar, r: r_bar, v: out_bar.v, w: out_bar.w }, mass_bar)
}

/// Summed contact force and torque (about the center of mass) of the body
/// points listed in `active` (indices into `body_points`, body frame).
pub fn rigid_contact_wrench(
    s: &RigidState,
    body_points: &[Vec3],
    active: &[usize],
    plane: &ContactPlane,
    k: &ContactParams,
) -> (Vec3, Vec3) {
    let rot = quat_to_mat(&s.r);
    let mut force = Vec3::zeros();
    let mut torque = Vec3::zeros();
    for &i in active {
        let arm = rot * body_points[i];
        let f = contact_force(&(s.x + arm), &(s.v + s.w.cross(&arm)), plane, k);
        force += f;
        torque += arm.cross(&f);
    }
    (force, torque)
}

/// Points of the body that generate a contact with `plane` in state `s`.
pub fn rigid_contact_set(s: &RigidState, body_points: &[Vec3], plane: &ContactPlane) -> Vec<usize> {
    let rot = quat_to_mat(&s.r);
    (0..body_points.len()).filter(|&i| plane.generates_contact(&(s.x + rot * body_points[i]))).collect()
}

/// Adjoint of [`rigid_contact_wrench`]: returns the state cotangent and
/// accumulates the contact parameter cotangent into `k_bar`.
#[allow(clippy::too_many_arguments)]
pub fn rigid_contact_wrench_adjoint(
    s: &RigidState,
    body_points: &[Vec3],
    active: &[usize],
    plane: &ContactPlane,
    k: &ContactParams,
    force_bar: &Vec3,
    torque_bar: &Vec3,
    k_bar: &mut ContactParams,
) -> RigidState {
    let rot = quat_to_mat(&s.r);
    let mut out = RigidState::zero();
    let mut rot_bar = Mat3::zeros();
    for &i in active {
        let b = body_points[i];
        let arm = rot * b;
        let p = s.x + arm;
        let u = s.v + s.w.cross(&arm);
        let f = contact_force(&p, &u, plane, k);
        let (mut arm_bar, f_t) = cross_adjoint(&arm, &f, torque_bar);
        let f_bar = force_bar + f_t;
        let adj = contact_force_adjoint(&p, &u, plane, k, &f_bar);
        k_bar.add(&adj.params);
        out.x += adj.p;
        arm_bar += adj.p;
        out.v += adj.u;
        let (w_bar, a_bar) = cross_adjoint(&s.w, &arm, &adj.u);
        out.w += w_bar;
        arm_bar += a_bar;
        rot_bar += arm_bar * b.transpose();
    }
    out.r = quat_to_mat_adjoint(&s.r, &rot_bar);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{quat_dot, vec3};

    fn asym() -> UnitInertia {
        UnitInertia::new(Mat3::from_diagonal(&vec3(0.5, 1.0, 2.0))).unwrap()
    }

    #[test]
    fn pure_translation() {
        let s = RigidState { v: vec3(1.0, 0.0, 0.0), ..RigidState::at_rest(Vec3::zeros()) };
        let out = rigid_step(&s, &Vec3::zeros(), &Vec3::zeros(), 1.0, &asym(), &Vec3::zeros(), 0.1);
        assert_eq!(out.r, s.r);
        assert!((out.x - vec3(0.1, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn principal_axis_spin_is_steady() {
        let mut s = RigidState { w: vec3(0.0, 0.0, 3.0), ..RigidState::at_rest(Vec3::zeros()) };
        for _ in 0..100 {
            s = rigid_step(&s, &Vec3::zeros(), &Vec3::zeros(), 2.0, &asym(), &Vec3::zeros(), 0.01);
        }
        assert!((s.w - vec3(0.0, 0.0, 3.0)).norm() < 1e-12);
        assert!((quat_norm(&s.r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn impulse_lever_arm() {
        let s = RigidState::at_rest(Vec3::zeros());
        let inertia = UnitInertia::new(Mat3::identity()).unwrap();
        let out = apply_impulse(&s, 1.0, &inertia, &vec3(0.0, 1.0, 0.0), &vec3(0.0, 0.0, 1.0));
        assert!((out.w - vec3(-1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!((out.v - vec3(0.0, 1.0, 0.0)).norm() < 1e-15);
        let centered = apply_impulse(&s, 3.0, &inertia, &vec3(3.0, 0.0, 0.0), &Vec3::zeros());
        assert!((centered.v - vec3(1.0, 0.0, 0.0)).norm() < 1e-15 && centered.w == Vec3::zeros());
    }

    #[test]
    fn singular_inertia_rejected() {
        assert!(UnitInertia::new(Mat3::from_diagonal(&vec3(1.0, 0.0, 1.0))).is_err());
    }

    fn dot_state(a: &RigidState, b: &RigidState) -> f64 {
        a.x.dot(&b.x) + quat_dot(&a.r, &b.r) + a.v.dot(&b.v) + a.w.dot(&b.w)
    }

    #[test]
    fn step_adjoint_matches_fd() {
        let inertia = asym();
        let r = nalgebra::UnitQuaternion::from_euler_angles(0.3, 0.2, -0.4).into_inner();
        let s = RigidState { x: vec3(0.1, 0.5, -0.2), r, v: vec3(0.3, -0.1, 0.2), w: vec3(1.0, -2.0, 0.7) };
        let (f, t, m, g, dt) = (vec3(0.5, 1.0, -0.3), vec3(0.2, -0.4, 0.9), 1.7, vec3(0.0, -9.8, 0.0), 0.05);
        let ob = RigidState {
            x: vec3(0.3, -0.2, 0.5),
            r: Quat::new(0.1, -0.6, 0.2, 0.4),
            v: vec3(-0.7, 0.1, 0.2),
            w: vec3(0.4, 0.3, -0.5),
        };
        let adj = rigid_step_adjoint(&s, &f, &t, m, &inertia, dt, &ob);
        let loss = |s: &RigidState, f: &Vec3, t: &Vec3, m: f64| dot_state(&rigid_step(s, f, t, m, &inertia, &g, dt), &ob);
        let h = 1e-6;
        let fd_m = (loss(&s, &f, &t, m + h) - loss(&s, &f, &t, m - h)) / (2.0 * h);
        assert!((fd_m - adj.mass).abs() < 1e-7, "{fd_m} vs {}", adj.mass);
        for c in 0..3 {
            let mut sp = s;
            let mut sm = s;
            sp.w[c] += h;
            sm.w[c] -= h;
            let fd = (loss(&sp, &f, &t, m) - loss(&sm, &f, &t, m)) / (2.0 * h);
            assert!((fd - adj.state.w[c]).abs() < 1e-7);
            let (mut tp, mut tm) = (t, t);
            tp[c] += h;
            tm[c] -= h;
            let fd = (loss(&s, &f, &tp, m) - loss(&s, &f, &tm, m)) / (2.0 * h);
            assert!((fd - adj.torque[c]).abs() < 1e-7);
        }
        let qc = [adj.state.r.w, adj.state.r.i, adj.state.r.j, adj.state.r.k];
        for k in 0..4 {
            let shift = |d: f64| {
                let mut c = [s.r.w, s.r.i, s.r.j, s.r.k];
                c[k] += d;
                RigidState { r: Quat::new(c[0], c[1], c[2], c[3]), ..s }
            };
            let fd = (loss(&shift(h), &f, &t, m) - loss(&shift(-h), &f, &t, m)) / (2.0 * h);
            assert!((fd - qc[k]).abs() < 1e-7, "r[{k}]: {fd} vs {}", qc[k]);
        }
    }
}
