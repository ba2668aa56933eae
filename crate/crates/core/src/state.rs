//! Simulation state `s = [q, u]`, model parameters `θ`, and their
//! cotangent containers.

use crate::dynamics::contact::ContactParams;
use crate::dynamics::rigid::RigidState;
use crate::error::{Result, SimError};
use crate::math::{quat_dot, Quat, Vec3};

/// Generalized coordinates and velocities of every entity in a scene.
///
/// Particles of all deformable entities (FEM solids, shells, point groups)
/// share one array. Rigid bodies carry pose and velocity, pendula their
/// joint angles and rates (unused second slot for single pendula).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemState {
    pub particle_q: Vec<Vec3>,
    pub particle_u: Vec<Vec3>,
    pub bodies: Vec<RigidState>,
    pub pendulum_q: Vec<[f64; 2]>,
    pub pendulum_u: Vec<[f64; 2]>,
}

impl SystemState {
    /// Same layout, all entries zero (quaternions included).
    pub fn zeros_like(&self) -> Self {
        SystemState {
            particle_q: vec![Vec3::zeros(); self.particle_q.len()],
            particle_u: vec![Vec3::zeros(); self.particle_u.len()],
            bodies: vec![RigidState::zero(); self.bodies.len()],
            pendulum_q: vec![[0.0; 2]; self.pendulum_q.len()],
            pendulum_u: vec![[0.0; 2]; self.pendulum_u.len()],
        }
    }

    pub fn add_assign(&mut self, o: &SystemState) {
        self.axpy(1.0, o);
    }

    /// `self += a·o`.
    pub fn axpy(&mut self, a: f64, o: &SystemState) {
        for (x, y) in self.particle_q.iter_mut().zip(&o.particle_q) {
            *x += y * a;
        }
        for (x, y) in self.particle_u.iter_mut().zip(&o.particle_u) {
            *x += y * a;
        }
        for (x, y) in self.bodies.iter_mut().zip(&o.bodies) {
            x.x += y.x * a;
            x.v += y.v * a;
            x.w += y.w * a;
            x.r.coords += y.r.coords * a;
        }
        for (x, y) in self.pendulum_q.iter_mut().zip(&o.pendulum_q) {
            x[0] += a * y[0];
            x[1] += a * y[1];
        }
        for (x, y) in self.pendulum_u.iter_mut().zip(&o.pendulum_u) {
            x[0] += a * y[0];
            x[1] += a * y[1];
        }
    }

    pub fn dot(&self, o: &SystemState) -> f64 {
        let mut s = 0.0;
        s += self.particle_q.iter().zip(&o.particle_q).map(|(a, b)| a.dot(b)).sum::<f64>();
        s += self.particle_u.iter().zip(&o.particle_u).map(|(a, b)| a.dot(b)).sum::<f64>();
        for (a, b) in self.bodies.iter().zip(&o.bodies) {
            s += a.x.dot(&b.x) + a.v.dot(&b.v) + a.w.dot(&b.w) + quat_dot(&a.r, &b.r);
        }
        for (a, b) in self.pendulum_q.iter().zip(&o.pendulum_q).chain(self.pendulum_u.iter().zip(&o.pendulum_u)) {
            s += a[0] * b[0] + a[1] * b[1];
        }
        s
    }

    pub fn is_zero(&self) -> bool {
        self.dot(self) == 0.0
    }

    /// Name of the first non-finite quantity, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        let bad3 = |v: &Vec3| !v.iter().all(|c| c.is_finite());
        if let Some(i) = self.particle_q.iter().position(bad3) {
            return Some(format!("particle {i} position"));
        }
        if let Some(i) = self.particle_u.iter().position(bad3) {
            return Some(format!("particle {i} velocity"));
        }
        if let Some(i) = self.bodies.iter().position(|b| !b.is_finite()) {
            return Some(format!("rigid body {i} state"));
        }
        let bad2 = |v: &[f64; 2]| !(v[0].is_finite() && v[1].is_finite());
        if let Some(i) = self.pendulum_q.iter().position(bad2) {
            return Some(format!("pendulum {i} angle"));
        }
        if let Some(i) = self.pendulum_u.iter().position(bad2) {
            return Some(format!("pendulum {i} rate"));
        }
        None
    }

    /// Flat row used for `states.csv`: particle q, particle u, then per body
    /// x, r(w,i,j,k), v, ω, then per pendulum θ₁, θ₂, θ̇₁, θ̇₂.
    pub fn to_row(&self) -> Vec<f64> {
        let mut row = Vec::new();
        for p in &self.particle_q {
            row.extend_from_slice(p.as_slice());
        }
        for p in &self.particle_u {
            row.extend_from_slice(p.as_slice());
        }
        for b in &self.bodies {
            row.extend_from_slice(b.x.as_slice());
            row.extend_from_slice(&[b.r.w, b.r.i, b.r.j, b.r.k]);
            row.extend_from_slice(b.v.as_slice());
            row.extend_from_slice(b.w.as_slice());
        }
        for (q, u) in self.pendulum_q.iter().zip(&self.pendulum_u) {
            row.extend_from_slice(&[q[0], q[1], u[0], u[1]]);
        }
        row
    }

    /// Inverse of [`SystemState::to_row`] for a state shaped like `self`.
    pub fn from_row(&self, row: &[f64]) -> Result<SystemState> {
        let expected = self.column_names().len();
        if row.len() != expected {
            return Err(SimError::ShapeMismatch(format!("state row has {} values, expected {expected}", row.len())));
        }
        let mut values = row.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
        let mut out = self.zeros_like();
        for p in out.particle_q.iter_mut().chain(out.particle_u.iter_mut()) {
            *p = Vec3::from_column_slice(&take(3));
        }
        for b in &mut out.bodies {
            let c = take(13);
            b.x = Vec3::new(c[0], c[1], c[2]);
            b.r = Quat::new(c[3], c[4], c[5], c[6]);
            b.v = Vec3::new(c[7], c[8], c[9]);
            b.w = Vec3::new(c[10], c[11], c[12]);
        }
        for (q, u) in out.pendulum_q.iter_mut().zip(out.pendulum_u.iter_mut()) {
            let c = take(4);
            *q = [c[0], c[1]];
            *u = [c[2], c[3]];
        }
        Ok(out)
    }

    /// Column names matching [`SystemState::to_row`].
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (prefix, n) in [("q", self.particle_q.len()), ("u", self.particle_u.len())] {
            for i in 0..n {
                for c in ["x", "y", "z"] {
                    names.push(format!("p{i}_{prefix}{c}"));
                }
            }
        }
        for i in 0..self.bodies.len() {
            for c in ["x", "y", "z", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz"] {
                names.push(format!("b{i}_{c}"));
            }
        }
        for i in 0..self.pendulum_q.len() {
            for c in ["th1", "th2", "om1", "om2"] {
                names.push(format!("pend{i}_{c}"));
            }
        }
        names
    }
}

/// Every optimizable physical quantity of a scene.
///
/// Per-particle masses are stored as inverse masses (`0` = static). The
/// element activations are offsets from the rest-stable volume target, so
/// `0` is passive. Rigid inertia scales with `body_mass` (see
/// [`crate::dynamics::rigid`]).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    pub gravity: Vec3,
    pub particle_inv_mass: Vec<f64>,
    pub tet_mu: Vec<f64>,
    pub tet_lambda: Vec<f64>,
    pub tet_activation: Vec<f64>,
    pub tri_mu: Vec<f64>,
    pub tri_lambda: Vec<f64>,
    pub edge_stiffness: Vec<f64>,
    pub edge_activation: Vec<f64>,
    pub body_mass: Vec<f64>,
    pub contact: ContactParams,
    pub pendulum_length: Vec<[f64; 2]>,
    pub pendulum_mass: Vec<[f64; 2]>,
    pub wind: Vec3,
}

impl ModelParams {
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            gravity: Vec3::zeros(),
            particle_inv_mass: vec![0.0; self.particle_inv_mass.len()],
            tet_mu: vec![0.0; self.tet_mu.len()],
            tet_lambda: vec![0.0; self.tet_lambda.len()],
            tet_activation: vec![0.0; self.tet_activation.len()],
            tri_mu: vec![0.0; self.tri_mu.len()],
            tri_lambda: vec![0.0; self.tri_lambda.len()],
            edge_stiffness: vec![0.0; self.edge_stiffness.len()],
            edge_activation: vec![0.0; self.edge_activation.len()],
            body_mass: vec![0.0; self.body_mass.len()],
            contact: ContactParams::zero(),
            pendulum_length: vec![[0.0; 2]; self.pendulum_length.len()],
            pendulum_mass: vec![[0.0; 2]; self.pendulum_mass.len()],
            wind: Vec3::zeros(),
        }
    }

    fn scalars_mut(&mut self) -> Vec<&mut f64> {
        let mut out: Vec<&mut f64> = Vec::new();
        out.extend(self.gravity.iter_mut());
        out.extend(self.particle_inv_mass.iter_mut());
        out.extend(self.tet_mu.iter_mut());
        out.extend(self.tet_lambda.iter_mut());
        out.extend(self.tet_activation.iter_mut());
        out.extend(self.tri_mu.iter_mut());
        out.extend(self.tri_lambda.iter_mut());
        out.extend(self.edge_stiffness.iter_mut());
        out.extend(self.edge_activation.iter_mut());
        out.extend(self.body_mass.iter_mut());
        out.extend([&mut self.contact.ke, &mut self.contact.kd, &mut self.contact.kf, &mut self.contact.mu]);
        out.extend(self.pendulum_length.iter_mut().flat_map(|p| p.iter_mut()));
        out.extend(self.pendulum_mass.iter_mut().flat_map(|p| p.iter_mut()));
        out.extend(self.wind.iter_mut());
        out
    }

    /// All entries in a fixed order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut c = self.clone();
        let flat = c.scalars_mut().into_iter().map(|x| *x).collect();
        flat
    }

    /// Overwrites all entries from a slice in [`ModelParams::to_flat`] order.
    pub fn set_flat(&mut self, v: &[f64]) {
        for (x, y) in self.scalars_mut().into_iter().zip(v) {
            *x = *y;
        }
    }

    /// `self += a·o`; the two must share a layout.
    pub fn axpy(&mut self, a: f64, o: &ModelParams) {
        let src = o.to_flat();
        for (x, y) in self.scalars_mut().into_iter().zip(src) {
            *x += a * y;
        }
    }

    pub fn dot(&self, o: &ModelParams) -> f64 {
        self.to_flat().iter().zip(o.to_flat()).map(|(a, b)| a * b).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.to_flat().iter().all(|&x| x == 0.0)
    }
}

/// Per-step actuation offsets added to the element and edge activations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepActivation {
    pub tet: Vec<f64>,
    pub edge: Vec<f64>,
}

impl StepActivation {
    pub fn is_zero(&self) -> bool {
        self.tet.iter().chain(&self.edge).all(|&x| x == 0.0)
    }
}

/// Gradient of a scalar loss with respect to the initial state, the model
/// parameters and (when actuated) every step's activation offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    pub d_state0: SystemState,
    pub d_params: ModelParams,
    pub d_activations: Vec<StepActivation>,
}

impl GradBuffer {
    pub fn is_zero(&self) -> bool {
        self.d_state0.is_zero() && self.d_params.is_zero() && self.d_activations.iter().all(|a| a.is_zero())
    }
}
