//! Addressing individual optimizable quantities of a scenario.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::scene::{EntityKind, SceneGraph};
use crate::state::{GradBuffer, ModelParams, SystemState};

/// One scalar degree of freedom of (initial state, model parameters).
///
/// Shared material selectors (`TetMu`, `ShellMu`, ...) act on every element
/// at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamSelector {
    /// Total mass of an entity. For deformables all dynamic particle
    /// masses are scaled together.
    Mass { entity: usize },
    TetMu,
    TetLambda,
    ShellMu,
    ShellLambda,
    BendStiffness,
    ContactKe,
    ContactKd,
    ContactKf,
    ContactMu,
    /// Shared initial velocity component of an entity.
    InitialVelocity { entity: usize, axis: usize },
    /// Initial velocity component of one particle.
    ParticleVelocity { particle: usize, axis: usize },
    PendulumLength { pendulum: usize, link: usize },
    PendulumAngle { pendulum: usize, link: usize },
    GravityY,
    Wind { axis: usize },
}

impl ParamSelector {
    /// Parses the short names used on the command line, e.g. `mass`,
    /// `mass:1`, `mu`, `lambda`, `ke`, `velocity:0:x`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let idx = |k: usize| -> Result<usize> {
            parts.get(k).map_or(Ok(0), |p| p.parse().map_err(|_| SimError::config(format!("bad index in parameter {s:?}"))))
        };
        let axis = |k: usize| -> Result<usize> {
            match parts.get(k).copied() {
                Some("x") | Some("0") => Ok(0),
                Some("y") | Some("1") => Ok(1),
                Some("z") | Some("2") => Ok(2),
                _ => Err(SimError::config(format!("parameter {s:?} needs an axis x|y|z"))),
            }
        };
        Ok(match parts[0] {
            "mass" => ParamSelector::Mass { entity: idx(1)? },
            "mu" => ParamSelector::TetMu,
            "lambda" => ParamSelector::TetLambda,
            "shell_mu" => ParamSelector::ShellMu,
            "shell_lambda" => ParamSelector::ShellLambda,
            "bend" => ParamSelector::BendStiffness,
            "ke" => ParamSelector::ContactKe,
            "kd" => ParamSelector::ContactKd,
            "kf" => ParamSelector::ContactKf,
            "mu_c" => ParamSelector::ContactMu,
            "velocity" => ParamSelector::InitialVelocity { entity: idx(1)?, axis: axis(2)? },
            "length" => ParamSelector::PendulumLength { pendulum: idx(1)?, link: idx(2)? },
            "angle" => ParamSelector::PendulumAngle { pendulum: idx(1)?, link: idx(2)? },
            "gravity" => ParamSelector::GravityY,
            "wind" => ParamSelector::Wind { axis: axis(1)? },
            other => return Err(SimError::config(format!("unknown parameter {other:?}"))),
        })
    }

    pub fn label(&self) -> String {
        match self {
            ParamSelector::Mass { entity } => format!("mass_{entity}"),
            ParamSelector::TetMu => "mu".into(),
            ParamSelector::TetLambda => "lambda".into(),
            ParamSelector::ShellMu => "shell_mu".into(),
            ParamSelector::ShellLambda => "shell_lambda".into(),
            ParamSelector::BendStiffness => "bend".into(),
            ParamSelector::ContactKe => "ke".into(),
            ParamSelector::ContactKd => "kd".into(),
            ParamSelector::ContactKf => "kf".into(),
            ParamSelector::ContactMu => "mu_c".into(),
            ParamSelector::InitialVelocity { entity, axis } => format!("v{entity}_{}", ["x", "y", "z"][*axis]),
            ParamSelector::ParticleVelocity { particle, axis } => format!("p{particle}_v{}", ["x", "y", "z"][*axis]),
            ParamSelector::PendulumLength { pendulum, link } => format!("len{pendulum}_{link}"),
            ParamSelector::PendulumAngle { pendulum, link } => format!("theta{pendulum}_{link}"),
            ParamSelector::GravityY => "gravity_y".into(),
            ParamSelector::Wind { axis } => format!("wind_{}", ["x", "y", "z"][*axis]),
        }
    }

    /// Learning rate used when the optimizer config gives none.
    pub fn default_lr(&self) -> f64 {
        match self {
            ParamSelector::Mass { .. } => 0.05,
            ParamSelector::TetMu | ParamSelector::TetLambda | ParamSelector::ShellMu | ParamSelector::ShellLambda => 10.0,
            ParamSelector::BendStiffness => 0.01,
            ParamSelector::ContactKe | ParamSelector::ContactKd | ParamSelector::ContactKf => 5.0,
            ParamSelector::ContactMu => 0.01,
            ParamSelector::InitialVelocity { .. } | ParamSelector::ParticleVelocity { .. } => 0.05,
            ParamSelector::PendulumLength { .. } | ParamSelector::PendulumAngle { .. } => 0.01,
            ParamSelector::GravityY | ParamSelector::Wind { .. } => 0.05,
        }
    }

    /// Physical box the optimizer projects onto.
    pub fn bounds(&self) -> (f64, f64) {
        const INF: f64 = f64::INFINITY;
        match self {
            ParamSelector::Mass { .. } => (1e-3, INF),
            ParamSelector::TetMu | ParamSelector::ShellMu => (1e-3, INF),
            ParamSelector::TetLambda | ParamSelector::ShellLambda => (1e-3, INF),
            ParamSelector::BendStiffness | ParamSelector::ContactKe | ParamSelector::ContactKd | ParamSelector::ContactKf => {
                (0.0, INF)
            }
            ParamSelector::ContactMu => (0.0, 1.0),
            ParamSelector::PendulumLength { .. } => (1e-3, INF),
            _ => (-INF, INF),
        }
    }

    fn check(&self, scene: &SceneGraph) -> Result<()> {
        let bad = |m: &str| Err(SimError::config(format!("parameter {}: {m}", self.label())));
        match *self {
            ParamSelector::Mass { entity } | ParamSelector::InitialVelocity { entity, .. } => {
                let Some(e) = scene.entities.get(entity) else { return bad("no such entity") };
                if e.kind == EntityKind::Pendulum {
                    return bad("pendula have no free mass or velocity");
                }
            }
            ParamSelector::ParticleVelocity { particle, .. } if particle >= scene.particle_count => return bad("no such particle"),
            ParamSelector::PendulumLength { pendulum, link } | ParamSelector::PendulumAngle { pendulum, link } => {
                let Some(p) = scene.pendula.get(pendulum) else { return bad("no such pendulum") };
                if link >= p.links {
                    return bad("no such link");
                }
            }
            ParamSelector::TetMu | ParamSelector::TetLambda if scene.tet_mesh.is_empty() => return bad("scene has no tetrahedra"),
            ParamSelector::ShellMu | ParamSelector::ShellLambda if scene.shell_mesh.is_empty() => {
                return bad("scene has no shell triangles")
            }
            ParamSelector::BendStiffness if scene.shell_mesh.edges.is_empty() => return bad("scene has no hinge edges"),
            _ => {}
        }
        if let ParamSelector::InitialVelocity { axis, .. } | ParamSelector::ParticleVelocity { axis, .. } | ParamSelector::Wind { axis } =
            *self
        {
            if axis > 2 {
                return bad("axis must be 0, 1 or 2");
            }
        }
        Ok(())
    }

    pub fn get(&self, scene: &SceneGraph, params: &ModelParams, state: &SystemState) -> Result<f64> {
        self.check(scene)?;
        Ok(match *self {
            ParamSelector::Mass { entity } => {
                let e = &scene.entities[entity];
                if e.kind == EntityKind::Rigid {
                    params.body_mass[e.index]
                } else {
                    params.particle_inv_mass[e.particles.clone()].iter().filter(|w| **w > 0.0).map(|w| 1.0 / w).sum()
                }
            }
            ParamSelector::TetMu => params.tet_mu[0],
            ParamSelector::TetLambda => params.tet_lambda[0],
            ParamSelector::ShellMu => params.tri_mu[0],
            ParamSelector::ShellLambda => params.tri_lambda[0],
            ParamSelector::BendStiffness => params.edge_stiffness[0],
            ParamSelector::ContactKe => params.contact.ke,
            ParamSelector::ContactKd => params.contact.kd,
            ParamSelector::ContactKf => params.contact.kf,
            ParamSelector::ContactMu => params.contact.mu,
            ParamSelector::InitialVelocity { entity, axis } => {
                let e = &scene.entities[entity];
                if e.kind == EntityKind::Rigid {
                    state.bodies[e.index].v[axis]
                } else {
                    let dynamic: Vec<usize> = e.particles.clone().filter(|&i| params.particle_inv_mass[i] > 0.0).collect();
                    dynamic.iter().map(|&i| state.particle_u[i][axis]).sum::<f64>() / dynamic.len().max(1) as f64
                }
            }
            ParamSelector::ParticleVelocity { particle, axis } => state.particle_u[particle][axis],
            ParamSelector::PendulumLength { pendulum, link } => params.pendulum_length[pendulum][link],
            ParamSelector::PendulumAngle { pendulum, link } => state.pendulum_q[pendulum][link],
            ParamSelector::GravityY => params.gravity.y,
            ParamSelector::Wind { axis } => params.wind[axis],
        })
    }

    pub fn set(&self, scene: &SceneGraph, params: &mut ModelParams, state: &mut SystemState, value: f64) -> Result<()> {
        self.check(scene)?;
        if !value.is_finite() {
            return Err(SimError::invalid(format!("non-finite value for {}", self.label())));
        }
        match *self {
            ParamSelector::Mass { entity } => {
                let e = &scene.entities[entity];
                if !(value > 0.0) {
                    return Err(SimError::config("mass must be positive"));
                }
                if e.kind == EntityKind::Rigid {
                    params.body_mass[e.index] = value;
                } else {
                    let old = self.get(scene, params, state)?;
                    let scale = old / value;
                    for w in &mut params.particle_inv_mass[e.particles.clone()] {
                        *w *= scale;
                    }
                }
            }
            ParamSelector::TetMu => params.tet_mu.fill(value),
            ParamSelector::TetLambda => params.tet_lambda.fill(value),
            ParamSelector::ShellMu => params.tri_mu.fill(value),
            ParamSelector::ShellLambda => params.tri_lambda.fill(value),
            ParamSelector::BendStiffness => params.edge_stiffness.fill(value),
            ParamSelector::ContactKe => params.contact.ke = value,
            ParamSelector::ContactKd => params.contact.kd = value,
            ParamSelector::ContactKf => params.contact.kf = value,
            ParamSelector::ContactMu => params.contact.mu = value,
            ParamSelector::InitialVelocity { entity, axis } => {
                let e = &scene.entities[entity];
                if e.kind == EntityKind::Rigid {
                    state.bodies[e.index].v[axis] = value;
                } else {
                    for i in e.particles.clone() {
                        if params.particle_inv_mass[i] > 0.0 {
                            state.particle_u[i][axis] = value;
                        }
                    }
                }
            }
            ParamSelector::ParticleVelocity { particle, axis } => state.particle_u[particle][axis] = value,
            ParamSelector::PendulumLength { pendulum, link } => params.pendulum_length[pendulum][link] = value,
            ParamSelector::PendulumAngle { pendulum, link } => state.pendulum_q[pendulum][link] = value,
            ParamSelector::GravityY => params.gravity.y = value,
            ParamSelector::Wind { axis } => params.wind[axis] = value,
        }
        Ok(())
    }

    /// Derivative of the loss with respect to this quantity, read from a
    /// gradient buffer computed at (`params`, `state`).
    pub fn gradient(&self, scene: &SceneGraph, params: &ModelParams, g: &GradBuffer) -> Result<f64> {
        self.check(scene)?;
        let d = &g.d_params;
        let s = &g.d_state0;
        Ok(match *self {
            ParamSelector::Mass { entity } => {
                let e = &scene.entities[entity];
                if e.kind == EntityKind::Rigid {
                    d.body_mass[e.index]
                } else {
                    // wᵢ = cᵢ/M, so dwᵢ/dM = −wᵢ/M.
                    let ws = &params.particle_inv_mass[e.particles.clone()];
                    let m: f64 = ws.iter().filter(|w| **w > 0.0).map(|w| 1.0 / w).sum();
                    e.particles.clone().filter(|&i| params.particle_inv_mass[i] > 0.0)
                        .map(|i| -d.particle_inv_mass[i] * params.particle_inv_mass[i] / m)
                        .sum()
                }
            }
            ParamSelector::TetMu => d.tet_mu.iter().sum(),
            ParamSelector::TetLambda => d.tet_lambda.iter().sum(),
            ParamSelector::ShellMu => d.tri_mu.iter().sum(),
            ParamSelector::ShellLambda => d.tri_lambda.iter().sum(),
            ParamSelector::BendStiffness => d.edge_stiffness.iter().sum(),
            ParamSelector::ContactKe => d.contact.ke,
            ParamSelector::ContactKd => d.contact.kd,
            ParamSelector::ContactKf => d.contact.kf,
            ParamSelector::ContactMu => d.contact.mu,
            ParamSelector::InitialVelocity { entity, axis } => {
                let e = &scene.entities[entity];
                if e.kind == EntityKind::Rigid {
                    s.bodies[e.index].v[axis]
                } else {
                    e.particles.clone().filter(|&i| params.particle_inv_mass[i] > 0.0).map(|i| s.particle_u[i][axis]).sum()
                }
            }
            ParamSelector::ParticleVelocity { particle, axis } => s.particle_u[particle][axis],
            ParamSelector::PendulumLength { pendulum, link } => d.pendulum_length[pendulum][link],
            ParamSelector::PendulumAngle { pendulum, link } => s.pendulum_q[pendulum][link],
            ParamSelector::GravityY => d.gravity.y,
            ParamSelector::Wind { axis } => d.wind[axis],
        })
    }
}
