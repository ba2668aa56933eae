//! Physics kernels and the assembled world step.
//!
//! One step runs, in order: scheduled impulses, particle forces (FEM,
//! shell, plane contact), semi-implicit particle integration, rigid
//! contact and integration, pendulum integration. The adjoint replays the
//! same sequence backwards using the contact sets recorded in [`StepAux`].

pub mod contact;
pub mod fem;
pub mod particles;
pub mod pendulum;
pub mod rigid;
pub mod shell;

use crate::error::{Result, SimError};
use crate::math::Vec3;
use crate::scene::{EntityKind, Impulse, SceneGraph};
use crate::state::{ModelParams, StepActivation, SystemState};

use contact::{contact_force, contact_force_adjoint, ContactParams};
use rigid::{
    apply_impulse, apply_impulse_adjoint, rigid_contact_set, rigid_contact_wrench, rigid_contact_wrench_adjoint,
    rigid_step, rigid_step_adjoint,
};
use shell::{ShellGrads, ShellInputs};

/// Per-step data the adjoint needs beyond the input state: the active
/// contact sets, indexed `[plane]` for particles and `[body][plane]` for
/// rigid surface points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepAux {
    pub particle_contacts: Vec<Vec<usize>>,
    pub body_contacts: Vec<Vec<Vec<usize>>>,
}

fn total_activation(base: &[f64], extra: Option<&Vec<f64>>) -> Vec<f64> {
    match extra {
        Some(a) if a.len() == base.len() => base.iter().zip(a).map(|(x, y)| x + y).collect(),
        _ => base.to_vec(),
    }
}

fn check_activation(scene: &SceneGraph, act: Option<&StepActivation>) -> Result<()> {
    if let Some(a) = act {
        let (nt, ne) = (scene.tet_mesh.len(), scene.shell_mesh.edges.len());
        if (!a.tet.is_empty() && a.tet.len() != nt) || (!a.edge.is_empty() && a.edge.len() != ne) {
            return Err(SimError::ShapeMismatch(format!(
                "activation has {} tet / {} edge entries, scene has {nt} / {ne}",
                a.tet.len(),
                a.edge.len()
            )));
        }
    }
    Ok(())
}

fn group_mass(scene: &SceneGraph, params: &ModelParams, entity: usize) -> f64 {
    let w = &params.particle_inv_mass[scene.entities[entity].particles.clone()];
    w.iter().filter(|w| **w > 0.0).map(|w| 1.0 / w).sum()
}

fn apply_one_impulse(scene: &SceneGraph, params: &ModelParams, s: &mut SystemState, imp: &Impulse) {
    let ent = &scene.entities[imp.entity];
    match ent.kind {
        EntityKind::Rigid => {
            let b = ent.index;
            let point = imp.point.unwrap_or(s.bodies[b].x);
            s.bodies[b] = apply_impulse(&s.bodies[b], params.body_mass[b], &scene.bodies[b].inertia, &imp.impulse, &point);
        }
        EntityKind::Pendulum => {}
        _ => {
            let m = group_mass(scene, params, imp.entity);
            if m > 0.0 {
                let dv = imp.impulse / m;
                for i in ent.particles.clone() {
                    if params.particle_inv_mass[i] > 0.0 {
                        s.particle_u[i] += dv;
                    }
                }
            }
        }
    }
}

/// Reverse of [`apply_one_impulse`]; `s` is the state before the impulse
/// and `bar` the cotangent after it (updated in place to the one before).
fn apply_one_impulse_adjoint(
    scene: &SceneGraph,
    params: &ModelParams,
    s: &SystemState,
    imp: &Impulse,
    bar: &mut SystemState,
    params_bar: &mut ModelParams,
) {
    let ent = &scene.entities[imp.entity];
    match ent.kind {
        EntityKind::Rigid => {
            let b = ent.index;
            let point = imp.point.unwrap_or(s.bodies[b].x);
            let (sb, mb) =
                apply_impulse_adjoint(&s.bodies[b], params.body_mass[b], &scene.bodies[b].inertia, &imp.impulse, &point, &bar.bodies[b]);
            let x_bar = bar.bodies[b].x;
            bar.bodies[b] = sb;
            if imp.point.is_none() {
                // The point follows the center of mass, so the lever arm is
                // identically zero and x receives no rotational cotangent.
                bar.bodies[b].x = x_bar;
            }
            params_bar.body_mass[b] += mb;
        }
        EntityKind::Pendulum => {}
        _ => {
            let m = group_mass(scene, params, imp.entity);
            if m > 0.0 {
                // v' = v + J/M for dynamic particles, M = Σ 1/wᵢ.
                let mut m_bar = 0.0;
                for i in ent.particles.clone() {
                    if params.particle_inv_mass[i] > 0.0 {
                        m_bar -= bar.particle_u[i].dot(&imp.impulse) / (m * m);
                    }
                }
                for i in ent.particles.clone() {
                    let w = params.particle_inv_mass[i];
                    if w > 0.0 {
                        params_bar.particle_inv_mass[i] -= m_bar / (w * w);
                    }
                }
            }
        }
    }
}

fn impulses_at(scene: &SceneGraph, step: usize) -> impl Iterator<Item = &Impulse> {
    scene.impulses.iter().filter(move |i| i.step == step)
}

fn particle_forces(
    scene: &SceneGraph,
    params: &ModelParams,
    s: &SystemState,
    tet_act: &[f64],
    edge_act: &[f64],
    contacts: &[Vec<usize>],
) -> Vec<Vec3> {
    let mut f = vec![Vec3::zeros(); s.particle_q.len()];
    if !scene.tet_mesh.is_empty() {
        fem::fem_forces(&s.particle_q, &scene.tet_mesh, &params.tet_mu, &params.tet_lambda, tet_act, &mut f);
    }
    if !scene.shell_mesh.is_empty() {
        let inp = ShellInputs {
            tri_mu: &params.tri_mu,
            tri_lambda: &params.tri_lambda,
            edge_stiffness: &params.edge_stiffness,
            edge_act,
            wind: params.wind,
            aero: scene.aero,
        };
        shell::shell_forces(&s.particle_q, &s.particle_u, &scene.shell_mesh, &inp, &mut f);
    }
    for (plane, active) in scene.planes.iter().zip(contacts) {
        for &i in active {
            f[i] += contact_force(&s.particle_q[i], &s.particle_u[i], plane, &params.contact);
        }
    }
    f
}

/// Advances `state` by one step of length `dt`. `step` is the global step
/// index used for impulse scheduling and error reports.
pub fn world_step(
    scene: &SceneGraph,
    params: &ModelParams,
    state: &SystemState,
    act: Option<&StepActivation>,
    step: usize,
    dt: f64,
) -> Result<(SystemState, StepAux)> {
    check_activation(scene, act)?;
    let mut s = state.clone();
    for imp in impulses_at(scene, step) {
        apply_one_impulse(scene, params, &mut s, imp);
    }

    let particle_contacts: Vec<Vec<usize>> = scene
        .planes
        .iter()
        .map(|pl| {
            (0..s.particle_q.len())
                .filter(|&i| params.particle_inv_mass[i] > 0.0 && pl.generates_contact(&s.particle_q[i]))
                .collect()
        })
        .collect();
    let tet_act = total_activation(&params.tet_activation, act.map(|a| &a.tet));
    let edge_act = total_activation(&params.edge_activation, act.map(|a| &a.edge));
    let f = particle_forces(scene, params, &s, &tet_act, &edge_act, &particle_contacts);
    let (q, u) = particles::integrate_particles(&s.particle_q, &s.particle_u, &f, &params.particle_inv_mass, &params.gravity, dt)
        .map_err(|e| match e {
            SimError::NonFiniteForce(i) => SimError::Diverged { step, quantity: format!("force on particle {i}") },
            other => other,
        })?;

    let mut body_contacts = Vec::with_capacity(scene.bodies.len());
    let mut bodies = Vec::with_capacity(scene.bodies.len());
    for (b, body) in scene.bodies.iter().enumerate() {
        let sb = &s.bodies[b];
        let sets: Vec<Vec<usize>> = scene.planes.iter().map(|pl| rigid_contact_set(sb, &body.points, pl)).collect();
        let (mut force, mut torque) = (Vec3::zeros(), Vec3::zeros());
        for (pl, set) in scene.planes.iter().zip(&sets) {
            let (fc, tc) = rigid_contact_wrench(sb, &body.points, set, pl, &params.contact);
            force += fc;
            torque += tc;
        }
        bodies.push(rigid_step(sb, &force, &torque, params.body_mass[b], &body.inertia, &params.gravity, dt));
        body_contacts.push(sets);
    }

    let g = -params.gravity.y;
    let mut pendulum_q = Vec::with_capacity(scene.pendula.len());
    let mut pendulum_u = Vec::with_capacity(scene.pendula.len());
    for (p, pend) in scene.pendula.iter().enumerate() {
        let (th, om) = pendulum::pendulum_step(
            pend.links,
            &s.pendulum_q[p],
            &s.pendulum_u[p],
            &params.pendulum_length[p],
            &params.pendulum_mass[p],
            g,
            dt,
        );
        pendulum_q.push(th);
        pendulum_u.push(om);
    }

    let next = SystemState { particle_q: q, particle_u: u, bodies, pendulum_q, pendulum_u };
    if let Some(quantity) = next.first_non_finite() {
        return Err(SimError::Diverged { step, quantity });
    }
    Ok((next, StepAux { particle_contacts, body_contacts }))
}

/// Reverse of [`world_step`]. Given the cotangent of the output state,
/// returns the cotangent of the input state and accumulates parameter and
/// activation cotangents.
#[allow(clippy::too_many_arguments)]
pub fn world_step_adjoint(
    scene: &SceneGraph,
    params: &ModelParams,
    state: &SystemState,
    act: Option<&StepActivation>,
    step: usize,
    dt: f64,
    aux: &StepAux,
    out_bar: &SystemState,
    params_bar: &mut ModelParams,
    act_bar: Option<&mut StepActivation>,
) -> Result<SystemState> {
    check_activation(scene, act)?;
    if aux.particle_contacts.len() != scene.planes.len() || aux.body_contacts.len() != scene.bodies.len() {
        return Err(SimError::MissingAdjoint { kernel: "contact".into(), step });
    }
    // Replay the impulses to recover the post-impulse state.
    let imps: Vec<&Impulse> = impulses_at(scene, step).collect();
    let mut pre = Vec::with_capacity(imps.len());
    let mut s = state.clone();
    for imp in &imps {
        pre.push(s.clone());
        apply_one_impulse(scene, params, &mut s, imp);
    }

    let mut bar = s.zeros_like();

    let g = -params.gravity.y;
    for (p, pend) in scene.pendula.iter().enumerate() {
        let adj = pendulum::pendulum_step_adjoint(
            pend.links,
            &s.pendulum_q[p],
            &s.pendulum_u[p],
            &params.pendulum_length[p],
            &params.pendulum_mass[p],
            g,
            dt,
            &out_bar.pendulum_q[p],
            &out_bar.pendulum_u[p],
        );
        for k in 0..2 {
            bar.pendulum_q[p][k] += adj.th[k];
            bar.pendulum_u[p][k] += adj.om[k];
            params_bar.pendulum_length[p][k] += adj.len[k];
            params_bar.pendulum_mass[p][k] += adj.mass[k];
        }
        params_bar.gravity.y -= adj.g;
    }

    for (b, body) in scene.bodies.iter().enumerate() {
        let sb = &s.bodies[b];
        let sets = &aux.body_contacts[b];
        let (mut force, mut torque) = (Vec3::zeros(), Vec3::zeros());
        for (pl, set) in scene.planes.iter().zip(sets) {
            let (fc, tc) = rigid_contact_wrench(sb, &body.points, set, pl, &params.contact);
            force += fc;
            torque += tc;
        }
        let adj = rigid_step_adjoint(sb, &force, &torque, params.body_mass[b], &body.inertia, dt, &out_bar.bodies[b]);
        bar.bodies[b].add(&adj.state);
        params_bar.body_mass[b] += adj.mass;
        params_bar.gravity += adj.gravity;
        let mut k_bar = ContactParams::zero();
        for (pl, set) in scene.planes.iter().zip(sets) {
            let sbar = rigid_contact_wrench_adjoint(sb, &body.points, set, pl, &params.contact, &adj.force, &adj.torque, &mut k_bar);
            bar.bodies[b].add(&sbar);
        }
        params_bar.contact.add(&k_bar);
    }

    let tet_act = total_activation(&params.tet_activation, act.map(|a| &a.tet));
    let edge_act = total_activation(&params.edge_activation, act.map(|a| &a.edge));
    let f = particle_forces(scene, params, &s, &tet_act, &edge_act, &aux.particle_contacts);
    let pa = particles::integrate_particles_adjoint(&f, &params.particle_inv_mass, dt, &out_bar.particle_q, &out_bar.particle_u);
    for i in 0..s.particle_q.len() {
        bar.particle_q[i] += pa.x[i];
        bar.particle_u[i] += pa.v[i];
        params_bar.particle_inv_mass[i] += pa.inv_mass[i];
    }
    params_bar.gravity += pa.gravity;
    let f_bar = pa.f;

    let mut k_bar = ContactParams::zero();
    for (plane, active) in scene.planes.iter().zip(&aux.particle_contacts) {
        for &i in active {
            let adj = contact_force_adjoint(&s.particle_q[i], &s.particle_u[i], plane, &params.contact, &f_bar[i]);
            bar.particle_q[i] += adj.p;
            bar.particle_u[i] += adj.u;
            k_bar.add(&adj.params);
        }
    }
    params_bar.contact.add(&k_bar);

    let mut tet_act_bar = vec![0.0; scene.tet_mesh.len()];
    let mut edge_act_bar = vec![0.0; scene.shell_mesh.edges.len()];
    if !scene.shell_mesh.is_empty() {
        let inp = ShellInputs {
            tri_mu: &params.tri_mu,
            tri_lambda: &params.tri_lambda,
            edge_stiffness: &params.edge_stiffness,
            edge_act: &edge_act,
            wind: params.wind,
            aero: scene.aero,
        };
        let mut g = ShellGrads {
            x: &mut bar.particle_q,
            v: &mut bar.particle_u,
            tri_mu: &mut params_bar.tri_mu,
            tri_lambda: &mut params_bar.tri_lambda,
            edge_stiffness: &mut params_bar.edge_stiffness,
            edge_act: &mut edge_act_bar,
            wind: &mut params_bar.wind,
        };
        shell::shell_forces_adjoint(&s.particle_q, &s.particle_u, &scene.shell_mesh, &inp, &f_bar, &mut g);
    }
    if !scene.tet_mesh.is_empty() {
        fem::fem_forces_adjoint(
            &s.particle_q,
            &scene.tet_mesh,
            &params.tet_mu,
            &params.tet_lambda,
            &tet_act,
            &f_bar,
            &mut bar.particle_q,
            &mut params_bar.tet_mu,
            &mut params_bar.tet_lambda,
            &mut tet_act_bar,
        );
    }
    for (a, b) in params_bar.tet_activation.iter_mut().zip(&tet_act_bar) {
        *a += b;
    }
    for (a, b) in params_bar.edge_activation.iter_mut().zip(&edge_act_bar) {
        *a += b;
    }
    if let Some(ab) = act_bar {
        if ab.tet.len() != tet_act_bar.len() {
            ab.tet = vec![0.0; tet_act_bar.len()];
        }
        if ab.edge.len() != edge_act_bar.len() {
            ab.edge = vec![0.0; edge_act_bar.len()];
        }
        for (a, b) in ab.tet.iter_mut().zip(&tet_act_bar) {
            *a += b;
        }
        for (a, b) in ab.edge.iter_mut().zip(&edge_act_bar) {
            *a += b;
        }
    }

    for (imp, before) in imps.iter().zip(&pre).rev() {
        apply_one_impulse_adjoint(scene, params, before, imp, &mut bar, params_bar);
    }
    Ok(bar)
}
