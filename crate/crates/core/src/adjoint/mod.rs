//! Episode tape, forward rollout and the reverse sweep.
//!
//! The forward pass stores the full input state of every step together
//! with the contact sets the step used. The reverse pass walks the steps
//! backwards, pulling frame cotangents through the renderer and state
//! cotangents through each step's adjoint.

use std::sync::Arc;

use crate::dynamics::{world_step, world_step_adjoint, StepAux};
use crate::error::{Result, SimError};
use crate::render::{Frame, Image, RenderCache};
use crate::scene::SceneGraph;
use crate::state::{GradBuffer, ModelParams, StepActivation, SystemState};

/// Kernels a step may run, in forward order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    Impulse,
    FemForce,
    ShellForce,
    ParticleContact,
    ParticleIntegrate,
    RigidContact,
    RigidIntegrate,
    PendulumIntegrate,
}

impl Kernel {
    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Impulse => "impulse",
            Kernel::FemForce => "fem_force",
            Kernel::ShellForce => "shell_force",
            Kernel::ParticleContact => "particle_contact",
            Kernel::ParticleIntegrate => "particle_integrate",
            Kernel::RigidContact => "rigid_contact",
            Kernel::RigidIntegrate => "rigid_integrate",
            Kernel::PendulumIntegrate => "pendulum_integrate",
        }
    }
}

fn kernels_for(scene: &SceneGraph, step: usize) -> Vec<Kernel> {
    let mut k = Vec::new();
    if scene.impulses.iter().any(|i| i.step == step) {
        k.push(Kernel::Impulse);
    }
    if !scene.tet_mesh.is_empty() {
        k.push(Kernel::FemForce);
    }
    if !scene.shell_mesh.is_empty() {
        k.push(Kernel::ShellForce);
    }
    if scene.particle_count > 0 {
        if !scene.planes.is_empty() {
            k.push(Kernel::ParticleContact);
        }
        k.push(Kernel::ParticleIntegrate);
    }
    if !scene.bodies.is_empty() {
        if !scene.planes.is_empty() {
            k.push(Kernel::RigidContact);
        }
        k.push(Kernel::RigidIntegrate);
    }
    if !scene.pendula.is_empty() {
        k.push(Kernel::PendulumIntegrate);
    }
    k
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub state_before: SystemState,
    pub kernel_ids: Vec<Kernel>,
    /// `None` when the intermediates were dropped; the reverse pass then
    /// refuses to run.
    pub aux: Option<StepAux>,
}

#[derive(Debug, Clone)]
pub struct FrameRecord {
    /// Index of the state the frame shows (`0` is the initial state).
    pub state_index: usize,
    pub frame: Frame,
    pub cache: Option<RenderCache>,
}

#[derive(Debug, Clone)]
pub struct EpisodeTape {
    pub scene: Arc<SceneGraph>,
    pub params: ModelParams,
    pub dt: f64,
    pub steps: Vec<StepRecord>,
    pub final_state: SystemState,
    pub frames: Vec<FrameRecord>,
    pub activations: Vec<StepActivation>,
}

impl EpisodeTape {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// State after `t` steps, `0 ≤ t ≤ T`.
    pub fn state(&self, t: usize) -> &SystemState {
        if t == self.steps.len() {
            &self.final_state
        } else {
            &self.steps[t].state_before
        }
    }

    pub fn frame_images(&self) -> Vec<Frame> {
        self.frames.iter().map(|f| f.frame.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOptions {
    pub dt: f64,
    pub horizon: usize,
    /// Render one frame every `stride` steps; `None` disables rendering.
    pub render_stride: Option<usize>,
    /// Per-step actuation offsets; empty for an unactuated episode.
    pub activations: Vec<StepActivation>,
}

impl RolloutOptions {
    pub fn new(dt: f64, horizon: usize) -> Self {
        RolloutOptions { dt, horizon, render_stride: None, activations: Vec::new() }
    }

    pub fn with_render_stride(mut self, stride: usize) -> Self {
        self.render_stride = Some(stride);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(SimError::config("horizon must be ≥ 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::config("dt must be positive"));
        }
        if self.render_stride == Some(0) {
            return Err(SimError::config("render stride must be ≥ 1"));
        }
        if !self.activations.is_empty() && self.activations.len() != self.horizon {
            return Err(SimError::ShapeMismatch(format!(
                "{} activation steps for horizon {}",
                self.activations.len(),
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        self.render_stride.map_or(0, |s| self.horizon / s)
    }
}

/// Renders state `s` with the scene camera.
pub fn render_state(scene: &SceneGraph, params: &ModelParams, s: &SystemState) -> (Frame, RenderCache) {
    let pos = scene.render_positions(s, params);
    scene.renderer.render(&scene.render_mesh, &pos)
}

/// Explicit viscous friction and contact damping are only stable for
/// `k·dt·w < 2` on the lightest contact particle. The forward pass survives
/// violations thanks to the Coulomb cap, but the linearized map does not, so
/// gradients grow without bound.
fn warn_if_stiff(scene: &SceneGraph, params: &ModelParams, dt: f64) {
    if scene.planes.is_empty() {
        return;
    }
    let w_max = params.particle_inv_mass.iter().cloned().fold(0.0, f64::max);
    let k = params.contact.kf.max(params.contact.kd);
    if k * dt * w_max >= 2.0 {
        log::warn!("contact k·dt·w = {:.2} exceeds the explicit stability limit of 2; gradients will be unreliable", k * dt * w_max);
    }
}

/// Runs the episode forward from `state0`. Frame `i` shows the state after
/// `(i+1)·stride` steps.
pub fn rollout(scene: &Arc<SceneGraph>, params: &ModelParams, state0: &SystemState, opts: &RolloutOptions) -> Result<EpisodeTape> {
    opts.validate()?;
    scene.validate(params, state0)?;
    warn_if_stiff(scene, params, opts.dt);
    let mut steps = Vec::with_capacity(opts.horizon);
    let mut frames = Vec::with_capacity(opts.frame_count());
    let mut s = state0.clone();
    for t in 0..opts.horizon {
        let act = opts.activations.get(t);
        let (next, aux) = world_step(scene, params, &s, act, t, opts.dt)?;
        steps.push(StepRecord { state_before: s, kernel_ids: kernels_for(scene, t), aux: Some(aux) });
        s = next;
        if let Some(stride) = opts.render_stride {
            if (t + 1) % stride == 0 {
                let (frame, cache) = render_state(scene, params, &s);
                frames.push(FrameRecord { state_index: t + 1, frame, cache: Some(cache) });
            }
        }
    }
    Ok(EpisodeTape {
        scene: Arc::clone(scene),
        params: params.clone(),
        dt: opts.dt,
        steps,
        final_state: s,
        frames,
        activations: opts.activations.clone(),
    })
}

/// Loss cotangent for one rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrad {
    pub rgb: Image,
    pub silhouette: Image,
}

impl FrameGrad {
    pub fn zeros_like(frame: &Frame) -> Self {
        FrameGrad {
            rgb: Image::new(frame.rgb.width(), frame.rgb.height(), frame.rgb.channels()),
            silhouette: Image::new(frame.silhouette.width(), frame.silhouette.height(), 1),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rgb.is_zero() && self.silhouette.is_zero()
    }
}

/// Reverse sweep for a loss that depends on the rendered frames only.
pub fn backward(tape: &EpisodeTape, frame_grads: &[FrameGrad]) -> Result<GradBuffer> {
    backward_full(tape, Some(frame_grads), None)
}

/// Reverse sweep with optional frame cotangents and optional per-state
/// cotangents (`T+1` entries, index `t` is the state after `t` steps).
pub fn backward_full(
    tape: &EpisodeTape,
    frame_grads: Option<&[FrameGrad]>,
    state_grads: Option<&[SystemState]>,
) -> Result<GradBuffer> {
    let scene = &tape.scene;
    let params = &tape.params;
    let t_max = tape.horizon();
    if let Some(fg) = frame_grads {
        if fg.len() != tape.frames.len() {
            return Err(SimError::ShapeMismatch(format!("{} frame gradients for {} frames", fg.len(), tape.frames.len())));
        }
        for (g, f) in fg.iter().zip(&tape.frames) {
            if !g.rgb.same_shape(&f.frame.rgb) || !g.silhouette.same_shape(&f.frame.silhouette) {
                return Err(SimError::ShapeMismatch(format!("frame gradient for state {} has the wrong size", f.state_index)));
            }
        }
    }
    if let Some(sg) = state_grads {
        if sg.len() != t_max + 1 {
            return Err(SimError::ShapeMismatch(format!("{} state gradients for {} states", sg.len(), t_max + 1)));
        }
    }

    let mut d_params = params.zeros_like();
    let mut d_acts = if tape.activations.is_empty() { Vec::new() } else { vec![StepActivation::default(); t_max] };
    let mut bar = tape.final_state.zeros_like();
    let mut frame_idx = tape.frames.len();

    let seed_state = |t: usize, bar: &mut SystemState, d_params: &mut ModelParams, frame_idx: &mut usize| -> Result<()> {
        if let Some(sg) = state_grads {
            bar.add_assign(&sg[t]);
        }
        while *frame_idx > 0 && tape.frames[*frame_idx - 1].state_index == t {
            *frame_idx -= 1;
            let rec = &tape.frames[*frame_idx];
            if let Some(fg) = frame_grads {
                let g = &fg[*frame_idx];
                if g.is_zero() {
                    continue;
                }
                let cache = rec.cache.as_ref().ok_or_else(|| SimError::MissingAdjoint { kernel: "render".into(), step: t })?;
                let rg = scene.renderer.render_adjoint(&scene.render_mesh, cache, &g.rgb, &g.silhouette)?;
                scene.render_positions_adjoint(tape.state(t), params, &rg.positions, bar, d_params);
            }
        }
        Ok(())
    };

    seed_state(t_max, &mut bar, &mut d_params, &mut frame_idx)?;
    for t in (0..t_max).rev() {
        let rec = &tape.steps[t];
        let aux = rec.aux.as_ref().ok_or_else(|| SimError::MissingAdjoint {
            kernel: rec.kernel_ids.first().map_or("step", |k| k.name()).into(),
            step: t,
        })?;
        let act = tape.activations.get(t);
        let act_bar = d_acts.get_mut(t);
        bar = world_step_adjoint(scene, params, &rec.state_before, act, t, tape.dt, aux, &bar, &mut d_params, act_bar)?;
        seed_state(t, &mut bar, &mut d_params, &mut frame_idx)?;
    }
    Ok(GradBuffer { d_state0: bar, d_params, d_activations: d_acts })
}

/// Largest relative disagreement between `analytic` and central finite
/// differences of `f` over the coordinates in `subset`:
/// `|g − g_fd| / max(|g_fd|, 1e-8)`.
pub fn grad_check<F>(mut f: F, x: &[f64], analytic: &[f64], eps: f64, subset: &[usize]) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(SimError::invalid("finite-difference step must be positive"));
    }
    if analytic.len() != x.len() {
        return Err(SimError::ShapeMismatch(format!("{} gradient entries for {} parameters", analytic.len(), x.len())));
    }
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    for &i in subset {
        if i >= x.len() {
            return Err(SimError::invalid(format!("parameter index {i} out of range")));
        }
        xp[i] = x[i] + eps;
        let up = f(&xp)?;
        xp[i] = x[i] - eps;
        let down = f(&xp)?;
        xp[i] = x[i];
        let fd = (up - down) / (2.0 * eps);
        if !fd.is_finite() {
            return Err(SimError::NonFiniteDifference(format!("#{i}")));
        }
        worst = worst.max((analytic[i] - fd).abs() / fd.abs().max(1e-8));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_grad_check() {
        let err = grad_check(|x| Ok(x[0] * x[0]), &[3.0], &[6.0], 1e-4, &[0]).unwrap();
        assert!(err < 1e-10);
    }

    #[test]
    fn non_finite_difference_reported() {
        let r = grad_check(|x| Ok(if x[0] > 1.0 { f64::NAN } else { 0.0 }), &[1.0], &[0.0], 1e-3, &[0]);
        assert!(matches!(r, Err(SimError::NonFiniteDifference(_))));
    }
}
