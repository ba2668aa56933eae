//! Open-loop visuomotor control. A bank of phase-shifted sinusoids feeds a
//! single zero-bias linear layer followed by `tanh`; the outputs are added to
//! the passive activation of every tet (volume actuation) or shell edge
//! (bending actuation). Weights are trained with Adam against an image loss.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adjoint::{backward, backward_full, rollout, EpisodeTape, RolloutOptions};
use crate::error::{Result, SimError};
use crate::estimation::optim::{projected_step, Optimizer, OptimizerConfig};
use crate::estimation::selector::ParamSelector;
use crate::estimation::{estimate, frame_loss, Channel, LossMode, LossSpec, Problem};
use crate::math::Vec3;
use crate::render::Frame;
use crate::scene::SceneGraph;
use crate::state::{ModelParams, StepActivation, SystemState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actuation {
    /// One output per tetrahedron.
    Volume,
    /// One output per shell hinge.
    Bending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidController {
    pub frequencies: Vec<f64>,
    pub phases: Vec<f64>,
    /// Row-major `elements × signals`.
    pub weights: Vec<f64>,
    pub elements: usize,
    pub scale: f64,
    pub actuation: Actuation,
}

impl SinusoidController {
    /// `n` signals at 1 Hz with equally spaced phases, zero weights and the
    /// default amplitude of 0.3.
    pub fn new(elements: usize, n: usize, actuation: Actuation) -> Self {
        SinusoidController {
            frequencies: vec![2.0 * PI; n],
            phases: (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect(),
            weights: vec![0.0; elements * n],
            elements,
            scale: 0.3,
            actuation,
        }
    }

    /// Controller sized for every actuatable element of `scene`.
    pub fn for_scene(scene: &SceneGraph, n: usize, actuation: Actuation) -> Self {
        let elements = match actuation {
            Actuation::Volume => scene.tet_mesh.len(),
            Actuation::Bending => scene.shell_mesh.edges.len(),
        };
        Self::new(elements, n, actuation)
    }

    pub fn signal_count(&self) -> usize {
        self.frequencies.len()
    }

    /// Draws every weight from `N(0, std²)`.
    pub fn randomize(&mut self, seed: u64, std: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).expect("finite standard deviation");
        for w in &mut self.weights {
            *w = normal.sample(&mut rng);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.signal_count();
        if self.phases.len() != n || self.weights.len() != self.elements * n {
            return Err(SimError::ShapeMismatch(format!(
                "controller with {n} frequencies, {} phases and {} weights for {} elements",
                self.phases.len(),
                self.weights.len(),
                self.elements
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(SimError::config("controller scale must be positive"));
        }
        if self.weights.iter().chain(&self.frequencies).chain(&self.phases).any(|x| !x.is_finite()) {
            return Err(SimError::config("controller has non-finite entries"));
        }
        Ok(())
    }

    fn signals(&self, t: f64) -> Vec<f64> {
        self.frequencies.iter().zip(&self.phases).map(|(w, p)| (w * t + p).sin()).collect()
    }

    fn pre_activations(&self, sig: &[f64]) -> Vec<f64> {
        self.weights.chunks(sig.len().max(1)).map(|row| row.iter().zip(sig).map(|(w, s)| w * s).sum()).collect()
    }

    /// Per-step activation offsets for an episode of `horizon` steps. Step
    /// `k` uses the controller output at `t = k·dt`.
    pub fn activations(&self, horizon: usize, dt: f64) -> Vec<StepActivation> {
        (0..horizon)
            .map(|k| {
                let out = controller_forward(k as f64 * dt, self);
                match self.actuation {
                    Actuation::Volume => StepActivation { tet: out, edge: Vec::new() },
                    Actuation::Bending => StepActivation { tet: Vec::new(), edge: out },
                }
            })
            .collect()
    }

    /// Chains per-step activation cotangents back to the weights.
    pub fn weight_gradient(&self, d_activations: &[StepActivation], dt: f64) -> Vec<f64> {
        let n = self.signal_count();
        let mut g = vec![0.0; self.weights.len()];
        for (k, da) in d_activations.iter().enumerate() {
            let bar = match self.actuation {
                Actuation::Volume => &da.tet,
                Actuation::Bending => &da.edge,
            };
            if bar.is_empty() {
                continue;
            }
            let sig = self.signals(k as f64 * dt);
            let z = self.pre_activations(&sig);
            for e in 0..self.elements {
                let th = z[e].tanh();
                let dz = bar[e] * self.scale * (1.0 - th * th);
                if dz != 0.0 {
                    for i in 0..n {
                        g[e * n + i] += dz * sig[i];
                    }
                }
            }
        }
        g
    }
}

/// `scale·tanh(W·sin(ω t + φ))`, one entry per element.
pub fn controller_forward(t: f64, ctrl: &SinusoidController) -> Vec<f64> {
    let sig = ctrl.signals(t);
    ctrl.pre_activations(&sig).into_iter().map(|z| ctrl.scale * z.tanh()).collect()
}

/// What the task is scored on.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Pixel MSE between the last rendered frame and the target image.
    LastFrame,
    /// Mean squared distance between the center of mass and a target point,
    /// summed over every step of the episode. Needs 3D supervision.
    ComTrajectory { point: Vec3 },
}

#[derive(Debug, Clone)]
pub struct ControlTask {
    pub scene: Arc<SceneGraph>,
    pub params: ModelParams,
    pub state0: SystemState,
    /// Must render at least one frame.
    pub options: RolloutOptions,
    pub target: Frame,
    pub objective: Objective,
}

impl ControlTask {
    pub fn new(scene: Arc<SceneGraph>, params: ModelParams, state0: SystemState, options: RolloutOptions, target: Frame) -> Self {
        ControlTask { scene, params, state0, options, target, objective: Objective::LastFrame }
    }

    pub fn validate(&self) -> Result<()> {
        self.options.validate()?;
        if self.options.frame_count() == 0 {
            return Err(SimError::config("control task renders no frames"));
        }
        let cam = &self.scene.renderer.camera;
        if self.target.rgb.width() != cam.width || self.target.rgb.height() != cam.height {
            return Err(SimError::ShapeMismatch(format!(
                "target image is {}x{}, renderer is {}x{}",
                self.target.rgb.width(),
                self.target.rgb.height(),
                cam.width,
                cam.height
            )));
        }
        Ok(())
    }

    fn targets(&self) -> Vec<Frame> {
        vec![self.target.clone(); self.options.frame_count()]
    }

    fn last_frame_spec() -> LossSpec {
        LossSpec { mode: LossMode::LastFrame, channel: Channel::Rgb }
    }

    /// Image loss of a finished rollout: last-frame pixel MSE.
    pub fn image_loss(&self, tape: &EpisodeTape) -> Result<f64> {
        Ok(frame_loss(&tape.frame_images(), &self.targets(), &Self::last_frame_spec())?.0)
    }

    fn com_loss(&self, tape: &EpisodeTape, point: &Vec3) -> (f64, Vec<SystemState>) {
        let t_max = tape.horizon();
        let scale = 1.0 / t_max as f64;
        let mut loss = 0.0;
        let mut grads = vec![tape.state(0).zeros_like()];
        for t in 1..=t_max {
            let s = tape.state(t);
            let d = self.scene.center_of_mass(s, &self.params) - point;
            loss += scale * d.norm_squared();
            grads.push(self.scene.center_of_mass_adjoint(s, &self.params, &(d * (2.0 * scale))));
        }
        (loss, grads)
    }

    fn rollout_with(&self, ctrl: &SinusoidController) -> Result<EpisodeTape> {
        let opts = RolloutOptions { activations: ctrl.activations(self.options.horizon, self.options.dt), ..self.options.clone() };
        rollout(&self.scene, &self.params, &self.state0, &opts)
    }

    /// Objective value and its gradient with respect to the controller
    /// weights.
    pub fn policy_loss_and_grad(&self, ctrl: &SinusoidController) -> Result<(f64, Vec<f64>, EpisodeTape)> {
        let tape = self.rollout_with(ctrl)?;
        let (loss, g) = match &self.objective {
            Objective::LastFrame => {
                let (loss, fg) = frame_loss(&tape.frame_images(), &self.targets(), &Self::last_frame_spec())?;
                (loss, backward(&tape, &fg)?)
            }
            Objective::ComTrajectory { point } => {
                let (loss, sg) = self.com_loss(&tape, point);
                (loss, backward_full(&tape, None, Some(&sg))?)
            }
        };
        Ok((loss, ctrl.weight_gradient(&g.d_activations, self.options.dt), tape))
    }

    pub fn policy_loss(&self, ctrl: &SinusoidController) -> Result<f64> {
        let tape = self.rollout_with(ctrl)?;
        match &self.objective {
            Objective::LastFrame => self.image_loss(&tape),
            Objective::ComTrajectory { point } => Ok(self.com_loss(&tape, point).0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolicyResult {
    /// Weights with the lowest objective seen.
    pub controller: SinusoidController,
    pub loss_trace: Vec<f64>,
    /// Last-frame image loss of every iterate (equal to `loss_trace` for the
    /// image objective).
    pub image_trace: Vec<f64>,
    pub best_loss: f64,
    pub best_frame: Frame,
}

/// Trains the controller weights with the configured optimizer. The initial
/// weights are taken from `init`.
pub fn optimize_policy(task: &ControlTask, init: &SinusoidController, opt: &OptimizerConfig) -> Result<PolicyResult> {
    task.validate()?;
    init.validate()?;
    opt.validate()?;
    let n = init.weights.len();
    let mut optimizer = Optimizer::new(opt, n);
    let mut lr = opt.lr.unwrap_or(0.05);
    let bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); n];
    let mut ctrl = init.clone();
    let mut best: Option<(f64, SinusoidController, Frame)> = None;
    let (mut loss_trace, mut image_trace) = (Vec::new(), Vec::new());
    for it in 0..opt.iterations.max(1) {
        let (loss, grad, tape) = task.policy_loss_and_grad(&ctrl)?;
        let frame = tape.frames.last().map(|f| f.frame.clone()).expect("validated task renders frames");
        let image = match task.objective {
            Objective::LastFrame => loss,
            _ => task.image_loss(&tape)?,
        };
        log::debug!("policy iter {it}: loss {loss:.6e}");
        loss_trace.push(loss);
        image_trace.push(image);
        if best.as_ref().is_none_or(|b| loss < b.0) {
            best = Some((loss, ctrl.clone(), frame));
        }
        if loss <= opt.tolerance || it + 1 == opt.iterations {
            break;
        }
        let d = optimizer.direction(&grad);
        ctrl.weights = projected_step(&ctrl.weights, &d, &vec![lr; n], &bounds);
        lr *= opt.lr_decay;
    }
    let (best_loss, controller, best_frame) = best.expect("at least one iteration");
    Ok(PolicyResult { controller, loss_trace, image_trace, best_loss, best_frame })
}

#[derive(Debug, Clone)]
pub struct VelocityResult {
    /// One shared velocity, or one per particle of the entity.
    pub velocities: Vec<Vec3>,
    pub loss_trace: Vec<f64>,
    pub best_loss: f64,
}

/// Optimizes the initial velocity of `entity` against the last-frame image
/// loss, either as one shared vector or per particle.
pub fn optimize_initial_velocity(
    task: &ControlTask,
    entity: usize,
    per_particle: bool,
    opt: &OptimizerConfig,
) -> Result<VelocityResult> {
    task.validate()?;
    let ent = task
        .scene
        .entities
        .get(entity)
        .ok_or_else(|| SimError::config(format!("no entity {entity}")))?;
    let sel: Vec<ParamSelector> = if per_particle {
        ent.particles.clone().flat_map(|particle| (0..3).map(move |axis| ParamSelector::ParticleVelocity { particle, axis })).collect()
    } else {
        (0..3).map(|axis| ParamSelector::InitialVelocity { entity, axis }).collect()
    };
    let problem = Problem {
        scene: task.scene.clone(),
        params: task.params.clone(),
        state0: task.state0.clone(),
        options: task.options.clone(),
        loss: ControlTask::last_frame_spec(),
        target: task.targets(),
    };
    let init = problem.values(&sel)?;
    let r = estimate(&problem, &sel, &init, opt)?;
    let velocities = r.values.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
    let best_loss = r.loss_trace.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(VelocityResult { velocities, loss_trace: r.loss_trace, best_loss })
}
