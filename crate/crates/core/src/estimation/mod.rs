//! Image-space losses, gradient-based parameter estimation and loss
//! landscape sweeps.

pub mod optim;
pub mod selector;

use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint::{backward, rollout, FrameGrad, RolloutOptions};
use crate::error::{Result, SimError};
use crate::render::{Frame, Image};
use crate::scenarios::Episode;
use crate::scene::SceneGraph;
use crate::state::{ModelParams, SystemState};

pub use optim::{projected_step, Method, Optimizer, OptimizerConfig};
pub use selector::ParamSelector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    AllFrames,
    FirstLast,
    LastFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Rgb,
    Silhouette,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub mode: LossMode,
    pub channel: Channel,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec { mode: LossMode::AllFrames, channel: Channel::Rgb }
    }
}

impl LossSpec {
    fn selected(&self, n: usize) -> Vec<usize> {
        match (self.mode, n) {
            (_, 0) => vec![],
            (LossMode::AllFrames, _) => (0..n).collect(),
            (LossMode::FirstLast, 1) | (LossMode::LastFrame, _) => vec![n - 1],
            (LossMode::FirstLast, _) => vec![0, n - 1],
        }
    }
}

/// Mean squared pixel difference over the selected frames, with the
/// cotangent `2(pred − target)/count` on those frames and zero elsewhere.
pub fn frame_loss(pred: &[Frame], target: &[Frame], spec: &LossSpec) -> Result<(f64, Vec<FrameGrad>)> {
    if pred.len() != target.len() {
        return Err(SimError::ShapeMismatch(format!("{} predicted frames, {} target frames", pred.len(), target.len())));
    }
    let pick = |f: &Frame| match spec.channel {
        Channel::Rgb => f.rgb.clone(),
        Channel::Silhouette => f.silhouette.clone(),
    };
    for (p, t) in pred.iter().zip(target) {
        if !pick(p).same_shape(&pick(t)) {
            return Err(SimError::ShapeMismatch(format!(
                "frame size {}x{} vs target {}x{}",
                p.rgb.width(),
                p.rgb.height(),
                t.rgb.width(),
                t.rgb.height()
            )));
        }
    }
    let mut grads: Vec<FrameGrad> = pred.iter().map(FrameGrad::zeros_like).collect();
    let sel = spec.selected(pred.len());
    if sel.is_empty() {
        return Ok((0.0, grads));
    }
    let per_frame = pick(&pred[0]).data().len();
    let count = (sel.len() * per_frame) as f64;
    let mut loss = 0.0;
    for &i in &sel {
        let (p, t) = (pick(&pred[i]), pick(&target[i]));
        let mut g = Image::new(p.width(), p.height(), p.channels());
        for ((gd, a), b) in g.data_mut().iter_mut().zip(p.data()).zip(t.data()) {
            let d = a - b;
            loss += d * d;
            *gd = 2.0 * d / count;
        }
        match spec.channel {
            Channel::Rgb => grads[i].rgb = g,
            Channel::Silhouette => grads[i].silhouette = g,
        }
    }
    Ok((loss / count, grads))
}

/// Everything needed to evaluate an image-space loss for a candidate set of
/// parameter values.
#[derive(Debug, Clone)]
pub struct Problem {
    pub scene: Arc<SceneGraph>,
    pub params: ModelParams,
    pub state0: SystemState,
    pub options: RolloutOptions,
    pub loss: LossSpec,
    pub target: Vec<Frame>,
}

/// Timing split of one loss-and-gradient evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub forward_ms: f64,
    pub backward_ms: f64,
}

impl Problem {
    /// Renders the target video from the given (hidden) parameters.
    pub fn render_target(scene: &Arc<SceneGraph>, params: &ModelParams, state0: &SystemState, options: &RolloutOptions) -> Result<Vec<Frame>> {
        if options.render_stride.is_none() {
            return Err(SimError::config("target rendering needs a render stride"));
        }
        Ok(rollout(scene, params, state0, options)?.frame_images())
    }

    /// Problem whose target is rendered from `truth` while the model under
    /// estimation is `model`. Both must share the render schedule.
    pub fn from_episodes(truth: &Episode, model: &Episode, loss: LossSpec) -> Result<Problem> {
        if truth.options.frame_count() != model.options.frame_count() {
            return Err(SimError::config("truth and model episodes render a different number of frames"));
        }
        let t = &truth.scenario;
        let target = Problem::render_target(&t.scene, &t.params, &t.state, &truth.options)?;
        let m = &model.scenario;
        Ok(Problem {
            scene: m.scene.clone(),
            params: m.params.clone(),
            state0: m.state.clone(),
            options: model.options.clone(),
            loss,
            target,
        })
    }

    pub fn apply(&self, sel: &[ParamSelector], values: &[f64]) -> Result<(ModelParams, SystemState)> {
        if sel.len() != values.len() {
            return Err(SimError::ShapeMismatch(format!("{} selectors, {} values", sel.len(), values.len())));
        }
        let (mut p, mut s) = (self.params.clone(), self.state0.clone());
        for (k, v) in sel.iter().zip(values) {
            k.set(&self.scene, &mut p, &mut s, *v)?;
        }
        Ok((p, s))
    }

    pub fn values(&self, sel: &[ParamSelector]) -> Result<Vec<f64>> {
        sel.iter().map(|k| k.get(&self.scene, &self.params, &self.state0)).collect()
    }

    pub fn loss_at(&self, sel: &[ParamSelector], values: &[f64]) -> Result<f64> {
        let (p, s) = self.apply(sel, values)?;
        let tape = rollout(&self.scene, &p, &s, &self.options)?;
        Ok(frame_loss(&tape.frame_images(), &self.target, &self.loss)?.0)
    }

    pub fn loss_and_grad(&self, sel: &[ParamSelector], values: &[f64]) -> Result<(f64, Vec<f64>, PhaseTimes)> {
        let (p, s) = self.apply(sel, values)?;
        let t0 = Instant::now();
        let tape = rollout(&self.scene, &p, &s, &self.options)?;
        let (loss, fg) = frame_loss(&tape.frame_images(), &self.target, &self.loss)?;
        let t1 = Instant::now();
        let g = backward(&tape, &fg)?;
        let grad = sel.iter().map(|k| k.gradient(&self.scene, &p, &g)).collect::<Result<Vec<f64>>>()?;
        let times = PhaseTimes {
            forward_ms: (t1 - t0).as_secs_f64() * 1e3,
            backward_ms: t1.elapsed().as_secs_f64() * 1e3,
        };
        Ok((loss, grad, times))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub labels: Vec<String>,
    /// Lowest-loss iterate.
    pub values: Vec<f64>,
    pub loss_trace: Vec<f64>,
    pub param_trace: Vec<Vec<f64>>,
    pub wall_ms: Vec<f64>,
    pub times: PhaseTimes,
    /// Number of learning-rate halvings caused by rejected or divergent
    /// iterates.
    pub lr_halvings: usize,
}

impl EstimationResult {
    pub fn final_loss(&self) -> f64 {
        self.loss_trace.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV with header `iter,loss,param_0..param_k,wall_ms`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(w, "iter,loss")?;
        for k in 0..self.labels.len() {
            write!(w, ",param_{k}")?;
        }
        writeln!(w, ",wall_ms")?;
        for (i, ((l, p), t)) in self.loss_trace.iter().zip(&self.param_trace).zip(&self.wall_ms).enumerate() {
            write!(w, "{i},{l:e}")?;
            for v in p {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{t:.3}")?;
        }
        Ok(())
    }
}

/// Learning-rate growth per accepted step after a rejection.
const LR_RECOVERY: f64 = 2.0;

/// Gradient-based estimation of the selected quantities starting from
/// `init`. A divergent iterate halves the learning rate and retries once;
/// a second consecutive divergence aborts. With `opt.monotone` a step that
/// raises the loss is discarded, the learning rate halved and the Adam
/// moments restarted; accepted steps restore the rate geometrically.
pub fn estimate(problem: &Problem, sel: &[ParamSelector], init: &[f64], opt: &OptimizerConfig) -> Result<EstimationResult> {
    opt.validate()?;
    if sel.len() != init.len() {
        return Err(SimError::ShapeMismatch(format!("{} selectors, {} initial values", sel.len(), init.len())));
    }
    let bounds: Vec<(f64, f64)> = sel.iter().map(|s| s.bounds()).collect();
    // `base` follows the decay schedule; `lr` drops below it after rejected
    // steps and recovers geometrically once steps are accepted again.
    let mut base: Vec<f64> = sel.iter().map(|s| opt.lr.unwrap_or_else(|| s.default_lr())).collect();
    let mut lr = base.clone();
    let mut x: Vec<f64> = init.iter().zip(&bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect();
    let mut optimizer = Optimizer::new(opt, sel.len());
    let start = Instant::now();
    let mut times = PhaseTimes::default();
    let mut out = EstimationResult {
        labels: sel.iter().map(|s| s.label()).collect(),
        values: x.clone(),
        loss_trace: Vec::new(),
        param_trace: Vec::new(),
        wall_ms: Vec::new(),
        times,
        lr_halvings: 0,
    };
    let (mut loss, mut grad, t) = problem.loss_and_grad(sel, &x)?;
    let mut best = f64::INFINITY;
    for k in 0..opt.iterations {
        times.forward_ms += t.forward_ms;
        times.backward_ms += t.backward_ms;
        out.loss_trace.push(loss);
        out.param_trace.push(x.clone());
        out.wall_ms.push(start.elapsed().as_secs_f64() * 1e3);
        if loss < best {
            best = loss;
            out.values = x.clone();
        }
        log::debug!("iter {k}: loss {loss:e} params {x:?}");
        if loss < opt.tolerance || k + 1 == opt.iterations {
            break;
        }
        let dir = optimizer.direction(&grad);
        let mut retried = false;
        loop {
            let cand = projected_step(&x, &dir, &lr, &bounds);
            match problem.loss_and_grad(sel, &cand) {
                Ok((l, _, _)) if opt.monotone && l > loss => {
                    for v in &mut lr {
                        *v *= 0.5;
                    }
                    out.lr_halvings += 1;
                    optimizer.reset();
                    break;
                }
                Ok((l, g, _)) => {
                    x = cand;
                    loss = l;
                    grad = g;
                    for (v, b) in lr.iter_mut().zip(&base) {
                        *v = (*v * LR_RECOVERY).min(*b);
                    }
                    break;
                }
                Err(e) if e.is_divergence() && !retried => {
                    log::warn!("iterate {cand:?} diverged ({e}); halving the learning rate");
                    for (v, b) in lr.iter_mut().zip(base.iter_mut()) {
                        *v *= 0.5;
                        *b *= 0.5;
                    }
                    out.lr_halvings += 1;
                    retried = true;
                }
                Err(e) if e.is_divergence() => {
                    return Err(SimError::Diverged {
                        step: k,
                        quantity: format!("estimation iterate {cand:?} after halving the learning rate ({e})"),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        for (v, b) in lr.iter_mut().zip(base.iter_mut()) {
            *v *= opt.lr_decay;
            *b *= opt.lr_decay;
        }
    }
    out.times = times;
    Ok(out)
}

/// One rollout and loss per grid value of `sel`; divergent points give
/// `+∞`.
pub fn sweep_landscape(problem: &Problem, sel: &ParamSelector, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(SimError::config("sweep grid must be strictly increasing"));
    }
    let (lo, hi) = sel.bounds();
    if grid.iter().any(|v| *v < lo || *v > hi) {
        return Err(SimError::config(format!("sweep grid leaves the physical range [{lo}, {hi}] of {}", sel.label())));
    }
    grid.par_iter()
        .map(|&v| match problem.loss_at(std::slice::from_ref(sel), &[v]) {
            Ok(l) => Ok((v, l)),
            Err(e) if e.is_divergence() => Ok((v, f64::INFINITY)),
            Err(e) => Err(e),
        })
        .collect()
}

/// `n ≥ 2` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(SimError::config("grid needs at least 2 points"));
    }
    if !(hi > lo) {
        return Err(SimError::config("grid upper bound must exceed the lower bound"));
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

pub fn write_landscape_csv(path: &Path, curve: &[(f64, f64)]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "value,loss")?;
    for (v, l) in curve {
        writeln!(w, "{v},{l:e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(v: f64) -> Frame {
        Frame { rgb: Image::filled(1, 1, 1, v), silhouette: Image::filled(1, 1, 1, v) }
    }

    #[test]
    fn identical_frames_have_zero_loss() {
        let f = vec![frame(0.3), frame(0.7)];
        let (l, g) = frame_loss(&f, &f, &LossSpec::default()).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|g| g.is_zero()));
    }

    #[test]
    fn single_pixel_arithmetic() {
        let spec = LossSpec { mode: LossMode::AllFrames, channel: Channel::Rgb };
        let (l, g) = frame_loss(&[frame(0.5)], &[frame(0.0)], &spec).unwrap();
        assert_eq!(l, 0.25);
        assert_eq!(g[0].rgb.data()[0], 1.0);
    }

    #[test]
    fn first_last_zeroes_interior() {
        let pred: Vec<Frame> = (0..60).map(|_| frame(1.0)).collect();
        let target: Vec<Frame> = (0..60).map(|_| frame(0.0)).collect();
        let spec = LossSpec { mode: LossMode::FirstLast, channel: Channel::Silhouette };
        let (_, g) = frame_loss(&pred, &target, &spec).unwrap();
        assert!(!g[0].is_zero() && !g[59].is_zero());
        assert!(g[1..59].iter().all(|g| g.is_zero()));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(frame_loss(&[frame(0.0)], &[], &LossSpec::default()).is_err());
    }

    #[test]
    fn linspace_rejects_short_grid() {
        assert!(linspace(0.0, 1.0, 1).is_err());
        assert_eq!(linspace(0.0, 1.0, 3).unwrap(), vec![0.0, 0.5, 1.0]);
    }
}
