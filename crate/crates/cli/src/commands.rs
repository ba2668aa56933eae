use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use gradsim::adjoint::{render_state, rollout};
use gradsim::bench::bench as run_bench;
use gradsim::config::SceneConfig;
use gradsim::control::{optimize_initial_velocity, optimize_policy, Actuation, ControlTask, SinusoidController};
use gradsim::estimation::{
    estimate as run_estimate, linspace, sweep_landscape, write_landscape_csv, Channel, LossMode, LossSpec, Method, OptimizerConfig,
    ParamSelector, Problem,
};
use gradsim::render::{Frame, Image};
use gradsim::scenarios::{Episode, ModelMismatch};
use gradsim::SimError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::io::{prepare_out, read_hidden, read_states, read_target_dir, write_frames, write_json, write_states, write_trace};
use crate::{
    ActuationArg, BenchArgs, ChannelArg, ControlArgs, ControlMode, EstimateArgs, LossArg, MismatchArgs, OptimArgs, RenderArgs, SimulateArgs,
    SweepArgs, TargetArgs,
};

fn load_config(path: &Path, seed: Option<u64>) -> Result<(SceneConfig, PathBuf)> {
    let mut cfg = SceneConfig::from_path(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn optimizer(a: &OptimArgs) -> OptimizerConfig {
    OptimizerConfig {
        method: if a.sgd { Method::Sgd } else { Method::Adam },
        lr: a.lr,
        lr_decay: a.lr_decay,
        monotone: a.monotone,
        ..OptimizerConfig::adam(a.iterations)
    }
}

fn loss_spec(t: &TargetArgs) -> LossSpec {
    LossSpec {
        mode: match t.loss {
            LossArg::AllFrames => LossMode::AllFrames,
            LossArg::FirstLast => LossMode::FirstLast,
            LossArg::LastFrame => LossMode::LastFrame,
        },
        channel: match t.channel {
            ChannelArg::Rgb => Channel::Rgb,
            ChannelArg::Silhouette => Channel::Silhouette,
        },
    }
}

fn mismatch(m: &MismatchArgs) -> ModelMismatch {
    if m.no_friction {
        ModelMismatch::NoFriction
    } else if m.perfect_elastic {
        ModelMismatch::PerfectElastic
    } else if m.rigid_as_deformable {
        ModelMismatch::RigidAsDeformable
    } else if m.deformable_as_rigid {
        ModelMismatch::DeformableAsRigid
    } else {
        ModelMismatch::Perfect
    }
}

/// Target frames from a directory, from the config with hidden values
/// applied, or (when `default_self` is set) from the config as written.
fn target_frames(
    cfg: &SceneConfig,
    base: &Path,
    model: &Episode,
    t: &TargetArgs,
    default_self: bool,
) -> Result<(Vec<Frame>, Vec<(ParamSelector, f64)>)> {
    if let Some(dir) = &t.target {
        let frames = read_target_dir(dir, model.options.frame_count(), matches!(t.channel, ChannelArg::Silhouette))?;
        return Ok((frames, Vec::new()));
    }
    let hidden = match &t.self_target {
        Some(p) => read_hidden(p)?,
        None if default_self => Vec::new(),
        None => bail!(SimError::config("either --target or --self-target is required")),
    };
    let truth = cfg.build(base)?;
    let sc = truth.scenario;
    let (mut params, mut state) = (sc.params.clone(), sc.state.clone());
    for (sel, v) in &hidden {
        sel.set(&sc.scene, &mut params, &mut state, *v)?;
    }
    Ok((Problem::render_target(&sc.scene, &params, &state, &truth.options)?, hidden))
}

fn problem(model: Episode, loss: LossSpec, target: Vec<Frame>) -> Problem {
    let sc = model.scenario;
    Problem { scene: sc.scene, params: sc.params, state0: sc.state, options: model.options, loss, target }
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let (cfg, base) = load_config(&a.config, a.common.seed)?;
    let ep = cfg.build(&base)?;
    let out = &a.common.out;
    prepare_out(out)?;
    let sc = &ep.scenario;
    let tape = rollout(&sc.scene, &sc.params, &sc.state, &ep.options)?;
    write_frames(out, &tape.frame_images(), false)?;
    let steps: Vec<usize> = if tape.frames.is_empty() {
        (0..=tape.horizon()).collect()
    } else {
        std::iter::once(0).chain(tape.frames.iter().map(|f| f.state_index)).collect()
    };
    write_states(&out.join("states.csv"), steps.iter().map(|&t| (t, tape.state(t))))?;
    println!("{} steps, {} frames written to {}", tape.horizon(), tape.frames.len(), out.display());
    Ok(())
}

pub fn render(a: RenderArgs) -> Result<()> {
    let (cfg, base) = load_config(&a.config, a.common.seed)?;
    let ep = cfg.build(&base)?;
    let sc = &ep.scenario;
    let states = match &a.states {
        Some(p) => read_states(p, &sc.state)?.into_iter().map(|(_, s)| s).collect(),
        None => vec![sc.state.clone()],
    };
    let frames: Vec<Frame> = states.iter().map(|s| render_state(&sc.scene, &sc.params, s).0).collect();
    prepare_out(&a.common.out)?;
    write_frames(&a.common.out, &frames, a.png)?;
    println!("{} frames written to {}", frames.len(), a.common.out.display());
    Ok(())
}

pub fn estimate(a: EstimateArgs) -> Result<()> {
    let (cfg, base) = load_config(&a.config, a.common.seed)?;
    let sel = a.params.iter().map(|p| ParamSelector::parse(p)).collect::<gradsim::Result<Vec<_>>>()?;
    let model = cfg.with_mismatch(mismatch(&a.mismatch))?.build(&base)?;
    let (target, hidden) = target_frames(&cfg, &base, &model, &a.target, false)?;
    let problem = problem(model, loss_spec(&a.target), target);

    let init = if !a.init.is_empty() {
        if a.init.len() != sel.len() {
            bail!(SimError::config(format!("{} initial values for {} parameters", a.init.len(), sel.len())));
        }
        a.init.clone()
    } else if let Some(range) = &a.init_range {
        let (lo, hi) = parse_range(range)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        sel.iter().map(|_| rng.random_range(lo..hi)).collect()
    } else {
        problem.values(&sel)?
    };

    prepare_out(&a.common.out)?;
    let r = run_estimate(&problem, &sel, &init, &optimizer(&a.optim))?;
    r.write_csv(&a.common.out.join("estimate.csv"))?;
    let truth: serde_json::Map<String, serde_json::Value> = hidden.iter().map(|(s, v)| (s.label(), json!(v))).collect();
    write_json(
        &a.common.out.join("summary.json"),
        &json!({
            "parameters": r.labels,
            "init": init,
            "estimate": r.values,
            "loss": r.final_loss(),
            "iterations": r.loss_trace.len(),
            "lr_halvings": r.lr_halvings,
            "truth": truth,
        }),
    )?;
    for (l, v) in r.labels.iter().zip(&r.values) {
        println!("{l} = {v}");
    }
    println!("loss {:e} after {} iterations", r.final_loss(), r.loss_trace.len());
    Ok(())
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let bad = || SimError::config(format!("range {s:?} must be lo:hi with lo < hi"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let (lo, hi): (f64, f64) = (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
    if !(lo < hi) {
        bail!(bad());
    }
    Ok((lo, hi))
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || SimError::config(format!("grid {s:?} must be lo:hi:n"));
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else { bail!(bad()) };
    let lo: f64 = lo.parse().map_err(|_| bad())?;
    let hi: f64 = hi.parse().map_err(|_| bad())?;
    let n: usize = n.parse().map_err(|_| bad())?;
    Ok(linspace(lo, hi, n)?)
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let (cfg, base) = load_config(&a.config, a.common.seed)?;
    let sel = ParamSelector::parse(&a.param)?;
    let grid = parse_grid(&a.grid)?;
    let model = cfg.build(&base)?;
    let (target, _) = target_frames(&cfg, &base, &model, &a.target, true)?;
    let problem = problem(model, loss_spec(&a.target), target);
    prepare_out(&a.common.out)?;
    let curve = sweep_landscape(&problem, &sel, &grid)?;
    write_landscape_csv(&a.common.out.join("landscape.csv"), &curve)?;
    if let Some((v, l)) = curve.iter().min_by(|a, b| a.1.total_cmp(&b.1)) {
        println!("minimum {} = {v} (loss {l:e})", sel.label());
    }
    Ok(())
}

pub fn control(a: ControlArgs) -> Result<()> {
    let (cfg, base) = load_config(&a.config, a.common.seed)?;
    let ep = cfg.build(&base)?;
    let sc = ep.scenario;
    let rgb = Image::read(&a.target)?;
    let silhouette = Image::new(rgb.width(), rgb.height(), 1);
    let task = ControlTask::new(sc.scene.clone(), sc.params, sc.state, ep.options, Frame { rgb, silhouette });
    task.validate()?;
    let opt = optimizer(&a.optim);
    let out = &a.common.out;
    prepare_out(out)?;
    match a.mode {
        ControlMode::Policy => {
            let act = match a.actuation {
                ActuationArg::Volume => Actuation::Volume,
                ActuationArg::Bending => Actuation::Bending,
            };
            let mut init = SinusoidController::for_scene(&sc.scene, a.signals, act);
            init.randomize(cfg.seed, a.weight_std);
            init.validate()?;
            let r = optimize_policy(&task, &init, &opt)?;
            write_trace(&out.join("trace.csv"), &r.loss_trace)?;
            write_json(&out.join("controller.json"), &serde_json::to_value(&r.controller)?)?;
            r.best_frame.rgb.write_pnm(&out.join("best_frame.ppm"))?;
            println!("best loss {:e} (initial {:e})", r.best_loss, r.loss_trace[0]);
        }
        ControlMode::Velocity => {
            let entity = match &a.entity {
                Some(name) => sc.scene.entity(name).ok_or_else(|| SimError::config(format!("unknown entity `{name}`")))?,
                None => 0,
            };
            let r = optimize_initial_velocity(&task, entity, a.per_particle, &opt)?;
            write_trace(&out.join("trace.csv"), &r.loss_trace)?;
            let v: Vec<[f64; 3]> = r.velocities.iter().map(|v| [v.x, v.y, v.z]).collect();
            write_json(&out.join("velocity.json"), &json!({ "entity": entity, "velocities": v, "loss": r.best_loss }))?;
            println!("best loss {:e} (initial {:e})", r.best_loss, r.loss_trace[0]);
        }
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let mut rows = Vec::new();
    println!("{:>8} {:>14} {:>14} {:>14}", "tets", "forward_hz", "render_hz", "backward_hz");
    for &n in &a.tets {
        let r = run_bench(n, a.steps)?;
        println!("{:>8} {:>14.1} {:>14.1} {:>14.1}", r.tets, r.forward_hz, r.render_hz, r.backward_hz);
        rows.push(r);
    }
    if let Some(dir) = &a.out {
        prepare_out(dir)?;
        let mut text = String::from("tets,forward_hz,render_hz,backward_hz\n");
        for r in &rows {
            text.push_str(&format!("{},{},{},{}\n", r.tets, r.forward_hz, r.render_hz, r.backward_hz));
        }
        std::fs::write(dir.join("bench.csv"), text)?;
    }
    Ok(())
}
