use std::path::Path;

use gradsim::adjoint::{backward, grad_check, rollout, FrameGrad, RolloutOptions};
use gradsim::config::SceneConfig;
use gradsim::control::{Actuation, SinusoidController};
use gradsim::estimation::{estimate, Channel, LossMode, LossSpec, OptimizerConfig, ParamSelector, Problem};
use gradsim::render::Image;
use gradsim::scenarios::{seeded_uniform, BeamSetup, BodyModel, CubeSetup, Episode};
use gradsim::state::GradBuffer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn short_cube(model: BodyModel) -> Episode {
    CubeSetup { model, frames: 6, image_size: 24, ..CubeSetup::default() }.episode().unwrap()
}

fn random_grads(ep: &Episode, seed: u64) -> Vec<FrameGrad> {
    let sc = &ep.scenario;
    let tape = rollout(&sc.scene, &sc.params, &sc.state, &ep.options).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = |img: &Image| {
        let data = (0..img.data().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        Image::from_data(img.width(), img.height(), img.channels(), data).unwrap()
    };
    tape.frames.iter().map(|f| FrameGrad { rgb: noise(&f.frame.rgb), silhouette: noise(&f.frame.silhouette) }).collect()
}

fn flat(g: &GradBuffer) -> Vec<f64> {
    let mut v = g.d_params.to_flat();
    v.extend(g.d_state0.to_row());
    v
}

fn combine(a: f64, x: &[FrameGrad], b: f64, y: &[FrameGrad]) -> Vec<FrameGrad> {
    let mix = |p: &Image, q: &Image| {
        let data = p.data().iter().zip(q.data()).map(|(u, v)| a * u + b * v).collect();
        Image::from_data(p.width(), p.height(), p.channels(), data).unwrap()
    };
    x.iter().zip(y).map(|(p, q)| FrameGrad { rgb: mix(&p.rgb, &q.rgb), silhouette: mix(&p.silhouette, &q.silhouette) }).collect()
}

#[test]
fn rollouts_are_bit_identical() {
    for model in [BodyModel::Rigid, BodyModel::Deformable] {
        let ep = short_cube(model);
        let sc = &ep.scenario;
        let a = rollout(&sc.scene, &sc.params, &sc.state, &ep.options).unwrap();
        let b = rollout(&sc.scene, &sc.params, &sc.state, &ep.options).unwrap();
        for t in 0..=a.horizon() {
            assert_eq!(a.state(t), b.state(t));
        }
        assert_eq!(a.frame_images(), b.frame_images());
    }
}

#[test]
fn backward_is_linear_in_the_cotangent() {
    for model in [BodyModel::Rigid, BodyModel::Deformable] {
        let ep = short_cube(model);
        let sc = &ep.scenario;
        let tape = rollout(&sc.scene, &sc.params, &sc.state, &ep.options).unwrap();
        let (g1, g2) = (random_grads(&ep, 1), random_grads(&ep, 2));
        let (a, b) = (0.7, -1.9);
        let lhs = flat(&backward(&tape, &combine(a, &g1, b, &g2)).unwrap());
        let r1 = flat(&backward(&tape, &g1).unwrap());
        let r2 = flat(&backward(&tape, &g2).unwrap());
        let scale = lhs.iter().fold(1e-300, |m: f64, x| m.max(x.abs()));
        for ((l, x), y) in lhs.iter().zip(&r1).zip(&r2) {
            assert!((l - (a * x + b * y)).abs() <= 1e-10 * scale, "{l} vs {}", a * x + b * y);
        }

        let zero: Vec<FrameGrad> = tape.frames.iter().map(|f| FrameGrad::zeros_like(&f.frame)).collect();
        assert!(backward(&tape, &zero).unwrap().is_zero());
    }
}

#[test]
fn zero_weight_controller_is_passive() {
    let ep = BeamSetup::default().episode().unwrap();
    let sc = &ep.scenario;
    let opts = RolloutOptions::new(ep.options.dt, 40).with_render_stride(40);
    let passive = rollout(&sc.scene, &sc.params, &sc.state, &opts).unwrap();
    let ctrl = SinusoidController::for_scene(&sc.scene, 8, Actuation::Volume);
    let driven = RolloutOptions { activations: ctrl.activations(40, opts.dt), ..opts.clone() };
    let active = rollout(&sc.scene, &sc.params, &sc.state, &driven).unwrap();
    assert_eq!(passive.state(40), active.state(40));
    assert_eq!(passive.frame_images(), active.frame_images());
}

fn self_problem(ep: &Episode) -> Problem {
    Problem::from_episodes(ep, ep, LossSpec { mode: LossMode::AllFrames, channel: Channel::Rgb }).unwrap()
}

#[test]
fn cube_mass_gradient_matches_differences() {
    let ep = CubeSetup { frames: 60, ..CubeSetup::default() }.episode().unwrap();
    let prob = self_problem(&ep);
    let sel = [ParamSelector::Mass { entity: 0 }];
    let m = 1.3;
    let (_, g, _) = prob.loss_and_grad(&sel, &[m]).unwrap();
    let err = grad_check(|x| prob.loss_at(&sel, x), &[m], &g, 1e-5 * m, &[0]).unwrap();
    assert!(err <= 1e-4, "rel err {err:.2e}");
}

#[test]
fn beam_lame_gradient_matches_differences() {
    let ep = BeamSetup::default().episode().unwrap();
    let prob = self_problem(&ep);
    let sel = [ParamSelector::TetMu, ParamSelector::TetLambda];
    let x = [1200.0, 900.0];
    let (_, g, _) = prob.loss_and_grad(&sel, &x).unwrap();
    let err = grad_check(|v| prob.loss_at(&sel, v), &x, &g, 1e-3, &[0, 1]).unwrap();
    assert!(err <= 1e-4, "rel err {err:.2e}");
}

#[test]
fn estimating_from_the_truth_stays_there() {
    let ep = CubeSetup::default().episode().unwrap();
    let prob = self_problem(&ep);
    let sel = [ParamSelector::Mass { entity: 0 }];
    let r = estimate(&prob, &sel, &[1.0], &OptimizerConfig::adam(5)).unwrap();
    assert_eq!(r.values, vec![1.0]);
    assert_eq!(r.loss_trace[0], 0.0);
}

#[test]
fn cube_mass_loss_descends_for_every_seed() {
    let prob = self_problem(&CubeSetup::default().episode().unwrap());
    let sel = [ParamSelector::Mass { entity: 0 }];
    for seed in 0..10u64 {
        let opt = OptimizerConfig { monotone: true, ..OptimizerConfig::adam(40) };
        let r = estimate(&prob, &sel, &[seeded_uniform(seed, 0.1, 5.0)], &opt).unwrap();
        for (i, w) in r.loss_trace.windows(2).enumerate().skip(3) {
            assert!(w[1] <= w[0], "seed {seed}: loss rose at iteration {}: {} -> {}", i + 1, w[0], w[1]);
        }
        assert!(r.loss_trace.last().unwrap() < &r.loss_trace[0], "seed {seed} made no progress");
    }
}

fn shipped_configs() -> Vec<std::path::PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut v: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|x| x == "json")).collect();
    v.sort();
    v
}

#[test]
fn shipped_configs_round_trip_and_build() {
    let paths = shipped_configs();
    assert!(paths.len() >= 6);
    for p in paths {
        let c = SceneConfig::from_path(&p).unwrap();
        let again = SceneConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, again, "{}", p.display());
        assert_eq!(c.to_json(), again.to_json());
        c.build(p.parent().unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn cube_config_matches_builtin_setup() {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/cube.json");
    let from_file = SceneConfig::from_path(&p).unwrap().build(p.parent().unwrap()).unwrap();
    let builtin = CubeSetup::default().episode().unwrap();
    assert_eq!(from_file.options, builtin.options);
    let run = |ep: &Episode| {
        let sc = &ep.scenario;
        let opts = RolloutOptions { horizon: 320, ..ep.options.clone() };
        rollout(&sc.scene, &sc.params, &sc.state, &opts).unwrap()
    };
    let (a, b) = (run(&from_file), run(&builtin));
    assert_eq!(a.state(320), b.state(320));
    assert_eq!(a.frame_images(), b.frame_images());
}
