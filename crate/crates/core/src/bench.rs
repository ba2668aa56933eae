//! Throughput of the three pipeline stages on a clamped tetrahedral beam.

use std::time::Instant;

use serde::Serialize;

use crate::adjoint::{backward, render_state, rollout, FrameGrad, RolloutOptions};
use crate::dynamics::world_step;
use crate::error::{Result, SimError};
use crate::render::Image;
use crate::scenarios::bench_beam;

pub const MIN_TETS: usize = 100;
pub const MAX_TETS: usize = 10_000;

/// Rates in steps (or frames) per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub tets: usize,
    pub forward_hz: f64,
    pub render_hz: f64,
    pub backward_hz: f64,
}

/// Times `steps` forward steps, up to `steps` renders and the reverse pass
/// of a `steps`-long episode scored on its last frame.
pub fn bench(tets: usize, steps: usize) -> Result<BenchRow> {
    if steps == 0 {
        return Err(SimError::config("steps must be ≥ 1"));
    }
    if !(MIN_TETS..=MAX_TETS).contains(&tets) {
        return Err(SimError::config(format!("tet count must lie in {MIN_TETS}..={MAX_TETS}")));
    }
    let ep = bench_beam(tets)?;
    let (sc, dt) = (&ep.scenario, ep.options.dt);
    let (scene, params) = (&sc.scene, &sc.params);

    let t0 = Instant::now();
    let mut s = sc.state.clone();
    for t in 0..steps {
        s = world_step(scene, params, &s, None, t, dt)?.0;
    }
    let forward_hz = steps as f64 / t0.elapsed().as_secs_f64();

    let renders = steps.min(20);
    let t0 = Instant::now();
    for _ in 0..renders {
        std::hint::black_box(render_state(scene, params, &s));
    }
    let render_hz = renders as f64 / t0.elapsed().as_secs_f64();

    let tape = rollout(scene, params, &sc.state, &RolloutOptions::new(dt, steps).with_render_stride(steps))?;
    let frame = &tape.frames[0].frame;
    let grad = FrameGrad {
        rgb: Image::filled(frame.rgb.width(), frame.rgb.height(), frame.rgb.channels(), 1.0),
        silhouette: Image::new(frame.silhouette.width(), frame.silhouette.height(), 1),
    };
    let t0 = Instant::now();
    std::hint::black_box(backward(&tape, &[grad])?);
    let backward_hz = steps as f64 / t0.elapsed().as_secs_f64();

    Ok(BenchRow { tets: scene.tet_mesh.len(), forward_hz, render_hz, backward_hz })
}
