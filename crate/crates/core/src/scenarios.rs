//! Built-in experiment scenes: sliding cube, hanging beam, tet-strip
//! walker, cloth, projectile, pendula and benchmark beams.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::{rollout, RolloutOptions};
use crate::control::ControlTask;
use crate::dynamics::contact::{ContactParams, ContactPlane};
use crate::dynamics::shell::AeroCoefficients;
use crate::error::{Result, SimError};
use crate::math::{quat_identity, Quat, Vec3};
use crate::mesh::{box_surface, box_tet_grid, cloth_grid, grid_for_tet_count};
use crate::render::{Camera, Frame, Material, Renderer, ShadingMode};
use crate::scene::{FemSpec, Impulse, PendulumSpec, PointsSpec, RigidSpec, Scenario, SceneBuilder, SceneGraph, ShellSpec};
use crate::state::{ModelParams, SystemState};

/// A scenario together with the episode settings it is meant to run with.
#[derive(Debug, Clone)]
pub struct Episode {
    pub scenario: Scenario,
    pub options: RolloutOptions,
}

pub fn gravity() -> Vec3 {
    Vec3::new(0.0, -9.81, 0.0)
}

fn phong(color: Vec3) -> Material {
    Material { mode: ShadingMode::Phong, color, ..Material::default() }
}

fn renderer(camera: Camera) -> Renderer {
    Renderer { camera, ..Renderer::default() }
}

fn camera(position: Vec3, look_at: Vec3, size: usize) -> Camera {
    Camera { position, look_at, width: size, height: size, ..Camera::default() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BodyModel {
    Rigid,
    Deformable,
}

/// A cube resting on the ground that receives a known impulse and slides.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeSetup {
    pub model: BodyModel,
    pub mass: f64,
    pub size: f64,
    pub contact: ContactParams,
    /// Known impulse (N·s) applied at the center of mass at step 0.
    pub impulse: Vec3,
    /// Lamé parameters of the deformable variant.
    pub mu: f64,
    pub lambda: f64,
    /// Lamé parameters (μ = λ) of the soft cube that plays the deformable
    /// target when a rigid model is fitted to it.
    pub soft_lame: f64,
    pub start: Vec3,
    pub frames: usize,
    pub image_size: usize,
}

impl Default for CubeSetup {
    fn default() -> Self {
        CubeSetup {
            model: BodyModel::Rigid,
            mass: 1.0,
            size: 0.4,
            contact: ContactParams { ke: 1000.0, kd: 5.0, kf: 0.02, mu: 1.0 },
            impulse: Vec3::new(0.1, 0.0, 0.0),
            mu: 5000.0,
            lambda: 5000.0,
            soft_lame: 60.0,
            start: Vec3::new(-0.5, 0.2, 0.0),
            frames: 60,
            image_size: 64,
        }
    }
}

impl CubeSetup {
    pub const DT: f64 = 1.0 / 960.0;
    pub const STRIDE: usize = 32;

    pub fn episode(&self) -> Result<Episode> {
        let mut b = SceneBuilder::new();
        let s = self.size;
        let color = Vec3::new(0.85, 0.35, 0.2);
        let ent = match self.model {
            BodyModel::Rigid => b.add_rigid(RigidSpec {
                name: "cube".into(),
                surface: box_surface(Vec3::repeat(s)),
                mass: self.mass,
                position: self.start,
                orientation: quat_identity(),
                velocity: Vec3::zeros(),
                angular_velocity: Vec3::zeros(),
                inertia: None,
                material: phong(color),
            })?,
            BodyModel::Deformable => {
                let (vertices, tets) = box_tet_grid([1, 1, 1], Vec3::repeat(s), self.start - Vec3::repeat(s / 2.0));
                b.add_fem(FemSpec {
                    name: "cube".into(),
                    vertices,
                    tets,
                    mass: self.mass,
                    mu: self.mu,
                    lambda: self.lambda,
                    fixed: vec![],
                    velocity: Vec3::zeros(),
                    material: phong(color),
                })?
            }
        };
        b.add_plane(ContactPlane::ground());
        b.add_impulse(Impulse { entity: ent, step: 0, impulse: self.impulse, point: None })?;
        let cam = camera(Vec3::new(0.0, 0.8, 2.6), Vec3::new(-0.1, 0.2, 0.0), self.image_size);
        let scenario = b.build(renderer(cam), self.contact, AeroCoefficients::default(), gravity())?;
        let options = RolloutOptions::new(Self::DT, self.frames * Self::STRIDE).with_render_stride(Self::STRIDE);
        Ok(Episode { scenario, options })
    }
}

/// Deliberate mismatches between the simulated model and the scene that
/// produced the target video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelMismatch {
    Perfect,
    NoFriction,
    PerfectElastic,
    RigidAsDeformable,
    DeformableAsRigid,
}

impl ModelMismatch {
    pub const ALL: [ModelMismatch; 5] = [
        ModelMismatch::Perfect,
        ModelMismatch::NoFriction,
        ModelMismatch::PerfectElastic,
        ModelMismatch::RigidAsDeformable,
        ModelMismatch::DeformableAsRigid,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ModelMismatch::Perfect => "perfect",
            ModelMismatch::NoFriction => "no-friction",
            ModelMismatch::PerfectElastic => "perfect-elastic",
            ModelMismatch::RigidAsDeformable => "rigid-as-deformable",
            ModelMismatch::DeformableAsRigid => "deformable-as-rigid",
        }
    }

    /// Returns `(truth, model)`: the setup that renders the target and the
    /// one used for estimation.
    pub fn setups(&self, base: &CubeSetup) -> (CubeSetup, CubeSetup) {
        let truth = base.clone();
        let mut model = base.clone();
        match self {
            ModelMismatch::Perfect => {}
            ModelMismatch::NoFriction => {
                model.contact.kf = 0.0;
                model.contact.mu = 0.0;
            }
            ModelMismatch::PerfectElastic => model.contact.kd = 0.0,
            ModelMismatch::RigidAsDeformable => {
                model.model = BodyModel::Deformable;
                return (CubeSetup { model: BodyModel::Rigid, ..truth }, model);
            }
            ModelMismatch::DeformableAsRigid => {
                model.model = BodyModel::Rigid;
                let soft = CubeSetup { model: BodyModel::Deformable, mu: base.soft_lame, lambda: base.soft_lame, ..truth };
                return (soft, model);
            }
        }
        (truth, model)
    }
}

/// A cube tossed onto the ground: it lands, bounces and slides to rest.
#[derive(Debug, Clone, PartialEq)]
pub struct BounceSetup {
    pub size: f64,
    /// kg/m³.
    pub density: f64,
    pub contact: ContactParams,
    /// Incline angle in radians. Kept below `atan(0.2)` so every sampled
    /// friction coefficient can hold the box, which then creeps downhill at
    /// a speed set by `kf`.
    pub slope: f64,
    /// Starting position along the incline and gap above it.
    pub start: f64,
    pub drop: f64,
    /// Initial downhill speed.
    pub speed: f64,
    /// Initial spin about the incline normal, rad/s. Torsional friction
    /// makes `μ` visible even when the box barely slides.
    pub spin: f64,
    pub frames: usize,
    pub image_size: usize,
}

impl Default for BounceSetup {
    fn default() -> Self {
        BounceSetup {
            size: 1.0,
            density: 20.0,
            contact: ContactParams { ke: 200.0, kd: 20.0, kf: 100.0, mu: 0.5 },
            slope: 0.18f64.atan(),
            start: -1.0,
            drop: 0.3,
            speed: 1.0,
            spin: 6.0,
            frames: 60,
            image_size: 64,
        }
    }
}

impl BounceSetup {
    pub const DT: f64 = 1.0 / 960.0;
    pub const STRIDE: usize = 32;

    /// Contact parameters drawn uniformly from `k_e, k_d, k_f ∈ [1, 500]`,
    /// `μ ∈ [0.2, 1]`.
    pub fn sample_contact(seed: u64) -> ContactParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ContactParams {
            ke: rng.random_range(1.0..500.0),
            kd: rng.random_range(1.0..500.0),
            kf: rng.random_range(1.0..500.0),
            mu: rng.random_range(0.2..1.0),
        }
    }

    pub fn episode(&self) -> Result<Episode> {
        let (s, c) = self.slope.sin_cos();
        let normal = Vec3::new(s, c, 0.0);
        let downhill = Vec3::new(c, -s, 0.0);
        let half = -self.slope / 2.0;
        let mut b = SceneBuilder::new();
        b.add_rigid(RigidSpec {
            name: "box".into(),
            surface: box_surface(Vec3::repeat(self.size)),
            mass: self.density * self.size.powi(3),
            position: downhill * self.start + normal * (self.size / 2.0 + self.drop),
            orientation: Quat::new(half.cos(), 0.0, 0.0, half.sin()),
            velocity: downhill * self.speed,
            angular_velocity: normal * self.spin,
            inertia: None,
            material: phong(Vec3::new(0.3, 0.7, 0.8)),
        })?;
        b.add_plane(ContactPlane::new(normal, 0.0, 0.0)?);
        let cam = camera(Vec3::new(0.0, 3.5, 3.5), Vec3::new(0.0, 0.0, 0.0), self.image_size);
        let scenario = b.build(renderer(cam), self.contact, AeroCoefficients::default(), gravity())?;
        let options = RolloutOptions::new(Self::DT, self.frames * Self::STRIDE).with_render_stride(Self::STRIDE);
        Ok(Episode { scenario, options })
    }
}

/// Cantilever beam clamped at one end, sagging and swinging under gravity.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamSetup {
    pub cells: [usize; 3],
    pub size: Vec3,
    pub mass: f64,
    pub mu: f64,
    pub lambda: f64,
    /// Initial twist about the beam axis, as the angular rate (rad/s) at the
    /// free end. It grows linearly from zero at the clamp.
    pub twist: f64,
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    pub image_size: usize,
}

impl Default for BeamSetup {
    fn default() -> Self {
        BeamSetup {
            cells: [8, 2, 2],
            size: Vec3::new(1.0, 0.25, 0.25),
            mass: 0.1,
            mu: 1000.0,
            lambda: 1000.0,
            twist: 8.0,
            dt: 1.0 / 1000.0,
            steps: 600,
            stride: 20,
            image_size: 64,
        }
    }
}

impl BeamSetup {
    pub fn episode(&self) -> Result<Episode> {
        let origin = Vec3::new(-0.5, 0.6, -self.size.z / 2.0);
        let (vertices, tets) = box_tet_grid(self.cells, self.size, origin);
        let fixed: Vec<usize> = vertices.iter().enumerate().filter(|(_, v)| (v.x - origin.x).abs() < 1e-9).map(|(i, _)| i).collect();
        let mut b = SceneBuilder::new();
        b.add_fem(FemSpec {
            name: "beam".into(),
            vertices,
            tets,
            mass: self.mass,
            mu: self.mu,
            lambda: self.lambda,
            fixed,
            velocity: Vec3::zeros(),
            material: phong(Vec3::new(0.3, 0.6, 0.9)),
        })?;
        let cam = camera(Vec3::new(0.3, 0.8, 2.4), Vec3::new(0.0, 0.5, 0.0), self.image_size);
        let mut scenario = b.build(renderer(cam), ContactParams::default(), AeroCoefficients::default(), gravity())?;
        let axis = Vec3::new(0.0, origin.y + self.size.y / 2.0, 0.0);
        for (q, u) in scenario.state.particle_q.iter().zip(scenario.state.particle_u.iter_mut()) {
            let w = self.twist * (q.x - origin.x) / self.size.x;
            *u += Vec3::new(w, 0.0, 0.0).cross(&(q - axis));
        }
        let options = RolloutOptions::new(self.dt, self.steps).with_render_stride(self.stride);
        Ok(Episode { scenario, options })
    }
}

/// Beam of roughly `tets` elements for throughput measurements. The step
/// shrinks with the element size to stay inside the explicit stability
/// limit `h/c` of the elastic wave speed `c`.
pub fn bench_beam(tets: usize) -> Result<Episode> {
    let base = BeamSetup::default();
    let cells = grid_for_tet_count(tets, [4.0, 1.0, 1.0]);
    let h = (0..3).map(|k| base.size[k] / cells[k] as f64).fold(f64::INFINITY, f64::min);
    let density = base.mass / base.size.product();
    let c = ((base.lambda + 2.0 * base.mu) / density).sqrt();
    BeamSetup { cells, twist: 0.0, dt: 0.25 * h / c, steps: 1, stride: 1, ..base }.episode()
}

/// Soft tet strip lying on the ground, actuated per element.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkerSetup {
    pub cells: [usize; 3],
    pub size: Vec3,
    pub mass: f64,
    pub mu: f64,
    pub lambda: f64,
    pub contact: ContactParams,
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    pub image_size: usize,
}

impl Default for WalkerSetup {
    fn default() -> Self {
        WalkerSetup {
            cells: [6, 1, 1],
            size: Vec3::new(1.2, 0.2, 0.2),
            mass: 1.0,
            mu: 2000.0,
            lambda: 2000.0,
            contact: ContactParams { ke: 2000.0, kd: 10.0, kf: 5.0, mu: 0.8 },
            dt: 1.0 / 480.0,
            steps: 960,
            stride: 96,
            image_size: 64,
        }
    }
}

impl WalkerSetup {
    pub fn episode(&self) -> Result<Episode> {
        let origin = Vec3::new(-self.size.x / 2.0, 0.0, -self.size.z / 2.0);
        let (vertices, tets) = box_tet_grid(self.cells, self.size, origin);
        let mut b = SceneBuilder::new();
        b.add_fem(FemSpec {
            name: "walker".into(),
            vertices,
            tets,
            mass: self.mass,
            mu: self.mu,
            lambda: self.lambda,
            fixed: vec![],
            velocity: Vec3::zeros(),
            material: phong(Vec3::new(0.2, 0.8, 0.4)),
        })?;
        b.add_plane(ContactPlane::ground());
        let cam = camera(Vec3::new(0.0, 1.2, 2.6), Vec3::new(0.2, 0.1, 0.0), self.image_size);
        let scenario = b.build(renderer(cam), self.contact, AeroCoefficients::default(), gravity())?;
        let options = RolloutOptions::new(self.dt, self.steps).with_render_stride(self.stride);
        Ok(Episode { scenario, options })
    }

    /// Control task whose target is the last frame of the passive walker
    /// started `shift` meters further along +x.
    pub fn control_task(&self, shift: f64) -> Result<ControlTask> {
        let ep = self.episode()?;
        let sc = ep.scenario;
        let mut moved = sc.state.clone();
        for q in &mut moved.particle_q {
            q.x += shift;
        }
        let target = last_frame(&sc.scene, &sc.params, &moved, &ep.options)?;
        Ok(ControlTask::new(sc.scene, sc.params, sc.state, ep.options, target))
    }
}

fn last_frame(scene: &Arc<SceneGraph>, params: &ModelParams, s: &SystemState, options: &RolloutOptions) -> Result<Frame> {
    let tape = rollout(scene, params, s, options)?;
    tape.frames.last().map(|f| f.frame.clone()).ok_or_else(|| SimError::config("episode renders no frames"))
}

/// Square cloth falling under gravity and drag; geometry and pose are
/// jittered by `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClothSetup {
    pub cells: [usize; 2],
    pub size: f64,
    pub mass: f64,
    pub mu: f64,
    pub lambda: f64,
    pub bend: f64,
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for ClothSetup {
    fn default() -> Self {
        ClothSetup {
            cells: [4, 8],
            size: 1.0,
            mass: 0.2,
            mu: 100.0,
            lambda: 100.0,
            bend: 0.01,
            dt: 1.0 / 480.0,
            steps: 240,
            stride: 24,
            image_size: 64,
            seed: 0,
        }
    }
}

impl ClothSetup {
    pub fn episode(&self) -> Result<Episode> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let jitter = Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.1..0.1), rng.random_range(-0.2..0.2));
        let aspect = self.cells[1] as f64 / self.cells[0] as f64;
        let sx = self.size * rng.random_range(0.8..1.2);
        let sz = sx * aspect / 2.0;
        let origin = Vec3::new(-sx / 2.0, 1.2, -sz / 2.0) + jitter;
        let (vertices, triangles) = cloth_grid(self.cells, [sx, sz], origin);
        let mut b = SceneBuilder::new();
        b.add_shell(ShellSpec {
            name: "cloth".into(),
            vertices,
            triangles,
            mass: self.mass,
            mu: self.mu,
            lambda: self.lambda,
            bend_stiffness: self.bend,
            fixed: vec![],
            velocity: Vec3::zeros(),
            material: phong(Vec3::new(0.9, 0.8, 0.3)),
        })?;
        let cam = camera(Vec3::new(0.0, 1.5, 3.5), Vec3::new(0.0, 0.8, 0.0), self.image_size);
        let scenario = b.build(renderer(cam), ContactParams::default(), AeroCoefficients::default(), gravity())?;
        let options = RolloutOptions::new(self.dt, self.steps).with_render_stride(self.stride);
        Ok(Episode { scenario, options })
    }
}

/// Small cube of eight free point masses flying ballistically.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectileSetup {
    pub size: f64,
    pub start: Vec3,
    pub velocity: Vec3,
    pub dt: f64,
    pub steps: usize,
    pub image_size: usize,
}

impl Default for ProjectileSetup {
    fn default() -> Self {
        ProjectileSetup {
            size: 0.3,
            start: Vec3::new(-1.2, 0.4, 0.0),
            velocity: Vec3::zeros(),
            dt: 1.0 / 240.0,
            steps: 180,
            image_size: 64,
        }
    }
}

impl ProjectileSetup {
    pub fn episode(&self) -> Result<Episode> {
        let surf = box_surface(Vec3::repeat(self.size));
        let mut b = SceneBuilder::new();
        b.add_points(PointsSpec {
            name: "projectile".into(),
            vertices: surf.vertices.iter().map(|v| v + self.start).collect(),
            triangles: surf.triangles,
            mass: 1.0,
            velocity: self.velocity,
            material: phong(Vec3::new(0.9, 0.4, 0.9)),
        })?;
        let cam = camera(Vec3::new(0.0, 1.0, 4.0), Vec3::new(0.0, 0.8, 0.0), self.image_size);
        let scenario = b.build(renderer(cam), ContactParams::default(), AeroCoefficients::default(), gravity())?;
        let options = RolloutOptions::new(self.dt, self.steps).with_render_stride(self.steps);
        Ok(Episode { scenario, options })
    }

    /// Launch velocity that carries the start point to `target` in the
    /// episode duration `T`: `v = Δ/T − g T/2`.
    pub fn closed_form_velocity(&self, target: &Vec3) -> Vec3 {
        let t = self.dt * self.steps as f64;
        (target - self.start) / t - gravity() * (t / 2.0)
    }
}

/// Simple or double pendulum hanging from a pivot.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumSetup {
    pub links: usize,
    pub lengths: [f64; 2],
    pub angles: [f64; 2],
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    pub image_size: usize,
}

impl Default for PendulumSetup {
    fn default() -> Self {
        PendulumSetup { links: 1, lengths: [0.8, 0.6], angles: [0.6, 0.0], dt: 1.0 / 480.0, steps: 480, stride: 16, image_size: 64 }
    }
}

impl PendulumSetup {
    pub fn episode(&self) -> Result<Episode> {
        let mut b = SceneBuilder::new();
        b.add_pendulum(PendulumSpec {
            name: "pendulum".into(),
            pivot: Vec3::new(0.0, 1.8, 0.0),
            links: self.links,
            lengths: self.lengths,
            masses: [1.0, 1.0],
            angles: self.angles,
            rates: [0.0, 0.0],
            bob_size: 0.15,
            material: phong(Vec3::new(0.8, 0.8, 0.2)),
        })?;
        let cam = camera(Vec3::new(0.0, 1.0, 4.0), Vec3::new(0.0, 1.0, 0.0), self.image_size);
        let scenario = b.build(renderer(cam), ContactParams::default(), AeroCoefficients::default(), gravity())?;
        let options = RolloutOptions::new(self.dt, self.steps).with_render_stride(self.stride);
        Ok(Episode { scenario, options })
    }
}

/// Uniform sample in `[lo, hi)` from a seeded stream.
pub fn seeded_uniform(seed: u64, lo: f64, hi: f64) -> f64 {
    ChaCha8Rng::seed_from_u64(seed).random_range(lo..hi)
}
