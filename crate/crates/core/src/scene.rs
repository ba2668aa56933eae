//! Scene graph: entities, contact planes, camera and materials, plus the
//! builder that assembles a scene with its initial state and parameters.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use crate::dynamics::contact::{ContactParams, ContactPlane};
use crate::dynamics::fem::rest_stable_alpha;
use crate::dynamics::pendulum::bob_offsets;
use crate::dynamics::rigid::{RigidState, UnitInertia};
use crate::dynamics::shell::AeroCoefficients;
use crate::error::{Result, SimError};
use crate::math::{quat_to_mat, quat_to_mat_adjoint, Mat3, Quat, Vec2, Vec3};
use crate::mesh::{box_surface, unit_mass_inertia, HingeEdge, SurfaceMesh, TetMesh, TriShellMesh};
use crate::render::{Material, RenderMesh, Renderer};
use crate::state::{ModelParams, SystemState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityKind {
    Rigid,
    Fem,
    Shell,
    Points,
    Pendulum,
}

/// Index ranges an entity occupies in the shared arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub name: String,
    pub kind: EntityKind,
    /// Index into `bodies` or `pendula` for those kinds.
    pub index: usize,
    pub particles: Range<usize>,
    pub tets: Range<usize>,
    pub tris: Range<usize>,
    pub edges: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidBody {
    /// Surface vertices relative to the center of mass, body frame.
    pub points: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub inertia: UnitInertia,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumBody {
    pub pivot: Vec3,
    /// 1 or 2.
    pub links: usize,
    pub bob_size: f64,
}

/// Known instantaneous impulse applied at the start of step `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Impulse {
    pub entity: usize,
    pub step: usize,
    pub impulse: Vec3,
    /// World-space application point (rigid targets); `None` means the
    /// center of mass.
    pub point: Option<Vec3>,
}

/// Where a render vertex gets its position from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VertexSource {
    Particle(usize),
    Body { body: usize, local: Vec3 },
    Bob { pendulum: usize, link: usize, offset: Vec3 },
}

/// Immutable description of a scene. Initial state and parameters live
/// outside (see [`Scenario`]).
#[derive(Debug, Clone)]
pub struct SceneGraph {
    pub entities: Vec<Entity>,
    pub particle_count: usize,
    pub tet_mesh: TetMesh,
    pub shell_mesh: TriShellMesh,
    pub bodies: Vec<RigidBody>,
    pub pendula: Vec<PendulumBody>,
    pub planes: Vec<ContactPlane>,
    pub aero: AeroCoefficients,
    pub impulses: Vec<Impulse>,
    pub renderer: Renderer,
    pub render_mesh: RenderMesh,
    pub vertex_sources: Vec<VertexSource>,
}

/// A scene with its initial state and model parameters.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub scene: Arc<SceneGraph>,
    pub params: ModelParams,
    pub state: SystemState,
}

impl SceneGraph {
    pub fn entity(&self, name: &str) -> Option<usize> {
        self.entities.iter().position(|e| e.name == name)
    }

    /// Positions of all render vertices in state `s`.
    pub fn render_positions(&self, s: &SystemState, params: &ModelParams) -> Vec<Vec3> {
        let rots: Vec<Mat3> = s.bodies.iter().map(|b| quat_to_mat(&b.r)).collect();
        self.vertex_sources
            .iter()
            .map(|src| match *src {
                VertexSource::Particle(i) => s.particle_q[i],
                VertexSource::Body { body, local } => s.bodies[body].x + rots[body] * local,
                VertexSource::Bob { pendulum, link, offset } => {
                    let p = &self.pendula[pendulum];
                    let b = bob_offsets(p.links, &s.pendulum_q[pendulum], &params.pendulum_length[pendulum])[link];
                    p.pivot + Vec3::new(b[0], b[1], 0.0) + offset
                }
            })
            .collect()
    }

    /// Accumulates state and parameter cotangents from render-vertex
    /// cotangents.
    pub fn render_positions_adjoint(
        &self,
        s: &SystemState,
        params: &ModelParams,
        p_bar: &[Vec3],
        s_bar: &mut SystemState,
        params_bar: &mut ModelParams,
    ) {
        let mut rot_bar = vec![Mat3::zeros(); s.bodies.len()];
        for (src, pb) in self.vertex_sources.iter().zip(p_bar) {
            match *src {
                VertexSource::Particle(i) => s_bar.particle_q[i] += pb,
                VertexSource::Body { body, local } => {
                    s_bar.bodies[body].x += pb;
                    rot_bar[body] += pb * local.transpose();
                }
                VertexSource::Bob { pendulum, link, .. } => {
                    let th = s.pendulum_q[pendulum];
                    let len = params.pendulum_length[pendulum];
                    let (s1, c1) = th[0].sin_cos();
                    // b₁ = L₁(sin θ₁, −cos θ₁), b₂ = b₁ + L₂(sin θ₂, −cos θ₂)
                    s_bar.pendulum_q[pendulum][0] += len[0] * (pb.x * c1 + pb.y * s1);
                    params_bar.pendulum_length[pendulum][0] += pb.x * s1 - pb.y * c1;
                    if link == 1 {
                        let (s2, c2) = th[1].sin_cos();
                        s_bar.pendulum_q[pendulum][1] += len[1] * (pb.x * c2 + pb.y * s2);
                        params_bar.pendulum_length[pendulum][1] += pb.x * s2 - pb.y * c2;
                    }
                }
            }
        }
        for (b, rb) in rot_bar.iter().enumerate() {
            if *rb != Mat3::zeros() {
                let qb = quat_to_mat_adjoint(&s.bodies[b].r, rb);
                s_bar.bodies[b].r.coords += qb.coords;
            }
        }
    }

    /// Mass-weighted center of all dynamic matter.
    pub fn center_of_mass(&self, s: &SystemState, params: &ModelParams) -> Vec3 {
        let (mut acc, mut total) = (Vec3::zeros(), 0.0);
        for (q, w) in s.particle_q.iter().zip(&params.particle_inv_mass) {
            if *w > 0.0 {
                acc += q / *w;
                total += 1.0 / w;
            }
        }
        for (b, m) in s.bodies.iter().zip(&params.body_mass) {
            acc += b.x * *m;
            total += m;
        }
        if total > 0.0 {
            acc / total
        } else {
            acc
        }
    }

    /// Cotangent of the state for `c̄ · com(s)`.
    pub fn center_of_mass_adjoint(&self, s: &SystemState, params: &ModelParams, c_bar: &Vec3) -> SystemState {
        let mut out = s.zeros_like();
        let total: f64 = params.particle_inv_mass.iter().filter(|w| **w > 0.0).map(|w| 1.0 / w).sum::<f64>()
            + params.body_mass.iter().sum::<f64>();
        if total <= 0.0 {
            return out;
        }
        for (i, w) in params.particle_inv_mass.iter().enumerate() {
            if *w > 0.0 {
                out.particle_q[i] = c_bar / (w * total);
            }
        }
        for (b, m) in params.body_mass.iter().enumerate() {
            out.bodies[b].x = c_bar * (m / total);
        }
        out
    }

    /// Checks physical bounds of `params` and `state` against this scene.
    pub fn validate(&self, params: &ModelParams, state: &SystemState) -> Result<()> {
        let n = self.particle_count;
        let shape = |what: &str, got: usize, want: usize| {
            if got != want {
                Err(SimError::ShapeMismatch(format!("{what}: {got} entries, scene needs {want}")))
            } else {
                Ok(())
            }
        };
        shape("particle positions", state.particle_q.len(), n)?;
        shape("particle velocities", state.particle_u.len(), n)?;
        shape("particle inverse masses", params.particle_inv_mass.len(), n)?;
        shape("tet mu", params.tet_mu.len(), self.tet_mesh.len())?;
        shape("tet lambda", params.tet_lambda.len(), self.tet_mesh.len())?;
        shape("tet activation", params.tet_activation.len(), self.tet_mesh.len())?;
        shape("shell mu", params.tri_mu.len(), self.shell_mesh.len())?;
        shape("shell lambda", params.tri_lambda.len(), self.shell_mesh.len())?;
        shape("edge stiffness", params.edge_stiffness.len(), self.shell_mesh.edges.len())?;
        shape("edge activation", params.edge_activation.len(), self.shell_mesh.edges.len())?;
        shape("body masses", params.body_mass.len(), self.bodies.len())?;
        shape("body states", state.bodies.len(), self.bodies.len())?;
        shape("pendulum lengths", params.pendulum_length.len(), self.pendula.len())?;
        shape("pendulum masses", params.pendulum_mass.len(), self.pendula.len())?;
        shape("pendulum angles", state.pendulum_q.len(), self.pendula.len())?;
        shape("pendulum rates", state.pendulum_u.len(), self.pendula.len())?;

        if params.particle_inv_mass.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(SimError::config("particle inverse masses must be finite and ≥ 0"));
        }
        if params.body_mass.iter().any(|m| !(*m > 0.0)) {
            return Err(SimError::config("rigid body mass must be positive"));
        }
        let non_neg = |name: &str, v: &[f64]| {
            if v.iter().any(|x| !(*x >= 0.0)) {
                Err(SimError::config(format!("{name} must be non-negative")))
            } else {
                Ok(())
            }
        };
        non_neg("Lamé mu", &params.tet_mu)?;
        non_neg("Lamé lambda", &params.tet_lambda)?;
        non_neg("shell mu", &params.tri_mu)?;
        non_neg("shell lambda", &params.tri_lambda)?;
        non_neg("bending stiffness", &params.edge_stiffness)?;
        if params.tet_lambda.iter().any(|l| *l == 0.0) || params.tri_lambda.iter().any(|l| *l == 0.0) {
            return Err(SimError::config("Lamé lambda must be positive"));
        }
        let c = &params.contact;
        non_neg("contact stiffness/damping", &[c.ke, c.kd, c.kf])?;
        if !(0.0..=1.0).contains(&c.mu) {
            return Err(SimError::config("friction coefficient must lie in [0, 1]"));
        }
        for (l, m) in params.pendulum_length.iter().zip(&params.pendulum_mass) {
            if l.iter().any(|x| !(*x > 0.0)) || m.iter().any(|x| !(*x > 0.0)) {
                return Err(SimError::config("pendulum lengths and masses must be positive"));
            }
        }
        for b in &state.bodies {
            let n = crate::math::quat_norm(&b.r);
            if (n - 1.0).abs() > 1e-9 {
                return Err(SimError::config(format!("rigid orientation must be a unit quaternion (norm {n})")));
            }
        }
        if let Some(q) = state.first_non_finite() {
            return Err(SimError::config(format!("initial {q} is not finite")));
        }
        self.renderer.validate()
    }
}

// ----------------------------------------------------------------- builder

#[derive(Debug, Clone)]
pub struct RigidSpec {
    pub name: String,
    pub surface: SurfaceMesh,
    pub mass: f64,
    /// World position of the center of mass.
    pub position: Vec3,
    pub orientation: Quat,
    pub velocity: Vec3,
    pub angular_velocity: Vec3,
    /// Unit-mass body inertia; computed from the surface when absent.
    pub inertia: Option<Mat3>,
    pub material: Material,
}

#[derive(Debug, Clone)]
pub struct FemSpec {
    pub name: String,
    pub vertices: Vec<Vec3>,
    pub tets: Vec<[usize; 4]>,
    /// Total mass, lumped to vertices by volume.
    pub mass: f64,
    pub mu: f64,
    pub lambda: f64,
    pub fixed: Vec<usize>,
    pub velocity: Vec3,
    pub material: Material,
}

#[derive(Debug, Clone)]
pub struct ShellSpec {
    pub name: String,
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// Total mass, lumped to vertices by area.
    pub mass: f64,
    pub mu: f64,
    pub lambda: f64,
    pub bend_stiffness: f64,
    pub fixed: Vec<usize>,
    pub velocity: Vec3,
    pub material: Material,
}

/// Free point masses with no internal forces, rendered with `triangles`.
#[derive(Debug, Clone)]
pub struct PointsSpec {
    pub name: String,
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub mass: f64,
    pub velocity: Vec3,
    pub material: Material,
}

#[derive(Debug, Clone)]
pub struct PendulumSpec {
    pub name: String,
    pub pivot: Vec3,
    pub links: usize,
    pub lengths: [f64; 2],
    pub masses: [f64; 2],
    pub angles: [f64; 2],
    pub rates: [f64; 2],
    pub bob_size: f64,
    pub material: Material,
}

#[derive(Debug, Default)]
pub struct SceneBuilder {
    entities: Vec<Entity>,
    rest: Vec<Vec3>,
    velocity: Vec<Vec3>,
    inv_mass: Vec<f64>,
    tets: Vec<[usize; 4]>,
    tet_rest_inv: Vec<Mat3>,
    tet_volume: Vec<f64>,
    tet_mu: Vec<f64>,
    tet_lambda: Vec<f64>,
    tris: Vec<[usize; 3]>,
    tri_rest_inv: Vec<nalgebra::Matrix2<f64>>,
    tri_area: Vec<f64>,
    tri_mu: Vec<f64>,
    tri_lambda: Vec<f64>,
    edges: Vec<HingeEdge>,
    edge_stiffness: Vec<f64>,
    bodies: Vec<RigidBody>,
    body_states: Vec<RigidState>,
    body_mass: Vec<f64>,
    pendula: Vec<PendulumBody>,
    pend_len: Vec<[f64; 2]>,
    pend_mass: Vec<[f64; 2]>,
    pend_q: Vec<[f64; 2]>,
    pend_u: Vec<[f64; 2]>,
    planes: Vec<ContactPlane>,
    impulses: Vec<Impulse>,
    materials: Vec<Material>,
    render: RenderMesh,
    sources: Vec<VertexSource>,
}

impl SceneBuilder {
    pub fn new() -> Self {
        SceneBuilder::default()
    }

    fn check_name(&self, name: &str) -> Result<()> {
        if self.entities.iter().any(|e| e.name == name) {
            return Err(SimError::config(format!("duplicate entity name {name:?}")));
        }
        Ok(())
    }

    fn add_material(&mut self, m: Material) -> usize {
        self.materials.push(m);
        self.materials.len() - 1
    }

    fn push_render_vertex(&mut self, src: VertexSource, color: Vec3, uv: Vec2, material: usize) -> usize {
        self.sources.push(src);
        self.render.base_colors.push(color);
        self.render.uvs.push(uv);
        self.render.vertex_material.push(material);
        self.sources.len() - 1
    }

    /// Adds render triangles over particles, creating one render vertex per
    /// referenced particle. UVs are planar in the XZ extent of the entity.
    fn add_particle_surface(&mut self, faces: &[[usize; 3]], material: usize) {
        let color = self.materials[material].color;
        let used: std::collections::BTreeSet<usize> = faces.iter().flatten().copied().collect();
        let pts: Vec<Vec3> = used.iter().map(|&i| self.rest[i]).collect();
        let (lo, hi) = bounds(&pts);
        let mut map = BTreeMap::new();
        for &i in &used {
            let uv = planar_uv(&self.rest[i], &lo, &hi);
            let r = self.push_render_vertex(VertexSource::Particle(i), color, uv, material);
            map.insert(i, r);
        }
        for f in faces {
            self.render.triangles.push(f.map(|i| map[&i]));
        }
    }

    fn add_particles(&mut self, vertices: &[Vec3], masses: &[f64], fixed: &[usize], velocity: Vec3) -> Result<Range<usize>> {
        let start = self.rest.len();
        for (k, (v, m)) in vertices.iter().zip(masses).enumerate() {
            let is_fixed = fixed.contains(&k);
            self.rest.push(*v);
            self.velocity.push(if is_fixed { Vec3::zeros() } else { velocity });
            self.inv_mass.push(if is_fixed || *m <= 0.0 { 0.0 } else { 1.0 / m });
        }
        if let Some(&bad) = fixed.iter().find(|&&i| i >= vertices.len()) {
            return Err(SimError::config(format!("fixed vertex {bad} out of range")));
        }
        Ok(start..self.rest.len())
    }

    pub fn add_rigid(&mut self, spec: RigidSpec) -> Result<usize> {
        self.check_name(&spec.name)?;
        if !(spec.mass > 0.0) {
            return Err(SimError::config(format!("{}: mass must be positive", spec.name)));
        }
        let (com, computed) = unit_mass_inertia(&spec.surface);
        let inertia = UnitInertia::new(spec.inertia.unwrap_or(computed))?;
        let points: Vec<Vec3> = spec.surface.vertices.iter().map(|v| v - com).collect();
        let index = self.bodies.len();
        let material = self.add_material(spec.material.clone());
        let (lo, hi) = bounds(&points);
        let mut map = Vec::with_capacity(points.len());
        for p in &points {
            let uv = planar_uv(p, &lo, &hi);
            map.push(self.push_render_vertex(VertexSource::Body { body: index, local: *p }, spec.material.color, uv, material));
        }
        for t in &spec.surface.triangles {
            self.render.triangles.push(t.map(|i| map[i]));
        }
        self.bodies.push(RigidBody { points, triangles: spec.surface.triangles.clone(), inertia });
        let n = crate::math::quat_norm(&spec.orientation);
        self.body_states.push(RigidState {
            x: spec.position,
            r: Quat::from(spec.orientation.coords / n),
            v: spec.velocity,
            w: spec.angular_velocity,
        });
        self.body_mass.push(spec.mass);
        let p = self.rest.len();
        self.entities.push(Entity {
            name: spec.name,
            kind: EntityKind::Rigid,
            index,
            particles: p..p,
            tets: self.tets.len()..self.tets.len(),
            tris: self.tris.len()..self.tris.len(),
            edges: self.edges.len()..self.edges.len(),
        });
        Ok(self.entities.len() - 1)
    }

    pub fn add_fem(&mut self, spec: FemSpec) -> Result<usize> {
        self.check_name(&spec.name)?;
        if !(spec.mass > 0.0) {
            return Err(SimError::config(format!("{}: mass must be positive", spec.name)));
        }
        let mesh = TetMesh::new(&spec.vertices, &spec.tets)?;
        let vol = mesh.lumped_volume(spec.vertices.len());
        let total: f64 = vol.iter().sum();
        let masses: Vec<f64> = vol.iter().map(|v| spec.mass * v / total).collect();
        let particles = self.add_particles(&spec.vertices, &masses, &spec.fixed, spec.velocity)?;
        let off = particles.start;
        let t0 = self.tets.len();
        for (e, t) in mesh.tets.iter().enumerate() {
            self.tets.push(t.map(|i| i + off));
            self.tet_rest_inv.push(mesh.rest_inv[e]);
            self.tet_volume.push(mesh.rest_volume[e]);
            self.tet_mu.push(spec.mu);
            self.tet_lambda.push(spec.lambda);
        }
        let material = self.add_material(spec.material);
        let faces: Vec<[usize; 3]> = mesh.boundary_faces().iter().map(|f| f.map(|i| i + off)).collect();
        self.add_particle_surface(&faces, material);
        self.entities.push(Entity {
            name: spec.name,
            kind: EntityKind::Fem,
            index: 0,
            particles,
            tets: t0..self.tets.len(),
            tris: self.tris.len()..self.tris.len(),
            edges: self.edges.len()..self.edges.len(),
        });
        Ok(self.entities.len() - 1)
    }

    pub fn add_shell(&mut self, spec: ShellSpec) -> Result<usize> {
        self.check_name(&spec.name)?;
        if !(spec.mass > 0.0) {
            return Err(SimError::config(format!("{}: mass must be positive", spec.name)));
        }
        let mesh = TriShellMesh::new(&spec.vertices, &spec.triangles)?;
        let area = mesh.lumped_area(spec.vertices.len());
        let total: f64 = area.iter().sum();
        let masses: Vec<f64> = area.iter().map(|a| spec.mass * a / total).collect();
        let particles = self.add_particles(&spec.vertices, &masses, &spec.fixed, spec.velocity)?;
        let off = particles.start;
        let (t0, e0) = (self.tris.len(), self.edges.len());
        for (e, t) in mesh.tris.iter().enumerate() {
            self.tris.push(t.map(|i| i + off));
            self.tri_rest_inv.push(mesh.rest_inv[e]);
            self.tri_area.push(mesh.rest_area[e]);
            self.tri_mu.push(spec.mu);
            self.tri_lambda.push(spec.lambda);
        }
        for h in &mesh.edges {
            self.edges.push(HingeEdge { wings: h.wings.map(|i| i + off), edge: h.edge.map(|i| i + off), rest_angle: h.rest_angle });
            self.edge_stiffness.push(spec.bend_stiffness);
        }
        let material = self.add_material(spec.material);
        let faces: Vec<[usize; 3]> = mesh.tris.iter().map(|f| f.map(|i| i + off)).collect();
        self.add_particle_surface(&faces, material);
        self.entities.push(Entity {
            name: spec.name,
            kind: EntityKind::Shell,
            index: 0,
            particles,
            tets: self.tets.len()..self.tets.len(),
            tris: t0..self.tris.len(),
            edges: e0..self.edges.len(),
        });
        Ok(self.entities.len() - 1)
    }

    pub fn add_points(&mut self, spec: PointsSpec) -> Result<usize> {
        self.check_name(&spec.name)?;
        if !(spec.mass > 0.0) || spec.vertices.is_empty() {
            return Err(SimError::config(format!("{}: needs vertices and a positive mass", spec.name)));
        }
        if spec.triangles.iter().flatten().any(|&i| i >= spec.vertices.len()) {
            return Err(SimError::Mesh(format!("{}: triangle references a missing vertex", spec.name)));
        }
        let each = spec.mass / spec.vertices.len() as f64;
        let particles = self.add_particles(&spec.vertices, &vec![each; spec.vertices.len()], &[], spec.velocity)?;
        let off = particles.start;
        let material = self.add_material(spec.material);
        let faces: Vec<[usize; 3]> = spec.triangles.iter().map(|f| f.map(|i| i + off)).collect();
        self.add_particle_surface(&faces, material);
        self.entities.push(Entity {
            name: spec.name,
            kind: EntityKind::Points,
            index: 0,
            particles,
            tets: self.tets.len()..self.tets.len(),
            tris: self.tris.len()..self.tris.len(),
            edges: self.edges.len()..self.edges.len(),
        });
        Ok(self.entities.len() - 1)
    }

    pub fn add_pendulum(&mut self, spec: PendulumSpec) -> Result<usize> {
        self.check_name(&spec.name)?;
        if !(spec.links == 1 || spec.links == 2) {
            return Err(SimError::config("pendulum links must be 1 or 2"));
        }
        let index = self.pendula.len();
        let material = self.add_material(spec.material.clone());
        let cube = box_surface(Vec3::repeat(spec.bob_size));
        for link in 0..spec.links {
            let base = self.sources.len();
            for v in &cube.vertices {
                let uv = Vec2::new(0.5 + v.x / spec.bob_size, 0.5 + v.z / spec.bob_size);
                self.push_render_vertex(VertexSource::Bob { pendulum: index, link, offset: *v }, spec.material.color, uv, material);
            }
            for t in &cube.triangles {
                self.render.triangles.push(t.map(|i| i + base));
            }
        }
        self.pendula.push(PendulumBody { pivot: spec.pivot, links: spec.links, bob_size: spec.bob_size });
        let second = |a: [f64; 2], fill: f64| if spec.links == 1 { [a[0], fill] } else { a };
        self.pend_len.push(second(spec.lengths, 1.0));
        self.pend_mass.push(second(spec.masses, 1.0));
        self.pend_q.push(second(spec.angles, 0.0));
        self.pend_u.push(second(spec.rates, 0.0));
        let p = self.rest.len();
        self.entities.push(Entity {
            name: spec.name,
            kind: EntityKind::Pendulum,
            index,
            particles: p..p,
            tets: self.tets.len()..self.tets.len(),
            tris: self.tris.len()..self.tris.len(),
            edges: self.edges.len()..self.edges.len(),
        });
        Ok(self.entities.len() - 1)
    }

    pub fn add_plane(&mut self, plane: ContactPlane) {
        self.planes.push(plane);
    }

    pub fn add_impulse(&mut self, impulse: Impulse) -> Result<()> {
        if impulse.entity >= self.entities.len() {
            return Err(SimError::config("impulse targets a missing entity"));
        }
        if self.entities[impulse.entity].kind == EntityKind::Pendulum {
            return Err(SimError::config("impulses on pendula are not supported"));
        }
        self.impulses.push(impulse);
        Ok(())
    }

    /// Finishes the scene. `renderer.materials` is replaced by the entity
    /// materials in insertion order.
    pub fn build(self, mut renderer: Renderer, contact: ContactParams, aero: AeroCoefficients, gravity: Vec3) -> Result<Scenario> {
        renderer.materials = self.materials;
        let ntet = self.tets.len();
        let nedge = self.edges.len();
        let tet_mesh = TetMesh { tets: self.tets, rest_inv: self.tet_rest_inv, rest_volume: self.tet_volume };
        let shell_mesh = TriShellMesh { tris: self.tris, rest_inv: self.tri_rest_inv, rest_area: self.tri_area, edges: self.edges };
        let scene = SceneGraph {
            entities: self.entities,
            particle_count: self.rest.len(),
            tet_mesh,
            shell_mesh,
            bodies: self.bodies,
            pendula: self.pendula,
            planes: self.planes,
            aero,
            impulses: self.impulses,
            renderer,
            render_mesh: self.render,
            vertex_sources: self.sources,
        };
        let params = ModelParams {
            gravity,
            particle_inv_mass: self.inv_mass,
            tet_mu: self.tet_mu,
            tet_lambda: self.tet_lambda,
            tet_activation: vec![0.0; ntet],
            tri_mu: self.tri_mu,
            tri_lambda: self.tri_lambda,
            edge_stiffness: self.edge_stiffness,
            edge_activation: vec![0.0; nedge],
            body_mass: self.body_mass,
            contact,
            pendulum_length: self.pend_len,
            pendulum_mass: self.pend_mass,
            wind: Vec3::zeros(),
        };
        let state = SystemState {
            particle_q: self.rest,
            particle_u: self.velocity,
            bodies: self.body_states,
            pendulum_q: self.pend_q,
            pendulum_u: self.pend_u,
        };
        scene.validate(&params, &state)?;
        Ok(Scenario { scene: Arc::new(scene), params, state })
    }
}

fn bounds(pts: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

fn planar_uv(p: &Vec3, lo: &Vec3, hi: &Vec3) -> Vec2 {
    let span = |a: f64, b: f64, x: f64| if b > a { ((x - a) / (b - a)).clamp(0.0, 1.0) } else { 0.5 };
    Vec2::new(span(lo.x, hi.x, p.x), span(lo.z, hi.z, p.z))
}

/// Passive rest-stable `α` of an element with the given Lamé parameters.
pub fn passive_alpha(mu: f64, lambda: f64) -> f64 {
    rest_stable_alpha(mu, lambda)
}
