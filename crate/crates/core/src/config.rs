//! JSON scene descriptions.
//!
//! The schema is strict: unknown keys are rejected and errors carry the path
//! of the offending field (`entities[1].mass: ...`). Mesh files and textures
//! are resolved relative to the directory passed to [`SceneConfig::build`].
//! Positions of every entity kind translate the mesh's own frame; rigid
//! bodies additionally rotate about that origin.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adjoint::RolloutOptions;
use crate::dynamics::contact::{ContactParams, ContactPlane};
use crate::dynamics::shell::AeroCoefficients;
use crate::error::{Result, SimError};
use crate::math::{quat_to_mat, Quat, Vec3};
use crate::mesh::{box_surface, box_tet_grid, cloth_grid, unit_mass_inertia, SurfaceMesh};
use crate::mesh_io::{load_surface, load_tet};
use crate::render::{Camera, Image, Light, Material, RasterSettings, Renderer, ShadingMode, Texture};
use crate::scenarios::{Episode, ModelMismatch};
use crate::scene::{FemSpec, Impulse, PendulumSpec, PointsSpec, RigidSpec, SceneBuilder, ShellSpec};

/// Lamé parameters given to rigid bodies converted to deformables.
pub const CONVERTED_LAME: f64 = 5000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gravity")]
    pub gravity: Vec3,
    #[serde(default)]
    pub wind: Vec3,
    #[serde(default)]
    pub contact: ContactParams,
    #[serde(default)]
    pub aero: AeroCoefficients,
    #[serde(default)]
    pub planes: Vec<PlaneConfig>,
    #[serde(default)]
    pub camera: Camera,
    #[serde(default)]
    pub raster: RasterSettings,
    #[serde(default)]
    pub light: Light,
    #[serde(default)]
    pub materials: BTreeMap<String, MaterialConfig>,
    pub entities: Vec<EntityConfig>,
    #[serde(default)]
    pub impulses: Vec<ImpulseConfig>,
    pub episode: EpisodeConfig,
}

fn default_gravity() -> Vec3 {
    Vec3::new(0.0, -9.81, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneConfig {
    pub normal: Vec3,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    pub mode: ShadingMode,
    pub color: Vec3,
    pub ambient: f64,
    pub diffuse: f64,
    pub specular: f64,
    pub shininess: f64,
    pub texture: Option<TextureConfig>,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        let m = Material::default();
        MaterialConfig {
            mode: m.mode,
            color: m.color,
            ambient: m.ambient,
            diffuse: m.diffuse,
            specular: m.specular,
            shininess: m.shininess,
            texture: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TextureConfig {
    Checker { size: usize, cells: usize, colors: [Vec3; 2] },
    /// PNG or binary PPM image.
    File(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshConfig {
    /// Box surface centered on the origin.
    Box(Vec3),
    /// Tetrahedral box centered on the origin.
    BoxGrid { cells: [usize; 3], size: Vec3 },
    /// Triangle sheet in the XZ plane centered on the origin.
    ClothGrid { cells: [usize; 2], size: [f64; 2] },
    /// `.obj` surface or `.tet` volume mesh.
    File(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub min: Vec3,
    pub max: Vec3,
}

impl Region {
    fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EntityConfig {
    Rigid(RigidConfig),
    Fem(SolidConfig),
    Shell(ShellConfig),
    Points(PointsConfig),
    Pendulum(PendulumConfig),
}

impl EntityConfig {
    pub fn name(&self) -> &str {
        match self {
            EntityConfig::Rigid(c) => &c.name,
            EntityConfig::Fem(c) => &c.name,
            EntityConfig::Shell(c) => &c.name,
            EntityConfig::Points(c) => &c.name,
            EntityConfig::Pendulum(c) => &c.name,
        }
    }
}

fn identity() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidConfig {
    pub name: String,
    pub mesh: MeshConfig,
    pub mass: f64,
    #[serde(default)]
    pub position: Vec3,
    /// Quaternion `[w, x, y, z]`.
    #[serde(default = "identity")]
    pub orientation: [f64; 4],
    #[serde(default)]
    pub velocity: Vec3,
    #[serde(default)]
    pub angular_velocity: Vec3,
    #[serde(default)]
    pub material: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolidConfig {
    pub name: String,
    pub mesh: MeshConfig,
    pub mass: f64,
    pub mu: f64,
    pub lambda: f64,
    #[serde(default)]
    pub position: Vec3,
    #[serde(default)]
    pub velocity: Vec3,
    /// Vertex indices pinned in place.
    #[serde(default)]
    pub fixed: Vec<usize>,
    /// Pins every vertex inside this world-space box as well.
    #[serde(default)]
    pub fixed_region: Option<Region>,
    #[serde(default)]
    pub material: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellConfig {
    pub name: String,
    pub mesh: MeshConfig,
    pub mass: f64,
    pub mu: f64,
    pub lambda: f64,
    pub bend_stiffness: f64,
    #[serde(default)]
    pub position: Vec3,
    #[serde(default)]
    pub velocity: Vec3,
    #[serde(default)]
    pub fixed: Vec<usize>,
    #[serde(default)]
    pub fixed_region: Option<Region>,
    #[serde(default)]
    pub material: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsConfig {
    pub name: String,
    pub mesh: MeshConfig,
    pub mass: f64,
    #[serde(default)]
    pub position: Vec3,
    #[serde(default)]
    pub velocity: Vec3,
    #[serde(default)]
    pub material: Option<String>,
}

fn default_bob() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumConfig {
    pub name: String,
    pub pivot: Vec3,
    /// One entry per link (one or two links).
    pub lengths: Vec<f64>,
    pub masses: Vec<f64>,
    /// Angles from the downward vertical, radians.
    pub angles: Vec<f64>,
    #[serde(default)]
    pub rates: Vec<f64>,
    #[serde(default = "default_bob")]
    pub bob_size: f64,
    #[serde(default)]
    pub material: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseConfig {
    pub entity: String,
    #[serde(default)]
    pub step: usize,
    pub impulse: Vec3,
    /// World-space application point; the center of mass when absent.
    #[serde(default)]
    pub point: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub dt: f64,
    pub horizon: usize,
    #[serde(default)]
    pub render_stride: Option<usize>,
}

impl EpisodeConfig {
    pub fn options(&self) -> RolloutOptions {
        RolloutOptions { dt: self.dt, horizon: self.horizon, render_stride: self.render_stride, activations: Vec::new() }
    }
}

impl SceneConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            SimError::config(format!("{path}: {}", e.into_inner()))
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Assembles the scene and the episode settings.
    pub fn build(&self, base_dir: &Path) -> Result<Episode> {
        let options = self.episode.options();
        options.validate()?;
        let mut b = SceneBuilder::new();
        for (i, e) in self.entities.iter().enumerate() {
            let ctx = |err: SimError| SimError::config(format!("entities[{i}]: {}", strip(&err)));
            self.add_entity(&mut b, e, base_dir).map_err(ctx)?;
        }
        for pl in &self.planes {
            b.add_plane(ContactPlane::new(pl.normal, pl.offset, pl.threshold)?);
        }
        for (i, imp) in self.impulses.iter().enumerate() {
            let entity = self
                .entities
                .iter()
                .position(|e| e.name() == imp.entity)
                .ok_or_else(|| SimError::config(format!("impulses[{i}].entity: unknown entity `{}`", imp.entity)))?;
            b.add_impulse(Impulse { entity, step: imp.step, impulse: imp.impulse, point: imp.point })?;
        }
        let renderer = Renderer { camera: self.camera, raster: self.raster, light: self.light, materials: Vec::new() };
        let mut scenario = b.build(renderer, self.contact, self.aero, self.gravity)?;
        scenario.params.wind = self.wind;
        Ok(Episode { scenario, options })
    }

    fn material(&self, name: &Option<String>, base_dir: &Path) -> Result<Material> {
        let Some(name) = name else { return Ok(Material::default()) };
        let m = self.materials.get(name).ok_or_else(|| SimError::config(format!("unknown material `{name}`")))?;
        let texture = match &m.texture {
            None => None,
            Some(TextureConfig::Checker { size, cells, colors }) => Some(Texture::checker(*size, *cells, colors[0], colors[1])),
            Some(TextureConfig::File(path)) => Some(Texture::from_image(&Image::read(&base_dir.join(path))?)?),
        };
        Ok(Material {
            mode: m.mode,
            color: m.color,
            ambient: m.ambient,
            diffuse: m.diffuse,
            specular: m.specular,
            shininess: m.shininess,
            texture: texture.map(std::sync::Arc::new),
        })
    }

    fn add_entity(&self, b: &mut SceneBuilder, e: &EntityConfig, base_dir: &Path) -> Result<usize> {
        match e {
            EntityConfig::Rigid(c) => {
                let surface = surface_mesh(&c.mesh, base_dir)?;
                let o = c.orientation;
                let q = Quat::new(o[0], o[1], o[2], o[3]);
                let n = q.norm();
                if !(n > 0.0 && n.is_finite()) {
                    return Err(SimError::config("orientation must be a non-zero quaternion"));
                }
                let (com, _) = unit_mass_inertia(&surface);
                let position = c.position + quat_to_mat(&(q / n)) * com;
                b.add_rigid(RigidSpec {
                    name: c.name.clone(),
                    surface,
                    mass: c.mass,
                    position,
                    orientation: q,
                    velocity: c.velocity,
                    angular_velocity: c.angular_velocity,
                    inertia: None,
                    material: self.material(&c.material, base_dir)?,
                })
            }
            EntityConfig::Fem(c) => {
                let (vertices, tets) = match &c.mesh {
                    MeshConfig::BoxGrid { cells, size } => box_tet_grid(*cells, *size, c.position - size / 2.0),
                    MeshConfig::File(path) if path.ends_with(".tet") => {
                        let f = load_tet(&base_dir.join(path))?;
                        (f.vertices.iter().map(|v| v + c.position).collect(), f.tets)
                    }
                    _ => return Err(SimError::config("fem entities need a box_grid or .tet mesh")),
                };
                let fixed = fixed_set(&vertices, &c.fixed, &c.fixed_region)?;
                b.add_fem(FemSpec {
                    name: c.name.clone(),
                    vertices,
                    tets,
                    mass: c.mass,
                    mu: c.mu,
                    lambda: c.lambda,
                    fixed,
                    velocity: c.velocity,
                    material: self.material(&c.material, base_dir)?,
                })
            }
            EntityConfig::Shell(c) => {
                let (vertices, triangles) = match &c.mesh {
                    MeshConfig::ClothGrid { cells, size } => {
                        cloth_grid(*cells, *size, c.position - Vec3::new(size[0] / 2.0, 0.0, size[1] / 2.0))
                    }
                    m => {
                        let s = surface_mesh(m, base_dir)?;
                        (s.vertices.iter().map(|v| v + c.position).collect(), s.triangles)
                    }
                };
                let fixed = fixed_set(&vertices, &c.fixed, &c.fixed_region)?;
                b.add_shell(ShellSpec {
                    name: c.name.clone(),
                    vertices,
                    triangles,
                    mass: c.mass,
                    mu: c.mu,
                    lambda: c.lambda,
                    bend_stiffness: c.bend_stiffness,
                    fixed,
                    velocity: c.velocity,
                    material: self.material(&c.material, base_dir)?,
                })
            }
            EntityConfig::Points(c) => {
                let s = surface_mesh(&c.mesh, base_dir)?;
                b.add_points(PointsSpec {
                    name: c.name.clone(),
                    vertices: s.vertices.iter().map(|v| v + c.position).collect(),
                    triangles: s.triangles,
                    mass: c.mass,
                    velocity: c.velocity,
                    material: self.material(&c.material, base_dir)?,
                })
            }
            EntityConfig::Pendulum(c) => {
                let links = c.lengths.len();
                if !(1..=2).contains(&links) || c.masses.len() != links || c.angles.len() != links {
                    return Err(SimError::config("pendula need one or two links with matching lengths, masses and angles"));
                }
                if !c.rates.is_empty() && c.rates.len() != links {
                    return Err(SimError::config("pendulum rates must match the link count"));
                }
                let pad = |v: &[f64], fill: f64| [v[0], v.get(1).copied().unwrap_or(fill)];
                let rates = if c.rates.is_empty() { [0.0; 2] } else { pad(&c.rates, 0.0) };
                b.add_pendulum(PendulumSpec {
                    name: c.name.clone(),
                    pivot: c.pivot,
                    links,
                    lengths: pad(&c.lengths, 1.0),
                    masses: pad(&c.masses, 1.0),
                    angles: pad(&c.angles, 0.0),
                    rates,
                    bob_size: c.bob_size,
                    material: self.material(&c.material, base_dir)?,
                })
            }
        }
    }

    /// Copy of this config with the model deliberately mismatched: friction
    /// or contact damping removed, or rigid and deformable entities swapped.
    pub fn with_mismatch(&self, m: ModelMismatch) -> Result<SceneConfig> {
        let mut out = self.clone();
        match m {
            ModelMismatch::Perfect => {}
            ModelMismatch::NoFriction => {
                out.contact.kf = 0.0;
                out.contact.mu = 0.0;
            }
            ModelMismatch::PerfectElastic => out.contact.kd = 0.0,
            ModelMismatch::RigidAsDeformable => {
                for e in &mut out.entities {
                    if let EntityConfig::Rigid(c) = e {
                        *e = EntityConfig::Fem(rigid_to_solid(c)?);
                    }
                }
            }
            ModelMismatch::DeformableAsRigid => {
                for e in &mut out.entities {
                    if let EntityConfig::Fem(c) = e {
                        *e = EntityConfig::Rigid(solid_to_rigid(c)?);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn strip(e: &SimError) -> String {
    match e {
        SimError::Config(s) => s.clone(),
        other => other.to_string(),
    }
}

fn surface_mesh(m: &MeshConfig, base_dir: &Path) -> Result<SurfaceMesh> {
    match m {
        MeshConfig::Box(size) => Ok(box_surface(*size)),
        MeshConfig::File(path) => load_surface(&base_dir.join(path)),
        _ => Err(SimError::config("expected a box or file surface mesh")),
    }
}

fn fixed_set(vertices: &[Vec3], fixed: &[usize], region: &Option<Region>) -> Result<Vec<usize>> {
    if let Some(i) = fixed.iter().find(|&&i| i >= vertices.len()) {
        return Err(SimError::config(format!("fixed vertex {i} out of range")));
    }
    let mut out = fixed.to_vec();
    if let Some(r) = region {
        out.extend(vertices.iter().enumerate().filter(|(_, v)| r.contains(v)).map(|(i, _)| i));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn rigid_to_solid(c: &RigidConfig) -> Result<SolidConfig> {
    if c.orientation != identity() || c.angular_velocity != Vec3::zeros() {
        return Err(SimError::config(format!("{}: only unrotated, non-spinning rigid bodies can be made deformable", c.name)));
    }
    let mesh = match &c.mesh {
        MeshConfig::Box(size) => MeshConfig::BoxGrid { cells: [1, 1, 1], size: *size },
        MeshConfig::File(p) if p.ends_with(".tet") => MeshConfig::File(p.clone()),
        _ => return Err(SimError::config(format!("{}: a deformable stand-in needs a box or .tet mesh", c.name))),
    };
    Ok(SolidConfig {
        name: c.name.clone(),
        mesh,
        mass: c.mass,
        mu: CONVERTED_LAME,
        lambda: CONVERTED_LAME,
        position: c.position,
        velocity: c.velocity,
        fixed: Vec::new(),
        fixed_region: None,
        material: c.material.clone(),
    })
}

fn solid_to_rigid(c: &SolidConfig) -> Result<RigidConfig> {
    if !c.fixed.is_empty() || c.fixed_region.is_some() {
        return Err(SimError::config(format!("{}: pinned solids cannot be made rigid", c.name)));
    }
    let mesh = match &c.mesh {
        MeshConfig::BoxGrid { size, .. } => MeshConfig::Box(*size),
        other => other.clone(),
    };
    Ok(RigidConfig {
        name: c.name.clone(),
        mesh,
        mass: c.mass,
        position: c.position,
        orientation: identity(),
        velocity: c.velocity,
        angular_velocity: Vec3::zeros(),
        material: c.material.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE: &str = r#"{
        "camera": {"position": [0, 0.8, 2.6], "look_at": [-0.1, 0.2, 0]},
        "materials": {"red": {"mode": "phong", "color": [0.85, 0.35, 0.2]}},
        "planes": [{"normal": [0, 1, 0]}],
        "entities": [{"type": "rigid", "name": "cube", "mesh": {"box": [0.4, 0.4, 0.4]}, "mass": 1.0,
                      "position": [-0.5, 0.2, 0], "material": "red"}],
        "impulses": [{"entity": "cube", "impulse": [0.1, 0, 0]}],
        "episode": {"dt": 0.001, "horizon": 10, "render_stride": 5}
    }"#;

    #[test]
    fn parses_and_builds() {
        let c = SceneConfig::from_json(CUBE).unwrap();
        let ep = c.build(Path::new(".")).unwrap();
        assert_eq!(ep.scenario.scene.bodies.len(), 1);
        assert_eq!(ep.options.frame_count(), 2);
    }

    #[test]
    fn unknown_key_reports_path() {
        let text = CUBE.replace("\"mass\": 1.0", "\"mass\": 1.0, \"colour\": 3");
        let err = SceneConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("entities[0]"), "{err}");
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn round_trip_is_canonical() {
        let c = SceneConfig::from_json(CUBE).unwrap();
        let again = SceneConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.to_json(), again.to_json());
    }

    #[test]
    fn zero_horizon_rejected() {
        let text = CUBE.replace("\"horizon\": 10", "\"horizon\": 0");
        let err = SceneConfig::from_json(&text).unwrap().build(Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("horizon must be ≥ 1"), "{err}");
    }

    #[test]
    fn mismatch_swaps_entity_kinds() {
        let c = SceneConfig::from_json(CUBE).unwrap();
        let d = c.with_mismatch(ModelMismatch::RigidAsDeformable).unwrap();
        assert!(matches!(d.entities[0], EntityConfig::Fem(_)));
        let ep = d.build(Path::new(".")).unwrap();
        assert_eq!(ep.scenario.scene.tet_mesh.len(), 6);
        let back = d.with_mismatch(ModelMismatch::DeformableAsRigid).unwrap();
        assert_eq!(back.entities, c.entities);
        let nf = c.with_mismatch(ModelMismatch::NoFriction).unwrap();
        assert_eq!((nf.contact.kf, nf.contact.mu), (0.0, 0.0));
    }
}
