//! Differentiable rendering: vertex normals → shading → projection → soft
//! rasterization, each with a hand-written adjoint.

pub mod camera;
pub mod image;
pub mod raster;
pub mod shade;

use serde::{Deserialize, Serialize};

pub use camera::{Camera, ScreenVertex};
pub use image::{Frame, FrameSequence, Image};
pub use raster::{hard_rasterize, soft_rasterize, soft_rasterize_adjoint, RasterGrads, RasterInput, RasterSettings};
pub use shade::{Light, Material, MaterialGrad, ShadingMode, Texture};

use crate::error::{Result, SimError};
use crate::math::{Vec2, Vec3};

/// Triangle soup to render, with per-vertex attributes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RenderMesh {
    pub triangles: Vec<[usize; 3]>,
    pub base_colors: Vec<Vec3>,
    pub uvs: Vec<Vec2>,
    /// Index into [`Renderer::materials`] per vertex.
    pub vertex_material: Vec<usize>,
}

impl RenderMesh {
    pub fn vertex_count(&self) -> usize {
        self.base_colors.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Renderer {
    pub camera: Camera,
    #[serde(default)]
    pub raster: RasterSettings,
    #[serde(default)]
    pub light: Light,
    #[serde(skip)]
    pub materials: Vec<Material>,
}

impl Default for Renderer {
    fn default() -> Self {
        Renderer {
            camera: Camera::default(),
            raster: RasterSettings::default(),
            light: Light::default(),
            materials: vec![Material::default()],
        }
    }
}

/// Intermediates retained by [`Renderer::render`] for the adjoint.
#[derive(Debug, Clone)]
pub struct RenderCache {
    positions: Vec<Vec3>,
    normal_sums: Vec<Vec3>,
    normals: Vec<Vec3>,
    base: Vec<Vec3>,
    raster: RasterInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderGrads {
    pub positions: Vec<Vec3>,
    pub base_colors: Vec<Vec3>,
    pub uvs: Vec<Vec2>,
    pub materials: Vec<MaterialGrad>,
    /// Texel cotangents per material (`None` for untextured ones).
    pub textures: Vec<Option<Vec<Vec3>>>,
}

impl Renderer {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.raster.validate()?;
        if self.light.direction.norm() == 0.0 {
            return Err(SimError::config("light direction must be non-zero"));
        }
        for m in &self.materials {
            m.validate()?;
        }
        Ok(())
    }

    fn base_color(&self, mesh: &RenderMesh, v: usize) -> Vec3 {
        let mat = &self.materials[mesh.vertex_material[v]];
        match (&mat.mode, &mat.texture) {
            (ShadingMode::Textured, Some(tex)) => tex.sample(&mesh.uvs[v]),
            _ => mesh.base_colors[v],
        }
    }

    pub fn render(&self, mesh: &RenderMesh, positions: &[Vec3]) -> (Frame, RenderCache) {
        let (normal_sums, normals) = shade::vertex_normals(positions, &mesh.triangles);
        let view = self.camera.view_direction();
        let base: Vec<Vec3> = (0..positions.len()).map(|v| self.base_color(mesh, v)).collect();
        let colors = (0..positions.len())
            .map(|v| shade::shade_vertex(&normals[v], &base[v], &self.materials[mesh.vertex_material[v]], &self.light, &view))
            .collect();
        let raster = RasterInput {
            screen: self.camera.project_all(positions),
            triangles: mesh.triangles.clone(),
            colors,
            near: self.camera.near,
            far: self.camera.far,
            width: self.camera.width,
            height: self.camera.height,
        };
        let (rgb, silhouette) = soft_rasterize(&raster, &self.raster);
        let cache = RenderCache { positions: positions.to_vec(), normal_sums, normals, base, raster };
        (Frame { rgb, silhouette }, cache)
    }

    pub fn render_adjoint(&self, mesh: &RenderMesh, cache: &RenderCache, rgb_bar: &Image, sil_bar: &Image) -> Result<RenderGrads> {
        let n = cache.positions.len();
        let rg = soft_rasterize_adjoint(&cache.raster, &self.raster, rgb_bar, sil_bar)?;
        let mut out = RenderGrads {
            positions: vec![Vec3::zeros(); n],
            base_colors: vec![Vec3::zeros(); n],
            uvs: vec![Vec2::zeros(); n],
            materials: vec![MaterialGrad::default(); self.materials.len()],
            textures: self.materials.iter().map(|m| m.texture.as_ref().map(|t| vec![Vec3::zeros(); t.texels.len()])).collect(),
        };
        let view = self.camera.view_direction();
        let mut n_bar = vec![Vec3::zeros(); n];
        for v in 0..n {
            out.positions[v] += self.camera.project_adjoint(&cache.positions[v], &rg.ndc[v], rg.depth[v]);
            let mi = mesh.vertex_material[v];
            let mat = &self.materials[mi];
            let (nb, bb, mg) = shade::shade_vertex_adjoint(&cache.normals[v], &cache.base[v], mat, &self.light, &view, &rg.colors[v]);
            n_bar[v] = nb;
            let g = &mut out.materials[mi];
            g.ambient += mg.ambient;
            g.diffuse += mg.diffuse;
            g.specular += mg.specular;
            g.shininess += mg.shininess;
            match (&mat.mode, &mat.texture) {
                (ShadingMode::Textured, Some(tex)) => {
                    let (uvb, texels) = tex.sample_adjoint(&mesh.uvs[v], &bb);
                    out.uvs[v] += uvb;
                    let tg = out.textures[mi].as_mut().expect("texture gradient buffer");
                    for (k, g) in texels {
                        tg[k] += g;
                    }
                }
                _ => out.base_colors[v] += bb,
            }
        }
        shade::vertex_normals_adjoint(&cache.positions, &mesh.triangles, &cache.normal_sums, &n_bar, &mut out.positions);
        Ok(out)
    }
}
