//! Per-vertex shading: flat color, Phong, and bilinear UV textures.
//!
//! Phong uses a directional light and a constant view direction:
//! `c = k_a·base + light ⊙ (k_d·max(0, n·l)·base + k_s·max(0, r·v)^s)` with
//! `r = 2(n·l)n − l`, clamped to `[0, 1]` per channel. Shaded colors are
//! interpolated across triangles by the rasterizer.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::math::{cross_adjoint, normalize_adjoint, Vec2, Vec3};
use crate::render::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShadingMode {
    #[default]
    Flat,
    Phong,
    Textured,
}

/// RGB texture addressed by `uv ∈ [0,1]²`; `u` runs along columns and `v`
/// along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    pub width: usize,
    pub height: usize,
    pub texels: Vec<Vec3>,
}

impl Texture {
    pub fn from_image(img: &Image) -> Result<Texture> {
        if img.channels() != 3 {
            return Err(SimError::config("textures must be RGB"));
        }
        let texels = img.data().chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        Ok(Texture { width: img.width(), height: img.height(), texels })
    }

    /// `size × size` checkerboard with `cells` squares per side.
    pub fn checker(size: usize, cells: usize, a: Vec3, b: Vec3) -> Texture {
        let cell = (size / cells.max(1)).max(1);
        let texels = (0..size * size).map(|i| if ((i / size) / cell + (i % size) / cell) % 2 == 0 { a } else { b }).collect();
        Texture { width: size, height: size, texels }
    }

    fn corners(&self, uv: &Vec2) -> ([usize; 4], f64, f64) {
        let x = uv.x.clamp(0.0, 1.0) * (self.width - 1) as f64;
        let y = uv.y.clamp(0.0, 1.0) * (self.height - 1) as f64;
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let idx = |r: usize, c: usize| r * self.width + c;
        ([idx(y0, x0), idx(y0, x1), idx(y1, x0), idx(y1, x1)], x - x0 as f64, y - y0 as f64)
    }

    /// Bilinear sample at texel coordinates `x = u(W−1)`, `y = v(H−1)`.
    pub fn sample(&self, uv: &Vec2) -> Vec3 {
        let ([a, b, c, d], fx, fy) = self.corners(uv);
        let t = &self.texels;
        (t[a] * (1.0 - fx) + t[b] * fx) * (1.0 - fy) + (t[c] * (1.0 - fx) + t[d] * fx) * fy
    }

    /// Cotangents of `uv` and of the (up to four) texels involved.
    pub fn sample_adjoint(&self, uv: &Vec2, c_bar: &Vec3) -> (Vec2, [(usize, Vec3); 4]) {
        let ([a, b, c, d], fx, fy) = self.corners(uv);
        let t = &self.texels;
        let dfx = ((t[b] - t[a]) * (1.0 - fy) + (t[d] - t[c]) * fy).dot(c_bar);
        let dfy = ((t[c] * (1.0 - fx) + t[d] * fx) - (t[a] * (1.0 - fx) + t[b] * fx)).dot(c_bar);
        let inside = |u: f64| (0.0..=1.0).contains(&u);
        let uv_bar = Vec2::new(
            if inside(uv.x) { dfx * (self.width - 1) as f64 } else { 0.0 },
            if inside(uv.y) { dfy * (self.height - 1) as f64 } else { 0.0 },
        );
        let texels = [
            (a, c_bar * ((1.0 - fx) * (1.0 - fy))),
            (b, c_bar * (fx * (1.0 - fy))),
            (c, c_bar * ((1.0 - fx) * fy)),
            (d, c_bar * (fx * fy)),
        ];
        (uv_bar, texels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Material {
    pub mode: ShadingMode,
    /// Base color used by flat and Phong modes.
    pub color: Vec3,
    pub ambient: f64,
    pub diffuse: f64,
    pub specular: f64,
    pub shininess: f64,
    #[serde(skip)]
    pub texture: Option<Arc<Texture>>,
}

impl Default for Material {
    fn default() -> Self {
        Material {
            mode: ShadingMode::Flat,
            color: Vec3::new(0.8, 0.3, 0.2),
            ambient: 0.3,
            diffuse: 0.7,
            specular: 0.2,
            shininess: 16.0,
            texture: None,
        }
    }
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if self.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(SimError::config("material colors must lie in [0, 1]"));
        }
        if [self.ambient, self.diffuse, self.specular].iter().any(|c| !(*c >= 0.0)) || !(self.shininess >= 1.0) {
            return Err(SimError::config("Phong coefficients must be non-negative and shininess ≥ 1"));
        }
        if self.mode == ShadingMode::Textured && self.texture.is_none() {
            return Err(SimError::config("textured material without a texture"));
        }
        Ok(())
    }
}

/// Directional light; `direction` points from the surface toward the light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Light {
    pub direction: Vec3,
    pub color: Vec3,
}

impl Default for Light {
    fn default() -> Self {
        Light { direction: Vec3::new(0.3, 1.0, 0.6).normalize(), color: Vec3::new(1.0, 1.0, 1.0) }
    }
}

/// Cotangents of the scalar material coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MaterialGrad {
    pub ambient: f64,
    pub diffuse: f64,
    pub specular: f64,
    pub shininess: f64,
}

/// Color of one vertex. `base` is the material color (or texture sample).
pub fn shade_vertex(n: &Vec3, base: &Vec3, mat: &Material, light: &Light, view: &Vec3) -> Vec3 {
    match mat.mode {
        ShadingMode::Flat | ShadingMode::Textured => *base,
        ShadingMode::Phong => {
            let l = light.direction.normalize();
            let ndl = n.dot(&l);
            let diff = ndl.max(0.0);
            let rv = (n * (2.0 * ndl) - l).dot(view);
            let spec = if ndl > 0.0 && rv > 0.0 { rv.powf(mat.shininess) } else { 0.0 };
            let lit = base * (mat.diffuse * diff) + Vec3::repeat(mat.specular * spec);
            (base * mat.ambient + light.color.component_mul(&lit)).map(|c| c.clamp(0.0, 1.0))
        }
    }
}

/// Cotangents `(n̄, basē, coefficients)` of [`shade_vertex`].
pub fn shade_vertex_adjoint(
    n: &Vec3,
    base: &Vec3,
    mat: &Material,
    light: &Light,
    view: &Vec3,
    c_bar: &Vec3,
) -> (Vec3, Vec3, MaterialGrad) {
    match mat.mode {
        ShadingMode::Flat | ShadingMode::Textured => (Vec3::zeros(), *c_bar, MaterialGrad::default()),
        ShadingMode::Phong => {
            let l = light.direction.normalize();
            let ndl = n.dot(&l);
            let diff = ndl.max(0.0);
            let r = n * (2.0 * ndl) - l;
            let rv = r.dot(view);
            let spec_on = ndl > 0.0 && rv > 0.0;
            let spec = if spec_on { rv.powf(mat.shininess) } else { 0.0 };
            let lit = base * (mat.diffuse * diff) + Vec3::repeat(mat.specular * spec);
            let raw = base * mat.ambient + light.color.component_mul(&lit);
            let cb = Vec3::from_fn(|i, _| if (0.0..=1.0).contains(&raw[i]) { c_bar[i] } else { 0.0 });
            let lb = light.color.component_mul(&cb);
            let base_bar = cb * mat.ambient + lb * (mat.diffuse * diff);
            let mut g = MaterialGrad {
                ambient: cb.dot(base),
                diffuse: lb.dot(base) * diff,
                specular: lb.sum() * spec,
                shininess: 0.0,
            };
            let diff_bar = lb.dot(base) * mat.diffuse;
            let spec_bar = lb.sum() * mat.specular;
            let mut n_bar = Vec3::zeros();
            let mut ndl_bar = if ndl > 0.0 { diff_bar } else { 0.0 };
            if spec_on {
                g.shininess = spec_bar * spec * rv.ln();
                let rv_bar = spec_bar * mat.shininess * rv.powf(mat.shininess - 1.0);
                let r_bar = view * rv_bar;
                n_bar += r_bar * (2.0 * ndl);
                ndl_bar += 2.0 * r_bar.dot(n);
            }
            n_bar += l * ndl_bar;
            (n_bar, base_bar, g)
        }
    }
}

/// Area-weighted vertex normals: `normalize(Σ_f (p₁−p₀)×(p₂−p₀))`.
/// Returns the unnormalized sums alongside the unit normals (zero for
/// isolated vertices).
pub fn vertex_normals(positions: &[Vec3], triangles: &[[usize; 3]]) -> (Vec<Vec3>, Vec<Vec3>) {
    let mut sums = vec![Vec3::zeros(); positions.len()];
    for t in triangles {
        let c = (positions[t[1]] - positions[t[0]]).cross(&(positions[t[2]] - positions[t[0]]));
        for &i in t {
            sums[i] += c;
        }
    }
    let unit = sums.iter().map(|s| if s.norm() > 0.0 { s.normalize() } else { Vec3::zeros() }).collect();
    (sums, unit)
}

/// Accumulates position cotangents from unit-normal cotangents.
pub fn vertex_normals_adjoint(
    positions: &[Vec3],
    triangles: &[[usize; 3]],
    sums: &[Vec3],
    n_bar: &[Vec3],
    p_bar: &mut [Vec3],
) {
    let s_bar: Vec<Vec3> = sums
        .iter()
        .zip(n_bar)
        .map(|(s, nb)| if s.norm() > 0.0 { normalize_adjoint(s, nb) } else { Vec3::zeros() })
        .collect();
    for t in triangles {
        let c_bar = s_bar[t[0]] + s_bar[t[1]] + s_bar[t[2]];
        let (a_bar, b_bar) = cross_adjoint(&(positions[t[1]] - positions[t[0]]), &(positions[t[2]] - positions[t[0]]), &c_bar);
        p_bar[t[1]] += a_bar;
        p_bar[t[2]] += b_bar;
        p_bar[t[0]] -= a_bar + b_bar;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phong() -> Material {
        Material { mode: ShadingMode::Phong, color: Vec3::new(0.6, 0.4, 0.2), ..Material::default() }
    }

    #[test]
    fn grazing_light_is_black() {
        let mat = Material { ambient: 0.0, specular: 0.0, ..phong() };
        let light = Light { direction: Vec3::x(), color: Vec3::repeat(1.0) };
        let c = shade_vertex(&Vec3::y(), &mat.color, &mat, &light, &Vec3::z());
        assert_eq!(c, Vec3::zeros());
    }

    #[test]
    fn ambient_only() {
        let mat = Material { ambient: 0.5, diffuse: 0.0, specular: 0.0, ..phong() };
        let c = shade_vertex(&Vec3::y(), &mat.color, &mat, &Light::default(), &Vec3::z());
        assert!((c - mat.color * 0.5).norm() < 1e-15);
    }

    #[test]
    fn bilinear_midpoint_averages() {
        let t = Texture {
            width: 2,
            height: 2,
            texels: vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 1.0, 1.0)],
        };
        let c = t.sample(&Vec2::new(0.5, 0.5));
        assert!((c - Vec3::new(0.5, 0.5, 0.5)).norm() < 1e-15);
        assert_eq!(t.sample(&Vec2::new(0.0, 0.0)), t.texels[0]);
        assert_eq!(t.sample(&Vec2::new(1.0, 1.0)), t.texels[3]);
    }

    #[test]
    fn phong_adjoint_matches_fd() {
        let mat = Material { ambient: 0.1, diffuse: 0.5, specular: 0.3, shininess: 8.0, ..phong() };
        let light = Light { direction: Vec3::new(0.2, 1.0, 0.3).normalize(), color: Vec3::new(0.9, 0.8, 1.0) };
        let view = Vec3::new(0.1, 0.4, 1.0).normalize();
        let n = Vec3::new(0.1, 0.9, 0.35).normalize();
        let cb = Vec3::new(0.3, -0.7, 1.1);
        let (nb, bb, g) = shade_vertex_adjoint(&n, &mat.color, &mat, &light, &view, &cb);
        let h = 1e-6;
        let f = |n: Vec3, base: Vec3, m: &Material| shade_vertex(&n, &base, m, &light, &view).dot(&cb);
        for c in 0..3 {
            let mut a = n;
            let mut b = n;
            a[c] += h;
            b[c] -= h;
            assert!(((f(a, mat.color, &mat) - f(b, mat.color, &mat)) / (2.0 * h) - nb[c]).abs() < 1e-7);
            let mut a = mat.color;
            let mut b = mat.color;
            a[c] += h;
            b[c] -= h;
            assert!(((f(n, a, &mat) - f(n, b, &mat)) / (2.0 * h) - bb[c]).abs() < 1e-7);
        }
        let bump = |d: f64| Material { shininess: mat.shininess + d, ..mat.clone() };
        let fd = (f(n, mat.color, &bump(h)) - f(n, mat.color, &bump(-h))) / (2.0 * h);
        assert!((fd - g.shininess).abs() < 1e-7);
    }

    #[test]
    fn texture_adjoint_matches_fd() {
        let t = Texture {
            width: 3,
            height: 2,
            texels: (0..6).map(|i| Vec3::new(i as f64 * 0.1, 0.5 - i as f64 * 0.05, (i % 2) as f64)).collect(),
        };
        let uv = Vec2::new(0.3, 0.6);
        let cb = Vec3::new(1.0, -0.5, 0.25);
        let (uvb, _) = t.sample_adjoint(&uv, &cb);
        let h = 1e-7;
        for c in 0..2 {
            let mut a = uv;
            let mut b = uv;
            a[c] += h;
            b[c] -= h;
            let fd = (t.sample(&a) - t.sample(&b)).dot(&cb) / (2.0 * h);
            assert!((fd - uvb[c]).abs() < 1e-6);
        }
    }
}
