//! Soft rasterization of projected triangles.
//!
//! For pixel center `q` and triangle `j`:
//! * coverage `D_j = sigmoid(δ·d²/σ)`, `d` the distance from `q` to the
//!   nearest triangle edge in NDC, `δ = +1` inside and `−1` outside
//! * silhouette `S = 1 − Π_j (1 − D_j)`
//! * color `C_j`: screen-space barycentrics clamped to the triangle and
//!   renormalized, applied to the shaded vertex colors
//! * depth `z_j`: perspective-correct view depth, normalized to
//!   `z̄_j = (far − z_j)/(far − near)` so nearer is larger
//! * `rgb = S·Σ_j w_j C_j / Σ_j w_j + (1 − S)·background` with
//!   `w_j = D_j·exp((z̄_j − max_k z̄_k)/γ)`
//!
//! Triangles with a vertex behind the near plane are dropped. A triangle is
//! skipped at pixels outside it with `d²/σ > 100`, where its coverage is
//! below `e⁻¹⁰⁰`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::math::{sigmoid, Vec2, Vec3};
use crate::render::camera::ScreenVertex;
use crate::render::image::Image;

const CULL: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RasterSettings {
    /// Edge softness, in squared NDC units.
    pub sigma: f64,
    /// Depth aggregation temperature.
    pub gamma: f64,
    pub background: Vec3,
}

impl Default for RasterSettings {
    fn default() -> Self {
        RasterSettings { sigma: 1e-4, gamma: 1e-4, background: Vec3::zeros() }
    }
}

impl RasterSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.gamma > 0.0) {
            return Err(SimError::config("raster sigma and gamma must be positive"));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(SimError::config("background color must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Everything the rasterizer reads; also serves as the forward cache of
/// [`soft_rasterize_adjoint`].
#[derive(Debug, Clone)]
pub struct RasterInput {
    pub screen: Vec<ScreenVertex>,
    pub triangles: Vec<[usize; 3]>,
    pub colors: Vec<Vec3>,
    pub near: f64,
    pub far: f64,
    pub width: usize,
    pub height: usize,
}

/// Cotangents of the per-vertex rasterizer inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrads {
    pub ndc: Vec<Vec2>,
    pub depth: Vec<f64>,
    pub colors: Vec<Vec3>,
}

struct Tri {
    v: [usize; 3],
    p: [Vec2; 3],
    z: [f64; 3],
    area: f64,
    bbox: [f64; 4],
}

struct Prepared {
    tris: Vec<Tri>,
    rows: Vec<Vec<usize>>,
}

fn prepare(inp: &RasterInput, sigma: f64) -> Prepared {
    let margin = (CULL * sigma).sqrt();
    let mut tris = Vec::new();
    for t in &inp.triangles {
        let s = t.map(|i| inp.screen[i]);
        if s.iter().any(|v| !v.visible) {
            continue;
        }
        let p = s.map(|v| v.ndc);
        let area = edge_fn(&p[0], &p[1], &p[2]);
        if area.abs() < 1e-300 || !area.is_finite() {
            continue;
        }
        let xmin = p.iter().map(|v| v.x).fold(f64::INFINITY, f64::min) - margin;
        let xmax = p.iter().map(|v| v.x).fold(f64::NEG_INFINITY, f64::max) + margin;
        let ymin = p.iter().map(|v| v.y).fold(f64::INFINITY, f64::min) - margin;
        let ymax = p.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max) + margin;
        tris.push(Tri { v: *t, p, z: s.map(|v| v.depth), area, bbox: [xmin, xmax, ymin, ymax] });
    }
    let h = inp.height as f64;
    let mut rows = vec![Vec::new(); inp.height];
    for (k, t) in tris.iter().enumerate() {
        // y = 1 − 2(i+½)/H  ⇒  i = (1 − y)H/2 − ½
        let lo = ((1.0 - t.bbox[3]) * h / 2.0 - 0.5).ceil().max(0.0);
        let hi = ((1.0 - t.bbox[2]) * h / 2.0 - 0.5).floor().min(h - 1.0);
        if hi < lo {
            continue;
        }
        for row in rows.iter_mut().take(hi as usize + 1).skip(lo as usize) {
            row.push(k);
        }
    }
    Prepared { tris, rows }
}

/// `(b − a) × (q − a)`.
#[inline]
fn edge_fn(a: &Vec2, b: &Vec2, q: &Vec2) -> f64 {
    (b.x - a.x) * (q.y - a.y) - (b.y - a.y) * (q.x - a.x)
}

/// Gradients of [`edge_fn`] with respect to `a`, `b` and `q`.
#[inline]
fn edge_fn_grad(a: &Vec2, b: &Vec2, q: &Vec2) -> (Vec2, Vec2, Vec2) {
    (
        Vec2::new(b.y - q.y, q.x - b.x),
        Vec2::new(q.y - a.y, a.x - q.x),
        Vec2::new(a.y - b.y, b.x - a.x),
    )
}

/// Per-pixel, per-triangle intermediates.
struct Contrib {
    tri: usize,
    cov: f64,
    sign: f64,
    edge: usize,
    seg_t: f64,
    seg_e: Vec2,
    b: [f64; 3],
    bhat: [f64; 3],
    inv_sum: f64,
    zp: f64,
    zn: f64,
    color: Vec3,
}

fn contributions(q: &Vec2, cand: &[usize], prep: &Prepared, inp: &RasterInput, sigma: f64) -> Vec<Contrib> {
    let mut out = Vec::new();
    for &k in cand {
        let t = &prep.tris[k];
        if q.x < t.bbox[0] || q.x > t.bbox[1] {
            continue;
        }
        let b = [
            edge_fn(&t.p[1], &t.p[2], q) / t.area,
            edge_fn(&t.p[2], &t.p[0], q) / t.area,
            edge_fn(&t.p[0], &t.p[1], q) / t.area,
        ];
        let inside = b.iter().all(|&x| x >= 0.0);
        let mut best = (f64::INFINITY, 0, 0.0, Vec2::zeros());
        for e in 0..3 {
            let a = t.p[e];
            let ab = t.p[(e + 1) % 3] - a;
            let s = ((q - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let diff = q - (a + ab * s);
            let d2 = diff.norm_squared();
            if d2 < best.0 {
                best = (d2, e, s, diff);
            }
        }
        let sign = if inside { 1.0 } else { -1.0 };
        let x = sign * best.0 / sigma;
        if x < -CULL {
            continue;
        }
        let cb = b.map(|x| x.clamp(0.0, 1.0));
        let inv_sum = 1.0 / (cb[0] + cb[1] + cb[2]);
        let bhat = cb.map(|x| x * inv_sum);
        let s = bhat[0] / t.z[0] + bhat[1] / t.z[1] + bhat[2] / t.z[2];
        let zp = 1.0 / s;
        let zn = (inp.far - zp) / (inp.far - inp.near);
        let color = inp.colors[t.v[0]] * bhat[0] + inp.colors[t.v[1]] * bhat[1] + inp.colors[t.v[2]] * bhat[2];
        out.push(Contrib {
            tri: k,
            cov: sigmoid(x),
            sign,
            edge: best.1,
            seg_t: best.2,
            seg_e: best.3,
            b,
            bhat,
            inv_sum,
            zp,
            zn,
            color,
        });
    }
    out
}

struct Aggregate {
    sil: f64,
    weights: Vec<f64>,
    wsum: f64,
    cagg: Vec3,
}

fn aggregate(cs: &[Contrib], gamma: f64) -> Aggregate {
    let zmax = cs.iter().map(|c| c.zn).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = cs.iter().map(|c| c.cov * ((c.zn - zmax) / gamma).exp()).collect();
    let wsum: f64 = weights.iter().sum();
    let mut cagg = Vec3::zeros();
    for (c, w) in cs.iter().zip(&weights) {
        cagg += c.color * *w;
    }
    if wsum > 0.0 {
        cagg /= wsum;
    }
    let sil = 1.0 - cs.iter().map(|c| 1.0 - c.cov).product::<f64>();
    Aggregate { sil, weights, wsum, cagg }
}

/// Renders `(rgb, silhouette)`.
pub fn soft_rasterize(inp: &RasterInput, settings: &RasterSettings) -> (Image, Image) {
    let prep = prepare(inp, settings.sigma);
    let (w, h) = (inp.width, inp.height);
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..h)
        .into_par_iter()
        .map(|i| {
            let mut rgb = Vec::with_capacity(w * 3);
            let mut sil = Vec::with_capacity(w);
            for j in 0..w {
                let q = pixel_center(i, j, w, h);
                let cs = contributions(&q, &prep.rows[i], &prep, inp, settings.sigma);
                let agg = aggregate(&cs, settings.gamma);
                let c = agg.cagg * agg.sil + settings.background * (1.0 - agg.sil);
                rgb.extend_from_slice(c.as_slice());
                sil.push(agg.sil);
            }
            (rgb, sil)
        })
        .collect();
    let mut rgb = Vec::with_capacity(w * h * 3);
    let mut sil = Vec::with_capacity(w * h);
    for (r, s) in rows {
        rgb.extend(r);
        sil.extend(s);
    }
    (Image::from_data(w, h, 3, rgb).unwrap(), Image::from_data(w, h, 1, sil).unwrap())
}

#[inline]
fn pixel_center(i: usize, j: usize, w: usize, h: usize) -> Vec2 {
    Vec2::new(2.0 * (j as f64 + 0.5) / w as f64 - 1.0, 1.0 - 2.0 * (i as f64 + 0.5) / h as f64)
}

/// Exact gradients of [`soft_rasterize`] with respect to the projected
/// vertices and vertex colors. `max_k z̄_k` is a stabilizing shift that
/// cancels in the normalized weights, so it carries no gradient.
pub fn soft_rasterize_adjoint(
    inp: &RasterInput,
    settings: &RasterSettings,
    rgb_bar: &Image,
    sil_bar: &Image,
) -> Result<RasterGrads> {
    let (w, h) = (inp.width, inp.height);
    if rgb_bar.width() != w || rgb_bar.height() != h || rgb_bar.channels() != 3 {
        return Err(SimError::ShapeMismatch("rgb cotangent does not match the image".into()));
    }
    if sil_bar.width() != w || sil_bar.height() != h || sil_bar.channels() != 1 {
        return Err(SimError::ShapeMismatch("silhouette cotangent does not match the image".into()));
    }
    let prep = prepare(inp, settings.sigma);
    let nv = inp.screen.len();
    let (sigma, gamma) = (settings.sigma, settings.gamma);
    let dz = inp.far - inp.near;

    let row_grads: Vec<Option<(Vec<Vec2>, Vec<f64>, Vec<Vec3>)>> = (0..h)
        .into_par_iter()
        .map(|i| {
            if prep.rows[i].is_empty() {
                return None;
            }
            let mut g_ndc = vec![Vec2::zeros(); nv];
            let mut g_z = vec![0.0; nv];
            let mut g_col = vec![Vec3::zeros(); nv];
            let mut touched = false;
            for j in 0..w {
                let rb = Vec3::new(rgb_bar.get(i, j, 0), rgb_bar.get(i, j, 1), rgb_bar.get(i, j, 2));
                let sb = sil_bar.get(i, j, 0);
                if rb == Vec3::zeros() && sb == 0.0 {
                    continue;
                }
                let q = pixel_center(i, j, w, h);
                let cs = contributions(&q, &prep.rows[i], &prep, inp, sigma);
                if cs.is_empty() {
                    continue;
                }
                touched = true;
                let agg = aggregate(&cs, gamma);
                let s_bar = sb + rb.dot(&(agg.cagg - settings.background));
                let cagg_bar = rb * agg.sil;

                // ∂S/∂D_j = Π_{k≠j} (1 − D_k) via prefix/suffix products.
                let n = cs.len();
                let mut prefix = vec![1.0; n + 1];
                for k in 0..n {
                    prefix[k + 1] = prefix[k] * (1.0 - cs[k].cov);
                }
                let mut suffix = 1.0;
                let mut others = vec![0.0; n];
                for k in (0..n).rev() {
                    others[k] = prefix[k] * suffix;
                    suffix *= 1.0 - cs[k].cov;
                }

                for (k, c) in cs.iter().enumerate() {
                    let t = &prep.tris[c.tri];
                    let wk = agg.weights[k];
                    let (w_bar, col_bar) = if agg.wsum > 0.0 {
                        (cagg_bar.dot(&(c.color - agg.cagg)) / agg.wsum, cagg_bar * (wk / agg.wsum))
                    } else {
                        (0.0, Vec3::zeros())
                    };
                    let e = if c.cov > 0.0 { wk / c.cov } else { 0.0 };
                    let cov_bar = s_bar * others[k] + w_bar * e;
                    let zn_bar = w_bar * wk / gamma;

                    // Coverage through the squared edge distance.
                    let x_bar = cov_bar * c.cov * (1.0 - c.cov);
                    let d2_bar = x_bar * c.sign / sigma;
                    let ea = t.v[c.edge];
                    let eb = t.v[(c.edge + 1) % 3];
                    g_ndc[ea] += c.seg_e * (-2.0 * d2_bar * (1.0 - c.seg_t));
                    g_ndc[eb] += c.seg_e * (-2.0 * d2_bar * c.seg_t);

                    // Color and depth through the clamped barycentrics.
                    let mut bhat_bar = [0.0; 3];
                    for m in 0..3 {
                        g_col[t.v[m]] += col_bar * c.bhat[m];
                        bhat_bar[m] += col_bar.dot(&inp.colors[t.v[m]]);
                    }
                    let zp_bar = -zn_bar / dz;
                    let s = 1.0 / c.zp;
                    let s_sum_bar = -zp_bar / (s * s);
                    for m in 0..3 {
                        bhat_bar[m] += s_sum_bar / t.z[m];
                        g_z[t.v[m]] -= s_sum_bar * c.bhat[m] / (t.z[m] * t.z[m]);
                    }
                    let proj: f64 = (0..3).map(|m| bhat_bar[m] * c.bhat[m]).sum();
                    let mut b_bar = [0.0; 3];
                    for m in 0..3 {
                        if c.b[m] > 0.0 && c.b[m] < 1.0 {
                            b_bar[m] = (bhat_bar[m] - proj) * c.inv_sum;
                        }
                    }
                    if b_bar.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    // b_m = E_m / A
                    let mut a_bar = 0.0;
                    for m in 0..3 {
                        let e_bar = b_bar[m] / t.area;
                        a_bar -= b_bar[m] * c.b[m] / t.area;
                        let (ia, ib) = ((m + 1) % 3, (m + 2) % 3);
                        let (ga, gb, _) = edge_fn_grad(&t.p[ia], &t.p[ib], &q);
                        g_ndc[t.v[ia]] += ga * e_bar;
                        g_ndc[t.v[ib]] += gb * e_bar;
                    }
                    let (g0, g1, g2) = edge_fn_grad(&t.p[0], &t.p[1], &t.p[2]);
                    g_ndc[t.v[0]] += g0 * a_bar;
                    g_ndc[t.v[1]] += g1 * a_bar;
                    g_ndc[t.v[2]] += g2 * a_bar;
                }
            }
            touched.then_some((g_ndc, g_z, g_col))
        })
        .collect();

    let mut out = RasterGrads { ndc: vec![Vec2::zeros(); nv], depth: vec![0.0; nv], colors: vec![Vec3::zeros(); nv] };
    for (g_ndc, g_z, g_col) in row_grads.into_iter().flatten() {
        for v in 0..nv {
            out.ndc[v] += g_ndc[v];
            out.depth[v] += g_z[v];
            out.colors[v] += g_col[v];
        }
    }
    Ok(out)
}

/// Point-in-triangle coverage with a z-buffer: `(rgb, silhouette)` with
/// binary silhouettes and the nearest triangle's interpolated color.
pub fn hard_rasterize(inp: &RasterInput, background: &Vec3) -> (Image, Image) {
    let (w, h) = (inp.width, inp.height);
    let mut rgb = Image::new(w, h, 3);
    let mut sil = Image::new(w, h, 1);
    for i in 0..h {
        for j in 0..w {
            let q = pixel_center(i, j, w, h);
            let mut best: Option<(f64, Vec3)> = None;
            for t in &inp.triangles {
                let s = t.map(|k| inp.screen[k]);
                if s.iter().any(|v| !v.visible) {
                    continue;
                }
                let p = s.map(|v| v.ndc);
                let area = edge_fn(&p[0], &p[1], &p[2]);
                if area == 0.0 {
                    continue;
                }
                let b = [edge_fn(&p[1], &p[2], &q) / area, edge_fn(&p[2], &p[0], &q) / area, edge_fn(&p[0], &p[1], &q) / area];
                if b.iter().any(|&x| x < 0.0) {
                    continue;
                }
                let z = 1.0 / (b[0] / s[0].depth + b[1] / s[1].depth + b[2] / s[2].depth);
                if best.is_none_or(|(bz, _)| z < bz) {
                    let c = inp.colors[t[0]] * b[0] + inp.colors[t[1]] * b[1] + inp.colors[t[2]] * b[2];
                    best = Some((z, c));
                }
            }
            let c = match best {
                Some((_, c)) => {
                    sil.set(i, j, 0, 1.0);
                    c
                }
                None => *background,
            };
            for ch in 0..3 {
                rgb.set(i, j, ch, c[ch]);
            }
        }
    }
    (rgb, sil)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(x: f64, y: f64, z: f64) -> ScreenVertex {
        ScreenVertex { ndc: Vec2::new(x, y), depth: z, visible: true }
    }

    fn input(screen: Vec<ScreenVertex>, triangles: Vec<[usize; 3]>, size: usize) -> RasterInput {
        let n = screen.len();
        RasterInput {
            screen,
            triangles,
            colors: (0..n).map(|i| Vec3::new(0.2 + 0.1 * i as f64, 0.5, 0.9 - 0.1 * i as f64)).collect(),
            near: 0.1,
            far: 10.0,
            width: size,
            height: size,
        }
    }

    #[test]
    fn empty_scene_is_background() {
        let inp = input(vec![], vec![], 4);
        let s = RasterSettings { background: Vec3::new(0.1, 0.2, 0.3), ..Default::default() };
        let (rgb, sil) = soft_rasterize(&inp, &s);
        assert!(sil.is_zero());
        assert_eq!(rgb.get(2, 1, 2), 0.3);
    }

    #[test]
    fn pixel_on_edge_is_half_covered() {
        // Pixel (0,0) of a 2×2 image is centered at (−0.5, 0.5).
        let inp = input(vec![sv(-0.5, -0.9, 2.0), sv(-0.5, 0.9, 2.0), sv(0.9, 0.0, 2.0)], vec![[0, 1, 2]], 2);
        let (_, sil) = soft_rasterize(&inp, &RasterSettings::default());
        assert!((sil.get(0, 0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn large_triangle_covers_center() {
        let inp = input(vec![sv(-3.0, -3.0, 2.0), sv(3.0, -3.0, 2.0), sv(0.0, 3.0, 2.0)], vec![[0, 1, 2]], 8);
        let s = RasterSettings { sigma: 1e-5, ..Default::default() };
        let (_, sil) = soft_rasterize(&inp, &s);
        assert!(sil.get(4, 4, 0) >= 0.999);
    }

    #[test]
    fn colors_are_convex_combinations() {
        let inp = input(
            vec![sv(-0.8, -0.8, 2.0), sv(0.8, -0.6, 3.0), sv(0.0, 0.8, 2.5), sv(-0.3, 0.5, 1.5)],
            vec![[0, 1, 2], [0, 2, 3]],
            12,
        );
        let s = RasterSettings { sigma: 1e-2, gamma: 0.1, background: Vec3::new(1.0, 1.0, 1.0) };
        let (rgb, sil) = soft_rasterize(&inp, &s);
        for v in rgb.data() {
            assert!((0.0..=1.0 + 1e-12).contains(v));
        }
        for v in sil.data() {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn adjoint_matches_fd_on_quad() {
        let base = vec![sv(-0.6, -0.5, 2.0), sv(0.5, -0.6, 2.4), sv(0.55, 0.5, 3.0), sv(-0.5, 0.45, 2.2)];
        let tris = vec![[0, 1, 2], [0, 2, 3]];
        let s = RasterSettings { sigma: 1e-2, gamma: 0.05, background: Vec3::new(0.1, 0.2, 0.3) };
        let inp = input(base.clone(), tris.clone(), 10);
        let mut rb = Image::new(10, 10, 3);
        let mut sb = Image::new(10, 10, 1);
        for (k, v) in rb.data_mut().iter_mut().enumerate() {
            *v = ((k * 37 % 11) as f64 - 5.0) / 5.0;
        }
        for (k, v) in sb.data_mut().iter_mut().enumerate() {
            *v = ((k * 13 % 7) as f64 - 3.0) / 3.0;
        }
        let g = soft_rasterize_adjoint(&inp, &s, &rb, &sb).unwrap();
        let loss = |inp: &RasterInput| {
            let (rgb, sil) = soft_rasterize(inp, &s);
            rgb.data().iter().zip(rb.data()).map(|(a, b)| a * b).sum::<f64>()
                + sil.data().iter().zip(sb.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let h = 1e-7;
        for v in 0..4 {
            for c in 0..2 {
                let mut a = inp.clone();
                let mut b = inp.clone();
                a.screen[v].ndc[c] += h;
                b.screen[v].ndc[c] -= h;
                let fd = (loss(&a) - loss(&b)) / (2.0 * h);
                assert!((fd - g.ndc[v][c]).abs() <= 1e-4 * fd.abs().max(1e-2), "v{v} c{c}: {fd} vs {}", g.ndc[v][c]);
            }
            let mut a = inp.clone();
            let mut b = inp.clone();
            a.screen[v].depth += h;
            b.screen[v].depth -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            assert!((fd - g.depth[v]).abs() <= 1e-4 * fd.abs().max(1e-2), "depth v{v}: {fd} vs {}", g.depth[v]);
            let mut a = inp.clone();
            let mut b = inp.clone();
            a.colors[v].x += h;
            b.colors[v].x -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            assert!((fd - g.colors[v].x).abs() <= 1e-4 * fd.abs().max(1e-2));
        }
    }
}
