//! Planar simple and double pendula in generalized coordinates.
//!
//! Angles are measured from the downward vertical; `g` is the magnitude of
//! gravity. Both variants use the semi-implicit update
//! `θ̇⁺ = θ̇ + dt·θ̈(θ, θ̇)`, `θ⁺ = θ + dt·θ̇⁺`.

/// Accelerations of a single pendulum (`links == 1`, only index 0 is used)
/// or a double pendulum.
pub fn pendulum_accel(links: usize, th: &[f64; 2], om: &[f64; 2], len: &[f64; 2], mass: &[f64; 2], g: f64) -> [f64; 2] {
    if links == 1 {
        return [-(g / len[0]) * th[0].sin(), 0.0];
    }
    let (m1, m2, l1, l2) = (mass[0], mass[1], len[0], len[1]);
    let d = th[0] - th[1];
    let (sd, cd) = d.sin_cos();
    let den = 2.0 * m1 + m2 - m2 * (2.0 * d).cos();
    let p = om[1] * om[1] * l2 + om[0] * om[0] * l1 * cd;
    let n1 = -g * (2.0 * m1 + m2) * th[0].sin() - m2 * g * (th[0] - 2.0 * th[1]).sin() - 2.0 * sd * m2 * p;
    let mt = m1 + m2;
    let q = om[0] * om[0] * l1 * mt + g * mt * th[0].cos() + om[1] * om[1] * l2 * m2 * cd;
    let n2 = 2.0 * sd * q;
    [n1 / (l1 * den), n2 / (l2 * den)]
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AccelAdjoint {
    pub th: [f64; 2],
    pub om: [f64; 2],
    pub len: [f64; 2],
    pub mass: [f64; 2],
    pub g: f64,
}

pub fn pendulum_accel_adjoint(
    links: usize,
    th: &[f64; 2],
    om: &[f64; 2],
    len: &[f64; 2],
    mass: &[f64; 2],
    g: f64,
    a_bar: &[f64; 2],
) -> AccelAdjoint {
    let mut out = AccelAdjoint::default();
    if links == 1 {
        let (s, c) = th[0].sin_cos();
        out.th[0] = -a_bar[0] * (g / len[0]) * c;
        out.len[0] = a_bar[0] * g * s / (len[0] * len[0]);
        out.g = -a_bar[0] * s / len[0];
        return out;
    }
    let (m1, m2, l1, l2) = (mass[0], mass[1], len[0], len[1]);
    let (w1, w2) = (om[0], om[1]);
    let (s1, c1) = th[0].sin_cos();
    let d = th[0] - th[1];
    let (sd, cd) = d.sin_cos();
    let (s2d, c2d) = (2.0 * d).sin_cos();
    let (s12, c12) = (th[0] - 2.0 * th[1]).sin_cos();
    let den = 2.0 * m1 + m2 - m2 * c2d;
    let mt = m1 + m2;
    let p = w2 * w2 * l2 + w1 * w1 * l1 * cd;
    let q = w1 * w1 * l1 * mt + g * mt * c1 + w2 * w2 * l2 * m2 * cd;
    let n1 = -g * (2.0 * m1 + m2) * s1 - m2 * g * s12 - 2.0 * sd * m2 * p;
    let n2 = 2.0 * sd * q;
    let a1 = n1 / (l1 * den);
    let a2 = n2 / (l2 * den);

    let n1_bar = a_bar[0] / (l1 * den);
    let n2_bar = a_bar[1] / (l2 * den);
    let mut l1_bar = -a_bar[0] * a1 / l1;
    let mut l2_bar = -a_bar[1] * a2 / l2;
    let den_bar = -a_bar[0] * a1 / den - a_bar[1] * a2 / den;

    let mut g_bar = n1_bar * (-(2.0 * m1 + m2) * s1 - m2 * s12);
    let mut m1_bar = n1_bar * (-2.0 * g * s1);
    let mut m2_bar = n1_bar * (-g * s1 - g * s12 - 2.0 * sd * p);
    let s1_bar = n1_bar * (-g * (2.0 * m1 + m2));
    let s12_bar = n1_bar * (-m2 * g);
    let mut sd_bar = n1_bar * (-2.0 * m2 * p);
    let p_bar = n1_bar * (-2.0 * sd * m2);
    let mut w1_bar = p_bar * 2.0 * w1 * l1 * cd;
    let mut w2_bar = p_bar * 2.0 * w2 * l2;
    l2_bar += p_bar * w2 * w2;
    l1_bar += p_bar * w1 * w1 * cd;
    let mut cd_bar = p_bar * w1 * w1 * l1;

    sd_bar += n2_bar * 2.0 * q;
    let q_bar = n2_bar * 2.0 * sd;
    w1_bar += q_bar * 2.0 * w1 * l1 * mt;
    l1_bar += q_bar * w1 * w1 * mt;
    let mt_bar = q_bar * (w1 * w1 * l1 + g * c1);
    g_bar += q_bar * mt * c1;
    let c1_bar = q_bar * g * mt;
    w2_bar += q_bar * 2.0 * w2 * l2 * m2 * cd;
    l2_bar += q_bar * w2 * w2 * m2 * cd;
    m2_bar += q_bar * w2 * w2 * l2 * cd;
    cd_bar += q_bar * w2 * w2 * l2 * m2;
    m1_bar += mt_bar;
    m2_bar += mt_bar;

    m1_bar += 2.0 * den_bar;
    m2_bar += den_bar * (1.0 - c2d);
    let c2d_bar = -m2 * den_bar;

    let mut th1_bar = s1_bar * c1 - c1_bar * s1 + s12_bar * c12;
    let mut th2_bar = -2.0 * s12_bar * c12;
    let d_bar = sd_bar * cd - cd_bar * sd - 2.0 * c2d_bar * s2d;
    th1_bar += d_bar;
    th2_bar -= d_bar;

    out.th = [th1_bar, th2_bar];
    out.om = [w1_bar, w2_bar];
    out.len = [l1_bar, l2_bar];
    out.mass = [m1_bar, m2_bar];
    out.g = g_bar;
    out
}

/// One semi-implicit step; returns `(θ⁺, θ̇⁺)`.
pub fn pendulum_step(
    links: usize,
    th: &[f64; 2],
    om: &[f64; 2],
    len: &[f64; 2],
    mass: &[f64; 2],
    g: f64,
    dt: f64,
) -> ([f64; 2], [f64; 2]) {
    let a = pendulum_accel(links, th, om, len, mass, g);
    let om1 = [om[0] + dt * a[0], om[1] + dt * a[1]];
    let th1 = [th[0] + dt * om1[0], th[1] + dt * om1[1]];
    (th1, om1)
}

/// Adjoint of [`pendulum_step`] given the cotangents of `(θ⁺, θ̇⁺)`.
#[allow(clippy::too_many_arguments)]
pub fn pendulum_step_adjoint(
    links: usize,
    th: &[f64; 2],
    om: &[f64; 2],
    len: &[f64; 2],
    mass: &[f64; 2],
    g: f64,
    dt: f64,
    th1_bar: &[f64; 2],
    om1_bar: &[f64; 2],
) -> AccelAdjoint {
    let om1_tot = [om1_bar[0] + dt * th1_bar[0], om1_bar[1] + dt * th1_bar[1]];
    let a_bar = [dt * om1_tot[0], dt * om1_tot[1]];
    let mut adj = pendulum_accel_adjoint(links, th, om, len, mass, g, &a_bar);
    for k in 0..2 {
        adj.th[k] += th1_bar[k];
        adj.om[k] += om1_tot[k];
    }
    adj
}

/// Total mechanical energy, zero potential at the pivot height.
pub fn pendulum_energy(links: usize, th: &[f64; 2], om: &[f64; 2], len: &[f64; 2], mass: &[f64; 2], g: f64) -> f64 {
    if links == 1 {
        let (l, m) = (len[0], mass[0]);
        return 0.5 * m * l * l * om[0] * om[0] - m * g * l * th[0].cos();
    }
    let (m1, m2, l1, l2) = (mass[0], mass[1], len[0], len[1]);
    let kinetic = 0.5 * m1 * l1 * l1 * om[0] * om[0]
        + 0.5 * m2 * (l1 * l1 * om[0] * om[0] + l2 * l2 * om[1] * om[1] + 2.0 * l1 * l2 * om[0] * om[1] * (th[0] - th[1]).cos());
    let potential = -(m1 + m2) * g * l1 * th[0].cos() - m2 * g * l2 * th[1].cos();
    kinetic + potential
}

/// Bob positions relative to the pivot in the XY plane.
pub fn bob_offsets(links: usize, th: &[f64; 2], len: &[f64; 2]) -> [[f64; 2]; 2] {
    let b1 = [len[0] * th[0].sin(), -len[0] * th[0].cos()];
    if links == 1 {
        return [b1, b1];
    }
    [b1, [b1[0] + len[1] * th[1].sin(), b1[1] - len[1] * th[1].cos()]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hanging_pendulum_stays_put() {
        let (th, om) = pendulum_step(1, &[0.0, 0.0], &[0.0, 0.0], &[1.0, 1.0], &[1.0, 1.0], 9.8, 0.01);
        assert_eq!(th, [0.0, 0.0]);
        assert_eq!(om, [0.0, 0.0]);
        let (th, om) = pendulum_step(2, &[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.5], &[1.0, 2.0], 9.8, 0.01);
        assert_eq!(th, [0.0, 0.0]);
        assert_eq!(om, [0.0, 0.0]);
    }

    #[test]
    fn small_angle_period() {
        let dt = 1e-3;
        let (mut th, mut om) = ([0.05, 0.0], [0.0, 0.0]);
        let mut crossings = Vec::new();
        for k in 0..6000 {
            let prev = th[0];
            (th, om) = pendulum_step(1, &th, &om, &[1.0, 1.0], &[1.0, 1.0], 9.8, dt);
            if prev > 0.0 && th[0] <= 0.0 {
                crossings.push(k as f64 * dt);
            }
        }
        let period = crossings[1] - crossings[0];
        let expected = 2.0 * std::f64::consts::PI * (1.0f64 / 9.8).sqrt();
        assert!((period - expected).abs() / expected < 0.02, "{period} vs {expected}");
    }

    #[test]
    fn accel_adjoint_matches_fd() {
        let th = [0.7, -0.4];
        let om = [1.3, -0.8];
        let len = [1.1, 0.7];
        let mass = [1.5, 0.6];
        let g = 9.8;
        let ab = [0.3, -1.2];
        let adj = pendulum_accel_adjoint(2, &th, &om, &len, &mass, g, &ab);
        let f = |th: [f64; 2], om: [f64; 2], len: [f64; 2], mass: [f64; 2], g: f64| {
            let a = pendulum_accel(2, &th, &om, &len, &mass, g);
            a[0] * ab[0] + a[1] * ab[1]
        };
        let h = 1e-6;
        for k in 0..2 {
            let bump = |v: [f64; 2], s: f64| {
                let mut v = v;
                v[k] += s;
                v
            };
            let fd = (f(bump(th, h), om, len, mass, g) - f(bump(th, -h), om, len, mass, g)) / (2.0 * h);
            assert!((fd - adj.th[k]).abs() < 1e-6, "th{k}");
            let fd = (f(th, bump(om, h), len, mass, g) - f(th, bump(om, -h), len, mass, g)) / (2.0 * h);
            assert!((fd - adj.om[k]).abs() < 1e-6, "om{k}");
            let fd = (f(th, om, bump(len, h), mass, g) - f(th, om, bump(len, -h), mass, g)) / (2.0 * h);
            assert!((fd - adj.len[k]).abs() < 1e-6, "len{k}");
            let fd = (f(th, om, len, bump(mass, h), g) - f(th, om, len, bump(mass, -h), g)) / (2.0 * h);
            assert!((fd - adj.mass[k]).abs() < 1e-6, "mass{k}");
        }
        let fd = (f(th, om, len, mass, g + h) - f(th, om, len, mass, g - h)) / (2.0 * h);
        assert!((fd - adj.g).abs() < 1e-6);
    }

    #[test]
    fn double_pendulum_energy_bounded() {
        let (len, mass, g, dt) = ([1.0, 1.0], [1.0, 1.0], 9.8, 1e-3);
        let (mut th, mut om) = ([0.5, -0.3], [0.0, 0.0]);
        let e0 = pendulum_energy(2, &th, &om, &len, &mass, g);
        for _ in 0..5000 {
            (th, om) = pendulum_step(2, &th, &om, &len, &mass, g, dt);
            let e = pendulum_energy(2, &th, &om, &len, &mass, g);
            assert!((e - e0).abs() / e0.abs() <= 0.05);
        }
    }
}
