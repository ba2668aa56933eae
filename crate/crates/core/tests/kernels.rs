use gradsim::control::{controller_forward, Actuation, SinusoidController};
use gradsim::dynamics::contact::{contact_force_parts, ContactParams, ContactPlane};
use gradsim::dynamics::fem::tet_forces;
use gradsim::dynamics::rigid::{rigid_step, RigidState, UnitInertia};
use gradsim::dynamics::shell::{bending_forces, triangle_forces};
use gradsim::math::{quat_norm, Mat3, Quat, Vec2, Vec3};
use gradsim::mesh::{TetMesh, TriShellMesh};
use gradsim::render::raster::{soft_rasterize, RasterInput, RasterSettings};
use gradsim::render::ScreenVertex;
use nalgebra::{Rotation3, Unit};
use proptest::prelude::*;

fn v3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn rotation() -> impl Strategy<Value = Mat3> {
    (v3(1.0), 0.1..3.0f64).prop_filter_map("degenerate axis", |(axis, angle)| {
        (axis.norm() > 0.1).then(|| Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner())
    })
}

fn rel_diff<const N: usize>(a: &[Vec3; N], b: &[Vec3; N]) -> f64 {
    let scale = a.iter().map(|v| v.norm()).fold(1e-12, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

fn positive_tet() -> impl Strategy<Value = [Vec3; 4]> {
    [v3(1.0), v3(1.0), v3(1.0), v3(1.0)].prop_filter("sliver", |t| (t[1] - t[0]).dot(&(t[2] - t[0]).cross(&(t[3] - t[0]))) > 0.3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tet_forces_are_translation_invariant_and_rotation_equivariant(
        rest in positive_tet(),
        noise in [v3(0.2), v3(0.2), v3(0.2), v3(0.2)],
        shift in v3(5.0),
        rot in rotation(),
        mu in 10.0..5000.0f64,
        lambda in 10.0..5000.0f64,
        act in -0.3..0.3f64,
    ) {
        let mesh = TetMesh::new(&rest, &[[0, 1, 2, 3]]).unwrap();
        let (ri, vol) = (mesh.rest_inv[0], mesh.rest_volume[0]);
        let x: [Vec3; 4] = std::array::from_fn(|i| rest[i] + noise[i]);
        let f = tet_forces(&x, &ri, vol, mu, lambda, act);

        let moved = x.map(|p| p + shift);
        prop_assert!(rel_diff(&f, &tet_forces(&moved, &ri, vol, mu, lambda, act)) <= 1e-8);

        let turned = x.map(|p| rot * p);
        let expect = f.map(|v| rot * v);
        prop_assert!(rel_diff(&expect, &tet_forces(&turned, &ri, vol, mu, lambda, act)) <= 1e-8);
    }

    #[test]
    fn membrane_and_bending_forces_commute_with_rigid_motions(
        w in (0.5..1.0f64, 0.0..0.4f64, 0.5..1.0f64),
        noise in [v3(0.1), v3(0.1), v3(0.1), v3(0.1)],
        shift in v3(5.0),
        rot in rotation(),
        rest_angle in -0.5..0.5f64,
        act in -0.3..0.3f64,
    ) {
        let rest = [Vec3::zeros(), Vec3::new(w.0, 0.0, 0.0), Vec3::new(w.1, w.2, 0.0)];
        let mesh = TriShellMesh::new(&rest, &[[0, 1, 2]]).unwrap();
        let (ri, area) = (mesh.rest_inv[0], mesh.rest_area[0]);
        let tri: [Vec3; 3] = std::array::from_fn(|i| rest[i] + noise[i]);
        let f = triangle_forces(&tri, &ri, area, 300.0, 200.0);
        prop_assert!(rel_diff(&f, &triangle_forces(&tri.map(|p| p + shift), &ri, area, 300.0, 200.0)) <= 1e-8);
        prop_assert!(rel_diff(&f.map(|v| rot * v), &triangle_forces(&tri.map(|p| rot * p), &ri, area, 300.0, 200.0)) <= 1e-8);

        // Two wings around the edge from (0,0,0) to (1,0,0).
        let hinge = [
            Vec3::new(0.5, 0.8, 0.0) + noise[0],
            Vec3::new(0.5, -0.8, 0.0) + noise[1],
            Vec3::zeros() + noise[2],
            Vec3::new(1.0, 0.0, 0.0) + noise[3],
        ];
        let b = bending_forces(&hinge, rest_angle, 2.0, act);
        prop_assert!(rel_diff(&b, &bending_forces(&hinge.map(|p| p + shift), rest_angle, 2.0, act)) <= 1e-8);
        prop_assert!(rel_diff(&b.map(|v| rot * v), &bending_forces(&hinge.map(|p| rot * p), rest_angle, 2.0, act)) <= 1e-8);
    }

    #[test]
    fn contact_force_respects_gap_and_coulomb_cap(
        normal in v3(1.0).prop_filter("zero normal", |n| n.norm() > 0.1),
        offset in -1.0..1.0f64,
        p in v3(2.0),
        u in v3(5.0),
        ke in 0.0..1e4f64,
        kd in 0.0..50.0f64,
        kf in 0.0..1e3f64,
        mu in 0.0..1.5f64,
    ) {
        let plane = ContactPlane::new(normal, offset, 0.0).unwrap();
        let k = ContactParams { ke, kd, kf, mu };
        let (total, fn_mag, ff) = contact_force_parts(&p, &u, &plane, &k);
        if plane.signed_distance(&p) >= 0.0 {
            prop_assert_eq!(total, Vec3::zeros());
        } else {
            let n = plane.normal();
            let normal_part = total - ff;
            prop_assert!((normal_part - n * fn_mag).norm() <= 1e-12 * (1.0 + fn_mag.abs()));
            prop_assert!(ff.dot(&n).abs() <= 1e-9 * (1.0 + ff.norm()));
        }
        prop_assert!(ff.norm() <= mu * fn_mag.abs() + 1e-12);
    }

    #[test]
    fn rigid_step_keeps_unit_quaternion(
        q in (v3(1.0), -1.0..1.0f64).prop_filter("zero quaternion", |(v, w)| v.norm_squared() + w * w > 0.01),
        w in v3(20.0),
        force in v3(50.0),
        torque in v3(50.0),
        dims in (0.1..2.0f64, 0.1..2.0f64, 0.1..2.0f64),
        dt in 1e-4..1e-2f64,
    ) {
        let r = Quat::new(q.1, q.0.x, q.0.y, q.0.z);
        let mut s = RigidState { x: Vec3::zeros(), r: r / quat_norm(&r), v: Vec3::zeros(), w };
        let inertia = UnitInertia::solid_box(Vec3::new(dims.0, dims.1, dims.2));
        for _ in 0..20 {
            s = rigid_step(&s, &force, &torque, 2.0, &inertia, &Vec3::new(0.0, -9.81, 0.0), dt);
            prop_assert!((quat_norm(&s.r) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn controller_output_stays_inside_scale(
        weights in prop::collection::vec(-50.0..50.0f64, 3 * 8),
        scale in 0.01..1.0f64,
    ) {
        let mut c = SinusoidController::new(3, 8, Actuation::Volume);
        c.weights = weights;
        c.scale = scale;
        for k in 0..2000 {
            let out = controller_forward(k as f64 * 1e-3, &c);
            prop_assert!(out.iter().all(|a| a.abs() <= scale));
        }
    }

    #[test]
    fn silhouette_is_bounded_and_sharpens_with_smaller_sigma(
        pts in [(-0.9..0.9f64, -0.9..0.9f64), (-0.9..0.9f64, -0.9..0.9f64), (-0.9..0.9f64, -0.9..0.9f64)],
        depth in 1.0..5.0f64,
    ) {
        let p = pts.map(|(x, y)| Vec2::new(x, y));
        let area = (p[1] - p[0]).perp(&(p[2] - p[0]));
        prop_assume!(area.abs() > 0.1);
        let size = 16;
        let input = RasterInput {
            screen: p.iter().map(|&ndc| ScreenVertex { ndc, depth, visible: true }).collect(),
            triangles: vec![[0, 1, 2]],
            colors: vec![Vec3::new(0.9, 0.5, 0.1); 3],
            near: 0.1,
            far: 10.0,
            width: size,
            height: size,
        };
        let render = |sigma: f64| soft_rasterize(&input, &RasterSettings { sigma, gamma: 1e-4, background: Vec3::new(0.2, 0.3, 0.4) });
        let (rgb, soft) = render(1e-2);
        let (_, sharp) = render(1e-4);
        for (&a, &b) in soft.data().iter().zip(sharp.data()) {
            prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
            // Coverage below one half means the pixel center lies outside.
            if a < 0.5 { prop_assert!(b <= a) } else { prop_assert!(b >= a) }
        }
        prop_assert!(rgb.data().iter().all(|c| (0.0..=1.0).contains(c)));
    }
}
