//! Small linear-algebra helpers and the reverse-mode adjoints of the
//! primitives the kernels are built from.
//!
//! Adjoint helpers follow one convention: given the cotangent of an output,
//! they return (or accumulate) the cotangents of the inputs. Nothing here
//! allocates.

use nalgebra::{Matrix3, Quaternion, Vector2, Vector3};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = Quaternion<f64>;

#[inline]
pub fn vec3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cotangents of `a` and `b` for `c = a × b`.
#[inline]
pub fn cross_adjoint(a: &Vec3, b: &Vec3, c_bar: &Vec3) -> (Vec3, Vec3) {
    (b.cross(c_bar), c_bar.cross(a))
}

/// Cotangent of `v` for `n = v / |v|`.
#[inline]
pub fn normalize_adjoint(v: &Vec3, n_bar: &Vec3) -> Vec3 {
    let len = v.norm();
    let n = v / len;
    (n_bar - n * n.dot(n_bar)) / len
}

/// Rotation matrix of a quaternion `(w, x, y, z)` using the polynomial form.
///
/// The quaternion is not renormalized, so the map stays polynomial and its
/// derivative is exact for any input; callers keep `q` unit length.
pub fn quat_to_mat(q: &Quat) -> Mat3 {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - z * w),
        2.0 * (x * z + y * w),
        2.0 * (x * y + z * w),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - x * w),
        2.0 * (x * z - y * w),
        2.0 * (y * z + x * w),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Cotangent of the quaternion for `R = quat_to_mat(q)`.
pub fn quat_to_mat_adjoint(q: &Quat, g: &Mat3) -> Quat {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    let dw = 2.0 * (-z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)]
        + x * g[(2, 1)]);
    let dx = 2.0
        * (y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - 2.0 * x * g[(1, 1)] - w * g[(1, 2)]
            + z * g[(2, 0)]
            + w * g[(2, 1)]
            - 2.0 * x * g[(2, 2)]);
    let dy = 2.0
        * (-2.0 * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)] + z * g[(1, 2)]
            - w * g[(2, 0)]
            + z * g[(2, 1)]
            - 2.0 * y * g[(2, 2)]);
    let dz = 2.0
        * (-2.0 * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)]
            - 2.0 * z * g[(1, 1)]
            + y * g[(1, 2)]
            + x * g[(2, 0)]
            + y * g[(2, 1)]);
    Quat::new(dw, dx, dy, dz)
}

/// `(0, ω) ⊗ q`, the quaternion rate of a world-frame angular velocity.
#[inline]
pub fn omega_mul(omega: &Vec3, q: &Quat) -> Quat {
    let v = q.vector();
    let v = Vec3::new(v[0], v[1], v[2]);
    let s = -omega.dot(&v);
    let p = omega * q.w + omega.cross(&v);
    Quat::new(s, p.x, p.y, p.z)
}

/// Cotangents `(ω̄, q̄)` for `p = (0, ω) ⊗ q`.
pub fn omega_mul_adjoint(omega: &Vec3, q: &Quat, p_bar: &Quat) -> (Vec3, Quat) {
    let v = Vec3::new(q.i, q.j, q.k);
    let pv_bar = Vec3::new(p_bar.i, p_bar.j, p_bar.k);
    let omega_bar = -v * p_bar.w + pv_bar * q.w + v.cross(&pv_bar);
    let w_bar = omega.dot(&pv_bar);
    let v_bar = -omega * p_bar.w + pv_bar.cross(omega);
    (omega_bar, Quat::new(w_bar, v_bar.x, v_bar.y, v_bar.z))
}

#[inline]
pub fn quat_dot(a: &Quat, b: &Quat) -> f64 {
    a.w * b.w + a.i * b.i + a.j * b.j + a.k * b.k
}

#[inline]
pub fn quat_scale(a: &Quat, s: f64) -> Quat {
    Quat::new(a.w * s, a.i * s, a.j * s, a.k * s)
}

#[inline]
pub fn quat_add(a: &Quat, b: &Quat) -> Quat {
    Quat::new(a.w + b.w, a.i + b.i, a.j + b.j, a.k + b.k)
}

#[inline]
pub fn quat_norm(a: &Quat) -> f64 {
    quat_dot(a, a).sqrt()
}

/// Cotangent of `q` for `n = q / |q|`.
pub fn quat_normalize_adjoint(q: &Quat, n_bar: &Quat) -> Quat {
    let len = quat_norm(q);
    let n = quat_scale(q, 1.0 / len);
    let proj = quat_dot(&n, n_bar);
    quat_scale(&quat_add(n_bar, &quat_scale(&n, -proj)), 1.0 / len)
}

pub fn quat_zero() -> Quat {
    Quat::new(0.0, 0.0, 0.0, 0.0)
}

pub fn quat_identity() -> Quat {
    Quat::new(1.0, 0.0, 0.0, 0.0)
}

/// Two unit tangents spanning the plane orthogonal to `n`, chosen
/// deterministically from `n` alone.
pub fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Frobenius inner product of two 3×3 matrices.
#[inline]
pub fn ddot(a: &Mat3, b: &Mat3) -> f64 {
    a.component_mul(b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn quat_to_mat_is_rotation_for_unit_quaternion() {
        let q = nalgebra::UnitQuaternion::from_euler_angles(0.3, -0.7, 1.1);
        let r = quat_to_mat(q.quaternion());
        let reference = q.to_rotation_matrix().into_inner();
        assert!((r - reference).norm() < 1e-12);
    }

    #[test]
    fn quat_to_mat_adjoint_matches_fd() {
        let q = Quat::new(0.4, -0.3, 0.8, 0.2);
        let g = Mat3::new(0.1, -0.5, 0.3, 0.9, 0.2, -0.4, 0.7, -0.8, 0.6);
        let adj = quat_to_mat_adjoint(&q, &g);
        let comps = [adj.w, adj.i, adj.j, adj.k];
        for (k, expected) in comps.iter().enumerate() {
            let num = fd(
                |t| {
                    let mut c = [q.w, q.i, q.j, q.k];
                    c[k] += t;
                    ddot(&quat_to_mat(&Quat::new(c[0], c[1], c[2], c[3])), &g)
                },
                0.0,
            );
            assert!((num - expected).abs() < 1e-8, "component {k}: {num} vs {expected}");
        }
    }

    #[test]
    fn omega_mul_adjoint_matches_fd() {
        let w = vec3(0.3, -1.2, 0.5);
        let q = Quat::new(0.9, 0.1, -0.2, 0.3);
        let pb = Quat::new(0.2, -0.7, 0.4, 1.1);
        let (wb, qb) = omega_mul_adjoint(&w, &q, &pb);
        for k in 0..3 {
            let num = fd(
                |t| {
                    let mut ww = w;
                    ww[k] += t;
                    quat_dot(&omega_mul(&ww, &q), &pb)
                },
                0.0,
            );
            assert!((num - wb[k]).abs() < 1e-8);
        }
        let qc = [qb.w, qb.i, qb.j, qb.k];
        for (k, expected) in qc.iter().enumerate() {
            let num = fd(
                |t| {
                    let mut c = [q.w, q.i, q.j, q.k];
                    c[k] += t;
                    quat_dot(&omega_mul(&w, &Quat::new(c[0], c[1], c[2], c[3])), &pb)
                },
                0.0,
            );
            assert!((num - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        for n in [Vec3::y(), Vec3::x(), vec3(1.0, 2.0, -3.0).normalize()] {
            let (t1, t2) = tangent_basis(&n);
            assert!(t1.dot(&n).abs() < 1e-14 && t2.dot(&n).abs() < 1e-14);
            assert!(t1.dot(&t2).abs() < 1e-14);
            assert!((t1.norm() - 1.0).abs() < 1e-14 && (t2.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sigmoid_is_symmetric_and_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-1000.0) >= 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }
}
