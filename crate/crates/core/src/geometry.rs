//! Small SO(3) helpers shared by the kinematics, solver and reward code.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

/// Rotation log map as a rotation vector (axis * angle, angle in [0, pi]).
pub fn log(rotation: &UnitQuaternion<f64>) -> Vector3<f64> {
    // Pick the hemisphere with w >= 0 so the angle stays in [0, pi].
    let q = rotation.quaternion();
    let q = if q.w < 0.0 { -*q } else { *q };
    let v = q.imag();
    let s = v.norm();
    if s < 1e-12 {
        return 2.0 * v;
    }
    let angle = 2.0 * s.atan2(q.w);
    v * (angle / s)
}

pub fn exp(v: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*v)
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of the right Jacobian of SO(3): `log(exp(e) exp(u)) ~ e + Jr^-1(e) u`.
pub fn right_jacobian_inv(e: &Vector3<f64>) -> Matrix3<f64> {
    let theta = e.norm();
    let k = skew(e);
    let coeff = if theta < 1e-5 {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Matrix3::identity() + 0.5 * k + coeff * k * k
}

/// Inverse of the left Jacobian: `log(exp(u) exp(e)) ~ e + Jl^-1(e) u`.
pub fn left_jacobian_inv(e: &Vector3<f64>) -> Matrix3<f64> {
    right_jacobian_inv(&-e)
}

/// Geodesic angle between two orientations.
pub fn angle_between(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    log(&(a.inverse() * b)).norm()
}

pub fn from_rpy(rpy: [f64; 3]) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2])
}

pub fn vec3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

pub fn arr3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Orthonormal frame with z along `primary` and y along the component of
/// `secondary` orthogonal to it. `None` when the two are (nearly) parallel.
pub fn frame_from_axes(
    primary: &Vector3<f64>,
    secondary: &Vector3<f64>,
    min_sin: f64,
) -> Option<UnitQuaternion<f64>> {
    let pn = primary.norm();
    let sn = secondary.norm();
    if pn < 1e-9 || sn < 1e-9 {
        return None;
    }
    let z = primary / pn;
    let s = secondary / sn;
    let y = s - z * z.dot(&s);
    if y.norm() < min_sin {
        return None;
    }
    let y = y.normalize();
    let x = y.cross(&z);
    let m = Matrix3::from_columns(&[x, y, z]);
    Some(UnitQuaternion::from_rotation_matrix(
        &Rotation3::from_matrix_unchecked(m),
    ))
}
