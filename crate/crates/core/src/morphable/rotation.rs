//! Rotation parameterizations: XYZ intrinsic Euler angles and axis-angle.

use nalgebra::{Matrix3, Rotation3, Vector3};

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Intrinsic X, then Y, then Z: `R = Rx(a) · Ry(b) · Rz(c)`.
pub fn euler_xyz(angles: [f64; 3]) -> Matrix3<f64> {
    rot_x(angles[0]) * rot_y(angles[1]) * rot_z(angles[2])
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula; the vector's direction is the axis, its norm the angle.
pub fn axis_angle(v: [f64; 3]) -> Matrix3<f64> {
    let w = Vector3::from(v);
    let th = w.norm();
    if th < 1e-300 {
        return Matrix3::identity();
    }
    let k = skew(&(w / th));
    Matrix3::identity() + k * th.sin() + k * k * (1.0 - th.cos())
}

/// `∂R/∂v_i` for the axis-angle map, exact (also at the origin).
pub fn axis_angle_jacobian(v: [f64; 3]) -> [Matrix3<f64>; 3] {
    let w = Vector3::from(v);
    let th2 = w.norm_squared();
    let e = [Vector3::x(), Vector3::y(), Vector3::z()];
    if th2 < 1e-24 {
        return [skew(&e[0]), skew(&e[1]), skew(&e[2])];
    }
    let r = axis_angle(v);
    let i_minus_r = Matrix3::identity() - r;
    let sw = skew(&w);
    let mut out = [Matrix3::zeros(); 3];
    for i in 0..3 {
        let c = w.cross(&(i_minus_r * e[i]));
        out[i] = (sw * w[i] + skew(&c)) * r / th2;
    }
    out
}

pub fn to_axis_angle(r: &Matrix3<f64>) -> [f64; 3] {
    let rot = Rotation3::from_matrix_unchecked(*r);
    let v = rot.scaled_axis();
    [v.x, v.y, v.z]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn quarter_turn_z_maps_x_to_y() {
        let r = euler_xyz([0.0, 0.0, FRAC_PI_2]);
        let p = r * Vector3::new(1.0, 0.0, 0.0);
        assert!((p - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn axis_angle_round_trip() {
        let v = [0.3, -0.7, 1.1];
        let back = to_axis_angle(&axis_angle(v));
        for i in 0..3 {
            assert!((back[i] - v[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_differences() {
        for v in [[0.3, -0.7, 1.1], [0.0, 0.0, 0.0], [1e-9, 0.0, 2e-9]] {
            let jac = axis_angle_jacobian(v);
            for i in 0..3 {
                let h = 1e-6;
                let mut a = v;
                let mut b = v;
                a[i] += h;
                b[i] -= h;
                let fd = (axis_angle(a) - axis_angle(b)) / (2.0 * h);
                assert!((fd - jac[i]).norm() < 1e-8, "component {i} at {v:?}");
            }
        }
    }
}
