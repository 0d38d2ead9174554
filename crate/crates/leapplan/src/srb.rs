//! Single-rigid-body model of a quadruped: state and control types, ZYX Euler
//! rotation utilities, SO(3) exponential/log maps, net contact wrench, and the
//! continuous-time dynamics with analytic Jacobians.
//!
//! The trunk and legs are lumped into one rigid body with constant inertia.
//! Orientation is parameterized by ZYX (yaw-pitch-roll) Euler angles stored as
//! `(roll, pitch, yaw)`, so `R = Rz(yaw) · Ry(pitch) · Rx(roll)` maps body-frame
//! vectors into the inertial frame. Angular velocity lives in the body frame.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of contact feet. Fixed at four for this model.
pub const N_FEET: usize = 4;

/// Dimension of the rigid-body state vector.
pub const STATE_DIM: usize = 12;

/// Dimension of the stacked per-foot control vector (position + force per foot).
pub const CONTROL_DIM: usize = 6 * N_FEET;

/// Guard band around the Euler-rate singularity at pitch = ±π/2, in radians.
pub const EULER_SINGULARITY_EPS: f64 = 1e-3;

/// Rigid-body state: COM position, ZYX Euler angles `(roll, pitch, yaw)`,
/// COM velocity, and body-frame angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrbState {
    pub p_c: Vector3<f64>,
    pub theta: Vector3<f64>,
    pub v_c: Vector3<f64>,
    pub omega_b: Vector3<f64>,
}

impl SrbState {
    pub fn zero() -> Self {
        Self {
            p_c: Vector3::zeros(),
            theta: Vector3::zeros(),
            v_c: Vector3::zeros(),
            omega_b: Vector3::zeros(),
        }
    }

    pub fn to_vector(&self) -> SVector<f64, STATE_DIM> {
        let mut x = SVector::<f64, STATE_DIM>::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.p_c);
        x.fixed_rows_mut::<3>(3).copy_from(&self.theta);
        x.fixed_rows_mut::<3>(6).copy_from(&self.v_c);
        x.fixed_rows_mut::<3>(9).copy_from(&self.omega_b);
        x
    }

    pub fn from_vector(x: &SVector<f64, STATE_DIM>) -> Self {
        Self {
            p_c: x.fixed_rows::<3>(0).into(),
            theta: x.fixed_rows::<3>(3).into(),
            v_c: x.fixed_rows::<3>(6).into(),
            omega_b: x.fixed_rows::<3>(9).into(),
        }
    }
}

/// Per-foot command: world-frame foot position and ground reaction force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootControl {
    pub p: Vector3<f64>,
    pub f: Vector3<f64>,
}

impl FootControl {
    pub fn zero() -> Self {
        Self {
            p: Vector3::zeros(),
            f: Vector3::zeros(),
        }
    }
}

/// Control input: position and reaction force for each of the four feet,
/// stacked as `(p_1, f_1, …, p_4, f_4)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub feet: [FootControl; N_FEET],
}

impl ControlInput {
    pub fn zero() -> Self {
        Self {
            feet: [FootControl::zero(); N_FEET],
        }
    }

    pub fn to_vector(&self) -> SVector<f64, CONTROL_DIM> {
        let mut u = SVector::<f64, CONTROL_DIM>::zeros();
        for (i, foot) in self.feet.iter().enumerate() {
            u.fixed_rows_mut::<3>(6 * i).copy_from(&foot.p);
            u.fixed_rows_mut::<3>(6 * i + 3).copy_from(&foot.f);
        }
        u
    }

    pub fn from_vector(u: &SVector<f64, CONTROL_DIM>) -> Self {
        let mut feet = [FootControl::zero(); N_FEET];
        for (i, foot) in feet.iter_mut().enumerate() {
            foot.p = u.fixed_rows::<3>(6 * i).into();
            foot.f = u.fixed_rows::<3>(6 * i + 3).into();
        }
        Self { feet }
    }
}

/// Physical parameters of the lumped rigid body and its contact limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Total mass, kg.
    pub mass: f64,
    /// Body-frame inertia tensor about the COM, kg·m². Symmetric positive definite.
    pub inertia: Matrix3<f64>,
    /// Gravity acceleration vector, m/s². Points along +z for a z-up world,
    /// i.e. `(0, 0, 9.81)`; the dynamics subtract it.
    pub gravity: Vector3<f64>,
    /// Body-frame hip positions, one per foot.
    pub hip_offsets: [Vector3<f64>; N_FEET],
    /// Maximum limb length per foot, m.
    pub l_max: [f64; N_FEET],
    /// Friction coefficient per foot.
    pub mu: [f64; N_FEET],
    /// Maximum normal force per foot, N.
    pub f_max: [f64; N_FEET],
}

impl Default for ModelParams {
    /// Representative small-quadruped values (9 kg trunk, ~0.4 m stance).
    fn default() -> Self {
        Self {
            mass: 9.0,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.07, 0.26, 0.242)),
            gravity: Vector3::new(0.0, 0.0, 9.81),
            hip_offsets: [
                Vector3::new(0.19, -0.049, 0.0),
                Vector3::new(0.19, 0.049, 0.0),
                Vector3::new(-0.19, -0.049, 0.0),
                Vector3::new(-0.19, 0.049, 0.0),
            ],
            l_max: [0.35; N_FEET],
            mu: [1.5; N_FEET],
            f_max: [140.0; N_FEET],
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.mass <= 0.0 {
            return Err(Error::Config("mass must be positive".into()));
        }
        if (self.inertia - self.inertia.transpose()).norm() > 1e-12 {
            return Err(Error::Config("inertia tensor must be symmetric".into()));
        }
        let eig = self.inertia.symmetric_eigenvalues();
        if eig.min() <= 0.0 {
            return Err(Error::Config("inertia tensor must be positive definite".into()));
        }
        for i in 0..N_FEET {
            if self.l_max[i] <= 0.0 || self.mu[i] <= 0.0 || self.f_max[i] <= 0.0 {
                return Err(Error::Config(format!(
                    "l_max, mu, f_max must be positive (foot {i})"
                )));
            }
        }
        Ok(())
    }

    pub fn inertia_inv(&self) -> Matrix3<f64> {
        self.inertia
            .try_inverse()
            .expect("inertia validated positive definite")
    }
}

/// Net contact force and moment about the COM, expressed in the inertial frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub f: Vector3<f64>,
    pub tau: Vector3<f64>,
}

/// Skew-symmetric cross-product matrix: `skew(a) * b == a × b`.
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Inverse of `skew`, assuming the argument is skew-symmetric.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rotation matrix from body to inertial frame for ZYX Euler angles
/// `theta = (roll, pitch, yaw)`: `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
pub fn rotation_from_euler(theta: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = theta.x.sin_cos();
    let (sp, cp) = theta.y.sin_cos();
    let (sy, cy) = theta.z.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// ZYX Euler angles `(roll, pitch, yaw)` recovered from a rotation matrix.
/// Near the pitch = ±π/2 chart boundary the roll is pinned to zero.
pub fn euler_from_rotation(r: &Matrix3<f64>) -> Vector3<f64> {
    let sp = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let pitch = sp.asin();
    if sp.abs() > 1.0 - 1e-9 {
        // gimbal lock: only yaw ± roll observable; report it all as yaw
        let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
        Vector3::new(0.0, pitch, yaw)
    } else {
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        Vector3::new(roll, pitch, yaw)
    }
}

/// Matrix mapping body angular velocity to ZYX Euler-angle rates:
/// `theta_dot = B(theta) · omega_b`.
///
/// Singular at pitch = ±π/2; rejects orientations within
/// [`EULER_SINGULARITY_EPS`] of the singularity.
pub fn euler_rate_matrix(theta: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let (sr, cr) = theta.x.sin_cos();
    let cp = theta.y.cos();
    if cp.abs() < EULER_SINGULARITY_EPS.sin() {
        return Err(Error::SingularOrientation(EULER_SINGULARITY_EPS));
    }
    let tp = theta.y.tan();
    Ok(Matrix3::new(
        1.0,
        sr * tp,
        cr * tp,
        0.0,
        cr,
        -sr,
        0.0,
        sr / cp,
        cr / cp,
    ))
}

/// Partial derivatives of `euler_rate_matrix(theta) * omega` with respect to
/// `theta`, as a 3×3 matrix whose j-th column is `∂(B ω)/∂theta_j`.
fn euler_rate_product_jacobian(theta: &Vector3<f64>, omega: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = theta.x.sin_cos();
    let (sp, cp) = theta.y.sin_cos();
    let tp = sp / cp;
    let cp2 = cp * cp;
    // ∂B/∂roll · ω
    let db_droll = Matrix3::new(
        0.0,
        cr * tp,
        -sr * tp,
        0.0,
        -sr,
        -cr,
        0.0,
        cr / cp,
        -sr / cp,
    );
    // ∂B/∂pitch · ω
    let db_dpitch = Matrix3::new(
        0.0,
        sr / cp2,
        cr / cp2,
        0.0,
        0.0,
        0.0,
        0.0,
        sr * sp / cp2,
        cr * sp / cp2,
    );
    let mut jac = Matrix3::zeros();
    jac.set_column(0, &(db_droll * omega));
    jac.set_column(1, &(db_dpitch * omega));
    // ∂B/∂yaw = 0
    jac
}

/// Columns `∂R/∂roll`, `∂R/∂pitch`, `∂R/∂yaw` of the Euler-angle rotation.
pub(crate) fn rotation_euler_partials(theta: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let (sr, cr) = theta.x.sin_cos();
    let (sp, cp) = theta.y.sin_cos();
    let (sy, cy) = theta.z.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    let drx = Matrix3::new(0.0, 0.0, 0.0, 0.0, -sr, -cr, 0.0, cr, -sr);
    let dry = Matrix3::new(-sp, 0.0, cp, 0.0, 0.0, 0.0, -cp, 0.0, -sp);
    let drz = Matrix3::new(-sy, -cy, 0.0, cy, -sy, 0.0, 0.0, 0.0, 0.0);
    [rz * ry * drx, rz * dry * rx, drz * ry * rx]
}

/// Net wrench on the COM from the per-foot reaction forces:
/// force is the plain sum, moment sums `(p_i − p_c) × f_i`.
pub fn net_wrench(p_c: &Vector3<f64>, control: &ControlInput) -> Wrench {
    let mut f = Vector3::zeros();
    let mut tau = Vector3::zeros();
    for foot in &control.feet {
        f += foot.f;
        tau += (foot.p - p_c).cross(&foot.f);
    }
    Wrench { f, tau }
}

/// Continuous-time state derivative of the rigid-body model:
/// `(v_c, B(θ)ω_b, f/m − g, I⁻¹(Rᵀτ − ω_b × I ω_b))`.
pub fn dynamics(
    x: &SrbState,
    u: &ControlInput,
    params: &ModelParams,
) -> Result<SVector<f64, STATE_DIM>> {
    let b = euler_rate_matrix(&x.theta)?;
    let r = rotation_from_euler(&x.theta);
    let w = net_wrench(&x.p_c, u);
    let i_inv = params.inertia_inv();
    let mut xdot = SVector::<f64, STATE_DIM>::zeros();
    xdot.fixed_rows_mut::<3>(0).copy_from(&x.v_c);
    xdot.fixed_rows_mut::<3>(3).copy_from(&(b * x.omega_b));
    xdot.fixed_rows_mut::<3>(6)
        .copy_from(&(w.f / params.mass - params.gravity));
    let gyro = x.omega_b.cross(&(params.inertia * x.omega_b));
    xdot.fixed_rows_mut::<3>(9)
        .copy_from(&(i_inv * (r.transpose() * w.tau - gyro)));
    Ok(xdot)
}

/// Analytic Jacobians of [`dynamics`] with respect to the state and control.
pub fn dynamics_jacobians(
    x: &SrbState,
    u: &ControlInput,
    params: &ModelParams,
) -> Result<(SMatrix<f64, STATE_DIM, STATE_DIM>, SMatrix<f64, STATE_DIM, CONTROL_DIM>)> {
    let b = euler_rate_matrix(&x.theta)?;
    let r = rotation_from_euler(&x.theta);
    let dr = rotation_euler_partials(&x.theta);
    let w = net_wrench(&x.p_c, u);
    let i_inv = params.inertia_inv();

    let mut a = SMatrix::<f64, STATE_DIM, STATE_DIM>::zeros();
    // ṗ = v
    a.fixed_view_mut::<3, 3>(0, 6).copy_from(&Matrix3::identity());
    // θ̇ = B(θ) ω
    a.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&euler_rate_product_jacobian(&x.theta, &x.omega_b));
    a.fixed_view_mut::<3, 3>(3, 9).copy_from(&b);
    // ω̇ row: sensitivity to p_c through the moment arms
    let mut sum_fx = Matrix3::zeros();
    for foot in &u.feet {
        sum_fx += skew(&foot.f);
    }
    a.fixed_view_mut::<3, 3>(9, 0)
        .copy_from(&(i_inv * r.transpose() * sum_fx));
    // ω̇ row: sensitivity to θ through Rᵀ τ
    let mut drt_tau = Matrix3::zeros();
    for (j, drj) in dr.iter().enumerate() {
        drt_tau.set_column(j, &(drj.transpose() * w.tau));
    }
    a.fixed_view_mut::<3, 3>(9, 3).copy_from(&(i_inv * drt_tau));
    // ω̇ row: gyroscopic sensitivity to ω
    let gyro_jac = skew(&(params.inertia * x.omega_b)) - skew(&x.omega_b) * params.inertia;
    a.fixed_view_mut::<3, 3>(9, 9).copy_from(&(i_inv * gyro_jac));

    let mut bmat = SMatrix::<f64, STATE_DIM, CONTROL_DIM>::zeros();
    let rt = r.transpose();
    for (i, foot) in u.feet.iter().enumerate() {
        // v̇ rows: forces only
        bmat.fixed_view_mut::<3, 3>(6, 6 * i + 3)
            .copy_from(&(Matrix3::identity() / params.mass));
        // ω̇ rows
        bmat.fixed_view_mut::<3, 3>(9, 6 * i)
            .copy_from(&(-(i_inv * rt * skew(&foot.f))));
        bmat.fixed_view_mut::<3, 3>(9, 6 * i + 3)
            .copy_from(&(i_inv * rt * skew(&(foot.p - x.p_c))));
    }
    Ok((a, bmat))
}

/// Exponential map from a rotation vector to a rotation matrix (Rodrigues).
pub fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let (c1, c2) = if theta < 1e-8 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let wx = skew(w);
    Matrix3::identity() + wx * c1 + wx * wx * c2
}

/// Logarithm map from a rotation matrix to a rotation vector with
/// `‖w‖ ≤ π`. The angle comes from `atan2(sin, cos)` so it stays
/// well-conditioned near zero; the π-rotation branch takes its axis from the
/// symmetric part, fixing the sign by the largest diagonal element.
pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let s_vec = vee(&(r - r.transpose())) * 0.5; // sin(θ) · axis
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let s = s_vec.norm();
    let theta = s.atan2(c);
    if theta < 1e-10 {
        return s_vec;
    }
    if std::f64::consts::PI - theta > 1e-6 {
        return s_vec * (theta / s);
    }
    // Near π: axis² from the symmetric part, aaᵀ = I + (R + Rᵀ − 2I)/(2(1 − cosθ)).
    let sym = (r + r.transpose()) * 0.5;
    let aat = Matrix3::identity() + (sym - Matrix3::identity()) / (1.0 - c);
    let diag = [aat[(0, 0)], aat[(1, 1)], aat[(2, 2)]];
    let k = (0..3).max_by(|&a, &b| diag[a].total_cmp(&diag[b])).unwrap();
    let mut axis = Vector3::zeros();
    axis[k] = diag[k].max(0.0).sqrt();
    for j in 0..3 {
        if j != k {
            axis[j] = aat[(j, k)] / axis[k];
        }
    }
    axis.normalize_mut();
    // align with the antisymmetric part when it still carries sign information
    if s > 1e-12 && s_vec.dot(&axis) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Inverse of the right Jacobian of SO(3): for `R(t) = exp(ξ̂(t))` following
/// `Ṙ = R Ω̂` with body angular velocity `Ω`, the coordinate rate is
/// `ξ̇ = so3_right_jacobian_inv(ξ) · Ω`.
pub fn so3_right_jacobian_inv(xi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = xi.norm_squared();
    let theta = theta2.sqrt();
    let c = if theta < 1e-4 {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        (1.0 - 0.5 * theta * (1.0 + theta.cos()) / theta.sin()) / theta2
    };
    let xx = skew(xi);
    Matrix3::identity() + xx * 0.5 + xx * xx * c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_theta(seed: u64) -> Vector3<f64> {
        // cheap deterministic pseudo-randoms in (−1.4, 1.4) for pitch-safe angles
        let f = |k: u64| ((seed.wrapping_mul(6364136223846793005).wrapping_add(k) >> 33) as f64
            / (u32::MAX as f64) * 2.8)
            - 1.4;
        Vector3::new(f(1), f(2), f(3))
    }

    #[test]
    fn rotation_identity_at_zero() {
        let r = rotation_from_euler(&Vector3::zeros());
        assert_abs_diff_eq!(r, Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn rotation_half_turn_yaw() {
        let r = rotation_from_euler(&Vector3::new(0.0, 0.0, PI));
        let expected = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        assert_abs_diff_eq!(r, expected, epsilon = 1e-12);
    }

    #[test]
    fn rotation_orthonormal() {
        let r = rotation_from_euler(&Vector3::new(0.1, 0.2, 0.3));
        assert_abs_diff_eq!(r.transpose() * r, Matrix3::identity(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn euler_roundtrip() {
        for seed in 0..50 {
            let theta = random_theta(seed);
            let r = rotation_from_euler(&theta);
            let back = euler_from_rotation(&r);
            assert_abs_diff_eq!(theta, back, epsilon = 1e-10);
        }
    }

    #[test]
    fn euler_rate_identity_at_zero() {
        let b = euler_rate_matrix(&Vector3::zeros()).unwrap();
        assert_abs_diff_eq!(b, Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn euler_rate_singular_at_gimbal_lock() {
        let err = euler_rate_matrix(&Vector3::new(0.3, FRAC_PI_2, -0.2));
        assert!(matches!(err, Err(Error::SingularOrientation(_))));
    }

    #[test]
    fn euler_rate_matches_finite_difference_kinematics() {
        // dθ/dt from B(θ)ω must match the Euler angles extracted from
        // R(t)·exp((ω dt)^) differentiated numerically.
        let dt = 1e-7;
        for seed in 0..20 {
            let theta = random_theta(seed) * 0.8;
            let omega = random_theta(seed + 100) * 2.0;
            let b = euler_rate_matrix(&theta).unwrap();
            let analytic = b * omega;
            let r = rotation_from_euler(&theta);
            let plus = euler_from_rotation(&(r * so3_exp(&(omega * dt))));
            let minus = euler_from_rotation(&(r * so3_exp(&(omega * -dt))));
            let fd = (plus - minus) / (2.0 * dt);
            assert_abs_diff_eq!(analytic, fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn wrench_symmetric_feet_cancels_torque() {
        let p_c = Vector3::new(0.3, -0.1, 0.4);
        let mut control = ControlInput::zero();
        let offs = [
            Vector3::new(0.2, 0.1, -0.4),
            Vector3::new(-0.2, 0.1, -0.4),
            Vector3::new(0.2, -0.1, -0.4),
            Vector3::new(-0.2, -0.1, -0.4),
        ];
        for (foot, off) in control.feet.iter_mut().zip(offs) {
            foot.p = p_c + off;
            foot.f = Vector3::new(0.0, 0.0, 25.0);
        }
        let w = net_wrench(&p_c, &control);
        assert_abs_diff_eq!(w.f, Vector3::new(0.0, 0.0, 100.0), epsilon = 1e-12);
        assert_abs_diff_eq!(w.tau, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn wrench_single_foot_cross_product() {
        let p_c = Vector3::zeros();
        let mut control = ControlInput::zero();
        control.feet[0].p = Vector3::new(0.1, 0.0, 0.0);
        control.feet[0].f = Vector3::new(0.0, 0.0, 10.0);
        let w = net_wrench(&p_c, &control);
        assert_abs_diff_eq!(w.tau, Vector3::new(0.0, -1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn wrench_matches_per_foot_oracle() {
        // independent recomputation of the same sum, foot by foot
        for seed in 0..20 {
            let p_c = random_theta(seed + 300);
            let mut control = ControlInput::zero();
            for (i, foot) in control.feet.iter_mut().enumerate() {
                foot.p = random_theta(seed + 7 * i as u64 + 1);
                foot.f = random_theta(seed + 11 * i as u64 + 2) * 30.0;
            }
            let w = net_wrench(&p_c, &control);
            let mut f_oracle = Vector3::zeros();
            let mut tau_oracle = Vector3::zeros();
            for i in 0..N_FEET {
                let arm = control.feet[i].p - p_c;
                f_oracle += control.feet[i].f;
                tau_oracle += Vector3::new(
                    arm.y * control.feet[i].f.z - arm.z * control.feet[i].f.y,
                    arm.z * control.feet[i].f.x - arm.x * control.feet[i].f.z,
                    arm.x * control.feet[i].f.y - arm.y * control.feet[i].f.x,
                );
            }
            assert_abs_diff_eq!(w.f, f_oracle, epsilon = 1e-12);
            assert_abs_diff_eq!(w.tau, tau_oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn dynamics_free_fall() {
        let params = ModelParams::default();
        let mut x = SrbState::zero();
        x.p_c.z = 1.0;
        x.v_c = Vector3::new(0.5, -0.2, 1.0);
        let xdot = dynamics(&x, &ControlInput::zero(), &params).unwrap();
        assert_abs_diff_eq!(Vector3::from(xdot.fixed_rows::<3>(0)), x.v_c, epsilon = 1e-15);
        assert_abs_diff_eq!(Vector3::from(xdot.fixed_rows::<3>(3)), Vector3::zeros(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            Vector3::from(xdot.fixed_rows::<3>(6)),
            -params.gravity,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(Vector3::from(xdot.fixed_rows::<3>(9)), Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn dynamics_hover_equilibrium() {
        let params = ModelParams::default();
        let mut x = SrbState::zero();
        x.p_c.z = 0.3;
        let mut u = ControlInput::zero();
        for (foot, hip) in u.feet.iter_mut().zip(params.hip_offsets) {
            foot.p = x.p_c + hip - Vector3::new(0.0, 0.0, 0.3);
            foot.f = Vector3::new(0.0, 0.0, params.mass * params.gravity.z / 4.0);
        }
        let xdot = dynamics(&x, &u, &params).unwrap();
        assert_abs_diff_eq!(xdot, SVector::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn dynamics_principal_axis_spin_is_torque_free() {
        let params = ModelParams::default();
        for axis in 0..3 {
            let mut x = SrbState::zero();
            x.omega_b[axis] = 3.0;
            let xdot = dynamics(&x, &ControlInput::zero(), &params).unwrap();
            assert_abs_diff_eq!(Vector3::from(xdot.fixed_rows::<3>(9)), Vector3::zeros(), epsilon = 1e-13);
        }
    }

    #[test]
    fn dynamics_jacobians_match_finite_differences() {
        let params = ModelParams::default();
        let mut x = SrbState::zero();
        x.p_c = Vector3::new(0.1, -0.2, 0.35);
        x.theta = Vector3::new(0.2, -0.3, 0.9);
        x.v_c = Vector3::new(0.4, 0.1, 1.2);
        x.omega_b = Vector3::new(1.0, -2.0, 3.0);
        let mut u = ControlInput::zero();
        for (i, foot) in u.feet.iter_mut().enumerate() {
            foot.p = Vector3::new(0.2 - 0.1 * i as f64, 0.1 * i as f64, 0.0);
            foot.f = Vector3::new(3.0 * i as f64, -2.0, 20.0 + 5.0 * i as f64);
        }
        let (a, b) = dynamics_jacobians(&x, &u, &params).unwrap();
        let h = 1e-6;
        let xv = x.to_vector();
        for j in 0..STATE_DIM {
            let mut xp = xv;
            let mut xm = xv;
            xp[j] += h;
            xm[j] -= h;
            let fp = dynamics(&SrbState::from_vector(&xp), &u, &params).unwrap();
            let fm = dynamics(&SrbState::from_vector(&xm), &u, &params).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert_abs_diff_eq!(a.column(j).clone_owned(), fd, epsilon = 1e-5);
        }
        let uv = u.to_vector();
        for j in 0..CONTROL_DIM {
            let mut up = uv;
            let mut um = uv;
            up[j] += h;
            um[j] -= h;
            let fp = dynamics(&x, &ControlInput::from_vector(&up), &params).unwrap();
            let fm = dynamics(&x, &ControlInput::from_vector(&um), &params).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert_abs_diff_eq!(b.column(j).clone_owned(), fd, epsilon = 1e-5);
        }
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_abs_diff_eq!(so3_exp(&Vector3::zeros()), Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn exp_quarter_turn_about_z() {
        let r = so3_exp(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(r, expected, epsilon = 1e-12);
    }

    #[test]
    fn log_exp_roundtrip() {
        let mut worst: f64 = 0.0;
        for seed in 0..1000u64 {
            let dir = random_theta(seed).normalize();
            let mag = (seed as f64 / 1000.0) * (PI - 0.01);
            let w = dir * mag;
            let back = so3_log(&so3_exp(&w));
            worst = worst.max((back - w).norm());
        }
        assert!(worst < 1e-9, "round-trip error {worst}");
    }

    #[test]
    fn log_handles_pi_rotation() {
        for axis in [Vector3::x(), Vector3::y(), Vector3::z()] {
            let w = axis * PI;
            let back = so3_log(&so3_exp(&w));
            // at π the sign of the axis is a convention; the rotation must match
            assert_abs_diff_eq!(so3_exp(&back), so3_exp(&w), epsilon = 1e-9);
            assert_abs_diff_eq!(back.norm(), PI, epsilon = 1e-9);
        }
    }

    #[test]
    fn right_jacobian_inv_matches_flow_derivative() {
        // ξ̇ = J_r⁻¹(ξ)Ω reproduces the derivative of log(exp(ξ̂)exp(tΩ̂)) at t = 0.
        let h = 1e-5;
        for seed in 0..20 {
            let xi = random_theta(seed) * 0.7;
            let omega = random_theta(seed + 40) * 2.0;
            let analytic = so3_right_jacobian_inv(&xi) * omega;
            let e = so3_exp(&xi);
            let plus = so3_log(&(e * so3_exp(&(omega * h))));
            let minus = so3_log(&(e * so3_exp(&(omega * -h))));
            let fd = (plus - minus) / (2.0 * h);
            assert_abs_diff_eq!(analytic, fd, epsilon = 1e-6);
        }
    }

    proptest! {
        #[test]
        fn rotation_always_orthonormal(
            roll in -3.2f64..3.2,
            pitch in -3.2f64..3.2,
            yaw in -3.2f64..3.2,
        ) {
            let r = rotation_from_euler(&Vector3::new(roll, pitch, yaw));
            let err = (r.transpose() * r - Matrix3::identity()).norm();
            prop_assert!(err < 1e-10);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn linear_rows_see_only_force_sum(perm in 0usize..24) {
            // swapping feet leaves the v̇ rows untouched
            let params = ModelParams::default();
            let x = SrbState::zero();
            let mut u = ControlInput::zero();
            for (i, foot) in u.feet.iter_mut().enumerate() {
                foot.p = Vector3::new(i as f64 * 0.1, -(i as f64) * 0.05, 0.0);
                foot.f = Vector3::new(i as f64, 1.0 + i as f64, 10.0 * (i + 1) as f64);
            }
            let mut permuted = u;
            permuted.feet.swap(perm % 4, (perm / 4) % 4);
            let d0 = dynamics(&x, &u, &params).unwrap();
            let d1 = dynamics(&x, &permuted, &params).unwrap();
            let diff = (d0.fixed_rows::<3>(6) - d1.fixed_rows::<3>(6)).norm();
            prop_assert!(diff < 1e-12);
        }

        #[test]
        fn torque_invariant_along_line_of_action(lambda in -2.0f64..2.0) {
            let p_c = Vector3::new(0.1, 0.2, 0.3);
            let mut u = ControlInput::zero();
            u.feet[1].p = Vector3::new(0.4, -0.2, 0.0);
            u.feet[1].f = Vector3::new(5.0, 2.0, 30.0);
            let w0 = net_wrench(&p_c, &u);
            let mut shifted = u;
            shifted.feet[1].p += shifted.feet[1].f * lambda;
            let w1 = net_wrench(&p_c, &shifted);
            prop_assert!((w0.tau - w1.tau).norm() < 1e-9);
            prop_assert!((w0.f - w1.f).norm() < 1e-12);
        }
    }
}
