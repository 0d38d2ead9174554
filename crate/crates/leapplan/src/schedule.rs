//! Contact-schedule construction and reference trajectory generation.
//!
//! A jump is specified by its landing target, an optional rotation about one
//! principal axis, and a contact schedule obtained by continuing the pre-jump
//! gait over the takeoff horizon. The reference trajectory comes from
//! projectile closed forms: a heuristic vertical acceleration ramp, constant
//! forward/lateral acceleration solved so the ballistic coast after liftoff
//! lands on target, and a constant angular acceleration solved the same way.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::srb::{rotation_from_euler, ControlInput, ModelParams, SrbState, N_FEET};

/// Foot ordering convention: front-right, front-left, rear-right, rear-left
/// (x forward, y left), matching `ModelParams::hip_offsets`.
pub const FOOT_NAMES: [&str; N_FEET] = ["FR", "FL", "RR", "RL"];

/// Supported contact patterns for the takeoff phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gait {
    /// All four feet stay planted until liftoff.
    Static,
    /// All four feet synchronous: stance for the first half cycle, then flight.
    Pronk,
    /// Alternating diagonal pairs, two beats per cycle.
    Trot,
    /// Front pair then hind pair, two beats per cycle.
    Bound,
}

impl FromStr for Gait {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Gait::Static),
            "pronk" => Ok(Gait::Pronk),
            "trot" => Ok(Gait::Trot),
            "bound" => Ok(Gait::Bound),
            other => Err(Error::UnknownGait(other.to_string())),
        }
    }
}

impl Gait {
    /// Contact flags at a normalized gait phase in [0, 1).
    fn contact_at_phase(self, phase: f64) -> [bool; N_FEET] {
        let first_half = phase < 0.5;
        match self {
            Gait::Static => [true; N_FEET],
            Gait::Pronk => [first_half; N_FEET],
            // diagonal pairs: {FR, RL} then {FL, RR}
            Gait::Trot => {
                if first_half {
                    [true, false, false, true]
                } else {
                    [false, true, true, false]
                }
            }
            // front pair then hind pair, so the jump pushes off the hinds
            Gait::Bound => {
                if first_half {
                    [true, true, false, false]
                } else {
                    [false, false, true, true]
                }
            }
        }
    }
}

/// Principal body axis for the commanded rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationAxis {
    Roll,
    Pitch,
    Yaw,
}

impl RotationAxis {
    pub fn index(self) -> usize {
        match self {
            RotationAxis::Roll => 0,
            RotationAxis::Pitch => 1,
            RotationAxis::Yaw => 2,
        }
    }
}

/// Per-foot stance/swing flags over the discretized takeoff horizon.
///
/// `contact[k]` applies to knot `k`; the control interval from knot `k` to
/// `k+1` uses `contact[k]`. The takeoff horizon spans `(n_t − 1) · dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSchedule {
    pub n_t: usize,
    pub dt: f64,
    pub contact: Vec<[bool; N_FEET]>,
}

impl ContactSchedule {
    /// Whether foot `i` is in stance at step `k`.
    pub fn flag(&self, k: usize, i: usize) -> bool {
        self.contact[k][i]
    }

    /// Number of feet in stance at step `k`.
    pub fn stance_count(&self, k: usize) -> usize {
        self.contact[k].iter().filter(|&&c| c).count()
    }

    /// Takeoff duration covered by the schedule, seconds.
    pub fn takeoff_duration(&self) -> f64 {
        (self.n_t - 1) as f64 * self.dt
    }

    /// Number of control steps (one fewer than state knots).
    pub fn n_steps(&self) -> usize {
        self.n_t - 1
    }

    /// Contiguous stance intervals `[k0, k1]` (inclusive, in control steps)
    /// for foot `i`.
    pub fn stance_intervals(&self, i: usize) -> Vec<(usize, usize)> {
        let mut intervals = Vec::new();
        let mut start = None;
        for k in 0..self.n_steps() {
            match (self.contact[k][i], start) {
                (true, None) => start = Some(k),
                (false, Some(s)) => {
                    intervals.push((s, k - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            intervals.push((s, self.n_steps() - 1));
        }
        intervals
    }
}

/// Builds the contact schedule by continuing the given gait for one cycle
/// split into `n_t` knots, phase-shifted by `initial_phase`.
pub fn schedule_from_gait(
    gait: Gait,
    n_t: usize,
    dt: f64,
    initial_phase: f64,
) -> Result<ContactSchedule> {
    if n_t < 2 {
        return Err(Error::DimensionMismatch(format!(
            "schedule needs at least 2 knots, got {n_t}"
        )));
    }
    if dt <= 0.0 {
        return Err(Error::Config("schedule dt must be positive".into()));
    }
    let contact = (0..n_t)
        .map(|k| {
            let phase = (initial_phase + k as f64 / n_t as f64).rem_euclid(1.0);
            gait.contact_at_phase(phase)
        })
        .collect();
    Ok(ContactSchedule { n_t, dt, contact })
}

/// User-level description of the jump to plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    /// Desired COM position at landing, m.
    pub landing_target: Vector3<f64>,
    /// Terrain height at the landing site, m.
    pub landing_height: f64,
    /// Terrain height under the feet during takeoff, m.
    #[serde(default)]
    pub stance_height: f64,
    pub rotation_axis: RotationAxis,
    /// Desired rotation about the axis at landing, rad.
    pub rotation_angle: f64,
    pub gait: Gait,
    /// Duration of the takeoff phase; must equal `(n_t − 1) · dt`.
    pub takeoff_duration: f64,
    /// Offset term of the vertical-acceleration ramp (dimensionless).
    pub beta: f64,
    /// Slope term of the vertical-acceleration ramp (dimensionless).
    pub gamma: f64,
}

/// Reference state/control trajectory for the takeoff phase.
///
/// Position and velocity rows are exact explicit-Euler integrals of the
/// stored per-step reference accelerations, so downstream consistency checks
/// can re-integrate them bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub states: Vec<SrbState>,
    pub controls: Vec<ControlInput>,
    /// Net COM reference acceleration per control step, m/s².
    pub accel: Vec<Vector3<f64>>,
    /// Ballistic flight duration after liftoff, s.
    pub flight_time: f64,
    /// Reference state at liftoff (last knot).
    pub liftoff_state: SrbState,
}

/// Vertical reference acceleration ramp, evaluated at time `t`:
/// `(beta + (t / t_lo) * gamma) * (Σ stance-foot f_max) / mass`.
pub fn vertical_accel_at(
    beta: f64,
    gamma: f64,
    t: f64,
    t_lo: f64,
    stance_f_max_sum: f64,
    mass: f64,
) -> f64 {
    (beta + t / t_lo * gamma) * stance_f_max_sum / mass
}

/// Vertical reference acceleration per control step, evaluated at step
/// midpoints over the schedule. Swing steps contribute zero.
pub fn vertical_accel_profile(
    spec: &JumpSpec,
    sched: &ContactSchedule,
    params: &ModelParams,
) -> Vec<f64> {
    let t_lo = sched.takeoff_duration();
    (0..sched.n_steps())
        .map(|k| {
            let sum: f64 = (0..N_FEET)
                .filter(|&i| sched.flag(k, i))
                .map(|i| params.f_max[i])
                .sum();
            let t_mid = (k as f64 + 0.5) * sched.dt;
            vertical_accel_at(spec.beta, spec.gamma, t_mid, t_lo, sum, params.mass)
        })
        .collect()
}

/// Ballistic flight duration from liftoff height/velocity to the landing
/// height, taking the larger root (arrival on the descending arc).
pub fn flight_time(z_lo: f64, vz_lo: f64, z_la: f64, g: f64) -> Result<f64> {
    let disc = vz_lo * vz_lo - 2.0 * g * (z_la - z_lo);
    let apex = z_lo + vz_lo.max(0.0).powi(2) / (2.0 * g);
    if disc < 0.0 {
        return Err(Error::Unreachable { apex, target: z_la });
    }
    let t = (vz_lo + disc.sqrt()) / g;
    if t < 0.0 {
        return Err(Error::Unreachable { apex, target: z_la });
    }
    Ok(t)
}

/// Constant horizontal acceleration over `[0, t_lo]` such that integrating it
/// and then coasting ballistically for `dt_fl` lands the COM on `target`:
/// `target = p0 + v0 (t_lo + dt_fl) + a (t_lo²/2 + t_lo dt_fl)`.
pub fn lateral_accel(
    p0: Vector2<f64>,
    v0: Vector2<f64>,
    target: Vector2<f64>,
    t_lo: f64,
    dt_fl: f64,
) -> Result<Vector2<f64>> {
    let denom = 0.5 * t_lo * t_lo + t_lo * dt_fl;
    if denom.abs() < 1e-12 {
        return Err(Error::DegenerateTiming);
    }
    Ok((target - p0 - v0 * (t_lo + dt_fl)) / denom)
}

/// Constant angular acceleration ramp about a single principal axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularRamp {
    pub alpha: f64,
}

impl AngularRamp {
    pub fn rate_at(&self, t: f64) -> f64 {
        self.alpha * t
    }

    pub fn angle_at(&self, t: f64) -> f64 {
        0.5 * self.alpha * t * t
    }
}

/// Constant angular acceleration such that the rotation reaches
/// `rotation_angle` at landing: ramp during takeoff, constant rate in flight.
pub fn angular_reference(rotation_angle: f64, t_lo: f64, dt_fl: f64) -> Result<AngularRamp> {
    let denom = 0.5 * t_lo * t_lo + t_lo * dt_fl;
    if denom.abs() < 1e-12 {
        return Err(Error::DegenerateTiming);
    }
    Ok(AngularRamp {
        alpha: rotation_angle / denom,
    })
}

/// Discrete-time transfer coefficient of a constant acceleration under
/// explicit Euler integration over `n` steps plus a ballistic coast:
/// position gain `dt² n(n−1)/2 + t_lo · dt_fl` per unit acceleration.
fn euler_transfer_gain(n: usize, dt: f64, dt_fl: f64) -> f64 {
    let t_lo = n as f64 * dt;
    dt * dt * (n * (n - 1)) as f64 / 2.0 + t_lo * dt_fl
}

/// Builds the full reference trajectory for a jump.
///
/// The vertical channel follows the acceleration ramp; the horizontal and
/// angular channels solve for constants against the discrete Euler
/// integration so that the stored liftoff state coasts exactly onto the
/// landing target and rotation.
pub fn build_reference(
    spec: &JumpSpec,
    sched: &ContactSchedule,
    x0: &SrbState,
    params: &ModelParams,
) -> Result<ReferenceTrajectory> {
    let n = sched.n_steps();
    let dt = sched.dt;
    let t_lo = sched.takeoff_duration();
    if (spec.takeoff_duration - t_lo).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "takeoff_duration {} does not match schedule horizon {}",
            spec.takeoff_duration, t_lo
        )));
    }
    let g = params.gravity.z;

    // vertical channel first: it fixes the flight duration
    let a_z = vertical_accel_profile(spec, sched, params);
    let mut vz = x0.v_c.z;
    let mut z = x0.p_c.z;
    for &a in &a_z {
        z += vz * dt;
        vz += a * dt;
    }
    let dt_fl = flight_time(z, vz, spec.landing_target.z, g)?;

    // horizontal channel: constant acceleration solved against the Euler sums
    let gain = euler_transfer_gain(n, dt, dt_fl);
    if gain.abs() < 1e-12 {
        return Err(Error::DegenerateTiming);
    }
    let p0 = x0.p_c.xy();
    let v0 = x0.v_c.xy();
    let a_xy = (spec.landing_target.xy() - p0 - v0 * (t_lo + dt_fl)) / gain;

    // angular channel about the requested principal axis
    let axis = spec.rotation_axis.index();
    let theta0 = x0.theta[axis];
    let w0 = x0.omega_b[axis];
    let alpha = (spec.rotation_angle - theta0 - w0 * (t_lo + dt_fl)) / gain;

    let mut states = Vec::with_capacity(sched.n_t);
    let mut controls = Vec::with_capacity(n);
    let mut accel = Vec::with_capacity(n);
    let mut state = *x0;
    for k in 0..=n {
        states.push(state);
        if k == n {
            break;
        }
        let a_k = Vector3::new(a_xy.x, a_xy.y, a_z[k]);
        accel.push(a_k);

        // reference controls at step k: weight-sharing forces, feet under hips
        let phi_sum = sched.stance_count(k);
        let r = rotation_from_euler(&state.theta);
        let mut u = ControlInput::zero();
        for (i, foot) in u.feet.iter_mut().enumerate() {
            let hip = state.p_c + r * params.hip_offsets[i];
            foot.p = Vector3::new(hip.x, hip.y, spec.stance_height);
            if sched.flag(k, i) && phi_sum > 0 {
                foot.f = (a_k + params.gravity) * (params.mass / phi_sum as f64);
            }
        }
        controls.push(u);

        // explicit Euler step of the reference state
        let mut next = state;
        next.p_c += state.v_c * dt;
        next.v_c += a_k * dt;
        next.theta[axis] += state.omega_b[axis] * dt;
        next.omega_b[axis] += alpha * dt;
        state = next;
    }

    let liftoff_state = states[n];
    Ok(ReferenceTrajectory {
        states,
        controls,
        accel,
        flight_time: dt_fl,
        liftoff_state,
    })
}
