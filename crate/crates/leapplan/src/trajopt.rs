//! Direct-transcription trajectory optimization for the takeoff phase.
//!
//! Decision variables are the state knots `X ∈ R^{12×n_t}` and per-step
//! controls `U ∈ R^{24×(n_t−1)}` (foot positions and reaction forces). The
//! quadratic cost penalizes deviations from the reference trajectory with a
//! dominant terminal weight; constraints enforce explicit-Euler dynamics
//! defects, ground contact and in-place pinning for stance feet, zero force
//! for swing feet, leg-length limits about the orientation-dependent hips,
//! and the friction pyramid. The resulting NLP is handed to the SQP engine
//! with the exact (constant) Gauss-Newton Hessian of the tracking cost.

use nalgebra::{DMatrix, DVector, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{ContactSchedule, ReferenceTrajectory};
use crate::sqp::{solve_nlp, HessianStrategy, NlpSpec};
use crate::srb::{
    dynamics, dynamics_jacobians, rotation_euler_partials, rotation_from_euler, ControlInput,
    ModelParams, SrbState, CONTROL_DIM, N_FEET, STATE_DIM,
};
use crate::terrain::TerrainModel;

/// Diagonal cost weights. Pose rows are weighted heavier than rate rows, and
/// the terminal weight dominates the stage weight so the optimizer fights for
/// the liftoff state, which alone fixes the flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub q_stage: SVector<f64, STATE_DIM>,
    pub r_stage: SVector<f64, CONTROL_DIM>,
    pub q_terminal: SVector<f64, STATE_DIM>,
}

impl Default for Weights {
    fn default() -> Self {
        let mut q = SVector::<f64, STATE_DIM>::from_element(1.0);
        for i in 0..6 {
            q[i] = 10.0;
        }
        Self {
            q_stage: q,
            r_stage: SVector::from_element(1e-3),
            q_terminal: q * 100.0,
        }
    }
}

/// Solver tolerances and caps for the takeoff NLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub kkt_tol: f64,
    pub constraint_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            kkt_tol: 1e-4,
            constraint_tol: 1e-6,
        }
    }
}

/// Assembled NLP for one takeoff: reference, schedule, terrain, model, and
/// weights, plus the derived constraint layout.
#[derive(Debug, Clone)]
pub struct NlpProblem {
    pub reference: ReferenceTrajectory,
    pub schedule: ContactSchedule,
    pub terrain: TerrainModel,
    pub params: ModelParams,
    pub weights: Weights,
    pub options: SolverOptions,
    /// Ground-contact equality steps: `(foot, step)` pairs at the start of
    /// each stance interval. Later steps of the interval are pinned to it.
    ground_steps: Vec<(usize, usize)>,
    /// Pinning equalities `(foot, step)` tying step to step+1.
    pin_steps: Vec<(usize, usize)>,
    /// Swing steps `(foot, step)` whose force variables are fixed to zero.
    swing_steps: Vec<(usize, usize)>,
    /// Friction steps `(foot, step)` carrying pyramid rows.
    friction_steps: Vec<(usize, usize)>,
}

/// Per-plan feasibility report from an independent constraint re-evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub max_defect: f64,
    pub max_ground_violation: f64,
    pub max_pinning_drift: f64,
    pub max_leg_violation: f64,
    pub max_friction_violation: f64,
    pub max_swing_force: f64,
    pub pass: bool,
}

/// Solve statistics for one takeoff NLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub merit_steps: Vec<(f64, f64)>,
}

/// Optimized state/control trajectories plus diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalPlan {
    pub states: Vec<SrbState>,
    pub controls: Vec<ControlInput>,
    pub stats: SolveStats,
    pub report: FeasibilityReport,
}

struct Layout {
    n_t: usize,
}

impl Layout {
    fn sx(&self, k: usize) -> usize {
        STATE_DIM * k
    }

    fn su(&self, k: usize) -> usize {
        STATE_DIM * self.n_t + CONTROL_DIM * k
    }

    fn n_vars(&self) -> usize {
        STATE_DIM * self.n_t + CONTROL_DIM * (self.n_t - 1)
    }
}

/// Assembles the takeoff NLP. The reference and schedule must share the
/// horizon; the initial state is pinned to the reference's first knot.
pub fn build_nlp(
    reference: &ReferenceTrajectory,
    schedule: &ContactSchedule,
    terrain: &TerrainModel,
    params: &ModelParams,
    weights: &Weights,
) -> Result<NlpProblem> {
    if reference.states.len() != schedule.n_t
        || reference.controls.len() != schedule.n_steps()
    {
        return Err(Error::DimensionMismatch(format!(
            "reference has {} knots / {} controls, schedule expects {} / {}",
            reference.states.len(),
            reference.controls.len(),
            schedule.n_t,
            schedule.n_steps()
        )));
    }
    let mut ground_steps = Vec::new();
    let mut pin_steps = Vec::new();
    let mut swing_steps = Vec::new();
    let mut friction_steps = Vec::new();
    for i in 0..N_FEET {
        for (k0, k1) in schedule.stance_intervals(i) {
            ground_steps.push((i, k0));
            for k in k0..k1 {
                pin_steps.push((i, k));
            }
        }
        for k in 0..schedule.n_steps() {
            if schedule.flag(k, i) {
                friction_steps.push((i, k));
            } else {
                swing_steps.push((i, k));
            }
        }
    }
    Ok(NlpProblem {
        reference: reference.clone(),
        schedule: schedule.clone(),
        terrain: terrain.clone(),
        params: params.clone(),
        weights: weights.clone(),
        options: SolverOptions::default(),
        ground_steps,
        pin_steps,
        swing_steps,
        friction_steps,
    })
}

impl NlpProblem {
    fn layout(&self) -> Layout {
        Layout {
            n_t: self.schedule.n_t,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.layout().n_vars()
    }

    pub fn n_state_vars(&self) -> usize {
        STATE_DIM * self.schedule.n_t
    }

    pub fn n_control_vars(&self) -> usize {
        CONTROL_DIM * (self.schedule.n_t - 1)
    }

    pub fn n_eq(&self) -> usize {
        STATE_DIM
            + STATE_DIM * self.schedule.n_steps()
            + self.ground_steps.len()
            + 3 * self.pin_steps.len()
            + 3 * self.swing_steps.len()
    }

    pub fn n_ineq(&self) -> usize {
        N_FEET * self.schedule.n_steps() + 6 * self.friction_steps.len()
    }

    fn state_at(&self, z: &DVector<f64>, k: usize) -> SrbState {
        let off = self.layout().sx(k);
        SrbState::from_vector(&SVector::from_iterator(
            z.rows(off, STATE_DIM).iter().copied(),
        ))
    }

    fn control_at(&self, z: &DVector<f64>, k: usize) -> ControlInput {
        let off = self.layout().su(k);
        ControlInput::from_vector(&SVector::from_iterator(
            z.rows(off, CONTROL_DIM).iter().copied(),
        ))
    }

    /// Stacks the reference into a flat decision vector (also the default
    /// initial guess).
    pub fn reference_vector(&self) -> DVector<f64> {
        let lay = self.layout();
        let mut z = DVector::zeros(lay.n_vars());
        for (k, s) in self.reference.states.iter().enumerate() {
            z.rows_mut(lay.sx(k), STATE_DIM)
                .copy_from(&s.to_vector());
        }
        for (k, u) in self.reference.controls.iter().enumerate() {
            z.rows_mut(lay.su(k), CONTROL_DIM)
                .copy_from(&u.to_vector());
        }
        z
    }

    fn plan_vector(&self, plan: &OptimalPlan) -> DVector<f64> {
        let lay = self.layout();
        let mut z = DVector::zeros(lay.n_vars());
        for (k, s) in plan.states.iter().enumerate() {
            z.rows_mut(lay.sx(k), STATE_DIM).copy_from(&s.to_vector());
        }
        for (k, u) in plan.controls.iter().enumerate() {
            z.rows_mut(lay.su(k), CONTROL_DIM).copy_from(&u.to_vector());
        }
        z
    }

    fn cost_hessian(&self) -> DMatrix<f64> {
        let lay = self.layout();
        let n_t = self.schedule.n_t;
        let mut h = DMatrix::zeros(lay.n_vars(), lay.n_vars());
        for k in 0..n_t {
            let q = if k + 1 == n_t {
                &self.weights.q_terminal
            } else {
                &self.weights.q_stage
            };
            for j in 0..STATE_DIM {
                h[(lay.sx(k) + j, lay.sx(k) + j)] = 2.0 * q[j];
            }
        }
        for k in 0..n_t - 1 {
            for j in 0..CONTROL_DIM {
                h[(lay.su(k) + j, lay.su(k) + j)] = 2.0 * self.weights.r_stage[j];
            }
        }
        h
    }

    fn cost(&self, z: &DVector<f64>) -> f64 {
        let lay = self.layout();
        let n_t = self.schedule.n_t;
        let mut c = 0.0;
        for k in 0..n_t {
            let q = if k + 1 == n_t {
                &self.weights.q_terminal
            } else {
                &self.weights.q_stage
            };
            let xref = self.reference.states[k].to_vector();
            for j in 0..STATE_DIM {
                let d = z[lay.sx(k) + j] - xref[j];
                c += q[j] * d * d;
            }
        }
        for k in 0..n_t - 1 {
            let uref = self.reference.controls[k].to_vector();
            for j in 0..CONTROL_DIM {
                let d = z[lay.su(k) + j] - uref[j];
                c += self.weights.r_stage[j] * d * d;
            }
        }
        c
    }

    fn cost_gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let lay = self.layout();
        let n_t = self.schedule.n_t;
        let mut g = DVector::zeros(lay.n_vars());
        for k in 0..n_t {
            let q = if k + 1 == n_t {
                &self.weights.q_terminal
            } else {
                &self.weights.q_stage
            };
            let xref = self.reference.states[k].to_vector();
            for j in 0..STATE_DIM {
                g[lay.sx(k) + j] = 2.0 * q[j] * (z[lay.sx(k) + j] - xref[j]);
            }
        }
        for k in 0..n_t - 1 {
            let uref = self.reference.controls[k].to_vector();
            for j in 0..CONTROL_DIM {
                g[lay.su(k) + j] = 2.0 * self.weights.r_stage[j] * (z[lay.su(k) + j] - uref[j]);
            }
        }
        g
    }

    fn eq_constraints(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let lay = self.layout();
        let dt = self.schedule.dt;
        let mut c = DVector::zeros(self.n_eq());
        let mut row = 0;
        // initial state
        let x0 = self.reference.states[0].to_vector();
        for j in 0..STATE_DIM {
            c[row + j] = z[lay.sx(0) + j] - x0[j];
        }
        row += STATE_DIM;
        // dynamics defects
        for k in 0..self.schedule.n_steps() {
            let xk = self.state_at(z, k);
            let uk = self.control_at(z, k);
            let xdot = dynamics(&xk, &uk, &self.params)?;
            for j in 0..STATE_DIM {
                c[row + j] = z[lay.sx(k + 1) + j] - z[lay.sx(k) + j] - xdot[j] * dt;
            }
            row += STATE_DIM;
        }
        // ground contact at stance-interval starts
        for &(i, k) in &self.ground_steps {
            let off = lay.su(k) + 6 * i;
            let h = self.terrain.height_at(z[off], z[off + 1]);
            c[row] = h - z[off + 2];
            row += 1;
        }
        // pinning within stance intervals
        for &(i, k) in &self.pin_steps {
            let a = lay.su(k) + 6 * i;
            let b = lay.su(k + 1) + 6 * i;
            for j in 0..3 {
                c[row + j] = z[a + j] - z[b + j];
            }
            row += 3;
        }
        // swing feet carry no force
        for &(i, k) in &self.swing_steps {
            let off = lay.su(k) + 6 * i + 3;
            for j in 0..3 {
                c[row + j] = z[off + j];
            }
            row += 3;
        }
        debug_assert_eq!(row, self.n_eq());
        Ok(c)
    }

    fn eq_jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let lay = self.layout();
        let dt = self.schedule.dt;
        let mut jac = DMatrix::zeros(self.n_eq(), lay.n_vars());
        let mut row = 0;
        for j in 0..STATE_DIM {
            jac[(row + j, lay.sx(0) + j)] = 1.0;
        }
        row += STATE_DIM;
        for k in 0..self.schedule.n_steps() {
            let xk = self.state_at(z, k);
            let uk = self.control_at(z, k);
            let (a, b) = dynamics_jacobians(&xk, &uk, &self.params)?;
            for r in 0..STATE_DIM {
                jac[(row + r, lay.sx(k + 1) + r)] = 1.0;
                for cidx in 0..STATE_DIM {
                    jac[(row + r, lay.sx(k) + cidx)] =
                        -a[(r, cidx)] * dt - if r == cidx { 1.0 } else { 0.0 };
                }
                for cidx in 0..CONTROL_DIM {
                    jac[(row + r, lay.su(k) + cidx)] = -b[(r, cidx)] * dt;
                }
            }
            row += STATE_DIM;
        }
        for &(i, k) in &self.ground_steps {
            // piecewise-flat terrain: zero gradient in x, y almost everywhere
            jac[(row, lay.su(k) + 6 * i + 2)] = -1.0;
            row += 1;
        }
        for &(i, k) in &self.pin_steps {
            for j in 0..3 {
                jac[(row + j, lay.su(k) + 6 * i + j)] = 1.0;
                jac[(row + j, lay.su(k + 1) + 6 * i + j)] = -1.0;
            }
            row += 3;
        }
        for &(i, k) in &self.swing_steps {
            for j in 0..3 {
                jac[(row + j, lay.su(k) + 6 * i + 3 + j)] = 1.0;
            }
            row += 3;
        }
        debug_assert_eq!(row, self.n_eq());
        Ok(jac)
    }

    fn ineq_constraints(&self, z: &DVector<f64>) -> DVector<f64> {
        let lay = self.layout();
        let mut c = DVector::zeros(self.n_ineq());
        let mut row = 0;
        // leg length, squared to stay smooth at zero extension
        for k in 0..self.schedule.n_steps() {
            let xk = self.state_at(z, k);
            let r = rotation_from_euler(&xk.theta);
            for i in 0..N_FEET {
                let off = lay.su(k) + 6 * i;
                let foot = Vector3::new(z[off], z[off + 1], z[off + 2]);
                let hip = xk.p_c + r * self.params.hip_offsets[i];
                let d = foot - hip;
                c[row] = d.norm_squared() - self.params.l_max[i] * self.params.l_max[i];
                row += 1;
            }
        }
        // friction pyramid on stance feet
        for &(i, k) in &self.friction_steps {
            let off = lay.su(k) + 6 * i + 3;
            let (fx, fy, fz) = (z[off], z[off + 1], z[off + 2]);
            let mu = self.params.mu[i];
            c[row] = fx - mu * fz;
            c[row + 1] = -fx - mu * fz;
            c[row + 2] = fy - mu * fz;
            c[row + 3] = -fy - mu * fz;
            c[row + 4] = fz - self.params.f_max[i];
            c[row + 5] = -fz;
            row += 6;
        }
        debug_assert_eq!(row, self.n_ineq());
        c
    }

    /// Exact Hessian of the Lagrangian `f + λᵀc_eq + μᵀc_in`.
    ///
    /// The objective part is the constant Gauss-Newton diagonal. Constraint
    /// curvature is block-sparse: each dynamics defect couples only its own
    /// `(x_k, u_k)` block, evaluated by central differences of the analytic
    /// Jacobians, and each leg-length row couples `(p_c, θ, p_i)` at one
    /// step. All remaining rows are linear.
    fn lagrangian_hessian(
        &self,
        z: &DVector<f64>,
        lambda_eq: &DVector<f64>,
        mu_in: &DVector<f64>,
    ) -> DMatrix<f64> {
        const W: usize = STATE_DIM + CONTROL_DIM;
        let lay = self.layout();
        let dt = self.schedule.dt;
        let mut h = self.cost_hessian();
        if lambda_eq.len() != self.n_eq() || mu_in.len() != self.n_ineq() {
            return h; // first iteration: no multiplier estimates yet
        }
        let fd = 1e-5;

        for k in 0..self.schedule.n_steps() {
            let sigma = SVector::<f64, STATE_DIM>::from_iterator(
                lambda_eq.rows(STATE_DIM + STATE_DIM * k, STATE_DIM).iter().copied(),
            );
            if sigma.amax() < 1e-12 {
                continue;
            }
            let xk = self.state_at(z, k).to_vector();
            let uk = self.control_at(z, k).to_vector();
            let grad_w = |xv: &SVector<f64, STATE_DIM>, uv: &SVector<f64, CONTROL_DIM>| {
                match dynamics_jacobians(
                    &SrbState::from_vector(xv),
                    &ControlInput::from_vector(uv),
                    &self.params,
                ) {
                    Ok((a, b)) => {
                        let mut g = SVector::<f64, W>::zeros();
                        g.fixed_rows_mut::<STATE_DIM>(0)
                            .copy_from(&(a.transpose() * sigma));
                        g.fixed_rows_mut::<CONTROL_DIM>(STATE_DIM)
                            .copy_from(&(b.transpose() * sigma));
                        g
                    }
                    Err(_) => SVector::zeros(),
                }
            };
            for j in 0..W {
                let (mut xp, mut up) = (xk, uk);
                let (mut xm, mut um) = (xk, uk);
                if j < STATE_DIM {
                    xp[j] += fd;
                    xm[j] -= fd;
                } else {
                    up[j - STATE_DIM] += fd;
                    um[j - STATE_DIM] -= fd;
                }
                let col = (grad_w(&xp, &up) - grad_w(&xm, &um)) / (2.0 * fd);
                for r in 0..W {
                    let gr = if r < STATE_DIM {
                        lay.sx(k) + r
                    } else {
                        lay.su(k) + r - STATE_DIM
                    };
                    let gc = if j < STATE_DIM {
                        lay.sx(k) + j
                    } else {
                        lay.su(k) + j - STATE_DIM
                    };
                    // defect rows are x_{k+1} − x_k − f·dt
                    h[(gr, gc)] -= dt * col[r];
                }
            }
        }

        for k in 0..self.schedule.n_steps() {
            let xk = self.state_at(z, k);
            for i in 0..N_FEET {
                let m = mu_in[k * N_FEET + i];
                if m.abs() < 1e-12 {
                    continue;
                }
                let hip = self.params.hip_offsets[i];
                let foot_off = lay.su(k) + 6 * i;
                let pc_off = lay.sx(k);
                let th_off = lay.sx(k) + 3;
                let foot = Vector3::new(z[foot_off], z[foot_off + 1], z[foot_off + 2]);
                // constant second derivatives in the translational variables
                for j in 0..3 {
                    h[(foot_off + j, foot_off + j)] += 2.0 * m;
                    h[(pc_off + j, pc_off + j)] += 2.0 * m;
                    h[(foot_off + j, pc_off + j)] -= 2.0 * m;
                    h[(pc_off + j, foot_off + j)] -= 2.0 * m;
                }
                let dr = rotation_euler_partials(&xk.theta);
                let d = foot - xk.p_c - rotation_from_euler(&xk.theta) * hip;
                for j in 0..3 {
                    let v = dr[j] * hip * 2.0;
                    for c in 0..3 {
                        h[(th_off + j, foot_off + c)] -= m * v[c];
                        h[(foot_off + c, th_off + j)] -= m * v[c];
                        h[(th_off + j, pc_off + c)] += m * v[c];
                        h[(pc_off + c, th_off + j)] += m * v[c];
                    }
                }
                // θθ block by central differences of the analytic θ-gradient
                let g_theta = |theta: &Vector3<f64>| {
                    let dloc = foot - xk.p_c - rotation_from_euler(theta) * hip;
                    let drloc = rotation_euler_partials(theta);
                    Vector3::new(
                        -2.0 * dloc.dot(&(drloc[0] * hip)),
                        -2.0 * dloc.dot(&(drloc[1] * hip)),
                        -2.0 * dloc.dot(&(drloc[2] * hip)),
                    )
                };
                let _ = d;
                for l in 0..3 {
                    let mut tp = xk.theta;
                    let mut tm = xk.theta;
                    tp[l] += fd;
                    tm[l] -= fd;
                    let col = (g_theta(&tp) - g_theta(&tm)) / (2.0 * fd);
                    for r in 0..3 {
                        h[(th_off + r, th_off + l)] += m * col[r];
                    }
                }
            }
        }
        h
    }

    fn ineq_jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let lay = self.layout();
        let mut jac = DMatrix::zeros(self.n_ineq(), lay.n_vars());
        let mut row = 0;
        for k in 0..self.schedule.n_steps() {
            let xk = self.state_at(z, k);
            let r = rotation_from_euler(&xk.theta);
            let dr = rotation_euler_partials(&xk.theta);
            for i in 0..N_FEET {
                let off = lay.su(k) + 6 * i;
                let foot = Vector3::new(z[off], z[off + 1], z[off + 2]);
                let hip = xk.p_c + r * self.params.hip_offsets[i];
                let d = foot - hip;
                for j in 0..3 {
                    jac[(row, off + j)] = 2.0 * d[j];
                    jac[(row, lay.sx(k) + j)] = -2.0 * d[j];
                }
                for j in 0..3 {
                    let dhip = dr[j] * self.params.hip_offsets[i];
                    jac[(row, lay.sx(k) + 3 + j)] = -2.0 * d.dot(&dhip);
                }
                row += 1;
            }
        }
        for &(i, k) in &self.friction_steps {
            let off = lay.su(k) + 6 * i + 3;
            let mu = self.params.mu[i];
            jac[(row, off)] = 1.0;
            jac[(row, off + 2)] = -mu;
            jac[(row + 1, off)] = -1.0;
            jac[(row + 1, off + 2)] = -mu;
            jac[(row + 2, off + 1)] = 1.0;
            jac[(row + 2, off + 2)] = -mu;
            jac[(row + 3, off + 1)] = -1.0;
            jac[(row + 3, off + 2)] = -mu;
            jac[(row + 4, off + 2)] = 1.0;
            jac[(row + 5, off + 2)] = -1.0;
            row += 6;
        }
        debug_assert_eq!(row, self.n_ineq());
        jac
    }
}

/// Solves the takeoff NLP. Without a warm start the reference itself seeds
/// the iteration.
pub fn solve_trajectory(
    problem: &NlpProblem,
    warm_start: Option<&OptimalPlan>,
) -> Result<OptimalPlan> {
    let z0 = match warm_start {
        Some(plan) => problem.plan_vector(plan),
        None => problem.reference_vector(),
    };
    let mut spec = NlpSpec::new(
        problem.n_vars(),
        Box::new(|z: &DVector<f64>| problem.cost(z)),
        Box::new(|z: &DVector<f64>| problem.cost_gradient(z)),
    );
    spec.eq = Box::new(|z: &DVector<f64>| {
        problem
            .eq_constraints(z)
            .expect("planner keeps pitch away from the Euler singularity")
    });
    spec.eq_jac = Box::new(|z: &DVector<f64>| {
        problem
            .eq_jacobian(z)
            .expect("planner keeps pitch away from the Euler singularity")
    });
    spec.ineq = Box::new(|z: &DVector<f64>| problem.ineq_constraints(z));
    spec.ineq_jac = Box::new(|z: &DVector<f64>| problem.ineq_jacobian(z));
    spec.hessian = HessianStrategy::Exact(Box::new(
        |z: &DVector<f64>, lam: &DVector<f64>, mu: &DVector<f64>| {
            problem.lagrangian_hessian(z, lam, mu)
        },
    ));
    spec.max_iterations = problem.options.max_iterations;
    spec.kkt_tol = problem.options.kkt_tol;
    spec.constraint_tol = problem.options.constraint_tol;

    let (z, stats) = solve_nlp(&spec, &z0)?;

    let states = (0..problem.schedule.n_t)
        .map(|k| problem.state_at(&z, k))
        .collect();
    let controls = (0..problem.schedule.n_steps())
        .map(|k| problem.control_at(&z, k))
        .collect();
    let mut plan = OptimalPlan {
        states,
        controls,
        stats: SolveStats {
            iterations: stats.iterations,
            kkt_residual: stats.kkt_residual,
            constraint_violation: stats.constraint_violation,
            merit_steps: stats.merit_steps,
        },
        report: FeasibilityReport {
            max_defect: 0.0,
            max_ground_violation: 0.0,
            max_pinning_drift: 0.0,
            max_leg_violation: 0.0,
            max_friction_violation: 0.0,
            max_swing_force: 0.0,
            pass: false,
        },
    };
    plan.report = validate_plan(&plan, problem)?;
    Ok(plan)
}

/// Re-evaluates every constraint family on a plan, independently of solver
/// bookkeeping, and reports the worst violations.
pub fn validate_plan(plan: &OptimalPlan, problem: &NlpProblem) -> Result<FeasibilityReport> {
    let dt = problem.schedule.dt;
    let tol = problem.options.constraint_tol;
    let mut report = FeasibilityReport {
        max_defect: 0.0,
        max_ground_violation: 0.0,
        max_pinning_drift: 0.0,
        max_leg_violation: 0.0,
        max_friction_violation: 0.0,
        max_swing_force: 0.0,
        pass: false,
    };
    for k in 0..problem.schedule.n_steps() {
        let xdot = dynamics(&plan.states[k], &plan.controls[k], &problem.params)?;
        let defect =
            plan.states[k + 1].to_vector() - plan.states[k].to_vector() - xdot * dt;
        report.max_defect = report.max_defect.max(defect.amax());

        let r = rotation_from_euler(&plan.states[k].theta);
        for i in 0..N_FEET {
            let foot = &plan.controls[k].feet[i];
            let hip = plan.states[k].p_c + r * problem.params.hip_offsets[i];
            let leg = (foot.p - hip).norm_squared()
                - problem.params.l_max[i] * problem.params.l_max[i];
            report.max_leg_violation = report.max_leg_violation.max(leg);

            if problem.schedule.flag(k, i) {
                let ground =
                    (problem.terrain.height_at(foot.p.x, foot.p.y) - foot.p.z).abs();
                report.max_ground_violation = report.max_ground_violation.max(ground);
                let mu = problem.params.mu[i];
                let fr = [
                    foot.f.x - mu * foot.f.z,
                    -foot.f.x - mu * foot.f.z,
                    foot.f.y - mu * foot.f.z,
                    -foot.f.y - mu * foot.f.z,
                    foot.f.z - problem.params.f_max[i],
                    -foot.f.z,
                ];
                for v in fr {
                    report.max_friction_violation = report.max_friction_violation.max(v);
                }
                if k + 1 < problem.schedule.n_steps() && problem.schedule.flag(k + 1, i) {
                    let drift = (plan.controls[k + 1].feet[i].p - foot.p).norm();
                    report.max_pinning_drift = report.max_pinning_drift.max(drift);
                }
            } else {
                report.max_swing_force = report.max_swing_force.max(foot.f.norm());
            }
        }
    }
    report.pass = report.max_defect <= tol
        && report.max_ground_violation <= tol
        && report.max_pinning_drift <= tol
        && report.max_leg_violation <= tol
        && report.max_friction_violation <= tol
        && report.max_swing_force <= tol;
    Ok(report)
}
