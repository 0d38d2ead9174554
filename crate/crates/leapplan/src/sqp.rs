//! Sequential quadratic programming for dense constrained nonlinear programs.
//!
//! Each iteration linearizes the constraints, solves a convex QP subproblem
//! ([`crate::qp`]) for the step and multipliers, and globalizes with a
//! backtracking line search on an ℓ1 merit function. The Hessian is either a
//! caller-supplied constant (Gauss-Newton for quadratic tracking costs, where
//! it is exact) or a damped BFGS approximation.
//!
//! When a subproblem's linearized constraints are inconsistent, the step is
//! recomputed in an elastic relaxation with one shared slack; if even the
//! relaxation cannot reduce the current violation the problem is reported
//! infeasible.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::qp::{solve_qp_warm, QpSolution, QpSpec};

type ScalarFn<'a> = Box<dyn Fn(&DVector<f64>) -> f64 + 'a>;
type VectorFn<'a> = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + 'a>;
type MatrixFn<'a> = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + 'a>;

/// How the SQP subproblem Hessian is obtained.
pub enum HessianStrategy<'a> {
    /// Fixed positive-definite matrix, exact for quadratic objectives.
    Constant(DMatrix<f64>),
    /// Damped BFGS approximation of the Lagrangian Hessian.
    Bfgs,
    /// Damped BFGS seeded with the Gauss-Newton matrix of the objective, so
    /// the updates only have to learn the constraint curvature.
    GaussNewtonBfgs(DMatrix<f64>),
    /// Exact Lagrangian Hessian `(x, λ_eq, μ_in) ↦ ∇²L`, convexified here by
    /// an escalating diagonal shift when indefinite.
    Exact(HessianFn<'a>),
}

pub type HessianFn<'a> =
    Box<dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + 'a>;

/// Problem description: evaluators for the objective, constraints
/// (`eq(x) = 0`, `ineq(x) ≤ 0`), and their Jacobians.
pub struct NlpSpec<'a> {
    pub n: usize,
    pub objective: ScalarFn<'a>,
    pub gradient: VectorFn<'a>,
    pub eq: VectorFn<'a>,
    pub eq_jac: MatrixFn<'a>,
    pub ineq: VectorFn<'a>,
    pub ineq_jac: MatrixFn<'a>,
    pub hessian: HessianStrategy<'a>,
    pub max_iterations: usize,
    pub kkt_tol: f64,
    pub constraint_tol: f64,
}

impl<'a> NlpSpec<'a> {
    /// Unconstrained skeleton with the default tolerances; callers fill in
    /// the constraint evaluators they have.
    pub fn new(n: usize, objective: ScalarFn<'a>, gradient: VectorFn<'a>) -> Self {
        Self {
            n,
            objective,
            gradient,
            eq: Box::new(|_| DVector::zeros(0)),
            eq_jac: Box::new(move |x| DMatrix::zeros(0, x.len())),
            ineq: Box::new(|_| DVector::zeros(0)),
            ineq_jac: Box::new(move |x| DMatrix::zeros(0, x.len())),
            hessian: HessianStrategy::Bfgs,
            max_iterations: 200,
            kkt_tol: 1e-4,
            constraint_tol: 1e-6,
        }
    }
}

/// Per-solve statistics. Each entry of `merit_steps` is the merit value
/// before and after one accepted step, under that iteration's penalty
/// weight; the post value never exceeds the pre value.
#[derive(Debug, Clone)]
pub struct SqpStats {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub merit_steps: Vec<(f64, f64)>,
    pub elastic_steps: usize,
}

fn violation_l1(ce: &DVector<f64>, ci: &DVector<f64>) -> f64 {
    ce.iter().map(|v| v.abs()).sum::<f64>() + ci.iter().map(|v| v.max(0.0)).sum::<f64>()
}

fn violation_inf(ce: &DVector<f64>, ci: &DVector<f64>) -> f64 {
    let e = ce.amax();
    let i = ci.iter().fold(0.0f64, |m, &v| m.max(v));
    if ce.is_empty() {
        i
    } else {
        e.max(i)
    }
}

pub fn solve_nlp(spec: &NlpSpec, x0: &DVector<f64>) -> Result<(DVector<f64>, SqpStats)> {
    if x0.len() != spec.n {
        return Err(Error::DimensionMismatch(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            spec.n
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::DimensionMismatch("x0 must be finite".into()));
    }

    let mut x = x0.clone();
    let mut bfgs = match &spec.hessian {
        HessianStrategy::GaussNewtonBfgs(h) => h.clone(),
        _ => DMatrix::<f64>::identity(spec.n, spec.n),
    };
    let mut lambda_prev = DVector::<f64>::zeros(0);
    let mut mu_prev = DVector::<f64>::zeros(0);
    let mut nu: f64 = 1.0; // merit penalty weight
    let mut merit_steps = Vec::new();
    let mut warm: Vec<usize> = Vec::new();
    let mut elastic_steps = 0usize;
    let mut grad = (spec.gradient)(&x);
    // Levenberg damping on the subproblem Hessian. The Gauss-Newton Hessian
    // carries no constraint curvature, so undamped steps can be far outside
    // the region where the linearization predicts anything; the damping is
    // adapted like a trust-region radius from line-search outcomes.
    let mut damping: f64 = 0.0;

    for it in 1..=spec.max_iterations {
        let f = (spec.objective)(&x);
        let ce = (spec.eq)(&x);
        let ci = (spec.ineq)(&x);
        let je = (spec.eq_jac)(&x);
        let ji = (spec.ineq_jac)(&x);

        if lambda_prev.len() != je.nrows() {
            lambda_prev = DVector::zeros(je.nrows());
        }
        if mu_prev.len() != ji.nrows() {
            mu_prev = DVector::zeros(ji.nrows());
        }
        let hess = match &spec.hessian {
            HessianStrategy::Constant(h) => h.clone(),
            HessianStrategy::Bfgs | HessianStrategy::GaussNewtonBfgs(_) => bfgs.clone(),
            HessianStrategy::Exact(f) => convexify(f(&x, &lambda_prev, &mu_prev)),
        };

        let mut accepted = None;
        'damping: loop {
            // QP subproblem: min ½dᵀ(H + λI)d + ∇fᵀd, Je d = −ce, Ji d ≤ −ci
            let mut h_sub = hess.clone();
            for i in 0..spec.n {
                h_sub[(i, i)] += damping;
            }
            let mut qp = QpSpec::new(h_sub.clone(), grad.clone());
            qp.a_eq = je.clone();
            qp.b_eq = -&ce;
            qp.a_in = ji.clone();
            qp.b_in = -&ci;
            let sub = match solve_qp_warm(&qp, &warm) {
                Ok(s) => s,
                Err(Error::Infeasible) => {
                    elastic_steps += 1;
                    let (s, slack) = solve_elastic(&h_sub, &grad, &je, &ce, &ji, &ci)?;
                    let current = ci.iter().fold(0.0f64, |m, &v| m.max(v));
                    if slack >= current - 1e-9 {
                        // even the relaxed linear model cannot reduce the violation
                        return Err(Error::Infeasible);
                    }
                    s
                }
                Err(e) => return Err(e),
            };
            warm = sub.active_set.clone();
            let d = sub.x.rows(0, spec.n).clone_owned();

            // KKT residual at the current point with the subproblem multipliers
            let mut stat = grad.clone();
            if je.nrows() > 0 {
                stat += je.transpose() * &sub.lambda_eq;
            }
            if ji.nrows() > 0 {
                let mu = sub.mu_in.rows(0, ji.nrows()).clone_owned();
                stat += ji.transpose() * mu;
            }
            let kkt_residual = stat.amax();
            let viol = violation_inf(&ce, &ci);
            if kkt_residual <= spec.kkt_tol && viol <= spec.constraint_tol {
                return Ok((
                    x,
                    SqpStats {
                        iterations: it,
                        kkt_residual,
                        constraint_violation: viol,
                        merit_steps,
                        elastic_steps,
                    },
                ));
            }

            // penalty weight must dominate the multipliers for the merit to
            // measure stationarity of the same problem
            let mult_norm = sub
                .lambda_eq
                .iter()
                .chain(sub.mu_in.iter())
                .fold(0.0f64, |m, &v| m.max(v.abs()));
            nu = nu.max(2.0 * mult_norm + 1e-6);

            let merit0 = f + nu * violation_l1(&ce, &ci);
            let descent = grad.dot(&d) - nu * violation_l1(&ce, &ci);
            let armijo = |t: f64, merit: f64| merit <= merit0 + 1e-4 * t * descent.min(0.0);
            let merit_at = |cand: &DVector<f64>| {
                (spec.objective)(cand)
                    + nu * violation_l1(&(spec.eq)(cand), &(spec.ineq)(cand))
            };

            // full step, then a second-order correction against the Maratos
            // effect, then plain backtracking
            let full = &x + &d;
            let merit_full = merit_at(&full);
            if merit_full.is_finite() && armijo(1.0, merit_full) {
                merit_steps.push((merit0, merit_full));
                accepted = Some((full, 1.0, sub));
                break 'damping;
            }
            if je.nrows() > 0 {
                // min-norm correction cancelling the equality residual left
                // by the full step: dc = −Jeᵀ(JeJeᵀ)⁻¹ ce(x+d)
                let ce_full = (spec.eq)(&full);
                let jjt = &je * je.transpose();
                if let Some(chol) = nalgebra::Cholesky::new(jjt) {
                    let corrected = &full - je.transpose() * chol.solve(&ce_full);
                    let merit_soc = merit_at(&corrected);
                    if merit_soc.is_finite() && armijo(1.0, merit_soc) {
                        log::trace!("sqp it {it}: second-order correction accepted");
                        merit_steps.push((merit0, merit_soc));
                        accepted = Some((corrected, 1.0, sub));
                        break 'damping;
                    }
                }
            }
            let mut t = 0.5;
            while t >= 1e-12 {
                let cand = &x + &d * t;
                let merit = merit_at(&cand);
                if merit.is_finite() && armijo(t, merit) {
                    merit_steps.push((merit0, merit));
                    accepted = Some((cand, t, sub));
                    break 'damping;
                }
                t *= 0.5;
            }
            // no acceptable step at this damping level: shrink the model
            damping = if damping < 1e-8 { 1e-4 } else { damping * 50.0 };
            if damping > 1e12 {
                return Err(Error::LineSearchFailure);
            }
        }
        let (x_next, t_acc, sub) = accepted.expect("loop exits via break or return");
        lambda_prev = sub.lambda_eq.clone();
        mu_prev = sub.mu_in.clone();
        log::debug!(
            "sqp it {it}: step {t_acc:.1e} damp {damping:.1e} merit {:.6e} -> {:.6e} nu {nu:.1e}",
            merit_steps.last().unwrap().0,
            merit_steps.last().unwrap().1,
        );
        if t_acc >= 0.5 {
            damping = if damping <= 1e-8 { 0.0 } else { damping / 3.0 };
        } else if t_acc <= 1.0 / 16.0 {
            damping = (damping * 8.0).max(1e-4).min(1e12);
        }

        if matches!(
            spec.hessian,
            HessianStrategy::Bfgs | HessianStrategy::GaussNewtonBfgs(_)
        ) {
            let grad_next = (spec.gradient)(&x_next);
            let je_next = (spec.eq_jac)(&x_next);
            let ji_next = (spec.ineq_jac)(&x_next);
            let mut dl_next = grad_next.clone();
            let mut dl_here = grad.clone();
            if je.nrows() > 0 {
                dl_next += je_next.transpose() * &sub.lambda_eq;
                dl_here += je.transpose() * &sub.lambda_eq;
            }
            if ji.nrows() > 0 {
                let mu = sub.mu_in.rows(0, ji.nrows()).clone_owned();
                dl_next += ji_next.transpose() * &mu;
                dl_here += ji.transpose() * &mu;
            }
            let s = &x_next - &x;
            let y = dl_next - dl_here;
            damped_bfgs_update(&mut bfgs, &s, &y);
            grad = grad_next;
        } else {
            grad = (spec.gradient)(&x_next);
        }
        x = x_next;
    }

    Err(Error::MaxIterationsExceeded(spec.max_iterations))
}

/// Elastic subproblem: one shared nonnegative slack on the inequalities with
/// a heavy linear penalty. Returns the relaxed step and the slack used.
fn solve_elastic(
    hess: &DMatrix<f64>,
    grad: &DVector<f64>,
    je: &DMatrix<f64>,
    ce: &DVector<f64>,
    ji: &DMatrix<f64>,
    ci: &DVector<f64>,
) -> Result<(QpSolution, f64)> {
    let n = grad.len();
    let mi = ji.nrows();
    let me = je.nrows();
    let mut h = DMatrix::zeros(n + 1, n + 1);
    h.view_mut((0, 0), (n, n)).copy_from(hess);
    h[(n, n)] = 1.0;
    let mut g = DVector::zeros(n + 1);
    g.rows_mut(0, n).copy_from(grad);
    g[n] = 1e8;
    let mut a_eq = DMatrix::zeros(me, n + 1);
    a_eq.view_mut((0, 0), (me, n)).copy_from(je);
    let mut a_in = DMatrix::zeros(mi, n + 1);
    a_in.view_mut((0, 0), (mi, n)).copy_from(ji);
    for r in 0..mi {
        a_in[(r, n)] = -1.0;
    }
    let mut spec = QpSpec::new(h, g);
    spec.a_eq = a_eq;
    spec.b_eq = -ce;
    spec.a_in = a_in;
    spec.b_in = -ci;
    let mut lower = DVector::from_element(n + 1, f64::NEG_INFINITY);
    lower[n] = 0.0;
    spec.lower = Some(lower);
    let sol = solve_qp_warm(&spec, &[])?;
    let slack = sol.x[n];
    Ok((sol, slack))
}

/// Makes an exact Lagrangian Hessian usable in a convex QP: symmetrize, then
/// add an escalating diagonal shift until the Cholesky factorization goes
/// through (inertia correction).
fn convexify(mut h: DMatrix<f64>) -> DMatrix<f64> {
    let n = h.nrows();
    h = (&h + h.transpose()) * 0.5;
    let mut shift = 0.0;
    loop {
        let mut trial = h.clone();
        for i in 0..n {
            trial[(i, i)] += shift;
        }
        if nalgebra::Cholesky::new(trial.clone()).is_some() {
            return trial;
        }
        shift = if shift == 0.0 { 1e-6 } else { shift * 10.0 };
        if shift > 1e8 {
            // pathological input: fall back to a heavily damped identity mix
            for i in 0..n {
                h[(i, i)] += 1e8;
            }
            return h;
        }
    }
}

fn damped_bfgs_update(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if sbs <= 1e-14 {
        return;
    }
    let sy = s.dot(y);
    // Powell damping keeps the update positive definite
    let y_used = if sy >= 0.2 * sbs {
        y.clone()
    } else {
        let theta = 0.8 * sbs / (sbs - sy);
        y * theta + &bs * (1.0 - theta)
    };
    let sy_used = s.dot(&y_used);
    if sy_used <= 1e-14 {
        return;
    }
    *b -= &bs * bs.transpose() / sbs;
    *b += &y_used * y_used.transpose() / sy_used;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_with_linear_constraints_converges_in_one_iteration() {
        // min (x−2)² + (y+1)² s.t. x + y = 0 — SQP is exact on QPs
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let mut spec = NlpSpec::new(
            2,
            Box::new(|x: &DVector<f64>| (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2)),
            Box::new(|x: &DVector<f64>| {
                DVector::from_row_slice(&[2.0 * (x[0] - 2.0), 2.0 * (x[1] + 1.0)])
            }),
        );
        spec.eq = Box::new(|x: &DVector<f64>| DVector::from_row_slice(&[x[0] + x[1]]));
        spec.eq_jac = Box::new(|_| DMatrix::from_row_slice(1, 2, &[1.0, 1.0]));
        spec.hessian = HessianStrategy::Constant(h);
        let x0 = DVector::from_row_slice(&[1.0, 1.0]);
        // oracle: direct KKT solve of the same QP
        let (x, stats) = solve_nlp(&spec, &x0).unwrap();
        assert!(stats.iterations <= 2, "iterations {}", stats.iterations);
        assert_abs_diff_eq!(x[0], 1.5, epsilon = 1e-8);
        assert_abs_diff_eq!(x[1], -1.5, epsilon = 1e-8);
    }

    fn rosenbrock(x: &DVector<f64>) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn rosenbrock_in_unit_disk_matches_grid_search() {
        let mut spec = NlpSpec::new(
            2,
            Box::new(rosenbrock),
            Box::new(|x: &DVector<f64>| {
                DVector::from_row_slice(&[
                    -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                    200.0 * (x[1] - x[0] * x[0]),
                ])
            }),
        );
        spec.ineq =
            Box::new(|x: &DVector<f64>| DVector::from_row_slice(&[x[0] * x[0] + x[1] * x[1] - 1.0]));
        spec.ineq_jac =
            Box::new(|x: &DVector<f64>| DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]]));
        spec.max_iterations = 300;
        let (x, stats) = solve_nlp(&spec, &DVector::zeros(2)).unwrap();

        // dense grid-search oracle at 1e−3 resolution over the feasible disk
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let steps = 2001;
        for i in 0..steps {
            let gx = -1.0 + 2.0 * i as f64 / (steps - 1) as f64;
            for j in 0..steps {
                let gy = -1.0 + 2.0 * j as f64 / (steps - 1) as f64;
                if gx * gx + gy * gy > 1.0 {
                    continue;
                }
                let v = (1.0 - gx).powi(2) + 100.0 * (gy - gx * gx).powi(2);
                if v < best.0 {
                    best = (v, gx, gy);
                }
            }
        }
        assert!(
            (x[0] - best.1).abs() < 2e-3 && (x[1] - best.2).abs() < 2e-3,
            "sqp ({}, {}) vs grid ({}, {})",
            x[0],
            x[1],
            best.1,
            best.2
        );
        assert!(stats.constraint_violation <= 1e-6);
    }

    #[test]
    fn infeasible_linear_constraints_surface() {
        let mut spec = NlpSpec::new(
            1,
            Box::new(|x: &DVector<f64>| x[0] * x[0]),
            Box::new(|x: &DVector<f64>| DVector::from_row_slice(&[2.0 * x[0]])),
        );
        // x ≤ −1 and x ≥ 1
        spec.ineq =
            Box::new(|x: &DVector<f64>| DVector::from_row_slice(&[x[0] + 1.0, 1.0 - x[0]]));
        spec.ineq_jac = Box::new(|_| DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));
        assert!(matches!(
            solve_nlp(&spec, &DVector::zeros(1)),
            Err(Error::Infeasible)
        ));
    }

    #[test]
    fn merit_non_increasing_over_accepted_steps() {
        let mut spec = NlpSpec::new(
            2,
            Box::new(rosenbrock),
            Box::new(|x: &DVector<f64>| {
                DVector::from_row_slice(&[
                    -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                    200.0 * (x[1] - x[0] * x[0]),
                ])
            }),
        );
        spec.max_iterations = 500;
        spec.kkt_tol = 1e-6;
        let (_, stats) = solve_nlp(&spec, &DVector::from_row_slice(&[-1.2, 1.0])).unwrap();
        assert!(!stats.merit_steps.is_empty());
        for (before, after) in &stats.merit_steps {
            assert!(after <= before, "merit increased: {before} -> {after}");
        }
    }
}
