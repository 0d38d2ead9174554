//! Dense convex quadratic programming by a dual active-set method.
//!
//! Solves `min ½ xᵀH x + gᵀx` subject to `A_eq x = b_eq`, `A_in x ≤ b_in`,
//! and optional box bounds. The method starts from the unconstrained (or
//! equality-constrained) minimizer and adds violated inequalities one at a
//! time, taking dual steps to drop blocking constraints when needed. It
//! requires no feasible starting point and terminates in finitely many steps
//! for strictly convex problems; positive semidefinite Hessians are
//! regularized with `+1e-9·I`.
//!
//! Working-set selection is deterministic: the most violated constraint
//! enters first, ties broken by lowest row index, so identical inputs produce
//! bitwise-identical iterate sequences. A warm-start hint reorders the first
//! insertions, which is what lets a controller reuse the previous tick's
//! active set.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense QP problem data.
#[derive(Debug, Clone)]
pub struct QpSpec {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub lower: Option<DVector<f64>>,
    pub upper: Option<DVector<f64>>,
}

impl QpSpec {
    /// Unconstrained problem skeleton; fill in constraint blocks as needed.
    pub fn new(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        let n = g.len();
        Self {
            h,
            g,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
            lower: None,
            upper: None,
        }
    }

    fn check_dims(&self) -> Result<()> {
        let n = self.g.len();
        if self.h.nrows() != n || self.h.ncols() != n {
            return Err(Error::DimensionMismatch("qp hessian".into()));
        }
        if self.a_eq.ncols() != n && self.a_eq.nrows() > 0 {
            return Err(Error::DimensionMismatch("qp equality rows".into()));
        }
        if self.a_in.ncols() != n && self.a_in.nrows() > 0 {
            return Err(Error::DimensionMismatch("qp inequality rows".into()));
        }
        if self.a_eq.nrows() != self.b_eq.len() || self.a_in.nrows() != self.b_in.len() {
            return Err(Error::DimensionMismatch("qp right-hand sides".into()));
        }
        Ok(())
    }
}

/// Solution with multipliers and the final active set (inequality indices,
/// box rows appended after the explicit rows).
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub lambda_eq: DVector<f64>,
    pub mu_in: DVector<f64>,
    pub active_set: Vec<usize>,
    pub iterations: usize,
}

const FEAS_TOL: f64 = 1e-9;
const DEP_TOL: f64 = 1e-11;

pub fn solve_qp(spec: &QpSpec) -> Result<QpSolution> {
    solve_qp_warm(spec, &[])
}

/// Solve with a warm-start hint: constraints listed in `warm` are tried first
/// (in order) before the regular most-violated selection.
pub fn solve_qp_warm(spec: &QpSpec, warm: &[usize]) -> Result<QpSolution> {
    spec.check_dims()?;
    let n = spec.g.len();

    // box bounds become plain inequality rows appended after the explicit ones
    let mut rows: Vec<DVector<f64>> = (0..spec.a_in.nrows())
        .map(|i| spec.a_in.row(i).transpose())
        .collect();
    let mut rhs: Vec<f64> = spec.b_in.iter().copied().collect();
    if let Some(ub) = &spec.upper {
        for j in 0..n {
            if ub[j].is_finite() {
                let mut r = DVector::zeros(n);
                r[j] = 1.0;
                rows.push(r);
                rhs.push(ub[j]);
            }
        }
    }
    if let Some(lb) = &spec.lower {
        for j in 0..n {
            if lb[j].is_finite() {
                let mut r = DVector::zeros(n);
                r[j] = -1.0;
                rows.push(r);
                rhs.push(-lb[j]);
            }
        }
    }
    let m_in = rows.len();
    let m_eq = spec.a_eq.nrows();

    let chol = factor_hessian(&spec.h)?;

    // unconstrained minimizer, then project onto the equality manifold
    let mut x = chol.solve(&(-&spec.g));
    let mut lambda_eq = DVector::zeros(m_eq);
    // cache of H⁻¹aᵢ for every constraint we touch: equalities first, then
    // inequalities offset by m_eq
    let mut hinv_rows: Vec<Option<DVector<f64>>> = vec![None; m_eq + m_in];
    let row_of = |i: usize| -> DVector<f64> {
        if i < m_eq {
            spec.a_eq.row(i).transpose()
        } else {
            rows[i - m_eq].clone()
        }
    };

    if m_eq > 0 {
        let mut g_ee = DMatrix::zeros(m_eq, m_eq);
        let mut resid = DVector::zeros(m_eq);
        for i in 0..m_eq {
            let a_i = row_of(i);
            let hi = chol.solve(&a_i);
            resid[i] = a_i.dot(&x) - spec.b_eq[i];
            hinv_rows[i] = Some(hi);
        }
        for i in 0..m_eq {
            for j in 0..=i {
                let v = row_of(i).dot(hinv_rows[j].as_ref().unwrap());
                g_ee[(i, j)] = v;
                g_ee[(j, i)] = v;
            }
        }
        let lam = match Cholesky::new(g_ee.clone()) {
            Some(c) => c.solve(&resid),
            None => {
                // rank-deficient equality block: least-squares multipliers,
                // then verify the rows were actually consistent
                let svd = g_ee.svd(true, true);
                svd.solve(&resid, 1e-12)
                    .map_err(|e| Error::DimensionMismatch(e.to_string()))?
            }
        };
        for i in 0..m_eq {
            x -= hinv_rows[i].as_ref().unwrap() * lam[i];
        }
        lambda_eq = lam;
        for i in 0..m_eq {
            if (row_of(i).dot(&x) - spec.b_eq[i]).abs() > 1e-7 {
                return Err(Error::Infeasible);
            }
        }
    }

    if x.amax() > 1e13 {
        return Err(Error::Unbounded);
    }

    // dual active-set loop over the inequalities
    let mut active: Vec<usize> = Vec::new(); // inequality indices (0..m_in)
    let mut mu_active: Vec<f64> = Vec::new();
    let mut iterations = 0usize;
    let max_iter = 100 + 10 * (m_in + n);
    let mut warm_queue: Vec<usize> = warm.iter().rev().copied().filter(|&i| i < m_in).collect();

    loop {
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::MaxIterationsExceeded(max_iter));
        }

        // pick the next violated constraint: warm hints first, then most
        // violated with lowest-index tie-break
        let viol_of = |i: usize, x: &DVector<f64>| rows[i].dot(x) - rhs[i];
        let mut p = None;
        while let Some(cand) = warm_queue.pop() {
            if !active.contains(&cand) && viol_of(cand, &x) > FEAS_TOL {
                p = Some(cand);
                break;
            }
        }
        if p.is_none() {
            let mut best = (FEAS_TOL, usize::MAX);
            for i in 0..m_in {
                if active.contains(&i) {
                    continue;
                }
                let v = viol_of(i, &x);
                if v > best.0 {
                    best = (v, i);
                }
            }
            if best.1 != usize::MAX {
                p = Some(best.1);
            }
        }
        let Some(p) = p else { break };

        let a_p = rows[p].clone();
        let hp_idx = m_eq + p;
        if hinv_rows[hp_idx].is_none() {
            hinv_rows[hp_idx] = Some(chol.solve(&a_p));
        }
        let mut mu_p = 0.0;
        let mut violation = viol_of(p, &x);

        // inner loop: drive the violation of p to zero, dropping blockers
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::MaxIterationsExceeded(max_iter));
            }
            let act_idx: Vec<usize> = (0..m_eq)
                .chain(active.iter().map(|&i| m_eq + i))
                .collect();
            let q_p = hinv_rows[hp_idx].as_ref().unwrap().clone();

            // r = G_aa⁻¹ A_act H⁻¹ a_p ; z = H⁻¹a_p − H⁻¹A_actᵀ r
            let (z, r) = if act_idx.is_empty() {
                (q_p.clone(), DVector::zeros(0))
            } else {
                let k = act_idx.len();
                let mut g_aa = DMatrix::zeros(k, k);
                let mut w = DVector::zeros(k);
                for (ii, &gi) in act_idx.iter().enumerate() {
                    if hinv_rows[gi].is_none() {
                        hinv_rows[gi] = Some(chol.solve(&row_of(gi)));
                    }
                    w[ii] = row_of(gi).dot(&q_p);
                }
                for (ii, &gi) in act_idx.iter().enumerate() {
                    for (jj, &gj) in act_idx.iter().enumerate().take(ii + 1) {
                        let v = row_of(gi).dot(hinv_rows[gj].as_ref().unwrap());
                        g_aa[(ii, jj)] = v;
                        g_aa[(jj, ii)] = v;
                    }
                }
                let r = match Cholesky::new(g_aa.clone()) {
                    Some(c) => c.solve(&w),
                    None => g_aa
                        .svd(true, true)
                        .solve(&w, 1e-13)
                        .map_err(|e| Error::DimensionMismatch(e.to_string()))?,
                };
                let mut z = q_p.clone();
                for (ii, &gi) in act_idx.iter().enumerate() {
                    z -= hinv_rows[gi].as_ref().unwrap() * r[ii];
                }
                (z, r)
            };

            let curvature = a_p.dot(&z);

            // blocking step from dual feasibility of the active inequalities
            let mut t_block = f64::INFINITY;
            let mut blocker = None;
            for (slot, &i) in active.iter().enumerate() {
                let rj = r[m_eq + slot];
                if rj > DEP_TOL {
                    let t = mu_active[slot] / rj;
                    if t < t_block - 1e-14 {
                        t_block = t;
                        blocker = Some((slot, i));
                    }
                }
            }

            if curvature <= DEP_TOL {
                // a_p is dependent on the active rows: a pure dual step
                let Some((slot, _)) = blocker else {
                    return Err(Error::Infeasible);
                };
                let t = t_block;
                for (s, m) in mu_active.iter_mut().enumerate() {
                    *m -= t * r[m_eq + s];
                }
                for i in 0..m_eq {
                    lambda_eq[i] -= t * r[i];
                }
                mu_p += t;
                active.remove(slot);
                mu_active.remove(slot);
                continue;
            }

            let t_full = violation / curvature;
            let t = t_full.min(t_block);
            x -= &z * t;
            for (s, m) in mu_active.iter_mut().enumerate() {
                *m -= t * r[m_eq + s];
            }
            for i in 0..m_eq {
                lambda_eq[i] -= t * r[i];
            }
            mu_p += t;
            violation -= t * curvature;

            if t_full <= t_block {
                active.push(p);
                mu_active.push(mu_p);
                break;
            }
            let (slot, _) = blocker.expect("finite blocking step implies a blocker");
            active.remove(slot);
            mu_active.remove(slot);
        }
    }

    let mut mu_full = DVector::zeros(spec.a_in.nrows());
    let mut active_out = Vec::new();
    for (slot, &i) in active.iter().enumerate() {
        active_out.push(i);
        if i < spec.a_in.nrows() {
            mu_full[i] = mu_active[slot];
        }
    }
    active_out.sort_unstable();

    Ok(QpSolution {
        x,
        lambda_eq,
        mu_in: mu_full,
        active_set: active_out,
        iterations,
    })
}

fn factor_hessian(h: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(h.clone()) {
        return Ok(c);
    }
    let n = h.nrows();
    let reg = h + DMatrix::identity(n, n) * 1e-9;
    Cholesky::new(reg).ok_or(Error::Unbounded)
}
