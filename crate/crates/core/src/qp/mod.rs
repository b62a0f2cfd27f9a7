//! Dense convex QP solver for the small problems of the planner and the
//! interaction controller.
//!
//! ```text
//! minimize    ½ xᵀ H x + fᵀ x
//! subject to  A_eq x = b_eq
//!             lower ≤ A_in x ≤ upper
//! ```
//!
//! The solver runs an operator-splitting iteration (OSQP-style ADMM with
//! over-relaxation and adaptive step size) on the stacked constraints and
//! periodically tries to finish with an active-set KKT solve guessed from the
//! current iterate. A polished point is accepted only when the full KKT residual
//! is below the requested tolerance, so the returned status is always backed by
//! a check on the original problem.
//!
//! Dual convention: `H x + f + A_eqᵀ ν + A_inᵀ λ = 0` with `λᵢ ≥ 0` when the
//! upper side of row `i` is active and `λᵢ ≤ 0` when the lower side is.

mod dump;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dump::{parse_dump, write_dump};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("cost matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("inequality row {0} has lower bound above upper bound")]
    InvertedBounds(usize),
    #[error("problem data contains NaN")]
    NotANumber,
    #[error("malformed problem dump: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem; add rows with [`Self::with_equalities`] and
    /// [`Self::with_inequalities`].
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        Self {
            hessian,
            linear,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::zeros(0, n),
            lower: DVector::zeros(0),
            upper: DVector::zeros(0),
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.eq_matrix = a;
        self.eq_rhs = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.ineq_matrix = a;
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn num_eq(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.lower.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.num_vars();
        let dims = [
            ("hessian rows", self.hessian.nrows(), n),
            ("hessian cols", self.hessian.ncols(), n),
            ("equality matrix cols", self.eq_matrix.ncols(), n),
            ("equality rhs", self.eq_rhs.len(), self.eq_matrix.nrows()),
            ("inequality matrix cols", self.ineq_matrix.ncols(), n),
            ("lower bounds", self.lower.len(), self.ineq_matrix.nrows()),
            ("upper bounds", self.upper.len(), self.ineq_matrix.nrows()),
        ];
        for (what, got, expected) in dims {
            if got != expected {
                return Err(QpError::DimensionMismatch { what, expected, got });
            }
        }
        let has_nan = |v: &[f64]| v.iter().any(|x| x.is_nan());
        if has_nan(self.hessian.as_slice())
            || has_nan(self.linear.as_slice())
            || has_nan(self.eq_matrix.as_slice())
            || has_nan(self.eq_rhs.as_slice())
            || has_nan(self.ineq_matrix.as_slice())
            || has_nan(self.lower.as_slice())
            || has_nan(self.upper.as_slice())
        {
            return Err(QpError::NotANumber);
        }
        let asym = (&self.hessian - self.hessian.transpose()).amax();
        if asym > 1e-10 * (1.0 + self.hessian.amax()) {
            return Err(QpError::NotSymmetric(asym));
        }
        if let Some(i) = (0..self.num_ineq()).find(|&i| self.lower[i] > self.upper[i]) {
            return Err(QpError::InvertedBounds(i));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of the equality rows.
    pub eq_dual: DVector<f64>,
    /// Multipliers of the inequality rows.
    pub ineq_dual: DVector<f64>,
    pub status: QpStatus,
    pub kkt_residual: f64,
    /// Splitting iterations spent (active-set refinements are not counted).
    pub iterations: usize,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Componentwise KKT residuals of a primal/dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub primal: f64,
    pub stationarity: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.stationarity).max(self.complementarity)
    }
}

/// KKT residuals of `(x, ν, λ)` for `problem`, all in the ∞-norm.
pub fn kkt_residuals(problem: &QpProblem, x: &DVector<f64>, eq_dual: &DVector<f64>, ineq_dual: &DVector<f64>) -> KktResiduals {
    let grad = &problem.hessian * x + &problem.linear + problem.eq_matrix.tr_mul(eq_dual) + problem.ineq_matrix.tr_mul(ineq_dual);
    let eq_res = &problem.eq_matrix * x - &problem.eq_rhs;
    let ax = &problem.ineq_matrix * x;
    let mut primal = eq_res.amax();
    let mut comp = 0.0_f64;
    for i in 0..problem.num_ineq() {
        let (l, u, v, y) = (problem.lower[i], problem.upper[i], ax[i], ineq_dual[i]);
        primal = primal.max(l - v).max(v - u);
        let c = if y > 0.0 {
            y.min(u - v)
        } else if y < 0.0 {
            (-y).min(v - l)
        } else {
            0.0
        };
        comp = comp.max(c.abs());
    }
    KktResiduals { primal: primal.max(0.0), stationarity: grad.amax(), complementarity: comp }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial ADMM step size.
    pub rho: f64,
    /// Proximal regularization of the primal update.
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    /// Iterations between residual checks, polish attempts and step-size updates.
    pub check_interval: usize,
    /// Relative tolerance of the infeasibility certificate.
    pub infeasibility_tol: f64,
    /// Try active-set KKT solves; without it only the splitting iteration runs.
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 4000, rho: 0.1, sigma: 1e-6, alpha: 1.6, check_interval: 25, infeasibility_tol: 1e-6, polish: true }
    }
}

/// Solve with default settings except for tolerance and iteration cap.
pub fn solve_qp(problem: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution, QpError> {
    QpSolver::new(QpSettings { tol, max_iter, ..Default::default() }).solve(problem, None)
}

#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    pub settings: QpSettings,
}

/// Problem with equality and inequality rows stacked into one `l ≤ A x ≤ u` block.
struct Stacked<'a> {
    p: &'a QpProblem,
    a: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
}

impl<'a> Stacked<'a> {
    fn new(p: &'a QpProblem) -> Self {
        let (me, mi, n) = (p.num_eq(), p.num_ineq(), p.num_vars());
        let mut a = DMatrix::zeros(me + mi, n);
        a.rows_mut(0, me).copy_from(&p.eq_matrix);
        a.rows_mut(me, mi).copy_from(&p.ineq_matrix);
        let mut l = DVector::zeros(me + mi);
        let mut u = DVector::zeros(me + mi);
        l.rows_mut(0, me).copy_from(&p.eq_rhs);
        u.rows_mut(0, me).copy_from(&p.eq_rhs);
        l.rows_mut(me, mi).copy_from(&p.lower);
        u.rows_mut(me, mi).copy_from(&p.upper);
        Self { p, a, l, u }
    }

    fn m(&self) -> usize {
        self.l.len()
    }

    fn is_eq(&self, i: usize) -> bool {
        self.l[i] == self.u[i]
    }

    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |i, _| v[i].clamp(self.l[i], self.u[i]))
    }

    fn split_dual(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let me = self.p.num_eq();
        (y.rows(0, me).into_owned(), y.rows(me, self.m() - me).into_owned())
    }

    fn residual(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let (ye, yi) = self.split_dual(y);
        kkt_residuals(self.p, x, &ye, &yi).max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Active {
    Inactive,
    Lower,
    Upper,
}

impl QpSolver {
    pub fn new(settings: QpSettings) -> Self {
        Self { settings }
    }

    /// Solve `problem`, optionally warm-started from a previous solution of a
    /// problem with the same dimensions.
    pub fn solve(&self, problem: &QpProblem, warm: Option<&QpSolution>) -> Result<QpSolution, QpError> {
        problem.validate()?;
        let s = &self.settings;
        let st = Stacked::new(problem);
        let (n, m) = (problem.num_vars(), st.m());

        let warm = warm.filter(|w| w.x.len() == n && w.eq_dual.len() == problem.num_eq() && w.ineq_dual.len() == problem.num_ineq());
        let (mut x, mut y) = match warm {
            Some(w) => {
                let mut y = DVector::zeros(m);
                y.rows_mut(0, problem.num_eq()).copy_from(&w.eq_dual);
                y.rows_mut(problem.num_eq(), problem.num_ineq()).copy_from(&w.ineq_dual);
                (w.x.clone(), y)
            }
            None => (DVector::zeros(n), DVector::zeros(m)),
        };
        let mut z = st.project(&(&st.a * &x));

        // The active-set guess from the starting point often already solves
        // small problems; try it before iterating.
        if let Some(sol) = self.polish(&st, &x, &z, &y) {
            return Ok(self.finish(&st, sol.0, sol.1, QpStatus::Optimal, 0));
        }

        let mut rho = s.rho;
        let mut rho_vec = self.rho_vector(&st, rho);
        let mut factor = self.factor(&st, &rho_vec);
        let mut best = (x.clone(), y.clone(), f64::INFINITY);

        for k in 1..=s.max_iter {
            let y_prev = y.clone();
            let rhs = &x * s.sigma - &problem.linear + st.a.tr_mul(&(rho_vec.component_mul(&z) - &y));
            let x_tilde = match &factor {
                Some(f) => f.solve(&rhs),
                None => break,
            };
            let z_tilde = &st.a * &x_tilde;
            x = &x_tilde * s.alpha + &x * (1.0 - s.alpha);
            let z_relaxed = &z_tilde * s.alpha + &z * (1.0 - s.alpha);
            let z_next = st.project(&(&z_relaxed + y.component_div(&rho_vec)));
            y += rho_vec.component_mul(&(&z_relaxed - &z_next));
            z = z_next;

            if k % s.check_interval != 0 {
                continue;
            }
            if let Some(sol) = self.polish(&st, &x, &z, &y) {
                return Ok(self.finish(&st, sol.0, sol.1, QpStatus::Optimal, k));
            }
            let res = st.residual(&x, &y);
            if res <= s.tol {
                return Ok(self.finish(&st, x, y, QpStatus::Optimal, k));
            }
            if res < best.2 {
                best = (x.clone(), y.clone(), res);
            }
            if self.certifies_infeasible(&st, &(&y - &y_prev)) {
                return Ok(self.finish(&st, x, y, QpStatus::Infeasible, k));
            }

            let new_rho = self.adapt_rho(&st, &x, &z, &y, rho);
            if new_rho > 5.0 * rho || new_rho < rho / 5.0 {
                rho = new_rho;
                rho_vec = self.rho_vector(&st, rho);
                factor = self.factor(&st, &rho_vec);
            }
        }

        let status = if best.2 <= s.tol { QpStatus::Optimal } else { QpStatus::MaxIter };
        Ok(self.finish(&st, best.0, best.1, status, s.max_iter))
    }

    fn finish(&self, st: &Stacked, x: DVector<f64>, y: DVector<f64>, status: QpStatus, iterations: usize) -> QpSolution {
        let (eq_dual, ineq_dual) = st.split_dual(&y);
        let kkt_residual = kkt_residuals(st.p, &x, &eq_dual, &ineq_dual).max();
        QpSolution { x, eq_dual, ineq_dual, status, kkt_residual, iterations }
    }

    fn rho_vector(&self, st: &Stacked, rho: f64) -> DVector<f64> {
        DVector::from_fn(st.m(), |i, _| {
            if st.is_eq(i) {
                rho * 1e3
            } else if st.l[i] == f64::NEG_INFINITY && st.u[i] == f64::INFINITY {
                1e-6
            } else {
                rho
            }
        })
    }

    fn factor(&self, st: &Stacked, rho_vec: &DVector<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
        let n = st.p.num_vars();
        let mut k = &st.p.hessian + DMatrix::identity(n, n) * self.settings.sigma;
        let weighted = DMatrix::from_fn(st.m(), n, |i, j| st.a[(i, j)] * rho_vec[i]);
        k += st.a.tr_mul(&weighted);
        Cholesky::new(k)
    }

    fn adapt_rho(&self, st: &Stacked, x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>, rho: f64) -> f64 {
        let ax = &st.a * x;
        let px = &st.p.hessian * x;
        let aty = st.a.tr_mul(y);
        let prim = (&ax - z).amax() / ax.amax().max(z.amax()).max(1e-12);
        let dual = (&px + &st.p.linear + &aty).amax() / px.amax().max(aty.amax()).max(st.p.linear.amax()).max(1e-12);
        if prim == 0.0 || dual == 0.0 {
            return rho;
        }
        (rho * (prim / dual).sqrt()).clamp(1e-6, 1e6)
    }

    fn certifies_infeasible(&self, st: &Stacked, dy: &DVector<f64>) -> bool {
        let norm = dy.amax();
        if norm < 1e-12 {
            return false;
        }
        let eps = self.settings.infeasibility_tol * norm;
        if st.a.tr_mul(dy).amax() > eps {
            return false;
        }
        let mut support = 0.0;
        for i in 0..st.m() {
            let d = dy[i];
            if d > 0.0 {
                if st.u[i] == f64::INFINITY {
                    return false;
                }
                support += st.u[i] * d;
            } else if d < 0.0 {
                if st.l[i] == f64::NEG_INFINITY {
                    return false;
                }
                support += st.l[i] * d;
            }
        }
        support < -eps
    }

    /// Guess the active set from `(z, y)`, solve the equality-constrained KKT
    /// system on it, and fix up the set a few times. Returns the primal/dual
    /// pair when it meets the tolerance.
    fn polish(&self, st: &Stacked, _x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        if !self.settings.polish {
            return None;
        }
        let m = st.m();
        let mut active: Vec<Active> = (0..m)
            .map(|i| {
                if st.is_eq(i) {
                    Active::Upper
                } else if st.l[i] > f64::NEG_INFINITY && z[i] - st.l[i] < -y[i] {
                    Active::Lower
                } else if st.u[i] < f64::INFINITY && st.u[i] - z[i] < y[i] {
                    Active::Upper
                } else {
                    Active::Inactive
                }
            })
            .collect();

        let passes = 2 * m + 5;
        for _ in 0..passes {
            let (x, y) = self.solve_active(st, &active)?;
            if st.residual(&x, &y) <= self.settings.tol {
                return Some((x, y));
            }
            // primal-dual active-set update: release rows whose multiplier has the
            // wrong sign, add rows that are violated
            let ax = &st.a * &x;
            let tol = self.settings.tol;
            let mut changed = false;
            for i in 0..m {
                if st.is_eq(i) {
                    continue;
                }
                let next = match active[i] {
                    Active::Lower if y[i] > tol => Active::Inactive,
                    Active::Upper if y[i] < -tol => Active::Inactive,
                    Active::Inactive if ax[i] < st.l[i] - tol => Active::Lower,
                    Active::Inactive if ax[i] > st.u[i] + tol => Active::Upper,
                    other => other,
                };
                if next != active[i] {
                    active[i] = next;
                    changed = true;
                }
            }
            if !changed {
                return None;
            }
        }
        None
    }

    fn solve_active(&self, st: &Stacked, active: &[Active]) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = st.p.num_vars();
        let rows: Vec<usize> = (0..st.m()).filter(|&i| active[i] != Active::Inactive).collect();
        let k = rows.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&st.p.hessian);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&st.p.linear));
        for (r, &i) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = st.a[(i, j)];
                kkt[(j, n + r)] = st.a[(i, j)];
            }
            rhs[n + r] = if active[i] == Active::Lower { st.l[i] } else { st.u[i] };
        }

        // Regularized factorization with iterative refinement against the exact
        // system handles singular Hessians and dependent active rows.
        let delta = 1e-10 * (1.0 + kkt.amax());
        let mut reg = kkt.clone();
        for i in 0..n {
            reg[(i, i)] += delta;
        }
        for i in n..n + k {
            reg[(i, i)] -= delta;
        }
        let lu = reg.lu();
        let mut sol = lu.solve(&rhs)?;
        for _ in 0..8 {
            let r = &rhs - &kkt * &sol;
            if r.amax() <= 1e-15 * (1.0 + rhs.amax()) {
                break;
            }
            sol += lu.solve(&r)?;
        }
        if !sol.iter().all(|v| v.is_finite()) {
            return None;
        }

        let x = sol.rows(0, n).into_owned();
        let mut y = DVector::zeros(st.m());
        for (r, &i) in rows.iter().enumerate() {
            y[i] = sol[n + r];
        }
        Some((x, y))
    }
}
