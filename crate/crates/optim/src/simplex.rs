//! Bounded-variable revised primal simplex.
//!
//! Every row gets a logical `r_i` with `A x - r = 0` and `r_i` bounded by the
//! row limits, so the slack basis is always available as a starting point.
//! Phase 1 and phase 2 are merged: while any basic variable violates its bounds
//! the costs are the gradient of the summed infeasibility, which makes warm
//! starts from arbitrary (primal-infeasible) bases work without special cases.

use crate::error::SolverError;
use crate::lu::{BasisFactor, BasisMatrix, LuFactors};
use crate::model::{MixedIntegerProgram, Var};
use crate::outcome::{SolveOutcome, SolveStats, SolveStatus};
use crate::Scalar;

const REFACTOR_EVERY: usize = 64;
const DEGENERATE_BEFORE_BLAND: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic without finite bounds; keeps its current value.
    Free,
}

/// Status of every column followed by every row logical.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    status: Vec<VarStatus>,
}

impl Basis {
    pub fn statuses(&self) -> &[VarStatus] {
        &self.status
    }
}

/// Tolerances, widened to the precision of the scalar type when needed.
#[derive(Clone, Copy, Debug)]
pub struct Tolerances<T> {
    pub feasibility: T,
    pub optimality: T,
    pub pivot: T,
}

impl<T: Scalar> Default for Tolerances<T> {
    fn default() -> Self {
        let eps = T::epsilon();
        Self {
            feasibility: T::lit(1e-7).max(eps * T::lit(64.0)),
            optimality: T::lit(1e-7).max(eps * T::lit(64.0)),
            pivot: T::lit(1e-9).max(eps * T::lit(8.0)),
        }
    }
}

/// Reusable LP solver holding a basis between calls, so that re-solving
/// after bound changes starts from the previous vertex.
pub struct LpSolver<T> {
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
    cost: Vec<T>,
    orig_cost: Vec<T>,
    cost_scale: T,
    offset: T,
    status: Vec<VarStatus>,
    head: Vec<usize>,
    x: Vec<T>,
    factor: Option<BasisFactor<T>>,
    tol: Tolerances<T>,
    iteration_limit: usize,
}

impl<T: Scalar> LpSolver<T> {
    /// Integrality marks on `program` are ignored.
    pub fn new(program: &MixedIntegerProgram<T>) -> Result<Self, SolverError> {
        program.validate()?;
        let n = program.num_vars();
        let m = program.num_rows();
        let mut counts = vec![0usize; n + 1];
        for row in program.rows() {
            for &(v, _) in &row.coeffs {
                counts[v.index() + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_start = counts.clone();
        let nnz = col_start[n];
        let mut col_row = vec![0usize; nnz];
        let mut col_val = vec![T::zero(); nnz];
        let mut fill = counts;
        for (i, row) in program.rows().iter().enumerate() {
            for &(v, a) in &row.coeffs {
                let j = v.index();
                col_row[fill[j]] = i;
                col_val[fill[j]] = a;
                fill[j] += 1;
            }
        }
        let mut lower = Vec::with_capacity(n + m);
        let mut upper = Vec::with_capacity(n + m);
        for v in program.variables() {
            lower.push(v.lower);
            upper.push(v.upper);
        }
        for row in program.rows() {
            let (lo, hi) = row.activity_bounds();
            lower.push(lo);
            upper.push(hi);
        }
        let orig_cost = program.objective().to_vec();
        let mut cost_scale = orig_cost.iter().fold(T::zero(), |a, &c| a.max(c.abs()));
        if cost_scale == T::zero() {
            cost_scale = T::one();
        }
        let cost = orig_cost.iter().map(|&c| c / cost_scale).collect();
        let mut s = Self {
            n,
            m,
            col_start,
            col_row,
            col_val,
            lower,
            upper,
            cost,
            orig_cost,
            cost_scale,
            offset: program.offset(),
            status: vec![VarStatus::Basic; n + m],
            head: Vec::new(),
            x: vec![T::zero(); n + m],
            factor: None,
            tol: Tolerances::default(),
            iteration_limit: 10_000 + 20 * (n + m),
        };
        s.reset_basis();
        Ok(s)
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn set_iteration_limit(&mut self, limit: usize) {
        self.iteration_limit = limit;
    }

    pub fn tolerances(&self) -> Tolerances<T> {
        self.tol
    }

    pub fn var_bounds(&self, var: Var) -> (T, T) {
        (self.lower[var.index()], self.upper[var.index()])
    }

    /// Changes the bounds of a column; the current basis is kept.
    pub fn set_var_bounds(&mut self, var: Var, lower: T, upper: T) {
        let k = var.index();
        self.lower[k] = lower;
        self.upper[k] = upper;
        if self.status[k] != VarStatus::Basic {
            self.place_nonbasic(k, self.status[k]);
        }
    }

    pub fn basis(&self) -> Basis {
        Basis {
            status: self.status.clone(),
        }
    }

    /// Installs a basis from an earlier solve. A basis of the wrong shape is
    /// replaced by the slack basis.
    pub fn set_basis(&mut self, basis: &Basis) {
        let nb = basis
            .status
            .iter()
            .filter(|&&s| s == VarStatus::Basic)
            .count();
        if basis.status.len() != self.n + self.m || nb != self.m {
            self.reset_basis();
            return;
        }
        self.head.clear();
        for k in 0..self.n + self.m {
            let s = basis.status[k];
            if s == VarStatus::Basic {
                self.status[k] = s;
                self.head.push(k);
            } else {
                if s == VarStatus::Free {
                    self.x[k] = T::zero();
                }
                self.place_nonbasic(k, s);
            }
        }
        self.factor = None;
    }

    pub fn reset_basis(&mut self) {
        for k in 0..self.n {
            self.x[k] = T::zero();
            self.place_nonbasic(k, VarStatus::AtLower);
        }
        for k in self.n..self.n + self.m {
            self.status[k] = VarStatus::Basic;
        }
        self.head = (self.n..self.n + self.m).collect();
        self.factor = None;
    }

    /// Puts nonbasic `k` at the bound named by `want`, falling back to the
    /// other bound or to a free nonbasic when that bound is infinite.
    fn place_nonbasic(&mut self, k: usize, want: VarStatus) {
        let (l, u) = (self.lower[k], self.upper[k]);
        let status = match want {
            VarStatus::AtUpper if u.is_finite() => VarStatus::AtUpper,
            _ if l.is_finite() => VarStatus::AtLower,
            _ if u.is_finite() => VarStatus::AtUpper,
            _ => VarStatus::Free,
        };
        self.status[k] = status;
        match status {
            VarStatus::AtLower => self.x[k] = l,
            VarStatus::AtUpper => self.x[k] = u,
            _ => {
                if !self.x[k].is_finite() {
                    self.x[k] = T::zero();
                }
            }
        }
    }

    #[inline]
    fn cost_of(&self, k: usize) -> T {
        if k < self.n {
            self.cost[k]
        } else {
            T::zero()
        }
    }

    #[inline]
    fn dot_col(&self, k: usize, v: &[T]) -> T {
        if k < self.n {
            let mut s = T::zero();
            for p in self.col_start[k]..self.col_start[k + 1] {
                s += self.col_val[p] * v[self.col_row[p]];
            }
            s
        } else {
            -v[k - self.n]
        }
    }

    fn scatter_col(&self, k: usize, out: &mut [T]) {
        if k < self.n {
            for p in self.col_start[k]..self.col_start[k + 1] {
                out[self.col_row[p]] += self.col_val[p];
            }
        } else {
            out[k - self.n] -= T::one();
        }
    }

    fn refactor(&mut self) -> Result<(), SolverError> {
        let minus_one = [-T::one()];
        for _ in 0..8 {
            let mut bm = BasisMatrix::with_capacity(self.m, self.m * 4);
            for &k in &self.head {
                if k < self.n {
                    let (a, b) = (self.col_start[k], self.col_start[k + 1]);
                    bm.push_col(&self.col_row[a..b], &self.col_val[a..b]);
                } else {
                    bm.push_col(&[k - self.n], &minus_one);
                }
            }
            match LuFactors::factorize(&bm) {
                Ok(lu) => {
                    self.factor = Some(BasisFactor::new(lu));
                    return Ok(());
                }
                Err(singular) => {
                    log::debug!(
                        "repairing singular basis: {} dependent columns",
                        singular.positions.len()
                    );
                    for (&pos, &row) in singular.positions.iter().zip(&singular.rows) {
                        let k = self.head[pos];
                        self.place_nonbasic(k, VarStatus::AtLower);
                        let logical = self.n + row;
                        self.head[pos] = logical;
                        self.status[logical] = VarStatus::Basic;
                    }
                }
            }
        }
        Err(SolverError::NumericalFailure(
            "basis could not be repaired".into(),
        ))
    }

    /// Recomputes basic values from the nonbasic ones.
    fn compute_primal(&mut self) {
        let mut rhs = vec![T::zero(); self.m];
        for k in 0..self.n + self.m {
            if self.status[k] == VarStatus::Basic {
                continue;
            }
            let v = self.x[k];
            if v == T::zero() {
                continue;
            }
            if k < self.n {
                for p in self.col_start[k]..self.col_start[k + 1] {
                    rhs[self.col_row[p]] -= self.col_val[p] * v;
                }
            } else {
                rhs[k - self.n] += v;
            }
        }
        let factor = self.factor.as_mut().expect("factorised basis");
        factor.ftran(&mut rhs);
        for (p, &k) in self.head.iter().enumerate() {
            self.x[k] = rhs[p];
        }
    }

    /// Bounds used by the ratio test. In phase 1 an infeasible basic variable
    /// may travel only up to the bound it violates.
    #[inline]
    fn ratio_bounds(&self, k: usize, phase1: bool) -> (T, T) {
        let (l, u) = (self.lower[k], self.upper[k]);
        let v = self.x[k];
        if phase1 {
            if v < l - self.tol.feasibility {
                return (T::neg_infinity(), l);
            }
            if v > u + self.tol.feasibility {
                return (u, T::infinity());
            }
        }
        (l, u)
    }

    pub fn solve(&mut self) -> Result<SolveOutcome<T>, SolverError> {
        let m = self.m;
        let feas = self.tol.feasibility;
        let dtol = self.tol.optimality;
        let harris = feas * T::lit(0.5);
        let tiny_step = T::lit(1e-12);

        if (0..self.n).any(|k| self.lower[k] > self.upper[k]) {
            return Ok(self.outcome(SolveStatus::Infeasible, 0, None));
        }
        for k in 0..self.n + self.m {
            if self.status[k] != VarStatus::Basic {
                self.place_nonbasic(k, self.status[k]);
            }
        }
        if self.head.len() != m {
            self.reset_basis();
        }
        self.refactor()?;
        self.compute_primal();

        let mut cb = vec![T::zero(); m];
        let mut alpha = vec![T::zero(); m];
        let mut iterations = 0usize;
        let mut degenerate = 0usize;
        let mut bland = false;
        let mut fresh = true;

        loop {
            if self.factor.as_ref().map_or(0, |f| f.num_updates()) >= REFACTOR_EVERY {
                self.refactor()?;
                self.compute_primal();
                fresh = true;
            }

            let mut phase1 = false;
            for p in 0..m {
                let k = self.head[p];
                let v = self.x[k];
                cb[p] = if v < self.lower[k] - feas {
                    phase1 = true;
                    -T::one()
                } else if v > self.upper[k] + feas {
                    phase1 = true;
                    T::one()
                } else {
                    T::zero()
                };
            }
            if !phase1 {
                for p in 0..m {
                    cb[p] = self.cost_of(self.head[p]);
                }
            }
            let pi = &mut cb;
            self.factor.as_mut().expect("factorised basis").btran(pi);

            let mut entering: Option<(usize, bool)> = None;
            let mut best = T::zero();
            for k in 0..self.n + self.m {
                let st = self.status[k];
                if st == VarStatus::Basic || self.lower[k] == self.upper[k] {
                    continue;
                }
                let ck = if phase1 { T::zero() } else { self.cost_of(k) };
                let d = ck - self.dot_col(k, pi);
                let increase = match st {
                    VarStatus::AtLower if d < -dtol => true,
                    VarStatus::AtUpper if d > dtol => false,
                    VarStatus::Free if d < -dtol => true,
                    VarStatus::Free if d > dtol => false,
                    _ => continue,
                };
                if bland {
                    entering = Some((k, increase));
                    break;
                }
                if d.abs() > best {
                    best = d.abs();
                    entering = Some((k, increase));
                }
            }

            let Some((q, increase)) = entering else {
                if !fresh {
                    self.refactor()?;
                    self.compute_primal();
                    fresh = true;
                    continue;
                }
                if phase1 {
                    return Ok(self.outcome(SolveStatus::Infeasible, iterations, None));
                }
                let duals: Vec<T> = pi.iter().map(|&v| v * self.cost_scale).collect();
                return self.finish(iterations, duals);
            };

            if iterations >= self.iteration_limit {
                return Ok(self.outcome(SolveStatus::IterationLimit, iterations, None));
            }
            iterations += 1;

            alpha.iter_mut().for_each(|a| *a = T::zero());
            self.scatter_col(q, &mut alpha);
            self.factor.as_mut().expect("factorised basis").ftran(&mut alpha);
            let dir = if increase { T::one() } else { -T::one() };

            // Harris pass 1: largest step keeping every basic variable within
            // its bounds widened by the tolerance.
            let mut theta_max = T::infinity();
            if !bland {
                for p in 0..m {
                    let a = alpha[p];
                    if a.abs() <= self.tol.pivot {
                        continue;
                    }
                    let delta = -dir * a;
                    let k = self.head[p];
                    let (lb, ub) = self.ratio_bounds(k, phase1);
                    let r = if delta < T::zero() {
                        (self.x[k] - lb + harris) / -delta
                    } else {
                        (ub - self.x[k] + harris) / delta
                    };
                    if r < theta_max {
                        theta_max = r;
                    }
                }
            }
            // Pass 2: among steps within theta_max pick the largest pivot.
            let mut leave: Option<(usize, T, T)> = None;
            let mut leave_score = T::zero();
            for p in 0..m {
                let a = alpha[p];
                if a.abs() <= self.tol.pivot {
                    continue;
                }
                let delta = -dir * a;
                let k = self.head[p];
                let (lb, ub) = self.ratio_bounds(k, phase1);
                let (bound, dist) = if delta < T::zero() {
                    (lb, self.x[k] - lb)
                } else {
                    (ub, ub - self.x[k])
                };
                if !bound.is_finite() {
                    continue;
                }
                let r = (dist / delta.abs()).max(T::zero());
                if bland {
                    let better = match leave {
                        None => true,
                        Some((lp, lr, _)) => {
                            r < lr - tiny_step || (r <= lr + tiny_step && k < self.head[lp])
                        }
                    };
                    if better {
                        leave = Some((p, r, bound));
                    }
                } else if r <= theta_max && a.abs() > leave_score {
                    leave_score = a.abs();
                    leave = Some((p, r, bound));
                }
            }

            let range = self.upper[q] - self.lower[q];
            let flip = range.is_finite() && leave.map_or(true, |(_, r, _)| range <= r);
            if !flip && leave.is_none() {
                if !fresh {
                    self.refactor()?;
                    self.compute_primal();
                    fresh = true;
                    continue;
                }
                if phase1 {
                    return Err(SolverError::NumericalFailure(
                        "unbounded direction while minimising infeasibility".into(),
                    ));
                }
                return Ok(self.outcome(SolveStatus::Unbounded, iterations, None));
            }

            let theta = if flip {
                range
            } else {
                leave.map(|(_, r, _)| r).unwrap_or(T::zero())
            };
            if theta != T::zero() {
                for p in 0..m {
                    let a = alpha[p];
                    if a != T::zero() {
                        let k = self.head[p];
                        self.x[k] -= dir * theta * a;
                    }
                }
            }
            if flip {
                let to = if increase {
                    VarStatus::AtUpper
                } else {
                    VarStatus::AtLower
                };
                self.place_nonbasic(q, to);
            } else {
                let (p, _, bound) = leave.expect("leaving row");
                self.x[q] += dir * theta;
                let k = self.head[p];
                self.x[k] = bound;
                self.status[k] = if bound == self.lower[k] {
                    VarStatus::AtLower
                } else {
                    VarStatus::AtUpper
                };
                self.head[p] = q;
                self.status[q] = VarStatus::Basic;
                self.factor
                    .as_mut()
                    .expect("factorised basis")
                    .update(p, &alpha);
            }
            fresh = false;

            if theta <= tiny_step {
                degenerate += 1;
                if degenerate > DEGENERATE_BEFORE_BLAND {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
        }
    }

    fn structural_values(&self) -> Vec<T> {
        self.x[..self.n].to_vec()
    }

    fn objective_at(&self, x: &[T]) -> T {
        self.orig_cost
            .iter()
            .zip(x)
            .map(|(&c, &v)| c * v)
            .sum::<T>()
            + self.offset
    }

    fn outcome(&self, status: SolveStatus, iterations: usize, duals: Option<Vec<T>>) -> SolveOutcome<T> {
        let (objective, primal) = match status {
            SolveStatus::Optimal | SolveStatus::IterationLimit => {
                let x = self.structural_values();
                (self.objective_at(&x), x)
            }
            SolveStatus::Infeasible => (T::infinity(), Vec::new()),
            SolveStatus::Unbounded => (T::neg_infinity(), Vec::new()),
        };
        SolveOutcome {
            status,
            objective,
            primal,
            duals: duals.unwrap_or_default(),
            gap: T::zero(),
            stats: SolveStats {
                iterations,
                nodes: 0,
                incumbent_history: Vec::new(),
            },
        }
    }

    fn finish(&self, iterations: usize, duals: Vec<T>) -> Result<SolveOutcome<T>, SolverError> {
        let x = self.structural_values();
        let viol = self.primal_residual(&x);
        if viol > self.tol.feasibility * T::lit(10.0) {
            return Err(SolverError::NumericalFailure(format!(
                "primal residual {viol:e} at reported optimum"
            )));
        }
        Ok(self.outcome(SolveStatus::Optimal, iterations, Some(duals)))
    }

    /// Largest bound or row violation, relative to `max(1, |limit|)`.
    fn primal_residual(&self, x: &[T]) -> T {
        let mut act = vec![T::zero(); self.m];
        for j in 0..self.n {
            for p in self.col_start[j]..self.col_start[j + 1] {
                act[self.col_row[p]] += self.col_val[p] * x[j];
            }
        }
        let mut worst = T::zero();
        let rel = |v: T, lim: T| v / lim.abs().max(T::one());
        for k in 0..self.n + self.m {
            let v = if k < self.n { x[k] } else { act[k - self.n] };
            let (l, u) = (self.lower[k], self.upper[k]);
            if v < l {
                worst = worst.max(rel(l - v, l));
            }
            if v > u {
                worst = worst.max(rel(v - u, u));
            }
        }
        worst
    }
}

/// Solves the LP relaxation of `program` from the slack basis.
pub fn solve_lp<T: Scalar>(program: &MixedIntegerProgram<T>) -> Result<SolveOutcome<T>, SolverError> {
    let mut solver = LpSolver::new(program)?;
    let out = solver.solve()?;
    if out.status == SolveStatus::Optimal {
        let gap = duality_gap(program, &out.primal, &out.duals);
        let limit = T::lit(1e-6).max(T::epsilon() * T::lit(1e3)) * (T::one() + out.objective.abs());
        if gap > limit {
            return Err(SolverError::NumericalFailure(format!(
                "duality gap {gap:e} exceeds {limit:e}"
            )));
        }
    }
    Ok(out)
}

/// `|primal - dual|` objective difference for row duals `y`. Reduced costs are
/// recomputed from `y`; each term is evaluated at the bound its sign selects,
/// or at the primal value when that bound is infinite.
pub fn duality_gap<T: Scalar>(program: &MixedIntegerProgram<T>, x: &[T], y: &[T]) -> T {
    let mut d = program.objective().to_vec();
    let mut dual = program.offset();
    for (i, row) in program.rows().iter().enumerate() {
        for &(v, a) in &row.coeffs {
            d[v.index()] -= a * y[i];
        }
        let (lo, hi) = row.activity_bounds();
        dual += bound_term(y[i], lo, hi, row.activity(x));
    }
    for (j, v) in program.variables().iter().enumerate() {
        dual += bound_term(d[j], v.lower, v.upper, x[j]);
    }
    (program.objective_value(x) - dual).abs()
}

fn bound_term<T: Scalar>(w: T, lo: T, hi: T, at: T) -> T {
    if w > T::zero() {
        w * if lo.is_finite() { lo } else { at }
    } else if w < T::zero() {
        w * if hi.is_finite() { hi } else { at }
    } else {
        T::zero()
    }
}
