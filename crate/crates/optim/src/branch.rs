//! Best-first branch-and-bound over warm-started LP relaxations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use crate::error::SolverError;
use crate::model::{MixedIntegerProgram, Var};
use crate::outcome::{SolveOutcome, SolveStats, SolveStatus};
use crate::simplex::{Basis, LpSolver};
use crate::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct MilpOptions<T> {
    /// Relative gap `(incumbent - bound) / max(1, |incumbent|)` at which the
    /// search stops.
    pub gap_tol: T,
    /// Maximum number of LP relaxations solved.
    pub node_limit: usize,
    pub integrality_tol: T,
    /// Run a rounding dive from the root relaxation before branching.
    pub dive: bool,
    pub branching: Branching,
}

/// How the branching column is chosen among fractional integers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Branching {
    /// Largest distance to the nearest integer.
    #[default]
    MostFractional,
    /// Largest product of estimated down and up objective gains, learned
    /// from earlier branchings. Columns never branched on are credited the
    /// average gain.
    Pseudocost,
}

impl<T: Scalar> Default for MilpOptions<T> {
    fn default() -> Self {
        Self {
            gap_tol: T::lit(1e-6),
            node_limit: 200_000,
            integrality_tol: T::lit(1e-6),
            dive: true,
            branching: Branching::MostFractional,
        }
    }
}

type BoundChanges<T> = Vec<(usize, T, T)>;

struct Node<T> {
    bound: T,
    depth: usize,
    seq: usize,
    changes: BoundChanges<T>,
    basis: Rc<Basis>,
    branch_var: usize,
    branch_val: T,
}

impl<T: Scalar> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Node<T> {}

impl<T: Scalar> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Node<T> {
    // BinaryHeap pops the maximum: lowest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Search<'a, T> {
    program: &'a MixedIntegerProgram<T>,
    opts: MilpOptions<T>,
    solver: LpSolver<T>,
    applied: Vec<usize>,
    int_vars: Vec<usize>,
    incumbent: Option<(T, Vec<T>)>,
    history: Vec<T>,
    nodes: usize,
    iterations: usize,
    /// Per column: accumulated gain per unit change and sample count, down
    /// then up.
    pseudo: Vec<[(T, usize); 2]>,
}

fn relative_gap<T: Scalar>(incumbent: T, bound: T) -> T {
    ((incumbent - bound) / incumbent.abs().max(T::one())).max(T::zero())
}

impl<T: Scalar> Search<'_, T> {
    fn apply(&mut self, changes: &[(usize, T, T)]) {
        for &j in &self.applied {
            let v = &self.program.variables()[j];
            self.solver.set_var_bounds(Var::from_index(j), v.lower, v.upper);
        }
        self.applied.clear();
        for &(j, l, u) in changes {
            self.solver.set_var_bounds(Var::from_index(j), l, u);
            self.applied.push(j);
        }
    }

    fn relax(
        &mut self,
        changes: &[(usize, T, T)],
        basis: Option<&Basis>,
    ) -> Result<SolveOutcome<T>, SolverError> {
        self.apply(changes);
        if let Some(b) = basis {
            self.solver.set_basis(b);
        }
        self.nodes += 1;
        let out = match self.solver.solve() {
            Ok(out) => out,
            Err(SolverError::NumericalFailure(msg)) => {
                log::debug!("retrying node from slack basis after: {msg}");
                self.solver.reset_basis();
                self.solver.solve()?
            }
            Err(e) => return Err(e),
        };
        self.iterations += out.stats.iterations;
        Ok(out)
    }

    /// Most fractional integer column, lowest index on ties.
    fn most_fractional(&self, x: &[T]) -> Option<(usize, T)> {
        let mut best: Option<(usize, T)> = None;
        let mut best_dist = self.opts.integrality_tol;
        for &j in &self.int_vars {
            let f = x[j] - x[j].floor();
            let dist = f.min(T::one() - f);
            if dist > best_dist {
                best_dist = dist;
                best = Some((j, x[j]));
            }
        }
        best
    }

    fn select(&self, x: &[T]) -> Option<(usize, T)> {
        match self.opts.branching {
            Branching::MostFractional => self.most_fractional(x),
            Branching::Pseudocost => self.by_pseudocost(x),
        }
    }

    fn by_pseudocost(&self, x: &[T]) -> Option<(usize, T)> {
        let mut avg = [T::one(); 2];
        for (side, a) in avg.iter_mut().enumerate() {
            let (mut sum, mut n) = (T::zero(), 0usize);
            for &j in &self.int_vars {
                let (s, c) = self.pseudo[j][side];
                if c > 0 {
                    sum += s / T::lit(c as f64);
                    n += 1;
                }
            }
            if n > 0 {
                *a = sum / T::lit(n as f64);
            }
        }
        let floor = T::lit(1e-6);
        let mut best: Option<(usize, T)> = None;
        let mut best_score = T::neg_infinity();
        for &j in &self.int_vars {
            let f = x[j] - x[j].floor();
            if f.min(T::one() - f) <= self.opts.integrality_tol {
                continue;
            }
            let est = |side: usize| {
                let (s, c) = self.pseudo[j][side];
                if c > 0 {
                    s / T::lit(c as f64)
                } else {
                    avg[side]
                }
            };
            let score = (est(0) * f).max(floor) * (est(1) * (T::one() - f)).max(floor);
            if score > best_score {
                best_score = score;
                best = Some((j, x[j]));
            }
        }
        best
    }

    fn learn(&mut self, j: usize, side: usize, gain: T, distance: T) {
        if distance > T::zero() && gain.is_finite() {
            let e = &mut self.pseudo[j][side];
            e.0 += gain.max(T::zero()) / distance;
            e.1 += 1;
        }
    }

    /// Fractional integer column nearest to an integer, lowest index on ties.
    fn least_fractional(&self, x: &[T]) -> Option<(usize, T)> {
        let mut best: Option<(usize, T)> = None;
        let mut best_dist = T::infinity();
        for &j in &self.int_vars {
            let f = x[j] - x[j].floor();
            let dist = f.min(T::one() - f);
            if dist > self.opts.integrality_tol && dist < best_dist {
                best_dist = dist;
                best = Some((j, x[j]));
            }
        }
        best
    }

    fn prunable(&self, bound: T) -> bool {
        match &self.incumbent {
            Some((inc, _)) => relative_gap(*inc, bound) <= self.opts.gap_tol,
            None => false,
        }
    }

    fn offer(&mut self, objective: T, x: Vec<T>) {
        let better = self
            .incumbent
            .as_ref()
            .map_or(true, |(inc, _)| objective < *inc);
        if better {
            log::debug!("incumbent {objective} after {} nodes", self.nodes);
            self.history.push(objective);
            self.incumbent = Some((objective, x));
        }
    }

    fn child_changes(&self, parent: &[(usize, T, T)], j: usize, lo: T, hi: T) -> BoundChanges<T> {
        let mut changes = parent.to_vec();
        match changes.iter_mut().find(|c| c.0 == j) {
            Some(c) => {
                c.1 = c.1.max(lo);
                c.2 = c.2.min(hi);
            }
            None => {
                let v = &self.program.variables()[j];
                changes.push((j, v.lower.max(lo), v.upper.min(hi)));
            }
        }
        changes
    }

    fn dive(&mut self, root: &SolveOutcome<T>, root_basis: &Basis) -> Result<(), SolverError> {
        let mut changes: BoundChanges<T> = Vec::new();
        let mut x = root.primal.clone();
        let mut objective = root.objective;
        self.solver.set_basis(root_basis);
        for _ in 0..=2 * self.int_vars.len() {
            if self.prunable(objective) {
                return Ok(());
            }
            let Some((j, v)) = self.least_fractional(&x) else {
                self.offer(objective, x);
                return Ok(());
            };
            let near = v.round();
            let far = if near > v { v.floor() } else { v.ceil() };
            let mut moved = false;
            for target in [near, far] {
                if self.nodes >= self.opts.node_limit {
                    return Ok(());
                }
                let trial = self.child_changes(&changes, j, target, target);
                let out = self.relax(&trial, None)?;
                if out.status == SolveStatus::Optimal {
                    changes = trial;
                    x = out.primal;
                    objective = out.objective;
                    moved = true;
                    break;
                }
            }
            if !moved {
                return Ok(());
            }
        }
        Ok(())
    }

    fn outcome(&self, status: SolveStatus, gap: T) -> SolveOutcome<T> {
        let (objective, primal) = match &self.incumbent {
            Some((obj, x)) => (*obj, x.clone()),
            None => (T::infinity(), Vec::new()),
        };
        SolveOutcome {
            status,
            objective,
            primal,
            duals: Vec::new(),
            gap,
            stats: SolveStats {
                iterations: self.iterations,
                nodes: self.nodes,
                incumbent_history: self.history.clone(),
            },
        }
    }
}

/// Minimises `program` with best-first branch-and-bound.
///
/// Branches on the most fractional integer column (lowest index on ties).
/// Reaching `node_limit` with an incumbent yields `IterationLimit` together
/// with the incumbent and its gap.
pub fn solve_milp<T: Scalar>(
    program: &MixedIntegerProgram<T>,
    options: &MilpOptions<T>,
) -> Result<SolveOutcome<T>, SolverError> {
    let solver = LpSolver::new(program)?;
    let int_vars = program
        .variables()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.integer)
        .map(|(j, _)| j)
        .collect();
    let pseudo = vec![[(T::zero(), 0); 2]; program.num_vars()];
    let mut s = Search {
        program,
        opts: *options,
        solver,
        applied: Vec::new(),
        int_vars,
        incumbent: None,
        history: Vec::new(),
        nodes: 0,
        iterations: 0,
        pseudo,
    };

    let root = s.relax(&[], None)?;
    match root.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible | SolveStatus::Unbounded | SolveStatus::IterationLimit => {
            let mut out = s.outcome(root.status, T::zero());
            out.objective = root.objective;
            return Ok(out);
        }
    }
    let root_basis = Rc::new(s.solver.basis());
    let Some((var, val)) = s.select(&root.primal) else {
        s.offer(root.objective, root.primal);
        return Ok(s.outcome(SolveStatus::Optimal, T::zero()));
    };
    if options.dive {
        s.dive(&root, &root_basis)?;
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(Node {
        bound: root.objective,
        depth: 0,
        seq,
        changes: Vec::new(),
        basis: root_basis,
        branch_var: var,
        branch_val: val,
    });

    let mut open_bound = T::infinity();
    let mut hit_limit = false;
    while let Some(node) = heap.pop() {
        if s.prunable(node.bound) {
            open_bound = node.bound;
            break;
        }
        if s.nodes >= options.node_limit {
            open_bound = node.bound;
            hit_limit = true;
            break;
        }
        let j = node.branch_var;
        let sides = [
            (T::neg_infinity(), node.branch_val.floor()),
            (node.branch_val.ceil(), T::infinity()),
        ];
        for (side, (lo, hi)) in sides.into_iter().enumerate() {
            let changes = s.child_changes(&node.changes, j, lo, hi);
            let (_, l, u) = changes[changes.iter().position(|c| c.0 == j).expect("branched column")];
            if l > u {
                continue;
            }
            let out = s.relax(&changes, Some(&node.basis))?;
            match out.status {
                SolveStatus::Optimal => {}
                SolveStatus::Infeasible => continue,
                SolveStatus::Unbounded => continue,
                SolveStatus::IterationLimit => {
                    return Err(SolverError::NumericalFailure(
                        "LP iteration limit inside branch-and-bound".into(),
                    ))
                }
            }
            let frac = node.branch_val - node.branch_val.floor();
            let distance = if side == 0 { frac } else { T::one() - frac };
            s.learn(j, side, out.objective - node.bound, distance);
            let bound = out.objective.max(node.bound);
            if s.prunable(bound) {
                continue;
            }
            match s.select(&out.primal) {
                None => s.offer(out.objective, out.primal),
                Some((bv, bval)) => {
                    seq += 1;
                    heap.push(Node {
                        bound,
                        depth: node.depth + 1,
                        seq,
                        changes,
                        basis: Rc::new(s.solver.basis()),
                        branch_var: bv,
                        branch_val: bval,
                    });
                }
            }
        }
    }
    for node in heap.iter() {
        open_bound = open_bound.min(node.bound);
    }

    let Some((inc, _)) = s.incumbent.as_ref() else {
        if hit_limit {
            return Err(SolverError::NodeLimitNoIncumbent(options.node_limit));
        }
        return Ok(s.outcome(SolveStatus::Infeasible, T::zero()));
    };
    let gap = relative_gap(*inc, open_bound.min(*inc));
    let status = if hit_limit && gap > options.gap_tol {
        SolveStatus::IterationLimit
    } else {
        SolveStatus::Optimal
    };
    Ok(s.outcome(status, gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sense;

    #[test]
    fn two_binaries() {
        let mut p = MixedIntegerProgram::<f64>::new("t");
        let a = p.add_binary("a");
        let b = p.add_binary("b");
        p.set_cost(a, -3.0);
        p.set_cost(b, -2.0);
        p.add_row("c", [(a, 1.0), (b, 1.0)], Sense::Le, 1.0);
        let out = solve_milp(&p, &MilpOptions::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.objective + 3.0).abs() < 1e-9);
        assert!((out.primal[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn general_integer_branching() {
        // max x + y with 2x + 3y <= 12, x <= 4.5: LP optimum 5.5 at (4.5, 1),
        // integer optimum 5 at (4, 1) or (3, 2).
        let mut p = MixedIntegerProgram::<f64>::new("t");
        let x = p.add_integer("x", 0.0, 4.5);
        let y = p.add_integer("y", 0.0, 10.0);
        p.set_cost(x, -1.0);
        p.set_cost(y, -1.0);
        p.add_row("c", [(x, 2.0), (y, 3.0)], Sense::Le, 12.0);
        let out = solve_milp(&p, &MilpOptions::default()).unwrap();
        assert!((out.objective + 5.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_integer_program() {
        let mut p = MixedIntegerProgram::<f64>::new("t");
        let x = p.add_integer("x", 0.0, 10.0);
        p.add_row("lo", [(x, 1.0)], Sense::Ge, 2.2);
        p.add_row("hi", [(x, 1.0)], Sense::Le, 2.8);
        let out = solve_milp(&p, &MilpOptions::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
    }
}
