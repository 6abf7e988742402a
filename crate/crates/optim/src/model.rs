//! Problem representation shared by the LP and MILP solvers.

use std::collections::HashSet;

use crate::error::ProgramError;
use crate::Scalar;

/// Handle to a column of a [`MixedIntegerProgram`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn from_index(index: usize) -> Self {
        Var(index)
    }
}

/// Handle to a row of a [`MixedIntegerProgram`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub(crate) usize);

impl RowId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable<T> {
    pub name: String,
    pub lower: T,
    pub upper: T,
    pub integer: bool,
}

/// A linear row `coeffs · x (sense) rhs`, optionally turned into a two-sided
/// row by an MPS-style `range`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint<T> {
    pub name: String,
    pub coeffs: Vec<(Var, T)>,
    pub sense: Sense,
    pub rhs: T,
    pub range: Option<T>,
}

impl<T: Scalar> Constraint<T> {
    /// Lower and upper limits on the row activity.
    pub fn activity_bounds(&self) -> (T, T) {
        let inf = T::infinity();
        match (self.sense, self.range) {
            (Sense::Le, None) => (-inf, self.rhs),
            (Sense::Ge, None) => (self.rhs, inf),
            (Sense::Eq, None) => (self.rhs, self.rhs),
            (Sense::Le, Some(r)) => (self.rhs - r.abs(), self.rhs),
            (Sense::Ge, Some(r)) => (self.rhs, self.rhs + r.abs()),
            (Sense::Eq, Some(r)) if r >= T::zero() => (self.rhs, self.rhs + r),
            (Sense::Eq, Some(r)) => (self.rhs + r, self.rhs),
        }
    }

    pub fn activity(&self, x: &[T]) -> T {
        self.coeffs.iter().map(|&(v, a)| a * x[v.0]).sum()
    }
}

/// Minimisation program with bounded, optionally integer, columns.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedIntegerProgram<T> {
    name: String,
    vars: Vec<Variable<T>>,
    rows: Vec<Constraint<T>>,
    objective: Vec<T>,
    offset: T,
}

impl<T: Scalar> MixedIntegerProgram<T> {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            vars: Vec::new(),
            rows: Vec::new(),
            objective: Vec::new(),
            offset: T::zero(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: T, upper: T) -> Var {
        self.push_var(name.into(), lower, upper, false)
    }

    pub fn add_integer(&mut self, name: impl Into<String>, lower: T, upper: T) -> Var {
        self.push_var(name.into(), lower, upper, true)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Var {
        self.push_var(name.into(), T::zero(), T::one(), true)
    }

    fn push_var(&mut self, name: String, lower: T, upper: T, integer: bool) -> Var {
        self.vars.push(Variable {
            name,
            lower,
            upper,
            integer,
        });
        self.objective.push(T::zero());
        Var(self.vars.len() - 1)
    }

    pub fn set_cost(&mut self, var: Var, cost: T) {
        self.objective[var.0] = cost;
    }

    pub fn add_cost(&mut self, var: Var, cost: T) {
        self.objective[var.0] += cost;
    }

    pub fn set_offset(&mut self, offset: T) {
        self.offset = offset;
    }

    pub fn offset(&self) -> T {
        self.offset
    }

    pub fn set_bounds(&mut self, var: Var, lower: T, upper: T) {
        self.vars[var.0].lower = lower;
        self.vars[var.0].upper = upper;
    }

    pub fn set_integer(&mut self, var: Var, integer: bool) {
        self.vars[var.0].integer = integer;
    }

    /// Adds a row; repeated columns in `coeffs` are summed and exact zeros dropped.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coeffs: impl IntoIterator<Item = (Var, T)>,
        sense: Sense,
        rhs: T,
    ) -> RowId {
        let coeffs = merge_coeffs(coeffs);
        self.rows.push(Constraint {
            name: name.into(),
            coeffs,
            sense,
            rhs,
            range: None,
        });
        RowId(self.rows.len() - 1)
    }

    /// Adds `lower <= coeffs · x <= upper` as a single ranged row.
    pub fn add_ranged_row(
        &mut self,
        name: impl Into<String>,
        coeffs: impl IntoIterator<Item = (Var, T)>,
        lower: T,
        upper: T,
    ) -> RowId {
        let coeffs = merge_coeffs(coeffs);
        let (sense, rhs, range) = if lower == upper {
            (Sense::Eq, lower, None)
        } else if lower.is_infinite() {
            (Sense::Le, upper, None)
        } else if upper.is_infinite() {
            (Sense::Ge, lower, None)
        } else {
            (Sense::Le, upper, Some(upper - lower))
        };
        self.rows.push(Constraint {
            name: name.into(),
            coeffs,
            sense,
            rhs,
            range,
        });
        RowId(self.rows.len() - 1)
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_integers(&self) -> usize {
        self.vars.iter().filter(|v| v.integer).count()
    }

    pub fn variables(&self) -> &[Variable<T>] {
        &self.vars
    }

    pub fn variable(&self, var: Var) -> &Variable<T> {
        &self.vars[var.0]
    }

    pub fn rows(&self) -> &[Constraint<T>] {
        &self.rows
    }

    pub fn objective(&self) -> &[T] {
        &self.objective
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective
            .iter()
            .zip(x)
            .map(|(&c, &v)| c * v)
            .sum::<T>()
            + self.offset
    }

    /// Largest violation of any row or column bound at `x`.
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for (v, &xv) in self.vars.iter().zip(x) {
            worst = worst.max(v.lower - xv).max(xv - v.upper);
        }
        for row in &self.rows {
            let (lo, hi) = row.activity_bounds();
            let a = row.activity(x);
            worst = worst.max(lo - a).max(a - hi);
        }
        worst
    }

    /// Copy of the program with every integrality mark removed.
    pub fn relaxed(&self) -> Self {
        let mut p = self.clone();
        for v in &mut p.vars {
            v.integer = false;
        }
        p
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        let mut names = HashSet::with_capacity(self.vars.len());
        for (j, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(ProgramError::InvalidBounds {
                    name: v.name.clone(),
                    lower: v.lower.to_f64_lossy(),
                    upper: v.upper.to_f64_lossy(),
                });
            }
            if v.lower == T::infinity() || v.upper == T::neg_infinity() {
                return Err(ProgramError::InvalidBounds {
                    name: v.name.clone(),
                    lower: v.lower.to_f64_lossy(),
                    upper: v.upper.to_f64_lossy(),
                });
            }
            if !self.objective[j].is_finite() {
                return Err(ProgramError::NonFinite {
                    context: format!("objective coefficient of {}", v.name),
                });
            }
            if !names.insert(v.name.as_str()) {
                return Err(ProgramError::DuplicateName(v.name.clone()));
            }
        }
        let mut row_names = HashSet::with_capacity(self.rows.len());
        for row in &self.rows {
            if !row_names.insert(row.name.as_str()) {
                return Err(ProgramError::DuplicateName(row.name.clone()));
            }
            if !row.rhs.is_finite() || row.range.is_some_and(|r| !r.is_finite()) {
                return Err(ProgramError::NonFinite {
                    context: format!("right-hand side of {}", row.name),
                });
            }
            for &(v, a) in &row.coeffs {
                if v.0 >= self.vars.len() {
                    return Err(ProgramError::UnknownVariable {
                        row: row.name.clone(),
                        index: v.0,
                    });
                }
                if !a.is_finite() {
                    return Err(ProgramError::NonFinite {
                        context: format!("coefficient of {} in {}", self.vars[v.0].name, row.name),
                    });
                }
            }
        }
        if !self.offset.is_finite() {
            return Err(ProgramError::NonFinite {
                context: "objective offset".into(),
            });
        }
        Ok(())
    }
}

fn merge_coeffs<T: Scalar>(coeffs: impl IntoIterator<Item = (Var, T)>) -> Vec<(Var, T)> {
    let mut v: Vec<(Var, T)> = coeffs.into_iter().collect();
    v.sort_by_key(|&(var, _)| var);
    let mut out: Vec<(Var, T)> = Vec::with_capacity(v.len());
    for (var, a) in v {
        match out.last_mut() {
            Some(last) if last.0 == var => last.1 += a,
            _ => out.push((var, a)),
        }
    }
    out.retain(|&(_, a)| a != T::zero());
    out
}
