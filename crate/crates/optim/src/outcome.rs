#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// A node or iteration limit stopped the search. For MILPs the outcome
    /// carries the best incumbent and its gap.
    IterationLimit,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStats<T> {
    pub iterations: usize,
    pub nodes: usize,
    /// Objective of every accepted incumbent, in the order found.
    pub incumbent_history: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutcome<T> {
    pub status: SolveStatus,
    /// Includes the program offset. Infinite when no solution is available.
    pub objective: T,
    /// One value per column; empty when no solution is available.
    pub primal: Vec<T>,
    /// Row duals of an LP solve; empty for MILPs.
    pub duals: Vec<T>,
    /// Relative gap `(incumbent - bound) / max(1, |incumbent|)`; zero for LPs.
    pub gap: T,
    pub stats: SolveStats<T>,
}

impl<T: Copy> SolveOutcome<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}
