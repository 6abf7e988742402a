//! The plan / check / tighten loop.

use std::time::Instant;

use log::{info, warn};
use mgplan_optim::{solve_milp, Branching, MilpOptions, SolveStatus};
use serde::{Deserialize, Serialize};

use crate::error::{FrequencyError, PlannerError, RunError};
use crate::freq::fleet_units;
use crate::guard::{corrective_deviation, tighten_bounds, Binding, CorrectiveDeviation, SecureLimit, Sensitivity};
use crate::instance::PlanningInstance;
use crate::planner::{build_master, extract_solution, ExchangeBounds, InvestmentPlan, MasterConfig, MasterSolution};
use crate::scenario::cluster_days;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// 1: no islanding constraints; 2: static islanding only; 3: static and
    /// transient.
    pub case: u8,
    pub alpha: f64,
    /// Convergence tolerance on corrective deviations, kW.
    pub eps_kw: f64,
    pub max_iterations: usize,
    pub gap_tol: f64,
    pub node_limit: usize,
    pub polygon_sides: usize,
    pub block_hours: usize,
    pub island_hours: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: 3,
            alpha: 0.6,
            eps_kw: 1.0,
            max_iterations: 15,
            gap_tol: 1e-6,
            node_limit: 200_000,
            polygon_sides: 12,
            block_hours: 1,
            island_hours: 1.0,
            seed: 2016,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: &str| Err(RunError::Config(m.into()));
        if !(1..=3).contains(&self.case) {
            return bad("case must be 1, 2 or 3");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.eps_kw > 0.0) {
            return bad("eps must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.gap_tol >= 0.0) {
            return bad("gap_tol must be non-negative");
        }
        if !(self.island_hours > 0.0) {
            return bad("island_hours must be positive");
        }
        Ok(())
    }

    fn master_config(&self) -> MasterConfig {
        MasterConfig {
            include_island: case_switches(self).island_blocks,
            polygon_sides: self.polygon_sides,
            block_hours: self.block_hours,
            island_hours: self.island_hours,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseSwitches {
    pub island_blocks: bool,
    pub transient_check: bool,
}

pub fn case_switches(config: &RunConfig) -> CaseSwitches {
    CaseSwitches {
        island_blocks: config.case >= 2,
        transient_check: config.case == 3,
    }
}

/// Islanding metrics for one time block; frequencies in Hz (Hz/s), powers
/// in kW. Deviations are signed: an import loss gives negative values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourMetrics {
    pub day: usize,
    /// First hour of the block.
    pub hour: usize,
    pub rocof: f64,
    pub nadir: f64,
    pub ss: f64,
    pub dp_b: f64,
    pub dp_s: f64,
    pub binding: Binding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub plan: InvestmentPlan,
    pub objective: f64,
    /// Sum of corrective deviations over all blocks, kW.
    pub import_deviation: f64,
    pub export_deviation: f64,
    pub max_deviation: f64,
    /// Largest disturbance the committed fleet can ride through, kW.
    pub secure_limit: f64,
    pub metrics: Vec<HourMetrics>,
    /// `|gamma - max recomputed island penalty|`.
    pub gamma_residual: f64,
    /// Exchange caps used by this iteration's master, kW.
    pub bounds: Vec<(f64, f64)>,
    pub nodes: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    IterationLimit,
    /// Tightened bounds made the master infeasible at this iteration; the
    /// result is the last feasible one.
    Infeasible(usize),
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub solution: MasterSolution,
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
}

impl RunResult {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("at least one iteration")
    }
}

/// Per-p.u. sensitivities of the committed fleet. A fleet with no frequency
/// response tolerates no disturbance at all.
fn fleet_sensitivity(instance_pu: &PlanningInstance, commitment: &[bool]) -> Result<Sensitivity<f64>, FrequencyError> {
    let units = fleet_units::<f64>(instance_pu, commitment)?;
    let f0 = instance_pu.grid.f0;
    match Sensitivity::for_units(&units, instance_pu.limits.load_damping, f0) {
        Err(FrequencyError::NoFrequencyResponse) => Ok(Sensitivity {
            rocof: f64::INFINITY,
            nadir: f64::INFINITY,
            ss: f64::INFINITY,
        }),
        other => other,
    }
}

struct Check {
    deviations: Vec<CorrectiveDeviation<f64>>,
    metrics: Vec<HourMetrics>,
    limit: SecureLimit<f64>,
}

fn transient_check(instance_pu: &PlanningInstance, sol: &MasterSolution, block_hours: usize) -> Result<Check, RunError> {
    let s = fleet_sensitivity(instance_pu, &sol.plan.generators)?;
    let limit = SecureLimit::new(&s, &instance_pu.limits);
    let base = instance_pu.grid.s_base;
    let blocks = crate::instance::HOURS / block_hours;
    let scale = |k: f64, dp: f64| if dp == 0.0 { 0.0 } else { -k * dp };
    let mut deviations = Vec::with_capacity(sol.schedules.len());
    let mut metrics = Vec::with_capacity(sol.schedules.len());
    for (slot, sch) in sol.schedules.iter().enumerate() {
        let dev = corrective_deviation(sch.p_import, sch.p_export, &limit);
        let dp = sch.p_import - sch.p_export;
        metrics.push(HourMetrics {
            day: slot / blocks,
            hour: (slot % blocks) * block_hours,
            rocof: scale(s.rocof, dp),
            nadir: scale(s.nadir, dp),
            ss: scale(s.ss, dp),
            dp_b: dev.dp_b * base,
            dp_s: dev.dp_s * base,
            binding: dev.binding,
        });
        deviations.push(dev);
    }
    Ok(Check {
        deviations,
        metrics,
        limit,
    })
}

/// Runs the case selected by `config` on a physical-unit instance.
pub fn run_three_stage(instance: &PlanningInstance, config: &RunConfig) -> Result<RunResult, RunError> {
    config.validate()?;
    let report = instance.validate();
    if !report.is_ok() {
        return Err(PlannerError::Instance(crate::error::InstanceError::Invalid(report)).into());
    }
    let pu = instance.to_per_unit().map_err(PlannerError::from)?;
    let switches = case_switches(config);
    let master_cfg = config.master_config();
    let calendar = crate::planner::Calendar::new(pu.days.len(), config.block_hours)?;
    let base = pu.grid.s_base;
    let eps = config.eps_kw / base;
    let options = MilpOptions {
        gap_tol: config.gap_tol,
        node_limit: config.node_limit,
        branching: Branching::Pseudocost,
        ..MilpOptions::default()
    };

    let mut bounds = ExchangeBounds::from_instance(&pu, &calendar).pairs();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut last: Option<MasterSolution> = None;
    let mut status = RunStatus::IterationLimit;
    for iteration in 1..=config.max_iterations {
        let start = Instant::now();
        let master = build_master(&pu, &ExchangeBounds::from_pairs(&bounds), &master_cfg)?;
        let outcome = solve_milp(&master.program, &options).map_err(PlannerError::from)?;
        if outcome.status == SolveStatus::Infeasible {
            if let Some(solution) = last {
                warn!("master infeasible at iteration {iteration}; keeping iteration {}", iteration - 1);
                return Ok(RunResult {
                    solution,
                    records,
                    status: RunStatus::Infeasible(iteration),
                });
            }
            return Err(RunError::MasterInfeasible(iteration));
        }
        let sol = extract_solution(&outcome, &master, &pu)?;
        let worst = sol.island_penalties.iter().copied().fold(0.0, f64::max);
        let gamma_residual = (sol.gamma - worst).abs();
        if gamma_residual > 1e-6 * (1.0 + worst) {
            warn!("iteration {iteration}: gamma {} differs from worst island penalty {worst}", sol.gamma);
        }

        let (deviations, metrics, secure_limit) = if switches.transient_check {
            let c = transient_check(&pu, &sol, config.block_hours)?;
            (c.deviations, c.metrics, c.limit.p_max * base)
        } else {
            (Vec::new(), Vec::new(), f64::INFINITY)
        };
        let import_deviation = deviations.iter().fold(0.0, |a, d| a + d.dp_b) * base;
        let export_deviation = deviations.iter().fold(0.0, |a, d| a + d.dp_s) * base;
        let max_dev = deviations.iter().map(|d| d.max()).fold(0.0, f64::max);
        info!(
            "iteration {iteration}: total {:.2}, deviations {import_deviation:.1} / {export_deviation:.1} kW",
            sol.plan.costs.total
        );
        records.push(IterationRecord {
            iteration,
            plan: sol.plan.clone(),
            objective: sol.objective,
            import_deviation,
            export_deviation,
            max_deviation: max_dev * base,
            secure_limit,
            metrics,
            gamma_residual,
            bounds: bounds.iter().map(|&(b, s)| (b * base, s * base)).collect(),
            nodes: outcome.stats.nodes,
            seconds: start.elapsed().as_secs_f64(),
        });

        if !switches.transient_check || max_dev <= eps {
            last = Some(sol);
            status = RunStatus::Converged;
            break;
        }
        let scheduled: Vec<(f64, f64)> = sol.schedules.iter().map(|s| (s.p_import, s.p_export)).collect();
        bounds = tighten_bounds(&scheduled, &deviations, config.alpha, eps, &bounds);
        last = Some(sol);
    }
    Ok(RunResult {
        solution: last.expect("at least one iteration"),
        records,
        status,
    })
}

/// Re-solves the operation of a fixed investment and runs the frequency
/// check on its schedule. `generators` and `lines` name the candidates to
/// build; every other candidate stays out.
pub fn check_plan(
    instance: &PlanningInstance,
    config: &RunConfig,
    generators: &[String],
    lines: &[(u32, u32)],
) -> Result<(MasterSolution, Vec<HourMetrics>), RunError> {
    config.validate()?;
    let pu = instance.to_per_unit().map_err(PlannerError::from)?;
    for id in generators {
        if !pu.generators.iter().any(|g| &g.id == id && !g.existing) {
            return Err(RunError::Config(format!("{id} is not a candidate generator")));
        }
    }
    for &(a, b) in lines {
        if !pu.lines.iter().any(|l| l.candidate && (l.from, l.to) == (a, b)) {
            return Err(RunError::Config(format!("line {a}-{b} is not a candidate")));
        }
    }
    let calendar = crate::planner::Calendar::new(pu.days.len(), config.block_hours)?;
    let mut master = build_master(&pu, &ExchangeBounds::from_instance(&pu, &calendar), &config.master_config())?;
    for (g, z) in pu.generators.iter().zip(&master.map.gen_build) {
        if let Some(z) = *z {
            let v = if generators.contains(&g.id) { 1.0 } else { 0.0 };
            master.program.set_bounds(z, v, v);
        }
    }
    for (l, z) in pu.lines.iter().zip(&master.map.line_build) {
        if let Some(z) = *z {
            let v = if lines.contains(&(l.from, l.to)) { 1.0 } else { 0.0 };
            master.program.set_bounds(z, v, v);
        }
    }
    let options = MilpOptions {
        gap_tol: config.gap_tol,
        node_limit: config.node_limit,
        branching: Branching::Pseudocost,
        ..MilpOptions::default()
    };
    let outcome = solve_milp(&master.program, &options).map_err(PlannerError::from)?;
    if outcome.status == SolveStatus::Infeasible {
        return Err(RunError::MasterInfeasible(1));
    }
    let sol = extract_solution(&outcome, &master, &pu)?;
    let check = transient_check(&pu, &sol, config.block_hours)?;
    Ok((sol, check.metrics))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// Re-cluster `year` (daily vectors) into each `k`.
    RepresentativeDays { year: Vec<Vec<f64>>, ks: Vec<usize> },
    /// Run with flexible loads enabled or pinned to their nominal demand.
    FlexibleLoads(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: String,
    pub costs: crate::planner::CostBreakdown,
    pub iterations: usize,
    pub converged: bool,
    /// Clustering SSE in normalized space, for the day axis.
    pub sse: Option<f64>,
    pub seconds: f64,
}

pub fn sensitivity_sweep(instance: &PlanningInstance, config: &RunConfig, axis: &SweepAxis) -> Result<Vec<SweepRow>, RunError> {
    let mut variants: Vec<(String, PlanningInstance, Option<f64>)> = Vec::new();
    match axis {
        SweepAxis::RepresentativeDays { year, ks } => {
            if ks.is_empty() {
                return Err(RunError::Config("no values to sweep".into()));
            }
            for &k in ks {
                let c = cluster_days(year, k, config.seed)?;
                let mut inst = instance.clone();
                inst.days = c.days;
                variants.push((format!("k={k}"), inst, Some(c.normalized_sse)));
            }
        }
        SweepAxis::FlexibleLoads(flags) => {
            if flags.is_empty() {
                return Err(RunError::Config("no values to sweep".into()));
            }
            for &on in flags {
                let mut inst = instance.clone();
                if !on {
                    for l in &mut inst.loads {
                        l.flex_min = 1.0;
                        l.flex_max = 1.0;
                    }
                }
                variants.push((format!("flexible={on}"), inst, None));
            }
        }
    }
    let mut rows = Vec::with_capacity(variants.len());
    for (label, inst, sse) in variants {
        let start = Instant::now();
        let run = run_three_stage(&inst, config)?;
        rows.push(SweepRow {
            label,
            costs: run.solution.plan.costs,
            iterations: run.records.len(),
            converged: run.converged(),
            sse,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn switches_per_case() {
        let mut c = RunConfig::default();
        let expect = [(1, false, false), (2, true, false), (3, true, true)];
        for (case, island, transient) in expect {
            c.case = case;
            assert_eq!(
                case_switches(&c),
                CaseSwitches {
                    island_blocks: island,
                    transient_check: transient
                }
            );
        }
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        for f in [
            |c: &mut RunConfig| c.alpha = 0.0,
            |c: &mut RunConfig| c.alpha = 1.5,
            |c: &mut RunConfig| c.eps_kw = 0.0,
            |c: &mut RunConfig| c.max_iterations = 0,
            |c: &mut RunConfig| c.case = 4,
        ] {
            let mut c = RunConfig::default();
            f(&mut c);
            assert!(matches!(c.validate(), Err(RunError::Config(_))));
        }
    }
}
