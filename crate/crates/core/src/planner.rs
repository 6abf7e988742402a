//! Master investment problem: build decisions, expected grid-connected
//! operation over every representative-day time block and, optionally, a
//! post-islanding operation block per time slot whose worst-case load-shedding
//! penalty is bounded by an epigraph variable.
//!
//! Everything here works on a per-unit instance: powers in p.u. of the system
//! base, prices in currency per p.u.-hour.

use std::fmt::Write as _;
use std::path::Path;

use mgplan_optim::{MixedIntegerProgram, Outcome, Program, Sense, SolveStatus, Var};

use crate::error::{InstanceError, PlannerError};
use crate::instance::{GeneratorKind, PlanningInstance, Topology, HOURS};

/// How the day is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Calendar {
    pub days: usize,
    pub block_hours: usize,
}

impl Calendar {
    pub fn new(days: usize, block_hours: usize) -> Result<Self, PlannerError> {
        if block_hours == 0 || HOURS % block_hours != 0 {
            return Err(PlannerError::BadBlock(block_hours));
        }
        Ok(Self { days, block_hours })
    }

    pub fn blocks(&self) -> usize {
        HOURS / self.block_hours
    }

    pub fn slots(&self) -> usize {
        self.days * self.blocks()
    }

    pub fn slot(&self, day: usize, block: usize) -> usize {
        day * self.blocks() + block
    }

    /// `(day, block)` of a slot.
    pub fn split(&self, slot: usize) -> (usize, usize) {
        (slot / self.blocks(), slot % self.blocks())
    }

    pub fn dt(&self) -> f64 {
        self.block_hours as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasterConfig {
    pub include_island: bool,
    pub polygon_sides: usize,
    pub block_hours: usize,
    /// How long the islanded system must be self-sufficient, in hours.
    pub island_hours: f64,
}

impl Default for MasterConfig {
    fn default() -> Self {
        Self {
            include_island: true,
            polygon_sides: 12,
            block_hours: 1,
            island_hours: 1.0,
        }
    }
}

/// Per-slot caps on active power exchange with the main grid, p.u.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeBounds {
    pub import: Vec<f64>,
    pub export: Vec<f64>,
}

impl ExchangeBounds {
    /// The interface caps of the instance, repeated for every slot.
    pub fn from_instance(instance: &PlanningInstance, calendar: &Calendar) -> Self {
        let n = calendar.slots();
        Self {
            import: vec![instance.grid.import_cap; n],
            export: vec![instance.grid.export_cap; n],
        }
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.import.iter().copied().zip(self.export.iter().copied()).collect()
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self {
            import: pairs.iter().map(|p| p.0).collect(),
            export: pairs.iter().map(|p| p.1).collect(),
        }
    }
}

/// One edge row `cos * p + sin * q <= radius * (z0 + z)` of the inscribed
/// polygon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolygonRow {
    pub cos: f64,
    pub sin: f64,
    pub radius: f64,
}

impl PolygonRow {
    pub fn admits(&self, p: f64, q: f64, capacity_factor: f64) -> bool {
        self.cos * p + self.sin * q <= self.radius * capacity_factor
    }
}

/// Edges of the regular `sides`-gon inscribed in the circle of radius `s_max`.
pub fn polygon_linearize(s_max: f64, sides: usize) -> Result<Vec<PolygonRow>, PlannerError> {
    if !(s_max > 0.0) {
        return Err(PlannerError::DegenerateCapacity);
    }
    if sides < 4 || sides % 2 != 0 {
        return Err(PlannerError::BadPolygon(sides));
    }
    let m = sides as f64;
    let radius = s_max * (std::f64::consts::PI / m).cos();
    Ok((0..sides)
        .map(|j| {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / m;
            // Axis-aligned sides get exact zeros instead of round-off.
            let snap = |x: f64| if x.abs() < 1e-12 { 0.0 } else { x };
            PolygonRow {
                cos: snap(theta.cos()),
                sin: snap(theta.sin()),
                radius,
            }
        })
        .collect())
}

/// Demand and availability of one slot, p.u.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotInputs {
    /// Per load: constant active and reactive demand.
    pub d_pc: Vec<f64>,
    pub d_qc: Vec<f64>,
    /// Per load: nominal flexible demand and its bounds (all zero for
    /// constant loads).
    pub pf_nominal: Vec<f64>,
    pub pf_bounds: Vec<(f64, f64)>,
    pub qf_bounds: Vec<(f64, f64)>,
    /// Per generator: active power available when built.
    pub available: Vec<f64>,
}

/// Block averages of the day profiles for every slot.
pub fn slot_inputs(instance: &PlanningInstance, calendar: &Calendar) -> Vec<SlotInputs> {
    let converters = instance.converter_units();
    let n_loads = instance.loads.len();
    let mut out = Vec::with_capacity(calendar.slots());
    for slot in 0..calendar.slots() {
        let (o, b) = calendar.split(slot);
        let day = &instance.days[o];
        let hours = b * calendar.block_hours..(b + 1) * calendar.block_hours;
        let mean = |feature: usize| {
            let p = day.feature(feature);
            hours.clone().map(|h| p[h]).sum::<f64>() / calendar.block_hours as f64
        };
        let mut s = SlotInputs {
            d_pc: Vec::with_capacity(n_loads),
            d_qc: Vec::with_capacity(n_loads),
            pf_nominal: Vec::with_capacity(n_loads),
            pf_bounds: Vec::with_capacity(n_loads),
            qf_bounds: Vec::with_capacity(n_loads),
            available: vec![0.0; instance.generators.len()],
        };
        for (l, load) in instance.loads.iter().enumerate() {
            let apparent = load.nominal_kva * mean(l);
            let p = apparent * load.power_factor;
            let q = p * load.reactive_ratio();
            let share = load.flexible_share;
            s.d_pc.push((1.0 - share) * p);
            s.d_qc.push((1.0 - share) * q);
            s.pf_nominal.push(share * p);
            s.pf_bounds.push((load.flex_min * share * p, load.flex_max * share * p));
            s.qf_bounds.push((load.flex_min * share * q, load.flex_max * share * q));
        }
        for (g, gen) in instance.generators.iter().enumerate() {
            s.available[g] = match converters.iter().position(|&c| c == g) {
                Some(c) => gen.capacity * mean(n_loads + c),
                None => gen.capacity,
            };
        }
        out.push(s);
    }
    out
}

/// Island-mode columns of one slot.
#[derive(Debug, Clone)]
pub struct IslandVars {
    pub p_gen: Vec<Var>,
    pub q_gen: Vec<Var>,
    pub p_line: Vec<Var>,
    pub q_line: Vec<Var>,
    pub v: Vec<Var>,
    /// Per load: connection binary.
    pub y: Vec<Var>,
    /// Per load, flexible loads only.
    pub dh_plus: Vec<Option<Var>>,
    pub dh_minus: Vec<Option<Var>>,
    pub dh_q: Vec<Option<Var>>,
}

/// Grid-connected columns of one slot.
#[derive(Debug, Clone)]
pub struct SlotVars {
    pub p_import: Var,
    pub p_export: Var,
    pub q_import: Var,
    pub q_export: Var,
    pub p_gen: Vec<Var>,
    pub q_gen: Vec<Var>,
    pub p_line: Vec<Var>,
    pub q_line: Vec<Var>,
    pub v: Vec<Var>,
    /// Per load, flexible loads only.
    pub d_pf: Vec<Option<Var>>,
    pub d_qf: Vec<Option<Var>>,
    pub island: Option<IslandVars>,
}

/// Where every symbol of the master lives.
#[derive(Debug, Clone)]
pub struct VariableMap {
    pub calendar: Calendar,
    pub config: MasterConfig,
    /// Per generator; `None` for existing units.
    pub gen_build: Vec<Option<Var>>,
    /// Per line; `None` when the line is not a candidate.
    pub line_build: Vec<Option<Var>>,
    pub gamma: Option<Var>,
    pub slots: Vec<SlotVars>,
}

#[derive(Debug, Clone)]
pub struct Master {
    pub program: Program,
    pub map: VariableMap,
    pub inputs: Vec<SlotInputs>,
}

struct Builder<'a> {
    inst: &'a PlanningInstance,
    topo: Topology,
    cal: Calendar,
    cfg: MasterConfig,
    inputs: Vec<SlotInputs>,
    polygons: Vec<Vec<PolygonRow>>,
    p: Program,
    gen_build: Vec<Option<Var>>,
    line_build: Vec<Option<Var>>,
}

impl Builder<'_> {
    fn node_id(&self, n: usize) -> u32 {
        self.inst.nodes[n].id
    }

    fn line_tag(&self, l: usize) -> String {
        let (a, b) = self.topo.ends[l];
        format!("{}_{}", self.node_id(a), self.node_id(b))
    }

    fn weight(&self, o: usize) -> f64 {
        self.inst.days[o].weight * self.cal.dt()
    }

    fn line_usable(&self, l: usize) -> bool {
        self.inst.lines[l].built_initially || self.line_build[l].is_some()
    }

    /// Generator output columns with build coupling; returns `(p, q)`.
    fn generator_columns(&mut self, tag: &str, slot: usize) -> (Vec<Var>, Vec<Var>) {
        let n = self.inst.generators.len();
        let (mut ps, mut qs) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for g in 0..n {
            let gen = &self.inst.generators[g];
            let avail = self.inputs[slot].available[g];
            let qmax = gen.reactive_limit(avail);
            let id = gen.id.clone();
            let p = self.p.add_var(format!("{tag}pg_{id}_{slot}"), 0.0, avail);
            let q = self.p.add_var(format!("{tag}qg_{id}_{slot}"), -qmax, qmax);
            if let Some(z) = self.gen_build[g] {
                self.p.add_row(format!("{tag}pz_{id}_{slot}"), [(p, 1.0), (z, -avail)], Sense::Le, 0.0);
                self.p.add_row(format!("{tag}qzu_{id}_{slot}"), [(q, 1.0), (z, -qmax)], Sense::Le, 0.0);
                self.p.add_row(format!("{tag}qzl_{id}_{slot}"), [(q, 1.0), (z, qmax)], Sense::Ge, 0.0);
            }
            ps.push(p);
            qs.push(q);
        }
        (ps, qs)
    }

    /// Line flows, voltages, voltage-drop and thermal rows; returns
    /// `(p_line, q_line, v)`.
    fn network_columns(&mut self, tag: &str, slot: usize) -> (Vec<Var>, Vec<Var>, Vec<Var>) {
        let (vmin, vmax) = (self.inst.voltage.min, self.inst.voltage.max);
        let v: Vec<Var> = (0..self.inst.nodes.len())
            .map(|n| {
                let name = format!("{tag}v_{}_{slot}", self.node_id(n));
                if n == self.topo.pcc {
                    self.p.add_var(name, 1.0, 1.0)
                } else {
                    self.p.add_var(name, vmin, vmax)
                }
            })
            .collect();
        let (mut pl, mut ql) = (Vec::new(), Vec::new());
        for l in 0..self.inst.lines.len() {
            let lt = self.line_tag(l);
            let cap = if self.line_usable(l) { f64::INFINITY } else { 0.0 };
            let p = self.p.add_var(format!("{tag}pl_{lt}_{slot}"), -cap, cap);
            let q = self.p.add_var(format!("{tag}ql_{lt}_{slot}"), -cap, cap);
            let (a, b) = self.topo.ends[l];
            let line = &self.inst.lines[l];
            self.p.add_row(
                format!("{tag}vd_{lt}_{slot}"),
                [(v[a], 1.0), (v[b], -1.0), (p, -line.r), (q, -line.x)],
                Sense::Eq,
                0.0,
            );
            if self.line_usable(l) {
                let z0 = if line.built_initially { 1.0 } else { 0.0 };
                for (j, row) in self.polygons[l].clone().into_iter().enumerate() {
                    let mut coeffs: Vec<(Var, f64)> =
                        [(p, row.cos), (q, row.sin)].into_iter().filter(|c| c.1 != 0.0).collect();
                    if let Some(z) = self.line_build[l] {
                        coeffs.push((z, -row.radius));
                    }
                    self.p.add_row(format!("{tag}th{j}_{lt}_{slot}"), coeffs, Sense::Le, row.radius * z0);
                }
            }
            pl.push(p);
            ql.push(q);
        }
        (pl, ql, v)
    }

    /// Flow terms of the balance at node `n`: inflow minus outflow.
    fn flow_terms(&self, n: usize, lines: &[Var]) -> Vec<(Var, f64)> {
        let mut t = Vec::new();
        if let Some(l) = self.topo.parent_line[n] {
            t.push((lines[l], 1.0));
        }
        for &l in &self.topo.child_lines[n] {
            t.push((lines[l], -1.0));
        }
        t
    }

    fn gen_terms(&self, n: usize, gens: &[Var]) -> Vec<(Var, f64)> {
        let id = self.node_id(n);
        self.inst
            .generators
            .iter()
            .zip(gens)
            .filter(|(g, _)| g.node == id)
            .map(|(_, &v)| (v, 1.0))
            .collect()
    }

    fn loads_at(&self, n: usize) -> Vec<usize> {
        let id = self.node_id(n);
        (0..self.inst.loads.len()).filter(|&l| self.inst.loads[l].node == id).collect()
    }

    fn grid_slot(&mut self, slot: usize, bounds: &ExchangeBounds) -> Result<SlotVars, PlannerError> {
        let (o, _) = self.cal.split(slot);
        let w = self.weight(o);
        let grid = self.inst.grid.clone();
        let (cap_b, cap_s) = (bounds.import[slot], bounds.export[slot]);
        let p_import = self.p.add_var(format!("pb_{slot}"), 0.0, cap_b);
        let p_export = self.p.add_var(format!("ps_{slot}"), 0.0, cap_s);
        let q_import = self.p.add_var(format!("qb_{slot}"), 0.0, grid.import_q_cap);
        let q_export = self.p.add_var(format!("qs_{slot}"), 0.0, grid.export_q_cap);
        self.p.set_cost(p_import, w * grid.import_price);
        self.p.set_cost(p_export, -w * grid.export_price);

        let (p_gen, q_gen) = self.generator_columns("", slot);
        for (g, &p) in p_gen.iter().enumerate() {
            self.p.set_cost(p, w * self.inst.generators[g].marginal_cost);
        }
        let (p_line, q_line, v) = self.network_columns("", slot);

        let n_loads = self.inst.loads.len();
        let (mut d_pf, mut d_qf) = (vec![None; n_loads], vec![None; n_loads]);
        for l in 0..n_loads {
            let load = &self.inst.loads[l];
            if !load.is_flexible() {
                continue;
            }
            let (plo, phi) = self.inputs[slot].pf_bounds[l];
            let (qlo, qhi) = self.inputs[slot].qf_bounds[l];
            if plo > phi || qlo > qhi {
                return Err(PlannerError::InfeasibleBounds(format!("flexible load at node {}", load.node)));
            }
            let dp = self.p.add_var(format!("dpf_{}_{slot}", load.node), plo, phi);
            let dq = self.p.add_var(format!("dqf_{}_{slot}", load.node), qlo, qhi);
            self.p.set_cost(dp, w * load.shift_penalty);
            d_pf[l] = Some(dp);
            d_qf[l] = Some(dq);
        }

        for n in 0..self.inst.nodes.len() {
            let id = self.node_id(n);
            let mut pt = self.flow_terms(n, &p_line);
            let mut qt = self.flow_terms(n, &q_line);
            pt.extend(self.gen_terms(n, &p_gen));
            qt.extend(self.gen_terms(n, &q_gen));
            if n == self.topo.pcc {
                pt.extend([(p_import, 1.0), (p_export, -1.0)]);
                qt.extend([(q_import, 1.0), (q_export, -1.0)]);
            }
            let (mut prhs, mut qrhs) = (0.0, 0.0);
            for l in self.loads_at(n) {
                prhs += self.inputs[slot].d_pc[l];
                qrhs += self.inputs[slot].d_qc[l];
                if let (Some(dp), Some(dq)) = (d_pf[l], d_qf[l]) {
                    pt.push((dp, -1.0));
                    qt.push((dq, -1.0));
                }
            }
            self.p.add_row(format!("bp_{id}_{slot}"), pt, Sense::Eq, prhs);
            self.p.add_row(format!("bq_{id}_{slot}"), qt, Sense::Eq, qrhs);
        }
        Ok(SlotVars {
            p_import,
            p_export,
            q_import,
            q_export,
            p_gen,
            q_gen,
            p_line,
            q_line,
            v,
            d_pf,
            d_qf,
            island: None,
        })
    }

    /// Ramp, daily SG energy and daily flexible energy rows of one day.
    fn day_rows(&mut self, o: usize, slots: &[SlotVars]) {
        let blocks = self.cal.blocks();
        let dt = self.cal.dt();
        for (g, gen) in self.inst.generators.iter().enumerate() {
            if gen.kind != GeneratorKind::Synchronous {
                continue;
            }
            let (up, down) = (gen.ramp_up.unwrap_or(f64::INFINITY), gen.ramp_down.unwrap_or(f64::INFINITY));
            for b in 1..blocks {
                let (cur, prev) = (self.cal.slot(o, b), self.cal.slot(o, b - 1));
                self.p.add_ranged_row(
                    format!("rp_{}_{cur}", gen.id),
                    [(slots[cur].p_gen[g], 1.0), (slots[prev].p_gen[g], -1.0)],
                    -down * dt,
                    up * dt,
                );
            }
            if let Some(c) = gen.daily_capacity_factor {
                let terms: Vec<(Var, f64)> = (0..blocks).map(|b| (slots[self.cal.slot(o, b)].p_gen[g], dt)).collect();
                self.p.add_row(format!("ce_{}_{o}", gen.id), terms, Sense::Le, c * gen.capacity * HOURS as f64);
            }
        }
        for (l, load) in self.inst.loads.iter().enumerate() {
            if !load.is_flexible() {
                continue;
            }
            let mut terms = Vec::with_capacity(blocks);
            let mut energy = 0.0;
            for b in 0..blocks {
                let s = self.cal.slot(o, b);
                terms.push((slots[s].d_pf[l].expect("flexible"), dt));
                energy += self.inputs[s].pf_nominal[l] * dt;
            }
            self.p.add_row(format!("fe_{}_{o}", load.node), terms, Sense::Eq, energy);
        }
    }

    fn island_slot(&mut self, slot: usize, slots: &[SlotVars], gamma: Var) -> IslandVars {
        let (o, b) = self.cal.split(slot);
        let dt = self.cal.dt();
        let hours = self.cfg.island_hours;
        let (p_gen, q_gen) = self.generator_columns("i", slot);
        let (p_line, q_line, v) = self.network_columns("i", slot);
        let grid = &slots[slot];
        let n_loads = self.inst.loads.len();
        let mut y = Vec::with_capacity(n_loads);
        let (mut dh_plus, mut dh_minus, mut dh_q) = (vec![None; n_loads], vec![None; n_loads], vec![None; n_loads]);
        for l in 0..n_loads {
            let node = self.inst.loads[l].node;
            y.push(self.p.add_binary(format!("y_{node}_{slot}")));
            if self.inst.loads[l].is_flexible() {
                dh_plus[l] = Some(self.p.add_var(format!("dhp_{node}_{slot}"), 0.0, f64::INFINITY));
                dh_minus[l] = Some(self.p.add_var(format!("dhm_{node}_{slot}"), 0.0, f64::INFINITY));
                dh_q[l] = Some(self.p.add_var(format!("dhq_{node}_{slot}"), f64::NEG_INFINITY, f64::INFINITY));
            }
        }

        for n in 0..self.inst.nodes.len() {
            let id = self.node_id(n);
            let mut pt = self.flow_terms(n, &p_line);
            let mut qt = self.flow_terms(n, &q_line);
            pt.extend(self.gen_terms(n, &p_gen));
            qt.extend(self.gen_terms(n, &q_gen));
            for l in self.loads_at(n) {
                pt.push((y[l], -self.inputs[slot].d_pc[l]));
                qt.push((y[l], -self.inputs[slot].d_qc[l]));
                if let Some(dp) = grid.d_pf[l] {
                    pt.extend([(dp, -1.0), (dh_plus[l].unwrap(), -1.0), (dh_minus[l].unwrap(), 1.0)]);
                    qt.extend([(grid.d_qf[l].unwrap(), -1.0), (dh_q[l].unwrap(), -1.0)]);
                }
            }
            self.p.add_row(format!("ibp_{id}_{slot}"), pt, Sense::Eq, 0.0);
            self.p.add_row(format!("ibq_{id}_{slot}"), qt, Sense::Eq, 0.0);
        }

        // Flexible limits and remaining daily energy after the grid-connected
        // history of the same day.
        for l in 0..n_loads {
            let Some(dp) = grid.d_pf[l] else { continue };
            let node = self.inst.loads[l].node;
            let (plo, phi) = self.inputs[slot].pf_bounds[l];
            let (qlo, qhi) = self.inputs[slot].qf_bounds[l];
            let (hp, hm, hq) = (dh_plus[l].unwrap(), dh_minus[l].unwrap(), dh_q[l].unwrap());
            self.p.add_ranged_row(format!("igp_{node}_{slot}"), [(dp, 1.0), (hp, 1.0), (hm, -1.0)], plo, phi);
            self.p.add_ranged_row(format!("igq_{node}_{slot}"), [(grid.d_qf[l].unwrap(), 1.0), (hq, 1.0)], qlo, qhi);
            let mut terms = vec![
                (y[l], self.inputs[slot].d_pc[l] * hours),
                (dp, hours),
                (hp, hours),
                (hm, -hours),
            ];
            let mut energy = 0.0;
            for bb in 0..self.cal.blocks() {
                let s = self.cal.slot(o, bb);
                energy += (self.inputs[s].d_pc[l] + self.inputs[s].pf_nominal[l]) * dt;
                if bb < b {
                    terms.push((slots[s].d_pf[l].unwrap(), dt));
                    energy -= self.inputs[s].d_pc[l] * dt;
                }
            }
            self.p.add_row(format!("ie_{node}_{slot}"), terms, Sense::Le, energy);
        }

        // Synchronous re-dispatch limits.
        for (g, gen) in self.inst.generators.iter().enumerate() {
            if gen.kind != GeneratorKind::Synchronous {
                continue;
            }
            let (up, down) = (gen.ramp_up.unwrap_or(f64::INFINITY), gen.ramp_down.unwrap_or(f64::INFINITY));
            self.p.add_ranged_row(
                format!("irp_{}_{slot}", gen.id),
                [(p_gen[g], 1.0), (grid.p_gen[g], -1.0)],
                -down * hours,
                up * hours,
            );
            if let Some(c) = gen.daily_capacity_factor {
                let mut terms = vec![(p_gen[g], hours)];
                for bb in 0..b {
                    terms.push((slots[self.cal.slot(o, bb)].p_gen[g], dt));
                }
                self.p.add_row(format!("ice_{}_{slot}", gen.id), terms, Sense::Le, c * gen.capacity * HOURS as f64);
            }
        }

        // gamma >= sum pc * ((1 - y) d_pc + dh_minus) * hours
        let mut terms = vec![(gamma, 1.0)];
        let mut rhs = 0.0;
        for l in 0..n_loads {
            let pc = self.inst.loads[l].disconnection_penalty * hours;
            let d = self.inputs[slot].d_pc[l];
            terms.push((y[l], pc * d));
            rhs += pc * d;
            if let Some(hm) = dh_minus[l] {
                terms.push((hm, -pc));
            }
        }
        self.p.add_row(format!("ep_{slot}"), terms, Sense::Ge, rhs);

        IslandVars {
            p_gen,
            q_gen,
            p_line,
            q_line,
            v,
            y,
            dh_plus,
            dh_minus,
            dh_q,
        }
    }
}

/// Assembles the master program for the given exchange caps.
pub fn build_master(
    instance: &PlanningInstance,
    bounds: &ExchangeBounds,
    config: &MasterConfig,
) -> Result<Master, PlannerError> {
    if !instance.per_unit {
        return Err(PlannerError::Instance(InstanceError::NotNormalized));
    }
    let topo = instance.topology()?;
    let cal = Calendar::new(instance.days.len(), config.block_hours)?;
    for (slot, (&b, &s)) in bounds.import.iter().zip(&bounds.export).enumerate() {
        if !(b >= 0.0) || !(s >= 0.0) {
            return Err(PlannerError::UnboundedExchange(slot));
        }
    }
    if bounds.import.len() != cal.slots() || bounds.export.len() != cal.slots() {
        let have = bounds.import.len().min(bounds.export.len());
        return Err(PlannerError::UnboundedExchange(have));
    }
    let polygons = instance
        .lines
        .iter()
        .map(|l| polygon_linearize(l.s_max, config.polygon_sides))
        .collect::<Result<Vec<_>, _>>()?;

    let mut b = Builder {
        inst: instance,
        topo,
        cal,
        cfg: *config,
        inputs: slot_inputs(instance, &cal),
        polygons,
        p: MixedIntegerProgram::new(format!("{}_master", instance.name.replace(char::is_whitespace, "_"))),
        gen_build: Vec::new(),
        line_build: Vec::new(),
    };

    for gen in &instance.generators {
        let z = (!gen.existing).then(|| {
            let z = b.p.add_binary(format!("zg_{}", gen.id));
            b.p.set_cost(z, gen.invest_cost);
            z
        });
        b.gen_build.push(z);
    }
    for l in 0..instance.lines.len() {
        let line = &instance.lines[l];
        let z = line.candidate.then(|| {
            let z = b.p.add_binary(format!("zl_{}", b.line_tag(l)));
            b.p.set_cost(z, line.invest_cost);
            z
        });
        b.line_build.push(z);
    }
    let gamma = config.include_island.then(|| {
        let g = b.p.add_var("gamma", 0.0, f64::INFINITY);
        b.p.set_cost(g, 1.0);
        g
    });

    let mut slots = Vec::with_capacity(cal.slots());
    for slot in 0..cal.slots() {
        slots.push(b.grid_slot(slot, bounds)?);
    }
    for o in 0..cal.days {
        b.day_rows(o, &slots);
    }
    if let Some(gamma) = gamma {
        for slot in 0..cal.slots() {
            let island = b.island_slot(slot, &slots, gamma);
            slots[slot].island = Some(island);
        }
    }

    let Builder {
        p,
        inputs,
        gen_build,
        line_build,
        ..
    } = b;
    Ok(Master {
        program: p,
        map: VariableMap {
            calendar: cal,
            config: *config,
            gen_build,
            line_build,
            gamma,
            slots,
        },
        inputs,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostBreakdown {
    pub investment: f64,
    /// Expected annual grid-connected operation, shift penalty included.
    pub operation: f64,
    /// Part of `operation` charged for serving flexible demand.
    pub shift_penalty: f64,
    /// Worst-case islanding penalty.
    pub disconnection: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvestmentPlan {
    /// Per generator: in service (existing or built).
    pub generators: Vec<bool>,
    /// Per line: reinforced.
    pub lines: Vec<bool>,
    pub built_generators: Vec<String>,
    pub reinforced_lines: Vec<(u32, u32)>,
    pub costs: CostBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IslandSchedule {
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
    pub p_line: Vec<f64>,
    pub q_line: Vec<f64>,
    pub v: Vec<f64>,
    pub connected: Vec<bool>,
    pub dh_plus: Vec<f64>,
    pub dh_minus: Vec<f64>,
    pub dh_q: Vec<f64>,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotSchedule {
    pub p_import: f64,
    pub p_export: f64,
    pub q_import: f64,
    pub q_export: f64,
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
    pub p_line: Vec<f64>,
    pub q_line: Vec<f64>,
    pub v: Vec<f64>,
    /// Per load; zero for constant loads.
    pub d_pf: Vec<f64>,
    pub d_qf: Vec<f64>,
    pub island: Option<IslandSchedule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    pub plan: InvestmentPlan,
    pub schedules: Vec<SlotSchedule>,
    /// Recomputed islanding penalty per slot (empty without island blocks).
    pub island_penalties: Vec<f64>,
    pub gamma: f64,
    pub objective: f64,
}

/// Reads the plan, schedules and penalties out of an optimal outcome.
pub fn extract_solution(
    outcome: &Outcome,
    master: &Master,
    instance: &PlanningInstance,
) -> Result<MasterSolution, PlannerError> {
    if outcome.status != SolveStatus::Optimal || outcome.primal.len() != master.program.num_vars() {
        return Err(PlannerError::NotOptimal);
    }
    let x = |v: Var| outcome.primal[v.index()];
    let on = |v: Var| x(v) > 0.5;
    let map = &master.map;
    let topo = instance.topology()?;

    let generators: Vec<bool> = map.gen_build.iter().map(|z| z.is_none_or(on)).collect();
    let lines: Vec<bool> = map.line_build.iter().map(|z| z.is_some_and(on)).collect();
    let mut investment = 0.0;
    let mut built_generators = Vec::new();
    for (g, z) in map.gen_build.iter().enumerate() {
        if z.is_some_and(on) {
            investment += instance.generators[g].invest_cost;
            built_generators.push(instance.generators[g].id.clone());
        }
    }
    let mut reinforced_lines = Vec::new();
    for (l, &r) in lines.iter().enumerate() {
        if r {
            investment += instance.lines[l].invest_cost;
            let (a, b) = topo.ends[l];
            reinforced_lines.push((instance.nodes[a].id, instance.nodes[b].id));
        }
    }

    let vals = |vs: &[Var]| vs.iter().map(|&v| x(v)).collect::<Vec<f64>>();
    let opt = |vs: &[Option<Var>]| vs.iter().map(|v| v.map_or(0.0, x)).collect::<Vec<f64>>();
    let (mut operation, mut shift) = (0.0, 0.0);
    let mut schedules = Vec::with_capacity(map.slots.len());
    let mut penalties = Vec::new();
    for (slot, sv) in map.slots.iter().enumerate() {
        let (o, _) = map.calendar.split(slot);
        let w = instance.days[o].weight * map.calendar.dt();
        let grid = &instance.grid;
        operation += w * (grid.import_price * x(sv.p_import) - grid.export_price * x(sv.p_export));
        for (g, &p) in sv.p_gen.iter().enumerate() {
            operation += w * instance.generators[g].marginal_cost * x(p);
        }
        for (l, dp) in sv.d_pf.iter().enumerate() {
            if let Some(dp) = dp {
                let c = w * instance.loads[l].shift_penalty * x(*dp);
                operation += c;
                shift += c;
            }
        }
        let island = sv.island.as_ref().map(|iv| {
            let connected: Vec<bool> = iv.y.iter().map(|&y| on(y)).collect();
            let dh_minus = opt(&iv.dh_minus);
            let inputs = &master.inputs[slot];
            let penalty: f64 = instance
                .loads
                .iter()
                .enumerate()
                .map(|(l, load)| {
                    let shed = if connected[l] { 0.0 } else { inputs.d_pc[l] };
                    load.disconnection_penalty * (shed + dh_minus[l]) * map.config.island_hours
                })
                .sum();
            penalties.push(penalty);
            IslandSchedule {
                p_gen: vals(&iv.p_gen),
                q_gen: vals(&iv.q_gen),
                p_line: vals(&iv.p_line),
                q_line: vals(&iv.q_line),
                v: vals(&iv.v),
                connected,
                dh_plus: opt(&iv.dh_plus),
                dh_minus,
                dh_q: opt(&iv.dh_q),
                penalty,
            }
        });
        schedules.push(SlotSchedule {
            p_import: x(sv.p_import),
            p_export: x(sv.p_export),
            q_import: x(sv.q_import),
            q_export: x(sv.q_export),
            p_gen: vals(&sv.p_gen),
            q_gen: vals(&sv.q_gen),
            p_line: vals(&sv.p_line),
            q_line: vals(&sv.q_line),
            v: vals(&sv.v),
            d_pf: opt(&sv.d_pf),
            d_qf: opt(&sv.d_qf),
            island,
        });
    }
    let gamma = map.gamma.map_or(0.0, x);
    let costs = CostBreakdown {
        investment,
        operation,
        shift_penalty: shift,
        disconnection: gamma,
        total: investment + operation + gamma,
    };
    Ok(MasterSolution {
        plan: InvestmentPlan {
            generators,
            lines,
            built_generators,
            reinforced_lines,
            costs,
        },
        schedules,
        island_penalties: penalties,
        gamma,
        objective: outcome.objective,
    })
}

/// Writes `index,name,kind,lower,upper` for every column.
pub fn write_variable_map(program: &Program, path: impl AsRef<Path>) -> Result<(), PlannerError> {
    let mut text = String::from("index,name,kind,lower,upper\n");
    for (i, v) in program.variables().iter().enumerate() {
        let kind = if v.integer { "integer" } else { "continuous" };
        let _ = writeln!(text, "{i},{},{kind},{},{}", v.name, v.lower, v.upper);
    }
    crate::io::write_atomic(path.as_ref(), text.as_bytes()).map_err(|e| match e {
        crate::error::IoError::File { source, .. } => PlannerError::Io(source),
        other => PlannerError::Io(std::io::Error::other(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_edge_offset() {
        let rows = polygon_linearize(1.0, 4).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.admits(0.70, 0.0, 1.0)));
        assert!(!rows.iter().all(|r| r.admits(0.72, 0.0, 1.0)));
        for m in [4, 6, 12, 32] {
            assert!(polygon_linearize(0.3, m).unwrap().iter().all(|r| r.admits(0.0, 0.0, 1.0)));
        }
    }

    #[test]
    fn polygon_errors() {
        assert!(matches!(polygon_linearize(0.0, 12), Err(PlannerError::DegenerateCapacity)));
        assert!(matches!(polygon_linearize(1.0, 5), Err(PlannerError::BadPolygon(5))));
        assert!(matches!(polygon_linearize(1.0, 2), Err(PlannerError::BadPolygon(2))));
    }

    #[test]
    fn calendar_slots() {
        let c = Calendar::new(2, 4).unwrap();
        assert_eq!((c.blocks(), c.slots()), (6, 12));
        assert_eq!(c.split(c.slot(1, 3)), (1, 3));
        assert!(Calendar::new(1, 5).is_err());
    }
}
