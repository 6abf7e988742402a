#![allow(dead_code)]

use mgplan_core::instance::{GridInterface, Node, SecurityLimits, VoltageBand, HOURS};
use mgplan_core::io::{with_synthetic_days, CIGRE18_SEED, CIGRE18_YEAR_DAYS};
use mgplan_core::MasterSolution;
use mgplan_core::{GeneratorAsset, GeneratorKind, LineAsset, LoadSpec, PlanningInstance, RepresentativeDay};

/// Two nodes joined by one line; a constant load and `candidates` grid-feeding
/// PV units (100 kW each) sit at node 2. One representative day with flat
/// load multiplier 1 and PV capacity factor `cf`.
pub fn toy(candidates: usize, load_kw: f64, cf: f64) -> PlanningInstance {
    let generators = (0..candidates)
        .map(|i| GeneratorAsset {
            id: format!("PV{}", i + 1),
            node: 2,
            kind: GeneratorKind::GridFeeding,
            capacity: 100.0,
            power_factor: 0.95,
            marginal_cost: 0.0,
            invest_cost: 1000.0 * (i + 1) as f64,
            existing: false,
            ramp_up: None,
            ramp_down: None,
            daily_capacity_factor: None,
            m: None,
            d: None,
            k: None,
            r: None,
            f: None,
            t: None,
        })
        .collect();
    let mut centroid = vec![1.0; HOURS];
    for _ in 0..candidates {
        centroid.extend(std::iter::repeat_n(cf, HOURS));
    }
    PlanningInstance {
        name: "toy".into(),
        per_unit: false,
        grid: GridInterface {
            import_price: 0.03,
            export_price: 0.015,
            import_cap: f64::INFINITY,
            export_cap: f64::INFINITY,
            import_q_cap: f64::INFINITY,
            export_q_cap: f64::INFINITY,
            f0: 50.0,
            s_base: 1000.0,
        },
        voltage: VoltageBand { min: 0.95, max: 1.05 },
        limits: SecurityLimits {
            rocof: 2.0,
            nadir: 0.8,
            ss: 0.2,
            load_damping: 0.0,
        },
        nodes: vec![Node { id: 1, is_pcc: true }, Node { id: 2, is_pcc: false }],
        lines: vec![LineAsset {
            from: 1,
            to: 2,
            r: 0.01,
            x: 0.005,
            s_max: 1000.0,
            built_initially: true,
            invest_cost: 0.0,
            candidate: false,
        }],
        generators,
        loads: vec![LoadSpec {
            node: 2,
            nominal_kva: load_kw,
            power_factor: 1.0,
            flexible_share: 0.0,
            flex_min: 1.0,
            flex_max: 1.0,
            shift_penalty: 0.1,
            disconnection_penalty: 150.0,
        }],
        days: vec![RepresentativeDay {
            weight: 365.0,
            member_count: 365,
            centroid,
        }],
    }
}

/// The bundled network on two representative days, as used with four-hour
/// blocks for the quick planning runs.
pub fn reduced_cigre() -> PlanningInstance {
    with_synthetic_days(&mgplan_core::io::cigre18(), CIGRE18_SEED, CIGRE18_YEAR_DAYS, 2).unwrap()
}

/// Number of uniforms consumed by [`fleet`].
pub const FLEET_DRAWS: usize = 20;

/// Maps uniforms in `[0, 1)` to a fleet of one or two synchronous machines
/// plus optional VSM, droop and grid-feeding converters, all on the system
/// base. Turbine constants are at least 1 s and agree within 5 % across
/// machines, the regime the reduced model assumes; converter lags are at most
/// 20 ms.
pub fn fleet(u: &[f64; FLEET_DRAWS]) -> Vec<mgplan_core::FleetUnit> {
    use mgplan_core::freq::FleetUnit;
    let lerp = |x: f64, lo: f64, hi: f64| lo + x * (hi - lo);
    let mut units = Vec::new();
    let machines = 1 + usize::from(u[0] < 0.4);
    let turbine = lerp(u[5], 1.0, 8.0);
    for i in 0..machines {
        let o = 1 + 5 * i;
        let share = lerp(u[o], 0.3, 1.0);
        units.push(FleetUnit::Synchronous {
            m: share * lerp(u[o + 1], 4.0, 20.0),
            d: share * lerp(u[o + 2], 0.5, 5.0),
            k: share,
            r: lerp(u[o + 3], 0.03, 0.06),
            f: 0.3,
            t: turbine * lerp(u[o + 4], 0.95, 1.05),
        });
    }
    if u[11] < 0.5 {
        let share = lerp(u[12], 0.2, 1.0);
        units.push(FleetUnit::Vsm {
            m: share * lerp(u[13], 5.0, 20.0),
            d: share * lerp(u[14], 10.0, 40.0),
            t: lerp(u[15], 0.005, 0.02),
        });
    }
    if u[16] < 0.5 {
        units.push(FleetUnit::Droop {
            k: lerp(u[17], 0.2, 1.0),
            r: 0.05,
            t: lerp(u[18], 0.005, 0.02),
        });
    }
    if u[19] < 0.3 {
        units.push(FleetUnit::GridFeeding);
    }
    units
}

/// Relative errors `[nadir, rocof, steady state]` of the closed form against
/// an RK4 run of the full fleet for a 0.1 p.u. step. `None` when the reduced
/// model is overdamped.
pub fn fidelity(units: &[mgplan_core::FleetUnit]) -> Option<[f64; 3]> {
    use mgplan_core::freq::*;
    let (dp, f0) = (0.1, 50.0);
    let p = aggregate_units(units, 0.0).ok()?;
    let (omega_n, zeta) = modal(&p);
    if zeta >= 1.0 {
        return None;
    }
    let closed = metrics(&p, dp, f0).ok()?;
    let (mut lag, mut turbine) = (0.0_f64, 0.0_f64);
    for u in units {
        match *u {
            FleetUnit::Synchronous { t, .. } => turbine = turbine.max(t),
            FleetUnit::Vsm { t, .. } | FleetUnit::Droop { t, .. } => lag = lag.max(t),
            FleetUnit::GridFeeding => {}
        }
    }
    let horizon = (12.0 / (zeta * omega_n)).max(15.0 * turbine).max(3.0 * closed.t_m);
    let traj = simulate_units(units, 0.0, dp, 1e-3, horizon).unwrap();
    let (nadir, _) = nadir_from_trajectory(&traj);
    let ss = *traj.values.last().unwrap();
    // Initial slope fitted once the converter lags have settled.
    let start = simulate_units(units, 0.0, dp, 1e-4, 3.0 * lag + 0.02).unwrap();
    let rocof = rocof_from_trajectory(&start, 3.0 * lag, 0.01);
    let rel = |sim: f64, cf: f64| (sim * f0 - cf).abs() / cf.abs();
    Some([rel(nadir, closed.nadir), rel(rocof, closed.rocof), rel(ss, closed.ss_dev)])
}

/// The same fleet with every converter lag scaled to at most `max_lag`.
pub fn with_lags(units: &[mgplan_core::FleetUnit], max_lag: f64) -> Vec<mgplan_core::FleetUnit> {
    use mgplan_core::freq::FleetUnit;
    let scale = max_lag / 0.02;
    units
        .iter()
        .map(|u| match *u {
            FleetUnit::Vsm { m, d, t } => FleetUnit::Vsm { m, d, t: t * scale },
            FleetUnit::Droop { k, r, t } => FleetUnit::Droop { k, r, t: t * scale },
            other => other,
        })
        .collect()
}

/// [`toy`] plus an existing 100 kW synchronous machine at the PCC. Alone it
/// can lose about 23 kW securely, so a larger import must be tightened.
pub fn toy_with_sg(candidates: usize, load_kw: f64, cf: f64) -> PlanningInstance {
    let mut t = toy(candidates, load_kw, cf);
    t.generators.insert(
        0,
        GeneratorAsset {
            id: "SG".into(),
            node: 1,
            kind: GeneratorKind::Synchronous,
            capacity: 100.0,
            power_factor: 0.8,
            marginal_cost: 0.06,
            invest_cost: 0.0,
            existing: true,
            ramp_up: Some(50.0),
            ramp_down: Some(50.0),
            daily_capacity_factor: Some(0.9),
            m: Some(14.0),
            d: Some(25.0),
            k: Some(1.0),
            r: Some(0.03),
            f: Some(0.35),
            t: Some(2.0),
        },
    );
    t
}

/// Block mean of feature `f` on day `o`.
pub fn block_mean(inst: &PlanningInstance, o: usize, f: usize, block: usize, bh: usize) -> f64 {
    let c = &inst.days[o].centroid[f * HOURS..(f + 1) * HOURS];
    c[block * bh..(block + 1) * bh].iter().sum::<f64>() / bh as f64
}

/// Parent-first orientation of every line, found by a breadth-first walk
/// from the PCC.
pub fn orient(inst: &PlanningInstance) -> Vec<(u32, u32)> {
    let pcc = inst.nodes.iter().find(|n| n.is_pcc).unwrap().id;
    let mut seen = vec![pcc];
    let mut out = vec![(0, 0); inst.lines.len()];
    let mut frontier = vec![pcc];
    while let Some(n) = frontier.pop() {
        for (l, line) in inst.lines.iter().enumerate() {
            let other = if line.from == n {
                line.to
            } else if line.to == n {
                line.from
            } else {
                continue;
            };
            if !seen.contains(&other) {
                seen.push(other);
                out[l] = (n, other);
                frontier.push(other);
            }
        }
    }
    out
}

/// Largest active-power balance residual over all nodes and slots, in kW,
/// with demand recomputed from the day profiles.
pub fn balance_residual(inst: &PlanningInstance, sol: &MasterSolution, bh: usize, island: bool) -> f64 {
    let ends = orient(inst);
    let base = inst.grid.s_base;
    let pcc = inst.nodes.iter().find(|n| n.is_pcc).unwrap().id;
    let blocks = 24 / bh;
    let mut worst: f64 = 0.0;
    for (slot, s) in sol.schedules.iter().enumerate() {
        let (o, b) = (slot / blocks, slot % blocks);
        let isl = s.island.as_ref();
        let (p_gen, p_line) = match (island, isl) {
            (true, Some(i)) => (&i.p_gen, &i.p_line),
            _ => (&s.p_gen, &s.p_line),
        };
        for node in &inst.nodes {
            let mut r = 0.0;
            for (l, &(a, c)) in ends.iter().enumerate() {
                if c == node.id {
                    r += p_line[l];
                }
                if a == node.id {
                    r -= p_line[l];
                }
            }
            for (g, gen) in inst.generators.iter().enumerate() {
                if gen.node == node.id {
                    r += p_gen[g];
                }
            }
            if node.id == pcc && !island {
                r += s.p_import - s.p_export;
            }
            for (l, load) in inst.loads.iter().enumerate() {
                if load.node != node.id {
                    continue;
                }
                let p = load.nominal_kva * block_mean(inst, o, l, b, bh) * load.power_factor / base;
                let constant = (1.0 - load.flexible_share) * p;
                if island {
                    let i = isl.unwrap();
                    r -= if i.connected[l] { constant } else { 0.0 };
                    r -= s.d_pf[l] + i.dh_plus[l] - i.dh_minus[l];
                } else {
                    r -= constant + s.d_pf[l];
                }
            }
            worst = worst.max(r.abs() * base);
        }
    }
    worst
}

