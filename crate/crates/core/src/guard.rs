//! Transient-security check of scheduled grid exchange and the resulting
//! tightening of exchange bounds.
//!
//! Losing the grid tie removes the scheduled exchange as a step disturbance:
//! an import loss is a generation loss (`delta_p = +p_b`, frequency falls), an
//! export loss a load loss (`delta_p = -p_s`). All limits are magnitudes, so
//! both directions are checked with `|delta_p|`.

use log::warn;
use mgplan_optim::{solve_lp, MixedIntegerProgram, Scalar, SolverError};

use crate::error::FrequencyError;
use crate::freq::{self, AggregateFrequencyParams, FleetUnit};
use crate::instance::SecurityLimits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Binding {
    Rocof,
    Nadir,
    SteadyState,
    None,
}

impl Binding {
    pub fn as_str(self) -> &'static str {
        match self {
            Binding::Rocof => "rocof",
            Binding::Nadir => "nadir",
            Binding::SteadyState => "ss",
            Binding::None => "none",
        }
    }
}

/// Hz (or Hz/s) of each metric per p.u. of disturbance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity<T> {
    pub rocof: T,
    pub nadir: T,
    pub ss: T,
}

impl<T: Scalar> Sensitivity<T> {
    /// Closed-form sensitivities; fails for overdamped fleets.
    pub fn closed_form(params: &AggregateFrequencyParams<T>, f0: T) -> Result<Self, FrequencyError> {
        let m = freq::metrics(params, T::one(), f0)?;
        Ok(Self {
            rocof: m.rocof.abs(),
            nadir: m.nadir.abs(),
            ss: m.ss_dev.abs(),
        })
    }

    /// Like [`closed_form`](Self::closed_form) but takes the nadir from
    /// simulation when the fleet is overdamped.
    pub fn for_units(units: &[FleetUnit<T>], load_damping: T, f0: T) -> Result<Self, FrequencyError> {
        let p = freq::aggregate_units(units, load_damping)?;
        if p.m <= T::zero() {
            // No inertia: any disturbance has unbounded RoCoF.
            return Ok(Self {
                rocof: T::infinity(),
                nadir: f0 / (p.d + p.r_g),
                ss: f0 / (p.d + p.r_g),
            });
        }
        let gain = freq::nadir_gain(units, load_damping)?;
        Ok(Self {
            rocof: f0 / p.m,
            nadir: f0 * gain / (p.d + p.r_g),
            ss: f0 / (p.d + p.r_g),
        })
    }
}

/// Largest disturbance (p.u.) that keeps all three metrics within limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecureLimit<T> {
    pub p_max: T,
    pub binding: Binding,
    pub rocof_bound: T,
    pub nadir_bound: T,
    pub ss_bound: T,
}

impl<T: Scalar> SecureLimit<T> {
    pub fn new(s: &Sensitivity<T>, limits: &SecurityLimits) -> Self {
        let bound = |lim: f64, k: T| {
            let lim = T::lit(lim);
            if lim.is_infinite() {
                T::infinity()
            } else {
                lim / k
            }
        };
        let rocof_bound = bound(limits.rocof, s.rocof);
        let nadir_bound = bound(limits.nadir, s.nadir);
        let ss_bound = bound(limits.ss, s.ss);
        let mut best = (T::infinity(), Binding::None);
        for (b, tag) in [
            (rocof_bound, Binding::Rocof),
            (nadir_bound, Binding::Nadir),
            (ss_bound, Binding::SteadyState),
        ] {
            if b < best.0 {
                best = (b, tag);
            }
        }
        Self {
            p_max: best.0,
            binding: best.1,
            rocof_bound,
            nadir_bound,
            ss_bound,
        }
    }
}

/// Closed-form secure limit for aggregate parameters.
pub fn max_secure_disturbance<T: Scalar>(
    params: &AggregateFrequencyParams<T>,
    limits: &SecurityLimits,
    f0: T,
) -> Result<SecureLimit<T>, FrequencyError> {
    Ok(SecureLimit::new(&Sensitivity::closed_form(params, f0)?, limits))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectiveDeviation<T> {
    /// Reduction of scheduled import needed, p.u., non-negative.
    pub dp_b: T,
    pub dp_s: T,
    pub binding: Binding,
}

impl<T: Scalar> CorrectiveDeviation<T> {
    pub fn max(&self) -> T {
        self.dp_b.max(self.dp_s)
    }
}

/// Smallest change of the scheduled exchange that makes islanding secure.
pub fn corrective_deviation<T: Scalar>(p_b: T, p_s: T, limit: &SecureLimit<T>) -> CorrectiveDeviation<T> {
    let dp_b = (p_b.abs() - limit.p_max).max(T::zero());
    let dp_s = (p_s.abs() - limit.p_max).max(T::zero());
    let binding = if dp_b > T::zero() || dp_s > T::zero() {
        limit.binding
    } else {
        Binding::None
    };
    CorrectiveDeviation { dp_b, dp_s, binding }
}

fn oracle_one<T: Scalar>(
    p: T,
    s: &Sensitivity<T>,
    limits: &SecurityLimits,
) -> Result<T, SolverError> {
    let mut lp = MixedIntegerProgram::<T>::new("feasibility");
    let up = lp.add_var("dp_plus", T::zero(), T::infinity());
    let down = lp.add_var("dp_minus", T::zero(), T::infinity());
    lp.set_cost(up, T::one());
    lp.set_cost(down, T::one());
    for (name, k, lim) in [
        ("rocof", s.rocof, limits.rocof),
        ("nadir", s.nadir, limits.nadir),
        ("ss", s.ss, limits.ss),
    ] {
        let lim = T::lit(lim);
        if lim.is_infinite() || k.is_infinite() && p == T::zero() {
            continue;
        }
        if k.is_infinite() {
            // Only a zero disturbance is admissible.
            lp.add_row(name, [(up, T::one()), (down, -T::one())], mgplan_optim::Sense::Eq, -p);
            continue;
        }
        // -lim <= k (p + up - down) <= lim
        lp.add_ranged_row(name, [(up, k), (down, -k)], -lim - k * p, lim - k * p);
    }
    let out = solve_lp(&lp)?;
    if !out.is_optimal() {
        return Err(SolverError::NumericalFailure(format!("feasibility LP ended {:?}", out.status)));
    }
    Ok(out.primal[up.index()] + out.primal[down.index()])
}

/// Solves the deviation problem literally as an LP; a test oracle for
/// [`corrective_deviation`].
pub fn feasibility_lp_oracle<T: Scalar>(
    p_b: T,
    p_s: T,
    s: &Sensitivity<T>,
    limits: &SecurityLimits,
) -> Result<CorrectiveDeviation<T>, SolverError> {
    let dp_b = oracle_one(p_b, s, limits)?;
    let dp_s = oracle_one(-p_s, s, limits)?;
    let limit = SecureLimit::new(s, limits);
    let binding = if dp_b > T::zero() || dp_s > T::zero() {
        limit.binding
    } else {
        Binding::None
    };
    Ok(CorrectiveDeviation { dp_b, dp_s, binding })
}

/// New exchange caps: where a deviation exceeds `eps` the cap becomes
/// `scheduled - alpha * deviation` (never below zero); elsewhere it is kept.
pub fn tighten_bounds<T: Scalar>(
    scheduled: &[(T, T)],
    deviations: &[CorrectiveDeviation<T>],
    alpha: T,
    eps: T,
    bounds: &[(T, T)],
) -> Vec<(T, T)> {
    assert!(alpha > T::zero() && alpha <= T::one(), "alpha must lie in (0, 1]");
    let cut = |p: T, dp: T, old: T, slot: usize| {
        if dp <= eps {
            return old;
        }
        let new = p - alpha * dp;
        if new < T::zero() {
            warn!("slot {slot}: tightened bound {new} clamped to 0");
            T::zero()
        } else {
            new.min(old)
        }
    };
    scheduled
        .iter()
        .zip(deviations)
        .zip(bounds)
        .enumerate()
        .map(|(slot, ((&(pb, ps), dev), &(bb, bs)))| {
            (cut(pb, dev.dp_b, bb, slot), cut(ps, dev.dp_s, bs, slot))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LIMITS: SecurityLimits = SecurityLimits {
        rocof: 2.0,
        nadir: 0.8,
        ss: 0.2,
        load_damping: 0.0,
    };

    fn example() -> AggregateFrequencyParams<f64> {
        AggregateFrequencyParams {
            m: 14.0,
            d: 25.0,
            r_g: 100.0 / 3.0,
            f_g: 0.35,
            t: 2.0,
        }
    }

    #[test]
    fn hand_evaluated_limit() {
        let lim = max_secure_disturbance(&example(), &LIMITS, 50.0).unwrap();
        assert!((lim.rocof_bound - 0.56).abs() < 1e-12);
        assert!((lim.nadir_bound - 0.5715).abs() < 1e-3, "{}", lim.nadir_bound);
        assert!((lim.ss_bound - 0.2 / 50.0 * (25.0 + 100.0 / 3.0)).abs() < 1e-12);
        assert!((lim.p_max - 0.23333).abs() < 1e-4);
        assert_eq!(lim.binding, Binding::SteadyState);
    }

    #[test]
    fn vacuous_limits() {
        let inf = SecurityLimits {
            rocof: f64::INFINITY,
            nadir: f64::INFINITY,
            ss: f64::INFINITY,
            load_damping: 0.0,
        };
        let lim = max_secure_disturbance(&example(), &inf, 50.0).unwrap();
        assert_eq!(lim.p_max, f64::INFINITY);
        assert_eq!(lim.binding, Binding::None);
    }

    #[test]
    fn rocof_bound_scales_with_inertia() {
        let tight = SecurityLimits { rocof: 0.1, ..LIMITS };
        let a = max_secure_disturbance(&example(), &tight, 50.0).unwrap();
        let mut p = example();
        p.m *= 2.0;
        let b = max_secure_disturbance(&p, &tight, 50.0).unwrap();
        assert_eq!(a.binding, Binding::Rocof);
        assert!((b.p_max - 2.0 * a.p_max).abs() < 1e-15);
    }

    #[test]
    fn deviations() {
        let lim = max_secure_disturbance(&example(), &LIMITS, 50.0).unwrap();
        let d = corrective_deviation(0.3, 0.0, &lim);
        assert!((d.dp_b - (0.3 - lim.p_max)).abs() < 1e-15);
        assert!((d.dp_b - 0.0667).abs() < 1e-4);
        assert_eq!(d.binding, Binding::SteadyState);
        assert_eq!(corrective_deviation(0.0, 0.0, &lim).max(), 0.0);
        let d = corrective_deviation(0.0, 0.2, &lim);
        assert_eq!(d.dp_s, 0.0);
        assert_eq!(d.binding, Binding::None);
    }

    #[test]
    fn oracle_agrees_on_examples() {
        let s = Sensitivity::closed_form(&example(), 50.0).unwrap();
        let o = feasibility_lp_oracle(0.3, 0.0, &s, &LIMITS).unwrap();
        let c = corrective_deviation(0.3, 0.0, &SecureLimit::new(&s, &LIMITS));
        assert!((o.dp_b - c.dp_b).abs() < 1e-12);
        assert_eq!(feasibility_lp_oracle(0.0, 0.0, &s, &LIMITS).unwrap().max(), 0.0);
    }

    #[test]
    fn tightening() {
        let dev = |dp_b, dp_s| CorrectiveDeviation { dp_b, dp_s, binding: Binding::SteadyState };
        let out: Vec<(f64, f64)> = tighten_bounds(
            &[(100.0, 0.0), (0.0, 10.0), (50.0, 0.0)],
            &[dev(20.0, 0.0), dev(0.0, 20.0), dev(0.0, 0.0)],
            0.6,
            1.0,
            &[(150.0, 150.0), (150.0, 150.0), (150.0, 150.0)],
        );
        assert!((out[0].0 - 88.0).abs() < 1e-12);
        assert_eq!(out[0].1, 150.0);
        let clamped = tighten_bounds(&[(0.0, 10.0)], &[dev(0.0, 20.0)], 0.7, 1.0, &[(1.0, 1.0)]);
        assert_eq!(clamped[0].1, 0.0);
        assert_eq!(out[2], (150.0, 150.0));
    }
}
