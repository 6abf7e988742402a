//! Post-islanding frequency response of the committed fleet.
//!
//! Units are aggregated into a centre-of-inertia model whose step response has
//! closed-form RoCoF, nadir and quasi-steady-state deviation once converter
//! time constants are neglected. The full model, converter lags included, is
//! integrated with classical RK4 as a cross-check and as the fallback for
//! overdamped fleets.
//!
//! Power is in p.u. of the system base and frequency deviations are in p.u.
//! of `f0` unless a field says Hz. A positive `delta_p` is a loss of net
//! generation (the frequency falls).

use mgplan_optim::Scalar;

use crate::error::FrequencyError;
use crate::instance::{GeneratorKind, PlanningInstance};

/// Turbine time constant used when no synchronous unit is committed; it
/// cancels out of the reduced model in that case.
const DEFAULT_TURBINE_T: f64 = 1.0;
const DIVERGENCE_LIMIT: f64 = 10.0;

/// One committed unit with constants already on the system base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FleetUnit<T> {
    Synchronous { m: T, d: T, k: T, r: T, f: T, t: T },
    Vsm { m: T, d: T, t: T },
    Droop { k: T, r: T, t: T },
    GridFeeding,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateFrequencyParams<T> {
    pub m: T,
    pub d: T,
    pub r_g: T,
    pub f_g: T,
    pub t: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyMetrics<T> {
    /// Hz/s.
    pub rocof: T,
    /// Hz.
    pub nadir: T,
    /// Hz.
    pub ss_dev: T,
    /// Seconds; infinite when the response never overshoots.
    pub t_m: T,
    pub omega_n: T,
    pub zeta: T,
    pub omega_d: T,
}

/// Frequency deviation sampled every `dt` seconds starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub dt: T,
    pub values: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn time(&self, i: usize) -> T {
        T::from_usize(i).expect("sample index fits the scalar") * self.dt
    }
}

/// Converts the committed generators of a per-unit instance into fleet units.
pub fn fleet_units<T: Scalar>(
    instance: &PlanningInstance,
    commitment: &[bool],
) -> Result<Vec<FleetUnit<T>>, FrequencyError> {
    if !instance.per_unit {
        return Err(FrequencyError::InvalidParams("instance must be in per-unit".into()));
    }
    if commitment.len() != instance.generators.len() {
        return Err(FrequencyError::InvalidParams(format!(
            "commitment has {} entries for {} generators",
            commitment.len(),
            instance.generators.len()
        )));
    }
    let get = |v: Option<f64>, name: &str, id: &str| {
        v.map(T::lit)
            .ok_or_else(|| FrequencyError::InvalidParams(format!("generator {id} lacks {name}")))
    };
    let mut units = Vec::new();
    for (g, &on) in instance.generators.iter().zip(commitment) {
        if !on {
            continue;
        }
        let id = g.id.as_str();
        units.push(match g.kind {
            GeneratorKind::Synchronous => FleetUnit::Synchronous {
                m: get(g.m, "m", id)?,
                d: get(g.d, "d", id)?,
                k: get(g.k, "k", id)?,
                r: get(g.r, "r", id)?,
                f: get(g.f, "f", id)?,
                t: get(g.t, "t", id)?,
            },
            GeneratorKind::Vsm => FleetUnit::Vsm {
                m: get(g.m, "m", id)?,
                d: get(g.d, "d", id)?,
                t: get(g.t, "t", id)?,
            },
            GeneratorKind::Droop => FleetUnit::Droop {
                k: get(g.k, "k", id)?,
                r: get(g.r, "r", id)?,
                t: get(g.t, "t", id)?,
            },
            GeneratorKind::GridFeeding => FleetUnit::GridFeeding,
        });
    }
    Ok(units)
}

/// Sums inertia and damping over the fleet. Droop converters count as
/// damping. `f_g` is the gain-weighted sum `sum F_i K_i / R_i`, the
/// coefficient the turbine fractions contribute to the reduced model's
/// damping ratio. `t` is the mean synchronous turbine constant weighted by
/// droop gain, which for identical ratings is the capacity-weighted mean.
pub fn aggregate_units<T: Scalar>(
    units: &[FleetUnit<T>],
    load_damping: T,
) -> Result<AggregateFrequencyParams<T>, FrequencyError> {
    let zero = T::zero();
    let (mut m, mut d, mut r_g, mut f_num, mut t_num) = (zero, load_damping, zero, zero, zero);
    for unit in units {
        match *unit {
            FleetUnit::Synchronous { m: mi, d: di, k, r, f, t } => {
                let gain = k / r;
                m += mi;
                d += di;
                r_g += gain;
                f_num += f * gain;
                t_num += t * gain;
            }
            FleetUnit::Vsm { m: mv, d: dv, .. } => {
                m += mv;
                d += dv;
            }
            FleetUnit::Droop { k, r, .. } => d += k / r,
            FleetUnit::GridFeeding => {}
        }
    }
    if m <= zero && d + r_g <= zero {
        return Err(FrequencyError::NoFrequencyResponse);
    }
    let (f_g, t) = if r_g > zero {
        (f_num, t_num / r_g)
    } else {
        (zero, T::lit(DEFAULT_TURBINE_T))
    };
    Ok(AggregateFrequencyParams { m, d, r_g, f_g, t })
}

/// Aggregates the committed units of a per-unit instance.
pub fn aggregate_params<T: Scalar>(
    instance: &PlanningInstance,
    commitment: &[bool],
) -> Result<AggregateFrequencyParams<T>, FrequencyError> {
    let units = fleet_units::<T>(instance, commitment)?;
    aggregate_units(&units, T::lit(instance.limits.load_damping))
}

fn check_params<T: Scalar>(p: &AggregateFrequencyParams<T>) -> Result<(), FrequencyError> {
    let zero = T::zero();
    if !(p.m > zero) {
        return Err(FrequencyError::InvalidParams("inertia must be positive".into()));
    }
    if !(p.d + p.r_g > zero) {
        return Err(FrequencyError::InvalidParams("D + R_g must be positive".into()));
    }
    if !(p.t > zero) || p.f_g < zero || (p.r_g > zero && p.f_g > p.r_g) {
        return Err(FrequencyError::InvalidParams("turbine parameters out of range".into()));
    }
    Ok(())
}

/// Natural frequency, damping ratio and damped frequency of the reduced model.
pub fn modal<T: Scalar>(p: &AggregateFrequencyParams<T>) -> (T, T) {
    let two = T::lit(2.0);
    let omega_n = ((p.d + p.r_g) / (p.m * p.t)).sqrt();
    let zeta = (p.m + p.t * (p.d + p.f_g)) / (two * (p.m * p.t * (p.d + p.r_g)).sqrt());
    (omega_n, zeta)
}

/// Ratio of nadir to quasi-steady-state deviation, and the nadir time.
fn nadir_shape<T: Scalar>(p: &AggregateFrequencyParams<T>) -> Result<(T, T, T, T), FrequencyError> {
    let (omega_n, zeta) = modal(p);
    let overshoot = (p.t * (p.r_g - p.f_g) / p.m).max(T::zero()).sqrt();
    if overshoot == T::zero() {
        // No governor lag: first-order response settling without overshoot.
        let omega_d = omega_n * (T::one() - zeta * zeta).max(T::zero()).sqrt();
        return Ok((T::one(), T::infinity(), omega_n, omega_d));
    }
    if zeta >= T::one() {
        return Err(FrequencyError::OverdampedUnsupported {
            zeta: zeta.to_f64_lossy(),
        });
    }
    let omega_d = omega_n * (T::one() - zeta * zeta).sqrt();
    // atan2 keeps t_m positive when zeta*omega_n < 1/T.
    let t_m = omega_d.atan2(zeta * omega_n - p.t.recip()) / omega_d;
    let gain = T::one() + overshoot * (-zeta * omega_n * t_m).exp();
    Ok((gain, t_m, omega_n, omega_d))
}

/// Closed-form RoCoF, nadir and steady-state deviation for a step loss of
/// `delta_p` p.u.
pub fn metrics<T: Scalar>(
    p: &AggregateFrequencyParams<T>,
    delta_p: T,
    f0: T,
) -> Result<FrequencyMetrics<T>, FrequencyError> {
    check_params(p)?;
    let (gain, t_m, omega_n, omega_d) = nadir_shape(p)?;
    let (_, zeta) = modal(p);
    let ss = -delta_p / (p.d + p.r_g);
    Ok(FrequencyMetrics {
        rocof: -f0 * delta_p / p.m,
        nadir: f0 * ss * gain,
        ss_dev: f0 * ss,
        t_m,
        omega_n,
        zeta,
        omega_d,
    })
}

/// `|nadir| / |steady state|`, from the closed form when the response is
/// underdamped and from simulation otherwise.
pub fn nadir_gain<T: Scalar>(
    units: &[FleetUnit<T>],
    load_damping: T,
) -> Result<T, FrequencyError> {
    let p = aggregate_units(units, load_damping)?;
    check_params(&p)?;
    match nadir_shape(&p) {
        Ok((gain, ..)) => Ok(gain),
        Err(FrequencyError::OverdampedUnsupported { .. }) => {
            let (omega_n, zeta) = modal(&p);
            let settle = T::lit(12.0) / (zeta * omega_n).min(omega_n);
            let dt = T::lit(1e-3);
            let traj = simulate_units(units, load_damping, T::one(), dt, settle)?;
            let (nadir, _) = nadir_from_trajectory(&traj);
            Ok(nadir.abs() * (p.d + p.r_g))
        }
        Err(e) => Err(e),
    }
}

struct Realization<T> {
    /// Swing-equation inertia (synchronous units only).
    m: T,
    /// Damping acting directly on the frequency deviation.
    d_direct: T,
    /// Per lag state: `x' = (gain * df - x) / tau`; the state adds to the
    /// power drawn from the swing equation.
    lags: Vec<(T, T)>,
}

fn realize<T: Scalar>(units: &[FleetUnit<T>], load_damping: T) -> Realization<T> {
    let mut m = T::zero();
    let mut d_direct = load_damping;
    let mut lags = Vec::new();
    for unit in units {
        match *unit {
            FleetUnit::Synchronous { m: mi, d, k, r, f, t } => {
                m += mi;
                d_direct += d + f * k / r;
                lags.push(((T::one() - f) * k / r, t));
            }
            FleetUnit::Vsm { m: mv, d, t } => {
                d_direct += mv / t;
                lags.push((d - mv / t, t));
            }
            FleetUnit::Droop { k, r, t } => lags.push((k / r, t)),
            FleetUnit::GridFeeding => {}
        }
    }
    Realization { m, d_direct, lags }
}

/// Integrates the full fleet model for a step loss of `delta_p` with RK4.
pub fn simulate_units<T: Scalar>(
    units: &[FleetUnit<T>],
    load_damping: T,
    delta_p: T,
    dt: T,
    horizon: T,
) -> Result<Trajectory<T>, FrequencyError> {
    if !(dt > T::zero() && dt <= T::lit(1e-3) && horizon > T::zero()) {
        return Err(FrequencyError::BadStep);
    }
    aggregate_units(units, load_damping)?;
    let sys = realize(units, load_damping);
    let n = sys.lags.len();
    let steps = (horizon / dt).ceil().to_usize().unwrap_or(0);
    let limit = T::lit(DIVERGENCE_LIMIT);
    let algebraic = sys.m <= T::zero();
    if algebraic && sys.d_direct <= T::zero() {
        return Err(FrequencyError::NoFrequencyResponse);
    }

    // State: [df, x_1..x_n] with df dynamic, or [x_1..x_n] with df algebraic.
    let offset = usize::from(!algebraic);
    let freq = |s: &[T]| -> T {
        if algebraic {
            let lag_power: T = s.iter().copied().sum();
            -(delta_p + lag_power) / sys.d_direct
        } else {
            s[0]
        }
    };
    let deriv = |s: &[T], out: &mut [T]| {
        let df = freq(s);
        let lag_power: T = s[offset..].iter().copied().sum();
        if !algebraic {
            out[0] = (-delta_p - sys.d_direct * df - lag_power) / sys.m;
        }
        for (i, &(gain, tau)) in sys.lags.iter().enumerate() {
            out[offset + i] = (gain * df - s[offset + i]) / tau;
        }
    };

    let dim = n + offset;
    let mut state = vec![T::zero(); dim];
    let mut values = Vec::with_capacity(steps + 1);
    values.push(freq(&state));
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![T::zero(); dim],
        vec![T::zero(); dim],
        vec![T::zero(); dim],
        vec![T::zero(); dim],
        vec![T::zero(); dim],
    );
    let half = T::lit(0.5);
    let sixth = T::lit(1.0 / 6.0);
    let two = T::lit(2.0);
    for _ in 0..steps {
        deriv(&state, &mut k1);
        for i in 0..dim {
            tmp[i] = state[i] + half * dt * k1[i];
        }
        deriv(&tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = state[i] + half * dt * k2[i];
        }
        deriv(&tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = state[i] + dt * k3[i];
        }
        deriv(&tmp, &mut k4);
        for i in 0..dim {
            state[i] += sixth * dt * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
        let df = freq(&state);
        if !(df.abs() <= limit) {
            return Err(FrequencyError::UnstableModel);
        }
        values.push(df);
    }
    Ok(Trajectory { dt, values })
}

/// Simulates the committed units of a per-unit instance.
pub fn simulate_step_response<T: Scalar>(
    instance: &PlanningInstance,
    commitment: &[bool],
    delta_p: T,
    dt: T,
    horizon: T,
) -> Result<Trajectory<T>, FrequencyError> {
    let units = fleet_units::<T>(instance, commitment)?;
    simulate_units(&units, T::lit(instance.limits.load_damping), delta_p, dt, horizon)
}

/// First local extremum of the deviation, or the endpoint of a monotone
/// trajectory, with its time. Ties keep the earliest sample.
pub fn nadir_from_trajectory<T: Scalar>(traj: &Trajectory<T>) -> (T, T) {
    let v = &traj.values;
    let Some(&last) = v.last() else {
        return (T::zero(), T::zero());
    };
    for i in 1..v.len().saturating_sub(1) {
        let prev = v[i] - v[i - 1];
        let next = v[i + 1] - v[i];
        if v[i] != T::zero() && prev != T::zero() && (prev > T::zero()) != (next > T::zero()) {
            return (v[i], traj.time(i));
        }
    }
    (last, traj.time(v.len() - 1))
}

/// RoCoF estimate: slope at `t = 0` of a least-squares quadratic fitted over
/// `[start, start + window]`. With `start = 0` and a short window this is the
/// initial slope; a later start skips fast converter transients.
pub fn rocof_from_trajectory<T: Scalar>(traj: &Trajectory<T>, start: T, window: T) -> T {
    let i0 = (start / traj.dt).round().to_usize().unwrap_or(0);
    let len = (window / traj.dt).round().to_usize().unwrap_or(2).max(2);
    let end = (i0 + len).min(traj.values.len() - 1);
    // Normal equations for v = a + b t + c t^2.
    let mut s = [T::zero(); 5];
    let mut r = [T::zero(); 3];
    for i in i0..=end {
        let t = traj.time(i);
        let v = traj.values[i];
        let mut p = T::one();
        for sk in s.iter_mut() {
            *sk += p;
            p *= t;
        }
        r[0] += v;
        r[1] += v * t;
        r[2] += v * t * t;
    }
    let a = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let det3 = |m: [[T; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(a);
    let mut ab = a;
    for (row, &rv) in ab.iter_mut().zip(&r) {
        row[1] = rv;
    }
    det3(ab) / det
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sg(scale: f64) -> FleetUnit<f64> {
        FleetUnit::Synchronous {
            m: 14.0 * scale,
            d: 25.0 * scale,
            k: scale,
            r: 0.03,
            f: 0.35,
            t: 2.0,
        }
    }

    #[test]
    fn single_machine_on_base() {
        let p = aggregate_units(&[sg(1.0)], 0.0).unwrap();
        assert_eq!((p.m, p.d, p.t), (14.0, 25.0, 2.0));
        assert!((p.r_g - 100.0 / 3.0).abs() < 1e-12);
        assert!((p.f_g - 0.35 * 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn droop_adds_damping_only() {
        let base = aggregate_units(&[sg(1.0)], 0.0).unwrap();
        let with = aggregate_units(
            &[sg(1.0), FleetUnit::Droop { k: 1.0, r: 0.05, t: 0.01 }, FleetUnit::GridFeeding],
            0.0,
        )
        .unwrap();
        assert_eq!(with.m, base.m);
        assert!((with.d - base.d - 20.0).abs() < 1e-12);
        let feeding = aggregate_units(&[sg(1.0), FleetUnit::GridFeeding], 0.0).unwrap();
        assert_eq!(feeding, base);
    }

    #[test]
    fn nothing_committed() {
        assert_eq!(
            aggregate_units::<f64>(&[FleetUnit::GridFeeding], 0.0),
            Err(FrequencyError::NoFrequencyResponse)
        );
    }

    #[test]
    fn hand_evaluated_metrics() {
        let p = AggregateFrequencyParams::<f64> { m: 14.0, d: 25.0, r_g: 100.0 / 3.0, f_g: 0.35, t: 2.0 };
        let m = metrics(&p, 0.5, 50.0).unwrap();
        assert!((m.rocof + 25.0 / 14.0).abs() < 1e-12);
        assert!((m.ss_dev + 25.0 / (25.0 + 100.0 / 3.0)).abs() < 1e-12);
        assert!((m.nadir + 0.700).abs() < 1e-3, "{}", m.nadir);
        assert!((m.t_m - 1.066).abs() < 1e-3, "{}", m.t_m);
        let zero = metrics(&p, 0.0, 50.0).unwrap();
        assert_eq!((zero.rocof, zero.nadir, zero.ss_dev), (0.0, 0.0, 0.0));
    }

    #[test]
    fn overdamped_is_reported() {
        let p = AggregateFrequencyParams { m: 1.0, d: 100.0, r_g: 1.0, f_g: 0.5, t: 5.0 };
        assert!(matches!(
            metrics(&p, 0.1, 50.0),
            Err(FrequencyError::OverdampedUnsupported { .. })
        ));
    }

    #[test]
    fn zero_input_gives_zero_trajectory() {
        let traj = simulate_units(&[sg(1.0)], 0.0, 0.0, 1e-3, 1.0).unwrap();
        assert!(traj.values.iter().all(|&v| v == 0.0));
        assert_eq!(traj.values.len(), 1001);
    }

    #[test]
    fn nadir_of_constructed_signals() {
        let mono = Trajectory { dt: 0.1, values: vec![0.0, -0.1, -0.2, -0.3] };
        assert_eq!(nadir_from_trajectory(&mono), (-0.3, 0.30000000000000004));
        let values: Vec<f64> = (0..400).map(|i| -(i as f64 * 0.01).sin()).collect();
        let sine = Trajectory { dt: 0.01, values };
        let (v, t) = nadir_from_trajectory(&sine);
        assert!((v + 1.0).abs() < 1e-4 && (t - std::f64::consts::FRAC_PI_2).abs() < 0.01);
    }

    #[test]
    fn step_rejects_coarse_dt() {
        assert_eq!(
            simulate_units(&[sg(1.0)], 0.0, 0.1, 0.01, 1.0),
            Err(FrequencyError::BadStep)
        );
    }

    #[test]
    fn converter_only_fleet_is_algebraic_in_frequency() {
        let units = [FleetUnit::Droop { k: 1.0, r: 0.05, t: 0.01 }];
        let traj = simulate_units::<f64>(&units, 1.0, 0.21, 1e-4, 0.5).unwrap();
        let last = *traj.values.last().unwrap();
        assert!((last + 0.21 / 21.0).abs() < 1e-9);
    }
}
