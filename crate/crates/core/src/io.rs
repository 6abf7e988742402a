//! Files in and out: instances, profile CSVs, plot data, plan reports and the
//! bundled 18-node network.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::instance::{PlanningInstance, HOURS};
use crate::orchestrator::{IterationRecord, RunConfig};
use crate::planner::InvestmentPlan;
use crate::scenario::cluster_days;

/// Source of the bundled CIGRE-derived instance.
pub const CIGRE18_TOML: &str = include_str!("../data/cigre18.toml");
/// Profile generator settings behind the bundled representative days.
pub const CIGRE18_SEED: u64 = 2016;
pub const CIGRE18_YEAR_DAYS: usize = 365;
pub const CIGRE18_K: usize = 4;

/// Normalized residential load shape, hour 0 to 23.
const LOAD_SHAPE: [f64; HOURS] = [
    0.45, 0.40, 0.38, 0.37, 0.38, 0.42, 0.55, 0.68, 0.72, 0.66, 0.60, 0.58, 0.58, 0.60, 0.63, 0.70, 0.82, 0.93,
    0.98, 1.00, 0.97, 0.88, 0.72, 0.55,
];

fn file_error(path: &Path, source: std::io::Error) -> IoError {
    IoError::File {
        path: path.display().to_string(),
        source,
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| file_error(path, e))?;
    tmp.write_all(bytes).map_err(|e| file_error(path, e))?;
    tmp.persist(path).map_err(|e| file_error(path, e.error))?;
    Ok(())
}

/// Parses and validates an instance file.
pub fn load_instance(path: impl AsRef<Path>) -> Result<PlanningInstance, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| file_error(path, e))?;
    parse_instance(&text)
}

pub fn parse_instance(text: &str) -> Result<PlanningInstance, IoError> {
    let instance = PlanningInstance::from_toml(text)?;
    let report = instance.validate();
    if !report.is_ok() {
        return Err(crate::error::InstanceError::Invalid(report).into());
    }
    Ok(instance)
}

pub fn save_instance(instance: &PlanningInstance, path: impl AsRef<Path>) -> Result<(), IoError> {
    write_atomic(path.as_ref(), instance.to_toml()?.as_bytes())
}

/// The bundled 18-node instance in physical units.
pub fn cigre18() -> PlanningInstance {
    parse_instance(CIGRE18_TOML).expect("bundled instance is valid")
}

/// A year of synthetic daily vectors in the feature-major layout used by
/// representative days: 24 load multipliers per load, then 24 capacity
/// factors per PV unit.
///
/// Loads follow a residential shape with evening peak, a winter-high seasonal
/// swing of ±12%, a shared day factor and independent hourly noise. PV is a
/// `sin^1.3` bell over a daylength of 12 ± 2 h centred on 12:30 with peak
/// `0.75 * (0.75 + 0.25 cos)` of capacity; a quarter of days are cloudy
/// (factor 0.3 to 0.7), the rest clear (0.85 to 1.0). All PV units share the
/// weather of their day.
pub fn synth_profiles(seed: u64, days: usize, n_loads: usize, n_pv: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let day_noise = Normal::new(0.0, 0.04).expect("valid sigma");
    let hour_noise = Normal::new(0.0, 0.02).expect("valid sigma");
    let mut out = Vec::with_capacity(days);
    for d in 0..days {
        let winter = (2.0 * PI * (d as f64 - 196.0) / 365.0).cos();
        let summer = (2.0 * PI * (d as f64 - 172.0) / 365.0).cos();
        let season = 0.88 + 0.12 * winter;
        let day_factor = 1.0 + day_noise.sample(&mut rng);
        let mut v = Vec::with_capacity((n_loads + n_pv) * HOURS);
        for _ in 0..n_loads {
            for shape in LOAD_SHAPE {
                let x = shape * season * day_factor * (1.0 + hour_noise.sample(&mut rng));
                v.push(x.max(0.0));
            }
        }
        let daylength = 12.0 + 2.0 * summer;
        let sunrise = 12.5 - daylength / 2.0;
        let peak = 0.75 * (0.75 + 0.25 * summer);
        let weather = if rng.random::<f64>() < 0.25 {
            rng.random_range(0.3..0.7)
        } else {
            rng.random_range(0.85..1.0)
        };
        let bell: Vec<f64> = (0..HOURS)
            .map(|h| {
                let x = (h as f64 + 0.5 - sunrise) / daylength;
                if x > 0.0 && x < 1.0 {
                    peak * weather * (PI * x).sin().powf(1.3)
                } else {
                    0.0
                }
            })
            .collect();
        for _ in 0..n_pv {
            v.extend_from_slice(&bell);
        }
        out.push(v);
    }
    out
}

/// Replaces the representative days of `instance` with `k` clusters of a
/// synthetic year.
pub fn with_synthetic_days(
    instance: &PlanningInstance,
    seed: u64,
    year_days: usize,
    k: usize,
) -> Result<PlanningInstance, crate::error::ScenarioError> {
    let year = synth_profiles(seed, year_days, instance.loads.len(), instance.converter_units().len());
    let clustering = cluster_days(&year, k, seed)?;
    let mut out = instance.clone();
    out.days = clustering.days;
    Ok(out)
}

/// Writes daily vectors as `day,hour,<feature>...` rows.
pub fn write_profiles(path: impl AsRef<Path>, names: &[String], days: &[Vec<f64>]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["day".to_string(), "hour".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (d, day) in days.iter().enumerate() {
        if day.len() != names.len() * HOURS {
            return Err(IoError::Format(format!("day {d} has {} values", day.len())));
        }
        for h in 0..HOURS {
            let mut row = vec![d.to_string(), h.to_string()];
            row.extend((0..names.len()).map(|f| day[f * HOURS + h].to_string()));
            w.write_record(&row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| IoError::Format(e.to_string()))?;
    write_atomic(path.as_ref(), &bytes)
}

/// Reads a profile CSV back into feature names and daily vectors. Rows may
/// come in any order but every day must have all 24 hours.
pub fn read_profiles(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 3 || &header[0] != "day" || &header[1] != "hour" {
        return Err(IoError::Format("expected columns day,hour,<features>".into()));
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let nf = names.len();
    let mut days: Vec<Vec<Option<f64>>> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| IoError::Format(format!("row {}: bad {what}", i + 2));
        let d: usize = rec[0].trim().parse().map_err(|_| bad("day"))?;
        let h: usize = rec[1].trim().parse().map_err(|_| bad("hour"))?;
        if h >= HOURS || rec.len() != nf + 2 {
            return Err(bad("hour or width"));
        }
        if days.len() <= d {
            days.resize(d + 1, vec![None; nf * HOURS]);
        }
        for f in 0..nf {
            let v: f64 = rec[f + 2].trim().parse().map_err(|_| bad(&names[f]))?;
            days[d][f * HOURS + h] = Some(v);
        }
    }
    if days.is_empty() {
        return Err(IoError::Empty);
    }
    let days = days
        .into_iter()
        .enumerate()
        .map(|(d, day)| {
            day.into_iter()
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| IoError::Format(format!("day {d} is incomplete")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((names, days))
}

/// Currency rounded to integer cents.
pub fn cents(amount: f64) -> i64 {
    (amount * 100.0).round() as i64
}

pub fn format_cents(c: i64) -> String {
    let sign = if c < 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", c.abs() / 100, c.abs() % 100)
}

/// Writes `metrics.csv` (one row per day, block and iteration) and
/// `costs.csv` (one row per iteration) into `out_dir`.
pub fn emit_plot_csv(records: &[IterationRecord], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, IoError> {
    if records.is_empty() {
        return Err(IoError::Empty);
    }
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| file_error(dir, e))?;

    let mut m = csv::Writer::from_writer(Vec::new());
    m.write_record(["day", "hour", "iteration", "rocof", "nadir", "ss", "dp_b", "dp_s", "binding"])?;
    for rec in records {
        for h in &rec.metrics {
            m.write_record([
                h.day.to_string(),
                h.hour.to_string(),
                rec.iteration.to_string(),
                h.rocof.to_string(),
                h.nadir.to_string(),
                h.ss.to_string(),
                h.dp_b.to_string(),
                h.dp_s.to_string(),
                h.binding.as_str().to_string(),
            ])?;
        }
    }
    let metrics_path = dir.join("metrics.csv");
    write_atomic(&metrics_path, &m.into_inner().map_err(|e| IoError::Format(e.to_string()))?)?;

    let mut c = csv::Writer::from_writer(Vec::new());
    c.write_record([
        "iteration",
        "investment",
        "decisions",
        "operation",
        "shift_penalty",
        "disconnection_penalty",
        "total",
        "import_deviation_kw",
        "export_deviation_kw",
    ])?;
    for rec in records {
        let k = &rec.plan.costs;
        let mut decisions = rec.plan.built_generators.clone();
        decisions.extend(rec.plan.reinforced_lines.iter().map(|(a, b)| format!("L{a}-{b}")));
        c.write_record([
            rec.iteration.to_string(),
            format_cents(cents(k.investment)),
            decisions.join(" "),
            format_cents(cents(k.operation - k.shift_penalty)),
            format_cents(cents(k.shift_penalty)),
            format_cents(cents(k.disconnection)),
            format_cents(cents(k.total)),
            rec.import_deviation.to_string(),
            rec.export_deviation.to_string(),
        ])?;
    }
    let costs_path = dir.join("costs.csv");
    write_atomic(&costs_path, &c.into_inner().map_err(|e| IoError::Format(e.to_string()))?)?;
    Ok(vec![metrics_path, costs_path])
}

/// Costs in integer cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCents {
    pub investment: i64,
    pub operation: i64,
    pub shift_penalty: i64,
    pub disconnection: i64,
    pub total: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedPlan {
    pub built_generators: Vec<String>,
    pub reinforced_lines: Vec<[u32; 2]>,
    pub costs: CostCents,
}

impl From<&InvestmentPlan> for ReportedPlan {
    fn from(p: &InvestmentPlan) -> Self {
        let c = &p.costs;
        Self {
            built_generators: p.built_generators.clone(),
            reinforced_lines: p.reinforced_lines.iter().map(|&(a, b)| [a, b]).collect(),
            costs: CostCents {
                investment: cents(c.investment),
                operation: cents(c.operation),
                shift_penalty: cents(c.shift_penalty),
                disconnection: cents(c.disconnection),
                total: cents(c.total),
            },
        }
    }
}

/// Summary of a planning run, written as TOML next to the CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub instance: String,
    pub config: RunConfig,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
    pub iterations: usize,
    pub converged: bool,
    pub plan: ReportedPlan,
    pub outputs: Vec<String>,
}

impl PlanReport {
    pub fn to_toml(&self) -> Result<String, IoError> {
        toml::to_string(self).map_err(|e| IoError::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| IoError::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IoError> {
        write_atomic(path.as_ref(), self.to_toml()?.as_bytes())
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}
