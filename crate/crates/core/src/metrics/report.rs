use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EnergyBreakdown, EnergyModel, Event, PerfCounters};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Configuration that produced a run, echoed into every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigEcho {
    pub workload: String,
    pub mode: String,
    pub seed: u64,
    pub vlen: u32,
    pub nlanes: u32,
    pub nports: u32,
    pub n_banks: u32,
    pub scratchpad_bytes: u32,
    pub offload_depth: usize,
    pub modeswitch_latency: u64,
    pub max_cycles: u64,
}

impl ConfigEcho {
    /// Equal in everything except the mode.
    fn comparable(&self, other: &ConfigEcho) -> bool {
        let mut o = other.clone();
        o.mode.clone_from(&self.mode);
        *self == o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyReport {
    pub total: f64,
    pub ifetch: f64,
    pub by_event: EnergyBreakdown,
}

impl EnergyReport {
    pub fn new(counters: &PerfCounters, model: &EnergyModel) -> Self {
        let counts = counters.total();
        let (total, by_event) = model.energy(&counts);
        EnergyReport { total, ifetch: model.ifetch_energy(&counts), by_event }
    }
}

/// Result of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunStats {
    pub schema_version: u32,
    pub cycles: u64,
    pub timeout: bool,
    /// FNV-1a 64 over the output region.
    pub checksum: u64,
    pub energy: EnergyReport,
    pub counters: PerfCounters,
    pub config: ConfigEcho,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("functional divergence: checksum {split:#018x} vs {merge:#018x}")]
    Divergence { split: u64, merge: u64 },
    #[error("cannot compare a run that timed out")]
    Timeout,
    #[error("runs are not comparable: '{0}' vs '{1}'")]
    Incomparable(String, String),
    #[error("malformed report: {0}")]
    Parse(String),
}

/// Mode comparison of two runs of the same workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub workload: String,
    pub baseline_mode: String,
    pub candidate_mode: String,
    pub cycles_baseline: u64,
    pub cycles_candidate: u64,
    /// `cycles_baseline / cycles_candidate`.
    pub speedup: f64,
    pub energy_baseline: f64,
    pub energy_candidate: f64,
    /// `energy_candidate / energy_baseline`.
    pub energy_ratio: f64,
    pub ifetch_baseline: u64,
    pub ifetch_candidate: u64,
    /// `ifetch_candidate / ifetch_baseline`.
    pub fetch_ratio: f64,
    /// `candidate - baseline` per event.
    pub deltas: BTreeMap<String, i64>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == den {
        1.0
    } else {
        num / den
    }
}

/// Compares a baseline run (usually split mode) against a candidate run
/// (usually merge mode). Refuses runs whose outputs differ.
pub fn compare_modes(baseline: &RunStats, candidate: &RunStats) -> Result<ComparisonReport, MetricsError> {
    if baseline.timeout || candidate.timeout {
        return Err(MetricsError::Timeout);
    }
    if !baseline.config.comparable(&candidate.config) {
        return Err(MetricsError::Incomparable(baseline.config.workload.clone(), candidate.config.workload.clone()));
    }
    if baseline.checksum != candidate.checksum {
        return Err(MetricsError::Divergence { split: baseline.checksum, merge: candidate.checksum });
    }
    let (b, c) = (baseline.counters.total(), candidate.counters.total());
    let deltas = Event::ALL
        .iter()
        .map(|&e| (e.name().to_string(), c.get(e) as i64 - b.get(e) as i64))
        .collect();
    Ok(ComparisonReport {
        schema_version: SCHEMA_VERSION,
        workload: baseline.config.workload.clone(),
        baseline_mode: baseline.config.mode.clone(),
        candidate_mode: candidate.config.mode.clone(),
        cycles_baseline: baseline.cycles,
        cycles_candidate: candidate.cycles,
        speedup: ratio(baseline.cycles as f64, candidate.cycles as f64),
        energy_baseline: baseline.energy.total,
        energy_candidate: candidate.energy.total,
        energy_ratio: ratio(candidate.energy.total, baseline.energy.total),
        ifetch_baseline: b.ifetch(),
        ifetch_candidate: c.ifetch(),
        fetch_ratio: ratio(c.ifetch() as f64, b.ifetch() as f64),
        deltas,
    })
}

/// Rows that can be written as CSV with one header line.
pub trait CsvRow {
    fn csv_header() -> Vec<String>;
    fn csv_fields(&self) -> Vec<String>;
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn to_csv<R: CsvRow>(rows: &[R]) -> String {
    let mut out = R::csv_header().join(",");
    out.push('\n');
    for row in rows {
        let fields: Vec<String> = row.csv_fields().iter().map(|f| csv_escape(f)).collect();
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize infallibly");
    s.push('\n');
    s
}

impl RunStats {
    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn from_json(text: &str) -> Result<RunStats, MetricsError> {
        let stats: RunStats = serde_json::from_str(text).map_err(|e| MetricsError::Parse(e.to_string()))?;
        if stats.schema_version != SCHEMA_VERSION {
            return Err(MetricsError::Parse(format!("unsupported schema_version {}", stats.schema_version)));
        }
        Ok(stats)
    }

    pub fn emit(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => to_csv(std::slice::from_ref(self)),
        }
    }

    /// Fraction of the run during which `core` was active.
    pub fn utilization(&self, core: usize) -> f64 {
        self.counters.cores[core].active_cycle as f64 / self.cycles.max(1) as f64
    }
}

impl CsvRow for RunStats {
    fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = [
            "schema_version",
            "workload",
            "mode",
            "seed",
            "cycles",
            "timeout",
            "checksum",
            "energy_total",
            "energy_ifetch",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend(Event::ALL.iter().map(|e| e.name().to_string()));
        h
    }

    fn csv_fields(&self) -> Vec<String> {
        let mut f = vec![
            self.schema_version.to_string(),
            self.config.workload.clone(),
            self.config.mode.clone(),
            self.config.seed.to_string(),
            self.cycles.to_string(),
            self.timeout.to_string(),
            format!("{:#018x}", self.checksum),
            self.energy.total.to_string(),
            self.energy.ifetch.to_string(),
        ];
        let total = self.counters.total();
        f.extend(Event::ALL.iter().map(|&e| total.get(e).to_string()));
        f
    }
}

impl ComparisonReport {
    pub fn emit(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => to_json(self),
            ReportFormat::Csv => to_csv(std::slice::from_ref(self)),
        }
    }
}

impl CsvRow for ComparisonReport {
    fn csv_header() -> Vec<String> {
        [
            "schema_version",
            "workload",
            "baseline_mode",
            "candidate_mode",
            "cycles_baseline",
            "cycles_candidate",
            "speedup",
            "energy_baseline",
            "energy_candidate",
            "energy_ratio",
            "ifetch_baseline",
            "ifetch_candidate",
            "fetch_ratio",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }

    fn csv_fields(&self) -> Vec<String> {
        vec![
            self.schema_version.to_string(),
            self.workload.clone(),
            self.baseline_mode.clone(),
            self.candidate_mode.clone(),
            self.cycles_baseline.to_string(),
            self.cycles_candidate.to_string(),
            self.speedup.to_string(),
            self.energy_baseline.to_string(),
            self.energy_candidate.to_string(),
            self.energy_ratio.to_string(),
            self.ifetch_baseline.to_string(),
            self.ifetch_candidate.to_string(),
            self.fetch_ratio.to_string(),
        ]
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}
