//! Trial sweeps: many seeds over one or more topologies, written as a CSV
//! with one row per trial plus a JSON summary.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use addnet_core::protocols::extremum::Extreme;
use addnet_core::sim::{derive_seed, Duplex, RunStatus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::experiment::{run_trial, ProtocolKind, TrialError, TrialOutcome, TrialSpec};
use crate::topology::TopologySpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub protocol: ProtocolKind,
    /// Each topology gets `trials` trials.
    pub topologies: Vec<TopologySpec>,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub duplex: Duplex,
    #[serde(default)]
    pub max_rounds: Option<u64>,
    #[serde(default)]
    pub radius: Option<u32>,
    #[serde(default)]
    pub mode: Option<Extreme>,
    /// Output prefix: `<out>.csv` and `<out>.json`.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub protocol: String,
    pub topology: String,
    pub n: usize,
    pub diameter: Option<u32>,
    pub trial: usize,
    pub seed: u64,
    pub duplex: String,
    pub max_rounds: u64,
    pub params: String,
    pub success: bool,
    pub status: String,
    pub rounds: u64,
    pub engine_rounds: u64,
    pub max_frame_bits: usize,
    pub transmissions: u64,
    /// Protocol metric from the oracle report; see [`crate::oracle`].
    pub metric: Option<f64>,
    pub offending: usize,
    pub digest: String,
    /// Set when the trial could not run at all.
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub p10: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
    pub mean: f64,
}

impl Quantiles {
    /// Nearest-rank quantiles; None for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Some(Quantiles {
            min: v[0],
            p10: at(0.1),
            median: at(0.5),
            p90: at(0.9),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub topology: String,
    pub n: usize,
    pub trials: usize,
    pub successes: usize,
    /// Trials that could not run (generation or precondition errors).
    pub errors: usize,
    pub success_rate: f64,
    pub rounds: Option<Quantiles>,
    pub metric: Option<Quantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub protocol: String,
    pub seed: u64,
    pub groups: Vec<GroupSummary>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<TrialStats>,
    pub summary: SweepSummary,
}

impl ExperimentSpec {
    pub fn new(protocol: ProtocolKind, topologies: Vec<TopologySpec>, trials: usize, seed: u64) -> Self {
        ExperimentSpec {
            protocol,
            topologies,
            params: BTreeMap::new(),
            trials,
            seed,
            duplex: Duplex::Full,
            max_rounds: None,
            radius: None,
            mode: None,
            out: None,
        }
    }

    /// Trial `i` on topology `t`; the seed depends only on the master seed,
    /// the topology label and `i`.
    pub fn trial(&self, t: &TopologySpec, i: usize) -> TrialSpec {
        let mut spec = TrialSpec::new(self.protocol, t.clone(), derive_seed(self.seed, &t.to_string(), i as u64));
        spec.duplex = self.duplex;
        spec.max_rounds = self.max_rounds;
        spec.params = self.params.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        if let Some(r) = self.radius {
            spec.radius = r;
        }
        if let Some(m) = self.mode {
            spec.mode = m;
        }
        spec
    }
}

fn duplex_name(d: Duplex) -> &'static str {
    match d {
        Duplex::Full => "full",
        Duplex::Half => "half",
    }
}

impl TrialStats {
    /// The row for a trial that ran.
    pub fn from_outcome(spec: &TrialSpec, trial: usize, out: &TrialOutcome) -> Self {
        TrialStats {
            protocol: spec.protocol.to_string(),
            topology: out.topology.clone(),
            n: out.n,
            diameter: out.diameter,
            trial,
            seed: spec.seed,
            duplex: duplex_name(spec.duplex).into(),
            max_rounds: out.max_rounds,
            params: spec.params_string(),
            success: out.report.pass,
            status: status_name(out.meta.status).into(),
            rounds: out.meta.rounds,
            engine_rounds: out.meta.engine_rounds,
            max_frame_bits: out.meta.max_frame_bits,
            transmissions: out.meta.transmissions,
            metric: out.report.metric,
            offending: out.report.offending.len(),
            digest: out.meta.digest.clone(),
            error: String::new(),
        }
    }

    /// The row for a trial that could not run.
    pub fn from_error(spec: &TrialSpec, trial: usize, err: &TrialError) -> Self {
        TrialStats {
            protocol: spec.protocol.to_string(),
            topology: spec.topology.to_string(),
            n: spec.topology.n(),
            diameter: None,
            trial,
            seed: spec.seed,
            duplex: duplex_name(spec.duplex).into(),
            max_rounds: spec.max_rounds.unwrap_or(0),
            params: spec.params_string(),
            success: false,
            status: "error".into(),
            rounds: 0,
            engine_rounds: 0,
            max_frame_bits: 0,
            transmissions: 0,
            metric: None,
            offending: 0,
            digest: String::new(),
            error: err.to_string(),
        }
    }
}

fn status_name(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Completed => "completed",
        RunStatus::BudgetExhausted => "budget_exhausted",
    }
}

fn stats_for(spec: &TrialSpec, trial: usize) -> TrialStats {
    match run_trial(spec, false) {
        Ok(out) => TrialStats::from_outcome(spec, trial, &out),
        Err(e) => {
            log::warn!("trial {trial} (seed {}) failed to run: {e}", spec.seed);
            TrialStats::from_error(spec, trial, &e)
        }
    }
}

fn summarize(spec: &ExperimentSpec, rows: &[TrialStats]) -> SweepSummary {
    let groups = spec
        .topologies
        .iter()
        .map(|t| {
            let label = t.to_string();
            let g: Vec<&TrialStats> = rows.iter().filter(|r| r.topology == label).collect();
            let ran: Vec<&&TrialStats> = g.iter().filter(|r| r.error.is_empty()).collect();
            let successes = g.iter().filter(|r| r.success).count();
            let rounds: Vec<f64> = ran.iter().map(|r| r.rounds as f64).collect();
            let metric: Vec<f64> = ran.iter().filter_map(|r| r.metric).collect();
            GroupSummary {
                topology: label,
                n: t.n(),
                trials: g.len(),
                successes,
                errors: g.len() - ran.len(),
                success_rate: if g.is_empty() { 0.0 } else { successes as f64 / g.len() as f64 },
                rounds: Quantiles::of(&rounds),
                metric: Quantiles::of(&metric),
            }
        })
        .collect();
    SweepSummary {
        protocol: spec.protocol.to_string(),
        seed: spec.seed,
        groups,
    }
}

/// Runs every trial, in parallel when `parallel` is set. Rows come back in
/// (topology, trial) order either way, and a trial that cannot run becomes
/// a failed row rather than aborting the sweep.
pub fn run_sweep(spec: &ExperimentSpec, parallel: bool) -> SweepResult {
    let jobs: Vec<(usize, TrialSpec)> = spec
        .topologies
        .iter()
        .flat_map(|t| (0..spec.trials).map(move |i| (i, spec.trial(t, i))))
        .collect();
    let rows: Vec<TrialStats> = if parallel {
        jobs.par_iter().map(|(i, t)| stats_for(t, *i)).collect()
    } else {
        jobs.iter().map(|(i, t)| stats_for(t, *i)).collect()
    };
    let summary = summarize(spec, &rows);
    SweepResult { rows, summary }
}

pub fn write_csv<W: Write>(rows: &[TrialStats], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    // Written by hand so that an empty sweep still gets a header.
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const CSV_COLUMNS: [&str; 19] = [
    "protocol",
    "topology",
    "n",
    "diameter",
    "trial",
    "seed",
    "duplex",
    "max_rounds",
    "params",
    "success",
    "status",
    "rounds",
    "engine_rounds",
    "max_frame_bits",
    "transmissions",
    "metric",
    "offending",
    "digest",
    "error",
];

pub fn csv_string(rows: &[TrialStats]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

/// Writes `<prefix>.csv` and `<prefix>.json`.
pub fn write_outputs(result: &SweepResult, prefix: &Path) -> anyhow::Result<()> {
    let with = |ext: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    let (csv_path, json_path) = (with(".csv"), with(".json"));
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(&result.rows, std::fs::File::create(&csv_path)?)?;
    std::fs::write(&json_path, serde_json::to_string_pretty(&result.summary)?)?;
    log::info!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_trials_gives_only_a_header() {
        let spec = ExperimentSpec::new(ProtocolKind::Mis, vec![TopologySpec::Path { n: 5 }], 0, 1);
        let res = run_sweep(&spec, false);
        let csv = csv_string(&res.rows);
        assert_eq!(csv.lines().count(), 1);
        assert_eq!(csv.trim_end(), CSV_COLUMNS.join(","));
        assert_eq!(res.summary.groups[0].trials, 0);
    }

    #[test]
    fn same_spec_same_bytes_serial_or_parallel() {
        let spec = ExperimentSpec::new(
            ProtocolKind::Bfs,
            vec![TopologySpec::RandomGnp { n: 20, p: None }, TopologySpec::Path { n: 9 }],
            4,
            77,
        );
        let a = csv_string(&run_sweep(&spec, false).rows);
        let b = csv_string(&run_sweep(&spec, true).rows);
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 9);
        // Header columns line up with the serialized struct.
        let mut rdr = csv::Reader::from_reader(a.as_bytes());
        let rows: Vec<TrialStats> = rdr.deserialize().collect::<Result<_, _>>().unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.success));
    }

    #[test]
    fn broken_trials_become_rows() {
        // Single-hop max rejects a path; the sweep records that and goes on.
        let spec = ExperimentSpec::new(ProtocolKind::MaxSingleHop, vec![TopologySpec::Path { n: 4 }], 2, 1);
        let res = run_sweep(&spec, false);
        assert_eq!(res.rows.len(), 2);
        assert!(res.rows.iter().all(|r| !r.success && !r.error.is_empty()));
        assert_eq!(res.summary.groups[0].errors, 2);
    }

    #[test]
    fn quantiles() {
        let q = Quantiles::of(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!((q.min, q.median, q.max, q.mean), (1.0, 3.0, 5.0, 3.0));
        assert!(Quantiles::of(&[]).is_none());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let mut spec = ExperimentSpec::new(ProtocolKind::Extremum, vec![TopologySpec::Grid { rows: 3, cols: 4 }], 5, 2);
        spec.params.insert("bic_c".into(), "5".into());
        spec.mode = Some(Extreme::Min);
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentSpec>(&s).unwrap(), spec);
    }
}
