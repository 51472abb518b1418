//! One trial: generate the topology and the inputs from a seed, run the
//! protocol, and compare the result with the oracle.

use std::fmt;

use addnet_core::error::SimError;
use addnet_core::protocols::extremum::{self, Extreme};
use addnet_core::protocols::params::ceil_log2;
use addnet_core::protocols::{bfs, degree, leader, max, mis, size};
use addnet_core::protocols::{Context, Params, RunConfig, RunMeta};
use addnet_core::sim::{derive_seed, Duplex, RunStatus, Topology, Transcript};
use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::oracle::{self, OracleReport};
use crate::topology::{gen_topology, GenError, TopologySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    LeaderSingleHop,
    Leader,
    Bfs,
    Degree,
    Mis,
    Size,
    MaxSingleHop,
    MaxMultiHop,
    Extremum,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::LeaderSingleHop => "leader-single-hop",
            ProtocolKind::Leader => "leader",
            ProtocolKind::Bfs => "bfs",
            ProtocolKind::Degree => "degree",
            ProtocolKind::Mis => "mis",
            ProtocolKind::Size => "size",
            ProtocolKind::MaxSingleHop => "max-single-hop",
            ProtocolKind::MaxMultiHop => "max-multi-hop",
            ProtocolKind::Extremum => "extremum",
        }
    }

    /// Measured rounds per unit of the asymptotic bound (see
    /// [`default_budget`]), rounded up.
    fn round_constant(self) -> u64 {
        match self {
            ProtocolKind::LeaderSingleHop => 2,
            ProtocolKind::Leader => 6,
            ProtocolKind::Bfs => 6,
            ProtocolKind::Degree => 2,
            ProtocolKind::Mis => 7,
            ProtocolKind::Size => 12,
            ProtocolKind::MaxSingleHop => 4,
            ProtocolKind::MaxMultiHop => 16,
            ProtocolKind::Extremum => 1,
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything needed to replay one trial exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub protocol: ProtocolKind,
    pub topology: TopologySpec,
    pub seed: u64,
    #[serde(default)]
    pub duplex: Duplex,
    /// None selects [`default_budget`].
    #[serde(default)]
    pub max_rounds: Option<u64>,
    /// `key=value` parameter overrides, in application order.
    #[serde(default)]
    pub params: Vec<(String, String)>,
    /// Extremum radius.
    #[serde(default = "default_radius")]
    pub radius: u32,
    #[serde(default = "default_mode")]
    pub mode: Extreme,
}

fn default_radius() -> u32 {
    2
}

fn default_mode() -> Extreme {
    Extreme::Max
}

impl TrialSpec {
    pub fn new(protocol: ProtocolKind, topology: TopologySpec, seed: u64) -> Self {
        TrialSpec {
            protocol,
            topology,
            seed,
            duplex: Duplex::Full,
            max_rounds: None,
            params: Vec::new(),
            radius: default_radius(),
            mode: default_mode(),
        }
    }

    pub fn base_params(&self) -> Result<Params, TrialError> {
        Params::default()
            .with_overrides(self.params.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .map_err(TrialError::Params)
    }

    /// The overrides as `k=v;k=v`, the form stored in CSV rows.
    pub fn params_string(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrialError {
    #[error(transparent)]
    Topology(#[from] GenError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("bad parameters: {0}")]
    Params(String),
}

/// A finished trial.
#[derive(Debug, Clone, Serialize)]
pub struct TrialOutcome {
    pub protocol: ProtocolKind,
    pub topology: String,
    pub n: usize,
    pub diameter: Option<u32>,
    pub max_rounds: u64,
    pub meta: RunMeta,
    pub report: OracleReport,
    /// Per-node records: index, ID, and the protocol's output fields.
    pub nodes: Vec<Value>,
    /// Run-level fields beyond the metadata (phases, agreement, ...).
    pub summary: Value,
    #[serde(skip)]
    pub transcript: Option<Transcript>,
}

/// Round budget: ten times the asymptotic bound scaled by the measured
/// per-protocol constant, so that "slow" and "wrong" stay distinguishable.
///
/// | protocol | bound |
/// |---|---|
/// | leader, BFS, size | (D + 1) · log n |
/// | single-hop leader, degree | 1 |
/// | MIS | log n |
/// | single-hop max | log n / log log n |
/// | multi-hop max | (D + 1) · log n · log n / log log n |
/// | extremum | r |
pub fn default_budget(kind: ProtocolKind, p: &Params, diameter: u32, radius: u32) -> u64 {
    let log_n = p.log_n() as u64;
    let loglog = (ceil_log2(log_n) as u64).max(1);
    let d = u64::from(diameter) + 1;
    let bound = match kind {
        ProtocolKind::LeaderSingleHop | ProtocolKind::Degree => 1,
        ProtocolKind::Leader | ProtocolKind::Bfs | ProtocolKind::Size => d * log_n,
        ProtocolKind::Mis => log_n,
        ProtocolKind::MaxSingleHop => log_n.div_ceil(loglog),
        ProtocolKind::MaxMultiHop => d * log_n * log_n.div_ceil(loglog),
        ProtocolKind::Extremum => u64::from(radius).max(1),
    };
    10 * kind.round_constant() * bound
}

/// Seed of the topology generator for a trial.
pub fn topology_seed(seed: u64) -> u64 {
    derive_seed(seed, "topology", 0)
}

/// Max inputs uniform in [1, N²]; extremum values log-uniform in [1, N³]
/// so that all buckets are exercised.
pub fn draw_inputs(kind: ProtocolKind, p: &Params, n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "inputs", 0));
    match kind {
        ProtocolKind::MaxSingleHop | ProtocolKind::MaxMultiHop => {
            let cap = max::input_cap(p);
            (0..n).map(|_| rng.random_range(1..=cap)).collect()
        }
        ProtocolKind::Extremum => {
            let cap = extremum::value_cap(p);
            let top = extremum::bucket(cap);
            (0..n)
                .map(|_| {
                    let j = rng.random_range(0..=top);
                    let hi = (1u64 << j).min(cap);
                    let lo = if j == 0 { 1 } else { (1u64 << (j - 1)) + 1 };
                    rng.random_range(lo.min(hi)..=hi)
                })
                .collect()
        }
        _ => Vec::new(),
    }
}

fn node_records<T: Serialize>(topo: &Topology, outputs: &[T]) -> Vec<Value> {
    outputs
        .iter()
        .enumerate()
        .map(|(v, o)| {
            let mut rec = json!({ "node": v, "id": topo.id(v) });
            let fields = serde_json::to_value(o).expect("outputs serialize");
            match (rec.as_object_mut(), fields) {
                (Some(m), Value::Object(f)) => m.extend(f),
                (Some(m), other) => {
                    m.insert("output".into(), other);
                }
                _ => unreachable!(),
            }
            rec
        })
        .collect()
}

/// Runs one trial on a topology generated from the trial seed.
pub fn run_trial(spec: &TrialSpec, tracing: bool) -> Result<TrialOutcome, TrialError> {
    let topo = gen_topology(&spec.topology, topology_seed(spec.seed))?;
    run_trial_on(spec, &topo, tracing)
}

/// Runs one trial on a given topology (the spec's topology is only used as
/// a label).
pub fn run_trial_on(spec: &TrialSpec, topo: &Topology, tracing: bool) -> Result<TrialOutcome, TrialError> {
    let base = spec.base_params()?;
    let resolved = base.resolved(topo.n(), topo.max_id());
    let diameter = oracle::diameter(topo);
    let budget = spec
        .max_rounds
        .unwrap_or_else(|| default_budget(spec.protocol, &resolved, diameter.unwrap_or(0), spec.radius));
    let cfg = RunConfig::new(spec.seed)
        .with_params(base)
        .with_duplex(spec.duplex)
        .with_max_rounds(budget)
        .with_tracing(tracing);
    let mut ctx = Context::new(topo, &cfg);
    let inputs = draw_inputs(spec.protocol, ctx.params(), topo.n(), spec.seed);

    let (meta, report, nodes, summary) = match spec.protocol {
        ProtocolKind::LeaderSingleHop | ProtocolKind::Leader => {
            let staged = spec.protocol == ProtocolKind::Leader;
            let run = if staged {
                leader::run_leader(&mut ctx)?
            } else {
                leader::run_leader_single_hop(&mut ctx)?
            };
            let report = oracle::check_leader(topo, &run, staged);
            let summary = json!({
                "argmax": run.argmax, "ambiguous": run.ambiguous, "agreed": run.agreed,
                "diameter_estimate": run.diameter_estimate, "stages": run.stages,
            });
            (run.meta.clone(), report, node_records(topo, &run.outputs), summary)
        }
        ProtocolKind::Bfs => {
            let source = topo.index_of_id(1).unwrap_or(0);
            let run = bfs::run_bfs(&mut ctx, source)?;
            let report = oracle::check_bfs(topo, &run);
            let summary = json!({ "source": run.source, "failures": run.failures });
            (run.meta.clone(), report, node_records(topo, &run.outputs), summary)
        }
        ProtocolKind::Degree => {
            let run = degree::run_degree(&mut ctx)?;
            let report = oracle::check_degree(topo, &run, ctx.params().degree_exact_bound());
            (run.meta.clone(), report, node_records(topo, &run.estimates), json!({}))
        }
        ProtocolKind::Mis => {
            let run = mis::run_mis(&mut ctx)?;
            let report = oracle::check_mis(topo, &run);
            let summary = json!({ "phases": run.phases, "size": run.members().len() });
            (run.meta.clone(), report, node_records(topo, &run.outputs), summary)
        }
        ProtocolKind::Size => {
            let run = size::run_size(&mut ctx)?;
            let report = oracle::check_size(topo, &run);
            let summary = json!({
                "root": run.root, "agreed": run.agreed, "estimate": run.estimate, "error": run.error,
            });
            (run.meta.clone(), report, node_records(topo, &run.outputs), summary)
        }
        ProtocolKind::MaxSingleHop | ProtocolKind::MaxMultiHop => {
            let run = if spec.protocol == ProtocolKind::MaxSingleHop {
                max::run_max_single_hop(&mut ctx, &inputs)?
            } else {
                max::run_max_multi_hop(&mut ctx, &inputs)?
            };
            let report = oracle::check_max(&inputs, &run);
            let summary = json!({
                "phases": run.phases, "active_counts": run.active_counts,
                "phase_rounds": run.phase_rounds, "error": run.error,
            });
            let mut nodes = node_records(topo, &run.outputs);
            for (rec, x) in nodes.iter_mut().zip(&inputs) {
                rec["input"] = json!(x);
            }
            (run.meta.clone(), report, nodes, summary)
        }
        ProtocolKind::Extremum => {
            let run = extremum::run_extremum(&mut ctx, &inputs, spec.radius, spec.mode)?;
            let report = oracle::check_extremum(topo, &inputs, spec.radius, spec.mode, &run);
            let mut nodes = node_records(topo, &run.outputs);
            for (rec, x) in nodes.iter_mut().zip(&inputs) {
                rec["input"] = json!(x);
            }
            let summary = json!({ "radius": spec.radius, "mode": spec.mode });
            (run.meta.clone(), report, nodes, summary)
        }
    };

    let mut report = report;
    if meta.status == RunStatus::BudgetExhausted {
        report.pass = false;
        report.detail = format!("round budget {budget} exhausted; {}", report.detail);
    }
    Ok(TrialOutcome {
        protocol: spec.protocol,
        topology: spec.topology.to_string(),
        n: topo.n(),
        diameter,
        max_rounds: budget,
        meta,
        report,
        nodes,
        summary,
        transcript: tracing.then(|| ctx.into_transcript()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_protocol_runs_on_a_small_graph() {
        for kind in ProtocolKind::value_variants() {
            let topo = match kind {
                ProtocolKind::LeaderSingleHop | ProtocolKind::MaxSingleHop => TopologySpec::Clique { n: 8 },
                _ => TopologySpec::Path { n: 6 },
            };
            let spec = TrialSpec::new(*kind, topo, 3);
            let out = run_trial(&spec, false).unwrap();
            assert!(out.report.pass, "{kind}: {:?}", out.report);
            assert_eq!(out.nodes.len(), out.n);
            assert!(out.meta.rounds <= out.max_rounds);
        }
    }

    #[test]
    fn bad_overrides_are_reported() {
        let mut spec = TrialSpec::new(ProtocolKind::Mis, TopologySpec::Path { n: 4 }, 1);
        spec.params.push(("no_such_knob".into(), "3".into()));
        assert!(matches!(run_trial(&spec, false), Err(TrialError::Params(_))));
    }

    #[test]
    fn extremum_inputs_stay_in_range() {
        let p = Params::default().resolved(16, 16);
        let xs = draw_inputs(ProtocolKind::Extremum, &p, 500, 9);
        let cap = extremum::value_cap(&p);
        assert!(xs.iter().all(|&x| (1..=cap).contains(&x)));
        assert!(xs.iter().any(|&x| x <= 4));
        assert!(xs.iter().any(|&x| x > cap / 2));
    }

    #[test]
    fn budget_shapes() {
        let p = Params::default().resolved(64, 64);
        let short = default_budget(ProtocolKind::Bfs, &p, 3, 0);
        let long = default_budget(ProtocolKind::Bfs, &p, 30, 0);
        assert!(long > 5 * short);
        assert_eq!(default_budget(ProtocolKind::Degree, &p, 30, 0), 20);
    }
}
