//! Ground truth computed directly from the graph and the inputs. Nothing
//! here touches the codes or the channel.

use std::collections::VecDeque;

use addnet_core::protocols::bfs::BfsRun;
use addnet_core::protocols::degree::DegreeRun;
use addnet_core::protocols::extremum::{Extreme, ExtremumRun};
use addnet_core::protocols::leader::LeaderRun;
use addnet_core::protocols::max::MaxRun;
use addnet_core::protocols::mis::{MisRun, MisStatus};
use addnet_core::protocols::size::SizeRun;
use addnet_core::sim::Topology;
use serde::{Deserialize, Serialize};

/// Outcome of comparing a protocol run with the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub pass: bool,
    /// Node indices whose output is wrong.
    pub offending: Vec<usize>,
    /// Protocol-specific figure: an approximation ratio, an estimate, or a
    /// phase count.
    pub metric: Option<f64>,
    pub detail: String,
}

impl OracleReport {
    fn new(offending: Vec<usize>, metric: Option<f64>, detail: String) -> Self {
        OracleReport {
            pass: offending.is_empty(),
            offending,
            metric,
            detail,
        }
    }

    fn failure(detail: impl Into<String>) -> Self {
        OracleReport {
            pass: false,
            offending: Vec::new(),
            metric: None,
            detail: detail.into(),
        }
    }
}

/// Hop distances from `s`; None for unreachable nodes.
pub fn distances(topo: &Topology, s: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; topo.n()];
    dist[s] = Some(0);
    let mut queue = VecDeque::from([s]);
    while let Some(v) = queue.pop_front() {
        let dv = dist[v].expect("queued nodes have a distance");
        for &u in topo.neighbors(v) {
            if dist[u].is_none() {
                dist[u] = Some(dv + 1);
                queue.push_back(u);
            }
        }
    }
    dist
}

/// None when the graph is disconnected.
pub fn eccentricity(topo: &Topology, v: usize) -> Option<u32> {
    distances(topo, v).into_iter().try_fold(0, |m, d| d.map(|d| m.max(d)))
}

pub fn diameter(topo: &Topology) -> Option<u32> {
    (0..topo.n()).try_fold(0, |m, v| eccentricity(topo, v).map(|e| m.max(e)))
}

/// Independence and maximality of `chosen`; offenders are nodes with a
/// chosen neighbor although chosen, or with none although not chosen.
pub fn mis_violations(topo: &Topology, chosen: &[bool]) -> Vec<usize> {
    (0..topo.n())
        .filter(|&v| {
            let dominated = topo.neighbors(v).iter().any(|&u| chosen[u]);
            chosen[v] == dominated
        })
        .collect()
}

pub fn check_bfs(topo: &Topology, run: &BfsRun) -> OracleReport {
    let dist = distances(topo, run.source);
    let offending = (0..topo.n())
        .filter(|&v| {
            let o = &run.outputs[v];
            if o.level != dist[v] {
                return true;
            }
            match o.parent {
                None => v != run.source,
                Some(pid) => match topo.index_of_id(pid) {
                    Some(p) => {
                        !topo.neighbors(v).contains(&p)
                            || dist[p].zip(dist[v]).is_none_or(|(dp, dv)| dp + 1 != dv)
                    }
                    None => true,
                },
            }
        })
        .collect();
    OracleReport::new(
        offending,
        Some(run.failures as f64),
        format!("{} nodes reported a failure", run.failures),
    )
}

pub fn check_mis(topo: &Topology, run: &MisRun) -> OracleReport {
    if run.outputs.iter().any(|o| o.status == MisStatus::Undecided) {
        return OracleReport::failure("run ended with undecided nodes");
    }
    let chosen: Vec<bool> = run.outputs.iter().map(|o| o.status == MisStatus::InMis).collect();
    OracleReport::new(
        mis_violations(topo, &chosen),
        Some(f64::from(run.phases)),
        format!("{} in the set after {} phases", chosen.iter().filter(|&&c| c).count(), run.phases),
    )
}

/// Agreement on the node with the largest draw; for the staged variant the
/// diameter estimate must also lie in [D/2, D].
pub fn check_leader(topo: &Topology, run: &LeaderRun, staged: bool) -> OracleReport {
    let draws: Vec<_> = run.outputs.iter().map(|o| o.draw).collect();
    let Some(best) = draws.iter().max().copied() else {
        return OracleReport::failure("no nodes");
    };
    let holders: Vec<usize> = (0..draws.len()).filter(|&v| draws[v] == best).collect();
    if holders.len() > 1 {
        return OracleReport::failure(format!("{} nodes share the largest draw", holders.len()));
    }
    let winner = holders[0];
    let mut offending: Vec<usize> = (0..draws.len())
        .filter(|&v| run.outputs[v].leader != Some(best) || run.outputs[v].is_leader != (v == winner))
        .collect();
    let mut detail = format!("leader index {winner}");
    let mut metric = None;
    if staged {
        let d = diameter(topo);
        let est = run.outputs[winner].maxd;
        let ecc = eccentricity(topo, winner);
        metric = est.map(f64::from);
        let ok = match (est, d, ecc) {
            (Some(e), Some(d), Some(ecc)) => e == ecc && 2 * e >= d && e <= d,
            _ => false,
        };
        detail = format!("{detail}, diameter {d:?}, estimate {est:?}, eccentricity {ecc:?}");
        if !ok && !offending.contains(&winner) {
            offending.push(winner);
        }
    }
    OracleReport::new(offending, metric, detail)
}

/// Largest ratio max(est/deg, deg/est) over nodes of positive degree; a
/// node fails if it is outside [1/5, 5], or if its degree is at most
/// `exact_bound` and the answer is not exact.
pub fn check_degree(topo: &Topology, run: &DegreeRun, exact_bound: usize) -> OracleReport {
    let mut worst: f64 = 1.0;
    let offending = (0..topo.n())
        .filter(|&v| {
            let deg = topo.degree(v);
            let Some(e) = &run.estimates[v] else {
                return true;
            };
            if deg <= exact_bound {
                return !(e.exact && e.estimate == deg as u64);
            }
            if e.estimate == 0 {
                worst = f64::INFINITY;
                return true;
            }
            let r = e.estimate as f64 / deg as f64;
            let r = r.max(1.0 / r);
            worst = worst.max(r);
            r > 5.0
        })
        .collect();
    OracleReport::new(offending, Some(worst), format!("worst ratio {worst:.3}"))
}

/// The estimate must be shared by all nodes and lie in [n/8, 8n].
pub fn check_size(topo: &Topology, run: &SizeRun) -> OracleReport {
    let n = topo.n() as f64;
    let Some(est) = run.estimate else {
        return OracleReport::failure(run.error.clone().unwrap_or_else(|| "no estimate".into()));
    };
    let offending = (0..topo.n())
        .filter(|&v| run.outputs.get(v).and_then(|o| o.estimate) != Some(est))
        .collect::<Vec<_>>();
    let ratio = est as f64 / n;
    let mut report = OracleReport::new(offending, Some(ratio), format!("estimate {est} for n = {n}"));
    if !(1.0 / 8.0..=8.0).contains(&ratio) {
        report.pass = false;
    }
    report
}

pub fn check_max(inputs: &[u64], run: &MaxRun) -> OracleReport {
    if let Some(e) = &run.error {
        return OracleReport::failure(e.clone());
    }
    let truth = inputs.iter().copied().max().unwrap_or(0);
    let offending = run
        .outputs
        .iter()
        .enumerate()
        .filter(|(_, o)| o.max != truth || o.failed)
        .map(|(v, _)| v)
        .collect();
    OracleReport::new(offending, Some(truth as f64), format!("true max {truth}"))
}

/// True extremum within `radius` hops of each node.
pub fn neighborhood_extremum(topo: &Topology, values: &[u64], radius: u32, mode: Extreme) -> Vec<u64> {
    (0..topo.n())
        .map(|v| {
            let near = distances(topo, v)
                .into_iter()
                .enumerate()
                .filter(|(_, d)| d.is_some_and(|d| d <= radius))
                .map(|(u, _)| values[u]);
            match mode {
                Extreme::Min => near.min(),
                Extreme::Max => near.max(),
            }
            .expect("a node is in its own neighborhood")
        })
        .collect()
}

/// Each estimate must be within a factor of two of the true extremum:
/// truth ≤ estimate < 2·truth.
pub fn check_extremum(
    topo: &Topology,
    values: &[u64],
    radius: u32,
    mode: Extreme,
    run: &ExtremumRun,
) -> OracleReport {
    let truth = neighborhood_extremum(topo, values, radius, mode);
    let offending = (0..topo.n())
        .filter(|&v| {
            let e = run.outputs[v].estimate;
            e < truth[v] || e >= 2 * truth[v]
        })
        .collect();
    OracleReport::new(offending, None, format!("radius {radius}, {mode:?}"))
}
