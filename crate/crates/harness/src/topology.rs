//! Topology families. Every generator assigns IDs 1..=n in a random order
//! drawn from the same seed, so node index and ID carry no shared pattern.

use std::fmt;
use std::str::FromStr;

use addnet_core::sim::Topology;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Connectivity retries for G(n, p) before giving up.
pub const GNP_RETRIES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TopologySpec {
    Clique { n: usize },
    Path { n: usize },
    Grid { rows: usize, cols: usize },
    /// One centre and n − 1 leaves.
    Star { n: usize },
    /// G(n, p), resampled until connected; p defaults to 2·ln n / n.
    RandomGnp { n: usize, p: Option<f64> },
    /// Uniform random recursive tree.
    RandomTree { n: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("no connected G({n}, {p}) in {tries} tries")]
    NotConnected { n: usize, p: f64, tries: usize },
    #[error("invalid topology: {0}")]
    Invalid(String),
}

impl TopologySpec {
    /// Builds a spec from a family name and a node count. Grids take
    /// `grid` (square, n must be a square) or `grid:RxC`; G(n, p) takes
    /// `gnp` or `gnp:P`.
    pub fn parse(family: &str, n: Option<usize>) -> Result<Self, GenError> {
        let (name, arg) = match family.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (family, None),
        };
        let need_n = || n.ok_or_else(|| GenError::Invalid(format!("{name} needs --n")));
        Ok(match name {
            "clique" => TopologySpec::Clique { n: need_n()? },
            "path" => TopologySpec::Path { n: need_n()? },
            "star" => TopologySpec::Star { n: need_n()? },
            "tree" | "random_tree" => TopologySpec::RandomTree { n: need_n()? },
            "gnp" | "random_gnp" => {
                let p = arg
                    .map(|s| s.parse::<f64>())
                    .transpose()
                    .map_err(|e| GenError::Invalid(format!("bad edge probability: {e}")))?;
                TopologySpec::RandomGnp { n: need_n()?, p }
            }
            "grid" => match arg {
                Some(dims) => {
                    let (r, c) = dims
                        .split_once('x')
                        .ok_or_else(|| GenError::Invalid(format!("grid size {dims:?} is not RxC")))?;
                    let parse = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|e| GenError::Invalid(format!("bad grid size: {e}")))
                    };
                    TopologySpec::Grid {
                        rows: parse(r)?,
                        cols: parse(c)?,
                    }
                }
                None => {
                    let n = need_n()?;
                    let side = (n as f64).sqrt().round() as usize;
                    if side * side != n {
                        return Err(GenError::Invalid(format!("grid needs a square n, got {n}")));
                    }
                    TopologySpec::Grid { rows: side, cols: side }
                }
            },
            other => return Err(GenError::Invalid(format!("unknown family {other:?}"))),
        })
    }

    pub fn n(&self) -> usize {
        match *self {
            TopologySpec::Clique { n }
            | TopologySpec::Path { n }
            | TopologySpec::Star { n }
            | TopologySpec::RandomGnp { n, .. }
            | TopologySpec::RandomTree { n } => n,
            TopologySpec::Grid { rows, cols } => rows * cols,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            TopologySpec::Clique { .. } => "clique",
            TopologySpec::Path { .. } => "path",
            TopologySpec::Grid { .. } => "grid",
            TopologySpec::Star { .. } => "star",
            TopologySpec::RandomGnp { .. } => "random_gnp",
            TopologySpec::RandomTree { .. } => "random_tree",
        }
    }
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologySpec::Grid { rows, cols } => write!(f, "grid:{rows}x{cols}"),
            TopologySpec::RandomGnp { n, p: Some(p) } => write!(f, "gnp:{p}/{n}"),
            other => write!(f, "{}/{}", other.family(), other.n()),
        }
    }
}

impl FromStr for TopologySpec {
    type Err = GenError;

    /// `family/n`, or `grid:RxC`.
    fn from_str(s: &str) -> Result<Self, GenError> {
        match s.rsplit_once('/') {
            Some((fam, n)) => {
                let n = n
                    .parse()
                    .map_err(|e| GenError::Invalid(format!("bad node count in {s:?}: {e}")))?;
                TopologySpec::parse(fam, Some(n))
            }
            None => TopologySpec::parse(s, None),
        }
    }
}

fn grid_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                edges.push((v, v + 1));
            }
            if r + 1 < rows {
                edges.push((v, v + cols));
            }
        }
    }
    edges
}

fn default_p(n: usize) -> f64 {
    if n < 2 {
        return 1.0;
    }
    (2.0 * (n as f64).ln() / n as f64).min(1.0)
}

/// Generates the topology deterministically from `seed`.
pub fn gen_topology(spec: &TopologySpec, seed: u64) -> Result<Topology, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n();
    if n == 0 {
        return Err(GenError::Invalid("a topology needs at least one node".into()));
    }
    let edges: Vec<(usize, usize)> = match *spec {
        TopologySpec::Clique { n } => (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .collect(),
        TopologySpec::Path { n } => (1..n).map(|v| (v - 1, v)).collect(),
        TopologySpec::Grid { rows, cols } => grid_edges(rows, cols),
        TopologySpec::Star { n } => (1..n).map(|v| (0, v)).collect(),
        TopologySpec::RandomTree { n } => (1..n).map(|v| (rng.random_range(0..v), v)).collect(),
        TopologySpec::RandomGnp { n, p } => {
            let p = p.unwrap_or_else(|| default_p(n));
            if !(0.0..=1.0).contains(&p) {
                return Err(GenError::Invalid(format!("edge probability {p} outside [0, 1]")));
            }
            let mut found = None;
            for _ in 0..GNP_RETRIES {
                let edges: Vec<(usize, usize)> = (0..n)
                    .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
                    .filter(|_| rng.random_bool(p))
                    .collect();
                let t = Topology::new(n, &edges).map_err(|e| GenError::Invalid(e.to_string()))?;
                if t.is_connected() {
                    found = Some(edges);
                    break;
                }
            }
            found.ok_or(GenError::NotConnected {
                n,
                p,
                tries: GNP_RETRIES,
            })?
        }
    };
    let mut ids: Vec<u64> = (1..=n as u64).collect();
    ids.shuffle(&mut rng);
    Topology::with_ids(n, &edges, ids).map_err(|e| GenError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::diameter;

    #[test]
    fn edge_counts_and_diameters() {
        let t = gen_topology(&TopologySpec::Clique { n: 4 }, 1).unwrap();
        assert_eq!(t.edge_count(), 6);
        let t = gen_topology(&TopologySpec::Path { n: 5 }, 1).unwrap();
        assert_eq!(t.edge_count(), 4);
        assert_eq!(diameter(&t), Some(4));
        let t = gen_topology(&TopologySpec::Grid { rows: 8, cols: 8 }, 1).unwrap();
        assert_eq!(t.edge_count(), 2 * 8 * 7);
        assert_eq!(diameter(&t), Some(14));
        let t = gen_topology(&TopologySpec::Star { n: 9 }, 1).unwrap();
        assert_eq!(diameter(&t), Some(2));
        let t = gen_topology(&TopologySpec::RandomTree { n: 50 }, 3).unwrap();
        assert_eq!(t.edge_count(), 49);
        assert!(t.is_connected());
    }

    #[test]
    fn ids_are_a_shuffled_range() {
        let t = gen_topology(&TopologySpec::Path { n: 40 }, 7).unwrap();
        let mut ids = t.ids().to_vec();
        assert_ne!(ids, (1..=40).collect::<Vec<u64>>());
        ids.sort_unstable();
        assert_eq!(ids, (1..=40).collect::<Vec<u64>>());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = TopologySpec::RandomGnp { n: 64, p: None };
        let a = gen_topology(&spec, 11).unwrap();
        let b = gen_topology(&spec, 11).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.is_connected());
        assert_ne!(a.to_json(), gen_topology(&spec, 12).unwrap().to_json());
    }

    #[test]
    fn gnp_gives_up_when_connection_is_hopeless() {
        let spec = TopologySpec::RandomGnp { n: 30, p: Some(0.0) };
        assert!(matches!(gen_topology(&spec, 1), Err(GenError::NotConnected { .. })));
    }

    #[test]
    fn parsing() {
        assert_eq!(
            TopologySpec::parse("grid", Some(64)).unwrap(),
            TopologySpec::Grid { rows: 8, cols: 8 }
        );
        assert_eq!(
            TopologySpec::parse("grid:3x5", None).unwrap(),
            TopologySpec::Grid { rows: 3, cols: 5 }
        );
        assert_eq!(
            TopologySpec::parse("gnp:0.1", Some(20)).unwrap(),
            TopologySpec::RandomGnp { n: 20, p: Some(0.1) }
        );
        assert!(TopologySpec::parse("grid", Some(10)).is_err());
        assert!(TopologySpec::parse("torus", Some(10)).is_err());
        assert_eq!("path/7".parse::<TopologySpec>().unwrap(), TopologySpec::Path { n: 7 });
    }
}
