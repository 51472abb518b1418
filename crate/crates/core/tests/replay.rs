//! Runs are functions of (topology, seed, parameters): replaying one gives
//! the same outputs, the same transcript and the same digest.

use addnet_core::protocols::{bfs, leader, mis, Context, RunConfig};
use addnet_core::sim::{Duplex, Topology};

fn ladder(k: usize) -> Topology {
    // Two paths of length k joined rung by rung.
    let mut edges = Vec::new();
    for i in 0..k {
        edges.push((i, k + i));
        if i + 1 < k {
            edges.push((i, i + 1));
            edges.push((k + i, k + i + 1));
        }
    }
    Topology::new(2 * k, &edges).unwrap()
}

fn jsonl<F: Fn(&mut Context<'_>) -> String>(topo: &Topology, cfg: &RunConfig, run: F) -> (String, Vec<u8>) {
    let mut ctx = Context::new(topo, cfg);
    let digest = run(&mut ctx);
    let mut buf = Vec::new();
    ctx.into_transcript().write_jsonl(&mut buf).unwrap();
    (digest, buf)
}

#[test]
fn replays_are_byte_identical() {
    let topo = ladder(6);
    for duplex in [Duplex::Full, Duplex::Half] {
        let cfg = RunConfig::new(42).with_duplex(duplex).with_tracing(true);
        let a = jsonl(&topo, &cfg, |c| bfs::run_bfs(c, 0).unwrap().meta.digest);
        let b = jsonl(&topo, &cfg, |c| bfs::run_bfs(c, 0).unwrap().meta.digest);
        assert_eq!(a, b);
        assert!(!a.1.is_empty());
        let a = jsonl(&topo, &cfg, |c| leader::run_leader(c).unwrap().meta.digest);
        let b = jsonl(&topo, &cfg, |c| leader::run_leader(c).unwrap().meta.digest);
        assert_eq!(a, b);
    }
    let cfg = RunConfig::new(7).with_tracing(true);
    let a = jsonl(&topo, &cfg, |c| mis::run_mis(c).unwrap().meta.digest);
    let b = jsonl(&topo, &cfg, |c| mis::run_mis(c).unwrap().meta.digest);
    assert_eq!(a, b);
}

#[test]
fn different_seeds_give_different_transcripts() {
    let topo = ladder(5);
    let digest = |seed| {
        let cfg = RunConfig::new(seed);
        leader::run_leader(&mut Context::new(&topo, &cfg)).unwrap().meta.digest
    };
    assert_ne!(digest(1), digest(2));
    assert_eq!(digest(3), digest(3));
}

#[test]
fn tracing_does_not_change_the_run() {
    let topo = ladder(4);
    let plain = RunConfig::new(11);
    let traced = RunConfig::new(11).with_tracing(true);
    let a = mis::run_mis(&mut Context::new(&topo, &plain)).unwrap();
    let b = mis::run_mis(&mut Context::new(&topo, &traced)).unwrap();
    assert_eq!(a.meta.digest, b.meta.digest);
    assert_eq!(a.outputs, b.outputs);
}
