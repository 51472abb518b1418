use std::fmt;
use std::io::{self, Write};

use serde::Serialize;
use xxhash_rust::xxh3::Xxh3;

use crate::bits::BitVector;

/// One (round, node) entry of a full trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub round: u64,
    pub node: usize,
    pub id: u64,
    pub action: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub received: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<serde_json::Value>,
}

/// Running record of a run. The digest always covers every action and
/// received frame; the per-node records are kept only when tracing is on.
/// It is a 128-bit XXH3 hash: replay comparison needs determinism, not
/// collision resistance against an adversary, and hashing every frame with
/// SHA-256 dominated the run time.
#[derive(Clone)]
pub struct Transcript {
    hasher: Xxh3,
    pub rounds: u64,
    pub max_frame_bits: usize,
    pub transmissions: u64,
    records: Option<Vec<TraceRecord>>,
}

impl fmt::Debug for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transcript")
            .field("digest", &self.digest())
            .field("rounds", &self.rounds)
            .field("max_frame_bits", &self.max_frame_bits)
            .field("transmissions", &self.transmissions)
            .field("records", &self.records.as_ref().map(Vec::len))
            .finish()
    }
}

impl Transcript {
    pub fn new(tracing: bool) -> Self {
        Transcript {
            hasher: Xxh3::new(),
            rounds: 0,
            max_frame_bits: 0,
            transmissions: 0,
            records: tracing.then(Vec::new),
        }
    }

    pub fn is_tracing(&self) -> bool {
        self.records.is_some()
    }

    pub(crate) fn absorb(&mut self, tag: u8, node: usize, bits: Option<&BitVector>) {
        self.hasher.update(&[tag]);
        self.hasher.update(&(node as u64).to_le_bytes());
        if let Some(b) = bits {
            self.hasher.update(&(b.len() as u64).to_le_bytes());
            let mut buf = [0u8; 256];
            for chunk in b.words().chunks(buf.len() / 8) {
                for (dst, w) in buf.chunks_exact_mut(8).zip(chunk) {
                    dst.copy_from_slice(&w.to_le_bytes());
                }
                self.hasher.update(&buf[..chunk.len() * 8]);
            }
        }
    }

    pub(crate) fn start_round(&mut self, round: u64) {
        self.hasher.update(b"R");
        self.hasher.update(&round.to_le_bytes());
        self.rounds += 1;
    }

    /// Mixes a stage label into the digest, so chained stages hash distinctly.
    pub fn mark(&mut self, label: &str) {
        self.hasher.update(b"S");
        self.hasher.update(label.as_bytes());
    }

    pub(crate) fn push(&mut self, rec: TraceRecord) {
        if let Some(r) = &mut self.records {
            r.push(rec);
        }
    }

    /// Hex digest over everything absorbed so far.
    pub fn digest(&self) -> String {
        hex::encode(self.hasher.digest128().to_be_bytes())
    }

    pub fn records(&self) -> &[TraceRecord] {
        self.records.as_deref().unwrap_or(&[])
    }

    /// Writes the records as JSON lines.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for rec in self.records() {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
