use serde::{Deserialize, Serialize};

use crate::bcc::BccCode;
use crate::bic::BicCode;
use crate::error::CodecError;

/// Every tunable constant of the protocol suite in one place.
///
/// The analysis fixes these only up to constant factors; the defaults are the
/// values the test-suite was calibrated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Known upper bound N on the network size; 0 means "use n".
    pub n_bound: u64,
    /// Largest node ID; 0 means "use N".
    pub id_space: u64,
    /// BIC block-count constant c (k' = ⌈c·log2 N⌉ blocks).
    pub bic_c: f64,
    /// Default BCC decoding bound is ⌈bound_factor·log2 N⌉.
    pub bound_factor: f64,
    /// Half-duplex sub-round constant β.
    pub beta: f64,
    /// Presence-field width λ; 0 means max(2⌈log2 N⌉, 32).
    pub presence_bits: usize,
    /// z-values are drawn from {1, …, 2^min(8r, z_bits)}.
    pub z_bits: u32,
    /// Leader election stops after its (r, z, maxd) view has been the same
    /// for ⌈le_window_factor·(maxd + d)⌉ + le_window_extra consecutive
    /// stages. Factor 0 with extra 3 is the bare "three equal triples" rule.
    pub le_window_factor: f64,
    pub le_window_extra: u32,
    /// Degrees up to ⌈degree_exact_c·log2 N⌉ are computed exactly.
    pub degree_exact_c: f64,
    /// Sketch rows a = ⌈degree_rows·log2 N⌉.
    pub degree_rows: f64,
    /// Sketch columns b = ⌈degree_cols·log2 N⌉.
    pub degree_cols: f64,
    /// Column threshold as a fraction of a.
    pub degree_threshold: f64,
    /// Marking probability is 1/(2·mis_c·δ).
    pub mis_c: f64,
    /// Announcement code bound ⌈mis_announce_factor·log2 N⌉.
    pub mis_announce_factor: f64,
    /// Marked-degree filter: keep nodes with δ(v,S) ≤ mis_filter_factor·log2 N.
    pub mis_filter_factor: f64,
    /// Phase constant: τ = ⌈max_c·log2 n / log2 log2 n⌉.
    pub max_c: f64,
    /// Single-hop transmit probability min(1, max_tx_factor·log2 N / n_t).
    pub max_tx_factor: f64,
    /// Single-hop code bound ⌈max_bound_factor·log2 N⌉.
    pub max_bound_factor: f64,
    /// Multi-hop transmit probability min(1, max_mh_tx_factor·log2 N / n_t).
    pub max_mh_tx_factor: f64,
    /// Size estimate threshold: block i qualifies when |V_i| ≥ size_threshold·i.
    pub size_threshold: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            n_bound: 0,
            id_space: 0,
            bic_c: 4.0,
            bound_factor: 2.0,
            beta: 8.0,
            presence_bits: 0,
            z_bits: 20,
            le_window_factor: 1.0,
            le_window_extra: 3,
            degree_exact_c: 2.0,
            degree_rows: 40.0,
            degree_cols: 2.0,
            degree_threshold: 0.2,
            mis_c: 1.0,
            mis_announce_factor: 4.0,
            mis_filter_factor: 1.0,
            max_c: 2.0,
            max_tx_factor: 4.0,
            max_bound_factor: 16.0,
            max_mh_tx_factor: 2.0,
            size_threshold: 0.25,
        }
    }
}

pub const MIN_BIC_BLOCKS: usize = 16;

fn ceil_mul(f: f64, l: usize) -> usize {
    ((f * l as f64).ceil() as usize).max(1)
}

impl Params {
    /// Fills in the size-dependent defaults for a network of `n` nodes whose
    /// largest ID is `max_id`.
    pub fn resolved(&self, n: usize, max_id: u64) -> Params {
        let mut p = self.clone();
        if p.n_bound == 0 {
            p.n_bound = n.max(2) as u64;
        }
        if p.id_space == 0 {
            p.id_space = p.n_bound.max(max_id);
        }
        p
    }

    /// Applies `key=value` overrides; values are parsed as JSON when
    /// possible (numbers, booleans) and as strings otherwise.
    pub fn with_overrides<'a, I>(&self, pairs: I) -> Result<Params, String>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut v = serde_json::to_value(self).map_err(|e| e.to_string())?;
        let map = v.as_object_mut().expect("params serialize to an object");
        for (k, raw) in pairs {
            if !map.contains_key(k) {
                return Err(format!("unknown parameter {k:?}"));
            }
            let parsed = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            map.insert(k.to_string(), parsed);
        }
        serde_json::from_value(v).map_err(|e| e.to_string())
    }

    /// ⌈log2 N⌉, at least 1.
    pub fn log_n(&self) -> usize {
        ceil_log2(self.n_bound.max(2))
    }

    /// The default decoding bound ⌈bound_factor·log2 N⌉.
    pub fn bound(&self) -> usize {
        ceil_mul(self.bound_factor, self.log_n())
    }

    /// ⌈c·log2 N⌉ blocks, but never fewer than [`MIN_BIC_BLOCKS`]: with
    /// N = 2 the bare formula gives four blocks and a lone sender would be
    /// inaudible one time in sixteen.
    pub fn bic_blocks(&self) -> usize {
        ceil_mul(self.bic_c, self.log_n()).max(MIN_BIC_BLOCKS)
    }

    /// A BIC code over `size` values with the default block count.
    pub fn bic(&self, size: u64, bound: usize) -> Result<BicCode, CodecError> {
        Ok(BicCode::with_blocks(
            BccCode::new(size, bound)?,
            self.bic_blocks(),
        ))
    }

    pub fn presence_width(&self) -> usize {
        if self.presence_bits > 0 {
            self.presence_bits
        } else {
            (2 * self.log_n()).max(32)
        }
    }

    /// Cap on SL levels: ⌈3·log2 N⌉ + 1.
    pub fn r_cap(&self) -> u32 {
        3 * self.log_n() as u32 + 1
    }

    pub fn degree_exact_bound(&self) -> usize {
        ceil_mul(self.degree_exact_c, self.log_n())
    }

    pub fn degree_rows_count(&self) -> usize {
        ceil_mul(self.degree_rows, self.log_n())
    }

    pub fn degree_cols_count(&self) -> usize {
        ceil_mul(self.degree_cols, self.log_n())
    }
}

/// ⌈log2 x⌉ for x ≥ 1.
pub fn ceil_log2(x: u64) -> usize {
    if x <= 1 {
        0
    } else {
        (64 - (x - 1).leading_zeros()) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logs() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(5), 3);
        assert_eq!(ceil_log2(512), 9);
        assert_eq!(ceil_log2(513), 10);
    }

    #[test]
    fn overrides() {
        let p = Params::default()
            .with_overrides([("bic_c", "6"), ("n_bound", "1024")])
            .unwrap();
        assert_eq!(p.bic_c, 6.0);
        assert_eq!(p.log_n(), 10);
        assert_eq!(p.bic_blocks(), 60);
        assert!(Params::default().with_overrides([("nope", "1")]).is_err());
        assert!(Params::default().with_overrides([("bic_c", "x")]).is_err());
    }

    #[test]
    fn resolution() {
        let p = Params::default().resolved(100, 100);
        assert_eq!(p.n_bound, 100);
        assert_eq!(p.id_space, 100);
        assert_eq!(p.log_n(), 7);
        assert_eq!(p.presence_width(), 32);
        assert_eq!(p.r_cap(), 22);
    }
}
