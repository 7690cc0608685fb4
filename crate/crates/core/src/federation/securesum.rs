//! Additive-mask secure aggregation over fixed-point values.
//!
//! Every pair of providers shares a seed; per query each provider adds the
//! masks it shares with higher-indexed peers and subtracts those with lower
//! ones, so the masks cancel exactly in the aggregate. Arithmetic is modular
//! over u64 at 2^-20 resolution: cancellation is bit-exact, where floating
//! masks would leak through rounding.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::FederationError;

const FRACT_BITS: u32 = 20;

/// Encodes a real into fixed point (round to nearest multiple of 2^-20).
pub fn encode_fixed(value: f64) -> u64 {
    (value * (1u64 << FRACT_BITS) as f64).round() as i64 as u64
}

/// Decodes modular fixed point back into a real.
pub fn decode_fixed(word: u64) -> f64 {
    word as i64 as f64 / (1u64 << FRACT_BITS) as f64
}

/// Mask domain separation: the estimate stream and the sensitivity stream use
/// independent masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskStream {
    Value,
    Sensitivity,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn mask_word(pair_seed: u64, query_id: u64, stream: MaskStream) -> u64 {
    let tag = match stream {
        MaskStream::Value => 0x56u64,
        MaskStream::Sensitivity => 0x53u64,
    };
    let key = splitmix(splitmix(pair_seed ^ query_id.wrapping_mul(0x2545_f491_4f6c_dd1d)) ^ tag);
    ChaCha8Rng::seed_from_u64(key).random()
}

/// One provider's masking context: its index and the seeds it shares with
/// each peer.
#[derive(Debug, Clone)]
pub struct PairwiseMasker {
    my_index: usize,
    peer_seeds: Vec<(usize, u64)>,
}

impl PairwiseMasker {
    pub fn new(my_index: usize, peer_seeds: Vec<(usize, u64)>) -> PairwiseMasker {
        PairwiseMasker {
            my_index,
            peer_seeds,
        }
    }

    fn net_mask(&self, query_id: u64, stream: MaskStream) -> u64 {
        let mut acc = 0u64;
        for &(peer, seed) in &self.peer_seeds {
            let w = mask_word(seed, query_id, stream);
            if peer > self.my_index {
                acc = acc.wrapping_add(w);
            } else {
                acc = acc.wrapping_sub(w);
            }
        }
        acc
    }

    /// Masks a fixed-point contribution for this query.
    pub fn mask(&self, query_id: u64, value: f64, stream: MaskStream) -> u64 {
        encode_fixed(value).wrapping_add(self.net_mask(query_id, stream))
    }
}

/// The session the aggregation runs in: the participant set with one seed per
/// unordered pair. [`SecureSumSession::masker`] hands each provider its view.
#[derive(Debug, Clone)]
pub struct SecureSumSession {
    participants: usize,
    pair_seeds: HashMap<(usize, usize), u64>,
}

impl SecureSumSession {
    /// Derives all pairwise seeds from one master seed (the key-exchange
    /// stand-in for in-process federations and seeded experiments).
    pub fn from_master_seed(participants: usize, master_seed: u64) -> SecureSumSession {
        let mut pair_seeds = HashMap::new();
        for i in 0..participants {
            for j in i + 1..participants {
                let seed = splitmix(master_seed ^ splitmix((i as u64) << 32 | j as u64));
                pair_seeds.insert((i, j), seed);
            }
        }
        SecureSumSession {
            participants,
            pair_seeds,
        }
    }

    pub fn participants(&self) -> usize {
        self.participants
    }

    pub fn masker(&self, index: usize) -> PairwiseMasker {
        let mut peer_seeds = Vec::new();
        for (&(i, j), &seed) in &self.pair_seeds {
            if i == index {
                peer_seeds.push((j, seed));
            } else if j == index {
                peer_seeds.push((i, seed));
            }
        }
        peer_seeds.sort_unstable();
        PairwiseMasker::new(index, peer_seeds)
    }

    /// Sums masked contributions; with every participant present the masks
    /// cancel and the result is the exact fixed-point sum of the inputs.
    pub fn sum(&self, shares: &[u64]) -> Result<f64, FederationError> {
        if shares.len() != self.participants {
            return Err(FederationError::IncompleteSession {
                got: shares.len(),
                want: self.participants,
            });
        }
        let total = shares.iter().fold(0u64, |acc, &s| acc.wrapping_add(s));
        Ok(decode_fixed(total))
    }

    /// Reference oblivious-max: unmasks the sensitivity stream only and takes
    /// the maximum. The aggregator learns the individual sensitivities here
    /// (never the estimates); a stronger oblivious-max protocol can be swapped
    /// in via [`super::ObliviousMax`].
    pub fn max_sensitivity(
        &self,
        query_id: u64,
        shares: &[u64],
    ) -> Result<f64, FederationError> {
        if shares.len() != self.participants {
            return Err(FederationError::IncompleteSession {
                got: shares.len(),
                want: self.participants,
            });
        }
        let mut best = f64::NEG_INFINITY;
        for (index, &share) in shares.iter().enumerate() {
            let net = self
                .masker(index)
                .net_mask(query_id, MaskStream::Sensitivity);
            let value = decode_fixed(share.wrapping_sub(net));
            best = best.max(value);
        }
        Ok(best)
    }
}
