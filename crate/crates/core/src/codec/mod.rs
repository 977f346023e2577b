//! Concurrent-code (BBC) encoder and prefix-tree decoder.
//!
//! A message of `k` bits is extended with `c` zero bits. For every prefix of
//! that codeword the running [`PrefixHash`] state selects one of `n` slots,
//! and the slot is marked. Decoding walks the binary prefix tree depth first,
//! bit 0 before bit 1, keeping only prefixes whose slot is marked; the zero
//! tail is walked as forced-0 branches. Every path that reaches depth `k + c`
//! yields a message, so results come out in ascending lexicographic order.

mod bits;
mod hash;

use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bits::{packet_density, Codeword, Message, Packet};
pub use hash::{hash_init, hash_update, mark_index, sub_seed, HashState, MixHash, PrefixHash};

use crate::error::{param, Result};

/// Default cap on the number of messages returned by [`decode_all`].
pub const DEFAULT_DECODE_LIMIT: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecParams {
    pub message_bits: usize,
    pub checksum_bits: usize,
    pub packet_slots: usize,
    pub hash_seed: u64,
}

impl Default for CodecParams {
    fn default() -> Self {
        Self {
            message_bits: 64,
            checksum_bits: 13,
            packet_slots: 256,
            hash_seed: 0,
        }
    }
}

impl CodecParams {
    pub fn new(message_bits: usize, checksum_bits: usize, packet_slots: usize) -> Self {
        Self {
            message_bits,
            checksum_bits,
            packet_slots,
            hash_seed: 0,
        }
    }

    pub fn codeword_bits(&self) -> usize {
        self.message_bits + self.checksum_bits
    }

    pub fn validate(&self) -> Result<()> {
        if self.message_bits < 1 {
            return param("message_bits must be at least 1");
        }
        if self.packet_slots < 2 {
            return param("packet_slots must be at least 2");
        }
        if self.codeword_bits() > self.packet_slots {
            return param(format!(
                "message_bits + checksum_bits = {} exceeds packet_slots = {}",
                self.codeword_bits(),
                self.packet_slots
            ));
        }
        Ok(())
    }
}

/// Result of an exhaustive or limited decode.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DecodeReport {
    pub messages: Vec<Message>,
    pub node_expansions: u64,
    pub truncated: bool,
}

/// Result of a first-match decode with an expansion budget.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FirstDecode {
    pub message: Option<Message>,
    pub node_expansions: u64,
    /// The budget ran out before the search finished.
    pub exhausted: bool,
}

/// Message count and search cost of a full decode, without collecting messages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecodeStats {
    pub messages: u64,
    pub node_expansions: u64,
}

/// Encoder/decoder bound to parameters and a prefix hash.
#[derive(Clone, Debug)]
pub struct Codec<H = MixHash> {
    params: CodecParams,
    hash: H,
}

impl Codec<MixHash> {
    pub fn new(params: CodecParams) -> Result<Self> {
        Self::with_hash(params, MixHash)
    }
}

impl<H: PrefixHash> Codec<H> {
    pub fn with_hash(params: CodecParams, hash: H) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, hash })
    }

    pub fn params(&self) -> &CodecParams {
        &self.params
    }

    pub fn append_checksum(&self, message: &Message) -> Result<Codeword> {
        if message.len() != self.params.message_bits {
            return param(format!(
                "message has {} bits, expected {}",
                message.len(),
                self.params.message_bits
            ));
        }
        let mut bits = message.bits().to_vec();
        bits.resize(self.params.codeword_bits(), false);
        Ok(Codeword::new(bits))
    }

    /// Slot selected by each prefix of the codeword, in prefix order.
    pub fn mark_positions(&self, message: &Message) -> Result<Vec<usize>> {
        let codeword = self.append_checksum(message)?;
        let n = self.params.packet_slots;
        let mut state = self.hash.init(self.params.hash_seed);
        Ok(codeword
            .bits()
            .iter()
            .map(|&b| {
                state = self.hash.update(state, b);
                mark_index(state, n)
            })
            .collect())
    }

    pub fn encode(&self, message: &Message) -> Result<Packet> {
        let mut packet = Packet::new(self.params.packet_slots);
        for slot in self.mark_positions(message)? {
            packet.set(slot);
        }
        Ok(packet)
    }

    fn check_packet(&self, packet: &Packet) -> Result<()> {
        if packet.len() != self.params.packet_slots {
            return param(format!(
                "packet has {} slots, expected {}",
                packet.len(),
                self.params.packet_slots
            ));
        }
        Ok(())
    }

    /// Depth-first walk. `visit` is called with the codeword path of every
    /// surviving full-depth node; `budget` bounds node expansions.
    fn search<F>(&self, packet: &Packet, budget: u64, visit: &mut F) -> (u64, bool)
    where
        F: FnMut(&[bool]) -> ControlFlow<()>,
    {
        struct Walk<'a, H, F> {
            hash: &'a H,
            packet: &'a Packet,
            message_bits: usize,
            total_bits: usize,
            budget: u64,
            expansions: u64,
            exhausted: bool,
            path: Vec<bool>,
            visit: &'a mut F,
        }

        impl<H: PrefixHash, F: FnMut(&[bool]) -> ControlFlow<()>> Walk<'_, H, F> {
            fn descend(&mut self, state: HashState) -> ControlFlow<()> {
                let depth = self.path.len();
                if depth == self.total_bits {
                    return (self.visit)(&self.path);
                }
                let branches: &[bool] = if depth < self.message_bits {
                    &[false, true]
                } else {
                    &[false]
                };
                for &bit in branches {
                    if self.expansions >= self.budget {
                        self.exhausted = true;
                        return ControlFlow::Break(());
                    }
                    self.expansions += 1;
                    let next = self.hash.update(state, bit);
                    if self.packet.get(mark_index(next, self.packet.len())) {
                        self.path.push(bit);
                        let flow = self.descend(next);
                        self.path.pop();
                        flow?;
                    }
                }
                ControlFlow::Continue(())
            }
        }

        let mut walk = Walk {
            hash: &self.hash,
            packet,
            message_bits: self.params.message_bits,
            total_bits: self.params.codeword_bits(),
            budget,
            expansions: 0,
            exhausted: false,
            path: Vec::with_capacity(self.params.codeword_bits()),
            visit,
        };
        let root = self.hash.init(self.params.hash_seed);
        let _ = walk.descend(root);
        (walk.expansions, walk.exhausted)
    }

    /// All valid messages in the packet, up to `limit`, in ascending order.
    pub fn decode_all(&self, packet: &Packet, limit: usize) -> Result<DecodeReport> {
        self.check_packet(packet)?;
        if limit < 1 {
            return param("decode limit must be at least 1");
        }
        let k = self.params.message_bits;
        let mut messages = Vec::new();
        let mut truncated = false;
        let (node_expansions, _) = self.search(packet, u64::MAX, &mut |path| {
            messages.push(Message::from_bits(path[..k].to_vec()));
            if messages.len() >= limit {
                truncated = true;
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        Ok(DecodeReport {
            messages,
            node_expansions,
            truncated,
        })
    }

    /// Lexicographically smallest valid message, if any.
    pub fn decode_first(&self, packet: &Packet) -> Result<Option<Message>> {
        Ok(self.decode_first_within(packet, u64::MAX)?.message)
    }

    /// [`Codec::decode_first`] that gives up after `budget` node expansions.
    pub fn decode_first_within(&self, packet: &Packet, budget: u64) -> Result<FirstDecode> {
        self.check_packet(packet)?;
        let k = self.params.message_bits;
        let mut found = None;
        let (node_expansions, exhausted) = self.search(packet, budget, &mut |path| {
            found = Some(Message::from_bits(path[..k].to_vec()));
            ControlFlow::Break(())
        });
        Ok(FirstDecode {
            exhausted: exhausted && found.is_none(),
            message: found,
            node_expansions,
        })
    }

    /// Exhaustive decode that only counts messages and expansions.
    pub fn decode_stats(&self, packet: &Packet) -> Result<DecodeStats> {
        self.check_packet(packet)?;
        let mut messages = 0u64;
        let (node_expansions, _) = self.search(packet, u64::MAX, &mut |_| {
            messages += 1;
            ControlFlow::Continue(())
        });
        Ok(DecodeStats {
            messages,
            node_expansions,
        })
    }

    /// Whether every mark of `message` is present in `packet`.
    pub fn contains(&self, packet: &Packet, message: &Message) -> Result<bool> {
        self.check_packet(packet)?;
        Ok(self
            .mark_positions(message)?
            .into_iter()
            .all(|slot| packet.get(slot)))
    }
}

pub fn append_checksum(message: &Message, params: &CodecParams) -> Result<Codeword> {
    Codec::new(*params)?.append_checksum(message)
}

pub fn encode(message: &Message, params: &CodecParams) -> Result<Packet> {
    Codec::new(*params)?.encode(message)
}

pub fn decode_all(packet: &Packet, params: &CodecParams, limit: usize) -> Result<DecodeReport> {
    Codec::new(*params)?.decode_all(packet, limit)
}

pub fn decode_first(packet: &Packet, params: &CodecParams) -> Result<Option<Message>> {
    Codec::new(*params)?.decode_first(packet)
}

/// Packet whose slots are marked independently with probability `density`.
///
/// Slot `i` is marked when its uniform draw is below `density`, so for a fixed
/// generator state a denser packet is always a superset of a sparser one.
pub fn random_packet<R: Rng>(slots: usize, density: f64, rng: &mut R) -> Packet {
    Packet::from_marks(slots, (0..slots).map(|_| rng.random::<f64>() < density))
}

/// Monte Carlo mean number of messages decoded from random packets of the
/// given density. Each trial is an exhaustive decode, so density 1 returns
/// exactly `2^k`.
pub fn hallucination_rate(
    density: f64,
    params: &CodecParams,
    trials: usize,
    rng_seed: u64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&density) {
        return param("density must lie in [0, 1]");
    }
    if trials < 1 {
        return param("trials must be at least 1");
    }
    let codec = Codec::new(*params)?;
    let mut total = 0u64;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(rng_seed, t as u64));
        let packet = random_packet(params.packet_slots, density, &mut rng);
        total += codec.decode_stats(&packet)?.messages;
    }
    Ok(total as f64 / trials as f64)
}

/// Independence approximation `2^k · d^(k+c)` of the hallucination count.
pub fn hallucination_approximation(density: f64, params: &CodecParams) -> f64 {
    2f64.powi(params.message_bits as i32) * density.powi(params.codeword_bits() as i32)
}
