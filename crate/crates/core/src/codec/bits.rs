//! Bit containers: messages, codewords and packets.
//!
//! Hex serialization is shared by messages and packets: bit 0 is the most
//! significant bit of the first digit, digits are lowercase, and the final
//! digit is zero-padded on the right when the length is not a multiple of 4.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn bits_to_hex(len: usize, bit: impl Fn(usize) -> bool) -> String {
    let digits = len.div_ceil(4);
    let mut out = String::with_capacity(digits);
    for d in 0..digits {
        let mut nibble = 0u32;
        for j in 0..4 {
            let i = d * 4 + j;
            nibble <<= 1;
            if i < len && bit(i) {
                nibble |= 1;
            }
        }
        out.push(char::from_digit(nibble, 16).unwrap());
    }
    out
}

fn hex_to_bits(text: &str, len: usize) -> Result<Vec<bool>> {
    let text = text.trim();
    let digits = len.div_ceil(4);
    if text.len() != digits {
        return Err(Error::Format(format!(
            "expected {digits} hex digits for {len} bits, got {}",
            text.len()
        )));
    }
    let mut bits = Vec::with_capacity(digits * 4);
    for c in text.chars() {
        let v = c
            .to_digit(16)
            .ok_or_else(|| Error::Format(format!("invalid hex digit {c:?}")))?;
        for j in (0..4).rev() {
            bits.push((v >> j) & 1 == 1);
        }
    }
    if bits[len..].iter().any(|&b| b) {
        return Err(Error::Format("nonzero padding bits".into()));
    }
    bits.truncate(len);
    Ok(bits)
}

/// Message bits, most significant first. Ordering is lexicographic on bits.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Message {
    bits: Vec<bool>,
}

impl Message {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            bits: vec![false; len],
        }
    }

    /// The low `len` bits of `value`, most significant first. `len` ≤ 64.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= 64, "from_u64 supports at most 64 bits");
        Self {
            bits: (0..len).rev().map(|s| (value >> s) & 1 == 1).collect(),
        }
    }

    /// Interprets up to 64 bits as an unsigned integer.
    pub fn to_u64(&self) -> Option<u64> {
        if self.bits.len() > 64 {
            return None;
        }
        Some(self.bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64))
    }

    pub fn from_hex(text: &str, len: usize) -> Result<Self> {
        hex_to_bits(text, len).map(Self::from_bits)
    }

    pub fn to_hex(&self) -> String {
        bits_to_hex(self.bits.len(), |i| self.bits[i])
    }

    /// Eight bits per byte, most significant bit first.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self {
            bits: bytes
                .iter()
                .flat_map(|&b| (0..8).rev().map(move |s| (b >> s) & 1 == 1))
                .collect(),
        }
    }

    pub fn from_ascii(text: &str) -> Result<Self> {
        if !text.is_ascii() {
            return Err(Error::Format("message text must be ASCII".into()));
        }
        Ok(Self::from_bytes(text.as_bytes()))
    }

    /// Bytes of the message when its length is a multiple of 8.
    pub fn to_bytes(&self) -> Option<Vec<u8>> {
        if self.bits.len() % 8 != 0 {
            return None;
        }
        Some(
            self.bits
                .chunks(8)
                .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8))
                .collect(),
        )
    }

    /// Escaped ASCII rendering, e.g. `Hello1!\n`.
    pub fn to_ascii_escaped(&self) -> Option<String> {
        let bytes = self.to_bytes()?;
        Some(bytes.iter().flat_map(|b| b.escape_ascii()).map(char::from).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

impl fmt::Debug for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Message({})", self.to_hex())
    }
}

/// Message followed by its all-zero checksum tail.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Codeword {
    bits: Vec<bool>,
}

impl Codeword {
    pub(crate) fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Fixed-length vector of slot marks.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Packet {
    slots: usize,
    words: Vec<u64>,
}

impl Packet {
    pub fn new(slots: usize) -> Self {
        Self {
            slots,
            words: vec![0; slots.div_ceil(64)],
        }
    }

    pub fn all_ones(slots: usize) -> Self {
        let mut p = Self::new(slots);
        for i in 0..slots {
            p.set(i);
        }
        p
    }

    pub fn from_marks(slots: usize, marks: impl IntoIterator<Item = bool>) -> Self {
        let mut p = Self::new(slots);
        for (i, m) in marks.into_iter().enumerate().take(slots) {
            if m {
                p.set(i);
            }
        }
        p
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.slots
    }

    pub fn is_empty(&self) -> bool {
        self.slots == 0
    }

    #[inline]
    pub fn get(&self, slot: usize) -> bool {
        (self.words[slot / 64] >> (slot % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, slot: usize) {
        self.words[slot / 64] |= 1 << (slot % 64);
    }

    #[inline]
    pub fn clear(&mut self, slot: usize) {
        self.words[slot / 64] &= !(1 << (slot % 64));
    }

    pub fn popcount(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn marks(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.slots).filter(|&i| self.get(i))
    }

    /// Mark-wise OR. Panics on length mismatch.
    pub fn union(&self, other: &Packet) -> Packet {
        assert_eq!(self.slots, other.slots, "packet length mismatch");
        Packet {
            slots: self.slots,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a | b)
                .collect(),
        }
    }

    pub fn is_superset_of(&self, other: &Packet) -> bool {
        self.slots == other.slots
            && self
                .words
                .iter()
                .zip(&other.words)
                .all(|(a, b)| b & !a == 0)
    }

    /// Drops slot 0, moves every slot one position down and puts `mark` in the
    /// last slot.
    pub fn shift_in(&mut self, mark: bool) {
        let n = self.words.len();
        for w in 0..n {
            let carry = if w + 1 < n { self.words[w + 1] << 63 } else { 0 };
            self.words[w] = (self.words[w] >> 1) | carry;
        }
        let last = self.slots - 1;
        if mark {
            self.set(last);
        } else {
            self.clear(last);
        }
    }

    pub fn to_hex(&self) -> String {
        bits_to_hex(self.slots, |i| self.get(i))
    }

    pub fn from_hex(text: &str, slots: usize) -> Result<Self> {
        let bits = hex_to_bits(text, slots)?;
        Ok(Self::from_marks(slots, bits))
    }
}

impl fmt::Debug for Packet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Packet({})", self.to_hex())
    }
}

/// Fraction of marked slots.
pub fn packet_density(packet: &Packet) -> f64 {
    if packet.is_empty() {
        return 0.0;
    }
    packet.popcount() as f64 / packet.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ascii_message_bits() {
        let m = Message::from_ascii("Hello1!\n").unwrap();
        assert_eq!(m.len(), 64);
        assert_eq!(m.to_hex(), "48656c6c6f31210a");
        assert_eq!(m.to_ascii_escaped().unwrap(), "Hello1!\\n");
        assert!(!m.bits()[0]);
    }

    #[test]
    fn lexicographic_order() {
        let a = Message::from_u64(0b0111, 4);
        let b = Message::from_u64(0b1000, 4);
        assert!(a < b);
    }

    #[test]
    fn hex_padding() {
        let p = Packet::from_marks(6, [true, false, false, false, false, true]);
        assert_eq!(p.to_hex(), "84");
        assert_eq!(Packet::from_hex("84", 6).unwrap(), p);
        assert!(Packet::from_hex("85", 6).is_err());
        assert!(Packet::from_hex("8", 6).is_err());
        assert!(Packet::from_hex("8g", 6).is_err());
    }

    #[test]
    fn density_extremes() {
        assert_eq!(packet_density(&Packet::new(256)), 0.0);
        assert_eq!(packet_density(&Packet::all_ones(256)), 1.0);
    }

    #[test]
    fn shift_in_moves_window() {
        let mut p = Packet::new(130);
        p.set(0);
        p.set(64);
        p.set(129);
        p.shift_in(true);
        let marks: Vec<_> = p.marks().collect();
        assert_eq!(marks, vec![63, 128, 129]);
    }

    proptest! {
        #[test]
        fn packet_hex_round_trip(bits in proptest::collection::vec(any::<bool>(), 1..300)) {
            let p = Packet::from_marks(bits.len(), bits.iter().copied());
            prop_assert_eq!(Packet::from_hex(&p.to_hex(), bits.len()).unwrap(), p);
        }

        #[test]
        fn message_hex_round_trip(bits in proptest::collection::vec(any::<bool>(), 1..100)) {
            let m = Message::from_bits(bits.clone());
            prop_assert_eq!(Message::from_hex(&m.to_hex(), bits.len()).unwrap(), m);
        }
    }
}
