use std::collections::VecDeque;
use std::io::Write;

use crate::codec::{Codec, CodecParams, Message, Packet};
use crate::error::Result;

use super::SlotDecision;

/// Node expansions allowed per window decode.
pub const DEFAULT_DECODE_BUDGET: u64 = 1 << 20;

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionEvent {
    /// Absolute index of the newest slot in the decoded window.
    pub end_slot_index: u64,
    pub message: Message,
    pub window_density: f64,
}

impl DetectionEvent {
    pub fn write_csv<W: Write>(events: &[DetectionEvent], mut out: W) -> Result<()> {
        writeln!(out, "end_slot,message_hex,window_density")?;
        for e in events {
            writeln!(out, "{},{},{}", e.end_slot_index, e.message.to_hex(), e.window_density)?;
        }
        Ok(())
    }
}

/// Decodes the latest `n` slot decisions each time a slot arrives.
#[derive(Clone, Debug)]
pub struct SlidingDecoder {
    codec: Codec,
    window: Packet,
    filled: usize,
    next_slot: u64,
    dedup_window: u64,
    budget: u64,
    recent: VecDeque<(u64, Message)>,
    decodes: u64,
    exhausted: u64,
}

impl SlidingDecoder {
    pub fn new(params: CodecParams, dedup_window: u64) -> Result<Self> {
        Ok(Self {
            codec: Codec::new(params)?,
            window: Packet::new(params.packet_slots),
            filled: 0,
            next_slot: 0,
            dedup_window,
            budget: DEFAULT_DECODE_BUDGET,
            recent: VecDeque::new(),
            decodes: 0,
            exhausted: 0,
        })
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    /// Window decodes whose budget ran out.
    pub fn exhausted_decodes(&self) -> u64 {
        self.exhausted
    }

    pub fn window_decodes(&self) -> u64 {
        self.decodes
    }

    pub fn push(&mut self, mark: bool) -> Option<DetectionEvent> {
        let slot = self.next_slot;
        self.next_slot += 1;
        self.window.shift_in(mark);
        let n = self.window.len();
        if self.filled < n {
            self.filled += 1;
            if self.filled < n {
                return None;
            }
        }
        while self
            .recent
            .front()
            .is_some_and(|(s, _)| s + self.dedup_window <= slot)
        {
            self.recent.pop_front();
        }
        let marks = self.window.popcount();
        if marks == 0 {
            return None;
        }
        self.decodes += 1;
        let found = self
            .codec
            .decode_first_within(&self.window, self.budget)
            .expect("window length matches codec");
        if found.exhausted {
            self.exhausted += 1;
        }
        let message = found.message?;
        if self.recent.iter().any(|(_, m)| *m == message) {
            return None;
        }
        self.recent.push_back((slot, message.clone()));
        Some(DetectionEvent {
            end_slot_index: slot,
            message,
            window_density: marks as f64 / n as f64,
        })
    }
}

pub fn sliding_decode(
    decisions: &[SlotDecision],
    params: &CodecParams,
    dedup_window: u64,
) -> Result<Vec<DetectionEvent>> {
    let mut decoder = SlidingDecoder::new(*params, dedup_window)?;
    let mut events = Vec::new();
    for d in decisions {
        if let Some(mut e) = decoder.push(d.mark) {
            e.end_slot_index = d.slot_index;
            events.push(e);
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::encode;

    fn decisions(marks: impl IntoIterator<Item = bool>) -> Vec<SlotDecision> {
        marks
            .into_iter()
            .enumerate()
            .map(|(i, mark)| SlotDecision {
                slot_index: i as u64,
                mark,
                max_count: 0,
                min_count: 0,
            })
            .collect()
    }

    #[test]
    fn single_packet() {
        let params = CodecParams::default();
        let m = Message::from_ascii("Hello1!\n").unwrap();
        let p = encode(&m, &params).unwrap();
        let events = sliding_decode(&decisions((0..256).map(|i| p.get(i))), &params, 256).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].message, m);
        assert_eq!(events[0].end_slot_index, 255);
        assert!(sliding_decode(&decisions(vec![false; 1000]), &params, 256)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn back_to_back_packets() {
        let params = CodecParams::default();
        let a = Message::from_ascii("Hello1!\n").unwrap();
        let b = Message::from_ascii("Hello2!\n").unwrap();
        let (pa, pb) = (encode(&a, &params).unwrap(), encode(&b, &params).unwrap());
        let marks: Vec<bool> = (0..256).map(|i| pa.get(i)).chain((0..256).map(|i| pb.get(i))).collect();
        let events = sliding_decode(&decisions(marks), &params, 256).unwrap();
        let found: Vec<_> = events.iter().map(|e| (e.end_slot_index, e.message.clone())).collect();
        assert_eq!(found, vec![(255, a), (511, b)]);
    }

    #[test]
    fn dedup_suppresses_repeats() {
        let params = CodecParams::new(8, 2, 32);
        let m = Message::from_u64(0x5a, 8);
        let p = encode(&m, &params).unwrap();
        // A packet followed by its own copy 32 slots later is reported twice
        // with a 32-slot window and once with a 64-slot window.
        let marks: Vec<bool> = (0..64).map(|i| p.get(i % 32)).collect();
        let twice = sliding_decode(&decisions(marks.clone()), &params, 32).unwrap();
        let once = sliding_decode(&decisions(marks), &params, 64).unwrap();
        assert_eq!(twice.iter().filter(|e| e.message == m).count(), 2);
        assert_eq!(once.iter().filter(|e| e.message == m).count(), 1);
    }
}
