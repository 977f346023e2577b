//! Threshold calibration by stepped sweeps.
//!
//! The upper threshold starts at full scale and drops by [`THRESHOLD_STEP`]
//! until probe runs decode the known messages, keeps dropping until a probe
//! yields gibberish (a decoded message outside the known set), then backs off
//! one step. In dual mode the lower threshold then climbs from zero the same
//! way until gibberish appears and backs off one step.

use std::io::Write;

use crate::codec::Message;
use crate::error::{Error, Result};

use super::{AdcConfig, ThresholdMode, ThresholdPair};

pub const THRESHOLD_STEP: u16 = 100;

/// A repeatable channel that reports every message decoded under the given
/// thresholds.
pub trait ProbeChannel {
    fn probe(&mut self, thresholds: &ThresholdPair) -> Result<Vec<Message>>;
}

impl<F: FnMut(&ThresholdPair) -> Result<Vec<Message>>> ProbeChannel for F {
    fn probe(&mut self, thresholds: &ThresholdPair) -> Result<Vec<Message>> {
        self(thresholds)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CalibrationRow {
    pub step: usize,
    pub upper: u16,
    pub lower: u16,
    /// Decoded messages that belong to the known set.
    pub decodes: usize,
    /// Decoded messages outside the known set.
    pub gibberish: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CalibrationLog {
    pub rows: Vec<CalibrationRow>,
}

impl CalibrationLog {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,upper,lower,decodes,gibberish")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.step, r.upper, r.lower, r.decodes, r.gibberish)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Calibration {
    pub thresholds: ThresholdPair,
    pub log: CalibrationLog,
}

struct Sweep<'a, P> {
    probe: &'a mut P,
    known: &'a [Message],
    log: CalibrationLog,
}

impl<P: ProbeChannel> Sweep<'_, P> {
    fn run(&mut self, t: ThresholdPair) -> Result<CalibrationRow> {
        let found = self.probe.probe(&t)?;
        let decodes = found.iter().filter(|m| self.known.contains(m)).count();
        let row = CalibrationRow {
            step: self.log.rows.len(),
            upper: t.upper,
            lower: t.lower,
            decodes,
            gibberish: found.len() - decodes,
        };
        self.log.rows.push(row);
        Ok(row)
    }
}

pub fn calibrate_thresholds<P: ProbeChannel>(
    probe: &mut P,
    known: &[Message],
    mode: ThresholdMode,
    adc: &AdcConfig,
) -> Result<Calibration> {
    if known.is_empty() {
        return crate::error::param("calibration needs at least one known message");
    }
    adc.validate()?;
    let mid = adc.mid_count();
    let floor = mid + THRESHOLD_STEP;
    let mut sweep = Sweep {
        probe,
        known,
        log: CalibrationLog::default(),
    };

    let mut upper = adc.max_count;
    let onset = loop {
        let row = sweep.run(ThresholdPair::single(upper))?;
        if row.decodes > 0 {
            break row;
        }
        if upper < floor + THRESHOLD_STEP {
            return Err(Error::Calibration { log: sweep.log });
        }
        upper -= THRESHOLD_STEP;
    };
    if onset.gibberish == 0 {
        while upper >= floor + THRESHOLD_STEP {
            upper -= THRESHOLD_STEP;
            if sweep.run(ThresholdPair::single(upper))?.gibberish > 0 {
                upper += THRESHOLD_STEP;
                break;
            }
        }
    }

    let thresholds = match mode {
        ThresholdMode::Single => ThresholdPair::single(upper),
        ThresholdMode::Dual => {
            let ceiling = mid - THRESHOLD_STEP;
            let mut lower = 0u16;
            while lower + THRESHOLD_STEP <= ceiling {
                lower += THRESHOLD_STEP;
                if sweep.run(ThresholdPair::dual(upper, lower))?.gibberish > 0 {
                    lower -= THRESHOLD_STEP;
                    break;
                }
            }
            ThresholdPair::dual(upper, lower)
        }
    };
    Ok(Calibration {
        thresholds,
        log: sweep.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(v: u64) -> Message {
        Message::from_u64(v, 8)
    }

    /// Decodes begin below 3550 and gibberish below 3150; the lower
    /// threshold yields gibberish above 850.
    fn toy(t: &ThresholdPair) -> Result<Vec<Message>> {
        let mut out = Vec::new();
        if t.upper < 3550 {
            out.push(msg(1));
        }
        if t.upper < 3150 || (t.mode == ThresholdMode::Dual && t.lower > 850) {
            out.push(msg(200));
        }
        Ok(out)
    }

    #[test]
    fn sweeps_in_steps_of_100() {
        let adc = AdcConfig::default();
        let known = [msg(1)];
        let single = calibrate_thresholds(&mut toy, &known, ThresholdMode::Single, &adc).unwrap();
        assert_eq!(single.thresholds, ThresholdPair::single(3200));
        let dual = calibrate_thresholds(&mut toy, &known, ThresholdMode::Dual, &adc).unwrap();
        assert_eq!(dual.thresholds, ThresholdPair::dual(3200, 800));
        let (ups, lows): (Vec<&CalibrationRow>, Vec<&CalibrationRow>) = dual.log.rows.iter().partition(|r| r.lower == 0);
        for w in ups.windows(2) {
            assert_eq!(w[0].upper - w[1].upper, 100);
        }
        assert_eq!(lows[0].lower, 100);
        for w in lows.windows(2) {
            assert_eq!(w[1].lower - w[0].lower, 100);
        }
        assert_eq!(dual.log.rows[0].upper, 4000);
    }

    #[test]
    fn silent_channel_fails_with_log() {
        let adc = AdcConfig::default();
        let err = calibrate_thresholds(&mut |_: &ThresholdPair| Ok(Vec::new()), &[msg(1)], ThresholdMode::Dual, &adc)
            .unwrap_err();
        match err {
            Error::Calibration { log } => {
                assert_eq!(log.rows.first().unwrap().upper, 4000);
                assert_eq!(log.rows.last().unwrap().upper, 2100);
                assert_eq!(log.rows.len(), 20);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn gibberish_at_onset_keeps_onset() {
        let adc = AdcConfig::default();
        let mut probe = |t: &ThresholdPair| Ok(if t.upper <= 3000 { vec![msg(1), msg(2)] } else { vec![] });
        let c = calibrate_thresholds(&mut probe, &[msg(1)], ThresholdMode::Single, &adc).unwrap();
        assert_eq!(c.thresholds.upper, 3000);
    }
}
