use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::detector::{ThresholdMode, ThresholdPair};
use crate::error::{Error, Result};

pub const CURVE_CSV_HEADER: &str =
    "eb_nb_db,threshold_mode,packets_sent,packets_ok,packets_dropped,per,hallucinations,ci_low,ci_high";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerCurvePoint {
    pub eb_nb_db: f64,
    pub threshold_mode: ThresholdMode,
    pub packets_sent: u64,
    pub packets_ok: u64,
    pub packets_dropped: u64,
    pub per: f64,
    pub hallucinations: u64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Eb/Nb recomputed from the scaled pulse and the measured noise rms.
    pub measured_eb_nb_db: f64,
    pub gain: f64,
    pub thresholds: Option<ThresholdPair>,
    pub messages_sent: u64,
    /// Messages in which every packet was received.
    pub messages_complete: u64,
    /// Window decodes that hit the expansion budget.
    pub exhausted_decodes: u64,
    pub error: Option<String>,
}

impl PerCurvePoint {
    pub fn from_counts(eb_nb_db: f64, threshold_mode: ThresholdMode, packets_sent: u64, packets_ok: u64) -> Self {
        let packets_dropped = packets_sent - packets_ok;
        let per = if packets_sent == 0 {
            f64::NAN
        } else {
            packets_dropped as f64 / packets_sent as f64
        };
        let (ci_low, ci_high) = wilson_interval(packets_dropped, packets_sent, 1.96);
        Self {
            eb_nb_db,
            threshold_mode,
            packets_sent,
            packets_ok,
            packets_dropped,
            per,
            hallucinations: 0,
            ci_low,
            ci_high,
            measured_eb_nb_db: f64::NAN,
            gain: f64::NAN,
            thresholds: None,
            messages_sent: 0,
            messages_complete: 0,
            exhausted_decodes: 0,
            error: None,
        }
    }

    pub fn failed(eb_nb_db: f64, threshold_mode: ThresholdMode, error: &Error) -> Self {
        Self {
            error: Some(error.to_string()),
            ..Self::from_counts(eb_nb_db, threshold_mode, 0, 0)
        }
    }
}

/// Wilson score interval for `k` events in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.6e}")
    }
}

pub fn write_curve_csv<W: Write>(points: &[PerCurvePoint], mut out: W) -> Result<()> {
    writeln!(out, "{CURVE_CSV_HEADER}")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            p.eb_nb_db,
            p.threshold_mode,
            p.packets_sent,
            p.packets_ok,
            p.packets_dropped,
            num(p.per),
            p.hallucinations,
            num(p.ci_low),
            num(p.ci_high)
        )?;
    }
    Ok(())
}

/// An externally published point to plot beside simulated curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub eb_nb_db: f64,
    pub per: f64,
    pub label: String,
}

/// Reads `eb_nb_db,per,label` rows; a header row is optional.
pub fn read_reference_overlay<R: BufRead>(input: R) -> Result<Vec<ReferencePoint>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with("eb_nb_db")) {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let (Some(db), Some(per), Some(label)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Format(format!("line {}: expected eb_nb_db,per,label", n + 1)));
        };
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))
        };
        out.push(ReferencePoint {
            eb_nb_db: parse(db)?,
            per: parse(per)?,
            label: label.trim().to_string(),
        });
    }
    Ok(out)
}
