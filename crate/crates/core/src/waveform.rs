//! Uniformly sampled voltage traces and their file formats.
//!
//! Text form is CSV with header `time_s,volts`. The raw form is an 8-byte
//! little-endian sample count followed by little-endian `f64` samples; sample
//! rate and origin live in a sidecar text file (see [`RawSidecar`]).

use std::io::{BufRead, Read, Write};

use crate::error::{param, Error, Result};

/// Sample index of time `t_s` at `rate_hz`, floored. The small bias keeps
/// products such as `3.9e-6 * 4.1e7 * 10` from landing one sample short.
#[inline]
pub fn snap(t_s: f64, rate_hz: f64) -> usize {
    (t_s * rate_hz + 1e-7).floor().max(0.0) as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    /// Absolute time of sample 0.
    pub origin_time_s: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, origin_time_s: f64) -> Result<Self> {
        if samples.is_empty() {
            return param("waveform must contain at least one sample");
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return param("sample rate must be positive");
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return param("waveform samples must be finite");
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            origin_time_s,
        })
    }

    pub fn zeros(len: usize, sample_rate_hz: f64, origin_time_s: f64) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate_hz,
            origin_time_s,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.origin_time_s + index as f64 / self.sample_rate_hz
    }

    /// Index of sample 0 on the absolute sample lattice `round(t · rate)`.
    pub fn start_index(&self) -> i64 {
        (self.origin_time_s * self.sample_rate_hz).round() as i64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time_s,volts")?;
        for (i, v) in self.samples.iter().enumerate() {
            writeln!(out, "{},{}", self.time_of(i), v)?;
        }
        Ok(())
    }

    pub fn write_raw<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        for v in &self.samples {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_raw<R: Read>(mut input: R, sidecar: &RawSidecar) -> Result<Self> {
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut samples = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            input.read_exact(&mut buf)?;
            samples.push(f64::from_le_bytes(buf));
        }
        Self::new(samples, sidecar.sample_rate_hz, sidecar.origin_time_s)
    }

    pub fn sidecar(&self) -> RawSidecar {
        RawSidecar {
            sample_rate_hz: self.sample_rate_hz,
            origin_time_s: self.origin_time_s,
        }
    }
}

pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64).sqrt()
}

/// Header stored next to a raw sample file, as `key=value` lines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawSidecar {
    pub sample_rate_hz: f64,
    pub origin_time_s: f64,
}

impl RawSidecar {
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "sample_rate_hz={}", self.sample_rate_hz)?;
        writeln!(out, "origin_time_s={}", self.origin_time_s)?;
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut rate = None;
        let mut origin = 0.0;
        for line in input.lines() {
            let line = line?;
            let Some((k, v)) = line.split_once('=') else {
                continue;
            };
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad sidecar value {v:?}")))?;
            match k.trim() {
                "sample_rate_hz" => rate = Some(v),
                "origin_time_s" => origin = v,
                other => return Err(Error::Format(format!("unknown sidecar key {other:?}"))),
            }
        }
        Ok(Self {
            sample_rate_hz: rate.ok_or_else(|| Error::Format("missing sample_rate_hz".into()))?,
            origin_time_s: origin,
        })
    }
}

/// Reads voltages from CSV: either `time_s,volts` or a single `volts` column.
/// A non-numeric first line is treated as a header.
pub fn read_volts_csv<R: BufRead>(input: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::Format(format!(
                    "line {}: cannot parse {field:?} as a voltage",
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snap_rounds_down_with_bias() {
        assert_eq!(snap(3.9e-6, 4.1e7), 159);
        assert_eq!(snap(256.0 * 3.9e-6, 4.1e7), 40934);
        assert_eq!(snap(1e-3, 1e6), 1000);
    }

    #[test]
    fn raw_round_trip() {
        let w = Waveform::new(vec![1.5, -2.0, 0.25], 1e6, 0.5).unwrap();
        let mut buf = Vec::new();
        w.write_raw(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 3 * 8);
        assert_eq!(&buf[..8], &3u64.to_le_bytes());
        let mut side = Vec::new();
        w.sidecar().write(&mut side).unwrap();
        let sidecar = RawSidecar::read(&side[..]).unwrap();
        assert_eq!(Waveform::read_raw(&buf[..], &sidecar).unwrap(), w);
    }

    #[test]
    fn csv_header_and_rows() {
        let w = Waveform::new(vec![0.5, -1.0], 2.0, 0.0).unwrap();
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "time_s,volts\n0,0.5\n0.5,-1\n");
        assert_eq!(read_volts_csv(&buf[..]).unwrap(), vec![0.5, -1.0]);
        assert_eq!(read_volts_csv(&b"volts\n1\n2.5\n"[..]).unwrap(), vec![1.0, 2.5]);
        assert!(read_volts_csv(&b"volts\n1\nx\n"[..]).is_err());
    }

    #[test]
    fn rejects_bad_waveforms() {
        assert!(Waveform::new(vec![], 1.0, 0.0).is_err());
        assert!(Waveform::new(vec![f64::NAN], 1.0, 0.0).is_err());
        assert!(Waveform::new(vec![1.0], 0.0, 0.0).is_err());
    }
}
