use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use mpp_core::codec::{hallucination_approximation, hallucination_rate, Codec, CodecParams, Message, Packet};
use mpp_core::detector::ThresholdMode;
use mpp_core::experiment::{
    calibrate_point, decoder_cost_profile, read_reference_overlay, run_per_curve, write_curve_csv, CurveRun,
    PerCurvePoint, ReferencePoint,
};
use mpp_core::noise::{fit_middleton, MiddletonParams, NoiseConfig, NoiseGenerator};
use mpp_core::waveform::{read_volts_csv, snap};
use mpp_core::Error;
use serde_json::json;

use crate::config::RunConfigFile;
use crate::{Cli, CodecArgs, Command, Failure, UsageExt};

/// Hardware measurement this simulator is compared against: dual thresholds
/// at 16 dB.
const REFERENCE_PER_16DB: f64 = 2e-5;

type Outcome = Result<(), Failure>;

pub fn run(cli: Cli) -> Outcome {
    let Cli {
        seed,
        config,
        out,
        command,
    } = cli;
    let mut cfg = RunConfigFile::load(config.as_deref()).usage()?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let ctx = Context_ { cfg, out };
    match command {
        Command::Encode { ascii, hex, codec } => ctx.encode(ascii, hex, codec),
        Command::Decode {
            packet,
            first,
            all: _,
            limit,
            union,
            ascii,
            codec,
        } => ctx.decode(packet, first, limit, union, ascii, codec),
        Command::PerCurve {
            repetitions,
            grid,
            modes,
            reference,
            dump_config,
        } => ctx.per_curve(repetitions, grid, modes, reference, dump_config),
        Command::Calibrate { snr, mode } => ctx.calibrate(snr, mode),
        Command::FitNoise { samples, terms } => fit_noise(&samples, terms),
        Command::GenNoise {
            harmonics,
            line_locked,
            burst,
            middleton,
            sigma,
            awgn,
            duration,
            rate,
            origin,
            file,
        } => ctx.gen_noise(
            Components {
                harmonics,
                line_locked,
                burst,
                middleton,
                sigma,
                awgn,
            },
            duration,
            rate,
            origin,
            &file,
        ),
        Command::Hallucinate {
            densities,
            trials,
            codec,
        } => ctx.hallucinate(&densities, trials, codec),
        Command::CostProfile {
            densities,
            trials,
            codec,
        } => ctx.cost_profile(&densities, trials, codec),
    }
}

struct Context_ {
    cfg: RunConfigFile,
    out: PathBuf,
}

struct Components {
    harmonics: bool,
    line_locked: bool,
    burst: bool,
    middleton: Option<Vec<f64>>,
    sigma: f64,
    awgn: Option<f64>,
}

fn codec_params(base: CodecParams, args: CodecArgs) -> CodecParams {
    CodecParams {
        message_bits: args.message_bits.unwrap_or(base.message_bits),
        checksum_bits: args.checksum_bits.unwrap_or(base.checksum_bits),
        packet_slots: args.slots.unwrap_or(base.packet_slots),
        hash_seed: args.hash_seed.unwrap_or(base.hash_seed),
    }
}

/// Expands `\n`, `\r`, `\t`, `\0`, `\\` and `\xNN`.
fn unescape(text: &str) -> anyhow::Result<String> {
    let mut out = String::new();
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('t') => out.push('\t'),
            Some('0') => out.push('\0'),
            Some('\\') => out.push('\\'),
            Some('x') => {
                let hex: String = chars.by_ref().take(2).collect();
                let v = u8::from_str_radix(&hex, 16).map_err(|_| anyhow!("bad \\x escape {hex:?}"))?;
                out.push(char::from(v));
            }
            Some(other) => bail!("unknown escape \\{other}"),
            None => bail!("trailing backslash"),
        }
    }
    Ok(out)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

impl Context_ {
    fn path(&self, name: &str) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(name))
    }

    fn encode(&self, ascii: Option<String>, hex: Option<String>, args: CodecArgs) -> Outcome {
        let params = codec_params(self.cfg.codec, args);
        let codec = Codec::new(params).usage()?;
        let message = match (ascii, hex) {
            (Some(text), _) => Message::from_ascii(&unescape(&text).usage()?).usage()?,
            (None, Some(h)) => Message::from_hex(&h, params.message_bits).usage()?,
            (None, None) => return Err(Failure::Usage(anyhow!("give --ascii or --hex"))),
        };
        let packet = codec.encode(&message).usage()?;
        println!("{}", packet.to_hex());
        Ok(())
    }

    fn decode(
        &self,
        packet: Option<String>,
        first: bool,
        limit: usize,
        union: Vec<String>,
        ascii: bool,
        args: CodecArgs,
    ) -> Outcome {
        let params = codec_params(self.cfg.codec, args);
        let codec = Codec::new(params).usage()?;
        let n = params.packet_slots;
        let parse = |text: &str| Packet::from_hex(text.trim(), n).usage();
        let packet = if !union.is_empty() {
            let mut acc = Packet::new(n);
            for item in &union {
                let text = if Path::new(item).is_file() {
                    fs::read_to_string(item).usage()?
                } else {
                    item.clone()
                };
                acc = acc.union(&parse(&text)?);
            }
            acc
        } else {
            match packet.as_deref() {
                Some(p) if p != "-" => parse(p)?,
                _ => {
                    let mut text = String::new();
                    std::io::stdin().lock().read_to_string(&mut text)?;
                    parse(&text)?
                }
            }
        };
        let messages = if first {
            codec.decode_first(&packet)?.into_iter().collect()
        } else {
            codec.decode_all(&packet, limit).usage()?.messages
        };
        let stdout = std::io::stdout();
        let mut w = stdout.lock();
        for m in messages {
            let line = if ascii {
                m.to_ascii_escaped().unwrap_or_else(|| m.to_hex())
            } else {
                m.to_hex()
            };
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    fn per_curve(
        mut self,
        repetitions: Option<usize>,
        grid: Option<Vec<f64>>,
        modes: Option<Vec<ThresholdMode>>,
        reference: Option<PathBuf>,
        dump_config: bool,
    ) -> Outcome {
        if let Some(r) = repetitions {
            self.cfg.repetitions = r;
        }
        if let Some(g) = grid {
            self.cfg.snr_grid_db = g;
        }
        if let Some(m) = modes {
            self.cfg.modes = m;
        }
        let effective = self.cfg.to_toml()?;
        if dump_config {
            print!("{effective}");
            return Ok(());
        }
        let exp = self.cfg.to_experiment().usage()?;
        let overlay = match &reference {
            Some(p) => {
                let f = File::open(p).with_context(|| format!("opening {}", p.display())).usage()?;
                read_reference_overlay(std::io::BufReader::new(f)).usage()?
            }
            None => Vec::new(),
        };
        let run = run_per_curve(&exp)?;

        let curve_path = self.path("per_curve.csv")?;
        let mut w = create(&curve_path)?;
        write_curve_csv(&run.points, &mut w)?;
        w.flush()?;
        let mut w = create(&self.path("calibration.csv")?)?;
        writeln!(w, "eb_nb_db,threshold_mode,step,upper,lower,decodes,gibberish")?;
        for c in &run.calibrations {
            for r in &c.log.rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    c.eb_nb_db, c.mode, r.step, r.upper, r.lower, r.decodes, r.gibberish
                )?;
            }
        }
        w.flush()?;
        fs::write(self.path("effective_config.toml")?, &effective)?;
        let manifest = json!({
            "command": "per-curve",
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.cfg.seed,
            "noise_rms_volts": run.noise_rms_volts,
            "reference_ratio": run.reference_ratio,
            "outputs": ["per_curve.csv", "calibration.csv", "effective_config.toml"],
            "points": run.points.iter().map(point_json).collect::<Vec<_>>(),
            "config": &self.cfg.resolved(),
        });
        fs::write(self.path("manifest.json")?, serde_json::to_string_pretty(&manifest)? + "\n")?;
        print!("{}", summary(&run, &overlay));
        Ok(())
    }

    fn calibrate(&self, snr: f64, mode: ThresholdMode) -> Outcome {
        let exp = self.cfg.to_experiment().usage()?;
        let result = calibrate_point(&exp, snr, mode);
        let log = match &result {
            Ok(c) => &c.log,
            Err(Error::Calibration { log }) => log,
            Err(e) => return Err(Failure::Runtime(anyhow!("{e}"))),
        };
        let mut w = create(&self.path("calibration_log.csv")?)?;
        log.write_csv(&mut w)?;
        w.flush()?;
        let manifest = json!({
            "command": "calibrate",
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.cfg.seed,
            "eb_nb_db": snr,
            "mode": mode,
            "thresholds": result.as_ref().ok().map(|c| c.thresholds),
            "outputs": ["calibration_log.csv"],
            "config": &self.cfg.resolved(),
        });
        fs::write(self.path("manifest.json")?, serde_json::to_string_pretty(&manifest)? + "\n")?;
        let cal = result?;
        let t = cal.thresholds;
        println!("upper={} lower={} mode={}", t.upper, t.lower, t.mode);
        Ok(())
    }

    fn gen_noise(&self, c: Components, duration: f64, rate: f64, origin: f64, file: &str) -> Outcome {
        let base = self.cfg.noise.to_noise();
        let mut noise = NoiseConfig {
            line: base.line,
            ..NoiseConfig::quiet()
        };
        if c.harmonics {
            noise.harmonics = Some(base.harmonics.unwrap_or_default());
        }
        let lab = NoiseConfig::laboratory();
        let section_train = |i: usize| base.impulse_trains.get(i).copied().unwrap_or(lab.impulse_trains[i]);
        if c.line_locked {
            noise.impulse_trains.push(section_train(0));
        }
        if c.burst {
            let t = base
                .impulse_trains
                .iter()
                .copied()
                .find(|t| t.burst_on_s.is_some())
                .unwrap_or(lab.impulse_trains[1]);
            noise.impulse_trains.push(t);
        }
        if let Some(m) = &c.middleton {
            noise.middleton = Some(MiddletonParams::new(m[0], m[1]).with_sigma(c.sigma));
        }
        if let Some(a) = c.awgn {
            noise.awgn_rms_volts = a;
        }
        if noise.is_quiet() {
            return Err(Failure::Usage(anyhow!(
                "select at least one of --harmonics, --line-locked, --burst, --middleton, --awgn"
            )));
        }
        if !(duration > 0.0 && rate > 0.0) {
            return Err(Failure::Usage(anyhow!("duration and rate must be positive")));
        }
        let generator = NoiseGenerator::new(&noise).usage()?;
        let len = snap(duration, rate).max(1);
        let w = generator.waveform(len, rate, origin, self.cfg.seed);
        let mut out = create(&self.path(file)?)?;
        w.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }

    fn hallucinate(&self, densities: &[f64], trials: usize, args: CodecArgs) -> Outcome {
        let params = codec_params(CodecParams::new(10, 5, 256), args);
        let mut rows = String::from("density,trials,mean_messages,approximation\n");
        for (i, &d) in densities.iter().enumerate() {
            let seed = mpp_core::codec::sub_seed(self.cfg.seed, i as u64);
            let rate = hallucination_rate(d, &params, trials, seed).usage()?;
            rows += &format!("{d},{trials},{rate:.6e},{:.6e}\n", hallucination_approximation(d, &params));
        }
        fs::write(self.path("hallucinations.csv")?, &rows)?;
        print!("{rows}");
        Ok(())
    }

    fn cost_profile(&self, densities: &[f64], trials: usize, args: CodecArgs) -> Outcome {
        let params = codec_params(CodecParams::new(20, 10, 256), args);
        let points = decoder_cost_profile(&params, densities, trials, self.cfg.seed).usage()?;
        let mut rows = String::from("density,trials,mean_node_expansions,mean_messages\n");
        for p in points {
            rows += &format!(
                "{},{trials},{:.6e},{:.6e}\n",
                p.density, p.mean_node_expansions, p.mean_messages
            );
        }
        fs::write(self.path("cost_profile.csv")?, &rows)?;
        print!("{rows}");
        Ok(())
    }
}

fn fit_noise(samples: &Path, terms: usize) -> Outcome {
    let f = File::open(samples)
        .with_context(|| format!("opening {}", samples.display()))
        .usage()?;
    let x = read_volts_csv(std::io::BufReader::new(f)).usage()?;
    let fit = fit_middleton(&x, terms).usage()?;
    println!("A={:.4} Gamma={:.4} residual={:.4}", fit.a, fit.gamma, fit.residual);
    Ok(())
}

fn point_json(p: &PerCurvePoint) -> serde_json::Value {
    json!({
        "eb_nb_db": p.eb_nb_db,
        "threshold_mode": p.threshold_mode,
        "measured_eb_nb_db": p.measured_eb_nb_db,
        "gain": p.gain,
        "thresholds": p.thresholds,
        "messages_sent": p.messages_sent,
        "messages_complete": p.messages_complete,
        "exhausted_decodes": p.exhausted_decodes,
        "error": p.error,
    })
}

fn sci(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.3e}")
    }
}

fn summary(run: &CurveRun, overlay: &[ReferencePoint]) -> String {
    let mut s = format!(
        "noise rms {:.4} V, pulse rms/peak {:.4}\n{:>8} {:>6} {:>8} {:>8} {:>10} {:>21} {:>7} {:>6} {:>6}\n",
        run.noise_rms_volts,
        run.reference_ratio,
        "eb_nb_db",
        "mode",
        "packets",
        "dropped",
        "per",
        "95% ci",
        "halluc",
        "upper",
        "lower"
    );
    for p in &run.points {
        let (u, l) = p.thresholds.map_or(("-".into(), "-".into()), |t| (t.upper.to_string(), t.lower.to_string()));
        s += &format!(
            "{:>8} {:>6} {:>8} {:>8} {:>10} {:>21} {:>7} {:>6} {:>6}",
            p.eb_nb_db,
            p.threshold_mode,
            p.packets_sent,
            p.packets_dropped,
            sci(p.per),
            format!("[{}, {}]", sci(p.ci_low), sci(p.ci_high)),
            p.hallucinations,
            u,
            l
        );
        if let Some(e) = &p.error {
            s += &format!("  error: {e}");
        }
        s.push('\n');
    }
    if let Some(p) = run
        .points
        .iter()
        .find(|p| p.eb_nb_db == 16.0 && p.threshold_mode == ThresholdMode::Dual)
    {
        s += &format!(
            "16 dB dual: simulated PER {} (95% CI {} .. {}, {} packets) vs hardware measurement {}\n",
            sci(p.per),
            sci(p.ci_low),
            sci(p.ci_high),
            p.packets_sent,
            sci(REFERENCE_PER_16DB)
        );
    }
    for r in overlay {
        let sim: Vec<String> = run
            .points
            .iter()
            .filter(|p| p.eb_nb_db == r.eb_nb_db)
            .map(|p| format!("{} {}", p.threshold_mode, sci(p.per)))
            .collect();
        s += &format!(
            "reference {}: {} dB PER {} | simulated {}\n",
            r.label,
            r.eb_nb_db,
            sci(r.per),
            if sim.is_empty() { "-".to_string() } else { sim.join(", ") }
        );
    }
    s
}
