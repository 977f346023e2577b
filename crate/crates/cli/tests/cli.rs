use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mpp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpp"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .expect("spawn mpp")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn encode_then_decode() {
    let dir = tempfile::tempdir().unwrap();
    let enc = mpp(dir.path(), &["encode", "--ascii", "Hello1!\\n"]);
    assert!(enc.status.success());
    let hex = stdout(&enc).trim().to_string();
    assert_eq!(hex.len(), 64);
    let dec = mpp(dir.path(), &["decode", &hex, "--ascii"]);
    assert_eq!(dec.status.code(), Some(0));
    assert_eq!(stdout(&dec), "Hello1!\\n\n");

    let by_hex = mpp(dir.path(), &["encode", "--hex", "48656c6c6f31210a"]);
    assert_eq!(stdout(&by_hex).trim(), hex);
}

#[test]
fn union_lists_every_word_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let words = ["Hello3!\\n", "Hello1!\\n", "Hello2!\\n"];
    let mut files = Vec::new();
    for (i, w) in words.iter().enumerate() {
        let hex = stdout(&mpp(dir.path(), &["encode", "--ascii", w]));
        let f = dir.path().join(format!("p{i}.hex"));
        fs::write(&f, hex).unwrap();
        files.push(f.to_str().unwrap().to_string());
    }
    let mut args = vec!["decode", "--ascii", "--union"];
    args.extend(files.iter().map(String::as_str));
    let all = mpp(dir.path(), &args);
    assert_eq!(stdout(&all), "Hello1!\\n\nHello2!\\n\nHello3!\\n\n");
    args.push("--first");
    assert_eq!(stdout(&mpp(dir.path(), &args)), "Hello1!\\n\n");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mpp(dir.path(), &["encode"]).status.code(), Some(1));
    assert_eq!(mpp(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(mpp(dir.path(), &["decode", "zz"]).status.code(), Some(1));
    assert_eq!(mpp(dir.path(), &["gen-noise"]).status.code(), Some(1));
    assert_eq!(mpp(dir.path(), &["--help"]).status.code(), Some(0));

    let short = dir.path().join("short.csv");
    fs::write(&short, "time_s,volts\n0,0.1\n1,0.2\n").unwrap();
    let fit = mpp(dir.path(), &["fit-noise", short.to_str().unwrap()]);
    assert_ne!(fit.status.code(), Some(0));

    let cal = mpp(dir.path(), &["calibrate", "--snr", "-20"]);
    assert_eq!(cal.status.code(), Some(2), "{}", String::from_utf8_lossy(&cal.stderr));
    let log = fs::read_to_string(dir.path().join("calibration_log.csv")).unwrap();
    assert!(log.starts_with("step,upper,lower,decodes,gibberish\n"));
}

#[test]
fn unknown_keys_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "sead = 3\n[noise]\nawgn = 1.0\n[codec]\nk = 10\n").unwrap();
    let o = mpp(dir.path(), &["--config", cfg.to_str().unwrap(), "per-curve"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for key in ["sead", "noise.awgn", "codec.k"] {
        assert!(err.contains(key), "{err}");
    }
}

#[test]
fn dumped_config_reloads_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let dump = stdout(&mpp(dir.path(), &["--seed", "9", "per-curve", "--dump-config", "--grid", "0,4"]));
    let f = dir.path().join("dump.toml");
    fs::write(&f, &dump).unwrap();
    let again = stdout(&mpp(dir.path(), &["--config", f.to_str().unwrap(), "per-curve", "--dump-config"]));
    assert_eq!(dump, again);
    assert!(dump.contains("seed = 9"));
}

#[test]
fn per_curve_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let reference = dir.path().join("ref.csv");
    fs::write(&reference, "eb_nb_db,per,label\n16,2e-5,hardware\n").unwrap();
    let o = mpp(
        dir.path(),
        &["per-curve", "--repetitions", "4", "--grid", "16", "--reference", reference.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = stdout(&o);
    assert!(summary.contains("16 dB dual"), "{summary}");
    assert!(summary.contains("2.000e-5"));
    assert!(summary.contains("reference hardware"));
    for name in ["per_curve.csv", "calibration.csv", "effective_config.toml", "manifest.json"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let curve = fs::read_to_string(dir.path().join("per_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "per-curve");
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--seed", "5", "gen-noise", "--harmonics", "--burst", "--middleton", "0.3", "0.05", "--duration", "0.01"];
    assert!(mpp(a.path(), &args).status.success());
    assert!(mpp(b.path(), &args).status.success());
    let x = fs::read(a.path().join("noise.csv")).unwrap();
    assert_eq!(x, fs::read(b.path().join("noise.csv")).unwrap());
    let c = tempfile::tempdir().unwrap();
    let mut other = args;
    other[1] = "6";
    assert!(mpp(c.path(), &other).status.success());
    assert_ne!(x, fs::read(c.path().join("noise.csv")).unwrap());
}
