//! `vqcodec`: synthesize latents, train models, code streams, and run the
//! analysis battery. Every command writes `manifest.json` into `--out-dir`.

mod manifest;
mod model_dir;
mod props;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use vqcodec::analysis::{
    bd_rate, entropy_report, make_dataset, rd_sweep_on, read_rd_csv, write_entropy_csv, write_rd_csv, SweepConfig,
};
use vqcodec::bitstream::compute_bpp;
use vqcodec::codec::{decode_stream, encode_stream, model_layout};
use vqcodec::decorrelation::{train_model, ModelConfig, Scheme, CM_PRECISION, DEFAULT_RIDGE};
use vqcodec::latent::{read_latent, write_latent, LatentGrid};
use vqcodec::source::{gauss_markov_sample, SourceConfig};

use manifest::RunManifest;
use props::Claim;

const EXIT_VERIFY: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "vqcodec",
    version,
    about = "Fixed-length RVQ latent codec and analysis tools"
)]
#[command(args_override_self = true)]
struct Cli {
    /// Directory for outputs with relative paths and for manifest.json.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// key=value file whose entries act as flags placed before the command-line ones.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a Gauss-Markov latent sample as an EFLT file.
    Synth(SynthArgs),
    /// Train a model from EFLT latents.
    Train(TrainArgs),
    /// Encode an EFLT latent into a stream file.
    Encode(EncodeArgs),
    /// Decode a stream file into an EFLT latent.
    Decode(DecodeArgs),
    /// Run the property-verification battery.
    VerifyProps(VerifyArgs),
    /// Train every scheme on a synthetic source and write R-D curves.
    Sweep(SweepArgs),
    /// BD-rate of a test curve against an anchor curve.
    Bdrate(BdrateArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

/// A comma-separated flag value.
#[derive(Debug, Clone)]
struct Csv<T>(Vec<T>);

impl<T: std::str::FromStr> std::str::FromStr for Csv<T>
where
    T::Err: std::fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_list(s).map(Csv)
    }
}

fn parse_triple(s: &str) -> std::result::Result<(usize, usize, usize), String> {
    let v: Vec<usize> = parse_list(s)?;
    match v[..] {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(format!("expected C,H,W, got '{s}'")),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<T>()
                .map_err(|e| format!("invalid list element '{x}': {e}"))
        })
        .collect()
}

fn parse_switch(s: &str) -> std::result::Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        _ => Err(format!("expected on or off, got '{s}'")),
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_parser = parse_triple, default_value = "1,64,64")]
    shape: (usize, usize, usize),
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    #[arg(long = "var", default_value_t = 1.0)]
    variance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training latents (EFLT).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "rd")]
    scheme: Scheme,
    #[arg(long, default_value_t = 5)]
    stages: usize,
    #[arg(long = "Ks", default_value = "1024,512,256,128")]
    ks: Csv<usize>,
    #[arg(long = "Kz", default_value_t = 1024)]
    kz: usize,
    #[arg(long, value_parser = parse_switch, action = clap::ArgAction::Set, default_value = "on")]
    hyper: bool,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CM quantization step.
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_RIDGE)]
    ridge: f64,
    /// Model directory.
    #[arg(long, default_value = "model")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Stage count; defaults to the model's.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the encoder's reconstruction.
    #[arg(long)]
    recon: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Original latent to measure MSE against.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Comma-separated subset of shaping, density-law, decorrelation, matching, conditional-gap, latency.
    /// The short names prop1, eq6, prop2, thm3 and dhbar are accepted too.
    #[arg(long)]
    only: Option<Csv<Claim>>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "verify_report.json")]
    report: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_parser = parse_triple, default_value = "1,128,128")]
    shape: (usize, usize, usize),
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    train_images: usize,
    #[arg(long, default_value_t = 8)]
    holdout_images: usize,
    #[arg(long, default_value = "rd,iq,cm")]
    schemes: Csv<Scheme>,
    #[arg(long, default_value_t = 3)]
    stages: usize,
    #[arg(long = "Ks", default_value = "256,128,64,32")]
    ks: Csv<usize>,
    /// Hyper codebook size; 0 disables the hyperprior.
    #[arg(long = "Kz", default_value_t = 0)]
    kz: usize,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value = "2,1,0.5,0.25,0.125")]
    deltas: Csv<f64>,
}

#[derive(Args, Debug)]
struct BdrateArgs {
    anchor: PathBuf,
    test: PathBuf,
    /// Curve to use from the anchor file; defaults to its first scheme.
    #[arg(long)]
    anchor_scheme: Option<String>,
    #[arg(long)]
    test_scheme: Option<String>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    manifest: PathBuf,
}

/// Failure categories mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Verification(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(s) | Failure::Verification(s) => f.write_str(s),
        }
    }
}

impl std::error::Error for Failure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Usage(_) => EXIT_USAGE,
                Failure::Verification(_) => EXIT_VERIFY,
            };
        }
        if let Some(e) = cause.downcast_ref::<vqcodec::Error>() {
            match e {
                vqcodec::Error::InvalidArgument(_) => return EXIT_USAGE,
                vqcodec::Error::Io(_) => return EXIT_IO,
                _ => {}
            }
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_VERIFY
}

/// Expands `--config FILE` into flags placed right after the subcommand name.
fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let mut args = args;
    let path = if let Some(v) = args[pos].strip_prefix("--config=") {
        let v = v.to_string();
        args.remove(pos);
        v
    } else {
        if pos + 1 >= args.len() {
            return Err(Failure::Usage("--config needs a file".into()).into());
        }
        args.remove(pos);
        args.remove(pos)
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let mut flags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("{path}:{}: expected key=value", i + 1)))?;
        flags.push(format!("--{}={}", k.trim(), v.trim()));
    }
    let names = [
        "synth",
        "train",
        "encode",
        "decode",
        "verify-props",
        "sweep",
        "bdrate",
        "replay",
    ];
    let at = args
        .iter()
        .position(|a| names.contains(&a.as_str()))
        .ok_or_else(|| Failure::Usage("--config needs a subcommand".into()))?;
    args.splice(at + 1..at + 1, flags);
    Ok(args)
}

fn resolve(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    Ok(())
}

fn read_eflt(path: &Path) -> Result<LatentGrid<f64>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_latent(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn write_eflt(latent: &LatentGrid<f64>, path: &Path) -> Result<()> {
    create_parent(path)?;
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    write_latent(latent, &mut out).with_context(|| format!("writing {}", path.display()))?;
    out.flush()?;
    Ok(())
}

/// The latent as it reads back from EFLT, so reported MSEs match the files.
fn as_stored(latent: &LatentGrid<f64>) -> LatentGrid<f64> {
    latent.cast::<f32>().cast::<f64>()
}

fn cmd_synth(a: &SynthArgs, out_dir: &Path, man: &mut RunManifest) -> Result<()> {
    let cfg = SourceConfig::new(a.shape, a.rho, a.variance, a.seed);
    let t = Instant::now();
    let latent: LatentGrid<f64> = gauss_markov_sample(&cfg)?;
    man.time("sample", t);
    let out = resolve(out_dir, &a.out);
    let t = Instant::now();
    write_eflt(&latent, &out)?;
    man.time("write", t);
    man.config = serde_json::to_value(cfg)?;
    man.seeds = vec![a.seed];
    man.artifacts.push(out);
    Ok(())
}

fn cmd_train(a: &TrainArgs, out_dir: &Path, man: &mut RunManifest) -> Result<()> {
    let t = Instant::now();
    let latents = a.inputs.iter().map(|p| read_eflt(p)).collect::<Result<Vec<_>>>()?;
    man.time("load", t);
    let channels = latents[0].channels();
    let mut cfg = ModelConfig::new(a.scheme, a.ks.0.clone(), a.stages, a.seed);
    cfg.iterations = a.iters;
    cfg.ridge = a.ridge;
    cfg.delta = a.delta;
    cfg.precision = CM_PRECISION;
    cfg.hyper_k = (a.hyper && a.scheme != Scheme::Iq).then_some(a.kz);
    let t = Instant::now();
    let model = train_model(&latents, &cfg).context("training")?;
    man.time("train", t);
    let dir = resolve(out_dir, &a.out);
    let t = Instant::now();
    man.artifacts = model_dir::save(&model, channels, &dir)?;
    man.time("write", t);
    man.config = json!({ "model": cfg, "inputs": a.inputs, "channels": channels });
    man.seeds = vec![a.seed];
    Ok(())
}

fn add_phases(man: &mut RunManifest, t: &vqcodec::decorrelation::PhaseTimings) {
    man.add_ms("quantize", t.quantize_ms);
    man.add_ms("autoregressive", t.autoregressive_ms);
    man.add_ms("entropy_code", t.entropy_code_ms);
    man.add_ms("pack", t.pack_ms);
}

fn cmd_encode(a: &EncodeArgs, out_dir: &Path, man: &mut RunManifest) -> Result<()> {
    let t = Instant::now();
    let model = model_dir::load(&a.model)?;
    let latent = read_eflt(&a.input)?;
    man.time("load", t);
    let m = a.m.unwrap_or(model.config.stages);
    let enc = encode_stream(&model, &latent, m)?;
    add_phases(man, &enc.coded.timings);
    let (height, width) = enc.image_size();
    let pixels = (height * width) as f64;
    let bpp = enc.coded.rate_bits as f64 / pixels;
    let eq4 = if model.config.scheme == Scheme::Cm {
        None
    } else {
        let cfg = model_layout(&model)?
            .bpp_config()
            .ok_or_else(|| anyhow!("per-stage codebook sizes differ; no closed-form BPP"))?;
        let eq4 = compute_bpp(&cfg, m)?;
        if (eq4 - bpp).abs() > 1e-9 {
            bail!("measured BPP {bpp} disagrees with the closed form {eq4}");
        }
        Some(eq4)
    };
    let out = resolve(out_dir, &a.out);
    let t = Instant::now();
    create_parent(&out)?;
    std::fs::write(&out, &enc.bytes).with_context(|| format!("writing {}", out.display()))?;
    man.time("write", t);
    man.artifacts.push(out);
    if let Some(r) = &a.recon {
        let r = resolve(out_dir, r);
        write_eflt(&enc.coded.reconstruction, &r)?;
        man.artifacts.push(r);
    }
    let mse = latent.mse(&enc.coded.reconstruction)?;
    let summary = json!({
        "scheme": model.config.scheme,
        "m": m,
        "height": height,
        "width": width,
        "rate_bits": enc.coded.rate_bits,
        "bpp": bpp,
        "closed_form_bpp": eq4,
        "file_bytes": enc.bytes.len(),
        "file_bpp": enc.file_bpp(),
        "mse": mse,
        "clamped": enc.coded.clamped,
    });
    println!("{summary}");
    man.config = json!({ "model": a.model, "input": a.input, "m": m, "model_config": model.config });
    man.seeds = vec![model.config.seed];
    man.details = summary;
    Ok(())
}

fn cmd_decode(a: &DecodeArgs, out_dir: &Path, man: &mut RunManifest) -> Result<()> {
    let t = Instant::now();
    let model = model_dir::load(&a.model)?;
    let bytes = std::fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    man.time("load", t);
    let decoded = decode_stream(&model, &bytes).with_context(|| format!("decoding {}", a.input.display()))?;
    add_phases(man, &decoded.timings);
    let out = resolve(out_dir, &a.out);
    let t = Instant::now();
    write_eflt(&decoded.latent, &out)?;
    man.time("write", t);
    man.artifacts.push(out);
    let mse = match &a.reference {
        Some(r) => Some(read_eflt(r)?.mse(&as_stored(&decoded.latent))?),
        None => None,
    };
    let (c, h, w) = decoded.latent.shape();
    let summary = json!({ "scheme": model.config.scheme, "shape": [c, h, w], "mse": mse });
    println!("{summary}");
    man.config = json!({ "model": a.model, "input": a.input, "ref": a.reference, "model_config": model.config });
    man.seeds = vec![model.config.seed];
    man.details = summary;
    Ok(())
}

fn cmd_verify(a: &VerifyArgs, out_dir: &Path, man: &mut RunManifest) -> Result<()> {
    let claims = a.only.clone().map_or_else(|| Claim::ALL.to_vec(), |c| c.0);
    let t = Instant::now();
    let report = props::verify(&claims, a.seed)?;
    man.time("verify", t);
    for c in &report.claims {
        println!(
            "{} {} {}={:.6} ({})",
            if c.pass { "PASS" } else { "FAIL" },
            c.claim.name(),
            c.metric,
            c.value,
            c.threshold
        );
    }
    let path = resolve(out_dir, &a.report);
    create_parent(&path)?;
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    man.artifacts.push(path);
    man.config = json!({ "claims": claims, "seed": a.seed });
    man.seeds = vec![a.seed];
    man.details = json!({ "pass": report.pass });
    if !report.pass {
        let failed: Vec<String> = report
            .claims
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{} ({}={:.6})", c.claim.name(), c.metric, c.value))
            .collect();
        return Err(Failure::Verification(format!("failed claims: {}", failed.join(", "))).into());
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, out_dir: &Path, man: &mut RunManifest) -> Result<()> {
    let mut cfg = SweepConfig::reference(a.seed);
    cfg.source = SourceConfig::new(a.shape, a.rho, 1.0, a.seed);
    cfg.train_images = a.train_images;
    cfg.holdout_images = a.holdout_images;
    cfg.schemes = a.schemes.0.clone();
    cfg.stages = a.stages;
    cfg.group_ks = a.ks.0.clone();
    cfg.hyper_k = (a.kz > 0).then_some(a.kz);
    cfg.iterations = a.iters;
    cfg.deltas = a.deltas.0.clone();

    let t = Instant::now();
    let data = make_dataset::<f64>(&cfg.source, cfg.train_images, cfg.holdout_images)?;
    man.time("synthesize", t);
    let t = Instant::now();
    let result = rd_sweep_on(&cfg, &data)?;
    man.time("sweep", t);
    for p in &result.points {
        add_phases(man, &p.encode);
        add_phases(man, &p.decode);
    }

    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let curves = out_dir.join("rd_curves.csv");
    let mut buf = Vec::new();
    write_rd_csv(&result.points, &mut buf)?;
    std::fs::write(&curves, buf).with_context(|| format!("writing {}", curves.display()))?;
    let mut rows = Vec::new();
    for model in &result.models {
        if model.config.scheme != Scheme::Cm {
            rows.extend(entropy_report(model, &data.holdout)?.into_iter().map(|mut r| {
                r.quantizer = format!("{}.{}", model.config.scheme, r.quantizer);
                r
            }));
        }
    }
    let entropy = out_dir.join("entropy_report.csv");
    let mut buf = Vec::new();
    write_entropy_csv(&rows, &mut buf)?;
    std::fs::write(&entropy, buf).with_context(|| format!("writing {}", entropy.display()))?;
    man.artifacts = vec![curves, entropy];

    let triples: Vec<_> = result
        .points
        .iter()
        .map(|p| json!({ "scheme": p.scheme, "operating_point": p.param, "seed": a.seed }))
        .collect();
    man.config = serde_json::to_value(&cfg)?;
    man.seeds = std::iter::once(a.seed)
        .chain(data.train_seeds.iter().copied())
        .chain(data.holdout_seeds.iter().copied())
        .collect();
    man.details = json!({
        "operating_points": triples,
        "train_seeds": data.train_seeds,
        "holdout_seeds": data.holdout_seeds,
    });
    for p in &result.points {
        println!("{} {} bpp={:.6} mse={:.6}", p.scheme, p.param, p.bpp, p.mse);
    }
    Ok(())
}

fn pick_curve(path: &Path, scheme: Option<&str>) -> Result<vqcodec::analysis::RDCurve> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let curves = read_rd_csv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    match scheme {
        None => Ok(curves.into_iter().next().expect("reader returns at least one curve")),
        Some(s) => curves
            .into_iter()
            .find(|c| c.scheme == s)
            .ok_or_else(|| Failure::Usage(format!("{} has no '{s}' curve", path.display())).into()),
    }
}

/// Two decimals, with negative zero printed as zero.
fn format_percent(v: f64) -> String {
    let s = format!("{v:.2}%");
    if s == "-0.00%" {
        "0.00%".into()
    } else {
        s
    }
}

fn cmd_bdrate(a: &BdrateArgs, man: &mut RunManifest) -> Result<()> {
    let anchor = pick_curve(&a.anchor, a.anchor_scheme.as_deref())?;
    let test = pick_curve(&a.test, a.test_scheme.as_deref())?;
    let t = Instant::now();
    let v = bd_rate(&anchor, &test)?;
    man.time("bdrate", t);
    println!("{}", format_percent(v));
    man.config =
        json!({ "anchor": a.anchor, "test": a.test, "anchor_scheme": anchor.scheme, "test_scheme": test.scheme });
    man.details = json!({ "bd_rate_percent": v });
    Ok(())
}

fn run(args: Vec<String>) -> Result<()> {
    let args = expand_config(args)?;
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code == 0 {
                return Ok(());
            }
            return Err(Failure::Usage("invalid arguments".into()).into());
        }
    };
    if let Command::Replay(r) = &cli.command {
        let old = RunManifest::read(&r.manifest)?;
        std::env::set_current_dir(&old.cwd).with_context(|| format!("entering {}", old.cwd.display()))?;
        let mut argv = vec!["vqcodec".to_string()];
        if cli.out_dir == Path::new(".") {
            argv.extend(old.argv);
        } else {
            argv.extend(strip_out_dir(&old.argv));
            argv.push("--out-dir".into());
            argv.push(cli.out_dir.display().to_string());
        }
        return run(argv);
    }
    let out_dir = cli.out_dir.clone();
    let name = args
        .iter()
        .skip(1)
        .find(|a| {
            !a.starts_with('-')
                && ["synth", "train", "encode", "decode", "verify-props", "sweep", "bdrate"].contains(&a.as_str())
        })
        .cloned()
        .unwrap_or_default();
    let mut man = RunManifest::new(&name, &args[1..]);
    let outcome = match &cli.command {
        Command::Synth(a) => cmd_synth(a, &out_dir, &mut man),
        Command::Train(a) => cmd_train(a, &out_dir, &mut man),
        Command::Encode(a) => cmd_encode(a, &out_dir, &mut man),
        Command::Decode(a) => cmd_decode(a, &out_dir, &mut man),
        Command::VerifyProps(a) => cmd_verify(a, &out_dir, &mut man),
        Command::Sweep(a) => cmd_sweep(a, &out_dir, &mut man),
        Command::Bdrate(a) => cmd_bdrate(a, &mut man),
        Command::Replay(_) => unreachable!(),
    };
    // Verification failures still leave a manifest and report behind.
    if outcome.is_ok()
        || matches!(
            outcome.as_ref().err().and_then(|e| e.downcast_ref::<Failure>()),
            Some(Failure::Verification(_))
        )
    {
        man.write(&out_dir)?;
    }
    outcome
}

/// Drops `--out-dir` so a replay can write elsewhere.
fn strip_out_dir(argv: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
            continue;
        }
        if a == "--out-dir" {
            skip = true;
            continue;
        }
        if a.starts_with("--out-dir=") {
            continue;
        }
        out.push(a.clone());
    }
    out
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
