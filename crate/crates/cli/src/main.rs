//! `mpradon <experiment> --config <path> [--seed N] [--out DIR]`
//!
//! Exit codes: 0 all assertions pass, 1 some assertion fails or a run-time
//! numerical failure, 2 invalid input, 3/4/5 newton verdicts.

mod experiments;
mod gallery;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use report::Bundle;

#[derive(Debug)]
pub enum Failure {
    /// Bad config, bad arguments or an unwritable output directory.
    Invalid(String),
    /// The experiment started but a numerical step failed.
    Runtime(String),
}

impl From<mpradon::Error> for Failure {
    fn from(e: mpradon::Error) -> Self {
        use mpradon::Error::*;
        match e {
            Contract(_) | Validation(_) | Unsupported(_) | Parse { .. } => Failure::Invalid(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "mpradon", version, about = "Multi-parameter singular Radon transform workbench")]
struct Cli {
    /// One of the experiment kinds, or `gallery` to write the fixture configs.
    experiment: String,
    /// JSON config; required for experiments.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "mpradon-out")]
    out: PathBuf,
}

pub const KINDS: &[&str] = &[
    "synth-kernel",
    "check-cancellation",
    "gamma-roundtrip",
    "curvature",
    "cc-chart",
    "ao-decay",
    "newton",
    "counterexample",
    "heisenberg",
    "transport",
    "control",
    "leaf",
    "generate-list",
];

/// A parsed, schema-valid experiment.
#[derive(Debug, Clone)]
pub enum Experiment {
    SynthKernel(experiments::SynthKernel),
    CheckCancellation(experiments::CheckCancellation),
    GammaRoundtrip(experiments::GammaRoundtrip),
    Curvature(experiments::Curvature),
    CcChart(experiments::CcChart),
    AoDecay(experiments::AoDecay),
    Newton(experiments::Newton),
    Counterexample(experiments::Counterexample),
    Heisenberg(experiments::Heisenberg),
    Transport(experiments::Transport),
    Control(experiments::Control),
    Leaf(experiments::Leaf),
    GenerateList(experiments::GenerateList),
}

fn block<T: DeserializeOwned>(v: Map<String, Value>) -> Result<T, Failure> {
    serde_json::from_value(Value::Object(v)).map_err(|e| Failure::Invalid(format!("config: {e}")))
}

fn echo<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config serializes")
}

impl Experiment {
    pub fn parse(kind: &str, params: Map<String, Value>) -> Result<Self, Failure> {
        use Experiment::*;
        Ok(match kind {
            "synth-kernel" => SynthKernel(block(params)?),
            "check-cancellation" => CheckCancellation(block(params)?),
            "gamma-roundtrip" => GammaRoundtrip(block(params)?),
            "curvature" => Curvature(block(params)?),
            "cc-chart" => CcChart(block(params)?),
            "ao-decay" => AoDecay(block(params)?),
            "newton" => Newton(block(params)?),
            "counterexample" => Counterexample(block(params)?),
            "heisenberg" => Heisenberg(block(params)?),
            "transport" => Transport(block(params)?),
            "control" => Control(block(params)?),
            "leaf" => Leaf(block(params)?),
            "generate-list" => GenerateList(block(params)?),
            other => return Err(Failure::Invalid(format!("unknown experiment {other:?}; expected one of {}", KINDS.join(", ")))),
        })
    }

    /// The resolved parameter block, defaults included.
    pub fn params(&self) -> Value {
        use Experiment::*;
        match self {
            SynthKernel(c) => echo(c),
            CheckCancellation(c) => echo(c),
            GammaRoundtrip(c) => echo(c),
            Curvature(c) => echo(c),
            CcChart(c) => echo(c),
            AoDecay(c) => echo(c),
            Newton(c) => echo(c),
            Counterexample(c) => echo(c),
            Heisenberg(c) => echo(c),
            Transport(c) => echo(c),
            Control(c) => echo(c),
            Leaf(c) => echo(c),
            GenerateList(c) => echo(c),
        }
    }

    pub fn run(&self, seed: u64) -> Result<Bundle, Failure> {
        use Experiment::*;
        match self {
            SynthKernel(c) => experiments::synth_kernel(c),
            CheckCancellation(c) => experiments::check_cancellation(c),
            GammaRoundtrip(c) => experiments::gamma_roundtrip(c, seed),
            Curvature(c) => experiments::curvature(c, seed),
            CcChart(c) => experiments::cc_chart(c, seed),
            AoDecay(c) => experiments::ao_decay(c),
            Newton(c) => experiments::newton(c),
            Counterexample(c) => experiments::counterexample(c),
            Heisenberg(c) => experiments::heisenberg(c),
            Transport(c) => experiments::transport(c),
            Control(c) => experiments::control(c, seed),
            Leaf(c) => experiments::leaf(c, seed),
            GenerateList(c) => experiments::generate(c),
        }
    }
}

/// Splits a config document into its seed and parameter block.
pub fn load(kind: &str, doc: Value, seed: Option<u64>) -> Result<(Experiment, u64), Failure> {
    let Value::Object(mut map) = doc else {
        return Err(Failure::Invalid("config must be a JSON object".into()));
    };
    match map.remove("experiment") {
        Some(Value::String(k)) if k != kind => {
            return Err(Failure::Invalid(format!("config is for {k:?}, not {kind:?}")));
        }
        Some(Value::String(_)) | None => {}
        Some(other) => return Err(Failure::Invalid(format!("experiment must be a string, got {other}"))),
    }
    let file_seed = match map.remove("seed") {
        None => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| Failure::Invalid(format!("seed must be a nonnegative integer, got {v}")))?),
    };
    let seed = seed.or(file_seed).ok_or_else(|| Failure::Invalid("seed is mandatory (config `seed` or --seed)".into()))?;
    Ok((Experiment::parse(kind, map)?, seed))
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("MPRADON_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| Failure::Invalid(format!("MPRADON_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))
}

fn run(cli: &Cli) -> Result<i32, Failure> {
    configure_threads()?;
    if cli.experiment == "gallery" {
        let names = gallery::emit(&cli.out)?;
        println!("wrote {} configs to {}", names.len(), cli.out.display());
        return Ok(0);
    }
    if !KINDS.contains(&cli.experiment.as_str()) {
        return Err(Failure::Invalid(format!("unknown experiment {:?}; expected one of {}, gallery", cli.experiment, KINDS.join(", "))));
    }
    let path = cli.config.as_ref().ok_or_else(|| Failure::Invalid("--config is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    let (exp, seed) = load(&cli.experiment, doc, cli.seed)?;
    let bundle = exp.run(seed)?;
    bundle.write(&cli.out, &cli.experiment, seed, &exp.params())?;
    for a in &bundle.assertions {
        println!("{}: {} {} {} {}", if a.pass { "PASS" } else { "FAIL" }, a.name, a.value, a.op, a.bound);
    }
    println!("{} -> {}", if bundle.pass() { "PASS" } else { "FAIL" }, cli.out.join("summary.json").display());
    Ok(bundle.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
