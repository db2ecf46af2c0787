//! `swapsim`: analytic budgets, swap and teleport runs, circuit checks and
//! manifest replay.

mod manifest;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use swapsim::analytic::{
    classical_rate, log_spaced, model_row, noise_budget, AnalyticError, DEFAULT_GAMMA_EPS_ETA,
    FIBER_DB_PER_KM,
};
use swapsim::circuitdsl::{parse, validate, CircuitSpec};
use swapsim::protocol::{
    run_swap_exact, run_swap_montecarlo, run_swap_spec, run_swap_spec_montecarlo,
    run_teleport, run_teleport_montecarlo, run_teleport_spec, sweep_heralding, Bsm2Design,
    InputState, ProtocolError, SwapConfig, TeleportConfig, SWEEP_ETAS,
};

use manifest::RunManifest;
use report::Report;

#[derive(Parser, Debug)]
#[command(name = "swapsim", version, about = "Heralded entanglement swapping and teleportation with SPDC sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form noise budget, heralding curve or classical bound
    Analytic(AnalyticArgs),
    /// Exact or sampled swap run from a circuit file or preset
    Swap(SwapArgs),
    /// Exact or sampled teleportation from a circuit file or preset
    Teleport(TeleportArgs),
    /// Parse and check a circuit file
    Validate { file: PathBuf },
    /// Rerun a recorded manifest and compare the output hash
    Replay { manifest: PathBuf },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct Output {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    out: Format,
    /// Write the run manifest to this file instead of stderr
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyticArgs {
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.02)]
    eps: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Log-spaced η grid `lo:hi:count` with γ set by --const
    #[arg(long, value_name = "LO:HI:N", conflicts_with_all = ["fig1d", "classical"])]
    sweep: Option<String>,
    /// The product γεη held fixed along a sweep
    #[arg(long = "const", default_value_t = DEFAULT_GAMMA_EPS_ETA)]
    constant: f64,
    /// Heralding model at 0, 10, ..., 100 km under --const
    #[arg(long, conflicts_with = "classical")]
    fig1d: bool,
    /// Classical rate at target fidelity --f0 over channel --eta
    #[arg(long)]
    classical: bool,
    #[arg(long, default_value_t = 0.826)]
    f0: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SwapPreset {
    /// Measured arm efficiencies, ε=0.02, 15 dB channel
    Lab,
    /// First order, unit efficiencies
    Ideal,
    /// The five-point heralding sweep
    Fig2,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Design {
    Circular,
    Plain,
}

/// Overrides applied on top of a preset.
#[derive(Args, Debug, Default)]
struct SwapOverrides {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Channel efficiency of the swap link
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    visibility: Option<f64>,
    #[arg(long)]
    n_max: Option<u8>,
    #[arg(long, value_enum)]
    design: Option<Design>,
}

impl SwapOverrides {
    fn any(&self) -> bool {
        self.eps.is_some()
            || self.gamma.is_some()
            || self.eta.is_some()
            || self.visibility.is_some()
            || self.n_max.is_some()
            || self.design.is_some()
    }

    fn apply(&self, mut cfg: SwapConfig) -> SwapConfig {
        cfg.eps = self.eps.unwrap_or(cfg.eps);
        cfg.gamma = self.gamma.unwrap_or(cfg.gamma);
        cfg.eta = self.eta.unwrap_or(cfg.eta);
        cfg.visibility = self.visibility.unwrap_or(cfg.visibility);
        cfg.n_max = self.n_max.unwrap_or(cfg.n_max);
        if let Some(d) = self.design {
            cfg.bsm2 = match d {
                Design::Circular => Bsm2Design::Circular,
                Design::Plain => Bsm2Design::Plain,
            };
        }
        cfg
    }
}

#[derive(Args, Debug)]
struct SwapArgs {
    /// Circuit file; replaces the preset
    file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SwapPreset::Lab)]
    preset: SwapPreset,
    /// Same as --preset fig2
    #[arg(long)]
    fig2: bool,
    /// Exact evaluation (the default)
    #[arg(long, conflicts_with = "mc")]
    exact: bool,
    /// Sample this many pulses instead
    #[arg(long, value_name = "SHOTS")]
    mc: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// γεη held fixed by the fig2 sweep
    #[arg(long = "const", default_value_t = DEFAULT_GAMMA_EPS_ETA)]
    constant: f64,
    #[command(flatten)]
    overrides: SwapOverrides,
    #[command(flatten)]
    output: Output,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum TeleportPreset {
    /// Swap stage at 15 dB with measured efficiencies
    Lab,
    /// First order, unit efficiencies
    Ideal,
}

#[derive(Args, Debug)]
struct TeleportArgs {
    /// Hardware circuit file (no input preparation); replaces the preset
    file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TeleportPreset::Lab)]
    preset: TeleportPreset,
    /// `all` or a comma list of H, V, +, -, R, L
    #[arg(long, default_value = "all", allow_hyphen_values = true)]
    inputs: String,
    /// Efficiency of the direct link used as the comparison line
    #[arg(long)]
    channel: Option<f64>,
    /// Input photon efficiency
    #[arg(long)]
    eta_p: Option<f64>,
    /// Sample this many pulses per input instead
    #[arg(long, value_name = "SHOTS")]
    mc: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    overrides: SwapOverrides,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug)]
enum Failure {
    /// Bad arguments, unreadable or invalid input: exit 2.
    Usage(String),
    /// Valid input with nothing to report: exit 3.
    Degenerate(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Degenerate(_) => 3,
            Failure::Other(_) => 1,
        }
    }
}

impl From<ProtocolError> for Failure {
    fn from(e: ProtocolError) -> Self {
        if e.is_degenerate() {
            Failure::Degenerate(e.to_string())
        } else if matches!(e, ProtocolError::Detection(_) | ProtocolError::Fock(_)) {
            Failure::Other(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<AnalyticError> for Failure {
    fn from(e: AnalyticError) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// A finished run before printing.
struct Run {
    report: Report,
    format: Format,
    parameters: serde_json::Value,
    seed: Option<u64>,
    input: Option<PathBuf>,
}

impl Run {
    fn body(&self) -> String {
        match self.format {
            Format::Text => self.report.text.clone(),
            Format::Csv => self.report.csv.clone(),
            Format::Json => serde_json::to_string_pretty(&self.report.result).expect("plain data") + "\n",
        }
    }
}

fn load(path: &Path) -> Result<CircuitSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let spec = parse(&text).map_err(|e| Failure::Usage(format!("{}:{e}", path.display())))?;
    let problems = validate(&spec);
    if !problems.is_empty() {
        let list: Vec<String> = problems.iter().map(|v| v.to_string()).collect();
        return Err(Failure::Usage(format!("{}: {}", path.display(), list.join("; "))));
    }
    Ok(spec)
}

fn parse_sweep(s: &str) -> Result<(f64, f64, usize), Failure> {
    let bad = || Failure::Usage(format!("--sweep expects lo:hi:count, got `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else { return Err(bad()) };
    let lo: f64 = lo.parse().map_err(|_| bad())?;
    let hi: f64 = hi.parse().map_err(|_| bad())?;
    let n: usize = n.parse().map_err(|_| bad())?;
    if !(lo > 0.0 && lo <= hi && n > 0) {
        return Err(bad());
    }
    Ok((lo, hi, n))
}

fn analytic(a: &AnalyticArgs) -> Result<Run, Failure> {
    let (report, parameters) = if a.classical {
        let c = classical_rate(a.f0, a.eta)?;
        (report::classical(&c), json!({"mode": "classical", "f0": a.f0, "eta": a.eta}))
    } else if a.fig1d {
        let rows = (0..=10)
            .map(|k| {
                let km = 10.0 * k as f64;
                let eta = 10f64.powf(-FIBER_DB_PER_KM * km / 10.0);
                model_row(a.eps, eta, a.constant)
            })
            .collect::<Result<Vec<_>, _>>()?;
        (report::model_rows(&rows), json!({"mode": "fig1d", "eps": a.eps, "const": a.constant}))
    } else if let Some(s) = &a.sweep {
        let (lo, hi, n) = parse_sweep(s)?;
        let rows = log_spaced(lo, hi, n)
            .into_iter()
            .map(|eta| model_row(a.eps, eta, a.constant))
            .collect::<Result<Vec<_>, _>>()?;
        let p = json!({"mode": "sweep", "eps": a.eps, "const": a.constant, "lo": lo, "hi": hi, "count": n});
        (report::model_rows(&rows), p)
    } else {
        let nb = noise_budget(a.gamma, a.eps, a.eta)?;
        let p = json!({"mode": "budget", "gamma": a.gamma, "eps": a.eps, "eta": a.eta});
        (report::noise_budget(a.gamma, a.eps, a.eta, &nb), p)
    };
    Ok(Run { report, format: a.output.out, parameters, seed: None, input: None })
}

fn swap(a: &SwapArgs) -> Result<Run, Failure> {
    let preset = if a.fig2 { SwapPreset::Fig2 } else { a.preset };
    let seed = a.mc.map(|_| a.seed);
    if let Some(path) = &a.file {
        if a.overrides.any() || a.fig2 {
            return Err(Failure::Usage("presets and overrides do not apply to a circuit file".into()));
        }
        let spec = load(path)?;
        let report = match a.mc {
            Some(shots) => report::swap_mc(&run_swap_spec_montecarlo(&spec, shots, a.seed)?),
            None => report::swap(&run_swap_spec(&spec)?),
        };
        let parameters = json!({"file": path, "mc": a.mc});
        return Ok(Run { report, format: a.output.out, parameters, seed, input: Some(path.clone()) });
    }
    let (report, parameters) = match preset {
        SwapPreset::Fig2 => {
            if a.mc.is_some() {
                return Err(Failure::Usage("the fig2 sweep is exact only".into()));
            }
            if a.overrides.eta.is_some() || a.overrides.gamma.is_some() {
                return Err(Failure::Usage("the fig2 sweep sets η and γ itself".into()));
            }
            let base = a.overrides.apply(SwapConfig::default());
            let rows = sweep_heralding(&base, &SWEEP_ETAS, a.constant)?;
            (report::fig2(&rows), json!({"preset": "fig2", "base": base, "const": a.constant, "etas": SWEEP_ETAS}))
        }
        SwapPreset::Lab | SwapPreset::Ideal => {
            let start = if preset == SwapPreset::Ideal {
                SwapConfig::ideal(a.overrides.eta.unwrap_or(1.0))
            } else {
                SwapConfig::default()
            };
            let cfg = a.overrides.apply(start);
            let report = match a.mc {
                Some(shots) => report::swap_mc(&run_swap_montecarlo(&cfg, shots, a.seed)?),
                None => report::swap(&run_swap_exact(&cfg)?),
            };
            (report, json!({"config": cfg, "mc": a.mc}))
        }
    };
    Ok(Run { report, format: a.output.out, parameters, seed, input: None })
}

fn inputs(s: &str) -> Result<Vec<InputState>, Failure> {
    if s == "all" {
        return Ok(InputState::ALL.to_vec());
    }
    s.split(',')
        .map(|l| {
            InputState::from_label(l.trim())
                .ok_or_else(|| Failure::Usage(format!("unknown input `{l}`; use H, V, +, -, R, L or all")))
        })
        .collect()
}

fn teleport(a: &TeleportArgs) -> Result<Run, Failure> {
    let chosen = inputs(&a.inputs)?;
    let seed = a.mc.map(|_| a.seed);
    if let Some(path) = &a.file {
        if a.overrides.any() || a.eta_p.is_some() {
            return Err(Failure::Usage("overrides do not apply to a circuit file".into()));
        }
        if a.mc.is_some() {
            return Err(Failure::Usage("teleport sampling needs a preset".into()));
        }
        let spec = load(path)?;
        let channel = a.channel.unwrap_or(0.01);
        let report = report::teleport(&run_teleport_spec(&spec, &chosen, channel)?);
        let parameters = json!({"file": path, "inputs": a.inputs, "channel": channel});
        return Ok(Run { report, format: a.output.out, parameters, seed, input: Some(path.clone()) });
    }
    let mut cfg = match a.preset {
        TeleportPreset::Lab => TeleportConfig::lab(),
        TeleportPreset::Ideal => TeleportConfig::ideal(),
    };
    cfg.swap = a.overrides.apply(cfg.swap);
    cfg.eta_p = a.eta_p.unwrap_or(cfg.eta_p);
    cfg.direct_channel = a.channel.unwrap_or(cfg.direct_channel);
    cfg.validate()?;
    let report = match a.mc {
        Some(shots) => {
            let runs = chosen
                .iter()
                .map(|&input| run_teleport_montecarlo(&TeleportConfig { input, ..cfg }, shots, a.seed))
                .collect::<Result<Vec<_>, _>>()?;
            report::teleport_mc(&runs)
        }
        None => report::teleport(&run_teleport(&cfg, &chosen)?),
    };
    let parameters = json!({"config": cfg, "inputs": a.inputs, "mc": a.mc});
    Ok(Run { report, format: a.output.out, parameters, seed, input: None })
}

fn execute(command: &Command) -> Result<(Run, &Output), Failure> {
    match command {
        Command::Analytic(a) => Ok((analytic(a)?, &a.output)),
        Command::Swap(a) => Ok((swap(a)?, &a.output)),
        Command::Teleport(a) => Ok((teleport(a)?, &a.output)),
        Command::Validate { .. } | Command::Replay { .. } => unreachable!("not a run"),
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Analytic(_) => "analytic",
        Command::Swap(_) => "swap",
        Command::Teleport(_) => "teleport",
        Command::Validate { .. } => "validate",
        Command::Replay { .. } => "replay",
    }
}

fn build_manifest(command: &Command, args: &[String], run: &Run, body: &str) -> Result<RunManifest, Failure> {
    let (input_file, input_sha256, args) = match &run.input {
        Some(path) => {
            let abs = std::fs::canonicalize(path)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            let hash = manifest::file_sha256(&abs)
                .map_err(|e| Failure::Usage(format!("{}: {e}", abs.display())))?;
            let given = path.to_string_lossy();
            let abs_s = abs.to_string_lossy().into_owned();
            let args = args
                .iter()
                .map(|a| if *a == given { abs_s.clone() } else { a.clone() })
                .collect();
            (Some(abs_s), Some(hash), args)
        }
        None => (None, None, args.to_vec()),
    };
    Ok(RunManifest {
        command: command_name(command).to_string(),
        args,
        parameters: run.parameters.clone(),
        seed: run.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: manifest::timestamp(),
        input_file,
        input_sha256,
        output_sha256: manifest::sha256_hex(body.as_bytes()),
    })
}

fn emit(command: &Command, args: &[String]) -> Result<(), Failure> {
    let (run, output) = execute(command)?;
    let body = run.body();
    let m = build_manifest(command, args, &run, &body)?;
    let m_json = serde_json::to_string_pretty(&m).expect("plain data");
    match run.format {
        Format::Json => {
            let all = json!({"manifest": m, "result": run.report.result});
            println!("{}", serde_json::to_string_pretty(&all).expect("plain data"));
        }
        _ => print!("{body}"),
    }
    match &output.manifest {
        Some(path) => std::fs::write(path, m_json + "\n")
            .map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?,
        None if run.format != Format::Json => eprintln!("{m_json}"),
        None => {}
    }
    Ok(())
}

fn check(path: &Path) -> Result<(), Failure> {
    let spec = load(path)?;
    println!(
        "{}: ok ({} statements, {} modes)",
        path.display(),
        spec.statements.len(),
        spec.modes.unwrap_or(0)
    );
    Ok(())
}

fn replay(path: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    // a manifest file or a JSON run output that embeds one
    let value = value.get("manifest").cloned().unwrap_or(value);
    let recorded: RunManifest =
        serde_json::from_value(value).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if recorded.tool_version != env!("CARGO_PKG_VERSION") {
        eprintln!(
            "warning: recorded with version {}, replaying with {}",
            recorded.tool_version,
            env!("CARGO_PKG_VERSION")
        );
    }
    if let (Some(file), Some(hash)) = (&recorded.input_file, &recorded.input_sha256) {
        let now = manifest::file_sha256(Path::new(file)).map_err(|e| Failure::Usage(format!("{file}: {e}")))?;
        if now != *hash {
            return Err(Failure::Usage(format!("{file} changed since the run (sha256 {now}, recorded {hash})")));
        }
    }
    let cli = Cli::try_parse_from(std::iter::once("swapsim".to_string()).chain(recorded.args.iter().cloned()))
        .map_err(|e| Failure::Usage(format!("recorded arguments no longer parse: {e}")))?;
    if matches!(cli.command, Command::Validate { .. } | Command::Replay { .. }) {
        return Err(Failure::Usage("manifest does not describe a run".into()));
    }
    let (run, _) = execute(&cli.command)?;
    let hash = manifest::sha256_hex(run.body().as_bytes());
    if hash == recorded.output_sha256 {
        println!("reproduced {} {hash}", recorded.command);
        Ok(())
    } else {
        Err(Failure::Other(format!(
            "output differs: sha256 {hash}, recorded {}",
            recorded.output_sha256
        )))
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("SWAPSIM_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .map_err(|_| Failure::Usage(format!("SWAPSIM_THREADS must be a count, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Other(e.to_string()))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Validate { file } => check(file),
        Command::Replay { manifest } => replay(manifest),
        other => emit(other, &args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(m) | Failure::Degenerate(m) | Failure::Other(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}
