//! `dqkd` command-line tool.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime or I/O error,
//! 3 aborted network session.

mod config;

use std::fs;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dqkd::net::{serve_alice, serve_bob, serve_source, PartyOptions};
use dqkd::observables::dump_groups;
use dqkd::protocol::{run_ekert_baseline, run_session, sweep, Mode, SweepParam};
use dqkd::report::{canonical_json, round_significant, write_rounds_csv, ReportDocument};
use dqkd::security::SecurityReport;
use log::info;

use crate::config::{parse_config, ConfigError, SessionArgs};

#[derive(Parser)]
#[command(name = "dqkd", version, about = "Double-entanglement QKD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a session in-process and write a JSON report
    Run(RunArgs),
    /// Take one role in a three-process network session
    Net(NetArgs),
    /// Print the six observable groups as JSON
    DumpGroups {
        /// Write to FILE instead of stdout
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Vary one channel parameter and print CSV of S and QBER
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Report path [default: report.json]; `-` for stdout
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Also write one CSV row per round
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Role {
    Alice,
    Bob,
    Source,
}

#[derive(Args)]
struct NetArgs {
    #[command(flatten)]
    session: SessionArgs,
    #[arg(long, value_enum)]
    role: Role,
    /// Address to listen on (source and alice)
    #[arg(long, value_name = "ADDR")]
    listen: Option<String>,
    /// Source address (alice and bob)
    #[arg(long, value_name = "ADDR")]
    source: Option<String>,
    /// Alice's address (bob)
    #[arg(long, value_name = "ADDR")]
    peer: Option<String>,
    #[arg(long = "session-id", default_value = "dqkd")]
    session_id: String,
    /// Seconds to keep retrying connections
    #[arg(long = "connect-timeout", default_value_t = 30)]
    connect_timeout: u64,
    /// Report path [default: report.json]; ignored by the source
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Answer reveal requests with nothing (test hook)
    #[arg(long = "withhold-reveal", hide = true)]
    withhold_reveal: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamArg {
    #[value(name = "pauli_p")]
    PauliP,
    #[value(name = "eta")]
    Eta,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    session: SessionArgs,
    #[arg(long, value_enum)]
    param: ParamArg,
    #[arg(long, allow_negative_numbers = true)]
    from: f64,
    #[arg(long, allow_negative_numbers = true)]
    to: f64,
    /// Number of points, both ends included
    #[arg(long)]
    steps: usize,
    /// Write CSV to FILE instead of stdout
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
    #[error("session aborted: {0}")]
    Aborted(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Aborted(_) => 3,
        }
    }
}

impl From<dqkd::Error> for CliError {
    fn from(e: dqkd::Error) -> Self {
        match e {
            dqkd::Error::Config(m) => CliError::Config(ConfigError::Conflict(m)),
            dqkd::Error::Aborted(m) => CliError::Aborted(m),
            dqkd::Error::Protocol(_) => CliError::Aborted(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

const DEFAULT_REPORT: &str = "report.json";

fn write_output(path: &Path, text: &str) -> Result<(), CliError> {
    if path == Path::new("-") {
        io::stdout().write_all(text.as_bytes())?;
        return Ok(());
    }
    fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn fmt3(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.3}"))
}

fn summary(report: &SecurityReport) -> String {
    format!(
        "S={}, QBER={}, verdict {:?}, key={}",
        fmt3(report.bell_s),
        fmt3(report.qber),
        report.verdict,
        report.key_length
    )
}

fn report_path(flag: Option<PathBuf>, file: Option<PathBuf>) -> PathBuf {
    flag.or(file)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_REPORT))
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let config = parse_config(&args.session)?;
    let output = report_path(args.output, config.output);
    let session = config.session;
    if session.mode == Mode::Ekert {
        if args.csv.is_some() {
            return Err(
                ConfigError::Conflict("--csv is not available for --mode ekert".into()).into(),
            );
        }
        let baseline = run_ekert_baseline(&session)?;
        write_output(
            &output,
            &canonical_json(&ReportDocument::baseline(session, baseline))?,
        )?;
        if output != Path::new("-") {
            println!(
                "raw key fraction={}, coincidences={}, key={}",
                fmt3(baseline.raw_key_fraction),
                baseline.coincidences,
                baseline.raw_key_bits
            );
        }
        return Ok(());
    }
    let result = run_session(&session)?;
    if let Some(csv) = &args.csv {
        let file = fs::File::create(csv)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", csv.display())))?;
        write_rounds_csv(&result.records, io::BufWriter::new(file))?;
    }
    write_output(
        &output,
        &canonical_json(&ReportDocument::session(session, result.report.clone()))?,
    )?;
    if output != Path::new("-") {
        println!("{}", summary(&result.report));
    }
    Ok(())
}

fn required<'a>(value: &'a Option<String>, flag: &'static str) -> Result<&'a str, CliError> {
    value.as_deref().ok_or_else(|| {
        ConfigError::Invalid {
            flag,
            message: "required for this role".into(),
        }
        .into()
    })
}

fn bind(addr: &str) -> Result<TcpListener, CliError> {
    TcpListener::bind(addr).map_err(|e| CliError::Runtime(format!("cannot listen on {addr}: {e}")))
}

fn cmd_net(args: NetArgs) -> Result<(), CliError> {
    let config = parse_config(&args.session)?;
    let session = config.session;
    let timeout = Duration::from_secs(args.connect_timeout);
    let id = args.session_id.as_str();
    let outcome = match args.role {
        Role::Source => {
            let listener = bind(required(&args.listen, "--listen")?)?;
            let served = serve_source(&session, id, &listener)?;
            println!("served {} rounds", served.rounds_served);
            return Ok(());
        }
        Role::Alice => {
            let source = required(&args.source, "--source")?;
            let listener = bind(required(&args.listen, "--listen")?)?;
            serve_alice(&session, id, source, &listener, timeout)?
        }
        Role::Bob => {
            let source = required(&args.source, "--source")?;
            let peer = required(&args.peer, "--peer")?;
            let options = PartyOptions {
                withhold_reveal: args.withhold_reveal,
            };
            serve_bob(&session, id, source, peer, timeout, options)?
        }
    };
    let output = report_path(args.output, config.output);
    write_output(&output, &canonical_json(&outcome.document)?)?;
    if let Some(report) = &outcome.document.security {
        println!("{}", summary(report));
    }
    Ok(())
}

fn csv_field(x: Option<f64>) -> String {
    x.map(|v| round_significant(v).to_string())
        .unwrap_or_default()
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let config = parse_config(&args.session)?;
    let (param, name) = match args.param {
        ParamArg::PauliP => (SweepParam::PauliP, "pauli_p"),
        ParamArg::Eta => (SweepParam::Eta, "eta"),
    };
    for (flag, v) in [("--from", args.from), ("--to", args.to)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(ConfigError::Invalid {
                flag,
                message: format!("{v} is outside [0, 1]"),
            }
            .into());
        }
    }
    if args.steps == 0 {
        return Err(ConfigError::Invalid {
            flag: "--steps",
            message: "must be at least 1".into(),
        }
        .into());
    }
    let points = sweep(&config.session, param, args.from, args.to, args.steps)?;
    let mut text = format!("{name},bell_s,bell_s_stderr,qber\n");
    for p in points {
        text.push_str(&format!(
            "{},{},{},{}\n",
            round_significant(p.value),
            csv_field(p.bell_s),
            csv_field(p.bell_s_stderr),
            csv_field(p.qber)
        ));
    }
    write_output(args.output.as_deref().unwrap_or(Path::new("-")), &text)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Net(args) => cmd_net(args),
        Command::DumpGroups { output } => {
            let text = canonical_json(&dump_groups())?;
            write_output(output.as_deref().unwrap_or(Path::new("-")), &text)
        }
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dqkd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
