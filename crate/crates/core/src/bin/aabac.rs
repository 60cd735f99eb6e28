use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aabac::abe::Mode;
use aabac::bench::{self, Experiment, DEFAULT_REPS};
use aabac::cli::{default_publish, parse_attribute, parse_name_arg, Action, CliError, Output, SetupArgs, State};
use aabac::scenario::{run_scenario, ScenarioSpec};

#[derive(Parser)]
#[command(name = "aabac", version, about = "Attribute-based access control over a simulated name-based network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StateArg {
    #[arg(long)]
    state: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file end to end.
    Scenario {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run one evaluation experiment and write CSV.
    Bench {
        experiment: String,
        #[arg(long, default_value_t = DEFAULT_REPS)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated x values overriding the defaults.
        #[arg(long, value_delimiter = ',')]
        xs: Vec<u64>,
    },
    /// Create a state directory with a ledger, NOC, repo and one namespace agreement.
    Setup {
        #[command(flatten)]
        state: StateArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        prefix: Option<String>,
        /// Comma-separated attribute universe.
        #[arg(long, value_delimiter = ',')]
        universe: Vec<String>,
        #[arg(long)]
        template: Option<String>,
        #[arg(long)]
        ledger: Option<String>,
        #[arg(long)]
        noc: Option<String>,
        #[arg(long)]
        start_date: Option<String>,
    },
    /// Register a user and their attributes at the local ledger.
    Keygen {
        #[command(flatten)]
        state: StateArg,
        #[arg(long)]
        user: String,
        /// `Name=Value` or `Name:int=N`; repeatable.
        #[arg(long = "attr")]
        attrs: Vec<String>,
        #[arg(long)]
        valid_until: Option<String>,
    },
    /// Encrypt, sign and store an object in the repo.
    Publish {
        #[command(flatten)]
        state: StateArg,
        #[arg(long)]
        name: String,
        #[arg(long)]
        policy: String,
        #[arg(long)]
        metadata: Option<PathBuf>,
        #[arg(long)]
        payload: Option<PathBuf>,
        #[arg(long, default_value = "direct")]
        mode: String,
        #[arg(long)]
        freshness_ms: Option<u64>,
        #[arg(long)]
        interval_ms: Option<u64>,
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Fetch and decrypt an object as a registered user.
    Fetch {
        #[command(flatten)]
        state: StateArg,
        #[arg(long)]
        user: String,
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        metadata_out: Option<PathBuf>,
    },
    /// Mark a user invalid at the local ledger.
    Revoke {
        #[command(flatten)]
        state: StateArg,
        #[arg(long)]
        user: String,
    },
    /// Move an object to its next epoch.
    AdvanceEpoch {
        #[command(flatten)]
        state: StateArg,
        #[arg(long)]
        name: String,
        /// Reencrypt every segment instead of a sample.
        #[arg(long)]
        full: bool,
    },
}

fn read(path: &PathBuf) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &PathBuf, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn print(out: &Output) {
    for line in &out.lines {
        println!("{line}");
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Scenario { file, json } => {
            let text = String::from_utf8(read(&file)?).map_err(|e| CliError::Usage(e.to_string()))?;
            let spec = ScenarioSpec::from_json(&text).map_err(|e| CliError::Usage(e.to_string()))?;
            let report = run_scenario(&spec).map_err(|e| CliError::Failed(e.to_string()))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                println!("{report}");
            }
            if report.passed() {
                Ok(())
            } else {
                Err(CliError::Failed(format!("{}: outcomes differ from expectations", report.id)))
            }
        }
        Command::Bench { experiment, reps, seed, out, xs } => {
            let exp: Experiment = experiment.parse().map_err(CliError::Usage)?;
            if reps == 0 {
                return Err(CliError::Usage("--reps must be at least 1".into()));
            }
            let xs = if xs.is_empty() { exp.default_xs() } else { xs };
            let result = bench::run(exp, &xs, reps, seed);
            if let Some(scale) = result.scale_factor {
                eprintln!("desk scale: each size stands in for one {scale} times larger");
            }
            match out {
                Some(path) => write(&path, result.to_csv().as_bytes()),
                None => {
                    print!("{}", result.to_csv());
                    Ok(())
                }
            }
        }
        Command::Setup { state, seed, prefix, universe, template, ledger, noc, start_date } => {
            let mut args = SetupArgs { seed, ..SetupArgs::default() };
            if let Some(p) = prefix {
                args.data_prefix = parse_name_arg(&p)?;
            }
            if !universe.is_empty() {
                args.universe = universe;
            }
            if let Some(t) = template {
                args.template = t;
            }
            if let Some(l) = ledger {
                args.ledger_prefix = parse_name_arg(&l)?;
            }
            if let Some(n) = noc {
                args.noc_prefix = parse_name_arg(&n)?;
            }
            if let Some(d) = start_date {
                args.start_date = d;
            }
            let (_, out) = State::setup(&state.state, args)?;
            print(&out);
            Ok(())
        }
        Command::Keygen { state, user, attrs, valid_until } => {
            let attrs = attrs.iter().map(|a| parse_attribute(a)).collect::<Result<_, _>>()?;
            let action = Action::Keygen { user: parse_name_arg(&user)?, attrs, valid_until };
            print(&State::open(&state.state)?.apply(action)?);
            Ok(())
        }
        Command::Publish { state, name, policy, metadata, payload, mode, freshness_ms, interval_ms, fraction } => {
            let mut s = State::open(&state.state)?;
            let mut args = default_publish(parse_name_arg(&name)?, policy);
            args.mode = match mode.as_str() {
                "direct" => Mode::Direct,
                "hybrid" => Mode::Hybrid,
                other => return Err(CliError::Usage(format!("unknown mode {other:?}"))),
            };
            if let Some(path) = metadata {
                args.metadata = Some(s.store_blob(&read(&path)?)?);
            }
            if let Some(path) = payload {
                args.payload = Some(s.store_blob(&read(&path)?)?);
            }
            args.freshness_ms = freshness_ms.unwrap_or(args.freshness_ms);
            args.interval_ms = interval_ms.unwrap_or(args.interval_ms);
            args.fraction = fraction.unwrap_or(args.fraction);
            print(&s.apply(Action::Publish(args))?);
            Ok(())
        }
        Command::Fetch { state, user, name, out, metadata_out } => {
            let action = Action::Fetch { user: parse_name_arg(&user)?, name: parse_name_arg(&name)? };
            let result = State::open(&state.state)?.apply(action)?;
            print(&result);
            let obj = result.object.expect("fetch yields an object");
            if let Some(path) = out {
                write(&path, &obj.payload)?;
            }
            if let Some(path) = metadata_out {
                write(&path, &obj.metadata)?;
            }
            Ok(())
        }
        Command::Revoke { state, user } => {
            print(&State::open(&state.state)?.apply(Action::Revoke { user: parse_name_arg(&user)? })?);
            Ok(())
        }
        Command::AdvanceEpoch { state, name, full } => {
            let action = Action::AdvanceEpoch { name: parse_name_arg(&name)?, full };
            print(&State::open(&state.state)?.apply(action)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aabac: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
