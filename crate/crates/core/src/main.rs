use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rights_market::auction::{replay, Trace};
use rights_market::crisis::{check_crisis, run_crisis_streaming};
use rights_market::frustration::market_frustration_report;
use rights_market::oracle::verify_solution;
use rights_market::report::{
    buyer_rows, crisis_rows, crisis_summary, market_summary, to_json, verification_summary,
    write_buyer_csv, write_crisis_csv, write_json, CrisisRunReport, MarketReport,
};
use rights_market::scenario::{
    generate_crisis_scenario, generate_scenario, load_scenario, GenParams, Scenario, ScenarioKind,
};
use rights_market::{solve, Error, Mechanism, Mode, Rational, Solution};

/// Exit statuses. Each failure kind has its own code.
mod status {
    pub const OK: u8 = 0;
    pub const IO: u8 = 1;
    pub const PARSE: u8 = 3;
    pub const INVALID: u8 = 4;
    pub const SOLVER: u8 = 5;
    pub const CHECK: u8 = 6;
    pub const REPLAY: u8 = 7;
}

#[derive(Parser)]
#[command(
    name = "rights-market",
    version,
    about = "Market equilibria with buying rights"
)]
struct Cli {
    /// Directory for reports; overrides the scenario's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Also fail on frustration and crisis check violations.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a single-round market scenario.
    Solve { scenario: PathBuf },
    /// Run a multi-round crisis scenario.
    Crisis { scenario: PathBuf },
    /// Generate a random valid scenario.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        buyers: usize,
        #[arg(long)]
        sellers: usize,
        #[arg(long)]
        vmax: u64,
        #[arg(long, default_value_t = 0)]
        dmax: u64,
        #[arg(long, default_value = "1/10")]
        epsilon: Rational,
        #[arg(long, default_value = "unrestricted")]
        mode: Mode,
        #[arg(long, default_value = "proportional")]
        mechanism: Mechanism,
        /// Generate a crisis with this many rounds instead of a market.
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Check a solution file against a scenario.
    Verify {
        solution: PathBuf,
        scenario: PathBuf,
    },
    /// Rebuild the solution from a trace.
    Replay {
        trace: PathBuf,
        /// Solution the replay must reproduce exactly.
        #[arg(long)]
        expect: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: code_for(&e),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn code_for(e: &Error) -> u8 {
    match e {
        Error::Scenario { .. }
        | Error::Rational(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::UnknownMechanism(_) => status::PARSE,
        Error::NonTermination { .. } => status::SOLVER,
        Error::CrisisRound { source, .. } => code_for(source),
        Error::Replay { .. } => status::REPLAY,
        Error::Io(_) => status::IO,
        _ => status::INVALID,
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Solve { scenario } => cmd_solve(&cli, scenario),
        Cmd::Crisis { scenario } => cmd_crisis(&cli, scenario),
        Cmd::Gen {
            seed,
            buyers,
            sellers,
            vmax,
            dmax,
            epsilon,
            mode,
            mechanism,
            rounds,
        } => {
            let params = GenParams {
                buyers: *buyers,
                sellers: *sellers,
                vmax: *vmax,
                dmax: *dmax,
                epsilon: epsilon.clone(),
                mode: *mode,
                mechanism: *mechanism,
            };
            cmd_gen(&cli, *seed, &params, *rounds)
        }
        Cmd::Verify { solution, scenario } => cmd_verify(&cli, solution, scenario),
        Cmd::Replay { trace, expect } => cmd_replay(&cli, trace, expect.as_deref()),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn out_dir(cli: &Cli, sc: Option<&Scenario>) -> std::io::Result<Option<PathBuf>> {
    let dir = cli.out.clone().or_else(|| sc.and_then(|s| s.out.clone()));
    if let Some(d) = &dir {
        fs::create_dir_all(d)?;
    }
    Ok(dir)
}

fn cmd_solve(cli: &Cli, path: &Path) -> Outcome {
    let sc = load_scenario(path)?;
    if sc.kind != ScenarioKind::Market {
        return Err(Failure {
            code: status::INVALID,
            message: format!("{}: crisis scenario; use `crisis`", path.display()),
        });
    }
    let m = sc.market_spec()?;
    let out = solve(&m)?;
    let report = MarketReport::new(&m, &sc.mechanism, sc.seed, &out)?;
    let summary = market_summary(&report);

    if let Some(dir) = out_dir(cli, Some(&sc))? {
        write_json(&dir.join("solution.json"), &report.solution)?;
        out.trace
            .write_jsonl(BufWriter::new(File::create(dir.join("trace.jsonl"))?))?;
        match cli.format {
            Format::Json => write_json(&dir.join("report.json"), &report)?,
            Format::Csv => write_buyer_csv(&report.rows(), File::create(dir.join("buyers.csv"))?)?,
        }
        fs::write(dir.join("summary.txt"), &summary)?;
    }
    print!("{summary}");

    let mut ok = report.verification.passed() && report.stats.cash_audit.violations.is_empty();
    if cli.strict {
        ok &= report.frustration.pf_cap_violations.is_empty();
    }
    Ok(if ok { status::OK } else { status::CHECK })
}

fn cmd_crisis(cli: &Cli, path: &Path) -> Outcome {
    let sc = load_scenario(path)?;
    let spec = sc.crisis_spec()?;
    let dir = out_dir(cli, Some(&sc))?;
    let mut stream = match &dir {
        Some(d) => Some(BufWriter::new(File::create(d.join("rounds.jsonl"))?)),
        None => None,
    };
    let mut round_failures = Vec::new();
    let records = run_crisis_streaming(&spec, |rec, out| {
        let rights: Vec<u64> = rec.buyers.iter().map(|r| r.assigned).collect();
        let willingness: Vec<Rational> = rec.buyers.iter().map(|r| r.willingness.clone()).collect();
        let m = spec.market_for(&rights, &willingness);
        let v = verify_solution(&m, &out.solution, Some(&out.stats));
        if !v.passed() || !out.stats.cash_audit.violations.is_empty() {
            round_failures.push(rec.tau);
        }
        if let Some(w) = stream.as_mut() {
            serde_json::to_writer(&mut *w, rec)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(())
    })?;
    let report = CrisisRunReport {
        epsilon: spec.template.epsilon.clone(),
        mode: spec.mode,
        mechanism: sc.mechanism.clone(),
        seed: sc.seed,
        check: check_crisis(&records),
        rounds: records,
    };
    let mut summary = crisis_summary(&report);
    for tau in &round_failures {
        summary.push_str(&format!("round {tau}: solution verification FAIL\n"));
    }
    if let Some(d) = &dir {
        match cli.format {
            Format::Json => write_json(&d.join("crisis.json"), &report)?,
            Format::Csv => write_crisis_csv(
                &crisis_rows(&report.rounds),
                File::create(d.join("rounds.csv"))?,
            )?,
        }
        fs::write(d.join("summary.txt"), &summary)?;
    }
    print!("{summary}");

    let mut ok = round_failures.is_empty();
    if cli.strict {
        ok &= report.check.passed();
    }
    Ok(if ok { status::OK } else { status::CHECK })
}

fn cmd_gen(cli: &Cli, seed: u64, params: &GenParams, rounds: Option<usize>) -> Outcome {
    let sc = match rounds {
        Some(t) => generate_crisis_scenario(seed, params, t)?,
        None => generate_scenario(seed, params)?,
    };
    let text = sc.to_json_pretty();
    match out_dir(cli, None)? {
        Some(d) => fs::write(d.join("scenario.json"), text)?,
        None => print!("{text}"),
    }
    Ok(status::OK)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Failure {
        code: status::PARSE,
        message: format!("{}: {e}", path.display()),
    })
}

fn cmd_verify(cli: &Cli, solution: &Path, scenario: &Path) -> Outcome {
    let sc = load_scenario(scenario)?;
    let m = sc.market_spec()?;
    let s: Solution = read_json(solution)?;
    let v = verify_solution(&m, &s, None);
    let fr = market_frustration_report(&m, &s, None)?;
    let summary = verification_summary(&v, &fr);
    if let Some(d) = out_dir(cli, None)? {
        match cli.format {
            Format::Json => write_json(&d.join("verification.json"), &v)?,
            Format::Csv => write_buyer_csv(&buyer_rows(&fr), File::create(d.join("buyers.csv"))?)?,
        }
        fs::write(d.join("summary.txt"), &summary)?;
    }
    print!("{summary}");
    Ok(if v.passed() {
        status::OK
    } else {
        status::CHECK
    })
}

fn cmd_replay(cli: &Cli, trace: &Path, expect: Option<&Path>) -> Outcome {
    let t = Trace::read_jsonl(BufReader::new(File::open(trace)?))?;
    let s = replay(&t)?;
    let text = to_json(&s)?;
    match out_dir(cli, None)? {
        Some(d) => fs::write(d.join("solution.json"), &text)?,
        None => print!("{text}"),
    }
    if let Some(p) = expect {
        let want: Solution = read_json(p)?;
        if want != s {
            return Err(Failure {
                code: status::REPLAY,
                message: format!("replayed solution differs from {}", p.display()),
            });
        }
    }
    Ok(status::OK)
}
