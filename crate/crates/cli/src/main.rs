//! `mcgls`: evaluate measurement comparisons from the command line.
//!
//! Exit codes: 0 success, 2 unreadable input, 3 invalid input, 4 singular
//! system, 5 cross-method or Monte Carlo disagreement, 6 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use mcgls::consistency::{consistency_report, ConsistencyOptions, DEFAULT_Z_CRIT};
use mcgls::design::{build_design, check_linkage};
use mcgls::io::{
    exchange_graph_dot, export_exchange_graph, read_comparison_file, ComparisonFile, Report, ReportFormat,
};
use mcgls::simulate::{monte_carlo_cov_check, Simulator};
use mcgls::{solve, solve_all, CChoice, Error, Method, SimulationConfig};

/// Relative tolerance for `--method all`.
const AGREEMENT_TOL: f64 = 1e-8;

#[derive(Parser, Debug)]
#[command(name = "mcgls", version, about = "Constrained GLS evaluation of measurement comparisons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Reduced,
    Augmented,
    Full,
    Projection,
    /// Every route, failing if they disagree.
    All,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate artefact values and participant effects.
    Solve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Reduced)]
        method: MethodArg,
        /// Scalar of the augmented normal matrix: `auto` or a non-zero number.
        #[arg(long, default_value = "auto")]
        c: CChoice,
        /// Report path; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Json)]
        format: FormatArg,
        /// Include the systematic-effect adjustment in z-score uncertainties.
        #[arg(long, action = ArgAction::Set, default_value_t = true)]
        include_adjustment_in_z: bool,
        #[arg(long, default_value_t = DEFAULT_Z_CRIT)]
        z_crit: f64,
    },
    /// Validate an input file and check that the exchange is linked.
    Check {
        #[arg(long)]
        input: PathBuf,
    },
    /// Generate synthetic comparison files from a simulation config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of datasets; with more than one, files are named `<stem>-<i>.json`.
        #[arg(long, default_value_t = 1)]
        draws: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Compare the analytic covariance with a Monte Carlo estimate.
    McCheck {
        #[arg(long)]
        config: PathBuf,
        /// Number of draws; defaults to the config's `draws`.
        #[arg(long)]
        draws: Option<usize>,
        /// Largest acceptable studentized deviation.
        #[arg(long, default_value_t = 5.0)]
        n_se: f64,
        /// Full report as JSON.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Export the exchange graph in Graphviz DOT syntax.
    Graph {
        #[arg(long)]
        input: PathBuf,
        /// DOT path; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse(_) | Error::Schema(_) => 2,
            Error::Io(_) => 6,
            e if e.is_singular() => 4,
            _ => 3,
        };
        Failure::new(code, e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn write_out(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::from(Error::Io(e))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    input: &Path,
    method: MethodArg,
    c: CChoice,
    output: Option<&Path>,
    format: FormatArg,
    include_adjustment: bool,
    z_crit: f64,
) -> CliResult {
    let file = read_comparison_file(input)?;
    let (data, cov, cons) = file.to_domain()?;
    let dm = build_design(&data)?;
    let opts = ConsistencyOptions { z_crit, include_adjustment };

    let (report, agreement) = match method {
        MethodArg::All => {
            let cmp = solve_all(&dm, &cov, &cons, c)?;
            let sol = &cmp.solutions[0];
            let cr = consistency_report(&dm, sol, &cov, opts)?;
            let report = Report::new(&dm, sol, cr, &file.unit).with_agreement(&cmp, AGREEMENT_TOL);
            eprintln!(
                "max cross-method deviation: b {:.3e}, cov {:.3e} (tolerance {AGREEMENT_TOL:e})",
                cmp.max_b_rel_dev, cmp.max_cov_rel_dev
            );
            let passed = cmp.agrees_within(AGREEMENT_TOL);
            (report, passed)
        }
        single => {
            let m = match single {
                MethodArg::Reduced => Method::Reduced,
                MethodArg::Augmented => Method::Augmented,
                MethodArg::Full => Method::Full,
                MethodArg::Projection | MethodArg::All => Method::Projection,
            };
            let sol = solve(m, &dm, &cov, &cons, c)?;
            let cr = consistency_report(&dm, &sol, &cov, opts)?;
            (Report::new(&dm, &sol, cr, &file.unit), true)
        }
    };

    let format = match format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    };
    write_out(output, &report.render(format)?)?;
    if agreement {
        Ok(())
    } else {
        Err(Failure::new(5, "solver routes disagree beyond tolerance"))
    }
}

fn cmd_check(input: &Path) -> CliResult {
    let (data, _, _) = read_comparison_file(input)?.to_domain()?;
    let linkage = check_linkage(&data);
    if !linkage.passed() {
        let mut msg = format!("exchange is not linked: {} components", linkage.components.len());
        for (i, comp) in linkage.components.iter().enumerate() {
            let ps: Vec<_> = comp.participants.iter().map(|p| p.as_str()).collect();
            let arts: Vec<_> = comp.artefacts.iter().map(|a| a.as_str()).collect();
            msg.push_str(&format!(
                "\n  component {}: participants [{}], artefacts [{}]",
                i + 1,
                ps.join(", "),
                arts.join(", ")
            ));
        }
        return Err(Failure::new(3, msg));
    }
    let dm = build_design(&data)?;
    if !dm.rank_certificate.identifiable() {
        return Err(Failure::new(3, dm.rank_certificate.describe()));
    }
    println!(
        "ok: {} records, {} participants, {} artefacts, {} covariates, {} degrees of freedom",
        data.n_records(),
        data.n_participants(),
        data.n_artefacts(),
        data.n_covariates(),
        dm.dof()
    );
    Ok(())
}

fn numbered(path: &Path, i: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("comparison");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("json");
    path.with_file_name(format!("{stem}-{i}.{ext}"))
}

fn cmd_simulate(config: &Path, seed: Option<u64>, draws: usize, output: &Path) -> CliResult {
    let mut cfg = SimulationConfig::from_path(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let sim = Simulator::new(&cfg)?;
    for i in 0..draws.max(1) {
        let s = sim.generate(i as u64);
        let text = ComparisonFile::from_domain(&s.data, &s.cov, &s.cons, &cfg.unit).to_json_string()?;
        let path = if draws <= 1 { output.to_path_buf() } else { numbered(output, i) };
        write_out(Some(&path), &text)?;
    }
    Ok(())
}

fn cmd_mc_check(config: &Path, draws: Option<usize>, n_se: f64, output: Option<&Path>) -> CliResult {
    let cfg = SimulationConfig::from_path(config)?;
    let report = monte_carlo_cov_check(&cfg, draws.unwrap_or(cfg.draws))?;
    print!("{}", report.summary());
    if let Some(path) = output {
        write_out(Some(path), &report.to_json_string()?)?;
    }
    if report.within(n_se) {
        Ok(())
    } else {
        Err(Failure::new(
            5,
            format!("empirical covariance deviates by {:.2} standard errors", report.max_abs_studentized),
        ))
    }
}

fn cmd_graph(input: &Path, output: Option<&Path>) -> CliResult {
    let (data, _, _) = read_comparison_file(input)?.to_domain()?;
    match output {
        Some(p) => Ok(export_exchange_graph(&data, p)?),
        None => write_out(None, &exchange_graph_dot(&data)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve { input, method, c, output, format, include_adjustment_in_z, z_crit } => {
            cmd_solve(&input, method, c, output.as_deref(), format, include_adjustment_in_z, z_crit)
        }
        Command::Check { input } => cmd_check(&input),
        Command::Simulate { config, seed, draws, output } => cmd_simulate(&config, seed, draws, &output),
        Command::McCheck { config, draws, n_se, output } => cmd_mc_check(&config, draws, n_se, output.as_deref()),
        Command::Graph { input, output } => cmd_graph(&input, output.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
