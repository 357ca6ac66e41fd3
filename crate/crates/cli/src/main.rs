use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kamreduce_cli::config::ExperimentConfig;
use kamreduce_cli::output::OutDir;
use kamreduce_cli::{commands, suite, CliError};

#[derive(Parser)]
#[command(name = "kamreduce", version, about = "KAM reducibility experiments for quasi-periodic wave equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file (a run manifest is accepted too).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed overriding the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; KAMREDUCE_THREADS when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Brjuno–Rüssmann margins for a list of frequency vectors.
    CheckFrequency,
    /// Run the KAM reduction.
    Reduce,
    /// Excluded-measure sweep over γ.
    Measure,
    /// Compare direct integration with the reduced reconstruction.
    Verify,
    /// Run the seeded property suite.
    Selftest {
        /// Print the check names and exit.
        #[arg(long)]
        list: bool,
    },
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("KAMREDUCE_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| CliError::Config(format!("KAMREDUCE_THREADS={v:?} is not a count"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = threads(cli.threads)? {
        if n == 0 {
            return Err(CliError::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Command::Selftest { list: true } = cli.command {
        for n in suite::names() {
            println!("{n}");
        }
        return Ok(());
    }
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.command {
        Command::CheckFrequency => {
            let rows = commands::check_frequency(&cfg, &cli.out)?;
            for r in rows {
                println!("omega={:?} worst_margin={:e} admissible={}", r.omega, r.worst_margin, r.admissible);
            }
        }
        Command::Reduce => {
            let run = commands::reduce(&cfg, &cli.out)?;
            for w in &run.warnings {
                eprintln!("warning: {w}");
            }
            for r in &run.table {
                println!("nu={} [P] {:e} -> {:e} K={}", r.nu, r.pre(), r.post(), r.k_nu);
            }
        }
        Command::Measure => {
            let m = commands::measure(&cfg, &cli.out)?;
            for (g, f) in m.gammas.iter().zip(&m.fractions) {
                println!("gamma={g:e} excluded={f:e}");
            }
            if let Some(s) = m.slope {
                println!("slope={s}");
            }
        }
        Command::Verify => {
            let o = commands::verify(&cfg, &cli.out)?;
            println!(
                "sup_rel_error={:e} stability_direct={} stability_reduced={} bound={}",
                o.sup_rel_error, o.stability_direct, o.stability_reduced, o.stability_bound
            );
            if !o.passed(cfg.verify.tolerance) {
                return Err(CliError::Property(format!(
                    "sup error {:e} (tolerance {:e}), stability {} (bound {}), unstable {}",
                    o.sup_rel_error, cfg.verify.tolerance, o.stability_direct, o.stability_bound, o.unstable
                )));
            }
        }
        Command::Selftest { .. } => {
            let results = suite::run_suite(cfg.seed, &cfg.selftest);
            let mut out = OutDir::create(&cli.out)?;
            out.write("selftest.csv", &suite::suite_csv(&results))?;
            let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
            out.manifest("selftest", &cfg, if failed.is_empty() { "ok" } else { "failed" }, serde_json::json!({ "checks": results }))?;
            for r in &results {
                println!("{} {} worst={:e} tol={:e}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.worst, r.tolerance);
            }
            if !failed.is_empty() {
                return Err(CliError::Property(format!("failed checks: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kamreduce: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
