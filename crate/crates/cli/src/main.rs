use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inertia_cli::output::read_gain_file;
use inertia_cli::{run_pipeline, CliError, Config, PipelineOptions, RunReport, Stages};

#[derive(Parser)]
#[command(name = "inertia", version, about = "Model-reference synthetic inertia: reduce, synthesize, simulate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration; the shipped default when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seven-number gain file; skips synthesis.
    #[arg(long, global = true)]
    gain_file: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Comma-separated stage list for `all`.
    #[arg(long, global = true)]
    stages: Option<String>,
    /// Run only the named scenario; repeatable.
    #[arg(long, global = true)]
    scenario: Vec<String>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Trim, linearize and reduce the turbine model.
    Reduce,
    /// Reduce, then synthesize a certified gain.
    Synthesize,
    /// Simulate the configured scenarios.
    Simulate,
    /// Simulate and compare the scenarios against each other.
    Compare,
    /// Every stage plus the comparison.
    All,
}

fn options(cli: &Cli) -> Result<PipelineOptions, CliError> {
    let base = match cli.command {
        Command::Reduce => Stages { reduce: true, synthesize: false, simulate: false },
        Command::Synthesize => Stages { reduce: true, synthesize: true, simulate: false },
        Command::Simulate | Command::Compare | Command::All => Stages::ALL,
    };
    let stages = match (&cli.stages, cli.command) {
        (Some(list), Command::All) => Stages::parse(list)?,
        (Some(_), _) => return Err(CliError::Usage("--stages is only accepted by `all`".into())),
        (None, _) => base,
    };
    let gain = match &cli.gain_file {
        Some(p) => Some((read_gain_file(p)?, format!("file {}", p.display()))),
        None => None,
    };
    Ok(PipelineOptions {
        stages: Some(stages),
        gain,
        out_dir: Some(cli.out.clone()),
        scenarios: cli.scenario.clone(),
        compare: matches!(cli.command, Command::Compare | Command::All),
    })
}

fn print_summary(r: &RunReport) {
    if let Some(s) = &r.reduction {
        println!(
            "reduction: lambda_r = {:.6}  a_rd = {:.6}  b_rd = {:.6}  c_rd = {:.6}  d_rd = {:.6}  step deviation {:.1}%",
            s.lambda_r,
            s.a_rd,
            s.b_rd,
            s.c_rd,
            s.d_rd,
            100.0 * s.step_fidelity_peak
        );
    }
    println!("delays: eta_m = {} s, kappa = {} s", r.delays.eta_m, r.delays.kappa);
    if let Some(s) = &r.synthesis {
        println!(
            "synthesis: gamma = {:.5}  margin = {:.3e} (eps {:.1e}, {})  {} probes",
            s.gamma,
            s.margin,
            s.epsilon,
            if s.certified { "certified" } else { "NOT certified" },
            s.probes.len()
        );
    }
    if let Some(g) = &r.gain {
        let v: Vec<String> = g.values.iter().map(|x| format!("{x:.4}")).collect();
        println!("gain ({}): [{}]  zero-delay stable: {}", g.source, v.join(", "), g.closed_loop_stable);
    }
    for s in &r.scenarios {
        let m = &s.metrics;
        let h = m.h_est.map(|h| format!("{h:.3} s")).unwrap_or_else(|| "-".into());
        println!(
            "{:<14} {:<24} nadir {:+.5}  rocof {:+.4}  H_est {h}  tracking peak {:.3} of reference nadir",
            s.name, s.controller, m.nadir, m.rocof, m.tracking_peak_relative
        );
    }
    if let Some(c) = &r.comparison {
        println!("rms(d_omega_d - omega_hat):");
        for (n, v) in c.scenarios.iter().zip(&c.rms_tracking) {
            println!("  {n:<14} {v:.6e}");
        }
    }
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(last) = r.artifacts.last() {
        println!("report: {last}");
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default_config(),
    };
    let run = run_pipeline(&cfg, &options(cli)?)?;
    print_summary(&run.report);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
