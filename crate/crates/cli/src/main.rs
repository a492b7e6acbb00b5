use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use aeb_core::config::{load_config, to_toml, REFERENCE_CONFIG};
use aeb_core::output::{comparison_table, write_metrics, write_plot_csv, write_trace_csv};
use aeb_core::verify::{run_verify, Suite};
use aeb_core::{run_scenario, Controller, SimConfig, SimRun};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aeb", version, about = "Longitudinal emergency-braking simulator")]
struct Cli {
    /// Print progress and timing to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace, metrics and effective config.
    Run(RunArgs),
    /// Run the built-in property suites.
    Verify(VerifyArgs),
    /// Run both controllers on the same scenario and compare them.
    Compare(CommonArgs),
    /// Print the annotated reference config, or the effective config of a scenario file.
    Config {
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// TOML scenario file; built-in defaults when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "AEB_OUT_DIR", default_value = "aeb-out")]
    out: PathBuf,
    /// Plant step override, s.
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    controller: Option<ControllerArg>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Run a single suite.
    #[arg(long, value_enum)]
    only: Option<SuiteArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Smc,
    Lqr,
}

impl From<ControllerArg> for Controller {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::Smc => Controller::Smc,
            ControllerArg::Lqr => Controller::Lqr,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Pacejka,
    Jacobian,
    Care,
    Lyapunov,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Pacejka => Suite::Pacejka,
            SuiteArg::Jacobian => Suite::Jacobian,
            SuiteArg::Care => Suite::Care,
            SuiteArg::Lyapunov => Suite::Lyapunov,
        }
    }
}

fn load(path: Option<&Path>) -> Result<SimConfig> {
    match path {
        Some(p) => load_config(p).with_context(|| format!("loading scenario {}", p.display())),
        None => Ok(SimConfig::default()),
    }
}

fn with_overrides(mut config: SimConfig, dt: Option<f64>, controller: Option<Controller>) -> Result<SimConfig> {
    if let Some(dt) = dt {
        config.scenario.dt = dt;
    }
    if let Some(c) = controller {
        config.scenario.controller = c;
    }
    config.validate().context("invalid configuration")?;
    Ok(config)
}

fn simulate(config: &SimConfig, verbose: u8) -> Result<SimRun> {
    let start = Instant::now();
    let run = run_scenario(config).with_context(|| format!("{} run failed", config.scenario.controller))?;
    if verbose > 0 {
        eprintln!(
            "{}: {} ticks in {:.3} s",
            config.scenario.controller,
            run.trace.len(),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(run)
}

fn write_file(path: &Path, verbose: u8, body: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    if verbose > 0 {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn write_run(out: &Path, run: &SimRun, verbose: u8) -> Result<()> {
    let tag = run.config.scenario.controller.as_str();
    let config_text = to_toml(&run.config)?;
    write_file(&out.join(format!("trace_{tag}.csv")), verbose, |w| Ok(write_trace_csv(w, &run.trace)?))?;
    write_file(&out.join(format!("metrics_{tag}.toml")), verbose, |w| Ok(write_metrics(w, &run.metrics)?))?;
    write_file(&out.join(format!("config_{tag}.toml")), verbose, |w| Ok(w.write_all(config_text.as_bytes())?))
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

fn cmd_run(args: RunArgs, verbose: u8) -> Result<ExitCode> {
    let config = with_overrides(
        load(args.common.scenario.as_deref())?,
        args.common.dt,
        args.controller.map(Into::into),
    )?;
    let run = simulate(&config, verbose)?;
    create_out(&args.common.out)?;
    write_run(&args.common.out, &run, verbose)?;
    let m = &run.metrics;
    let interval = m
        .first_interval()
        .map_or_else(|| "none".to_string(), |(a, b)| format!("({a:.3}, {b:.3}) s"));
    println!(
        "{}: collision={} final_gap={:.4} m min_gap={:.4} m first_emergency={} slip_error={:.3}%",
        m.controller,
        m.collision,
        m.final_gap,
        m.min_gap,
        interval,
        100.0 * m.slip_rel_error_mean()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs, verbose: u8) -> Result<ExitCode> {
    // parameters are checked by the suites themselves, not rejected up front
    let config = match args.scenario.as_deref() {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            aeb_core::config::parse_unvalidated(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SimConfig::default(),
    };
    let start = Instant::now();
    let report = run_verify(&config, args.only.map(Into::into));
    print!("{}", report.table());
    if verbose > 0 {
        eprintln!("verify finished in {:.3} s", start.elapsed().as_secs_f64());
    }
    Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_compare(args: CommonArgs, verbose: u8) -> Result<ExitCode> {
    let base = with_overrides(load(args.scenario.as_deref())?, args.dt, None)?;
    let mut smc_cfg = base;
    smc_cfg.scenario.controller = Controller::Smc;
    let mut lqr_cfg = base;
    lqr_cfg.scenario.controller = Controller::Lqr;
    let (smc, lqr) = std::thread::scope(|s| {
        let handle = s.spawn(|| simulate(&smc_cfg, verbose));
        let lqr = simulate(&lqr_cfg, verbose);
        (handle.join().expect("simulation thread panicked"), lqr)
    });
    let (smc, lqr) = (smc?, lqr?);
    let table = comparison_table(&[&smc.metrics, &lqr.metrics]);

    create_out(&args.out)?;
    write_run(&args.out, &smc, verbose)?;
    write_run(&args.out, &lqr, verbose)?;
    write_file(&args.out.join("plot.csv"), verbose, |w| {
        Ok(write_plot_csv(w, &[("smc", &smc.trace), ("lqr", &lqr.trace)])?)
    })?;
    write_file(&args.out.join("comparison.txt"), verbose, |w| Ok(w.write_all(table.as_bytes())?))?;
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_config(scenario: Option<PathBuf>) -> Result<ExitCode> {
    match scenario {
        Some(p) => print!("{}", to_toml(&load(Some(&p))?)?),
        None => print!("{REFERENCE_CONFIG}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args, cli.verbose),
        Command::Verify(args) => cmd_verify(args, cli.verbose),
        Command::Compare(args) => cmd_compare(args, cli.verbose),
        Command::Config { scenario } => cmd_config(scenario),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
