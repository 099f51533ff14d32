//! Command-line front end: run scenarios, parameter sweeps, log comparisons,
//! envelope fitting and schedule inspection.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use coordctl::harness::{
    self, compute_metrics, fit_envelope, ControllerKind, Metrics, ScenarioConfig, SimLog,
    SpeedProfile, SweepParam,
};
use coordctl::scheduler::{ScheduleTable, KMH_TO_MS};

#[derive(Parser)]
#[command(name = "coordctl", about = "Coordinated vehicle control simulator")]
struct Cli {
    /// Output directory for CSV logs and tables
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Reserved for future stochastic features; simulation is deterministic
    /// and ignores it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the controller selection from the config
    /// (LTV_MPC, AMPC, LTV_MPC+DYC, AMPC+DYC)
    #[arg(long, global = true)]
    controller: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario config and write its log CSV
    Run { config: PathBuf },
    /// Run a family of scenarios varying one MPC parameter
    /// (param: Np | Q_y | R_delta; values: comma-separated)
    Sweep {
        param: String,
        values: String,
        config: PathBuf,
    },
    /// Compare run logs: the first is the baseline, every other log is
    /// reported as its percentage RMS change against it
    Compare { logs: Vec<PathBuf> },
    /// Fit the phase-plane stability boundary coefficients B1/B2 for the
    /// speed and road condition of a scenario config
    FitEnvelope { config: PathBuf },
    /// Print the adaptive parameter schedule over the full speed range
    PrintSchedule,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;

    match &cli.command {
        Command::Run { config } => cmd_run(&cli, config),
        Command::Sweep {
            param,
            values,
            config,
        } => cmd_sweep(&cli, param, values, config),
        Command::Compare { logs } => cmd_compare(&cli, logs),
        Command::FitEnvelope { config } => cmd_fit_envelope(&cli, config),
        Command::PrintSchedule => cmd_print_schedule(),
    }
}

fn load_config(cli: &Cli, path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg = ScenarioConfig::from_toml(&text)?;
    if let Some(name) = &cli.controller {
        cfg.controller = name.parse::<ControllerKind>()?;
    }
    Ok(cfg)
}

fn print_metrics(label: &str, m: &Metrics) {
    println!(
        "{label}: steps {}  X [{:.1}, {:.1}] m  RMS lateral {:.4} m  yaw rate {:.4} rad/s  \
         yaw-rate err {:.4} rad/s  beta {:.5} rad",
        m.steps, m.x_start, m.x_end, m.rms_lateral, m.rms_yaw_rate, m.rms_yaw_rate_err, m.rms_beta
    );
}

fn write_log(cli: &Cli, name: &str, log: &SimLog) -> Result<PathBuf> {
    let path = cli.out.join(format!("{name}.csv"));
    harness::save_csv(log, &path)?;
    Ok(path)
}

fn cmd_run(cli: &Cli, config: &Path) -> Result<()> {
    let cfg = load_config(cli, config)?;
    let log = coordctl::run_scenario(&cfg)?;
    let path = write_log(cli, &cfg.name, &log)?;
    println!("wrote {}", path.display());
    if let Some(reason) = &log.aborted {
        bail!("run aborted: {reason}");
    }
    print_metrics(&cfg.name, &compute_metrics(&log)?);
    Ok(())
}

fn cmd_sweep(cli: &Cli, param: &str, values: &str, config: &Path) -> Result<()> {
    let param: SweepParam = param.parse()?;
    let values: Vec<f64> = values
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .context("parsing sweep values")?;
    if values.iter().any(|v| !v.is_finite()) {
        bail!("sweep values must be finite");
    }
    let base = load_config(cli, config)?;
    let family = harness::sweep(param, &values, &base);

    let mut summary = String::from(
        "value,rms_lateral,rms_yaw_rate,rms_yaw_rate_err,rms_beta,first_rise_x,peak_yaw_rate\n",
    );
    let mut failures = Vec::new();
    for (value, outcome) in &family {
        match outcome {
            Ok(log) => {
                let name = format!("sweep_{}_{value}", param.label());
                write_log(cli, &name, log)?;
                if let Some(reason) = &log.aborted {
                    failures.push(format!("{}={value}: {reason}", param.label()));
                    continue;
                }
                let m = compute_metrics(log)?;
                let rise = harness::first_crossing_station(log, 0.9)
                    .map_or("".into(), |x| format!("{x:.6}"));
                summary += &format!(
                    "{value},{:.6e},{:.6e},{:.6e},{:.6e},{rise},{:.6e}\n",
                    m.rms_lateral,
                    m.rms_yaw_rate,
                    m.rms_yaw_rate_err,
                    m.rms_beta,
                    harness::peak_abs_yaw_rate(log)
                );
                print_metrics(&format!("{}={value}", param.label()), &m);
            }
            Err(e) => failures.push(format!("{}={value}: {e}", param.label())),
        }
    }
    let summary_path = cli.out.join(format!("sweep_{}_summary.csv", param.label()));
    std::fs::write(&summary_path, summary)?;
    println!("wrote {}", summary_path.display());
    if !failures.is_empty() {
        bail!("{} sweep value(s) failed:\n{}", failures.len(), failures.join("\n"));
    }
    Ok(())
}

fn cmd_compare(cli: &Cli, logs: &[PathBuf]) -> Result<()> {
    if logs.len() < 2 {
        bail!("compare needs a baseline log plus at least one candidate");
    }
    let metrics: Vec<(String, Metrics)> = logs
        .iter()
        .map(|p| {
            let log = harness::load_csv(p)?;
            let name = p
                .file_stem()
                .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into());
            Ok((name, compute_metrics(&log)?))
        })
        .collect::<Result<_>>()?;

    for (name, m) in &metrics {
        print_metrics(name, m);
    }
    let (base_name, base) = &metrics[0];
    println!();
    println!(
        "{:<28} {:>12} {:>12} {:>14} {:>10}",
        format!("vs {base_name} (% better)"),
        "lateral",
        "yaw rate",
        "yaw-rate err",
        "beta"
    );
    let mut csv = String::from("candidate,lateral_pct,yaw_rate_pct,yaw_rate_err_pct,beta_pct\n");
    for (name, m) in &metrics[1..] {
        let row = harness::compare(m, base)?;
        println!(
            "{name:<28} {:>12.2} {:>12.2} {:>14.2} {:>10.2}",
            row.lateral_pct, row.yaw_rate_pct, row.yaw_rate_err_pct, row.beta_pct
        );
        csv += &format!(
            "{name},{:.6},{:.6},{:.6},{:.6}\n",
            row.lateral_pct, row.yaw_rate_pct, row.yaw_rate_err_pct, row.beta_pct
        );
    }
    let path = cli.out.join("compare.csv");
    std::fs::write(&path, csv)?;
    println!("\nwrote {}", path.display());
    Ok(())
}

fn cmd_fit_envelope(cli: &Cli, config: &Path) -> Result<()> {
    let cfg = load_config(cli, config)?;
    // fit at the highest speed the profile reaches: the envelope is tightest
    // there
    let vx = match cfg.speed {
        SpeedProfile::Constant { v_kmh } => v_kmh,
        SpeedProfile::RampThenHold { v0_kmh, v1_kmh, .. } => v0_kmh.max(v1_kmh),
    } * KMH_TO_MS;
    let fit = fit_envelope(&cfg.vehicle, cfg.mu, vx)?;
    println!(
        "mu = {:.2}, vx = {:.2} m/s: beta limit {:.4} rad, beta-rate limit {:.4} rad/s",
        cfg.mu, vx, fit.beta_limit, fit.beta_dot_limit
    );
    println!("[dyc.envelope]\nb1 = {:.6}\nb2 = {:.6}", fit.b1, fit.b2);
    Ok(())
}

fn cmd_print_schedule() -> Result<()> {
    let table = ScheduleTable::default();
    table.validate()?;
    println!("{:>10} {:>6} {:>10} {:>10}", "vx (km/h)", "Np", "Q_y", "R_delta");
    let mut v = 0.0;
    while v <= 120.0 {
        let p = table.schedule_params(v * KMH_TO_MS);
        println!("{v:>10.0} {:>6} {:>10.2} {:>10.1}", p.np, p.q_y, p.r_delta);
        v += 4.0;
    }
    Ok(())
}
