//! Run the shipped comparative experiments and print the percentage RMS
//! changes between controller stacks (positive = the first-named run
//! improved on the second).
//!
//! ```text
//! cargo run --release --example trends
//! ```

use coordctl::harness::{compare, compute_metrics, run_scenario, ScenarioConfig};

fn load(name: &str) -> ScenarioConfig {
    let path = format!("{}/../../configs/{name}.toml", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).expect("config file");
    ScenarioConfig::from_toml(&text).expect("config parse")
}

fn report(label: &str, candidate: &str, baseline: &str) {
    let run = |name: &str| {
        let log = run_scenario(&load(name)).expect("scenario");
        if let Some(reason) = &log.aborted {
            println!("  {name} ABORTED: {reason}");
        }
        let dyc_steps = log.records.iter().filter(|r| r.dyc_active).count();
        (compute_metrics(&log).unwrap(), dyc_steps)
    };
    let (m_base, _) = run(baseline);
    let (m_cand, dyc_steps) = run(candidate);
    let row = compare(&m_cand, &m_base).unwrap();
    println!(
        "{label}: lateral {:+.2}%  yaw {:+.2}%  yaw-err {:+.2}%  beta {:+.2}%   \
         (RMS lateral {:.3} vs {:.3} m, DYC active {dyc_steps} steps)",
        row.lateral_pct,
        row.yaw_rate_pct,
        row.yaw_rate_err_pct,
        row.beta_pct,
        m_cand.rms_lateral,
        m_base.rms_lateral,
    );
}

fn main() {
    report("18 km/h  adaptive vs fixed", "dlc_18kmh_ampc", "dlc_18kmh_ltv");
    report("62 km/h  adaptive vs fixed", "dlc_62kmh_ampc", "dlc_62kmh_ltv");
    report("5-65 km/h  +DYC vs adaptive", "dlc_ramp_ampc_dyc", "dlc_ramp_ampc");
    report("72 km/h  +DYC vs adaptive", "dlc_72kmh_ampc_dyc", "dlc_72kmh_ampc");
}
