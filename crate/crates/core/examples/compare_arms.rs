//! Short comparison of the six benchmark arms at one packet period.
//!
//! `cargo run --release --example compare_arms -- [frames] [seeds]`

use sixsim::experiment::{self, ExecOptions, ExperimentPlan};
use sixsim::metrics;

fn main() -> sixsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let frames: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(2000);
    let seeds: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(3);

    let mut plan = ExperimentPlan::benchmark();
    plan.base.duration_slotframes = frames;
    plan.seeds = (0..seeds).collect();
    plan.periods = vec![5.0];

    let outcomes = experiment::execute(&plan, ExecOptions::default())?;
    let rows: Vec<_> = outcomes
        .iter()
        .map(|o| metrics::RunRow::new(&o.spec.arm, &o.report))
        .collect();
    for s in metrics::aggregate(&rows).iter().filter(|s| s.pk_period.is_none()) {
        println!(
            "{:<16} pdr {:.3}  on-time {:.3}  lifetime {:.3} y",
            s.arm,
            s.pdr_e2e.unwrap_or(f64::NAN),
            s.on_time.unwrap_or(f64::NAN),
            s.lifetime_years.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
