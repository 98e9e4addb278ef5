//! Acceptance suite: the desk-scale sweep (6 arms x 3 periods x 5 seeds at
//! full run length) plus the behavioral checks. Prints one line per
//! criterion and exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use sixsim::experiment::{self, ExecOptions, ExperimentPlan, RunOutcome, BDPC_ARM};
use sixsim::metrics::{self, fraction_within, RunRow, SummaryRow};
use sixsim::{Flooding, RunConfig, SfKind};

const DESK_SEEDS: u64 = 5;

struct Sweep {
    outcomes: Vec<RunOutcome>,
    summary: Vec<SummaryRow>,
}

impl Sweep {
    fn pooled(&self, arm: &str) -> &SummaryRow {
        self.summary
            .iter()
            .find(|s| s.arm == arm && s.pk_period.is_none())
            .expect("arm in sweep")
    }

    fn at(&self, arm: &str, period: f64) -> &SummaryRow {
        self.summary
            .iter()
            .find(|s| s.arm == arm && s.pk_period == Some(period))
            .expect("period in sweep")
    }

    fn on_time(&self, arm: &str) -> f64 {
        self.pooled(arm).on_time.unwrap_or(0.0)
    }

    fn lifetime(&self, arm: &str) -> f64 {
        self.pooled(arm).lifetime_years.unwrap_or(0.0)
    }
}

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn deadline_guarantee(s: &Sweep) -> Check {
    let mean = s.on_time(BDPC_ARM);
    let mut parts = vec![format!("mean on-time {mean:.4}")];
    let mut ok = mean >= 0.88;
    for p in experiment::BENCHMARK_PERIODS {
        let samples: Vec<u64> = s
            .outcomes
            .iter()
            .filter(|o| o.spec.arm == BDPC_ARM && o.spec.config.pk_period_s == p)
            .flat_map(|o| o.report.delay_samples_ms.iter().copied())
            .collect();
        let f = fraction_within(&samples, 1500.0).unwrap_or(0.0);
        ok &= f >= 0.88;
        parts.push(format!("ECDF(1500ms) p{p} {f:.4}"));
    }
    let line = parts.join(", ");
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

const ON_TIME_ORDER: [&str; 6] = [
    BDPC_ARM,
    "flood",
    "mid-flood",
    "mid-flood-drop",
    "leafCopy",
    "MSF-baseline",
];

fn on_time_order(s: &Sweep) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for w in ON_TIME_ORDER.windows(2) {
        let gap = s.on_time(w[0]) - s.on_time(w[1]);
        ok &= gap >= 0.02;
        parts.push(format!(
            "{} {:.4} > {} {:.4} (gap {gap:.4})",
            w[0],
            s.on_time(w[0]),
            w[1],
            s.on_time(w[1])
        ));
    }
    let line = parts.join("; ");
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

fn improvement_ratios(s: &Sweep) -> Check {
    let vs_msf = s.on_time(BDPC_ARM) / s.on_time("MSF-baseline");
    let vs_flood = s.on_time(BDPC_ARM) / s.on_time("flood");
    let line = format!("on-time vs MSF {vs_msf:.4} in [1.6, 2.5], vs flood {vs_flood:.4} in [1.05, 1.4]");
    if (1.6..=2.5).contains(&vs_msf) && (1.05..=1.4).contains(&vs_flood) {
        Ok(line)
    } else {
        Err(line)
    }
}

fn lifetime_order(s: &Sweep) -> Check {
    let order = ["MSF-baseline", "leafCopy", BDPC_ARM, "flood"];
    let ok_order = order.windows(2).all(|w| s.lifetime(w[0]) > s.lifetime(w[1]));
    let ratio = s.lifetime(BDPC_ARM) / s.lifetime("flood");
    let listed: Vec<String> = order.iter().map(|a| format!("{a} {:.4}", s.lifetime(a))).collect();
    let line = format!("{}; BDPC/flood {ratio:.4} in [1.2, 1.9]", listed.join(" > "));
    if ok_order && (1.2..=1.9).contains(&ratio) {
        Ok(line)
    } else {
        Err(line)
    }
}

fn reliability_floor(s: &Sweep) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for arm in ON_TIME_ORDER {
        let pdr = s.pooled(arm).pdr_e2e.unwrap_or(0.0);
        let floor = if arm == "MSF-baseline" { 0.98 } else { 0.95 };
        ok &= pdr >= floor;
        parts.push(format!("{arm} {pdr:.4}"));
    }
    let line = format!("PDR {}", parts.join(", "));
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

fn intensity_trend(s: &Sweep) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for arm in ["MSF-baseline", "flood"] {
        let (a, b) = (
            s.at(arm, 5.0).on_time.unwrap_or(0.0),
            s.at(arm, 15.0).on_time.unwrap_or(0.0),
        );
        ok &= a >= b;
        parts.push(format!("{arm} p5 {a:.4} >= p15 {b:.4}"));
    }
    for p in experiment::BENCHMARK_PERIODS {
        let v = s.at(BDPC_ARM, p).on_time.unwrap_or(0.0);
        ok &= v >= 0.88;
        parts.push(format!("BDPC p{p} {v:.4}"));
    }
    let line = parts.join("; ");
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

/// Reruns two sweep members from scratch and compares their CSV rows and
/// delay files with the sweep's, then checks whole output directories.
fn determinism(s: &Sweep) -> Check {
    for pick in [0, s.outcomes.len() - 1] {
        let o = &s.outcomes[pick];
        let again = experiment::execute_one(&o.spec, false).map_err(|e| e.to_string())?;
        let row = |o: &RunOutcome| {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.serialize(RunRow::new(&o.spec.arm, &o.report)).unwrap();
            w.into_inner().unwrap()
        };
        if row(o) != row(&again) || o.report.delay_samples_ms != again.report.delay_samples_ms {
            return Err(format!("{} differs on rerun", o.spec.stem()));
        }
    }
    common::csv_determinism(500).map(|d| format!("full-length reruns match; {d}"))
}

fn conservation(s: &Sweep) -> Check {
    for o in &s.outcomes {
        let r = &o.report;
        if r.n_tx != r.n_rx + r.losses.total() || !(r.n_delayed <= r.n_rx && r.n_rx <= r.n_tx) {
            return Err(format!(
                "{}: n_tx {} n_rx {} losses {:?}",
                o.spec.stem(),
                r.n_tx,
                r.n_rx,
                r.losses
            ));
        }
    }
    let cfg = RunConfig {
        sf_kind: SfKind::Bdpc,
        flooding: Flooding::LeafCopy,
        ..Default::default()
    };
    common::ledger_conservation(&cfg).map(|d| format!("all {} sweep runs balance; ledger: {d}", s.outcomes.len()))
}

fn main() -> ExitCode {
    let mut plan = ExperimentPlan::benchmark();
    plan.seeds = (0..DESK_SEEDS).collect();
    let runs = plan.runs().len();
    eprintln!(
        "acceptance: desk sweep of {runs} runs, {} slotframes each",
        plan.base.duration_slotframes
    );
    let start = Instant::now();
    let outcomes = experiment::execute(&plan, ExecOptions::default()).expect("sweep runs");
    let rows: Vec<RunRow> = outcomes.iter().map(|o| RunRow::new(&o.spec.arm, &o.report)).collect();
    let sweep = Sweep {
        summary: metrics::aggregate(&rows),
        outcomes,
    };
    eprintln!("acceptance: sweep done in {:.1}s", start.elapsed().as_secs_f64());

    let checks: Vec<Criterion> = vec![
        ("BDPC deadline guarantee", Box::new(|| deadline_guarantee(&sweep))),
        ("on-time ordering", Box::new(|| on_time_order(&sweep))),
        ("improvement ratios", Box::new(|| improvement_ratios(&sweep))),
        ("lifetime ordering", Box::new(|| lifetime_order(&sweep))),
        ("reliability floor", Box::new(|| reliability_floor(&sweep))),
        ("traffic-intensity trend", Box::new(|| intensity_trend(&sweep))),
        ("MAC selection truth table", Box::new(common::mac_selection_truth_table)),
        ("MSF unit behavior", Box::new(common::msf_unit_behavior)),
        (
            "BDPC unit behavior",
            Box::new(|| {
                let a = common::bdpc_scripted_streams()?;
                let b = common::bdpc_engine_direction(1500)?;
                Ok(format!("{a}; {b}"))
            }),
        ),
        ("AP mode nesting", Box::new(|| common::ap_mode_nesting(1000))),
        ("flood dedup oracle", Box::new(|| common::flood_dedup_oracle(2000))),
        ("determinism", Box::new(|| determinism(&sweep))),
        ("conservation", Box::new(|| conservation(&sweep))),
        (
            "energy monotonicity",
            Box::new(|| {
                let a = common::extra_rx_cell_energy(2000, Flooding::None)?;
                let b = common::extra_rx_cell_energy(2000, Flooding::Flood)?;
                Ok(format!("{a}; {b}"))
            }),
        ),
    ];

    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        match check() {
            Ok(d) => println!("criterion {:>2} PASS {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {d}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria pass",
        checks.len() - failed,
        checks.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
