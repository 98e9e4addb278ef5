//! Experiment plans: arms × periods × seeds, executed on a worker pool and
//! written out as CSV files.
//!
//! A plan file is TOML with a `[base]` run configuration and one `[[arms]]`
//! table per arm:
//!
//! ```toml
//! seeds = "0..29"
//! periods = [5.0, 10.0, 15.0]
//! target = "leafCopy+BDPC"
//!
//! [base]
//! duration_slotframes = 10000
//!
//! [[arms]]
//! name = "MSF-baseline"
//! sf_kind = "MSF"
//! flooding = "none"
//! ap_mode = "strict"
//! sf_max = 0.1
//! sf_min = 0.05
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::config::{ApMode, Flooding, RunConfig, SfKind};
use crate::engine::Simulator;
use crate::error::{Error, Result};
use crate::metrics::{self, RatioRow, RunReport, RunRow, SummaryRow};
use crate::sixp::LogEntry;
use crate::topology::NodeId;

pub const BENCHMARK_SEEDS: u64 = 30;
pub const BENCHMARK_PERIODS: [f64; 3] = [5.0, 10.0, 15.0];
pub const BDPC_ARM: &str = "leafCopy+BDPC";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arm {
    pub name: String,
    pub sf_kind: SfKind,
    pub flooding: Flooding,
    pub ap_mode: ApMode,
    pub sf_max: f64,
    pub sf_min: f64,
}

impl Arm {
    pub fn new(name: &str, sf_kind: SfKind, flooding: Flooding) -> Self {
        Arm {
            name: name.to_string(),
            sf_kind,
            flooding,
            ap_mode: ApMode::Strict,
            sf_max: 0.1,
            sf_min: 0.05,
        }
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        cfg.sf_kind = self.sf_kind;
        cfg.flooding = self.flooding;
        cfg.ap_mode = self.ap_mode;
        cfg.sf_max = self.sf_max;
        cfg.sf_min = self.sf_min;
    }
}

/// The six benchmark arms in reporting order.
pub fn benchmark_arms() -> Vec<Arm> {
    vec![
        Arm::new("MSF-baseline", SfKind::Msf, Flooding::None),
        Arm::new("leafCopy", SfKind::Msf, Flooding::LeafCopy),
        Arm::new("mid-flood", SfKind::Msf, Flooding::MidFlood),
        Arm::new("mid-flood-drop", SfKind::Msf, Flooding::MidFloodDrop),
        Arm::new("flood", SfKind::Msf, Flooding::Flood),
        Arm::new(BDPC_ARM, SfKind::Bdpc, Flooding::LeafCopy),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(deserialize_with = "de_seeds")]
    pub seeds: Vec<u64>,
    pub periods: Vec<f64>,
    /// Arm the ratio table is computed against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default)]
    pub base: RunConfig,
    pub arms: Vec<Arm>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self::benchmark()
    }
}

impl ExperimentPlan {
    /// 6 arms × 3 periods × 30 seeds on the default configuration.
    pub fn benchmark() -> Self {
        ExperimentPlan {
            seeds: (0..BENCHMARK_SEEDS).collect(),
            periods: BENCHMARK_PERIODS.to_vec(),
            target: Some(BDPC_ARM.to_string()),
            base: RunConfig::default(),
            arms: benchmark_arms(),
        }
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let plan: ExperimentPlan = toml::from_str(s).map_err(|e| Error::Plan(e.message().to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.arms.is_empty() {
            return Err(Error::Plan("no arms".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Plan("no seeds".into()));
        }
        if self.periods.is_empty() {
            return Err(Error::Plan("no periods".into()));
        }
        for (i, a) in self.arms.iter().enumerate() {
            if self.arms[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::Plan(format!("duplicate arm name `{}`", a.name)));
            }
        }
        if let Some(t) = &self.target {
            if !self.arms.iter().any(|a| &a.name == t) {
                return Err(Error::Plan(format!("target arm `{t}` is not in the plan")));
            }
        }
        for cfg in self.configs() {
            cfg.validate()?;
        }
        Ok(())
    }

    /// Keeps only the named arms, in plan order.
    pub fn select_arms(&mut self, names: &[String]) -> Result<()> {
        for n in names {
            if !self.arms.iter().any(|a| &a.name == n) {
                return Err(Error::Plan(format!("unknown arm `{n}`")));
            }
        }
        self.arms.retain(|a| names.contains(&a.name));
        if self.target.as_ref().is_some_and(|t| !names.contains(t)) {
            self.target = None;
        }
        Ok(())
    }

    /// Every run of the plan, sorted by arm, period and seed.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut periods = self.periods.clone();
        periods.sort_by(f64::total_cmp);
        periods.dedup();
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        let mut out = Vec::new();
        for (arm_index, arm) in self.arms.iter().enumerate() {
            for &p in &periods {
                for &seed in &seeds {
                    let mut config = self.base.clone();
                    arm.apply(&mut config);
                    config.pk_period_s = p;
                    config.seed = seed;
                    out.push(RunSpec {
                        arm_index,
                        arm: arm.name.clone(),
                        config,
                    });
                }
            }
        }
        out
    }

    fn configs(&self) -> impl Iterator<Item = RunConfig> + '_ {
        self.arms.iter().flat_map(move |a| {
            self.periods.iter().map(move |&p| {
                let mut c = self.base.clone();
                a.apply(&mut c);
                c.pk_period_s = p;
                c
            })
        })
    }
}

fn de_seeds<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<u64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Seeds {
        List(Vec<u64>),
        Spec(String),
    }
    match Seeds::deserialize(d)? {
        Seeds::List(v) => Ok(v),
        Seeds::Spec(s) => parse_seeds(&s).map_err(serde::de::Error::custom),
    }
}

/// Parses `a..b` (inclusive), `a..=b`, or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Plan(format!("bad seed list `{s}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        if let Some((a, b)) = part.split_once("..") {
            let b = b.strip_prefix('=').unwrap_or(b);
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    Ok(out)
}

pub fn parse_periods(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .ok_or_else(|| Error::Plan(format!("bad period `{p}`")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub arm_index: usize,
    pub arm: String,
    pub config: RunConfig,
}

impl RunSpec {
    /// File stem shared by this run's per-run outputs.
    pub fn stem(&self) -> String {
        let arm: String = self
            .arm
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || "+-_.".contains(c) {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        format!("{arm}_p{}_s{}", self.config.pk_period_s, self.config.seed)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub report: RunReport,
    pub sixp_log: Option<Vec<LogEntry>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExecOptions {
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub keep_sixp_log: bool,
}

pub fn execute_one(spec: &RunSpec, keep_sixp_log: bool) -> Result<RunOutcome> {
    let topo = spec.config.topology()?;
    let mut sim = Simulator::new(&spec.config, &topo)?;
    sim.run_to_end();
    let sixp_log = keep_sixp_log.then(|| sim.sixp_log().to_vec());
    Ok(RunOutcome {
        spec: spec.clone(),
        report: sim.finish(),
        sixp_log,
    })
}

/// Runs the whole plan. The result is in [`ExperimentPlan::runs`] order
/// whatever the number of workers.
pub fn execute(plan: &ExperimentPlan, opts: ExecOptions) -> Result<Vec<RunOutcome>> {
    plan.validate()?;
    let runs = plan.runs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Plan(format!("worker pool: {e}")))?;
    pool.install(|| runs.par_iter().map(|s| execute_one(s, opts.keep_sixp_log)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub node: NodeId,
    pub slots_tx: u64,
    pub slots_rx: u64,
    pub slots_idle: u64,
    pub slots_sleep: u64,
    #[serde(rename = "total_C")]
    pub total_c: f64,
    pub lifetime_years: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SixpRow {
    pub asn: u64,
    pub initiator: NodeId,
    pub peer: NodeId,
    pub cmd: String,
    pub count: u16,
    pub outcome: String,
}

/// What [`write_outputs`] produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Written {
    pub runs: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
    pub ratios: Vec<RatioRow>,
    pub files: Vec<PathBuf>,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_header_only(path: &Path, header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e))?;
    w.write_record(header).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `runs.csv`, `summary.csv`, `ratios.csv` and per-run files under
/// `delays/`, `energy/` and (when logged) `sixp/`.
pub fn write_outputs(dir: &Path, outcomes: &[RunOutcome], target: Option<&str>) -> Result<Written> {
    mkdir(dir)?;
    let mut files = Vec::new();

    let runs: Vec<RunRow> = outcomes.iter().map(|o| RunRow::new(&o.spec.arm, &o.report)).collect();
    let summary = metrics::aggregate(&runs);
    let ratios = target.map(|t| metrics::ratios(&summary, t)).unwrap_or_default();

    let path = dir.join("runs.csv");
    write_csv(&path, &runs)?;
    files.push(path);
    let path = dir.join("summary.csv");
    write_csv(&path, &summary)?;
    files.push(path);
    let path = dir.join("ratios.csv");
    if ratios.is_empty() {
        write_header_only(&path, &["comparison", "lifetime", "on_time"])?;
    } else {
        write_csv(&path, &ratios)?;
    }
    files.push(path);

    let delays = dir.join("delays");
    let energy = dir.join("energy");
    mkdir(&delays)?;
    mkdir(&energy)?;
    let with_log = outcomes.iter().any(|o| o.sixp_log.is_some());
    let sixp = dir.join("sixp");
    if with_log {
        mkdir(&sixp)?;
    }

    for o in outcomes {
        let stem = o.spec.stem();

        let path = delays.join(format!("{stem}.txt"));
        let mut text = String::with_capacity(o.report.delay_samples_ms.len() * 5);
        for d in &o.report.delay_samples_ms {
            text.push_str(&d.to_string());
            text.push('\n');
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        files.push(path);

        let path = energy.join(format!("{stem}.csv"));
        let rows: Vec<EnergyRow> = o
            .report
            .nodes
            .iter()
            .map(|n| EnergyRow {
                node: n.node,
                slots_tx: n.slots_tx,
                slots_rx: n.slots_rx,
                slots_idle: n.slots_idle,
                slots_sleep: n.slots_sleep,
                total_c: n.total_c,
                lifetime_years: n.lifetime_years,
            })
            .collect();
        write_csv(&path, &rows)?;
        files.push(path);

        if let Some(log) = &o.sixp_log {
            let path = sixp.join(format!("{stem}.csv"));
            let rows: Vec<SixpRow> = log
                .iter()
                .map(|e| SixpRow {
                    asn: e.asn,
                    initiator: e.initiator,
                    peer: e.peer,
                    cmd: e.cmd.clone(),
                    count: e.count,
                    outcome: serde_json::to_value(e.outcome)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                })
                .collect();
            if rows.is_empty() {
                write_header_only(&path, &["asn", "initiator", "peer", "cmd", "count", "outcome"])?;
            } else {
                write_csv(&path, &rows)?;
            }
            files.push(path);
        }
    }

    Ok(Written {
        runs,
        summary,
        ratios,
        files,
    })
}
