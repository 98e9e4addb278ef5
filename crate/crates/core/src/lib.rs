//! Slot-level simulator of a multi-hop 6TiSCH network.
//!
//! Nodes run TSCH with 6P-negotiated cells, RPL with preferred and alternate
//! parents, a demand-driven scheduling function (MSF) and optionally a
//! deadline-driven one (BDPC). Packets can be replicated over label-switched
//! paths stamped at the source and are de-duplicated at the root.
//!
//! ```no_run
//! use sixsim::{RunConfig, engine};
//!
//! let cfg = RunConfig { duration_slotframes: 500, ..Default::default() };
//! let report = engine::run(&cfg, &cfg.topology().unwrap()).unwrap();
//! println!("pdr {:?} on-time {:?}", report.pdr_e2e(), report.on_time());
//! ```

pub mod bdpc;
pub mod config;
pub mod dataplane;
pub mod energy;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod msf;
pub mod rng;
pub mod rpl;
pub mod sixp;
pub mod topology;
pub mod tsch;

pub use config::{ApMode, BudgetRule, Flooding, RunConfig, SfKind};
pub use engine::{run, Simulator};
pub use error::{Error, Result};
pub use metrics::RunReport;
pub use topology::{LinkQuality, NodeId, Topology};
