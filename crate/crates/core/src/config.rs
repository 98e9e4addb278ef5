//! Run configuration. Defaults reproduce the benchmark setup (101-slot frames,
//! 10 ms slots, 16 channels, 75% link PDR, 1.5 s deadline, ...).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::ChargeTable;
use crate::error::{Error, Result};
use crate::topology::{LinkQuality, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SfKind {
    #[serde(rename = "MSF", alias = "msf")]
    Msf,
    /// MSF upward plus BDPC parent-to-child management.
    #[serde(rename = "BDPC", alias = "bdpc")]
    Bdpc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flooding {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "leafCopy", alias = "leaf-copy")]
    LeafCopy,
    #[serde(rename = "midFlood", alias = "mid-flood")]
    MidFlood,
    #[serde(rename = "midFloodDrop", alias = "mid-flood-drop")]
    MidFloodDrop,
    #[serde(rename = "flood")]
    Flood,
}

impl Flooding {
    /// Whether the strategy sends labeled copies over an alternate parent.
    pub fn uses_alternate_parent(self) -> bool {
        !matches!(self, Flooding::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApMode {
    Strict,
    Medium,
    Soft,
}

/// How a parent decides that a packet arriving from a child is late.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetRule {
    /// Elapsed time since creation exceeds the application deadline.
    #[serde(alias = "end-to-end")]
    EndToEnd,
    /// The deadline is split in proportion to the rank distance already covered.
    Proportional,
}

macro_rules! impl_from_str_via_serde {
    ($($t:ty),*) => {$(
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                <$t>::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s))
                    .map_err(|e| Error::config(e.to_string()))
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
                f.write_str(v.as_str().ok_or(fmt::Error)?)
            }
        }
    )*};
}

impl_from_str_via_serde!(SfKind, Flooding, ApMode, BudgetRule);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    // network
    pub groups: usize,
    pub group_size: usize,
    pub pdr_link: f64,
    pub rssi_dbm: f64,

    // TSCH
    pub slotframe_length: u16,
    pub timeslot_ms: u32,
    pub channels: u16,
    pub queue_size: usize,
    pub max_retries: u8,

    // run
    pub duration_slotframes: u64,
    pub warmup_slotframes: u64,

    // application
    pub pk_period_s: f64,
    pub pk_variance: f64,
    pub pk_size_bytes: u32,
    pub max_delay_s: f64,

    // protocols
    pub sf_kind: SfKind,
    pub flooding: Flooding,
    pub ap_mode: ApMode,
    pub sf_max: f64,
    pub sf_min: f64,
    pub prehop_add_cells: u16,
    pub budget_rule: BudgetRule,

    // RPL
    pub rank_min: u32,
    pub rank_step: u32,
    pub dio_period_slotframes: u64,
    pub dio_jitter_slotframes: u64,
    pub neighbor_staleness_slotframes: u64,

    // 6P / scheduling functions
    pub sixp_timeout_slotframes: u64,
    pub bdpc_window: usize,
    pub bdpc_min_verdicts: usize,
    pub flow_window: usize,

    pub charges: ChargeTable,

    /// Slot offsets that no 6P transaction may allocate.
    pub reserved_slots: Vec<u16>,
    /// `(node, slot_offset)` pairs holding a permanent listen-only cell.
    pub static_listen: Vec<(u16, u16)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            groups: 5,
            group_size: 4,
            pdr_link: 0.75,
            rssi_dbm: -91.0,
            slotframe_length: 101,
            timeslot_ms: 10,
            channels: 16,
            queue_size: 10,
            max_retries: 5,
            duration_slotframes: 10_000,
            warmup_slotframes: 30,
            pk_period_s: 5.0,
            pk_variance: 0.05,
            pk_size_bytes: 90,
            max_delay_s: 1.5,
            sf_kind: SfKind::Msf,
            flooding: Flooding::None,
            ap_mode: ApMode::Strict,
            sf_max: 0.1,
            sf_min: 0.05,
            prehop_add_cells: 1,
            budget_rule: BudgetRule::EndToEnd,
            rank_min: 256,
            rank_step: 256,
            dio_period_slotframes: 4,
            dio_jitter_slotframes: 1,
            neighbor_staleness_slotframes: 512,
            sixp_timeout_slotframes: 2,
            bdpc_window: 100,
            bdpc_min_verdicts: 10,
            flow_window: 64,
            charges: ChargeTable::default(),
            reserved_slots: Vec::new(),
            static_listen: Vec::new(),
        }
    }
}

impl RunConfig {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.sf_min < self.sf_max) {
            return fail(format!("sf_min ({}) must be < sf_max ({})", self.sf_min, self.sf_max));
        }
        if !(self.pdr_link > 0.0 && self.pdr_link <= 1.0) {
            return fail(format!("pdr_link ({}) must satisfy 0 < pdr_link <= 1", self.pdr_link));
        }
        if self.rssi_dbm > 0.0 {
            return fail(format!("rssi_dbm ({}) must be <= 0", self.rssi_dbm));
        }
        if self.queue_size < 1 {
            return fail("queue_size must be >= 1".into());
        }
        if self.duration_slotframes < 1 {
            return fail("duration_slotframes must be >= 1".into());
        }
        if self.groups < 1 || self.group_size < 1 {
            return fail("groups and group_size must be >= 1".into());
        }
        if self.slotframe_length < 2 {
            return fail("slotframe_length must be >= 2 (slot 0 is the minimal cell)".into());
        }
        if self.channels < 1 || self.timeslot_ms < 1 {
            return fail("channels and timeslot_ms must be >= 1".into());
        }
        if !(self.pk_period_s > 0.0) {
            return fail(format!("pk_period_s ({}) must be > 0", self.pk_period_s));
        }
        if !(0.0..1.0).contains(&self.pk_variance) {
            return fail(format!("pk_variance ({}) must be in [0, 1)", self.pk_variance));
        }
        if !(self.max_delay_s > 0.0) {
            return fail("max_delay_s must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.sf_min) || !(0.0..=1.0).contains(&self.sf_max) {
            return fail("sf_min and sf_max must be fractions".into());
        }
        if self.rank_step == 0 || self.rank_min == 0 {
            return fail("rank_min and rank_step must be > 0".into());
        }
        if self.dio_period_slotframes == 0 || self.dio_jitter_slotframes >= self.dio_period_slotframes {
            return fail("dio_period_slotframes must exceed dio_jitter_slotframes".into());
        }
        if self.sixp_timeout_slotframes == 0 {
            return fail("sixp_timeout_slotframes must be >= 1".into());
        }
        if self.bdpc_window == 0 || self.bdpc_min_verdicts == 0 || self.bdpc_min_verdicts > self.bdpc_window {
            return fail("need 0 < bdpc_min_verdicts <= bdpc_window".into());
        }
        if self.flow_window == 0 {
            return fail("flow_window must be >= 1".into());
        }
        if self.prehop_add_cells == 0 {
            return fail("prehop_add_cells must be >= 1".into());
        }
        self.charges.validate()?;
        for &s in self
            .reserved_slots
            .iter()
            .chain(self.static_listen.iter().map(|(_, s)| s))
        {
            if s == 0 || s >= self.slotframe_length {
                return fail(format!("slot offset {s} outside 1..{}", self.slotframe_length));
            }
        }
        for &(n, s) in &self.static_listen {
            if n as usize > self.groups * self.group_size {
                return fail(format!("static_listen node {n} does not exist"));
            }
            if !self.reserved_slots.contains(&s) {
                return fail(format!("static_listen slot {s} must also be reserved"));
            }
        }
        Ok(())
    }

    pub fn link_quality(&self) -> Result<LinkQuality> {
        LinkQuality::new(self.pdr_link, self.rssi_dbm)
    }

    /// The grouped benchmark topology described by this configuration.
    pub fn topology(&self) -> Result<Topology> {
        Ok(Topology::grouped(self.groups, self.group_size, self.link_quality()?))
    }

    pub fn total_slots(&self) -> u64 {
        self.duration_slotframes * self.slotframe_length as u64
    }

    pub fn slotframe_ms(&self) -> u64 {
        self.slotframe_length as u64 * self.timeslot_ms as u64
    }

    pub fn duration_s(&self) -> f64 {
        self.total_slots() as f64 * self.timeslot_ms as f64 / 1000.0
    }

    pub fn max_delay_ms(&self) -> f64 {
        self.max_delay_s * 1000.0
    }

    /// Parses and validates a TOML table of run keys; missing keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies a single `key = value` override. Values use TOML syntax, but bare
    /// words are accepted for strings (`flooding = leafCopy`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table = match toml::Value::try_from(&*self).map_err(|e| Error::config(e.to_string()))? {
            toml::Value::Table(t) => t,
            _ => unreachable!("RunConfig serializes to a table"),
        };
        if !table.contains_key(key) {
            return Err(Error::config(format!("unknown key `{key}`")));
        }
        let parsed = parse_value(value);
        table.insert(key.to_string(), parsed);
        *self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(format!("{key}: {}", e.message())))?;
        Ok(())
    }

    /// Applies overrides from environment variables named `<prefix><KEY>` (key upper-cased).
    pub fn apply_env(&mut self, prefix: &str) -> Result<()> {
        self.apply_overrides(
            std::env::vars().filter_map(|(k, v)| k.strip_prefix(prefix).map(|key| (key.to_ascii_lowercase(), v))),
        )
    }

    pub fn apply_overrides<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        let mut vars: Vec<_> = vars.into_iter().collect();
        vars.sort();
        for (k, v) in vars {
            self.set(&k, &v)?;
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_benchmark_setup() {
        let c = RunConfig::default();
        assert_eq!(c.slotframe_length, 101);
        assert_eq!(c.timeslot_ms, 10);
        assert_eq!(c.channels, 16);
        assert_eq!(c.queue_size, 10);
        assert_eq!(c.max_retries, 5);
        assert_eq!(c.duration_slotframes, 10_000);
        assert_eq!(c.pdr_link, 0.75);
        assert_eq!(c.rssi_dbm, -91.0);
        assert_eq!(c.max_delay_s, 1.5);
        assert_eq!((c.sf_max, c.sf_min, c.prehop_add_cells), (0.1, 0.05, 1));
        assert_eq!(c.pk_size_bytes, 90);
        c.validate().unwrap();
    }

    #[test]
    fn full_run_is_about_2_8_hours() {
        let c = RunConfig::default();
        assert_eq!(c.duration_s(), 10_100.0);
        assert!((c.duration_s() / 3600.0 - 2.8).abs() < 0.01);
    }

    #[test]
    fn validation_names_the_broken_invariant() {
        let c = RunConfig {
            sf_min: 0.2,
            sf_max: 0.1,
            ..Default::default()
        };
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("sf_min"), "{msg}");

        let c = RunConfig {
            pdr_link: 0.0,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("pdr_link"));
        let c = RunConfig {
            queue_size: 0,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("queue_size"));
        let c = RunConfig {
            duration_slotframes: 0,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("duration_slotframes"));
    }

    #[test]
    fn set_parses_typed_values() {
        let mut c = RunConfig::default();
        c.set("flooding", "leafCopy").unwrap();
        c.set("sf_kind", "\"BDPC\"").unwrap();
        c.set("pdr_link", "0.9").unwrap();
        c.set("duration_slotframes", "12").unwrap();
        assert_eq!(c.flooding, Flooding::LeafCopy);
        assert_eq!(c.sf_kind, SfKind::Bdpc);
        assert_eq!(c.pdr_link, 0.9);
        assert_eq!(c.duration_slotframes, 12);
        assert!(c.set("no_such_key", "1").is_err());
        assert!(c.set("queue_size", "many").is_err());
    }

    #[test]
    fn enums_round_trip_through_strings() {
        for f in [
            Flooding::None,
            Flooding::LeafCopy,
            Flooding::MidFlood,
            Flooding::MidFloodDrop,
            Flooding::Flood,
        ] {
            assert_eq!(f.to_string().parse::<Flooding>().unwrap(), f);
        }
        assert_eq!("mid-flood-drop".parse::<Flooding>().unwrap(), Flooding::MidFloodDrop);
        assert_eq!("BDPC".parse::<SfKind>().unwrap(), SfKind::Bdpc);
        assert_eq!("soft".parse::<ApMode>().unwrap(), ApMode::Soft);
        assert_eq!("proportional".parse::<BudgetRule>().unwrap(), BudgetRule::Proportional);
    }

    #[test]
    fn env_overrides_use_prefix() {
        let mut c = RunConfig::default();
        c.apply_overrides(vec![("pk_period_s".to_string(), "15".to_string())])
            .unwrap();
        assert_eq!(c.pk_period_s, 15.0);
    }
}
