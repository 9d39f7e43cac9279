//! Engine configuration and named policy profiles, loaded from TOML.
//!
//! ```toml
//! instance = "tradfi"
//! fee_collector = "operator"
//!
//! [permissions]
//! kill = ["Regulator"]
//!
//! [profiles.strict]
//! occasional_threshold = "10000"
//! wire_threshold = "500"
//! per_tx_limit = "250000"
//! ```
//!
//! Threshold and limit figures are whole units of the token the profile
//! is applied to; they are quantized at that token's scale.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{quantize, AccountId, PartyRole};
use crate::policy::{PermissionTable, PolicySet, TradingRestrictions, TransferMode, WindowLimit, ACTIONS};

pub const DAY_SECONDS: u64 = 86_400;

fn default_divisor() -> u32 {
    2
}

fn default_factor() -> u32 {
    10
}

fn default_window() -> u32 {
    5
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyProfile {
    pub occasional_threshold: String,
    pub wire_threshold: String,
    #[serde(default)]
    pub inclusive_thresholds: bool,
    pub per_tx_limit: Option<String>,
    pub window_limit: Option<String>,
    pub window_days: Option<u64>,
    #[serde(default = "default_divisor")]
    pub risk_threshold_divisor: u32,
    #[serde(default = "default_factor")]
    pub deviation_factor: u32,
    #[serde(default = "default_window")]
    pub deviation_window: u32,
    #[serde(default)]
    pub require_documents: bool,
}

impl PolicyProfile {
    /// Occasional 15,000 and wire 1,000, alerting strictly above.
    pub fn fatf() -> Self {
        PolicyProfile {
            occasional_threshold: "15000".into(),
            wire_threshold: "1000".into(),
            inclusive_thresholds: false,
            per_tx_limit: None,
            window_limit: None,
            window_days: None,
            risk_threshold_divisor: default_divisor(),
            deviation_factor: default_factor(),
            deviation_window: default_window(),
            require_documents: false,
        }
    }

    /// 10,000 per counterparty per 30 days; transactions that reach 5,000
    /// are flagged.
    pub fn finma() -> Self {
        PolicyProfile {
            occasional_threshold: "5000".into(),
            wire_threshold: "1000".into(),
            inclusive_thresholds: true,
            window_limit: Some("10000".into()),
            window_days: Some(30),
            ..PolicyProfile::fatf()
        }
    }

    /// Materializes the profile at a token scale.
    pub fn policy(&self, decimals: u8, permissions: &PermissionTable) -> Result<PolicySet> {
        let window = match (&self.window_limit, self.window_days) {
            (Some(limit), Some(days)) => Some(WindowLimit {
                limit: quantize(limit, decimals)?,
                window_seconds: days.checked_mul(DAY_SECONDS).ok_or(Error::Overflow)?,
            }),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "window_limit and window_days must be given together".into(),
                ))
            }
        };
        let policy = PolicySet {
            transfer_mode: TransferMode::Free,
            role_permissions: permissions.clone(),
            per_tx_limit: self
                .per_tx_limit
                .as_deref()
                .map(|l| quantize(l, decimals))
                .transpose()?,
            counterparty_window_limit: window,
            monitoring_threshold_occasional: quantize(&self.occasional_threshold, decimals)?,
            monitoring_threshold_wire: quantize(&self.wire_threshold, decimals)?,
            inclusive_thresholds: self.inclusive_thresholds,
            risk_threshold_divisor: self.risk_threshold_divisor,
            deviation_factor: self.deviation_factor,
            deviation_window: self.deviation_window,
            trading_paused: false,
            trading_restrictions: TradingRestrictions::default(),
            recovery_accounts: BTreeSet::new(),
            require_documents: self.require_documents,
        };
        policy.validate(decimals)?;
        Ok(policy)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    instance: Option<String>,
    fee_collector: Option<AccountId>,
    #[serde(default)]
    permissions: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    profiles: BTreeMap<String, PolicyProfile>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    pub instance: String,
    /// Receives relayer fees; defaults to the token issuer when unset.
    pub fee_collector: Option<AccountId>,
    pub permissions: PermissionTable,
    pub profiles: BTreeMap<String, PolicyProfile>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            instance: "ledger".into(),
            fee_collector: None,
            permissions: PermissionTable::default(),
            profiles: BTreeMap::from([
                ("default".to_string(), PolicyProfile::fatf()),
                ("fatf".to_string(), PolicyProfile::fatf()),
                ("finma".to_string(), PolicyProfile::finma()),
            ]),
        }
    }
}

impl EngineConfig {
    /// Parses TOML; built-in profiles stay available unless overridden by
    /// name, and listed permissions replace the default grant for that
    /// action.
    pub fn from_toml(text: &str) -> Result<EngineConfig> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut config = EngineConfig::default();
        if let Some(instance) = raw.instance {
            if instance.is_empty() {
                return Err(Error::Config("instance must be non-empty".into()));
            }
            config.instance = instance;
        }
        config.fee_collector = raw.fee_collector;
        for (action, roles) in raw.permissions {
            if !ACTIONS.contains(&action.as_str()) {
                return Err(Error::Config(format!("unknown action `{action}`")));
            }
            let roles = roles
                .iter()
                .map(|r| r.parse::<PartyRole>())
                .collect::<Result<BTreeSet<_>>>()?;
            config.permissions.set(&action, roles);
        }
        for (name, profile) in raw.profiles {
            // validated at a nominal scale so bad numerals surface at load time
            profile.policy(18, &config.permissions)?;
            config.profiles.insert(name, profile);
        }
        Ok(config)
    }

    pub fn profile(&self, name: &str) -> Result<&PolicyProfile> {
        self.profiles
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown policy profile `{name}`")))
    }

    pub fn policy(&self, profile: &str, decimals: u8) -> Result<PolicySet> {
        self.profile(profile)?.policy(decimals, &self.permissions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Amount;

    #[test]
    fn default_profile_matches_permissive_policy() {
        let config = EngineConfig::default();
        assert_eq!(config.policy("default", 2).unwrap(), PolicySet::permissive(2).unwrap());
    }

    #[test]
    fn finma_profile_values() {
        let p = EngineConfig::default().policy("finma", 2).unwrap();
        let w = p.counterparty_window_limit.unwrap();
        assert_eq!(w.limit, Amount::new(1_000_000, 2).unwrap());
        assert_eq!(w.window_seconds, 2_592_000);
        assert_eq!(p.monitoring_threshold_occasional, Amount::new(500_000, 2).unwrap());
        assert!(p.inclusive_thresholds);
    }

    #[test]
    fn toml_overrides() {
        let config = EngineConfig::from_toml(
            r#"
instance = "defi"
fee_collector = "ops"

[permissions]
kill = ["regulator", "Operator"]

[profiles.strict]
occasional_threshold = "100"
wire_threshold = "10.5"
per_tx_limit = "50"
"#,
        )
        .unwrap();
        assert_eq!(config.instance, "defi");
        assert_eq!(
            config.permissions.roles_for("kill").unwrap(),
            &BTreeSet::from([PartyRole::Regulator, PartyRole::Operator])
        );
        let p = config.policy("strict", 1).unwrap();
        assert_eq!(p.monitoring_threshold_wire, Amount::new(105, 1).unwrap());
        assert!(config.policy("fatf", 0).is_ok());
        assert!(config.policy("strict", 0).is_err());
    }

    #[test]
    fn bad_config_rejected() {
        for text in [
            "bogus = 1",
            "[permissions]\nteleport = [\"Regulator\"]",
            "[permissions]\nkill = [\"Wizard\"]",
            "[profiles.x]\noccasional_threshold = \"1\"",
            "[profiles.x]\noccasional_threshold = \"1\"\nwire_threshold = \"1\"\nwindow_days = 3",
            "instance = \"\"",
        ] {
            assert!(EngineConfig::from_toml(text).is_err(), "{text}");
        }
    }
}
