//! KYC registry, identity-change detection and blacklist management.
//!
//! Profiles are held only as digests. The registry is mutated exclusively
//! by applying ledger events; the `check_*` methods validate a command
//! before its event is sealed.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::Digest;
use crate::model::{AccountId, LogicalTime};
use crate::policy::ReasonCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KycStatus {
    Unverified,
    Verified,
    Rejected,
    Expired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskRating {
    Low,
    Medium,
    High,
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident),+ }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = match self {
                    $($ty::$variant => stringify!($variant)),+
                };
                f.write_str(s)
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                $(if s.eq_ignore_ascii_case(stringify!($variant)) {
                    return Ok($ty::$variant);
                })+
                Err(Error::Parse(format!(concat!("unknown ", stringify!($ty), " `{}`"), s)))
            }
        }
    };
}

text_enum!(KycStatus { Unverified, Verified, Rejected, Expired });
text_enum!(RiskRating { Low, Medium, High });

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileVersion {
    pub version: u32,
    pub profile_digest: Digest,
    pub updated_at: LogicalTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub subject: AccountId,
    pub profile_digest: Digest,
    pub kyc_status: KycStatus,
    pub risk_rating: RiskRating,
    pub version: u32,
    pub updated_at: LogicalTime,
    /// Every profile version, oldest first.
    pub history: Vec<ProfileVersion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlacklistEntry {
    pub subject: AccountId,
    pub listed_at: LogicalTime,
    pub reason: String,
    pub listed_by: AccountId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlacklistChange {
    Added { reason: String },
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlacklistAction {
    pub subject: AccountId,
    pub actor: AccountId,
    pub at: LogicalTime,
    pub change: BlacklistChange,
}

/// Dominance order: `Blocked` > `KycMissing` > `Clear`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ScreeningResult {
    Clear,
    KycMissing,
    Blocked,
}

impl ScreeningResult {
    pub fn reason_code(self) -> Option<ReasonCode> {
        match self {
            ScreeningResult::Clear => None,
            ScreeningResult::KycMissing => Some(ReasonCode::Rcp01),
            ScreeningResult::Blocked => Some(ReasonCode::Rcp15),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityRegistry {
    records: BTreeMap<AccountId, IdentityRecord>,
    blacklist: BTreeMap<AccountId, BlacklistEntry>,
    blacklist_history: Vec<BlacklistAction>,
    change_alerts: u64,
}

impl IdentityRegistry {
    pub fn record(&self, subject: &AccountId) -> Option<&IdentityRecord> {
        self.records.get(subject)
    }

    pub fn records(&self) -> impl Iterator<Item = &IdentityRecord> {
        self.records.values()
    }

    pub fn blacklist_entry(&self, subject: &AccountId) -> Option<&BlacklistEntry> {
        self.blacklist.get(subject)
    }

    pub fn blacklist_history(&self) -> &[BlacklistAction] {
        &self.blacklist_history
    }

    pub fn change_alerts(&self) -> u64 {
        self.change_alerts
    }

    pub fn is_verified(&self, subject: &AccountId) -> bool {
        self.records
            .get(subject)
            .is_some_and(|r| r.kyc_status == KycStatus::Verified)
    }

    pub fn is_blacklisted(&self, subject: &AccountId) -> bool {
        self.blacklist.contains_key(subject)
    }

    pub fn risk(&self, subject: &AccountId) -> RiskRating {
        self.records
            .get(subject)
            .map(|r| r.risk_rating)
            .unwrap_or(RiskRating::Low)
    }

    pub fn screen(&self, subject: &AccountId) -> ScreeningResult {
        if self.is_blacklisted(subject) {
            ScreeningResult::Blocked
        } else if !self.is_verified(subject) {
            ScreeningResult::KycMissing
        } else {
            ScreeningResult::Clear
        }
    }

    pub fn check_register(&self, subject: &AccountId) -> Result<()> {
        if self.records.contains_key(subject) {
            return Err(Error::AlreadyRegistered(subject.clone()));
        }
        Ok(())
    }

    pub fn apply_register(
        &mut self,
        subject: &AccountId,
        profile_digest: Digest,
        at: LogicalTime,
    ) -> Result<&IdentityRecord> {
        self.check_register(subject)?;
        let record = IdentityRecord {
            subject: subject.clone(),
            profile_digest,
            kyc_status: KycStatus::Unverified,
            risk_rating: RiskRating::Low,
            version: 1,
            updated_at: at,
            history: vec![ProfileVersion {
                version: 1,
                profile_digest,
                updated_at: at,
            }],
        };
        Ok(self.records.entry(subject.clone()).or_insert(record))
    }

    fn existing(&self, subject: &AccountId) -> Result<&IdentityRecord> {
        self.records
            .get(subject)
            .ok_or_else(|| Error::NotFound(format!("identity {subject}")))
    }

    /// Returns the version the update will produce.
    pub fn check_update(&self, subject: &AccountId, digest: &Digest) -> Result<u32> {
        let record = self.existing(subject)?;
        if record.profile_digest == *digest {
            return Err(Error::NoChange);
        }
        record.version.checked_add(1).ok_or(Error::Overflow)
    }

    pub fn apply_update(
        &mut self,
        subject: &AccountId,
        profile_digest: Digest,
        version: u32,
        at: LogicalTime,
    ) -> Result<&IdentityRecord> {
        let expected = self.check_update(subject, &profile_digest)?;
        if version != expected {
            return Err(Error::Parse(format!(
                "identity {subject} update to version {version}, expected {expected}"
            )));
        }
        let record = self.records.get_mut(subject).expect("checked above");
        record.profile_digest = profile_digest;
        record.version = version;
        record.updated_at = at;
        record.history.push(ProfileVersion {
            version,
            profile_digest,
            updated_at: at,
        });
        self.change_alerts += 1;
        Ok(record)
    }

    pub fn apply_kyc(
        &mut self,
        subject: &AccountId,
        status: KycStatus,
        risk: RiskRating,
        at: LogicalTime,
    ) -> Result<&IdentityRecord> {
        self.existing(subject)?;
        let record = self.records.get_mut(subject).expect("checked above");
        record.kyc_status = status;
        record.risk_rating = risk;
        record.updated_at = at;
        Ok(record)
    }

    pub fn check_blacklist_add(&self, subject: &AccountId) -> Result<()> {
        if self.blacklist.contains_key(subject) {
            return Err(Error::AlreadyListed(subject.clone()));
        }
        Ok(())
    }

    pub fn check_blacklist_remove(&self, subject: &AccountId) -> Result<()> {
        if !self.blacklist.contains_key(subject) {
            return Err(Error::NotListed(subject.clone()));
        }
        Ok(())
    }

    pub fn apply_blacklist_add(
        &mut self,
        subject: &AccountId,
        actor: &AccountId,
        reason: &str,
        at: LogicalTime,
    ) -> Result<&BlacklistEntry> {
        self.check_blacklist_add(subject)?;
        self.blacklist_history.push(BlacklistAction {
            subject: subject.clone(),
            actor: actor.clone(),
            at,
            change: BlacklistChange::Added {
                reason: reason.to_string(),
            },
        });
        let entry = BlacklistEntry {
            subject: subject.clone(),
            listed_at: at,
            reason: reason.to_string(),
            listed_by: actor.clone(),
        };
        Ok(self.blacklist.entry(subject.clone()).or_insert(entry))
    }

    pub fn apply_blacklist_remove(
        &mut self,
        subject: &AccountId,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<BlacklistAction> {
        self.check_blacklist_remove(subject)?;
        self.blacklist.remove(subject);
        let action = BlacklistAction {
            subject: subject.clone(),
            actor: actor.clone(),
            at,
            change: BlacklistChange::Removed,
        };
        self.blacklist_history.push(action.clone());
        Ok(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acct(s: &str) -> AccountId {
        AccountId::new(s).unwrap()
    }

    #[test]
    fn register_creates_unverified_v1() {
        let mut reg = IdentityRegistry::default();
        let h = Digest::of(b"profile-a");
        let rec = reg.apply_register(&acct("a"), h, LogicalTime(0)).unwrap();
        assert_eq!(rec.version, 1);
        assert_eq!(rec.kyc_status, KycStatus::Unverified);
        assert!(matches!(
            reg.apply_register(&acct("a"), h, LogicalTime(1)),
            Err(Error::AlreadyRegistered(_))
        ));
    }

    #[test]
    fn updates_bump_version_and_count_alerts() {
        let mut reg = IdentityRegistry::default();
        let a = acct("a");
        reg.apply_register(&a, Digest::of(b"h1"), LogicalTime(0)).unwrap();
        for (i, payload) in [b"h2", b"h3", b"h4"].iter().enumerate() {
            let d = Digest::of(*payload);
            let v = reg.check_update(&a, &d).unwrap();
            reg.apply_update(&a, d, v, LogicalTime(i as u64 + 1)).unwrap();
        }
        let rec = reg.record(&a).unwrap();
        assert_eq!(rec.version, 4);
        assert_eq!(reg.change_alerts(), 3);
        let versions: Vec<u32> = rec.history.iter().map(|h| h.version).collect();
        assert_eq!(versions, vec![1, 2, 3, 4]);
    }

    #[test]
    fn same_digest_is_no_change() {
        let mut reg = IdentityRegistry::default();
        let a = acct("a");
        reg.apply_register(&a, Digest::of(b"h1"), LogicalTime(0)).unwrap();
        assert!(matches!(reg.check_update(&a, &Digest::of(b"h1")), Err(Error::NoChange)));
        assert!(matches!(
            reg.check_update(&acct("zz"), &Digest::of(b"h1")),
            Err(Error::NotFound(_))
        ));
        assert_eq!(reg.change_alerts(), 0);
    }

    #[test]
    fn screening_dominance() {
        let mut reg = IdentityRegistry::default();
        let a = acct("a");
        let regulator = acct("reg");
        assert_eq!(reg.screen(&acct("unknown")), ScreeningResult::KycMissing);
        reg.apply_register(&a, Digest::of(b"a"), LogicalTime(0)).unwrap();
        reg.apply_kyc(&a, KycStatus::Verified, RiskRating::Low, LogicalTime(0)).unwrap();
        assert_eq!(reg.screen(&a), ScreeningResult::Clear);
        reg.apply_blacklist_add(&a, &regulator, "sanctions", LogicalTime(1)).unwrap();
        assert_eq!(reg.screen(&a), ScreeningResult::Blocked);
        // unverified and listed is still Blocked
        reg.apply_kyc(&a, KycStatus::Expired, RiskRating::Low, LogicalTime(2)).unwrap();
        assert_eq!(reg.screen(&a), ScreeningResult::Blocked);
        assert!(matches!(
            reg.apply_blacklist_add(&a, &regulator, "again", LogicalTime(3)),
            Err(Error::AlreadyListed(_))
        ));
        reg.apply_blacklist_remove(&a, &regulator, LogicalTime(4)).unwrap();
        assert_eq!(reg.screen(&a), ScreeningResult::KycMissing);
        assert!(matches!(
            reg.apply_blacklist_remove(&a, &regulator, LogicalTime(5)),
            Err(Error::NotListed(_))
        ));
        // removal is recorded, never erased
        assert_eq!(reg.blacklist_history().len(), 2);
    }
}
