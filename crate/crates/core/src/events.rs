//! Typed event bodies and their canonical payload encoding.
//!
//! Scalars are stored as canonical text (integers base-10, digests
//! lowercase hex, lists comma-joined); structured values such as token
//! definitions and policies are stored as compact JSON text.

use std::collections::BTreeSet;

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};
use crate::identity::{KycStatus, RiskRating};
use crate::ledger::{Digest, DocumentAnchor, EventKind, Payload};
use crate::model::{AccountId, Amount, LogicalTime, PartyRole, TokenDefinition, TokenId};
use crate::policy::{AlertKind, MonitoringAlert, PolicySet, ReasonCode};

/// A balance movement at the token scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Movement {
    pub token: TokenId,
    pub from: AccountId,
    pub to: AccountId,
    pub amount: u128,
    pub wire: bool,
    pub relayed_by: Option<AccountId>,
}

/// Fee charged to a relayer for a gasless transfer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayFee {
    pub relayer: AccountId,
    pub fee_token: TokenId,
    pub fee: u128,
    pub collector: AccountId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Amendment {
    /// Plain contract revision.
    Revision,
    /// New policy set; also a revision.
    Policy(Box<PolicySet>),
    /// Expiry sweep marking the token expired-in-policy.
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventBody {
    IdentityRegistered {
        subject: AccountId,
        profile_digest: Digest,
        roles: BTreeSet<PartyRole>,
    },
    IdentityUpdated {
        subject: AccountId,
        profile_digest: Digest,
        version: u32,
    },
    KycStatusSet {
        subject: AccountId,
        status: KycStatus,
        risk: RiskRating,
        actor: AccountId,
    },
    BlacklistAdded {
        subject: AccountId,
        actor: AccountId,
        reason: String,
    },
    BlacklistRemoved {
        subject: AccountId,
        actor: AccountId,
    },
    TokenDefined {
        definition: Box<TokenDefinition>,
        policy: Box<PolicySet>,
        anchors: Vec<DocumentAnchor>,
        actor: AccountId,
    },
    ContractAmended {
        token: TokenId,
        actor: AccountId,
        version: u32,
        amendment: Amendment,
    },
    DocumentAttached {
        token: TokenId,
        anchor: DocumentAnchor,
        actor: AccountId,
    },
    Minted {
        token: TokenId,
        to: AccountId,
        amount: u128,
        actor: AccountId,
    },
    Burned {
        token: TokenId,
        from: AccountId,
        from_free: u128,
        from_frozen: u128,
        actor: AccountId,
    },
    TransferExecuted {
        movement: Movement,
        actor: AccountId,
        fee: Option<RelayFee>,
    },
    TransferRejected {
        token: TokenId,
        from: AccountId,
        to: AccountId,
        amount: Amount,
        reasons: Vec<ReasonCode>,
        actor: AccountId,
        fee: Option<RelayFee>,
    },
    CorrectionCancel {
        original_seq: u64,
        token: TokenId,
        from: AccountId,
        to: AccountId,
        amount: u128,
        actor: AccountId,
    },
    CorrectionNew {
        original_seq: u64,
        cancel_seq: u64,
        token: TokenId,
        from: AccountId,
        to: AccountId,
        amount: u128,
        actor: AccountId,
    },
    Frozen {
        token: TokenId,
        account: AccountId,
        amount: u128,
        actor: AccountId,
    },
    Unfrozen {
        token: TokenId,
        account: AccountId,
        amount: u128,
        actor: AccountId,
        release_split: bool,
    },
    Recovered {
        token: TokenId,
        from: AccountId,
        to: AccountId,
        from_frozen: u128,
        from_free: u128,
        actor: AccountId,
    },
    Paused {
        token: TokenId,
        actor: AccountId,
    },
    Resumed {
        token: TokenId,
        actor: AccountId,
    },
    Killed {
        token: TokenId,
        actor: AccountId,
        repeat: bool,
    },
    ForcedLiquidation {
        token: TokenId,
        account: AccountId,
        free: u128,
        frozen: u128,
        note: String,
        actor: AccountId,
    },
    AlertRaised(MonitoringAlert),
    SettlementExecuted {
        movement: Movement,
        actor: AccountId,
        fee: Option<RelayFee>,
    },
    SwapPrepared {
        swap_id: String,
        token: TokenId,
        from: AccountId,
        to: AccountId,
        amount: u128,
        counterpart: String,
    },
    SwapCommitted {
        swap_id: String,
        token: TokenId,
        from: AccountId,
        to: AccountId,
        amount: u128,
    },
    SwapAborted {
        swap_id: String,
        token: TokenId,
        from: AccountId,
        released: u128,
        reasons: Vec<ReasonCode>,
        note: String,
    },
    AuditExported {
        from_seq: u64,
        to_seq: u64,
        report_digest: Digest,
        actor: AccountId,
    },
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn split<T: std::str::FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|p| p.parse().map_err(|e: T::Err| Error::Parse(e.to_string())))
        .collect()
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("event value serializes")
}

fn from_json<T: DeserializeOwned>(p: &Payload, key: &str) -> Result<T> {
    serde_json::from_str(p.require(key)?)
        .map_err(|e| Error::Parse(format!("payload field `{key}`: {e}")))
}

fn flag(p: &Payload, key: &str) -> Result<bool> {
    match p.require(key)? {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Parse(format!("`{key}` must be true or false, got `{other}`"))),
    }
}

fn put_movement(p: Payload, m: &Movement) -> Payload {
    p.with("token", &m.token)
        .with("from", &m.from)
        .with("to", &m.to)
        .with("amount", m.amount)
        .with("wire", m.wire)
        .with_opt("relayed_by", m.relayed_by.as_ref())
}

fn get_movement(p: &Payload) -> Result<Movement> {
    Ok(Movement {
        token: p.parse("token")?,
        from: p.parse("from")?,
        to: p.parse("to")?,
        amount: p.parse("amount")?,
        wire: flag(p, "wire")?,
        relayed_by: p.parse_opt("relayed_by")?,
    })
}

fn put_fee(p: Payload, fee: Option<&RelayFee>) -> Payload {
    match fee {
        None => p,
        Some(f) => p
            .with("fee", f.fee)
            .with("fee_collector", &f.collector)
            .with("fee_relayer", &f.relayer)
            .with("fee_token", &f.fee_token),
    }
}

fn get_fee(p: &Payload) -> Result<Option<RelayFee>> {
    if p.get("fee").is_none() {
        return Ok(None);
    }
    Ok(Some(RelayFee {
        relayer: p.parse("fee_relayer")?,
        fee_token: p.parse("fee_token")?,
        fee: p.parse("fee")?,
        collector: p.parse("fee_collector")?,
    }))
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::IdentityRegistered { .. } => EventKind::IdentityRegistered,
            EventBody::IdentityUpdated { .. } => EventKind::IdentityUpdated,
            EventBody::KycStatusSet { .. } => EventKind::KycStatusSet,
            EventBody::BlacklistAdded { .. } => EventKind::BlacklistAdded,
            EventBody::BlacklistRemoved { .. } => EventKind::BlacklistRemoved,
            EventBody::TokenDefined { .. } => EventKind::TokenDefined,
            EventBody::ContractAmended { .. } => EventKind::ContractAmended,
            EventBody::DocumentAttached { .. } => EventKind::DocumentAttached,
            EventBody::Minted { .. } => EventKind::Minted,
            EventBody::Burned { .. } => EventKind::Burned,
            EventBody::TransferExecuted { .. } => EventKind::TransferExecuted,
            EventBody::TransferRejected { .. } => EventKind::TransferRejected,
            EventBody::CorrectionCancel { .. } => EventKind::CorrectionCancel,
            EventBody::CorrectionNew { .. } => EventKind::CorrectionNew,
            EventBody::Frozen { .. } => EventKind::Frozen,
            EventBody::Unfrozen { .. } => EventKind::Unfrozen,
            EventBody::Recovered { .. } => EventKind::Recovered,
            EventBody::Paused { .. } => EventKind::Paused,
            EventBody::Resumed { .. } => EventKind::Resumed,
            EventBody::Killed { .. } => EventKind::Killed,
            EventBody::ForcedLiquidation { .. } => EventKind::ForcedLiquidation,
            EventBody::AlertRaised(_) => EventKind::AlertRaised,
            EventBody::SettlementExecuted { .. } => EventKind::SettlementExecuted,
            EventBody::SwapPrepared { .. } => EventKind::SwapPrepared,
            EventBody::SwapCommitted { .. } => EventKind::SwapCommitted,
            EventBody::SwapAborted { .. } => EventKind::SwapAborted,
            EventBody::AuditExported { .. } => EventKind::AuditExported,
        }
    }

    pub fn to_payload(&self) -> Payload {
        let p = Payload::new();
        match self {
            EventBody::IdentityRegistered {
                subject,
                profile_digest,
                roles,
            } => p
                .with("subject", subject)
                .with("profile_digest", profile_digest)
                .with("roles", join(roles)),
            EventBody::IdentityUpdated {
                subject,
                profile_digest,
                version,
            } => p
                .with("subject", subject)
                .with("profile_digest", profile_digest)
                .with("version", version),
            EventBody::KycStatusSet {
                subject,
                status,
                risk,
                actor,
            } => p
                .with("subject", subject)
                .with("status", status)
                .with("risk", risk)
                .with("actor", actor),
            EventBody::BlacklistAdded {
                subject,
                actor,
                reason,
            } => p
                .with("subject", subject)
                .with("actor", actor)
                .with("reason", reason),
            EventBody::BlacklistRemoved { subject, actor } => {
                p.with("subject", subject).with("actor", actor)
            }
            EventBody::TokenDefined {
                definition,
                policy,
                anchors,
                actor,
            } => p
                .with("token", &definition.token_id)
                .with("definition", to_json(definition))
                .with("policy", to_json(policy))
                .with("anchors", to_json(anchors))
                .with("actor", actor),
            EventBody::ContractAmended {
                token,
                actor,
                version,
                amendment,
            } => {
                let p = p
                    .with("token", token)
                    .with("actor", actor)
                    .with("version", version);
                match amendment {
                    Amendment::Revision => p.with("change", "revision"),
                    Amendment::Expired => p.with("change", "expired"),
                    Amendment::Policy(policy) => {
                        p.with("change", "policy").with("policy", to_json(policy))
                    }
                }
            }
            EventBody::DocumentAttached {
                token,
                anchor,
                actor,
            } => p
                .with("token", token)
                .with("anchor", to_json(anchor))
                .with("actor", actor),
            EventBody::Minted {
                token,
                to,
                amount,
                actor,
            } => p
                .with("token", token)
                .with("to", to)
                .with("amount", amount)
                .with("actor", actor),
            EventBody::Burned {
                token,
                from,
                from_free,
                from_frozen,
                actor,
            } => p
                .with("token", token)
                .with("from", from)
                .with("from_free", from_free)
                .with("from_frozen", from_frozen)
                .with("actor", actor),
            EventBody::TransferExecuted {
                movement,
                actor,
                fee,
            }
            | EventBody::SettlementExecuted {
                movement,
                actor,
                fee,
            } => put_fee(put_movement(p, movement).with("actor", actor), fee.as_ref()),
            EventBody::TransferRejected {
                token,
                from,
                to,
                amount,
                reasons,
                actor,
                fee,
            } => put_fee(
                p.with("token", token)
                    .with("from", from)
                    .with("to", to)
                    .with("amount", amount)
                    .with("reasons", join(reasons))
                    .with("actor", actor),
                fee.as_ref(),
            ),
            EventBody::CorrectionCancel {
                original_seq,
                token,
                from,
                to,
                amount,
                actor,
            } => p
                .with("original_seq", original_seq)
                .with("token", token)
                .with("from", from)
                .with("to", to)
                .with("amount", amount)
                .with("actor", actor),
            EventBody::CorrectionNew {
                original_seq,
                cancel_seq,
                token,
                from,
                to,
                amount,
                actor,
            } => p
                .with("original_seq", original_seq)
                .with("cancel_seq", cancel_seq)
                .with("token", token)
                .with("from", from)
                .with("to", to)
                .with("amount", amount)
                .with("actor", actor),
            EventBody::Frozen {
                token,
                account,
                amount,
                actor,
            } => p
                .with("token", token)
                .with("account", account)
                .with("amount", amount)
                .with("actor", actor),
            EventBody::Unfrozen {
                token,
                account,
                amount,
                actor,
                release_split,
            } => p
                .with("token", token)
                .with("account", account)
                .with("amount", amount)
                .with("actor", actor)
                .with("release_split", release_split),
            EventBody::Recovered {
                token,
                from,
                to,
                from_frozen,
                from_free,
                actor,
            } => p
                .with("token", token)
                .with("from", from)
                .with("to", to)
                .with("from_frozen", from_frozen)
                .with("from_free", from_free)
                .with("actor", actor),
            EventBody::Paused { token, actor } | EventBody::Resumed { token, actor } => {
                p.with("token", token).with("actor", actor)
            }
            EventBody::Killed {
                token,
                actor,
                repeat,
            } => p
                .with("token", token)
                .with("actor", actor)
                .with("repeat", repeat),
            EventBody::ForcedLiquidation {
                token,
                account,
                free,
                frozen,
                note,
                actor,
            } => p
                .with("token", token)
                .with("account", account)
                .with("free", free)
                .with("frozen", frozen)
                .with("note", note)
                .with("actor", actor),
            EventBody::AlertRaised(alert) => p
                .with("alert", alert.kind)
                .with("subject", &alert.subject)
                .with_opt("token", alert.token_id.as_ref())
                .with("at", alert.at)
                .with("details", &alert.details),
            EventBody::SwapPrepared {
                swap_id,
                token,
                from,
                to,
                amount,
                counterpart,
            } => p
                .with("swap_id", swap_id)
                .with("token", token)
                .with("from", from)
                .with("to", to)
                .with("amount", amount)
                .with("counterpart", counterpart),
            EventBody::SwapCommitted {
                swap_id,
                token,
                from,
                to,
                amount,
            } => p
                .with("swap_id", swap_id)
                .with("token", token)
                .with("from", from)
                .with("to", to)
                .with("amount", amount),
            EventBody::SwapAborted {
                swap_id,
                token,
                from,
                released,
                reasons,
                note,
            } => p
                .with("swap_id", swap_id)
                .with("token", token)
                .with("from", from)
                .with("released", released)
                .with("reasons", join(reasons))
                .with("note", note),
            EventBody::AuditExported {
                from_seq,
                to_seq,
                report_digest,
                actor,
            } => p
                .with("from_seq", from_seq)
                .with("to_seq", to_seq)
                .with("report_digest", report_digest)
                .with("actor", actor),
        }
    }

    /// Decodes a payload, rejecting any payload that does not re-encode
    /// to exactly itself (extra keys, non-canonical numerals).
    pub fn from_payload(kind: EventKind, p: &Payload) -> Result<EventBody> {
        let body = Self::decode(kind, p)?;
        if body.to_payload() != *p {
            return Err(Error::Parse(format!("non-canonical {kind} payload")));
        }
        Ok(body)
    }

    fn decode(kind: EventKind, p: &Payload) -> Result<EventBody> {
        use EventKind as K;
        let body = match kind {
            K::IdentityRegistered => EventBody::IdentityRegistered {
                subject: p.parse("subject")?,
                profile_digest: p.parse("profile_digest")?,
                roles: split(p.require("roles")?)?.into_iter().collect(),
            },
            K::IdentityUpdated => EventBody::IdentityUpdated {
                subject: p.parse("subject")?,
                profile_digest: p.parse("profile_digest")?,
                version: p.parse("version")?,
            },
            K::KycStatusSet => EventBody::KycStatusSet {
                subject: p.parse("subject")?,
                status: p.parse("status")?,
                risk: p.parse("risk")?,
                actor: p.parse("actor")?,
            },
            K::BlacklistAdded => EventBody::BlacklistAdded {
                subject: p.parse("subject")?,
                actor: p.parse("actor")?,
                reason: p.require("reason")?.to_string(),
            },
            K::BlacklistRemoved => EventBody::BlacklistRemoved {
                subject: p.parse("subject")?,
                actor: p.parse("actor")?,
            },
            K::TokenDefined => {
                let definition: TokenDefinition = from_json(p, "definition")?;
                let token: TokenId = p.parse("token")?;
                if token != definition.token_id {
                    return Err(Error::Parse("token field disagrees with definition".into()));
                }
                EventBody::TokenDefined {
                    definition: Box::new(definition),
                    policy: Box::new(from_json(p, "policy")?),
                    anchors: from_json(p, "anchors")?,
                    actor: p.parse("actor")?,
                }
            }
            K::ContractAmended => EventBody::ContractAmended {
                token: p.parse("token")?,
                actor: p.parse("actor")?,
                version: p.parse("version")?,
                amendment: match p.require("change")? {
                    "revision" => Amendment::Revision,
                    "expired" => Amendment::Expired,
                    "policy" => Amendment::Policy(Box::new(from_json(p, "policy")?)),
                    other => return Err(Error::Parse(format!("unknown amendment `{other}`"))),
                },
            },
            K::DocumentAttached => EventBody::DocumentAttached {
                token: p.parse("token")?,
                anchor: from_json(p, "anchor")?,
                actor: p.parse("actor")?,
            },
            K::Minted => EventBody::Minted {
                token: p.parse("token")?,
                to: p.parse("to")?,
                amount: p.parse("amount")?,
                actor: p.parse("actor")?,
            },
            K::Burned => EventBody::Burned {
                token: p.parse("token")?,
                from: p.parse("from")?,
                from_free: p.parse("from_free")?,
                from_frozen: p.parse("from_frozen")?,
                actor: p.parse("actor")?,
            },
            K::TransferExecuted => EventBody::TransferExecuted {
                movement: get_movement(p)?,
                actor: p.parse("actor")?,
                fee: get_fee(p)?,
            },
            K::SettlementExecuted => EventBody::SettlementExecuted {
                movement: get_movement(p)?,
                actor: p.parse("actor")?,
                fee: get_fee(p)?,
            },
            K::TransferRejected => EventBody::TransferRejected {
                token: p.parse("token")?,
                from: p.parse("from")?,
                to: p.parse("to")?,
                amount: p.parse("amount")?,
                reasons: split(p.require("reasons")?)?,
                actor: p.parse("actor")?,
                fee: get_fee(p)?,
            },
            K::CorrectionCancel => EventBody::CorrectionCancel {
                original_seq: p.parse("original_seq")?,
                token: p.parse("token")?,
                from: p.parse("from")?,
                to: p.parse("to")?,
                amount: p.parse("amount")?,
                actor: p.parse("actor")?,
            },
            K::CorrectionNew => EventBody::CorrectionNew {
                original_seq: p.parse("original_seq")?,
                cancel_seq: p.parse("cancel_seq")?,
                token: p.parse("token")?,
                from: p.parse("from")?,
                to: p.parse("to")?,
                amount: p.parse("amount")?,
                actor: p.parse("actor")?,
            },
            K::Frozen => EventBody::Frozen {
                token: p.parse("token")?,
                account: p.parse("account")?,
                amount: p.parse("amount")?,
                actor: p.parse("actor")?,
            },
            K::Unfrozen => EventBody::Unfrozen {
                token: p.parse("token")?,
                account: p.parse("account")?,
                amount: p.parse("amount")?,
                actor: p.parse("actor")?,
                release_split: flag(p, "release_split")?,
            },
            K::Recovered => EventBody::Recovered {
                token: p.parse("token")?,
                from: p.parse("from")?,
                to: p.parse("to")?,
                from_frozen: p.parse("from_frozen")?,
                from_free: p.parse("from_free")?,
                actor: p.parse("actor")?,
            },
            K::Paused => EventBody::Paused {
                token: p.parse("token")?,
                actor: p.parse("actor")?,
            },
            K::Resumed => EventBody::Resumed {
                token: p.parse("token")?,
                actor: p.parse("actor")?,
            },
            K::Killed => EventBody::Killed {
                token: p.parse("token")?,
                actor: p.parse("actor")?,
                repeat: flag(p, "repeat")?,
            },
            K::ForcedLiquidation => EventBody::ForcedLiquidation {
                token: p.parse("token")?,
                account: p.parse("account")?,
                free: p.parse("free")?,
                frozen: p.parse("frozen")?,
                note: p.require("note")?.to_string(),
                actor: p.parse("actor")?,
            },
            K::AlertRaised => EventBody::AlertRaised(MonitoringAlert {
                kind: p.parse::<AlertKind>("alert")?,
                subject: p.parse("subject")?,
                token_id: p.parse_opt("token")?,
                at: LogicalTime(p.parse("at")?),
                details: p.require("details")?.to_string(),
            }),
            K::SwapPrepared => EventBody::SwapPrepared {
                swap_id: p.require("swap_id")?.to_string(),
                token: p.parse("token")?,
                from: p.parse("from")?,
                to: p.parse("to")?,
                amount: p.parse("amount")?,
                counterpart: p.require("counterpart")?.to_string(),
            },
            K::SwapCommitted => EventBody::SwapCommitted {
                swap_id: p.require("swap_id")?.to_string(),
                token: p.parse("token")?,
                from: p.parse("from")?,
                to: p.parse("to")?,
                amount: p.parse("amount")?,
            },
            K::SwapAborted => EventBody::SwapAborted {
                swap_id: p.require("swap_id")?.to_string(),
                token: p.parse("token")?,
                from: p.parse("from")?,
                released: p.parse("released")?,
                reasons: split(p.require("reasons")?)?,
                note: p.require("note")?.to_string(),
            },
            K::AuditExported => EventBody::AuditExported {
                from_seq: p.parse("from_seq")?,
                to_seq: p.parse("to_seq")?,
                report_digest: p.parse("report_digest")?,
                actor: p.parse("actor")?,
            },
        };
        Ok(body)
    }

    /// Token the event concerns, if any.
    pub fn token(&self) -> Option<&TokenId> {
        match self {
            EventBody::IdentityRegistered { .. }
            | EventBody::IdentityUpdated { .. }
            | EventBody::KycStatusSet { .. }
            | EventBody::BlacklistAdded { .. }
            | EventBody::BlacklistRemoved { .. }
            | EventBody::AuditExported { .. } => None,
            EventBody::TokenDefined { definition, .. } => Some(&definition.token_id),
            EventBody::TransferExecuted { movement, .. }
            | EventBody::SettlementExecuted { movement, .. } => Some(&movement.token),
            EventBody::AlertRaised(alert) => alert.token_id.as_ref(),
            EventBody::ContractAmended { token, .. }
            | EventBody::DocumentAttached { token, .. }
            | EventBody::Minted { token, .. }
            | EventBody::Burned { token, .. }
            | EventBody::TransferRejected { token, .. }
            | EventBody::CorrectionCancel { token, .. }
            | EventBody::CorrectionNew { token, .. }
            | EventBody::Frozen { token, .. }
            | EventBody::Unfrozen { token, .. }
            | EventBody::Recovered { token, .. }
            | EventBody::Paused { token, .. }
            | EventBody::Resumed { token, .. }
            | EventBody::Killed { token, .. }
            | EventBody::ForcedLiquidation { token, .. }
            | EventBody::SwapPrepared { token, .. }
            | EventBody::SwapCommitted { token, .. }
            | EventBody::SwapAborted { token, .. } => Some(token),
        }
    }

    /// Accounts that are a party to the event (need-to-know set).
    pub fn parties(&self) -> BTreeSet<&AccountId> {
        let mut out = BTreeSet::new();
        match self {
            EventBody::IdentityRegistered { subject, .. }
            | EventBody::IdentityUpdated { subject, .. } => {
                out.insert(subject);
            }
            EventBody::KycStatusSet { subject, actor, .. }
            | EventBody::BlacklistAdded { subject, actor, .. }
            | EventBody::BlacklistRemoved { subject, actor } => {
                out.extend([subject, actor]);
            }
            EventBody::TokenDefined { actor, .. }
            | EventBody::ContractAmended { actor, .. }
            | EventBody::DocumentAttached { actor, .. }
            | EventBody::Paused { actor, .. }
            | EventBody::Resumed { actor, .. }
            | EventBody::Killed { actor, .. }
            | EventBody::AuditExported { actor, .. } => {
                out.insert(actor);
            }
            EventBody::Minted { to, actor, .. } => {
                out.extend([to, actor]);
            }
            EventBody::Burned { from, actor, .. } => {
                out.extend([from, actor]);
            }
            EventBody::TransferExecuted {
                movement,
                actor,
                fee,
            }
            | EventBody::SettlementExecuted {
                movement,
                actor,
                fee,
            } => {
                out.extend([&movement.from, &movement.to, actor]);
                out.extend(movement.relayed_by.as_ref());
                if let Some(f) = fee {
                    out.insert(&f.relayer);
                }
            }
            EventBody::TransferRejected {
                from,
                to,
                actor,
                fee,
                ..
            } => {
                out.extend([from, to, actor]);
                if let Some(f) = fee {
                    out.insert(&f.relayer);
                }
            }
            EventBody::CorrectionCancel { from, to, actor, .. }
            | EventBody::CorrectionNew { from, to, actor, .. } => {
                out.extend([from, to, actor]);
            }
            EventBody::Frozen { account, actor, .. }
            | EventBody::Unfrozen { account, actor, .. }
            | EventBody::ForcedLiquidation { account, actor, .. } => {
                out.extend([account, actor]);
            }
            EventBody::Recovered { from, to, actor, .. } => {
                out.extend([from, to, actor]);
            }
            EventBody::AlertRaised(alert) => {
                out.insert(&alert.subject);
            }
            EventBody::SwapPrepared { from, to, .. } | EventBody::SwapCommitted { from, to, .. } => {
                out.extend([from, to]);
            }
            EventBody::SwapAborted { from, .. } => {
                out.insert(from);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AssetClassDescriptor;

    fn a(s: &str) -> AccountId {
        AccountId::new(s).unwrap()
    }

    fn t(s: &str) -> TokenId {
        TokenId::new(s).unwrap()
    }

    fn samples() -> Vec<EventBody> {
        let def = TokenDefinition::new(t("bond"), AssetClassDescriptor::security_ft(), a("iss")).with_cap(1000);
        vec![
            EventBody::IdentityRegistered {
                subject: a("x"),
                profile_digest: Digest::of(b"p"),
                roles: BTreeSet::from([PartyRole::Investor, PartyRole::Broker]),
            },
            EventBody::IdentityRegistered {
                subject: a("y"),
                profile_digest: Digest::of(b"p"),
                roles: BTreeSet::new(),
            },
            EventBody::TokenDefined {
                definition: Box::new(def),
                policy: Box::new(PolicySet::permissive(0).unwrap()),
                anchors: vec![DocumentAnchor::for_bytes("prospectus", b"doc", "urn:doc").notarized(a("law"))],
                actor: a("iss"),
            },
            EventBody::ContractAmended {
                token: t("bond"),
                actor: a("iss"),
                version: 2,
                amendment: Amendment::Policy(Box::new(PolicySet::permissive(0).unwrap())),
            },
            EventBody::TransferExecuted {
                movement: Movement {
                    token: t("bond"),
                    from: a("x"),
                    to: a("y"),
                    amount: 5,
                    wire: true,
                    relayed_by: Some(a("r")),
                },
                actor: a("x"),
                fee: Some(RelayFee {
                    relayer: a("r"),
                    fee_token: t("cash"),
                    fee: 3,
                    collector: a("op"),
                }),
            },
            EventBody::TransferRejected {
                token: t("bond"),
                from: a("x"),
                to: a("y"),
                amount: "0.5".parse().unwrap(),
                reasons: vec![ReasonCode::Rcp13, ReasonCode::Rcp15],
                actor: a("x"),
                fee: None,
            },
            EventBody::AlertRaised(MonitoringAlert {
                kind: AlertKind::ThresholdWire,
                subject: a("x"),
                token_id: None,
                at: LogicalTime(9),
                details: "d, with comma".into(),
            }),
            EventBody::SwapAborted {
                swap_id: "swap-1".into(),
                token: t("bond"),
                from: a("x"),
                released: 0,
                reasons: vec![],
                note: "fault".into(),
            },
        ]
    }

    #[test]
    fn payload_round_trip() {
        for body in samples() {
            let payload = body.to_payload();
            let back = EventBody::from_payload(body.kind(), &payload).unwrap();
            assert_eq!(back, body);
        }
    }

    #[test]
    fn wrong_kind_or_missing_field_fails() {
        let body = &samples()[4];
        let payload = body.to_payload();
        assert!(EventBody::from_payload(EventKind::Minted, &payload).is_err());
        assert!(EventBody::from_payload(EventKind::AuditExported, &Payload::new()).is_err());
    }
}
