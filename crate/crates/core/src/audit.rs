//! Role-scoped history queries, audit export and the regulatory feed.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::events::EventBody;
use crate::ledger::{verify_events, Digest, EventKind, LedgerEvent};
use crate::model::{AccountId, Fungibility, LogicalTime, PartyRole, TokenId};
use crate::state::{self, State};

/// Integrity posture recorded in every audit report.
pub const THREAT_NOTE: &str = "chain_ok covers tampering of sealed events only; \
host, key management and dependency integrity are outside the ledger";

/// Who is asking. Regulators and auditors see everything, issuers see
/// their own tokens, investors and consumers see events they are party
/// to, and every other role sees nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityScope {
    pub requester: AccountId,
    pub roles: BTreeSet<PartyRole>,
}

impl VisibilityScope {
    pub fn new(requester: AccountId, roles: BTreeSet<PartyRole>) -> Self {
        VisibilityScope { requester, roles }
    }

    /// Scope with the roles the requester holds in `state`.
    pub fn of(state: &State, requester: &AccountId) -> Self {
        VisibilityScope::new(requester.clone(), state.roles_of(requester))
    }

    pub fn sees_all(&self) -> bool {
        self.roles.contains(&PartyRole::Regulator) || self.roles.contains(&PartyRole::Auditor)
    }

    pub fn can_see(&self, state: &State, body: &EventBody) -> bool {
        if self.sees_all() {
            return true;
        }
        if self.roles.contains(&PartyRole::Issuer) {
            let issued = body
                .token()
                .and_then(|t| state.tokens.get(t))
                .is_some_and(|t| t.def.issuer == self.requester);
            if issued {
                return true;
            }
        }
        let party_scoped = self.roles.contains(&PartyRole::Investor) || self.roles.contains(&PartyRole::Consumer);
        party_scoped && body.parties().contains(&self.requester)
    }
}

/// Token class predicate for history queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassFilter {
    All,
    Fungible,
    NonFungible,
    Tag(String),
}

impl std::str::FromStr for ClassFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(ClassFilter::All),
            "fungible" | "ft" => Ok(ClassFilter::Fungible),
            "nonfungible" | "non-fungible" | "nft" => Ok(ClassFilter::NonFungible),
            _ => match s.strip_prefix("tag:") {
                Some(tag) if !tag.is_empty() => Ok(ClassFilter::Tag(tag.to_string())),
                _ => Err(Error::Parse(format!("unknown class filter `{s}`"))),
            },
        }
    }
}

impl ClassFilter {
    fn matches(&self, state: &State, token: Option<&TokenId>) -> bool {
        if *self == ClassFilter::All {
            return true;
        }
        let Some(class) = token.and_then(|t| state.tokens.get(t)).map(|t| &t.def.class) else {
            return false;
        };
        match self {
            ClassFilter::All => true,
            ClassFilter::Fungible => class.fungibility == Fungibility::Fungible,
            ClassFilter::NonFungible => class.fungibility == Fungibility::NonFungible,
            ClassFilter::Tag(tag) => class.has_tag(tag),
        }
    }
}

fn decoded(event: &LedgerEvent) -> EventBody {
    EventBody::from_payload(event.kind, &event.payload).expect("sealed events decode")
}

/// Events whose token matches `filter` and that `scope` may see, in seq order.
pub fn history_by_asset_type<'a>(engine: &'a Engine, filter: &ClassFilter, scope: &VisibilityScope) -> Vec<&'a LedgerEvent> {
    let state = engine.state();
    engine
        .log()
        .events()
        .iter()
        .filter(|e| {
            let body = decoded(e);
            filter.matches(state, body.token()) && scope.can_see(state, &body)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TokenSummary {
    pub token: TokenId,
    pub minted: u128,
    pub burned: u128,
    pub free: u128,
    pub frozen: u128,
    pub conserves: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub from_seq: u64,
    pub to_seq: u64,
    pub chain_ok: bool,
    pub event_count: u64,
    pub tokens: Vec<TokenSummary>,
    /// AlertRaised events in range, by alert kind.
    pub alerts: BTreeMap<String, u64>,
    /// Rejected transfers in range, by reason code.
    pub rejections: BTreeMap<String, u64>,
    pub threat_note: String,
    pub report_digest: Digest,
}

impl AuditReport {
    /// Builds the report over `events[from..=to]` against the prefix
    /// `events[..=to]`. A pure function of range and prefix.
    pub fn compute(events: &[LedgerEvent], from_seq: u64, to_seq: u64) -> Result<AuditReport> {
        if from_seq > to_seq || to_seq >= events.len() as u64 {
            return Err(Error::BadRange {
                from: from_seq,
                to: to_seq,
            });
        }
        let prefix = &events[..=to_seq as usize];
        let chain_ok = verify_events(prefix).ok;
        let state = state::replay(prefix).ok();
        let tokens = state
            .iter()
            .flat_map(|s| s.tokens.values())
            .map(|t| TokenSummary {
                token: t.def.token_id.clone(),
                minted: t.minted,
                burned: t.burned,
                free: t.holdings.values().map(|h| h.free).sum(),
                frozen: t.holdings.values().map(|h| h.frozen).sum(),
                conserves: t.conserves(),
            })
            .collect();
        let mut alerts = BTreeMap::new();
        let mut rejections = BTreeMap::new();
        for e in &prefix[from_seq as usize..] {
            match e.kind {
                EventKind::AlertRaised => {
                    let kind = e.payload.get("alert").unwrap_or("unknown").to_string();
                    *alerts.entry(kind).or_insert(0) += 1;
                }
                EventKind::TransferRejected => {
                    for code in e.payload.get("reasons").unwrap_or("").split(',').filter(|c| !c.is_empty()) {
                        *rejections.entry(code.to_string()).or_insert(0) += 1;
                    }
                }
                _ => {}
            }
        }
        let mut report = AuditReport {
            from_seq,
            to_seq,
            chain_ok: chain_ok && state.is_some(),
            event_count: to_seq - from_seq + 1,
            tokens,
            alerts,
            rejections,
            threat_note: THREAT_NOTE.to_string(),
            report_digest: Digest::ZERO,
        };
        report.report_digest = report.canonical_digest();
        Ok(report)
    }

    /// SHA-256 of the canonical JSON encoding with the digest zeroed.
    pub fn canonical_digest(&self) -> Digest {
        let mut unsigned = self.clone();
        unsigned.report_digest = Digest::ZERO;
        Digest::of(&serde_json::to_vec(&unsigned).expect("report serializes"))
    }
}

impl Engine {
    /// Computes a report over `[from_seq, to_seq]` and records the export.
    pub fn export_audit_report(
        &mut self,
        from_seq: u64,
        to_seq: u64,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<(AuditReport, LedgerEvent)> {
        self.permit_engine("audit_export", actor)?;
        let report = AuditReport::compute(self.log().events(), from_seq, to_seq)?;
        let body = EventBody::AuditExported {
            from_seq,
            to_seq,
            report_digest: report.report_digest,
            actor: actor.clone(),
        };
        let event = self.commit(at, vec![body])?.remove(0);
        Ok((report, event))
    }
}

/// One page of the regulatory feed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedBatch<'a> {
    pub events: Vec<&'a LedgerEvent>,
    /// Pass back as `since` to resume; `None` when the batch is empty.
    pub cursor: Option<u64>,
}

/// Events with seq > `since` (all events when `since` is `None`), at most
/// `max` of them. Regulators only.
pub fn regulatory_feed<'a>(
    engine: &'a Engine,
    since: Option<u64>,
    scope: &VisibilityScope,
    max: usize,
) -> Result<FeedBatch<'a>> {
    if !scope.roles.contains(&PartyRole::Regulator) {
        return Err(Error::PermissionDenied {
            actor: scope.requester.clone(),
            action: "regulatory_feed".into(),
        });
    }
    let start = since.map_or(0, |s| s.saturating_add(1));
    let events: Vec<&LedgerEvent> = engine
        .log()
        .events()
        .iter()
        .skip(usize::try_from(start).unwrap_or(usize::MAX))
        .take(max)
        .collect();
    let cursor = events.last().map(|e| e.seq);
    Ok(FeedBatch { events, cursor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::fixtures::*;
    use crate::model::{AssetClassDescriptor, TokenDefinition};
    use crate::policy::{PolicySet, ReasonCode};

    fn scope(e: &Engine, who: &str) -> VisibilityScope {
        VisibilityScope::of(e.state(), &acct(who))
    }

    fn with_nft() -> Engine {
        let mut e = engine();
        let def = TokenDefinition::new(tok("art"), AssetClassDescriptor::nft(), acct("iss"));
        e.define_token(def, PolicySet::permissive(0).unwrap(), vec![], &acct("iss"), t(1))
            .unwrap();
        e.mint(&tok("art"), &acct("carol"), amt("1"), &acct("iss"), t(1)).unwrap();
        e.execute_transfer(&req("bond", "alice", "bob", "5"), &acct("alice"), t(2)).unwrap();
        e.execute_transfer(&req("bond", "bob", "carol", "2"), &acct("bob"), t(3)).unwrap();
        e
    }

    #[test]
    fn regulator_sees_every_nft_event() {
        let e = with_nft();
        let nft = history_by_asset_type(&e, &ClassFilter::NonFungible, &scope(&e, "reg"));
        let kinds: Vec<EventKind> = nft.iter().map(|ev| ev.kind).collect();
        assert_eq!(kinds, vec![EventKind::TokenDefined, EventKind::Minted]);
    }

    #[test]
    fn investor_sees_only_own_events() {
        let e = with_nft();
        let seen = history_by_asset_type(&e, &ClassFilter::All, &scope(&e, "alice"));
        assert!(!seen.is_empty());
        for ev in &seen {
            assert!(decoded(ev).parties().contains(&acct("alice")));
        }
        let bob_carol = e.log().events().iter().rev().find(|ev| ev.kind == EventKind::TransferExecuted).unwrap();
        assert!(!seen.iter().any(|ev| ev.seq == bob_carol.seq));
    }

    #[test]
    fn issuer_sees_own_tokens_and_others_see_nothing() {
        let e = with_nft();
        let iss = history_by_asset_type(&e, &ClassFilter::Fungible, &scope(&e, "iss"));
        assert!(iss.iter().any(|ev| ev.kind == EventKind::TransferExecuted));
        assert!(history_by_asset_type(&e, &ClassFilter::All, &scope(&e, "relay")).is_empty());
        assert!(history_by_asset_type(&e, &ClassFilter::All, &scope(&e, "law")).is_empty());
    }

    #[test]
    fn audit_export_is_deterministic_and_gated() {
        let mut e = with_nft();
        let last = e.log().len() as u64 - 1;
        let (a, ev) = e.export_audit_report(0, last, &acct("aud"), t(5)).unwrap();
        assert!(a.chain_ok);
        assert!(a.tokens.iter().all(|s| s.conserves));
        assert_eq!(ev.payload.get("report_digest"), Some(a.report_digest.to_hex().as_str()));
        let (b, _) = e.export_audit_report(0, last, &acct("reg"), t(6)).unwrap();
        assert_eq!(a.report_digest, b.report_digest);
        let err = e.export_audit_report(0, last, &acct("alice"), t(7)).unwrap_err();
        assert_eq!(err.reason_code(), Some(ReasonCode::Rcp07));
        assert!(matches!(e.export_audit_report(3, 2, &acct("aud"), t(7)), Err(Error::BadRange { .. })));
        assert!(matches!(
            e.export_audit_report(0, 10_000, &acct("aud"), t(7)),
            Err(Error::BadRange { .. })
        ));
    }

    #[test]
    fn feed_partitions_the_log() {
        let e = with_nft();
        let reg = scope(&e, "reg");
        assert_eq!(regulatory_feed(&e, None, &reg, usize::MAX).unwrap().events.len(), e.log().len());
        let last = e.log().len() as u64 - 1;
        assert!(regulatory_feed(&e, Some(last), &reg, 10).unwrap().events.is_empty());
        let mut seen = Vec::new();
        let mut cursor = None;
        loop {
            let batch = regulatory_feed(&e, cursor, &reg, 3).unwrap();
            if batch.events.is_empty() {
                break;
            }
            seen.extend(batch.events.iter().map(|ev| ev.seq));
            cursor = batch.cursor;
        }
        assert_eq!(seen, (0..e.log().len() as u64).collect::<Vec<_>>());
        assert!(regulatory_feed(&e, None, &scope(&e, "aud"), 1).is_err());
    }

    #[test]
    fn class_filter_parsing() {
        assert_eq!("nft".parse::<ClassFilter>().unwrap(), ClassFilter::NonFungible);
        assert_eq!("tag:carbon".parse::<ClassFilter>().unwrap(), ClassFilter::Tag("carbon".into()));
        assert!("tag:".parse::<ClassFilter>().is_err());
    }
}
