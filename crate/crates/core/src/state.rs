//! Engine state as a pure fold over ledger events.
//!
//! `State::apply` is strict: an event that does not fit the current state
//! is an error, never a panic, so a forged or reordered log fails replay.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::events::{Amendment, EventBody, Movement, RelayFee};
use crate::identity::IdentityRegistry;
use crate::ledger::{Digest, DocumentAnchor, LedgerEvent};
use crate::model::{AccountId, Lifecycle, LogicalTime, PartyRole, TokenDefinition, TokenId};
use crate::policy::PolicySet;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Holding {
    pub free: u128,
    pub frozen: u128,
}

impl Holding {
    pub fn total(&self) -> u128 {
        self.free + self.frozen
    }
}

/// An executed movement as seen by limit and pattern checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransferRecord {
    pub seq: u64,
    pub from: AccountId,
    pub to: AccountId,
    pub amount: u128,
    pub at: LogicalTime,
    pub cancelled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContractVersion {
    pub version: u32,
    pub seq: u64,
    pub at: LogicalTime,
    pub change: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TokenState {
    pub def: TokenDefinition,
    pub policy: PolicySet,
    pub anchors: Vec<DocumentAnchor>,
    pub holdings: BTreeMap<AccountId, Holding>,
    pub minted: u128,
    pub burned: u128,
    pub expired: bool,
    pub contract_history: Vec<ContractVersion>,
    pub history: Vec<TransferRecord>,
    /// Derived lot token while this NFT is escrowed for a split.
    pub split_child: Option<TokenId>,
}

impl TokenState {
    pub fn holding(&self, account: &AccountId) -> Holding {
        self.holdings.get(account).copied().unwrap_or_default()
    }

    /// Executed transfers that have not been cancelled by a correction.
    pub fn transfers(&self) -> impl Iterator<Item = &TransferRecord> {
        self.history.iter().filter(|t| !t.cancelled)
    }

    pub fn outstanding(&self) -> u128 {
        self.holdings.values().map(Holding::total).sum()
    }

    /// minted = Σ(free + frozen) + burned
    pub fn conserves(&self) -> bool {
        self.outstanding().checked_add(self.burned) == Some(self.minted)
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&serde_json::to_vec(self).expect("token state serializes"))
    }

    fn debit_free(&mut self, account: &AccountId, amount: u128) -> Result<()> {
        let token = self.def.token_id.clone();
        let h = self.holdings.entry(account.clone()).or_default();
        h.free = h.free.checked_sub(amount).ok_or(Error::InsufficientBalance {
            account: account.clone(),
            token,
        })?;
        self.prune(account);
        Ok(())
    }

    fn debit_frozen(&mut self, account: &AccountId, amount: u128) -> Result<()> {
        let token = self.def.token_id.clone();
        let h = self.holdings.entry(account.clone()).or_default();
        h.frozen = h.frozen.checked_sub(amount).ok_or(Error::InsufficientBalance {
            account: account.clone(),
            token,
        })?;
        self.prune(account);
        Ok(())
    }

    fn credit_free(&mut self, account: &AccountId, amount: u128) -> Result<()> {
        let h = self.holdings.entry(account.clone()).or_default();
        h.free = h.free.checked_add(amount).ok_or(Error::Overflow)?;
        h.free.checked_add(h.frozen).ok_or(Error::Overflow)?;
        self.prune(account);
        Ok(())
    }

    fn credit_frozen(&mut self, account: &AccountId, amount: u128) -> Result<()> {
        let h = self.holdings.entry(account.clone()).or_default();
        h.frozen = h.frozen.checked_add(amount).ok_or(Error::Overflow)?;
        h.free.checked_add(h.frozen).ok_or(Error::Overflow)?;
        self.prune(account);
        Ok(())
    }

    fn prune(&mut self, account: &AccountId) {
        if self.holdings.get(account).is_some_and(|h| h.total() == 0) {
            self.holdings.remove(account);
        }
    }

    fn burn(&mut self, amount: u128) -> Result<()> {
        self.burned = self.burned.checked_add(amount).ok_or(Error::Overflow)?;
        Ok(())
    }

    fn require_live(&self) -> Result<()> {
        match self.def.lifecycle {
            Lifecycle::Killed => Err(Error::TokenKilled(self.def.token_id.clone())),
            _ => Ok(()),
        }
    }

    fn move_free(&mut self, from: &AccountId, to: &AccountId, amount: u128) -> Result<()> {
        self.debit_free(from, amount)?;
        self.credit_free(to, amount)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SwapPhase {
    Prepared,
    Committed,
    Aborted,
}

/// One ledger's view of a cross-ledger swap leg.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SwapLeg {
    pub token: TokenId,
    pub from: AccountId,
    pub to: Option<AccountId>,
    pub amount: u128,
    pub phase: SwapPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorrectionPair {
    pub cancel_seq: u64,
    pub new_seq: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct State {
    pub identities: IdentityRegistry,
    pub roles: BTreeMap<AccountId, BTreeSet<PartyRole>>,
    pub tokens: BTreeMap<TokenId, TokenState>,
    pub swaps: BTreeMap<String, SwapLeg>,
    /// original seq → correction pair
    pub corrections: BTreeMap<u64, CorrectionPair>,
    pub alerts: BTreeMap<String, u64>,
    pub audit_exports: u64,
}

impl State {
    pub fn roles_of(&self, account: &AccountId) -> BTreeSet<PartyRole> {
        self.roles.get(account).cloned().unwrap_or_default()
    }

    pub fn has_role(&self, account: &AccountId, role: PartyRole) -> bool {
        self.roles.get(account).is_some_and(|r| r.contains(&role))
    }

    pub fn is_registered(&self, account: &AccountId) -> bool {
        self.identities.record(account).is_some()
    }

    pub fn token(&self, id: &TokenId) -> Result<&TokenState> {
        self.tokens
            .get(id)
            .ok_or_else(|| Error::UnknownToken(id.clone()))
    }

    fn token_mut(&mut self, id: &TokenId) -> Result<&mut TokenState> {
        self.tokens
            .get_mut(id)
            .ok_or_else(|| Error::UnknownToken(id.clone()))
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&serde_json::to_vec(self).expect("state serializes"))
    }

    pub fn conserves(&self) -> bool {
        self.tokens.values().all(TokenState::conserves)
    }

    pub fn apply(&mut self, event: &LedgerEvent) -> Result<()> {
        let body = EventBody::from_payload(event.kind, &event.payload)?;
        self.apply_body(event.seq, event.at, &body)
    }

    fn charge_fee(&mut self, fee: Option<&RelayFee>) -> Result<()> {
        if let Some(f) = fee {
            let t = self.token_mut(&f.fee_token)?;
            t.debit_free(&f.relayer, f.fee)
                .map_err(|_| Error::RelayerInsufficientFee(f.relayer.clone()))?;
            t.credit_free(&f.collector, f.fee)?;
        }
        Ok(())
    }

    fn execute_movement(&mut self, seq: u64, at: LogicalTime, m: &Movement) -> Result<()> {
        let t = self.token_mut(&m.token)?;
        t.move_free(&m.from, &m.to, m.amount)?;
        t.history.push(TransferRecord {
            seq,
            from: m.from.clone(),
            to: m.to.clone(),
            amount: m.amount,
            at,
            cancelled: false,
        });
        Ok(())
    }

    pub fn apply_body(&mut self, seq: u64, at: LogicalTime, body: &EventBody) -> Result<()> {
        match body {
            EventBody::IdentityRegistered {
                subject,
                profile_digest,
                roles,
            } => {
                self.identities.apply_register(subject, *profile_digest, at)?;
                self.roles.insert(subject.clone(), roles.clone());
            }
            EventBody::IdentityUpdated {
                subject,
                profile_digest,
                version,
            } => {
                self.identities
                    .apply_update(subject, *profile_digest, *version, at)?;
            }
            EventBody::KycStatusSet {
                subject,
                status,
                risk,
                ..
            } => {
                self.identities.apply_kyc(subject, *status, *risk, at)?;
            }
            EventBody::BlacklistAdded {
                subject,
                actor,
                reason,
            } => {
                self.identities
                    .apply_blacklist_add(subject, actor, reason, at)?;
            }
            EventBody::BlacklistRemoved { subject, actor } => {
                self.identities.apply_blacklist_remove(subject, actor, at)?;
            }
            EventBody::TokenDefined {
                definition,
                policy,
                anchors,
                ..
            } => {
                let id = definition.token_id.clone();
                if self.tokens.contains_key(&id) {
                    return Err(Error::AlreadyDefined(id));
                }
                definition.validate()?;
                policy.validate(definition.decimals())?;
                if definition.contract_version != 1 || definition.lifecycle != Lifecycle::Active {
                    return Err(Error::Parse("new token must be Active at version 1".into()));
                }
                let ids: Vec<String> = anchors.iter().map(|a| a.doc_id.clone()).collect();
                if ids != definition.document_anchors {
                    return Err(Error::Parse("anchor list disagrees with definition".into()));
                }
                if let Some(parent) = &definition.parent {
                    let p = self.token_mut(parent)?;
                    if p.split_child.is_some() {
                        return Err(Error::NotSplittable(parent.clone()));
                    }
                    p.split_child = Some(id.clone());
                }
                self.tokens.insert(
                    id,
                    TokenState {
                        def: (**definition).clone(),
                        policy: (**policy).clone(),
                        anchors: anchors.clone(),
                        holdings: BTreeMap::new(),
                        minted: 0,
                        burned: 0,
                        expired: false,
                        contract_history: vec![ContractVersion {
                            version: 1,
                            seq,
                            at,
                            change: "defined".into(),
                        }],
                        history: Vec::new(),
                        split_child: None,
                    },
                );
            }
            EventBody::ContractAmended {
                token,
                version,
                amendment,
                ..
            } => {
                let t = self.token_mut(token)?;
                t.require_live()?;
                let expected = t.def.contract_version.checked_add(1).ok_or(Error::Overflow)?;
                if *version != expected {
                    return Err(Error::Parse(format!(
                        "contract version {version}, expected {expected}"
                    )));
                }
                let change = match amendment {
                    Amendment::Revision => "revision",
                    Amendment::Policy(policy) => {
                        policy.validate(t.def.decimals())?;
                        t.policy = (**policy).clone();
                        "policy"
                    }
                    Amendment::Expired => {
                        t.expired = true;
                        "expired"
                    }
                };
                t.def.contract_version = *version;
                t.contract_history.push(ContractVersion {
                    version: *version,
                    seq,
                    at,
                    change: change.into(),
                });
            }
            EventBody::DocumentAttached { token, anchor, .. } => {
                let t = self.token_mut(token)?;
                t.require_live()?;
                t.def.document_anchors.push(anchor.doc_id.clone());
                t.anchors.push(anchor.clone());
            }
            EventBody::Minted { token, to, amount, .. } => {
                let t = self.token_mut(token)?;
                match t.def.lifecycle {
                    Lifecycle::Active => {}
                    Lifecycle::Paused => return Err(Error::TokenPaused(token.clone())),
                    Lifecycle::Killed => return Err(Error::TokenKilled(token.clone())),
                }
                let minted = t.minted.checked_add(*amount).ok_or(Error::Overflow)?;
                if t.def.supply_cap.is_some_and(|cap| minted > cap) {
                    return Err(Error::SupplyCapExceeded {
                        token: token.clone(),
                    });
                }
                t.minted = minted;
                t.credit_free(to, *amount)?;
            }
            EventBody::Burned {
                token,
                from,
                from_free,
                from_frozen,
                ..
            } => {
                let t = self.token_mut(token)?;
                t.debit_free(from, *from_free)?;
                t.debit_frozen(from, *from_frozen)?;
                t.burn(from_free.checked_add(*from_frozen).ok_or(Error::Overflow)?)?;
            }
            EventBody::TransferExecuted { movement, fee, .. }
            | EventBody::SettlementExecuted { movement, fee, .. } => {
                self.charge_fee(fee.as_ref())?;
                self.token(&movement.token)?.require_live()?;
                self.execute_movement(seq, at, movement)?;
            }
            EventBody::TransferRejected { token, fee, .. } => {
                self.token(token)?;
                self.charge_fee(fee.as_ref())?;
            }
            EventBody::CorrectionCancel {
                original_seq,
                token,
                from,
                to,
                amount,
                ..
            } => {
                if self.corrections.contains_key(original_seq) {
                    return Err(Error::Parse(format!("seq {original_seq} already corrected")));
                }
                let t = self.token_mut(token)?;
                let record = t
                    .history
                    .iter_mut()
                    .find(|r| r.seq == *original_seq && !r.cancelled)
                    .ok_or_else(|| Error::NotFound(format!("transfer at seq {original_seq}")))?;
                if (&record.from, &record.to, record.amount) != (from, to, *amount) {
                    return Err(Error::Parse("cancel marker disagrees with original".into()));
                }
                record.cancelled = true;
                t.move_free(to, from, *amount)?;
                self.corrections.insert(
                    *original_seq,
                    CorrectionPair {
                        cancel_seq: seq,
                        new_seq: None,
                    },
                );
            }
            EventBody::CorrectionNew {
                original_seq,
                cancel_seq,
                token,
                from,
                to,
                amount,
                ..
            } => {
                let pair = self
                    .corrections
                    .get(original_seq)
                    .copied()
                    .ok_or_else(|| Error::NotFound(format!("cancel marker for seq {original_seq}")))?;
                if pair.cancel_seq != *cancel_seq || pair.new_seq.is_some() || *cancel_seq >= seq {
                    return Err(Error::Parse("correction pair out of order".into()));
                }
                self.execute_movement(
                    seq,
                    at,
                    &Movement {
                        token: token.clone(),
                        from: from.clone(),
                        to: to.clone(),
                        amount: *amount,
                        wire: false,
                        relayed_by: None,
                    },
                )?;
                self.corrections.insert(
                    *original_seq,
                    CorrectionPair {
                        cancel_seq: *cancel_seq,
                        new_seq: Some(seq),
                    },
                );
            }
            EventBody::Frozen {
                token,
                account,
                amount,
                ..
            } => {
                let t = self.token_mut(token)?;
                t.debit_free(account, *amount)?;
                t.credit_frozen(account, *amount)?;
            }
            EventBody::Unfrozen {
                token,
                account,
                amount,
                release_split,
                ..
            } => {
                let t = self.token_mut(token)?;
                if *release_split {
                    let child = t.split_child.take().ok_or(Error::NotSplittable(token.clone()))?;
                    let c = self.token(&child)?;
                    if c.outstanding() != 0 {
                        return Err(Error::Degenerate("derived lots still outstanding".into()));
                    }
                } else if t.split_child.is_some() {
                    return Err(Error::Degenerate(format!("{token} is escrowed for a split")));
                }
                let t = self.token_mut(token)?;
                t.debit_frozen(account, *amount)?;
                t.credit_free(account, *amount)?;
            }
            EventBody::Recovered {
                token,
                from,
                to,
                from_frozen,
                from_free,
                ..
            } => {
                let t = self.token_mut(token)?;
                t.debit_frozen(from, *from_frozen)?;
                t.debit_free(from, *from_free)?;
                t.credit_free(to, from_frozen.checked_add(*from_free).ok_or(Error::Overflow)?)?;
            }
            EventBody::Paused { token, .. } => {
                let t = self.token_mut(token)?;
                t.def.lifecycle = t.def.lifecycle.transition(Lifecycle::Paused)?;
            }
            EventBody::Resumed { token, .. } => {
                let t = self.token_mut(token)?;
                if t.def.lifecycle != Lifecycle::Paused {
                    return Err(Error::BadLifecycle {
                        from: t.def.lifecycle,
                        to: Lifecycle::Active,
                    });
                }
                t.def.lifecycle = Lifecycle::Active;
            }
            EventBody::Killed { token, repeat, .. } => {
                let t = self.token_mut(token)?;
                if *repeat != (t.def.lifecycle == Lifecycle::Killed) {
                    return Err(Error::Parse("kill repeat flag disagrees with lifecycle".into()));
                }
                t.def.lifecycle = Lifecycle::Killed;
            }
            EventBody::ForcedLiquidation {
                token,
                account,
                free,
                frozen,
                ..
            } => {
                let t = self.token_mut(token)?;
                if t.holding(account) != (Holding { free: *free, frozen: *frozen }) {
                    return Err(Error::Parse("liquidation must take the whole holding".into()));
                }
                t.debit_free(account, *free)?;
                t.debit_frozen(account, *frozen)?;
                t.burn(free.checked_add(*frozen).ok_or(Error::Overflow)?)?;
            }
            EventBody::AlertRaised(alert) => {
                *self.alerts.entry(alert.kind.to_string()).or_default() += 1;
            }
            EventBody::SwapPrepared {
                swap_id,
                token,
                from,
                to,
                amount,
                ..
            } => {
                if self.swaps.contains_key(swap_id) {
                    return Err(Error::Parse(format!("swap {swap_id} already exists")));
                }
                let t = self.token_mut(token)?;
                t.require_live()?;
                t.debit_free(from, *amount)?;
                t.credit_frozen(from, *amount)?;
                self.swaps.insert(
                    swap_id.clone(),
                    SwapLeg {
                        token: token.clone(),
                        from: from.clone(),
                        to: Some(to.clone()),
                        amount: *amount,
                        phase: SwapPhase::Prepared,
                    },
                );
            }
            EventBody::SwapCommitted {
                swap_id,
                token,
                from,
                to,
                amount,
            } => {
                let leg = self
                    .swaps
                    .get(swap_id)
                    .ok_or_else(|| Error::NotFound(format!("swap {swap_id}")))?;
                let expected = (&leg.token, &leg.from, leg.to.as_ref(), leg.amount);
                if leg.phase != SwapPhase::Prepared || expected != (token, from, Some(to), *amount) {
                    return Err(Error::Parse(format!("swap {swap_id} cannot commit")));
                }
                let t = self.token_mut(token)?;
                t.debit_frozen(from, *amount)?;
                t.credit_free(to, *amount)?;
                t.history.push(TransferRecord {
                    seq,
                    from: from.clone(),
                    to: to.clone(),
                    amount: *amount,
                    at,
                    cancelled: false,
                });
                self.swaps.get_mut(swap_id).expect("present").phase = SwapPhase::Committed;
            }
            EventBody::SwapAborted {
                swap_id,
                token,
                from,
                released,
                ..
            } => {
                match self.swaps.get(swap_id) {
                    Some(leg) => {
                        if leg.phase != SwapPhase::Prepared
                            || (&leg.token, &leg.from, leg.amount) != (token, from, *released)
                        {
                            return Err(Error::Parse(format!("swap {swap_id} cannot abort")));
                        }
                        let t = self.token_mut(token)?;
                        t.debit_frozen(from, *released)?;
                        t.credit_free(from, *released)?;
                        self.swaps.get_mut(swap_id).expect("present").phase = SwapPhase::Aborted;
                    }
                    None => {
                        if *released != 0 {
                            return Err(Error::Parse(format!("swap {swap_id} held no lock")));
                        }
                        self.token(token)?;
                        self.swaps.insert(
                            swap_id.clone(),
                            SwapLeg {
                                token: token.clone(),
                                from: from.clone(),
                                to: None,
                                amount: 0,
                                phase: SwapPhase::Aborted,
                            },
                        );
                    }
                }
            }
            EventBody::AuditExported { from_seq, to_seq, .. } => {
                if from_seq > to_seq || *to_seq >= seq {
                    return Err(Error::BadRange {
                        from: *from_seq,
                        to: *to_seq,
                    });
                }
                self.audit_exports += 1;
            }
        }
        Ok(())
    }
}

/// Folds a whole event sequence into a fresh state.
pub fn replay(events: &[LedgerEvent]) -> Result<State> {
    let mut state = State::default();
    for (line, event) in events.iter().enumerate() {
        state.apply(event).map_err(|e| Error::CorruptLog {
            line: line as u64 + 1,
            reason: e.to_string(),
        })?;
    }
    Ok(state)
}
