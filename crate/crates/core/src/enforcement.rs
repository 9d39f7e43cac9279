//! State-mutating regulatory and issuer actions.
//!
//! Recovery and forced liquidation do not pass through the transfer
//! pipeline: they are the remedy for accounts that fail it.

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::events::{Amendment, EventBody};
use crate::ledger::{DocumentAnchor, EventKind, LedgerEvent};
use crate::model::{
    AccountId, Amount, AssetClassDescriptor, Fungibility, Lifecycle, LogicalTime, TokenDefinition,
    TokenId,
};
use crate::policy::{check_transfer_as, Decision, PolicySet, ReasonCode, TransferRequest};
use crate::state::{State, SwapPhase, TokenState};

pub const SPLITTABLE_TAG: &str = "splittable";

/// Replacement terms for a corrected transfer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectedTransfer {
    pub to: AccountId,
    pub amount: Amount,
}

/// Outcome of the prepare phase of a swap leg.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SwapVote {
    Prepared(Vec<LedgerEvent>),
    Rejected(Vec<ReasonCode>),
}

fn live(token: &TokenState) -> Result<()> {
    match token.def.lifecycle {
        Lifecycle::Killed => Err(Error::TokenKilled(token.def.token_id.clone())),
        _ => Ok(()),
    }
}

impl Engine {
    fn issuer_only(&self, token: &TokenId, actor: &AccountId, action: &str) -> Result<&TokenState> {
        self.require_account(actor)?;
        let t = self.token(token)?;
        if &t.def.issuer != actor {
            return Err(Engine::denied(actor, action));
        }
        Ok(t)
    }

    fn one(&mut self, at: LogicalTime, body: EventBody) -> Result<LedgerEvent> {
        Ok(self.commit(at, vec![body])?.remove(0))
    }

    /// Defines a token at contract version 1. Compliant classes under a
    /// policy that requires documents need at least one anchor.
    pub fn define_token(
        &mut self,
        mut def: TokenDefinition,
        policy: PolicySet,
        anchors: Vec<DocumentAnchor>,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<LedgerEvent> {
        self.require_account(actor)?;
        if &def.issuer != actor {
            return Err(Engine::denied(actor, "define_token"));
        }
        if self.state().tokens.contains_key(&def.token_id) {
            return Err(Error::AlreadyDefined(def.token_id));
        }
        if def.parent.is_some() {
            return Err(Error::Degenerate("derived tokens come from split_lot".into()));
        }
        def.validate()?;
        policy.validate(def.decimals())?;
        if policy.require_documents && def.class.compliant && anchors.is_empty() {
            return Err(Error::DocumentsRequired(def.token_id));
        }
        def.contract_version = 1;
        def.lifecycle = Lifecycle::Active;
        def.document_anchors = anchors.iter().map(|a| a.doc_id.clone()).collect();
        let body = EventBody::TokenDefined {
            definition: Box::new(def),
            policy: Box::new(policy),
            anchors,
            actor: actor.clone(),
        };
        self.one(at, body)
    }

    /// Issuer mints within the supply cap.
    pub fn mint(
        &mut self,
        token: &TokenId,
        to: &AccountId,
        amount: Amount,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<LedgerEvent> {
        let t = self.issuer_only(token, actor, "mint")?;
        match t.def.lifecycle {
            Lifecycle::Killed => return Err(Error::TokenKilled(token.clone())),
            Lifecycle::Paused => return Err(Error::TokenPaused(token.clone())),
            Lifecycle::Active => {}
        }
        let amount = self.scaled(token, amount)?;
        self.one(
            at,
            EventBody::Minted {
                token: token.clone(),
                to: to.clone(),
                amount,
                actor: actor.clone(),
            },
        )
    }

    /// Voluntary burn by the holder draws free balance only; a regulator
    /// burn draws frozen balance first, then free.
    pub fn burn(
        &mut self,
        token: &TokenId,
        from: &AccountId,
        amount: Amount,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<LedgerEvent> {
        self.require_account(actor)?;
        let amount = self.scaled(token, amount)?;
        let t = self.token(token)?;
        live(t)?;
        let holding = t.holding(from);
        let insufficient = || Error::InsufficientBalance {
            account: from.clone(),
            token: token.clone(),
        };
        let (from_free, from_frozen) = if actor == from {
            if holding.free < amount {
                return Err(insufficient());
            }
            (amount, 0)
        } else {
            self.permit_token("burn_forced", token, actor)?;
            if holding.total() < amount {
                return Err(insufficient());
            }
            let frozen = holding.frozen.min(amount);
            (amount - frozen, frozen)
        };
        self.one(
            at,
            EventBody::Burned {
                token: token.clone(),
                from: from.clone(),
                from_free,
                from_frozen,
                actor: actor.clone(),
            },
        )
    }

    pub fn freeze(
        &mut self,
        token: &TokenId,
        account: &AccountId,
        amount: Amount,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<LedgerEvent> {
        self.permit_token("freeze", token, actor)?;
        let amount = self.scaled(token, amount)?;
        let t = self.token(token)?;
        live(t)?;
        if t.holding(account).free < amount {
            return Err(Error::InsufficientBalance {
                account: account.clone(),
                token: token.clone(),
            });
        }
        self.one(
            at,
            EventBody::Frozen {
                token: token.clone(),
                account: account.clone(),
                amount,
                actor: actor.clone(),
            },
        )
    }

    pub fn unfreeze(
        &mut self,
        token: &TokenId,
        account: &AccountId,
        amount: Amount,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<LedgerEvent> {
        self.permit_token("unfreeze", token, actor)?;
        let amount = self.scaled(token, amount)?;
        let t = self.token(token)?;
        live(t)?;
        if t.split_child.is_some() {
            return Err(Error::Degenerate(format!("{token} is escrowed for a split")));
        }
        if t.holding(account).frozen < amount {
            return Err(Error::InsufficientBalance {
                account: account.clone(),
                token: token.clone(),
            });
        }
        self.one(
            at,
            EventBody::Unfrozen {
                token: token.clone(),
                account: account.clone(),
                amount,
                actor: actor.clone(),
                release_split: false,
            },
        )
    }

    /// Moves funds to a designated recovery account without the holder's
    /// consent, frozen balance first. Remains available after a kill.
    pub fn recover(
        &mut self,
        token: &TokenId,
        from: &AccountId,
        to_recovery: &AccountId,
        amount: Amount,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<LedgerEvent> {
        self.permit_token("recover", token, actor)?;
        let amount = self.scaled(token, amount)?;
        let t = self.token(token)?;
        if !t.policy.recovery_accounts.contains(to_recovery) {
            return Err(Error::NotDesignatedRecovery(to_recovery.clone()));
        }
        if from == to_recovery {
            return Err(Error::Degenerate("recovery into the source account".into()));
        }
        let holding = t.holding(from);
        if holding.total() < amount {
            return Err(Error::InsufficientBalance {
                account: from.clone(),
                token: token.clone(),
            });
        }
        let from_frozen = holding.frozen.min(amount);
        self.one(
            at,
            EventBody::Recovered {
                token: token.clone(),
                from: from.clone(),
                to: to_recovery.clone(),
                from_frozen,
                from_free: amount - from_frozen,
                actor: actor.clone(),
            },
        )
    }

    pub fn pause(&mut self, token: &TokenId, actor: &AccountId, at: LogicalTime) -> Result<LedgerEvent> {
        self.permit_token("pause", token, actor)?;
        self.token(token)?.def.lifecycle.transition(Lifecycle::Paused)?;
        self.one(
            at,
            EventBody::Paused {
                token: token.clone(),
                actor: actor.clone(),
            },
        )
    }

    pub fn resume(&mut self, token: &TokenId, actor: &AccountId, at: LogicalTime) -> Result<LedgerEvent> {
        self.permit_token("resume", token, actor)?;
        let lifecycle = self.token(token)?.def.lifecycle;
        if lifecycle != Lifecycle::Paused {
            return Err(Error::BadLifecycle {
                from: lifecycle,
                to: Lifecycle::Active,
            });
        }
        self.one(
            at,
            EventBody::Resumed {
                token: token.clone(),
                actor: actor.clone(),
            },
        )
    }

    /// Irreversible. A second kill appends a no-op marker event.
    pub fn kill_switch(&mut self, token: &TokenId, actor: &AccountId, at: LogicalTime) -> Result<LedgerEvent> {
        self.permit_token("kill", token, actor)?;
        let repeat = self.token(token)?.def.lifecycle == Lifecycle::Killed;
        self.one(
            at,
            EventBody::Killed {
                token: token.clone(),
                actor: actor.clone(),
                repeat,
            },
        )
    }

    /// Burns the account's entire holding, free and frozen.
    pub fn force_liquidate(
        &mut self,
        account: &AccountId,
        token: &TokenId,
        note: &str,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<LedgerEvent> {
        self.permit_token("liquidate", token, actor)?;
        let t = self.token(token)?;
        live(t)?;
        let holding = t.holding(account);
        if holding.total() == 0 {
            return Err(Error::EmptyHolding {
                account: account.clone(),
                token: token.clone(),
            });
        }
        self.one(
            at,
            EventBody::ForcedLiquidation {
                token: token.clone(),
                account: account.clone(),
                free: holding.free,
                frozen: holding.frozen,
                note: note.to_string(),
                actor: actor.clone(),
            },
        )
    }

    /// Marks the token expired once `at ≥ expiry`; transfers then reject
    /// RCP-23 except redemptions to the issuer.
    pub fn expire_sweep(&mut self, token: &TokenId, at: LogicalTime) -> Result<Vec<LedgerEvent>> {
        let t = self.token(token)?;
        live(t)?;
        match t.def.expiry {
            Some(expiry) if at >= expiry => {}
            _ => return Err(Error::NotExpired(token.clone())),
        }
        if t.expired {
            return Ok(Vec::new());
        }
        let body = EventBody::ContractAmended {
            token: token.clone(),
            actor: t.def.issuer.clone(),
            version: t.def.contract_version + 1,
            amendment: Amendment::Expired,
        };
        self.commit(at, vec![body])
    }

    /// Escrows a splittable NFT and issues `fractions` whole-unit lots of a
    /// derived fungible token to its holder.
    pub fn split_lot(
        &mut self,
        nft: &TokenId,
        fractions: u128,
        lot_token: &TokenId,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<Vec<LedgerEvent>> {
        let t = self.issuer_only(nft, actor, "split")?;
        live(t)?;
        if !t.def.is_nft() || !t.def.class.has_tag(SPLITTABLE_TAG) || t.split_child.is_some() {
            return Err(Error::NotSplittable(nft.clone()));
        }
        if fractions == 0 {
            return Err(Error::Degenerate("split into zero lots".into()));
        }
        if self.state().tokens.contains_key(lot_token) {
            return Err(Error::AlreadyDefined(lot_token.clone()));
        }
        let holder = t
            .holdings
            .iter()
            .find(|(_, h)| h.free == 1)
            .map(|(a, _)| a.clone())
            .ok_or_else(|| Error::Degenerate(format!("{nft} has no free holder")))?;
        let mut class = AssetClassDescriptor {
            fungibility: Fungibility::Fungible,
            subdivisible: false,
            decimals: 0,
            ..t.def.class.clone()
        };
        class.behavior_tags.remove(SPLITTABLE_TAG);
        let derived = TokenDefinition {
            token_id: lot_token.clone(),
            class,
            issuer: t.def.issuer.clone(),
            supply_cap: Some(fractions),
            expiry: t.def.expiry,
            contract_version: 1,
            document_anchors: t.def.document_anchors.clone(),
            lifecycle: Lifecycle::Active,
            parent: Some(nft.clone()),
        };
        let bodies = vec![
            EventBody::Frozen {
                token: nft.clone(),
                account: holder.clone(),
                amount: 1,
                actor: actor.clone(),
            },
            EventBody::TokenDefined {
                definition: Box::new(derived),
                policy: Box::new(t.policy.clone()),
                anchors: t.anchors.clone(),
                actor: actor.clone(),
            },
            EventBody::Minted {
                token: lot_token.clone(),
                to: holder,
                amount: fractions,
                actor: actor.clone(),
            },
        ];
        self.commit(at, bodies)
    }

    /// Burns every outstanding lot (all held by `holder`) and releases the
    /// escrowed parent.
    pub fn merge_lots(&mut self, nft: &TokenId, holder: &AccountId, at: LogicalTime) -> Result<Vec<LedgerEvent>> {
        self.require_account(holder)?;
        let t = self.token(nft)?;
        live(t)?;
        let child = t.split_child.clone().ok_or_else(|| Error::NotSplittable(nft.clone()))?;
        if t.holding(holder).frozen != 1 {
            return Err(Error::EmptyHolding {
                account: holder.clone(),
                token: nft.clone(),
            });
        }
        let lots = self.token(&child)?;
        let held = lots.holding(holder);
        if held.frozen != 0 || held.free != lots.outstanding() {
            return Err(Error::Degenerate(format!("{holder} does not hold every lot of {child}")));
        }
        let mut bodies = Vec::new();
        if held.free > 0 {
            bodies.push(EventBody::Burned {
                token: child,
                from: holder.clone(),
                from_free: held.free,
                from_frozen: 0,
                actor: holder.clone(),
            });
        }
        bodies.push(EventBody::Unfrozen {
            token: nft.clone(),
            account: holder.clone(),
            amount: 1,
            actor: holder.clone(),
            release_split: true,
        });
        self.commit(at, bodies)
    }

    pub fn attach_document(
        &mut self,
        token: &TokenId,
        anchor: DocumentAnchor,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<LedgerEvent> {
        let t = self.token(token)?;
        if &t.def.issuer != actor {
            self.permit_token("attach_document", token, actor)?;
        }
        self.require_account(actor)?;
        live(self.token(token)?)?;
        self.one(
            at,
            EventBody::DocumentAttached {
                token: token.clone(),
                anchor,
                actor: actor.clone(),
            },
        )
    }

    pub fn amend_contract(&mut self, token: &TokenId, actor: &AccountId, at: LogicalTime) -> Result<LedgerEvent> {
        let t = self.issuer_only(token, actor, "amend")?;
        live(t)?;
        let version = t.def.contract_version.checked_add(1).ok_or(Error::Overflow)?;
        self.one(
            at,
            EventBody::ContractAmended {
                token: token.clone(),
                actor: actor.clone(),
                version,
                amendment: Amendment::Revision,
            },
        )
    }

    /// Replaces a token's policy; issuer or a `policy_set` role.
    pub fn set_policy(
        &mut self,
        token: &TokenId,
        policy: PolicySet,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<LedgerEvent> {
        let t = self.token(token)?;
        if &t.def.issuer != actor {
            self.permit_token("policy_set", token, actor)?;
        }
        self.require_account(actor)?;
        let t = self.token(token)?;
        live(t)?;
        policy.validate(t.def.decimals())?;
        let version = t.def.contract_version.checked_add(1).ok_or(Error::Overflow)?;
        self.one(
            at,
            EventBody::ContractAmended {
                token: token.clone(),
                actor: actor.clone(),
                version,
                amendment: Amendment::Policy(Box::new(policy)),
            },
        )
    }

    /// Appends a cancel marker reversing the original transfer and a new
    /// record with the corrected terms. The original event is untouched.
    pub fn correct(
        &mut self,
        original_seq: u64,
        corrected: &CorrectedTransfer,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<Vec<LedgerEvent>> {
        self.permit_engine("correct", actor)?;
        let original = self
            .log()
            .get(original_seq)
            .ok_or_else(|| Error::NotFound(format!("event {original_seq}")))?;
        let movement = match EventBody::from_payload(original.kind, &original.payload)? {
            EventBody::TransferExecuted { movement, .. } | EventBody::SettlementExecuted { movement, .. } => movement,
            _ => return Err(Error::NotCorrectable(original.kind)),
        };
        if self.state().corrections.contains_key(&original_seq) {
            return Err(Error::Degenerate(format!("event {original_seq} already corrected")));
        }
        live(self.token(&movement.token)?)?;
        let amount = self.scaled(&movement.token, corrected.amount)?;
        if corrected.to == movement.from {
            return Err(Error::Degenerate("corrected receiver is the sender".into()));
        }
        let cancel_seq = self.log().len() as u64;
        let bodies = vec![
            EventBody::CorrectionCancel {
                original_seq,
                token: movement.token.clone(),
                from: movement.from.clone(),
                to: movement.to.clone(),
                amount: movement.amount,
                actor: actor.clone(),
            },
            EventBody::CorrectionNew {
                original_seq,
                cancel_seq,
                token: movement.token,
                from: movement.from,
                to: corrected.to.clone(),
                amount,
                actor: actor.clone(),
            },
        ];
        self.commit(at, bodies)
    }

    // ---- cross-ledger swap legs ----

    /// Phase one: check the leg and lock its amount if approved.
    pub fn swap_prepare(
        &mut self,
        swap_id: &str,
        req: &TransferRequest,
        actor: &AccountId,
        counterpart: &str,
        at: LogicalTime,
    ) -> Result<SwapVote> {
        self.require_account(actor)?;
        if self.state().swaps.contains_key(swap_id) {
            return Err(Error::Degenerate(format!("swap {swap_id} already known")));
        }
        let mut req = req.clone();
        req.at = at;
        let verdict = check_transfer_as(&req, actor, self.state())?;
        if let Decision::Rejected(codes) = verdict.decision {
            return Ok(SwapVote::Rejected(codes));
        }
        let amount = self.scaled(&req.token_id, req.amount)?;
        let mut bodies = vec![EventBody::SwapPrepared {
            swap_id: swap_id.to_string(),
            token: req.token_id.clone(),
            from: req.from.clone(),
            to: req.to.clone(),
            amount,
            counterpart: counterpart.to_string(),
        }];
        bodies.extend(verdict.alerts.into_iter().map(EventBody::AlertRaised));
        Ok(SwapVote::Prepared(self.commit(at, bodies)?))
    }

    /// Phase two commit. Idempotent once committed.
    pub fn swap_commit(&mut self, swap_id: &str, at: LogicalTime) -> Result<Vec<LedgerEvent>> {
        let leg = self
            .state()
            .swaps
            .get(swap_id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("swap {swap_id}")))?;
        match leg.phase {
            SwapPhase::Committed => Ok(Vec::new()),
            SwapPhase::Aborted => Err(Error::Degenerate(format!("swap {swap_id} was aborted"))),
            SwapPhase::Prepared => {
                let to = leg.to.expect("prepared legs name a receiver");
                self.commit(
                    at,
                    vec![EventBody::SwapCommitted {
                        swap_id: swap_id.to_string(),
                        token: leg.token,
                        from: leg.from,
                        to,
                        amount: leg.amount,
                    }],
                )
            }
        }
    }

    /// Abort, releasing any lock. Idempotent once aborted.
    pub fn swap_abort(
        &mut self,
        swap_id: &str,
        req: &TransferRequest,
        reasons: &[ReasonCode],
        note: &str,
        at: LogicalTime,
    ) -> Result<Vec<LedgerEvent>> {
        let (token, from, released) = match self.state().swaps.get(swap_id) {
            Some(leg) if leg.phase == SwapPhase::Aborted => return Ok(Vec::new()),
            Some(leg) if leg.phase == SwapPhase::Committed => {
                return Err(Error::Degenerate(format!("swap {swap_id} already committed")))
            }
            Some(leg) => (leg.token.clone(), leg.from.clone(), leg.amount),
            None => (req.token_id.clone(), req.from.clone(), 0),
        };
        self.commit(
            at,
            vec![EventBody::SwapAborted {
                swap_id: swap_id.to_string(),
                token,
                from,
                released,
                reasons: reasons.to_vec(),
                note: note.to_string(),
            }],
        )
    }
}

/// Replays `events` as if every corrected transfer had carried its
/// corrected terms originally: correction pairs are dropped and the
/// original records are substituted in place.
pub fn as_if_replay(events: &[LedgerEvent]) -> Result<State> {
    let mut substitutes = std::collections::BTreeMap::new();
    for e in events {
        if e.kind == EventKind::CorrectionNew {
            if let EventBody::CorrectionNew {
                original_seq, to, amount, ..
            } = EventBody::from_payload(e.kind, &e.payload)?
            {
                substitutes.insert(original_seq, (to, amount));
            }
        }
    }
    let mut state = State::default();
    for e in events {
        if matches!(e.kind, EventKind::CorrectionCancel | EventKind::CorrectionNew) {
            continue;
        }
        let mut body = EventBody::from_payload(e.kind, &e.payload)?;
        if let Some((to, amount)) = substitutes.get(&e.seq) {
            if let EventBody::TransferExecuted { movement, .. } | EventBody::SettlementExecuted { movement, .. } =
                &mut body
            {
                movement.to = to.clone();
                movement.amount = *amount;
            }
        }
        state.apply_body(e.seq, e.at, &body)?;
    }
    Ok(state)
}
