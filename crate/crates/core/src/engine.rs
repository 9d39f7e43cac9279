//! The serialized command loop.
//!
//! Every command validates against the current state, builds its event
//! bodies, folds them into a copy of the state and only then seals them
//! into the log, so a command either lands completely or not at all.

use std::collections::BTreeSet;

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::events::{EventBody, Movement, RelayFee};
use crate::identity::{KycStatus, RiskRating};
use crate::ledger::{CanonicalWriter, Digest, EventLog, LedgerEvent};
use crate::model::{AccountId, Amount, LogicalTime, PartyRole, TokenId};
use crate::policy::{check_permission, check_transfer_as, ComplianceVerdict, Decision, PermissionTable, ReasonCode, TransferRequest};
use crate::state::{self, State, TokenState};

/// Result of a transfer-like command. Rejections are recorded too.
#[derive(Debug, Clone)]
pub struct TransferOutcome {
    pub verdict: ComplianceVerdict,
    pub events: Vec<LedgerEvent>,
}

impl TransferOutcome {
    pub fn is_approved(&self) -> bool {
        self.verdict.is_approved()
    }

    /// The transfer or rejection event (the first one sealed).
    pub fn record(&self) -> &LedgerEvent {
        &self.events[0]
    }
}

/// A transfer signed by its sender and submitted (and paid for) by a relayer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaTransferAuthorization {
    pub inner: TransferRequest,
    pub signer: AccountId,
    pub relayer: AccountId,
    pub fee_token: TokenId,
    pub fee: Amount,
    pub signature_digest: Digest,
}

/// Canonical encoding of a transfer request, as bound by a signature.
pub fn canonical_request(req: &TransferRequest) -> Vec<u8> {
    let mut w = CanonicalWriter::new();
    w.field(req.token_id.as_str())
        .field(req.from.as_str())
        .field(req.to.as_str())
        .field(&req.amount.to_string())
        .field(if req.wire { "true" } else { "false" })
        .field(req.relayed_by.as_ref().map_or("", |r| r.as_str()))
        .field(&req.at.seconds().to_string());
    w.finish().to_vec()
}

/// SHA-256(signer ‖ canonical(inner)).
pub fn sign_request(signer: &AccountId, inner: &TransferRequest) -> Digest {
    let mut bytes = signer.as_str().as_bytes().to_vec();
    bytes.extend(canonical_request(inner));
    Digest::of(&bytes)
}

impl MetaTransferAuthorization {
    pub fn new(
        inner: TransferRequest,
        relayer: AccountId,
        fee_token: TokenId,
        fee: Amount,
    ) -> MetaTransferAuthorization {
        let signer = inner.from.clone();
        let signature_digest = sign_request(&signer, &inner);
        MetaTransferAuthorization {
            inner,
            signer,
            relayer,
            fee_token,
            fee,
            signature_digest,
        }
    }

    pub fn verifies(&self) -> bool {
        self.signer == self.inner.from && sign_request(&self.signer, &self.inner) == self.signature_digest
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Recording {
    Transfer,
    Settlement,
}

#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    log: EventLog,
    state: State,
}

impl Default for Engine {
    fn default() -> Self {
        Engine::new(EngineConfig::default())
    }
}

impl Engine {
    pub fn new(config: EngineConfig) -> Engine {
        Engine {
            config,
            log: EventLog::new(),
            state: State::default(),
        }
    }

    /// Rebuilds an engine from its log alone.
    pub fn from_log(config: EngineConfig, log: EventLog) -> Result<Engine> {
        let state = state::replay(log.events())?;
        Ok(Engine { config, log, state })
    }

    /// Verifies and replays a serialized log.
    pub fn replay_bytes(config: EngineConfig, bytes: &[u8]) -> Result<Engine> {
        Engine::from_log(config, EventLog::from_bytes(bytes)?)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn state_digest(&self) -> Digest {
        self.state.digest()
    }

    pub fn instance(&self) -> &str {
        &self.config.instance
    }

    pub fn token(&self, id: &TokenId) -> Result<&TokenState> {
        self.state.token(id)
    }

    /// Applies `bodies` atomically and seals them.
    pub(crate) fn commit(&mut self, at: LogicalTime, bodies: Vec<EventBody>) -> Result<Vec<LedgerEvent>> {
        let last = self.log.last_time();
        if !self.log.is_empty() && at < last {
            return Err(Error::TimeRegression {
                last: last.seconds(),
                at: at.seconds(),
            });
        }
        let mut next = self.state.clone();
        let base = self.log.len() as u64;
        for (i, body) in bodies.iter().enumerate() {
            next.apply_body(base + i as u64, at, body)?;
        }
        let mut sealed = Vec::with_capacity(bodies.len());
        for body in &bodies {
            sealed.push(self.log.append(body.kind(), body.to_payload(), at)?);
        }
        self.state = next;
        Ok(sealed)
    }

    pub(crate) fn require_account(&self, actor: &AccountId) -> Result<()> {
        if self.state.is_registered(actor) {
            Ok(())
        } else {
            Err(Error::UnknownAccount(actor.clone()))
        }
    }

    fn permit(&self, action: &str, table: &PermissionTable, actor: &AccountId) -> Result<()> {
        self.require_account(actor)?;
        check_permission(action, table, &self.state.roles_of(actor)).map_err(|_| Error::PermissionDenied {
            actor: actor.clone(),
            action: action.to_string(),
        })
    }

    /// Engine-wide permission (identity, audit, correction commands).
    pub(crate) fn permit_engine(&self, action: &str, actor: &AccountId) -> Result<()> {
        self.permit(action, &self.config.permissions, actor)
    }

    /// Permission under a token's own policy table.
    pub(crate) fn permit_token(&self, action: &str, token: &TokenId, actor: &AccountId) -> Result<()> {
        let table = self.state.token(token)?.policy.role_permissions.clone();
        self.permit(action, &table, actor)
    }

    pub(crate) fn denied(actor: &AccountId, action: &str) -> Error {
        Error::PermissionDenied {
            actor: actor.clone(),
            action: action.to_string(),
        }
    }

    /// Converts an amount to the token's scale, rejecting zero.
    pub(crate) fn scaled(&self, token: &TokenId, amount: Amount) -> Result<u128> {
        let decimals = self.state.token(token)?.def.decimals();
        let minor = amount.rescale(decimals)?.minor_units();
        if minor == 0 {
            return Err(Error::Degenerate("zero amount".into()));
        }
        Ok(minor)
    }

    // ---- identity ----

    /// Registers an identity holding `roles`; starts Unverified at version 1.
    pub fn register_identity(
        &mut self,
        subject: &AccountId,
        profile_digest: Digest,
        roles: &BTreeSet<PartyRole>,
        at: LogicalTime,
    ) -> Result<LedgerEvent> {
        self.state.identities.check_register(subject)?;
        let body = EventBody::IdentityRegistered {
            subject: subject.clone(),
            profile_digest,
            roles: roles.clone(),
        };
        Ok(self.commit(at, vec![body])?.remove(0))
    }

    /// Sets KYC status; risk rating is kept unless given.
    pub fn set_kyc_status(
        &mut self,
        subject: &AccountId,
        status: KycStatus,
        risk: Option<RiskRating>,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<LedgerEvent> {
        self.permit_engine("kyc", actor)?;
        let record = self
            .state
            .identities
            .record(subject)
            .ok_or_else(|| Error::NotFound(format!("identity {subject}")))?;
        let body = EventBody::KycStatusSet {
            subject: subject.clone(),
            status,
            risk: risk.unwrap_or(record.risk_rating),
            actor: actor.clone(),
        };
        Ok(self.commit(at, vec![body])?.remove(0))
    }

    /// Records a new profile digest and raises an `IdentityChanged` alert.
    pub fn update_identity(
        &mut self,
        subject: &AccountId,
        profile_digest: Digest,
        at: LogicalTime,
    ) -> Result<Vec<LedgerEvent>> {
        let version = self.state.identities.check_update(subject, &profile_digest)?;
        let bodies = vec![
            EventBody::IdentityUpdated {
                subject: subject.clone(),
                profile_digest,
                version,
            },
            EventBody::AlertRaised(crate::policy::MonitoringAlert {
                kind: crate::policy::AlertKind::IdentityChanged,
                subject: subject.clone(),
                token_id: None,
                at,
                details: format!("profile version {version}"),
            }),
        ];
        self.commit(at, bodies)
    }

    pub fn blacklist_add(
        &mut self,
        subject: &AccountId,
        actor: &AccountId,
        reason: &str,
        at: LogicalTime,
    ) -> Result<LedgerEvent> {
        self.permit_engine("blacklist", actor)?;
        self.state.identities.check_blacklist_add(subject)?;
        let body = EventBody::BlacklistAdded {
            subject: subject.clone(),
            actor: actor.clone(),
            reason: reason.to_string(),
        };
        Ok(self.commit(at, vec![body])?.remove(0))
    }

    pub fn blacklist_remove(
        &mut self,
        subject: &AccountId,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<LedgerEvent> {
        self.permit_engine("blacklist", actor)?;
        self.state.identities.check_blacklist_remove(subject)?;
        let body = EventBody::BlacklistRemoved {
            subject: subject.clone(),
            actor: actor.clone(),
        };
        Ok(self.commit(at, vec![body])?.remove(0))
    }

    // ---- transfers ----

    /// Evaluates a request as submitted by `actor` without changing state.
    pub fn check(&self, req: &TransferRequest, actor: &AccountId) -> Result<ComplianceVerdict> {
        self.require_account(actor)?;
        check_transfer_as(req, actor, &self.state)
    }

    fn alert_bodies(verdict: &ComplianceVerdict) -> impl Iterator<Item = EventBody> + '_ {
        verdict.alerts.iter().cloned().map(EventBody::AlertRaised)
    }

    pub(crate) fn run_transfer(
        &mut self,
        req: &TransferRequest,
        submitter: &AccountId,
        fee: Option<RelayFee>,
        recording: Recording,
        at: LogicalTime,
    ) -> Result<TransferOutcome> {
        let mut req = req.clone();
        req.at = at;
        let verdict = check_transfer_as(&req, submitter, &self.state)?;
        let mut bodies = Vec::new();
        match &verdict.decision {
            Decision::Approved => {
                let decimals = self.state.token(&req.token_id)?.def.decimals();
                let movement = Movement {
                    token: req.token_id.clone(),
                    from: req.from.clone(),
                    to: req.to.clone(),
                    amount: req.amount.rescale(decimals)?.minor_units(),
                    wire: req.wire,
                    relayed_by: req.relayed_by.clone(),
                };
                let actor = submitter.clone();
                bodies.push(match recording {
                    Recording::Transfer => EventBody::TransferExecuted { movement, actor, fee },
                    Recording::Settlement => EventBody::SettlementExecuted { movement, actor, fee },
                });
            }
            Decision::Rejected(reasons) => bodies.push(EventBody::TransferRejected {
                token: req.token_id.clone(),
                from: req.from.clone(),
                to: req.to.clone(),
                amount: req.amount,
                reasons: reasons.clone(),
                actor: submitter.clone(),
                fee,
            }),
        }
        bodies.extend(Self::alert_bodies(&verdict));
        let events = self.commit(at, bodies)?;
        Ok(TransferOutcome { verdict, events })
    }

    /// Runs the compliance pipeline; approved requests move balances and
    /// rejected ones are recorded with their reason codes.
    pub fn execute_transfer(
        &mut self,
        req: &TransferRequest,
        actor: &AccountId,
        at: LogicalTime,
    ) -> Result<TransferOutcome> {
        self.require_account(actor)?;
        self.run_transfer(req, actor, None, Recording::Transfer, at)
    }

    /// As `execute_transfer`, recorded as a settlement.
    pub fn settle(&mut self, req: &TransferRequest, actor: &AccountId, at: LogicalTime) -> Result<TransferOutcome> {
        self.require_account(actor)?;
        self.run_transfer(req, actor, None, Recording::Settlement, at)
    }

    fn run_meta(
        &mut self,
        auth: &MetaTransferAuthorization,
        recording: Recording,
        at: LogicalTime,
    ) -> Result<TransferOutcome> {
        if !auth.verifies() {
            return Err(Error::BadAuthorization);
        }
        if auth.relayer == auth.signer {
            return Err(Error::Degenerate("relayer and signer are the same".into()));
        }
        self.permit_engine("relay", &auth.relayer)?;
        let fee_token = self.state.token(&auth.fee_token)?;
        let fee = auth.fee.rescale(fee_token.def.decimals())?.minor_units();
        if fee_token.holding(&auth.relayer).free < fee {
            return Err(Error::RelayerInsufficientFee(auth.relayer.clone()));
        }
        let collector = self
            .config
            .fee_collector
            .clone()
            .unwrap_or_else(|| fee_token.def.issuer.clone());
        if collector == auth.relayer {
            return Err(Error::Degenerate("relayer collects its own fee".into()));
        }
        let fee = RelayFee {
            relayer: auth.relayer.clone(),
            fee_token: auth.fee_token.clone(),
            fee,
            collector,
        };
        let req = auth.inner.clone().relayed_by(auth.relayer.clone());
        self.run_transfer(&req, &auth.signer, Some(fee), recording, at)
    }

    /// Gasless transfer: the inner request is checked as if sent by its
    /// signer, and the fee is taken from the relayer whatever the verdict.
    pub fn execute_meta_transfer(
        &mut self,
        auth: &MetaTransferAuthorization,
        at: LogicalTime,
    ) -> Result<TransferOutcome> {
        self.run_meta(auth, Recording::Transfer, at)
    }

    /// Gasless settlement, recorded as `SettlementExecuted`.
    pub fn execute_meta_settlement(
        &mut self,
        auth: &MetaTransferAuthorization,
        at: LogicalTime,
    ) -> Result<TransferOutcome> {
        self.run_meta(auth, Recording::Settlement, at)
    }

    /// Codes a request would be rejected with, if any.
    pub fn rejection_codes(&self, req: &TransferRequest, actor: &AccountId) -> Result<Vec<ReasonCode>> {
        Ok(self.check(req, actor)?.reasons().to_vec())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::ledger::DocumentAnchor;
    use crate::model::{AssetClassDescriptor, TokenDefinition};
    use crate::policy::PolicySet;

    pub fn acct(s: &str) -> AccountId {
        AccountId::new(s).unwrap()
    }

    pub fn tok(s: &str) -> TokenId {
        TokenId::new(s).unwrap()
    }

    pub fn amt(s: &str) -> Amount {
        s.parse().unwrap()
    }

    pub fn t(s: u64) -> LogicalTime {
        LogicalTime(s)
    }

    pub fn register(e: &mut Engine, name: &str, roles: &[PartyRole], verified: bool) {
        let roles: BTreeSet<_> = roles.iter().copied().collect();
        let at = e.log().last_time();
        e.register_identity(&acct(name), Digest::of(name.as_bytes()), &roles, at)
            .unwrap();
        if verified {
            e.set_kyc_status(&acct(name), KycStatus::Verified, None, &acct("op"), at)
                .unwrap();
        }
    }

    /// op (Operator), reg (Regulator), iss (Issuer), alice/bob/carol
    /// (Investors), all verified; `bond` is a 0-decimal compliant FT with
    /// 1,000 minted to alice and a 2-decimal `cash` token.
    pub fn engine() -> Engine {
        let mut e = Engine::default();
        let op = acct("op");
        e.register_identity(&op, Digest::of(b"op"), &BTreeSet::from([PartyRole::Operator]), t(0))
            .unwrap();
        e.set_kyc_status(&op, KycStatus::Verified, None, &op, t(0)).unwrap();
        register(&mut e, "reg", &[PartyRole::Regulator], true);
        register(&mut e, "aud", &[PartyRole::Auditor], true);
        register(&mut e, "iss", &[PartyRole::Issuer], true);
        register(&mut e, "law", &[PartyRole::LegalCounsel], true);
        register(&mut e, "relay", &[PartyRole::Relayer], true);
        register(&mut e, "alice", &[PartyRole::Investor], true);
        register(&mut e, "bob", &[PartyRole::Investor], true);
        register(&mut e, "carol", &[PartyRole::Investor], true);
        let mut policy = PolicySet::permissive(0).unwrap();
        policy.recovery_accounts.insert(acct("vault"));
        let bond = TokenDefinition::new(tok("bond"), AssetClassDescriptor::security_ft(), acct("iss")).with_cap(1_000_000);
        e.define_token(
            bond,
            policy,
            vec![DocumentAnchor::for_bytes("prospectus", b"bond terms", "urn:bond")],
            &acct("iss"),
            t(0),
        )
        .unwrap();
        e.mint(&tok("bond"), &acct("alice"), amt("1000"), &acct("iss"), t(0))
            .unwrap();
        let cash = TokenDefinition::new(tok("cash"), AssetClassDescriptor::cash_ft(2), acct("iss"));
        e.define_token(cash, PolicySet::permissive(2).unwrap(), vec![], &acct("iss"), t(0))
            .unwrap();
        e.mint(&tok("cash"), &acct("relay"), amt("100.00"), &acct("iss"), t(0))
            .unwrap();
        e.mint(&tok("cash"), &acct("alice"), amt("100.00"), &acct("iss"), t(0))
            .unwrap();
        e
    }

    pub fn req(token: &str, from: &str, to: &str, amount: &str) -> TransferRequest {
        TransferRequest::new(tok(token), acct(from), acct(to), amt(amount), t(0)).unwrap()
    }
}
