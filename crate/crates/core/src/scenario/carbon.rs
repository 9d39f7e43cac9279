//! Carbon-credit issuance, trading, enforcement, audit, use and burn.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{acct, codes_text, onboard, Recorder, ScenarioConfig, ScenarioKind, ScenarioRun};
use crate::audit::{history_by_asset_type, regulatory_feed, ClassFilter, VisibilityScope};
use crate::config::EngineConfig;
use crate::engine::Engine;
use crate::enforcement::SPLITTABLE_TAG;
use crate::error::Result;
use crate::ledger::{verify_events, DocumentAnchor, EventKind};
use crate::model::{AccountId, Amount, AssetClassDescriptor, Lifecycle, PartyRole, TokenDefinition, TokenId};
use crate::policy::{PermissionTable, TransferMode, TransferRequest};

pub const CARBON_TAG: &str = "carbon";

fn credit(n: u32) -> Result<TokenId> {
    TokenId::new(format!("credit-{n}"))
}

struct Desk<'a> {
    e: Engine,
    rec: Recorder,
    exchange: AccountId,
    config: &'a ScenarioConfig,
}

impl Desk<'_> {
    /// Routes a trade through the exchange; returns whether it executed.
    fn trade(&mut self, token: &TokenId, from: &AccountId, to: &AccountId, amount: u128) -> Result<bool> {
        let amount = Amount::new(amount, 0)?;
        let cmd = format!("tx transfer {token} {from} {to} {amount}");
        self.rec.step(
            "Request Transmitted to RCP via Exchange",
            from.as_str(),
            cmd.clone(),
            format!("routed via {}", self.exchange),
            &[],
        );
        let req = TransferRequest::new(token.clone(), from.clone(), to.clone(), amount, self.rec.now())?;
        let verdict = self.e.check(&req, &self.exchange)?;
        self.rec.step(
            "RCP Reviews Transaction Restrictions and Regulations",
            self.exchange.as_str(),
            cmd.clone(),
            if verdict.is_approved() {
                "approved".into()
            } else {
                format!("rejected {}", codes_text(verdict.reasons()))
            },
            &[],
        );
        let at = self.rec.tick();
        let out = self.e.execute_transfer(&req, &self.exchange, at)?;
        let (label, outcome) = if out.is_approved() {
            ("Transaction Approval and Recording", "TransferExecuted".to_string())
        } else {
            (
                "Transaction Rejection and Reason Notification",
                format!("TransferRejected {}", codes_text(out.verdict.reasons())),
            )
        };
        self.rec.step(label, self.exchange.as_str(), cmd, outcome, &out.events);
        Ok(out.is_approved())
    }

    /// A consumer takes ownership of a credit in order to retire it.
    fn use_request(&mut self, token: &TokenId, holder: &AccountId, consumer: &AccountId) -> Result<bool> {
        let r = &self.config.roster;
        let cmd = format!("tx transfer {token} {holder} {consumer} 1");
        self.rec.step(
            "Consumer Requests Use of Carbon Credit Rights",
            consumer.as_str(),
            format!("use {token}"),
            format!("held by {holder}"),
            &[],
        );
        let req = TransferRequest::new(token.clone(), holder.clone(), consumer.clone(), Amount::new(1, 0)?, self.rec.now())?;
        let verdict = self.e.check(&req, holder)?;
        self.rec.step(
            "RCP Verifies Request ('Using Transfer Restrictions')",
            holder.as_str(),
            cmd.clone(),
            if verdict.is_approved() {
                "approved".into()
            } else {
                format!("rejected {}", codes_text(verdict.reasons()))
            },
            &[],
        );
        let at = self.rec.tick();
        let out = self.e.execute_transfer(&req, holder, at)?;
        if !out.is_approved() {
            self.rec.step(
                "Use Request Rejection and Reason Notification",
                holder.as_str(),
                cmd,
                format!("TransferRejected {}", codes_text(out.verdict.reasons())),
                &out.events,
            );
            return Ok(false);
        }
        self.rec.step("Ownership Transfer and Use Approval", holder.as_str(), cmd, "TransferExecuted".into(), &out.events);
        let cursor = out.record().seq.checked_sub(1);
        let counsel = acct(&r.legal_counsel)?;
        let certificate = DocumentAnchor::for_bytes(
            &format!("use-certificate-{token}"),
            out.record().hash.to_hex().as_bytes(),
            &format!("urn:doc:use:{token}"),
        )
        .notarized(counsel.clone());
        let at = self.rec.tick();
        let ev = self.e.attach_document(token, certificate, &counsel, at)?;
        let regulator = acct(&r.regulator)?;
        let scope = VisibilityScope::of(self.e.state(), &regulator);
        let feed = regulatory_feed(&self.e, cursor, &scope, 64)?;
        let outcome = format!("DocumentAttached; regulator feed delivered {} event(s)", feed.events.len());
        self.rec.step(
            "Reporting Use to Regulatory Body and Attaching Legal Documents",
            &r.legal_counsel,
            format!("token attach {token} use-certificate"),
            outcome,
            &[ev],
        );
        Ok(true)
    }

    fn burn_request(&mut self, token: &TokenId, holder: &AccountId) -> Result<bool> {
        let r = &self.config.roster;
        self.rec.step(
            "Consumer Requests Burn of Carbon Credit Rights",
            holder.as_str(),
            format!("burn {token}"),
            "requested".into(),
            &[],
        );
        let t = self.e.token(token)?;
        let held = t.holding(holder).free;
        let live = t.def.lifecycle == Lifecycle::Active;
        self.rec.step(
            "RCP Verifies Burn Request",
            holder.as_str(),
            format!("query holding {token} {holder}"),
            format!("free={held} lifecycle={}", t.def.lifecycle),
            &[],
        );
        let cmd = format!("tx burn {token} {holder} 1");
        let at = self.rec.tick();
        if held == 0 || !live {
            let refusal = self
                .e
                .burn(token, holder, Amount::new(1, 0)?, holder, at)
                .expect_err("burn of an absent credit must be refused");
            self.rec.step(
                "Burn Request Rejection and Reason Notification",
                holder.as_str(),
                cmd,
                format!("refused: {refusal}"),
                &[],
            );
            return Ok(false);
        }
        let ev = self.e.burn(token, holder, Amount::new(1, 0)?, holder, at)?;
        let chain = verify_events(self.e.log().events());
        self.rec.step(
            "Burn Approval and Ensuring Record Immutability",
            holder.as_str(),
            cmd,
            format!("Burned; chain ok={} checked={}", chain.ok, chain.checked),
            std::slice::from_ref(&ev),
        );
        let auditor = acct(&r.auditor)?;
        let at = self.rec.tick();
        let (report, exported) = self.e.export_audit_report(ev.seq, ev.seq, &auditor, at)?;
        self.rec.step(
            "Reporting Burn Process and Legal Compliance to Audit Institution",
            &r.auditor,
            format!("audit export {0}..{0}", ev.seq),
            format!("report {} burned={}", report.report_digest.to_hex(), report.tokens.iter().map(|t| t.burned).sum::<u128>()),
            &[exported],
        );
        Ok(true)
    }
}

pub fn run_carbon_scenario(config: &ScenarioConfig) -> Result<ScenarioRun> {
    config.validate(ScenarioKind::Carbon)?;
    let r = &config.roster;
    let c = &config.carbon;
    let engine_config = EngineConfig {
        instance: "carbon".into(),
        ..EngineConfig::default()
    };
    let mut base_policy = engine_config.policy(&c.profile, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut desk = Desk {
        e: Engine::new(engine_config),
        rec: Recorder::new("carbon"),
        exchange: acct(&r.broker)?,
        config,
    };

    let issuer = acct(&r.issuer)?;
    let counsel = acct(&r.legal_counsel)?;
    let regulator = acct(&r.regulator)?;
    let auditor = acct(&r.auditor)?;
    let verified: Vec<AccountId> = r.verified_investors().into_iter().map(|i| acct(i)).collect::<Result<_>>()?;
    let investors: Vec<AccountId> = r.investors.iter().map(|i| acct(i)).collect::<Result<_>>()?;
    let consumers: Vec<AccountId> = r.consumers.iter().map(|i| acct(i)).collect::<Result<_>>()?;

    // ---- issuance preparation ----
    desk.rec.phase("Issuance Preparation");
    let staff = [
        (&r.kyc_provider, PartyRole::Operator),
        (&r.issuer, PartyRole::Issuer),
        (&r.legal_counsel, PartyRole::LegalCounsel),
        (&r.regulator, PartyRole::Regulator),
        (&r.auditor, PartyRole::Auditor),
        (&r.broker, PartyRole::Broker),
    ];
    onboard(&mut desk.e, &mut desk.rec, r, &staff, true)?;
    let members: Vec<(&String, PartyRole)> = r
        .investors
        .iter()
        .map(|i| (i, PartyRole::Investor))
        .chain(r.consumers.iter().map(|i| (i, PartyRole::Consumer)))
        .collect();
    onboard(&mut desk.e, &mut desk.rec, r, &members, true)?;

    let anchors = if c.prepared {
        vec![
            DocumentAnchor::for_bytes("verification-report", b"third-party verification of emission reductions", "urn:doc:verification")
                .notarized(counsel.clone()),
            DocumentAnchor::for_bytes("registry-certificate", b"registry serial range", "urn:doc:registry"),
        ]
    } else {
        Vec::new()
    };
    let expiry = crate::model::LogicalTime(desk.rec.now().0 + c.validity);
    base_policy.require_documents = true;
    base_policy.recovery_accounts = BTreeSet::from([acct(&r.recovery)?]);
    let mut class = AssetClassDescriptor::nft().with_tag(CARBON_TAG);
    if c.splittable {
        class = class.with_tag(SPLITTABLE_TAG);
    }
    let credits: Vec<TokenId> = (1..=c.credits).map(credit).collect::<Result<_>>()?;
    for token in &credits {
        let def = TokenDefinition::new(token.clone(), class.clone(), issuer.clone()).with_expiry(expiry);
        let at = desk.rec.tick();
        match desk.e.define_token(def, base_policy.clone(), anchors.clone(), &issuer, at) {
            Ok(ev) => desk.rec.step(
                "Attach Legal Documents and Compliance",
                &r.issuer,
                format!("token define {token}"),
                format!("TokenDefined with {} anchor(s)", anchors.len()),
                &[ev],
            ),
            Err(refusal) => {
                desk.rec.step(
                    "Check Preparation Status",
                    &r.issuer,
                    format!("token define {token}"),
                    format!("refused: {refusal}"),
                    &[],
                );
                return Ok(desk.rec.finish(vec![desk.e], Vec::new()));
            }
        }
    }
    let mut permissions = PermissionTable::default();
    permissions.set(
        "transfer",
        BTreeSet::from([PartyRole::Issuer, PartyRole::Investor, PartyRole::Broker, PartyRole::Consumer]),
    );
    for token in &credits {
        let mut policy = desk.e.token(token)?.policy.clone();
        policy.role_permissions = permissions.clone();
        let at = desk.rec.tick();
        let ev = desk.e.set_policy(token, policy, &issuer, at)?;
        desk.rec.step(
            "Role-Based Permission Setting",
            &r.issuer,
            format!("policy set {token} --permissions"),
            "transfer: Issuer, Investor, Broker, Consumer".into(),
            &[ev],
        );
    }
    desk.rec.step(
        "Setting Token Validity Period",
        &r.issuer,
        "token show expiry".into(),
        format!("{} credit(s) valid until t={}", credits.len(), expiry.seconds()),
        &[],
    );
    let whitelist: BTreeSet<AccountId> = verified.iter().chain(&consumers).cloned().collect();
    for token in &credits {
        let mut policy = desk.e.token(token)?.policy.clone();
        policy.transfer_mode = TransferMode::WhitelistOnly(whitelist.clone());
        let at = desk.rec.tick();
        let ev = desk.e.set_policy(token, policy, &issuer, at)?;
        desk.rec.step(
            "Setting Transfer Restrictions",
            &r.issuer,
            format!("policy set {token} --whitelist"),
            format!("whitelist of {}", whitelist.len()),
            &[ev],
        );
    }
    desk.rec.phase("Issuance");
    for token in &credits {
        let at = desk.rec.tick();
        let ev = desk.e.mint(token, &issuer, Amount::new(1, 0)?, &issuer, at)?;
        desk.rec.step(
            "Preparation for Issuance Completed",
            &r.issuer,
            format!("tx mint {token} {issuer} 1"),
            "Minted".into(),
            &[ev],
        );
    }

    // ---- primary sales ----
    desk.rec.phase("Trading");
    let (first, second) = (&verified[0], &verified[1]);
    desk.trade(&credits[0], &issuer, first, 1)?;
    desk.trade(&credits[1], &issuer, second, 1)?;
    desk.trade(&credits[3], &issuer, second, 1)?;
    match r.unverified.first() {
        Some(u) => desk.trade(&credits[2], &issuer, &acct(u)?, 1)?,
        None => false,
    };
    for token in &credits[4..] {
        let buyer = &verified[rng.gen_range(0..verified.len())];
        desk.trade(token, &issuer, buyer, 1)?;
    }

    // ---- freeze and recovery ----
    desk.rec.phase("Freeze and Recovery");
    let flagged = &credits[1];
    desk.rec.step(
        "Issuer Requests Asset Freeze or Recovery",
        &r.issuer,
        format!("request freeze {flagged} {second}"),
        "suspected double counting".into(),
        &[],
    );
    let at = desk.rec.tick();
    let ev = desk.e.freeze(flagged, second, Amount::new(1, 0)?, &regulator, at)?;
    desk.rec.step("RCP Approves Request and Records", &r.regulator, format!("tx freeze {flagged} {second} 1"), "Frozen".into(), &[ev]);
    let recovery = acct(&r.recovery)?;
    let at = desk.rec.tick();
    let ev = desk.e.recover(flagged, second, &recovery, Amount::new(1, 0)?, &regulator, at)?;
    desk.rec.step(
        "RCP Approves Request and Records",
        &r.regulator,
        format!("tx recover {flagged} {second} {recovery} 1"),
        "Recovered".into(),
        &[ev],
    );
    if let Some(u) = r.unverified.first() {
        let at = desk.rec.tick();
        let ev = desk.e.blacklist_add(&acct(u)?, &regulator, "sanctions screening hit", at)?;
        desk.rec.step("RCP Approves Request and Records", &r.regulator, format!("identity blacklist add {u}"), "BlacklistAdded".into(), &[ev]);
    }

    // ---- split ----
    desk.rec.phase("Split");
    let parent = &credits[2];
    let lots = TokenId::new(format!("{parent}-lots"))?;
    let holder = desk
        .e
        .token(parent)?
        .holdings
        .iter()
        .find(|(_, h)| h.free == 1)
        .map(|(a, _)| a.clone())
        .unwrap_or_else(|| issuer.clone());
    desk.rec.step(
        "Investor Requests Token Split or Burn",
        holder.as_str(),
        format!("request split {parent} {}", c.fractions),
        "requested".into(),
        &[],
    );
    let at = desk.rec.tick();
    let fractions = u128::from(c.fractions);
    let split = match desk.e.split_lot(parent, fractions, &lots, &issuer, at) {
        Ok(events) => {
            desk.rec.step(
                "RCP Approves Request and Records",
                &r.issuer,
                format!("tx split {parent} {fractions} {lots}"),
                format!("escrowed; {fractions} lots issued to {holder}"),
                &events,
            );
            true
        }
        Err(refusal) => {
            desk.rec.step(
                "Transaction Rejection and Reason Notification",
                &r.issuer,
                format!("tx split {parent} {fractions} {lots}"),
                format!("refused: {refusal}"),
                &[],
            );
            false
        }
    };
    let mut tradables: Vec<TokenId> = credits[4..].to_vec();
    if split {
        desk.trade(&lots, &holder, first, fractions / 4)?;
        desk.trade(&lots, &holder, second, fractions / 4)?;
        tradables.push(lots.clone());
    }

    // ---- secondary market ----
    desk.rec.phase("Secondary Trading");
    for _ in 0..c.trades {
        let candidates: Vec<(TokenId, AccountId, u128)> = tradables
            .iter()
            .flat_map(|t| {
                let held = desk.e.token(t).map(|s| s.holdings.clone()).unwrap_or_default();
                held.into_iter()
                    .filter(|(a, h)| h.free > 0 && investors.contains(a))
                    .map(move |(a, h)| (t.clone(), a, h.free))
            })
            .collect();
        if candidates.is_empty() {
            break;
        }
        let (token, seller, held) = candidates[rng.gen_range(0..candidates.len())].clone();
        let buyers: Vec<&AccountId> = investors.iter().filter(|a| **a != seller).collect();
        let buyer = buyers[rng.gen_range(0..buyers.len())].clone();
        let amount = rng.gen_range(1..=held);
        desk.trade(&token, &seller, &buyer, amount)?;
    }

    // ---- audit battery ----
    desk.rec.phase("Audit and Verification");
    desk.rec.step(
        "Receive Request from Audit Institution",
        &r.auditor,
        "audit request".into(),
        "permissions, documents, records, identity, freeze and blacklist, recovery and burn".into(),
        &[],
    );
    let sample = &credits[0];
    let policy = desk.e.token(sample)?.policy.clone();
    let transfer_roles: Vec<&str> = policy
        .role_permissions
        .roles_for("transfer")
        .map(|s| s.iter().map(|r| r.name()).collect())
        .unwrap_or_default();
    desk.rec.step(
        "Provide Role-Based Permission Setting Information",
        &r.auditor,
        format!("policy show {sample}"),
        format!("transfer: {}", transfer_roles.join(", ")),
        &[],
    );
    let docs: Vec<String> = desk
        .e
        .token(sample)?
        .anchors
        .iter()
        .map(|a| match &a.notarized_by {
            Some(n) => format!("{} (notarized by {n})", a.doc_id),
            None => a.doc_id.clone(),
        })
        .collect();
    desk.rec.step(
        "Provide Legal Document and Compliance Information",
        &r.auditor,
        format!("query documents {sample}"),
        docs.join("; "),
        &[],
    );
    let scope = VisibilityScope::of(desk.e.state(), &auditor);
    let nft_history = history_by_asset_type(&desk.e, &ClassFilter::NonFungible, &scope).len();
    let last = desk.e.log().len() as u64 - 1;
    let at = desk.rec.tick();
    let (report, ev) = desk.e.export_audit_report(0, last, &auditor, at)?;
    desk.rec.step(
        "Provide Transaction Records and Activity Logs",
        &r.auditor,
        format!("query history --class nft && audit export 0..{last}"),
        format!(
            "{nft_history} credit event(s); report {} rejections={:?}",
            report.report_digest.to_hex(),
            report.rejections
        ),
        &[ev],
    );
    let screenings: Vec<String> = investors
        .iter()
        .chain(&consumers)
        .map(|a| format!("{a}={:?}", desk.e.state().identities.screen(a)))
        .collect();
    desk.rec.step(
        "Provide Verification Results and Related Information",
        &r.auditor,
        "query screening".into(),
        screenings.join(" "),
        &[],
    );
    let frozen: u128 = desk
        .e
        .state()
        .tokens
        .values()
        .flat_map(|t| t.holdings.values())
        .map(|h| h.frozen)
        .sum();
    desk.rec.step(
        "Provide Verification Results and Related Information",
        &r.auditor,
        "query freezes && query blacklist".into(),
        format!(
            "frozen units={frozen} blacklist actions={}",
            desk.e.state().identities.blacklist_history().len()
        ),
        &[],
    );
    let count = |kind: EventKind| desk.e.log().events().iter().filter(|e| e.kind == kind).count();
    desk.rec.step(
        "Provide Process Verification Results and Related Information",
        &r.auditor,
        "query history --kind Recovered,ForcedLiquidation,Burned".into(),
        format!(
            "recovered={} liquidated={} burned={}",
            count(EventKind::Recovered),
            count(EventKind::ForcedLiquidation),
            count(EventKind::Burned)
        ),
        &[],
    );

    // ---- use and burn ----
    desk.rec.phase("Use and Burn");
    let consumer = &consumers[0];
    let used = &credits[0];
    desk.use_request(used, first, consumer)?;
    desk.burn_request(used, consumer)?;
    // a retired credit cannot change hands or be burned again
    let next = consumers.get(1).unwrap_or(first);
    desk.use_request(used, consumer, next)?;
    desk.burn_request(used, consumer)?;

    desk.rec.phase("Expiry");
    let at = desk.rec.advance_to(expiry.seconds());
    desk.rec.step(
        "Validity Period Elapsed",
        &r.regulator,
        format!("clock advance {}", at.seconds()),
        format!("t={} >= expiry {}", at.seconds(), expiry.seconds()),
        &[],
    );
    desk.use_request(&credits[3], second, consumer)?;

    Ok(desk.rec.finish(vec![desk.e], Vec::new()))
}
