//! Verdict engine: evaluates transfer requests against the controls in a
//! fixed order and produces deterministic, fully itemized verdicts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identity::RiskRating;
use crate::model::{AccountId, Amount, Lifecycle, LogicalTime, PartyRole, TokenId};
use crate::state::{State, TokenState};

macro_rules! reason_codes {
    ($($variant:ident = $n:literal, $title:literal;)+) => {
        /// Control identifiers `RCP-01` through `RCP-31`.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum ReasonCode {
            $($variant),+
        }

        impl ReasonCode {
            pub const ALL: [ReasonCode; 31] = [$(ReasonCode::$variant),+];

            pub fn number(self) -> u32 {
                match self {
                    $(ReasonCode::$variant => $n),+
                }
            }

            /// Catalog name of the control.
            pub fn title(self) -> &'static str {
                match self {
                    $(ReasonCode::$variant => $title),+
                }
            }
        }
    };
}

reason_codes! {
    Rcp01 = 1, "Customer Identity Verification";
    Rcp02 = 2, "High-Risk/Suspicious Transaction Monitoring";
    Rcp03 = 3, "Detection of Changes to Customer Identity Information";
    Rcp04 = 4, "Contract Version Tracking";
    Rcp05 = 5, "Exploration of Transaction History by Asset Type";
    Rcp06 = 6, "External Audit";
    Rcp07 = 7, "Setting Role-Based Permissions";
    Rcp08 = 8, "Asset Freeze";
    Rcp09 = 9, "Asset Recovery";
    Rcp10 = 10, "Trading Restrictions";
    Rcp11 = 11, "Transaction Limit";
    Rcp12 = 12, "Cancellation or Modification of Transactions";
    Rcp13 = 13, "Pausing of Trading";
    Rcp14 = 14, "Suspension or Disposal of Smart Contract (kill switch)";
    Rcp15 = 15, "Blacklist Management";
    Rcp16 = 16, "Forced Liquidation";
    Rcp17 = 17, "Privacy of Personal Information";
    Rcp18 = 18, "Privacy of Financial Transactions";
    Rcp19 = 19, "Code Security";
    Rcp20 = 20, "Immutability of the Ledger";
    Rcp21 = 21, "Finality of Transactions and Payments";
    Rcp22 = 22, "Attaching Legal Documents";
    Rcp23 = 23, "Token Expired Time";
    Rcp24 = 24, "Token Transfer Restrictions";
    Rcp25 = 25, "Issuance of Tokenized Cash";
    Rcp26 = 26, "Issuance of Tokenized Securities";
    Rcp27 = 27, "Controlling Transactions Involving Splitting Below Decimal Units";
    Rcp28 = 28, "Token Burning";
    Rcp29 = 29, "Gasless Support";
    Rcp30 = 30, "Asset Class Management";
    Rcp31 = 31, "Token Supply Control";
}

impl ReasonCode {
    pub fn from_number(n: u32) -> Option<ReasonCode> {
        n.checked_sub(1)
            .and_then(|i| ReasonCode::ALL.get(i as usize))
            .copied()
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RCP-{:02}", self.number())
    }
}

impl FromStr for ReasonCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.strip_prefix("RCP-")
            .filter(|n| n.len() == 2)
            .and_then(|n| n.parse::<u32>().ok())
            .and_then(ReasonCode::from_number)
            .ok_or_else(|| Error::Parse(format!("unknown reason code `{s}`")))
    }
}

impl Serialize for ReasonCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ReasonCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How a control is realized in this engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ControlKind {
    /// Rejects transfers in the verdict pipeline or refuses a command.
    Blocking,
    /// A state-mutating regulatory or issuer action.
    Enforcement,
    /// Observational: alerts, queries, exports.
    ReportOnly,
    /// Met by role-scoped visibility rather than cryptography.
    VisibilitySimulated,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ControlPoint {
    pub code: ReasonCode,
    pub kind: ControlKind,
    pub location: &'static str,
}

const fn point(code: ReasonCode, kind: ControlKind, location: &'static str) -> ControlPoint {
    ControlPoint {
        code,
        kind,
        location,
    }
}

/// Where each control is enforced or reported.
pub const CONTROL_POINTS: &[ControlPoint] = {
    use ControlKind::*;
    use ReasonCode::*;
    &[
        point(Rcp01, Blocking, "policy::check_transfer (d) identity screening"),
        point(Rcp02, ReportOnly, "policy::check_transfer threshold and pattern alerts"),
        point(Rcp03, ReportOnly, "engine::update_identity IdentityChanged alert"),
        point(Rcp04, Enforcement, "engine::amend_contract version history"),
        point(Rcp05, ReportOnly, "audit::history_by_asset_type"),
        point(Rcp06, ReportOnly, "audit::export_audit_report"),
        point(Rcp07, Blocking, "policy::check_permission default-deny"),
        point(Rcp08, Blocking, "policy::check_transfer (e) frozen exclusion"),
        point(Rcp08, Enforcement, "engine::freeze / unfreeze"),
        point(Rcp09, Enforcement, "engine::recover"),
        point(Rcp10, Blocking, "policy::check_transfer (j) trading restrictions"),
        point(Rcp11, Blocking, "policy::check_transfer (i) per-tx and counterparty window limits"),
        point(Rcp12, Enforcement, "engine::correct compensating entries"),
        point(Rcp13, Blocking, "policy::check_transfer (b) pause"),
        point(Rcp14, Blocking, "engine::kill_switch absorbing lifecycle"),
        point(Rcp15, Blocking, "policy::check_transfer (d) blacklist"),
        point(Rcp16, Enforcement, "engine::force_liquidate"),
        point(Rcp17, VisibilitySimulated, "audit::VisibilityScope; profiles stored as digests"),
        point(Rcp18, VisibilitySimulated, "audit::VisibilityScope need-to-know filtering"),
        point(Rcp19, VisibilitySimulated, "audit::AuditReport chain_ok and threat note"),
        point(Rcp20, Enforcement, "ledger::EventLog hash chain"),
        point(Rcp21, Blocking, "policy::check_transfer (e) settlement funds; ledger finality"),
        point(Rcp22, Blocking, "engine::define_token document requirement"),
        point(Rcp23, Blocking, "policy::check_transfer (f) expiry"),
        point(Rcp24, Blocking, "policy::check_transfer (g) transfer mode"),
        point(Rcp25, Enforcement, "engine::define_token tokenized cash class"),
        point(Rcp26, Enforcement, "engine::define_token tokenized security class"),
        point(Rcp27, Blocking, "policy::check_transfer (h) subdivisibility"),
        point(Rcp28, Enforcement, "engine::burn"),
        point(Rcp29, Enforcement, "engine::execute_meta_transfer"),
        point(Rcp30, Enforcement, "model::validate_class_descriptor; audit class filters"),
        point(Rcp31, Blocking, "engine::mint supply cap"),
    ]
};

/// Commands subject to role permission checks.
pub const ACTIONS: &[&str] = &[
    "transfer",
    "freeze",
    "unfreeze",
    "recover",
    "pause",
    "resume",
    "kill",
    "liquidate",
    "burn_forced",
    "blacklist",
    "kyc",
    "correct",
    "audit_export",
    "relay",
    "policy_set",
    "attach_document",
];

/// action → roles permitted to perform it. Absent actions are denied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PermissionTable(BTreeMap<String, BTreeSet<PartyRole>>);

impl PermissionTable {
    pub fn empty() -> Self {
        Self(BTreeMap::new())
    }

    pub fn grant(mut self, action: &str, roles: &[PartyRole]) -> Self {
        self.0
            .entry(action.to_string())
            .or_default()
            .extend(roles.iter().copied());
        self
    }

    pub fn set(&mut self, action: &str, roles: BTreeSet<PartyRole>) {
        self.0.insert(action.to_string(), roles);
    }

    pub fn roles_for(&self, action: &str) -> Option<&BTreeSet<PartyRole>> {
        self.0.get(action)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<PartyRole>)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }
}

impl Default for PermissionTable {
    fn default() -> Self {
        use PartyRole::*;
        PermissionTable::empty()
            .grant("transfer", &[Issuer, Investor, Broker, Consumer, Operator])
            .grant("freeze", &[Regulator])
            .grant("unfreeze", &[Regulator])
            .grant("recover", &[Regulator])
            .grant("kill", &[Regulator])
            .grant("liquidate", &[Regulator])
            .grant("burn_forced", &[Regulator])
            .grant("pause", &[Regulator, Operator])
            .grant("resume", &[Regulator, Operator])
            .grant("blacklist", &[Regulator, Operator])
            .grant("kyc", &[Regulator, Operator])
            .grant("correct", &[Regulator, Operator])
            .grant("audit_export", &[Auditor, Regulator])
            .grant("relay", &[Relayer])
            .grant("policy_set", &[Regulator])
            .grant("attach_document", &[LegalCounsel])
    }
}

/// Ok iff one of the actor's `roles` is granted `action`; default-deny.
pub fn check_permission(
    action: &str,
    table: &PermissionTable,
    roles: &BTreeSet<PartyRole>,
) -> std::result::Result<(), ReasonCode> {
    match table.roles_for(action) {
        Some(granted) if !granted.is_disjoint(roles) => Ok(()),
        _ => Err(ReasonCode::Rcp07),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    Free,
    WhitelistOnly(BTreeSet<AccountId>),
    /// The issuer must be a party to every transfer.
    IssuerOnly,
    /// Only the issuer may send.
    NonTransferable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowLimit {
    pub limit: Amount,
    pub window_seconds: u64,
}

/// Regulator-imposed instrument or account level trading bans.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradingRestrictions {
    pub instrument_ban: bool,
    pub banned_accounts: BTreeSet<AccountId>,
}

/// Per-token compliance configuration. Amounts are at the token scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySet {
    pub transfer_mode: TransferMode,
    pub role_permissions: PermissionTable,
    pub per_tx_limit: Option<Amount>,
    pub counterparty_window_limit: Option<WindowLimit>,
    pub monitoring_threshold_occasional: Amount,
    pub monitoring_threshold_wire: Amount,
    /// Alert at `>=` rather than `>` the threshold.
    pub inclusive_thresholds: bool,
    /// Medium/High risk parties see thresholds divided by this.
    pub risk_threshold_divisor: u32,
    pub deviation_factor: u32,
    pub deviation_window: u32,
    pub trading_paused: bool,
    pub trading_restrictions: TradingRestrictions,
    pub recovery_accounts: BTreeSet<AccountId>,
    pub require_documents: bool,
}

impl PolicySet {
    /// Permissive defaults with 15,000 / 1,000 whole-unit monitoring
    /// thresholds at the given scale.
    pub fn permissive(decimals: u8) -> Result<PolicySet> {
        Ok(PolicySet {
            transfer_mode: TransferMode::Free,
            role_permissions: PermissionTable::default(),
            per_tx_limit: None,
            counterparty_window_limit: None,
            monitoring_threshold_occasional: Amount::whole(15_000, decimals)?,
            monitoring_threshold_wire: Amount::whole(1_000, decimals)?,
            inclusive_thresholds: false,
            risk_threshold_divisor: 2,
            deviation_factor: 10,
            deviation_window: 5,
            trading_paused: false,
            trading_restrictions: TradingRestrictions::default(),
            recovery_accounts: BTreeSet::new(),
            require_documents: false,
        })
    }

    /// Amounts must sit at `decimals`; limits must be coherent.
    pub fn validate(&self, decimals: u8) -> Result<()> {
        let mut amounts = vec![self.monitoring_threshold_occasional, self.monitoring_threshold_wire];
        amounts.extend(self.per_tx_limit);
        amounts.extend(self.counterparty_window_limit.map(|w| w.limit));
        if let Some(bad) = amounts.iter().find(|a| a.decimals() != decimals) {
            return Err(Error::ScaleMismatch {
                left: bad.decimals(),
                right: decimals,
            });
        }
        if self.risk_threshold_divisor == 0 {
            return Err(Error::Config("risk_threshold_divisor must be positive".into()));
        }
        if self.deviation_window == 0 {
            return Err(Error::Config("deviation_window must be positive".into()));
        }
        if self.counterparty_window_limit.is_some_and(|w| w.window_seconds == 0) {
            return Err(Error::Config("window_seconds must be positive".into()));
        }
        Ok(())
    }
}

/// A request to move `amount` of `token_id`. Constructed valid:
/// positive amount, distinct parties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferRequest {
    pub token_id: TokenId,
    pub from: AccountId,
    pub to: AccountId,
    pub amount: Amount,
    /// Cross-ledger leg.
    pub wire: bool,
    pub relayed_by: Option<AccountId>,
    pub at: LogicalTime,
}

impl TransferRequest {
    pub fn new(
        token_id: TokenId,
        from: AccountId,
        to: AccountId,
        amount: Amount,
        at: LogicalTime,
    ) -> Result<Self> {
        if amount.is_zero() {
            return Err(Error::Degenerate("zero-amount transfer".into()));
        }
        if from == to {
            return Err(Error::Degenerate("sender and receiver are the same".into()));
        }
        Ok(Self {
            token_id,
            from,
            to,
            amount,
            wire: false,
            relayed_by: None,
            at,
        })
    }

    pub fn wire(mut self) -> Self {
        self.wire = true;
        self
    }

    pub fn relayed_by(mut self, relayer: AccountId) -> Self {
        self.relayed_by = Some(relayer);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AlertKind {
    ThresholdOccasional,
    ThresholdWire,
    PatternDeviation,
    IdentityChanged,
}

impl fmt::Display for AlertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlertKind::ThresholdOccasional => "ThresholdOccasional",
            AlertKind::ThresholdWire => "ThresholdWire",
            AlertKind::PatternDeviation => "PatternDeviation",
            AlertKind::IdentityChanged => "IdentityChanged",
        })
    }
}

impl FromStr for AlertKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            AlertKind::ThresholdOccasional,
            AlertKind::ThresholdWire,
            AlertKind::PatternDeviation,
            AlertKind::IdentityChanged,
        ]
        .into_iter()
        .find(|k| k.to_string() == s)
        .ok_or_else(|| Error::Parse(format!("unknown alert kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitoringAlert {
    pub kind: AlertKind,
    pub subject: AccountId,
    pub token_id: Option<TokenId>,
    pub at: LogicalTime,
    pub details: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Decision {
    Approved,
    Rejected(Vec<ReasonCode>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComplianceVerdict {
    pub decision: Decision,
    pub alerts: Vec<MonitoringAlert>,
}

impl ComplianceVerdict {
    pub fn is_approved(&self) -> bool {
        self.decision == Decision::Approved
    }

    pub fn reasons(&self) -> &[ReasonCode] {
        match &self.decision {
            Decision::Approved => &[],
            Decision::Rejected(codes) => codes,
        }
    }
}

/// Brings two amounts to their common (finer) scale.
fn common_scale(a: Amount, b: Amount) -> Result<(Amount, Amount)> {
    let d = a.decimals().max(b.decimals());
    Ok((a.rescale(d)?, b.rescale(d)?))
}

fn exceeds(amount: Amount, limit: Amount, inclusive: bool) -> bool {
    match amount.cmp_exact(limit) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => inclusive,
        std::cmp::Ordering::Less => false,
    }
}

/// Sum of executed `from → to` transfers in `(at − window, at]`, plus
/// `amount`, compared strictly against the limit.
pub fn evaluate_window_limit(
    token: &TokenState,
    from: &AccountId,
    to: &AccountId,
    amount: Amount,
    at: LogicalTime,
    limit: WindowLimit,
) -> Result<bool> {
    let start = at.seconds().checked_sub(limit.window_seconds);
    let prior: u128 = token
        .transfers()
        .filter(|t| &t.from == from && &t.to == to)
        .filter(|t| t.at <= at && start.is_none_or(|s| t.at.seconds() > s))
        .try_fold(0u128, |acc, t| acc.checked_add(t.amount))
        .ok_or(Error::Overflow)?;
    let prior = Amount::new(prior, token.def.decimals())?;
    let (prior, amount) = common_scale(prior, amount)?;
    let total = prior.checked_add(amount)?;
    Ok(exceeds(total, limit.limit, false))
}

/// `PatternDeviation` iff the sender has at least `deviation_window` prior
/// executed transfers and `amount > factor × mean(last window amounts)`.
pub fn raise_pattern_alert(req: &TransferRequest, token: &TokenState) -> Result<Option<MonitoringAlert>> {
    let policy = &token.policy;
    let window = policy.deviation_window as usize;
    let recent: Vec<u128> = token
        .transfers()
        .filter(|t| t.from == req.from)
        .map(|t| t.amount)
        .collect();
    if recent.len() < window {
        return Ok(None);
    }
    let last = &recent[recent.len() - window..];
    let sum = last
        .iter()
        .try_fold(0u128, |acc, a| acc.checked_add(*a))
        .ok_or(Error::Overflow)?;
    let sum = Amount::new(sum, token.def.decimals())?;
    let (sum, amount) = common_scale(sum, req.amount)?;
    // amount > factor · sum / window  ⇔  amount · window > factor · sum
    let lhs = amount.minor_units().checked_mul(window as u128);
    let rhs = sum.minor_units().checked_mul(u128::from(policy.deviation_factor));
    let alert = match (lhs, rhs) {
        (Some(l), Some(r)) => l > r,
        (None, Some(_)) => true,
        (_, None) => false,
    };
    Ok(alert.then(|| MonitoringAlert {
        kind: AlertKind::PatternDeviation,
        subject: req.from.clone(),
        token_id: Some(req.token_id.clone()),
        at: req.at,
        details: format!(
            "amount {} exceeds {}x trailing mean of last {} transfers",
            req.amount, policy.deviation_factor, window
        ),
    }))
}

fn threshold_alerts(req: &TransferRequest, token: &TokenState, state: &State) -> Result<Vec<MonitoringAlert>> {
    let policy = &token.policy;
    let (kind, base) = if req.wire {
        (AlertKind::ThresholdWire, policy.monitoring_threshold_wire)
    } else {
        (AlertKind::ThresholdOccasional, policy.monitoring_threshold_occasional)
    };
    let risky = [&req.from, &req.to]
        .iter()
        .any(|a| state.identities.risk(a) != RiskRating::Low);
    let threshold = if risky {
        Amount::new(
            base.minor_units() / u128::from(policy.risk_threshold_divisor),
            base.decimals(),
        )?
    } else {
        base
    };
    if !exceeds(req.amount, threshold, policy.inclusive_thresholds) {
        return Ok(Vec::new());
    }
    Ok(vec![MonitoringAlert {
        kind,
        subject: req.from.clone(),
        token_id: Some(req.token_id.clone()),
        at: req.at,
        details: format!("amount {} above threshold {}", req.amount, threshold),
    }])
}

/// `check_transfer` with the request submitted by its sender.
pub fn check_transfer(req: &TransferRequest, state: &State) -> Result<ComplianceVerdict> {
    check_transfer_as(req, &req.from, state)
}

/// Runs every blocking check in fixed order, collecting all failures,
/// then appends non-blocking monitoring alerts.
///
/// Order: kill (14), pause (13), permission (07), KYC (01), blacklist (15),
/// frozen funds (08) or missing funds (21), expiry (23), transfer mode (24),
/// subdivisibility (27), limits (11), trading restrictions (10).
pub fn check_transfer_as(
    req: &TransferRequest,
    submitter: &AccountId,
    state: &State,
) -> Result<ComplianceVerdict> {
    let token = state
        .tokens
        .get(&req.token_id)
        .ok_or_else(|| Error::UnknownToken(req.token_id.clone()))?;
    let def = &token.def;
    let policy = &token.policy;
    let mut codes = Vec::new();
    let mut fail = |code: ReasonCode| {
        if !codes.contains(&code) {
            codes.push(code);
        }
    };

    // (a) kill switch
    if def.lifecycle == Lifecycle::Killed {
        fail(ReasonCode::Rcp14);
    }
    // (b) pause
    if def.lifecycle == Lifecycle::Paused || policy.trading_paused {
        fail(ReasonCode::Rcp13);
    }
    // (c) role permission
    let roles = state.roles_of(submitter);
    let brokered_ok = submitter == &req.from || roles.contains(&PartyRole::Broker);
    if check_permission("transfer", &policy.role_permissions, &roles).is_err() || !brokered_ok {
        fail(ReasonCode::Rcp07);
    }
    // (d) screening of both parties
    let parties = [&req.from, &req.to];
    if def.class.compliant && parties.iter().any(|p| !state.identities.is_verified(p)) {
        fail(ReasonCode::Rcp01);
    }
    if parties.iter().any(|p| state.identities.is_blacklisted(p)) {
        fail(ReasonCode::Rcp15);
    }
    // (e) frozen funds are excluded; a shortfall with nothing frozen is unsettleable
    let holding = token.holding(&req.from);
    let free = Amount::new(holding.free, def.decimals())?;
    if req.amount.cmp_exact(free) == std::cmp::Ordering::Greater {
        fail(if holding.frozen > 0 {
            ReasonCode::Rcp08
        } else {
            ReasonCode::Rcp21
        });
    }
    // (f) expiry, with redemption to the issuer still open
    let expired = token.expired || def.expiry.is_some_and(|e| req.at >= e);
    if expired && req.to != def.issuer {
        fail(ReasonCode::Rcp23);
    }
    // (g) transfer mode
    let mode_ok = def.class.transferable
        && match &policy.transfer_mode {
            TransferMode::Free => true,
            TransferMode::WhitelistOnly(allowed) => {
                allowed.contains(&req.to) || req.to == def.issuer
            }
            TransferMode::IssuerOnly => req.from == def.issuer || req.to == def.issuer,
            TransferMode::NonTransferable => req.from == def.issuer,
        };
    let mode_ok = mode_ok || (!def.class.transferable && req.from == def.issuer);
    if !mode_ok {
        fail(ReasonCode::Rcp24);
    }
    // (h) no splitting below the token's smallest unit
    if req.amount.rescale(def.decimals()).is_err() {
        fail(ReasonCode::Rcp27);
    }
    // (i) limits
    if let Some(limit) = policy.per_tx_limit {
        if exceeds(req.amount, limit, false) {
            fail(ReasonCode::Rcp11);
        }
    }
    if let Some(window) = policy.counterparty_window_limit {
        if evaluate_window_limit(token, &req.from, &req.to, req.amount, req.at, window)? {
            fail(ReasonCode::Rcp11);
        }
    }
    // (j) regulator trading restrictions
    let restrictions = &policy.trading_restrictions;
    if restrictions.instrument_ban
        || parties
            .iter()
            .any(|p| restrictions.banned_accounts.contains(*p))
    {
        fail(ReasonCode::Rcp10);
    }

    let mut alerts = threshold_alerts(req, token, state)?;
    alerts.extend(raise_pattern_alert(req, token)?);

    let decision = if codes.is_empty() {
        Decision::Approved
    } else {
        Decision::Rejected(codes)
    };
    Ok(ComplianceVerdict { decision, alerts })
}
