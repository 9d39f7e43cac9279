//! Deterministic end-to-end scenarios with digest-stable transcripts.
//!
//! Three drivers share one config file: bond issuance through maturity,
//! carbon-credit issuance through use and burn, and a two-ledger atomic
//! swap with fault injection.

mod bond;
mod carbon;
pub mod interop;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::identity::KycStatus;
use crate::ledger::{Digest, LedgerEvent};
use crate::model::{AccountId, LogicalTime, PartyRole};

pub use bond::run_bond_scenario;
pub use carbon::run_carbon_scenario;
pub use interop::{atomic_swap, run_interop_scenario, Coordinator, FaultPlan, SwapStage, SwapState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Bond,
    Carbon,
    Interop,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::Bond, ScenarioKind::Carbon, ScenarioKind::Interop];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Bond => "bond",
            ScenarioKind::Carbon => "carbon",
            ScenarioKind::Interop => "interop",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown scenario `{s}`")))
    }
}

/// Account ids per role. `unverified` investors never pass KYC.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Roster {
    pub issuer: String,
    pub legal_counsel: String,
    pub kyc_provider: String,
    pub regulator: String,
    pub auditor: String,
    pub broker: String,
    pub relayer: String,
    pub bridge: String,
    pub recovery: String,
    pub investors: Vec<String>,
    pub unverified: Vec<String>,
    pub consumers: Vec<String>,
}

impl Default for Roster {
    fn default() -> Self {
        Roster {
            issuer: "issuer".into(),
            legal_counsel: "counsel".into(),
            kyc_provider: "kyc".into(),
            regulator: "regulator".into(),
            auditor: "auditor".into(),
            broker: "broker".into(),
            relayer: "relayer".into(),
            bridge: "bridge".into(),
            recovery: "recovery".into(),
            investors: vec!["inv-a".into(), "inv-b".into(), "inv-c".into(), "inv-d".into()],
            unverified: vec!["inv-d".into()],
            consumers: vec!["consumer-a".into(), "consumer-b".into()],
        }
    }
}

impl Roster {
    fn singles(&self) -> [(&str, &String, PartyRole); 9] {
        [
            ("issuer", &self.issuer, PartyRole::Issuer),
            ("legal_counsel", &self.legal_counsel, PartyRole::LegalCounsel),
            ("kyc_provider", &self.kyc_provider, PartyRole::Operator),
            ("regulator", &self.regulator, PartyRole::Regulator),
            ("auditor", &self.auditor, PartyRole::Auditor),
            ("broker", &self.broker, PartyRole::Broker),
            ("relayer", &self.relayer, PartyRole::Relayer),
            ("bridge", &self.bridge, PartyRole::Broker),
            ("recovery", &self.recovery, PartyRole::Operator),
        ]
    }

    pub fn verified_investors(&self) -> Vec<&String> {
        self.investors.iter().filter(|i| !self.unverified.contains(i)).collect()
    }

    fn validate(&self, kind: ScenarioKind) -> Result<()> {
        let mut seen = BTreeSet::new();
        let all = self
            .singles()
            .into_iter()
            .map(|(_, id, _)| id)
            .chain(&self.investors)
            .chain(&self.consumers);
        for id in all {
            AccountId::new(id.as_str())?;
            if !seen.insert(id) {
                return Err(Error::Config(format!("roster lists `{id}` twice")));
            }
        }
        if let Some(u) = self.unverified.iter().find(|u| !self.investors.contains(u)) {
            return Err(Error::Config(format!("unverified `{u}` is not an investor")));
        }
        let need_investors = match kind {
            ScenarioKind::Bond | ScenarioKind::Interop => 2,
            ScenarioKind::Carbon => 2,
        };
        if self.verified_investors().len() < need_investors {
            return Err(Error::Config(format!(
                "{} scenario needs at least {need_investors} verified investors",
                kind.name()
            )));
        }
        if kind == ScenarioKind::Carbon && self.consumers.is_empty() {
            return Err(Error::Config("carbon scenario needs a consumer".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BondForm {
    /// Fungible bond units, `units` per subscribing investor.
    Ft,
    /// A single bond certificate.
    Nft,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BondConfig {
    /// Per unit, in cash units with two decimals.
    pub face_value: String,
    pub coupon_bp: u32,
    /// Seconds from issuance to maturity.
    pub maturity_offset: u64,
    pub form: BondForm,
    pub units: u64,
    pub trades: u32,
    pub trade_limit: Option<u64>,
    /// Whether counsel supplies the notarized prospectus.
    pub legal_documents: bool,
    pub profile: String,
    /// Relayer fee per gasless settlement.
    pub relay_fee: String,
}

impl Default for BondConfig {
    fn default() -> Self {
        BondConfig {
            face_value: "1000.00".into(),
            coupon_bp: 500,
            maturity_offset: 31_536_000,
            form: BondForm::Ft,
            units: 10,
            trades: 6,
            trade_limit: Some(8),
            legal_documents: true,
            profile: "fatf".into(),
            relay_fee: "0.25".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarbonConfig {
    /// Number of credit NFTs; at least four.
    pub credits: u32,
    pub splittable: bool,
    pub fractions: u64,
    /// Seconds from issuance until credits expire.
    pub validity: u64,
    /// Whether the verification report is ready at issuance.
    pub prepared: bool,
    pub trades: u32,
    pub profile: String,
}

impl Default for CarbonConfig {
    fn default() -> Self {
        CarbonConfig {
            credits: 5,
            splittable: true,
            fractions: 100,
            validity: 15_768_000,
            prepared: true,
            trades: 6,
            profile: "default".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InteropConfig {
    pub bond_units: u64,
    /// Cash per bond unit.
    pub price: String,
    /// Protocol step (0 to 5) before which the coordinator crashes.
    pub fault_step: Option<u32>,
    /// Blacklist the cash-leg receiver on the DeFi ledger before the swap.
    pub compliance_failure: bool,
}

impl Default for InteropConfig {
    fn default() -> Self {
        InteropConfig {
            bond_units: 5,
            price: "1000.00".into(),
            fault_step: None,
            compliance_failure: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub roster: Roster,
    pub bond: BondConfig,
    pub carbon: CarbonConfig,
    pub interop: InteropConfig,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<ScenarioConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    /// Identifies a config for golden lookup.
    pub fn digest(&self) -> Digest {
        Digest::of(self.to_toml().as_bytes())
    }

    pub fn validate(&self, kind: ScenarioKind) -> Result<()> {
        self.roster.validate(kind)?;
        match kind {
            ScenarioKind::Bond => {
                if self.bond.units == 0 {
                    return Err(Error::Config("bond.units must be positive".into()));
                }
                if self.bond.trade_limit == Some(0) {
                    return Err(Error::Config("bond.trade_limit must be positive".into()));
                }
                if self.bond.maturity_offset == 0 {
                    return Err(Error::Config("bond.maturity_offset must be positive".into()));
                }
            }
            ScenarioKind::Carbon => {
                if self.carbon.credits < 4 {
                    return Err(Error::Config("carbon.credits must be at least 4".into()));
                }
                if self.carbon.fractions < 2 {
                    return Err(Error::Config("carbon.fractions must be at least 2".into()));
                }
                if self.carbon.validity < 1_000 {
                    return Err(Error::Config("carbon.validity must be at least 1000 seconds".into()));
                }
            }
            ScenarioKind::Interop => {
                if self.interop.bond_units == 0 {
                    return Err(Error::Config("interop.bond_units must be positive".into()));
                }
                if self.interop.fault_step.is_some_and(|s| s > interop::LAST_STEP) {
                    return Err(Error::Config(format!(
                        "interop.fault_step must be between 0 and {}",
                        interop::LAST_STEP
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptStep {
    pub phase: String,
    pub label: String,
    pub actor: String,
    pub command: String,
    pub outcome: String,
    /// Hash of the last event the step sealed, or of `outcome` when it
    /// sealed none.
    pub digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioTranscript {
    pub scenario: String,
    pub steps: Vec<TranscriptStep>,
    /// Coordinator decision record; interop only.
    pub decisions: Vec<String>,
    /// Final state digest per engine instance.
    pub finals: Vec<(String, Digest)>,
}

impl ScenarioTranscript {
    pub fn render(&self) -> String {
        let mut out = format!("scenario {}\n", self.scenario);
        for (i, s) in self.steps.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i:03} [{}] {} | {} | {} | {} | {}",
                s.phase,
                s.label,
                s.actor,
                s.command,
                s.outcome,
                s.digest.to_hex()
            );
        }
        for d in &self.decisions {
            let _ = writeln!(out, "decision {d}");
        }
        for (instance, digest) in &self.finals {
            let _ = writeln!(out, "final {instance} {}", digest.to_hex());
        }
        out
    }

    pub fn digest(&self) -> Digest {
        Digest::of(self.render().as_bytes())
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.steps.iter().any(|s| s.label == label || s.phase == label)
    }

    pub fn steps_labelled<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a TranscriptStep> + 'a {
        self.steps.iter().filter(move |s| s.label == label)
    }
}

/// A finished run: the transcript plus the engines it drove.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub transcript: ScenarioTranscript,
    pub engines: Vec<Engine>,
}

pub fn run(kind: ScenarioKind, config: &ScenarioConfig) -> Result<ScenarioRun> {
    match kind {
        ScenarioKind::Bond => run_bond_scenario(config),
        ScenarioKind::Carbon => run_carbon_scenario(config),
        ScenarioKind::Interop => run_interop_scenario(config),
    }
}

/// Builds a transcript while the scenario drives its engines.
pub(crate) struct Recorder {
    scenario: String,
    phase: String,
    steps: Vec<TranscriptStep>,
    clock: u64,
}

impl Recorder {
    pub(crate) fn new(scenario: &str) -> Self {
        Recorder {
            scenario: scenario.into(),
            phase: String::new(),
            steps: Vec::new(),
            clock: 0,
        }
    }

    pub(crate) fn phase(&mut self, phase: &str) {
        self.phase = phase.into();
    }

    /// Advances logical time by one second and returns it.
    pub(crate) fn tick(&mut self) -> LogicalTime {
        self.clock += 1;
        LogicalTime(self.clock)
    }

    pub(crate) fn advance_to(&mut self, at: u64) -> LogicalTime {
        self.clock = self.clock.max(at);
        LogicalTime(self.clock)
    }

    pub(crate) fn now(&self) -> LogicalTime {
        LogicalTime(self.clock)
    }

    pub(crate) fn step(&mut self, label: &str, actor: &str, command: String, outcome: String, events: &[LedgerEvent]) {
        let digest = events
            .last()
            .map_or_else(|| Digest::of(outcome.as_bytes()), |e| e.hash);
        self.steps.push(TranscriptStep {
            phase: self.phase.clone(),
            label: label.into(),
            actor: actor.into(),
            command,
            outcome,
            digest,
        });
    }

    pub(crate) fn finish(self, engines: Vec<Engine>, decisions: Vec<String>) -> ScenarioRun {
        let finals = engines
            .iter()
            .map(|e| (e.instance().to_string(), e.state_digest()))
            .collect();
        ScenarioRun {
            transcript: ScenarioTranscript {
                scenario: self.scenario,
                steps: self.steps,
                decisions,
                finals,
            },
            engines,
        }
    }
}

pub(crate) fn acct(id: &str) -> Result<AccountId> {
    AccountId::new(id)
}

pub(crate) fn codes_text(codes: &[crate::policy::ReasonCode]) -> String {
    codes.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

/// Registers `members` on `engine`; everyone but `unverified` is verified by
/// the KYC provider, which verifies itself first.
pub(crate) fn onboard(
    engine: &mut Engine,
    rec: &mut Recorder,
    roster: &Roster,
    members: &[(&String, PartyRole)],
    verify: bool,
) -> Result<()> {
    let kyc = acct(&roster.kyc_provider)?;
    for (id, role) in members {
        let subject = acct(id)?;
        let at = rec.tick();
        let ev = engine.register_identity(&subject, Digest::of(id.as_bytes()), &BTreeSet::from([*role]), at)?;
        rec.step(
            "Register Participant",
            id,
            format!("identity register {id} --role {}", role.name()),
            format!("registered as {}", role.name()),
            &[ev],
        );
        if verify && !roster.unverified.contains(id) {
            let ev = engine.set_kyc_status(&subject, KycStatus::Verified, None, &kyc, at)?;
            rec.step(
                "Verify Participant",
                &roster.kyc_provider,
                format!("identity kyc {id} verified"),
                "Verified".into(),
                &[ev],
            );
        }
    }
    Ok(())
}

/// Algorithm line labels every golden run set must cover between them.
pub const BOND_LABELS: &[&str] = &[
    "Preparation Phase",
    "Proceed to Tokenization and Issuance",
    "Halt and Review Requirements",
    "Tokenization and Issuance Phase",
    "Define and Deploy Smart Contracts",
    "Issue Tokenized Cash (FT) and Securities (NFT)",
    "Set Regulatory Compliance and Trading Restrictions",
    "KYC and Trading Restrictions Setup",
    "Set Trading Restrictions",
    "Request Additional Information",
    "Market Trading Phase",
    "Execute Trade",
    "Reject Trade",
    "Maturity and Settlement Phase",
    "Prepare for Settlement",
    "Calculate Principal and Interest",
    "Execute Gasless Settlement",
    "Transfer Assets to Investors",
    "Record Settlement for Audit",
    "Auditing and Reporting Phase",
    "Perform Real-time Transaction Monitoring",
    "Maintain Record Immutability",
    "Automated Regulatory Reporting",
];

pub const CARBON_LABELS: &[&str] = &[
    "Attach Legal Documents and Compliance",
    "Role-Based Permission Setting",
    "Setting Token Validity Period",
    "Setting Transfer Restrictions",
    "Check Preparation Status",
    "Request Transmitted to RCP via Exchange",
    "Transaction Approval and Recording",
    "Transaction Rejection and Reason Notification",
    "RCP Approves Request and Records",
    "Receive Request from Audit Institution",
    "Provide Role-Based Permission Setting Information",
    "Provide Legal Document and Compliance Information",
    "Provide Transaction Records and Activity Logs",
    "Provide Verification Results and Related Information",
    "Provide Process Verification Results and Related Information",
    "RCP Verifies Request ('Using Transfer Restrictions')",
    "Ownership Transfer and Use Approval",
    "Reporting Use to Regulatory Body and Attaching Legal Documents",
    "Use Request Rejection and Reason Notification",
    "RCP Verifies Burn Request",
    "Burn Approval and Ensuring Record Immutability",
    "Reporting Burn Process and Legal Compliance to Audit Institution",
    "Burn Request Rejection and Reason Notification",
];

/// A named config in the golden set.
#[derive(Debug, Clone)]
pub struct GoldenCase {
    pub name: &'static str,
    pub kind: ScenarioKind,
    pub config: ScenarioConfig,
}

/// The configurations whose transcript digests are committed.
pub fn golden_cases() -> Vec<GoldenCase> {
    let base = ScenarioConfig::default();
    let mut halted = base.clone();
    halted.bond.legal_documents = false;
    let mut nft = base.clone();
    nft.bond.form = BondForm::Nft;
    let mut unprepared = base.clone();
    unprepared.carbon.prepared = false;
    let mut faulted = base.clone();
    faulted.interop.fault_step = Some(4);
    let mut refused = base.clone();
    refused.interop.compliance_failure = true;
    vec![
        GoldenCase { name: "bond", kind: ScenarioKind::Bond, config: base.clone() },
        GoldenCase { name: "bond-nft", kind: ScenarioKind::Bond, config: nft },
        GoldenCase { name: "bond-halt", kind: ScenarioKind::Bond, config: halted },
        GoldenCase { name: "carbon", kind: ScenarioKind::Carbon, config: base.clone() },
        GoldenCase { name: "carbon-unprepared", kind: ScenarioKind::Carbon, config: unprepared },
        GoldenCase { name: "interop", kind: ScenarioKind::Interop, config: base },
        GoldenCase { name: "interop-fault-4", kind: ScenarioKind::Interop, config: faulted },
        GoldenCase { name: "interop-refused", kind: ScenarioKind::Interop, config: refused },
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenEntry {
    pub name: String,
    pub scenario: ScenarioKind,
    pub config: String,
    pub transcript: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenFile {
    #[serde(default)]
    pub golden: Vec<GoldenEntry>,
}

const GOLDEN_DATA: &str = include_str!("../../data/golden.toml");

impl GoldenFile {
    pub fn builtin() -> GoldenFile {
        toml::from_str(GOLDEN_DATA).expect("shipped golden file parses")
    }

    /// The committed transcript digest for a scenario run under `config`.
    pub fn lookup(&self, kind: ScenarioKind, config: &ScenarioConfig) -> Option<&GoldenEntry> {
        let key = config.digest().to_hex();
        self.golden.iter().find(|g| g.scenario == kind && g.config == key)
    }

    /// Regenerates the file contents from the golden cases.
    pub fn generate() -> Result<GoldenFile> {
        let mut golden = Vec::new();
        for case in golden_cases() {
            let run = run(case.kind, &case.config)?;
            golden.push(GoldenEntry {
                name: case.name.into(),
                scenario: case.kind,
                config: case.config.digest().to_hex(),
                transcript: run.transcript.digest().to_hex(),
            });
        }
        Ok(GoldenFile { golden })
    }
}

/// label → golden case names whose transcript contains it.
pub fn coverage_map() -> Result<BTreeMap<String, Vec<String>>> {
    let mut map: BTreeMap<String, Vec<String>> = BOND_LABELS
        .iter()
        .chain(CARBON_LABELS)
        .map(|l| (l.to_string(), Vec::new()))
        .collect();
    for case in golden_cases() {
        let transcript = run(case.kind, &case.config)?.transcript;
        for (label, names) in map.iter_mut() {
            if transcript.has_label(label) {
                names.push(case.name.to_string());
            }
        }
    }
    Ok(map)
}

pub fn render_coverage(map: &BTreeMap<String, Vec<String>>) -> String {
    let mut out = String::new();
    for (label, names) in map {
        let _ = writeln!(out, "{label:?} = {names:?}");
    }
    out
}
