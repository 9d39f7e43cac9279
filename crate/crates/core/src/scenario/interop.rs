//! Cross-ledger atomic settlement through a trusted coordinator.
//!
//! Two-phase commit: each leg is compliance-checked and locked (its amount
//! frozen) on its own ledger, the coordinator writes its decision to a
//! durable record, then both legs commit or both abort. A coordinator crash
//! loses everything but that record; recovery re-drives the recorded
//! decision, or aborts when none was written.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{acct, codes_text, onboard, Recorder, ScenarioConfig, ScenarioKind, ScenarioRun};
use crate::config::EngineConfig;
use crate::engine::Engine;
use crate::enforcement::SwapVote;
use crate::error::{Error, Result};
use crate::ledger::{EventKind, LedgerEvent};
use crate::model::{quantize, AccountId, Amount, AssetClassDescriptor, LogicalTime, PartyRole, TokenDefinition, TokenId};
use crate::policy::{PolicySet, ReasonCode, TransferRequest};
use crate::state::SwapPhase;

/// Protocol steps a crash may precede: 0 lock A, 1 lock B, 2 write
/// decision, 3 apply to A, 4 apply to B, 5 mark complete.
pub const LAST_STEP: u32 = 5;
/// Recovery steps a second crash may precede: 0 apply to A, 1 apply to B,
/// 2 mark complete.
pub const LAST_RECOVERY_STEP: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FaultPlan {
    pub crash_before: Option<u32>,
    /// Crash again during the first recovery attempt.
    pub recovery_crash_before: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwapStage {
    Init,
    Prepared,
    Committed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegSpec {
    pub instance: String,
    pub request: TransferRequest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapState {
    pub swap_id: String,
    pub legs: [LegSpec; 2],
    pub stage: SwapStage,
    pub reasons: Vec<ReasonCode>,
}

/// Durable coordinator record entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecisionRecord {
    Begin { swap_id: String, legs: Box<[LegSpec; 2]> },
    Decided { swap_id: String, commit: bool, reasons: Vec<ReasonCode>, note: String },
    Complete { swap_id: String },
}

impl DecisionRecord {
    fn render(&self) -> String {
        match self {
            DecisionRecord::Begin { swap_id, legs } => format!(
                "begin {swap_id} {}:{} {}:{}",
                legs[0].instance, legs[0].request.token_id, legs[1].instance, legs[1].request.token_id
            ),
            DecisionRecord::Decided {
                swap_id,
                commit,
                reasons,
                note,
            } => format!(
                "decide {swap_id} {} [{}] {note}",
                if *commit { "commit" } else { "abort" },
                codes_text(reasons)
            ),
            DecisionRecord::Complete { swap_id } => format!("complete {swap_id}"),
        }
    }
}

/// One coordinator action, for transcripts.
#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub phase: &'static str,
    pub label: String,
    pub instance: String,
    pub command: String,
    pub outcome: String,
    pub events: Vec<LedgerEvent>,
}

#[derive(Debug, Clone)]
pub struct Coordinator {
    actor: AccountId,
    record: Vec<DecisionRecord>,
    clock: u64,
    pub trace: Vec<TraceEntry>,
}

enum Vote {
    Yes,
    No(Vec<ReasonCode>, String),
}

impl Coordinator {
    pub fn new(actor: AccountId, start: LogicalTime) -> Self {
        Coordinator {
            actor,
            record: Vec::new(),
            clock: start.seconds(),
            trace: Vec::new(),
        }
    }

    pub fn record(&self) -> &[DecisionRecord] {
        &self.record
    }

    pub fn rendered_record(&self) -> Vec<String> {
        self.record.iter().map(DecisionRecord::render).collect()
    }

    fn tick(&mut self, e: &Engine) -> LogicalTime {
        self.clock = self.clock.max(e.log().last_time().seconds()) + 1;
        LogicalTime(self.clock)
    }

    fn trace(&mut self, phase: &'static str, label: &str, instance: &str, command: String, outcome: String, events: Vec<LedgerEvent>) {
        self.trace.push(TraceEntry {
            phase,
            label: label.into(),
            instance: instance.into(),
            command,
            outcome,
            events,
        });
    }

    fn prepare(&mut self, e: &mut Engine, swap_id: &str, leg: &LegSpec, counterpart: &str) -> Vote {
        let at = self.tick(e);
        let r = &leg.request;
        let cmd = format!("swap prepare {swap_id} {} {} {} {}", r.token_id, r.from, r.to, r.amount);
        let actor = self.actor.clone();
        match e.swap_prepare(swap_id, r, &actor, counterpart, at) {
            Ok(SwapVote::Prepared(events)) => {
                self.trace("Prepare", "Lock Leg", e.instance(), cmd, "SwapPrepared (locked)".into(), events);
                Vote::Yes
            }
            Ok(SwapVote::Rejected(codes)) => {
                let outcome = format!("refused {}", codes_text(&codes));
                self.trace("Prepare", "Refuse Leg", e.instance(), cmd, outcome.clone(), Vec::new());
                Vote::No(codes, outcome)
            }
            Err(err) => {
                let outcome = format!("refused: {err}");
                self.trace("Prepare", "Refuse Leg", e.instance(), cmd, outcome.clone(), Vec::new());
                Vote::No(Vec::new(), outcome)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn apply(&mut self, e: &mut Engine, phase: &'static str, swap_id: &str, leg: &LegSpec, commit: bool, reasons: &[ReasonCode], note: &str) {
        let at = self.tick(e);
        let result = if commit {
            e.swap_commit(swap_id, at)
        } else {
            e.swap_abort(swap_id, &leg.request, reasons, note, at)
        };
        let (label, verb) = if commit {
            ("Commit Leg", "commit")
        } else {
            ("Abort Leg", "abort")
        };
        let (outcome, events) = match result {
            Ok(events) if events.is_empty() => ("already applied".to_string(), events),
            Ok(events) => (events.last().map(|e| e.kind.name().to_string()).unwrap_or_default(), events),
            Err(err) => (format!("error: {err}"), Vec::new()),
        };
        self.trace(phase, label, e.instance(), format!("swap {verb} {swap_id}"), outcome, events);
    }

    /// Runs the protocol, then recovery if the coordinator crashed.
    pub fn atomic_swap(
        &mut self,
        a: &mut Engine,
        b: &mut Engine,
        swap_id: &str,
        leg_a: TransferRequest,
        leg_b: TransferRequest,
        faults: FaultPlan,
    ) -> SwapState {
        let legs = [
            LegSpec {
                instance: a.instance().into(),
                request: leg_a,
            },
            LegSpec {
                instance: b.instance().into(),
                request: leg_b,
            },
        ];
        self.record.push(DecisionRecord::Begin {
            swap_id: swap_id.into(),
            legs: Box::new(legs.clone()),
        });
        if let Some(step) = self.protocol(a, b, swap_id, &legs, faults.crash_before) {
            self.trace("Crash", "Coordinator Crash", "coordinator", format!("crash before step {step}"), "volatile state lost".into(), Vec::new());
            let mut again = faults.recovery_crash_before;
            while let Err(step) = self.recover(a, b, again.take()) {
                self.trace(
                    "Crash",
                    "Coordinator Crash",
                    "coordinator",
                    format!("crash before recovery step {step}"),
                    "volatile state lost".into(),
                    Vec::new(),
                );
            }
        }
        Self::observe(a, b, swap_id, legs, &self.record)
    }

    /// Returns the step a crash preceded, if any.
    fn protocol(&mut self, a: &mut Engine, b: &mut Engine, swap_id: &str, legs: &[LegSpec; 2], crash: Option<u32>) -> Option<u32> {
        let crashes = |step: u32| crash == Some(step);
        if crashes(0) {
            return Some(0);
        }
        let vote_a = self.prepare(a, swap_id, &legs[0], b.instance());
        if crashes(1) {
            return Some(1);
        }
        let vote_b = match vote_a {
            Vote::Yes => self.prepare(b, swap_id, &legs[1], a.instance()),
            Vote::No(..) => Vote::No(Vec::new(), "not attempted".into()),
        };
        if crashes(2) {
            return Some(2);
        }
        let mut reasons = Vec::new();
        let mut notes = Vec::new();
        for (leg, vote) in legs.iter().zip([&vote_a, &vote_b]) {
            if let Vote::No(codes, note) = vote {
                for c in codes {
                    if !reasons.contains(c) {
                        reasons.push(*c);
                    }
                }
                notes.push(format!("{}: {note}", leg.instance));
            }
        }
        let commit = notes.is_empty();
        let note = if commit { "both legs locked".to_string() } else { notes.join("; ") };
        self.decide(swap_id, commit, reasons.clone(), note.clone());
        if crashes(3) {
            return Some(3);
        }
        let phase = if commit { "Commit" } else { "Abort" };
        self.apply(a, phase, swap_id, &legs[0], commit, &reasons, &note);
        if crashes(4) {
            return Some(4);
        }
        self.apply(b, phase, swap_id, &legs[1], commit, &reasons, &note);
        if crashes(5) {
            return Some(5);
        }
        self.complete(swap_id);
        None
    }

    fn decide(&mut self, swap_id: &str, commit: bool, reasons: Vec<ReasonCode>, note: String) {
        let entry = DecisionRecord::Decided {
            swap_id: swap_id.into(),
            commit,
            reasons,
            note,
        };
        self.trace("Decide", "Record Decision", "coordinator", "decision write".into(), entry.render(), Vec::new());
        self.record.push(entry);
    }

    fn complete(&mut self, swap_id: &str) {
        self.record.push(DecisionRecord::Complete { swap_id: swap_id.into() });
        self.trace("Complete", "Mark Complete", "coordinator", format!("complete {swap_id}"), "done".into(), Vec::new());
    }

    /// Re-drives every incomplete swap from the durable record alone.
    /// `Err(step)` reports a crash before that recovery step.
    pub fn recover(&mut self, a: &mut Engine, b: &mut Engine, crash: Option<u32>) -> std::result::Result<(), u32> {
        let open: Vec<(String, [LegSpec; 2])> = self
            .record
            .iter()
            .filter_map(|r| match r {
                DecisionRecord::Begin { swap_id, legs } => Some((swap_id.clone(), (**legs).clone())),
                _ => None,
            })
            .filter(|(id, _)| {
                !self
                    .record
                    .iter()
                    .any(|r| matches!(r, DecisionRecord::Complete { swap_id } if swap_id == id))
            })
            .collect();
        for (swap_id, legs) in open {
            assert_eq!(legs[0].instance, a.instance(), "recovery engines out of order");
            let decided = self.record.iter().rev().find_map(|r| match r {
                DecisionRecord::Decided {
                    swap_id: id,
                    commit,
                    reasons,
                    note,
                } if *id == swap_id => Some((*commit, reasons.clone(), note.clone())),
                _ => None,
            });
            let (commit, reasons, note) = match decided {
                Some(d) => {
                    self.trace("Recovery", "Replay Decision", "coordinator", format!("read record {swap_id}"), "decision found".into(), Vec::new());
                    d
                }
                None => {
                    let note = "presumed abort: no decision recorded".to_string();
                    self.decide(&swap_id, false, Vec::new(), note.clone());
                    (false, Vec::new(), note)
                }
            };
            if crash == Some(0) {
                return Err(0);
            }
            self.apply(a, "Recovery", &swap_id, &legs[0], commit, &reasons, &note);
            if crash == Some(1) {
                return Err(1);
            }
            self.apply(b, "Recovery", &swap_id, &legs[1], commit, &reasons, &note);
            if crash == Some(2) {
                return Err(2);
            }
            self.complete(&swap_id);
        }
        Ok(())
    }

    fn observe(a: &Engine, b: &Engine, swap_id: &str, legs: [LegSpec; 2], record: &[DecisionRecord]) -> SwapState {
        let phases = [a, b].map(|e| e.state().swaps.get(swap_id).map(|l| l.phase));
        let stage = match phases {
            [Some(SwapPhase::Committed), Some(SwapPhase::Committed)] => SwapStage::Committed,
            [Some(SwapPhase::Aborted), Some(SwapPhase::Aborted)] => SwapStage::Aborted,
            [None, None] => SwapStage::Init,
            _ => SwapStage::Prepared,
        };
        let reasons = record
            .iter()
            .rev()
            .find_map(|r| match r {
                DecisionRecord::Decided { swap_id: id, reasons, .. } if id == swap_id => Some(reasons.clone()),
                _ => None,
            })
            .unwrap_or_default();
        SwapState {
            swap_id: swap_id.into(),
            legs,
            stage,
            reasons,
        }
    }
}

/// Free-function form of [`Coordinator::atomic_swap`].
pub fn atomic_swap(
    coordinator: &mut Coordinator,
    a: &mut Engine,
    b: &mut Engine,
    swap_id: &str,
    leg_a: TransferRequest,
    leg_b: TransferRequest,
    faults: FaultPlan,
) -> SwapState {
    coordinator.atomic_swap(a, b, swap_id, leg_a, leg_b, faults)
}

/// Two ledgers ready to swap: bond on TradFi held by the first verified
/// investor, cash on DeFi held by the second.
pub struct InteropDesk {
    pub tradfi: Engine,
    pub defi: Engine,
    pub bridge: AccountId,
    pub seller: AccountId,
    pub buyer: AccountId,
    pub bond: TokenId,
    pub cash: TokenId,
    pub price: Amount,
}

impl InteropDesk {
    pub(crate) fn new(config: &ScenarioConfig, rec: &mut Recorder) -> Result<InteropDesk> {
        let r = &config.roster;
        let i = &config.interop;
        let issuer = acct(&r.issuer)?;
        let verified = r.verified_investors();
        let seller = acct(verified[0])?;
        let buyer = acct(verified[1])?;
        let units = u128::from(i.bond_units);
        let price = quantize(&i.price, 2)?;
        let cash_total = Amount::new(price.minor_units().checked_mul(units * 2).ok_or(Error::Overflow)?, 2)?;
        let members = [
            (&r.kyc_provider, PartyRole::Operator),
            (&r.issuer, PartyRole::Issuer),
            (&r.regulator, PartyRole::Regulator),
            (&r.bridge, PartyRole::Broker),
        ];
        let investors: Vec<(&String, PartyRole)> = r.investors.iter().map(|i| (i, PartyRole::Investor)).collect();
        let bond = TokenId::new("bond")?;
        let cash = TokenId::new("cash")?;
        let mut ledgers = Vec::new();
        for (instance, token, class, holder, amount) in [
            ("tradfi", &bond, AssetClassDescriptor::security_ft(), &seller, Amount::new(units * 2, 0)?),
            ("defi", &cash, AssetClassDescriptor::cash_ft(2), &buyer, cash_total),
        ] {
            rec.phase(&format!("Setup {instance}"));
            let mut e = Engine::new(EngineConfig {
                instance: instance.into(),
                ..EngineConfig::default()
            });
            onboard(&mut e, rec, r, &members, true)?;
            onboard(&mut e, rec, r, &investors, true)?;
            let decimals = class.decimals;
            let def = TokenDefinition::new(token.clone(), class, issuer.clone());
            let at = rec.tick();
            let ev = e.define_token(def, PolicySet::permissive(decimals)?, Vec::new(), &issuer, at)?;
            rec.step("Define Token", &r.issuer, format!("token define {token}"), "TokenDefined".into(), &[ev]);
            let ev = e.mint(token, holder, amount, &issuer, at)?;
            rec.step("Issue Token", &r.issuer, format!("tx mint {token} {holder} {amount}"), "Minted".into(), &[ev]);
            ledgers.push(e);
        }
        let defi = ledgers.pop().expect("two ledgers");
        let tradfi = ledgers.pop().expect("two ledgers");
        Ok(InteropDesk {
            tradfi,
            defi,
            bridge: acct(&r.bridge)?,
            seller,
            buyer,
            bond,
            cash,
            price,
        })
    }

    /// Bond leg seller → buyer and cash leg buyer → seller for `units`.
    pub fn legs(&self, units: u128, at: LogicalTime) -> Result<(TransferRequest, TransferRequest)> {
        let cash = Amount::new(self.price.minor_units().checked_mul(units).ok_or(Error::Overflow)?, 2)?;
        Ok((
            TransferRequest::new(self.bond.clone(), self.seller.clone(), self.buyer.clone(), Amount::new(units, 0)?, at)?,
            TransferRequest::new(self.cash.clone(), self.buyer.clone(), self.seller.clone(), cash, at)?,
        ))
    }

    /// Count of `SwapCommitted` events for `swap_id` per ledger.
    pub fn commits(&self, swap_id: &str) -> [usize; 2] {
        [&self.tradfi, &self.defi].map(|e| {
            e.log()
                .events()
                .iter()
                .filter(|ev| ev.kind == EventKind::SwapCommitted && ev.payload.get("swap_id") == Some(swap_id))
                .count()
        })
    }
}

pub fn run_interop_scenario(config: &ScenarioConfig) -> Result<ScenarioRun> {
    config.validate(ScenarioKind::Interop)?;
    let r = &config.roster;
    let mut rec = Recorder::new("interop");
    let mut desk = InteropDesk::new(config, &mut rec)?;
    if config.interop.compliance_failure {
        rec.phase("Setup defi");
        let at = rec.tick();
        let ev = desk
            .defi
            .blacklist_add(&desk.seller, &acct(&r.regulator)?, "sanctions screening hit", at)?;
        rec.step("Blacklist Receiver", &r.regulator, format!("identity blacklist add {}", desk.seller), "BlacklistAdded".into(), &[ev]);
    }
    let (leg_a, leg_b) = desk.legs(u128::from(config.interop.bond_units), rec.now())?;
    let mut coordinator = Coordinator::new(desk.bridge.clone(), rec.now());
    let faults = FaultPlan {
        crash_before: config.interop.fault_step,
        recovery_crash_before: None,
    };
    let swap = coordinator.atomic_swap(&mut desk.tradfi, &mut desk.defi, "swap-1", leg_a, leg_b, faults);
    for t in std::mem::take(&mut coordinator.trace) {
        rec.phase(t.phase);
        rec.step(&t.label, desk.bridge.as_str(), format!("[{}] {}", t.instance, t.command), t.outcome, &t.events);
    }
    rec.phase("Verification");
    let [a, b] = desk.commits("swap-1");
    rec.step(
        "Verify Atomic Outcome",
        desk.bridge.as_str(),
        "query swap swap-1".into(),
        format!(
            "stage={:?} reasons=[{}] commits tradfi={a} defi={b}",
            swap.stage,
            codes_text(&swap.reasons)
        ),
        &[],
    );
    let decisions = coordinator.rendered_record();
    Ok(rec.finish(vec![desk.tradfi, desk.defi], decisions))
}

/// Result of one randomized or enumerated fault trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialOutcome {
    pub faults: FaultPlan,
    pub compliance_failure: bool,
    pub stage: SwapStage,
    pub commits: [usize; 2],
    pub conserves: bool,
    /// No swap lock is left frozen on either ledger.
    pub locks_released: bool,
    /// Both legs' balances moved exactly when committed.
    pub balances_consistent: bool,
}

impl TrialOutcome {
    pub fn is_atomic(&self) -> bool {
        let [a, b] = self.commits;
        a == b && a <= 1 && matches!(self.stage, SwapStage::Committed | SwapStage::Aborted)
    }

    pub fn holds(&self) -> bool {
        self.is_atomic() && self.conserves && self.locks_released && self.balances_consistent
    }
}

/// Runs one swap under `faults`, optionally with the cash-leg receiver
/// blacklisted and with `units` bond units (more than held forces RCP-21).
pub fn fault_trial(config: &ScenarioConfig, faults: FaultPlan, compliance_failure: bool, units: u128) -> Result<TrialOutcome> {
    let mut rec = Recorder::new("trial");
    let mut desk = InteropDesk::new(config, &mut rec)?;
    if compliance_failure {
        let at = rec.tick();
        desk.defi
            .blacklist_add(&desk.seller, &acct(&config.roster.regulator)?, "trial", at)?;
    }
    let before = [
        desk.tradfi.token(&desk.bond)?.holding(&desk.seller).free,
        desk.defi.token(&desk.cash)?.holding(&desk.buyer).free,
    ];
    let (leg_a, leg_b) = desk.legs(units, rec.now())?;
    let cash_amount = leg_b.amount.minor_units();
    let mut coordinator = Coordinator::new(desk.bridge.clone(), rec.now());
    let swap = coordinator.atomic_swap(&mut desk.tradfi, &mut desk.defi, "swap-t", leg_a, leg_b, faults);
    let bond = desk.tradfi.token(&desk.bond)?;
    let cash = desk.defi.token(&desk.cash)?;
    let locks_released = bond.holdings.values().chain(cash.holdings.values()).all(|h| h.frozen == 0);
    let after = [bond.holding(&desk.seller).free, cash.holding(&desk.buyer).free];
    let balances_consistent = match swap.stage {
        SwapStage::Committed => after == [before[0] - units, before[1] - cash_amount],
        _ => after == before,
    };
    Ok(TrialOutcome {
        faults,
        compliance_failure,
        stage: swap.stage,
        commits: desk.commits("swap-t"),
        conserves: desk.tradfi.state().conserves() && desk.defi.state().conserves(),
        locks_released,
        balances_consistent,
    })
}

/// Every crash position, with and without a compliance failure, each
/// combined with every recovery crash position.
pub fn exhaustive_fault_sweep(config: &ScenarioConfig) -> Result<Vec<TrialOutcome>> {
    let units = u128::from(config.interop.bond_units);
    let mut out = Vec::new();
    for compliance_failure in [false, true] {
        for crash in std::iter::once(None).chain((0..=LAST_STEP).map(Some)) {
            let recoveries: Vec<Option<u32>> = match crash {
                None => vec![None],
                Some(_) => std::iter::once(None).chain((0..=LAST_RECOVERY_STEP).map(Some)).collect(),
            };
            for recovery_crash_before in recoveries {
                let faults = FaultPlan {
                    crash_before: crash,
                    recovery_crash_before,
                };
                out.push(fault_trial(config, faults, compliance_failure, units)?);
            }
        }
    }
    Ok(out)
}

/// A seeded random trial: random crash points, compliance failure and size.
pub fn random_trial(config: &ScenarioConfig, seed: u64) -> Result<TrialOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng, last: u32| rng.gen_bool(0.8).then(|| rng.gen_range(0..=last));
    let faults = FaultPlan {
        crash_before: pick(&mut rng, LAST_STEP),
        recovery_crash_before: pick(&mut rng, LAST_RECOVERY_STEP),
    };
    let compliance_failure = rng.gen_bool(0.25);
    let held = u128::from(config.interop.bond_units) * 2;
    let units = rng.gen_range(1..=held + 1);
    fault_trial(config, faults, compliance_failure, units)
}
