//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p rcp-core --test acceptance`. The process exits
//! non-zero when any criterion's status differs from `EXPECTED_RED`.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rcp_core::conformance::{builtin_data, builtin_manifests, builtin_tables, compare_published, derive_manifest_from_engine};
use rcp_core::config::EngineConfig;
use rcp_core::engine::{Engine, MetaTransferAuthorization};
use rcp_core::enforcement::CorrectedTransfer;
use rcp_core::identity::{KycStatus, RiskRating};
use rcp_core::ledger::{verify_log_bytes, Digest, DocumentAnchor};
use rcp_core::model::{AccountId, Amount, AssetClassDescriptor, LogicalTime, PartyRole, TokenDefinition, TokenId};
use rcp_core::policy::{AlertKind, PolicySet, ReasonCode, TransferMode, TransferRequest, WindowLimit};
use rcp_core::scenario::interop::{exhaustive_fault_sweep, random_trial};
use rcp_core::scenario::{run_bond_scenario, run_carbon_scenario, GoldenFile, ScenarioConfig, ScenarioKind};
use rcp_core::state;

// Tolerances, pinned.
const CONFORMANCE_BUDGET: Duration = Duration::from_secs(1);
const ATOMICITY_BUDGET: Duration = Duration::from_secs(10);
const SCENARIO_BUDGET: Duration = Duration::from_secs(2);
const MIN_BODY_MATCHES: usize = 55;
const RANDOM_SWAP_RUNS: u64 = 1_000;
const FUZZ_COMMANDS: usize = 1_000;
/// Every byte of this many leading events is mutated; the rest of the
/// fuzz log gets `SAMPLED_MUTATIONS` random single-byte mutations.
const EXHAUSTIVE_MUTATION_EVENTS: usize = 40;
const SAMPLED_MUTATIONS: usize = 2_000;
const VERDICT_CASES: u32 = 10_000;

/// Criterion 1 cannot pass from the transcribed incidence data: the
/// published HKMA x ERC-20 cell (0/10) contradicts ERC-20 meeting items
/// 20 and 21, which the HKMA column requires, and the published ERC-20
/// total (15/117) is the sum of the published cells. The computed total is
/// 17/117. See README, "Known deviations".
const EXPECTED_RED: &[u32] = &[1];

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(u32, &str, Check, Option<Duration>); 7] = [
        (1, "conformance reproduction", conformance_reproduction, Some(CONFORMANCE_BUDGET)),
        (2, "manifest cardinalities", manifest_cardinalities, None),
        (3, "threshold behavior", threshold_behavior, None),
        (4, "atomicity property suite", atomicity_suite, Some(ATOMICITY_BUDGET)),
        (5, "immutability and finality", immutability_and_finality, None),
        (6, "scenario goldens", scenario_goldens, None),
        (7, "verdict determinism and completeness", verdict_properties, None),
    ];
    let mut unexpected = Vec::new();
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (mut passed, mut detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        if let Some(budget) = budget {
            if elapsed > budget {
                passed = false;
                detail = format!("{detail}; took {elapsed:?}, budget {budget:?}");
            }
        }
        println!(
            "criterion {id} {name}: {} ({} ms) {detail}",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_millis()
        );
        if passed == EXPECTED_RED.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected status for criteria {unexpected:?}");
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn acct(s: &str) -> AccountId {
    AccountId::new(s).unwrap()
}

fn tok(s: &str) -> TokenId {
    TokenId::new(s).unwrap()
}

fn amt(s: &str) -> Amount {
    s.parse().unwrap()
}

// ---- 1 ----

fn conformance_reproduction() -> Result<String, String> {
    let tables = builtin_tables();
    let cmp = compare_published(builtin_data(), &tables).map_err(|e| e.to_string())?;
    let mut failures = Vec::new();
    let expected_totals = [("ERC-20", 15), ("ERC-1400", 58), ("ERC-3643", 60), ("NEW-EIP", 77)];
    for (t, (proto, num)) in tables.iter().zip(expected_totals) {
        if t.protocol != proto || t.total != (num, 117) {
            failures.push(format!("{} total {}/{} != {num}/117", t.protocol, t.total.0, t.total.1));
        }
    }
    if cmp.body_matches < MIN_BODY_MATCHES {
        failures.push(format!("only {}/{} body cells match", cmp.body_matches, cmp.body_cells));
    }
    let anchors = [
        ("ERC-20", "BIS", (3, 7)),
        ("ERC-1400", "ESMA", (3, 6)),
        ("ERC-3643", "ESMA", (2, 6)),
        ("NEW-EIP", "FATF", (11, 14)),
        ("NEW-EIP", "FINRA", (11, 14)),
    ];
    for (proto, inst, want) in anchors {
        let got = tables
            .iter()
            .find(|t| t.protocol == proto)
            .and_then(|t| t.row(inst))
            .map(|r| (r.num, r.den));
        if got != Some(want) {
            failures.push(format!("anchor {proto}/{inst} {got:?} != {want:?}"));
        }
    }
    let errata: Vec<String> = cmp.errata.iter().map(ToString::to_string).collect();
    let summary = format!("body {}/{} match; errata [{}]", cmp.body_matches, cmp.body_cells, errata.join("; "));
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", failures.join("; ")))
    }
}

// ---- 2 ----

fn manifest_cardinalities() -> Result<String, String> {
    let manifests = builtin_manifests();
    let want = [("ERC-20", 5), ("ERC-1400", 16), ("ERC-3643", 15), ("NEW-EIP", 25)];
    for (m, (name, n)) in manifests.iter().zip(want) {
        ensure(m.protocol == name && m.items.len() == n, || {
            format!("{} has {} items, want {name} = {n}", m.protocol, m.items.len())
        })?;
    }
    let complement = BTreeSet::from([2, 5, 6, 17, 18, 19]);
    ensure(manifests[3].complement() == complement, || format!("NEW-EIP complement {:?}", manifests[3].complement()))?;
    let derived = derive_manifest_from_engine();
    ensure(derived.manifest.items.is_superset(&manifests[3].items), || {
        format!("engine-derived manifest {:?} misses NEW-EIP items", derived.manifest.items)
    })?;
    let simulated = [17, 18, 19]
        .iter()
        .all(|id| derived.annotations.get(id).is_some_and(|a| a.starts_with("visibility-simulated")));
    ensure(simulated, || "items 17-19 not annotated as visibility-simulated".into())?;
    Ok(format!(
        "5/16/15/25, complement {{2,5,6,17,18,19}}; engine covers {} items, 17-19 simulated",
        derived.manifest.items.len()
    ))
}

// ---- 3 ----

/// Verified low-risk parties a and b; `bond` under `profile` with 100,000
/// units at a.
fn threshold_desk(profile: &str) -> Engine {
    let config = EngineConfig::default();
    let policy = config.policy(profile, 0).unwrap();
    let mut e = Engine::new(config);
    let t = LogicalTime(0);
    for (who, role) in [("kyc", PartyRole::Operator), ("iss", PartyRole::Issuer), ("a", PartyRole::Investor), ("b", PartyRole::Investor)] {
        e.register_identity(&acct(who), Digest::of(who.as_bytes()), &BTreeSet::from([role]), t).unwrap();
        e.set_kyc_status(&acct(who), KycStatus::Verified, None, &acct("kyc"), t).unwrap();
    }
    let def = TokenDefinition::new(tok("bond"), AssetClassDescriptor::security_ft(), acct("iss"));
    e.define_token(def, policy, vec![], &acct("iss"), t).unwrap();
    e.mint(&tok("bond"), &acct("a"), amt("100000"), &acct("iss"), t).unwrap();
    e
}

fn alert_kinds(e: &Engine, amount: &str, wire: bool) -> Vec<AlertKind> {
    let mut req = TransferRequest::new(tok("bond"), acct("a"), acct("b"), amt(amount), LogicalTime(1)).unwrap();
    if wire {
        req = req.wire();
    }
    e.check(&req, &acct("a")).unwrap().alerts.iter().map(|a| a.kind).collect()
}

fn threshold_behavior() -> Result<String, String> {
    let e = threshold_desk("default");
    ensure(alert_kinds(&e, "15000", false).is_empty(), || "15000 raised an alert".into())?;
    ensure(alert_kinds(&e, "15001", false) == [AlertKind::ThresholdOccasional], || "15001 did not raise ThresholdOccasional".into())?;
    ensure(alert_kinds(&e, "1000", true).is_empty(), || "wire 1000 raised an alert".into())?;
    ensure(alert_kinds(&e, "1001", true) == [AlertKind::ThresholdWire], || "wire 1001 did not raise ThresholdWire".into())?;

    let day = 86_400;
    let mut e = threshold_desk("finma");
    let first = TransferRequest::new(tok("bond"), acct("a"), acct("b"), amt("6000"), LogicalTime(10)).unwrap();
    ensure(e.execute_transfer(&first, &acct("a"), LogicalTime(10)).unwrap().is_approved(), || "first FINMA leg rejected".into())?;
    let codes = |e: &Engine, amount: &str, at: u64| {
        let req = TransferRequest::new(tok("bond"), acct("a"), acct("b"), amt(amount), LogicalTime(at)).unwrap();
        e.rejection_codes(&req, &acct("a")).unwrap()
    };
    ensure(codes(&e, "4000", 20).is_empty(), || "cumulative 10000 rejected".into())?;
    ensure(codes(&e, "4001", 20) == [ReasonCode::Rcp11], || format!("cumulative 10001 gave {:?}", codes(&e, "4001", 20)))?;
    ensure(codes(&e, "4001", 10 + 30 * day).is_empty(), || "window did not roll off after 30 days".into())?;
    Ok("15000/15001, wire 1000/1001, FINMA window 10000/10001 over 30 days".into())
}

// ---- 4 ----

fn atomicity_suite() -> Result<String, String> {
    let config = ScenarioConfig::default();
    let mut outcomes = exhaustive_fault_sweep(&config).map_err(|e| e.to_string())?;
    let exhaustive = outcomes.len();
    for seed in 0..RANDOM_SWAP_RUNS {
        outcomes.push(random_trial(&config, seed).map_err(|e| e.to_string())?);
    }
    let half_committed = outcomes.iter().filter(|o| o.commits[0] != o.commits[1]).count();
    let unconserved = outcomes.iter().filter(|o| !o.conserves).count();
    let other = outcomes.iter().filter(|o| !o.holds()).count();
    let committed = outcomes.iter().filter(|o| o.commits == [1, 1]).count();
    let detail = format!(
        "{exhaustive} exhaustive + {RANDOM_SWAP_RUNS} random runs: {committed} committed, {} aborted, {half_committed} half-committed, {unconserved} unconserved, {other} other violations",
        outcomes.len() - committed
    );
    ensure(half_committed == 0 && unconserved == 0 && other == 0 && committed > 0 && committed < outcomes.len(), || detail.clone())?;
    Ok(detail)
}

// ---- 5 ----

const FUZZ_ACCOUNTS: [&str; 6] = ["iss", "reg", "a", "b", "c", "brk"];
const FUZZ_TOKENS: [&str; 3] = ["bond", "cash", "art"];

fn fuzz_desk() -> Engine {
    let mut e = Engine::new(EngineConfig::default());
    let t = LogicalTime(0);
    let roles = [
        ("kyc", PartyRole::Operator),
        ("iss", PartyRole::Issuer),
        ("reg", PartyRole::Regulator),
        ("a", PartyRole::Investor),
        ("b", PartyRole::Investor),
        ("c", PartyRole::Investor),
        ("brk", PartyRole::Broker),
        ("relay", PartyRole::Relayer),
        ("vault", PartyRole::Investor),
    ];
    for (who, role) in roles {
        e.register_identity(&acct(who), Digest::of(who.as_bytes()), &BTreeSet::from([role]), t).unwrap();
        e.set_kyc_status(&acct(who), KycStatus::Verified, None, &acct("kyc"), t).unwrap();
    }
    let mut recovery = PolicySet::permissive(0).unwrap();
    recovery.recovery_accounts.insert(acct("vault"));
    let defs = [
        (AssetClassDescriptor::security_ft(), recovery, None),
        (AssetClassDescriptor::cash_ft(2), PolicySet::permissive(2).unwrap(), None),
        (AssetClassDescriptor::nft().with_tag("splittable"), PolicySet::permissive(0).unwrap(), Some(LogicalTime(400_000))),
    ];
    for (name, (class, policy, expiry)) in FUZZ_TOKENS.iter().zip(defs) {
        let mut def = TokenDefinition::new(tok(name), class, acct("iss"));
        if let Some(x) = expiry {
            def = def.with_expiry(x);
        }
        e.define_token(def, policy, vec![], &acct("iss"), t).unwrap();
    }
    e.mint(&tok("cash"), &acct("relay"), amt("1000.00"), &acct("iss"), t).unwrap();
    e
}

/// Drives `n` random commands; refusals are expected and leave no trace.
fn fuzz_commands(e: &mut Engine, rng: &mut ChaCha8Rng, n: usize) {
    let mut now = 1u64;
    let mut swaps = Vec::new();
    for i in 0..n {
        now += rng.gen_range(0..3_600);
        let at = LogicalTime(now);
        let pick = |rng: &mut ChaCha8Rng| acct(FUZZ_ACCOUNTS[rng.gen_range(0..FUZZ_ACCOUNTS.len())]);
        let token = tok(FUZZ_TOKENS[rng.gen_range(0..FUZZ_TOKENS.len())]);
        let amount = if token.as_str() == "cash" {
            Amount::new(rng.gen_range(1..50_000), 2).unwrap()
        } else if token.as_str() == "art" {
            Amount::new(1, 0).unwrap()
        } else {
            Amount::new(rng.gen_range(1..400), 0).unwrap()
        };
        let (from, to) = (pick(rng), pick(rng));
        let req = TransferRequest::new(token.clone(), from.clone(), to.clone(), amount, at);
        let reg = acct("reg");
        let iss = acct("iss");
        let _ = match rng.gen_range(0..24) {
            0..=5 => req.and_then(|r| {
                let actor = if rng.gen_bool(0.8) { from.clone() } else { acct("brk") };
                e.execute_transfer(&r, &actor, at).map(|_| ())
            }),
            6 => req.and_then(|r| e.settle(&r.wire(), &from, at).map(|_| ())),
            7..=9 => e.mint(&token, &to, amount, &iss, at).map(|_| ()),
            10 => e.burn(&token, &from, amount, &from, at).map(|_| ()),
            11 => e.freeze(&token, &from, amount, &reg, at).map(|_| ()),
            12 => e.unfreeze(&token, &from, amount, &reg, at).map(|_| ()),
            13 => e.recover(&token, &from, &acct("vault"), amount, &reg, at).map(|_| ()),
            14 => match rng.gen_range(0..10) {
                0 => e.kill_switch(&token, &reg, at).map(|_| ()),
                1..=4 => e.pause(&token, &reg, at).map(|_| ()),
                _ => e.resume(&token, &reg, at).map(|_| ()),
            },
            15 => {
                if rng.gen_bool(0.5) {
                    e.blacklist_add(&to, &reg, "fuzz", at).map(|_| ())
                } else {
                    e.blacklist_remove(&to, &reg, at).map(|_| ())
                }
            }
            16 => {
                let status = [KycStatus::Verified, KycStatus::Unverified, KycStatus::Rejected][rng.gen_range(0..3)];
                let risk = [None, Some(RiskRating::Low), Some(RiskRating::High)][rng.gen_range(0..3)];
                e.set_kyc_status(&to, status, risk, &reg, at).map(|_| ())
            }
            17 => e.update_identity(&to, Digest::of(format!("profile {i}").as_bytes()), at).map(|_| ()),
            18 => req.and_then(|r| {
                let auth = MetaTransferAuthorization::new(r, acct("relay"), tok("cash"), amt("0.10"));
                e.execute_meta_transfer(&auth, at).map(|_| ())
            }),
            19 => {
                let seq = rng.gen_range(0..e.log().len() as u64);
                let fix = CorrectedTransfer { to: to.clone(), amount };
                e.correct(seq, &fix, &reg, at).map(|_| ())
            }
            20 => {
                if rng.gen_bool(0.5) {
                    e.split_lot(&tok("art"), rng.gen_range(2..20), &tok(&format!("art-lots-{i}")), &iss, at).map(|_| ())
                } else {
                    e.merge_lots(&tok("art"), &from, at).map(|_| ())
                }
            }
            21 => match rng.gen_range(0..4) {
                0 => e.expire_sweep(&token, at).map(|_| ()),
                1 => e.amend_contract(&token, &iss, at).map(|_| ()),
                2 => {
                    let doc = DocumentAnchor::for_bytes(&format!("doc-{i}"), &[i as u8], "mem://doc");
                    e.attach_document(&token, doc, &iss, at).map(|_| ())
                }
                _ => {
                    let last = e.log().len() as u64 - 1;
                    e.export_audit_report(rng.gen_range(0..=last), last, &reg, at).map(|_| ())
                }
            },
            22 => {
                let decimals = e.token(&token).map(|t| t.def.decimals()).unwrap_or(0);
                let mut policy = PolicySet::permissive(decimals).unwrap();
                if rng.gen_bool(0.5) {
                    policy.per_tx_limit = Some(Amount::whole(rng.gen_range(1..300), decimals).unwrap());
                }
                if rng.gen_bool(0.3) {
                    policy.transfer_mode = TransferMode::WhitelistOnly(BTreeSet::from([acct("a"), acct("b")]));
                }
                policy.recovery_accounts.insert(acct("vault"));
                e.set_policy(&token, policy, &reg, at).map(|_| ())
            }
            _ => {
                let id = format!("swap-{}", rng.gen_range(0..8));
                match rng.gen_range(0..3) {
                    0 => req.and_then(|r| {
                        swaps.push((id.clone(), r.clone()));
                        e.swap_prepare(&id, &r, &acct("brk"), "other", at).map(|_| ())
                    }),
                    1 => e.swap_commit(&id, at).map(|_| ()),
                    _ => match swaps.iter().find(|(s, _)| *s == id) {
                        Some((_, r)) => e.swap_abort(&id, r, &[], "fuzz", at).map(|_| ()),
                        None => Ok(()),
                    },
                }
            }
        };
    }
}

fn immutability_and_finality() -> Result<String, String> {
    let mut e = fuzz_desk();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    fuzz_commands(&mut e, &mut rng, FUZZ_COMMANDS);
    let events = e.log().events();
    let replayed = state::replay(events).map_err(|err| err.to_string())?;
    ensure(replayed.digest() == e.state_digest(), || "replay digest differs from live".into())?;
    let text = e.log().to_text();
    let reloaded = Engine::replay_bytes(EngineConfig::default(), text.as_bytes()).map_err(|err| err.to_string())?;
    ensure(reloaded.state_digest() == e.state_digest(), || "reloaded digest differs from live".into())?;
    ensure(verify_log_bytes(text.as_bytes()).ok, || "clean log fails verification".into())?;

    let bytes = text.as_bytes();
    let mut starts = vec![0usize];
    starts.extend(bytes.iter().enumerate().filter(|(_, b)| **b == b'\n').map(|(i, _)| i + 1));
    let seq_of = |pos: usize| starts.partition_point(|s| *s <= pos) as u64 - 1;

    let mutate_at = |buf: &[u8], pos: usize, value: u8| -> Result<(), String> {
        let mut m = buf.to_vec();
        m[pos] = value;
        let report = verify_log_bytes(&m);
        let want = seq_of(pos);
        ensure(report.first_bad_seq == Some(want), || {
            format!("byte {pos} -> {value:#04x}: first_bad_seq {:?}, want {want}", report.first_bad_seq)
        })
    };
    let prefix_end = starts[EXHAUSTIVE_MUTATION_EVENTS.min(events.len())];
    let prefix = &bytes[..prefix_end];
    for pos in 0..prefix.len() {
        mutate_at(prefix, pos, prefix[pos] ^ 0x01)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xb17e);
    for _ in 0..SAMPLED_MUTATIONS {
        let pos = rng.gen_range(0..bytes.len());
        let value = loop {
            let v: u8 = rng.gen();
            if v != bytes[pos] {
                break v;
            }
        };
        mutate_at(bytes, pos, value)?;
    }
    Ok(format!(
        "{FUZZ_COMMANDS} commands -> {} events, replay digest matches; {} exhaustive + {SAMPLED_MUTATIONS} sampled mutations all caught at their seq",
        events.len(),
        prefix.len()
    ))
}

// ---- 6 ----

/// Independent oracle: minor units of face + coupon, coupon rounded half-even.
fn oracle_payout(face_minor: u128, bp: u128) -> u128 {
    let product = face_minor * bp;
    let (q, r) = (product / 10_000, product % 10_000);
    let up = r > 5_000 || (r == 5_000 && q % 2 == 1);
    face_minor + q + u128::from(up)
}

fn timed<T>(f: impl FnOnce() -> T) -> Result<T, String> {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    ensure(elapsed <= SCENARIO_BUDGET, || format!("scenario took {elapsed:?}, budget {SCENARIO_BUDGET:?}"))?;
    Ok(out)
}

fn scenario_goldens() -> Result<String, String> {
    let goldens = GoldenFile::builtin();
    let config = ScenarioConfig::default();

    let bond = timed(|| run_bond_scenario(&config))?.map_err(|e| e.to_string())?;
    let per_unit = oracle_payout(100_000, 500);
    ensure(per_unit == 105_000, || format!("oracle gives {per_unit}"))?;
    let calc = bond.transcript.steps_labelled("Calculate Principal and Interest").next().ok_or("no payout step")?;
    ensure(calc.outcome == "per unit 1050.00", || format!("payout step says {}", calc.outcome))?;
    let mut redeemed = 0u128;
    for step in bond.transcript.steps_labelled("Execute Gasless Settlement") {
        redeemed += step.command.split(' ').nth(5).and_then(|n| n.parse::<u128>().ok()).ok_or("bad settlement command")?;
    }
    let cash = bond.engines[0].token(&tok("cash")).map_err(|e| e.to_string())?;
    let paid: u128 = config.roster.investors.iter().map(|i| cash.holding(&acct(i)).free).sum();
    ensure(redeemed > 0 && paid == redeemed * per_unit, || format!("paid {paid} for {redeemed} units"))?;

    let mut tie = config.clone();
    tie.bond.face_value = "0.15".into();
    tie.bond.coupon_bp = 1_000;
    let tie_run = run_bond_scenario(&tie).map_err(|e| e.to_string())?;
    let want = format!("per unit 0.{}", oracle_payout(15, 1_000));
    let got = &tie_run.transcript.steps_labelled("Calculate Principal and Interest").next().ok_or("no payout step")?.outcome;
    ensure(*got == want, || format!("half-even tie: {got}, oracle {want}"))?;

    let carbon = timed(|| run_carbon_scenario(&config))?.map_err(|e| e.to_string())?;
    let e = &carbon.engines[0];
    let credit = e.token(&tok("credit-1")).map_err(|e| e.to_string())?;
    ensure(credit.outstanding() == 0 && credit.burned == 1, || "credit-1 not burned".into())?;
    let reuse = carbon
        .transcript
        .steps_labelled("Use Request Rejection and Reason Notification")
        .any(|s| s.command.contains("credit-1") && s.outcome.contains("RCP-21"));
    ensure(reuse, || "reuse of burned credit-1 was not rejected with RCP-21".into())?;
    let reburn = carbon
        .transcript
        .steps_labelled("Burn Request Rejection and Reason Notification")
        .any(|s| s.command.contains("credit-1"));
    ensure(reburn, || "second burn of credit-1 was not refused".into())?;
    let mut probe = e.clone();
    let at = probe.log().last_time();
    ensure(probe.mint(&tok("credit-1"), &acct("consumer-a"), amt("1"), &acct("issuer"), at).is_err(), || {
        "burned credit could be re-minted".into()
    })?;

    for (kind, run) in [(ScenarioKind::Bond, &bond), (ScenarioKind::Carbon, &carbon)] {
        let again = match kind {
            ScenarioKind::Bond => run_bond_scenario(&config),
            _ => run_carbon_scenario(&config),
        }
        .map_err(|e| e.to_string())?;
        ensure(again.transcript.render() == run.transcript.render(), || format!("{} transcript not byte-stable", kind.name()))?;
        let golden = goldens.lookup(kind, &config).ok_or("no golden")?;
        ensure(golden.transcript == run.transcript.digest().to_hex(), || format!("{} digest differs from committed golden", kind.name()))?;
    }
    Ok(format!("1050.00 per unit ({paid} minor paid for {redeemed} units), half-even tie {want}; burned credit reuse rejected; goldens stable"))
}

// ---- 7 ----

#[derive(Debug, Clone)]
struct Case {
    lifecycle: u8,
    policy_paused: bool,
    submitter: u8,
    sender_auditor: bool,
    sender_kyc: u8,
    receiver_kyc: u8,
    sender_black: bool,
    receiver_black: bool,
    to_issuer: bool,
    free: u128,
    frozen: u128,
    tenths: u128,
    expiry: Option<u64>,
    at: u64,
    mode: u8,
    whitelisted: bool,
    per_tx: Option<u128>,
    window: Option<u128>,
    instrument_ban: bool,
    banned_sender: bool,
}

fn case_strategy() -> impl Strategy<Value = Case> {
    // Mostly-clean cases with rare faults, so single causes and approvals
    // are exercised as well as pile-ups.
    let rare = |p: f64, hi: u8| {
        (prop::bool::weighted(p), 1..hi).prop_map(|(hit, v)| if hit { v } else { 0 })
    };
    let a = (
        rare(0.15, 3),
        prop::bool::weighted(0.08),
        rare(0.15, 3),
        prop::bool::weighted(0.08),
        rare(0.12, 3),
        rare(0.12, 3),
        prop::bool::weighted(0.1),
        prop::bool::weighted(0.1),
    );
    let tenths = (1u128..25, prop::bool::weighted(0.1), 1u128..10).prop_map(|(w, frac, t)| w * 10 + if frac { t } else { 0 });
    let b = (prop::bool::weighted(0.15), 0u128..30, prop::bool::weighted(0.2).prop_map(|f| u128::from(f) * 2), tenths, prop::option::weighted(0.2, 1u64..20), 0u64..20, rare(0.15, 4), any::<bool>());
    let limit = || prop::option::weighted(0.2, 1u128..30);
    let c = (limit(), limit(), prop::bool::weighted(0.05), prop::bool::weighted(0.05));
    (a, b, c).prop_map(
        |(
            (lifecycle, policy_paused, submitter, sender_auditor, sender_kyc, receiver_kyc, sender_black, receiver_black),
            (to_issuer, free, frozen, tenths, expiry, at, mode, whitelisted),
            (per_tx, window, instrument_ban, banned_sender),
        )| Case {
            lifecycle,
            policy_paused,
            submitter,
            sender_auditor,
            sender_kyc,
            receiver_kyc,
            sender_black,
            receiver_black,
            to_issuer,
            free,
            frozen,
            tenths,
            expiry,
            at,
            mode,
            whitelisted,
            per_tx,
            window,
            instrument_ban,
            banned_sender,
        },
    )
}

const KYC: [KycStatus; 3] = [KycStatus::Verified, KycStatus::Unverified, KycStatus::Rejected];

fn build(c: &Case) -> (Engine, TransferRequest, AccountId) {
    let mut e = Engine::new(EngineConfig::default());
    let t = LogicalTime(0);
    let sender_role = if c.sender_auditor { PartyRole::Auditor } else { PartyRole::Investor };
    let people = [
        ("kyc", PartyRole::Operator, KycStatus::Verified),
        ("iss", PartyRole::Issuer, KycStatus::Verified),
        ("reg", PartyRole::Regulator, KycStatus::Verified),
        ("brk", PartyRole::Broker, KycStatus::Verified),
        ("other", PartyRole::Investor, KycStatus::Verified),
        ("snd", sender_role, KYC[c.sender_kyc as usize]),
        ("rcv", PartyRole::Investor, KYC[c.receiver_kyc as usize]),
    ];
    for (who, role, status) in people {
        e.register_identity(&acct(who), Digest::of(who.as_bytes()), &BTreeSet::from([role]), t).unwrap();
        e.set_kyc_status(&acct(who), status, None, &acct("kyc"), t).unwrap();
    }
    let receiver = if c.to_issuer { acct("iss") } else { acct("rcv") };
    let mut policy = PolicySet::permissive(0).unwrap();
    policy.trading_paused = c.policy_paused;
    policy.transfer_mode = match c.mode {
        0 => TransferMode::Free,
        1 => TransferMode::WhitelistOnly(if c.whitelisted { BTreeSet::from([acct("rcv")]) } else { BTreeSet::new() }),
        2 => TransferMode::IssuerOnly,
        _ => TransferMode::NonTransferable,
    };
    policy.per_tx_limit = c.per_tx.map(|n| Amount::new(n, 0).unwrap());
    policy.counterparty_window_limit = c.window.map(|n| WindowLimit {
        limit: Amount::new(n, 0).unwrap(),
        window_seconds: 1_000,
    });
    policy.trading_restrictions.instrument_ban = c.instrument_ban;
    if c.banned_sender {
        policy.trading_restrictions.banned_accounts.insert(acct("snd"));
    }
    let mut def = TokenDefinition::new(tok("bond"), AssetClassDescriptor::security_ft(), acct("iss"));
    if let Some(x) = c.expiry {
        def = def.with_expiry(LogicalTime(x));
    }
    e.define_token(def, policy, vec![], &acct("iss"), t).unwrap();
    let held = c.free + c.frozen;
    if held > 0 {
        e.mint(&tok("bond"), &acct("snd"), Amount::new(held, 0).unwrap(), &acct("iss"), t).unwrap();
    }
    if c.frozen > 0 {
        e.freeze(&tok("bond"), &acct("snd"), Amount::new(c.frozen, 0).unwrap(), &acct("reg"), t).unwrap();
    }
    if c.sender_black {
        e.blacklist_add(&acct("snd"), &acct("reg"), "prop", t).unwrap();
    }
    if c.receiver_black && !c.to_issuer {
        e.blacklist_add(&acct("rcv"), &acct("reg"), "prop", t).unwrap();
    }
    match c.lifecycle {
        1 => {
            e.pause(&tok("bond"), &acct("reg"), t).unwrap();
        }
        2 => {
            e.kill_switch(&tok("bond"), &acct("reg"), t).unwrap();
        }
        _ => {}
    }
    let amount = if c.tenths.is_multiple_of(10) {
        Amount::new(c.tenths / 10, 0).unwrap()
    } else {
        Amount::new(c.tenths, 1).unwrap()
    };
    let req = TransferRequest::new(tok("bond"), acct("snd"), receiver, amount, LogicalTime(c.at)).unwrap();
    let submitter = acct(["snd", "brk", "other"][c.submitter as usize]);
    (e, req, submitter)
}

/// Independent re-statement of the blocking pipeline, in order.
fn expected_codes(c: &Case) -> Vec<ReasonCode> {
    let mut out = Vec::new();
    if c.lifecycle == 2 {
        out.push(ReasonCode::Rcp14);
    }
    if c.lifecycle == 1 || c.policy_paused {
        out.push(ReasonCode::Rcp13);
    }
    let submitter_may = match c.submitter {
        0 => !c.sender_auditor,
        1 => true,
        _ => false,
    };
    if !submitter_may {
        out.push(ReasonCode::Rcp07);
    }
    let receiver_verified = c.to_issuer || c.receiver_kyc == 0;
    if c.sender_kyc != 0 || !receiver_verified {
        out.push(ReasonCode::Rcp01);
    }
    if c.sender_black || (c.receiver_black && !c.to_issuer) {
        out.push(ReasonCode::Rcp15);
    }
    if c.tenths > c.free * 10 {
        out.push(if c.frozen > 0 { ReasonCode::Rcp08 } else { ReasonCode::Rcp21 });
    }
    if c.expiry.is_some_and(|x| c.at >= x) && !c.to_issuer {
        out.push(ReasonCode::Rcp23);
    }
    let mode_ok = match c.mode {
        0 => true,
        1 => c.to_issuer || c.whitelisted,
        2 => c.to_issuer,
        _ => false,
    };
    if !mode_ok {
        out.push(ReasonCode::Rcp24);
    }
    if !c.tenths.is_multiple_of(10) {
        out.push(ReasonCode::Rcp27);
    }
    let over = |limit: Option<u128>| limit.is_some_and(|l| c.tenths > l * 10);
    if over(c.per_tx) || over(c.window) {
        out.push(ReasonCode::Rcp11);
    }
    if c.instrument_ban || c.banned_sender {
        out.push(ReasonCode::Rcp10);
    }
    out
}

fn verdict_properties() -> Result<String, String> {
    let config = ProptestConfig {
        cases: VERDICT_CASES,
        failure_persistence: None,
        ..ProptestConfig::default()
    };
    let mut runner = TestRunner::new_with_rng(config, proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha));
    let stats = std::cell::Cell::new((0u32, 0u32, 0u32, 0u32));
    runner
        .run(&case_strategy(), |c| {
            let (e, req, submitter) = build(&c);
            let verdict = e.check(&req, &submitter).map_err(|err| TestCaseError::fail(err.to_string()))?;
            let got = verdict.reasons().to_vec();
            prop_assert_eq!(&got, &expected_codes(&c), "case {:?}", c);
            let blacklisted = c.sender_black || (c.receiver_black && !c.to_issuer);
            if blacklisted {
                prop_assert!(!verdict.is_approved() && got.contains(&ReasonCode::Rcp15));
            }
            let (n, multi, black, clean) = stats.get();
            stats.set((n + 1, multi + u32::from(got.len() > 1), black + u32::from(blacklisted), clean + u32::from(got.is_empty())));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let (n, multi, black, clean) = stats.get();
    ensure(n >= VERDICT_CASES, || format!("only {n} cases ran"))?;
    Ok(format!(
        "{n} cases: {clean} approved, {multi} multi-cause, {black} with a blacklisted party; order and dominance hold"
    ))
}
