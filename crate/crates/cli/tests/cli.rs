use std::path::Path;
use std::process::{Command, Output};

fn rcp(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcp"))
        .env_remove("RCP_STORE")
        .arg("--store")
        .arg(store)
        .args(args)
        .output()
        .expect("rcp runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn ok(store: &Path, args: &[&str]) -> String {
    let o = rcp(store, args);
    assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    stdout(&o)
}

/// Issuer, regulator, KYC operator and two verified investors; a bond
/// with 100 units minted to `alice`.
fn seeded(dir: &Path) -> std::path::PathBuf {
    let store = dir.join("store.log");
    for (who, role) in [
        ("kyc", "Operator"),
        ("iss", "Issuer"),
        ("reg", "Regulator"),
        ("alice", "Investor"),
        ("bob", "Investor"),
    ] {
        ok(&store, &["identity", "register", who, "--role", role]);
    }
    for who in ["iss", "reg", "alice", "bob"] {
        ok(&store, &["--actor", "kyc", "identity", "kyc", who, "Verified"]);
    }
    ok(&store, &["--actor", "iss", "token", "define", "bond", "--class", "security-ft"]);
    ok(&store, &["--actor", "iss", "tx", "mint", "bond", "alice", "100"]);
    store
}

#[test]
fn conformance_table_reports_totals_and_the_erratum() {
    let dir = tempfile::tempdir().unwrap();
    let o = rcp(&dir.path().join("unused"), &["conformance", "table"]);
    let out = stdout(&o);
    let total = out.lines().find(|l| l.starts_with("Total")).unwrap();
    assert_eq!(total.split_whitespace().collect::<Vec<_>>(), ["Total", "17/117", "58/117", "60/117", "77/117"]);
    assert!(out.contains("body cells matching published: 59/60"));
    assert!(out.contains("erratum: HKMA (HKMA) x ERC-20: computed 2/10, published 0/10"));
    // the ERC-20 published total cannot be reproduced from the published body
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("ERC-20 total computed 17/117 published 15/117"));
}

#[test]
fn conformance_records_are_one_line_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let o = rcp(&dir.path().join("unused"), &["--format", "records", "conformance", "table"]);
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 64);
    assert!(out.lines().all(|l| l.starts_with('{') && l.ends_with('}')));
}

#[test]
fn conformance_score_reads_a_manifest_file() {
    let dir = tempfile::tempdir().unwrap();
    let items: Vec<String> = (1..=31).filter(|i| ![2, 5, 6, 17, 18, 19].contains(i)).map(|i| i.to_string()).collect();
    let manifest = dir.path().join("m.toml");
    std::fs::write(&manifest, format!("protocol = \"NEW-EIP\"\nitems = [{}]\n", items.join(", "))).unwrap();
    let out = ok(&dir.path().join("unused"), &["conformance", "score", "--manifest", manifest.to_str().unwrap()]);
    assert!(out.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["Total", "77/117"]), "{out}");
    std::fs::write(&manifest, "protocol = \"X\"\nitems = [32]\n").unwrap();
    let o = rcp(&dir.path().join("unused"), &["conformance", "score", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unknown_verbs_and_missing_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("s.log");
    assert_eq!(code(&rcp(&store, &["frobnicate"])), 64);
    assert_eq!(code(&rcp(&store, &["tx", "teleport"])), 64);
    let store = seeded(dir.path());
    assert_eq!(code(&rcp(&store, &["tx", "mint", "bond", "alice", "1"])), 64);
    assert_eq!(code(&rcp(&store, &["--actor", "iss", "tx", "mint", "bond", "alice", "1.x"])), 64);
}

#[test]
fn blacklisted_transfer_exits_3_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded(dir.path());
    ok(&store, &["--actor", "reg", "identity", "blacklist", "add", "bob", "--reason", "screening"]);
    let o = rcp(&store, &["--actor", "alice", "tx", "transfer", "bond", "alice", "bob", "5"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("RCP-15"));
    assert!(stdout(&o).contains("TransferRejected"));
    let export = ok(&store, &["ledger", "export"]);
    assert!(export.lines().last().unwrap().contains("TransferRejected"));
}

#[test]
fn engine_refusals_carrying_codes_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded(dir.path());
    ok(&store, &["--actor", "reg", "tx", "pause", "bond"]);
    let o = rcp(&store, &["--actor", "iss", "tx", "mint", "bond", "alice", "1"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("RCP-13"));
}

#[test]
fn tampered_store_fails_verification_at_the_edited_seq() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded(dir.path());
    assert_eq!(ok(&store, &["ledger", "verify"]).trim(), "ok=true checked=11");
    let text = std::fs::read_to_string(&store).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[4] = lines[4].replacen("bob", "bib", 1);
    std::fs::write(&store, lines.join("\n") + "\n").unwrap();
    let o = rcp(&store, &["ledger", "verify"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("first_bad_seq=4"), "{}", stderr(&o));
    assert_eq!(code(&rcp(&store, &["ledger", "replay"])), 2);
    assert_eq!(code(&rcp(&store, &["--actor", "iss", "tx", "mint", "bond", "bob", "1"])), 2);
}

#[test]
fn replay_is_stable_and_read_only_verbs_leave_the_store_alone() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded(dir.path());
    ok(&store, &["--actor", "alice", "tx", "transfer", "bond", "alice", "bob", "7"]);
    let before = std::fs::read(&store).unwrap();
    let first = ok(&store, &["ledger", "replay"]);
    assert_eq!(first.trim().len(), 64);
    for args in [
        &["ledger", "replay"][..],
        &["ledger", "verify"],
        &["ledger", "export", "--from", "2", "--to", "5"],
        &["policy", "show", "bond"],
        &["--actor", "reg", "query", "feed", "--max", "3"],
        &["--actor", "bob", "query", "history", "--class", "fungible"],
    ] {
        let a = ok(&store, args);
        let b = ok(&store, args);
        assert_eq!(a, b, "{args:?} output differs between runs");
    }
    assert_eq!(ok(&store, &["ledger", "replay"]), first);
    assert_eq!(std::fs::read(&store).unwrap(), before);
}

#[test]
fn investors_only_see_their_own_events() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded(dir.path());
    ok(&store, &["--actor", "alice", "tx", "transfer", "bond", "alice", "bob", "7"]);
    let bob = ok(&store, &["--actor", "bob", "query", "history"]);
    assert!(bob.lines().all(|l| l.contains("bob")), "{bob}");
    let o = rcp(&store, &["--actor", "bob", "query", "feed"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn policy_set_limits_transfers() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded(dir.path());
    ok(&store, &["--actor", "iss", "policy", "set", "bond", "--per-tx-limit", "10"]);
    let shown = ok(&store, &["--format", "records", "policy", "show", "bond"]);
    assert!(shown.contains(r#""per_tx_limit":{"minor":10,"decimals":0}"#), "{shown}");
    assert_eq!(code(&rcp(&store, &["--actor", "alice", "tx", "transfer", "bond", "alice", "bob", "10"])), 0);
    let o = rcp(&store, &["--actor", "alice", "tx", "transfer", "bond", "alice", "bob", "11"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("RCP-11"));
}

#[test]
fn meta_transfer_and_correction() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded(dir.path());
    ok(&store, &["identity", "register", "relay", "--role", "Relayer"]);
    ok(&store, &["--actor", "kyc", "identity", "kyc", "relay", "Verified"]);
    ok(&store, &["--actor", "iss", "token", "define", "cash", "--class", "cash-ft", "--decimals", "2"]);
    ok(&store, &["--actor", "iss", "tx", "mint", "cash", "relay", "5.00"]);
    let out = ok(
        &store,
        &["--actor", "alice", "tx", "meta", "bond", "alice", "bob", "3", "--relayer", "relay", "--fee-token", "cash", "--fee", "0.10"],
    );
    let seq: u64 = out.lines().find(|l| l.contains("TransferExecuted")).unwrap().split(' ').next().unwrap().parse().unwrap();
    let fixed = ok(&store, &["--actor", "reg", "tx", "correct", &seq.to_string(), "--to", "bob", "--amount", "2"]);
    assert!(fixed.contains("CorrectionCancel") && fixed.contains("CorrectionNew"), "{fixed}");
    assert_eq!(ok(&store, &["ledger", "verify"]).lines().count(), 1);
}

#[test]
fn token_documents_and_expiry() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded(dir.path());
    let doc = dir.path().join("prospectus.txt");
    std::fs::write(&doc, "terms").unwrap();
    let spec = format!("prospectus={}", doc.display());
    ok(&store, &["--actor", "iss", "token", "define", "note", "--class", "security-ft", "--expiry", "100", "--doc", &spec]);
    ok(&store, &["--actor", "iss", "token", "amend", "note"]);
    assert_eq!(code(&rcp(&store, &["--actor", "iss", "token", "expire", "note"])), 1);
    ok(&store, &["--at", "100", "--actor", "iss", "token", "expire", "note"]);
    assert_eq!(code(&rcp(&store, &["--at", "99", "--actor", "iss", "tx", "mint", "bond", "alice", "1"])), 1);
}

#[test]
fn scenario_runs_match_goldens() {
    let dir = tempfile::tempdir().unwrap();
    let unused = dir.path().join("unused");
    for kind in ["bond", "carbon", "interop"] {
        let o = rcp(&unused, &["scenario", "run", kind, "--golden"]);
        assert_eq!(code(&o), 0, "{kind}: {}", stderr(&o));
        assert!(stderr(&o).contains("match"));
        let again = rcp(&unused, &["scenario", "run", kind]);
        assert_eq!(stdout(&o), stdout(&again));
    }
    let o = rcp(&unused, &["scenario", "run", "bond", "--seed", "12345", "--golden"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&rcp(&unused, &["scenario", "run", "bond", "--fault-step", "2"])), 64);
    assert_eq!(code(&rcp(&unused, &["scenario", "run", "interop", "--fault-step", "9"])), 64);
}

#[test]
fn scenario_output_logs_verify_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = rcp(&dir.path().join("unused"), &["scenario", "run", "interop", "--fault-step", "4", "--golden", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(out.join("transcript.txt")).unwrap(), stdout(&o));
    for instance in ["tradfi", "defi"] {
        let log = out.join(format!("{instance}.log"));
        ok(&log, &["ledger", "verify"]);
        let digest = ok(&log, &["ledger", "replay"]);
        let last = stdout(&o).lines().find(|l| l.starts_with(&format!("final {instance} "))).unwrap().to_string();
        assert_eq!(last, format!("final {instance} {}", digest.trim()));
    }
}

#[test]
fn scenario_config_file_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    std::fs::write(&cfg, "[bond]\nlegal_documents = false\n").unwrap();
    let out = ok(&dir.path().join("unused"), &["--config", cfg.to_str().unwrap(), "scenario", "run", "bond", "--golden"]);
    assert!(out.contains("Halt and Review Requirements"));
    std::fs::write(&cfg, "[bond]\nnonsense = 1\n").unwrap();
    assert_eq!(code(&rcp(&dir.path().join("unused"), &["--config", cfg.to_str().unwrap(), "scenario", "run", "bond"])), 64);
}
