//! `rcp`: operator command line for the compliance ledger engine.
//!
//! Exit codes: 0 success, 1 golden/score mismatch or failed command,
//! 2 chain verification failure, 3 compliance rejection, 64 usage.

mod store;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rcp_core::audit::{history_by_asset_type, regulatory_feed, ClassFilter, VisibilityScope};
use rcp_core::config::EngineConfig;
use rcp_core::conformance::{
    builtin_data, builtin_matrix, builtin_tables, compare_published, derive_manifest_from_engine, render_records, render_report, score,
    ProtocolManifest, ScoreTable,
};
use rcp_core::engine::{Engine, MetaTransferAuthorization, TransferOutcome};
use rcp_core::enforcement::CorrectedTransfer;
use rcp_core::identity::{KycStatus, RiskRating};
use rcp_core::ledger::{verify_log_bytes, Digest, DocumentAnchor, LedgerEvent};
use rcp_core::model::{AccountId, Amount, AssetClassDescriptor, LogicalTime, PartyRole, TokenDefinition, TokenId};
use rcp_core::policy::{PolicySet, TransferMode, TransferRequest, WindowLimit};
use rcp_core::scenario::{self, GoldenFile, ScenarioConfig, ScenarioKind};
use rcp_core::Error;

use store::Store;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Mismatch(String),
    Chain(String),
    Rejected(String),
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Mismatch(_) | CliError::Failed(_) => 1,
            CliError::Chain(_) => 2,
            CliError::Rejected(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Mismatch(m) | CliError::Chain(m) | CliError::Rejected(m) | CliError::Failed(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let text = e.to_string();
        match e {
            Error::CorruptLog { .. } => CliError::Chain(text),
            Error::Parse(_) | Error::InvalidIdentifier { .. } | Error::InvalidScale(_) | Error::PrecisionLoss { .. } => {
                CliError::Usage(text)
            }
            _ if e.reason_code().is_some() => CliError::Rejected(text),
            _ => CliError::Failed(text),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Records,
}

#[derive(Parser)]
#[command(name = "rcp", version, about = "Compliance-enforcing ledger for tokenized assets")]
struct Cli {
    /// Event store file.
    #[arg(long, env = "RCP_STORE", global = true)]
    store: Option<PathBuf>,
    /// Engine config (TOML); for `scenario run`, the scenario config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Logical time in seconds; defaults to the store's last event time.
    #[arg(long, global = true)]
    at: Option<u64>,
    /// Account submitting the command.
    #[arg(long, global = true)]
    actor: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Human, global = true)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scripted scenario.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Score protocol manifests against the institution matrix.
    #[command(subcommand)]
    Conformance(ConformanceCmd),
    /// Inspect the event store.
    #[command(subcommand)]
    Ledger(LedgerCmd),
    /// Token operations.
    #[command(subcommand)]
    Tx(TxCmd),
    /// KYC registry and blacklist.
    #[command(subcommand)]
    Identity(IdentityCmd),
    /// Per-token compliance policy.
    #[command(subcommand)]
    Policy(PolicyCmd),
    /// Audit report export.
    #[command(subcommand)]
    Audit(AuditCmd),
    /// Scoped history and regulator feed.
    #[command(subcommand)]
    Query(QueryCmd),
    /// Token definition and contract lifecycle.
    #[command(subcommand)]
    Token(TokenCmd),
}

#[derive(Subcommand)]
enum ScenarioCmd {
    Run {
        #[arg(value_parser = parse_kind)]
        kind: ScenarioKind,
        #[arg(long)]
        seed: Option<u64>,
        /// Interop only: coordinator crashes before this protocol step.
        #[arg(long)]
        fault_step: Option<u32>,
        /// Compare the transcript digest with the committed golden.
        #[arg(long)]
        golden: bool,
        /// Write transcript.txt and one event log per engine here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ConformanceCmd {
    /// Score one manifest (TOML) or this engine's derived manifest.
    Score {
        #[arg(long, conflicts_with = "engine", required_unless_present = "engine")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        engine: bool,
    },
    /// Score the built-in manifests and compare with the published table.
    Table,
}

#[derive(Subcommand)]
enum LedgerCmd {
    Verify,
    Export {
        #[arg(long)]
        from: Option<u64>,
        #[arg(long)]
        to: Option<u64>,
    },
    /// Rebuild state from the log alone and print its digest.
    Replay,
}

#[derive(Args)]
struct Movement {
    token: String,
    from: String,
    to: String,
    amount: String,
}

#[derive(Subcommand)]
enum TxCmd {
    Transfer {
        #[command(flatten)]
        m: Movement,
        /// Cross-ledger leg (wire thresholds apply).
        #[arg(long)]
        wire: bool,
        /// Record as a settlement.
        #[arg(long)]
        settlement: bool,
    },
    Mint { token: String, to: String, amount: String },
    Burn { token: String, from: String, amount: String },
    Freeze { token: String, account: String, amount: String },
    Unfreeze { token: String, account: String, amount: String },
    Recover { token: String, from: String, to: String, amount: String },
    Pause { token: String },
    Resume { token: String },
    Kill { token: String },
    Liquidate {
        token: String,
        account: String,
        #[arg(long, default_value = "")]
        note: String,
    },
    /// Escrow a splittable NFT and mint `fractions` units of a lot token.
    Split { nft: String, fractions: u128, lot_token: String },
    /// Return all lots and release the escrowed NFT to the holder.
    Merge { nft: String },
    /// Gasless transfer signed by the sender and submitted by a relayer.
    Meta {
        #[command(flatten)]
        m: Movement,
        #[arg(long)]
        relayer: String,
        #[arg(long)]
        fee_token: String,
        #[arg(long)]
        fee: String,
        #[arg(long)]
        settlement: bool,
    },
    /// Cancel a transfer and re-issue it with corrected terms.
    Correct {
        seq: u64,
        #[arg(long)]
        to: String,
        #[arg(long)]
        amount: String,
    },
}

#[derive(Subcommand)]
enum IdentityCmd {
    Register {
        subject: String,
        #[arg(long = "role", required = true)]
        roles: Vec<String>,
        /// Profile text; only its digest is recorded.
        #[arg(long, default_value = "")]
        profile: String,
    },
    Kyc {
        subject: String,
        status: String,
        #[arg(long)]
        risk: Option<String>,
    },
    Update {
        subject: String,
        #[arg(long)]
        profile: String,
    },
    Blacklist {
        #[arg(value_enum)]
        action: ListAction,
        subject: String,
        #[arg(long, default_value = "")]
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ListAction {
    Add,
    Remove,
}

#[derive(Subcommand)]
enum PolicyCmd {
    Show {
        token: String,
    },
    /// Replace a token's policy. Starts from the current policy, a profile
    /// or a JSON file, then applies the flags.
    Set {
        token: String,
        #[arg(long, conflicts_with = "file")]
        profile: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        /// Comma-separated accounts; switches to whitelist-only mode.
        #[arg(long)]
        whitelist: Option<String>,
        #[arg(long)]
        per_tx_limit: Option<String>,
        #[arg(long, requires = "window_seconds")]
        window_limit: Option<String>,
        #[arg(long)]
        window_seconds: Option<u64>,
        #[arg(long)]
        require_documents: Option<bool>,
    },
}

#[derive(Subcommand)]
enum AuditCmd {
    /// Compute and record an audit report over a seq range.
    Export {
        #[arg(long, default_value_t = 0)]
        from: u64,
        #[arg(long)]
        to: Option<u64>,
    },
}

#[derive(Subcommand)]
enum QueryCmd {
    /// Events the actor may see, filtered by asset class.
    History {
        /// all, ft, nft, or tag:NAME
        #[arg(long, default_value = "all")]
        class: String,
    },
    /// Regulator feed page after `since`.
    Feed {
        #[arg(long)]
        since: Option<u64>,
        #[arg(long, default_value_t = 100)]
        max: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ClassArg {
    SecurityFt,
    CashFt,
    Nft,
}

#[derive(Subcommand)]
enum TokenCmd {
    Define {
        token: String,
        #[arg(long, value_enum)]
        class: ClassArg,
        #[arg(long, default_value_t = 2)]
        decimals: u8,
        #[arg(long = "tag")]
        tags: Vec<String>,
        /// Supply cap in token units.
        #[arg(long)]
        cap: Option<String>,
        #[arg(long)]
        expiry: Option<u64>,
        #[arg(long, default_value = "default")]
        profile: String,
        /// `doc-id=path`; the file's digest is anchored.
        #[arg(long = "doc")]
        docs: Vec<String>,
        #[arg(long)]
        notarized_by: Option<String>,
    },
    /// Bump the contract version.
    Amend { token: String },
    Attach {
        token: String,
        #[arg(long)]
        doc: String,
        #[arg(long)]
        notarized_by: Option<String>,
    },
    /// Mark a token expired once its expiry has passed.
    Expire { token: String },
}

fn parse_kind(s: &str) -> Result<ScenarioKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn account(s: &str) -> Result<AccountId, CliError> {
    Ok(AccountId::new(s)?)
}

fn token_id(s: &str) -> Result<TokenId, CliError> {
    Ok(TokenId::new(s)?)
}

fn amount(s: &str) -> Result<Amount, CliError> {
    Ok(s.parse::<Amount>()?)
}

struct Ctx {
    store: Option<PathBuf>,
    config: Option<PathBuf>,
    at: Option<u64>,
    actor: Option<String>,
    format: Format,
    out: String,
}

impl Ctx {
    fn store_path(&self) -> Result<&Path, CliError> {
        self.store
            .as_deref()
            .ok_or_else(|| CliError::Usage("no store: pass --store or set RCP_STORE".into()))
    }

    fn engine_config(&self) -> Result<EngineConfig, CliError> {
        match &self.config {
            None => Ok(EngineConfig::default()),
            Some(p) => Ok(EngineConfig::from_toml(&read_text(p)?)?),
        }
    }

    fn open(&self, write: bool) -> Result<Store, CliError> {
        Store::open(self.store_path()?, self.engine_config()?, write)
    }

    fn actor(&self) -> Result<AccountId, CliError> {
        let a = self.actor.as_deref().ok_or_else(|| CliError::Usage("this command needs --actor".into()))?;
        account(a)
    }

    fn time(&self, engine: &Engine) -> LogicalTime {
        LogicalTime(self.at.unwrap_or_else(|| engine.log().last_time().seconds()))
    }

    fn events(&mut self, events: &[LedgerEvent]) {
        for e in events {
            match self.format {
                Format::Human => {
                    let _ = writeln!(self.out, "{} {} {}", e.seq, e.kind.name(), e.hash.to_hex());
                }
                Format::Records => {
                    let _ = writeln!(self.out, "{}", serde_json::to_string(e).expect("events serialize"));
                }
            }
        }
    }

    fn json<T: serde::Serialize>(&mut self, value: &T) {
        let text = match self.format {
            Format::Human => serde_json::to_string_pretty(value),
            Format::Records => serde_json::to_string(value),
        };
        let _ = writeln!(self.out, "{}", text.expect("value serializes"));
    }
}

fn read_text(p: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(p).map_err(|e| CliError::Failed(format!("{}: {e}", p.display())))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 64 } else { 0 });
        }
    };
    let mut ctx = Ctx {
        store: cli.store,
        config: cli.config,
        at: cli.at,
        actor: cli.actor,
        format: cli.format,
        out: String::new(),
    };
    let result = dispatch(&mut ctx, cli.command);
    print!("{}", ctx.out);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rcp: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(ctx: &mut Ctx, command: Command) -> Result<(), CliError> {
    match command {
        Command::Scenario(ScenarioCmd::Run {
            kind,
            seed,
            fault_step,
            golden,
            out,
        }) => scenario_run(ctx, kind, seed, fault_step, golden, out.as_deref()),
        Command::Conformance(c) => conformance(ctx, c),
        Command::Ledger(c) => ledger(ctx, c),
        Command::Tx(c) => tx(ctx, c),
        Command::Identity(c) => identity(ctx, c),
        Command::Policy(c) => policy(ctx, c),
        Command::Audit(AuditCmd::Export { from, to }) => {
            let mut s = ctx.open(true)?;
            let actor = ctx.actor()?;
            let at = ctx.time(&s.engine);
            let to = match to {
                Some(to) => to,
                None => s.engine.log().len().checked_sub(1).ok_or_else(|| CliError::Failed("empty store".into()))? as u64,
            };
            let (report, event) = s.engine.export_audit_report(from, to, &actor, at)?;
            s.save()?;
            ctx.json(&report);
            ctx.events(&[event]);
            Ok(())
        }
        Command::Query(c) => query(ctx, c),
        Command::Token(c) => token(ctx, c),
    }
}

fn scenario_run(ctx: &mut Ctx, kind: ScenarioKind, seed: Option<u64>, fault_step: Option<u32>, golden: bool, out: Option<&Path>) -> Result<(), CliError> {
    let mut config = match &ctx.config {
        Some(p) => ScenarioConfig::from_toml(&read_text(p)?).map_err(|e| CliError::Usage(e.to_string()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if fault_step.is_some() {
        if kind != ScenarioKind::Interop {
            return Err(CliError::Usage("--fault-step applies to the interop scenario".into()));
        }
        config.interop.fault_step = fault_step;
    }
    config.validate(kind).map_err(|e| CliError::Usage(e.to_string()))?;
    let run = scenario::run(kind, &config)?;
    let text = run.transcript.render();
    match ctx.format {
        Format::Human => ctx.out.push_str(&text),
        Format::Records => {
            for step in &run.transcript.steps {
                let _ = writeln!(ctx.out, "{}", serde_json::to_string(step).expect("steps serialize"));
            }
        }
    }
    if let Some(dir) = out {
        let io = |e: std::io::Error| CliError::Failed(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("transcript.txt"), &text).map_err(io)?;
        for e in &run.engines {
            std::fs::write(dir.join(format!("{}.log", e.instance())), e.log().to_text()).map_err(io)?;
        }
    }
    if golden {
        let digest = run.transcript.digest().to_hex();
        match GoldenFile::builtin().lookup(kind, &config) {
            Some(g) if g.transcript == digest => {
                eprintln!("golden {}: match {digest}", g.name);
            }
            Some(g) => {
                return Err(CliError::Mismatch(format!("golden {}: expected {} got {digest}", g.name, g.transcript)));
            }
            None => return Err(CliError::Mismatch(format!("no golden for this {} config (transcript {digest})", kind.name()))),
        }
    }
    Ok(())
}

fn render_tables(ctx: &mut Ctx, tables: &[ScoreTable]) {
    match ctx.format {
        Format::Human => ctx.out.push_str(&render_report(tables)),
        Format::Records => ctx.out.push_str(&render_records(tables)),
    }
}

fn conformance(ctx: &mut Ctx, c: ConformanceCmd) -> Result<(), CliError> {
    match c {
        ConformanceCmd::Score { manifest, engine } => {
            let manifest = if engine {
                let derived = derive_manifest_from_engine();
                if ctx.format == Format::Human {
                    for (item, note) in &derived.annotations {
                        let _ = writeln!(ctx.out, "# item {item}: {note}");
                    }
                }
                derived.manifest
            } else {
                let path = manifest.expect("clap requires --manifest without --engine");
                ProtocolManifest::from_toml(&read_text(&path)?)?
            };
            let table = score(&manifest, &builtin_matrix())?;
            render_tables(ctx, &[table]);
            Ok(())
        }
        ConformanceCmd::Table => {
            let tables = builtin_tables();
            render_tables(ctx, &tables);
            let cmp = compare_published(builtin_data(), &tables)?;
            if ctx.format == Format::Human {
                let _ = writeln!(ctx.out, "body cells matching published: {}/{}", cmp.body_matches, cmp.body_cells);
                for e in &cmp.errata {
                    let _ = writeln!(ctx.out, "{e}");
                }
            }
            if cmp.totals_match() {
                Ok(())
            } else {
                let bad: Vec<String> = cmp
                    .totals
                    .iter()
                    .filter(|(_, c, p)| c != p)
                    .map(|(proto, c, p)| format!("{proto} total computed {}/{} published {}/{}", c.0, c.1, p.0, p.1))
                    .collect();
                Err(CliError::Mismatch(bad.join("; ")))
            }
        }
    }
}

fn ledger(ctx: &mut Ctx, c: LedgerCmd) -> Result<(), CliError> {
    match c {
        LedgerCmd::Verify => {
            let bytes = Store::read_bytes(ctx.store_path()?)?;
            let report = verify_log_bytes(&bytes);
            match ctx.format {
                Format::Human => {
                    let _ = writeln!(ctx.out, "ok={} checked={}", report.ok, report.checked);
                }
                Format::Records => ctx.json(&report),
            }
            match report.first_bad_seq {
                None => Ok(()),
                Some(seq) => Err(CliError::Chain(format!("chain broken: first_bad_seq={seq}"))),
            }
        }
        LedgerCmd::Export { from, to } => {
            let s = ctx.open(false)?;
            let events = s.engine.log().events();
            let from = from.unwrap_or(0);
            let to = to.unwrap_or(u64::MAX);
            let picked: Vec<LedgerEvent> = events.iter().filter(|e| e.seq >= from && e.seq <= to).cloned().collect();
            match ctx.format {
                Format::Human => {
                    for e in &picked {
                        let _ = writeln!(ctx.out, "{}", e.to_line());
                    }
                }
                Format::Records => ctx.events(&picked),
            }
            Ok(())
        }
        LedgerCmd::Replay => {
            let s = ctx.open(false)?;
            let digest = s.engine.state_digest();
            let _ = writeln!(ctx.out, "{}", digest.to_hex());
            Ok(())
        }
    }
}

/// Prints the sealed events; a rejected transfer stays recorded and exits 3.
fn outcome(ctx: &mut Ctx, s: &mut Store, out: TransferOutcome) -> Result<(), CliError> {
    s.save()?;
    ctx.events(&out.events);
    if out.is_approved() {
        Ok(())
    } else {
        let codes: Vec<String> = out.verdict.reasons().iter().map(ToString::to_string).collect();
        Err(CliError::Rejected(format!("rejected {}", codes.join(","))))
    }
}

fn tx(ctx: &mut Ctx, c: TxCmd) -> Result<(), CliError> {
    let mut s = ctx.open(true)?;
    let actor = ctx.actor()?;
    let at = ctx.time(&s.engine);
    let e = &mut s.engine;
    let events = match c {
        TxCmd::Transfer { m, wire, settlement } => {
            let mut req = TransferRequest::new(token_id(&m.token)?, account(&m.from)?, account(&m.to)?, amount(&m.amount)?, at)?;
            if wire {
                req = req.wire();
            }
            let out = if settlement {
                e.settle(&req, &actor, at)?
            } else {
                e.execute_transfer(&req, &actor, at)?
            };
            return outcome(ctx, &mut s, out);
        }
        TxCmd::Meta {
            m,
            relayer,
            fee_token,
            fee,
            settlement,
        } => {
            if account(&m.from)? != actor {
                return Err(CliError::Usage("meta transfers are signed by the sender: --actor must equal FROM".into()));
            }
            let req = TransferRequest::new(token_id(&m.token)?, account(&m.from)?, account(&m.to)?, amount(&m.amount)?, at)?;
            let auth = MetaTransferAuthorization::new(req, account(&relayer)?, token_id(&fee_token)?, amount(&fee)?);
            let out = if settlement {
                e.execute_meta_settlement(&auth, at)?
            } else {
                e.execute_meta_transfer(&auth, at)?
            };
            return outcome(ctx, &mut s, out);
        }
        TxCmd::Mint { token, to, amount: a } => vec![e.mint(&token_id(&token)?, &account(&to)?, amount(&a)?, &actor, at)?],
        TxCmd::Burn { token, from, amount: a } => vec![e.burn(&token_id(&token)?, &account(&from)?, amount(&a)?, &actor, at)?],
        TxCmd::Freeze {
            token,
            account: acc,
            amount: a,
        } => vec![e.freeze(&token_id(&token)?, &account(&acc)?, amount(&a)?, &actor, at)?],
        TxCmd::Unfreeze {
            token,
            account: acc,
            amount: a,
        } => vec![e.unfreeze(&token_id(&token)?, &account(&acc)?, amount(&a)?, &actor, at)?],
        TxCmd::Recover { token, from, to, amount: a } => {
            vec![e.recover(&token_id(&token)?, &account(&from)?, &account(&to)?, amount(&a)?, &actor, at)?]
        }
        TxCmd::Pause { token } => vec![e.pause(&token_id(&token)?, &actor, at)?],
        TxCmd::Resume { token } => vec![e.resume(&token_id(&token)?, &actor, at)?],
        TxCmd::Kill { token } => vec![e.kill_switch(&token_id(&token)?, &actor, at)?],
        TxCmd::Liquidate { token, account: acc, note } => {
            vec![e.force_liquidate(&account(&acc)?, &token_id(&token)?, &note, &actor, at)?]
        }
        TxCmd::Split { nft, fractions, lot_token } => e.split_lot(&token_id(&nft)?, fractions, &token_id(&lot_token)?, &actor, at)?,
        TxCmd::Merge { nft } => e.merge_lots(&token_id(&nft)?, &actor, at)?,
        TxCmd::Correct { seq, to, amount: a } => {
            let corrected = CorrectedTransfer {
                to: account(&to)?,
                amount: amount(&a)?,
            };
            e.correct(seq, &corrected, &actor, at)?
        }
    };
    s.save()?;
    ctx.events(&events);
    Ok(())
}

fn identity(ctx: &mut Ctx, c: IdentityCmd) -> Result<(), CliError> {
    let mut s = ctx.open(true)?;
    let at = ctx.time(&s.engine);
    let e = &mut s.engine;
    let events = match c {
        IdentityCmd::Register { subject, roles, profile } => {
            let roles = roles.iter().map(|r| r.parse::<PartyRole>()).collect::<Result<BTreeSet<_>, _>>()?;
            vec![e.register_identity(&account(&subject)?, Digest::of(profile.as_bytes()), &roles, at)?]
        }
        IdentityCmd::Kyc { subject, status, risk } => {
            let status: KycStatus = status.parse()?;
            let risk: Option<RiskRating> = risk.map(|r| r.parse()).transpose()?;
            vec![e.set_kyc_status(&account(&subject)?, status, risk, &ctx.actor()?, at)?]
        }
        IdentityCmd::Update { subject, profile } => e.update_identity(&account(&subject)?, Digest::of(profile.as_bytes()), at)?,
        IdentityCmd::Blacklist { action, subject, reason } => {
            let subject = account(&subject)?;
            let actor = ctx.actor()?;
            match action {
                ListAction::Add => vec![e.blacklist_add(&subject, &actor, &reason, at)?],
                ListAction::Remove => vec![e.blacklist_remove(&subject, &actor, at)?],
            }
        }
    };
    s.save()?;
    ctx.events(&events);
    Ok(())
}

fn policy(ctx: &mut Ctx, c: PolicyCmd) -> Result<(), CliError> {
    match c {
        PolicyCmd::Show { token } => {
            let s = ctx.open(false)?;
            let t = s.engine.token(&token_id(&token)?)?;
            let policy = t.policy.clone();
            ctx.json(&policy);
            Ok(())
        }
        PolicyCmd::Set {
            token,
            profile,
            file,
            whitelist,
            per_tx_limit,
            window_limit,
            window_seconds,
            require_documents,
        } => {
            let mut s = ctx.open(true)?;
            let actor = ctx.actor()?;
            let at = ctx.time(&s.engine);
            let token = token_id(&token)?;
            let t = s.engine.token(&token)?;
            let decimals = t.def.decimals();
            let mut policy: PolicySet = match (profile, file) {
                (Some(p), _) => s.engine.config().policy(&p, decimals)?,
                (None, Some(f)) => serde_json::from_str(&read_text(&f)?).map_err(|e| CliError::Usage(format!("policy file: {e}")))?,
                (None, None) => t.policy.clone(),
            };
            if let Some(list) = whitelist {
                let accounts = list
                    .split(',')
                    .filter(|a| !a.is_empty())
                    .map(account)
                    .collect::<Result<BTreeSet<_>, _>>()?;
                policy.transfer_mode = TransferMode::WhitelistOnly(accounts);
            }
            if let Some(limit) = per_tx_limit {
                policy.per_tx_limit = Some(amount(&limit)?.rescale(decimals)?);
            }
            if let (Some(limit), Some(window_seconds)) = (window_limit, window_seconds) {
                policy.counterparty_window_limit = Some(WindowLimit {
                    limit: amount(&limit)?.rescale(decimals)?,
                    window_seconds,
                });
            }
            if let Some(req) = require_documents {
                policy.require_documents = req;
            }
            let event = s.engine.set_policy(&token, policy, &actor, at)?;
            s.save()?;
            ctx.events(&[event]);
            Ok(())
        }
    }
}

fn query(ctx: &mut Ctx, c: QueryCmd) -> Result<(), CliError> {
    let s = ctx.open(false)?;
    let actor = ctx.actor()?;
    let scope = VisibilityScope::of(s.engine.state(), &actor);
    let events: Vec<LedgerEvent> = match c {
        QueryCmd::History { class } => {
            let filter: ClassFilter = class.parse()?;
            history_by_asset_type(&s.engine, &filter, &scope).into_iter().cloned().collect()
        }
        QueryCmd::Feed { since, max } => {
            let batch = regulatory_feed(&s.engine, since, &scope, max)?;
            batch.events.into_iter().cloned().collect()
        }
    };
    match ctx.format {
        Format::Human => {
            for e in &events {
                let _ = writeln!(ctx.out, "{}", e.to_line());
            }
        }
        Format::Records => ctx.events(&events),
    }
    Ok(())
}

/// `doc-id=path` → anchor over the file's bytes.
fn anchor(spec: &str, notarized_by: Option<&str>) -> Result<DocumentAnchor, CliError> {
    let (id, path) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--doc expects id=path, got `{spec}`")))?;
    let bytes = std::fs::read(path).map_err(|e| CliError::Failed(format!("{path}: {e}")))?;
    let anchor = DocumentAnchor::for_bytes(id, &bytes, path);
    Ok(match notarized_by {
        Some(n) => anchor.notarized(account(n)?),
        None => anchor,
    })
}

fn token(ctx: &mut Ctx, c: TokenCmd) -> Result<(), CliError> {
    let mut s = ctx.open(true)?;
    let at = ctx.time(&s.engine);
    let events = match c {
        TokenCmd::Define {
            token,
            class,
            decimals,
            tags,
            cap,
            expiry,
            profile,
            docs,
            notarized_by,
        } => {
            let actor = ctx.actor()?;
            let mut class = match class {
                ClassArg::SecurityFt => AssetClassDescriptor::security_ft(),
                ClassArg::CashFt => AssetClassDescriptor::cash_ft(decimals),
                ClassArg::Nft => AssetClassDescriptor::nft(),
            };
            for tag in &tags {
                class = class.with_tag(tag);
            }
            if expiry.is_some() {
                class.expirable = true;
            }
            let scale = class.decimals;
            let mut def = TokenDefinition::new(token_id(&token)?, class, actor.clone());
            if let Some(cap) = cap {
                def = def.with_cap(amount(&cap)?.rescale(scale)?.minor_units());
            }
            if let Some(expiry) = expiry {
                def = def.with_expiry(LogicalTime(expiry));
            }
            let policy = s.engine.config().policy(&profile, scale)?;
            let anchors = docs
                .iter()
                .map(|d| anchor(d, notarized_by.as_deref()))
                .collect::<Result<Vec<_>, _>>()?;
            vec![s.engine.define_token(def, policy, anchors, &actor, at)?]
        }
        TokenCmd::Amend { token } => vec![s.engine.amend_contract(&token_id(&token)?, &ctx.actor()?, at)?],
        TokenCmd::Attach { token, doc, notarized_by } => {
            let anchor = anchor(&doc, notarized_by.as_deref())?;
            vec![s.engine.attach_document(&token_id(&token)?, anchor, &ctx.actor()?, at)?]
        }
        TokenCmd::Expire { token } => s.engine.expire_sweep(&token_id(&token)?, at)?,
    };
    s.save()?;
    ctx.events(&events);
    Ok(())
}
