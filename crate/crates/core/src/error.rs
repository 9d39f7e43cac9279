use thiserror::Error;

use crate::ledger::EventKind;
use crate::model::{AccountId, Lifecycle, TokenId};
use crate::policy::ReasonCode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {kind} identifier `{value}`")]
    InvalidIdentifier { kind: &'static str, value: String },
    #[error("scale {0} exceeds 18 decimals")]
    InvalidScale(u8),
    #[error("amounts at scales {left} and {right} cannot be combined")]
    ScaleMismatch { left: u8, right: u8 },
    #[error("arithmetic overflow")]
    Overflow,
    #[error("arithmetic underflow")]
    Underflow,
    #[error("`{text}` cannot be represented with {decimals} decimals")]
    PrecisionLoss { text: String, decimals: u8 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid asset class: {0}")]
    InvalidClass(String),
    #[error("lifecycle transition {from} -> {to} not allowed")]
    BadLifecycle { from: Lifecycle, to: Lifecycle },

    #[error("identity for {0} already registered")]
    AlreadyRegistered(AccountId),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("profile digest unchanged")]
    NoChange,
    #[error("{0} is already blacklisted")]
    AlreadyListed(AccountId),
    #[error("{0} is not blacklisted")]
    NotListed(AccountId),

    #[error("RCP-07 permission denied: {actor} may not {action}")]
    PermissionDenied { actor: AccountId, action: String },
    #[error("RCP-14 token {0} is killed")]
    TokenKilled(TokenId),
    #[error("RCP-13 token {0} is paused")]
    TokenPaused(TokenId),
    #[error("RCP-31 supply cap of {token} exceeded")]
    SupplyCapExceeded { token: TokenId },
    #[error("RCP-22 token {0} requires at least one attached legal document")]
    DocumentsRequired(TokenId),

    #[error("time regression: {at} precedes last event time {last}")]
    TimeRegression { last: u64, at: u64 },
    #[error("event kind {0:?} is not correctable")]
    NotCorrectable(EventKind),
    #[error("unknown token {0}")]
    UnknownToken(TokenId),
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("token {0} already defined")]
    AlreadyDefined(TokenId),
    #[error("insufficient balance of {token} for {account}")]
    InsufficientBalance { account: AccountId, token: TokenId },
    #[error("{0} is not a designated recovery account")]
    NotDesignatedRecovery(AccountId),
    #[error("degenerate request: {0}")]
    Degenerate(String),
    #[error("{account} holds no {token}")]
    EmptyHolding { account: AccountId, token: TokenId },
    #[error("token {0} has not reached its expiry")]
    NotExpired(TokenId),
    #[error("token {0} is not splittable")]
    NotSplittable(TokenId),
    #[error("meta-transfer authorization does not verify")]
    BadAuthorization,
    #[error("relayer {0} cannot cover the fee")]
    RelayerInsufficientFee(AccountId),
    #[error("bad range {from}..={to}")]
    BadRange { from: u64, to: u64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: u64, reason: String },
    #[error("unknown catalog item {0}")]
    UnknownItem(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// The control code an error enforces, when it enforces one.
    pub fn reason_code(&self) -> Option<ReasonCode> {
        match self {
            Error::PermissionDenied { .. } => Some(ReasonCode::Rcp07),
            Error::TokenKilled(_) => Some(ReasonCode::Rcp14),
            Error::TokenPaused(_) => Some(ReasonCode::Rcp13),
            Error::SupplyCapExceeded { .. } => Some(ReasonCode::Rcp31),
            Error::DocumentsRequired(_) => Some(ReasonCode::Rcp22),
            _ => None,
        }
    }
}
