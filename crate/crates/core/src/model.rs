//! Foundational domain types: parties, roles, asset classes, token
//! definitions, fixed-point amounts and logical time.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported token scale.
pub const MAX_DECIMALS: u8 = 18;

const ID_MAX_LEN: usize = 64;

fn validate_identifier(kind: &'static str, value: &str) -> Result<()> {
    if value.is_empty() || value.len() > ID_MAX_LEN {
        return Err(Error::InvalidIdentifier {
            kind,
            value: value.to_string(),
        });
    }
    let url_safe = value
        .bytes()
        .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b'~'));
    if !url_safe {
        return Err(Error::InvalidIdentifier {
            kind,
            value: value.to_string(),
        });
    }
    Ok(())
}

macro_rules! identifier {
    ($(#[$meta:meta])* $name:ident, $kind:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Result<Self> {
                let value = value.into();
                validate_identifier($kind, &value)?;
                Ok(Self(value))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                Self::new(s)
            }
        }

        impl TryFrom<String> for $name {
            type Error = Error;

            fn try_from(value: String) -> Result<Self> {
                Self::new(value)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }
    };
}

identifier!(
    /// Opaque party identifier: non-empty, at most 64 URL-safe characters.
    AccountId,
    "account"
);

identifier!(
    /// Opaque token identifier, same alphabet as [`AccountId`].
    TokenId,
    "token"
);

/// Capacity in which an account participates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PartyRole {
    Issuer,
    Investor,
    Broker,
    Regulator,
    Auditor,
    Consumer,
    Operator,
    Relayer,
    LegalCounsel,
}

impl PartyRole {
    pub const ALL: [PartyRole; 9] = [
        PartyRole::Issuer,
        PartyRole::Investor,
        PartyRole::Broker,
        PartyRole::Regulator,
        PartyRole::Auditor,
        PartyRole::Consumer,
        PartyRole::Operator,
        PartyRole::Relayer,
        PartyRole::LegalCounsel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PartyRole::Issuer => "Issuer",
            PartyRole::Investor => "Investor",
            PartyRole::Broker => "Broker",
            PartyRole::Regulator => "Regulator",
            PartyRole::Auditor => "Auditor",
            PartyRole::Consumer => "Consumer",
            PartyRole::Operator => "Operator",
            PartyRole::Relayer => "Relayer",
            PartyRole::LegalCounsel => "LegalCounsel",
        }
    }
}

impl fmt::Display for PartyRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PartyRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PartyRole::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown role `{s}`")))
    }
}

/// Engine-injected timestamp in seconds. Never read from a wall clock.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct LogicalTime(pub u64);

impl LogicalTime {
    pub fn seconds(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, secs: u64) -> LogicalTime {
        LogicalTime(self.0.saturating_sub(secs))
    }
}

impl fmt::Display for LogicalTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn pow10(exp: u8) -> u128 {
    10u128.pow(u32::from(exp))
}

/// Fixed-point quantity: integer minor units at a decimal scale.
///
/// Two amounts are ordered only when they share a scale; use
/// [`Amount::cmp_exact`] to compare across scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Amount {
    minor: u128,
    decimals: u8,
}

impl Amount {
    pub fn new(minor: u128, decimals: u8) -> Result<Self> {
        if decimals > MAX_DECIMALS {
            return Err(Error::InvalidScale(decimals));
        }
        Ok(Self { minor, decimals })
    }

    pub fn zero(decimals: u8) -> Result<Self> {
        Self::new(0, decimals)
    }

    /// `units` whole units expressed at `decimals`.
    pub fn whole(units: u128, decimals: u8) -> Result<Self> {
        if decimals > MAX_DECIMALS {
            return Err(Error::InvalidScale(decimals));
        }
        let minor = units.checked_mul(pow10(decimals)).ok_or(Error::Overflow)?;
        Ok(Self { minor, decimals })
    }

    pub fn minor_units(self) -> u128 {
        self.minor
    }

    pub fn decimals(self) -> u8 {
        self.decimals
    }

    pub fn is_zero(self) -> bool {
        self.minor == 0
    }

    fn same_scale(self, other: Amount) -> Result<()> {
        if self.decimals != other.decimals {
            return Err(Error::ScaleMismatch {
                left: self.decimals,
                right: other.decimals,
            });
        }
        Ok(())
    }

    pub fn checked_add(self, other: Amount) -> Result<Amount> {
        self.same_scale(other)?;
        let minor = self.minor.checked_add(other.minor).ok_or(Error::Overflow)?;
        Ok(Amount { minor, ..self })
    }

    pub fn checked_sub(self, other: Amount) -> Result<Amount> {
        self.same_scale(other)?;
        let minor = self.minor.checked_sub(other.minor).ok_or(Error::Underflow)?;
        Ok(Amount { minor, ..self })
    }

    /// Re-express at another scale. Fails if digits would be dropped.
    pub fn rescale(self, decimals: u8) -> Result<Amount> {
        if decimals > MAX_DECIMALS {
            return Err(Error::InvalidScale(decimals));
        }
        match decimals.cmp(&self.decimals) {
            Ordering::Equal => Ok(self),
            Ordering::Greater => {
                let factor = pow10(decimals - self.decimals);
                let minor = self.minor.checked_mul(factor).ok_or(Error::Overflow)?;
                Ok(Amount { minor, decimals })
            }
            Ordering::Less => {
                let factor = pow10(self.decimals - decimals);
                if !self.minor.is_multiple_of(factor) {
                    return Err(Error::PrecisionLoss {
                        text: self.to_string(),
                        decimals,
                    });
                }
                Ok(Amount {
                    minor: self.minor / factor,
                    decimals,
                })
            }
        }
    }

    /// Exact comparison across scales.
    pub fn cmp_exact(self, other: Amount) -> Ordering {
        if self.decimals == other.decimals {
            return self.minor.cmp(&other.minor);
        }
        let (lo, hi, flipped) = if self.decimals < other.decimals {
            (self, other, false)
        } else {
            (other, self, true)
        };
        // lo widened to hi's scale; overflow means lo is strictly larger.
        let ord = match lo.minor.checked_mul(pow10(hi.decimals - lo.decimals)) {
            Some(widened) => widened.cmp(&hi.minor),
            None => Ordering::Greater,
        };
        if flipped {
            ord.reverse()
        } else {
            ord
        }
    }
}

impl PartialOrd for Amount {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        (self.decimals == other.decimals).then(|| self.minor.cmp(&other.minor))
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.decimals == 0 {
            return write!(f, "{}", self.minor);
        }
        let factor = pow10(self.decimals);
        write!(
            f,
            "{}.{:0width$}",
            self.minor / factor,
            self.minor % factor,
            width = usize::from(self.decimals)
        )
    }
}

/// Parses a decimal numeral; the scale is the number of fractional digits.
impl FromStr for Amount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (int_part, frac_part) = split_numeral(s)?;
        let decimals = u8::try_from(frac_part.len())
            .ok()
            .filter(|d| *d <= MAX_DECIMALS)
            .ok_or_else(|| Error::Parse(format!("too many fractional digits in `{s}`")))?;
        let mut minor: u128 = 0;
        for b in int_part.bytes().chain(frac_part.bytes()) {
            minor = minor
                .checked_mul(10)
                .and_then(|m| m.checked_add(u128::from(b - b'0')))
                .ok_or(Error::Overflow)?;
        }
        Ok(Amount { minor, decimals })
    }
}

fn split_numeral(s: &str) -> Result<(&str, &str)> {
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => {
            if f.is_empty() {
                return Err(Error::Parse(format!("dangling decimal point in `{s}`")));
            }
            (i, f)
        }
        None => (s, ""),
    };
    let digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    if int_part.is_empty() || !digits(int_part) || !digits(frac_part) {
        return Err(Error::Parse(format!("`{s}` is not a non-negative decimal numeral")));
    }
    Ok((int_part, frac_part))
}

/// Converts a decimal numeral to minor units at `decimals`, exactly.
///
/// Trailing fractional zeros beyond the scale are accepted; any non-zero
/// digit beyond it is `PrecisionLoss`.
pub fn quantize(amount_text: &str, decimals: u8) -> Result<Amount> {
    if decimals > MAX_DECIMALS {
        return Err(Error::InvalidScale(decimals));
    }
    let (int_part, frac_part) = split_numeral(amount_text)?;
    let keep = frac_part.len().min(usize::from(decimals));
    if frac_part[keep..].bytes().any(|b| b != b'0') {
        return Err(Error::PrecisionLoss {
            text: amount_text.to_string(),
            decimals,
        });
    }
    let mut minor: u128 = 0;
    let padding = usize::from(decimals) - keep;
    let digits = int_part
        .bytes()
        .chain(frac_part[..keep].bytes())
        .chain(std::iter::repeat_n(b'0', padding));
    for b in digits {
        minor = minor
            .checked_mul(10)
            .and_then(|m| m.checked_add(u128::from(b - b'0')))
            .ok_or(Error::Overflow)?;
    }
    Ok(Amount { minor, decimals })
}

/// `minor × bp / 10_000`, rounded half-to-even on the minor unit.
pub fn basis_points_half_even(minor: u128, bp: u32) -> Result<u128> {
    let product = minor.checked_mul(u128::from(bp)).ok_or(Error::Overflow)?;
    let quotient = product / 10_000;
    let remainder = product % 10_000;
    let round_up = match remainder.cmp(&5_000) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => quotient % 2 == 1,
    };
    Ok(if round_up { quotient + 1 } else { quotient })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Fungibility {
    Fungible,
    NonFungible,
}

/// Token taxonomy flags: `tF{~d,t,c}` is a fungible, whole-unit,
/// transferable, compliance-gated token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetClassDescriptor {
    pub fungibility: Fungibility,
    pub subdivisible: bool,
    pub decimals: u8,
    pub transferable: bool,
    pub compliant: bool,
    pub expirable: bool,
    #[serde(default)]
    pub behavior_tags: BTreeSet<String>,
}

impl AssetClassDescriptor {
    /// Whole-unit, transferable, compliance-gated fungible token.
    pub fn security_ft() -> Self {
        Self {
            fungibility: Fungibility::Fungible,
            subdivisible: false,
            decimals: 0,
            transferable: true,
            compliant: true,
            expirable: false,
            behavior_tags: BTreeSet::new(),
        }
    }

    pub fn cash_ft(decimals: u8) -> Self {
        Self {
            fungibility: Fungibility::Fungible,
            subdivisible: decimals > 0,
            decimals,
            transferable: true,
            compliant: true,
            expirable: false,
            behavior_tags: BTreeSet::new(),
        }
    }

    pub fn nft() -> Self {
        Self {
            fungibility: Fungibility::NonFungible,
            subdivisible: false,
            decimals: 0,
            transferable: true,
            compliant: true,
            expirable: false,
            behavior_tags: BTreeSet::new(),
        }
    }

    pub fn with_tag(mut self, tag: &str) -> Self {
        self.behavior_tags.insert(tag.to_string());
        self
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.behavior_tags.contains(tag)
    }
}

pub fn validate_class_descriptor(d: AssetClassDescriptor) -> Result<AssetClassDescriptor> {
    if d.decimals > MAX_DECIMALS {
        return Err(Error::InvalidClass(format!(
            "decimals {} exceeds {MAX_DECIMALS}",
            d.decimals
        )));
    }
    if d.fungibility == Fungibility::NonFungible && (d.subdivisible || d.decimals != 0) {
        return Err(Error::InvalidClass(
            "non-fungible tokens must be whole-unit with zero decimals".into(),
        ));
    }
    if !d.subdivisible && d.decimals > 0 {
        return Err(Error::InvalidClass(
            "non-subdivisible tokens must have zero decimals".into(),
        ));
    }
    if d.behavior_tags.iter().any(|t| t.is_empty() || t.contains(',')) {
        return Err(Error::InvalidClass("behavior tags must be non-empty and comma-free".into()));
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lifecycle {
    Active,
    Paused,
    Killed,
}

impl Lifecycle {
    /// Active ⇄ Paused, anything → Killed. Killed is absorbing.
    pub fn transition(self, to: Lifecycle) -> Result<Lifecycle> {
        use Lifecycle::*;
        match (self, to) {
            (Killed, _) => Err(Error::BadLifecycle { from: self, to }),
            (Active, Paused) | (Paused, Active) | (_, Killed) => Ok(to),
            _ => Err(Error::BadLifecycle { from: self, to }),
        }
    }
}

impl fmt::Display for Lifecycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Lifecycle::Active => "Active",
            Lifecycle::Paused => "Paused",
            Lifecycle::Killed => "Killed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenDefinition {
    pub token_id: TokenId,
    pub class: AssetClassDescriptor,
    pub issuer: AccountId,
    /// Minor units at the class scale.
    pub supply_cap: Option<u128>,
    pub expiry: Option<LogicalTime>,
    pub contract_version: u32,
    pub document_anchors: Vec<String>,
    pub lifecycle: Lifecycle,
    /// Set on lots derived from splitting a non-fungible parent.
    pub parent: Option<TokenId>,
}

impl TokenDefinition {
    pub fn new(token_id: TokenId, class: AssetClassDescriptor, issuer: AccountId) -> Self {
        let supply_cap = (class.fungibility == Fungibility::NonFungible).then_some(1);
        Self {
            token_id,
            class,
            issuer,
            supply_cap,
            expiry: None,
            contract_version: 1,
            document_anchors: Vec::new(),
            lifecycle: Lifecycle::Active,
            parent: None,
        }
    }

    pub fn with_cap(mut self, cap_minor: u128) -> Self {
        self.supply_cap = Some(cap_minor);
        self
    }

    pub fn with_expiry(mut self, expiry: LogicalTime) -> Self {
        self.expiry = Some(expiry);
        self.class.expirable = true;
        self
    }

    pub fn decimals(&self) -> u8 {
        self.class.decimals
    }

    pub fn is_nft(&self) -> bool {
        self.class.fungibility == Fungibility::NonFungible
    }

    /// Checks the class and the NFT single-unit cap.
    pub fn validate(&self) -> Result<()> {
        validate_class_descriptor(self.class.clone())?;
        if self.is_nft() && self.supply_cap != Some(1) {
            return Err(Error::InvalidClass(
                "non-fungible tokens have a supply cap of exactly one unit".into(),
            ));
        }
        if self.expiry.is_some() && !self.class.expirable {
            return Err(Error::InvalidClass("expiry set on a non-expirable class".into()));
        }
        Ok(())
    }
}
