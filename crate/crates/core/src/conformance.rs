//! Control catalog, institution matrix, protocol manifests and scoring.
//!
//! The matrix data lives in `data/conformance.toml`; this module only
//! parses, scores and renders it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{ControlKind, CONTROL_POINTS};

pub const ITEM_COUNT: u32 = 31;

const BUILTIN_DATA: &str = include_str!("../data/conformance.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ItemGroup {
    Traceability,
    Confidentiality,
    Enforceability,
    Finality,
    Tokenizability,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcpItem {
    pub id: u32,
    pub name: String,
    pub group: ItemGroup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstitutionColumn {
    pub name: String,
    pub items: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolManifest {
    pub protocol: String,
    pub items: BTreeSet<u32>,
}

impl ProtocolManifest {
    pub fn new(protocol: &str, items: impl IntoIterator<Item = u32>) -> Self {
        ProtocolManifest {
            protocol: protocol.to_string(),
            items: items.into_iter().collect(),
        }
    }

    /// Items of the catalog not in this manifest.
    pub fn complement(&self) -> BTreeSet<u32> {
        (1..=ITEM_COUNT).filter(|i| !self.items.contains(i)).collect()
    }

    /// Parses a manifest file:
    ///
    /// ```toml
    /// protocol = "MY-TOKEN"
    /// items = [1, 7, 20]
    /// ```
    ///
    /// Duplicate and out-of-catalog ids are rejected.
    pub fn from_toml(text: &str) -> Result<ProtocolManifest> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            protocol: String,
            items: Vec<u32>,
        }
        let raw: Raw = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if raw.protocol.trim().is_empty() {
            return Err(Error::Parse("protocol name is empty".into()));
        }
        let mut items = BTreeSet::new();
        for id in raw.items {
            if !(1..=ITEM_COUNT).contains(&id) {
                return Err(Error::UnknownItem(id));
            }
            if !items.insert(id) {
                return Err(Error::Parse(format!("item {id} listed twice")));
            }
        }
        Ok(ProtocolManifest {
            protocol: raw.protocol,
            items,
        })
    }
}

/// A printed scorecard row: its label and the matrix column it scores.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishedRow {
    pub label: String,
    pub institution: Option<String>,
    pub cells: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConformanceData {
    pub protocol_columns: Vec<String>,
    pub items: Vec<RcpItem>,
    pub institutions: Vec<InstitutionColumn>,
    pub protocols: Vec<RawManifest>,
    pub published: Vec<PublishedRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawManifest {
    pub name: String,
    pub items: BTreeSet<u32>,
}

impl ConformanceData {
    /// Parses and validates a data file.
    pub fn from_toml(text: &str) -> Result<ConformanceData> {
        let data: ConformanceData = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let ids: Vec<u32> = data.items.iter().map(|i| i.id).collect();
        if ids != (1..=ITEM_COUNT).collect::<Vec<_>>() {
            return Err(Error::Parse("catalog must list items 1..=31 in order".into()));
        }
        let all_items = data
            .institutions
            .iter()
            .map(|c| &c.items)
            .chain(data.protocols.iter().map(|p| &p.items));
        for items in all_items {
            if let Some(bad) = items.iter().find(|i| !(1..=ITEM_COUNT).contains(*i)) {
                return Err(Error::UnknownItem(*bad));
            }
        }
        let names: BTreeSet<&str> = data.institutions.iter().map(|c| c.name.as_str()).collect();
        if names.len() != data.institutions.len() {
            return Err(Error::Parse("duplicate institution column".into()));
        }
        for row in &data.published {
            if row.cells.len() != data.protocol_columns.len() {
                return Err(Error::Parse(format!("published row {} has wrong width", row.label)));
            }
            if let Some(inst) = &row.institution {
                if !names.contains(inst.as_str()) {
                    return Err(Error::Parse(format!("published row maps to unknown column {inst}")));
                }
            }
            for cell in &row.cells {
                parse_cell(cell)?;
            }
        }
        Ok(data)
    }

    pub fn manifests(&self) -> Vec<ProtocolManifest> {
        self.protocols
            .iter()
            .map(|p| ProtocolManifest {
                protocol: p.name.clone(),
                items: p.items.clone(),
            })
            .collect()
    }
}

fn parse_cell(cell: &str) -> Result<(u32, u32)> {
    let bad = || Error::Parse(format!("bad score cell `{cell}`"));
    let (n, d) = cell.split_once('/').ok_or_else(bad)?;
    Ok((n.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?))
}

/// The shipped data set.
pub fn builtin_data() -> &'static ConformanceData {
    static DATA: OnceLock<ConformanceData> = OnceLock::new();
    DATA.get_or_init(|| ConformanceData::from_toml(BUILTIN_DATA).expect("shipped conformance data is valid"))
}

pub fn catalog() -> &'static [RcpItem] {
    &builtin_data().items
}

pub fn builtin_matrix() -> Vec<InstitutionColumn> {
    builtin_data().institutions.clone()
}

pub fn builtin_manifests() -> Vec<ProtocolManifest> {
    builtin_data().manifests()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScoreRow {
    pub institution: String,
    pub num: u32,
    pub den: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScoreTable {
    pub protocol: String,
    pub rows: Vec<ScoreRow>,
    pub total: (u32, u32),
}

impl ScoreTable {
    pub fn row(&self, institution: &str) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| r.institution == institution)
    }
}

/// row(inst) = (|manifest ∩ inst|, |inst|); total sums both columns.
pub fn score(manifest: &ProtocolManifest, matrix: &[InstitutionColumn]) -> Result<ScoreTable> {
    if let Some(bad) = manifest.items.iter().find(|i| !(1..=ITEM_COUNT).contains(*i)) {
        return Err(Error::UnknownItem(*bad));
    }
    let rows: Vec<ScoreRow> = matrix
        .iter()
        .map(|col| ScoreRow {
            institution: col.name.clone(),
            num: col.items.intersection(&manifest.items).count() as u32,
            den: col.items.len() as u32,
        })
        .collect();
    let total = (rows.iter().map(|r| r.num).sum(), rows.iter().map(|r| r.den).sum());
    Ok(ScoreTable {
        protocol: manifest.protocol.clone(),
        rows,
        total,
    })
}

/// This build's own manifest plus notes on how each non-blocking item is met.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EngineManifest {
    pub manifest: ProtocolManifest,
    pub annotations: BTreeMap<u32, String>,
}

/// Introspects the control-point table: every code with an enforcement
/// point, report facility or visibility rule counts as implemented.
pub fn derive_manifest_from_engine() -> EngineManifest {
    let mut items = BTreeSet::new();
    let mut annotations = BTreeMap::new();
    for point in CONTROL_POINTS {
        let id = point.code.number();
        items.insert(id);
        match point.kind {
            ControlKind::VisibilitySimulated => {
                annotations.insert(id, format!("visibility-simulated: {}", point.location));
            }
            ControlKind::ReportOnly => {
                annotations.insert(id, format!("report-only: {}", point.location));
            }
            ControlKind::Blocking | ControlKind::Enforcement => {}
        }
    }
    EngineManifest {
        manifest: ProtocolManifest {
            protocol: "ENGINE".into(),
            items,
        },
        annotations,
    }
}

/// Institutions as rows, protocols as columns, `n/d` cells, Total row.
pub fn render_report(tables: &[ScoreTable]) -> String {
    let institutions: Vec<&str> = tables
        .first()
        .map(|t| t.rows.iter().map(|r| r.institution.as_str()).collect())
        .unwrap_or_default();
    let width = tables.iter().map(|t| t.protocol.len()).max().unwrap_or(0).max(7);
    let mut out = String::new();
    let _ = write!(out, "{:<11}", "Institution");
    for t in tables {
        let _ = write!(out, " {:>width$}", t.protocol);
    }
    out.push('\n');
    for (i, inst) in institutions.iter().enumerate() {
        let _ = write!(out, "{inst:<11}");
        for t in tables {
            let r = &t.rows[i];
            let _ = write!(out, " {:>width$}", format!("{}/{}", r.num, r.den));
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<11}", "Total");
    for t in tables {
        let _ = write!(out, " {:>width$}", format!("{}/{}", t.total.0, t.total.1));
    }
    out.push('\n');
    out
}

/// One JSON object per cell, Total cells last.
pub fn render_records(tables: &[ScoreTable]) -> String {
    #[derive(Serialize)]
    struct Cell<'a> {
        protocol: &'a str,
        institution: &'a str,
        num: u32,
        den: u32,
    }
    let mut out = String::new();
    for t in tables {
        for r in &t.rows {
            let cell = Cell {
                protocol: &t.protocol,
                institution: &r.institution,
                num: r.num,
                den: r.den,
            };
            out.push_str(&serde_json::to_string(&cell).expect("cell serializes"));
            out.push('\n');
        }
    }
    for t in tables {
        let cell = Cell {
            protocol: &t.protocol,
            institution: "Total",
            num: t.total.0,
            den: t.total.1,
        };
        out.push_str(&serde_json::to_string(&cell).expect("cell serializes"));
        out.push('\n');
    }
    out
}

/// A computed cell that disagrees with the published scorecard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Erratum {
    pub label: String,
    pub institution: String,
    pub protocol: String,
    pub computed: (u32, u32),
    pub published: (u32, u32),
}

impl std::fmt::Display for Erratum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "erratum: {} ({}) x {}: computed {}/{}, published {}/{}",
            self.label,
            self.institution,
            self.protocol,
            self.computed.0,
            self.computed.1,
            self.published.0,
            self.published.1
        )
    }
}

/// (protocol, computed, published) total for one protocol column.
pub type TotalComparison = (String, (u32, u32), (u32, u32));

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PublishedComparison {
    pub body_cells: usize,
    pub body_matches: usize,
    pub errata: Vec<Erratum>,
    pub totals: Vec<TotalComparison>,
}

impl PublishedComparison {
    pub fn totals_match(&self) -> bool {
        self.totals.iter().all(|(_, c, p)| c == p)
    }
}

/// Compares computed tables against the published rows. `tables` must be
/// in the published protocol column order.
pub fn compare_published(data: &ConformanceData, tables: &[ScoreTable]) -> Result<PublishedComparison> {
    let order: Vec<&str> = tables.iter().map(|t| t.protocol.as_str()).collect();
    if order != data.protocol_columns.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Parse("tables are not in published column order".into()));
    }
    let mut cmp = PublishedComparison {
        body_cells: 0,
        body_matches: 0,
        errata: Vec::new(),
        totals: Vec::new(),
    };
    for row in &data.published {
        for (table, cell) in tables.iter().zip(&row.cells) {
            let published = parse_cell(cell)?;
            match &row.institution {
                None => cmp.totals.push((table.protocol.clone(), table.total, published)),
                Some(inst) => {
                    let r = table
                        .row(inst)
                        .ok_or_else(|| Error::Parse(format!("no computed row for {inst}")))?;
                    let computed = (r.num, r.den);
                    cmp.body_cells += 1;
                    if computed == published {
                        cmp.body_matches += 1;
                    } else {
                        cmp.errata.push(Erratum {
                            label: row.label.clone(),
                            institution: inst.clone(),
                            protocol: table.protocol.clone(),
                            computed,
                            published,
                        });
                    }
                }
            }
        }
    }
    Ok(cmp)
}

/// Scores the built-in manifests in published column order.
pub fn builtin_tables() -> Vec<ScoreTable> {
    let matrix = builtin_matrix();
    builtin_manifests()
        .iter()
        .map(|m| score(m, &matrix).expect("built-in manifests are in range"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn manifest(name: &str) -> ProtocolManifest {
        builtin_manifests().into_iter().find(|m| m.protocol == name).unwrap()
    }

    #[test]
    fn catalog_has_31_grouped_items() {
        let items = catalog();
        assert_eq!(items.len(), 31);
        assert_eq!(items[0].name, "Customer Identity Verification");
        let confidential: Vec<u32> = items
            .iter()
            .filter(|i| i.group == ItemGroup::Confidentiality)
            .map(|i| i.id)
            .collect();
        assert_eq!(confidential, vec![17, 18, 19]);
        for (item, code) in items.iter().zip(crate::policy::ReasonCode::ALL) {
            assert_eq!(code.number(), item.id);
        }
    }

    #[test]
    fn matrix_columns() {
        let matrix = builtin_matrix();
        assert_eq!(matrix.len(), 15);
        assert_eq!(matrix[0].items, BTreeSet::from([1, 17, 18]));
        let fatf = matrix.iter().find(|c| c.name == "FATF").unwrap();
        assert_eq!(fatf.items.len(), 14);
        assert_eq!(matrix.iter().map(|c| c.items.len()).sum::<usize>(), 117);
    }

    #[test]
    fn manifests_match_status_matrix() {
        assert_eq!(manifest("ERC-20").items, BTreeSet::from([20, 21, 25, 28, 31]));
        assert_eq!(manifest("ERC-3643").items.len(), 15);
        assert_eq!(manifest("NEW-EIP").complement(), BTreeSet::from([2, 5, 6, 17, 18, 19]));
    }

    #[test]
    fn score_bounds() {
        let matrix = builtin_matrix();
        let empty = score(&ProtocolManifest::new("none", []), &matrix).unwrap();
        assert_eq!(empty.total, (0, 117));
        assert!(empty.rows.iter().all(|r| r.num == 0));
        let full = score(&ProtocolManifest::new("all", 1..=31), &matrix).unwrap();
        assert_eq!(full.total, (117, 117));
        assert!(full.rows.iter().all(|r| r.num == r.den));
        assert!(matches!(
            score(&ProtocolManifest::new("bad", [32]), &matrix),
            Err(Error::UnknownItem(32))
        ));
    }

    #[test]
    fn anchor_cells() {
        let matrix = builtin_matrix();
        let cell = |p: &str, i: &str| {
            let r = score(&manifest(p), &matrix).unwrap();
            let row = r.row(i).unwrap().clone();
            (row.num, row.den)
        };
        assert_eq!(cell("ERC-20", "BIS"), (3, 7));
        assert_eq!(cell("ERC-1400", "ESMA"), (3, 6));
        assert_eq!(cell("ERC-3643", "ESMA"), (2, 6));
        assert_eq!(cell("NEW-EIP", "FATF"), (11, 14));
        assert_eq!(cell("NEW-EIP", "FINRA"), (11, 14));
    }

    #[test]
    fn engine_manifest_covers_new_eip_and_annotates_visibility_items() {
        let engine = derive_manifest_from_engine();
        assert!(engine.manifest.items.is_superset(&manifest("NEW-EIP").items));
        for id in [2, 5, 6] {
            assert!(engine.manifest.items.contains(&id));
        }
        for id in [17, 18, 19] {
            assert!(engine.annotations[&id].starts_with("visibility-simulated"));
        }
    }

    #[test]
    fn render_orders_columns_as_given() {
        let matrix = builtin_matrix();
        let a = score(&ProtocolManifest::new("B-first", [1]), &matrix).unwrap();
        let b = score(&ProtocolManifest::new("A-second", []), &matrix).unwrap();
        let text = render_report(&[a, b]);
        let header = text.lines().next().unwrap();
        assert!(header.find("B-first").unwrap() < header.find("A-second").unwrap());
        assert!(text.lines().last().unwrap().ends_with("0/117"));
        assert_eq!(render_records(&builtin_tables()).lines().count(), 4 * 16);
    }

    #[test]
    fn manifest_file_parsing() {
        let m = ProtocolManifest::from_toml("protocol = \"X\"\nitems = [3, 1]").unwrap();
        assert_eq!(m.items, BTreeSet::from([1, 3]));
        assert!(matches!(
            ProtocolManifest::from_toml("protocol = \"X\"\nitems = [0]"),
            Err(Error::UnknownItem(0))
        ));
        assert!(ProtocolManifest::from_toml("protocol = \"X\"\nitems = [1, 1]").is_err());
        assert!(ProtocolManifest::from_toml("protocol = \"\"\nitems = []").is_err());
        assert!(ProtocolManifest::from_toml("items = [1]").is_err());
    }

    fn manifest_strategy() -> impl Strategy<Value = BTreeSet<u32>> {
        proptest::collection::btree_set(1u32..=31, 0..=31)
    }

    proptest! {
        #[test]
        fn total_equals_item_incidence(items in manifest_strategy()) {
            let matrix = builtin_matrix();
            let table = score(&ProtocolManifest::new("p", items.clone()), &matrix).unwrap();
            let incidence: usize = items
                .iter()
                .map(|i| matrix.iter().filter(|c| c.items.contains(i)).count())
                .sum();
            prop_assert_eq!(table.total.0 as usize, incidence);
            prop_assert_eq!(table.total.0, table.rows.iter().map(|r| r.num).sum::<u32>());
            prop_assert!(table.rows.iter().all(|r| r.num <= r.den));
        }

        #[test]
        fn scoring_is_monotone(items in manifest_strategy(), extra in 1u32..=31) {
            let matrix = builtin_matrix();
            let base = score(&ProtocolManifest::new("p", items.clone()), &matrix).unwrap();
            let mut more = items;
            more.insert(extra);
            let grown = score(&ProtocolManifest::new("p", more), &matrix).unwrap();
            for (a, b) in base.rows.iter().zip(&grown.rows) {
                prop_assert!(b.num >= a.num);
            }
        }
    }
}
