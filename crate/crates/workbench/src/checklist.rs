//! Checklist of emulation-completeness obligations, with each row tied to
//! corpus tests through the `checklist_map` data file.
//!
//! Map lines have the form
//!
//! ```text
//! table3 | Function identity | pass | closures, probes/fun_id_order
//! table4 | Timing | gap | trivial, tailcalls
//! table4 | Some row | out-of-scope: reason text |
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write};

use gl_core::frontend::OPCODES;

use crate::harness::{PairReport, UncheckedReport};

/// Language-oriented rows.
pub const TABLE3: [&str; 6] = [
    "Fetch, decode, and maintain guest state",
    "All statements and expressions",
    "Function arguments and callable values",
    "Function identity",
    "Compound or complex operations",
    "Source-level evaluation versus compilation",
];

/// Emulator-oriented rows.
pub const TABLE4: [&str; 8] = [
    "Timing",
    "Memory boundaries",
    "Reflective and introspection functions",
    "Memory footprint and resource usage",
    "Boundary of emulation",
    "Callbacks and function pointers",
    "Overlooked or hidden state information",
    "Source metadata and stack traces",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expectation {
    Pass,
    Gap,
    OutOfScope(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapRow {
    pub table: &'static str,
    pub label: &'static str,
    pub expect: Expectation,
    pub tests: Vec<String>,
}

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum CoverageError {
    #[error("the corpus has no checked programs")]
    EmptyCorpus,
    #[error("the corpus has no checklist map")]
    NoMap,
    #[error("checklist map line {line}: {message}")]
    Map { line: usize, message: String },
    #[error("checklist row {0:?} is not mapped")]
    MissingRow(String),
    #[error("checklist row {row:?} names unknown test {test:?}")]
    UnknownTest { row: String, test: String },
    #[error("no corpus program executes {}", .0.join(", "))]
    Opcodes(Vec<&'static str>),
}

fn known_row(table: &str, label: &str) -> Option<(&'static str, &'static str)> {
    let rows: &[&'static str] = match table {
        "table3" => &TABLE3,
        "table4" => &TABLE4,
        _ => return None,
    };
    let table = if table == "table3" { "table3" } else { "table4" };
    rows.iter().find(|r| **r == label).map(|r| (table, *r))
}

/// Parses the map, requiring every row of both tables exactly once, in
/// table order.
pub fn parse_map(text: &str) -> Result<Vec<MapRow>, CoverageError> {
    let mut rows: BTreeMap<(&'static str, &'static str), MapRow> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: &str| CoverageError::Map { line: i + 1, message: message.to_string() };
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        let [table, label, expect, tests] = fields[..] else {
            return Err(bad("expected four `|`-separated fields"));
        };
        let (table, label) = known_row(table, label).ok_or_else(|| bad("unknown table row"))?;
        let expect = match expect {
            "pass" => Expectation::Pass,
            "gap" => Expectation::Gap,
            other => match other.strip_prefix("out-of-scope:") {
                Some(reason) if !reason.trim().is_empty() => Expectation::OutOfScope(reason.trim().to_string()),
                _ => return Err(bad("expectation must be pass, gap or out-of-scope: <reason>")),
            },
        };
        let tests: Vec<String> = tests.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect();
        if tests.is_empty() && !matches!(expect, Expectation::OutOfScope(_)) {
            return Err(bad("row has no tests"));
        }
        if rows.insert((table, label), MapRow { table, label, expect, tests }).is_some() {
            return Err(bad("row mapped twice"));
        }
    }
    let order = TABLE3.iter().map(|r| ("table3", *r)).chain(TABLE4.iter().map(|r| ("table4", *r)));
    order.map(|key| rows.remove(&key).ok_or_else(|| CoverageError::MissingRow(key.1.to_string()))).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    Pass,
    /// Smallest and largest overhead factor over the row's tests.
    Gap {
        min: f64,
        max: f64,
    },
    OutOfScope(String),
    /// The row's expectation was not met by these tests.
    NotDemonstrated(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub table: &'static str,
    pub label: &'static str,
    pub tests: Vec<String>,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChecklistReport {
    pub rows: Vec<Row>,
    pub opcodes: [u64; OPCODES.len()],
}

impl ChecklistReport {
    pub fn all_demonstrated(&self) -> bool {
        !self.rows.iter().any(|r| matches!(r.status, Status::NotDemonstrated(_)))
    }

    pub fn row(&self, label: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn serialize(&self, audit: bool) -> String {
        let mut out = String::new();
        self.write(&mut out, audit).expect("writing to a string");
        out
    }

    fn write(&self, out: &mut String, audit: bool) -> fmt::Result {
        let covered = self.opcodes.iter().filter(|&&n| n > 0).count();
        writeln!(out, "COVERAGE opcodes={covered}/{}", OPCODES.len())?;
        if audit {
            for (name, n) in OPCODES.iter().zip(self.opcodes) {
                writeln!(out, "OPCODE {name} {n}")?;
            }
        }
        for r in &self.rows {
            write!(out, "ROW {} {:?} ", r.table, r.label)?;
            match &r.status {
                Status::Pass => write!(out, "demonstrated-pass")?,
                Status::Gap { min, max } => write!(out, "demonstrated-gap overhead_red={min:.2}..{max:.2}")?,
                Status::OutOfScope(reason) => write!(out, "out-of-scope reason={reason:?}")?,
                Status::NotDemonstrated(ids) => write!(out, "not-demonstrated failing={}", ids.join(","))?,
            }
            writeln!(out, " tests={}", r.tests.join(","))?;
        }
        writeln!(
            out,
            "NOTE budget synchronization: fuel programs run the emulator under host fuel = guest fuel x (measured overhead rounded up, plus one), and the direct print trace must be a prefix of the emulated one"
        )?;
        writeln!(
            out,
            "NOTE sys_info(\"mode\") is masked to \"native\"; reporting \"emulated\" is a legitimate alternative reading, available as the unhooked sys_info build"
        )
    }
}

enum Test<'a> {
    Pair(&'a PairReport),
    Unchecked(&'a UncheckedReport),
}

/// Builds the checklist, failing when a row or an opcode lacks coverage.
pub fn checklist_report(
    map: Option<&str>,
    pairs: &[PairReport],
    unchecked: &[UncheckedReport],
) -> Result<ChecklistReport, CoverageError> {
    if pairs.is_empty() {
        return Err(CoverageError::EmptyCorpus);
    }
    let map = parse_map(map.ok_or(CoverageError::NoMap)?)?;
    let mut tests: BTreeMap<&str, Test> = BTreeMap::new();
    for p in pairs {
        tests.insert(&p.id, Test::Pair(p));
    }
    for u in unchecked {
        tests.insert(&u.id, Test::Unchecked(u));
    }
    let mut opcodes = [0u64; OPCODES.len()];
    for p in pairs.iter().filter_map(|p| p.pair.as_ref().ok()) {
        for (total, n) in opcodes.iter_mut().zip(p.opcodes) {
            *total += n;
        }
    }
    let missing: Vec<&'static str> =
        OPCODES.iter().zip(opcodes).filter(|(_, n)| *n == 0).map(|(name, _)| *name).collect();
    if !missing.is_empty() {
        return Err(CoverageError::Opcodes(missing));
    }
    let mut rows = Vec::new();
    for m in map {
        let mut found = Vec::new();
        for id in &m.tests {
            let t = tests
                .get(id.as_str())
                .ok_or_else(|| CoverageError::UnknownTest { row: m.label.to_string(), test: id.clone() })?;
            found.push((id.clone(), t));
        }
        let status = match &m.expect {
            Expectation::OutOfScope(reason) => Status::OutOfScope(reason.clone()),
            Expectation::Pass => {
                let failing: Vec<String> = found
                    .iter()
                    .filter(|(_, t)| match t {
                        Test::Pair(p) => !p.passed(),
                        Test::Unchecked(u) => !u.passed(),
                    })
                    .map(|(id, _)| id.clone())
                    .collect();
                if failing.is_empty() {
                    Status::Pass
                } else {
                    Status::NotDemonstrated(failing)
                }
            }
            Expectation::Gap => {
                let mut factors = Vec::new();
                let mut failing = Vec::new();
                for (id, t) in &found {
                    let strong = match t {
                        Test::Pair(p) => p.pair.as_ref().ok().map(|p| p.strong),
                        Test::Unchecked(_) => None,
                    };
                    match strong {
                        Some(s) if s.distinguishable && s.overhead_reductions.is_some_and(|f| f > 1.0) => {
                            factors.push(s.overhead_reductions.unwrap_or(0.0))
                        }
                        _ => failing.push(id.clone()),
                    }
                }
                if failing.is_empty() {
                    let min = factors.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = factors.iter().copied().fold(0.0, f64::max);
                    Status::Gap { min, max }
                } else {
                    Status::NotDemonstrated(failing)
                }
            }
        };
        rows.push(Row { table: m.table, label: m.label, tests: m.tests, status });
    }
    Ok(ChecklistReport { rows, opcodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_map() -> String {
        let mut s = String::new();
        for r in TABLE3 {
            s.push_str(&format!("table3 | {r} | pass | a\n"));
        }
        for r in TABLE4 {
            s.push_str(&format!("table4 | {r} | gap | a\n"));
        }
        s
    }

    #[test]
    fn every_row_parses_once() {
        let rows = parse_map(&full_map()).unwrap();
        assert_eq!(rows.len(), 14);
        assert_eq!(rows[0].label, TABLE3[0]);
        assert_eq!(rows[6].label, "Timing");
    }

    #[test]
    fn map_errors() {
        let dup = format!("{}table4 | Timing | gap | b\n", full_map());
        assert!(matches!(parse_map(&dup), Err(CoverageError::Map { message, .. }) if message == "row mapped twice"));
        let short: String = full_map().lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert_eq!(parse_map(&short), Err(CoverageError::MissingRow(TABLE3[0].into())));
        assert!(parse_map("table5 | Timing | gap | a").is_err());
        assert!(parse_map("table4 | Timing | maybe | a").is_err());
        let oos = full_map().replace("Timing | gap | a", "Timing | out-of-scope: needs real clocks |");
        let rows = parse_map(&oos).unwrap();
        assert_eq!(rows[6].expect, Expectation::OutOfScope("needs real clocks".into()));
    }

    #[test]
    fn empty_corpus_fails_the_guard() {
        assert_eq!(checklist_report(Some(&full_map()), &[], &[]), Err(CoverageError::EmptyCorpus));
    }
}
