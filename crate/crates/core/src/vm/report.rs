//! Run reports and their line-oriented text form.
//!
//! ```text
//! MODE bytecode
//! OUTCOME value 42
//! PRINT 1 "hi"
//! CRASH 1 "e" [("f", 3)]
//! METER pid=0 red=5 alloc=0
//! HOST instrs=4 red=5 alloc=0
//! ```
//!
//! Values are kept in canonical rendering, which is also how the emulated
//! side delivers them.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write};

use crate::value::write_quoted;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Value(String),
    Crash { value: String, trace: String },
    Deadlock(Vec<u64>),
    FuelExhausted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Print {
    pub pid: u64,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrashReport {
    pub pid: u64,
    pub value: String,
    pub trace: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Meter {
    pub pid: u64,
    pub reductions: u64,
    pub alloc: u64,
}

/// Counters of the executing machine itself. For an emulated run these
/// measure the emulator, not the guest.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HostMeters {
    pub instrs: u64,
    pub reductions: u64,
    pub alloc: u64,
    /// Deepest host call stack the emulator sampled, when reported.
    pub depth: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunReport {
    pub mode: String,
    pub outcome: Outcome,
    pub prints: Vec<Print>,
    pub crashes: Vec<CrashReport>,
    pub meters: Vec<Meter>,
    pub host: HostMeters,
}

impl RunReport {
    pub fn main_meter(&self) -> Option<Meter> {
        self.meters.iter().copied().find(|m| m.pid == 0)
    }

    pub fn serialize(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<RunReport, ReportParseError> {
        parse_report(text)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Value(v) => write!(f, "value {v}"),
            Outcome::Crash { value, trace } => write!(f, "crash {value} {trace}"),
            Outcome::Deadlock(pids) => {
                f.write_str("deadlock [")?;
                for (i, p) in pids.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{p}")?;
                }
                f.write_char(']')
            }
            Outcome::FuelExhausted => f.write_str("fuel_exhausted"),
        }
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "MODE {}", self.mode)?;
        writeln!(f, "OUTCOME {}", self.outcome)?;
        for p in &self.prints {
            write!(f, "PRINT {} ", p.pid)?;
            write_quoted(f, &p.text)?;
            f.write_char('\n')?;
        }
        for c in &self.crashes {
            writeln!(f, "CRASH {} {} {}", c.pid, c.value, c.trace)?;
        }
        for m in &self.meters {
            writeln!(f, "METER pid={} red={} alloc={}", m.pid, m.reductions, m.alloc)?;
        }
        let h = &self.host;
        write!(f, "HOST instrs={} red={} alloc={}", h.instrs, h.reductions, h.alloc)?;
        if let Some(d) = h.depth {
            write!(f, " depth={d}")?;
        }
        f.write_char('\n')
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ReportParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "report line {}: {}", self.line, self.message)
    }
}

/// Splits the leading canonical value off `text`, returning it and the rest
/// with leading spaces removed.
pub fn split_value(text: &str) -> Option<(&str, &str)> {
    let bytes = text.as_bytes();
    let end = match bytes.first()? {
        b'"' => string_end(bytes, 0)?,
        b'(' | b'[' => {
            let mut depth = 0usize;
            let mut i = 0;
            loop {
                match *bytes.get(i)? {
                    b'"' => {
                        i = string_end(bytes, i)?;
                        continue;
                    }
                    b'(' | b'[' => depth += 1,
                    b')' | b']' => {
                        depth -= 1;
                        if depth == 0 {
                            break i + 1;
                        }
                    }
                    _ => {}
                }
                i += 1;
            }
        }
        b'<' => text.find('>')? + 1,
        _ => text.find(' ').unwrap_or(text.len()),
    };
    Some((&text[..end], text[end..].trim_start_matches(' ')))
}

/// Index just past the closing quote of the string literal starting at `start`.
fn string_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut i = start + 1;
    loop {
        match *bytes.get(i)? {
            b'\\' => i += 2,
            b'"' => return Some(i + 1),
            _ => i += 1,
        }
    }
}

/// Decodes a quoted canonical string.
pub fn unquote(lit: &str) -> Option<String> {
    let inner = lit.strip_prefix('"')?.strip_suffix('"')?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next()? {
            '"' => out.push('"'),
            '\\' => out.push('\\'),
            'n' => out.push('\n'),
            't' => out.push('\t'),
            'r' => out.push('\r'),
            'x' => {
                let hex: String = chars.by_ref().take(2).collect();
                out.push(u8::from_str_radix(&hex, 16).ok()? as char);
            }
            _ => return None,
        }
    }
    Some(out)
}

fn kv(field: &str, key: &str) -> Option<u64> {
    field.strip_prefix(key)?.strip_prefix('=')?.parse().ok()
}

fn parse_report(text: &str) -> Result<RunReport, ReportParseError> {
    let mut mode = None;
    let mut outcome = None;
    let mut prints = Vec::new();
    let mut crashes = Vec::new();
    let mut meters = Vec::new();
    let mut host = None;
    for (n, line) in text.lines().enumerate() {
        let bad = |message: &str| ReportParseError { line: n + 1, message: message.to_string() };
        let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
        match tag {
            "MODE" => mode = Some(rest.to_string()),
            "OUTCOME" => {
                let (kind, rest) = rest.split_once(' ').unwrap_or((rest, ""));
                outcome = Some(match kind {
                    "value" => Outcome::Value(rest.to_string()),
                    "crash" => {
                        let (value, trace) = split_value(rest).ok_or_else(|| bad("bad crash value"))?;
                        Outcome::Crash { value: value.to_string(), trace: trace.to_string() }
                    }
                    "deadlock" => {
                        let inner = rest
                            .strip_prefix('[')
                            .and_then(|r| r.strip_suffix(']'))
                            .ok_or_else(|| bad("bad deadlock list"))?;
                        let pids = inner
                            .split(", ")
                            .filter(|s| !s.is_empty())
                            .map(|s| s.parse().map_err(|_| bad("bad pid")))
                            .collect::<Result<_, _>>()?;
                        Outcome::Deadlock(pids)
                    }
                    "fuel_exhausted" => Outcome::FuelExhausted,
                    _ => return Err(bad("unknown outcome")),
                });
            }
            "PRINT" => {
                let (pid, lit) = rest.split_once(' ').ok_or_else(|| bad("bad print"))?;
                prints.push(Print {
                    pid: pid.parse().map_err(|_| bad("bad pid"))?,
                    text: unquote(lit).ok_or_else(|| bad("bad string"))?,
                });
            }
            "CRASH" => {
                let (pid, rest) = rest.split_once(' ').ok_or_else(|| bad("bad crash"))?;
                let (value, trace) = split_value(rest).ok_or_else(|| bad("bad crash value"))?;
                crashes.push(CrashReport {
                    pid: pid.parse().map_err(|_| bad("bad pid"))?,
                    value: value.to_string(),
                    trace: trace.to_string(),
                });
            }
            "METER" => {
                let f: Vec<&str> = rest.split(' ').collect();
                let m = match f.as_slice() {
                    [p, r, a] => (kv(p, "pid"), kv(r, "red"), kv(a, "alloc")),
                    _ => return Err(bad("bad meter")),
                };
                let (Some(pid), Some(reductions), Some(alloc)) = m else {
                    return Err(bad("bad meter field"));
                };
                meters.push(Meter { pid, reductions, alloc });
            }
            "HOST" => {
                let mut h = HostMeters::default();
                for field in rest.split(' ') {
                    let (k, _) = field.split_once('=').ok_or_else(|| bad("bad host field"))?;
                    let v = kv(field, k).ok_or_else(|| bad("bad host value"))?;
                    match k {
                        "instrs" => h.instrs = v,
                        "red" => h.reductions = v,
                        "alloc" => h.alloc = v,
                        "depth" => h.depth = Some(v),
                        _ => return Err(bad("unknown host field")),
                    }
                }
                host = Some(h);
            }
            "" => {}
            _ => return Err(bad(&format!("unknown tag {tag}"))),
        }
    }
    let missing = |what: &str| ReportParseError { line: 0, message: format!("missing {what}") };
    Ok(RunReport {
        mode: mode.ok_or_else(|| missing("MODE"))?,
        outcome: outcome.ok_or_else(|| missing("OUTCOME"))?,
        prints,
        crashes,
        meters,
        host: host.ok_or_else(|| missing("HOST"))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample() -> RunReport {
        RunReport {
            mode: "bytecode".into(),
            outcome: Outcome::Crash { value: "\"e\"".into(), trace: "[(\"main\", 1)]".into() },
            prints: vec![Print { pid: 1, text: "hi \"there\"\nok".into() }],
            crashes: vec![CrashReport { pid: 0, value: "(1, \"a b\")".into(), trace: "[]".into() }],
            meters: vec![Meter { pid: 0, reductions: 12, alloc: 3 }],
            host: HostMeters { instrs: 11, reductions: 12, alloc: 3, depth: Some(7) },
        }
    }

    #[test]
    fn round_trip() {
        let r = sample();
        let text = r.serialize();
        assert_eq!(RunReport::parse(&text).unwrap(), r);
        assert!(text.starts_with("MODE bytecode\nOUTCOME crash \"e\" [(\"main\", 1)]\nPRINT 1 "));
    }

    #[test]
    fn value_splitting() {
        assert_eq!(split_value("\"a\\\" b\" rest"), Some(("\"a\\\" b\"", "rest")));
        assert_eq!(split_value("[(\"x)\", 1)] t"), Some(("[(\"x)\", 1)]", "t")));
        assert_eq!(split_value("<fun:f/1#0> x"), Some(("<fun:f/1#0>", "x")));
        assert_eq!(split_value("42"), Some(("42", "")));
    }

    #[test]
    fn deadlock_and_fuel() {
        let mut r = sample();
        r.outcome = Outcome::Deadlock(vec![0, 2]);
        assert_eq!(RunReport::parse(&r.serialize()).unwrap(), r);
        r.outcome = Outcome::FuelExhausted;
        assert_eq!(RunReport::parse(&r.serialize()).unwrap(), r);
    }
}
