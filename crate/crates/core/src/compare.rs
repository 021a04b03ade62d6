//! Weak and strong comparison of a direct run against an emulated run.
//!
//! Weak comparison covers everything the guest can observe: outcome, the
//! print trace, crash reports and per-process meters. Host meters are left
//! out. Strong comparison looks only at host meters.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::vm::{HostMeters, RunReport};

/// First point where two reports part ways within one field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diff {
    pub field: String,
    pub direct: String,
    pub emulated: String,
}

impl fmt::Display for Diff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} direct={} emulated={}", self.field, self.direct, self.emulated)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Weak {
    Pass,
    /// One diff per diverging field, never empty.
    Fail(Vec<Diff>),
}

impl Weak {
    pub fn is_pass(&self) -> bool {
        matches!(self, Weak::Pass)
    }
}

const ABSENT: &str = "<none>";

fn first_divergence<T: PartialEq>(
    field: &str,
    direct: &[T],
    emulated: &[T],
    show: impl Fn(&T) -> String,
) -> Option<Diff> {
    let i = (0..direct.len().max(emulated.len())).find(|&i| direct.get(i) != emulated.get(i))?;
    let side = |v: Option<&T>| v.map_or_else(|| ABSENT.to_string(), &show);
    Some(Diff { field: format!("{field}[{i}]"), direct: side(direct.get(i)), emulated: side(emulated.get(i)) })
}

/// Field-by-field comparison of guest-visible observables.
pub fn compare_weak(direct: &RunReport, emulated: &RunReport) -> Weak {
    let mut diffs = Vec::new();
    if direct.outcome != emulated.outcome {
        diffs.push(Diff {
            field: "outcome".into(),
            direct: direct.outcome.to_string(),
            emulated: emulated.outcome.to_string(),
        });
    }
    diffs.extend(first_divergence("print", &direct.prints, &emulated.prints, |p| {
        format!("{} {}", p.pid, crate::value::quote(&p.text))
    }));
    diffs.extend(first_divergence("crash", &direct.crashes, &emulated.crashes, |c| {
        format!("{} {} {}", c.pid, c.value, c.trace)
    }));
    diffs.extend(first_divergence("meter", &direct.meters, &emulated.meters, |m| {
        format!("pid={} red={} alloc={}", m.pid, m.reductions, m.alloc)
    }));
    if diffs.is_empty() {
        Weak::Pass
    } else {
        Weak::Fail(diffs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Strong {
    /// Host meters differ in instructions, reductions or allocation.
    pub distinguishable: bool,
    /// Emulated host reductions over direct host reductions.
    pub overhead_reductions: Option<f64>,
    /// Emulated host allocation over direct host allocation.
    pub overhead_alloc: Option<f64>,
}

fn ratio(emulated: u64, direct: u64) -> Option<f64> {
    (direct > 0).then(|| emulated as f64 / direct as f64)
}

fn same_meters(a: &HostMeters, b: &HostMeters) -> bool {
    (a.instrs, a.reductions, a.alloc) == (b.instrs, b.reductions, b.alloc)
}

/// Comparison over host meters only.
pub fn compare_strong(direct: &RunReport, emulated: &RunReport) -> Strong {
    Strong {
        distinguishable: !same_meters(&direct.host, &emulated.host),
        overhead_reductions: ratio(emulated.host.reductions, direct.host.reductions),
        overhead_alloc: ratio(emulated.host.alloc, direct.host.alloc),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::{Meter, Outcome, Print};
    use alloc::vec;

    fn report() -> RunReport {
        RunReport {
            mode: "bytecode".into(),
            outcome: Outcome::Value("0".into()),
            prints: vec![Print { pid: 0, text: "a".into() }, Print { pid: 1, text: "b".into() }],
            crashes: Vec::new(),
            meters: vec![Meter { pid: 0, reductions: 9, alloc: 2 }],
            host: HostMeters { instrs: 8, reductions: 9, alloc: 2, depth: None },
        }
    }

    #[test]
    fn identical_reports_pass() {
        assert_eq!(compare_weak(&report(), &report()), Weak::Pass);
    }

    #[test]
    fn host_meters_and_mode_are_excluded() {
        let mut e = report();
        e.mode = "emulated".into();
        e.host = HostMeters { instrs: 900, reductions: 1000, alloc: 77, depth: Some(5) };
        assert_eq!(compare_weak(&report(), &e), Weak::Pass);
    }

    #[test]
    fn one_print_line_gives_one_diff() {
        let mut e = report();
        e.prints[1].text = "c".into();
        let Weak::Fail(diffs) = compare_weak(&report(), &e) else { panic!("expected a failure") };
        assert_eq!(diffs, [Diff { field: "print[1]".into(), direct: "1 \"b\"".into(), emulated: "1 \"c\"".into() }]);
    }

    #[test]
    fn missing_entries_show_as_absent() {
        let mut e = report();
        e.prints.pop();
        let Weak::Fail(diffs) = compare_weak(&report(), &e) else { panic!("expected a failure") };
        assert_eq!(diffs[0].emulated, ABSENT);
    }

    #[test]
    fn strong_verdict_follows_host_meters() {
        let s = compare_strong(&report(), &report());
        assert!(!s.distinguishable);
        assert_eq!(s.overhead_reductions, Some(1.0));
        let mut e = report();
        e.host.reductions = 90;
        let s = compare_strong(&report(), &e);
        assert!(s.distinguishable);
        assert_eq!(s.overhead_reductions, Some(10.0));
    }

    #[test]
    fn depth_alone_does_not_distinguish() {
        let mut e = report();
        e.host.depth = Some(3);
        assert!(!compare_strong(&report(), &e).distinguishable);
    }
}
