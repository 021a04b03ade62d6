//! Differential harness and corpus runner for the guest language
//! self-emulator.

pub mod checklist;
pub mod corpus;
pub mod harness;
pub mod oracle;

use std::fmt::Write;
use std::path::Path;

use gl_core::selfemu::Hook;
use rayon::prelude::*;

use checklist::{checklist_report, ChecklistReport, CoverageError};
use corpus::{CorpusError, Kind};
use harness::{run_pair, run_unchecked, PairOptions, PairReport, UncheckedReport};

// Guest runs allocate many small values; the system allocator is a
// measurable share of run time.
#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

pub const EXIT_FAIL: i32 = 6;
pub const EXIT_COVERAGE: i32 = 7;

#[derive(Clone, Debug, Default)]
pub struct DifftestOptions {
    pub unhooked: Vec<Hook>,
    /// Cap for programs without their own fuel directive.
    pub fuel: Option<u64>,
    /// List per-opcode execution counts in the report.
    pub audit: bool,
}

pub struct Difftest {
    pub options: DifftestOptions,
    pub pairs: Vec<PairReport>,
    pub unchecked: Vec<UncheckedReport>,
    pub checklist: Result<ChecklistReport, CoverageError>,
}

/// Runs the whole corpus. Programs run in parallel; results keep corpus
/// order.
pub fn difftest(dir: &Path, options: DifftestOptions) -> Result<Difftest, CorpusError> {
    let entries = corpus::load(dir)?;
    let map = corpus::checklist_map(dir)?;
    let pair_opts = PairOptions { unhooked: options.unhooked.clone(), fuel: options.fuel };
    let (checked, rejected): (Vec<_>, Vec<_>) = entries.iter().partition(|e| e.kind != Kind::Unchecked);
    let pairs: Vec<PairReport> = checked.par_iter().map(|e| run_pair(e, &pair_opts)).collect();
    let unchecked: Vec<UncheckedReport> = rejected.par_iter().map(|e| run_unchecked(e, &pair_opts)).collect();
    let checklist = checklist_report(map.as_deref(), &pairs, &unchecked);
    Ok(Difftest { options, pairs, unchecked, checklist })
}

impl Difftest {
    /// 0 when everything holds, 6 on any failed comparison or undemonstrated
    /// row, 7 when the coverage guard trips.
    pub fn exit_code(&self) -> i32 {
        match &self.checklist {
            Err(_) => EXIT_COVERAGE,
            Ok(c) => {
                let ok = self.pairs.iter().all(PairReport::passed)
                    && self.unchecked.iter().all(UncheckedReport::passed)
                    && c.all_demonstrated();
                if ok {
                    0
                } else {
                    EXIT_FAIL
                }
            }
        }
    }

    fn sabotage(&self) -> String {
        if self.options.unhooked.is_empty() {
            "none".into()
        } else {
            self.options.unhooked.iter().map(|h| h.name()).collect::<Vec<_>>().join(",")
        }
    }

    /// Full canonical report: every pair, every unchecked run, the
    /// checklist.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        writeln!(out, "DIFFTEST sabotage={}", self.sabotage()).expect("writing to a string");
        for p in &self.pairs {
            out.push_str(&p.serialize());
        }
        for u in &self.unchecked {
            out.push_str(&u.serialize());
        }
        match &self.checklist {
            Ok(c) => out.push_str(&c.serialize(self.options.audit)),
            Err(e) => writeln!(out, "COVERAGE_GUARD {e}").expect("writing to a string"),
        }
        out
    }

    /// Lines describing each failure, first divergences only.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.pairs {
            let p = match &r.pair {
                Ok(p) => p,
                Err(e) => {
                    out.push(format!("{}: invalid: {}", r.id, e.lines().next().unwrap_or("")));
                    continue;
                }
            };
            for (label, w) in [("weak", &p.weak), ("modes", &p.modes)] {
                if let gl_core::compare::Weak::Fail(diffs) = w {
                    for d in diffs {
                        out.push(format!("{}: {label}: {d}", r.id));
                    }
                }
            }
            if let harness::Golden::Mismatch { line, expected, actual } = &p.golden {
                out.push(format!("{}: golden line {line}: expected {expected:?}, got {actual:?}", r.id));
            }
            if !p.depth_ok() {
                out.push(format!("{}: emulator depth {:?} exceeds {}", r.id, p.depth(), harness::DEPTH_BOUND));
            }
            if p.prefix.as_ref().is_some_and(|x| !x.ok) {
                out.push(format!("{}: scaled-fuel print trace is not an extension of the direct one", r.id));
            }
        }
        for u in &self.unchecked {
            if !u.passed() {
                out.push(format!("{}: not a checker divergence", u.id));
            }
        }
        match &self.checklist {
            Ok(c) => {
                for r in &c.rows {
                    if let checklist::Status::NotDemonstrated(ids) = &r.status {
                        out.push(format!("checklist row {:?} not demonstrated by {}", r.label, ids.join(",")));
                    }
                }
            }
            Err(e) => out.push(format!("coverage guard: {e}")),
        }
        out
    }

    /// One line per program plus the checklist rows.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(
            w,
            "{:<28} {:<6} {:<6} {:>9} {:>6} {:<8}",
            "program", "weak", "modes", "overhead", "depth", "golden"
        );
        for r in &self.pairs {
            match &r.pair {
                Err(_) => {
                    let _ = writeln!(w, "{:<28} invalid", r.id);
                }
                Ok(p) => {
                    let verdict = |v: &gl_core::compare::Weak| if v.is_pass() { "PASS" } else { "FAIL" };
                    let over = p.strong.overhead_reductions.map_or("n/a".to_string(), |x| format!("{x:.1}x"));
                    let depth = p.depth().map_or("-".to_string(), |d| d.to_string());
                    let golden = match p.golden {
                        harness::Golden::Match => "match",
                        harness::Golden::Missing => "missing",
                        harness::Golden::Mismatch { .. } => "MISMATCH",
                    };
                    let _ = writeln!(
                        w,
                        "{:<28} {:<6} {:<6} {:>9} {:>6} {:<8}",
                        r.id,
                        verdict(&p.weak),
                        verdict(&p.modes),
                        over,
                        depth,
                        golden
                    );
                }
            }
        }
        for u in &self.unchecked {
            let _ = writeln!(
                w,
                "{:<28} {}",
                u.id,
                if u.divergent() { "rejected, runs to a value" } else { "NOT DIVERGENT" }
            );
        }
        match &self.checklist {
            Ok(c) => {
                for r in &c.rows {
                    let status = match &r.status {
                        checklist::Status::Pass => "demonstrated-pass".to_string(),
                        checklist::Status::Gap { min, max } => format!("demonstrated-gap ({min:.1}x..{max:.1}x)"),
                        checklist::Status::OutOfScope(_) => "out-of-scope".to_string(),
                        checklist::Status::NotDemonstrated(_) => "NOT DEMONSTRATED".to_string(),
                    };
                    let _ = writeln!(w, "{} {:<42} {status}", r.table, r.label);
                }
            }
            Err(e) => {
                let _ = writeln!(w, "coverage guard failed: {e}");
            }
        }
        out
    }
}
