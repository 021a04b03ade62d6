//! Runs each program directly and under the self-emulator, and compares.

use std::fmt::{self, Write};

use gl_core::compare::{compare_strong, compare_weak, Diff, Strong, Weak};
use gl_core::frontend::{self, Module, OPCODES};
use gl_core::selfemu::{emulate_module, EmuOptions, Hook};
use gl_core::vm::{self, Mode, Outcome, Print, RunOptions, RunReport};

use crate::corpus::{Entry, Kind};

/// Largest host call depth the emulator may reach.
pub const DEPTH_BOUND: u64 = 64;

#[derive(Clone, Debug, Default)]
pub struct PairOptions {
    /// Hooks stripped from the emulator build.
    pub unhooked: Vec<Hook>,
    /// Cap for programs without their own fuel directive.
    pub fuel: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Golden {
    Match,
    Missing,
    /// First differing line.
    Mismatch {
        line: usize,
        expected: String,
        actual: String,
    },
}

impl Golden {
    pub fn check(expect: Option<&str>, actual: &str) -> Golden {
        let Some(expect) = expect else { return Golden::Missing };
        if expect == actual {
            return Golden::Match;
        }
        let (mut e, mut a) = (expect.lines(), actual.lines());
        let mut line = 1;
        loop {
            match (e.next(), a.next()) {
                (x, y) if x != y => {
                    return Golden::Mismatch {
                        line,
                        expected: x.unwrap_or("<end>").to_string(),
                        actual: y.unwrap_or("<end>").to_string(),
                    }
                }
                (None, None) => {
                    return Golden::Mismatch { line, expected: "<trailing text>".into(), actual: "<end>".into() }
                }
                _ => line += 1,
            }
        }
    }

    fn ok(&self) -> bool {
        !matches!(self, Golden::Mismatch { .. })
    }
}

/// Fuel scaling for a program with a fuel directive: the emulator runs
/// uncapped in guest terms, under a host cap of the guest fuel times a
/// ceiling on the measured overhead. The direct prints must be a prefix of
/// what the emulated guest printed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prefix {
    pub ceiling: u64,
    pub host_fuel: u64,
    pub direct_prints: usize,
    pub scaled_prints: usize,
    pub ok: bool,
}

#[derive(Clone, Debug)]
pub struct Pair {
    pub direct: RunReport,
    pub ast: RunReport,
    pub emulated: RunReport,
    pub weak: Weak,
    /// Bytecode against the AST evaluator.
    pub modes: Weak,
    pub strong: Strong,
    pub golden: Golden,
    pub prefix: Option<Prefix>,
    pub opcodes: [u64; OPCODES.len()],
}

impl Pair {
    pub fn depth(&self) -> Option<u64> {
        self.emulated.host.depth
    }

    pub fn depth_ok(&self) -> bool {
        self.depth().is_some_and(|d| d <= DEPTH_BOUND)
    }

    pub fn passed(&self) -> bool {
        self.weak.is_pass()
            && self.modes.is_pass()
            && self.golden.ok()
            && self.depth_ok()
            && self.prefix.as_ref().is_none_or(|p| p.ok)
    }
}

#[derive(Clone, Debug)]
pub struct PairReport {
    pub id: String,
    pub kind: Kind,
    pub fuel: Option<u64>,
    /// `Err` holds the front-end error of a program that does not compile.
    pub pair: Result<Pair, String>,
}

impl PairReport {
    pub fn passed(&self) -> bool {
        self.pair.as_ref().is_ok_and(Pair::passed)
    }

    pub fn weak_pass(&self) -> bool {
        self.pair.as_ref().is_ok_and(|p| p.weak.is_pass())
    }
}

/// A program the checker rejects, run on the unchecked evaluator.
#[derive(Clone, Debug)]
pub struct UncheckedReport {
    pub id: String,
    /// The checker's complaint, or `None` if it accepted the program.
    pub rejection: Option<String>,
    /// Unchecked run, or the parse error that prevented it.
    pub run: Result<RunReport, String>,
    pub golden: Golden,
}

impl UncheckedReport {
    /// Rejected by the checker, yet runs to a value.
    pub fn divergent(&self) -> bool {
        self.rejection.is_some() && matches!(self.run, Ok(RunReport { outcome: Outcome::Value(_), .. }))
    }

    pub fn passed(&self) -> bool {
        self.divergent() && self.golden.ok()
    }
}

fn emulator_failure(direct: &RunReport, error: &dyn fmt::Display) -> Weak {
    Weak::Fail(vec![Diff { field: "emulator".into(), direct: direct.outcome.to_string(), emulated: error.to_string() }])
}

fn failed_run(mode: &str, error: &dyn fmt::Display) -> RunReport {
    RunReport {
        mode: mode.to_string(),
        outcome: Outcome::Crash { value: format!("{:?}", error.to_string()), trace: "[]".into() },
        prints: Vec::new(),
        crashes: Vec::new(),
        meters: Vec::new(),
        host: Default::default(),
    }
}

fn is_prefix(short: &[Print], long: &[Print]) -> bool {
    short.len() <= long.len() && short == &long[..short.len()]
}

fn scaled_prefix(module: &Module, fuel: u64, direct: &RunReport, emulated: &RunReport, unhooked: &[Hook]) -> Prefix {
    let ceiling = emulated.host.reductions.div_ceil(fuel.max(1)) + 1;
    let host_fuel = fuel.saturating_mul(ceiling);
    let opts = EmuOptions { fuel: None, host_fuel: Some(host_fuel), unhooked: unhooked.to_vec() };
    let (scaled_prints, ok) = match emulate_module(module, &opts) {
        Ok(run) => (run.report.prints.len(), is_prefix(&direct.prints, &run.report.prints)),
        Err(_) => (0, false),
    };
    Prefix { ceiling, host_fuel, direct_prints: direct.prints.len(), scaled_prints, ok }
}

/// Compiles once, runs bytecode, the AST evaluator and the emulator, and
/// compares the runs.
pub fn run_pair(entry: &Entry, opts: &PairOptions) -> PairReport {
    let fuel = entry.fuel.or(opts.fuel);
    let report = |pair| PairReport { id: entry.id.clone(), kind: entry.kind, fuel, pair };
    let module = match frontend::compile_source(&entry.source) {
        Ok(m) => m,
        Err(e) => return report(Err(e.to_string())),
    };
    let run_opts = RunOptions { fuel, audit: true };
    let (direct, opcodes) = match vm::run_module(&module, run_opts) {
        Ok(ex) => (ex.report, ex.audit.map(|a| a.opcodes).unwrap_or([0; OPCODES.len()])),
        Err(e) => return report(Err(e.to_string())),
    };
    let ast = match vm::run_source(&entry.source, Mode::Ast, RunOptions { fuel, audit: false }) {
        Ok(ex) => ex.report,
        Err(e) => failed_run(Mode::Ast.name(), &e),
    };
    let modes = compare_weak(&direct, &ast);
    let emu_opts = EmuOptions { fuel, host_fuel: None, unhooked: opts.unhooked.clone() };
    let (emulated, weak) = match emulate_module(&module, &emu_opts) {
        Ok(run) => {
            let weak = compare_weak(&direct, &run.report);
            (run.report, weak)
        }
        Err(e) => (failed_run(gl_core::selfemu::MODE, &e), emulator_failure(&direct, &e)),
    };
    let strong = compare_strong(&direct, &emulated);
    let golden = Golden::check(entry.expect.as_deref(), &direct.serialize());
    let prefix = entry.fuel.map(|f| scaled_prefix(&module, f, &direct, &emulated, &opts.unhooked));
    report(Ok(Pair { direct, ast, emulated, weak, modes, strong, golden, prefix, opcodes }))
}

pub fn run_unchecked(entry: &Entry, opts: &PairOptions) -> UncheckedReport {
    let fuel = entry.fuel.or(opts.fuel);
    let rejection = frontend::check_source(&entry.source).err().map(|e| e.to_string());
    let run = vm::run_source(&entry.source, Mode::AstUnchecked, RunOptions { fuel, audit: false })
        .map(|ex| ex.report)
        .map_err(|e| e.to_string());
    let golden = match &run {
        Ok(r) => Golden::check(entry.expect.as_deref(), &r.serialize()),
        Err(_) => Golden::Missing,
    };
    UncheckedReport { id: entry.id.clone(), rejection, run, golden }
}

fn ratio(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"))
}

fn write_weak(out: &mut String, label: &str, w: &Weak) -> fmt::Result {
    match w {
        Weak::Pass => writeln!(out, "{label} PASS"),
        Weak::Fail(diffs) => {
            writeln!(out, "{label} FAIL")?;
            for d in diffs {
                writeln!(out, "DIFF {d}")?;
            }
            Ok(())
        }
    }
}

fn write_report(out: &mut String, tag: &str, r: &RunReport) -> fmt::Result {
    for line in r.serialize().lines() {
        writeln!(out, "{tag} {line}")?;
    }
    Ok(())
}

fn write_golden(out: &mut String, g: &Golden) -> fmt::Result {
    match g {
        Golden::Match => writeln!(out, "GOLDEN match"),
        Golden::Missing => writeln!(out, "GOLDEN missing"),
        Golden::Mismatch { line, expected, actual } => {
            writeln!(out, "GOLDEN mismatch line={line} expected={expected:?} actual={actual:?}")
        }
    }
}

impl PairReport {
    pub fn probe_class(&self) -> Option<&'static str> {
        (self.kind == Kind::Probe).then(|| if self.weak_pass() { "masked" } else { "detected" })
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        self.write(&mut out).expect("writing to a string");
        out
    }

    fn write(&self, out: &mut String) -> fmt::Result {
        writeln!(out, "PAIR {}", self.id)?;
        writeln!(out, "KIND {}", self.kind.name())?;
        if let Some(f) = self.fuel {
            writeln!(out, "FUEL {f}")?;
        }
        let p = match &self.pair {
            Ok(p) => p,
            Err(e) => {
                for line in e.lines() {
                    writeln!(out, "INVALID {line}")?;
                }
                return writeln!(out, "END");
            }
        };
        write_weak(out, "WEAK", &p.weak)?;
        write_weak(out, "MODES", &p.modes)?;
        let s = &p.strong;
        let verdict = if s.distinguishable { "DISTINGUISHABLE" } else { "INDISTINGUISHABLE" };
        writeln!(
            out,
            "STRONG {verdict} overhead_red={} overhead_alloc={}",
            ratio(s.overhead_reductions),
            ratio(s.overhead_alloc)
        )?;
        if let Some(class) = self.probe_class() {
            writeln!(out, "PROBE {class}")?;
        }
        write_golden(out, &p.golden)?;
        match p.depth() {
            Some(d) => writeln!(out, "DEPTH {d} bound={DEPTH_BOUND}")?,
            None => writeln!(out, "DEPTH none bound={DEPTH_BOUND}")?,
        }
        if let Some(x) = &p.prefix {
            writeln!(
                out,
                "PREFIX ceiling={} host_fuel={} direct_prints={} scaled_prints={} {}",
                x.ceiling,
                x.host_fuel,
                x.direct_prints,
                x.scaled_prints,
                if x.ok { "ok" } else { "broken" }
            )?;
        }
        write_report(out, "DIRECT", &p.direct)?;
        write_report(out, "EMULATED", &p.emulated)?;
        writeln!(out, "END")
    }
}

impl UncheckedReport {
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        self.write(&mut out).expect("writing to a string");
        out
    }

    fn write(&self, out: &mut String) -> fmt::Result {
        writeln!(out, "UNCHECKED {}", self.id)?;
        match &self.rejection {
            Some(e) => {
                for line in e.lines() {
                    writeln!(out, "REJECTED {line}")?;
                }
            }
            None => writeln!(out, "ACCEPTED")?,
        }
        writeln!(out, "DIVERGENT {}", if self.divergent() { "yes" } else { "no" })?;
        write_golden(out, &self.golden)?;
        match &self.run {
            Ok(r) => write_report(out, "RUN", r)?,
            Err(e) => writeln!(out, "RUN error {e}")?,
        }
        writeln!(out, "END")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn entry(id: &str, kind: Kind, source: &str) -> Entry {
        Entry {
            id: id.into(),
            kind,
            source: source.into(),
            fuel: crate::corpus::fuel_directive(source).unwrap(),
            expect: None,
            path: PathBuf::from(format!("{id}.gl")),
        }
    }

    #[test]
    fn trivial_program_passes_with_overhead() {
        let r = run_pair(&entry("t", Kind::Main, "fn main() = 42"), &PairOptions::default());
        assert!(r.passed());
        let p = r.pair.unwrap();
        assert!(p.strong.distinguishable);
        assert!(p.strong.overhead_reductions.unwrap() > 1.0);
        assert_eq!(p.golden, Golden::Missing);
    }

    #[test]
    fn sabotaged_clock_fails_on_the_reading() {
        let opts = PairOptions { unhooked: vec![Hook::Clock], fuel: None };
        let r = run_pair(&entry("p", Kind::Probe, "fn main() = vtime()"), &opts);
        assert_eq!(r.probe_class(), Some("detected"));
        let Weak::Fail(diffs) = r.pair.unwrap().weak else { panic!("expected a failure") };
        assert_eq!(diffs[0].field, "outcome");
        assert_eq!(diffs[0].direct, "value 2");
    }

    #[test]
    fn compile_errors_are_invalid_not_verdicts() {
        let r = run_pair(&entry("bad", Kind::Main, "fn main() = nope"), &PairOptions::default());
        assert!(r.pair.is_err());
        assert!(!r.passed());
        assert!(r.serialize().contains("INVALID line 1"));
    }

    #[test]
    fn fuel_programs_get_a_prefix_check() {
        let src = "# fuel: 500\nfn t(n) = let u = print(\"x\") in t(n + 1)\nfn main() = t(0)";
        let r = run_pair(&entry("loop", Kind::Main, src), &PairOptions::default());
        let p = r.pair.as_ref().unwrap();
        let x = p.prefix.as_ref().unwrap();
        assert!(x.ok && x.scaled_prints >= x.direct_prints && x.direct_prints > 0);
        assert!(r.passed());
    }

    #[test]
    fn golden_reports_first_differing_line() {
        assert_eq!(Golden::check(Some("a\nb\n"), "a\nb\n"), Golden::Match);
        assert_eq!(
            Golden::check(Some("a\nb\n"), "a\nc\n"),
            Golden::Mismatch { line: 2, expected: "b".into(), actual: "c".into() }
        );
        assert_eq!(
            Golden::check(Some("a\n"), "a\nc\n"),
            Golden::Mismatch { line: 2, expected: "<end>".into(), actual: "c".into() }
        );
    }

    #[test]
    fn unchecked_divergence() {
        let r =
            run_unchecked(&entry("u", Kind::Unchecked, "fn f(a, a) = a\nfn main() = f(1, 2)"), &PairOptions::default());
        assert!(r.divergent());
        let r = run_unchecked(&entry("u", Kind::Unchecked, "fn main() = 1"), &PairOptions::default());
        assert!(!r.divergent());
    }
}
