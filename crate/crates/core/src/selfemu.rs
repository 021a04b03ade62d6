//! The self-emulator asset and the host side of its protocol.
//!
//! The asset is a guest program. A generated wrapper splices a reified
//! module into it as a literal; running the wrapper emulates that module.
//! The emulator reports everything through `print`, using lines with the
//! reserved `#emu:` prefix, which [`project`] turns back into a report.

use alloc::format;
use alloc::rc::Rc;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::frontend::{self, reify, FrontendError, Module};
use crate::value::{format_value, to_source, Closure, Value};
use crate::vm::{self, CrashReport, HostError, HostMeters, Meter, Outcome, Print, RunOptions, RunReport};

/// Source of the emulator, with every hook enabled.
pub const ASSET: &str = include_str!("../assets/selfemu.gl");

/// Mode name carried by projected reports.
pub const MODE: &str = "emulated";

const PREFIX: &str = "#emu:";

/// An observable the emulator virtualizes instead of reading from the host.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Hook {
    Clock,
    Memory,
    Stacktrace,
    FunId,
    SysInfo,
}

impl Hook {
    pub const ALL: [Hook; 5] = [Hook::Clock, Hook::Memory, Hook::Stacktrace, Hook::FunId, Hook::SysInfo];

    pub fn name(self) -> &'static str {
        match self {
            Hook::Clock => "clock",
            Hook::Memory => "memory",
            Hook::Stacktrace => "stacktrace",
            Hook::FunId => "fun_id",
            Hook::SysInfo => "sys_info",
        }
    }

    pub fn from_name(name: &str) -> Option<Hook> {
        Hook::ALL.into_iter().find(|h| h.name() == name)
    }
}

/// The asset's hook markers are out of shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssetError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for AssetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "selfemu asset line {}: {}", self.line, self.message)
    }
}

/// Emulator source with the listed hooks replaced by their unhooked
/// fallbacks. Sections are delimited by `#@hook NAME`, `#@unhooked` and
/// `#@end`; dropped lines are blanked so line numbers survive.
pub fn source_variant(asset: &str, unhooked: &[Hook]) -> Result<String, AssetError> {
    enum State {
        Plain,
        Hooked(bool),
        Unhooked(bool),
    }
    let mut state = State::Plain;
    let mut out = String::with_capacity(asset.len());
    for (i, line) in asset.lines().enumerate() {
        let bad = |message: &str| AssetError { line: i + 1, message: message.to_string() };
        let marker = line.trim_start();
        let keep = if let Some(name) = marker.strip_prefix("#@hook ") {
            let State::Plain = state else { return Err(bad("nested hook section")) };
            let hook = Hook::from_name(name.trim()).ok_or_else(|| bad("unknown hook"))?;
            state = State::Hooked(unhooked.contains(&hook));
            true
        } else if marker.starts_with("#@unhooked") {
            let State::Hooked(off) = state else { return Err(bad("unhooked outside a hook section")) };
            state = State::Unhooked(off);
            true
        } else if marker.starts_with("#@end") {
            let State::Unhooked(_) = state else { return Err(bad("end outside a hook section")) };
            state = State::Plain;
            true
        } else {
            match state {
                State::Plain => true,
                State::Hooked(off) => !off,
                State::Unhooked(off) => off,
            }
        };
        if keep {
            out.push_str(line);
        }
        out.push('\n');
    }
    match state {
        State::Plain => Ok(out),
        _ => Err(AssetError { line: asset.lines().count(), message: "unterminated hook section".into() }),
    }
}

/// Emulator source plus a `main` that emulates `module`, optionally capped
/// at `fuel` emulated reductions.
pub fn wrapper_source(emulator: &str, module: &Module, fuel: Option<u64>) -> String {
    let lit = to_source(&reify(module)).expect("reified modules are plain literals");
    match fuel {
        Some(f) => format!("{emulator}\nfn main() = emu_main_fuel({lit}, {f})\n"),
        None => format!("{emulator}\nfn main() = emu_main({lit})\n"),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EmuOptions {
    /// Cap on emulated reductions, enforced by the emulator.
    pub fuel: Option<u64>,
    /// Cap on the host run of the emulator itself.
    pub host_fuel: Option<u64>,
    pub unhooked: Vec<Hook>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EmuError {
    /// The guest program failed the front end.
    Frontend(FrontendError),
    /// The emulator asset did not build.
    Asset(String),
    Host(HostError),
    /// The emulator stopped without a well-formed report.
    Protocol(String),
}

impl fmt::Display for EmuError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmuError::Frontend(e) => e.fmt(f),
            EmuError::Asset(m) => write!(f, "selfemu asset: {m}"),
            EmuError::Host(e) => e.fmt(f),
            EmuError::Protocol(m) => write!(f, "emulator protocol: {m}"),
        }
    }
}

pub struct Emulation {
    /// Guest-visible observables recovered from the emulator's output, with
    /// the emulator's own meters as host meters.
    pub report: RunReport,
    /// The raw run of the emulator.
    pub host: RunReport,
}

/// Compiles the emulator for `unhooked` around `module` and runs it.
pub fn emulate_module(module: &Module, opts: &EmuOptions) -> Result<Emulation, EmuError> {
    let emulator = source_variant(ASSET, &opts.unhooked).map_err(|e| EmuError::Asset(e.to_string()))?;
    let wrapper = wrapper_source(&emulator, module, opts.fuel);
    let compiled = frontend::compile_source(&wrapper).map_err(|e| EmuError::Asset(e.to_string()))?;
    let run = vm::run_module(&compiled, RunOptions { fuel: opts.host_fuel, audit: false }).map_err(EmuError::Host)?;
    let report = project(&run.report, module)?;
    Ok(Emulation { report, host: run.report })
}

pub fn emulate_source(source: &str, opts: &EmuOptions) -> Result<Emulation, EmuError> {
    let module = frontend::compile_source(source).map_err(EmuError::Frontend)?;
    emulate_module(&module, opts)
}

/// Rebuilds the emulated run's report from the emulator's printed output.
///
/// When the host run was cut short by host fuel the report carries the
/// prints seen so far, outcome `fuel_exhausted` and no meters.
pub fn project(host: &RunReport, module: &Module) -> Result<RunReport, EmuError> {
    let mut lines = host.prints.iter().map(|p| p.text.as_str());
    let mut report = RunReport {
        mode: MODE.to_string(),
        outcome: Outcome::FuelExhausted,
        prints: Vec::new(),
        crashes: Vec::new(),
        meters: Vec::new(),
        host: HostMeters { depth: None, ..host.host },
    };
    let mut outcome = None;
    let mut done = false;
    let truncated = host.outcome == Outcome::FuelExhausted;
    loop {
        match next_entry(&mut lines, module, &mut report, &mut outcome, &mut done) {
            Ok(true) => {}
            Ok(false) => break,
            // A host fuel cap may stop the emulator mid-entry.
            Err(_) if truncated => break,
            Err(e) => return Err(e),
        }
    }
    match (&host.outcome, outcome, done) {
        (Outcome::Value(_), Some(o), true) => report.outcome = o,
        (Outcome::FuelExhausted, None, false) => {}
        (Outcome::Crash { value, trace }, _, _) => {
            return Err(protocol(format!("emulator crashed with {value} at {trace}")))
        }
        (o, _, _) => return Err(protocol(format!("emulator ended with {o} before its footer"))),
    }
    Ok(report)
}

/// Consumes one footer entry. Returns `false` at the end of the output.
fn next_entry<'a, I: Iterator<Item = &'a str>>(
    lines: &mut I,
    module: &Module,
    report: &mut RunReport,
    outcome: &mut Option<Outcome>,
    done: &mut bool,
) -> Result<bool, EmuError> {
    {
        let Some(line) = lines.next() else { return Ok(false) };
        let body = line.strip_prefix(PREFIX).ok_or_else(|| protocol(format!("unexpected output line {line:?}")))?;
        let (tag, rest) = body.split_once(' ').unwrap_or((body, ""));
        match tag {
            "print" => {
                let pid = number(rest)?;
                let text = lines.next().ok_or_else(|| protocol("print without payload".into()))?;
                report.prints.push(Print { pid, text: text.to_string() });
            }
            "crash" => {
                let pid = number(rest)?;
                let value = format_value(&read_value(lines, module)?);
                let trace = format_value(&read_value(lines, module)?);
                report.crashes.push(CrashReport { pid, value, trace });
            }
            "outcome" => {
                *outcome = Some(match rest {
                    "value" => Outcome::Value(format_value(&read_value(lines, module)?)),
                    "crash" => {
                        let value = format_value(&read_value(lines, module)?);
                        let trace = format_value(&read_value(lines, module)?);
                        Outcome::Crash { value, trace }
                    }
                    "deadlock" => {
                        let pids = read_value(lines, module)?;
                        let pids = pids
                            .as_list()
                            .ok_or_else(|| protocol("deadlock pids".into()))?
                            .iter()
                            .map(|v| v.as_int().map(|n| n as u64).ok_or_else(|| protocol("deadlock pid".into())))
                            .collect::<Result<Vec<_>, _>>()?;
                        Outcome::Deadlock(pids)
                    }
                    "fuel_exhausted" => Outcome::FuelExhausted,
                    other => return Err(protocol(format!("unknown outcome {other:?}"))),
                });
            }
            "meter" => {
                let f: Vec<&str> = rest.split(' ').collect();
                let [pid, red, alloc] = f.as_slice() else { return Err(protocol("meter fields".into())) };
                report.meters.push(Meter { pid: number(pid)?, reductions: number(red)?, alloc: number(alloc)? });
            }
            "depth" => report.host.depth = Some(number(rest)?),
            "done" => *done = true,
            other => return Err(protocol(format!("unknown tag {other:?}"))),
        }
    }
    Ok(true)
}

fn protocol(message: String) -> EmuError {
    EmuError::Protocol(message)
}

fn number<T: core::str::FromStr>(s: &str) -> Result<T, EmuError> {
    s.parse().map_err(|_| protocol(format!("bad number {s:?}")))
}

/// Reads one value from its token lines.
fn read_value<'a, I: Iterator<Item = &'a str>>(lines: &mut I, module: &Module) -> Result<Value, EmuError> {
    let line = lines.next().ok_or_else(|| protocol("missing value".into()))?;
    let body = line.strip_prefix(PREFIX).ok_or_else(|| protocol(format!("bad value line {line:?}")))?;
    let (tag, rest) = body.split_once(' ').unwrap_or((body, ""));
    Ok(match tag {
        "i" => Value::Int(number(rest)?),
        "b" => Value::Bool(number(rest)?),
        "s" => Value::str(lines.next().ok_or_else(|| protocol("string without payload".into()))?),
        "u" => Value::Unit,
        "t" => Value::tuple(read_items(lines, module, number(rest)?)?),
        "l" => Value::list(read_items(lines, module, number(rest)?)?),
        "c" => {
            let (f, id) = rest.split_once(' ').ok_or_else(|| protocol("closure fields".into()))?;
            let func: usize = number(f)?;
            let def = module.functions.get(func).ok_or_else(|| protocol("closure function".into()))?;
            Value::Closure(Rc::new(Closure {
                func,
                name: def.name.clone(),
                arity: def.arity,
                captures: vec![],
                id: number(id)?,
                owner: 0,
            }))
        }
        "p" => Value::Pid(number(rest)?),
        "r" => Value::Ref(number(rest)?),
        other => return Err(protocol(format!("unknown value tag {other:?}"))),
    })
}

fn read_items<'a, I: Iterator<Item = &'a str>>(
    lines: &mut I,
    module: &Module,
    n: usize,
) -> Result<Vec<Value>, EmuError> {
    (0..n).map(|_| read_value(lines, module)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asset_variants_build() {
        for hook in Hook::ALL {
            let src = source_variant(ASSET, &[hook]).unwrap();
            assert_eq!(src.lines().count(), ASSET.lines().count());
            let m = frontend::compile_source("fn main() = 0").unwrap();
            let wrapped = wrapper_source(&src, &m, None);
            assert!(frontend::check_source(&wrapped).is_ok(), "{}", hook.name());
        }
    }

    #[test]
    fn markers_must_nest() {
        assert!(source_variant("#@hook clock\nx\n", &[]).is_err());
        assert!(source_variant("#@unhooked\n", &[]).is_err());
        assert!(source_variant("#@hook nope\n#@unhooked\n#@end\n", &[]).is_err());
    }

    #[test]
    fn sections_select_by_hook() {
        let asset = "a\n#@hook clock\nh\n#@unhooked\nu\n#@end\nb\n";
        assert_eq!(source_variant(asset, &[]).unwrap(), "a\n#@hook clock\nh\n#@unhooked\n\n#@end\nb\n");
        assert_eq!(source_variant(asset, &[Hook::Clock]).unwrap(), "a\n#@hook clock\n\n#@unhooked\nu\n#@end\nb\n");
    }
}
