//! Acceptance criteria, one line each. Criterion 10 is a stretch goal and
//! never fails the run.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use gl_core::compare::compare_weak;
use gl_core::frontend::{compile_source, Module};
use gl_core::selfemu::{self, emulate_module, EmuOptions, Hook};
use gl_core::vm::{run_module, Outcome, RunOptions};
use gl_workbench::corpus::Kind;
use gl_workbench::harness::{Pair, PairReport, DEPTH_BOUND};
use gl_workbench::{difftest, oracle, Difftest, DifftestOptions};

type Verdict = Result<String, String>;

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn pairs(d: &Difftest) -> impl Iterator<Item = (&PairReport, &Pair)> {
    d.pairs.iter().filter_map(|r| r.pair.as_ref().ok().map(|p| (r, p)))
}

fn weak_suite(d: &Difftest, elapsed: Duration) -> Verdict {
    let mains = d.pairs.iter().filter(|r| r.kind == Kind::Main).count();
    let probes = d.pairs.iter().filter(|r| r.kind == Kind::Probe).count();
    let failing: Vec<&str> = d.pairs.iter().filter(|r| !r.weak_pass()).map(|r| r.id.as_str()).collect();
    let coverage = match &d.checklist {
        Ok(c) => c.opcodes.iter().filter(|&&n| n > 0).count(),
        Err(e) => return Err(format!("coverage guard: {e}")),
    };
    let detail = format!(
        "{mains} programs and {probes} probes, {coverage}/40 opcodes covered, difftest exit {}, {:.1}s",
        d.exit_code(),
        elapsed.as_secs_f64()
    );
    if mains < 25 || !failing.is_empty() || coverage != 40 || d.exit_code() != 0 || elapsed.as_secs() >= 60 {
        Err(format!("{detail}; weak failures: {failing:?}"))
    } else {
        Ok(detail)
    }
}

fn strong_gap(d: &Difftest) -> Verdict {
    let mut factors = Vec::new();
    let mut bad = Vec::new();
    for (r, p) in pairs(d) {
        if p.direct.host.instrs == 0 {
            continue;
        }
        if p.emulated.host.reductions > p.direct.host.reductions {
            factors.push(p.strong.overhead_reductions.unwrap_or(0.0));
        } else {
            bad.push(r.id.clone());
        }
    }
    let min = factors.iter().copied().fold(f64::INFINITY, f64::min);
    let max = factors.iter().copied().fold(0.0, f64::max);
    let detail = format!("{} programs, host reduction overhead {min:.1}x to {max:.1}x", factors.len());
    if bad.is_empty() && !factors.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; no overhead on {bad:?}"))
    }
}

fn mode_agreement(d: &Difftest) -> Verdict {
    let bad: Vec<&str> = pairs(d).filter(|(_, p)| !p.modes.is_pass()).map(|(r, _)| r.id.as_str()).collect();
    let n = pairs(d).count();
    if bad.is_empty() && n == d.pairs.len() {
        Ok(format!("{n} checked programs agree between bytecode and ast"))
    } else {
        Err(format!("disagreement or invalid programs: {bad:?}"))
    }
}

fn checker_divergence(d: &Difftest) -> Verdict {
    let ids: Vec<&str> = d.unchecked.iter().filter(|u| u.divergent()).map(|u| u.id.as_str()).collect();
    if ids.len() >= 2 {
        Ok(format!("rejected by check, value under ast-unchecked: {}", ids.join(", ")))
    } else {
        Err(format!("only {ids:?}"))
    }
}

fn sabotage_sensitivity() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_glwb");
    let mut seen = Vec::new();
    let mut bad = Vec::new();
    for hook in Hook::ALL {
        let out = Command::new(bin)
            .args(["difftest", "--sabotage", hook.name()])
            .arg(corpus_dir())
            .env_remove("GL_FUEL")
            .output()
            .map_err(|e| format!("cannot run glwb: {e}"))?;
        let stderr = String::from_utf8_lossy(&out.stderr);
        let probe_fails = stderr.lines().filter(|l| l.starts_with("FAIL probes/")).count();
        let code = out.status.code();
        if code == Some(6) && probe_fails > 0 {
            seen.push(format!("{} ({probe_fails} probe diffs)", hook.name()));
        } else {
            bad.push(format!("{} exit {code:?}, {probe_fails} probe diffs", hook.name()));
        }
    }
    if bad.is_empty() {
        Ok(format!("exit 6 with probe failures for {}", seen.join(", ")))
    } else {
        Err(bad.join("; "))
    }
}

/// Function names mentioned in a rendered trace like `[("f", 1), ("g", 2)]`.
fn trace_functions(trace: &str) -> Vec<&str> {
    trace.split("(\"").skip(1).filter_map(|s| s.split('"').next()).collect()
}

fn module_of(d: &Difftest, id: &str) -> Option<Module> {
    let path = corpus_dir().join(format!("{id}.gl"));
    let _ = d;
    compile_source(&std::fs::read_to_string(path).ok()?).ok()
}

fn fault_fidelity(d: &Difftest) -> Verdict {
    let mut kinds = BTreeSet::new();
    let mut bad = Vec::new();
    let mut count = 0;
    for (r, p) in pairs(d) {
        let crashed =
            matches!(p.direct.outcome, Outcome::Crash { .. } | Outcome::Deadlock(_)) || !p.direct.crashes.is_empty();
        if !crashed {
            continue;
        }
        count += 1;
        match &p.direct.outcome {
            Outcome::Crash { value, .. } if value.starts_with('"') => {
                kinds.insert(value.trim_matches('"').to_string());
            }
            Outcome::Crash { .. } => {
                kinds.insert("uncaught throw".to_string());
            }
            Outcome::Deadlock(_) => {
                kinds.insert("deadlock".to_string());
            }
            _ => {}
        }
        if p.direct.outcome != p.emulated.outcome || p.direct.crashes != p.emulated.crashes {
            bad.push(format!("{} differs", r.id));
            continue;
        }
        let Some(module) = module_of(d, &r.id) else {
            bad.push(format!("{} does not compile", r.id));
            continue;
        };
        let names: BTreeSet<&str> = module.functions.iter().map(|f| &*f.name).collect();
        let mut traces: Vec<&str> = p.emulated.crashes.iter().map(|c| c.trace.as_str()).collect();
        if let Outcome::Crash { trace, .. } = &p.emulated.outcome {
            traces.push(trace);
        }
        for t in traces {
            if let Some(f) = trace_functions(t).into_iter().find(|f| !names.contains(f)) {
                bad.push(format!("{} trace names non-guest frame {f:?}", r.id));
            }
        }
    }
    let required = ["arith_error", "match_error", "uncaught throw", "bad_pid", "deadlock"];
    let missing: Vec<&str> = required.iter().copied().filter(|k| !kinds.contains(*k)).collect();
    let detail = format!("{count} crashing programs, kinds {}", kinds.into_iter().collect::<Vec<_>>().join(", "));
    if bad.is_empty() && missing.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; problems {bad:?}; missing kinds {missing:?}"))
    }
}

fn explicit_stack(d: &Difftest) -> Verdict {
    let Some((_, p)) = pairs(d).find(|(r, _)| r.id == "deep_recursion") else {
        return Err("deep_recursion missing from the corpus".into());
    };
    let detail = format!(
        "depth 10000 recursion gives {} emulated, emulator host depth {:?} (bound {DEPTH_BOUND})",
        p.emulated.outcome,
        p.depth()
    );
    if p.weak.is_pass() && p.emulated.outcome == Outcome::Value("10000".into()) && p.depth_ok() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism(first: &Difftest) -> Verdict {
    let second = difftest(&corpus_dir(), DifftestOptions::default()).map_err(|e| e.to_string())?;
    let (a, b) = (first.serialize(), second.serialize());
    if a == b {
        Ok(format!("two difftest reports byte-identical ({} bytes)", a.len()))
    } else {
        let line = a.lines().zip(b.lines()).position(|(x, y)| x != y).map_or(0, |i| i + 1);
        Err(format!("reports differ at line {line}"))
    }
}

fn receive_oracle() -> Verdict {
    let start = Instant::now();
    let s = oracle::run();
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "{} arm lists x {} mailboxes = {} cases ({} blocking) in {secs:.2}s",
        s.arm_lists, s.mailboxes, s.cases, s.blocked
    );
    match s.mismatches.first() {
        None if secs <= 1.0 => Ok(detail),
        None => Err(format!("{detail}; over the 1s budget")),
        Some(m) => Err(format!("{detail}; {} mismatches, first: {m}", s.mismatches.len())),
    }
}

fn nested_emulation() -> Verdict {
    const FUEL: u64 = 100_000_000;
    let target = compile_source("fn main() = 42").map_err(|e| e.to_string())?;
    let direct = run_module(&target, RunOptions::default()).map_err(|e| e.to_string())?.report;
    let inner = compile_source(&selfemu::wrapper_source(selfemu::ASSET, &target, None)).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let outer = emulate_module(&inner, &EmuOptions { fuel: None, host_fuel: Some(FUEL), unhooked: Vec::new() })
        .map_err(|e| e.to_string())?;
    if outer.report.outcome == Outcome::FuelExhausted {
        return Err(format!("outer emulator ran out of {FUEL} host reductions"));
    }
    let result = selfemu::project(&outer.report, &target).map_err(|e| e.to_string())?;
    let detail = format!(
        "emulated emulator gives {} using {} host reductions in {:.1}s",
        result.outcome,
        outer.host.host.reductions,
        start.elapsed().as_secs_f64()
    );
    if compare_weak(&direct, &result).is_pass() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let start = Instant::now();
    let first = difftest(&corpus_dir(), DifftestOptions::default());
    let elapsed = start.elapsed();
    let first = match first {
        Ok(d) => d,
        Err(e) => {
            println!("acceptance: cannot load corpus: {e}");
            std::process::exit(1);
        }
    };
    let criteria: Vec<(u32, &str, Verdict)> = vec![
        (1, "weak emulation-completeness", weak_suite(&first, elapsed)),
        (2, "strong-incompleteness exhibit", strong_gap(&first)),
        (3, "mode agreement", mode_agreement(&first)),
        (4, "checker divergence", checker_divergence(&first)),
        (5, "sabotage sensitivity", sabotage_sensitivity()),
        (6, "fault fidelity", fault_fidelity(&first)),
        (7, "explicit-stack bound", explicit_stack(&first)),
        (8, "determinism", determinism(&first)),
        (9, "selective-receive oracle", receive_oracle()),
        (10, "nested emulation (stretch)", nested_emulation()),
    ];
    let mut failed = 0;
    for (n, name, verdict) in &criteria {
        match verdict {
            Ok(detail) => println!("criterion {n} PASS {name}: {detail}"),
            Err(detail) if *n == 10 => println!("criterion {n} FAIL (non-blocking) {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} blocking criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all blocking criteria passed");
}
