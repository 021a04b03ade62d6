use gl_core::vm::{run_source, Mode, Outcome, RunOptions};

fn run(src: &str, mode: Mode) -> gl_core::vm::RunReport {
    run_source(src, mode, RunOptions::default()).expect("runs").report
}

/// Runs in both checked modes, asserts they agree and returns the report.
fn agree(src: &str) -> gl_core::vm::RunReport {
    let b = run(src, Mode::Bytecode);
    let mut a = run(src, Mode::Ast);
    a.mode = b.mode.clone();
    a.host = b.host;
    assert_eq!(b.serialize(), a.serialize(), "modes disagree on {src}");
    b
}

fn value(src: &str) -> String {
    match agree(src).outcome {
        Outcome::Value(v) => v,
        other => panic!("expected a value, got {other:?}"),
    }
}

#[test]
fn constant() {
    assert_eq!(value("fn main() = 42"), "42");
}

#[test]
fn division_by_zero_crashes_with_trace() {
    let r = agree("fn main() = 1/0");
    assert_eq!(r.outcome, Outcome::Crash { value: "\"arith_error\"".into(), trace: "[(\"main\", 1)]".into() });
}

#[test]
fn vtime_counts_entry_and_builtin() {
    assert_eq!(value("fn main() = vtime()"), "2");
}

#[test]
fn stacktrace_in_main() {
    assert_eq!(value("fn main() = stacktrace()"), "[(\"main\", 1)]");
}

#[test]
fn spawn_send_receive() {
    let r = agree("fn main() = let p = spawn(fn () -> receive { 1 -> print(\"hi\") }) in send(p, 1)");
    assert_eq!(r.outcome, Outcome::Value("1".into()));
    assert_eq!(r.prints.len(), 1);
    assert_eq!((r.prints[0].pid, r.prints[0].text.as_str()), (1, "hi"));
}

#[test]
fn host_map_cases() {
    assert_eq!(value("fn main() = host_map([1, 2, 3], fn (x) -> x * 2)"), "[2, 4, 6]");
    assert_eq!(value("fn main() = host_map([], fn (x) -> throw(\"never\"))"), "[]");
    let r = agree("fn main() =\n  host_map([1],\n    fn (x) -> throw(\"e\"))");
    assert_eq!(
        r.outcome,
        Outcome::Crash { value: "\"e\"".into(), trace: "[(\"main.lambda0\", 3), (\"main\", 2)]".into() }
    );
}

#[test]
fn send_to_finished_process_is_bad_pid() {
    let src = "fn main() =\n  let p = spawn(fn () -> 0) in\n  let w = receive { x -> x } in\n  send(p, 1)";
    // main blocks forever: the child exits, nobody sends.
    assert_eq!(agree(src).outcome, Outcome::Deadlock(vec![0]));
    let src = "fn wait(n) = if n == 0 then 0 else wait(n - 1)\n\
               fn main() =\n  let p = spawn(fn () -> 0) in\n  let w = wait(200) in\n  send(p, 1)";
    assert_eq!(agree(src).outcome, Outcome::Crash { value: "\"bad_pid\"".into(), trace: "[(\"main\", 5)]".into() });
}

#[test]
fn try_catch_binds_value_and_trace() {
    let src = "fn f(x) = throw(x)\nfn main() = try f(7) catch (e, t) -> (e, t)";
    assert_eq!(value(src), "(7, [(\"f\", 1), (\"main\", 2)])");
}

#[test]
fn nested_handlers_unwind_innermost_first() {
    let src = "fn main() = try (try throw(1) catch (e, t) -> throw(e + 1)) catch (e, t) -> e * 10";
    assert_eq!(value(src), "20");
}

#[test]
fn match_patterns() {
    let src = "fn sum(l) = match l { [] -> 0, x :: rest -> x + sum(rest) }\n\
               fn main() = (sum([1, 2, 3]), match (1, [2, 3]) { (1, [a]) -> a, (x, y :: _) if x < y -> y, _ -> 0 })";
    assert_eq!(value(src), "(6, 2)");
    let r = agree("fn main() = match 1 { 2 -> 0 }");
    assert_eq!(r.outcome, Outcome::Crash { value: "\"match_error\"".into(), trace: "[(\"main\", 1)]".into() });
}

#[test]
fn closures_capture_by_value_and_number_in_creation_order() {
    let src = "fn main() =\n  let a = 1 in\n  let f = fn (x) -> x + a in\n  let g = fn () -> a in\n  (f(2), g(), fun_id(f), fun_id(g), f == g, f == f)";
    assert_eq!(value(src), "(3, 1, 0, 1, false, true)");
    assert_eq!(value("fn add(a, b) = a + b\nfn main() = add"), "<fun:add/2#0>");
}

#[test]
fn overflow_is_an_error() {
    let r = agree("fn main() = 9223372036854775807 + 1");
    assert!(matches!(r.outcome, Outcome::Crash { ref value, .. } if value == "\"arith_error\""));
}

#[test]
fn type_errors_are_catchable() {
    assert_eq!(value("fn main() = try 1 + \"a\" catch (e, t) -> e"), "\"type_error\"");
    assert_eq!(value("fn main() = try print(1) catch (e, t) -> e"), "\"type_error\"");
    assert_eq!(value("fn main() = try (fn (x) -> x)() catch (e, t) -> e"), "\"arity_error\"");
}

#[test]
fn refs_and_memory() {
    let src = "fn main() = let r = ref(\"abc\") in let u = set(r, [1, 2]) in (get(r), mem_used())";
    // "abc" 3, ref 1+3, [1,2] 4, set 4, pair 3 counted after reading.
    assert_eq!(value(src), "([1, 2], 15)");
}

#[test]
fn sys_info_keys() {
    assert_eq!(value("fn main() = (sys_info(\"version\"), sys_info(\"mode\"))"), "(\"gl-1\", \"native\")");
    assert_eq!(value("fn main() = try sys_info(\"cpu\") catch (e, t) -> e"), "\"bad_key\"");
}

const SPINNER: &str = "fn spin(n) = if n == 0 then 0 else spin(n - 1)\n\
    fn worker(name) = let a = spin(40) in let u = print(name) in spin(40)\n\
    fn main() =\n  let a = spawn(fn () -> worker(\"a\")) in\n  let b = spawn(fn () -> worker(\"b\")) in\n  let u = print(\"main\") in spin(60)";

#[test]
fn slices_interleave_in_spawn_order() {
    let r = agree(SPINNER);
    let order: Vec<(u64, &str)> = r.prints.iter().map(|p| (p.pid, p.text.as_str())).collect();
    assert_eq!(order, [(0, "main"), (1, "a"), (2, "b")]);
    assert!(r.meters.iter().all(|m| m.reductions > 100));
}

#[test]
fn deadlock_lists_blocked_pids() {
    let r = agree("fn main() = let p = spawn(fn () -> receive { x -> x }) in receive { y -> y }");
    assert_eq!(r.outcome, Outcome::Deadlock(vec![0, 1]));
}

const LOOP: &str = "fn tick(n) = let u = print(\"t\") in tick(n + 1)\nfn main() = tick(0)";

#[test]
fn fuel_stops_runs_and_prefixes_grow() {
    let mut last: Vec<String> = Vec::new();
    for fuel in [1, 5, 50, 500, 5000] {
        for mode in [Mode::Bytecode, Mode::Ast] {
            let r = run_source(LOOP, mode, RunOptions { fuel: Some(fuel), audit: false }).unwrap().report;
            assert_eq!(r.outcome, Outcome::FuelExhausted);
            assert!(r.host.reductions >= fuel && r.host.reductions <= fuel + 1);
            let prints: Vec<String> = r.prints.iter().map(|p| p.text.clone()).collect();
            assert!(prints.starts_with(&last));
            last = prints;
        }
    }
    assert!(last.len() > 100);
}

#[test]
fn runs_are_deterministic() {
    for mode in [Mode::Bytecode, Mode::Ast] {
        assert_eq!(run(SPINNER, mode).serialize(), run(SPINNER, mode).serialize());
    }
}

#[test]
fn audit_conserves_allocation() {
    let src = "fn main() = let l = [\"ab\", \"c\"] in let p = spawn(fn () -> l) in (l, send(p, l), ref(l))";
    for mode in [Mode::Bytecode, Mode::Ast] {
        let ex = run_source(src, mode, RunOptions { fuel: None, audit: true }).unwrap();
        let audit = ex.audit.unwrap();
        for m in &ex.report.meters {
            let sum: u64 = audit.charges.iter().filter(|c| c.pid == m.pid).map(|c| c.units).sum();
            assert_eq!(sum, m.alloc);
        }
    }
}

#[test]
fn unchecked_mode_runs_rejected_programs() {
    let dup = "fn pick(a, a) = a\nfn main() = pick(1, 2)";
    assert!(run_source(dup, Mode::Ast, RunOptions::default()).is_err());
    let r = run(dup, Mode::AstUnchecked);
    assert_eq!(r.outcome, Outcome::Value("2".into()));
    let r = run("fn main() = nope", Mode::AstUnchecked);
    assert!(matches!(r.outcome, Outcome::Crash { ref value, .. } if value == "\"unbound_variable\""));
}
