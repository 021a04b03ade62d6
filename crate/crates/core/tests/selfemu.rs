use gl_core::frontend::compile_source;
use gl_core::selfemu::{emulate_source, EmuOptions, Hook};
use gl_core::vm::{run_module, Outcome, RunOptions, RunReport};

fn guest_view(r: &RunReport) -> RunReport {
    let mut r = r.clone();
    r.mode = String::new();
    r.host = Default::default();
    r
}

fn direct(src: &str, fuel: Option<u64>) -> RunReport {
    let m = compile_source(src).expect("compiles");
    run_module(&m, RunOptions { fuel, audit: false }).expect("runs").report
}

fn emulated(src: &str, opts: &EmuOptions) -> RunReport {
    emulate_source(src, opts).expect("emulates").report
}

/// Asserts the emulated run reproduces the direct run and returns it.
fn same(src: &str) -> RunReport {
    let d = direct(src, None);
    let e = emulated(src, &EmuOptions::default());
    assert_eq!(guest_view(&d).serialize(), guest_view(&e).serialize(), "emulation differs on\n{src}");
    assert!(e.host.reductions > d.host.reductions);
    d
}

#[test]
fn values_and_arithmetic() {
    same("fn main() = 42");
    same("fn main() = (1 + 2 * 3, 7 / 2, -7 / 2, 3 - 10, 1 < 2, 2 <= 1, \"a\" ++ \"bc\", (), [true, false])");
    same("fn main() = (-9223372036854775807 - 1, 9223372036854775807)");
    same("fn main() = (1, (2, [3, [4]]), \"q\\\"x\\n\")");
}

#[test]
fn arithmetic_faults() {
    for src in [
        "fn main() = 1 / 0",
        "fn main() = 9223372036854775807 + 1",
        "fn main() = (-9223372036854775807 - 1) - 1",
        "fn main() = 4611686018427387904 * 2",
        "fn main() = (-9223372036854775807 - 1) / -1",
        "fn main() = (-9223372036854775807 - 1) * -1",
        "fn main() = 1 + \"a\"",
        "fn main() = \"a\" ++ 1",
        "fn main() = 1 :: 2",
        "fn main() = if 1 then 2 else 3",
    ] {
        let r = same(src);
        assert!(matches!(r.outcome, Outcome::Crash { .. }), "{src}");
    }
    same("fn main() = (3037000499 * 3037000499, -3037000499 * 3037000499, 4611686018427387904 * -2)");
}

#[test]
fn calls_closures_and_traces() {
    same("fn f(x) = throw(x)\nfn main() = try f(7) catch (e, t) -> (e, t)");
    same("fn main() = try (try throw(1) catch (e, t) -> throw(e + 1)) catch (e, t) -> e * 10");
    same("fn main() =\n  let a = 1 in\n  let f = fn (x) -> x + a in\n  let g = fn () -> a in\n  (f(2), g(), fun_id(f), fun_id(g), f == g, f == f, f)");
    same("fn add(a, b) = a + b\nfn main() = (add, add(1, 2))");
    same("fn deep(n) = if n == 0 then stacktrace() else let r = deep(n - 1) in r\nfn main() = deep(3)");
    same("fn main() = try (fn (x) -> x)() catch (e, t) -> (e, t)");
    same("fn main() = try 3(1) catch (e, t) -> (e, t)");
    same("fn f(x) = 1 / x\nfn g(x) = f(x) + 1\nfn main() = g(0)");
}

#[test]
fn matching() {
    same(
        "fn sum(l) = match l { [] -> 0, x :: rest -> x + sum(rest) }\n\
          fn main() = (sum([1, 2, 3]), match (1, [2, 3]) { (1, [a]) -> a, (x, y :: _) if x < y -> y, _ -> 0 })",
    );
    same("fn main() = match 1 { 2 -> 0 }");
    same(
        "fn k(v) = match v { true -> 1, \"s\" -> 2, () -> 3, [] -> 4, (a, b) -> 5, -3 -> 6, _ -> 7 }\n\
          fn main() = [k(true), k(\"s\"), k(()), k([]), k((1, 2)), k(-3), k(false), k((1, 2, 3))]",
    );
}

#[test]
fn processes_and_receive() {
    same("fn main() = let p = spawn(fn () -> receive { 1 -> print(\"hi\") }) in send(p, 1)");
    same("fn main() = let p = spawn(fn () -> receive { x -> x }) in receive { y -> y }");
    same("fn main() =\n  let p = spawn(fn () -> 0) in\n  let w = receive { x -> x } in\n  send(p, 1)");
    same(
        "fn wait(n) = if n == 0 then 0 else wait(n - 1)\n\
          fn main() =\n  let p = spawn(fn () -> 0) in\n  let w = wait(200) in\n  send(p, 1)",
    );
    same("fn spin(n) = if n == 0 then 0 else spin(n - 1)\n\
          fn worker(name) = let a = spin(40) in let u = print(name) in spin(40)\n\
          fn main() =\n  let a = spawn(fn () -> worker(\"a\")) in\n  let b = spawn(fn () -> worker(\"b\")) in\n  let u = print(\"main\") in spin(60)");
    same("fn pong() = receive { (\"ping\", from, n) -> let u = send(from, (\"pong\", n)) in pong(), \"stop\" -> print(\"bye\") }\n\
          fn ping(p, n) = if n == 0 then send(p, \"stop\") else let u = send(p, (\"ping\", self(), n)) in receive { (\"pong\", m) if m == n -> ping(p, n - 1) }\n\
          fn main() = let p = spawn(fn () -> pong()) in let u = ping(p, 5) in (self(), p, vtime(), mem_used())");
    same("fn main() =\n  let me = self() in\n  let u = send(me, 3) in let v = send(me, (1, 2)) in let w = send(me, \"a\") in\n  let x = receive { \"a\" -> 1, (a, b) -> 2 } in\n  let y = receive { z -> z } in (x, y, __recv_reset(), try __recv_accept() catch (e, t) -> e)");
}

#[test]
fn host_map_callbacks() {
    same("fn main() = host_map([1, 2, 3], fn (x) -> x * 2)");
    same("fn main() = host_map([], fn (x) -> throw(\"never\"))");
    same("fn main() =\n  host_map([1],\n    fn (x) -> throw(\"e\"))");
    same(
        "fn main() = try host_map([1, 2, 3], fn (x) -> if x == 2 then throw(x) else x) catch (e, t) -> (e, t, vtime())",
    );
    same("fn main() = host_map([1, 2], fn (x) -> (x, vtime(), mem_used(), stacktrace()))");
    same("fn main() = host_map([[1, 2], [3]], fn (l) -> host_map(l, fn (x) -> x + 1))");
    same("fn spin(n) = if n == 0 then 0 else spin(n - 1)\n\
          fn main() =\n  let q = spawn(fn () -> let u = spin(30) in print(\"other\")) in\n  host_map([1, 2, 3], fn (x) -> let a = spin(30) in let u = print(\"cb\") in receive { m -> m + x } )");
    same("fn main() =\n  let me = self() in\n  let q = spawn(fn () -> let a = send(me, 10) in send(me, 20)) in\n  host_map([1, 2], fn (x) -> receive { m -> m + x })");
    same("fn main() = try host_map(1, fn (x) -> x) catch (e, t) -> e");
}

#[test]
fn introspection() {
    same("fn main() = (vtime(), mem_used(), stacktrace(), sys_info(\"version\"), sys_info(\"mode\"))");
    same("fn main() = try sys_info(\"cpu\") catch (e, t) -> e");
    same("fn main() = let r = ref(\"abc\") in let u = set(r, [1, 2]) in (get(r), mem_used(), r)");
    same("fn main() = let p = spawn(fn () -> ref(1)) in let r = ref(0) in try send(r, 1) catch (e, t) -> e");
    same("fn main() = let p = spawn(fn () -> receive { r -> try get(r) catch (e, t) -> print(e) }) in let r = ref(5) in let u = send(p, ref(6)) in get(r)");
}

#[test]
fn fuel_matches_direct_exactly() {
    let src = "fn tick(n) = let u = print(\"t\") in tick(n + 1)\nfn main() = tick(0)";
    for fuel in [0, 1, 2, 7, 100, 101, 350] {
        let d = direct(src, Some(fuel));
        let e = emulated(src, &EmuOptions { fuel: Some(fuel), ..Default::default() });
        assert_eq!(guest_view(&d).serialize(), guest_view(&e).serialize(), "fuel {fuel}");
    }
}

#[test]
fn host_fuel_gives_a_print_prefix() {
    let src = "fn tick(n) = let u = print(\"t\") in tick(n + 1)\nfn main() = tick(0)";
    let e = emulated(src, &EmuOptions { host_fuel: Some(20_000), ..Default::default() });
    assert_eq!(e.outcome, Outcome::FuelExhausted);
    assert!(!e.prints.is_empty());
    let d = direct(src, Some(10_000));
    let n = e.prints.len();
    assert_eq!(d.prints[..n], e.prints[..]);
}

#[test]
fn deep_recursion_keeps_host_depth_bounded() {
    let src = "fn down(n) = if n == 0 then 0 else 1 + down(n - 1)\nfn main() = down(10000)";
    let d = direct(src, None);
    let e = emulate_source(src, &EmuOptions::default()).unwrap().report;
    assert_eq!(guest_view(&d).serialize(), guest_view(&e).serialize());
    let depth = e.host.depth.expect("depth is reported");
    assert!(depth > 0 && depth <= 64, "{depth}");
}

#[test]
fn unhooked_variants_are_detectable() {
    let probes = [
        (Hook::Clock, "fn main() = vtime()"),
        (Hook::Memory, "fn main() = let s = \"abc\" in mem_used()"),
        (Hook::Stacktrace, "fn main() = stacktrace()"),
        (Hook::FunId, "fn main() = fun_id(fn () -> 0)"),
        (Hook::SysInfo, "fn main() = sys_info(\"mode\")"),
    ];
    for (hook, src) in probes {
        let d = direct(src, None);
        let good = emulated(src, &EmuOptions::default());
        assert_eq!(d.outcome, good.outcome);
        let bad = emulated(src, &EmuOptions { unhooked: vec![hook], ..Default::default() });
        assert_ne!(d.outcome, bad.outcome, "{}", hook.name());
    }
}
