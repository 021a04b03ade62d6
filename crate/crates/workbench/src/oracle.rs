//! Brute-force oracle for selective receive.
//!
//! Every sequence of up to three arms drawn from [`Pat::ALL`] is run against
//! every mailbox of up to four messages drawn from [`UNIVERSE`]. The guest
//! program spawns one worker per mailbox. For each arm list the worker
//! fills its own mailbox, appends [`SENTINEL`], runs the receive with one
//! extra last arm that only the sentinel can reach, then drains what is
//! left. Taking the sentinel means the original receive would block. The
//! worker throws all results, so they land in its crash report.
//!
//! Blocking is also checked directly. For each case the model says blocks,
//! a separate process runs the receive without the sentinel. Such a
//! process throws if the receive ever returns, so it must leave no crash
//! report.

use std::collections::HashMap;
use std::fmt::Write;

use gl_core::vm::{run_source, Mode, RunOptions};
use rayon::prelude::*;

pub const MAX_MAILBOX: usize = 4;
pub const MAX_ARMS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Msg {
    Int(i64),
    Str(&'static str),
    Pair(i64, i64),
}

pub const UNIVERSE: [Msg; 5] = [Msg::Int(1), Msg::Int(2), Msg::Str("a"), Msg::Pair(1, 2), Msg::Pair(2, 1)];

impl Msg {
    /// Source text, which is also the canonical rendering.
    fn source(self) -> String {
        match self {
            Msg::Int(n) => n.to_string(),
            Msg::Str(s) => format!("{s:?}"),
            Msg::Pair(a, b) => format!("({a}, {b})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pat {
    /// `1`
    One,
    /// `"a"`
    StrA,
    /// `(1, y)`
    LeadingOne,
    /// `(a, b) if b < a`
    Descending,
    /// `m`
    Any,
}

impl Pat {
    pub const ALL: [Pat; 5] = [Pat::One, Pat::StrA, Pat::LeadingOne, Pat::Descending, Pat::Any];

    pub fn matches(self, m: Msg) -> bool {
        match (self, m) {
            (Pat::One, Msg::Int(1)) | (Pat::StrA, Msg::Str("a")) | (Pat::LeadingOne, Msg::Pair(1, _)) => true,
            (Pat::Descending, Msg::Pair(a, b)) => b < a,
            (Pat::Any, _) => true,
            _ => false,
        }
    }

    /// Arm source; the body rebuilds the message it took.
    fn arm(self, k: usize) -> String {
        match self {
            Pat::One => format!("1 -> ({k}, 1)"),
            Pat::StrA => format!("\"a\" -> ({k}, \"a\")"),
            Pat::LeadingOne => format!("(1, y) -> ({k}, (1, y))"),
            Pat::Descending => format!("(a, b) if b < a -> ({k}, (a, b))"),
            Pat::Any => format!("m -> ({k}, m)"),
        }
    }
}

/// The first message, in arrival order, matched by any arm, tried in arm
/// order. Returns the arm index and the message's position.
pub fn select_at(mailbox: &[Msg], arms: &[Pat]) -> Option<(usize, usize)> {
    mailbox.iter().enumerate().find_map(|(i, &m)| Some((arms.iter().position(|p| p.matches(m))?, i)))
}

/// [`select_at`] with the message and the remaining mailbox spelled out.
pub fn select(mailbox: &[Msg], arms: &[Pat]) -> Option<(usize, Msg, Vec<Msg>)> {
    let (k, i) = select_at(mailbox, arms)?;
    let mut rest = mailbox.to_vec();
    let m = rest.remove(i);
    Some((k, m, rest))
}

fn sequences<T: Copy>(alphabet: &[T], min: usize, max: usize) -> Vec<Vec<T>> {
    let mut all = Vec::new();
    let mut layer: Vec<Vec<T>> = vec![Vec::new()];
    for len in 0..=max {
        if len >= min {
            all.extend(layer.iter().cloned());
        }
        layer = layer
            .iter()
            .flat_map(|s| {
                alphabet.iter().map(move |&x| {
                    let mut t = s.clone();
                    t.push(x);
                    t
                })
            })
            .collect();
    }
    all
}

pub fn mailboxes() -> Vec<Vec<Msg>> {
    sequences(&UNIVERSE, 0, MAX_MAILBOX)
}

pub fn arm_lists() -> Vec<Vec<Pat>> {
    sequences(&Pat::ALL, 1, MAX_ARMS)
}

/// Message no pattern in [`Pat::ALL`] matches except [`Pat::Any`].
pub const SENTINEL: &str = "stop";

/// Guest program running the arm lists `lists` against every mailbox.
/// `blocking[i]` lists the mailboxes on which `lists[i]` must block.
///
/// Workers are specialized by mailbox length: the messages arrive as
/// arguments, so each case fills and drains with straight-line code.
pub fn program(lists: &[Vec<Pat>], blocking: &[Vec<&[Msg]>]) -> String {
    let universe: Vec<String> = UNIVERSE.iter().map(|m| m.source()).collect();
    let sentinel = format!("{SENTINEL:?}");
    let vars: Vec<Vec<String>> = (0..=MAX_MAILBOX).map(|n| (1..=n).map(|j| format!("a{j}")).collect()).collect();
    let mut src = String::new();
    let w = &mut src;
    let _ = writeln!(w, "fn universe() = [{}]", universe.join(", "));
    let _ = writeln!(
        w,
        "fn prepend_all(s, xs, acc) = match xs {{ [] -> acc, x :: rest -> prepend_all(s, rest, (x :: s) :: acc) }}"
    );
    let _ = writeln!(
        w,
        "fn grow(seqs, acc) = match seqs {{ [] -> acc, s :: rest -> grow(rest, prepend_all(s, universe(), acc)) }}"
    );
    let _ = writeln!(w, "fn fill(me, msgs) = host_map(msgs, fn (m) -> send(me, m))");
    for (i, arms) in lists.iter().enumerate() {
        let arms: Vec<String> = arms.iter().enumerate().map(|(k, p)| p.arm(k)).collect();
        let n = arms.len();
        for vs in &vars {
            let params: String = vs.iter().map(|v| format!(", {v}")).collect();
            let sends: Vec<String> = vs.iter().chain([&sentinel]).map(|v| format!("send(me, {v})")).collect();
            let drains = vec!["receive { y -> y }"; vs.len()];
            let _ = writeln!(
                w,
                "fn case{i}_{}(me{params}) = let u = ({}) in (receive {{ {}, {sentinel} -> ({n}, {sentinel}) }}, [{}])",
                vs.len(),
                sends.join(", "),
                arms.join(", "),
                drains.join(", ")
            );
        }
        let _ = writeln!(
            w,
            "fn block{i}(msgs) = let u = fill(self(), msgs) in let r = receive {{ {} }} in throw((\"unblocked\", {i}, msgs, r))",
            arms.join(", ")
        );
        let _ = writeln!(
            w,
            "fn blocks{i}(l) = match l {{ [] -> (), msgs :: rest -> let p = spawn(fn () -> block{i}(msgs)) in blocks{i}(rest) }}"
        );
    }
    for vs in &vars {
        let n = vs.len();
        let args: String = vs.iter().map(|v| format!(", {v}")).collect();
        let cases: Vec<String> = (0..lists.len()).map(|i| format!("case{i}_{n}(me{args})")).collect();
        let _ = writeln!(
            w,
            "fn work{n}({}) = let me = self() in throw(([{}], [{}]))",
            vs.join(", "),
            vs.join(", "),
            cases.join(", ")
        );
        let _ = writeln!(
            w,
            "fn launch{n}(l) = match l {{ [] -> (), [{}] :: rest -> let p = spawn(fn () -> work{n}({})) in launch{n}(rest) }}",
            vs.join(", "),
            vs.join(", ")
        );
    }
    let _ = write!(w, "fn main() = let l0 = [[]] in ");
    for n in 1..=MAX_MAILBOX {
        let _ = write!(w, "let l{n} = grow(l{}, []) in ", n - 1);
    }
    for n in 0..=MAX_MAILBOX {
        let _ = write!(w, "let u{n} = launch{n}(l{n}) in ");
    }
    for (i, boxes) in blocking.iter().enumerate() {
        let boxes: Vec<String> = boxes.iter().map(|b| render(b)).collect();
        let _ = write!(w, "let b{i} = blocks{i}([{}]) in ", boxes.join(", "));
    }
    let _ = writeln!(w, "()");
    src
}

#[derive(Clone, Debug, Default)]
pub struct OracleSummary {
    pub arm_lists: usize,
    pub mailboxes: usize,
    pub cases: usize,
    pub blocked: usize,
    pub mismatches: Vec<String>,
}

fn render(msgs: &[Msg]) -> String {
    let mut out = String::from("[");
    write_msgs(&mut out, msgs.iter().copied());
    out.push(']');
    out
}

fn write_msgs(out: &mut String, msgs: impl Iterator<Item = Msg>) {
    for (i, m) in msgs.enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&m.source());
    }
}

/// Appends the rendering of what a worker reports for one case:
/// `((arm, taken), rest)`.
fn write_expected(out: &mut String, b: &[Msg], arms: &[Pat]) {
    let sentinel = format!("{SENTINEL:?}");
    let (arm, taken, skip) = match select_at(b, arms) {
        Some((k, i)) => (k, b[i].source(), Some(i)),
        None => (arms.iter().position(|p| *p == Pat::Any).unwrap_or(arms.len()), sentinel.clone(), None),
    };
    let _ = write!(out, "(({arm}, {taken}), [");
    let rest = b.iter().enumerate().filter(|(j, _)| Some(*j) != skip).map(|(_, &m)| m);
    write_msgs(out, rest);
    if skip.is_some() {
        if b.len() > 1 {
            out.push_str(", ");
        }
        out.push_str(&sentinel);
    }
    out.push_str("])");
}

/// First arm list whose rendered case differs from what `got` holds.
fn first_difference(got: &str, key: &str, cases: &[String]) -> usize {
    let mut rest = got.get(key.len() + 4..).unwrap_or("");
    for (i, c) in cases.iter().enumerate() {
        match rest.strip_prefix(c.as_str()) {
            Some(r) => rest = r.strip_prefix(", ").unwrap_or(r),
            None => return i,
        }
    }
    cases.len()
}

fn check_lists(lists: &[Vec<Pat>], boxes: &[Vec<Msg>]) -> Vec<String> {
    let blocking: Vec<Vec<&[Msg]>> = lists
        .iter()
        .map(|arms| boxes.iter().filter(|b| select_at(b, arms).is_none()).map(Vec::as_slice).collect())
        .collect();
    let report = match run_source(&program(lists, &blocking), Mode::Bytecode, RunOptions::default()) {
        Ok(ex) => ex.report,
        Err(e) => return vec![format!("oracle program: {e}")],
    };
    let mut got: HashMap<String, String> = HashMap::new();
    let mut out = Vec::new();
    for c in report.crashes {
        // Worker values render as `([mailbox], [results])`.
        let key = c.value.strip_prefix("([").and_then(|v| v.find("], [").map(|i| format!("[{}]", &v[..i])));
        match key {
            Some(k) if !got.contains_key(&k) => {
                got.insert(k, c.value);
            }
            _ => out.push(format!("unexpected crash {}", c.value)),
        }
    }
    for b in boxes {
        let key = render(b);
        let mut want = format!("({key}, [");
        for (i, arms) in lists.iter().enumerate() {
            if i > 0 {
                want.push_str(", ");
            }
            write_expected(&mut want, b, arms);
        }
        want.push_str("])");
        match got.remove(&key) {
            Some(g) if g == want => {}
            Some(g) => {
                let cases: Vec<String> = lists
                    .iter()
                    .map(|arms| {
                        let mut c = String::new();
                        write_expected(&mut c, b, arms);
                        c
                    })
                    .collect();
                let i = first_difference(&g, &key, &cases);
                let arms = lists.get(i).map_or(String::from("?"), |a| format!("{a:?}"));
                out.push(format!("arms {arms} mailbox {b:?}: expected {}, got {g}", cases.get(i).map_or("", |c| c)));
            }
            None => out.push(format!("mailbox {b:?}: worker left no report")),
        }
    }
    out.extend(got.into_values().map(|v| format!("report for no mailbox: {v}")));
    out
}

/// Runs every arm list against every mailbox, one guest program per
/// thread's share of the arm lists.
pub fn run() -> OracleSummary {
    let boxes = mailboxes();
    let lists = arm_lists();
    let per_chunk = lists.len().div_ceil(rayon::current_num_threads().max(1));
    let chunks: Vec<&[Vec<Pat>]> = lists.chunks(per_chunk).collect();
    let mismatches: Vec<String> = chunks.par_iter().flat_map_iter(|c| check_lists(c, &boxes)).collect();
    let blocked = lists.iter().map(|arms| boxes.iter().filter(|b| select_at(b, arms).is_none()).count()).sum();
    OracleSummary {
        arm_lists: lists.len(),
        mailboxes: boxes.len(),
        cases: lists.len() * boxes.len(),
        blocked,
        mismatches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gl_core::{format_value, Value};

    impl Msg {
        fn value(self) -> Value {
            match self {
                Msg::Int(n) => Value::Int(n),
                Msg::Str(s) => Value::str(s),
                Msg::Pair(a, b) => Value::tuple(vec![Value::Int(a), Value::Int(b)]),
            }
        }
    }

    #[test]
    fn enumeration_sizes() {
        assert_eq!(mailboxes().len(), 1 + 5 + 25 + 125 + 625);
        assert_eq!(arm_lists().len(), 5 + 25 + 125);
    }

    #[test]
    fn oracle_takes_first_matching_message() {
        let mb = [Msg::Int(2), Msg::Pair(2, 1), Msg::Int(1)];
        assert_eq!(
            select(&mb, &[Pat::One, Pat::Descending]),
            Some((1, Msg::Pair(2, 1), vec![Msg::Int(2), Msg::Int(1)]))
        );
        assert_eq!(select(&mb, &[Pat::StrA]), None);
        assert_eq!(select(&[], &[Pat::Any]), None);
    }

    #[test]
    fn expected_rendering_is_canonical() {
        for b in mailboxes().iter().step_by(7) {
            let values = Value::list(b.iter().map(|m| m.value()));
            assert_eq!(render(b), format_value(&values));
            for arms in arm_lists().iter().step_by(11) {
                let stop = Value::str(SENTINEL);
                let want = match select(b, arms) {
                    Some((k, m, rest)) => {
                        let rest = rest.into_iter().map(Msg::value).chain([stop]);
                        (Value::Int(k as i64), m.value(), Value::list(rest))
                    }
                    None => {
                        let k = arms.iter().position(|p| *p == Pat::Any).unwrap_or(arms.len());
                        (Value::Int(k as i64), stop, values.clone())
                    }
                };
                let want = Value::tuple(vec![Value::tuple(vec![want.0, want.1]), want.2]);
                let mut got = String::new();
                write_expected(&mut got, b, arms);
                assert_eq!(got, format_value(&want));
            }
        }
    }

    #[test]
    fn some_arm_lists_agree() {
        let lists = vec![vec![Pat::Descending, Pat::One], vec![Pat::StrA], vec![Pat::Any, Pat::One]];
        assert_eq!(check_lists(&lists, &mailboxes()), Vec::<String>::new());
    }

    #[test]
    fn sentinel_and_blocking_reports() {
        // Claim `1` blocks on [1]; the direct check must say otherwise.
        let one: &[Msg] = &[Msg::Int(1)];
        let report = run_source(&program(&[vec![Pat::One]], &[vec![one]]), Mode::Bytecode, RunOptions::default())
            .unwrap()
            .report;
        let values: Vec<&str> = report.crashes.iter().map(|c| c.value.as_str()).collect();
        assert!(values.contains(&"(\"unblocked\", 0, [1], (0, 1))"));
        assert!(values.contains(&"([2], [((1, \"stop\"), [2])])"));
        assert!(values.contains(&"([2, 1], [((0, 1), [2, \"stop\"])])"));
    }
}
