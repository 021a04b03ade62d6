//! Small-step AST evaluator.
//!
//! Each frame keeps a work list of pending items. Expanding an expression is
//! free; every [`Op`] retires exactly one reduction, in the same order and
//! with the same effect on the operand stack as the instruction the compiler
//! would emit. Preemption points, meters and traces therefore agree with the
//! bytecode machine.

use alloc::collections::VecDeque;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use super::builtins::{self, exc, host_map_result_units, BuiltinResult};
use super::world::{Engine, Step, World};
use super::HostError;
use crate::frontend::ast::{free_vars, Arm, BinOp, Expr, ExprKind, Lambda, Pattern};
use crate::frontend::{Builtin, Program};
use crate::value::{value_equal, Closure, List, Value};

pub struct Evaluator<'p> {
    program: &'p Program,
    unchecked: bool,
    /// Lambda and the line of its expression, by lambda index.
    lambdas: Vec<(&'p Lambda, u32)>,
    /// Function names, indexed like module functions.
    names: Vec<Rc<str>>,
    /// Free variables of each lambda, in first-occurrence order.
    free: Vec<Vec<&'p str>>,
    /// Capture names of each lambda, fixed at its first creation.
    captures: RefCell<Vec<Option<Rc<[&'p str]>>>>,
}

pub enum Frame<'p> {
    Fn(FnFrame<'p>),
    HostMap(MapFrame),
}

pub struct FnFrame<'p> {
    name: Rc<str>,
    /// Line of the most recently retired operation.
    line: u32,
    scope: Vec<(&'p str, Value)>,
    stack: Vec<Value>,
    work: Vec<Item<'p>>,
    handlers: Vec<Handler<'p>>,
}

pub struct MapFrame {
    f: Rc<Closure>,
    pending: VecDeque<Value>,
    done: Vec<Value>,
}

struct Handler<'p> {
    work: usize,
    stack: usize,
    scope: usize,
    exc_var: &'p str,
    trace_var: &'p str,
    body: &'p Expr,
    tail: bool,
    line: u32,
}

enum Item<'p> {
    Eval(&'p Expr, bool),
    Op(Op<'p>, u32),
    /// Drop bindings above the mark.
    Unbind(usize),
    /// Try arm `next` of a match or receive; after the last arm, fall out.
    Arms {
        arms: &'p [Arm],
        next: usize,
        tail: bool,
        receive: bool,
        mark: usize,
        line: u32,
    },
    /// Ends the pattern phase of an arm: discard its fallback and run the body.
    Commit {
        arm: &'p Arm,
        tail: bool,
        receive: bool,
        mark: usize,
    },
    /// Re-enter a receive at its fetch.
    Refetch {
        arms: &'p [Arm],
        tail: bool,
        line: u32,
    },
}

#[derive(Clone, Copy)]
enum Test<'p> {
    Int(i64),
    Bool(bool),
    Str(&'p Rc<str>),
    Unit,
    Nil,
    Cons,
    Tuple(usize),
}

enum Op<'p> {
    Push(Value),
    PushStr(Rc<str>),
    Load(&'p str),
    Store(&'p str),
    Pop,
    Dup,
    MakeClosure(usize),
    MakeLambda(&'p Lambda),
    Call(usize, bool),
    Ret,
    CallBuiltin(Builtin, usize),
    Jump,
    /// `if`: choose a branch.
    Branch(&'p Expr, &'p Expr, bool),
    /// Guard check; failure leaves the arm at depth 0.
    Guard,
    MakeTuple(usize),
    MakeList(usize),
    Bin(BinOp),
    Throw,
    TryPush(&'p str, &'p str, &'p Expr, bool),
    TryPop,
    Test(Test<'p>, usize),
    RecvFetch,
    RecvAccept,
    RecvReset,
}

impl Op<'_> {
    fn opcode_index(&self) -> usize {
        match self {
            Op::Push(Value::Int(_)) => 0,
            Op::Push(Value::Bool(_)) => 1,
            Op::PushStr(_) => 2,
            Op::Push(_) => 3,
            Op::Load(_) => 4,
            Op::Store(_) => 5,
            Op::Pop => 6,
            Op::Dup => 7,
            Op::MakeClosure(_) | Op::MakeLambda(_) => 8,
            Op::Call(_, false) => 9,
            Op::Call(_, true) => 10,
            Op::Ret => 11,
            Op::CallBuiltin(..) => 12,
            Op::Jump => 13,
            Op::Branch(..) | Op::Guard => 14,
            Op::MakeTuple(_) => 15,
            Op::MakeList(_) => 16,
            Op::Bin(BinOp::Cons) => 17,
            Op::Bin(BinOp::Add) => 18,
            Op::Bin(BinOp::Sub) => 19,
            Op::Bin(BinOp::Mul) => 20,
            Op::Bin(BinOp::Div) => 21,
            Op::Bin(BinOp::Lt) => 22,
            Op::Bin(BinOp::Le) => 23,
            Op::Bin(BinOp::Eq) => 24,
            Op::Bin(BinOp::Ne) => 25,
            Op::Bin(BinOp::Concat) => 26,
            Op::Throw => 27,
            Op::TryPush(..) => 28,
            Op::TryPop => 29,
            Op::Test(t, _) => match t {
                Test::Int(_) => 30,
                Test::Bool(_) => 31,
                Test::Str(_) => 32,
                Test::Unit => 33,
                Test::Nil => 34,
                Test::Cons => 35,
                Test::Tuple(_) => 36,
            },
            Op::RecvFetch => 37,
            Op::RecvAccept => 38,
            Op::RecvReset => 39,
        }
    }
}

enum Fault {
    Throw(Value),
    Host(HostError),
}

impl From<HostError> for Fault {
    fn from(e: HostError) -> Self {
        Fault::Host(e)
    }
}

fn underflow() -> HostError {
    HostError::new("operand stack underflow")
}

fn pop(stack: &mut Vec<Value>) -> Result<Value, HostError> {
    stack.pop().ok_or_else(underflow)
}

fn pop_n(stack: &mut Vec<Value>, n: usize) -> Result<Vec<Value>, HostError> {
    if stack.len() < n {
        return Err(underflow());
    }
    Ok(stack.split_off(stack.len() - n))
}

fn throw(tag: &str) -> Fault {
    Fault::Throw(exc(tag))
}

fn arith(r: Option<i64>) -> Result<Value, Fault> {
    r.map(Value::Int).ok_or_else(|| throw("arith_error"))
}

/// Items that match `p` against the value on top of the stack, which sits
/// `depth` values above the arm's base.
fn pattern_ops<'p>(p: &'p Pattern, depth: usize, line: u32, out: &mut Vec<Item<'p>>) {
    let test = |t: Test<'p>, out: &mut Vec<Item<'p>>| out.push(Item::Op(Op::Test(t, depth), line));
    let pop = |out: &mut Vec<Item<'p>>| out.push(Item::Op(Op::Pop, line));
    match p {
        Pattern::Wildcard => pop(out),
        Pattern::Var(name) => out.push(Item::Op(Op::Store(name), line)),
        Pattern::Int(n) => {
            test(Test::Int(*n), out);
            pop(out);
        }
        Pattern::Bool(b) => {
            test(Test::Bool(*b), out);
            pop(out);
        }
        Pattern::Str(s) => {
            test(Test::Str(s), out);
            pop(out);
        }
        Pattern::Unit => {
            test(Test::Unit, out);
            pop(out);
        }
        Pattern::Tuple(items) => {
            test(Test::Tuple(items.len()), out);
            for (j, item) in items.iter().enumerate().rev() {
                pattern_ops(item, depth + j + 1, line, out);
            }
            pop(out);
        }
        Pattern::Cons(h, t) => {
            test(Test::Cons, out);
            pattern_ops(t, depth + 2, line, out);
            pattern_ops(h, depth + 1, line, out);
            pop(out);
        }
        Pattern::List(items) => list_ops(items, depth, line, out),
    }
}

fn list_ops<'p>(items: &'p [Pattern], depth: usize, line: u32, out: &mut Vec<Item<'p>>) {
    match items.split_first() {
        None => out.push(Item::Op(Op::Test(Test::Nil, depth), line)),
        Some((head, rest)) => {
            out.push(Item::Op(Op::Test(Test::Cons, depth), line));
            list_ops(rest, depth + 2, line, out);
            pattern_ops(head, depth + 1, line, out);
        }
    }
    out.push(Item::Op(Op::Pop, line));
}

/// [`free_vars`] as references into the lambda's body.
fn free_var_refs(lambda: &Lambda) -> Vec<&str> {
    let names = free_vars(lambda);
    let mut refs: Vec<Option<&str>> = vec![None; names.len()];
    lambda.body.visit(&mut |e| {
        if let ExprKind::Var(v) = &e.kind {
            if let Some(i) = names.iter().position(|n| n == v) {
                refs[i].get_or_insert(v.as_str());
            }
        }
    });
    refs.into_iter().map(|r| r.expect("free names occur in the body")).collect()
}

impl<'p> FnFrame<'p> {
    fn lookup(&self, name: &str) -> Option<&Value> {
        self.scope.iter().rev().find(|(n, _)| *n == name).map(|(_, v)| v)
    }

    /// Schedules `items` to run next, first element first.
    fn push_seq(&mut self, items: Vec<Item<'p>>) {
        self.work.extend(items.into_iter().rev());
    }
}

impl<'p> Evaluator<'p> {
    pub fn new(program: &'p Program, unchecked: bool) -> Self {
        let mut lambdas: Vec<Option<(&'p Lambda, u32)>> = vec![None; program.lambda_count];
        for def in &program.defs {
            def.body.visit(&mut |e| {
                if let ExprKind::Lambda(l) = &e.kind {
                    lambdas[l.index] = Some((l, e.line));
                }
            });
        }
        let lambdas: Vec<(&'p Lambda, u32)> =
            lambdas.into_iter().map(|l| l.expect("lambda numbering is dense")).collect();
        let names = program
            .defs
            .iter()
            .map(|d| Rc::from(d.name.as_str()))
            .chain(lambdas.iter().map(|(l, _)| Rc::from(l.name.as_str())))
            .collect();
        let free = lambdas.iter().map(|(l, _)| free_var_refs(l)).collect();
        Evaluator { program, unchecked, lambdas, names, free, captures: RefCell::new(vec![None; program.lambda_count]) }
    }

    pub fn main_frames(&self) -> Result<Vec<Frame<'p>>, HostError> {
        let main = self
            .program
            .defs
            .iter()
            .position(|d| d.name == "main" && d.params.is_empty())
            .ok_or_else(|| HostError::new("program has no main/0"))?;
        Ok(vec![Frame::Fn(self.enter(main, &[], Vec::new()))])
    }

    /// A fresh activation of module function `func`.
    fn enter(&self, func: usize, captures: &[Value], args: Vec<Value>) -> FnFrame<'p> {
        let defs = &self.program.defs;
        let (params, body, line): (&'p [String], &'p Expr, u32) = if func < defs.len() {
            let d = &defs[func];
            (&d.params, &d.body, d.line)
        } else {
            let (l, line) = self.lambdas[func - defs.len()];
            (&l.params, &l.body, line)
        };
        let mut scope: Vec<(&'p str, Value)> = params.iter().map(String::as_str).zip(args).collect();
        if func >= defs.len() && !captures.is_empty() {
            let names = self.captures.borrow()[func - defs.len()].clone().expect("created before called");
            scope.extend(names.iter().copied().zip(captures.iter().cloned()));
        }
        FnFrame {
            name: self.names[func].clone(),
            line,
            scope,
            stack: Vec::new(),
            work: vec![Item::Op(Op::Ret, line), Item::Eval(body, true)],
            handlers: Vec::new(),
        }
    }

    fn closure_value(&self, w: &mut World<Frame<'p>>, pid: usize, func: usize, captures: Vec<Value>) -> Value {
        let defs = &self.program.defs;
        let arity =
            if func < defs.len() { defs[func].params.len() } else { self.lambdas[func - defs.len()].0.params.len() };
        let k = captures.len() as u64;
        let id = w.next_closure_id(pid);
        w.charge_alloc(pid, k + 2, "MAKE_CLOSURE");
        Value::Closure(Rc::new(Closure {
            func,
            name: self.names[func].clone(),
            arity,
            captures,
            id,
            owner: pid as u64,
        }))
    }

    pub fn trace(&self, frames: &[Frame<'p>]) -> Value {
        Value::list(frames.iter().rev().filter_map(|fr| match fr {
            Frame::Fn(f) => Some(Value::tuple(vec![Value::Str(f.name.clone()), Value::Int(f.line as i64)])),
            Frame::HostMap(_) => None,
        }))
    }

    /// Expands free items until an operation is next. `None` means the work
    /// list is exhausted, which a well-formed frame never reaches.
    fn next_op(&self, fr: &mut FnFrame<'p>) -> Option<(Op<'p>, u32)> {
        loop {
            match fr.work.pop()? {
                Item::Op(op, line) => return Some((op, line)),
                Item::Eval(e, tail) => self.expand(fr, e, tail),
                Item::Unbind(mark) => fr.scope.truncate(mark),
                Item::Arms { arms, next, tail, receive, mark, line } => {
                    fr.scope.truncate(mark);
                    let Some(arm) = arms.get(next) else {
                        let tail_ops = if receive {
                            vec![Item::Op(Op::Pop, line), Item::Op(Op::Jump, line), Item::Refetch { arms, tail, line }]
                        } else {
                            vec![
                                Item::Op(Op::Pop, line),
                                Item::Op(Op::PushStr(Rc::from("match_error")), line),
                                Item::Op(Op::Throw, line),
                            ]
                        };
                        fr.push_seq(tail_ops);
                        continue;
                    };
                    fr.work.push(Item::Arms { arms, next: next + 1, tail, receive, mark, line });
                    let mut seq = vec![Item::Op(Op::Dup, arm.line)];
                    pattern_ops(&arm.pattern, 1, arm.line, &mut seq);
                    if let Some(g) = &arm.guard {
                        seq.push(Item::Eval(g, false));
                        seq.push(Item::Op(Op::Guard, arm.line));
                    }
                    seq.push(Item::Commit { arm, tail, receive, mark });
                    fr.push_seq(seq);
                }
                Item::Commit { arm, tail, receive, mark } => {
                    let fallback = fr.work.pop();
                    debug_assert!(matches!(fallback, Some(Item::Arms { .. })));
                    let mut seq = vec![Item::Op(Op::Pop, arm.line)];
                    if receive {
                        seq.push(Item::Op(Op::RecvAccept, arm.line));
                    }
                    seq.push(Item::Eval(&arm.body, tail));
                    seq.push(Item::Op(Op::Jump, arm.line));
                    seq.push(Item::Unbind(mark));
                    fr.push_seq(seq);
                }
                Item::Refetch { arms, tail, line } => {
                    let mark = fr.scope.len();
                    fr.push_seq(vec![
                        Item::Op(Op::RecvFetch, line),
                        Item::Arms { arms, next: 0, tail, receive: true, mark, line },
                    ]);
                }
            }
        }
    }

    fn expand(&self, fr: &mut FnFrame<'p>, e: &'p Expr, tail: bool) {
        let line = e.line;
        let op = |op: Op<'p>| Item::Op(op, line);
        let seq = match &e.kind {
            ExprKind::Int(n) => vec![op(Op::Push(Value::Int(*n)))],
            ExprKind::Bool(b) => vec![op(Op::Push(Value::Bool(*b)))],
            ExprKind::Str(s) => vec![op(Op::PushStr(s.clone()))],
            ExprKind::Unit => vec![op(Op::Push(Value::Unit))],
            ExprKind::Var(name) => match (fr.lookup(name), self.program.find(name)) {
                (None, Some(f)) => vec![op(Op::MakeClosure(f))],
                _ => vec![op(Op::Load(name))],
            },
            ExprKind::Let(name, bound, body) => vec![
                Item::Eval(bound, false),
                op(Op::Store(name)),
                Item::Eval(body, tail),
                Item::Unbind(fr.scope.len()),
            ],
            ExprKind::If(c, t, f) => vec![Item::Eval(c, false), op(Op::Branch(t, f, tail))],
            ExprKind::Match(subject, arms) => vec![
                Item::Eval(subject, false),
                Item::Arms { arms, next: 0, tail, receive: false, mark: fr.scope.len(), line },
            ],
            ExprKind::Receive(arms) => vec![op(Op::RecvReset), Item::Refetch { arms, tail, line }],
            ExprKind::Try { body, exc_var, trace_var, handler } => vec![
                op(Op::TryPush(exc_var, trace_var, handler, tail)),
                Item::Eval(body, false),
                op(Op::TryPop),
                op(Op::Jump),
            ],
            ExprKind::Throw(inner) => vec![Item::Eval(inner, false), op(Op::Throw)],
            ExprKind::Lambda(l) => vec![op(Op::MakeLambda(l))],
            ExprKind::Call(callee, args) => {
                let mut seq = vec![Item::Eval(callee, false)];
                seq.extend(args.iter().map(|a| Item::Eval(a, false)));
                seq.push(op(Op::Call(args.len(), tail)));
                seq
            }
            ExprKind::BuiltinCall(b, args) => {
                let mut seq: Vec<Item<'p>> = args.iter().map(|a| Item::Eval(a, false)).collect();
                seq.push(op(Op::CallBuiltin(*b, args.len())));
                seq
            }
            ExprKind::BinOp(o, l, r) => vec![Item::Eval(l, false), Item::Eval(r, false), op(Op::Bin(*o))],
            ExprKind::Tuple(items) | ExprKind::List(items) => {
                let mut seq: Vec<Item<'p>> = items.iter().map(|a| Item::Eval(a, false)).collect();
                let n = items.len();
                seq.push(op(if matches!(e.kind, ExprKind::Tuple(_)) { Op::MakeTuple(n) } else { Op::MakeList(n) }));
                seq
            }
        };
        fr.push_seq(seq);
    }

    fn deliver(&self, w: &mut World<Frame<'p>>, pid: usize, frames: &mut Vec<Frame<'p>>, mut v: Value) -> Step {
        loop {
            match frames.last_mut() {
                None => {
                    w.exit(pid, v);
                    return Step::Done;
                }
                Some(Frame::Fn(caller)) => {
                    caller.stack.push(v);
                    return Step::Continue;
                }
                Some(Frame::HostMap(m)) => {
                    m.done.push(v);
                    if let Some(next) = m.pending.pop_front() {
                        let callee = self.enter(m.f.func, &m.f.captures, vec![next]);
                        frames.push(Frame::Fn(callee));
                        return Step::Continue;
                    }
                    let Some(Frame::HostMap(m)) = frames.pop() else { unreachable!() };
                    w.charge_alloc(pid, host_map_result_units(m.done.len()), "host_map");
                    v = Value::list(m.done);
                }
            }
        }
    }

    fn throw(&self, w: &mut World<Frame<'p>>, pid: usize, frames: &mut Vec<Frame<'p>>, v: Value) -> Step {
        let trace = self.trace(frames);
        loop {
            match frames.last_mut() {
                None => {
                    w.crash(pid, &v, &trace);
                    return Step::Done;
                }
                Some(Frame::Fn(fr)) if !fr.handlers.is_empty() => {
                    let h = fr.handlers.pop().expect("non-empty");
                    fr.work.truncate(h.work);
                    fr.stack.truncate(h.stack);
                    fr.scope.truncate(h.scope);
                    fr.stack.push(v);
                    fr.stack.push(trace.clone());
                    let mark = fr.scope.len();
                    fr.push_seq(vec![
                        Item::Op(Op::Store(h.trace_var), h.line),
                        Item::Op(Op::Store(h.exc_var), h.line),
                        Item::Eval(h.body, h.tail),
                        Item::Unbind(mark),
                    ]);
                    w.charge_trace(pid, &trace);
                    return Step::Continue;
                }
                Some(_) => {
                    frames.pop();
                }
            }
        }
    }

    fn check_callee(callee: &Value, n: usize) -> Result<Rc<Closure>, Fault> {
        match callee {
            Value::Closure(c) if c.arity == n => Ok(c.clone()),
            Value::Closure(_) => Err(throw("arity_error")),
            _ => Err(throw("type_error")),
        }
    }

    fn execute(
        &self,
        w: &mut World<Frame<'p>>,
        pid: usize,
        frames: &mut Vec<Frame<'p>>,
        op: Op<'p>,
    ) -> Result<Step, Fault> {
        let Some(Frame::Fn(fr)) = frames.last_mut() else { unreachable!() };
        match op {
            Op::Push(v) => fr.stack.push(v),
            Op::PushStr(s) => {
                let len = s.len() as u64;
                fr.stack.push(Value::Str(s));
                w.charge_alloc(pid, len, "PUSH_STR");
            }
            Op::Load(name) => match fr.lookup(name) {
                Some(v) => {
                    let v = v.clone();
                    fr.stack.push(v);
                }
                None if self.unchecked => return Err(throw("unbound_variable")),
                None => return Err(HostError::new("unbound variable in checked program").into()),
            },
            Op::Store(name) => {
                let v = pop(&mut fr.stack)?;
                fr.scope.push((name, v));
            }
            Op::Pop => {
                pop(&mut fr.stack)?;
            }
            Op::Dup => {
                let v = fr.stack.last().ok_or_else(underflow)?.clone();
                fr.stack.push(v);
            }
            Op::MakeClosure(f) => {
                let v = self.closure_value(w, pid, f, Vec::new());
                let Some(Frame::Fn(fr)) = frames.last_mut() else { unreachable!() };
                fr.stack.push(v);
            }
            Op::MakeLambda(l) => {
                let names: Vec<&'p str> =
                    self.free[l.index].iter().copied().filter(|n| fr.lookup(n).is_some()).collect();
                let values: Vec<Value> = names.iter().map(|n| fr.lookup(n).expect("filtered").clone()).collect();
                {
                    let mut cache = self.captures.borrow_mut();
                    let slot = &mut cache[l.index];
                    if slot.is_none() {
                        *slot = Some(names.into());
                    }
                }
                let func = self.program.defs.len() + l.index;
                let v = self.closure_value(w, pid, func, values);
                let Some(Frame::Fn(fr)) = frames.last_mut() else { unreachable!() };
                fr.stack.push(v);
            }
            Op::Call(n, tail) => {
                if fr.stack.len() < n + 1 {
                    return Err(underflow().into());
                }
                let c = Self::check_callee(&fr.stack[fr.stack.len() - n - 1], n)?;
                let args = pop_n(&mut fr.stack, n)?;
                pop(&mut fr.stack)?;
                let callee = self.enter(c.func, &c.captures, args);
                if tail {
                    frames.pop();
                }
                frames.push(Frame::Fn(callee));
            }
            Op::Ret => {
                let v = pop(&mut fr.stack)?;
                frames.pop();
                return Ok(self.deliver(w, pid, frames, v));
            }
            Op::CallBuiltin(b, n) => {
                let args = pop_n(&mut fr.stack, n)?;
                let result = {
                    let trace = || self.trace(frames);
                    builtins::call_builtin(self, w, pid, b, &args, &trace)
                };
                let Some(Frame::Fn(fr)) = frames.last_mut() else { unreachable!() };
                match result {
                    BuiltinResult::Value(v) => fr.stack.push(v),
                    BuiltinResult::Throw(e) => return Err(Fault::Throw(e)),
                    BuiltinResult::HostMap { items, f } => {
                        let mut pending: VecDeque<Value> = items.into();
                        let Some(first) = pending.pop_front() else {
                            fr.stack.push(Value::nil());
                            return Ok(Step::Continue);
                        };
                        let callee = self.enter(f.func, &f.captures, vec![first]);
                        frames.push(Frame::HostMap(MapFrame { f, pending, done: Vec::new() }));
                        frames.push(Frame::Fn(callee));
                    }
                }
            }
            Op::Jump => {}
            Op::Branch(t, f, tail) => match pop(&mut fr.stack)? {
                Value::Bool(true) => {
                    let line = fr.line;
                    fr.push_seq(vec![Item::Eval(t, tail), Item::Op(Op::Jump, line)]);
                }
                Value::Bool(false) => fr.work.push(Item::Eval(f, tail)),
                _ => return Err(throw("type_error")),
            },
            Op::Guard => match pop(&mut fr.stack)? {
                Value::Bool(true) => {}
                Value::Bool(false) => self.fail_arm(fr, 0),
                _ => return Err(throw("type_error")),
            },
            Op::MakeTuple(n) => {
                let items = pop_n(&mut fr.stack, n)?;
                fr.stack.push(Value::tuple(items));
                w.charge_alloc(pid, n as u64 + 1, "MAKE_TUPLE");
            }
            Op::MakeList(n) => {
                let items = pop_n(&mut fr.stack, n)?;
                fr.stack.push(Value::list(items));
                w.charge_alloc(pid, 2 * n as u64, "MAKE_LIST");
            }
            Op::Bin(o) => {
                let b = pop(&mut fr.stack)?;
                let a = pop(&mut fr.stack)?;
                let v = match o {
                    BinOp::Eq => Value::Bool(value_equal(&a, &b)),
                    BinOp::Ne => Value::Bool(!value_equal(&a, &b)),
                    BinOp::Cons => {
                        let Value::List(t) = b else { return Err(throw("type_error")) };
                        w.charge_alloc(pid, 2, "CONS");
                        Value::List(List::cons(a, t))
                    }
                    BinOp::Concat => {
                        let (Value::Str(x), Value::Str(y)) = (&a, &b) else { return Err(throw("type_error")) };
                        let mut s = String::with_capacity(x.len() + y.len());
                        s.push_str(x);
                        s.push_str(y);
                        w.charge_alloc(pid, s.len() as u64, "CONCAT");
                        Value::Str(s.into())
                    }
                    _ => {
                        let (Value::Int(x), Value::Int(y)) = (a, b) else { return Err(throw("type_error")) };
                        match o {
                            BinOp::Add => arith(x.checked_add(y))?,
                            BinOp::Sub => arith(x.checked_sub(y))?,
                            BinOp::Mul => arith(x.checked_mul(y))?,
                            BinOp::Div => arith(x.checked_div(y))?,
                            BinOp::Lt => Value::Bool(x < y),
                            _ => Value::Bool(x <= y),
                        }
                    }
                };
                let Some(Frame::Fn(fr)) = frames.last_mut() else { unreachable!() };
                fr.stack.push(v);
            }
            Op::Throw => return Err(Fault::Throw(pop(&mut fr.stack)?)),
            Op::TryPush(exc_var, trace_var, body, tail) => {
                // Body, TRY_POP and JUMP are still queued above the handler's base.
                let work = fr.work.len().checked_sub(3).ok_or_else(|| HostError::new("malformed try"))?;
                fr.handlers.push(Handler {
                    work,
                    stack: fr.stack.len(),
                    scope: fr.scope.len(),
                    exc_var,
                    trace_var,
                    body,
                    tail,
                    line: fr.line,
                });
            }
            Op::TryPop => {
                fr.handlers.pop().ok_or_else(|| HostError::new("TRY_POP without handler"))?;
            }
            Op::Test(t, depth) => {
                let v = fr.stack.last().ok_or_else(underflow)?;
                let pass = match (t, v) {
                    (Test::Int(n), Value::Int(m)) => n == *m,
                    (Test::Bool(b), Value::Bool(c)) => b == *c,
                    (Test::Str(s), Value::Str(x)) => **s == **x,
                    (Test::Unit, Value::Unit) => true,
                    (Test::Nil, Value::List(l)) => l.is_nil(),
                    (Test::Cons, Value::List(l)) => match l.uncons() {
                        Some((h, t)) => {
                            let (h, t) = (h.clone(), Value::List(t.clone()));
                            fr.stack.push(h);
                            fr.stack.push(t);
                            true
                        }
                        None => false,
                    },
                    (Test::Tuple(n), Value::Tuple(items)) if items.len() == n => {
                        let items = items.clone();
                        fr.stack.extend(items.iter().cloned());
                        true
                    }
                    _ => false,
                };
                if !pass {
                    self.fail_arm(fr, depth);
                }
            }
            Op::RecvFetch => {
                let m = builtins::recv_fetch(w, pid);
                let Some(Frame::Fn(fr)) = frames.last_mut() else { unreachable!() };
                fr.stack.push(m);
            }
            Op::RecvAccept => builtins::recv_accept(w, pid).map_err(Fault::Throw)?,
            Op::RecvReset => builtins::recv_reset(w, pid),
        }
        Ok(Step::Continue)
    }

    /// Abandons the current arm at `depth`: drop its remaining pattern work
    /// and pop the values it pushed before falling through.
    fn fail_arm(&self, fr: &mut FnFrame<'p>, depth: usize) {
        while !matches!(fr.work.last(), Some(Item::Arms { .. }) | None) {
            fr.work.pop();
        }
        let line = fr.line;
        fr.work.extend((0..depth).map(|_| Item::Op(Op::Pop, line)));
    }
}

impl<'p> Engine for Evaluator<'p> {
    type Frame = Frame<'p>;

    fn entry_frames(&self, closure: &Rc<Closure>) -> Vec<Frame<'p>> {
        vec![Frame::Fn(self.enter(closure.func, &closure.captures, Vec::new()))]
    }

    fn step(&self, w: &mut World<Frame<'p>>, pid: usize, frames: &mut Vec<Frame<'p>>) -> Result<Step, HostError> {
        let Some(Frame::Fn(fr)) = frames.last_mut() else {
            return Err(HostError::new("no function frame to execute"));
        };
        let (op, line) = self.next_op(fr).ok_or_else(|| HostError::new("evaluator ran out of work"))?;
        let blocks = matches!(op, Op::RecvFetch | Op::CallBuiltin(Builtin::RecvFetch, _));
        if blocks && builtins::fetch_blocks(w, pid) {
            fr.work.push(Item::Op(op, line));
            return Ok(Step::Blocked);
        }
        fr.line = line;
        w.retire(pid, op.opcode_index());
        match self.execute(w, pid, frames, op) {
            Ok(step) => Ok(step),
            Err(Fault::Throw(v)) => Ok(self.throw(w, pid, frames, v)),
            Err(Fault::Host(e)) => Err(e),
        }
    }
}
