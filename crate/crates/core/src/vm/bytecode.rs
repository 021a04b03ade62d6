//! Bytecode machine.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use super::builtins::{self, exc, host_map_result_units, BuiltinResult};
use super::world::{Engine, Step, World};
use super::HostError;
use crate::frontend::{Builtin, Instr, Module};
use crate::value::{value_equal, Closure, List, Value};

pub struct Machine<'m> {
    pub module: &'m Module,
}

pub enum Frame {
    Fn(FnFrame),
    HostMap(MapFrame),
}

pub struct FnFrame {
    pub func: usize,
    /// The instruction being executed; for callers, the pending call.
    pub ip: usize,
    pub locals: Vec<Value>,
    pub stack: Vec<Value>,
    /// (handler target, operand stack height at TRY_PUSH)
    pub handlers: Vec<(usize, usize)>,
}

/// A suspended `host_map` call between two callbacks.
pub struct MapFrame {
    pub f: Rc<Closure>,
    pub pending: VecDeque<Value>,
    pub done: Vec<Value>,
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

/// Initial operand stack capacity; most frames stay within it.
const STACK_HINT: usize = 8;

/// Most spare buffers the world keeps around.
const SPARE_LIMIT: usize = 64;

/// An empty value buffer, reused when one is spare.
fn buffer<F>(w: &mut World<F>) -> Vec<Value> {
    w.spare.pop().unwrap_or_else(|| Vec::with_capacity(STACK_HINT))
}

/// Returns a finished frame's buffers to the spare pool.
fn recycle<F>(w: &mut World<F>, fr: FnFrame) {
    for mut v in [fr.locals, fr.stack] {
        if w.spare.len() < SPARE_LIMIT {
            v.clear();
            w.spare.push(v);
        }
    }
}

fn pop(stack: &mut Vec<Value>) -> Result<Value, HostError> {
    stack.pop().ok_or_else(|| HostError::new("operand stack underflow"))
}

fn peek(stack: &[Value]) -> Result<&Value, HostError> {
    stack.last().ok_or_else(|| HostError::new("operand stack underflow"))
}

/// Index of the first of the top `n` operands.
fn split_point(stack: &[Value], n: usize) -> Result<usize, HostError> {
    stack.len().checked_sub(n).ok_or_else(|| HostError::new("operand stack underflow"))
}

fn type_error() -> Fault {
    Fault::Throw(exc("type_error"))
}

fn int_pair(a: &Value, b: &Value) -> Result<(i64, i64), Fault> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Ok((*x, *y)),
        _ => Err(type_error()),
    }
}

fn arith(r: Option<i64>) -> Result<Value, Fault> {
    r.map(Value::Int).ok_or_else(|| Fault::Throw(exc("arith_error")))
}

impl<'m> Machine<'m> {
    pub fn new(module: &'m Module) -> Self {
        Machine { module }
    }

    /// A frame for `c` whose locals already hold the arguments.
    fn enter(&self, c: &Closure, mut locals: Vec<Value>, stack: Vec<Value>) -> FnFrame {
        self.fill_locals(c, &mut locals);
        FnFrame { func: c.func, ip: 0, locals, stack, handlers: Vec::new() }
    }

    /// A frame for `c` called with the single argument `arg`.
    fn enter_one<F>(&self, w: &mut World<F>, c: &Closure, arg: Value) -> FnFrame {
        let mut locals = buffer(w);
        locals.push(arg);
        let stack = buffer(w);
        self.enter(c, locals, stack)
    }

    /// Appends captures and unit padding after the arguments.
    fn fill_locals(&self, c: &Closure, locals: &mut Vec<Value>) {
        locals.extend(c.captures.iter().cloned());
        let n_slots = self.module.functions[c.func].n_slots;
        if locals.len() < n_slots {
            locals.resize(n_slots, Value::Unit);
        }
    }

    /// The frame for `main/0` at module entry.
    pub fn main_frames(&self) -> Vec<Frame> {
        let f = &self.module.functions[self.module.entry];
        vec![Frame::Fn(FnFrame {
            func: self.module.entry,
            ip: 0,
            locals: vec![Value::Unit; f.n_slots],
            stack: Vec::new(),
            handlers: Vec::new(),
        })]
    }

    /// Current guest frames, innermost first, as `[(name, line), ...]`.
    pub fn trace(&self, frames: &[Frame]) -> Value {
        Value::list(frames.iter().rev().filter_map(|fr| match fr {
            Frame::Fn(f) => {
                let func = &self.module.functions[f.func];
                let line = func.line_table.get(f.ip).copied().unwrap_or(0);
                Some(Value::tuple(vec![Value::Str(func.name.clone()), Value::Int(line as i64)]))
            }
            Frame::HostMap(_) => None,
        }))
    }

    fn check_callee(&self, callee: &Value, n: usize) -> Result<Rc<Closure>, Fault> {
        match callee {
            Value::Closure(c) if c.arity == n => Ok(c.clone()),
            Value::Closure(_) => Err(Fault::Throw(exc("arity_error"))),
            _ => Err(type_error()),
        }
    }

    /// Hands a returned value to whatever is below the finished frame.
    fn deliver<F>(&self, w: &mut World<F>, pid: usize, frames: &mut Vec<Frame>, mut v: Value) -> Step {
        loop {
            match frames.last_mut() {
                None => {
                    w.exit(pid, v);
                    return Step::Done;
                }
                Some(Frame::Fn(caller)) => {
                    caller.stack.push(v);
                    caller.ip += 1;
                    return Step::Continue;
                }
                Some(Frame::HostMap(m)) => {
                    m.done.push(v);
                    if let Some(next) = m.pending.pop_front() {
                        let f = m.f.clone();
                        let callee = self.enter_one(w, &f, next);
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

    /// Unwinds to the nearest handler or crashes the process.
    fn throw<F>(&self, w: &mut World<F>, pid: usize, frames: &mut Vec<Frame>, v: Value) -> Step {
        let trace = self.trace(frames);
        loop {
            match frames.last_mut() {
                None => {
                    w.crash(pid, &v, &trace);
                    return Step::Done;
                }
                Some(Frame::Fn(fr)) if !fr.handlers.is_empty() => {
                    let (target, height) = fr.handlers.pop().expect("non-empty");
                    fr.stack.truncate(height);
                    fr.stack.push(v);
                    fr.stack.push(trace.clone());
                    fr.ip = target;
                    w.charge_trace(pid, &trace);
                    return Step::Continue;
                }
                Some(_) => {
                    frames.pop();
                }
            }
        }
    }
}

impl<'m> Engine for Machine<'m> {
    type Frame = Frame;

    fn entry_frames(&self, closure: &Rc<Closure>) -> Vec<Frame> {
        let locals = Vec::with_capacity(self.module.functions[closure.func].n_slots);
        vec![Frame::Fn(self.enter(closure, locals, Vec::with_capacity(STACK_HINT)))]
    }

    #[inline]
    fn step(&self, w: &mut World<Frame>, pid: usize, frames: &mut Vec<Frame>) -> Result<Step, HostError> {
        let Some(Frame::Fn(top)) = frames.last() else {
            return Err(HostError::new("no function frame to execute"));
        };
        let func = &self.module.functions[top.func];
        let Some(ins) = func.code.get(top.ip) else {
            return Err(HostError::new(&format!("{}: instruction pointer {} out of range", func.name, top.ip)));
        };
        let blocks = matches!(ins, Instr::RecvFetch | Instr::CallBuiltin(Builtin::RecvFetch, _));
        if blocks && builtins::fetch_blocks(w, pid) {
            return Ok(Step::Blocked);
        }
        w.retire(pid, ins.opcode_index());
        match self.execute(w, pid, frames, ins) {
            Ok(step) => Ok(step),
            Err(Fault::Throw(v)) => Ok(self.throw(w, pid, frames, v)),
            Err(Fault::Host(e)) => Err(e),
        }
    }
}

impl<'m> Machine<'m> {
    fn execute(&self, w: &mut World<Frame>, pid: usize, frames: &mut Vec<Frame>, ins: &Instr) -> Result<Step, Fault> {
        let Some(Frame::Fn(fr)) = frames.last_mut() else { unreachable!() };
        let stack = &mut fr.stack;
        match ins {
            Instr::PushInt(n) => stack.push(Value::Int(*n)),
            Instr::PushBool(b) => stack.push(Value::Bool(*b)),
            Instr::PushStr(k) => {
                let s = self.module.constants[*k as usize].clone();
                let len = s.len() as u64;
                stack.push(Value::Str(s));
                w.charge_alloc(pid, len, "PUSH_STR");
            }
            Instr::PushUnit => stack.push(Value::Unit),
            Instr::Load(s) => stack.push(fr.locals[*s as usize].clone()),
            Instr::Store(s) => fr.locals[*s as usize] = pop(stack)?,
            Instr::Pop => {
                pop(stack)?;
            }
            Instr::Dup => {
                let v = peek(stack)?.clone();
                stack.push(v);
            }
            Instr::MakeClosure(f, slots) => {
                let func = &self.module.functions[*f as usize];
                let captures: Vec<Value> = slots.iter().map(|&s| fr.locals[s as usize].clone()).collect();
                let k = captures.len() as u64;
                let id = w.next_closure_id(pid);
                stack.push(Value::Closure(Rc::new(Closure {
                    func: *f as usize,
                    name: func.name.clone(),
                    arity: func.arity,
                    captures,
                    id,
                    owner: pid as u64,
                })));
                w.charge_alloc(pid, k + 2, "MAKE_CLOSURE");
            }
            Instr::Call(n) | Instr::TailCall(n) => {
                let n = *n as usize;
                if stack.len() < n + 1 {
                    return Err(HostError::new("operand stack underflow").into());
                }
                let base = stack.len() - n;
                let c = self.check_callee(&stack[base - 1], n)?;
                if matches!(ins, Instr::TailCall(_)) {
                    // Reuse the finished frame's buffers.
                    fr.locals.clear();
                    fr.locals.extend(stack.drain(base..));
                    stack.clear();
                    fr.handlers.clear();
                    self.fill_locals(&c, &mut fr.locals);
                    fr.func = c.func;
                    fr.ip = 0;
                } else {
                    let mut locals = buffer(w);
                    locals.extend(stack.drain(base..));
                    stack.pop();
                    let callee = self.enter(&c, locals, buffer(w));
                    frames.push(Frame::Fn(callee));
                }
                return Ok(Step::Continue);
            }
            Instr::Ret => {
                let v = pop(stack)?;
                if let Some(Frame::Fn(done)) = frames.pop() {
                    recycle(w, done);
                }
                return Ok(self.deliver(w, pid, frames, v));
            }
            Instr::CallBuiltin(b, n) => {
                let base = split_point(stack, *n as usize)?;
                let result = {
                    let frames: &[Frame] = frames;
                    let Some(Frame::Fn(fr)) = frames.last() else { unreachable!() };
                    let trace = || self.trace(frames);
                    builtins::call_builtin(self, w, pid, *b, &fr.stack[base..], &trace)
                };
                let Some(Frame::Fn(fr)) = frames.last_mut() else { unreachable!() };
                fr.stack.truncate(base);
                match result {
                    BuiltinResult::Value(v) => fr.stack.push(v),
                    BuiltinResult::Throw(e) => return Err(Fault::Throw(e)),
                    BuiltinResult::HostMap { items, f } => {
                        let mut pending: VecDeque<Value> = items.into();
                        let Some(first) = pending.pop_front() else {
                            fr.stack.push(Value::nil());
                            fr.ip += 1;
                            return Ok(Step::Continue);
                        };
                        let callee = self.enter_one(w, &f, first);
                        frames.push(Frame::HostMap(MapFrame { f, pending, done: Vec::new() }));
                        frames.push(Frame::Fn(callee));
                        return Ok(Step::Continue);
                    }
                }
            }
            Instr::Jump(t) => {
                fr.ip = *t as usize;
                return Ok(Step::Continue);
            }
            Instr::JumpIfFalse(t) => match pop(stack)? {
                Value::Bool(true) => {}
                Value::Bool(false) => {
                    fr.ip = *t as usize;
                    return Ok(Step::Continue);
                }
                _ => return Err(type_error()),
            },
            Instr::MakeTuple(n) => {
                let base = split_point(stack, *n as usize)?;
                let items: Rc<[Value]> = stack.drain(base..).collect();
                stack.push(Value::Tuple(items));
                w.charge_alloc(pid, *n as u64 + 1, "MAKE_TUPLE");
            }
            Instr::MakeList(n) => {
                let base = split_point(stack, *n as usize)?;
                let list = stack.drain(base..).rev().fold(List::nil(), |tail, head| List::cons(head, tail));
                stack.push(Value::List(list));
                w.charge_alloc(pid, 2 * *n as u64, "MAKE_LIST");
            }
            Instr::Cons => {
                let t = pop(stack)?;
                let h = pop(stack)?;
                let Value::List(t) = t else { return Err(type_error()) };
                stack.push(Value::List(List::cons(h, t)));
                w.charge_alloc(pid, 2, "CONS");
            }
            Instr::Add | Instr::Sub | Instr::Mul | Instr::Div | Instr::Lt | Instr::Le => {
                let b = pop(stack)?;
                let a = pop(stack)?;
                let (x, y) = int_pair(&a, &b)?;
                stack.push(match ins {
                    Instr::Add => arith(x.checked_add(y))?,
                    Instr::Sub => arith(x.checked_sub(y))?,
                    Instr::Mul => arith(x.checked_mul(y))?,
                    Instr::Div => arith(x.checked_div(y))?,
                    Instr::Lt => Value::Bool(x < y),
                    _ => Value::Bool(x <= y),
                });
            }
            Instr::Eq | Instr::Ne => {
                let b = pop(stack)?;
                let a = pop(stack)?;
                stack.push(Value::Bool(value_equal(&a, &b) == matches!(ins, Instr::Eq)));
            }
            Instr::Concat => {
                let b = pop(stack)?;
                let a = pop(stack)?;
                let (Value::Str(x), Value::Str(y)) = (&a, &b) else { return Err(type_error()) };
                let mut s = alloc::string::String::with_capacity(x.len() + y.len());
                s.push_str(x);
                s.push_str(y);
                let len = s.len() as u64;
                stack.push(Value::Str(s.into()));
                w.charge_alloc(pid, len, "CONCAT");
            }
            Instr::Throw => return Err(Fault::Throw(pop(stack)?)),
            Instr::TryPush(t) => fr.handlers.push((*t as usize, stack.len())),
            Instr::TryPop => {
                fr.handlers.pop().ok_or_else(|| HostError::new("TRY_POP without handler"))?;
            }
            Instr::TestInt(..)
            | Instr::TestBool(..)
            | Instr::TestStr(..)
            | Instr::TestUnit(_)
            | Instr::TestNil(_)
            | Instr::TestCons(_)
            | Instr::TestTuple(..) => {
                let v = peek(stack)?;
                let pass = match (ins, v) {
                    (Instr::TestInt(n, _), Value::Int(m)) => n == m,
                    (Instr::TestBool(b, _), Value::Bool(c)) => b == c,
                    (Instr::TestStr(k, _), Value::Str(s)) => *self.module.constants[*k as usize] == **s,
                    (Instr::TestUnit(_), Value::Unit) => true,
                    (Instr::TestNil(_), Value::List(l)) => l.is_nil(),
                    (Instr::TestCons(_), Value::List(l)) => match l.uncons() {
                        Some((h, t)) => {
                            let (h, t) = (h.clone(), Value::List(t.clone()));
                            stack.push(h);
                            stack.push(t);
                            true
                        }
                        None => false,
                    },
                    (Instr::TestTuple(n, _), Value::Tuple(items)) if items.len() == *n as usize => {
                        let items = items.clone();
                        stack.extend(items.iter().cloned());
                        true
                    }
                    _ => false,
                };
                if !pass {
                    fr.ip = ins.target().expect("tests carry a target") as usize;
                    return Ok(Step::Continue);
                }
            }
            Instr::RecvFetch => {
                let m = builtins::recv_fetch(w, pid);
                let Some(Frame::Fn(fr)) = frames.last_mut() else { unreachable!() };
                fr.stack.push(m);
            }
            Instr::RecvAccept => builtins::recv_accept(w, pid).map_err(Fault::Throw)?,
            Instr::RecvReset => builtins::recv_reset(w, pid),
        }
        let Some(Frame::Fn(fr)) = frames.last_mut() else { unreachable!() };
        fr.ip += 1;
        Ok(Step::Continue)
    }
}
