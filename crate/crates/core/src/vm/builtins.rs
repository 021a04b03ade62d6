//! Builtin operations. Both engines charge the instruction's base reduction
//! before calling in here; surcharges and allocation charges happen here.

use alloc::rc::Rc;
use alloc::vec::Vec;

use super::world::{Engine, World};
use crate::frontend::Builtin;
use crate::value::{value_size, Closure, Value};

pub enum BuiltinResult {
    Value(Value),
    Throw(Value),
    /// `host_map` validated its arguments; the engine runs the callbacks.
    HostMap {
        items: Vec<Value>,
        f: Rc<Closure>,
    },
}

/// A guest exception value with a fixed tag.
pub fn exc(tag: &str) -> Value {
    Value::str(tag)
}

/// Allocation charged when a `host_map` call completes.
pub fn host_map_result_units(len: usize) -> u64 {
    2 * len as u64
}

/// True when `__recv_fetch` / `RECV_FETCH` would block.
pub fn fetch_blocks<F>(world: &World<F>, pid: usize) -> bool {
    let p = &world.procs[pid];
    p.cursor >= p.mailbox.len()
}

pub fn recv_fetch<F>(world: &mut World<F>, pid: usize) -> Value {
    let p = &mut world.procs[pid];
    p.cursor += 1;
    p.mailbox[p.cursor - 1].clone()
}

pub fn recv_accept<F>(world: &mut World<F>, pid: usize) -> Result<(), Value> {
    let p = &mut world.procs[pid];
    if p.cursor == 0 {
        return Err(exc("receive_error"));
    }
    p.mailbox.remove(p.cursor - 1);
    p.cursor = 0;
    Ok(())
}

pub fn recv_reset<F>(world: &mut World<F>, pid: usize) {
    world.procs[pid].cursor = 0;
}

pub fn call_builtin<E: Engine>(
    engine: &E,
    world: &mut World<E::Frame>,
    pid: usize,
    b: Builtin,
    args: &[Value],
    trace: &dyn Fn() -> Value,
) -> BuiltinResult {
    use BuiltinResult::{Throw, Value as Ok};
    let type_error = || Throw(exc("type_error"));
    if args.len() != b.arity() {
        return Throw(exc("arity_error"));
    }
    match b {
        Builtin::Print => match &args[0] {
            Value::Str(s) => {
                world.prints.push(super::report::Print { pid: pid as u64, text: s.as_ref().into() });
                Ok(Value::Unit)
            }
            _ => type_error(),
        },
        Builtin::Vtime => Ok(Value::Int(world.procs[pid].reductions as i64)),
        Builtin::MemUsed => Ok(Value::Int(world.procs[pid].alloc as i64)),
        Builtin::Stacktrace => {
            let t = trace();
            world.charge_alloc(pid, value_size(&t), "stacktrace");
            Ok(t)
        }
        Builtin::FunId => match &args[0] {
            Value::Closure(c) => Ok(Value::Int(c.id as i64)),
            _ => type_error(),
        },
        Builtin::SelfPid => Ok(Value::Pid(pid as u64)),
        Builtin::Spawn => match &args[0] {
            Value::Closure(c) if c.arity == 0 => {
                world.charge_alloc(pid, 8, "spawn");
                let frames = engine.entry_frames(c);
                Ok(Value::Pid(world.add_process(frames)))
            }
            _ => type_error(),
        },
        Builtin::Send => match &args[0] {
            Value::Pid(to) if world.is_live(*to) => {
                world.charge_alloc(pid, value_size(&args[1]), "send");
                world.deliver(*to as usize, args[1].clone());
                Ok(args[1].clone())
            }
            Value::Pid(_) => Throw(exc("bad_pid")),
            _ => type_error(),
        },
        Builtin::RecvFetch => Ok(recv_fetch(world, pid)),
        Builtin::RecvAccept => match recv_accept(world, pid) {
            Result::Ok(()) => Ok(Value::Unit),
            Err(e) => Throw(e),
        },
        Builtin::RecvReset => {
            recv_reset(world, pid);
            Ok(Value::Unit)
        }
        Builtin::HostMap => match (&args[0], &args[1]) {
            (Value::List(l), Value::Closure(f)) if f.arity == 1 => {
                let items: Vec<Value> = l.iter().cloned().collect();
                world.surcharge(pid, items.len() as u64);
                BuiltinResult::HostMap { items, f: f.clone() }
            }
            _ => type_error(),
        },
        Builtin::Ref => {
            let p = &mut world.procs[pid];
            let id = p.next_ref_id;
            p.next_ref_id += 1;
            p.refs.insert(id, args[0].clone());
            world.charge_alloc(pid, 1 + value_size(&args[0]), "ref");
            Ok(Value::Ref(id))
        }
        Builtin::Get => match &args[0] {
            Value::Ref(id) => match world.procs[pid].refs.get(id) {
                Some(v) => Ok(v.clone()),
                None => Throw(exc("bad_ref")),
            },
            _ => type_error(),
        },
        Builtin::Set => match &args[0] {
            Value::Ref(id) => match world.procs[pid].refs.get_mut(id) {
                Some(cell) => {
                    *cell = args[1].clone();
                    world.charge_alloc(pid, value_size(&args[1]), "set");
                    Ok(Value::Unit)
                }
                None => Throw(exc("bad_ref")),
            },
            _ => type_error(),
        },
        Builtin::SysInfo => match args[0].as_str() {
            Some(key) => {
                let answer = match key {
                    "version" => "gl-1",
                    "mode" => "native",
                    _ => return Throw(exc("bad_key")),
                };
                world.charge_alloc(pid, answer.len() as u64, "sys_info");
                Ok(Value::str(answer))
            }
            None => type_error(),
        },
    }
}
