//! Process table, mailboxes, meters and the reduction-counted scheduler,
//! shared by the bytecode machine and the AST evaluator.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::mem;

use super::report::{CrashReport, HostMeters, Meter, Outcome, Print, RunReport};
use super::HostError;
use crate::frontend::OPCODES;
use crate::value::{format_value, value_size, Closure, Value};

/// Reductions a process may use before it is rotated to the back of the
/// run queue.
pub const SLICE: u64 = 100;

#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    Runnable,
    Blocked,
    Exited(Value),
    Crashed,
}

/// Engine-independent per-process state.
#[derive(Debug)]
pub struct Proc {
    pub pid: u64,
    pub mailbox: Vec<Value>,
    pub cursor: usize,
    pub status: Status,
    pub started: bool,
    pub reductions: u64,
    pub alloc: u64,
    pub next_closure_id: u64,
    pub next_ref_id: u64,
    pub refs: BTreeMap<u64, Value>,
}

/// One allocation charge, recorded in audit mode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllocCharge {
    pub pid: u64,
    pub units: u64,
    pub what: &'static str,
}

#[derive(Clone, Debug)]
pub struct Audit {
    pub charges: Vec<AllocCharge>,
    /// Executions per opcode, indexed like [`OPCODES`].
    pub opcodes: [u64; OPCODES.len()],
}

impl Default for Audit {
    fn default() -> Self {
        Audit { charges: Vec::new(), opcodes: [0; OPCODES.len()] }
    }
}

/// Result of executing one instruction.
pub enum Step {
    Continue,
    /// The instruction cannot run yet; nothing was charged.
    Blocked,
    /// The process exited or crashed.
    Done,
}

/// A frame representation plus single-instruction execution.
pub trait Engine {
    type Frame;

    /// Frames of a fresh process that will call `closure` with no arguments.
    fn entry_frames(&self, closure: &Rc<Closure>) -> Vec<Self::Frame>;

    /// Executes the next instruction of `pid`, whose frames have been moved
    /// out of the world into `frames` for the duration of the call.
    fn step(
        &self,
        world: &mut World<Self::Frame>,
        pid: usize,
        frames: &mut Vec<Self::Frame>,
    ) -> Result<Step, HostError>;
}

pub struct World<F> {
    pub procs: Vec<Proc>,
    pub frames: Vec<Vec<F>>,
    pub run_queue: VecDeque<usize>,
    pub prints: Vec<Print>,
    pub crashes: Vec<CrashReport>,
    pub instrs: u64,
    pub total_reductions: u64,
    pub fuel: Option<u64>,
    pub audit: Option<Audit>,
    /// Cleared value buffers kept for reuse by new frames.
    pub spare: Vec<Vec<Value>>,
}

impl<F> World<F> {
    pub fn new(fuel: Option<u64>, audit: bool) -> Self {
        World {
            procs: Vec::new(),
            frames: Vec::new(),
            run_queue: VecDeque::new(),
            prints: Vec::new(),
            crashes: Vec::new(),
            instrs: 0,
            total_reductions: 0,
            fuel,
            audit: audit.then(Audit::default),
            spare: Vec::new(),
        }
    }

    /// Creates a runnable process at the back of the run queue.
    pub fn add_process(&mut self, frames: Vec<F>) -> u64 {
        let pid = self.procs.len() as u64;
        self.procs.push(Proc {
            pid,
            mailbox: Vec::new(),
            cursor: 0,
            status: Status::Runnable,
            started: false,
            reductions: 0,
            alloc: 0,
            next_closure_id: 0,
            next_ref_id: 0,
            refs: BTreeMap::new(),
        });
        self.frames.push(frames);
        self.run_queue.push_back(pid as usize);
        pid
    }

    /// Charges the base reduction of one retired instruction.
    pub fn retire(&mut self, pid: usize, opcode: usize) {
        self.procs[pid].reductions += 1;
        self.total_reductions += 1;
        self.instrs += 1;
        if let Some(a) = &mut self.audit {
            a.opcodes[opcode] += 1;
        }
    }

    pub fn surcharge(&mut self, pid: usize, reductions: u64) {
        self.procs[pid].reductions += reductions;
        self.total_reductions += reductions;
    }

    pub fn charge_alloc(&mut self, pid: usize, units: u64, what: &'static str) {
        self.procs[pid].alloc += units;
        if let Some(a) = &mut self.audit {
            a.charges.push(AllocCharge { pid: pid as u64, units, what });
        }
    }

    pub fn next_closure_id(&mut self, pid: usize) -> u64 {
        let p = &mut self.procs[pid];
        p.next_closure_id += 1;
        p.next_closure_id - 1
    }

    /// True for a pid whose process exists and has not finished.
    pub fn is_live(&self, pid: u64) -> bool {
        self.procs.get(pid as usize).is_some_and(|p| matches!(p.status, Status::Runnable | Status::Blocked))
    }

    /// Appends `msg` to `to`'s mailbox, waking it if it was blocked.
    pub fn deliver(&mut self, to: usize, msg: Value) {
        let p = &mut self.procs[to];
        match p.status {
            Status::Exited(_) | Status::Crashed => {}
            Status::Blocked => {
                p.mailbox.push(msg);
                p.status = Status::Runnable;
                self.run_queue.push_back(to);
            }
            Status::Runnable => p.mailbox.push(msg),
        }
    }

    pub fn exit(&mut self, pid: usize, v: Value) {
        self.procs[pid].status = Status::Exited(v);
    }

    pub fn crash(&mut self, pid: usize, exc: &Value, trace: &Value) {
        self.procs[pid].status = Status::Crashed;
        self.crashes.push(CrashReport { pid: pid as u64, value: format_value(exc), trace: format_value(trace) });
    }

    /// Charge for handing a freshly built trace to a catch handler.
    pub fn charge_trace(&mut self, pid: usize, trace: &Value) {
        self.charge_alloc(pid, value_size(trace), "trace");
    }
}

/// Drives the world to completion.
pub fn schedule<E: Engine>(engine: &E, world: &mut World<E::Frame>) -> Result<bool, HostError> {
    while let Some(pid) = world.run_queue.pop_front() {
        let slice_start = world.procs[pid].reductions;
        let mut frames = mem::take(&mut world.frames[pid]);
        let result = run_slice(engine, world, pid, &mut frames, slice_start);
        world.frames[pid] = frames;
        if !result? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Runs one slice. Returns `false` when fuel ran out.
fn run_slice<E: Engine>(
    engine: &E,
    world: &mut World<E::Frame>,
    pid: usize,
    frames: &mut Vec<E::Frame>,
    slice_start: u64,
) -> Result<bool, HostError> {
    loop {
        if world.fuel.is_some_and(|f| world.total_reductions >= f) {
            world.run_queue.push_front(pid);
            return Ok(false);
        }
        if world.procs[pid].reductions - slice_start >= SLICE {
            world.run_queue.push_back(pid);
            return Ok(true);
        }
        if !world.procs[pid].started {
            world.procs[pid].started = true;
            world.surcharge(pid, 1);
            continue;
        }
        match engine.step(world, pid, frames)? {
            Step::Continue => {}
            Step::Blocked => {
                world.procs[pid].status = Status::Blocked;
                return Ok(true);
            }
            Step::Done => return Ok(true),
        }
    }
}

/// Assembles the report once scheduling has stopped.
pub fn finish<F>(world: &mut World<F>, mode: &str, fuel_exhausted: bool) -> (RunReport, Option<Value>) {
    let mut value = None;
    let outcome = if fuel_exhausted {
        Outcome::FuelExhausted
    } else {
        match &world.procs[0].status {
            Status::Exited(v) => {
                value = Some(v.clone());
                Outcome::Value(format_value(v))
            }
            Status::Crashed => {
                let c = world.crashes.iter().find(|c| c.pid == 0).expect("a crashed process has a crash report");
                Outcome::Crash { value: c.value.clone(), trace: c.trace.clone() }
            }
            Status::Blocked | Status::Runnable => {
                Outcome::Deadlock(world.procs.iter().filter(|p| p.status == Status::Blocked).map(|p| p.pid).collect())
            }
        }
    };
    let meters: Vec<Meter> =
        world.procs.iter().map(|p| Meter { pid: p.pid, reductions: p.reductions, alloc: p.alloc }).collect();
    let host = HostMeters {
        instrs: world.instrs,
        reductions: world.total_reductions,
        alloc: meters.iter().map(|m| m.alloc).sum(),
        depth: None,
    };
    let report = RunReport {
        mode: String::from(mode),
        outcome,
        prints: mem::take(&mut world.prints),
        crashes: mem::take(&mut world.crashes),
        meters,
        host,
    };
    (report, value)
}
