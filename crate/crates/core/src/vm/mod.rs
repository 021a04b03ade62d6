//! Execution engines and the shared process world.

pub mod ast;
pub mod builtins;
pub mod bytecode;
pub mod report;
pub mod world;

use alloc::string::{String, ToString};
use core::fmt;

pub use report::{CrashReport, HostMeters, Meter, Outcome, Print, RunReport};
pub use world::{AllocCharge, Audit, SLICE};

use crate::frontend::{self, FrontendError, Module, Program};
use crate::value::Value;
use world::{finish, schedule, Engine, World};

/// A failure of the host machine itself, never of the guest program.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HostError {
    pub message: String,
}

impl HostError {
    pub fn new(message: &str) -> Self {
        HostError { message: message.to_string() }
    }
}

impl fmt::Display for HostError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "host error: {}", self.message)
    }
}

impl From<frontend::MalformedModule> for HostError {
    fn from(e: frontend::MalformedModule) -> Self {
        HostError { message: e.to_string() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Bytecode,
    Ast,
    /// The AST evaluator on a program that skipped the checker.
    AstUnchecked,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Bytecode, Mode::Ast, Mode::AstUnchecked];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Bytecode => "bytecode",
            Mode::Ast => "ast",
            Mode::AstUnchecked => "ast-unchecked",
        }
    }

    pub fn from_name(name: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == name)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Total reduction budget across all processes.
    pub fuel: Option<u64>,
    /// Record every allocation charge and per-opcode counts.
    pub audit: bool,
}

pub struct Execution {
    pub report: RunReport,
    /// The main process's result, when it returned one.
    pub value: Option<Value>,
    pub audit: Option<Audit>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunError {
    Frontend(FrontendError),
    Host(HostError),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Frontend(e) => e.fmt(f),
            RunError::Host(e) => e.fmt(f),
        }
    }
}

impl From<FrontendError> for RunError {
    fn from(e: FrontendError) -> Self {
        RunError::Frontend(e)
    }
}

impl From<HostError> for RunError {
    fn from(e: HostError) -> Self {
        RunError::Host(e)
    }
}

fn drive<E: Engine>(
    engine: &E,
    main: alloc::vec::Vec<E::Frame>,
    mode: &str,
    opts: RunOptions,
) -> Result<Execution, HostError> {
    let mut world = World::new(opts.fuel, opts.audit);
    world.add_process(main);
    let completed = schedule(engine, &mut world)?;
    let (report, value) = finish(&mut world, mode, !completed);
    Ok(Execution { report, value, audit: world.audit.take() })
}

/// Runs a compiled module on the bytecode machine.
pub fn run_module(module: &Module, opts: RunOptions) -> Result<Execution, HostError> {
    module.validate()?;
    let machine = bytecode::Machine::new(module);
    drive(&machine, machine.main_frames(), Mode::Bytecode.name(), opts)
}

/// Runs a parsed program on the AST evaluator.
pub fn run_program(program: &Program, unchecked: bool, opts: RunOptions) -> Result<Execution, HostError> {
    let evaluator = ast::Evaluator::new(program, unchecked);
    let main = evaluator.main_frames()?;
    let mode = if unchecked { Mode::AstUnchecked } else { Mode::Ast };
    drive(&evaluator, main, mode.name(), opts)
}

/// Front end plus the selected engine.
pub fn run_source(source: &str, mode: Mode, opts: RunOptions) -> Result<Execution, RunError> {
    Ok(match mode {
        Mode::Bytecode => run_module(&frontend::compile_source(source)?, opts)?,
        Mode::Ast => run_program(&frontend::check_source(source)?, false, opts)?,
        Mode::AstUnchecked => run_program(&frontend::parse_source(source)?, true, opts)?,
    })
}
