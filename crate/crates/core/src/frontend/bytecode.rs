//! Instruction set, compiled modules and their textual listing.

use alloc::boxed::Box;
use alloc::format;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use super::ast::Builtin;
use crate::value::quote;

/// Jump targets are absolute instruction indices within the function.
/// `TEST_*` instructions peek at the top of the operand stack and jump to
/// their target when the test fails.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instr {
    PushInt(i64),
    PushBool(bool),
    PushStr(u32),
    PushUnit,
    Load(u32),
    Store(u32),
    Pop,
    Dup,
    MakeClosure(u32, Box<[u32]>),
    Call(u32),
    TailCall(u32),
    Ret,
    CallBuiltin(Builtin, u32),
    Jump(u32),
    JumpIfFalse(u32),
    MakeTuple(u32),
    MakeList(u32),
    Cons,
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Eq,
    Ne,
    Concat,
    Throw,
    TryPush(u32),
    TryPop,
    TestInt(i64, u32),
    TestBool(bool, u32),
    TestStr(u32, u32),
    TestUnit(u32),
    TestNil(u32),
    TestCons(u32),
    TestTuple(u32, u32),
    RecvFetch,
    RecvAccept,
    RecvReset,
}

/// Every opcode name, in declaration order.
pub const OPCODES: [&str; 40] = [
    "PUSH_INT",
    "PUSH_BOOL",
    "PUSH_STR",
    "PUSH_UNIT",
    "LOAD",
    "STORE",
    "POP",
    "DUP",
    "MAKE_CLOSURE",
    "CALL",
    "TAILCALL",
    "RET",
    "CALL_BUILTIN",
    "JUMP",
    "JUMP_IF_FALSE",
    "MAKE_TUPLE",
    "MAKE_LIST",
    "CONS",
    "ADD",
    "SUB",
    "MUL",
    "DIV",
    "LT",
    "LE",
    "EQ",
    "NE",
    "CONCAT",
    "THROW",
    "TRY_PUSH",
    "TRY_POP",
    "TEST_INT",
    "TEST_BOOL",
    "TEST_STR",
    "TEST_UNIT",
    "TEST_NIL",
    "TEST_CONS",
    "TEST_TUPLE",
    "RECV_FETCH",
    "RECV_ACCEPT",
    "RECV_RESET",
];

impl Instr {
    /// Index into [`OPCODES`].
    pub fn opcode_index(&self) -> usize {
        match self {
            Instr::PushInt(_) => 0,
            Instr::PushBool(_) => 1,
            Instr::PushStr(_) => 2,
            Instr::PushUnit => 3,
            Instr::Load(_) => 4,
            Instr::Store(_) => 5,
            Instr::Pop => 6,
            Instr::Dup => 7,
            Instr::MakeClosure(..) => 8,
            Instr::Call(_) => 9,
            Instr::TailCall(_) => 10,
            Instr::Ret => 11,
            Instr::CallBuiltin(..) => 12,
            Instr::Jump(_) => 13,
            Instr::JumpIfFalse(_) => 14,
            Instr::MakeTuple(_) => 15,
            Instr::MakeList(_) => 16,
            Instr::Cons => 17,
            Instr::Add => 18,
            Instr::Sub => 19,
            Instr::Mul => 20,
            Instr::Div => 21,
            Instr::Lt => 22,
            Instr::Le => 23,
            Instr::Eq => 24,
            Instr::Ne => 25,
            Instr::Concat => 26,
            Instr::Throw => 27,
            Instr::TryPush(_) => 28,
            Instr::TryPop => 29,
            Instr::TestInt(..) => 30,
            Instr::TestBool(..) => 31,
            Instr::TestStr(..) => 32,
            Instr::TestUnit(_) => 33,
            Instr::TestNil(_) => 34,
            Instr::TestCons(_) => 35,
            Instr::TestTuple(..) => 36,
            Instr::RecvFetch => 37,
            Instr::RecvAccept => 38,
            Instr::RecvReset => 39,
        }
    }

    pub fn opcode(&self) -> &'static str {
        OPCODES[self.opcode_index()]
    }

    /// Jump target carried by the instruction, if any.
    pub fn target(&self) -> Option<u32> {
        match self {
            Instr::Jump(t)
            | Instr::JumpIfFalse(t)
            | Instr::TryPush(t)
            | Instr::TestInt(_, t)
            | Instr::TestBool(_, t)
            | Instr::TestStr(_, t)
            | Instr::TestUnit(t)
            | Instr::TestNil(t)
            | Instr::TestCons(t)
            | Instr::TestTuple(_, t) => Some(*t),
            _ => None,
        }
    }

    pub(crate) fn target_mut(&mut self) -> Option<&mut u32> {
        match self {
            Instr::Jump(t)
            | Instr::JumpIfFalse(t)
            | Instr::TryPush(t)
            | Instr::TestInt(_, t)
            | Instr::TestBool(_, t)
            | Instr::TestStr(_, t)
            | Instr::TestUnit(t)
            | Instr::TestNil(t)
            | Instr::TestCons(t)
            | Instr::TestTuple(_, t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub name: Rc<str>,
    pub arity: usize,
    pub n_slots: usize,
    pub code: Vec<Instr>,
    pub line_table: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Module {
    pub functions: Vec<Function>,
    pub constants: Vec<Rc<str>>,
    pub entry: usize,
}

/// A module that cannot be executed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MalformedModule {
    pub function: String,
    pub index: Option<usize>,
    pub reason: String,
}

impl fmt::Display for MalformedModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "malformed module: {} @{}: {}", self.function, i, self.reason),
            None => write!(f, "malformed module: {}: {}", self.function, self.reason),
        }
    }
}

impl Module {
    /// Structural validation: targets, slots, constants, function indices,
    /// line table shape and the entry point.
    pub fn validate(&self) -> Result<(), MalformedModule> {
        let bad = |f: &Function, index: Option<usize>, reason: String| MalformedModule {
            function: String::from(&*f.name),
            index,
            reason,
        };
        let Some(entry) = self.functions.get(self.entry) else {
            return Err(MalformedModule {
                function: String::from("<module>"),
                index: None,
                reason: format!("entry index {} out of range", self.entry),
            });
        };
        if entry.arity != 0 {
            return Err(bad(entry, None, String::from("entry function must take no arguments")));
        }
        for f in &self.functions {
            if f.line_table.len() != f.code.len() {
                return Err(bad(f, None, String::from("line table length differs from code")));
            }
            if f.n_slots < f.arity {
                return Err(bad(f, None, String::from("fewer slots than parameters")));
            }
            if f.code.is_empty() {
                return Err(bad(f, None, String::from("empty function body")));
            }
            for (i, ins) in f.code.iter().enumerate() {
                if f.line_table[i] == 0 {
                    return Err(bad(f, Some(i), String::from("line numbers start at 1")));
                }
                if let Some(t) = ins.target() {
                    if t as usize >= f.code.len() {
                        return Err(bad(f, Some(i), format!("bad jump target {t}")));
                    }
                }
                match ins {
                    Instr::Load(s) | Instr::Store(s) if *s as usize >= f.n_slots => {
                        return Err(bad(f, Some(i), format!("slot {s} out of range")));
                    }
                    Instr::PushStr(k) | Instr::TestStr(k, _) if *k as usize >= self.constants.len() => {
                        return Err(bad(f, Some(i), format!("constant {k} out of range")));
                    }
                    Instr::MakeClosure(g, slots) => {
                        if *g as usize >= self.functions.len() {
                            return Err(bad(f, Some(i), format!("function {g} out of range")));
                        }
                        if slots.iter().any(|s| *s as usize >= f.n_slots) {
                            return Err(bad(f, Some(i), String::from("capture slot out of range")));
                        }
                    }
                    Instr::CallBuiltin(b, n) if b.arity() != *n as usize => {
                        return Err(bad(f, Some(i), format!("builtin {} arity", b.name())));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| &*f.name == name)
    }
}

fn write_instr(out: &mut String, m: &Module, ins: &Instr) {
    let _ = out.write_str(ins.opcode());
    let s = |k: &u32| quote(&m.constants[*k as usize]);
    let _ = match ins {
        Instr::PushInt(n) => write!(out, " {n}"),
        Instr::PushBool(b) => write!(out, " {b}"),
        Instr::PushStr(k) => write!(out, " {k} {}", s(k)),
        Instr::Load(x) | Instr::Store(x) => write!(out, " {x}"),
        Instr::MakeClosure(f, slots) => {
            let _ = write!(out, " {f} [");
            for (i, slot) in slots.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{slot}");
            }
            out.write_char(']')
        }
        Instr::Call(n) | Instr::TailCall(n) | Instr::MakeTuple(n) | Instr::MakeList(n) => {
            write!(out, " {n}")
        }
        Instr::CallBuiltin(b, n) => write!(out, " {} {n}", b.name()),
        Instr::Jump(t)
        | Instr::JumpIfFalse(t)
        | Instr::TryPush(t)
        | Instr::TestUnit(t)
        | Instr::TestNil(t)
        | Instr::TestCons(t) => write!(out, " {t}"),
        Instr::TestInt(n, t) => write!(out, " {n} {t}"),
        Instr::TestBool(b, t) => write!(out, " {b} {t}"),
        Instr::TestStr(k, t) => write!(out, " {k} {} {t}", s(k)),
        Instr::TestTuple(n, t) => write!(out, " {n} {t}"),
        _ => Ok(()),
    };
}

/// One line per instruction, `IDX: OPCODE args ; line=N`, under a
/// `== name/arity slots=K ==` header per function.
pub fn disassemble(m: &Module) -> String {
    let mut out = String::new();
    for (fi, f) in m.functions.iter().enumerate() {
        if fi > 0 {
            out.push('\n');
        }
        let _ = write!(out, "== {}/{} slots={} ==", f.name, f.arity, f.n_slots);
        for (i, ins) in f.code.iter().enumerate() {
            let _ = write!(out, "\n{i}: ");
            write_instr(&mut out, m, ins);
            let _ = write!(out, " ; line={}", f.line_table[i]);
        }
    }
    out
}
