//! Bytecode compiler.
//!
//! Lambdas are lifted to module functions numbered after the top-level
//! definitions; a lifted function's slots are its parameters, then its
//! captures, then its own bindings. Every binding occurrence gets a fresh
//! slot.

use alloc::boxed::Box;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;

use super::ast::{free_vars, Arm, BinOp, Expr, ExprKind, Lambda, Pattern, Program};
use super::bytecode::{Function, Instr, Module};

struct ModuleBuilder<'p> {
    program: &'p Program,
    constants: Vec<Rc<str>>,
    lifted: Vec<Option<Function>>,
}

struct FnBuilder {
    code: Vec<Instr>,
    lines: Vec<u32>,
    scope: Vec<(String, u32)>,
    n_slots: u32,
}

/// Failure sites of one arm: instruction index and the number of values
/// above the arm's base stack height at that point.
type FailSites = Vec<(usize, u32)>;

/// Compiles a checked program. The output is a pure function of the tree.
pub fn compile(program: &Program) -> Module {
    let mut mb =
        ModuleBuilder { program, constants: Vec::new(), lifted: (0..program.lambda_count).map(|_| None).collect() };
    let mut functions = Vec::new();
    for def in &program.defs {
        let f = mb.function(&def.name, &def.params, &[], &def.body, def.line);
        functions.push(f);
    }
    functions.extend(mb.lifted.into_iter().map(|f| f.expect("every lambda is compiled")));
    let entry = program.defs.iter().position(|d| d.name == "main" && d.params.is_empty()).unwrap_or(0);
    Module { functions, constants: mb.constants, entry }
}

impl<'p> ModuleBuilder<'p> {
    fn constant(&mut self, s: &Rc<str>) -> u32 {
        if let Some(k) = self.constants.iter().position(|c| c == s) {
            return k as u32;
        }
        self.constants.push(s.clone());
        (self.constants.len() - 1) as u32
    }

    fn function(&mut self, name: &str, params: &[String], captures: &[String], body: &Expr, line: u32) -> Function {
        let mut fb = FnBuilder { code: Vec::new(), lines: Vec::new(), scope: Vec::new(), n_slots: 0 };
        for p in params.iter().chain(captures) {
            fb.bind(p);
        }
        self.expr(&mut fb, body, true);
        fb.emit(Instr::Ret, line);
        Function {
            name: Rc::from(name),
            arity: params.len(),
            n_slots: fb.n_slots as usize,
            code: fb.code,
            line_table: fb.lines,
        }
    }

    fn expr(&mut self, fb: &mut FnBuilder, e: &Expr, tail: bool) {
        let line = e.line;
        match &e.kind {
            ExprKind::Int(n) => fb.emit(Instr::PushInt(*n), line),
            ExprKind::Bool(b) => fb.emit(Instr::PushBool(*b), line),
            ExprKind::Str(s) => {
                let k = self.constant(s);
                fb.emit(Instr::PushStr(k), line);
            }
            ExprKind::Unit => fb.emit(Instr::PushUnit, line),
            ExprKind::Var(name) => match fb.lookup(name) {
                Some(slot) => fb.emit(Instr::Load(slot), line),
                None => {
                    let f = self.program.find(name).expect("checked: variable is bound");
                    fb.emit(Instr::MakeClosure(f as u32, Box::new([])), line);
                }
            },
            ExprKind::Let(name, bound, body) => {
                self.expr(fb, bound, false);
                let mark = fb.scope.len();
                let slot = fb.bind(name);
                fb.emit(Instr::Store(slot), line);
                self.expr(fb, body, tail);
                fb.scope.truncate(mark);
            }
            ExprKind::If(c, t, f) => {
                self.expr(fb, c, false);
                let to_else = fb.emit_at(Instr::JumpIfFalse(0), line);
                self.expr(fb, t, tail);
                let to_end = fb.emit_at(Instr::Jump(0), line);
                fb.patch_here(to_else);
                self.expr(fb, f, tail);
                fb.patch_here(to_end);
            }
            ExprKind::Match(subject, arms) => {
                self.expr(fb, subject, false);
                let ends = self.arms(fb, arms, tail, false);
                fb.emit(Instr::Pop, line);
                let k = self.constant(&Rc::from("match_error"));
                fb.emit(Instr::PushStr(k), line);
                fb.emit(Instr::Throw, line);
                for j in ends {
                    fb.patch_here(j);
                }
            }
            ExprKind::Receive(arms) => {
                fb.emit(Instr::RecvReset, line);
                let fetch = fb.here();
                fb.emit(Instr::RecvFetch, line);
                let ends = self.arms(fb, arms, tail, true);
                fb.emit(Instr::Pop, line);
                fb.emit(Instr::Jump(fetch), line);
                for j in ends {
                    fb.patch_here(j);
                }
            }
            ExprKind::Try { body, exc_var, trace_var, handler } => {
                let push = fb.emit_at(Instr::TryPush(0), line);
                self.expr(fb, body, false);
                fb.emit(Instr::TryPop, line);
                let to_end = fb.emit_at(Instr::Jump(0), line);
                fb.patch_here(push);
                let mark = fb.scope.len();
                let exc_slot = fb.bind(exc_var);
                let trace_slot = fb.bind(trace_var);
                fb.emit(Instr::Store(trace_slot), line);
                fb.emit(Instr::Store(exc_slot), line);
                self.expr(fb, handler, tail);
                fb.scope.truncate(mark);
                fb.patch_here(to_end);
            }
            ExprKind::Throw(inner) => {
                self.expr(fb, inner, false);
                fb.emit(Instr::Throw, line);
            }
            ExprKind::Lambda(lambda) => self.lambda(fb, lambda, line),
            ExprKind::Call(callee, args) => {
                self.expr(fb, callee, false);
                for a in args {
                    self.expr(fb, a, false);
                }
                let n = args.len() as u32;
                fb.emit(if tail { Instr::TailCall(n) } else { Instr::Call(n) }, line);
            }
            ExprKind::BuiltinCall(b, args) => {
                for a in args {
                    self.expr(fb, a, false);
                }
                fb.emit(Instr::CallBuiltin(*b, args.len() as u32), line);
            }
            ExprKind::BinOp(op, l, r) => {
                self.expr(fb, l, false);
                self.expr(fb, r, false);
                let ins = match op {
                    BinOp::Add => Instr::Add,
                    BinOp::Sub => Instr::Sub,
                    BinOp::Mul => Instr::Mul,
                    BinOp::Div => Instr::Div,
                    BinOp::Lt => Instr::Lt,
                    BinOp::Le => Instr::Le,
                    BinOp::Eq => Instr::Eq,
                    BinOp::Ne => Instr::Ne,
                    BinOp::Concat => Instr::Concat,
                    BinOp::Cons => Instr::Cons,
                };
                fb.emit(ins, line);
            }
            ExprKind::Tuple(items) => {
                for a in items {
                    self.expr(fb, a, false);
                }
                fb.emit(Instr::MakeTuple(items.len() as u32), line);
            }
            ExprKind::List(items) => {
                for a in items {
                    self.expr(fb, a, false);
                }
                fb.emit(Instr::MakeList(items.len() as u32), line);
            }
        }
    }

    fn lambda(&mut self, fb: &mut FnBuilder, lambda: &Lambda, line: u32) {
        let captures: Vec<String> = free_vars(lambda).into_iter().filter(|name| fb.lookup(name).is_some()).collect();
        let slots: Box<[u32]> = captures.iter().map(|c| fb.lookup(c).expect("filtered to locals")).collect();
        let index = self.program.defs.len() + lambda.index;
        fb.emit(Instr::MakeClosure(index as u32, slots), line);
        let f = self.function(&lambda.name, &lambda.params, &captures, &lambda.body, line);
        self.lifted[lambda.index] = Some(f);
    }

    /// Arms of a match or receive. The subject (or fetched message) is on
    /// top of the stack on entry and on fall-through after the last arm.
    /// Returns the jumps to patch to the construct's end.
    fn arms(&mut self, fb: &mut FnBuilder, arms: &[Arm], tail: bool, receive: bool) -> Vec<usize> {
        let mut ends = Vec::new();
        for arm in arms {
            let line = arm.line;
            let mark = fb.scope.len();
            let mut fails: FailSites = Vec::new();
            fb.emit(Instr::Dup, line);
            self.pattern(fb, &arm.pattern, 1, line, &mut fails);
            if let Some(g) = &arm.guard {
                self.expr(fb, g, false);
                let j = fb.emit_at(Instr::JumpIfFalse(0), line);
                fails.push((j, 0));
            }
            fb.emit(Instr::Pop, line);
            if receive {
                fb.emit(Instr::RecvAccept, line);
            }
            self.expr(fb, &arm.body, tail);
            ends.push(fb.emit_at(Instr::Jump(0), line));
            fb.scope.truncate(mark);

            // Cleanup pads: entering at depth k pops k values and falls
            // through to the next arm.
            let max_depth = fails.iter().map(|&(_, d)| d).max().unwrap_or(0);
            let pads = fb.here();
            for _ in 0..max_depth {
                fb.emit(Instr::Pop, line);
            }
            for (site, depth) in fails {
                let target = pads + (max_depth - depth);
                *fb.code[site].target_mut().expect("failure sites jump") = target;
            }
        }
        ends
    }

    /// Matches the value on top of the stack, which sits `depth` values above
    /// the arm's base height, and consumes it on success.
    fn pattern(&mut self, fb: &mut FnBuilder, p: &Pattern, depth: u32, line: u32, fails: &mut FailSites) {
        let test = |fb: &mut FnBuilder, ins: Instr, fails: &mut FailSites| {
            let at = fb.emit_at(ins, line);
            fails.push((at, depth));
        };
        match p {
            Pattern::Wildcard => fb.emit(Instr::Pop, line),
            Pattern::Var(name) => {
                let slot = fb.bind(name);
                fb.emit(Instr::Store(slot), line);
            }
            Pattern::Int(n) => {
                test(fb, Instr::TestInt(*n, 0), fails);
                fb.emit(Instr::Pop, line);
            }
            Pattern::Bool(b) => {
                test(fb, Instr::TestBool(*b, 0), fails);
                fb.emit(Instr::Pop, line);
            }
            Pattern::Str(s) => {
                let k = self.constant(s);
                test(fb, Instr::TestStr(k, 0), fails);
                fb.emit(Instr::Pop, line);
            }
            Pattern::Unit => {
                test(fb, Instr::TestUnit(0), fails);
                fb.emit(Instr::Pop, line);
            }
            Pattern::Tuple(items) => {
                let n = items.len() as u32;
                test(fb, Instr::TestTuple(n, 0), fails);
                for (j, item) in items.iter().enumerate().rev() {
                    self.pattern(fb, item, depth + j as u32 + 1, line, fails);
                }
                fb.emit(Instr::Pop, line);
            }
            Pattern::Cons(h, t) => {
                test(fb, Instr::TestCons(0), fails);
                self.pattern(fb, t, depth + 2, line, fails);
                self.pattern(fb, h, depth + 1, line, fails);
                fb.emit(Instr::Pop, line);
            }
            Pattern::List(items) => match items.split_first() {
                None => {
                    test(fb, Instr::TestNil(0), fails);
                    fb.emit(Instr::Pop, line);
                }
                Some((head, rest)) => {
                    test(fb, Instr::TestCons(0), fails);
                    self.pattern(fb, &Pattern::List(rest.to_vec()), depth + 2, line, fails);
                    self.pattern(fb, head, depth + 1, line, fails);
                    fb.emit(Instr::Pop, line);
                }
            },
        }
    }
}

impl FnBuilder {
    fn here(&self) -> u32 {
        self.code.len() as u32
    }

    fn emit(&mut self, ins: Instr, line: u32) {
        self.code.push(ins);
        self.lines.push(line);
    }

    fn emit_at(&mut self, ins: Instr, line: u32) -> usize {
        self.emit(ins, line);
        self.code.len() - 1
    }

    fn patch_here(&mut self, at: usize) {
        let here = self.here();
        *self.code[at].target_mut().expect("patched instruction jumps") = here;
    }

    fn bind(&mut self, name: &str) -> u32 {
        let slot = self.n_slots;
        self.n_slots += 1;
        self.scope.push((String::from(name), slot));
        slot
    }

    fn lookup(&self, name: &str) -> Option<u32> {
        self.scope.iter().rev().find(|(n, _)| n == name).map(|&(_, s)| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{compile_source, disassemble};
    use alloc::vec;

    #[test]
    fn minimal_program() {
        let m = compile_source("fn main() = 42").unwrap();
        assert_eq!(m.functions[0].code, vec![Instr::PushInt(42), Instr::Ret]);
        assert_eq!(m.functions[0].line_table, vec![1, 1]);
        assert_eq!(disassemble(&m), "== main/0 slots=0 ==\n0: PUSH_INT 42 ; line=1\n1: RET ; line=1");
    }

    #[test]
    fn lambda_is_lifted() {
        let m = compile_source("fn main() = fn (x) -> x").unwrap();
        assert_eq!(&*m.functions[1].name, "main.lambda0");
        assert_eq!(m.functions[1].arity, 1);
        assert!(m.functions[0].code.contains(&Instr::MakeClosure(1, Box::new([]))));
    }

    #[test]
    fn captures_follow_first_occurrence() {
        let m = compile_source("fn main() = let a = 1 in let b = 2 in fn () -> b + a").unwrap();
        assert!(m.functions[0].code.contains(&Instr::MakeClosure(1, Box::new([1, 0]))));
        assert_eq!(m.functions[1].n_slots, 2);
    }

    #[test]
    fn instruction_count_of_addition() {
        let m = compile_source("fn main() = 1+2").unwrap();
        let listing = disassemble(&m);
        assert_eq!(listing.lines().skip(1).count(), 4);
    }

    #[test]
    fn tail_calls() {
        let m = compile_source("fn f(x) = x fn main() = f(1)").unwrap();
        let main = &m.functions[m.entry];
        assert_eq!(main.code[2], Instr::TailCall(1));
    }

    #[test]
    fn all_targets_in_range() {
        let src = "fn main() = match (1, [2, 3]) { (1, [a]) -> a, (x, y :: _) if x < y -> y, _ -> 0 }";
        let m = compile_source(src).unwrap();
        m.validate().unwrap();
    }

    #[test]
    fn pads_pop_to_base() {
        // Failing TEST_INT inside a tuple at depth 3 pops three values.
        let m = compile_source("fn main() = match (1, 2) { (5, 6) -> 0, _ -> 1 }").unwrap();
        let listing = disassemble(&m);
        assert!(listing.contains("TEST_TUPLE 2 "), "{listing}");
        m.validate().unwrap();
    }
}
