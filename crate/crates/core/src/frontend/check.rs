//! Static checks that compiled execution relies on. Programs that fail here
//! are still representable as syntax trees and can be run by the permissive
//! evaluator mode.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::ast::{Arm, Builtin, Expr, ExprKind, Program};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CheckErrorKind {
    UnboundVariable(String),
    DuplicateParameter(String),
    DuplicatePatternVariable(String),
    UnknownFunction(String),
    BuiltinArity { name: &'static str, expected: usize, found: usize },
    DuplicateFunction(String),
    ReservedName(String),
    MissingMain,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckError {
    pub line: u32,
    pub kind: CheckErrorKind,
}

impl fmt::Display for CheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: check error: ", self.line)?;
        match &self.kind {
            CheckErrorKind::UnboundVariable(n) => write!(f, "unbound variable `{n}`"),
            CheckErrorKind::DuplicateParameter(n) => write!(f, "duplicate parameter `{n}`"),
            CheckErrorKind::DuplicatePatternVariable(n) => {
                write!(f, "variable `{n}` bound twice in one pattern")
            }
            CheckErrorKind::UnknownFunction(n) => write!(f, "call to unknown function `{n}`"),
            CheckErrorKind::BuiltinArity { name, expected, found } => {
                write!(f, "builtin `{name}` takes {expected} argument(s), given {found}")
            }
            CheckErrorKind::DuplicateFunction(n) => write!(f, "function `{n}` defined twice"),
            CheckErrorKind::ReservedName(n) => {
                write!(f, "`{n}` is a builtin and cannot name a function")
            }
            CheckErrorKind::MissingMain => write!(f, "missing `main/0`"),
        }
    }
}

struct Checker<'p> {
    program: &'p Program,
    errors: Vec<CheckError>,
}

pub fn check(program: &Program) -> Result<(), Vec<CheckError>> {
    let mut c = Checker { program, errors: Vec::new() };
    for (i, def) in program.defs.iter().enumerate() {
        if Builtin::from_name(&def.name).is_some() {
            c.error(def.line, CheckErrorKind::ReservedName(def.name.clone()));
        }
        if program.defs[..i].iter().any(|d| d.name == def.name) {
            c.error(def.line, CheckErrorKind::DuplicateFunction(def.name.clone()));
        }
        c.params(&def.params, def.line);
        let mut scope: Vec<&str> = def.params.iter().map(String::as_str).collect();
        c.expr(&def.body, &mut scope);
    }
    let has_main = program.defs.iter().any(|d| d.name == "main" && d.params.is_empty());
    if !has_main {
        let line = program.defs.last().map_or(1, |d| d.line);
        c.error(line, CheckErrorKind::MissingMain);
    }
    if c.errors.is_empty() {
        Ok(())
    } else {
        Err(c.errors)
    }
}

impl<'p> Checker<'p> {
    fn error(&mut self, line: u32, kind: CheckErrorKind) {
        self.errors.push(CheckError { line, kind });
    }

    fn params(&mut self, params: &[String], line: u32) {
        for (i, p) in params.iter().enumerate() {
            if params[..i].contains(p) {
                self.error(line, CheckErrorKind::DuplicateParameter(p.clone()));
            }
        }
    }

    fn is_function(&self, name: &str) -> bool {
        self.program.find(name).is_some()
    }

    fn expr<'a>(&mut self, e: &'a Expr, scope: &mut Vec<&'a str>) {
        match &e.kind {
            ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Str(_) | ExprKind::Unit => {}
            ExprKind::Var(name) => {
                if !scope.contains(&name.as_str()) && !self.is_function(name) {
                    self.error(e.line, CheckErrorKind::UnboundVariable(name.clone()));
                }
            }
            ExprKind::Let(name, bound, body) => {
                self.expr(bound, scope);
                scope.push(name);
                self.expr(body, scope);
                scope.pop();
            }
            ExprKind::If(c, t, f) => {
                self.expr(c, scope);
                self.expr(t, scope);
                self.expr(f, scope);
            }
            ExprKind::Match(subject, arms) => {
                self.expr(subject, scope);
                self.arms(arms, scope);
            }
            ExprKind::Receive(arms) => self.arms(arms, scope),
            ExprKind::Try { body, exc_var, trace_var, handler } => {
                self.expr(body, scope);
                scope.push(exc_var);
                scope.push(trace_var);
                self.expr(handler, scope);
                scope.truncate(scope.len() - 2);
            }
            ExprKind::Throw(inner) => self.expr(inner, scope),
            ExprKind::Lambda(l) => {
                self.params(&l.params, e.line);
                let mark = scope.len();
                scope.extend(l.params.iter().map(String::as_str));
                self.expr(&l.body, scope);
                scope.truncate(mark);
            }
            ExprKind::Call(callee, args) => {
                match &callee.kind {
                    ExprKind::Var(name) if !scope.contains(&name.as_str()) && !self.is_function(name) => {
                        self.error(callee.line, CheckErrorKind::UnknownFunction(name.clone()));
                    }
                    _ => self.expr(callee, scope),
                }
                for a in args {
                    self.expr(a, scope);
                }
            }
            ExprKind::BuiltinCall(b, args) => {
                if b.arity() != args.len() {
                    self.error(
                        e.line,
                        CheckErrorKind::BuiltinArity { name: b.name(), expected: b.arity(), found: args.len() },
                    );
                }
                for a in args {
                    self.expr(a, scope);
                }
            }
            ExprKind::BinOp(_, l, r) => {
                self.expr(l, scope);
                self.expr(r, scope);
            }
            ExprKind::Tuple(items) | ExprKind::List(items) => {
                for a in items {
                    self.expr(a, scope);
                }
            }
        }
    }

    fn arms<'a>(&mut self, arms: &'a [Arm], scope: &mut Vec<&'a str>) {
        for arm in arms {
            let mut bound = Vec::new();
            arm.pattern.bound_vars(&mut bound);
            for (i, name) in bound.iter().enumerate() {
                if bound[..i].contains(name) {
                    self.error(arm.line, CheckErrorKind::DuplicatePatternVariable((*name).into()));
                }
            }
            let mark = scope.len();
            scope.extend(bound);
            if let Some(g) = &arm.guard {
                self.expr(g, scope);
            }
            self.expr(&arm.body, scope);
            scope.truncate(mark);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn errors(src: &str) -> Vec<CheckErrorKind> {
        match check(&parse_source(src).unwrap()) {
            Ok(()) => Vec::new(),
            Err(es) => es.into_iter().map(|e| e.kind).collect(),
        }
    }

    #[test]
    fn unbound_variable() {
        let p = parse_source("fn main() = x").unwrap();
        let errs = check(&p).unwrap_err();
        assert_eq!(errs, [CheckError { line: 1, kind: CheckErrorKind::UnboundVariable("x".into()) }]);
    }

    #[test]
    fn let_scoping_is_ok() {
        assert!(errors("fn main() = let x = 1 in x").is_empty());
    }

    #[test]
    fn duplicate_parameter() {
        assert_eq!(errors("fn f(a, a) = a  fn main() = f(1,2)"), [CheckErrorKind::DuplicateParameter("a".into())]);
    }

    #[test]
    fn duplicate_pattern_variable() {
        assert_eq!(
            errors("fn main() = match (1, 2) { (x, x) -> x }"),
            [CheckErrorKind::DuplicatePatternVariable("x".into())]
        );
    }

    #[test]
    fn unknown_function_and_builtin_arity() {
        assert_eq!(errors("fn main() = nope(1)"), [CheckErrorKind::UnknownFunction("nope".into())]);
        assert_eq!(
            errors("fn main() = print()"),
            [CheckErrorKind::BuiltinArity { name: "print", expected: 1, found: 0 }]
        );
    }

    #[test]
    fn missing_main() {
        assert_eq!(errors("fn f() = 1"), [CheckErrorKind::MissingMain]);
        assert_eq!(errors("fn main(x) = x"), [CheckErrorKind::MissingMain]);
    }

    #[test]
    fn recv_builtins_are_ordinary() {
        assert!(errors("fn main() = let m = __recv_fetch() in __recv_accept()").is_empty());
    }

    #[test]
    fn scopes_end_with_their_body() {
        assert_eq!(errors("fn main() = let y = (let x = 1 in x) in x"), [CheckErrorKind::UnboundVariable("x".into())]);
        assert_eq!(errors("fn main() = match 1 { a -> a, _ -> a }"), [CheckErrorKind::UnboundVariable("a".into())]);
    }
}
