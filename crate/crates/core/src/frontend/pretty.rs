//! Source printer for syntax trees. Output re-parses to the same tree up to
//! line numbers; compound sub-expressions are always parenthesized.

use alloc::string::String;
use core::fmt::Write;

use super::ast::{Arm, Def, Expr, ExprKind, Pattern, Program};
use crate::value::quote;

pub fn pretty(program: &Program) -> String {
    let mut out = String::new();
    for def in &program.defs {
        pretty_def(&mut out, def);
        out.push('\n');
    }
    out
}

fn pretty_def(out: &mut String, def: &Def) {
    let _ = write!(out, "fn {}(", def.name);
    join(out, def.params.iter(), |out, p| out.push_str(p));
    out.push_str(") = ");
    expr(out, &def.body);
}

fn join<T>(out: &mut String, items: impl Iterator<Item = T>, mut each: impl FnMut(&mut String, T)) {
    for (i, item) in items.enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        each(out, item);
    }
}

fn is_atomic(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Int(n) => *n >= 0,
        ExprKind::Bool(_)
        | ExprKind::Str(_)
        | ExprKind::Unit
        | ExprKind::Var(_)
        | ExprKind::Tuple(_)
        | ExprKind::List(_)
        | ExprKind::Call(..)
        | ExprKind::BuiltinCall(..) => true,
        _ => false,
    }
}

fn operand(out: &mut String, e: &Expr) {
    if is_atomic(e) {
        expr(out, e);
    } else {
        out.push('(');
        expr(out, e);
        out.push(')');
    }
}

fn expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Int(n) => {
            let _ = write!(out, "{n}");
        }
        ExprKind::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        ExprKind::Str(s) => out.push_str(&quote(s)),
        ExprKind::Unit => out.push_str("()"),
        ExprKind::Var(name) => out.push_str(name),
        ExprKind::Let(name, bound, body) => {
            let _ = write!(out, "let {name} = ");
            expr(out, bound);
            out.push_str(" in ");
            expr(out, body);
        }
        ExprKind::If(c, t, f) => {
            out.push_str("if ");
            expr(out, c);
            out.push_str(" then ");
            expr(out, t);
            out.push_str(" else ");
            expr(out, f);
        }
        ExprKind::Match(subject, arms) => {
            out.push_str("match ");
            expr(out, subject);
            self::arms(out, arms);
        }
        ExprKind::Receive(arms) => {
            out.push_str("receive");
            self::arms(out, arms);
        }
        ExprKind::Try { body, exc_var, trace_var, handler } => {
            out.push_str("try ");
            expr(out, body);
            let _ = write!(out, " catch ({exc_var}, {trace_var}) -> ");
            expr(out, handler);
        }
        ExprKind::Throw(inner) => {
            out.push_str("throw ");
            expr(out, inner);
        }
        ExprKind::Lambda(l) => {
            out.push_str("fn (");
            join(out, l.params.iter(), |out, p| out.push_str(p));
            out.push_str(") -> ");
            expr(out, &l.body);
        }
        ExprKind::Call(callee, args) => {
            operand(out, callee);
            out.push('(');
            join(out, args.iter(), expr);
            out.push(')');
        }
        ExprKind::BuiltinCall(b, args) => {
            out.push_str(b.name());
            out.push('(');
            join(out, args.iter(), expr);
            out.push(')');
        }
        ExprKind::BinOp(op, l, r) => {
            operand(out, l);
            let _ = write!(out, " {} ", op.symbol());
            operand(out, r);
        }
        ExprKind::Tuple(items) => {
            out.push('(');
            join(out, items.iter(), expr);
            out.push(')');
        }
        ExprKind::List(items) => {
            out.push('[');
            join(out, items.iter(), expr);
            out.push(']');
        }
    }
}

fn arms(out: &mut String, arms: &[Arm]) {
    out.push_str(" { ");
    join(out, arms.iter(), |out, arm| {
        pattern(out, &arm.pattern);
        if let Some(g) = &arm.guard {
            out.push_str(" if ");
            operand(out, g);
        }
        out.push_str(" -> ");
        operand(out, &arm.body);
    });
    out.push_str(" }");
}

fn pattern(out: &mut String, p: &Pattern) {
    match p {
        Pattern::Wildcard => out.push('_'),
        Pattern::Var(name) => out.push_str(name),
        Pattern::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Pattern::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        Pattern::Str(s) => out.push_str(&quote(s)),
        Pattern::Unit => out.push_str("()"),
        Pattern::Tuple(items) => {
            out.push('(');
            join(out, items.iter(), pattern);
            out.push(')');
        }
        Pattern::List(items) => {
            out.push('[');
            join(out, items.iter(), pattern);
            out.push(']');
        }
        Pattern::Cons(h, t) => {
            if matches!(**h, Pattern::Cons(..)) {
                out.push('(');
                pattern(out, h);
                out.push(')');
            } else {
                pattern(out, h);
            }
            out.push_str(" :: ");
            pattern(out, t);
        }
    }
}

/// Copy of the program with every line number set to zero, for comparisons
/// that should ignore layout.
pub fn strip_lines(program: &Program) -> Program {
    let mut p = program.clone();
    for def in &mut p.defs {
        def.line = 0;
        strip_expr(&mut def.body);
    }
    p
}

fn strip_expr(e: &mut Expr) {
    e.line = 0;
    match &mut e.kind {
        ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Str(_) | ExprKind::Unit | ExprKind::Var(_) => {}
        ExprKind::Let(_, a, b) | ExprKind::BinOp(_, a, b) => {
            strip_expr(a);
            strip_expr(b);
        }
        ExprKind::If(c, t, f) => {
            strip_expr(c);
            strip_expr(t);
            strip_expr(f);
        }
        ExprKind::Match(s, arms) => {
            strip_expr(s);
            strip_arms(arms);
        }
        ExprKind::Receive(arms) => strip_arms(arms),
        ExprKind::Try { body, handler, .. } => {
            strip_expr(body);
            strip_expr(handler);
        }
        ExprKind::Throw(inner) => strip_expr(inner),
        ExprKind::Lambda(l) => strip_expr(&mut l.body),
        ExprKind::Call(callee, args) => {
            strip_expr(callee);
            args.iter_mut().for_each(strip_expr);
        }
        ExprKind::BuiltinCall(_, args) | ExprKind::Tuple(args) | ExprKind::List(args) => {
            args.iter_mut().for_each(strip_expr);
        }
    }
}

fn strip_arms(arms: &mut [Arm]) {
    for arm in arms {
        arm.line = 0;
        if let Some(g) = &mut arm.guard {
            strip_expr(g);
        }
        strip_expr(&mut arm.body);
    }
}
