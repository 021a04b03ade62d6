use alloc::boxed::Box;
use alloc::format;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::ast::{Arm, BinOp, Builtin, Def, Expr, ExprKind, Lambda, Pattern, Program};
use super::lexer::{Tok, Token};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: u32,
    pub expected: String,
    pub found: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: parse error: expected {}, found {}", self.line, self.expected, self.found)
    }
}

type PResult<T> = Result<T, ParseError>;

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
    def_name: String,
    lambdas_in_def: usize,
    lambdas_total: usize,
}

pub fn parse(tokens: &[Token]) -> PResult<Program> {
    let mut p = Parser { toks: tokens, pos: 0, def_name: String::new(), lambdas_in_def: 0, lambdas_total: 0 };
    let mut defs = Vec::new();
    while p.peek().is_some() {
        defs.push(p.def()?);
    }
    Ok(Program { defs, lambda_count: p.lambdas_total })
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&'t Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    fn line(&self) -> u32 {
        self.toks.get(self.pos).or_else(|| self.toks.last()).map_or(1, |t| t.line)
    }

    fn error<T>(&self, expected: &str) -> PResult<T> {
        Err(ParseError {
            line: self.line(),
            expected: String::from(expected),
            found: match self.peek() {
                Some(t) => format!("{t}"),
                None => String::from("end of input"),
            },
        })
    }

    fn bump(&mut self) -> &'t Token {
        let t = &self.toks[self.pos];
        self.pos += 1;
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<u32> {
        if self.peek() == Some(&tok) {
            Ok(self.bump().line)
        } else {
            self.error(&format!("{tok}"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(name)) => {
                let name = name.clone();
                self.pos += 1;
                Ok(name)
            }
            _ => self.error("identifier"),
        }
    }

    fn def(&mut self) -> PResult<Def> {
        let line = self.expect(Tok::Fn)?;
        let name = self.ident()?;
        self.def_name = name.clone();
        self.lambdas_in_def = 0;
        self.expect(Tok::LParen)?;
        let params = self.params()?;
        self.expect(Tok::Eq)?;
        let body = self.expr()?;
        Ok(Def { name, params, body, line })
    }

    /// Parameter names up to and including the closing `)`.
    fn params(&mut self) -> PResult<Vec<String>> {
        let mut params = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(params);
        }
        loop {
            params.push(self.ident()?);
            if self.eat(&Tok::RParen) {
                return Ok(params);
            }
            self.expect(Tok::Comma)?;
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let line = self.line();
        match self.peek() {
            Some(Tok::Let) => {
                self.pos += 1;
                let name = self.ident()?;
                self.expect(Tok::Eq)?;
                let bound = self.expr()?;
                self.expect(Tok::In)?;
                let body = self.expr()?;
                Ok(Expr::new(ExprKind::Let(name, Box::new(bound), Box::new(body)), line))
            }
            Some(Tok::If) => {
                self.pos += 1;
                let c = self.expr()?;
                self.expect(Tok::Then)?;
                let t = self.expr()?;
                self.expect(Tok::Else)?;
                let e = self.expr()?;
                Ok(Expr::new(ExprKind::If(Box::new(c), Box::new(t), Box::new(e)), line))
            }
            Some(Tok::Match) => {
                self.pos += 1;
                let subject = self.expr()?;
                let arms = self.arms()?;
                Ok(Expr::new(ExprKind::Match(Box::new(subject), arms), line))
            }
            Some(Tok::Receive) => {
                self.pos += 1;
                let arms = self.arms()?;
                Ok(Expr::new(ExprKind::Receive(arms), line))
            }
            Some(Tok::Try) => {
                self.pos += 1;
                let body = self.expr()?;
                self.expect(Tok::Catch)?;
                self.expect(Tok::LParen)?;
                let exc_var = self.ident()?;
                self.expect(Tok::Comma)?;
                let trace_var = self.ident()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Arrow)?;
                let handler = self.expr()?;
                Ok(Expr::new(
                    ExprKind::Try { body: Box::new(body), exc_var, trace_var, handler: Box::new(handler) },
                    line,
                ))
            }
            Some(Tok::Throw) => {
                self.pos += 1;
                let e = self.expr()?;
                Ok(Expr::new(ExprKind::Throw(Box::new(e)), line))
            }
            Some(Tok::Fn) if self.peek_at(1) == Some(&Tok::LParen) => {
                self.pos += 2;
                let index = self.lambdas_total;
                let name = format!("{}.lambda{}", self.def_name, self.lambdas_in_def);
                self.lambdas_total += 1;
                self.lambdas_in_def += 1;
                let params = self.params()?;
                self.expect(Tok::Arrow)?;
                let body = self.expr()?;
                Ok(Expr::new(ExprKind::Lambda(Lambda { index, name, params, body: Box::new(body) }), line))
            }
            _ => self.comparison(),
        }
    }

    fn arms(&mut self) -> PResult<Vec<Arm>> {
        self.expect(Tok::LBrace)?;
        let mut arms = Vec::new();
        loop {
            if self.eat(&Tok::RBrace) {
                break;
            }
            let line = self.line();
            let pattern = self.pattern()?;
            let guard = if self.eat(&Tok::If) { Some(self.expr()?) } else { None };
            self.expect(Tok::Arrow)?;
            let body = self.expr()?;
            arms.push(Arm { pattern, guard, body, line });
            if !self.eat(&Tok::Comma) {
                self.expect(Tok::RBrace)?;
                break;
            }
        }
        if arms.is_empty() {
            return self.error("at least one arm");
        }
        Ok(arms)
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let lhs = self.cons()?;
        let op = match self.peek() {
            Some(Tok::Lt) => BinOp::Lt,
            Some(Tok::Le) => BinOp::Le,
            Some(Tok::EqEq) => BinOp::Eq,
            Some(Tok::Ne) => BinOp::Ne,
            _ => return Ok(lhs),
        };
        let line = self.bump().line;
        let rhs = self.cons()?;
        if matches!(self.peek(), Some(Tok::Lt | Tok::Le | Tok::EqEq | Tok::Ne)) {
            return self.error("end of comparison (comparisons do not chain)");
        }
        Ok(Expr::new(ExprKind::BinOp(op, Box::new(lhs), Box::new(rhs)), line))
    }

    fn cons(&mut self) -> PResult<Expr> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Some(Tok::ColonColon) => BinOp::Cons,
            Some(Tok::PlusPlus) => BinOp::Concat,
            _ => return Ok(lhs),
        };
        let line = self.bump().line;
        let rhs = self.cons()?;
        Ok(Expr::new(ExprKind::BinOp(op, Box::new(lhs), Box::new(rhs)), line))
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let line = self.bump().line;
            let rhs = self.multiplicative()?;
            lhs = Expr::new(ExprKind::BinOp(op, Box::new(lhs), Box::new(rhs)), line);
        }
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut lhs = self.postfix()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            let line = self.bump().line;
            let rhs = self.postfix()?;
            lhs = Expr::new(ExprKind::BinOp(op, Box::new(lhs), Box::new(rhs)), line);
        }
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.atom()?;
        while self.peek() == Some(&Tok::LParen) {
            let line = self.bump().line;
            let args = self.expr_list(Tok::RParen)?;
            e = match e.kind {
                ExprKind::Var(ref name) if Builtin::from_name(name).is_some() => {
                    let b = Builtin::from_name(name).expect("checked");
                    Expr::new(ExprKind::BuiltinCall(b, args), line)
                }
                _ => Expr::new(ExprKind::Call(Box::new(e), args), line),
            };
        }
        Ok(e)
    }

    /// Comma-separated expressions up to `close`, which is consumed.
    fn expr_list(&mut self, close: Tok) -> PResult<Vec<Expr>> {
        let mut items = Vec::new();
        if self.eat(&close) {
            return Ok(items);
        }
        loop {
            items.push(self.expr()?);
            if self.eat(&close) {
                return Ok(items);
            }
            self.expect(Tok::Comma)?;
        }
    }

    fn int_magnitude(&mut self, negative: bool) -> PResult<i64> {
        let Some(Tok::Int(n)) = self.peek() else {
            return self.error("integer");
        };
        let n = *n;
        let value = if negative {
            if n == i64::MAX as u64 + 1 {
                i64::MIN
            } else {
                -(n as i64)
            }
        } else if n > i64::MAX as u64 {
            return self.error("integer literal in range");
        } else {
            n as i64
        };
        self.pos += 1;
        Ok(value)
    }

    fn atom(&mut self) -> PResult<Expr> {
        let line = self.line();
        let kind = match self.peek() {
            Some(Tok::Int(_)) => ExprKind::Int(self.int_magnitude(false)?),
            Some(Tok::Minus) if matches!(self.peek_at(1), Some(Tok::Int(_))) => {
                self.pos += 1;
                ExprKind::Int(self.int_magnitude(true)?)
            }
            Some(Tok::True) => {
                self.pos += 1;
                ExprKind::Bool(true)
            }
            Some(Tok::False) => {
                self.pos += 1;
                ExprKind::Bool(false)
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                ExprKind::Str(Rc::from(s.as_str()))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                ExprKind::Var(name.clone())
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let mut items = self.expr_list(Tok::RParen)?;
                match items.len() {
                    0 => ExprKind::Unit,
                    1 => return Ok(items.pop().expect("one item")),
                    _ => ExprKind::Tuple(items),
                }
            }
            Some(Tok::LBracket) => {
                self.pos += 1;
                ExprKind::List(self.expr_list(Tok::RBracket)?)
            }
            _ => return self.error("expression"),
        };
        Ok(Expr::new(kind, line))
    }

    fn pattern(&mut self) -> PResult<Pattern> {
        let head = self.pattern_atom()?;
        if self.eat(&Tok::ColonColon) {
            let tail = self.pattern()?;
            return Ok(Pattern::Cons(Box::new(head), Box::new(tail)));
        }
        Ok(head)
    }

    fn pattern_list(&mut self, close: Tok) -> PResult<Vec<Pattern>> {
        let mut items = Vec::new();
        if self.eat(&close) {
            return Ok(items);
        }
        loop {
            items.push(self.pattern()?);
            if self.eat(&close) {
                return Ok(items);
            }
            self.expect(Tok::Comma)?;
        }
    }

    fn pattern_atom(&mut self) -> PResult<Pattern> {
        Ok(match self.peek() {
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if name == "_" {
                    Pattern::Wildcard
                } else {
                    Pattern::Var(name.clone())
                }
            }
            Some(Tok::Int(_)) => Pattern::Int(self.int_magnitude(false)?),
            Some(Tok::Minus) => {
                self.pos += 1;
                Pattern::Int(self.int_magnitude(true)?)
            }
            Some(Tok::True) => {
                self.pos += 1;
                Pattern::Bool(true)
            }
            Some(Tok::False) => {
                self.pos += 1;
                Pattern::Bool(false)
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Pattern::Str(Rc::from(s.as_str()))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let mut items = self.pattern_list(Tok::RParen)?;
                match items.len() {
                    0 => Pattern::Unit,
                    1 => items.pop().expect("one item"),
                    _ => Pattern::Tuple(items),
                }
            }
            Some(Tok::LBracket) => {
                self.pos += 1;
                Pattern::List(self.pattern_list(Tok::RBracket)?)
            }
            _ => return self.error("pattern"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::lexer::tokenize;

    fn parse_src(src: &str) -> PResult<Program> {
        parse(&tokenize(src).unwrap())
    }

    fn main_body(src: &str) -> Expr {
        parse_src(src).unwrap().defs.remove(0).body
    }

    #[test]
    fn precedence() {
        let e = main_body("fn main() = 1 + 2 * 3");
        let ExprKind::BinOp(BinOp::Add, l, r) = e.kind else { panic!("{e:?}") };
        assert_eq!(l.kind, ExprKind::Int(1));
        assert!(matches!(r.kind, ExprKind::BinOp(BinOp::Mul, _, _)));
    }

    #[test]
    fn cons_is_right_assoc_and_binds_looser_than_add() {
        let e = main_body("fn main() = 1 + 1 :: 2 :: []");
        let ExprKind::BinOp(BinOp::Cons, l, r) = e.kind else { panic!() };
        assert!(matches!(l.kind, ExprKind::BinOp(BinOp::Add, _, _)));
        assert!(matches!(r.kind, ExprKind::BinOp(BinOp::Cons, _, _)));
    }

    #[test]
    fn match_arms() {
        let e = main_body("fn main() = match [1] { x :: _ -> x, _ -> 0 }");
        let ExprKind::Match(_, arms) = e.kind else { panic!() };
        assert_eq!(arms.len(), 2);
        assert_eq!(arms[0].pattern, Pattern::Cons(Box::new(Pattern::Var("x".into())), Box::new(Pattern::Wildcard)));
    }

    #[test]
    fn missing_bound_expr() {
        let err = parse_src("fn main() = let x = in 1").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn lambdas_are_numbered_per_def() {
        let p = parse_src("fn f() = fn () -> fn (y) -> y\nfn main() = fn (x) -> x").unwrap();
        assert_eq!(p.lambda_count, 3);
        let names: Vec<_> = p.lambdas().iter().map(|l| l.name.clone()).collect();
        assert_eq!(names, ["f.lambda0", "f.lambda1", "main.lambda0"]);
    }

    #[test]
    fn builtin_calls_are_resolved_by_name() {
        let e = main_body("fn main() = print(\"x\")");
        assert!(matches!(e.kind, ExprKind::BuiltinCall(Builtin::Print, _)));
    }

    #[test]
    fn comparisons_do_not_chain() {
        assert!(parse_src("fn main() = 1 < 2 < 3").is_err());
    }

    #[test]
    fn negative_literals() {
        assert_eq!(main_body("fn main() = -5").kind, ExprKind::Int(-5));
        assert_eq!(main_body("fn main() = -9223372036854775808").kind, ExprKind::Int(i64::MIN));
        assert!(parse_src("fn main() = 9223372036854775808").is_err());
    }
}
