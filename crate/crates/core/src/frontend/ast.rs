use alloc::boxed::Box;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;

/// Host-provided operations callable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Builtin {
    Print,
    Vtime,
    MemUsed,
    Stacktrace,
    FunId,
    SelfPid,
    Spawn,
    Send,
    RecvFetch,
    RecvAccept,
    RecvReset,
    HostMap,
    Ref,
    Get,
    Set,
    SysInfo,
}

impl Builtin {
    pub const ALL: [Builtin; 16] = [
        Builtin::Print,
        Builtin::Vtime,
        Builtin::MemUsed,
        Builtin::Stacktrace,
        Builtin::FunId,
        Builtin::SelfPid,
        Builtin::Spawn,
        Builtin::Send,
        Builtin::RecvFetch,
        Builtin::RecvAccept,
        Builtin::RecvReset,
        Builtin::HostMap,
        Builtin::Ref,
        Builtin::Get,
        Builtin::Set,
        Builtin::SysInfo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Print => "print",
            Builtin::Vtime => "vtime",
            Builtin::MemUsed => "mem_used",
            Builtin::Stacktrace => "stacktrace",
            Builtin::FunId => "fun_id",
            Builtin::SelfPid => "self",
            Builtin::Spawn => "spawn",
            Builtin::Send => "send",
            Builtin::RecvFetch => "__recv_fetch",
            Builtin::RecvAccept => "__recv_accept",
            Builtin::RecvReset => "__recv_reset",
            Builtin::HostMap => "host_map",
            Builtin::Ref => "ref",
            Builtin::Get => "get",
            Builtin::Set => "set",
            Builtin::SysInfo => "sys_info",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::Vtime
            | Builtin::MemUsed
            | Builtin::Stacktrace
            | Builtin::SelfPid
            | Builtin::RecvFetch
            | Builtin::RecvAccept
            | Builtin::RecvReset => 0,
            Builtin::Print | Builtin::FunId | Builtin::Spawn | Builtin::Ref | Builtin::Get | Builtin::SysInfo => 1,
            Builtin::Send | Builtin::HostMap | Builtin::Set => 2,
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        Builtin::ALL.into_iter().find(|b| b.name() == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Eq,
    Ne,
    Concat,
    Cons,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Concat => "++",
            BinOp::Cons => "::",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub defs: Vec<Def>,
    /// Number of lambdas in the whole program; lambda `k` becomes module
    /// function `defs.len() + k`.
    pub lambda_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Def {
    pub name: String,
    pub params: Vec<String>,
    pub body: Expr,
    pub line: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub line: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Bool(bool),
    Str(Rc<str>),
    Unit,
    Var(String),
    Let(String, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Match(Box<Expr>, Vec<Arm>),
    Try { body: Box<Expr>, exc_var: String, trace_var: String, handler: Box<Expr> },
    Throw(Box<Expr>),
    Receive(Vec<Arm>),
    Lambda(Lambda),
    Call(Box<Expr>, Vec<Expr>),
    BuiltinCall(Builtin, Vec<Expr>),
    BinOp(BinOp, Box<Expr>, Box<Expr>),
    Tuple(Vec<Expr>),
    List(Vec<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lambda {
    /// Program-wide lambda number, assigned in source (pre-)order.
    pub index: usize,
    /// Lifted function name, `DEF.lambdaK`.
    pub name: String,
    pub params: Vec<String>,
    pub body: Box<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Arm {
    pub pattern: Pattern,
    pub guard: Option<Expr>,
    pub body: Expr,
    pub line: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Pattern {
    Wildcard,
    Var(String),
    Int(i64),
    Bool(bool),
    Str(Rc<str>),
    Unit,
    Tuple(Vec<Pattern>),
    List(Vec<Pattern>),
    Cons(Box<Pattern>, Box<Pattern>),
}

impl Pattern {
    /// Variables bound by the pattern, left to right, duplicates included.
    pub fn bound_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Pattern::Var(name) => out.push(name),
            Pattern::Tuple(items) | Pattern::List(items) => {
                for p in items {
                    p.bound_vars(out);
                }
            }
            Pattern::Cons(h, t) => {
                h.bound_vars(out);
                t.bound_vars(out);
            }
            Pattern::Wildcard | Pattern::Int(_) | Pattern::Bool(_) | Pattern::Str(_) | Pattern::Unit => {}
        }
    }
}

impl Program {
    pub fn find(&self, name: &str) -> Option<usize> {
        self.defs.iter().position(|d| d.name == name)
    }

    /// Every lambda of the program, indexed by [`Lambda::index`].
    pub fn lambdas(&self) -> Vec<&Lambda> {
        let mut out: Vec<Option<&Lambda>> = Vec::new();
        out.resize(self.lambda_count, None);
        for def in &self.defs {
            def.body.visit(&mut |e| {
                if let ExprKind::Lambda(l) = &e.kind {
                    out[l.index] = Some(l);
                }
            });
        }
        out.into_iter().map(|l| l.expect("lambda numbering is dense")).collect()
    }
}

impl Expr {
    pub fn new(kind: ExprKind, line: u32) -> Expr {
        Expr { kind, line }
    }

    /// Pre-order traversal of this expression and every sub-expression.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Str(_) | ExprKind::Unit | ExprKind::Var(_) => {}
            ExprKind::Let(_, a, b) | ExprKind::BinOp(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            ExprKind::If(c, t, e) => {
                c.visit(f);
                t.visit(f);
                e.visit(f);
            }
            ExprKind::Match(s, arms) => {
                s.visit(f);
                visit_arms(arms, f);
            }
            ExprKind::Receive(arms) => visit_arms(arms, f),
            ExprKind::Try { body, handler, .. } => {
                body.visit(f);
                handler.visit(f);
            }
            ExprKind::Throw(e) => e.visit(f),
            ExprKind::Lambda(l) => l.body.visit(f),
            ExprKind::Call(callee, args) => {
                callee.visit(f);
                for a in args {
                    a.visit(f);
                }
            }
            ExprKind::BuiltinCall(_, args) | ExprKind::Tuple(args) | ExprKind::List(args) => {
                for a in args {
                    a.visit(f);
                }
            }
        }
    }
}

fn visit_arms<'a>(arms: &'a [Arm], f: &mut dyn FnMut(&'a Expr)) {
    for arm in arms {
        if let Some(g) = &arm.guard {
            g.visit(f);
        }
        arm.body.visit(f);
    }
}

/// Free variables of a lambda, in order of first occurrence in its body.
///
/// Names bound inside the lambda (parameters, lets, patterns, handler
/// variables) are excluded. Whether a free name is a capture or a top-level
/// function is decided by the caller's scope.
pub fn free_vars(lambda: &Lambda) -> Vec<String> {
    let mut scope: Vec<&str> = lambda.params.iter().map(String::as_str).collect();
    let mut out = Vec::new();
    collect_free(&lambda.body, &mut scope, &mut out);
    out
}

fn note(name: &str, scope: &[&str], out: &mut Vec<String>) {
    if !scope.contains(&name) && !out.iter().any(|n| n == name) {
        out.push(String::from(name));
    }
}

fn collect_free<'a>(e: &'a Expr, scope: &mut Vec<&'a str>, out: &mut Vec<String>) {
    match &e.kind {
        ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Str(_) | ExprKind::Unit => {}
        ExprKind::Var(name) => note(name, scope, out),
        ExprKind::Let(name, bound, body) => {
            collect_free(bound, scope, out);
            scope.push(name);
            collect_free(body, scope, out);
            scope.pop();
        }
        ExprKind::If(c, t, f) => {
            collect_free(c, scope, out);
            collect_free(t, scope, out);
            collect_free(f, scope, out);
        }
        ExprKind::Match(subject, arms) => {
            collect_free(subject, scope, out);
            collect_free_arms(arms, scope, out);
        }
        ExprKind::Receive(arms) => collect_free_arms(arms, scope, out),
        ExprKind::Try { body, exc_var, trace_var, handler } => {
            collect_free(body, scope, out);
            scope.push(exc_var);
            scope.push(trace_var);
            collect_free(handler, scope, out);
            scope.truncate(scope.len() - 2);
        }
        ExprKind::Throw(inner) => collect_free(inner, scope, out),
        ExprKind::Lambda(inner) => {
            let mark = scope.len();
            scope.extend(inner.params.iter().map(String::as_str));
            collect_free(&inner.body, scope, out);
            scope.truncate(mark);
        }
        ExprKind::Call(callee, args) => {
            collect_free(callee, scope, out);
            for a in args {
                collect_free(a, scope, out);
            }
        }
        ExprKind::BuiltinCall(_, args) | ExprKind::Tuple(args) | ExprKind::List(args) => {
            for a in args {
                collect_free(a, scope, out);
            }
        }
        ExprKind::BinOp(_, l, r) => {
            collect_free(l, scope, out);
            collect_free(r, scope, out);
        }
    }
}

fn collect_free_arms<'a>(arms: &'a [Arm], scope: &mut Vec<&'a str>, out: &mut Vec<String>) {
    for arm in arms {
        let mark = scope.len();
        let mut bound = Vec::new();
        arm.pattern.bound_vars(&mut bound);
        scope.extend(bound);
        if let Some(g) = &arm.guard {
            collect_free(g, scope, out);
        }
        collect_free(&arm.body, scope, out);
        scope.truncate(mark);
    }
}
