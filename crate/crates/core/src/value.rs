//! The guest value universe.
//!
//! Every value the guest can observe is a [`Value`]. Values are immutable;
//! the only mutable state reachable from guest code lives in per-process ref
//! cells, which a [`Value::Ref`] merely names by id.

use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

/// Runtime value.
#[derive(Clone, Debug)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(Rc<str>),
    Unit,
    Tuple(Rc<[Value]>),
    List(List),
    Closure(Rc<Closure>),
    Pid(u64),
    Ref(u64),
}

/// A closure: a function of the module plus the values captured at creation.
#[derive(Clone, Debug)]
pub struct Closure {
    pub func: usize,
    pub name: Rc<str>,
    pub arity: usize,
    pub captures: Vec<Value>,
    /// Per-owner creation sequence number.
    pub id: u64,
    pub owner: u64,
}

/// Proper list: nil or a cons whose tail is again a list.
#[derive(Clone, Debug, Default)]
pub struct List(Option<Rc<Cons>>);

#[derive(Debug)]
pub struct Cons {
    pub head: Value,
    pub tail: List,
}

impl Drop for Cons {
    // Long lists would otherwise drop recursively and exhaust the host stack.
    fn drop(&mut self) {
        let mut next = self.tail.0.take();
        while let Some(cell) = next {
            match Rc::try_unwrap(cell) {
                Ok(mut cons) => next = cons.tail.0.take(),
                Err(_) => break,
            }
        }
    }
}

impl List {
    pub const fn nil() -> List {
        List(None)
    }

    pub fn cons(head: Value, tail: List) -> List {
        List(Some(Rc::new(Cons { head, tail })))
    }

    pub fn is_nil(&self) -> bool {
        self.0.is_none()
    }

    pub fn uncons(&self) -> Option<(&Value, &List)> {
        self.0.as_ref().map(|c| (&c.head, &c.tail))
    }

    pub fn iter(&self) -> ListIter<'_> {
        ListIter { cur: self }
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.is_nil()
    }

    fn ptr_eq(&self, other: &List) -> bool {
        match (&self.0, &other.0) {
            (Some(a), Some(b)) => Rc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl FromIterator<Value> for List {
    fn from_iter<I: IntoIterator<Item = Value>>(iter: I) -> Self {
        let items: Vec<Value> = iter.into_iter().collect();
        items.into_iter().rev().fold(List::nil(), |tail, head| List::cons(head, tail))
    }
}

pub struct ListIter<'a> {
    cur: &'a List,
}

impl<'a> Iterator for ListIter<'a> {
    type Item = &'a Value;

    fn next(&mut self) -> Option<&'a Value> {
        let (head, tail) = self.cur.uncons()?;
        self.cur = tail;
        Some(head)
    }
}

impl Value {
    pub fn str(s: &str) -> Value {
        Value::Str(Rc::from(s))
    }

    pub fn tuple(items: Vec<Value>) -> Value {
        Value::Tuple(Rc::from(items))
    }

    pub fn list<I: IntoIterator<Item = Value>>(items: I) -> Value {
        Value::List(items.into_iter().collect())
    }

    pub fn nil() -> Value {
        Value::List(List::nil())
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&List> {
        match self {
            Value::List(l) => Some(l),
            _ => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Bool(_) => "bool",
            Value::Str(_) => "str",
            Value::Unit => "unit",
            Value::Tuple(_) => "tuple",
            Value::List(_) => "list",
            Value::Closure(_) => "closure",
            Value::Pid(_) => "pid",
            Value::Ref(_) => "ref",
        }
    }
}

/// Structural equality. Closures compare by (owner, id), refs by cell id.
pub fn value_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Unit, Value::Unit) => true,
        (Value::Tuple(xs), Value::Tuple(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys.iter()).all(|(x, y)| value_equal(x, y))
        }
        (Value::List(xs), Value::List(ys)) => {
            let (mut xs, mut ys) = (xs, ys);
            loop {
                if xs.ptr_eq(ys) {
                    return true;
                }
                match (xs.uncons(), ys.uncons()) {
                    (None, None) => return true,
                    (Some((x, xt)), Some((y, yt))) => {
                        if !value_equal(x, y) {
                            return false;
                        }
                        xs = xt;
                        ys = yt;
                    }
                    _ => return false,
                }
            }
        }
        (Value::Closure(x), Value::Closure(y)) => x.owner == y.owner && x.id == y.id,
        (Value::Pid(x), Value::Pid(y)) => x == y,
        (Value::Ref(x), Value::Ref(y)) => x == y,
        _ => false,
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Value) -> bool {
        value_equal(self, other)
    }
}

/// Guest-accounted size in allocation units.
pub fn value_size(v: &Value) -> u64 {
    match v {
        Value::Int(_) | Value::Bool(_) | Value::Unit | Value::Pid(_) => 0,
        Value::Str(s) => s.len() as u64,
        Value::Tuple(items) => items.len() as u64 + 1 + items.iter().map(value_size).sum::<u64>(),
        Value::List(l) => l.iter().map(|h| 2 + value_size(h)).sum(),
        Value::Closure(c) => c.captures.len() as u64 + 2 + c.captures.iter().map(value_size).sum::<u64>(),
        Value::Ref(_) => 1,
    }
}

/// Canonical rendering used in traces, reports and golden files.
pub fn format_value(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v).expect("writing to a String cannot fail");
    out
}

pub fn write_value<W: Write>(out: &mut W, v: &Value) -> fmt::Result {
    match v {
        Value::Int(n) => out.write_str(itoa::Buffer::new().format(*n)),
        Value::Bool(b) => out.write_str(if *b { "true" } else { "false" }),
        Value::Str(s) => write_quoted(out, s),
        Value::Unit => out.write_str("()"),
        Value::Tuple(items) => {
            out.write_char('(')?;
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.write_str(", ")?;
                }
                write_value(out, item)?;
            }
            out.write_char(')')
        }
        Value::List(l) => {
            out.write_char('[')?;
            for (i, item) in l.iter().enumerate() {
                if i > 0 {
                    out.write_str(", ")?;
                }
                write_value(out, item)?;
            }
            out.write_char(']')
        }
        Value::Closure(c) => write!(out, "<fun:{}/{}#{}>", c.name, c.arity, c.id),
        Value::Pid(p) => write!(out, "<pid:{p}>"),
        Value::Ref(r) => write!(out, "<ref:{r}>"),
    }
}

/// Writes `s` as a double-quoted literal. Besides `"` and `\`, line breaks and
/// other control characters are escaped so a rendering never spans lines.
pub fn write_quoted<W: Write>(out: &mut W, s: &str) -> fmt::Result {
    out.write_char('"')?;
    if !s.bytes().any(|b| b < 0x20 || b == 0x7f || b == b'"' || b == b'\\') {
        out.write_str(s)?;
        return out.write_char('"');
    }
    for ch in s.chars() {
        match ch {
            '"' => out.write_str("\\\"")?,
            '\\' => out.write_str("\\\\")?,
            '\n' => out.write_str("\\n")?,
            '\t' => out.write_str("\\t")?,
            '\r' => out.write_str("\\r")?,
            c if (c as u32) < 0x20 || c as u32 == 0x7f => write!(out, "\\x{:02x}", c as u32)?,
            c => out.write_char(c)?,
        }
    }
    out.write_char('"')
}

pub fn quote(s: &str) -> String {
    let mut out = String::new();
    write_quoted(&mut out, s).expect("writing to a String cannot fail");
    out
}

/// Error from [`to_source`]: the value has no literal syntax.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NotALiteral(pub &'static str);

impl fmt::Display for NotALiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a {} value has no source literal", self.0)
    }
}

/// Prints a closure-, pid- and ref-free value as guest source text that parses
/// back to an expression constructing an equal value.
pub fn to_source(v: &Value) -> Result<String, NotALiteral> {
    let mut out = String::new();
    write_source(&mut out, v)?;
    Ok(out)
}

fn write_source(out: &mut String, v: &Value) -> Result<(), NotALiteral> {
    match v {
        Value::Int(n) => {
            if *n == i64::MIN {
                // The literal grammar has no room for |i64::MIN|.
                out.push_str("(-9223372036854775807 - 1)");
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::Tuple(items) => {
            out.push('(');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_source(out, item)?;
            }
            out.push(')');
        }
        Value::List(l) => {
            out.push('[');
            for (i, item) in l.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_source(out, item)?;
            }
            out.push(']');
        }
        Value::Bool(_) | Value::Str(_) | Value::Unit => {
            let _ = write_value(out, v);
        }
        Value::Closure(_) | Value::Pid(_) | Value::Ref(_) => return Err(NotALiteral(v.type_name())),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn closure(id: u64) -> Value {
        Value::Closure(Rc::new(Closure { func: 1, name: Rc::from("add"), arity: 2, captures: vec![], id, owner: 0 }))
    }

    #[test]
    fn equality_basics() {
        assert!(value_equal(&Value::Int(3), &Value::Int(3)));
        let a = Value::tuple(vec![Value::Int(1), Value::str("a")]);
        let b = Value::tuple(vec![Value::Int(1), Value::str("b")]);
        assert!(!value_equal(&a, &b));
        assert!(!value_equal(&closure(0), &closure(1)));
        assert!(value_equal(&closure(1), &closure(1)));
        assert!(!value_equal(&Value::Int(0), &Value::Bool(false)));
    }

    #[test]
    fn sizes() {
        assert_eq!(value_size(&Value::Int(7)), 0);
        assert_eq!(value_size(&Value::str("abc")), 3);
        assert_eq!(value_size(&Value::list([Value::Int(1), Value::Int(2)])), 4);
        assert_eq!(value_size(&Value::Ref(4)), 1);
        assert_eq!(value_size(&Value::tuple(vec![Value::Int(1), Value::str("ab")])), 5);
    }

    #[test]
    fn rendering() {
        assert_eq!(format_value(&Value::Unit), "()");
        assert_eq!(format_value(&Value::tuple(vec![Value::Int(1), Value::nil()])), "(1, [])");
        assert_eq!(format_value(&closure(0)), "<fun:add/2#0>");
        assert_eq!(format_value(&Value::Pid(3)), "<pid:3>");
        assert_eq!(format_value(&Value::Ref(2)), "<ref:2>");
        assert_eq!(format_value(&Value::str("a\"b\\c")), r#""a\"b\\c""#);
        assert_eq!(format_value(&Value::str("x\ny")), r#""x\ny""#);
    }

    #[test]
    fn long_list_drops_without_recursion() {
        let l: List = (0..200_000).map(Value::Int).collect();
        assert_eq!(l.len(), 200_000);
        drop(l);
    }

    #[test]
    fn source_printing_rejects_runtime_identities() {
        assert_eq!(to_source(&Value::Pid(1)), Err(NotALiteral("pid")));
        assert_eq!(to_source(&Value::Int(i64::MIN)).unwrap(), "(-9223372036854775807 - 1)");
    }
}
