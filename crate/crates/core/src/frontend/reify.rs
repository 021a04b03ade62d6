//! Encoding of compiled modules as guest values.
//!
//! `[fn0, fn1, ..., ("entry", e)]` where each function is
//! `(name, arity, n_slots, code, line_table)` and each instruction is
//! `(OPCODE, [immediates])`. String-pool entries are inlined and
//! `MAKE_CLOSURE f, [s1..sk]` flattens to `[f, s1, .., sk]`.

use alloc::vec;
use alloc::vec::Vec;

use super::bytecode::{Instr, Module};
use crate::value::Value;

pub fn reify(m: &Module) -> Value {
    let mut items: Vec<Value> = m
        .functions
        .iter()
        .map(|f| {
            let code = f.code.iter().map(|ins| reify_instr(m, ins));
            let lines = f.line_table.iter().map(|&l| Value::Int(l as i64));
            Value::tuple(vec![
                Value::Str(f.name.clone()),
                Value::Int(f.arity as i64),
                Value::Int(f.n_slots as i64),
                Value::list(code),
                Value::list(lines),
            ])
        })
        .collect();
    items.push(Value::tuple(vec![Value::str("entry"), Value::Int(m.entry as i64)]));
    Value::list(items)
}

fn reify_instr(m: &Module, ins: &Instr) -> Value {
    let int = |n: u32| Value::Int(n as i64);
    let s = |k: &u32| Value::Str(m.constants[*k as usize].clone());
    let imms: Vec<Value> = match ins {
        Instr::PushInt(n) => vec![Value::Int(*n)],
        Instr::PushBool(b) => vec![Value::Bool(*b)],
        Instr::PushStr(k) => vec![s(k)],
        Instr::Load(x) | Instr::Store(x) => vec![int(*x)],
        Instr::MakeClosure(f, slots) => {
            let mut v = vec![int(*f)];
            v.extend(slots.iter().map(|&x| int(x)));
            v
        }
        Instr::Call(n) | Instr::TailCall(n) | Instr::MakeTuple(n) | Instr::MakeList(n) => vec![int(*n)],
        Instr::CallBuiltin(b, n) => vec![Value::str(b.name()), int(*n)],
        Instr::Jump(t)
        | Instr::JumpIfFalse(t)
        | Instr::TryPush(t)
        | Instr::TestUnit(t)
        | Instr::TestNil(t)
        | Instr::TestCons(t) => vec![int(*t)],
        Instr::TestInt(n, t) => vec![Value::Int(*n), int(*t)],
        Instr::TestBool(b, t) => vec![Value::Bool(*b), int(*t)],
        Instr::TestStr(k, t) => vec![s(k), int(*t)],
        Instr::TestTuple(n, t) => vec![int(*n), int(*t)],
        _ => Vec::new(),
    };
    Value::tuple(vec![Value::str(ins.opcode()), Value::list(imms)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::compile_source;
    use crate::value::{format_value, value_size};

    #[test]
    fn minimal_module() {
        let m = compile_source("fn main() = 42").unwrap();
        assert_eq!(
            format_value(&reify(&m)),
            r#"[("main", 0, 0, [("PUSH_INT", [42]), ("RET", [])], [1, 1]), ("entry", 0)]"#
        );
        assert!(value_size(&reify(&m)) > 0);
    }

    #[test]
    fn strings_are_inlined() {
        let m = compile_source(r#"fn main() = print("hi")"#).unwrap();
        let text = format_value(&reify(&m));
        assert!(text.contains(r#"("PUSH_STR", ["hi"])"#), "{text}");
        assert!(text.contains(r#"("CALL_BUILTIN", ["print", 1])"#), "{text}");
    }
}
