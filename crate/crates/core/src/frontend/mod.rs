//! Source text to syntax trees, checked programs and bytecode modules.

pub mod ast;
pub mod bytecode;
pub mod check;
pub mod compile;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod reify;

use alloc::vec::Vec;
use core::fmt;

pub use ast::{Builtin, Program};
pub use bytecode::{disassemble, Function, Instr, MalformedModule, Module, OPCODES};
pub use check::{check, CheckError, CheckErrorKind};
pub use compile::compile;
pub use lexer::{tokenize, LexError};
pub use parser::{parse, ParseError};
pub use pretty::{pretty, strip_lines};
pub use reify::reify;

/// Any front-end rejection, carrying source line numbers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FrontendError {
    Lex(LexError),
    Parse(ParseError),
    Check(Vec<CheckError>),
}

impl fmt::Display for FrontendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrontendError::Lex(e) => e.fmt(f),
            FrontendError::Parse(e) => e.fmt(f),
            FrontendError::Check(errs) => {
                for (i, e) in errs.iter().enumerate() {
                    if i > 0 {
                        f.write_str("\n")?;
                    }
                    e.fmt(f)?;
                }
                Ok(())
            }
        }
    }
}

impl From<LexError> for FrontendError {
    fn from(e: LexError) -> Self {
        FrontendError::Lex(e)
    }
}

impl From<ParseError> for FrontendError {
    fn from(e: ParseError) -> Self {
        FrontendError::Parse(e)
    }
}

/// Tokenize and parse, without checking.
pub fn parse_source(source: &str) -> Result<Program, FrontendError> {
    Ok(parse(&tokenize(source)?)?)
}

/// Parse and check.
pub fn check_source(source: &str) -> Result<Program, FrontendError> {
    let program = parse_source(source)?;
    check(&program).map_err(FrontendError::Check)?;
    Ok(program)
}

/// Parse, check and compile.
pub fn compile_source(source: &str) -> Result<Module, FrontendError> {
    Ok(compile(&check_source(source)?))
}
