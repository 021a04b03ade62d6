//! Guest language toolchain: values, front end, virtual machine, AST
//! evaluator and the self-emulator asset.

#![no_std]

extern crate alloc;

pub mod compare;
pub mod frontend;
pub mod selfemu;
pub mod value;
pub mod vm;

pub use value::{format_value, value_equal, value_size, Value};
