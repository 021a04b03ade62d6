use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gl_core::format_value;
use gl_core::frontend::{self, disassemble, reify, OPCODES};
use gl_core::selfemu::{emulate_module, EmuError, EmuOptions, Hook};
use gl_core::vm::{self, Mode, Outcome, RunError, RunOptions, RunReport};
use gl_workbench::{difftest, DifftestOptions, EXIT_COVERAGE};

const EXIT_CRASH: u8 = 1;
const EXIT_FRONTEND: u8 = 4;
const EXIT_EMULATOR: u8 = 5;

/// Guest language workbench: toolchain, self-emulator and differential
/// harness.
#[derive(Parser)]
#[command(name = "glwb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct FuelArg {
    /// Reduction budget (emulated reductions for `emulate`).
    #[arg(long, env = "GL_FUEL", value_parser = clap::value_parser!(u64).range(1..))]
    fuel: Option<u64>,
}

#[derive(Args)]
struct OutArg {
    /// Write the output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SabotageArg {
    /// Hooks to strip from the emulator: clock, memory, stacktrace, fun_id, sys_info.
    #[arg(long, value_delimiter = ',', value_parser = parse_hook)]
    sabotage: Vec<Hook>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a program directly.
    Run {
        file: PathBuf,
        #[arg(long, default_value = "bytecode", value_parser = parse_mode)]
        mode: Mode,
        #[command(flatten)]
        fuel: FuelArg,
        /// Print per-opcode counts and allocation charges to stderr.
        #[arg(long)]
        audit: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run a program under the self-emulator.
    Emulate {
        file: PathBuf,
        #[command(flatten)]
        fuel: FuelArg,
        #[command(flatten)]
        sabotage: SabotageArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Check and compile a program; list its functions, or print the reified module.
    Compile {
        file: PathBuf,
        #[arg(long)]
        reify: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Print the bytecode listing.
    Disas {
        file: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Compare direct and emulated runs over a corpus directory.
    Difftest {
        dir: PathBuf,
        #[command(flatten)]
        fuel: FuelArg,
        #[command(flatten)]
        sabotage: SabotageArg,
        /// Include per-opcode execution counts in the report.
        #[arg(long)]
        audit: bool,
        /// Write the full report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the corpus and print only the checklist report.
    Report {
        dir: PathBuf,
        #[command(flatten)]
        fuel: FuelArg,
        #[command(flatten)]
        sabotage: SabotageArg,
        #[arg(long)]
        audit: bool,
        #[command(flatten)]
        out: OutArg,
    },
}

fn parse_hook(s: &str) -> Result<Hook, String> {
    Hook::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = Hook::ALL.iter().map(|h| h.name()).collect();
        format!("unknown hook `{s}` (expected one of {})", names.join(", "))
    })
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::from_name(s).ok_or_else(|| format!("unknown mode `{s}` (expected bytecode, ast or ast-unchecked)"))
}

fn read(path: &Path) -> Result<String, ExitCode> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("glwb: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_FRONTEND)
    })
}

fn emit(out: &OutArg, text: &str) -> Result<(), ExitCode> {
    match &out.out {
        Some(path) => fs::write(path, text).map_err(|e| {
            eprintln!("glwb: cannot write {}: {e}", path.display());
            ExitCode::FAILURE
        }),
        None => stdout(text),
    }
}

/// Writes to stdout; a reader that went away early is not an error.
fn stdout(text: &str) -> Result<(), ExitCode> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
            eprintln!("glwb: cannot write output: {e}");
            Err(ExitCode::FAILURE)
        }
        _ => Ok(()),
    }
}

fn outcome_code(report: &RunReport) -> ExitCode {
    ExitCode::from(match report.outcome {
        Outcome::Value(_) => 0,
        Outcome::Crash { .. } => EXIT_CRASH,
        Outcome::Deadlock(_) => 2,
        Outcome::FuelExhausted => 3,
    })
}

fn frontend_failure(e: &dyn std::fmt::Display) -> ExitCode {
    eprintln!("{e}");
    ExitCode::from(EXIT_FRONTEND)
}

fn compile(path: &Path) -> Result<frontend::Module, ExitCode> {
    frontend::compile_source(&read(path)?).map_err(|e| frontend_failure(&e))
}

fn cmd_run(file: &Path, mode: Mode, fuel: Option<u64>, audit: bool, out: &OutArg) -> Result<ExitCode, ExitCode> {
    let source = read(file)?;
    let ex = match vm::run_source(&source, mode, RunOptions { fuel, audit }) {
        Ok(ex) => ex,
        Err(RunError::Frontend(e)) => return Err(frontend_failure(&e)),
        Err(RunError::Host(e)) => {
            eprintln!("glwb: {e}");
            return Err(ExitCode::from(EXIT_CRASH));
        }
    };
    emit(out, &ex.report.serialize())?;
    if let Some(a) = ex.audit {
        for (name, n) in OPCODES.iter().zip(a.opcodes) {
            eprintln!("OPCODE {name} {n}");
        }
        for c in a.charges {
            eprintln!("ALLOC pid={} units={} what={}", c.pid, c.units, c.what);
        }
    }
    Ok(outcome_code(&ex.report))
}

fn cmd_emulate(file: &Path, fuel: Option<u64>, unhooked: Vec<Hook>, out: &OutArg) -> Result<ExitCode, ExitCode> {
    let module = compile(file)?;
    let opts = EmuOptions { fuel, host_fuel: None, unhooked };
    match emulate_module(&module, &opts) {
        Ok(run) => {
            emit(out, &run.report.serialize())?;
            Ok(outcome_code(&run.report))
        }
        Err(EmuError::Frontend(e)) => Err(frontend_failure(&e)),
        Err(e) => {
            eprintln!("glwb: {e}");
            Err(ExitCode::from(EXIT_EMULATOR))
        }
    }
}

fn cmd_compile(file: &Path, reified: bool, out: &OutArg) -> Result<ExitCode, ExitCode> {
    let module = compile(file)?;
    let text = if reified {
        format!("{}\n", format_value(&reify(&module)))
    } else {
        module
            .functions
            .iter()
            .enumerate()
            .map(|(i, f)| format!("{i} {}/{} slots={} instrs={}\n", f.name, f.arity, f.n_slots, f.code.len()))
            .collect()
    };
    emit(out, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn run_corpus(
    dir: &Path,
    fuel: Option<u64>,
    unhooked: Vec<Hook>,
    audit: bool,
) -> Result<gl_workbench::Difftest, ExitCode> {
    difftest(dir, DifftestOptions { unhooked, fuel, audit }).map_err(|e| {
        eprintln!("glwb: {e}");
        ExitCode::from(EXIT_COVERAGE as u8)
    })
}

fn run(cli: Cli) -> Result<ExitCode, ExitCode> {
    match cli.command {
        Command::Run { file, mode, fuel, audit, out } => cmd_run(&file, mode, fuel.fuel, audit, &out),
        Command::Emulate { file, fuel, sabotage, out } => cmd_emulate(&file, fuel.fuel, sabotage.sabotage, &out),
        Command::Compile { file, reify, out } => cmd_compile(&file, reify, &out),
        Command::Disas { file, out } => {
            let module = compile(&file)?;
            let mut listing = disassemble(&module);
            if !listing.ends_with('\n') {
                listing.push('\n');
            }
            emit(&out, &listing)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Difftest { dir, fuel, sabotage, audit, out } => {
            let d = run_corpus(&dir, fuel.fuel, sabotage.sabotage, audit)?;
            stdout(&d.summary())?;
            for f in d.failures() {
                eprintln!("FAIL {f}");
            }
            if let Some(path) = out {
                emit(&OutArg { out: Some(path) }, &d.serialize())?;
            }
            Ok(ExitCode::from(d.exit_code() as u8))
        }
        Command::Report { dir, fuel, sabotage, audit, out } => {
            let d = run_corpus(&dir, fuel.fuel, sabotage.sabotage, audit)?;
            match &d.checklist {
                Ok(c) => emit(&out, &c.serialize(audit))?,
                Err(e) => eprintln!("glwb: coverage guard: {e}"),
            }
            Ok(ExitCode::from(d.exit_code() as u8))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_FRONTEND) } else { ExitCode::SUCCESS };
        }
    };
    run(cli).unwrap_or_else(|code| code)
}
