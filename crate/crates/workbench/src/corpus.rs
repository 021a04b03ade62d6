//! Corpus layout on disk.
//!
//! ```text
//! corpus/<name>.gl             checked programs
//! corpus/probes/<name>.gl      detection probes
//! corpus/unchecked/<name>.gl   programs the checker rejects
//! corpus/<...>.expect          golden report next to each program
//! corpus/checklist_map         checklist rows to test ids
//! ```
//!
//! A program may start with a `# fuel: N` line; it then runs under that
//! reduction cap in every mode.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Kind {
    Main,
    Probe,
    Unchecked,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Main => "main",
            Kind::Probe => "probe",
            Kind::Unchecked => "unchecked",
        }
    }

    fn subdir(self) -> Option<&'static str> {
        match self {
            Kind::Main => None,
            Kind::Probe => Some("probes"),
            Kind::Unchecked => Some("unchecked"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Entry {
    /// File stem, prefixed by its subdirectory for probes and unchecked
    /// programs: `arith`, `probes/clock_points`.
    pub id: String,
    pub kind: Kind,
    pub source: String,
    pub fuel: Option<u64>,
    /// Contents of the golden report, when present.
    pub expect: Option<String>,
    pub path: PathBuf,
}

impl Entry {
    pub fn expect_path(&self) -> PathBuf {
        self.path.with_extension("expect")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: malformed fuel directive")]
    Fuel { path: PathBuf },
}

pub const CHECKLIST_MAP: &str = "checklist_map";

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

/// Reads the `# fuel: N` directive among the leading comment lines.
pub fn fuel_directive(source: &str) -> Result<Option<u64>, std::num::ParseIntError> {
    for line in source.lines() {
        let line = line.trim();
        let Some(comment) = line.strip_prefix('#') else { break };
        if let Some(n) = comment.trim().strip_prefix("fuel:") {
            return n.trim().parse().map(Some);
        }
    }
    Ok(None)
}

fn load_kind(dir: &Path, kind: Kind, out: &mut Vec<Entry>) -> Result<(), CorpusError> {
    let dir = match kind.subdir() {
        Some(sub) => dir.join(sub),
        None => dir.to_path_buf(),
    };
    if kind != Kind::Main && !dir.is_dir() {
        return Ok(());
    }
    let mut paths = Vec::new();
    for item in fs::read_dir(&dir).map_err(io_err(&dir))? {
        let path = item.map_err(io_err(&dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "gl") {
            paths.push(path);
        }
    }
    paths.sort();
    for path in paths {
        let source = fs::read_to_string(&path).map_err(io_err(&path))?;
        let fuel = fuel_directive(&source).map_err(|_| CorpusError::Fuel { path: path.clone() })?;
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let id = match kind.subdir() {
            Some(sub) => format!("{sub}/{stem}"),
            None => stem,
        };
        let expect_path = path.with_extension("expect");
        let expect = match fs::read_to_string(&expect_path) {
            Ok(text) => Some(text),
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => return Err(CorpusError::Io { path: expect_path, source: e }),
        };
        out.push(Entry { id, kind, source, fuel, expect, path });
    }
    Ok(())
}

/// Every program of the corpus, main programs first, each group by name.
pub fn load(dir: &Path) -> Result<Vec<Entry>, CorpusError> {
    let mut out = Vec::new();
    for kind in [Kind::Main, Kind::Probe, Kind::Unchecked] {
        load_kind(dir, kind, &mut out)?;
    }
    Ok(out)
}

/// The checklist map text, if the corpus has one.
pub fn checklist_map(dir: &Path) -> Result<Option<String>, CorpusError> {
    let path = dir.join(CHECKLIST_MAP);
    match fs::read_to_string(&path) {
        Ok(text) => Ok(Some(text)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(CorpusError::Io { path, source: e }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fuel_directive_is_read_from_leading_comments() {
        assert_eq!(fuel_directive("# fuel: 30\nfn main() = 0"), Ok(Some(30)));
        assert_eq!(fuel_directive("# note\n# fuel: 7\nfn main() = 0"), Ok(Some(7)));
        assert_eq!(fuel_directive("fn main() = 0\n# fuel: 7"), Ok(None));
        assert!(fuel_directive("# fuel: lots").is_err());
    }
}
