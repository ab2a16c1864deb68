use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

/// 17 significant digits, enough to round-trip any double.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Where tables go. Human-readable lines go to stdout, or to stderr when
/// the table itself occupies stdout.
pub struct Sink {
    pub to_stdout: bool,
}

impl Sink {
    pub fn note(&self, line: &str) {
        if self.to_stdout {
            eprintln!("{line}");
        } else {
            println!("{line}");
        }
    }
}

pub fn open(path: Option<&Path>) -> Result<(Box<dyn Write>, Sink)> {
    match path {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            Ok((Box::new(BufWriter::new(f)), Sink { to_stdout: false }))
        }
        None => Ok((Box::new(io::stdout().lock()), Sink { to_stdout: true })),
    }
}

pub fn csv_writer(path: Option<&Path>) -> Result<(csv::Writer<Box<dyn Write>>, Sink)> {
    let (w, sink) = open(path)?;
    Ok((csv::Writer::from_writer(w), sink))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
