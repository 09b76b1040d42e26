//! CSV and JSON emission.
//!
//! Every float in a CSV is written with 17 significant digits, which is
//! enough to round-trip any `f64`. Non-numeric fields are copied verbatim.

use std::fs;
use std::path::{Path, PathBuf};

use penmix::{Error, Result};
use serde::Serialize;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv input is UTF-8"))
}

#[cfg(test)]
/// Parses a CSV and writes it back in canonical form: numeric fields are
/// re-formatted, everything else is kept as is.
pub fn recanonicalize(text: &str) -> Result<String> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(
            rec.iter()
                .map(|f| match f.parse::<f64>() {
                    Ok(x) if f.contains('e') || !x.is_finite() => num(x),
                    _ => f.to_string(),
                })
                .collect(),
        );
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_text(&header, &rows)
}

pub fn json_text<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Parse(e.to_string()))
}

/// Output directory given by `--out`; nothing is written when absent.
pub struct Sink {
    dir: Option<PathBuf>,
    pub written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: Option<&Path>) -> Result<Sink> {
        if let Some(d) = dir {
            fs::create_dir_all(d)?;
        }
        Ok(Sink {
            dir: dir.map(Path::to_path_buf),
            written: Vec::new(),
        })
    }

    pub fn put(&mut self, name: &str, text: &str) -> Result<()> {
        if let Some(d) = &self.dir {
            let path = d.join(name);
            fs::write(&path, text)?;
            self.written.push(path);
        }
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let text = csv_text(header, rows)?;
        self.put(name, &text)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = json_text(value)?;
        self.put(name, &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, -0.0, f64::MIN_POSITIVE] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn emitted_csv_is_a_fixed_point() {
        let rows = vec![
            vec![num(0.1), num(f64::NAN), "needs \"quotes\", and commas".into()],
            vec![num(-2.5e-17), num(3.0), String::new()],
            vec![num(f64::INFINITY), num(1.0), "P>E~I".into()],
        ];
        let text = csv_text(&["a", "b", "reason"], &rows).unwrap();
        assert_eq!(recanonicalize(&text).unwrap(), text);
        assert!(text.starts_with("a,b,reason\n"));
    }
}
