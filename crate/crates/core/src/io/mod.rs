//! Configuration, batch commands and their file formats.
//!
//! Every CSV file has one header row, `,` separators, `.` decimals, LF line
//! endings, and reals printed with 17 significant digits, so identical runs
//! produce identical bytes.

mod commands;
pub mod config;
mod svg;

pub use commands::{
    cmd_hysteresis, cmd_phase_diagram, cmd_pulse, cmd_simulate, cmd_steady, CliError, Outcome,
};
pub use config::{emit, parse_config, ConfigError, RunConfig};
pub use svg::heatmap_svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Exit status of the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Io = 1,
    Config = 2,
    Numerical = 3,
    PartialSweep = 4,
}

/// One CSV cell.
#[derive(Debug, Clone, Copy)]
pub enum Field<'a> {
    Real(f64),
    Int(i64),
    Text(&'a str),
}

impl From<f64> for Field<'_> {
    fn from(v: f64) -> Self {
        Field::Real(v)
    }
}

impl From<usize> for Field<'_> {
    fn from(v: usize) -> Self {
        Field::Int(v as i64)
    }
}

impl<'a> From<&'a str> for Field<'a> {
    fn from(v: &'a str) -> Self {
        Field::Text(v)
    }
}

/// `{:.16e}` for finite values, `inf`, `-inf` and `nan` otherwise.
pub fn format_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self {
            buf,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[Field]) {
        debug_assert_eq!(fields.len(), self.columns);
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            match f {
                Field::Real(v) => self.buf.push_str(&format_real(*v)),
                Field::Int(v) => {
                    let _ = write!(self.buf, "{v}");
                }
                Field::Text(s) => {
                    if s.contains([',', '"', '\n']) {
                        let _ = write!(self.buf, "\"{}\"", s.replace('"', "\"\""));
                    } else {
                        self.buf.push_str(s);
                    }
                }
            }
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Output directory that records every file it writes.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        fs::write(self.root.join(name), contents)?;
        self.files.push(FileEntry {
            name: name.to_string(),
            bytes: contents.len(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_have_seventeen_digits() {
        assert_eq!(format_real(0.1), "1.0000000000000001e-1");
        assert_eq!(format_real(-380.0), "-3.8000000000000000e2");
        assert_eq!(format_real(f64::INFINITY), "inf");
        for v in [0.1, 1.0 / 3.0, 6.02e23, -1e-300] {
            assert_eq!(format_real(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_layout() {
        let mut c = Csv::new(&["a", "b", "c"]);
        c.row(&[1.5.into(), 3usize.into(), "x,y".into()]);
        assert_eq!(c.finish(), "a,b,c\n1.5000000000000000e0,3,\"x,y\"\n");
    }

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
