//! Artifact writers: CSV tables with a provenance header and the summary JSON.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::SCHEMA_VERSION;
use crate::error::Result;

/// `{:.16e}`: 17 significant digits, '.' separator.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Provenance written as the first line of every CSV file.
#[derive(Clone, Debug)]
pub struct Header {
    pub scenario: String,
    pub seed: u64,
}

impl Header {
    fn line(&self) -> String {
        format!("# seed={} scenario={} schema_version={SCHEMA_VERSION}\n", self.seed, self.scenario)
    }
}

/// Rows accumulated in memory and written in one go.
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: &Path, header: &Header) -> Result<()> {
        let mut buf = header.line().into_bytes();
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut buf);
            let io = |e: csv::Error| crate::error::Error::Io(e.to_string());
            w.write_record(&self.columns).map_err(io)?;
            for r in &self.rows {
                w.write_record(r).map_err(io)?;
            }
            w.flush()?;
        }
        fs::write(path, buf)?;
        Ok(())
    }
}

/// Column names `prefix1..prefixN`.
pub fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn nums(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| num(*x)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub scenario: String,
    pub experiment: String,
    pub seed: u64,
    pub status: Status,
    pub error: Option<String>,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
}

impl Summary {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Pass => 0,
            Status::Fail => 2,
            Status::Error => 1,
        }
    }
}

/// Write JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| crate::error::Error::Io(e.to_string()))?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Output directory plus the list of files written so far.
pub struct Sink {
    pub dir: PathBuf,
    pub header: Header,
    pub artifacts: Vec<String>,
}

impl Sink {
    pub fn new(dir: PathBuf, header: Header) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Sink {
            dir,
            header,
            artifacts: Vec::new(),
        })
    }

    pub fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        t.write(&self.dir.join(name), &self.header)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        write_json(&self.dir.join(name), value)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(num(2.0), "2.0000000000000000e0");
        assert_eq!(num(-0.1), "-1.0000000000000001e-1");
        let back: f64 = num(0.1).parse().unwrap();
        assert_eq!(back, 0.1);
    }

    #[test]
    fn csv_has_header_and_quotes() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        let h = Header {
            scenario: "s".into(),
            seed: 7,
        };
        let p = dir.path().join("t.csv");
        t.write(&p, &h).unwrap();
        let s = fs::read_to_string(p).unwrap();
        assert_eq!(s, "# seed=7 scenario=s schema_version=1\na,b\n1,\"x,y\"\n");
    }
}
