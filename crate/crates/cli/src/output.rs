use std::path::Path;

use serde::Serialize;

use crate::config::Command;
use crate::error::CliError;

/// A file produced by a run, held in memory until the run has succeeded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

impl Artifact {
    pub fn json<T: Serialize>(name: &str, value: &T) -> Result<Self, CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        s.push('\n');
        Ok(Artifact { name: name.into(), contents: s.into_bytes() })
    }

    pub fn text(name: &str, contents: String) -> Self {
        Artifact { name: name.into(), contents: contents.into_bytes() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub command: Command,
    pub artifacts: Vec<Artifact>,
    pub summary: String,
    pub exit_code: i32,
}

impl Outcome {
    pub fn get(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

/// Numbers in CSV cells: shortest round-trip form, exponent for extremes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), num)
}

pub struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Result<Self, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(csv_err)?;
        Ok(Table { w })
    }

    pub fn row<I, S>(&mut self, cells: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(cells).map_err(csv_err)
    }

    pub fn finish(self, name: &str) -> Result<Artifact, CliError> {
        let contents = self.w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        Ok(Artifact { name: name.into(), contents })
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e.to_string()))
}

pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.contents)?;
    }
    Ok(())
}
