use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

/// A CSV table: comma-separated, header row, LF line endings.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, header: &[&'static str]) -> Self {
        Self { file: file.to_string(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Entry of the report's artifact list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Artifact {
    pub file: String,
    /// Data rows, header excluded; zero for non-tabular files.
    pub rows: usize,
    pub kind: &'static str,
}

pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn int(n: usize) -> String {
    n.to_string()
}

pub fn flag(b: bool) -> String {
    (if b { "1" } else { "0" }).to_string()
}

pub fn write_tables(dir: &Path, tables: &[Table]) -> io::Result<Vec<Artifact>> {
    tables
        .iter()
        .map(|t| {
            fs::write(dir.join(&t.file), t.render())?;
            Ok(Artifact { file: t.file.clone(), rows: t.rows.len(), kind: "csv" })
        })
        .collect()
}

pub fn write_plot(dir: &Path, script: &str) -> io::Result<Artifact> {
    let file = "plot.gp";
    fs::write(dir.join(file), script)?;
    Ok(Artifact { file: file.to_string(), rows: 0, kind: "gnuplot" })
}

pub const PLOT_PREAMBLE: &str = "set datafile separator ','\nset key autotitle columnhead\n";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layout() {
        let mut t = Table::new("t.csv", &["a", "b"]);
        t.push(vec![num(0.5), int(3)]);
        assert_eq!(t.render(), "a,b\n5e-1,3\n");
    }
}
