//! CSV tables and the companion gnuplot script.

use std::fs;
use std::path::{Path, PathBuf};

use crate::failure::CliError;

/// Shortest round-trip scientific form, so identical runs give identical bytes.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// A table whose rows all start with the configuration hash.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        let mut h = vec!["config_hash".to_string()];
        h.extend(header.into_iter().map(Into::into));
        Table {
            header: h,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, hash: &str, row: Vec<String>) {
        debug_assert_eq!(row.len() + 1, self.header.len());
        let mut r = Vec::with_capacity(row.len() + 1);
        r.push(hash.to_string());
        r.extend(row);
        self.rows.push(r);
    }

    pub fn extend(&mut self, mut other: Table) {
        self.rows.append(&mut other.rows);
    }

    /// 1-based column of `name`, as gnuplot counts.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name).map(|i| i + 1)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let err = |e| CliError::Csv(path.display().to_string(), e);
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::Io(path.display().to_string(), e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let err = |e| CliError::Csv(path.display().to_string(), e);
        let mut r = csv::Reader::from_path(path).map_err(err)?;
        let header: Vec<String> = r.headers().map_err(err)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(err)?.iter().map(String::from).collect());
        }
        Ok(Table { header, rows })
    }

    /// Parsed values of `name`; empty cells become `None`.
    pub fn floats(&self, name: &str) -> Result<Vec<Option<f64>>, CliError> {
        let k = self
            .column(name)
            .ok_or_else(|| CliError::Config(format!("table has no column `{name}`")))?
            - 1;
        self.rows
            .iter()
            .map(|r| match r[k].as_str() {
                "" => Ok(None),
                s => s
                    .parse()
                    .map(Some)
                    .map_err(|_| CliError::Config(format!("column `{name}` holds `{s}`, which is not a number"))),
            })
            .collect()
    }
}

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(root.display().to_string(), e))?;
        Ok(OutputDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn subdir(&self, name: &str) -> Result<OutputDir, CliError> {
        OutputDir::create(&self.root.join(name))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::Io(p.display().to_string(), e))
    }
}

/// A log-scale plot of one column against another.
pub struct Plot<'a> {
    pub file: &'a str,
    pub x: usize,
    pub y: &'a [(usize, &'a str)],
    pub xlabel: &'a str,
    pub ylabel: &'a str,
}

pub fn gnuplot_script(title: &str, plots: &[Plot]) -> String {
    let mut s = String::new();
    s.push_str("# gnuplot -p plot.gp\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set logscale y\n");
    s.push_str("set format y '%.0e'\n");
    s.push_str("set grid\n");
    s.push_str("set key top right\n");
    if plots.len() > 1 {
        s.push_str(&format!("set multiplot layout {},1 title '{title}'\n", plots.len()));
    } else {
        s.push_str(&format!("set title '{title}'\n"));
    }
    for p in plots {
        s.push_str(&format!("set xlabel '{}'\nset ylabel '{}'\n", p.xlabel, p.ylabel));
        let series: Vec<String> = p
            .y
            .iter()
            .map(|(col, name)| format!("'{}' skip 1 using {}:{} with linespoints title '{name}'", p.file, p.x, col))
            .collect();
        s.push_str(&format!("plot {}\n", series.join(", \\\n     ")));
    }
    if plots.len() > 1 {
        s.push_str("unset multiplot\n");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0, 0.1, 1e-300, 5.927284e-8, std::f64::consts::PI] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.05), "5e-2");
    }

    #[test]
    fn tables_round_trip_through_csv() {
        let dir = std::env::temp_dir().join(format!("sc-table-{}", std::process::id()));
        let out = OutputDir::create(&dir).unwrap();
        let mut t = Table::new(["hbar", "measured"]);
        t.push("abc", vec![num(0.1), opt(Some(2e-4))]);
        t.push("abc", vec![num(0.05), opt(None)]);
        t.write(&out.path("t.csv")).unwrap();
        let back = Table::read(&out.path("t.csv")).unwrap();
        assert_eq!(back.column("measured"), Some(3));
        assert_eq!(back.floats("measured").unwrap(), vec![Some(2e-4), None]);
        std::fs::remove_dir_all(dir).unwrap();
    }
}
