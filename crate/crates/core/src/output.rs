//! Result files: field and spin-wave tables as CSV, scalar metrics as
//! `key = value` lines.

use std::io::Write;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::solver::{AtomicFieldHistory, FieldHistory};

pub const FIELD_HEADER: &str = "z,t,tau,psi_re,psi_im,abs_psi";
pub const SPIN_HEADER: &str = "z,t,tau,x_re,x_im,y_re,y_im,cbm_re,cbm_im";

fn cell<W: Write>(w: &mut W, v: f64, last: bool) -> Result<()> {
    write!(w, "{v:.8e}")?;
    w.write_all(if last { b"\n" } else { b"," })?;
    Ok(())
}

fn row<W: Write>(w: &mut W, cells: &[f64]) -> Result<()> {
    for (i, &v) in cells.iter().enumerate() {
        cell(w, v, i + 1 == cells.len())?;
    }
    Ok(())
}

/// Writes one row per stored (z, τ) node, z-major; returns the row count.
pub fn write_field_csv<W: Write>(w: &mut W, history: &FieldHistory) -> Result<usize> {
    writeln!(w, "{FIELD_HEADER}")?;
    let axes = &history.axes;
    for (iz, &z) in axes.z.iter().enumerate() {
        for (it, &tau) in axes.tau.iter().enumerate() {
            let p = history.at(iz, it);
            row(w, &[z, history.lab_time(iz, it), tau, p.re, p.im, p.norm()])?;
        }
    }
    Ok(axes.len())
}

/// Field table from arbitrary samples `(z, τ, Ψ)`, with `t = τ + z/c`.
pub fn write_field_rows<W, I>(w: &mut W, c: f64, rows: I) -> Result<usize>
where
    W: Write,
    I: IntoIterator<Item = (f64, f64, C64)>,
{
    writeln!(w, "{FIELD_HEADER}")?;
    let mut n = 0;
    for (z, tau, p) in rows {
        row(w, &[z, tau + z / c, tau, p.re, p.im, p.norm()])?;
        n += 1;
    }
    Ok(n)
}

pub fn write_spin_csv<W: Write>(w: &mut W, history: &AtomicFieldHistory) -> Result<usize> {
    writeln!(w, "{SPIN_HEADER}")?;
    let axes = &history.axes;
    for (iz, &z) in axes.z.iter().enumerate() {
        for (it, &tau) in axes.tau.iter().enumerate() {
            let i = axes.index(iz, it);
            let (x, y, m) = (history.x[i], history.y[i], history.c_big_m[i]);
            row(w, &[z, tau + z / history.c, tau, x.re, x.im, y.re, y.im, m.re, m.im])?;
        }
    }
    Ok(axes.len())
}

pub fn write_metrics<W: Write>(w: &mut W, metrics: &[(&str, f64)]) -> Result<()> {
    for (k, v) in metrics {
        writeln!(w, "{k} = {v}")?;
    }
    Ok(())
}

/// A parsed numeric CSV table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn read_csv(text: &str) -> Result<Table> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or(Error::EmptySignal)?;
    let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let cells = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Syntax { line: i + 1, reason: e.to_string() })?;
        if cells.len() != header.len() {
            return Err(Error::Syntax {
                line: i + 1,
                reason: format!("expected {} columns, found {}", header.len(), cells.len()),
            });
        }
        rows.push(cells);
    }
    Ok(Table { header, rows })
}

pub fn read_metrics(text: &str) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| Error::Syntax { line: i + 1, reason: reason.to_string() };
        let (k, v) = line.split_once('=').ok_or_else(|| bad("expected `key = value`"))?;
        let v: f64 = v.trim().parse().map_err(|_| bad("value is not a number"))?;
        out.push((k.trim().to_string(), v));
    }
    Ok(out)
}
