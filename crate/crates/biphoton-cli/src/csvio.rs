//! CSV emission and ingestion. Output uses full float precision so repeated
//! runs are byte-comparable; input is resolved by header name so a scan
//! produced by this tool round-trips into the fit command unchanged.

use std::fs;
use std::path::Path;

use biphoton::mzi::{ScanKind, ScanPoint, ScanSource, VisibilityScan};
use biphoton::units::MICROMETER;
use biphoton::{Error, Result};

fn domain(msg: String) -> Error {
    Error::Domain(msg)
}

pub struct Table {
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &'static [&'static str]) -> Self {
        Table { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(32 * self.header.len() * (self.rows.len() + 1));
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    /// Write to a file, or to stdout when no path is given.
    pub fn write(&self, out: Option<&Path>) -> Result<()> {
        let text = self.render();
        match out {
            Some(path) => fs::write(path, text)
                .map_err(|e| domain(format!("cannot write {}: {e}", path.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

/// Read a visibility table for fitting. Columns are located by name:
/// `l_ag_um` and `visibility` are required, `sigma` is optional; anything
/// else (the forward scan's delta_t_s, rho, ...) is ignored. Rows come back
/// sorted by position.
pub fn read_visibility_csv(path: &Path) -> Result<VisibilityScan> {
    let text = fs::read_to_string(path)
        .map_err(|e| domain(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| domain(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let i_l = find("l_ag_um").ok_or_else(|| {
        domain(format!("{}: no l_ag_um column in header '{header}'", path.display()))
    })?;
    let i_v = find("visibility").ok_or_else(|| {
        domain(format!("{}: no visibility column in header '{header}'", path.display()))
    })?;
    let i_s = find("sigma");

    let mut points = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(domain(format!(
                "{} line {lineno}: {} fields, header has {}",
                path.display(),
                fields.len(),
                cols.len()
            )));
        }
        let num = |i: usize, name: &str| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|_| {
                domain(format!(
                    "{} line {lineno}: {name} value '{}' is not a number",
                    path.display(),
                    fields[i]
                ))
            })
        };
        let l_ag = num(i_l, "l_ag_um")? * MICROMETER;
        let value = num(i_v, "visibility")?;
        let sigma = match i_s {
            Some(i) => Some(num(i, "sigma")?),
            None => None,
        };
        points.push(ScanPoint { l_ag, value, sigma });
    }
    if points.is_empty() {
        return Err(domain(format!("{}: header but no data rows", path.display())));
    }
    points.sort_by(|a, b| a.l_ag.total_cmp(&b.l_ag));
    VisibilityScan::new(points, ScanKind::Visibility, ScanSource::Measured)
}
