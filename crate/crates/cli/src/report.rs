//! CSV reports and plain-text field dumps.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use horizonctl::verify::CheckRow;
use horizonctl::{ControlTrajectory, Grid, TimeGrid, Trajectory};

pub const CSV_HEADER: &str = "run_id,check_or_metric,value,threshold,status,paper_anchor";

/// 17 significant digits, so values round-trip exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub status: String,
    pub anchor: String,
}

impl Row {
    /// Reported quantity with no pass/fail semantics.
    pub fn metric(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold: f64::NAN,
            status: "info".into(),
            anchor: "-".into(),
        }
    }

    pub fn check(name: impl Into<String>, ok: bool, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            status: if ok { "pass" } else { "fail" }.into(),
            anchor: "-".into(),
        }
    }

    pub fn with_anchor(mut self, anchor: impl Into<String>) -> Self {
        self.anchor = anchor.into();
        self
    }
}

impl From<&CheckRow> for Row {
    fn from(r: &CheckRow) -> Self {
        Self {
            name: r.name.clone(),
            value: r.value,
            threshold: r.threshold,
            status: r.status.as_str().into(),
            anchor: r.anchor.slug().into(),
        }
    }
}

pub fn render_csv(run_id: &str, rows: &[Row]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{run_id},{},{},{},{},{}",
            r.name,
            fmt_f64(r.value),
            fmt_f64(r.threshold),
            r.status,
            r.anchor
        );
    }
    s
}

pub fn write_csv(path: &Path, run_id: &str, rows: &[Row]) -> io::Result<()> {
    std::fs::write(path, render_csv(run_id, rows))
}

fn dump_header(s: &mut String, grid: &Grid, tg: &TimeGrid, quantity: &str) {
    let [nx, ny] = grid.counts();
    let _ = writeln!(s, "# grid {nx} {ny}");
    let _ = writeln!(s, "# T {}", fmt_f64(tg.horizon()));
    let _ = writeln!(s, "# M {}", tg.steps());
    let _ = writeln!(s, "# quantity {quantity}");
}

/// One line `m t node x y value` per time node and grid node.
pub fn render_trajectory(grid: &Grid, tg: &TimeGrid, quantity: &str, y: &Trajectory) -> String {
    let mut s = String::new();
    dump_header(&mut s, grid, tg, quantity);
    for m in 0..y.len() {
        let t = tg.nodes()[m];
        for (i, (v, x)) in y.slice(m).iter().zip(grid.coords()).enumerate() {
            let _ = writeln!(
                s,
                "{m} {} {i} {} {} {}",
                fmt_f64(t),
                fmt_f64(x[0]),
                fmt_f64(x[1]),
                fmt_f64(*v)
            );
        }
    }
    s
}

/// One line `k t_{k+1} node x y value` per control slice and node of `ω`.
pub fn render_control(grid: &Grid, tg: &TimeGrid, quantity: &str, u: &ControlTrajectory) -> String {
    let mut s = String::new();
    dump_header(&mut s, grid, tg, quantity);
    let space = u.space();
    for k in 0..space.slices() {
        let t = tg.nodes()[k + 1];
        for ((&node, x), v) in space.nodes().iter().zip(space.coords()).zip(u.slice(k)) {
            let _ = writeln!(
                s,
                "{k} {} {node} {} {} {}",
                fmt_f64(t),
                fmt_f64(x[0]),
                fmt_f64(x[1]),
                fmt_f64(*v)
            );
        }
    }
    s
}

/// Values of a control dump, in storage order.
pub fn parse_control_values(text: &str) -> Result<Vec<f64>, String> {
    let mut header = 0;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') {
            header += 1;
            continue;
        }
        let last = line
            .split_whitespace()
            .nth(5)
            .ok_or_else(|| format!("line {}: expected 6 columns", lineno + 1))?;
        values.push(last.parse::<f64>().map_err(|e| format!("line {}: {e}", lineno + 1))?);
    }
    if header != 4 {
        return Err(format!("expected a 4-line header, found {header}"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }

    #[test]
    fn csv_starts_with_header() {
        let s = render_csv("r", &[Row::metric("a", 1.0), Row::check("b", false, 2.0, 1.0)]);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "r,a,1.0000000000000000e0,NaN,info,-");
        assert_eq!(lines[2], "r,b,2.0000000000000000e0,1.0000000000000000e0,fail,-");
    }
}
