// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Mean of `values` summed in ascending order, so the result does not
/// depend on the order the values arrived in.
pub fn stable_mean(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// A labeled matrix of cell means with per-cell counts. Empty cells hold
/// `None`, never zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMatrix {
    pub name: String,
    /// Header of the row-label column.
    pub row_header: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// Row-major.
    pub values: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct CsvError {
    pub line: usize,
    pub msg: String,
}

impl ResultMatrix {
    pub fn empty(name: &str, row_header: &str, row_labels: Vec<String>, col_labels: Vec<String>) -> Self {
        let n = row_labels.len() * col_labels.len();
        Self {
            name: name.to_string(),
            row_header: row_header.to_string(),
            row_labels,
            col_labels,
            values: vec![None; n],
            counts: vec![0; n],
        }
    }

    /// Builds a matrix from `(row, col, value)` samples, each cell the
    /// stable mean of its samples.
    pub fn from_samples(
        name: &str,
        row_header: &str,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        samples: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut m = Self::empty(name, row_header, row_labels, col_labels);
        let mut cells: Vec<Vec<f64>> = vec![Vec::new(); m.values.len()];
        for (r, c, v) in samples {
            cells[r * m.n_cols() + c].push(v);
        }
        for (i, mut cell) in cells.into_iter().enumerate() {
            m.counts[i] = cell.len();
            m.values[i] = stable_mean(&mut cell);
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_labels.len()
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.values[r * self.n_cols() + c]
    }

    pub fn count(&self, r: usize, c: usize) -> usize {
        self.counts[r * self.n_cols() + c]
    }

    pub fn col_index(&self, label: &str) -> Option<usize> {
        self.col_labels.iter().position(|l| l == label)
    }

    /// Largest non-empty cell; ties go to the first in row-major order.
    pub fn argmax(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for r in 0..self.n_rows() {
            for c in 0..self.n_cols() {
                if let Some(v) = self.get(r, c) {
                    if best.is_none_or(|b| v > b.2) {
                        best = Some((r, c, v));
                    }
                }
            }
        }
        best
    }

    /// Finite non-empty values.
    pub fn range(&self) -> Option<(f64, f64)> {
        let mut it = self.values.iter().flatten().copied().filter(|v| v.is_finite());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    fn csv_grid(&self, cell: impl Fn(usize) -> String) -> String {
        let mut s = String::new();
        s.push_str(&self.row_header);
        for c in &self.col_labels {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (r, label) in self.row_labels.iter().enumerate() {
            s.push_str(label);
            for c in 0..self.n_cols() {
                s.push(',');
                s.push_str(&cell(r * self.n_cols() + c));
            }
            s.push('\n');
        }
        s
    }

    /// Cell means; empty cells blank. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_csv(&self) -> String {
        self.csv_grid(|i| self.values[i].map(|v| format!("{v:?}")).unwrap_or_default())
    }

    pub fn counts_csv(&self) -> String {
        self.csv_grid(|i| self.counts[i].to_string())
    }

    /// Parses [`ResultMatrix::to_csv`] output; counts are not part of it.
    pub fn from_csv(name: &str, csv: &str) -> Result<Self, CsvError> {
        let err = |line: usize, msg: String| CsvError { line, msg };
        let mut lines = csv.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty input".into()))?;
        let mut head = header.split(',');
        let row_header = head.next().unwrap_or_default().to_string();
        let col_labels: Vec<String> = head.map(str::to_string).collect();
        let mut row_labels = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            row_labels.push(fields.next().unwrap_or_default().to_string());
            let cells: Vec<&str> = fields.collect();
            if cells.len() != col_labels.len() {
                return Err(err(i + 1, format!("expected {} cells, found {}", col_labels.len(), cells.len())));
            }
            for c in cells {
                values.push(if c.is_empty() {
                    None
                } else {
                    Some(c.parse::<f64>().map_err(|e| err(i + 1, format!("{c:?}: {e}")))?)
                });
            }
        }
        let counts = values.iter().map(|v| usize::from(v.is_some())).collect();
        Ok(Self {
            name: name.to_string(),
            row_header,
            row_labels,
            col_labels,
            values,
            counts,
        })
    }

    /// Character-ramp rendering with a min/max legend.
    pub fn to_ascii(&self) -> String {
        const RAMP: &[u8] = b" .:-=+*#%@";
        let mut s = String::new();
        let (lo, hi) = self.range().unwrap_or((0.0, 0.0));
        let _ = writeln!(s, "{}  (min {lo:.4}, max {hi:.4}, ramp \" .:-=+*#%@\", empty '?')", self.name);
        let w = self.row_labels.iter().map(String::len).max().unwrap_or(0).max(self.row_header.len());
        let _ = write!(s, "{:>w$} ", self.row_header);
        for c in &self.col_labels {
            let _ = write!(s, " {c}");
        }
        s.push('\n');
        for (r, label) in self.row_labels.iter().enumerate() {
            let _ = write!(s, "{label:>w$} ");
            for (c, col) in self.col_labels.iter().enumerate() {
                let ch = match self.get(r, c) {
                    None => '?',
                    Some(v) if !v.is_finite() => '!',
                    Some(v) => {
                        let t = if hi > lo { (v - lo) / (hi - lo) } else { 1.0 };
                        RAMP[((t * (RAMP.len() - 1) as f64).round() as usize).min(RAMP.len() - 1)] as char
                    }
                };
                let _ = write!(s, " {:>width$}", ch, width = col.len());
            }
            s.push('\n');
        }
        s
    }

    /// Two-color linear heatmap with value annotations and a legend.
    pub fn to_svg(&self) -> String {
        const CELL_W: usize = 56;
        const CELL_H: usize = 28;
        const LEFT: usize = 90;
        const TOP: usize = 48;
        let (lo, hi) = self.range().unwrap_or((0.0, 0.0));
        let width = LEFT + CELL_W * self.n_cols() + 20;
        let height = TOP + CELL_H * self.n_rows() + 50;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="11">"#
        );
        let _ = writeln!(s, r#"<text x="4" y="16" font-size="13">{}</text>"#, escape(&self.name));
        for (c, label) in self.col_labels.iter().enumerate() {
            let x = LEFT + c * CELL_W + CELL_W / 2;
            let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, TOP - 6, escape(label));
        }
        for (r, label) in self.row_labels.iter().enumerate() {
            let y = TOP + r * CELL_H;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                LEFT - 6,
                y + CELL_H / 2 + 4,
                escape(label)
            );
            for c in 0..self.n_cols() {
                let x = LEFT + c * CELL_W;
                let (fill, text) = match self.get(r, c) {
                    None => ("#ffffff".to_string(), String::new()),
                    Some(v) => {
                        let t = if hi > lo && v.is_finite() { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 1.0 };
                        (ramp_color(t), format!("{v:.3}"))
                    }
                };
                let _ = writeln!(
                    s,
                    r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{fill}" stroke="#999999"/>"##
                );
                if !text.is_empty() {
                    let _ = writeln!(
                        s,
                        r#"<text x="{}" y="{}" text-anchor="middle">{text}</text>"#,
                        x + CELL_W / 2,
                        y + CELL_H / 2 + 4
                    );
                }
            }
        }
        let ly = TOP + CELL_H * self.n_rows() + 24;
        let _ = writeln!(
            s,
            r#"<text x="{LEFT}" y="{ly}">min {lo:.4} <tspan fill="{}">&#9632;</tspan> to max {hi:.4} <tspan fill="{}">&#9632;</tspan>; blank = empty</text>"#,
            ramp_color(0.0),
            ramp_color(1.0)
        );
        s.push_str("</svg>\n");
        s
    }
}

fn ramp_color(t: f64) -> String {
    // white-ish (247,251,255) to deep blue (8,48,107)
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
