//! Attention matrices as CSV and SVG heatmaps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Row-softmaxed alignment weights of x tokens (rows) over y tokens (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionExport {
    pub x_tokens: Vec<String>,
    pub y_tokens: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

impl AttentionExport {
    pub fn new(x_tokens: Vec<String>, y_tokens: Vec<String>, matrix: Vec<Vec<f64>>) -> Result<Self> {
        if matrix.len() != x_tokens.len() || matrix.iter().any(|r| r.len() != y_tokens.len()) {
            bail!(
                "attention matrix does not match {} x tokens by {} y tokens",
                x_tokens.len(),
                y_tokens.len()
            );
        }
        Ok(AttentionExport { x_tokens, y_tokens, matrix })
    }

    /// Column index of the largest weight in each row.
    pub fn row_argmax(&self) -> Vec<usize> {
        self.matrix.iter().map(|r| asim::model::argmax(r)).collect()
    }

    /// Header row of y tokens after an empty corner cell, then one row per
    /// x token. Values use the shortest exact representation.
    pub fn to_csv(&self, comment: &str) -> String {
        let mut s = format!("# {comment}\n");
        for t in &self.y_tokens {
            s.push(',');
            s.push_str(t);
        }
        s.push('\n');
        for (t, row) in self.x_tokens.iter().zip(&self.matrix) {
            s.push_str(t);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let Some(header) = lines.next() else {
            bail!("empty attention CSV");
        };
        let y_tokens: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
        let (mut x_tokens, mut matrix) = (Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let mut cells = line.split(',');
            x_tokens.push(cells.next().unwrap_or_default().to_string());
            let row = cells
                .map(|c| c.parse::<f64>().with_context(|| format!("row {}: bad weight '{c}'", i + 1)))
                .collect::<Result<Vec<f64>>>()?;
            matrix.push(row);
        }
        AttentionExport::new(x_tokens, y_tokens, matrix)
    }

    /// Grid heatmap; cell opacity is the weight divided by the largest weight.
    pub fn to_svg(&self, comment: &str) -> String {
        const CELL: usize = 24;
        const CHAR: usize = 7;
        let left = 12 + CHAR * self.x_tokens.iter().map(|t| t.chars().count()).max().unwrap_or(0);
        let top = 12 + CHAR * self.y_tokens.iter().map(|t| t.chars().count()).max().unwrap_or(0);
        let width = left + CELL * self.y_tokens.len() + 8;
        let height = top + CELL * self.x_tokens.len() + 8;
        let peak = self.matrix.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
        let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };

        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(s, "<!-- {} -->", comment.replace("--", "- -"));
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
        for (j, t) in self.y_tokens.iter().enumerate() {
            let x = left + j * CELL + CELL / 2 + 4;
            let y = top - 6;
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{y}" transform="rotate(-90 {x} {y})">{}</text>"#,
                escape(t)
            );
        }
        for (i, (t, row)) in self.x_tokens.iter().zip(&self.matrix).enumerate() {
            let y = top + i * CELL;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                left - 6,
                y + CELL / 2 + 4,
                escape(t)
            );
            for (j, &w) in row.iter().enumerate() {
                let _ = writeln!(
                    s,
                    r##"<rect x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="#08519c" fill-opacity="{:.4}" stroke="#dddddd"><title>{}</title></rect>"##,
                    left + j * CELL,
                    w * scale,
                    w
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }

    /// Writes `<prefix>.csv` and `<prefix>.svg`.
    pub fn write(&self, prefix: &Path, comment: &str) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
        let with = |ext: &str| {
            let mut name = prefix.as_os_str().to_owned();
            name.push(ext);
            std::path::PathBuf::from(name)
        };
        let (csv, svg) = (with(".csv"), with(".svg"));
        fs::write(&csv, self.to_csv(comment)).with_context(|| format!("writing {}", csv.display()))?;
        fs::write(&svg, self.to_svg(comment)).with_context(|| format!("writing {}", svg.display()))?;
        Ok((csv, svg))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> AttentionExport {
        AttentionExport::new(
            vec!["remov".into(), "tag".into()],
            vec!["html".into(), "tag".into(), "java".into()],
            vec![vec![0.2, 0.5, 0.3], vec![0.1 + 0.2, 0.6, 0.1]],
        )
        .unwrap()
    }

    #[test]
    fn csv_roundtrips_exactly() {
        let e = sample();
        let back = AttentionExport::from_csv(&e.to_csv("asim test")).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn svg_has_one_cell_per_weight() {
        let svg = sample().to_svg("asim test");
        assert!(svg.starts_with("<?xml"));
        assert!(svg.contains("<!-- asim test -->"));
        assert_eq!(svg.matches("<rect x=").count(), 6);
        assert!(svg.contains(r#"fill-opacity="1.0000""#));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(AttentionExport::new(vec!["a".into()], vec!["b".into()], vec![vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn row_argmax_picks_peaks() {
        assert_eq!(sample().row_argmax(), vec![1, 1]);
    }
}
