//! SVG heatmaps: symbols across, δ down.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signature::{MemorySignature, SignatureDiff};
use crate::symbols::SymbolSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Palette {
    /// White at 0 to dark purple at 1.
    Purple,
    /// Dark green at 0 to light green at 1.
    Green,
    /// Blue at -1, white at 0, red at +1.
    Diverging,
}

impl std::str::FromStr for Palette {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "purple" => Ok(Palette::Purple),
            "green" => Ok(Palette::Green),
            "diverging" => Ok(Palette::Diverging),
            other => Err(Error::Usage(format!("unknown palette {other:?}"))),
        }
    }
}

type Rgb = (f64, f64, f64);

const WHITE: Rgb = (255.0, 255.0, 255.0);
const PURPLE: Rgb = (63.0, 0.0, 125.0);
const DARK_GREEN: Rgb = (0.0, 68.0, 27.0);
const LIGHT_GREEN: Rgb = (229.0, 245.0, 224.0);
const RED: Rgb = (178.0, 24.0, 43.0);
const BLUE: Rgb = (33.0, 102.0, 172.0);

fn lerp(a: Rgb, b: Rgb, t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let c = |x: f64, y: f64| (x + (y - x) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(a.0, b.0), c(a.1, b.1), c(a.2, b.2))
}

impl Palette {
    pub fn range(self) -> (f64, f64) {
        match self {
            Palette::Diverging => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }

    pub fn color(self, value: f64) -> String {
        match self {
            Palette::Purple => lerp(WHITE, PURPLE, value),
            Palette::Green => lerp(DARK_GREEN, LIGHT_GREEN, value),
            Palette::Diverging if value >= 0.0 => lerp(WHITE, RED, value),
            Palette::Diverging => lerp(WHITE, BLUE, -value),
        }
    }
}

const CELL: usize = 22;
const LEFT: usize = 56;
const TOP: usize = 48;
const LEGEND_GAP: usize = 28;

fn escape(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '&' => "&amp;".into(),
            '<' => "&lt;".into(),
            '>' => "&gt;".into(),
            '"' => "&quot;".into(),
            '\'' => "&apos;".into(),
            c => c.to_string(),
        })
        .collect()
}

fn label(c: char) -> String {
    match c {
        ' ' => "<sp>".into(),
        c => c.to_string(),
    }
}

/// Renders a `Δ × |V|` grid. Absent cells are hatched gray.
pub fn render_heatmap(cells: &[Vec<Option<f64>>], symbols: &SymbolSet, palette: Palette, title: &str) -> String {
    let cols = symbols.len();
    let rows = cells.len();
    let grid_w = cols * CELL;
    let grid_h = rows * CELL;
    let legend_y = TOP + grid_h + LEGEND_GAP;
    let width = LEFT + grid_w + 20;
    let height = legend_y + 70;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="monospace" font-size="11">"#
    )
    .unwrap();
    s.push_str(concat!(
        "<defs><pattern id=\"absent\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\">",
        "<rect width=\"6\" height=\"6\" fill=\"#d9d9d9\"/><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#8c8c8c\" stroke-width=\"2\"/>",
        "</pattern>"
    ));
    let (lo, hi) = palette.range();
    s.push_str("<linearGradient id=\"scale\" x1=\"0\" x2=\"1\" y1=\"0\" y2=\"0\">");
    for i in 0..=10 {
        let v = lo + (hi - lo) * i as f64 / 10.0;
        write!(s, "<stop offset=\"{:.1}\" stop-color=\"{}\"/>", i as f64 / 10.0, palette.color(v)).unwrap();
    }
    s.push_str("</linearGradient></defs>\n");
    writeln!(s, r##"<rect width="{width}" height="{height}" fill="white"/>"##).unwrap();
    writeln!(s, r#"<text x="{LEFT}" y="16" font-size="13">{}</text>"#, escape(title)).unwrap();
    for (v, &c) in symbols.symbols().iter().enumerate() {
        let x = LEFT + v * CELL + CELL / 2;
        writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, TOP - 6, escape(&label(c))).unwrap();
    }
    writeln!(s, r#"<text x="8" y="{}" font-size="12">δ</text>"#, TOP - 6).unwrap();
    for (d, row) in cells.iter().enumerate() {
        let y = TOP + d * CELL;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, LEFT - 6, y + CELL / 2 + 4, d + 1).unwrap();
        for (v, cell) in row.iter().enumerate() {
            let fill = match cell {
                Some(x) => palette.color(*x),
                None => "url(#absent)".into(),
            };
            writeln!(
                s,
                r##"<rect x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#ffffff" stroke-width="0.5"/>"##,
                LEFT + v * CELL
            )
            .unwrap();
        }
    }
    let bar_w = (grid_w / 2).max(120);
    writeln!(
        s,
        r##"<rect x="{LEFT}" y="{legend_y}" width="{bar_w}" height="12" fill="url(#scale)" stroke="#555555" stroke-width="0.5"/>"##
    )
    .unwrap();
    for (frac, value) in [(0.0, lo), (0.5, (lo + hi) / 2.0), (1.0, hi)] {
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{value}</text>"#,
            LEFT as f64 + frac * bar_w as f64,
            legend_y + 26
        )
        .unwrap();
    }
    let swatch_x = LEFT + bar_w + 24;
    writeln!(
        s,
        r##"<rect x="{swatch_x}" y="{legend_y}" width="12" height="12" fill="url(#absent)" stroke="#555555" stroke-width="0.5"/>"##
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="{}">absent</text>"#, swatch_x + 18, legend_y + 10).unwrap();
    s.push_str("</svg>\n");
    s
}

pub fn render_signature(sig: &MemorySignature, palette: Palette, path: &Path) -> Result<()> {
    let title = format!("{} layer {} ({})", sig.meta.model, sig.meta.layer + 1, sig.meta.state_choice);
    let svg = render_heatmap(&sig.accuracy, &sig.symbols, palette, &title);
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

pub fn render_diff(diff: &SignatureDiff, path: &Path) -> Result<()> {
    let title = if diff.meta_a.model.is_empty() {
        "recall difference (A - B)".to_string()
    } else {
        format!("{} minus {}", diff.meta_a.model, diff.meta_b.model)
    };
    let svg = render_heatmap(&diff.diff, &diff.symbols, Palette::Diverging, &title);
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
